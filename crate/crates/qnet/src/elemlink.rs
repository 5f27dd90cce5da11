//! The elementary-link MDP: states `{-1, 0, …, m*}` (inactive, or the
//! number of steps the link has been stored), actions wait/request, and the
//! finite-horizon and steady-state policy values built on top of it.
//!
//! State `m` sits at index `m + 1`.

use nalgebra::DMatrix;

use crate::lp::{mdp_steady_state_lp_with, Tolerances};
use crate::qstate::{DensityOperator, KrausChannel, StateVector};
use crate::simplex_core::{
    evolve, DecisionFunction, HistoryPolicy, Mdp, Policy, ProbVector, StochasticMatrix,
};
use crate::{Error, Result};

pub const WAIT: usize = 0;
pub const REQUEST: usize = 1;

/// Largest horizon accepted by the history-indexed backward recursion.
pub const HISTORY_HORIZON_CAP: usize = 8;

/// Largest number of decision bits the exhaustive policy search enumerates.
pub const EXHAUSTIVE_BITS_CAP: usize = 24;

const F_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ElemLinkModel {
    p: f64,
    m_star: usize,
    f: Vec<f64>,
    initial: Option<ProbVector>,
}

impl ElemLinkModel {
    /// `f` is indexed over states `(-1, 0, …, m*)` and must have `f(-1) = 0`.
    pub fn new(p: f64, m_star: usize, f: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(format!("success probability {p}")));
        }
        if f.len() != m_star + 2 {
            return Err(Error::DimensionMismatch(format!(
                "f has {} entries, expected m* + 2 = {}",
                f.len(),
                m_star + 2
            )));
        }
        if f[0] != 0.0 {
            return Err(Error::InvalidInput(format!("f(-1) must be 0, got {}", f[0])));
        }
        if let Some(v) = f.iter().find(|&&v| !(-F_TOL..=1.0 + F_TOL).contains(&v)) {
            return Err(Error::InvalidInput(format!("f value {v} outside [0,1]")));
        }
        Ok(Self { p, m_star, f, initial: None })
    }

    /// Builds the model from `f(0), …, f(m*)`.
    pub fn from_active_values(p: f64, active: &[f64]) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::InvalidInput("need at least f(0)".into()));
        }
        let mut f = Vec::with_capacity(active.len() + 1);
        f.push(0.0);
        f.extend_from_slice(active);
        Self::new(p, active.len() - 1, f)
    }

    /// Replaces the default `|g_p⟩` distribution of `M(1)`.
    pub fn with_initial(mut self, initial: ProbVector) -> Result<Self> {
        if initial.len() != self.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "initial distribution has {} entries, model has {} states",
                initial.len(),
                self.n_states()
            )));
        }
        self.initial = Some(initial);
        Ok(self)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m_star(&self) -> usize {
        self.m_star
    }

    /// `f` over states `(-1, 0, …, m*)`.
    pub fn f(&self) -> &[f64] {
        &self.f
    }

    /// `f(m)` for `m ≥ 0`.
    pub fn f_at(&self, m: usize) -> f64 {
        self.f[m + 1]
    }

    pub fn n_states(&self) -> usize {
        self.m_star + 2
    }

    /// `|g_p⟩ = (1-p)|-1⟩ + p|0⟩`.
    pub fn g_p(&self) -> ProbVector {
        let mut v = vec![0.0; self.n_states()];
        v[0] = 1.0 - self.p;
        v[1] = self.p;
        ProbVector::from_raw(v)
    }

    /// Distribution of `M(1)`.
    pub fn initial(&self) -> ProbVector {
        self.initial.clone().unwrap_or_else(|| self.g_p())
    }
}

pub fn state_label(m: i64) -> String {
    m.to_string()
}

/// `T^0` and `T^1` for a single link with success probability `p`.
pub(crate) fn link_transitions(p: f64, m_star: usize) -> [DMatrix<f64>; 2] {
    let n = m_star + 2;
    let mut t0 = DMatrix::zeros(n, n);
    t0[(0, 0)] = 1.0;
    for m in 0..m_star {
        t0[(m + 2, m + 1)] = 1.0;
    }
    t0[(0, n - 1)] = 1.0;
    let mut t1 = DMatrix::zeros(n, n);
    for s in 0..n {
        t1[(0, s)] = 1.0 - p;
        t1[(1, s)] = p;
    }
    [t0, t1]
}

pub fn build_mdp(model: &ElemLinkModel) -> Mdp {
    let [t0, t1] = link_transitions(model.p, model.m_star);
    let states = (-1..=model.m_star as i64).map(state_label).collect();
    Mdp::new(
        states,
        vec!["wait".into(), "request".into()],
        vec![StochasticMatrix::from_raw(t0), StochasticMatrix::from_raw(t1)],
    )
    .expect("elementary-link transitions are well formed")
}

/// `f(m) = ⟨ψ|N^{∘m}(σ^0)|ψ⟩` for `m = 0, …, m*`, with `f(-1) = 0`.
pub fn f_from_physics(
    sigma0: &DensityOperator,
    memory: &KrausChannel,
    target: &StateVector,
    m_star: usize,
) -> Result<Vec<f64>> {
    if memory.in_dims().iter().product::<usize>() != sigma0.dim()
        || memory.out_dims().iter().product::<usize>() != sigma0.dim()
    {
        return Err(Error::DimensionMismatch(
            "memory channel must map the link space to itself".into(),
        ));
    }
    let mut f = vec![0.0];
    let mut m = sigma0.matrix().clone();
    for k in 0..=m_star {
        if k > 0 {
            m = memory.apply_matrix(&m);
        }
        let rho = DensityOperator::new(m.clone(), sigma0.dims().to_vec())?;
        f.push(rho.fidelity_to_pure(target)?);
    }
    Ok(f)
}

/// `F̃ = E[f(M)]`, `X = Pr[M ≠ -1]` and `F = F̃/X` (absent when `X = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkValues {
    pub ftilde: f64,
    pub x: f64,
    pub fidelity: Option<f64>,
}

impl LinkValues {
    pub fn new(ftilde: f64, x: f64) -> Self {
        let fidelity = if x > 0.0 { Some(ftilde / x) } else { None };
        Self { ftilde, x, fidelity }
    }

    pub fn fidelity(&self) -> Result<f64> {
        self.fidelity
            .ok_or_else(|| Error::InvalidInput("fidelity undefined: link never active".into()))
    }
}

pub fn values_from_distribution(model: &ElemLinkModel, dist: &ProbVector) -> LinkValues {
    let ftilde = dist.expectation(&model.f);
    LinkValues::new(ftilde, 1.0 - dist.get(0))
}

/// Link values at time `t` under `policy`, starting from the model's
/// distribution of `M(1)`.
pub fn ftilde_x_f(model: &ElemLinkModel, policy: &Policy, t: usize) -> Result<LinkValues> {
    let dist = evolve(&build_mdp(model), policy, &model.initial(), t)?;
    Ok(values_from_distribution(model, &dist))
}

/// Memory-cutoff decision `d^{t*}`: wait for `0 ≤ m < t*`, request otherwise.
/// `None` is `t* = ∞` (wait whenever active).
pub fn cutoff_decision(m_star: usize, t_star: Option<usize>) -> Result<DecisionFunction> {
    if let Some(t) = t_star {
        if t > m_star {
            return Err(Error::InvalidInput(format!("cutoff {t} exceeds m* = {m_star}")));
        }
    }
    let choices: Vec<usize> = (-1..=m_star as i64)
        .map(|m| match (m, t_star) {
            (-1, _) => REQUEST,
            (_, None) => WAIT,
            (m, Some(t)) if (m as usize) < t => WAIT,
            _ => REQUEST,
        })
        .collect();
    DecisionFunction::deterministic(2, &choices)
}

/// Steady-state distribution of the stationary policy `(d, d, …)` in
/// closed form, and `lim F̃ = Σ_m f(m) s_d(m)`.
pub fn steady_state_closed_form(model: &ElemLinkModel, d: &DecisionFunction) -> Result<(ProbVector, f64)> {
    let n = model.n_states();
    if d.n_states() != n || d.n_actions() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "decision function is {}x{}, model has {n} states and 2 actions",
            d.n_states(),
            d.n_actions()
        )));
    }
    let p = model.p;
    let alpha: Vec<f64> = (0..n).map(|s| d.prob(s, WAIT)).collect();
    let abar_inactive = 1.0 - alpha[0];
    // prods[m] = Π_{m'<m} α(m'), m = 0..=m*+1
    let mut prods = vec![1.0; model.m_star + 2];
    for m in 0..=model.m_star {
        prods[m + 1] = prods[m] * alpha[m + 1];
    }
    let all = prods[model.m_star + 1];
    let s_inactive = 1.0 - p * (1.0 - all);
    let active_sum: f64 = prods[..=model.m_star].iter().sum();
    let norm = s_inactive + p * abar_inactive * active_sum;
    let mut s = Vec::with_capacity(n);
    s.push(s_inactive / norm);
    for m in 0..=model.m_star {
        s.push(p * abar_inactive * prods[m] / norm);
    }
    let s = ProbVector::new(s)?;
    let value = s.expectation(&model.f);
    Ok((s, value))
}

/// `lim F̃`, `lim X` and `lim F` for the memory-cutoff policy `d^{t*}`.
pub fn cutoff_steady_values(model: &ElemLinkModel, t_star: usize) -> Result<LinkValues> {
    if t_star > model.m_star {
        return Err(Error::InvalidInput(format!("cutoff {t_star} exceeds m* = {}", model.m_star)));
    }
    let p = model.p;
    let tp = t_star as f64 * p;
    let sum: f64 = (0..=t_star).map(|m| model.f_at(m)).sum();
    Ok(LinkValues {
        ftilde: p / (1.0 + tp) * sum,
        x: (t_star as f64 + 1.0) * p / (1.0 + tp),
        fidelity: Some(sum / (t_star as f64 + 1.0)),
    })
}

/// Cutoff maximising `lim F̃`, lowest cutoff on ties.
pub fn best_cutoff(model: &ElemLinkModel) -> (usize, f64) {
    (0..=model.m_star)
        .map(|t| (t, cutoff_steady_values(model, t).expect("t ≤ m*").ftilde))
        .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

/// `F̃^∞(t)`, `X^∞(t)` and `F^∞(t)` for the never-discard policy, valid
/// while the link cannot reach `m*` before time `t` (`t ≤ m* + 1`).
pub fn cutoff_infty_transient(model: &ElemLinkModel, t: usize) -> Result<LinkValues> {
    if t == 0 {
        return Err(Error::InvalidInput("time steps start at t = 1".into()));
    }
    if t > model.m_star + 1 {
        return Err(Error::InvalidInput(format!(
            "t = {t} needs f up to m = {}, model stops at m* = {}",
            t - 1,
            model.m_star
        )));
    }
    Ok(infty_transient_values(model.p, &model.f[1..], t))
}

/// `F̃^∞(t)` from `f(0), …, f(t-1)`.
pub(crate) fn infty_transient_values(p: f64, active: &[f64], t: usize) -> LinkValues {
    let ftilde: f64 = (0..t)
        .map(|m| active[m] * p * (1.0 - p).powi((t - m - 1) as i32))
        .sum();
    LinkValues::new(ftilde, 1.0 - (1.0 - p).powi(t as i32))
}

/// Maximum of `F̃^π(t)` over all policies, by the backward recursion over
/// histories. Returns the optimal deterministic history-dependent policy,
/// recorded on histories of positive probability.
pub fn optimal_backward(model: &ElemLinkModel, t: usize) -> Result<(f64, Policy)> {
    if t == 0 {
        return Err(Error::InvalidInput("time steps start at t = 1".into()));
    }
    if t > HISTORY_HORIZON_CAP {
        return Err(Error::InvalidInput(format!(
            "history recursion is capped at t = {HISTORY_HORIZON_CAP}, got {t}"
        )));
    }
    let mdp = build_mdp(model);
    let init = model.initial();
    let mut policy = HistoryPolicy::new();
    let mut value = 0.0;
    for m1 in 0..model.n_states() {
        let pr = init.get(m1);
        let mut h = vec![m1];
        value += best_continuation(model, &mdp, t, &mut h, pr, &mut policy);
    }
    Ok((value, Policy::HistoryDependent(policy)))
}

/// `max_a w_{j+1}(h^j, a)` for a history `h^j` of probability `pr`; at
/// `j = t` the contribution `pr · f(m_t)`.
fn best_continuation(
    model: &ElemLinkModel,
    mdp: &Mdp,
    t: usize,
    h: &mut Vec<usize>,
    pr: f64,
    policy: &mut HistoryPolicy,
) -> f64 {
    let j = h.len().div_ceil(2);
    let m = *h.last().expect("non-empty history");
    if j == t {
        return pr * model.f[m];
    }
    if pr == 0.0 {
        return 0.0;
    }
    let mut w = [0.0; 2];
    for (a, wa) in w.iter_mut().enumerate() {
        let tm = mdp.transition(a);
        for m2 in 0..model.n_states() {
            let q = tm.get(m2, m);
            if q == 0.0 {
                continue;
            }
            h.push(a);
            h.push(m2);
            *wa += best_continuation(model, mdp, t, h, pr * q, policy);
            h.pop();
            h.pop();
        }
    }
    let a = if w[REQUEST] > w[WAIT] { REQUEST } else { WAIT };
    let mut row = vec![0.0; 2];
    row[a] = 1.0;
    policy.insert(h.clone(), row);
    w[a]
}

/// The same optimum by dynamic programming over `(m, time)`, with the
/// optimal time-indexed deterministic policy `(d_1, …, d_{t-1})`.
pub fn optimal_backward_markov(model: &ElemLinkModel, t: usize) -> Result<(f64, Policy)> {
    if t == 0 {
        return Err(Error::InvalidInput("time steps start at t = 1".into()));
    }
    let mdp = build_mdp(model);
    let n = model.n_states();
    let mut v = model.f.clone();
    let mut rules = Vec::with_capacity(t - 1);
    for _ in 1..t {
        let mut next = vec![0.0; n];
        let mut choice = vec![WAIT; n];
        for s in 0..n {
            let q: Vec<f64> = (0..2)
                .map(|a| (0..n).map(|s2| mdp.transition(a).get(s2, s) * v[s2]).sum())
                .collect();
            if q[REQUEST] > q[WAIT] {
                choice[s] = REQUEST;
            }
            next[s] = q[choice[s]];
        }
        rules.push(DecisionFunction::deterministic(2, &choice)?);
        v = next;
    }
    rules.reverse();
    let value = model.initial().expectation(&v);
    Ok((value, Policy::TimeIndexed(rules)))
}

/// Best `F̃^π(t)` over every deterministic Markov policy, by enumeration.
/// Returns the value and the per-step action choices of a maximiser.
pub fn exhaustive_markov_search(model: &ElemLinkModel, t: usize) -> Result<(f64, Vec<Vec<usize>>)> {
    if t == 0 {
        return Err(Error::InvalidInput("time steps start at t = 1".into()));
    }
    let n = model.n_states();
    let bits = n * (t - 1);
    if bits > EXHAUSTIVE_BITS_CAP {
        return Err(Error::InvalidInput(format!(
            "exhaustive search over 2^{bits} policies exceeds the cap 2^{EXHAUSTIVE_BITS_CAP}"
        )));
    }
    let mdp = build_mdp(model);
    let t0 = mdp.transition(WAIT).matrix();
    let t1 = mdp.transition(REQUEST).matrix();
    let init = model.initial();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for code in 0u64..(1u64 << bits) {
        let choices: Vec<Vec<usize>> = (0..t - 1)
            .map(|j| (0..n).map(|s| ((code >> (j * n + s)) & 1) as usize).collect())
            .collect();
        let mut dist: Vec<f64> = init.entries().to_vec();
        for step in &choices {
            let mut next = vec![0.0; n];
            for s in 0..n {
                let tm = if step[s] == WAIT { t0 } else { t1 };
                for (s2, nx) in next.iter_mut().enumerate() {
                    *nx += tm[(s2, s)] * dist[s];
                }
            }
            dist = next;
        }
        let value: f64 = dist.iter().zip(&model.f).map(|(a, b)| a * b).sum();
        if value > best.0 {
            best = (value, choices);
        }
    }
    Ok(best)
}

/// Optimal steady-state `F̃` over stationary policies, by linear programming.
pub fn lp_optimal_steady(model: &ElemLinkModel) -> Result<(f64, DecisionFunction)> {
    lp_optimal_steady_with(model, &Tolerances::default())
}

pub fn lp_optimal_steady_with(model: &ElemLinkModel, tol: &Tolerances) -> Result<(f64, DecisionFunction)> {
    mdp_steady_state_lp_with(&build_mdp(model), &model.f, tol)
}

/// Greedy one-step rule: request when inactive; when active at age `m`,
/// wait iff `f(m+1) > p f(0)`, reading `f(m*+1)` as 0.
pub fn forward_recursion_decision(model: &ElemLinkModel) -> DecisionFunction {
    let threshold = model.p * model.f_at(0);
    let mut choices = vec![REQUEST];
    for m in 0..=model.m_star {
        let next = if m < model.m_star { model.f_at(m + 1) } else { 0.0 };
        choices.push(if next > threshold { WAIT } else { REQUEST });
    }
    DecisionFunction::deterministic(2, &choices).expect("valid choices")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{amplitude_damping, bell};
    use crate::simplex_core::{policy_matrix, stationary_distribution, STATIONARY_TOL};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn decision_from_alpha(alpha: &[f64]) -> DecisionFunction {
        DecisionFunction::new(alpha.iter().map(|&a| vec![a, 1.0 - a]).collect()).unwrap()
    }

    #[test]
    fn transition_columns() {
        let model = ElemLinkModel::from_active_values(0.3, &[1.0, 0.9, 0.8]).unwrap();
        let mdp = build_mdp(&model);
        let t1 = mdp.transition(REQUEST);
        for s in 0..4 {
            assert_eq!(t1.get(0, s), 0.7);
            assert_eq!(t1.get(1, s), 0.3);
        }
        let t0 = mdp.transition(WAIT);
        assert_eq!(t0.get(0, 3), 1.0);
        assert_eq!(t0.get(0, 0), 1.0);
        assert_eq!(t0.get(2, 1), 1.0);
        assert!(t0.max_column_defect() < 1e-15 && t1.max_column_defect() < 1e-15);
    }

    #[test]
    fn cutoff_zero_policy_matrix() {
        let model = ElemLinkModel::from_active_values(0.5, &[1.0, 1.0, 1.0]).unwrap();
        let d = cutoff_decision(2, Some(0)).unwrap();
        let p = policy_matrix(&build_mdp(&model), &d).unwrap();
        for s in 0..4 {
            let col: Vec<f64> = (0..4).map(|r| p.get(r, s)).collect();
            assert_eq!(col, vec![0.5, 0.5, 0.0, 0.0]);
        }
    }

    #[test]
    fn memory_values_from_physics() {
        let phi = bell(2, 0, 0).unwrap();
        let id = KrausChannel::identity(4);
        let f = f_from_physics(&phi.density(), &id, &phi, 3).unwrap();
        assert_eq!(f[0], 0.0);
        assert!(f[1..].iter().all(|&v| close(v, 1.0, 1e-14)));
        let tc = 7.0;
        let ad = amplitude_damping(1.0 - (-1.0f64 / tc).exp()).unwrap();
        let f = f_from_physics(&phi.density(), &ad.tensor(&ad), &phi, 10).unwrap();
        for m in 0..=10 {
            assert!(close(f[m + 1], 0.5 * (-2.0 * m as f64 / tc).exp() + 0.5, 1e-12));
        }
        assert!(f_from_physics(&phi.density(), &ad, &phi, 2).is_err());
    }

    #[test]
    fn values_at_first_step() {
        let model = ElemLinkModel::from_active_values(0.4, &[0.9, 0.8, 0.7]).unwrap();
        let d = cutoff_decision(2, None).unwrap();
        let v = ftilde_x_f(&model, &Policy::Stationary(d), 1).unwrap();
        assert!(close(v.ftilde, 0.36, 1e-15) && close(v.x, 0.4, 1e-15));
    }

    #[test]
    fn infinite_cutoff_activity() {
        let model = ElemLinkModel::from_active_values(0.5, &[1.0; 6]).unwrap();
        let v = cutoff_infty_transient(&model, 3).unwrap();
        assert!(close(v.x, 0.875, 1e-15));
        assert!(close(v.ftilde, v.x, 1e-15));
        let d = cutoff_decision(5, None).unwrap();
        let e = ftilde_x_f(&model, &Policy::Stationary(d), 3).unwrap();
        assert!(close(e.x, 0.875, 1e-15));
        assert!(cutoff_infty_transient(&model, 7).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let model = ElemLinkModel::from_active_values(0.5, &[1.0, 0.9, 0.8]).unwrap();
        let (s, _) = steady_state_closed_form(&model, &cutoff_decision(2, Some(2)).unwrap()).unwrap();
        for k in 0..4 {
            assert!(close(s.get(k), 0.25, 1e-15));
        }
        let never = decision_from_alpha(&[1.0, 0.5, 0.5, 0.5]);
        let (s, v) = steady_state_closed_form(&model, &never).unwrap();
        assert!(close(s.get(0), 1.0, 1e-15) && v == 0.0);
        let m0 = ElemLinkModel::from_active_values(0.3, &[1.0]).unwrap();
        let (s, _) = steady_state_closed_form(&m0, &cutoff_decision(0, Some(0)).unwrap()).unwrap();
        assert!(close(s.get(0), 0.7, 1e-15) && close(s.get(1), 0.3, 1e-15));
    }

    #[test]
    fn cutoff_value_examples() {
        let model = ElemLinkModel::from_active_values(0.5, &[1.0; 3]).unwrap();
        let v = cutoff_steady_values(&model, 2).unwrap();
        assert!(close(v.ftilde, 0.75, 1e-15) && close(v.x, 0.75, 1e-15));
        let m = ElemLinkModel::from_active_values(0.3, &[0.9, 0.5]).unwrap();
        assert!(close(cutoff_steady_values(&m, 0).unwrap().ftilde, 0.27, 1e-15));
        assert!(cutoff_steady_values(&m, 2).is_err());
    }

    #[test]
    fn backward_examples() {
        let model = ElemLinkModel::from_active_values(0.6, &[0.95, 0.9, 0.7]).unwrap();
        let (v, pol) = optimal_backward(&model, 1).unwrap();
        assert!(close(v, 0.6 * 0.95, 1e-15));
        match pol {
            Policy::HistoryDependent(h) => assert!(h.is_empty()),
            _ => panic!("expected a history policy"),
        }
        let sure = ElemLinkModel::from_active_values(1.0, &[0.95, 0.9, 0.7]).unwrap();
        for t in 1..=4 {
            assert!(close(optimal_backward(&sure, t).unwrap().0, 0.95, 1e-15));
        }
        assert!(optimal_backward(&model, HISTORY_HORIZON_CAP + 1).is_err());
    }

    #[test]
    fn backward_policy_reproduces_value() {
        let model = ElemLinkModel::from_active_values(0.35, &[0.97, 0.93, 0.6, 0.2]).unwrap();
        for t in 1..=5 {
            let (v, pol) = optimal_backward(&model, t).unwrap();
            assert!(close(ftilde_x_f(&model, &pol, t).unwrap().ftilde, v, 1e-14));
            let (vm, polm) = optimal_backward_markov(&model, t).unwrap();
            assert!(close(vm, v, 1e-14));
            assert!(close(ftilde_x_f(&model, &polm, t).unwrap().ftilde, v, 1e-14));
        }
    }

    #[test]
    fn backward_beats_cutoffs() {
        let model = ElemLinkModel::from_active_values(0.45, &[0.99, 0.9, 0.85, 0.5]).unwrap();
        for t in 1..=6 {
            let (v, _) = optimal_backward_markov(&model, t).unwrap();
            for ts in 0..=3 {
                let d = cutoff_decision(3, Some(ts)).unwrap();
                let c = ftilde_x_f(&model, &Policy::Stationary(d), t).unwrap().ftilde;
                assert!(v >= c - 1e-14);
            }
        }
    }

    #[test]
    fn lp_examples() {
        let model = ElemLinkModel::from_active_values(0.4, &[1.0; 4]).unwrap();
        let (v, _) = lp_optimal_steady(&model).unwrap();
        assert!(close(v, 4.0 * 0.4 / (1.0 + 3.0 * 0.4), 1e-9));
        let zero = ElemLinkModel::from_active_values(0.0, &[1.0; 3]).unwrap();
        assert!(close(lp_optimal_steady(&zero).unwrap().0, 0.0, 1e-12));
    }

    #[test]
    fn forward_recursion_examples() {
        let sure = ElemLinkModel::from_active_values(1.0, &[1.0, 0.9, 0.8]).unwrap();
        assert_eq!(forward_recursion_decision(&sure), cutoff_decision(2, Some(0)).unwrap());
        let tc = 100.0;
        let f: Vec<f64> = (0..=200).map(|m| 0.5 * (-2.0 * m as f64 / tc).exp() + 0.5).collect();
        let low = ElemLinkModel::from_active_values(0.5, &f[..50]).unwrap();
        let d = forward_recursion_decision(&low);
        for m in 0..49 {
            assert_eq!(d.mode(m + 1), WAIT);
        }
        let hi = ElemLinkModel::from_active_values(0.6, &f).unwrap();
        let d = forward_recursion_decision(&hi);
        for m in 0..=200 {
            assert_eq!(d.mode(m + 1), if m < 80 { WAIT } else { REQUEST }, "m = {m}");
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ElemLinkModel::new(1.5, 1, vec![0.0, 1.0, 1.0]).is_err());
        assert!(ElemLinkModel::new(0.5, 1, vec![0.1, 1.0, 1.0]).is_err());
        assert!(ElemLinkModel::new(0.5, 2, vec![0.0, 1.0, 1.0]).is_err());
        assert!(ElemLinkModel::new(0.5, 1, vec![0.0, 1.2, 1.0]).is_err());
    }

    fn model_strategy() -> impl Strategy<Value = (ElemLinkModel, Vec<f64>)> {
        (0usize..=6).prop_flat_map(|m_star| {
            (
                0.05f64..0.95,
                prop::collection::vec(0.0f64..=1.0, m_star + 1),
                prop::collection::vec(0.0f64..=1.0, m_star + 2),
            )
                .prop_map(|(p, f, alpha)| (ElemLinkModel::from_active_values(p, &f).unwrap(), alpha))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_matches_long_evolution((model, alpha) in model_strategy()) {
            let d = decision_from_alpha(&alpha);
            let (s, v) = steady_state_closed_form(&model, &d).unwrap();
            let far = evolve(&build_mdp(&model), &Policy::Stationary(d.clone()), &model.initial(), 5000).unwrap();
            prop_assert!(s.max_abs_diff(&far) <= 1e-9);
            let st = stationary_distribution(&policy_matrix(&build_mdp(&model), &d).unwrap(), STATIONARY_TOL).unwrap();
            prop_assert!(s.max_abs_diff(&st) <= 1e-9);
            prop_assert!((v - far.expectation(model.f())).abs() <= 1e-9);
        }

        #[test]
        fn cutoff_formulas_agree_with_closed_form((model, _a) in model_strategy()) {
            for t in 0..=model.m_star() {
                let d = cutoff_decision(model.m_star(), Some(t)).unwrap();
                let (s, v) = steady_state_closed_form(&model, &d).unwrap();
                let c = cutoff_steady_values(&model, t).unwrap();
                prop_assert!((c.ftilde - v).abs() <= 1e-12);
                prop_assert!((c.x - (1.0 - s.get(0))).abs() <= 1e-12);
                prop_assert!((c.ftilde - c.x * c.fidelity.unwrap()).abs() <= 1e-12);
            }
        }

        #[test]
        fn lp_dominates_cutoffs_and_meets_best((model, _a) in model_strategy()) {
            let (v, d) = lp_optimal_steady(&model).unwrap();
            for t in 0..=model.m_star() {
                prop_assert!(v >= cutoff_steady_values(&model, t).unwrap().ftilde - 1e-9);
            }
            prop_assert!((v - best_cutoff(&model).1).abs() <= 1e-7);
            let (_, dv) = steady_state_closed_form(&model, &d).unwrap();
            prop_assert!((dv - v).abs() <= 1e-7);
        }

        #[test]
        fn transient_closed_form_matches_evolution(p in 0.01f64..1.0, f in prop::collection::vec(0.0f64..=1.0, 21)) {
            let model = ElemLinkModel::from_active_values(p, &f).unwrap();
            let pol = Policy::Stationary(cutoff_decision(20, None).unwrap());
            for t in 1..=20 {
                let c = cutoff_infty_transient(&model, t).unwrap();
                let e = ftilde_x_f(&model, &pol, t).unwrap();
                prop_assert!((c.ftilde - e.ftilde).abs() <= 1e-12);
                prop_assert!((c.x - e.x).abs() <= 1e-12);
                prop_assert!((c.ftilde - c.x * c.fidelity.unwrap()).abs() <= 1e-12);
            }
        }

        #[test]
        fn backward_matches_exhaustive(p in 0.0f64..=1.0, f in prop::collection::vec(0.0f64..=1.0, 1..=3), t in 1usize..=4) {
            let model = ElemLinkModel::from_active_values(p, &f).unwrap();
            let (v, _) = optimal_backward(&model, t).unwrap();
            let (e, _) = exhaustive_markov_search(&model, t).unwrap();
            prop_assert!((v - e).abs() <= 1e-12);
        }
    }
}
