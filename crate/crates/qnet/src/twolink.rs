//! Two elementary links joined by entanglement swapping at the middle node.
//!
//! States are `(x, m1, m2)` with `x = 1` once the end-to-end link exists
//! (absorbing). The flat index is `x·n1·n2 + (m1+1)·n2 + (m2+1)` with
//! `n_j = m_j* + 2`, so `x` is the most significant coordinate.

use nalgebra::DMatrix;

use crate::elemlink::link_transitions;
use crate::lp::{
    absorbing_decision, absorbing_value_program, mdp_min_absorption_lp_with, solve_optimal, Tolerances,
};
use crate::qstate::{swap_chain_channel, DensityOperator, KrausChannel, StateVector};
use crate::simplex_core::{
    absorption_time, decompose_absorbing, DecisionFunction, Mdp, ProbVector, StochasticMatrix,
};
use crate::{Error, Result};

pub const KEEP_BOTH: usize = 0;
pub const KEEP_FIRST: usize = 1;
pub const KEEP_SECOND: usize = 2;
pub const RENEW_BOTH: usize = 3;
pub const SWAP: usize = 4;
pub const ACTION_LABELS: [&str; 5] = ["00", "01", "10", "11", "swap"];

const F_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLinkModel {
    p1: f64,
    p2: f64,
    q: f64,
    m1_star: usize,
    m2_star: usize,
    f: Vec<f64>,
}

impl TwoLinkModel {
    /// `f` is indexed by flat state index and must vanish off the
    /// `(1, m1 ≥ 0, m2 ≥ 0)` block.
    pub fn new(p1: f64, p2: f64, q: f64, m1_star: usize, m2_star: usize, f: Vec<f64>) -> Result<Self> {
        for (name, v) in [("p1", p1), ("p2", p2), ("q", q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability(format!("{name} = {v}")));
            }
        }
        let model = Self { p1, p2, q, m1_star, m2_star, f: Vec::new() };
        if f.len() != model.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "f has {} entries, model has {} states",
                f.len(),
                model.n_states()
            )));
        }
        for (s, &v) in f.iter().enumerate() {
            let (x, m1, m2) = model.state(s);
            if (x == 0 || m1 < 0 || m2 < 0) && v != 0.0 {
                return Err(Error::InvalidInput(format!("f({x},{m1},{m2}) must be 0, got {v}")));
            }
            if !(-F_TOL..=1.0 + F_TOL).contains(&v) {
                return Err(Error::InvalidInput(format!("f value {v} outside [0,1]")));
            }
        }
        Ok(Self { f, ..model })
    }

    /// Builds `f(1, m1, m2) = value(m1, m2)` for `m1, m2 ≥ 0`.
    pub fn from_fn(
        p1: f64,
        p2: f64,
        q: f64,
        m1_star: usize,
        m2_star: usize,
        value: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let shell = Self { p1, p2, q, m1_star, m2_star, f: Vec::new() };
        let f = (0..shell.n_states())
            .map(|s| match shell.state(s) {
                (1, m1, m2) if m1 >= 0 && m2 >= 0 => value(m1 as usize, m2 as usize),
                _ => 0.0,
            })
            .collect();
        Self::new(p1, p2, q, m1_star, m2_star, f)
    }

    /// Equal links with `f(1, m1, m2) = 1`.
    pub fn symmetric(p: f64, q: f64, m_star: usize) -> Result<Self> {
        Self::from_fn(p, p, q, m_star, m_star, |_, _| 1.0)
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn m1_star(&self) -> usize {
        self.m1_star
    }

    pub fn m2_star(&self) -> usize {
        self.m2_star
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    fn dims(&self) -> (usize, usize) {
        (self.m1_star + 2, self.m2_star + 2)
    }

    pub fn n_states(&self) -> usize {
        let (n1, n2) = self.dims();
        2 * n1 * n2
    }

    pub fn index(&self, x: usize, m1: i64, m2: i64) -> usize {
        let (n1, n2) = self.dims();
        x * n1 * n2 + (m1 + 1) as usize * n2 + (m2 + 1) as usize
    }

    pub fn state(&self, s: usize) -> (usize, i64, i64) {
        let (n1, n2) = self.dims();
        let x = s / (n1 * n2);
        let r = s % (n1 * n2);
        (x, (r / n2) as i64 - 1, (r % n2) as i64 - 1)
    }

    /// `|g_{p1}⟩ ⊗ |g_{p2}⟩` over the transient states, in index order.
    pub fn initial_transient(&self) -> ProbVector {
        let (n1, n2) = self.dims();
        let mut v = vec![0.0; n1 * n2];
        for (i, a) in [1.0 - self.p1, self.p1].iter().enumerate() {
            for (j, b) in [1.0 - self.p2, self.p2].iter().enumerate() {
                v[i * n2 + j] = a * b;
            }
        }
        ProbVector::from_raw(v)
    }
}

pub fn build_two_link_mdp(model: &TwoLinkModel) -> Mdp {
    let (n1, n2) = model.dims();
    let blk = n1 * n2;
    let n = 2 * blk;
    let l1 = link_transitions(model.p1, model.m1_star);
    let l2 = link_transitions(model.p2, model.m2_star);
    let mut mats = Vec::with_capacity(5);
    for (j, k) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let inner = l1[j].kronecker(&l2[k]);
        let mut t = DMatrix::zeros(n, n);
        t.view_mut((0, 0), (blk, blk)).copy_from(&inner);
        for s in blk..n {
            t[(s, s)] = 1.0;
        }
        mats.push(t);
    }
    let mut sw = DMatrix::zeros(n, n);
    let idx = |m1: i64, m2: i64| model.index(0, m1, m2);
    let g1 = [1.0 - model.p1, model.p1];
    let g2 = [1.0 - model.p2, model.p2];
    for m1 in -1..=model.m1_star as i64 {
        for m2 in -1..=model.m2_star as i64 {
            let from = idx(m1, m2);
            match (m1 >= 0, m2 >= 0) {
                (true, true) => {
                    for (i, a) in g1.iter().enumerate() {
                        for (j, b) in g2.iter().enumerate() {
                            sw[(idx(i as i64 - 1, j as i64 - 1), from)] += (1.0 - model.q) * a * b;
                        }
                    }
                    sw[(model.index(1, m1, m2), from)] += model.q;
                }
                (true, false) => {
                    let to = if (m1 as usize) < model.m1_star { idx(m1 + 1, -1) } else { idx(-1, -1) };
                    sw[(to, from)] += 1.0;
                }
                (false, true) => {
                    let to = if (m2 as usize) < model.m2_star { idx(-1, m2 + 1) } else { idx(-1, -1) };
                    sw[(to, from)] += 1.0;
                }
                (false, false) => sw[(from, from)] += 1.0,
            }
        }
    }
    for s in blk..n {
        sw[(s, s)] = 1.0;
    }
    mats.push(sw);
    let states = (0..n)
        .map(|s| {
            let (x, m1, m2) = model.state(s);
            format!("({x},{m1},{m2})")
        })
        .collect();
    Mdp::new(
        states,
        ACTION_LABELS.iter().map(|s| s.to_string()).collect(),
        mats.into_iter().map(StochasticMatrix::from_raw).collect(),
    )
    .expect("two-link transitions are well formed")
}

fn memory_sequence(sigma0: &DensityOperator, mem: &KrausChannel, m_star: usize) -> Result<Vec<DensityOperator>> {
    if mem.in_dims().iter().product::<usize>() != sigma0.dim()
        || mem.out_dims().iter().product::<usize>() != sigma0.dim()
    {
        return Err(Error::DimensionMismatch("memory channel must map the link space to itself".into()));
    }
    let mut out = vec![sigma0.clone()];
    for _ in 0..m_star {
        let m = mem.apply_matrix(out.last().expect("non-empty").matrix());
        out.push(DensityOperator::new(m, sigma0.dims().to_vec())?);
    }
    Ok(out)
}

/// `f(1, m1, m2) = ⟨ψ|L^{ES;1}(σ_1(m1) ⊗ σ_2(m2))|ψ⟩`, zero elsewhere.
pub fn two_link_f_from_physics(
    sigma1_0: &DensityOperator,
    mem1: &KrausChannel,
    sigma2_0: &DensityOperator,
    mem2: &KrausChannel,
    target: &StateVector,
    m1_star: usize,
    m2_star: usize,
) -> Result<Vec<f64>> {
    let dims = sigma1_0.dims();
    if dims.len() != 2 || dims[0] != dims[1] || sigma2_0.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "links must be two equal qudits each, got {:?} and {:?}",
            dims,
            sigma2_0.dims()
        )));
    }
    let d = dims[0];
    let s1 = memory_sequence(sigma1_0, mem1, m1_star)?;
    let s2 = memory_sequence(sigma2_0, mem2, m2_star)?;
    let (n1, n2) = (m1_star + 2, m2_star + 2);
    let mut f = vec![0.0; 2 * n1 * n2];
    for (a, r1) in s1.iter().enumerate() {
        for (b, r2) in s2.iter().enumerate() {
            let out = swap_chain_channel(&r1.tensor(r2), 1, d)?;
            f[n1 * n2 + (a + 1) * n2 + (b + 1)] = out.fidelity_to_pure(target)?;
        }
    }
    Ok(f)
}

/// Joint memory-cutoff decision: swap when both links are within their
/// cutoffs, keep a lone active link below its cutoff, otherwise renew both.
/// Absorbing states get the uniform distribution.
pub fn cutoff_decision(model: &TwoLinkModel, t1_star: usize, t2_star: usize) -> Result<DecisionFunction> {
    if t1_star > model.m1_star || t2_star > model.m2_star {
        return Err(Error::InvalidInput(format!(
            "cutoffs ({t1_star},{t2_star}) exceed storage bounds ({},{})",
            model.m1_star, model.m2_star
        )));
    }
    let (t1, t2) = (t1_star as i64, t2_star as i64);
    let uniform = vec![0.2; 5];
    let probs = (0..model.n_states())
        .map(|s| {
            let (x, m1, m2) = model.state(s);
            if x == 1 {
                return uniform.clone();
            }
            let a = if (0..=t1).contains(&m1) && (0..=t2).contains(&m2) {
                SWAP
            } else if (0..t1).contains(&m1) && m2 == -1 {
                KEEP_FIRST
            } else if m1 == -1 && (0..t2).contains(&m2) {
                KEEP_SECOND
            } else {
                RENEW_BOTH
            };
            let mut row = vec![0.0; 5];
            row[a] = 1.0;
            row
        })
        .collect();
    DecisionFunction::new(probs)
}

fn absorption_impossible(model: &TwoLinkModel) -> bool {
    model.q == 0.0 || model.p1 == 0.0 || model.p2 == 0.0
}

/// Optimal expected `f` at absorption over stationary policies, with the
/// exit constraint restricted to the swap action.
pub fn lp_optimal_value(model: &TwoLinkModel) -> Result<(f64, DecisionFunction)> {
    lp_optimal_value_with(model, &[SWAP], &Tolerances::default())
}

/// The same program with every action's transient→absorbing block in the
/// exit constraint.
pub fn lp_optimal_value_generic(model: &TwoLinkModel) -> Result<(f64, DecisionFunction)> {
    lp_optimal_value_with(model, &[0, 1, 2, 3, 4], &Tolerances::default())
}

/// Optimal expected `f` at absorption with the exit constraint over
/// `exit_actions` and explicit solver tolerances.
pub fn lp_optimal_value_with(
    model: &TwoLinkModel,
    exit_actions: &[usize],
    tol: &Tolerances,
) -> Result<(f64, DecisionFunction)> {
    if absorption_impossible(model) {
        return Ok((0.0, DecisionFunction::uniform(model.n_states(), 5)));
    }
    let mdp = build_two_link_mdp(model);
    let (lp, layout) = absorbing_value_program(&mdp, &model.f, &model.initial_transient(), exit_actions)?;
    let sol = solve_optimal(&lp, tol)?;
    Ok((sol.objective_value, absorbing_decision(&mdp, &layout, &sol.values)))
}

/// Minimum expected waiting time until the end-to-end link exists.
pub fn lp_optimal_waiting_time(model: &TwoLinkModel) -> Result<(f64, DecisionFunction)> {
    lp_optimal_waiting_time_with(model, &Tolerances::default())
}

pub fn lp_optimal_waiting_time_with(model: &TwoLinkModel, tol: &Tolerances) -> Result<(f64, DecisionFunction)> {
    if absorption_impossible(model) {
        return Err(Error::Infeasible("end-to-end link is unreachable".into()));
    }
    mdp_min_absorption_lp_with(&build_two_link_mdp(model), &model.initial_transient(), tol)
}

/// Closed-form expected waiting time for equal links with cutoff `t*`.
pub fn analytic_symmetric_waiting_time(p: f64, q: f64, t_star: usize) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) || !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidProbability(format!("need p, q in (0,1], got p = {p}, q = {q}")));
    }
    let r = (1.0 - p).powi(t_star as i32);
    let num = 3.0 - 2.0 * p * (1.0 - r) - 2.0 * r;
    let den = q * p * (2.0 - p * (1.0 - 2.0 * r) - 2.0 * r);
    Ok(num / den)
}

/// Expected waiting time and expected `f` at absorption under `d`.
pub fn evaluate_policy(model: &TwoLinkModel, d: &DecisionFunction) -> Result<(f64, f64)> {
    let mdp = build_two_link_mdp(model);
    let dec = decompose_absorbing(&mdp, d)?;
    let init = model.initial_transient();
    let time = absorption_time(&dec, &init)?;
    let f_abs: Vec<f64> = dec.absorbing.iter().map(|&s| model.f[s]).collect();
    let value = dec.absorbing_value(&f_abs, &init)?;
    Ok((time, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{amplitude_damping, bell, random_bell_diagonal, swap_fidelity, BellDiagCoeffs};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_model(rng: &mut ChaCha8Rng) -> TwoLinkModel {
        let m1 = rng.gen_range(0..=3);
        let m2 = rng.gen_range(0..=3);
        let (p1, p2, q) = (rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0));
        let decay: f64 = rng.gen_range(0.01..0.3);
        TwoLinkModel::from_fn(p1, p2, q, m1, m2, |a, b| (-decay * (a + b) as f64).exp()).unwrap()
    }

    #[test]
    fn indices_round_trip() {
        let model = TwoLinkModel::symmetric(0.5, 0.5, 3).unwrap();
        for s in 0..model.n_states() {
            let (x, m1, m2) = model.state(s);
            assert_eq!(model.index(x, m1, m2), s);
        }
        assert_eq!(model.index(0, -1, -1), 0);
        assert_eq!(model.n_states(), 50);
    }

    #[test]
    fn transitions_are_stochastic_and_absorbing() {
        let model = TwoLinkModel::from_fn(0.3, 0.6, 0.7, 2, 3, |_, _| 0.9).unwrap();
        let mdp = build_two_link_mdp(&model);
        let blk = 4 * 5;
        for t in mdp.transitions() {
            assert!(t.max_column_defect() < 1e-12);
            for s in blk..2 * blk {
                assert_eq!(t.get(s, s), 1.0);
            }
        }
        let sw = mdp.transition(SWAP);
        let from = model.index(0, 1, 2);
        assert!(close(sw.get(model.index(1, 1, 2), from), 0.7, 1e-15));
        assert!(close(sw.get(model.index(0, 0, 0), from), 0.3 * 0.3 * 0.6, 1e-15));
        assert!(close(sw.get(model.index(0, -1, -1), from), 0.3 * 0.7 * 0.4, 1e-15));
        assert_eq!(sw.get(model.index(0, -1, -1), model.index(0, -1, -1)), 1.0);
        assert_eq!(sw.get(model.index(0, 2, -1), model.index(0, 1, -1)), 1.0);
        assert_eq!(sw.get(model.index(0, -1, -1), model.index(0, 2, -1)), 1.0);
        assert_eq!(sw.get(model.index(0, -1, -1), model.index(0, -1, 3)), 1.0);
        let t01 = mdp.transition(KEEP_FIRST);
        // keep link 1 at age 0, renew link 2
        assert!(close(t01.get(model.index(0, 1, 0), model.index(0, 0, 2)), 0.6, 1e-15));
    }

    #[test]
    fn cutoff_decision_branches() {
        let model = TwoLinkModel::symmetric(0.5, 0.5, 3).unwrap();
        let d = cutoff_decision(&model, 2, 2).unwrap();
        assert_eq!(d.mode(model.index(0, 1, 2)), SWAP);
        assert_eq!(d.mode(model.index(0, -1, -1)), RENEW_BOTH);
        assert_eq!(d.mode(model.index(0, 1, -1)), KEEP_FIRST);
        assert_eq!(d.mode(model.index(0, -1, 0)), KEEP_SECOND);
        assert_eq!(d.mode(model.index(0, 2, -1)), RENEW_BOTH);
        assert_eq!(d.mode(model.index(0, -1, 2)), RENEW_BOTH);
        assert_eq!(d.mode(model.index(0, 3, 0)), RENEW_BOTH);
        assert!(cutoff_decision(&model, 4, 0).is_err());
    }

    #[test]
    fn analytic_examples() {
        assert!(close(analytic_symmetric_waiting_time(1.0, 1.0, 3).unwrap(), 1.0, 1e-15));
        assert!(close(analytic_symmetric_waiting_time(0.5, 0.5, 0).unwrap(), 8.0, 1e-15));
        assert!(analytic_symmetric_waiting_time(0.0, 0.5, 2).is_err());
    }

    #[test]
    fn cutoff_policy_matches_analytic_time() {
        for &p in &[0.2, 0.5, 0.9] {
            for &q in &[0.3, 1.0] {
                for t in 0..=4 {
                    let model = TwoLinkModel::symmetric(p, q, 4).unwrap();
                    let d = cutoff_decision(&model, t, t).unwrap();
                    let (w, v) = evaluate_policy(&model, &d).unwrap();
                    assert!(close(w, analytic_symmetric_waiting_time(p, q, t).unwrap(), 1e-9), "p={p} q={q} t={t}");
                    assert!(close(v, 1.0, 1e-12));
                }
            }
        }
    }

    #[test]
    fn waiting_lp_examples() {
        let model = TwoLinkModel::symmetric(1.0, 1.0, 2).unwrap();
        assert!(close(lp_optimal_waiting_time(&model).unwrap().0, 1.0, 1e-9));
        let (w, v) = evaluate_policy(&model, &cutoff_decision(&model, 0, 0).unwrap()).unwrap();
        assert!(close(w, 1.0, 1e-12) && close(v, 1.0, 1e-12));
        let m = TwoLinkModel::symmetric(0.5, 0.5, 5).unwrap();
        let (w, d) = lp_optimal_waiting_time(&m).unwrap();
        assert!(close(w, analytic_symmetric_waiting_time(0.5, 0.5, 5).unwrap(), 1e-6));
        assert!(close(evaluate_policy(&m, &d).unwrap().0, w, 1e-7));
        assert!(lp_optimal_waiting_time(&TwoLinkModel::symmetric(0.5, 0.0, 2).unwrap()).is_err());
    }

    #[test]
    fn value_lp_examples() {
        let model = TwoLinkModel::symmetric(0.4, 0.6, 2).unwrap();
        assert!(close(lp_optimal_value(&model).unwrap().0, 1.0, 1e-9));
        let none = TwoLinkModel::symmetric(0.4, 0.0, 2).unwrap();
        assert_eq!(lp_optimal_value(&none).unwrap().0, 0.0);
    }

    #[test]
    fn value_lp_beats_cutoff_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let model = random_model(&mut rng);
            let (v, d) = lp_optimal_value(&model).unwrap();
            let (vg, _) = lp_optimal_value_generic(&model).unwrap();
            assert!(close(v, vg, 1e-9));
            assert!(close(evaluate_policy(&model, &d).unwrap().1, v, 1e-7));
            for t1 in 0..=model.m1_star().min(2) {
                for t2 in 0..=model.m2_star().min(2) {
                    let c = cutoff_decision(&model, t1, t2).unwrap();
                    assert!(v >= evaluate_policy(&model, &c).unwrap().1 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn waiting_lp_beats_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let model = random_model(&mut rng);
        let (w, _) = lp_optimal_waiting_time(&model).unwrap();
        let n = model.n_states();
        let mut checked = 0;
        for _ in 0..200 {
            let probs: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let r: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
                    let s: f64 = r.iter().sum();
                    r.iter().map(|x| x / s).collect()
                })
                .collect();
            let d = DecisionFunction::new(probs).unwrap();
            if let Ok((t, _)) = evaluate_policy(&model, &d) {
                assert!(w <= t + 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 150);
    }

    #[test]
    fn physics_table_matches_swap_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let b1 = random_bell_diagonal(&mut rng);
        let b2 = random_bell_diagonal(&mut rng);
        let phi = bell(2, 0, 0).unwrap();
        let id = KrausChannel::identity(4);
        let f = two_link_f_from_physics(&b1.to_density(), &id, &b2.to_density(), &id, &phi, 1, 2).unwrap();
        let expect = swap_fidelity(&[b1.table(), b2.table()]).unwrap();
        let model = TwoLinkModel::new(0.5, 0.5, 0.5, 1, 2, f.clone()).unwrap();
        for s in 0..model.n_states() {
            let (x, m1, m2) = model.state(s);
            if x == 1 && m1 >= 0 && m2 >= 0 {
                assert!(close(f[s], expect, 1e-12));
            } else {
                assert_eq!(f[s], 0.0);
            }
        }
        let ideal = BellDiagCoeffs::werner(1.0).unwrap().to_density();
        let ad = amplitude_damping(0.1).unwrap();
        let mem = ad.tensor(&ad);
        let f = two_link_f_from_physics(&ideal, &mem, &ideal, &mem, &phi, 2, 2).unwrap();
        let m = TwoLinkModel::new(0.5, 0.5, 0.5, 2, 2, f.clone()).unwrap();
        assert!(close(f[m.index(1, 0, 0)], 1.0, 1e-12));
        assert!(f[m.index(1, 1, 0)] < 1.0 && f[m.index(1, 2, 2)] < f[m.index(1, 1, 1)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn waiting_lp_matches_best_cutoff_symmetric(p in 0.1f64..=1.0, q in 0.1f64..=1.0) {
            let model = TwoLinkModel::symmetric(p, q, 3).unwrap();
            let (w, d) = lp_optimal_waiting_time(&model).unwrap();
            prop_assert!((w - analytic_symmetric_waiting_time(p, q, 3).unwrap()).abs() <= 1e-6);
            prop_assert!((evaluate_policy(&model, &d).unwrap().0 - w).abs() <= 1e-7);
        }

        #[test]
        fn generic_and_swap_only_programs_agree(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng);
            let (a, _) = lp_optimal_value(&model).unwrap();
            let (b, _) = lp_optimal_value_generic(&model).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
