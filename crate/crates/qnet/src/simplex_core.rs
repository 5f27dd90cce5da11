//! Probability vectors, column-stochastic matrices and finite MDPs.
//!
//! Conventions: a transition matrix `T` has element `T[(s', s)]` equal to the
//! probability of moving from `s` to `s'`, so probability vectors are column
//! vectors multiplied from the left (`v_{t+1} = P v_t`).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Tolerance on probability sums used when constructing vectors and matrices.
pub const PROB_TOL: f64 = 1e-12;
/// Default residual tolerance for stationary distributions.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Iteration cap for power iteration.
pub const POWER_ITERATION_CAP: usize = 1_000_000;

fn check_entry(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() || x < -PROB_TOL || x > 1.0 + PROB_TOL {
        return Err(Error::InvalidProbability(format!("{what} entry {x} outside [0,1]")));
    }
    Ok(())
}

/// A probability distribution over a finite, index-labelled state set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    entries: Vec<f64>,
}

impl ProbVector {
    /// Validates entries in `[0,1]` summing to one within [`PROB_TOL`].
    /// Inputs are never renormalized.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidProbability("empty probability vector".into()));
        }
        for &x in &entries {
            check_entry(x, "probability vector")?;
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidProbability(format!(
                "probability vector sums to {sum}"
            )));
        }
        Ok(Self { entries })
    }

    /// Point mass on state `i`.
    pub fn point(n: usize, i: usize) -> Self {
        let mut entries = vec![0.0; n];
        entries[i] = 1.0;
        Self { entries }
    }

    pub fn uniform(n: usize) -> Self {
        Self { entries: vec![1.0 / n as f64; n] }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }

    /// `⟨f|v⟩`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.entries.iter().zip(f).map(|(p, x)| p * x).sum()
    }

    /// Maximum absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &ProbVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        Self { entries }
    }
}

/// A column-stochastic matrix: every column is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    m: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidProbability("empty stochastic matrix".into()));
        }
        for j in 0..m.ncols() {
            let mut sum = 0.0;
            for i in 0..m.nrows() {
                check_entry(m[(i, j)], "stochastic matrix")?;
                sum += m[(i, j)];
            }
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidProbability(format!("column {j} sums to {sum}")));
            }
        }
        Ok(Self { m })
    }

    pub fn identity(n: usize) -> Self {
        Self { m: DMatrix::identity(n, n) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn nrows(&self) -> usize {
        self.m.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.m.ncols()
    }

    /// `T(s'; s)`.
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.m[(to, from)]
    }

    pub fn apply(&self, v: &ProbVector) -> Result<ProbVector> {
        if v.len() != self.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, vector has {} entries",
                self.ncols(),
                v.len()
            )));
        }
        let out = &self.m * DVector::from_column_slice(v.entries());
        Ok(ProbVector::from_raw(out.iter().copied().collect()))
    }

    pub(crate) fn from_raw(m: DMatrix<f64>) -> Self {
        Self { m }
    }

    /// Maximum deviation of a column sum from one.
    pub fn max_column_defect(&self) -> f64 {
        (0..self.ncols())
            .map(|j| (self.m.column(j).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// A finite Markov decision process `⟨S, A, {T^a}⟩`.
///
/// Rewards are not stored: the figures of merit used with these processes
/// are functions of the state and are supplied by the caller.
#[derive(Debug, Clone)]
pub struct Mdp {
    states: Vec<String>,
    actions: Vec<String>,
    transitions: Vec<StochasticMatrix>,
}

impl Mdp {
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        transitions: Vec<StochasticMatrix>,
    ) -> Result<Self> {
        if actions.len() != transitions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} actions but {} transition matrices",
                actions.len(),
                transitions.len()
            )));
        }
        if actions.is_empty() {
            return Err(Error::InvalidInput("an MDP needs at least one action".into()));
        }
        let n = states.len();
        for (a, t) in transitions.iter().enumerate() {
            if t.nrows() != n || t.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "transition matrix for action {} is {}x{}, expected {n}x{n}",
                    actions[a],
                    t.nrows(),
                    t.ncols()
                )));
            }
        }
        Ok(Self { states, actions, transitions })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn transition(&self, a: usize) -> &StochasticMatrix {
        &self.transitions[a]
    }

    pub fn transitions(&self) -> &[StochasticMatrix] {
        &self.transitions
    }
}

/// A randomized decision rule: `d(s)(a)` is the probability of action `a`
/// in state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionFunction {
    probs: Vec<Vec<f64>>,
}

impl DecisionFunction {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("decision function over no states".into()));
        }
        let n_actions = probs[0].len();
        for (s, row) in probs.iter().enumerate() {
            if row.len() != n_actions || n_actions == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "decision row {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            for &x in row {
                check_entry(x, "decision function")?;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidProbability(format!(
                    "decision row {s} sums to {sum}"
                )));
            }
        }
        Ok(Self { probs })
    }

    /// Deterministic rule choosing `choices[s]` in state `s`.
    pub fn deterministic(n_actions: usize, choices: &[usize]) -> Result<Self> {
        let mut probs = Vec::with_capacity(choices.len());
        for &c in choices {
            if c >= n_actions {
                return Err(Error::InvalidInput(format!("action {c} out of range")));
            }
            let mut row = vec![0.0; n_actions];
            row[c] = 1.0;
            probs.push(row);
        }
        Self::new(probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states] }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn action_probs(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    /// The action of largest probability in state `s` (lowest index on ties).
    pub fn mode(&self, s: usize) -> usize {
        let row = &self.probs[s];
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    pub(crate) fn from_raw(probs: Vec<Vec<f64>>) -> Self {
        Self { probs }
    }
}

/// A history `(s_1, a_1, s_2, …, a_{j-1}, s_j)` stored as interleaved indices.
pub type History = Vec<usize>;

/// A policy whose decisions may depend on the full history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HistoryPolicy {
    map: HashMap<History, Vec<f64>>,
}

impl HistoryPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, history: History, action_probs: Vec<f64>) {
        self.map.insert(history, action_probs);
    }

    pub fn get(&self, history: &[usize]) -> Option<&Vec<f64>> {
        self.map.get(history)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Deterministic action for a history, if the history is covered.
    pub fn action(&self, history: &[usize]) -> Option<usize> {
        self.map.get(history).map(|row| {
            let mut best = 0;
            for a in 1..row.len() {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
    }
}

/// A sequence of decision rules.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// The same rule at every time step.
    Stationary(DecisionFunction),
    /// `rules[j-1]` is applied at time `j`.
    TimeIndexed(Vec<DecisionFunction>),
    /// Decisions keyed by history.
    HistoryDependent(HistoryPolicy),
}

impl Policy {
    /// Number of decision steps the policy defines, `None` when unbounded.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Policy::Stationary(_) => None,
            Policy::TimeIndexed(v) => Some(v.len()),
            Policy::HistoryDependent(_) => None,
        }
    }

    /// Markov rule applied at time `j` (1-based), when the policy is Markov.
    pub fn rule_at(&self, j: usize) -> Option<&DecisionFunction> {
        match self {
            Policy::Stationary(d) => Some(d),
            Policy::TimeIndexed(v) => v.get(j - 1),
            Policy::HistoryDependent(_) => None,
        }
    }
}

/// `P^d = Σ_a T^a D^d_a`.
pub fn policy_matrix(mdp: &Mdp, d: &DecisionFunction) -> Result<StochasticMatrix> {
    let n = mdp.n_states();
    if d.n_states() != n || d.n_actions() != mdp.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "decision function is {}x{}, MDP has {} states and {} actions",
            d.n_states(),
            d.n_actions(),
            n,
            mdp.n_actions()
        )));
    }
    let mut p = DMatrix::zeros(n, n);
    for (a, t) in mdp.transitions().iter().enumerate() {
        for s in 0..n {
            let w = d.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for s2 in 0..n {
                p[(s2, s)] += w * t.get(s2, s);
            }
        }
    }
    Ok(StochasticMatrix::from_raw(p))
}

/// Distribution of the state at time `t` given `S(1) ~ initial`:
/// `P^{d_{t-1}} ⋯ P^{d_1} |S(1)⟩`.
pub fn evolve(mdp: &Mdp, policy: &Policy, initial: &ProbVector, t: usize) -> Result<ProbVector> {
    if t == 0 {
        return Err(Error::InvalidInput("time steps start at t = 1".into()));
    }
    if initial.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "initial vector has {} entries, MDP has {} states",
            initial.len(),
            mdp.n_states()
        )));
    }
    if let Some(h) = policy.horizon() {
        if h + 1 < t {
            return Err(Error::InvalidInput(format!(
                "policy defines {h} steps, evolution to t = {t} needs {}",
                t - 1
            )));
        }
    }
    match policy {
        Policy::HistoryDependent(hp) => evolve_history(mdp, hp, initial, t),
        _ => {
            let mut v = initial.clone();
            for j in 1..t {
                let d = policy.rule_at(j).expect("horizon checked");
                v = policy_matrix(mdp, d)?.apply(&v)?;
            }
            Ok(v)
        }
    }
}

fn evolve_history(mdp: &Mdp, hp: &HistoryPolicy, initial: &ProbVector, t: usize) -> Result<ProbVector> {
    let n = mdp.n_states();
    let mut layer: Vec<(History, f64)> = (0..n)
        .filter(|&s| initial.get(s) > 0.0)
        .map(|s| (vec![s], initial.get(s)))
        .collect();
    for _ in 1..t {
        let mut next = Vec::new();
        for (h, pr) in &layer {
            let s = *h.last().expect("non-empty history");
            let row = hp.get(h).ok_or_else(|| {
                Error::InvalidInput(format!("history policy does not cover history {h:?}"))
            })?;
            for (a, &pa) in row.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let tm = mdp.transition(a);
                for s2 in 0..n {
                    let q = tm.get(s2, s);
                    if q > 0.0 {
                        let mut h2 = h.clone();
                        h2.push(a);
                        h2.push(s2);
                        next.push((h2, pr * pa * q));
                    }
                }
            }
        }
        layer = next;
    }
    let mut out = vec![0.0; n];
    for (h, pr) in layer {
        out[*h.last().expect("non-empty history")] += pr;
    }
    Ok(ProbVector::from_raw(out))
}

fn residual(p: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (p * v - v).amax()
}

/// Stationary distribution of `P` by power iteration from the uniform vector.
///
/// When the iteration stalls (periodic or slowly mixing chains) the linear
/// system `(P - I) v = 0, Σ v = 1` is solved directly. A chain without a
/// unique stationary distribution is reported as non-convergence.
pub fn stationary_distribution(p: &StochasticMatrix, tol: f64) -> Result<ProbVector> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::DimensionMismatch("stationary distribution needs a square matrix".into()));
    }
    let m = p.matrix();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut checkpoint = f64::INFINITY;
    for it in 0..POWER_ITERATION_CAP {
        let w = m * &v;
        let res = (&w - &v).amax();
        v = w;
        if res <= tol && residual(m, &v) <= tol {
            return Ok(ProbVector::from_raw(v.iter().copied().collect()));
        }
        if it % 1000 == 999 {
            if res > 0.99 * checkpoint {
                break;
            }
            checkpoint = res;
        }
    }
    direct_stationary(m, tol)
}

fn direct_stationary(m: &DMatrix<f64>, tol: f64) -> Result<ProbVector> {
    let n = m.nrows();
    let mut a = m - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let v = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NonConvergence("stationary distribution is not unique".into()))?;
    let res = residual(m, &v);
    if !res.is_finite() || res > tol.max(1e-10) || v.iter().any(|&x| x < -tol.max(1e-10)) {
        return Err(Error::NonConvergence(format!(
            "direct stationary solve failed (residual {res:e})"
        )));
    }
    Ok(ProbVector::from_raw(v.iter().map(|&x| x.max(0.0)).collect()))
}

/// Block structure of `P^d` for an MDP with absorbing states.
#[derive(Debug, Clone)]
pub struct AbsorbingDecomposition {
    /// Indices (into the MDP state set) of transient states, ascending.
    pub transient: Vec<usize>,
    /// Indices of absorbing states, ascending.
    pub absorbing: Vec<usize>,
    /// Transient → transient block.
    pub q: DMatrix<f64>,
    /// Transient → absorbing block (rows: absorbing, columns: transient).
    pub r: DMatrix<f64>,
}

/// States fixed by every action (`T^a|s⟩ = |s⟩` for all `a`).
pub fn absorbing_states(mdp: &Mdp) -> Vec<usize> {
    (0..mdp.n_states())
        .filter(|&s| {
            mdp.transitions()
                .iter()
                .all(|t| (t.get(s, s) - 1.0).abs() <= PROB_TOL)
        })
        .collect()
}

pub fn decompose_absorbing(mdp: &Mdp, d: &DecisionFunction) -> Result<AbsorbingDecomposition> {
    let p = policy_matrix(mdp, d)?;
    let absorbing = absorbing_states(mdp);
    let transient: Vec<usize> = (0..mdp.n_states()).filter(|s| !absorbing.contains(s)).collect();
    let q = DMatrix::from_fn(transient.len(), transient.len(), |i, j| {
        p.get(transient[i], transient[j])
    });
    let r = DMatrix::from_fn(absorbing.len(), transient.len(), |i, j| {
        p.get(absorbing[i], transient[j])
    });
    Ok(AbsorbingDecomposition { transient, absorbing, q, r })
}

impl AbsorbingDecomposition {
    /// Checks that every transient state reachable from `init` can reach
    /// an absorbing state; otherwise `I - Q` restricted to the reachable
    /// set is singular.
    fn check_reachable(&self, init: &ProbVector) -> Result<()> {
        let n = self.transient.len();
        let mut reach = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&i| init.get(i) > 0.0).collect();
        for &i in &stack {
            reach[i] = true;
        }
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if !reach[i] && self.q[(i, j)] > 0.0 {
                    reach[i] = true;
                    stack.push(i);
                }
            }
        }
        let mut exits: Vec<bool> = (0..n).map(|j| self.r.column(j).sum() > 0.0).collect();
        loop {
            let mut changed = false;
            for j in 0..n {
                if !exits[j] && (0..n).any(|i| exits[i] && self.q[(i, j)] > 0.0) {
                    exits[j] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(j) = (0..n).find(|&j| reach[j] && !exits[j]) {
            return Err(Error::Singular(format!(
                "absorption unreachable from transient state index {}",
                self.transient[j]
            )));
        }
        Ok(())
    }

    /// Expected number of visits to each transient state, `(I - Q)^{-1}|init⟩`.
    pub fn expected_visits(&self, init: &ProbVector) -> Result<Vec<f64>> {
        let n = self.transient.len();
        if init.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial transient vector has {} entries, {} transient states",
                init.len(),
                n
            )));
        }
        if self.absorbing.is_empty() {
            return Err(Error::Singular("no absorbing states".into()));
        }
        self.check_reachable(init)?;
        let a = DMatrix::identity(n, n) - &self.q;
        let b = DVector::from_column_slice(init.entries());
        let y = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular("I - Q is singular".into()))?;
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular("I - Q is numerically singular".into()));
        }
        Ok(y.iter().copied().collect())
    }

    /// Distribution over absorbing states at absorption, `R (I - Q)^{-1}|init⟩`.
    pub fn absorption_distribution(&self, init: &ProbVector) -> Result<Vec<f64>> {
        let y = DVector::from_vec(self.expected_visits(init)?);
        Ok((&self.r * y).iter().copied().collect())
    }

    /// `⟨f_abs| R (I - Q)^{-1} |init⟩` for a function on the absorbing states.
    pub fn absorbing_value(&self, f_abs: &[f64], init: &ProbVector) -> Result<f64> {
        if f_abs.len() != self.absorbing.len() {
            return Err(Error::DimensionMismatch("f must cover the absorbing states".into()));
        }
        let x = self.absorption_distribution(init)?;
        Ok(x.iter().zip(f_abs).map(|(a, b)| a * b).sum())
    }
}

/// Expected time to absorption `⟨γ| (I - Q)^{-1} |init⟩`.
pub fn absorption_time(dec: &AbsorbingDecomposition, initial_transient: &ProbVector) -> Result<f64> {
    Ok(dec.expected_visits(initial_transient)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_mdp() -> Mdp {
        let t0 = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8])).unwrap();
        let t1 = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        Mdp::new(vec!["a".into(), "b".into()], vec!["0".into(), "1".into()], vec![t0, t1]).unwrap()
    }

    #[test]
    fn rejects_bad_probability_vectors() {
        assert!(ProbVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn rejects_non_stochastic_columns() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.5]);
        assert!(StochasticMatrix::new(m).is_err());
    }

    #[test]
    fn one_action_selection_gives_that_matrix() {
        let mdp = toy_mdp();
        let d = DecisionFunction::deterministic(2, &[0, 0]).unwrap();
        let p = policy_matrix(&mdp, &d).unwrap();
        assert_eq!(p.matrix(), mdp.transition(0).matrix());
    }

    #[test]
    fn uniform_rule_averages_actions() {
        let mdp = toy_mdp();
        let p = policy_matrix(&mdp, &DecisionFunction::uniform(2, 2)).unwrap();
        let avg = (mdp.transition(0).matrix() + mdp.transition(1).matrix()) * 0.5;
        assert!((p.matrix() - avg).amax() < 1e-15);
    }

    #[test]
    fn evolve_at_time_one_is_identity() {
        let mdp = toy_mdp();
        let init = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let pol = Policy::Stationary(DecisionFunction::uniform(2, 2));
        assert_eq!(evolve(&mdp, &pol, &init, 1).unwrap(), init);
        assert!(evolve(&mdp, &pol, &init, 0).is_err());
    }

    #[test]
    fn short_policy_is_rejected() {
        let mdp = toy_mdp();
        let pol = Policy::TimeIndexed(vec![DecisionFunction::uniform(2, 2)]);
        let init = ProbVector::uniform(2);
        assert!(evolve(&mdp, &pol, &init, 2).is_ok());
        assert!(evolve(&mdp, &pol, &init, 3).is_err());
    }

    #[test]
    fn doubly_stochastic_keeps_uniform() {
        let t = StochasticMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.2, 0.5, 0.3, 0.3, 0.2, 0.5, 0.5, 0.3, 0.2],
        ))
        .unwrap();
        let mdp = Mdp::new(vec!["0".into(), "1".into(), "2".into()], vec!["a".into()], vec![t]).unwrap();
        let pol = Policy::Stationary(DecisionFunction::uniform(3, 1));
        let v = evolve(&mdp, &pol, &ProbVector::uniform(3), 7).unwrap();
        assert!(v.max_abs_diff(&ProbVector::uniform(3)) < 1e-15);
    }

    #[test]
    fn history_policy_matches_markov_rule() {
        let mdp = toy_mdp();
        let init = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let d = DecisionFunction::deterministic(2, &[1, 0]).unwrap();
        let mut hp = HistoryPolicy::new();
        // cover all histories up to length 3 (two decisions)
        for s1 in 0..2 {
            hp.insert(vec![s1], d.action_probs(s1).to_vec());
            for a1 in 0..2 {
                for s2 in 0..2 {
                    hp.insert(vec![s1, a1, s2], d.action_probs(s2).to_vec());
                }
            }
        }
        let a = evolve(&mdp, &Policy::HistoryDependent(hp), &init, 3).unwrap();
        let b = evolve(&mdp, &Policy::Stationary(d), &init, 3).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn stationary_of_single_state() {
        let v = stationary_distribution(&StochasticMatrix::identity(1), 1e-12).unwrap();
        assert_eq!(v.entries(), &[1.0]);
    }

    #[test]
    fn stationary_of_periodic_chain_uses_direct_solve() {
        let p = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        // uniform start is already stationary; start the check from a skewed case
        let v = stationary_distribution(&p, 1e-12).unwrap();
        assert!((v.get(0) - 0.5).abs() < 1e-12);
        let p3 = StochasticMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        ))
        .unwrap();
        let v3 = stationary_distribution(&p3, 1e-12).unwrap();
        assert!(v3.max_abs_diff(&ProbVector::uniform(3)) < 1e-12);
    }

    #[test]
    fn reducible_chain_is_reported() {
        let p = StochasticMatrix::identity(2);
        // uniform start converges immediately to a stationary vector, so this
        // is accepted; a non-unique chain is only detected by the direct path
        assert!(stationary_distribution(&p, 1e-12).is_ok());
        assert!(direct_stationary(p.matrix(), 1e-12).is_err());
    }

    #[test]
    fn absorbing_blocks_of_two_state_chain() {
        // state 1 fixed under both actions
        let t0 = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.5, 1.0])).unwrap();
        let t1 = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.8, 1.0])).unwrap();
        let mdp = Mdp::new(vec!["a".into(), "b".into()], vec!["0".into(), "1".into()], vec![t0, t1]).unwrap();
        let dec = decompose_absorbing(&mdp, &DecisionFunction::deterministic(2, &[0, 0]).unwrap()).unwrap();
        assert_eq!(dec.absorbing, vec![1]);
        assert_eq!(dec.q.shape(), (1, 1));
        assert!((absorption_time(&dec, &ProbVector::point(1, 0)).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn no_fixed_states_means_no_absorbing_set() {
        let dec = decompose_absorbing(&toy_mdp(), &DecisionFunction::uniform(2, 2)).unwrap();
        assert!(dec.absorbing.is_empty());
        assert!(absorption_time(&dec, &ProbVector::uniform(2)).is_err());
    }

    #[test]
    fn immediate_absorption_takes_one_step() {
        let t = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0])).unwrap();
        let mdp = Mdp::new(vec!["a".into(), "b".into()], vec!["0".into()], vec![t]).unwrap();
        let dec = decompose_absorbing(&mdp, &DecisionFunction::uniform(2, 1)).unwrap();
        assert_eq!(absorption_time(&dec, &ProbVector::point(1, 0)).unwrap(), 1.0);
    }

    #[test]
    fn trapped_transient_state_is_singular() {
        // 0 -> 1 with certainty, 1 loops forever, 2 absorbing
        let t = StochasticMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ))
        .unwrap();
        let t2 = StochasticMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        ))
        .unwrap();
        let mdp = Mdp::new(
            vec!["0".into(), "1".into(), "2".into()],
            vec!["a".into(), "b".into()],
            vec![t, t2],
        )
        .unwrap();
        let d = DecisionFunction::deterministic(2, &[0, 0, 0]).unwrap();
        let dec = decompose_absorbing(&mdp, &d).unwrap();
        assert_eq!(dec.absorbing, vec![2]);
        assert!(matches!(
            absorption_time(&dec, &ProbVector::point(2, 0)),
            Err(Error::Singular(_))
        ));
    }

    fn random_stochastic(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
        use rand::Rng;
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.01..1.0));
        for mut col in m.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        m
    }

    #[test]
    fn stationary_matches_svd_null_vector() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for n in 2..9 {
            let m = random_stochastic(&mut rng, n);
            let v = stationary_distribution(&StochasticMatrix::new(m.clone()).unwrap(), 1e-13).unwrap();
            // right singular vector of P - I for the smallest singular value
            let svd = (&m - DMatrix::identity(n, n)).svd(false, true);
            let vt = svd.v_t.unwrap();
            let k = svd.singular_values.imin();
            let null: Vec<f64> = vt.row(k).iter().copied().collect();
            let s: f64 = null.iter().sum();
            for (a, b) in v.entries().iter().zip(&null) {
                assert!((a - b / s).abs() < 1e-10);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn policy_matrices_are_column_stochastic(seed in proptest::prelude::any::<u64>(), n in 1usize..7, k in 1usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ts: Vec<_> = (0..k).map(|_| StochasticMatrix::new(random_stochastic(&mut rng, n)).unwrap()).collect();
            let mdp = Mdp::new((0..n).map(|i| i.to_string()).collect(), (0..k).map(|i| i.to_string()).collect(), ts).unwrap();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.iter().map(|x| x / s).collect()
                })
                .collect();
            let d = DecisionFunction::new(rows).unwrap();
            let p = policy_matrix(&mdp, &d).unwrap();
            proptest::prop_assert!(p.max_column_defect() < 1e-12);
            let v = evolve(&mdp, &Policy::Stationary(d), &ProbVector::uniform(n), 6).unwrap();
            proptest::prop_assert!((v.entries().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
