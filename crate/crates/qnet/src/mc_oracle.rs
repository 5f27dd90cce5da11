//! Seeded Monte Carlo simulation of the link MDPs, used as a statistical
//! check on the analytic results.
//!
//! Every run is reproducible from its seed. The serial path draws all
//! trials from stream 0 of a ChaCha8 generator; the parallel path splits
//! trials into fixed-size chunks, chunk `k` drawing from stream `k + 1`,
//! and merges the chunks in order, so its output does not depend on the
//! thread count either.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::elemlink::{build_mdp, ElemLinkModel};
use crate::simplex_core::{DecisionFunction, Mdp, Policy, ProbVector};
use crate::twolink::{build_two_link_mdp, TwoLinkModel};
use crate::{Error, Result};

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed_from_u64 + set_stream";

/// Trials per independently seeded stream on the parallel path.
pub const CHUNK_TRIALS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: usize,
    /// Maximum number of time steps simulated per trial.
    pub horizon: usize,
    pub parallel: bool,
}

impl SimConfig {
    pub fn new(seed: u64, trials: usize, horizon: usize) -> Result<Self> {
        if trials == 0 || horizon == 0 {
            return Err(Error::InvalidInput("trials and horizon must be at least 1".into()));
        }
        Ok(Self { seed, trials, horizon, parallel: true })
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Runs `body(rng, n)` over the trials, returning per-chunk results in
    /// chunk order.
    fn run_chunks<T, F>(&self, body: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
    {
        if !self.parallel {
            return vec![body(&mut self.rng(0), self.trials)];
        }
        let chunks = self.trials.div_ceil(CHUNK_TRIALS);
        (0..chunks)
            .into_par_iter()
            .map(|k| {
                let n = CHUNK_TRIALS.min(self.trials - k * CHUNK_TRIALS);
                body(&mut self.rng(k as u64 + 1), n)
            })
            .collect()
    }
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { mean, stderr: (var / n as f64).sqrt(), n }
    }

    /// Whether `value` lies within `k` standard errors. A zero standard
    /// error falls back to an absolute tolerance of `1e-12`.
    pub fn consistent_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= (k * self.stderr).max(1e-12)
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Cumulative distributions `cum[a][s][s']` of an MDP's columns.
struct Sampler {
    cum: Vec<Vec<Vec<f64>>>,
}

impl Sampler {
    fn new(mdp: &Mdp) -> Self {
        let n = mdp.n_states();
        let cum = mdp
            .transitions()
            .iter()
            .map(|t| {
                (0..n)
                    .map(|s| {
                        let mut acc = 0.0;
                        (0..n)
                            .map(|s2| {
                                acc += t.get(s2, s);
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { cum }
    }

    fn step<R: Rng>(&self, rng: &mut R, s: usize, a: usize) -> usize {
        pick(&self.cum[a][s], rng.gen())
    }
}

/// First index whose cumulative weight exceeds `u`; the last index with
/// positive weight absorbs rounding.
fn pick(cum: &[f64], u: f64) -> usize {
    let total = *cum.last().expect("non-empty");
    let u = u * total;
    match cum.iter().position(|&c| u < c) {
        Some(i) => i,
        None => {
            let mut i = cum.len() - 1;
            while i > 0 && cum[i] == cum[i - 1] {
                i -= 1;
            }
            i
        }
    }
}

fn sample_probs<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let mut acc = 0.0;
    let cum: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    pick(&cum, rng.gen())
}

/// Per-time estimates for an elementary link, times `1..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElemSimResult {
    /// `dist[t-1][s]`, the empirical distribution of the state at time `t`.
    pub dist: Vec<Vec<f64>>,
    pub ftilde: Vec<Estimate>,
    pub x: Vec<Estimate>,
}

impl ElemSimResult {
    pub fn distribution_at(&self, t: usize) -> Result<ProbVector> {
        let row = self
            .dist
            .get(t.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidInput(format!("time {t} outside the simulated horizon")))?;
        ProbVector::new(row.clone())
    }
}

/// Simulates the elementary link under `policy` from the model's initial
/// distribution for `cfg.horizon` steps.
pub fn simulate_elem(model: &ElemLinkModel, policy: &Policy, cfg: &SimConfig) -> Result<ElemSimResult> {
    if let Some(h) = policy.horizon() {
        if h + 1 < cfg.horizon {
            return Err(Error::InvalidInput(format!(
                "policy defines {h} decisions, horizon {} needs {}",
                cfg.horizon,
                cfg.horizon - 1
            )));
        }
    }
    let mdp = build_mdp(model);
    let n = mdp.n_states();
    let sampler = Sampler::new(&mdp);
    let init = model.initial();
    let horizon = cfg.horizon;
    let chunks: Vec<Result<Vec<Vec<u64>>>> = cfg.run_chunks(|rng, trials| {
        let mut counts = vec![vec![0u64; n]; horizon];
        let mut history = Vec::with_capacity(2 * horizon);
        for _ in 0..trials {
            let mut s = sample_probs(init.entries(), rng);
            history.clear();
            history.push(s);
            counts[0][s] += 1;
            for t in 1..horizon {
                let a = match policy {
                    Policy::HistoryDependent(hp) => {
                        let row = hp.get(&history).ok_or_else(|| {
                            Error::InvalidInput(format!("history policy does not cover {history:?}"))
                        })?;
                        sample_probs(row, rng)
                    }
                    _ => sample_probs(policy.rule_at(t).expect("horizon checked").action_probs(s), rng),
                };
                s = sampler.step(rng, s, a);
                history.push(a);
                history.push(s);
                counts[t][s] += 1;
            }
        }
        Ok(counts)
    });
    let mut counts = vec![vec![0u64; n]; horizon];
    for c in chunks {
        for (acc, row) in counts.iter_mut().zip(c?) {
            for (a, b) in acc.iter_mut().zip(row) {
                *a += b;
            }
        }
    }
    let total = cfg.trials as f64;
    let f = model.f();
    let mut dist = Vec::with_capacity(horizon);
    let mut ftilde = Vec::with_capacity(horizon);
    let mut x = Vec::with_capacity(horizon);
    for row in &counts {
        let d: Vec<f64> = row.iter().map(|&c| c as f64 / total).collect();
        let m1: f64 = d.iter().zip(f).map(|(p, v)| p * v).sum();
        let m2: f64 = d.iter().zip(f).map(|(p, v)| p * v * v).sum();
        ftilde.push(moment_estimate(m1, m2, cfg.trials));
        let active = 1.0 - d[0];
        x.push(moment_estimate(active, active, cfg.trials));
        dist.push(d);
    }
    Ok(ElemSimResult { dist, ftilde, x })
}

fn moment_estimate(m1: f64, m2: f64, n: usize) -> Estimate {
    let var = (m2 - m1 * m1).max(0.0) * n as f64 / (n.max(2) - 1) as f64;
    Estimate { mean: m1, stderr: (var / n as f64).sqrt(), n }
}

/// Samples from an absorbing chain: steps until absorption and the value of
/// `f` at the absorbing state reached.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionSamples {
    pub waiting_times: Vec<usize>,
    pub f_at_absorption: Vec<f64>,
    /// Trials still transient after `cfg.horizon` steps; not included above.
    pub unabsorbed: usize,
}

impl AbsorptionSamples {
    pub fn waiting_estimate(&self) -> Estimate {
        let w: Vec<f64> = self.waiting_times.iter().map(|&t| t as f64).collect();
        Estimate::from_samples(&w)
    }

    pub fn value_estimate(&self) -> Estimate {
        Estimate::from_samples(&self.f_at_absorption)
    }
}

/// Simulates the two-link MDP under the stationary rule `d`, starting from
/// the model's initial transient distribution. The waiting time counts the
/// time steps spent before reaching an absorbing state, the first one
/// included.
pub fn simulate_two_link(model: &TwoLinkModel, d: &DecisionFunction, cfg: &SimConfig) -> Result<AbsorptionSamples> {
    let mdp = build_two_link_mdp(model);
    let mut init = model.initial_transient().into_vec();
    init.resize(mdp.n_states(), 0.0);
    simulate_absorbing(&mdp, d, &init, model.f(), cfg)
}

/// Absorption samples for any MDP under a stationary rule; `init` is a
/// distribution over all states and `f` a value per state.
pub fn simulate_absorbing(
    mdp: &Mdp,
    d: &DecisionFunction,
    init: &[f64],
    f: &[f64],
    cfg: &SimConfig,
) -> Result<AbsorptionSamples> {
    let n = mdp.n_states();
    if d.n_states() != n || init.len() != n || f.len() != n {
        return Err(Error::DimensionMismatch("decision, initial vector and f must cover all states".into()));
    }
    let absorbing = crate::simplex_core::absorbing_states(mdp);
    let is_abs: Vec<bool> = (0..n).map(|s| absorbing.contains(&s)).collect();
    let sampler = Sampler::new(mdp);
    let chunks = cfg.run_chunks(|rng, trials| {
        let mut out = AbsorptionSamples { waiting_times: Vec::new(), f_at_absorption: Vec::new(), unabsorbed: 0 };
        for _ in 0..trials {
            let mut s = sample_probs(init, rng);
            let mut t = 0;
            while !is_abs[s] && t < cfg.horizon {
                let a = sample_probs(d.action_probs(s), rng);
                s = sampler.step(rng, s, a);
                t += 1;
            }
            if is_abs[s] {
                out.waiting_times.push(t);
                out.f_at_absorption.push(f[s]);
            } else {
                out.unabsorbed += 1;
            }
        }
        out
    });
    Ok(merge_absorption(chunks))
}

fn merge_absorption(chunks: Vec<AbsorptionSamples>) -> AbsorptionSamples {
    let mut all = AbsorptionSamples { waiting_times: Vec::new(), f_at_absorption: Vec::new(), unabsorbed: 0 };
    for c in chunks {
        all.waiting_times.extend(c.waiting_times);
        all.f_at_absorption.extend(c.f_at_absorption);
        all.unabsorbed += c.unabsorbed;
    }
    all
}

/// Waiting-time samples for `m` never-discarded links requested at
/// `t_req`: link generation runs from time 1, each inactive link
/// succeeding with probability `p` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitingSamples {
    pub samples: Vec<usize>,
    /// Trials in which the links were not all active by `t_req + horizon`.
    pub unfinished: usize,
}

impl WaitingSamples {
    pub fn estimate(&self) -> Estimate {
        let w: Vec<f64> = self.samples.iter().map(|&t| t as f64).collect();
        Estimate::from_samples(&w)
    }
}

pub fn simulate_collective(m: usize, p: f64, t_req: usize, cfg: &SimConfig) -> Result<WaitingSamples> {
    if m == 0 {
        return Err(Error::InvalidInput("need at least one link".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(format!("success probability {p}")));
    }
    let chunks = cfg.run_chunks(|rng, trials| {
        let mut samples = Vec::with_capacity(trials);
        let mut unfinished = 0;
        for _ in 0..trials {
            let mut inactive = m;
            let mut done = None;
            for time in 1..=t_req + cfg.horizon {
                let fresh = (0..inactive).filter(|_| rng.gen::<f64>() < p).count();
                inactive -= fresh;
                if inactive == 0 && time > t_req {
                    done = Some(time - t_req);
                    break;
                }
            }
            match done {
                Some(w) => samples.push(w),
                None => unfinished += 1,
            }
        }
        (samples, unfinished)
    });
    let mut out = WaitingSamples { samples: Vec::new(), unfinished: 0 };
    for (s, u) in chunks {
        out.samples.extend(s);
        out.unfinished += u;
    }
    Ok(out)
}

/// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elemlink::{cutoff_decision, steady_state_closed_form};
    use crate::twolink::{self, analytic_symmetric_waiting_time, evaluate_policy};
    use crate::waiting::collective_expected_infty;

    #[test]
    fn deterministic_link_is_always_active() {
        let model = ElemLinkModel::from_active_values(1.0, &[1.0]).unwrap();
        let policy = Policy::Stationary(cutoff_decision(0, Some(0)).unwrap());
        let r = simulate_elem(&model, &policy, &SimConfig::new(1, 1000, 10).unwrap()).unwrap();
        assert!(r.x.iter().all(|e| e.mean == 1.0));
    }

    #[test]
    fn never_discard_activity_matches_closed_form() {
        let model = ElemLinkModel::from_active_values(0.5, &[1.0; 5]).unwrap();
        let policy = Policy::Stationary(cutoff_decision(4, None).unwrap());
        let r = simulate_elem(&model, &policy, &SimConfig::new(7, 100_000, 4).unwrap()).unwrap();
        assert!(r.x[2].consistent_with(0.875, 4.0), "{:?}", r.x[2]);
    }

    #[test]
    fn distribution_approaches_steady_state() {
        let p = 0.3;
        let model = ElemLinkModel::from_active_values(p, &[1.0, 0.9, 0.8, 0.7]).unwrap();
        let d = cutoff_decision(3, Some(2)).unwrap();
        let (steady, _) = steady_state_closed_form(&model, &d).unwrap();
        let r = simulate_elem(&model, &Policy::Stationary(d), &SimConfig::new(99, 100_000, 50).unwrap()).unwrap();
        let emp = r.distribution_at(50).unwrap();
        let tv: f64 = emp.entries().iter().zip(steady.entries()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn same_seed_same_output() {
        let model = ElemLinkModel::from_active_values(0.4, &[1.0, 0.5]).unwrap();
        let policy = Policy::Stationary(cutoff_decision(1, Some(1)).unwrap());
        let cfg = SimConfig::new(5, 20_000, 12).unwrap();
        let a = simulate_elem(&model, &policy, &cfg).unwrap();
        let b = simulate_elem(&model, &policy, &cfg).unwrap();
        assert_eq!(a, b);
        let s1 = simulate_collective(3, 0.2, 1, &cfg.serial()).unwrap();
        let s2 = simulate_collective(3, 0.2, 1, &cfg.serial()).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn two_link_trivial_and_symmetric_cases() {
        let model = TwoLinkModel::symmetric(1.0, 1.0, 2).unwrap();
        let d = twolink::cutoff_decision(&model, 2, 2).unwrap();
        let s = simulate_two_link(&model, &d, &SimConfig::new(3, 1000, 100).unwrap()).unwrap();
        assert!(s.waiting_times.iter().all(|&t| t == 1));

        let model = TwoLinkModel::symmetric(0.5, 0.5, 0).unwrap();
        let d = twolink::cutoff_decision(&model, 0, 0).unwrap();
        let s = simulate_two_link(&model, &d, &SimConfig::new(4, 100_000, 10_000).unwrap()).unwrap();
        assert_eq!(s.unabsorbed, 0);
        let analytic = analytic_symmetric_waiting_time(0.5, 0.5, 0).unwrap();
        assert!((analytic - 8.0).abs() < 1e-12);
        assert!(s.waiting_estimate().consistent_with(analytic, 4.0));
    }

    #[test]
    fn two_link_samples_match_policy_evaluation() {
        let model = TwoLinkModel::from_fn(0.4, 0.6, 0.7, 3, 2, |a, b| (-0.1 * (a + b) as f64).exp()).unwrap();
        let d = twolink::cutoff_decision(&model, 2, 1).unwrap();
        let (time, value) = evaluate_policy(&model, &d).unwrap();
        let s = simulate_two_link(&model, &d, &SimConfig::new(12, 100_000, 100_000).unwrap()).unwrap();
        assert_eq!(s.unabsorbed, 0);
        assert!(s.waiting_estimate().consistent_with(time, 4.0));
        assert!(s.value_estimate().consistent_with(value, 4.0));
    }

    #[test]
    fn collective_means_match_closed_form() {
        let cfg = SimConfig::new(2024, 100_000, 100_000).unwrap();
        for (m, p, t_req) in [(1, 0.5, 0), (2, 0.5, 0), (3, 0.2, 2), (4, 0.7, 1)] {
            let s = simulate_collective(m, p, t_req, &cfg).unwrap();
            assert_eq!(s.unfinished, 0);
            let e = collective_expected_infty(m, p, t_req).unwrap();
            assert!(s.estimate().consistent_with(e, 4.0), "m={m} p={p}: {:?} vs {e}", s.estimate());
        }
        let late = simulate_collective(2, 0.5, 200, &cfg).unwrap();
        assert!((late.estimate().mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_serial_paths_are_indistinguishable() {
        let cfg = SimConfig::new(77, 50_000, 10_000).unwrap();
        let par = simulate_collective(3, 0.3, 0, &cfg).unwrap();
        let ser = simulate_collective(3, 0.3, 0, &cfg.serial()).unwrap();
        let a: Vec<f64> = par.samples.iter().map(|&x| x as f64).collect();
        let b: Vec<f64> = ser.samples.iter().map(|&x| x as f64).collect();
        let (_, pval) = ks_two_sample(&a, &b);
        assert!(pval > 0.01, "KS p-value {pval}");
    }

    #[test]
    fn ks_detects_a_shift() {
        let a: Vec<f64> = (0..2000).map(|k| k as f64 / 2000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.2).abs() < 1e-3 && p < 1e-6);
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
    }
}
