//! The acceptance checks run by `--selftest`. Each check draws its random
//! cases from its own ChaCha8 stream of the run seed, so the report is a
//! pure function of the seed. Timings are kept apart from the report.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use qnet::elemlink::{
    build_mdp, exhaustive_markov_search, lp_optimal_steady, optimal_backward, optimal_backward_markov,
    steady_state_closed_form, ElemLinkModel,
};
use qnet::mc_oracle::{simulate_collective, SimConfig};
use qnet::qstate::{
    bbpssw_instrument, bell, chain_product, distill_bbpssw, ghz, ghz_swap_channel, ghz_swap_fidelity, graph_dist_channel,
    graph_dist_fidelity, graph_state, random_density, swap_chain_channel, swap_fidelity, BellDiagCoeffs, C,
};
use qnet::satlink::{
    entangled, forward_cutoff, heralded_link, heralded_state_by_dilation, key_rate_bb84, key_rate_di, key_rate_threshold,
    memory_f, Protocol, SatSourceParams,
};
use qnet::simplex_core::{policy_matrix, stationary_distribution, DecisionFunction, STATIONARY_TOL};
use qnet::twolink::{analytic_symmetric_waiting_time, lp_optimal_waiting_time, TwoLinkModel};
use qnet::waiting::{collective_expected_from_pmf, collective_expected_infty};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::output::{Cell, Table};

/// Number of checks run by the selftest.
pub const CRITERIA: u8 = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    /// Individual comparisons made.
    pub checks: usize,
    /// Largest deviation seen, in the units of `tolerance`.
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct Timed {
    pub outcome: Outcome,
    pub elapsed: Duration,
}

/// Wall-clock budget per check in seconds, where one is set.
pub fn time_limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(5.0),
        2 => Some(10.0),
        3 => Some(60.0),
        4 => Some(30.0),
        _ => None,
    }
}

fn rng_for(seed: u64, id: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Accumulates comparisons for one check.
struct Tally {
    checks: usize,
    max_error: f64,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self { checks: 0, max_error: 0.0, failures: Vec::new() }
    }

    fn compare(&mut self, got: f64, want: f64, tol: f64, what: impl FnOnce() -> String) {
        self.checks += 1;
        let e = (got - want).abs();
        if e.is_nan() {
            self.max_error = f64::NAN;
        } else if !self.max_error.is_nan() {
            self.max_error = self.max_error.max(e);
        }
        if !(e <= tol) {
            self.fail(format!("{}: {got} vs {want}", what()));
        }
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.fail(what());
        }
    }

    fn error(&mut self, what: String) {
        self.checks += 1;
        self.fail(what);
    }

    fn fail(&mut self, msg: String) {
        if self.failures.len() < 3 {
            self.failures.push(msg);
        } else if self.failures.len() == 3 {
            self.failures.push("...".into());
        }
    }

    fn finish(self, id: u8, name: &'static str, tolerance: f64) -> Outcome {
        let pass = self.failures.is_empty();
        Outcome { id, name, checks: self.checks, max_error: self.max_error, tolerance, pass, note: self.failures.join("; ") }
    }
}

fn random_decision<R: Rng>(n_states: usize, rng: &mut R) -> DecisionFunction {
    let rows = (0..n_states)
        .map(|_| {
            let r: f64 = rng.gen_range(0.02..0.98);
            vec![1.0 - r, r]
        })
        .collect();
    DecisionFunction::new(rows).expect("rows sum to one")
}

/// Closed-form steady state against the stationary vector of `P^d`.
pub fn steady_state_vs_stationary(seed: u64) -> Outcome {
    const TOL: f64 = 1e-9;
    let mut rng = rng_for(seed, 1);
    let mut t = Tally::new();
    for case in 0..200 {
        let p = rng.gen_range(0.05..1.0);
        let m_star = rng.gen_range(0..=8);
        let model = ElemLinkModel::from_active_values(p, &vec![1.0; m_star + 1]).expect("valid model");
        let d = random_decision(model.n_states(), &mut rng);
        let closed = steady_state_closed_form(&model, &d);
        let numeric = policy_matrix(&build_mdp(&model), &d).and_then(|pm| stationary_distribution(&pm, STATIONARY_TOL));
        match (closed, numeric) {
            (Ok((c, _)), Ok(s)) => t.compare(c.max_abs_diff(&s), 0.0, TOL, || format!("case {case}")),
            (Err(e), _) | (_, Err(e)) => t.error(format!("case {case}: {e}")),
        }
    }
    t.finish(1, "steady_state_closed_form", TOL)
}

/// LP optimum of the steady-state program against the best memory cutoff
/// for non-increasing `f`.
pub fn lp_vs_best_cutoff(seed: u64) -> Outcome {
    const TOL: f64 = 1e-7;
    let mut rng = rng_for(seed, 2);
    let mut t = Tally::new();
    for case in 0..100 {
        let p: f64 = rng.gen_range(0.05..1.0);
        let m_star = rng.gen_range(0..=8);
        let mut f: Vec<f64> = (0..=m_star).map(|_| rng.gen::<f64>()).collect();
        f.sort_by(|a, b| b.total_cmp(a));
        let direct = (0..=m_star)
            .map(|ts| p / (1.0 + ts as f64 * p) * f[..=ts].iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let model = ElemLinkModel::from_active_values(p, &f).expect("valid model");
        match lp_optimal_steady(&model) {
            Ok((v, _)) => t.compare(v, direct, TOL, || format!("case {case}")),
            Err(e) => t.error(format!("case {case}: {e}")),
        }
    }
    t.finish(2, "lp_steady_vs_cutoff_scan", TOL)
}

/// Minimum two-link waiting time against the closed form for equal links
/// with cutoff 5, on the `p × q` grid.
pub fn two_link_waiting_grid(_seed: u64) -> Outcome {
    const TOL: f64 = 1e-6;
    let grid: Vec<(f64, f64)> = (1..=10)
        .flat_map(|k| [0.2, 0.5, 0.8, 1.0].map(|q| (k as f64 / 10.0, q)))
        .collect();
    let results: Vec<_> = grid
        .par_iter()
        .map(|&(p, q)| {
            let lp = TwoLinkModel::symmetric(p, q, 5).and_then(|m| lp_optimal_waiting_time(&m)).map(|r| r.0);
            (p, q, lp, analytic_symmetric_waiting_time(p, q, 5))
        })
        .collect();
    let mut t = Tally::new();
    for (p, q, lp, an) in results {
        match (lp, an) {
            (Ok(a), Ok(b)) => t.compare(a, b, TOL, || format!("p={p} q={q}")),
            (Err(e), _) | (_, Err(e)) => t.error(format!("p={p} q={q}: {e}")),
        }
    }
    t.finish(3, "two_link_waiting_lp_vs_closed_form", TOL)
}

fn random_graph<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<u8>> {
    let mut adj = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let e = rng.gen_bool(0.5) as u8;
            adj[i][j] = e;
            adj[j][i] = e;
        }
    }
    adj
}

/// Closed-form fidelities of swapping, GHZ swapping and graph-state
/// distribution against the channels applied to random inputs.
pub fn joining_fidelities(seed: u64) -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = rng_for(seed, 4);
    let mut t = Tally::new();
    let phi = bell(2, 0, 0).expect("qubit Bell state");
    for case in 0..50 {
        let n = 1 + case % 2;
        let links: Vec<_> = (0..=n).map(|_| random_density(&[2, 2], &mut rng)).collect();
        let r = (|| -> qnet::Result<(f64, f64)> {
            let tables: Vec<_> = links.iter().map(|l| l.bell_overlaps()).collect::<qnet::Result<_>>()?;
            let brute = swap_chain_channel(&chain_product(&links)?, n, 2)?.fidelity_to_pure(&phi)?;
            Ok((swap_fidelity(&tables)?, brute))
        })();
        match r {
            Ok((a, b)) => t.compare(a, b, TOL, || format!("swap case {case}")),
            Err(e) => t.error(format!("swap case {case}: {e}")),
        }
    }
    for case in 0..50 {
        let n = 1 + case % 2;
        let links: Vec<_> = (0..=n).map(|_| random_density(&[2, 2], &mut rng)).collect();
        let r = (|| -> qnet::Result<(f64, f64)> {
            let tables: Vec<_> = links.iter().map(|l| l.bell_overlaps()).collect::<qnet::Result<_>>()?;
            let brute = ghz_swap_channel(&chain_product(&links)?, n)?.fidelity_to_pure(&ghz(n + 2)?)?;
            Ok((ghz_swap_fidelity(&tables)?, brute))
        })();
        match r {
            Ok((a, b)) => t.compare(a, b, TOL, || format!("GHZ case {case}")),
            Err(e) => t.error(format!("GHZ case {case}: {e}")),
        }
    }
    for case in 0..50 {
        let n = 2 + case % 2;
        let adj = random_graph(n, &mut rng);
        let links: Vec<_> = (0..n).map(|_| random_density(&[2, 2], &mut rng)).collect();
        let r = (|| -> qnet::Result<(f64, f64)> {
            let tables: Vec<_> = links.iter().map(|l| l.bell_overlaps()).collect::<qnet::Result<_>>()?;
            let brute = graph_dist_channel(&chain_product(&links)?, &adj)?.fidelity_to_pure(&graph_state(&adj)?)?;
            Ok((graph_dist_fidelity(&tables, &adj)?, brute))
        })();
        match r {
            Ok((a, b)) => t.compare(a, b, TOL, || format!("graph case {case}")),
            Err(e) => t.error(format!("graph case {case}: {e}")),
        }
    }
    t.finish(4, "joining_formulas_vs_channels", TOL)
}

/// BBPSSW success probability and output fidelity against the instrument
/// applied to Werner pairs.
pub fn distillation(seed: u64) -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = rng_for(seed, 5);
    let mut t = Tally::new();
    let phi = bell(2, 0, 0).expect("qubit Bell state");
    for case in 0..20 {
        let (f1, f2) = (rng.gen_range(0.25..1.0), rng.gen_range(0.25..1.0));
        let r = (|| -> qnet::Result<(f64, f64, f64, f64)> {
            let (p, f) = distill_bbpssw(f1, f2)?;
            let r1 = BellDiagCoeffs::werner(f1)?.to_density();
            let r2 = BellDiagCoeffs::werner(f2)?.to_density();
            let (pi, out) = bbpssw_instrument(&r1, &r2)?;
            Ok((p, pi, f, out.fidelity_to_pure(&phi)?))
        })();
        match r {
            Ok((p, pi, f, fi)) => {
                t.compare(p, pi, TOL, || format!("p_succ case {case}"));
                t.compare(f, fi, TOL, || format!("F_out case {case}"));
            }
            Err(e) => t.error(format!("case {case}: {e}")),
        }
    }
    match distill_bbpssw(0.8, 0.8) {
        Ok((p, f)) => t.require((p - 0.768889).abs() <= 5e-7 && (f - 0.838150).abs() <= 5e-7, || {
            format!("(0.8, 0.8) gives ({p}, {f})")
        }),
        Err(e) => t.error(format!("(0.8, 0.8): {e}")),
    }
    t.finish(5, "distillation_formula_vs_instrument", TOL)
}

/// Collective waiting time: closed form against the distribution sum, a
/// Monte Carlo estimate, and `1/p` for one link requested at time 0.
pub fn collective_waiting(seed: u64) -> Outcome {
    const TOL: f64 = 1e-8;
    let mut t = Tally::new();
    for m in 1..=6 {
        for k in 1..=9 {
            let p = k as f64 / 10.0;
            for t_req in [0, 1, 5] {
                match (collective_expected_infty(m, p, t_req), collective_expected_from_pmf(m, p, t_req)) {
                    (Ok(a), Ok(b)) => t.compare(a, b, TOL, || format!("M={m} p={p} t_req={t_req}")),
                    (Err(e), _) | (_, Err(e)) => t.error(format!("M={m} p={p} t_req={t_req}: {e}")),
                }
            }
        }
    }
    for k in 1..=9 {
        let p = k as f64 / 10.0;
        match collective_expected_infty(1, p, 0) {
            Ok(e) => t.require((e - 1.0 / p).abs() <= 2.0 * f64::EPSILON / p, || format!("M=1 p={p}: {e} vs {}", 1.0 / p)),
            Err(e) => t.error(format!("M=1 p={p}: {e}")),
        }
    }
    for (i, &(m, p, t_req)) in [(1, 0.3, 0), (3, 0.5, 1), (6, 0.2, 5), (4, 0.7, 0)].iter().enumerate() {
        let cfg = SimConfig::new(seed.wrapping_add(600 + i as u64), 100_000, 100_000).expect("valid config");
        match (simulate_collective(m, p, t_req, &cfg), collective_expected_infty(m, p, t_req)) {
            (Ok(s), Ok(exact)) => {
                let est = s.estimate();
                t.require(s.unfinished == 0 && est.consistent_with(exact, 4.0), || {
                    format!("MC M={m} p={p} t_req={t_req}: {} ± {} vs {exact}", est.mean, est.stderr)
                })
            }
            (Err(e), _) | (_, Err(e)) => t.error(format!("MC M={m} p={p}: {e}")),
        }
    }
    t.finish(6, "collective_waiting_time", TOL)
}

/// Satellite link: transmitted state against the beamsplitter dilation,
/// the entanglement test, and the forward-recursion cutoff.
pub fn satellite_link(seed: u64) -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = rng_for(seed, 7);
    let mut t = Tally::new();
    for case in 0..10 {
        let (eta1, eta2) = (rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0));
        let src = SatSourceParams::new(rng.gen(), rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5), 1).expect("valid source");
        match (heralded_link(eta1, eta2, &src), heralded_state_by_dilation(eta1, eta2, &src)) {
            (Ok(link), Ok(out)) => {
                let expected = link.coeffs.to_density().matrix() * C::new(link.p, 0.0);
                t.compare((&out - expected).camax(), 0.0, TOL, || format!("dilation case {case}"));
            }
            (Err(e), _) | (_, Err(e)) => t.error(format!("dilation case {case}: {e}")),
        }
    }
    let mut mismatches = 0;
    for _ in 0..1000 {
        let src = SatSourceParams::new(rng.gen(), rng.gen(), rng.gen(), 1).expect("valid source");
        match heralded_link(rng.gen_range(1e-3..1.0), rng.gen_range(1e-3..1.0), &src) {
            Ok(link) => {
                if entangled(&link, src.f_s) != (link.fidelity() > 0.5) {
                    mismatches += 1;
                }
            }
            Err(_) => mismatches += 1,
        }
    }
    t.require(mismatches == 0, || format!("entanglement test disagrees on {mismatches} of 1000 draws"));
    t.require(forward_cutoff(0.6, 100.0) == Some(80), || format!("forward_cutoff(0.6, 100) = {:?}", forward_cutoff(0.6, 100.0)));
    for _ in 0..200 {
        let p = rng.gen_range(0.0..1.0);
        let t_coh = rng.gen_range(1.0..500.0);
        let f0 = memory_f(0, t_coh, 0.5, 0.5);
        let scan = (0..100_000).find(|&m| memory_f(m + 1, t_coh, 0.5, 0.5) <= p * f0);
        let closed = forward_cutoff(p, t_coh);
        t.require(closed == scan, || format!("p={p} t_coh={t_coh}: {closed:?} vs scan {scan:?}"));
    }
    t.finish(7, "satellite_link_model", TOL)
}

/// Backward recursion against exhaustive search over deterministic Markov
/// policies, and the history recursion against the Markov one.
pub fn backward_recursion(seed: u64) -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = rng_for(seed, 8);
    let mut t = Tally::new();
    let draw = |m_star: usize, rng: &mut ChaCha8Rng| {
        let f: Vec<f64> = (0..=m_star).map(|_| rng.gen::<f64>()).collect();
        ElemLinkModel::from_active_values(rng.gen_range(0.05..1.0), &f).expect("valid model")
    };
    for m_star in 0..=2 {
        for horizon in 1..=4 {
            for rep in 0..3 {
                let model = draw(m_star, &mut rng);
                match (optimal_backward(&model, horizon), exhaustive_markov_search(&model, horizon)) {
                    (Ok((a, _)), Ok((b, _))) => t.compare(a, b, TOL, || format!("m*={m_star} t={horizon} #{rep}")),
                    (Err(e), _) | (_, Err(e)) => t.error(format!("m*={m_star} t={horizon}: {e}")),
                }
            }
        }
    }
    for m_star in 0..=3 {
        for horizon in 1..=6 {
            let model = draw(m_star, &mut rng);
            match (optimal_backward(&model, horizon), optimal_backward_markov(&model, horizon)) {
                (Ok((a, _)), Ok((b, _))) => t.compare(a, b, TOL, || format!("history m*={m_star} t={horizon}")),
                (Err(e), _) | (_, Err(e)) => t.error(format!("history m*={m_star} t={horizon}: {e}")),
            }
        }
    }
    t.finish(8, "backward_recursion_vs_exhaustive", TOL)
}

/// Key-rate end points, the BB84 threshold and the threshold ordering.
pub fn key_rates(_seed: u64) -> Outcome {
    const TOL: f64 = 1e-3;
    let mut t = Tally::new();
    t.require(key_rate_bb84(0.0).ok() == Some(1.0), || "K_BB84(0) is not 1".into());
    t.require(key_rate_di(0.0, 2.0 * SQRT_2).ok() == Some(1.0), || "K_DI(0, 2√2) is not 1".into());
    let bb84 = key_rate_threshold(Protocol::Bb84);
    let six = key_rate_threshold(Protocol::SixState);
    let di = key_rate_threshold(Protocol::DeviceIndependent);
    t.compare(bb84, 0.1100, TOL, || "BB84 threshold".into());
    t.require(di < bb84 && bb84 < six, || format!("thresholds DI {di}, BB84 {bb84}, six-state {six} out of order"));
    t.finish(9, "qkd_key_rates", TOL)
}

pub fn criterion(id: u8, seed: u64) -> Outcome {
    match id {
        1 => steady_state_vs_stationary(seed),
        2 => lp_vs_best_cutoff(seed),
        3 => two_link_waiting_grid(seed),
        4 => joining_fidelities(seed),
        5 => distillation(seed),
        6 => collective_waiting(seed),
        7 => satellite_link(seed),
        8 => backward_recursion(seed),
        9 => key_rates(seed),
        _ => panic!("no check numbered {id}"),
    }
}

pub fn run_timed(id: u8, seed: u64) -> Timed {
    let start = Instant::now();
    let outcome = criterion(id, seed);
    Timed { outcome, elapsed: start.elapsed() }
}

pub fn run_all(seed: u64) -> Vec<Timed> {
    (1..=CRITERIA).map(|id| run_timed(id, seed)).collect()
}

/// The report as a table; deterministic for a fixed seed.
pub fn to_table(outcomes: &[Outcome]) -> Table {
    let mut t = Table::new(&["criterion", "name", "checks", "max_error", "tolerance", "pass", "note"]);
    for o in outcomes {
        t.push(vec![
            Cell::Int(o.id as i64),
            o.name.into(),
            o.checks.into(),
            o.max_error.into(),
            o.tolerance.into(),
            o.pass.into(),
            o.note.clone().into(),
        ]);
    }
    t
}
