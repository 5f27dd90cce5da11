//! Waiting times for elementary, collective and virtual links.
//!
//! A request arrives at time `t_req ≥ 0` and the waiting time `W` counts the
//! steps after it, so `W = t` means the links are first (simultaneously)
//! active at time `t_req + t`, and `W ≥ 1`.

use nalgebra::DVector;

use crate::elemlink::{build_mdp, ElemLinkModel};
use crate::simplex_core::{evolve, policy_matrix, Policy};
use crate::{Error, Result};

/// The adaptive sums stop once the estimated remaining tail is below this.
pub const TAIL_TOL: f64 = 1e-12;

/// Parameters of a waiting-time question for `m` identical links with
/// success probability `p`, joined with probability `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingQuery {
    pub t_req: usize,
    pub m: usize,
    pub p: f64,
    pub q: f64,
}

impl WaitingQuery {
    pub fn new(t_req: usize, m: usize, p: f64, q: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("need at least one link".into()));
        }
        check_unit(p, "link success probability")?;
        check_unit(q, "joining success probability")?;
        Ok(Self { t_req, m, p, q })
    }

    pub fn collective_expected(&self) -> Result<f64> {
        collective_expected_infty(self.m, self.p, self.t_req)
    }

    pub fn virtual_expected(&self) -> Result<f64> {
        virtual_expected(self.collective_expected()?, self.q)
    }
}

fn check_unit(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidProbability(format!("{what} {x} outside (0,1]")));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `p_k = 1 − (1−p)^k`, the probability that a never-discarded link is
/// active at time `k`.
fn active_by(p: f64, k: usize) -> f64 {
    -((k as f64) * (-p).ln_1p()).exp_m1()
}

/// `Pr[W = t]` for `m` links under the never-discard policy.
pub fn collective_pmf_infty(m: usize, p: f64, t_req: usize, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidInput("waiting times start at 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(format!("success probability {p}")));
    }
    let mi = m as i32;
    let inactive = 1.0 - active_by(p, t_req + 1);
    if t == 1 {
        return Ok((1.0 - inactive).powi(mi));
    }
    let q = 1.0 - p;
    let upper = 1.0 - inactive * q.powi(t as i32 - 1);
    let lower = 1.0 - inactive * q.powi(t as i32 - 2);
    Ok(upper.powi(mi) - lower.powi(mi))
}

/// `E[W]` for `m` links under the never-discard policy:
/// `Σ_k C(m,k)(−1)^{k+1}(1 + (1−p_k)^{t_req+1}/p_k)`.
///
/// The alternating sum loses precision for large `m`; use
/// [`collective_expected_from_pmf`] there.
pub fn collective_expected_infty(m: usize, p: f64, t_req: usize) -> Result<f64> {
    check_unit(p, "success probability")?;
    if m == 0 {
        return Err(Error::InvalidInput("need at least one link".into()));
    }
    let mut total = 0.0;
    for k in 1..=m {
        let pk = active_by(p, k);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * binomial(m, k) * (1.0 + (1.0 - pk).powi(t_req as i32 + 1) / pk);
    }
    Ok(total)
}

/// `E[W] = Σ_{t≥0} Pr[W > t]` accumulated from the pmf until the tail is
/// below [`TAIL_TOL`].
pub fn collective_expected_from_pmf(m: usize, p: f64, t_req: usize) -> Result<f64> {
    check_unit(p, "success probability")?;
    let mut survival = 1.0;
    let mut mean = 0.0;
    let mut t = 1;
    loop {
        mean += survival;
        survival -= collective_pmf_infty(m, p, t_req, t)?;
        survival = survival.max(0.0);
        // Pr[W > t] ≤ m (1−p)^{t}, a geometric tail
        let envelope = m as f64 * (1.0 - p).powi(t as i32);
        if envelope.min(survival) / p < TAIL_TOL || t > 10_000_000 {
            return Ok(mean + survival);
        }
        t += 1;
    }
}

/// Expected waiting time of a virtual link whose elementary links take
/// `collective` steps on average and whose joining succeeds with
/// probability `q`, independently: `E[W] · (1/q)`.
pub fn virtual_expected(collective: f64, q: f64) -> Result<f64> {
    check_unit(q, "joining success probability")?;
    Ok(collective / q)
}

/// A truncated expectation with what remains of the tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingEstimate {
    pub mean: f64,
    /// `Pr[W > n]` after the last step summed.
    pub tail_mass: f64,
    /// Estimate of the missing `Σ_{t>n} t Pr[W=t]` from the observed
    /// geometric decay of `Pr[W > t]`.
    pub tail_bound: f64,
    pub steps: usize,
}

/// `E[W]` for one elementary link under a Markov `policy`, by propagating
/// the not-yet-active part of the distribution from time `t_req + 1`.
/// Stops when the tail estimate is below [`TAIL_TOL`] or after `horizon`
/// steps.
pub fn elem_expected_general(
    model: &ElemLinkModel,
    policy: &Policy,
    t_req: usize,
    horizon: usize,
) -> Result<WaitingEstimate> {
    if matches!(policy, Policy::HistoryDependent(_)) {
        return Err(Error::InvalidInput("waiting times need a Markov policy".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least one step".into()));
    }
    let mdp = build_mdp(model);
    let start = evolve(&mdp, policy, &model.initial(), t_req + 1)?;
    let mut v = DVector::from_column_slice(start.entries());
    let mut mean = 0.0;
    let mut prev_surv = 1.0;
    for k in 1..=horizon {
        let hit = 1.0 - v[0] - (1.0 - v.sum());
        mean += k as f64 * hit.max(0.0);
        let surv = v[0];
        v.fill(0.0);
        v[0] = surv;
        let ratio = if prev_surv > 0.0 { surv / prev_surv } else { 0.0 };
        prev_surv = surv;
        let tail_bound = if surv == 0.0 {
            0.0
        } else if ratio < 1.0 {
            surv * (k as f64 + 1.0 / (1.0 - ratio))
        } else {
            f64::INFINITY
        };
        if tail_bound < TAIL_TOL || k == horizon {
            if !tail_bound.is_finite() && k == horizon {
                return Err(Error::NonConvergence(format!(
                    "link still inactive with probability {surv} after {k} steps and not decaying"
                )));
            }
            return Ok(WaitingEstimate { mean, tail_mass: surv, tail_bound, steps: k });
        }
        let time = t_req + k;
        let d = policy.rule_at(time).ok_or_else(|| {
            Error::InvalidInput(format!("policy defines no decision at time {time}"))
        })?;
        v = policy_matrix(&mdp, d)?.matrix() * v;
    }
    unreachable!("loop returns at k == horizon")
}
