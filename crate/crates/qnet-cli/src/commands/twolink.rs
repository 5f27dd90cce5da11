//! Two elementary links joined by entanglement swapping.
//!
//! * `lp-fidelity`: `m1, m2, p_00, p_01, p_10, p_11, p_swap, value`, the
//!   optimal stationary rule on states without an end-to-end link.
//! * `lp-waiting`: `p1, p2, q, m1_star, m2_star, lp_waiting` on a `p × q`
//!   grid, with `analytic, abs_diff` appended by `--compare-analytic`.
//! * `analytic`: `p, q, t_star, waiting` from the closed form for equal links.
//! * `evaluate`: `p1, p2, q, t1_star, t2_star, waiting, value` for the
//!   memory-cutoff policy.

use clap::{Args, Subcommand};
use qnet::twolink::{
    analytic_symmetric_waiting_time, cutoff_decision, evaluate_policy, lp_optimal_value_with,
    lp_optimal_waiting_time_with, SWAP,
};
use serde::{Deserialize, Serialize};

use super::{counts_or, grid_rows, need, table, Context, TwoLinkModelArgs, TwoLinkPoint};
use crate::error::{config_err, CliResult};
use crate::grid::NumList;
use crate::output::{Cell, Table};

#[derive(Subcommand, Debug, Clone)]
pub enum TwoLinkCommand {
    /// Optimal expected fidelity at the end-to-end link.
    LpFidelity(LpFidelityArgs),
    /// Optimal expected waiting time for the end-to-end link.
    #[command(alias = "waiting")]
    LpWaiting(LpWaitingArgs),
    /// Closed-form waiting time for equal links with a memory cutoff.
    Analytic(AnalyticArgs),
    /// Waiting time and fidelity of a memory-cutoff policy.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct LpFidelityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: TwoLinkModelArgs,
    /// Put every action's exit block in the program, not only the swap's.
    #[arg(long)]
    #[serde(default)]
    pub generic: bool,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct LpWaitingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: TwoLinkModelArgs,
    /// Append the closed form for equal links with cutoff t*.
    #[arg(long)]
    #[serde(default)]
    pub compare_analytic: bool,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalyticArgs {
    /// Success probability of both links.
    #[arg(long)]
    pub p: Option<NumList>,
    /// Swap success probability.
    #[arg(long)]
    pub q: Option<NumList>,
    /// Cutoff of both links.
    #[arg(long)]
    pub tstar: Option<NumList>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: TwoLinkModelArgs,
    /// Cutoff of the first link; `--tstar`, else its storage bound, when absent.
    #[arg(long)]
    pub t1star: Option<usize>,
    /// Cutoff of the second link; `--tstar`, else its storage bound, when absent.
    #[arg(long)]
    pub t2star: Option<usize>,
}

pub fn lp_fidelity(a: &LpFidelityArgs, ctx: &Context) -> CliResult<Table> {
    let pt = a.model.single_model()?;
    let exits: Vec<usize> = if a.generic { (0..5).collect() } else { vec![SWAP] };
    let (value, d) = lp_optimal_value_with(&pt.model, &exits, &ctx.tol)?;
    let mut rows = Vec::new();
    for s in 0..pt.model.n_states() {
        let (x, m1, m2) = pt.model.state(s);
        if x != 0 {
            continue;
        }
        let mut row = vec![Cell::Int(m1), Cell::Int(m2)];
        row.extend(d.action_probs(s).iter().map(|&v| Cell::Num(v)));
        row.push(value.into());
        rows.push(row);
    }
    Ok(table(&["m1", "m2", "p_00", "p_01", "p_10", "p_11", "p_swap", "value"], rows))
}

fn analytic_for(pt: &TwoLinkPoint, t_star: usize) -> CliResult<f64> {
    let m = &pt.model;
    if pt.p1 != pt.p2 || m.m1_star() != m.m2_star() {
        return Err(config_err("--compare-analytic needs equal links"));
    }
    if t_star > m.m1_star() {
        return Err(config_err(format!("cutoff {t_star} exceeds m* = {}", m.m1_star())));
    }
    Ok(analytic_symmetric_waiting_time(pt.p1, pt.q, t_star)?)
}

pub fn lp_waiting(a: &LpWaitingArgs, ctx: &Context) -> CliResult<Table> {
    let points = a.model.points()?;
    let t_star = a.model.tstar.or(a.model.mstar);
    if a.compare_analytic && t_star.is_none() {
        return Err(config_err("--compare-analytic needs --tstar or --mstar"));
    }
    let rows = grid_rows(&points, |pt| {
        let (w, _) = lp_optimal_waiting_time_with(&pt.model, &ctx.tol)?;
        let mut row = vec![
            pt.p1.into(),
            pt.p2.into(),
            pt.q.into(),
            pt.model.m1_star().into(),
            pt.model.m2_star().into(),
            w.into(),
        ];
        if a.compare_analytic {
            let an = analytic_for(pt, t_star.expect("checked above"))?;
            row.push(an.into());
            row.push((w - an).abs().into());
        }
        Ok(vec![row])
    })?;
    let mut cols = vec!["p1", "p2", "q", "m1_star", "m2_star", "lp_waiting"];
    if a.compare_analytic {
        cols.extend(["analytic", "abs_diff"]);
    }
    Ok(table(&cols, rows))
}

pub fn analytic(a: &AnalyticArgs, _ctx: &Context) -> CliResult<Table> {
    let ps = need(&a.p, "p")?.0;
    let qs = need(&a.q, "q")?.0;
    let ts = counts_or(&a.tstar, "tstar", &[])?;
    if ts.is_empty() {
        return Err(config_err("missing parameter --tstar"));
    }
    let mut rows = Vec::new();
    for &p in &ps {
        for &q in &qs {
            for &t in &ts {
                rows.push(vec![p.into(), q.into(), t.into(), analytic_symmetric_waiting_time(p, q, t)?.into()]);
            }
        }
    }
    Ok(table(&["p", "q", "t_star", "waiting"], rows))
}

pub fn evaluate(a: &EvaluateArgs, _ctx: &Context) -> CliResult<Table> {
    let points = a.model.points()?;
    let (t1, t2) = a.model.cutoffs(a.t1star, a.t2star)?;
    let rows = grid_rows(&points, |pt| {
        let d = cutoff_decision(&pt.model, t1, t2)?;
        let (w, v) = evaluate_policy(&pt.model, &d)?;
        Ok(vec![vec![pt.p1.into(), pt.p2.into(), pt.q.into(), t1.into(), t2.into(), w.into(), v.into()]])
    })?;
    Ok(table(&["p1", "p2", "q", "t1_star", "t2_star", "waiting", "value"], rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(p: &str, q: &str, t: usize) -> TwoLinkModelArgs {
        TwoLinkModelArgs {
            symmetric: true,
            p: Some(p.parse().unwrap()),
            q: Some(q.parse().unwrap()),
            tstar: Some(t),
            ..Default::default()
        }
    }

    #[test]
    fn waiting_matches_closed_form() {
        let a = LpWaitingArgs { model: sym("0.5", "0.5", 5), compare_analytic: true };
        let t = lp_waiting(&a, &Context::default()).unwrap();
        assert_eq!(t.columns.len(), 8);
        let Cell::Num(d) = t.rows[0][7] else { panic!() };
        assert!(d <= 1e-6, "{d}");
    }

    #[test]
    fn evaluate_never_discard_matches_lp() {
        let a = EvaluateArgs { model: sym("0.3", "0.7", 3), t1star: None, t2star: None };
        let e = evaluate(&a, &Context::default()).unwrap();
        let w = LpWaitingArgs { model: sym("0.3", "0.7", 3), compare_analytic: true };
        let l = lp_waiting(&w, &Context::default()).unwrap();
        let (Cell::Num(x), Cell::Num(y)) = (&e.rows[0][5], &l.rows[0][6]) else { panic!() };
        assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn fidelity_rows_cover_transient_states() {
        let mut m = sym("0.6", "0.9", 2);
        m.f = Some("exp:0.1".into());
        let t = lp_fidelity(&LpFidelityArgs { model: m.clone(), generic: false }, &Context::default()).unwrap();
        assert_eq!(t.rows.len(), 16);
        let g = lp_fidelity(&LpFidelityArgs { model: m, generic: true }, &Context::default()).unwrap();
        let (Cell::Num(x), Cell::Num(y)) = (&t.rows[0][7], &g.rows[0][7]) else { panic!() };
        assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn analytic_grid() {
        let a = AnalyticArgs {
            p: Some("0.1:1:0.1".parse().unwrap()),
            q: Some("0.2,0.5,0.8,1".parse().unwrap()),
            tstar: Some("5".parse().unwrap()),
        };
        assert_eq!(analytic(&a, &Context::default()).unwrap().rows.len(), 40);
    }
}
