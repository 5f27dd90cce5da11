//! Single elementary link.
//!
//! * `steady`: `t_star, ftilde, x, fidelity`, the steady-state values of the
//!   memory-cutoff policy per cutoff.
//! * `optimal`: `m, request_prob, ftilde_opt, best_cutoff, cutoff_ftilde`,
//!   the LP-optimal stationary rule per state next to the best cutoff.
//! * `backward`: `t, ftilde_opt`, the finite-horizon optimum for each horizon.
//! * `forward`: `t, ftilde, x, fidelity, cutoff` under the greedy rule.

use clap::{Args, Subcommand};
use qnet::elemlink::{
    best_cutoff, cutoff_steady_values, forward_recursion_decision, ftilde_x_f, lp_optimal_steady_with, optimal_backward,
    optimal_backward_markov, REQUEST,
};
use qnet::simplex_core::Policy;
use serde::{Deserialize, Serialize};

use super::{counts_or, need, table, Context, ElemModelArgs};
use crate::error::{config_err, CliResult};
use crate::grid::NumList;
use crate::output::{Cell, Table};

#[derive(Subcommand, Debug, Clone)]
pub enum ElemCommand {
    /// Steady-state values of memory-cutoff policies.
    Steady(SteadyArgs),
    /// Optimal stationary policy from the steady-state linear program.
    Optimal(OptimalArgs),
    /// Finite-horizon optimum by backward recursion.
    Backward(BackwardArgs),
    /// Values under the greedy forward-recursion rule.
    Forward(ForwardArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct SteadyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ElemModelArgs,
    /// Cutoffs t* (list or range); all of 0..=m* when absent.
    #[arg(long)]
    pub cutoff: Option<NumList>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct OptimalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ElemModelArgs,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct BackwardArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ElemModelArgs,
    /// Largest horizon.
    #[arg(long)]
    pub t: Option<usize>,
    /// Dynamic programming over (m, time) instead of histories.
    #[arg(long)]
    #[serde(default)]
    pub markov: bool,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct ForwardArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ElemModelArgs,
    /// Last time step reported.
    #[arg(long)]
    pub t: Option<usize>,
}

pub fn steady(a: &SteadyArgs, _ctx: &Context) -> CliResult<Table> {
    let model = a.model.model()?;
    let all: Vec<usize> = (0..=model.m_star()).collect();
    let cutoffs = counts_or(&a.cutoff, "cutoff", &all)?;
    let mut rows = Vec::new();
    for t in cutoffs {
        let v = cutoff_steady_values(&model, t)?;
        rows.push(vec![t.into(), v.ftilde.into(), v.x.into(), v.fidelity.into()]);
    }
    Ok(table(&["t_star", "ftilde", "x", "fidelity"], rows))
}

pub fn optimal(a: &OptimalArgs, ctx: &Context) -> CliResult<Table> {
    let model = a.model.model()?;
    let (value, d) = lp_optimal_steady_with(&model, &ctx.tol)?;
    let (t_best, v_best) = best_cutoff(&model);
    let rows = (0..model.n_states())
        .map(|s| {
            vec![
                Cell::Int(s as i64 - 1),
                d.prob(s, REQUEST).into(),
                value.into(),
                t_best.into(),
                v_best.into(),
            ]
        })
        .collect();
    Ok(table(&["m", "request_prob", "ftilde_opt", "best_cutoff", "cutoff_ftilde"], rows))
}

pub fn backward(a: &BackwardArgs, _ctx: &Context) -> CliResult<Table> {
    let model = a.model.model()?;
    let horizon = need(&a.t, "t")?;
    if horizon == 0 {
        return Err(config_err("--t must be at least 1"));
    }
    let mut rows = Vec::new();
    for t in 1..=horizon {
        let (v, _) = if a.markov { optimal_backward_markov(&model, t)? } else { optimal_backward(&model, t)? };
        rows.push(vec![t.into(), v.into()]);
    }
    Ok(table(&["t", "ftilde_opt"], rows))
}

pub fn forward(a: &ForwardArgs, _ctx: &Context) -> CliResult<Table> {
    let model = a.model.model()?;
    let horizon = a.t.unwrap_or(model.m_star() + 1);
    if horizon == 0 {
        return Err(config_err("--t must be at least 1"));
    }
    let d = forward_recursion_decision(&model);
    let cutoff = (1..model.n_states()).find(|&s| d.mode(s) == REQUEST).map(|s| s - 1);
    let policy = Policy::Stationary(d);
    let mut rows = Vec::new();
    for t in 1..=horizon {
        let v = ftilde_x_f(&model, &policy, t)?;
        rows.push(vec![t.into(), v.ftilde.into(), v.x.into(), v.fidelity.into(), cutoff.into()]);
    }
    Ok(table(&["t", "ftilde", "x", "fidelity", "cutoff"], rows))
}
