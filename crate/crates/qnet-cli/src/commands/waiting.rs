//! Waiting times of never-discarded links requested at `t_req`.
//!
//! * `collective`: `m, p, t_req, expected` for `m` parallel links, with
//!   `pmf_sum, abs_diff` appended by `--compare-pmf`.
//! * `virtual`: `m, p, q, t_req, collective, virtual`, the latter counting
//!   the joining step that succeeds with probability `q`.

use clap::{Args, Subcommand};
use qnet::waiting::{collective_expected_from_pmf, collective_expected_infty, WaitingQuery};
use serde::{Deserialize, Serialize};

use super::{counts_or, grid_rows, need, table, Context};
use crate::error::CliResult;
use crate::grid::NumList;
use crate::output::Table;

#[derive(Subcommand, Debug, Clone)]
pub enum WaitingCommand {
    /// Expected time until all links are active.
    Collective(CollectiveArgs),
    /// Expected time until the virtual link exists.
    Virtual(VirtualArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct WaitingGrid {
    /// Number of elementary links.
    #[arg(long)]
    pub m: Option<NumList>,
    /// Success probability per link and time step.
    #[arg(long)]
    pub p: Option<NumList>,
    /// Request time; 0 when absent.
    #[arg(long)]
    pub t_req: Option<NumList>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct CollectiveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: WaitingGrid,
    /// Append the expectation summed from the distribution.
    #[arg(long)]
    #[serde(default)]
    pub compare_pmf: bool,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct VirtualArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: WaitingGrid,
    /// Success probability of the joining operation.
    #[arg(long)]
    pub q: Option<NumList>,
}

impl WaitingGrid {
    fn points(&self) -> CliResult<Vec<(usize, f64, usize)>> {
        let ms = counts_or(&self.m, "m", &[])?;
        if ms.is_empty() {
            need(&self.m, "m")?;
        }
        let ps = need(&self.p, "p")?.0;
        let ts = counts_or(&self.t_req, "t-req", &[0])?;
        let mut out = Vec::new();
        for &m in &ms {
            for &p in &ps {
                for &t in &ts {
                    out.push((m, p, t));
                }
            }
        }
        Ok(out)
    }
}

pub fn collective(a: &CollectiveArgs, _ctx: &Context) -> CliResult<Table> {
    let points = a.grid.points()?;
    let rows = grid_rows(&points, |&(m, p, t)| {
        let e = collective_expected_infty(m, p, t)?;
        let mut row = vec![m.into(), p.into(), t.into(), e.into()];
        if a.compare_pmf {
            let s = collective_expected_from_pmf(m, p, t)?;
            row.push(s.into());
            row.push((e - s).abs().into());
        }
        Ok(vec![row])
    })?;
    let mut cols = vec!["m", "p", "t_req", "expected"];
    if a.compare_pmf {
        cols.extend(["pmf_sum", "abs_diff"]);
    }
    Ok(table(&cols, rows))
}

pub fn virtual_link(a: &VirtualArgs, _ctx: &Context) -> CliResult<Table> {
    let points = a.grid.points()?;
    let qs = need(&a.q, "q")?.0;
    let expanded: Vec<(usize, f64, f64, usize)> =
        points.iter().flat_map(|&(m, p, t)| qs.iter().map(move |&q| (m, p, q, t))).collect();
    let rows = grid_rows(&expanded, |&(m, p, q, t)| {
        let w = WaitingQuery::new(t, m, p, q)?;
        Ok(vec![vec![m.into(), p.into(), q.into(), t.into(), w.collective_expected()?.into(), w.virtual_expected()?.into()]])
    })?;
    Ok(table(&["m", "p", "q", "t_req", "collective", "virtual"], rows))
}
