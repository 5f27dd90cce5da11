//! Subcommand implementations. Each takes a decoded parameter block and
//! returns a [`Table`].

pub mod elem;
pub mod satlink;
pub mod simulate;
pub mod twolink;
pub mod waiting;

use clap::Args;
use qnet::elemlink::ElemLinkModel;
use qnet::lp::Tolerances;
use qnet::qstate::BellDiagCoeffs;
use qnet::satlink::memory_f;
use qnet::twolink::TwoLinkModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliResult};
use crate::grid::NumList;
use crate::output::{Cell, Table};

/// Settings shared by every command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub seed: u64,
    pub tol: Tolerances,
}

impl Default for Context {
    fn default() -> Self {
        Self { seed: 1, tol: Tolerances::default() }
    }
}

/// Evaluates `f` on every grid point in parallel and concatenates the rows
/// in grid order.
pub(crate) fn grid_rows<T, F>(points: &[T], f: F) -> CliResult<Vec<Vec<Cell>>>
where
    T: Sync,
    F: Fn(&T) -> CliResult<Vec<Vec<Cell>>> + Sync + Send,
{
    let parts: Vec<Vec<Vec<Cell>>> = points.par_iter().map(f).collect::<CliResult<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub(crate) fn table(columns: &[&str], rows: Vec<Vec<Cell>>) -> Table {
    let mut t = Table::new(columns);
    t.extend(rows);
    t
}

pub(crate) fn need<T: Clone>(v: &Option<T>, name: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| config_err(format!("missing parameter --{name}")))
}

pub(crate) fn counts_or(v: &Option<NumList>, name: &str, default: &[usize]) -> CliResult<Vec<usize>> {
    match v {
        Some(l) => l.as_counts(name).map_err(config_err),
        None => Ok(default.to_vec()),
    }
}

/// `f(m)` for `m = 0, …, m*` described by a short string:
///
/// * `ones`: `f(m) = 1`
/// * `exp:<rate>`: `f(m) = e^{−rate·m}`
/// * `werner:<F>:<t_coh>`: a Werner state of fidelity `F` held in memories
///   with amplitude damping of coherence time `t_coh` steps
/// * a comma-separated list of the values themselves
pub fn active_values(desc: &str, m_star: Option<usize>) -> CliResult<Vec<f64>> {
    let desc = desc.trim();
    let need_m = || m_star.ok_or_else(|| config_err("--mstar is required unless f is an explicit list"));
    let parts: Vec<&str> = desc.split(':').collect();
    let values = match parts.as_slice() {
        ["ones"] => vec![1.0; need_m()? + 1],
        ["exp", rate] => {
            let r = parse_f64(rate, "exp rate")?;
            (0..=need_m()?).map(|m| (-r * m as f64).exp()).collect()
        }
        ["werner", f, t_coh] => {
            let f = parse_f64(f, "Werner fidelity")?;
            let t_coh = parse_f64(t_coh, "coherence time")?;
            let c = BellDiagCoeffs::werner(f)?.as_array();
            let (alpha, beta) = ((c[0] + c[1]) / 2.0, (c[0] - c[1]) / 2.0);
            (0..=need_m()?).map(|m| memory_f(m, t_coh, alpha, beta)).collect()
        }
        [list] => {
            let v = list.parse::<NumList>().map_err(|e| config_err(format!("f: {e}")))?.0;
            if let Some(m) = m_star {
                if v.len() != m + 1 {
                    return Err(config_err(format!("f lists {} values, m* = {m} needs {}", v.len(), m + 1)));
                }
            }
            v
        }
        _ => return Err(config_err(format!("unrecognised f value {desc:?}"))),
    };
    Ok(values)
}

fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.trim().parse::<f64>().map_err(|_| config_err(format!("{what}: not a number: {s:?}")))
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct ElemModelArgs {
    /// Heralding success probability per time step.
    #[arg(long)]
    pub p: Option<f64>,
    /// Largest memory time kept.
    #[arg(long)]
    pub mstar: Option<usize>,
    /// f(0..m*): `ones`, `exp:<rate>`, `werner:<F>:<t_coh>` or a comma list.
    #[arg(long)]
    pub f: Option<String>,
}

impl ElemModelArgs {
    pub fn model(&self) -> CliResult<ElemLinkModel> {
        let p = need(&self.p, "p")?;
        let desc = self.f.clone().unwrap_or_else(|| "ones".into());
        let active = active_values(&desc, self.mstar)?;
        Ok(ElemLinkModel::from_active_values(p, &active)?)
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct TwoLinkModelArgs {
    /// Equal links: `--p` and `--mstar` apply to both.
    #[arg(long)]
    #[serde(default)]
    pub symmetric: bool,
    /// Success probability of both links (symmetric form); may be a list.
    #[arg(long)]
    pub p: Option<NumList>,
    /// Success probability of the first link.
    #[arg(long)]
    pub p1: Option<f64>,
    /// Success probability of the second link.
    #[arg(long)]
    pub p2: Option<f64>,
    /// Swap success probability; may be a list.
    #[arg(long)]
    pub q: Option<NumList>,
    /// Storage bound of both links (symmetric form).
    #[arg(long)]
    pub mstar: Option<usize>,
    /// Storage bound of the first link.
    #[arg(long)]
    pub m1: Option<usize>,
    /// Storage bound of the second link.
    #[arg(long)]
    pub m2: Option<usize>,
    /// Cutoff of both links; also sets the storage bound when `--mstar` is absent.
    #[arg(long)]
    pub tstar: Option<usize>,
    /// f(1, m1, m2): `ones` or `exp:<rate>` (decay in m1 + m2).
    #[arg(long)]
    pub f: Option<String>,
}

/// One two-link model of a parameter grid.
#[derive(Debug, Clone)]
pub struct TwoLinkPoint {
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
    pub model: TwoLinkModel,
}

impl TwoLinkModelArgs {
    fn bounds(&self) -> CliResult<(usize, usize)> {
        let common = self.mstar.or(self.tstar);
        let m1 = self.m1.or(common);
        let m2 = self.m2.or(common);
        match (m1, m2) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(config_err("storage bounds missing: give --mstar (or --tstar), or --m1 and --m2")),
        }
    }

    fn value_fn(&self) -> CliResult<Box<dyn Fn(usize, usize) -> f64 + Sync>> {
        let desc = self.f.clone().unwrap_or_else(|| "ones".into());
        let parts: Vec<&str> = desc.trim().split(':').collect();
        match parts.as_slice() {
            ["ones"] => Ok(Box::new(|_, _| 1.0)),
            ["exp", rate] => {
                let r = parse_f64(rate, "exp rate")?;
                Ok(Box::new(move |a, b| (-r * (a + b) as f64).exp()))
            }
            _ => Err(config_err(format!("unrecognised two-link f value {desc:?}"))),
        }
    }

    /// All models of the grid, `p` outermost, then `q`.
    pub fn points(&self) -> CliResult<Vec<TwoLinkPoint>> {
        let (m1, m2) = self.bounds()?;
        let value = self.value_fn()?;
        let qs = need(&self.q, "q")?.0;
        let pairs: Vec<(f64, f64)> = if self.symmetric || (self.p.is_some() && self.p1.is_none() && self.p2.is_none()) {
            need(&self.p, "p")?.0.iter().map(|&p| (p, p)).collect()
        } else {
            vec![(need(&self.p1, "p1")?, need(&self.p2, "p2")?)]
        };
        let mut out = Vec::new();
        for &(p1, p2) in &pairs {
            for &q in &qs {
                let model = TwoLinkModel::from_fn(p1, p2, q, m1, m2, &value)?;
                out.push(TwoLinkPoint { p1, p2, q, model });
            }
        }
        Ok(out)
    }

    pub fn single_model(&self) -> CliResult<TwoLinkPoint> {
        let mut pts = self.points()?;
        if pts.len() != 1 {
            return Err(config_err(format!("this command takes one model, the parameters describe {}", pts.len())));
        }
        Ok(pts.remove(0))
    }

    /// Cutoffs for the memory-cutoff policy, defaulting to the storage bounds.
    pub fn cutoffs(&self, t1: Option<usize>, t2: Option<usize>) -> CliResult<(usize, usize)> {
        let (m1, m2) = self.bounds()?;
        Ok((t1.or(self.tstar).unwrap_or(m1), t2.or(self.tstar).unwrap_or(m2)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_specs() {
        assert_eq!(active_values("ones", Some(2)).unwrap(), vec![1.0; 3]);
        assert_eq!(active_values("0.9,0.8", None).unwrap(), vec![0.9, 0.8]);
        assert!(active_values("0.9,0.8", Some(3)).is_err());
        assert!(active_values("ones", None).is_err());
        let e = active_values("exp:0.5", Some(2)).unwrap();
        assert!((e[2] - (-1.0f64).exp()).abs() < 1e-15);
        let w = active_values("werner:0.9:10", Some(3)).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[1] < p[0]));
        assert!(active_values("bogus:1", Some(1)).is_err());
    }

    #[test]
    fn two_link_grid_order() {
        let a = TwoLinkModelArgs {
            symmetric: true,
            p: Some("0.2,0.4".parse().unwrap()),
            q: Some("0.5,1".parse().unwrap()),
            tstar: Some(2),
            ..Default::default()
        };
        let pts = a.points().unwrap();
        let pq: Vec<(f64, f64)> = pts.iter().map(|x| (x.p1, x.q)).collect();
        assert_eq!(pq, vec![(0.2, 0.5), (0.2, 1.0), (0.4, 0.5), (0.4, 1.0)]);
        assert_eq!(pts[0].model.m1_star(), 2);
        assert!(a.single_model().is_err());
    }
}
