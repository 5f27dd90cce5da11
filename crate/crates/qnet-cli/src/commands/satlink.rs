//! Satellite-to-ground elementary links over a grid of ground distances `d`
//! and altitudes `h` (km). Rows run over `d` within each `h`.
//!
//! * `link`: `d, h, path_km, eta_sg, p_single, p_modes, alpha, beta, gamma,
//!   f1, entangled, t_coh_steps, forward_cutoff`. An empty `forward_cutoff`
//!   means the forward recursion never discards.
//! * `sweep`: `d, h, t, t_coh_steps, p_modes, ftilde, x, fidelity`, the
//!   never-discard values `F̃∞(t)`, `X∞(t)` and `F∞(t)`.
//! * `keyrates`: `d, h, protocol, qber, k, rate`. `k` is empty when the DI
//!   bound is undefined (CHSH value at most 2); `rate` is `M·p·max(k, 0)`
//!   with the single-mode heralding probability.

use clap::{Args, Subcommand};
use qnet::satlink::{
    chsh_from_qber, entangled, forward_cutoff, ftilde_infty_closed, qber_and_rates, qber_six_state, symmetric_link,
    HeraldedLink, OpticalParams, Protocol, SatGeometry, SatSourceParams,
};
use serde::{Deserialize, Serialize};

use super::{grid_rows, need, table, Context};
use crate::error::{config_err, CliResult};
use crate::grid::NumList;
use crate::output::{Cell, Table};

#[derive(Subcommand, Debug, Clone)]
pub enum SatCommand {
    /// Heralded link parameters per grid point.
    Link(LinkArgs),
    /// Never-discard memory values over time per grid point.
    Sweep(SweepArgs),
    /// QKD error rates and key rates per grid point.
    Keyrates(KeyRateArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct SatArgs {
    /// Ground distance(s) in km.
    #[arg(long)]
    pub d: Option<NumList>,
    /// Satellite altitude(s) in km.
    #[arg(long)]
    pub h: Option<NumList>,
    /// Receiver aperture radius (m).
    #[arg(long)]
    pub r: Option<f64>,
    /// Beam waist (m).
    #[arg(long)]
    pub w0: Option<f64>,
    /// Wavelength (m).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Atmospheric transmittance at zenith.
    #[arg(long)]
    pub eta_zen: Option<f64>,
    /// Source fidelity.
    #[arg(long)]
    pub fs: Option<f64>,
    /// Mean background photon number on both arms.
    #[arg(long)]
    pub nbar: Option<f64>,
    /// Background photon number on the first arm; overrides `--nbar`.
    #[arg(long)]
    pub nbar1: Option<f64>,
    /// Background photon number on the second arm; overrides `--nbar`.
    #[arg(long)]
    pub nbar2: Option<f64>,
    /// Multiplexed modes per transmission.
    #[arg(long)]
    pub modes: Option<u64>,
    /// Memory coherence time in seconds.
    #[arg(long)]
    pub coh_s: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct LinkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sat: SatArgs,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sat: SatArgs,
    /// Time steps (list or range); `1:100:1` when absent.
    #[arg(long)]
    pub t: Option<NumList>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct KeyRateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sat: SatArgs,
    /// Comma-separated protocols (`bb84`, `six-state`, `di`); all when absent.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Signals per second.
    #[arg(long)]
    pub rate_m: Option<f64>,
}

/// One grid point with its heralded link.
struct SatPoint {
    geom: SatGeometry,
    link: HeraldedLink,
    p_modes: f64,
    t_coh: f64,
}

impl SatArgs {
    fn source(&self) -> CliResult<SatSourceParams> {
        let nbar = self.nbar.unwrap_or(1e-4);
        Ok(SatSourceParams::new(
            self.fs.unwrap_or(1.0),
            self.nbar1.unwrap_or(nbar),
            self.nbar2.unwrap_or(nbar),
            self.modes.unwrap_or(100_000),
        )?)
    }

    fn optics(&self) -> CliResult<OpticalParams> {
        let o = OpticalParams::default();
        Ok(OpticalParams::new(
            self.r.unwrap_or(o.r),
            self.w0.unwrap_or(o.w0),
            self.lambda.unwrap_or(o.lambda),
            self.eta_zen.unwrap_or(o.eta_zen),
        )?)
    }

    fn points(&self) -> CliResult<Vec<SatPoint>> {
        let ds = need(&self.d, "d")?.0;
        let hs = need(&self.h, "h")?.0;
        let src = self.source()?;
        let opt = self.optics()?;
        let coh_s = self.coh_s.unwrap_or(1.0);
        if !(coh_s > 0.0) {
            return Err(config_err(format!("--coh-s must be positive, got {coh_s}")));
        }
        let mut out = Vec::new();
        for &h in &hs {
            for &d in &ds {
                let geom = SatGeometry::new(d, h)?;
                let link = symmetric_link(&geom, &opt, &src)?;
                let p_modes = link.multiplexed_p(src.m);
                out.push(SatPoint { geom, link, p_modes, t_coh: geom.coherence_steps(coh_s) });
            }
        }
        Ok(out)
    }
}

pub fn link(a: &LinkArgs, _ctx: &Context) -> CliResult<Table> {
    let points = a.sat.points()?;
    let f_s = a.sat.source()?.f_s;
    let opt = a.sat.optics()?;
    let rows = grid_rows(&points, |pt| {
        let l = &pt.link;
        Ok(vec![vec![
            pt.geom.d.into(),
            pt.geom.h.into(),
            pt.geom.path_length().into(),
            pt.geom.eta_sg(&opt).into(),
            l.p.into(),
            pt.p_modes.into(),
            l.alpha.into(),
            l.beta.into(),
            l.gamma_coef.into(),
            l.fidelity().into(),
            entangled(l, f_s).into(),
            pt.t_coh.into(),
            forward_cutoff(pt.p_modes, pt.t_coh).into(),
        ]])
    })?;
    Ok(table(
        &[
            "d", "h", "path_km", "eta_sg", "p_single", "p_modes", "alpha", "beta", "gamma", "f1", "entangled",
            "t_coh_steps", "forward_cutoff",
        ],
        rows,
    ))
}

pub fn sweep(a: &SweepArgs, _ctx: &Context) -> CliResult<Table> {
    let points = a.sat.points()?;
    let ts = match &a.t {
        Some(l) => l.as_counts("t").map_err(config_err)?,
        None => (1..=100).collect(),
    };
    if ts.contains(&0) {
        return Err(config_err("time steps start at t = 1"));
    }
    let rows = grid_rows(&points, |pt| {
        let mut rows = Vec::with_capacity(ts.len());
        for &t in &ts {
            let ft = ftilde_infty_closed(t, pt.t_coh, pt.link.alpha, pt.link.beta, pt.p_modes)?;
            let x = -(t as f64 * (-pt.p_modes).ln_1p()).exp_m1();
            let fid = if x > 0.0 { Cell::Num(ft / x) } else { Cell::Missing };
            rows.push(vec![
                pt.geom.d.into(),
                pt.geom.h.into(),
                t.into(),
                pt.t_coh.into(),
                pt.p_modes.into(),
                ft.into(),
                x.into(),
                fid,
            ]);
        }
        Ok(rows)
    })?;
    Ok(table(&["d", "h", "t", "t_coh_steps", "p_modes", "ftilde", "x", "fidelity"], rows))
}

pub fn keyrates(a: &KeyRateArgs, _ctx: &Context) -> CliResult<Table> {
    let points = a.sat.points()?;
    let protocols: Vec<Protocol> = match &a.protocol {
        Some(s) => s.split(',').map(|p| p.trim().parse::<Protocol>()).collect::<Result<_, _>>()?,
        None => Protocol::ALL.to_vec(),
    };
    let m = a.rate_m.unwrap_or(1e9);
    let rows = grid_rows(&points, |pt| {
        let l = &pt.link;
        let mut rows = Vec::new();
        for &proto in &protocols {
            let undefined_di =
                proto == Protocol::DeviceIndependent && chsh_from_qber(qber_six_state(l.alpha, l.beta)) <= 2.0;
            let (q, k, rate) = if undefined_di {
                (qber_six_state(l.alpha, l.beta), Cell::Missing, 0.0)
            } else {
                let kr = qber_and_rates(l.alpha, l.beta, proto, m, l.p)?;
                (kr.qber, Cell::Num(kr.k), kr.rate)
            };
            rows.push(vec![pt.geom.d.into(), pt.geom.h.into(), proto.name().into(), q.into(), k, rate.into()]);
        }
        Ok(rows)
    })?;
    Ok(table(&["d", "h", "protocol", "qber", "k", "rate"], rows))
}
