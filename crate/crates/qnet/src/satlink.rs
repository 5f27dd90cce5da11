//! Satellite-to-ground elementary links: path geometry and transmittance,
//! the heralded Bell-diagonal state after noisy dual-rail transmission,
//! amplitude-damping memory decay, closed-form memory-cutoff values and QKD
//! key rates.
//!
//! Distances are in km, optical lengths in m, times in elementary time steps
//! unless stated otherwise.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::qstate::{apply_operator, BellDiagCoeffs, CMat, DensityOperator, KrausChannel, C};
use crate::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6378.0;
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

/// Below this the closed forms with a `1 − r(1−p)` denominator switch to
/// direct summation.
const DENOMINATOR_FLOOR: f64 = 1e-9;

/// Two ground stations `d` apart with a satellite at altitude `h` over
/// their midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatGeometry {
    pub d: f64,
    pub h: f64,
    pub r_earth: f64,
}

impl SatGeometry {
    pub fn new(d: f64, h: f64) -> Result<Self> {
        Self::with_radius(d, h, EARTH_RADIUS_KM)
    }

    pub fn with_radius(d: f64, h: f64, r_earth: f64) -> Result<Self> {
        if !(d >= 0.0) || !(h > 0.0) || !(r_earth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "geometry needs d ≥ 0, h > 0, R > 0 (got d={d}, h={h}, R={r_earth})"
            )));
        }
        Ok(Self { d, h, r_earth })
    }

    pub fn path_length(&self) -> f64 {
        path_length(self)
    }

    /// Cosine of the zenith angle seen from either ground station.
    pub fn cos_zenith(&self) -> f64 {
        cos_zenith(self.path_length(), self.h, self.r_earth)
    }

    pub fn eta_sg(&self, opt: &OpticalParams) -> f64 {
        eta_sg_with_radius(self.path_length(), self.h, self.r_earth, opt)
    }

    /// Duration of one time step, the heralding round trip `2d/c`, in seconds.
    pub fn time_step_seconds(&self) -> f64 {
        2.0 * self.d / SPEED_OF_LIGHT_KM_S
    }

    /// Coherence time in time steps for a memory holding for `seconds`.
    pub fn coherence_steps(&self, seconds: f64) -> f64 {
        seconds / self.time_step_seconds()
    }
}

/// Satellite-to-station distance `√(4R(R+h)sin²(d/4R) + h²)`.
pub fn path_length(geom: &SatGeometry) -> f64 {
    let r = geom.r_earth;
    let s = (geom.d / (4.0 * r)).sin();
    (4.0 * r * (r + geom.h) * s * s + geom.h * geom.h).sqrt()
}

pub fn cos_zenith(l: f64, h: f64, r_earth: f64) -> f64 {
    h / l - (l * l - h * h) / (2.0 * r_earth * l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalParams {
    /// Receiving aperture radius (m).
    pub r: f64,
    /// Beam waist (m).
    pub w0: f64,
    /// Wavelength (m).
    pub lambda: f64,
    /// Atmospheric transmittance at zenith.
    pub eta_zen: f64,
}

impl Default for OpticalParams {
    fn default() -> Self {
        Self { r: 0.75, w0: 0.025, lambda: 810e-9, eta_zen: 0.5 }
    }
}

impl OpticalParams {
    pub fn new(r: f64, w0: f64, lambda: f64, eta_zen: f64) -> Result<Self> {
        if !(r > 0.0 && w0 > 0.0 && lambda > 0.0) || !(eta_zen > 0.0 && eta_zen <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "optical parameters must be positive with η_zen in (0,1] (r={r}, w0={w0}, λ={lambda}, η_zen={eta_zen})"
            )));
        }
        Ok(Self { r, w0, lambda, eta_zen })
    }

    /// Rayleigh range `πw0²/λ` in m.
    pub fn rayleigh_range(&self) -> f64 {
        PI * self.w0 * self.w0 / self.lambda
    }

    /// Beam radius after `l_km` of free space, in m.
    pub fn beam_width(&self, l_km: f64) -> f64 {
        let z = l_km * 1e3 / self.rayleigh_range();
        self.w0 * (1.0 + z * z).sqrt()
    }

    /// Free-space transmittance `1 − exp(−2r²/w(L)²)`.
    pub fn eta_fs(&self, l_km: f64) -> f64 {
        let w = self.beam_width(l_km);
        -(-2.0 * self.r * self.r / (w * w)).exp_m1()
    }

    /// `η_zen^{sec ζ}`, zero once the satellite is at or below the horizon.
    pub fn eta_atm(&self, cos_zeta: f64) -> f64 {
        if cos_zeta <= 0.0 {
            return 0.0;
        }
        self.eta_zen.powf(1.0 / cos_zeta.min(1.0))
    }
}

/// Total satellite-to-ground transmittance `η_fs · η_atm` for path length
/// `l` and altitude `h`.
pub fn eta_sg(l: f64, h: f64, opt: &OpticalParams) -> f64 {
    eta_sg_with_radius(l, h, EARTH_RADIUS_KM, opt)
}

pub fn eta_sg_with_radius(l: f64, h: f64, r_earth: f64, opt: &OpticalParams) -> f64 {
    opt.eta_fs(l) * opt.eta_atm(cos_zenith(l, h, r_earth))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatSourceParams {
    /// Fidelity of the source state to `Φ+`.
    pub f_s: f64,
    pub nbar1: f64,
    pub nbar2: f64,
    /// Number of multiplexed frequency modes.
    pub m: u64,
}

impl SatSourceParams {
    pub fn new(f_s: f64, nbar1: f64, nbar2: f64, m: u64) -> Result<Self> {
        for (name, v) in [("f_S", f_s), ("nbar1", nbar1), ("nbar2", nbar2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability(format!("{name} = {v} outside [0,1]")));
            }
        }
        if m == 0 {
            return Err(Error::InvalidInput("need at least one multiplexed mode".into()));
        }
        Ok(Self { f_s, nbar1, nbar2, m })
    }

    /// A perfect source with no background light and a single mode.
    pub fn ideal() -> Self {
        Self { f_s: 1.0, nbar1: 0.0, nbar2: 0.0, m: 1 }
    }
}

/// Single-arm transfer amplitudes `(x, y, z)` of the noisy dual-rail channel:
/// `x` keeps the polarisation, `y` flips it, `z` is the coherence.
pub fn arm_params(eta: f64, nbar: f64) -> (f64, f64, f64) {
    let x = (1.0 - nbar) * eta + nbar / 2.0 * ((1.0 - 2.0 * eta).powi(2) + eta * eta);
    let y = nbar / 2.0 * (1.0 - eta).powi(2);
    let z = (1.0 - nbar) * eta - nbar * eta * (1.0 - 2.0 * eta);
    (x, y, z)
}

/// The state of a satellite-to-ground link after successful heralding,
/// `σ0 = (α+β)Φ+ + (α−β)Φ− + γΨ+ + γΨ−`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldedLink {
    /// Single-shot heralding probability `a + c`.
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub coeffs: BellDiagCoeffs,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_coef: f64,
}

impl HeraldedLink {
    /// Initial fidelity `F(1) = ⟨Φ+|σ0|Φ+⟩`.
    pub fn fidelity(&self) -> f64 {
        self.coeffs.phi_plus
    }

    pub fn state(&self) -> DensityOperator {
        self.coeffs.to_density()
    }

    /// Heralding probability with the source's multiplexing applied.
    pub fn multiplexed_p(&self, m: u64) -> f64 {
        multiplexed_p(self.p, m)
    }

    /// Memory fidelities `f(-1)=0, f(0), …, f(m*)` in the layout used by
    /// the elementary-link model.
    pub fn memory_fidelities(&self, t_coh: f64, m_star: usize) -> Vec<f64> {
        std::iter::once(0.0)
            .chain((0..=m_star).map(|m| memory_f(m, t_coh, self.alpha, self.beta)))
            .collect()
    }
}

pub fn heralded_link(eta1: f64, eta2: f64, src: &SatSourceParams) -> Result<HeraldedLink> {
    for (name, v) in [("eta1", eta1), ("eta2", eta2)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidProbability(format!("{name} = {v} outside [0,1]")));
        }
    }
    let (x1, y1, z1) = arm_params(eta1, src.nbar1);
    let (x2, y2, z2) = arm_params(eta2, src.nbar2);
    let a = x1 * x2 + y1 * y2;
    let b = z1 * z2;
    let c = x1 * y2 + y1 * x2;
    let p = a + c;
    if !(p > 0.0) {
        return Err(Error::InvalidInput(
            "heralding probability is zero; the conditional state is undefined".into(),
        ));
    }
    let f = src.f_s;
    let r = (1.0 - f) / 3.0;
    let alpha = (0.5 * f * a + 0.5 * r * (a + 2.0 * c)) / p;
    let beta = 0.5 * (f - r) * b / p;
    let gamma_coef = (0.5 * f * c + 0.5 * r * (2.0 * a + c)) / p;
    let coeffs = BellDiagCoeffs::new(alpha + beta, alpha - beta, gamma_coef, gamma_coef)?;
    Ok(HeraldedLink { p, a, b, c, coeffs, alpha, beta, gamma_coef })
}

/// The symmetric configuration: equal path lengths and background photons
/// `src.nbar1` on both arms.
pub fn symmetric_link(geom: &SatGeometry, opt: &OpticalParams, src: &SatSourceParams) -> Result<HeraldedLink> {
    let eta = geom.eta_sg(opt);
    heralded_link(eta, eta, src)
}

/// Probability that at least one of `m` independent modes succeeds.
pub fn multiplexed_p(p_single: f64, m: u64) -> f64 {
    -(m as f64 * (-p_single).ln_1p()).exp_m1()
}

/// Entanglement of the heralded state: `f_S > 1/2` and
/// `2(f_S−1)a + (4f_S−1)b − (1+2f_S)c > 0`.
pub fn entangled(link: &HeraldedLink, f_s: f64) -> bool {
    f_s > 0.5 && 2.0 * (f_s - 1.0) * link.a + (4.0 * f_s - 1.0) * link.b - (1.0 + 2.0 * f_s) * link.c > 0.0
}

/// Amplitude-damping parameter for one time step, `1 − e^{−1/t_coh}`.
pub fn damping_gamma(t_coh: f64) -> f64 {
    -(-1.0 / t_coh).exp_m1()
}

/// `λ_m = e^{−m/t_coh}`; an infinite `t_coh` means a perfect memory.
pub fn memory_lambda(m: usize, t_coh: f64) -> f64 {
    (-(m as f64) / t_coh).exp()
}

/// Fidelity after `m` steps of amplitude damping on both qubits,
/// `αλ² + (β − 1/2)λ + 1/2`.
pub fn memory_f(m: usize, t_coh: f64, alpha: f64, beta: f64) -> f64 {
    let l = memory_lambda(m, t_coh);
    alpha * l * l + (beta - 0.5) * l + 0.5
}

/// `(lim F̃, lim F)` of the memory-cutoff policy with cutoff `t*`, via the
/// sinh closed forms for `Σλ_m` and `Σλ_m²`.
pub fn cutoff_steady_sinh(t_star: usize, t_coh: f64, alpha: f64, beta: f64, p: f64) -> (f64, f64) {
    let t = t_star as f64;
    let (s1, s2) = if t_coh.is_infinite() {
        (t + 1.0, t + 1.0)
    } else {
        (
            (-t / (2.0 * t_coh)).exp() * ((1.0 + t) / (2.0 * t_coh)).sinh() / (1.0 / (2.0 * t_coh)).sinh(),
            (-t / t_coh).exp() * ((1.0 + t) / t_coh).sinh() / (1.0 / t_coh).sinh(),
        )
    };
    let sum = alpha * s2 + (beta - 0.5) * s1 + 0.5 * (t + 1.0);
    (p / (1.0 + t * p) * sum, sum / (t + 1.0))
}

/// `F̃^∞(t)`, the expected fidelity at step `t ≥ 1` under the never-discard
/// policy with ideal bookkeeping of the link age.
pub fn ftilde_infty_closed(t: usize, t_coh: f64, alpha: f64, beta: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidProbability(format!("success probability {p} outside (0,1]")));
    }
    if t == 0 {
        return Err(Error::InvalidInput("time steps start at t = 1".into()));
    }
    let q = 1.0 - p;
    let tf = t as f64;
    let qt = q.powi(t as i32);
    // Σ_{m<t} r^m p q^{t-1-m} with r = e^{-k/t_coh}
    let geometric = |k: f64| -> Option<f64> {
        let inv_r = (k / t_coh).exp();
        let den = 1.0 - inv_r * q;
        if den.abs() < DENOMINATOR_FLOOR {
            return None;
        }
        Some(p * inv_r * ((-k * tf / t_coh).exp() - qt) / den)
    };
    match (geometric(2.0), geometric(1.0)) {
        (Some(g2), Some(g1)) => Ok(alpha * g2 + (beta - 0.5) * g1 + 0.5 * (1.0 - qt)),
        _ => Ok(ftilde_infty_direct(t, t_coh, alpha, beta, p)),
    }
}

/// `Σ_{m=0}^{t-1} f(m) p (1−p)^{t−1−m}` evaluated term by term.
pub fn ftilde_infty_direct(t: usize, t_coh: f64, alpha: f64, beta: f64, p: f64) -> f64 {
    let mut w = p;
    let mut acc = 0.0;
    for m in (0..t).rev() {
        acc += memory_f(m, t_coh, alpha, beta) * w;
        w *= 1.0 - p;
    }
    acc
}

/// Cutoff produced by the forward recursion for a perfect source with no
/// background light: `None` (never discard) when `p ≤ 1/2`, otherwise
/// `⌈−(t_coh/2)ln(2p−1) − 1⌉`, floored at zero.
pub fn forward_cutoff(p: f64, t_coh: f64) -> Option<usize> {
    if p <= 0.5 {
        return None;
    }
    let x = -(t_coh / 2.0) * (2.0 * p - 1.0).ln() - 1.0;
    if !x.is_finite() {
        return None;
    }
    Some(x.ceil().max(0.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Bb84,
    SixState,
    DeviceIndependent,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Bb84, Protocol::SixState, Protocol::DeviceIndependent];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::SixState => "six-state",
            Protocol::DeviceIndependent => "di",
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb84" => Ok(Protocol::Bb84),
            "six-state" | "sixstate" | "6-state" | "six_state" => Ok(Protocol::SixState),
            "di" | "diqkd" | "device-independent" => Ok(Protocol::DeviceIndependent),
            _ => Err(Error::InvalidInput(format!("unknown protocol '{s}'"))),
        }
    }
}

fn xlog2(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

pub fn binary_entropy(q: f64) -> f64 {
    -xlog2(q) - xlog2(1.0 - q)
}

fn check_qber(q: f64, hi: f64) -> Result<()> {
    if !(0.0..=hi).contains(&q) {
        return Err(Error::InvalidProbability(format!("QBER {q} outside [0, {hi}]")));
    }
    Ok(())
}

/// `1 − 2h₂(Q)`.
pub fn key_rate_bb84(q: f64) -> Result<f64> {
    check_qber(q, 1.0)?;
    Ok(1.0 - 2.0 * binary_entropy(q))
}

/// `1 + (1 − 3Q/2)log₂(1 − 3Q/2) + (3Q/2)log₂(Q/2)`.
pub fn key_rate_six_state(q: f64) -> Result<f64> {
    check_qber(q, 2.0 / 3.0)?;
    let u = 1.5 * q;
    let tail = if q > 0.0 { u * (q / 2.0).log2() } else { 0.0 };
    Ok(1.0 + xlog2((1.0 - u).max(0.0)) + tail)
}

/// `1 − h₂(Q) − h₂((1 + √((S/2)² − 1))/2)`, defined for `2 ≤ S ≤ 2√2`.
pub fn key_rate_di(q: f64, s: f64) -> Result<f64> {
    check_qber(q, 1.0)?;
    let tsirelson = 2.0 * SQRT_2;
    if s < 2.0 || s > tsirelson + 1e-12 {
        return Err(Error::InvalidInput(format!("CHSH value {s} outside [2, 2√2]")));
    }
    let root = ((s / 2.0).powi(2) - 1.0).max(0.0).sqrt().min(1.0);
    Ok(1.0 - binary_entropy(q) - binary_entropy((1.0 + root) / 2.0))
}

/// CHSH value assumed for a Bell-diagonal link with QBER `q`:
/// `S = 2√2(1 − 2Q)`.
pub fn chsh_from_qber(q: f64) -> f64 {
    2.0 * SQRT_2 * (1.0 - 2.0 * q)
}

pub fn qber_bb84(alpha: f64, beta: f64) -> f64 {
    0.75 - beta / 2.0 - alpha
}

pub fn qber_six_state(alpha: f64, beta: f64) -> f64 {
    2.0 / 3.0 * (1.0 - (alpha + beta))
}

/// Key rate for a protocol as a function of its QBER alone; the DI rate uses
/// the CHSH value from [`chsh_from_qber`].
pub fn key_rate(protocol: Protocol, q: f64) -> Result<f64> {
    match protocol {
        Protocol::Bb84 => key_rate_bb84(q),
        Protocol::SixState => key_rate_six_state(q),
        Protocol::DeviceIndependent => key_rate_di(q, chsh_from_qber(q)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRate {
    pub qber: f64,
    /// Secret bits per copy, signed.
    pub k: f64,
    /// `M · p · max(K, 0)` secret bits per second.
    pub rate: f64,
}

/// QBER, per-copy key rate and key rate per second for a link with
/// parameters `(α, β)`, `m` signals per second and heralding probability `p`.
pub fn qber_and_rates(alpha: f64, beta: f64, protocol: Protocol, m: f64, p: f64) -> Result<KeyRate> {
    let qber = match protocol {
        Protocol::Bb84 => qber_bb84(alpha, beta),
        Protocol::SixState | Protocol::DeviceIndependent => qber_six_state(alpha, beta),
    };
    qber_and_rates_with_chsh(alpha, beta, protocol, m, p, chsh_from_qber(qber))
}

/// As [`qber_and_rates`] with an explicit CHSH value for the DI protocol.
pub fn qber_and_rates_with_chsh(
    alpha: f64,
    beta: f64,
    protocol: Protocol,
    m: f64,
    p: f64,
    s: f64,
) -> Result<KeyRate> {
    let (qber, k) = match protocol {
        Protocol::Bb84 => {
            let q = qber_bb84(alpha, beta);
            (q, key_rate_bb84(q)?)
        }
        Protocol::SixState => {
            let q = qber_six_state(alpha, beta);
            (q, key_rate_six_state(q)?)
        }
        Protocol::DeviceIndependent => {
            let q = qber_six_state(alpha, beta);
            (q, key_rate_di(q, s)?)
        }
    };
    Ok(KeyRate { qber, k, rate: m * p * k.max(0.0) })
}

/// QBER at which the protocol's key rate crosses zero, by bisection.
pub fn key_rate_threshold(protocol: Protocol) -> f64 {
    let hi = match protocol {
        Protocol::Bb84 => 0.5,
        Protocol::SixState => 2.0 / 3.0,
        // S = 2 here
        Protocol::DeviceIndependent => (1.0 - FRAC_1_SQRT_2) / 2.0,
    };
    let k = |q: f64| key_rate(protocol, q).expect("inside the protocol domain");
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if k(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn pauli(k: usize) -> CMat {
    let z = C::new(0.0, 0.0);
    let o = C::new(1.0, 0.0);
    let i = C::new(0.0, 1.0);
    match k {
        1 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// `(Q_x, Q_y, Q_z)` with `Q_x = (1 − ⟨XX⟩)/2`, `Q_y = (1 + ⟨YY⟩)/2`,
/// `Q_z = (1 − ⟨ZZ⟩)/2`.
pub fn qbers_from_state(rho: &DensityOperator) -> Result<(f64, f64, f64)> {
    if rho.dims() != [2, 2] {
        return Err(Error::DimensionMismatch(format!("expected a two-qubit state, got dims {:?}", rho.dims())));
    }
    let corr = |k: usize| {
        let p = pauli(k);
        (p.kronecker(&p) * rho.matrix()).trace().re
    };
    Ok((0.5 * (1.0 - corr(1)), 0.5 * (1.0 + corr(2)), 0.5 * (1.0 - corr(3))))
}

/// Photon-number cutoff per mode in the reference computation (0, 1 or 2
/// photons), exact for one signal photon meeting at most one background
/// photon.
const FOCK: usize = 3;

fn annihilation() -> DMatrix<f64> {
    let mut a = DMatrix::zeros(FOCK, FOCK);
    for n in 1..FOCK {
        a[(n - 1, n)] = (n as f64).sqrt();
    }
    a
}

/// Embeds a single-mode operator at position `k` of four modes.
fn on_mode(op: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let id = DMatrix::<f64>::identity(FOCK, FOCK);
    (0..4).fold(DMatrix::identity(1, 1), |acc, j| acc.kronecker(if j == k { op } else { &id }))
}

fn fock_index(n: [usize; 4]) -> usize {
    n.iter().fold(0, |acc, &k| acc * FOCK + k)
}

/// Kraus operators of one heralded arm, from the beamsplitter dilation
/// on modes (A1, A2, E1, E2) with the approximate thermal environment,
/// projected onto the one-photon subspace {|1,0⟩, |0,1⟩} of A.
pub fn arm_kraus_by_dilation(eta: f64, nbar: f64) -> Vec<CMat> {
    let a = annihilation();
    let theta = eta.sqrt().acos();
    let mut g = DMatrix::<f64>::zeros(81, 81);
    for (s, e) in [(0, 2), (1, 3)] {
        let cross = on_mode(&a.transpose(), s) * on_mode(&a, e);
        g += (&cross - cross.transpose()) * theta;
    }
    let u = g.exp();
    let env = [([0, 0], 1.0 - nbar), ([1, 0], nbar / 2.0), ([0, 1], nbar / 2.0)];
    let rails = [[1, 0], [0, 1]];
    let mut ops = Vec::new();
    for (e_in, w) in env {
        if w == 0.0 {
            continue;
        }
        for e1 in 0..FOCK {
            for e2 in 0..FOCK {
                let k = CMat::from_fn(2, 2, |o, i| {
                    let col = fock_index([rails[i][0], rails[i][1], e_in[0], e_in[1]]);
                    let row = fock_index([rails[o][0], rails[o][1], e1, e2]);
                    C::new(w.sqrt() * u[(row, col)], 0.0)
                });
                ops.push(k);
            }
        }
    }
    ops
}

/// Unnormalised heralded state `Π(L1 ⊗ L2)(ρ^S)Π` of a Werner-type source,
/// computed through [`arm_kraus_by_dilation`] on each arm. Its trace is the
/// heralding probability.
pub fn heralded_state_by_dilation(eta1: f64, eta2: f64, src: &SatSourceParams) -> Result<CMat> {
    let arm1 = KrausChannel::new(arm_kraus_by_dilation(eta1, src.nbar1), vec![2], vec![2])?;
    let arm2 = KrausChannel::new(arm_kraus_by_dilation(eta2, src.nbar2), vec![2], vec![2])?;
    let rho = BellDiagCoeffs::werner(src.f_s)?.to_density();
    let (m, _) = apply_operator(&arm1, rho.matrix(), &[2, 2], &[0])?;
    Ok(apply_operator(&arm2, &m, &[2, 2], &[1])?.0)
}
