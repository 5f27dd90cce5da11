//! Finite-dimensional quantum states and channels, the joining protocols
//! (entanglement swapping, GHZ swapping, graph-state distribution) as Kraus
//! maps, their closed-form output fidelities, and BBPSSW distillation.
//!
//! Multi-partite operators use the Kronecker convention: the first listed
//! subsystem is the most significant digit of the flat index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type C = Complex64;
pub type CMat = DMatrix<C>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const EIGENVALUE_FLOOR: f64 = -1e-9;
pub const KRAUS_TOL: f64 = 1e-10;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// A normalised pure state vector with subsystem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C>,
    dims: Vec<usize>,
}

impl StateVector {
    pub fn new(amps: DVector<C>, dims: Vec<usize>) -> Result<Self> {
        if product(&dims) != amps.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for subsystem dimensions {dims:?}",
                amps.len()
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidInput(format!("state vector has norm {norm}")));
        }
        Ok(Self { amps, dims })
    }

    /// `|k⟩` in dimension `d`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut amps = DVector::zeros(d);
        amps[k] = c(1.0);
        Self { amps, dims: vec![d] }
    }

    pub fn amplitudes(&self) -> &DVector<C> {
        &self.amps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        StateVector { amps: self.amps.kronecker(&other.amps), dims }
    }

    pub fn inner(&self, other: &StateVector) -> C {
        self.amps.dotc(&other.amps)
    }

    pub fn projector(&self) -> CMat {
        &self.amps * self.amps.adjoint()
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator { m: self.projector(), dims: self.dims.clone() }
    }
}

/// A density operator (Hermitian, unit trace, positive semidefinite).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    m: CMat,
    dims: Vec<usize>,
}

fn min_eigenvalue(m: &CMat) -> f64 {
    let herm = (m + m.adjoint()) * c(0.5);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

impl DensityOperator {
    pub fn new(m: CMat, dims: Vec<usize>) -> Result<Self> {
        if !m.is_square() || product(&dims) != m.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for subsystem dimensions {dims:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        let herm = (&m - m.adjoint()).camax();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidInput(format!("operator not Hermitian (defect {herm:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidInput(format!("density operator has trace {tr}")));
        }
        let ev = min_eigenvalue(&m);
        if ev < EIGENVALUE_FLOOR {
            return Err(Error::InvalidInput(format!("density operator has eigenvalue {ev:e}")));
        }
        Ok(Self { m, dims })
    }

    /// Normalises a positive operator by its trace.
    pub fn from_unnormalized(m: CMat, dims: Vec<usize>) -> Result<(f64, Self)> {
        let tr = m.trace().re;
        if tr <= 0.0 || !tr.is_finite() {
            return Err(Error::InvalidInput(format!("operator has trace {tr}")));
        }
        let rho = Self::new(m / c(tr), dims)?;
        Ok((tr, rho))
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let d = product(&dims);
        Self { m: CMat::identity(d, d) / c(d as f64), dims }
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.m)
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DensityOperator { m: self.m.kronecker(&other.m), dims }
    }

    /// Reorders subsystems: new subsystem `k` is old subsystem `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<DensityOperator> {
        let (m, dims) = permute_operator(&self.m, &self.dims, order)?;
        Ok(DensityOperator { m, dims })
    }

    /// Traces out the listed subsystems.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<DensityOperator> {
        let (m, dims) = partial_trace(&self.m, &self.dims, traced)?;
        Ok(DensityOperator { m, dims })
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_to_pure(&self, psi: &StateVector) -> Result<f64> {
        fidelity_to_pure(self, psi)
    }

    /// `⟨Φ^{z,x}|ρ|Φ^{z,x}⟩` for a two-qudit state, indexed `[z][x]`.
    pub fn bell_overlaps(&self) -> Result<BellTable> {
        if self.dims.len() != 2 || self.dims[0] != self.dims[1] {
            return Err(Error::DimensionMismatch(format!(
                "Bell overlaps need two equal qudits, got {:?}",
                self.dims
            )));
        }
        let d = self.dims[0];
        let mut t = vec![vec![0.0; d]; d];
        for (z, row) in t.iter_mut().enumerate() {
            for (x, v) in row.iter_mut().enumerate() {
                *v = self.fidelity_to_pure(&bell(d, z, x)?)?;
            }
        }
        Ok(t)
    }

}

/// `⟨Φ^{z,x}|ρ|Φ^{z,x}⟩` tables, indexed `[z][x]`.
pub type BellTable = Vec<Vec<f64>>;

/// `F(ρ, |ψ⟩⟨ψ|) = ⟨ψ|ρ|ψ⟩`.
pub fn fidelity_to_pure(rho: &DensityOperator, psi: &StateVector) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} vs vector of dimension {}",
            rho.dim(),
            psi.dim()
        )));
    }
    let v = psi.amps.dotc(&(&rho.m * &psi.amps));
    Ok(v.re)
}

fn digits(mut k: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for i in (0..dims.len()).rev() {
        out[i] = k % dims[i];
        k /= dims[i];
    }
    out
}

fn flat(ds: &[usize], dims: &[usize]) -> usize {
    ds.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::InvalidInput(format!("permutation {order:?} of {n} subsystems")));
    }
    for &o in order {
        if o >= n || seen[o] {
            return Err(Error::InvalidInput(format!("permutation {order:?} of {n} subsystems")));
        }
        seen[o] = true;
    }
    Ok(())
}

/// Index map for a subsystem permutation: `map[new] = old`.
fn permutation_map(dims: &[usize], order: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let new_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let total = product(dims);
    let map = (0..total)
        .map(|k| {
            let nd = digits(k, &new_dims);
            let mut od = vec![0; dims.len()];
            for (pos, &o) in order.iter().enumerate() {
                od[o] = nd[pos];
            }
            flat(&od, dims)
        })
        .collect();
    (map, new_dims)
}

pub fn permute_operator(m: &CMat, dims: &[usize], order: &[usize]) -> Result<(CMat, Vec<usize>)> {
    check_order(order, dims.len())?;
    let (map, new_dims) = permutation_map(dims, order);
    let n = map.len();
    Ok((CMat::from_fn(n, n, |i, j| m[(map[i], map[j])]), new_dims))
}

pub fn partial_trace(m: &CMat, dims: &[usize], traced: &[usize]) -> Result<(CMat, Vec<usize>)> {
    if traced.iter().any(|&t| t >= dims.len()) {
        return Err(Error::InvalidInput(format!("cannot trace {traced:?} of {dims:?}")));
    }
    let keep: Vec<usize> = (0..dims.len()).filter(|k| !traced.contains(k)).collect();
    let mut order = keep.clone();
    order.extend(traced.iter().copied());
    let (pm, pd) = permute_operator(m, dims, &order)?;
    let dk = product(&pd[..keep.len()]);
    let dr = product(&pd[keep.len()..]);
    let out = CMat::from_fn(dk, dk, |i, j| (0..dr).map(|k| pm[(i * dr + k, j * dr + k)]).sum());
    Ok((out, keep.iter().map(|&k| dims[k]).collect()))
}

/// A completely positive, trace non-increasing map in Kraus form.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    ops: Vec<CMat>,
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMat>, in_dims: Vec<usize>, out_dims: Vec<usize>) -> Result<Self> {
        let (din, dout) = (product(&in_dims), product(&out_dims));
        if ops.is_empty() {
            return Err(Error::InvalidInput("channel with no Kraus operators".into()));
        }
        for k in &ops {
            if k.nrows() != dout || k.ncols() != din {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator is {}x{}, expected {dout}x{din}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let ch = Self { ops, in_dims, out_dims };
        let s = ch.kraus_sum();
        let herm = (&s + s.adjoint()) * c(0.5);
        let top = herm.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top > 1.0 + KRAUS_TOL {
            return Err(Error::InvalidInput(format!("Kraus operators sum to more than identity ({top})")));
        }
        Ok(ch)
    }

    pub fn identity(d: usize) -> Self {
        Self { ops: vec![CMat::identity(d, d)], in_dims: vec![d], out_dims: vec![d] }
    }

    /// Unitary channel `U ρ U†`.
    pub fn unitary(u: CMat, dims: Vec<usize>) -> Result<Self> {
        Self::new(vec![u], dims.clone(), dims)
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    /// `Σ K†K`.
    pub fn kraus_sum(&self) -> CMat {
        let d = product(&self.in_dims);
        self.ops.iter().fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * k)
    }

    pub fn is_trace_preserving(&self) -> bool {
        let d = product(&self.in_dims);
        (self.kraus_sum() - CMat::identity(d, d)).camax() <= KRAUS_TOL
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &KrausChannel) -> Result<KrausChannel> {
        if product(&self.out_dims) != product(&other.in_dims) {
            return Err(Error::DimensionMismatch("channel composition dimension mismatch".into()));
        }
        let ops = other
            .ops
            .iter()
            .flat_map(|b| self.ops.iter().map(move |a| b * a))
            .collect();
        Ok(KrausChannel { ops, in_dims: self.in_dims.clone(), out_dims: other.out_dims.clone() })
    }

    pub fn tensor(&self, other: &KrausChannel) -> KrausChannel {
        let ops = self
            .ops
            .iter()
            .flat_map(|a| other.ops.iter().map(move |b| a.kronecker(b)))
            .collect();
        let mut in_dims = self.in_dims.clone();
        in_dims.extend_from_slice(&other.in_dims);
        let mut out_dims = self.out_dims.clone();
        out_dims.extend_from_slice(&other.out_dims);
        KrausChannel { ops, in_dims, out_dims }
    }

    /// Applies the map to the whole operator, returning `Σ K m K†`.
    pub fn apply_matrix(&self, m: &CMat) -> CMat {
        let d = product(&self.out_dims);
        self.ops.iter().fold(CMat::zeros(d, d), |acc, k| acc + k * m * k.adjoint())
    }
}

/// Applies `channel` to the listed subsystems of an operator. When the
/// channel keeps the subsystem count, outputs return to their original
/// positions; otherwise the channel's outputs come first, followed by the
/// untouched subsystems in order.
pub fn apply_operator(
    channel: &KrausChannel,
    m: &CMat,
    dims: &[usize],
    subsystems: &[usize],
) -> Result<(CMat, Vec<usize>)> {
    if subsystems.len() != channel.in_dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel acts on {} subsystems, {} listed",
            channel.in_dims.len(),
            subsystems.len()
        )));
    }
    for (k, &s) in subsystems.iter().enumerate() {
        if s >= dims.len() || dims[s] != channel.in_dims[k] {
            return Err(Error::DimensionMismatch(format!(
                "subsystem {s} does not match channel input dimension {}",
                channel.in_dims[k]
            )));
        }
    }
    let rest: Vec<usize> = (0..dims.len()).filter(|k| !subsystems.contains(k)).collect();
    let mut order = subsystems.to_vec();
    order.extend(rest.iter().copied());
    check_order(&order, dims.len())?;
    let (pm, _) = permute_operator(m, dims, &order)?;
    let dr = product(&rest.iter().map(|&k| dims[k]).collect::<Vec<_>>());
    let id = CMat::identity(dr, dr);
    let full = KrausChannel {
        ops: channel.ops.iter().map(|k| k.kronecker(&id)).collect(),
        in_dims: vec![],
        out_dims: vec![product(&channel.out_dims) * dr],
    };
    let out = full.apply_matrix(&pm);
    let mut out_dims = channel.out_dims.clone();
    out_dims.extend(rest.iter().map(|&k| dims[k]));
    if channel.out_dims.len() == channel.in_dims.len() {
        // invert the permutation
        let mut inv = vec![0; order.len()];
        for (pos, &o) in order.iter().enumerate() {
            inv[o] = pos;
        }
        return permute_operator(&out, &out_dims, &inv);
    }
    Ok((out, out_dims))
}

/// Applies a trace-preserving channel to the listed subsystems.
pub fn apply(channel: &KrausChannel, rho: &DensityOperator, subsystems: &[usize]) -> Result<DensityOperator> {
    if !channel.is_trace_preserving() {
        return Err(Error::InvalidInput(
            "channel is not trace preserving; use apply_branch".into(),
        ));
    }
    let (m, dims) = apply_operator(channel, &rho.m, &rho.dims, subsystems)?;
    Ok(DensityOperator { m, dims })
}

/// Applies a trace non-increasing branch, returning its probability and the
/// normalised conditional state.
pub fn apply_branch(
    channel: &KrausChannel,
    rho: &DensityOperator,
    subsystems: &[usize],
) -> Result<(f64, DensityOperator)> {
    let (m, dims) = apply_operator(channel, &rho.m, &rho.dims, subsystems)?;
    DensityOperator::from_unnormalized(m, dims)
}

/// Discrete Weyl operator `Z = Σ e^{2πik/d}|k⟩⟨k|`.
pub fn weyl_z(d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| {
        if i == j {
            C::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / d as f64)
        } else {
            c(0.0)
        }
    })
}

/// Discrete Weyl operator `X = Σ |k+1⟩⟨k|`.
pub fn weyl_x(d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| if i == (j + 1) % d { c(1.0) } else { c(0.0) })
}

fn matrix_power(m: &CMat, k: usize) -> CMat {
    let mut out = CMat::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// `Z^z X^x`.
pub fn weyl(d: usize, z: usize, x: usize) -> CMat {
    matrix_power(&weyl_z(d), z % d) * matrix_power(&weyl_x(d), x % d)
}

/// `|Φ^{z,x}⟩ = (Z^z X^x ⊗ 1)|Φ⟩` with `|Φ⟩ = d^{-1/2} Σ |k,k⟩`.
pub fn bell(d: usize, z: usize, x: usize) -> Result<StateVector> {
    if d < 2 || z >= d || x >= d {
        return Err(Error::InvalidInput(format!("Bell indices ({z},{x}) for d = {d}")));
    }
    let mut phi = DVector::zeros(d * d);
    for k in 0..d {
        phi[k * d + k] = c(1.0 / (d as f64).sqrt());
    }
    let op = weyl(d, z, x).kronecker(&CMat::identity(d, d));
    Ok(StateVector { amps: op * phi, dims: vec![d, d] })
}

/// `(|0…0⟩ + |1…1⟩)/√2` on `n` qubits.
pub fn ghz(n: usize) -> Result<StateVector> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("GHZ state needs n ≥ 2, got {n}")));
    }
    let dim = 1 << n;
    let mut amps = DVector::zeros(dim);
    amps[0] = c(std::f64::consts::FRAC_1_SQRT_2);
    amps[dim - 1] = c(std::f64::consts::FRAC_1_SQRT_2);
    Ok(StateVector { amps, dims: vec![2; n] })
}

fn check_adjacency(adj: &[Vec<u8>]) -> Result<usize> {
    let n = adj.len();
    for (i, row) in adj.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidInput("adjacency matrix is not square".into()));
        }
        if row[i] != 0 {
            return Err(Error::InvalidInput("adjacency matrix has a self-loop".into()));
        }
        for (j, &a) in row.iter().enumerate() {
            if a > 1 || adj[j][i] != a {
                return Err(Error::InvalidInput("adjacency matrix must be symmetric 0/1".into()));
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty graph".into()));
    }
    Ok(n)
}

fn bit(k: usize, i: usize, n: usize) -> usize {
    (k >> (n - 1 - i)) & 1
}

/// Graph state `2^{-n/2} Σ_α (−1)^{½ αᵀAα} |α⟩`.
pub fn graph_state(adj: &[Vec<u8>]) -> Result<StateVector> {
    let n = check_adjacency(adj)?;
    let dim = 1 << n;
    let norm = 1.0 / (dim as f64).sqrt();
    let amps = DVector::from_fn(dim, |k, _| {
        let mut e = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                e += adj[i][j] as usize * bit(k, i, n) * bit(k, j, n);
            }
        }
        c(if e % 2 == 0 { norm } else { -norm })
    });
    Ok(StateVector { amps, dims: vec![2; n] })
}

/// `CZ(G)` as a diagonal matrix on `n` qubits.
pub fn cz_graph(adj: &[Vec<u8>]) -> Result<CMat> {
    let n = check_adjacency(adj)?;
    let dim = 1 << n;
    Ok(CMat::from_fn(dim, dim, |i, j| {
        if i != j {
            return c(0.0);
        }
        let mut e = 0;
        for a in 0..n {
            for b in (a + 1)..n {
                e += adj[a][b] as usize * bit(i, a, n) * bit(i, b, n);
            }
        }
        c(if e % 2 == 0 { 1.0 } else { -1.0 })
    }))
}

/// Graph state built as `CZ(G)|+⟩^{⊗n}`.
pub fn graph_state_by_cz(adj: &[Vec<u8>]) -> Result<StateVector> {
    let n = check_adjacency(adj)?;
    let dim = 1 << n;
    let plus = DVector::from_element(dim, c(1.0 / (dim as f64).sqrt()));
    Ok(StateVector { amps: cz_graph(adj)? * plus, dims: vec![2; n] })
}

/// `Z^{x_1} ⊗ … ⊗ Z^{x_n}` for a bit string packed most-significant first.
fn z_string(xbits: usize, n: usize) -> CMat {
    let dim = 1 << n;
    CMat::from_fn(dim, dim, |i, j| {
        if i != j {
            return c(0.0);
        }
        let par = (i & xbits).count_ones() % 2;
        c(if par == 0 { 1.0 } else { -1.0 })
    })
}

/// Graph-state basis vector `|G^x⟩ = Z^x |G⟩`.
pub fn graph_basis(adj: &[Vec<u8>], xbits: usize) -> Result<StateVector> {
    let g = graph_state(adj)?;
    let n = g.dims.len();
    Ok(StateVector { amps: z_string(xbits, n) * g.amps, dims: g.dims })
}

fn row_vector(v: &StateVector) -> CMat {
    let a = v.amps.adjoint();
    CMat::from_row_slice(1, a.len(), a.as_slice())
}

fn check_bipartite_chain(rho: &DensityOperator, parts: usize, d: usize) -> Result<()> {
    if rho.dims.len() != parts || rho.dims.iter().any(|&k| k != d) {
        return Err(Error::DimensionMismatch(format!(
            "expected {parts} subsystems of dimension {d}, got {:?}",
            rho.dims
        )));
    }
    Ok(())
}

/// Entanglement swapping with `n` intermediate nodes: Bell measurement on
/// every `R_j^1 R_j^2` pair and correction `Z^{Σz} X^{Σx}` on `B`.
/// Input order `A, R_1^1, R_1^2, …, R_n^1, R_n^2, B`; output `A B`.
pub fn swap_chain_channel(rho_joint: &DensityOperator, n: usize, d: usize) -> Result<DensityOperator> {
    if n == 0 {
        return Err(Error::InvalidInput("swapping needs n ≥ 1".into()));
    }
    check_bipartite_chain(rho_joint, 2 * n + 2, d)?;
    let bells: Vec<Vec<CMat>> = (0..d)
        .map(|z| (0..d).map(|x| row_vector(&bell(d, z, x).expect("valid indices"))).collect())
        .collect();
    let id = CMat::identity(d, d);
    let dd = d * d;
    let mut ops = Vec::with_capacity(dd.pow(n as u32));
    for code in 0..dd.pow(n as u32) {
        let mut k = id.clone();
        let (mut zs, mut xs) = (0, 0);
        let mut rem = code;
        let mut outcomes = Vec::with_capacity(n);
        for _ in 0..n {
            outcomes.push(rem % dd);
            rem /= dd;
        }
        for &o in outcomes.iter().rev() {
            let (z, x) = (o / d, o % d);
            zs += z;
            xs += x;
            k = k.kronecker(&bells[z][x]);
        }
        k = k.kronecker(&weyl(d, zs % d, xs % d));
        ops.push(k);
    }
    let ch = KrausChannel { ops, in_dims: rho_joint.dims.clone(), out_dims: vec![d, d] };
    Ok(DensityOperator { m: ch.apply_matrix(&rho_joint.m), dims: vec![d, d] })
}

/// Product of link states in chain order.
pub fn chain_product(links: &[DensityOperator]) -> Result<DensityOperator> {
    let mut it = links.iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidInput("empty chain".into()))?
        .clone();
    Ok(it.fold(first, |acc, r| acc.tensor(r)))
}

fn check_tables(tables: &[BellTable], d: usize) -> Result<()> {
    for t in tables {
        if t.len() != d || t.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!("Bell table is not {d}x{d}")));
        }
        let s: f64 = t.iter().flatten().sum();
        if t.iter().flatten().any(|&v| v < -TRACE_TOL) || s > 1.0 + TRACE_TOL {
            return Err(Error::InvalidInput(format!("Bell table entries must be ≥ 0 with sum ≤ 1 (sum {s})")));
        }
    }
    Ok(())
}

/// Closed-form fidelity to `Φ` after entanglement swapping of `n+1` links
/// with Bell-overlap tables `tables[0..=n]`.
pub fn swap_fidelity(tables: &[BellTable]) -> Result<f64> {
    if tables.len() < 2 {
        return Err(Error::InvalidInput("swapping needs at least two links".into()));
    }
    let d = tables[0].len();
    check_tables(tables, d)?;
    let n = tables.len() - 1;
    let dd = d * d;
    let mut total = 0.0;
    for code in 0..dd.pow(n as u32) {
        let mut rem = code;
        let (mut zs, mut xs) = (0, 0);
        let mut prod = 1.0;
        for t in &tables[1..] {
            let o = rem % dd;
            rem /= dd;
            let (z, x) = (o / d, o % d);
            zs += z;
            xs += x;
            prod *= t[z][x];
        }
        let zp = (d - zs % d) % d;
        let xp = (d - xs % d) % d;
        total += tables[0][zp][xp] * prod;
    }
    Ok(total)
}

fn cnot() -> CMat {
    let mut m = CMat::zeros(4, 4);
    m[(0, 0)] = c(1.0);
    m[(1, 1)] = c(1.0);
    m[(2, 3)] = c(1.0);
    m[(3, 2)] = c(1.0);
    m
}

/// `⟨x|_2 CNOT_{12}`: two qubits to one.
fn cnot_measure(x: usize) -> CMat {
    let bra = row_vector(&StateVector::basis(2, x));
    CMat::identity(2, 2).kronecker(&bra) * cnot()
}

/// GHZ swapping: CNOT and Z-basis measurement at each intermediate node
/// with the outcome corrected on the next node. Input order
/// `A, R_1^1, R_1^2, …, R_n^2, B`; output `A, R_1^1, …, R_n^1, B`.
pub fn ghz_swap_channel(rho_joint: &DensityOperator, n: usize) -> Result<DensityOperator> {
    if n == 0 {
        return Err(Error::InvalidInput("GHZ swapping needs n ≥ 1".into()));
    }
    check_bipartite_chain(rho_joint, 2 * n + 2, 2)?;
    let x = weyl_x(2);
    let id = CMat::identity(2, 2);
    let mut ops = Vec::with_capacity(1 << n);
    for code in 0..(1usize << n) {
        let xs: Vec<usize> = (0..n).map(|i| bit(code, i, n)).collect();
        let mut k = id.clone();
        for i in 0..n {
            let mut node = cnot_measure(xs[i]);
            if i > 0 && xs[i - 1] == 1 {
                node = node * x.kronecker(&id);
            }
            k = k.kronecker(&node);
        }
        k = k.kronecker(&matrix_power(&x, xs[n - 1]));
        ops.push(k);
    }
    let ch = KrausChannel { ops, in_dims: rho_joint.dims.clone(), out_dims: vec![2; n + 2] };
    Ok(DensityOperator { m: ch.apply_matrix(&rho_joint.m), dims: vec![2; n + 2] })
}

/// Closed-form fidelity to `GHZ_{n+2}` after GHZ swapping of `n+1` qubit links.
pub fn ghz_swap_fidelity(tables: &[BellTable]) -> Result<f64> {
    if tables.len() < 2 {
        return Err(Error::InvalidInput("GHZ swapping needs at least two links".into()));
    }
    check_tables(tables, 2)?;
    let n = tables.len() - 1;
    let mut total = 0.0;
    for code in 0..(1usize << n) {
        let mut prod = 1.0;
        let mut zs = 0;
        for (i, t) in tables[1..].iter().enumerate() {
            let z = bit(code, i, n);
            zs += z;
            prod *= t[z][0];
        }
        total += tables[0][zs % 2][0] * prod;
    }
    Ok(total)
}

/// Graph-state distribution from a central node. Input is `n` pairs in
/// order `A_1, R_1, A_2, R_2, …`; output `A_1, …, A_n`.
pub fn graph_dist_channel(rho_joint: &DensityOperator, adj: &[Vec<u8>]) -> Result<DensityOperator> {
    let n = check_adjacency(adj)?;
    if n < 2 {
        return Err(Error::InvalidInput("graph distribution needs n ≥ 2".into()));
    }
    check_bipartite_chain(rho_joint, 2 * n, 2)?;
    let mut order: Vec<usize> = (0..n).map(|i| 2 * i).collect();
    order.extend((0..n).map(|i| 2 * i + 1));
    let (m, _) = permute_operator(&rho_joint.m, &rho_joint.dims, &order)?;
    let mut ops = Vec::with_capacity(1 << n);
    for xbits in 0..(1usize << n) {
        let gx = graph_basis(adj, xbits)?;
        ops.push(z_string(xbits, n).kronecker(&row_vector(&gx)));
    }
    let ch = KrausChannel { ops, in_dims: vec![2; 2 * n], out_dims: vec![2; n] };
    Ok(DensityOperator { m: ch.apply_matrix(&m), dims: vec![2; n] })
}

/// Closed-form fidelity to `|G⟩` after distribution with link tables
/// `tables[i]` for pair `A_i R_i`.
pub fn graph_dist_fidelity(tables: &[BellTable], adj: &[Vec<u8>]) -> Result<f64> {
    let n = check_adjacency(adj)?;
    if tables.len() != n {
        return Err(Error::DimensionMismatch(format!("{} tables for {n} vertices", tables.len())));
    }
    check_tables(tables, 2)?;
    let mut total = 0.0;
    for xbits in 0..(1usize << n) {
        let xs: Vec<usize> = (0..n).map(|i| bit(xbits, i, n)).collect();
        let mut prod = 1.0;
        for i in 0..n {
            let z: usize = (0..n).map(|j| adj[i][j] as usize * xs[j]).sum::<usize>() % 2;
            prod *= tables[i][z][xs[i]];
        }
        total += prod;
    }
    Ok(total)
}

/// BBPSSW success probability and output fidelity for isotropic inputs.
pub fn distill_bbpssw(f1: f64, f2: f64) -> Result<(f64, f64)> {
    for f in [f1, f2] {
        if !(0.25..=1.0).contains(&f) {
            return Err(Error::InvalidInput(format!("fidelity {f} outside [1/4, 1]")));
        }
    }
    let p = 8.0 / 9.0 * f1 * f2 - 2.0 / 9.0 * (f1 + f2) + 5.0 / 9.0;
    let num = 10.0 / 9.0 * f1 * f2 - 1.0 / 9.0 * (f1 + f2) + 1.0 / 9.0;
    Ok((p, num / p))
}

/// Projection onto the isotropic family: `F Φ + (1−F)(1−Φ)/3` for qubits,
/// `F Φ + (1−F)(1−Φ)/(d²−1)` in general.
pub fn isotropic_twirl(rho: &DensityOperator) -> Result<DensityOperator> {
    if rho.dims.len() != 2 || rho.dims[0] != rho.dims[1] {
        return Err(Error::DimensionMismatch(format!("twirl needs two equal qudits, got {:?}", rho.dims)));
    }
    let d = rho.dims[0];
    let phi = bell(d, 0, 0)?;
    let f = rho.fidelity_to_pure(&phi)?;
    let p = phi.projector();
    let dd = d * d;
    let m = &p * c(f) + (CMat::identity(dd, dd) - &p) * c((1.0 - f) / (dd as f64 - 1.0));
    Ok(DensityOperator { m, dims: rho.dims.clone() })
}

/// BBPSSW computed as an instrument: twirl both pairs, bilateral CNOT,
/// Z-basis measurement of the targets, keep equal outcomes. Inputs are
/// pairs `A_j B_j`; returns the success probability and output state on
/// `A_1 B_1`.
pub fn bbpssw_instrument(rho1: &DensityOperator, rho2: &DensityOperator) -> Result<(f64, DensityOperator)> {
    let r1 = isotropic_twirl(rho1)?;
    let r2 = isotropic_twirl(rho2)?;
    if r1.dims != vec![2, 2] {
        return Err(Error::DimensionMismatch("BBPSSW needs qubit pairs".into()));
    }
    // A1 B1 A2 B2 → A1 A2 B1 B2
    let joint = r1.tensor(&r2).permute(&[0, 2, 1, 3])?;
    let ops = (0..2).map(|x| cnot_measure(x).kronecker(&cnot_measure(x))).collect();
    let ch = KrausChannel::new(ops, vec![2; 4], vec![2, 2])?;
    let out = ch.apply_matrix(&joint.m);
    DensityOperator::from_unnormalized(out, vec![2, 2])
}

/// Amplitude damping with decay probability `γ`.
pub fn amplitude_damping(gamma: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!("damping parameter {gamma} outside [0,1]")));
    }
    let mut k0 = CMat::zeros(2, 2);
    k0[(0, 0)] = c(1.0);
    k0[(1, 1)] = c((1.0 - gamma).sqrt());
    let mut k1 = CMat::zeros(2, 2);
    k1[(0, 1)] = c(gamma.sqrt());
    KrausChannel::new(vec![k0, k1], vec![2], vec![2])
}

/// Pure loss on a `d`-rail qudit: `X ↦ ηX + (1−η)Tr[X]|vac⟩⟨vac|`, the
/// vacuum flag being index `d` of the `d+1` dimensional output.
pub fn pure_loss_drail_channel(d: usize, eta: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!("transmissivity {eta} outside [0,1]")));
    }
    let mut ops = Vec::with_capacity(d + 1);
    let mut embed = CMat::zeros(d + 1, d);
    for k in 0..d {
        embed[(k, k)] = c(eta.sqrt());
    }
    ops.push(embed);
    for k in 0..d {
        let mut e = CMat::zeros(d + 1, d);
        e[(d, k)] = c((1.0 - eta).sqrt());
        ops.push(e);
    }
    KrausChannel::new(ops, vec![d], vec![d + 1])
}

pub fn pure_loss_drail(x: &DensityOperator, eta: f64) -> Result<DensityOperator> {
    if x.dims.len() != 1 {
        return Err(Error::DimensionMismatch("d-rail loss acts on a single qudit".into()));
    }
    apply(&pure_loss_drail_channel(x.dims[0], eta)?, x, &[0])
}

/// Coefficients of a two-qubit Bell-diagonal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellDiagCoeffs {
    pub phi_plus: f64,
    pub phi_minus: f64,
    pub psi_plus: f64,
    pub psi_minus: f64,
}

impl BellDiagCoeffs {
    pub fn new(phi_plus: f64, phi_minus: f64, psi_plus: f64, psi_minus: f64) -> Result<Self> {
        let v = [phi_plus, phi_minus, psi_plus, psi_minus];
        if v.iter().any(|&x| !(x >= -1e-12)) {
            return Err(Error::InvalidProbability(format!("negative Bell coefficient in {v:?}")));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbability(format!("Bell coefficients sum to {s}")));
        }
        Ok(Self { phi_plus, phi_minus, psi_plus, psi_minus })
    }

    /// Werner-type coefficients `(F, (1−F)/3, (1−F)/3, (1−F)/3)`.
    pub fn werner(f: f64) -> Result<Self> {
        let r = (1.0 - f) / 3.0;
        Self::new(f, r, r, r)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.phi_plus, self.phi_minus, self.psi_plus, self.psi_minus]
    }

    /// Overlap table `[z][x]`: `Φ^{0,0}=Φ+`, `Φ^{1,0}=Φ−`, `Φ^{0,1}=Ψ+`,
    /// `Φ^{1,1}=Ψ−` up to phase.
    pub fn table(&self) -> BellTable {
        vec![vec![self.phi_plus, self.psi_plus], vec![self.phi_minus, self.psi_minus]]
    }

    pub fn to_density(&self) -> DensityOperator {
        let t = self.table();
        let mut m = CMat::zeros(4, 4);
        for z in 0..2 {
            for x in 0..2 {
                m += bell(2, z, x).expect("valid").projector() * c(t[z][x]);
            }
        }
        DensityOperator { m, dims: vec![2, 2] }
    }
}

/// A Ginibre-random mixed state on `dims`.
pub fn random_density<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> DensityOperator {
    let d = product(dims);
    let g = CMat::from_fn(d, d, |_, _| C::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityOperator { m: m / c(tr), dims: dims.to_vec() }
}

/// A random two-qubit Bell-diagonal state.
pub fn random_bell_diagonal<R: Rng + ?Sized>(rng: &mut R) -> BellDiagCoeffs {
    let w: Vec<f64> = (0..4).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = w.iter().sum();
    BellDiagCoeffs { phi_plus: w[0] / s, phi_minus: w[1] / s, psi_plus: w[2] / s, psi_minus: w[3] / s }
}
