//! Dense linear programs and the MDP linear programs built on them.
//!
//! The solver is a two-phase bounded-variable primal simplex on a dense
//! tableau. Pricing is Dantzig's rule; after a run of degenerate pivots it
//! switches to Bland's rule until the objective moves again, which rules out
//! cycling. Ties are broken by lowest variable index.

use nalgebra::{DMatrix, DVector};

use crate::simplex_core::{absorbing_states, DecisionFunction, Mdp, ProbVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// `opt cᵀx  s.t.  A x = b,  lo ≤ x ≤ hi`. Bounds may be infinite.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        sense: Sense,
        a_eq: DMatrix<f64>,
        b_eq: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let n = objective.len();
        if a_eq.ncols() != n || lower.len() != n || upper.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "objective has {n} entries, constraint matrix {} columns, bounds {}/{}",
                a_eq.ncols(),
                lower.len(),
                upper.len()
            )));
        }
        if a_eq.nrows() != b_eq.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint rows but {} right-hand sides",
                a_eq.nrows(),
                b_eq.len()
            )));
        }
        for k in 0..n {
            if lower[k].is_nan() || upper[k].is_nan() || lower[k] > upper[k] || lower[k] == f64::INFINITY || upper[k] == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!(
                    "variable {k} has bounds [{}, {}]",
                    lower[k], upper[k]
                )));
            }
        }
        if objective.iter().chain(b_eq.iter()).chain(a_eq.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite linear program data".into()));
        }
        Ok(Self { objective, sense, a_eq, b_eq, lower, upper })
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.b_eq.len()
    }

    /// Largest violation of the equality constraints and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> (f64, f64) {
        let xv = DVector::from_column_slice(x);
        let r = &self.a_eq * xv;
        let eq = r
            .iter()
            .zip(&self.b_eq)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let bd = (0..x.len())
            .map(|k| (self.lower[k] - x[k]).max(x[k] - self.upper[k]).max(0.0))
            .fold(0.0, f64::max);
        (eq, bd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal feasibility (constraint residual and phase-one objective).
    pub feasibility: f64,
    /// Reduced-cost threshold for optimality.
    pub optimality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feasibility: 1e-8, optimality: 1e-9 }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 30;
/// Primal slack allowed by the two-pass ratio test.
const HARRIS_SLACK: f64 = 1e-10;
/// Pivots between rebuilds of the tableau from the original columns.
const REFACTOR_EVERY: usize = 64;
const MAX_PIVOT_TOL: f64 = 1e-5;

/// How a solver column maps back to an original variable.
#[derive(Debug, Clone, Copy)]
struct ColumnMap {
    var: usize,
    sign: f64,
}

struct Tableau {
    m: usize,
    n: usize,
    t: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    xb: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    pivot_tol: f64,
    /// Last basis known to factor cleanly, with the nonbasic bound flags.
    checkpoint: (Vec<usize>, Vec<bool>),
    a0: DMatrix<f64>,
    b0: DVector<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum RunOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.n..(i + 1) * self.n]
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    /// Rebuilds the tableau, basic values and reduced costs from the
    /// original columns and the current basis. Leaves the state untouched if
    /// the basis matrix is numerically singular.
    fn refactor(&mut self) -> bool {
        let (m, n) = (self.m, self.n);
        if m == 0 {
            return true;
        }
        let bmat = self.a0.select_columns(&self.basis);
        let lu = bmat.lu();
        let Some(tm) = lu.solve(&self.a0) else {
            return false;
        };
        let mut rhs = self.b0.clone();
        for j in 0..n {
            if !self.is_basic[j] && self.at_upper[j] {
                rhs.axpy(-self.upper[j], &self.a0.column(j), 1.0);
            }
        }
        let Some(xb) = lu.solve(&rhs) else {
            return false;
        };
        if tm.iter().chain(xb.iter()).any(|x| !x.is_finite()) {
            return false;
        }
        for i in 0..m {
            for j in 0..n {
                self.t[i * n + j] = tm[(i, j)];
            }
            self.t[i * n + self.basis[i]] = 1.0;
            self.xb[i] = xb[i];
        }
        for i in 0..m {
            for k in 0..m {
                if k != i {
                    self.t[k * n + self.basis[i]] = 0.0;
                }
            }
        }
        let cost = self.cost.clone();
        self.set_costs(&cost);
        true
    }

    /// Refactors and records the basis as a checkpoint. When the basis has
    /// become singular through round-off, returns to the last checkpoint and
    /// tightens the pivot tolerance.
    fn refresh(&mut self) -> Result<()> {
        if self.refactor() {
            self.checkpoint = (self.basis.clone(), self.at_upper.clone());
            return Ok(());
        }
        let (basis, at_upper) = self.checkpoint.clone();
        self.is_basic = vec![false; self.n];
        for &b in &basis {
            self.is_basic[b] = true;
        }
        self.basis = basis;
        self.at_upper = at_upper;
        if self.pivot_tol >= MAX_PIVOT_TOL || !self.refactor() {
            return Err(Error::NonConvergence("simplex basis became singular".into()));
        }
        self.pivot_tol *= 100.0;
        Ok(())
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.cost = cost.to_vec();
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.n..(i + 1) * self.n];
                for (dj, &tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for i in 0..self.m {
            d[self.basis[i]] = 0.0;
        }
        self.d = d;
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.n;
        let piv = self.t[r * n + j];
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for x in row.iter_mut() {
                *x /= piv;
            }
            row[j] = 1.0;
        }
        let nz: Vec<usize> = (0..n).filter(|&k| self.t[r * n + k] != 0.0).collect();
        let prow: Vec<f64> = nz.iter().map(|&k| self.t[r * n + k]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * n..(i + 1) * n];
            for (&k, &pk) in nz.iter().zip(&prow) {
                row[k] -= f * pk;
            }
            row[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for (&k, &pk) in nz.iter().zip(&prow) {
                self.d[k] -= f * pk;
            }
            self.d[j] = 0.0;
        }
        let old = self.basis[r];
        self.is_basic[old] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    /// Textbook minimum-ratio test. Returns the step length and the leaving
    /// row with the bound it leaves at.
    fn ratio_exact(&self, j: usize, dir: f64, bland: bool) -> (f64, Option<(usize, bool)>) {
        let mut theta = self.upper[j];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_alpha = 0.0;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.n + j];
            let Some((lim, to_upper)) = self.row_limit(i, alpha, 0.0) else {
                continue;
            };
            let better = match leave {
                None => lim < theta,
                Some((li, _)) => {
                    let close = (lim - theta).abs() <= 1e-12 * (1.0 + theta.abs());
                    if close {
                        if bland {
                            self.basis[i] < self.basis[li]
                        } else {
                            alpha.abs() > leave_alpha
                        }
                    } else {
                        lim < theta
                    }
                }
            };
            if better {
                theta = lim;
                leave = Some((i, to_upper));
                leave_alpha = alpha.abs();
            }
        }
        (theta, leave)
    }

    /// Two-pass ratio test: bound the step with slightly relaxed limits, then
    /// take the largest pivot among rows that block within that bound.
    fn ratio_harris(&self, j: usize, dir: f64) -> (f64, Option<(usize, bool)>) {
        let mut relaxed = f64::INFINITY;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.n + j];
            if let Some((lim, _)) = self.row_limit(i, alpha, HARRIS_SLACK) {
                relaxed = relaxed.min(lim);
            }
        }
        if self.upper[j] <= relaxed {
            return (self.upper[j], None);
        }
        let mut best: Option<(usize, bool, f64, f64)> = None;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.n + j];
            let Some((lim, to_upper)) = self.row_limit(i, alpha, 0.0) else {
                continue;
            };
            if lim <= relaxed && best.map_or(true, |(_, _, _, a)| alpha.abs() > a) {
                best = Some((i, to_upper, lim, alpha.abs()));
            }
        }
        match best {
            Some((i, to_upper, lim, _)) => (lim, Some((i, to_upper))),
            None => self.ratio_exact(j, dir, false),
        }
    }

    /// Step at which basic row `i` reaches a bound when the entering column
    /// moves with rate `alpha`, with the bound relaxed by `slack`.
    fn row_limit(&self, i: usize, alpha: f64, slack: f64) -> Option<(f64, bool)> {
        let b = self.basis[i];
        if alpha > self.pivot_tol {
            Some(((self.xb[i] + slack).max(0.0) / alpha, false))
        } else if alpha < -self.pivot_tol && self.upper[b].is_finite() {
            Some(((self.upper[b] - self.xb[i] + slack).max(0.0) / -alpha, true))
        } else {
            None
        }
    }

    fn run(&mut self, allowed: &[bool], tol: &Tolerances) -> Result<RunOutcome> {
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if since_refactor >= REFACTOR_EVERY {
                self.refresh()?;
                since_refactor = 0;
            }
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::NonConvergence(format!(
                    "simplex exceeded {} iterations",
                    self.max_iterations
                )));
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering: Option<usize> = None;
            let mut best = 0.0;
            for j in 0..self.n {
                if self.is_basic[j] || !allowed[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let dj = self.d[j];
                let score = if self.at_upper[j] { dj } else { -dj };
                if score > tol.optimality {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    if score > best {
                        best = score;
                        entering = Some(j);
                    }
                }
            }
            let Some(j) = entering else {
                // Confirm optimality on freshly computed reduced costs.
                if since_refactor > 0 {
                    self.refresh()?;
                    since_refactor = 0;
                    continue;
                }
                return Ok(RunOutcome::Optimal);
            };
            since_refactor += 1;
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            let (theta, leave) = if bland {
                self.ratio_exact(j, dir, true)
            } else {
                self.ratio_harris(j, dir)
            };
            if theta.is_infinite() {
                return Ok(RunOutcome::Unbounded);
            }
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..self.m {
                let a = self.t[i * self.n + j];
                if a != 0.0 {
                    self.xb[i] -= dir * theta * a;
                }
            }
            match leave {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let entering_value = self.nonbasic_value(j) + dir * theta;
                    let old = self.basis[r];
                    self.at_upper[old] = to_upper;
                    self.pivot(r, j);
                    self.xb[r] = entering_value;
                    self.at_upper[j] = false;
                }
            }
        }
    }
}

/// Solves a linear program. Infeasible and unbounded problems are reported
/// through [`LpStatus`]; numerical breakdown is an error.
pub fn solve(lp: &LinearProgram, tol: &Tolerances) -> Result<LpSolution> {
    let m = lp.n_constraints();
    let nv = lp.n_vars();

    // Shift every variable to a [0, u] column (free variables split in two).
    let mut cols: Vec<ColumnMap> = Vec::new();
    let mut col_upper: Vec<f64> = Vec::new();
    let mut offset = vec![0.0; nv];
    for k in 0..nv {
        let (lo, hi) = (lp.lower[k], lp.upper[k]);
        if lo.is_finite() {
            offset[k] = lo;
            cols.push(ColumnMap { var: k, sign: 1.0 });
            col_upper.push(hi - lo);
        } else if hi.is_finite() {
            offset[k] = hi;
            cols.push(ColumnMap { var: k, sign: -1.0 });
            col_upper.push(f64::INFINITY);
        } else {
            cols.push(ColumnMap { var: k, sign: 1.0 });
            col_upper.push(f64::INFINITY);
            cols.push(ColumnMap { var: k, sign: -1.0 });
            col_upper.push(f64::INFINITY);
        }
    }
    let ns = cols.len();
    let n = ns + m;
    let off = DVector::from_column_slice(&offset);
    let b_shift = DVector::from_column_slice(&lp.b_eq) - &lp.a_eq * off;
    let row_sign: Vec<f64> = b_shift.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();

    let mut t = vec![0.0; m * n];
    for i in 0..m {
        for (c, cm) in cols.iter().enumerate() {
            t[i * n + c] = row_sign[i] * cm.sign * lp.a_eq[(i, cm.var)];
        }
        t[i * n + ns + i] = 1.0;
    }
    let mut upper = col_upper.clone();
    upper.extend(std::iter::repeat(f64::INFINITY).take(m));
    let xb: Vec<f64> = (0..m).map(|i| row_sign[i] * b_shift[i]).collect();
    let mut is_basic = vec![false; n];
    for i in 0..m {
        is_basic[ns + i] = true;
    }
    let a0 = DMatrix::from_fn(m, n, |i, j| t[i * n + j]);
    let b0 = DVector::from_column_slice(&xb);
    let mut tab = Tableau {
        m,
        n,
        t,
        upper,
        basis: (ns..n).collect(),
        is_basic,
        at_upper: vec![false; n],
        xb,
        d: vec![0.0; n],
        cost: vec![0.0; n],
        pivot_tol: PIVOT_TOL,
        checkpoint: ((ns..n).collect(), vec![false; n]),
        a0,
        b0,
        iterations: 0,
        max_iterations: 50_000 + 50 * (m + n),
    };

    // Phase one: minimise the sum of artificials.
    let mut cost1 = vec![0.0; n];
    for c in cost1.iter_mut().skip(ns) {
        *c = 1.0;
    }
    tab.set_costs(&cost1);
    let all = vec![true; n];
    tab.run(&all, tol)?;
    let infeas: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= ns)
        .map(|i| tab.xb[i].abs())
        .sum();
    let scale = 1.0 + xb_scale(&lp.b_eq);
    if infeas > tol.feasibility * scale {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            values: vec![0.0; nv],
            objective_value: f64::NAN,
        });
    }
    // Drive artificials out of the basis where possible; rows where that
    // fails are redundant and keep their artificial pinned at zero.
    for r in 0..m {
        if tab.basis[r] < ns {
            continue;
        }
        let row = tab.row(r);
        let mut best: Option<usize> = None;
        let mut best_abs = PIVOT_TOL;
        for (j, &v) in row.iter().enumerate().take(ns) {
            if !tab.is_basic[j] && v.abs() > best_abs {
                best_abs = v.abs();
                best = Some(j);
            }
        }
        if let Some(j) = best {
            let value = tab.nonbasic_value(j);
            let old = tab.basis[r];
            tab.at_upper[old] = false;
            tab.pivot(r, j);
            tab.xb[r] = value;
            tab.at_upper[j] = false;
        }
    }
    for j in ns..n {
        tab.upper[j] = 0.0;
    }
    tab.refresh()?;
    let mut allowed = vec![true; n];
    for a in allowed.iter_mut().skip(ns) {
        *a = false;
    }

    // Phase two.
    let mut cost2 = vec![0.0; n];
    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    for (c, cm) in cols.iter().enumerate() {
        cost2[c] = flip * cm.sign * lp.objective[cm.var];
    }
    tab.set_costs(&cost2);
    if let RunOutcome::Unbounded = tab.run(&allowed, tol)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: vec![0.0; nv],
            objective_value: if lp.sense == Sense::Maximize { f64::INFINITY } else { f64::NEG_INFINITY },
        });
    }

    // Recover column values, refining the basic part with a fresh solve
    // against the original data.
    let mut colv: Vec<f64> = (0..n).map(|j| if tab.is_basic[j] { 0.0 } else { tab.nonbasic_value(j) }).collect();
    for i in 0..m {
        colv[tab.basis[i]] = tab.xb[i];
    }
    let column = |j: usize, i: usize| -> f64 {
        if j < ns {
            row_sign[i] * cols[j].sign * lp.a_eq[(i, cols[j].var)]
        } else if j - ns == i {
            1.0
        } else {
            0.0
        }
    };
    if m > 0 {
        let bmat = DMatrix::from_fn(m, m, |i, k| column(tab.basis[k], i));
        let mut rhs = DVector::from_fn(m, |i, _| row_sign[i] * b_shift[i]);
        for j in 0..n {
            if !tab.is_basic[j] && colv[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= column(j, i) * colv[j];
                }
            }
        }
        if let Some(sol) = bmat.lu().solve(&rhs) {
            if sol.iter().all(|x| x.is_finite()) {
                for i in 0..m {
                    colv[tab.basis[i]] = sol[i];
                }
            }
        }
    }
    let mut values = offset.clone();
    for (c, cm) in cols.iter().enumerate() {
        values[cm.var] += cm.sign * colv[c];
    }
    for k in 0..nv {
        // snap sub-tolerance bound violations
        if values[k] < lp.lower[k] && values[k] > lp.lower[k] - 1e-9 {
            values[k] = lp.lower[k];
        }
        if values[k] > lp.upper[k] && values[k] < lp.upper[k] + 1e-9 {
            values[k] = lp.upper[k];
        }
    }
    let (eq, bd) = lp.max_violation(&values);
    if eq > tol.feasibility * scale || bd > 1e-9 {
        return Err(Error::NonConvergence(format!(
            "simplex solution violates constraints by {eq:e} (bounds {bd:e})"
        )));
    }
    let objective_value = lp.objective.iter().zip(&values).map(|(c, x)| c * x).sum();
    Ok(LpSolution { status: LpStatus::Optimal, values, objective_value })
}

fn xb_scale(b: &[f64]) -> f64 {
    b.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub(crate) fn solve_optimal(lp: &LinearProgram, tol: &Tolerances) -> Result<LpSolution> {
    let sol = solve(lp, tol)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(Error::Infeasible("linear program is infeasible".into())),
        LpStatus::Unbounded => Err(Error::Unbounded("linear program is unbounded".into())),
    }
}

/// Row-by-row builder for sparse-ish equality constraints.
pub(crate) struct ProgramBuilder {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: Vec<f64>,
}

impl ProgramBuilder {
    pub(crate) fn new() -> Self {
        Self { n: 0, rows: Vec::new(), rhs: Vec::new(), lower: Vec::new(), upper: Vec::new(), objective: Vec::new() }
    }

    /// Adds `count` variables with the given bounds, returning the first index.
    pub(crate) fn vars(&mut self, count: usize, lo: f64, hi: f64) -> usize {
        let first = self.n;
        self.n += count;
        self.lower.extend(std::iter::repeat(lo).take(count));
        self.upper.extend(std::iter::repeat(hi).take(count));
        self.objective.extend(std::iter::repeat(0.0).take(count));
        first
    }

    pub(crate) fn set_objective(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    pub(crate) fn row(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(terms);
        self.rhs.push(rhs);
    }


    pub(crate) fn build(self, sense: Sense) -> Result<LinearProgram> {
        let mut a = DMatrix::zeros(self.rows.len(), self.n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(k, v) in r {
                a[(i, k)] += v;
            }
        }
        LinearProgram::new(self.objective, sense, a, self.rhs, self.lower, self.upper)
    }
}

/// Normalised ratio rows `num[a][s] / den[s]`, uniform where `den[s]` vanishes.
fn ratio_decision(num: &[Vec<f64>], den: &[f64], n_actions: usize) -> Vec<Vec<f64>> {
    den.iter()
        .enumerate()
        .map(|(s, &v)| {
            if v <= 1e-10 {
                return vec![1.0 / n_actions as f64; n_actions];
            }
            let mut row: Vec<f64> = (0..n_actions).map(|a| (num[a][s] / v).max(0.0)).collect();
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return vec![1.0 / n_actions as f64; n_actions];
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
            row
        })
        .collect()
}

/// Optimal steady-state expected value of `f` over stationary policies of an
/// MDP whose chains are ergodic.
pub fn mdp_steady_state_lp(mdp: &Mdp, f: &[f64]) -> Result<(f64, DecisionFunction)> {
    mdp_steady_state_lp_with(mdp, f, &Tolerances::default())
}

pub fn mdp_steady_state_lp_with(mdp: &Mdp, f: &[f64], tol: &Tolerances) -> Result<(f64, DecisionFunction)> {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    if f.len() != n {
        return Err(Error::DimensionMismatch(format!("f has {} entries, MDP has {n} states", f.len())));
    }
    let mut b = ProgramBuilder::new();
    let v = b.vars(n, 0.0, 1.0);
    let w: Vec<usize> = (0..na).map(|_| b.vars(n, 0.0, 1.0)).collect();
    for s in 0..n {
        b.set_objective(v + s, f[s]);
    }
    b.row((0..n).map(|s| (v + s, 1.0)).collect(), 1.0);
    for s in 0..n {
        let mut r: Vec<(usize, f64)> = (0..na).map(|a| (w[a] + s, 1.0)).collect();
        r.push((v + s, -1.0));
        b.row(r, 0.0);
    }
    for s2 in 0..n {
        let mut r = Vec::new();
        for a in 0..na {
            let t = mdp.transition(a);
            for s in 0..n {
                let p = t.get(s2, s);
                if p != 0.0 {
                    r.push((w[a] + s, p));
                }
            }
        }
        r.push((v + s2, -1.0));
        b.row(r, 0.0);
    }
    let sol = solve_optimal(&b.build(Sense::Maximize)?, tol)?;
    let vv = &sol.values[v..v + n];
    let ww: Vec<Vec<f64>> = w.iter().map(|&o| sol.values[o..o + n].to_vec()).collect();
    let d = DecisionFunction::from_raw(ratio_decision(&ww, vv, na));
    Ok((sol.objective_value, d))
}

/// Variable layout for the absorbing-value program.
pub(crate) struct AbsorbingLayout {
    pub transient: Vec<usize>,
    pub y: usize,
    pub v: Vec<usize>,
}

/// Builds the absorbing-value program. `exit_actions` lists the actions whose
/// transient→absorbing block enters the final constraint `Σ_a R^a v_a = x`;
/// passing every action gives the generic form.
pub(crate) fn absorbing_value_program(
    mdp: &Mdp,
    f: &[f64],
    initial_transient: &ProbVector,
    exit_actions: &[usize],
) -> Result<(LinearProgram, AbsorbingLayout)> {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    if f.len() != n {
        return Err(Error::DimensionMismatch(format!("f has {} entries, MDP has {n} states", f.len())));
    }
    let absorbing = absorbing_states(mdp);
    let transient: Vec<usize> = (0..n).filter(|s| !absorbing.contains(s)).collect();
    if absorbing.is_empty() {
        return Err(Error::InvalidInput("MDP has no absorbing states".into()));
    }
    if initial_transient.len() != transient.len() {
        return Err(Error::DimensionMismatch(format!(
            "initial vector has {} entries, {} transient states",
            initial_transient.len(),
            transient.len()
        )));
    }
    let (nt, nb) = (transient.len(), absorbing.len());
    let inf = f64::INFINITY;
    let mut b = ProgramBuilder::new();
    let x = b.vars(nb, 0.0, inf);
    let y = b.vars(nt, 0.0, inf);
    let w: Vec<usize> = (0..na).map(|_| b.vars(nb, 0.0, inf)).collect();
    let v: Vec<usize> = (0..na).map(|_| b.vars(nt, 0.0, inf)).collect();
    for (i, &s) in absorbing.iter().enumerate() {
        b.set_objective(x + i, f[s]);
    }
    // Σ_a Σ_i T^a_{abs→i} w_a = |1⟩|x⟩: the transient component is zero,
    // the absorbing component is x.
    for &s2 in &transient {
        let mut r = Vec::new();
        for a in 0..na {
            for (i, &s) in absorbing.iter().enumerate() {
                let p = mdp.transition(a).get(s2, s);
                if p != 0.0 {
                    r.push((w[a] + i, p));
                }
            }
        }
        b.row(r, 0.0);
    }
    for (k, &s2) in absorbing.iter().enumerate() {
        let mut r = vec![(x + k, -1.0)];
        for a in 0..na {
            for (i, &s) in absorbing.iter().enumerate() {
                let p = mdp.transition(a).get(s2, s);
                if p != 0.0 {
                    r.push((w[a] + i, p));
                }
            }
        }
        b.row(r, 0.0);
    }
    // Σ_a w_a = x, which with w ≥ 0 also bounds each w_a by x
    for i in 0..nb {
        let mut r: Vec<(usize, f64)> = (0..na).map(|a| (w[a] + i, 1.0)).collect();
        r.push((x + i, -1.0));
        b.row(r, 0.0);
    }
    // y − Σ_a Q^a v_a = init
    for (k, &s2) in transient.iter().enumerate() {
        let mut r = vec![(y + k, 1.0)];
        for a in 0..na {
            for (i, &s) in transient.iter().enumerate() {
                let p = mdp.transition(a).get(s2, s);
                if p != 0.0 {
                    r.push((v[a] + i, -p));
                }
            }
        }
        b.row(r, initial_transient.get(k));
    }
    // Σ_a v_a = y, likewise bounding each v_a
    for i in 0..nt {
        let mut r: Vec<(usize, f64)> = (0..na).map(|a| (v[a] + i, 1.0)).collect();
        r.push((y + i, -1.0));
        b.row(r, 0.0);
    }
    // Σ_a R^a v_a = x over the chosen actions
    for (k, &s2) in absorbing.iter().enumerate() {
        let mut r = vec![(x + k, -1.0)];
        for &a in exit_actions {
            for (i, &s) in transient.iter().enumerate() {
                let p = mdp.transition(a).get(s2, s);
                if p != 0.0 {
                    r.push((v[a] + i, p));
                }
            }
        }
        b.row(r, 0.0);
    }
    let lp = b.build(Sense::Maximize)?;
    Ok((lp, AbsorbingLayout { transient, y, v }))
}

/// Decision function from an absorbing-value solution: `v_a/y` on
/// transient states, uniform on absorbing states.
pub(crate) fn absorbing_decision(mdp: &Mdp, layout: &AbsorbingLayout, values: &[f64]) -> DecisionFunction {
    let na = mdp.n_actions();
    let nt = layout.transient.len();
    let y = &values[layout.y..layout.y + nt];
    let vv: Vec<Vec<f64>> = layout.v.iter().map(|&o| values[o..o + nt].to_vec()).collect();
    let rows = ratio_decision(&vv, y, na);
    let mut probs = vec![vec![1.0 / na as f64; na]; mdp.n_states()];
    for (k, &s) in layout.transient.iter().enumerate() {
        probs[s] = rows[k].clone();
    }
    DecisionFunction::from_raw(probs)
}

/// Optimal expected value of `f` at absorption, starting from
/// `initial_transient` (indexed over transient states in ascending order).
pub fn mdp_absorbing_value_lp(
    mdp: &Mdp,
    f: &[f64],
    initial_transient: &ProbVector,
) -> Result<(f64, DecisionFunction)> {
    mdp_absorbing_value_lp_with(mdp, f, initial_transient, &Tolerances::default())
}

pub fn mdp_absorbing_value_lp_with(
    mdp: &Mdp,
    f: &[f64],
    initial_transient: &ProbVector,
    tol: &Tolerances,
) -> Result<(f64, DecisionFunction)> {
    let all: Vec<usize> = (0..mdp.n_actions()).collect();
    let (lp, layout) = absorbing_value_program(mdp, f, initial_transient, &all)?;
    let sol = solve_optimal(&lp, tol)?;
    Ok((sol.objective_value, absorbing_decision(mdp, &layout, &sol.values)))
}

/// Minimum expected number of steps spent in transient states before
/// absorption, starting from `initial_transient`.
pub fn mdp_min_absorption_lp(mdp: &Mdp, initial_transient: &ProbVector) -> Result<(f64, DecisionFunction)> {
    mdp_min_absorption_lp_with(mdp, initial_transient, &Tolerances::default())
}

pub fn mdp_min_absorption_lp_with(
    mdp: &Mdp,
    initial_transient: &ProbVector,
    tol: &Tolerances,
) -> Result<(f64, DecisionFunction)> {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let absorbing = absorbing_states(mdp);
    if absorbing.is_empty() {
        return Err(Error::InvalidInput("MDP has no absorbing states".into()));
    }
    let transient: Vec<usize> = (0..n).filter(|s| !absorbing.contains(s)).collect();
    let nt = transient.len();
    if initial_transient.len() != nt {
        return Err(Error::DimensionMismatch(format!(
            "initial vector has {} entries, {nt} transient states",
            initial_transient.len()
        )));
    }
    let inf = f64::INFINITY;
    let mut b = ProgramBuilder::new();
    let x = b.vars(nt, 0.0, inf);
    let w: Vec<usize> = (0..na).map(|_| b.vars(nt, 0.0, inf)).collect();
    for i in 0..nt {
        b.set_objective(x + i, 1.0);
    }
    for (k, &s2) in transient.iter().enumerate() {
        let mut r = vec![(x + k, 1.0)];
        for a in 0..na {
            for (i, &s) in transient.iter().enumerate() {
                let p = mdp.transition(a).get(s2, s);
                if p != 0.0 {
                    r.push((w[a] + i, -p));
                }
            }
        }
        b.row(r, initial_transient.get(k));
    }
    for i in 0..nt {
        let mut r: Vec<(usize, f64)> = (0..na).map(|a| (w[a] + i, 1.0)).collect();
        r.push((x + i, -1.0));
        b.row(r, 0.0);
    }
    let sol = solve_optimal(&b.build(Sense::Minimize)?, tol)?;
    let xv = &sol.values[x..x + nt];
    let ww: Vec<Vec<f64>> = w.iter().map(|&o| sol.values[o..o + nt].to_vec()).collect();
    let rows = ratio_decision(&ww, xv, na);
    let mut probs = vec![vec![1.0 / na as f64; na]; n];
    for (k, &s) in transient.iter().enumerate() {
        probs[s] = rows[k].clone();
    }
    Ok((sol.objective_value, DecisionFunction::from_raw(probs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex_core::{
        absorption_time, decompose_absorbing, policy_matrix, stationary_distribution, StochasticMatrix,
    };
    use proptest::prelude::*;

    fn lp(obj: Vec<f64>, sense: Sense, a: &[f64], rows: usize, b: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> LinearProgram {
        let n = obj.len();
        LinearProgram::new(obj, sense, DMatrix::from_row_slice(rows, n, a), b, lo, hi).unwrap()
    }

    #[test]
    fn single_fixed_variable() {
        let p = lp(vec![1.0], Sense::Maximize, &[1.0], 1, vec![0.5], vec![0.0], vec![1.0]);
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_face() {
        let p = lp(vec![1.0, 1.0], Sense::Maximize, &[1.0, 1.0], 1, vec![1.0], vec![0.0; 2], vec![1.0; 2]);
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert!((s.objective_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded_are_statuses() {
        let p = lp(vec![1.0], Sense::Maximize, &[1.0], 1, vec![2.0], vec![0.0], vec![1.0]);
        assert_eq!(solve(&p, &Tolerances::default()).unwrap().status, LpStatus::Infeasible);
        let q = lp(vec![1.0, 0.0], Sense::Maximize, &[1.0, -1.0], 1, vec![0.0], vec![0.0; 2], vec![f64::INFINITY; 2]);
        assert_eq!(solve(&q, &Tolerances::default()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_upper_only_variables() {
        // max x s.t. x − y = −3, y ≤ 2, x free → x = −1
        let p = lp(
            vec![1.0, 0.0],
            Sense::Maximize,
            &[1.0, -1.0],
            1,
            vec![-3.0],
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            vec![f64::INFINITY, 2.0],
        );
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert!((s.objective_value + 1.0).abs() < 1e-12, "{:?}", s);
        let mut q = p.clone();
        q.sense = Sense::Minimize;
        assert_eq!(solve(&q, &Tolerances::default()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let p = lp(
            vec![1.0, 2.0],
            Sense::Maximize,
            &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0],
            3,
            vec![1.0, 2.0, 0.0],
            vec![0.0; 2],
            vec![1.0; 2],
        );
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert!((s.objective_value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(LinearProgram::new(vec![1.0], Sense::Maximize, DMatrix::zeros(0, 1), vec![], vec![1.0], vec![0.0]).is_err());
        assert!(LinearProgram::new(vec![1.0, 2.0], Sense::Maximize, DMatrix::zeros(1, 1), vec![0.0], vec![0.0], vec![1.0]).is_err());
    }

    /// Exhaustive vertex enumeration for tiny LPs: every basis of `A`
    /// with the rest at a bound.
    fn brute_force(p: &LinearProgram) -> Option<f64> {
        let n = p.n_vars();
        let m = p.n_constraints();
        let mut best: Option<f64> = None;
        let sign = if p.sense == Sense::Maximize { 1.0 } else { -1.0 };
        for mask in 0..(1u32 << n) {
            if mask.count_ones() as usize != m {
                continue;
            }
            let basic: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).collect();
            let nonbasic: Vec<usize> = (0..n).filter(|k| mask & (1 << k) == 0).collect();
            for bmask in 0..(1u32 << nonbasic.len()) {
                let mut x = vec![0.0; n];
                for (idx, &k) in nonbasic.iter().enumerate() {
                    x[k] = if bmask & (1 << idx) != 0 { p.upper[k] } else { p.lower[k] };
                }
                let bm = DMatrix::from_fn(m, m, |i, c| p.a_eq[(i, basic[c])]);
                let mut rhs = DVector::from_column_slice(&p.b_eq);
                for &k in &nonbasic {
                    for i in 0..m {
                        rhs[i] -= p.a_eq[(i, k)] * x[k];
                    }
                }
                if let Some(sol) = bm.lu().solve(&rhs) {
                    if sol.iter().any(|v| !v.is_finite()) {
                        continue;
                    }
                    for (c, &k) in basic.iter().enumerate() {
                        x[k] = sol[c];
                    }
                    let (eq, bd) = p.max_violation(&x);
                    if eq < 1e-9 && bd < 1e-9 {
                        let val: f64 = p.objective.iter().zip(&x).map(|(a, b)| a * b).sum();
                        best = Some(best.map_or(val, |b: f64| if sign * val > sign * b { val } else { b }));
                    }
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            a in proptest::collection::vec(-2i32..3, 10),
            c in proptest::collection::vec(-3i32..4, 5),
            x0 in proptest::collection::vec(0.0f64..1.0, 5),
            maximize in any::<bool>(),
        ) {
            // 2 rows, 5 vars in [0,1]; rhs from a feasible point
            let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let am = DMatrix::from_row_slice(2, 5, &a);
            prop_assume!(am.rank(1e-9) == 2);
            let b = &am * DVector::from_vec(x0.clone());
            let p = LinearProgram::new(
                c.iter().map(|&v| v as f64).collect(),
                if maximize { Sense::Maximize } else { Sense::Minimize },
                am,
                b.iter().copied().collect(),
                vec![0.0; 5],
                vec![1.0; 5],
            ).unwrap();
            let s = solve(&p, &Tolerances::default()).unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            let (eq, bd) = p.max_violation(&s.values);
            prop_assert!(eq < 1e-8 && bd < 1e-9);
            let bf = brute_force(&p).unwrap();
            prop_assert!((bf - s.objective_value).abs() < 1e-8, "{} vs {}", bf, s.objective_value);
        }
    }

    fn single_transient(ps: &[f64]) -> Mdp {
        let mats = ps
            .iter()
            .map(|&p| StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0 - p, 0.0, p, 1.0])).unwrap())
            .collect();
        Mdp::new(
            vec!["t".into(), "a".into()],
            (0..ps.len()).map(|a| a.to_string()).collect(),
            mats,
        )
        .unwrap()
    }

    #[test]
    fn min_absorption_picks_fastest_action() {
        let mdp = single_transient(&[0.2, 0.5]);
        let (t, d) = mdp_min_absorption_lp(&mdp, &ProbVector::point(1, 0)).unwrap();
        assert!((t - 2.0).abs() < 1e-9);
        assert_eq!(d.mode(0), 1);
        let (t1, _) = mdp_min_absorption_lp(&single_transient(&[1.0]), &ProbVector::point(1, 0)).unwrap();
        assert!((t1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorbing_value_single_action() {
        let mdp = single_transient(&[0.3]);
        let (v, _) = mdp_absorbing_value_lp(&mdp, &[0.0, 0.7], &ProbVector::point(1, 0)).unwrap();
        assert!((v - 0.7).abs() < 1e-9);
    }

    #[test]
    fn absorbing_value_without_exit_is_infeasible() {
        // two transient states swapping forever, one unreachable absorbing state
        let t = StochasticMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ))
        .unwrap();
        let mdp = Mdp::new(vec!["0".into(), "1".into(), "2".into()], vec!["a".into()], vec![t]).unwrap();
        let init = ProbVector::point(2, 0);
        assert!(matches!(
            mdp_absorbing_value_lp(&mdp, &[0.0, 0.0, 1.0], &init),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            mdp_min_absorption_lp(&mdp, &init),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn steady_state_single_state_and_constant() {
        let mdp = Mdp::new(vec!["s".into()], vec!["a".into()], vec![StochasticMatrix::identity(1)]).unwrap();
        let (v, _) = mdp_steady_state_lp(&mdp, &[0.42]).unwrap();
        assert!((v - 0.42).abs() < 1e-12);
        let t0 = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8])).unwrap();
        let t1 = StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        let mdp2 = Mdp::new(vec!["a".into(), "b".into()], vec!["0".into(), "1".into()], vec![t0, t1]).unwrap();
        let (c, _) = mdp_steady_state_lp(&mdp2, &[3.0, 3.0]).unwrap();
        assert!((c - 3.0).abs() < 1e-9);
    }

    fn random_mdp(seed: u64, n: usize, na: usize, n_abs: usize) -> Mdp {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mats = (0..na)
            .map(|_| {
                let mut m = DMatrix::zeros(n, n);
                for j in 0..n {
                    if j >= n - n_abs {
                        m[(j, j)] = 1.0;
                        continue;
                    }
                    let col: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
                    let s: f64 = col.iter().sum();
                    for i in 0..n {
                        m[(i, j)] = col[i] / s;
                    }
                }
                StochasticMatrix::new(m).unwrap()
            })
            .collect();
        Mdp::new(
            (0..n).map(|s| s.to_string()).collect(),
            (0..na).map(|a| a.to_string()).collect(),
            mats,
        )
        .unwrap()
    }

    fn random_rule(seed: u64, n: usize, na: usize) -> DecisionFunction {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..na).map(|_| rng.gen::<f64>()).collect();
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect();
        DecisionFunction::new(rows).unwrap()
    }

    #[test]
    fn steady_state_lp_dominates_and_is_attained() {
        for seed in 0..10 {
            let mdp = random_mdp(seed, 5, 3, 0);
            let f: Vec<f64> = (0..5).map(|s| ((s * 7 + seed as usize) % 5) as f64 / 4.0).collect();
            let (val, d) = mdp_steady_state_lp(&mdp, &f).unwrap();
            let pi = stationary_distribution(&policy_matrix(&mdp, &d).unwrap(), 1e-13).unwrap();
            assert!((pi.expectation(&f) - val).abs() < 1e-7);
            for k in 0..20 {
                let r = random_rule(1000 * seed + k, 5, 3);
                let pr = stationary_distribution(&policy_matrix(&mdp, &r).unwrap(), 1e-13).unwrap();
                assert!(pr.expectation(&f) <= val + 1e-9);
            }
        }
    }

    #[test]
    fn min_absorption_lower_bounds_random_rules() {
        for seed in 0..5 {
            let mdp = random_mdp(seed, 6, 3, 2);
            let init = ProbVector::new(vec![0.25; 4]).unwrap();
            let (t, d) = mdp_min_absorption_lp(&mdp, &init).unwrap();
            let dec = decompose_absorbing(&mdp, &d).unwrap();
            assert!((absorption_time(&dec, &init).unwrap() - t).abs() < 1e-7);
            for k in 0..100 {
                let r = random_rule(77 + 1000 * seed + k, 6, 3);
                let dr = decompose_absorbing(&mdp, &r).unwrap();
                assert!(absorption_time(&dr, &init).unwrap() >= t - 1e-9);
            }
        }
    }

    #[test]
    fn absorbing_value_lp_matches_best_policy() {
        for seed in 0..5 {
            let mdp = random_mdp(50 + seed, 5, 2, 2);
            let f = vec![0.0, 0.0, 0.0, 0.3, 0.9];
            let init = ProbVector::new(vec![0.5, 0.25, 0.25]).unwrap();
            let (val, d) = mdp_absorbing_value_lp(&mdp, &f, &init).unwrap();
            let dec = decompose_absorbing(&mdp, &d).unwrap();
            assert!((dec.absorbing_value(&f[3..], &init).unwrap() - val).abs() < 1e-7);
            let mut best = f64::NEG_INFINITY;
            for code in 0..8usize {
                let choice: Vec<usize> = (0..5).map(|s| if s < 3 { (code >> s) & 1 } else { 0 }).collect();
                let r = DecisionFunction::deterministic(2, &choice).unwrap();
                let dr = decompose_absorbing(&mdp, &r).unwrap();
                best = best.max(dr.absorbing_value(&f[3..], &init).unwrap());
            }
            assert!((best - val).abs() < 1e-7, "{best} vs {val}");
        }
    }
}
