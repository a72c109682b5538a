//! Regularized solves by preconditioned conjugate gradients.
//!
//! Two formulations of the same ridge problem are supported. The
//! minimal-norm path solves `(BBᵀ + ΓᵀΓ) ξ = b` and returns `μ = Bᵀξ`; the
//! least-squares path solves `(BᵀB + ΓᵀΓ) μ = Bᵀb`. Neither operator is
//! formed: CG only needs products with `B` and `Bᵀ`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rectangular matrix known through its products.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = B x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x = Bᵀ y`
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]);
    /// `diag(BᵀB)`
    fn column_norms_sq(&self) -> Vec<f64>;
    /// `diag(BBᵀ)`
    fn row_norms_sq(&self) -> Vec<f64>;
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::invalid(format!(
                "dense matrix data has {} entries, expected {nrows}x{ncols}",
                data.len()
            )));
        }
        Ok(DenseMatrix { nrows, ncols, data })
    }

    pub fn from_fn(nrows: usize, ncols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { nrows, ncols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut()
            .enumerate()
            .for_each(|(i, yi)| *yi = dot(self.row(i), x));
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (xj, &b) in x.iter_mut().zip(self.row(i)) {
                    *xj += yi * b;
                }
            }
        }
    }

    fn column_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for (o, &b) in out.iter_mut().zip(self.row(i)) {
                *o += b * b;
            }
        }
        out
    }

    fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| dot(self.row(i), self.row(i))).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop once `‖r‖ / ‖rhs‖` drops to this value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-7,
            max_iter: 2000,
        }
    }
}

impl CgOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolvePath {
    #[serde(rename = "min-norm")]
    MinimalNorm,
    #[serde(rename = "lsq")]
    LeastSquares,
}

impl SolvePath {
    /// Minimal-norm while there are fewer than `2M` homogeneous rows.
    pub fn automatic(points: usize, homogeneous: usize) -> Self {
        if homogeneous < 2 * points {
            SolvePath::MinimalNorm
        } else {
            SolvePath::LeastSquares
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolvePath::MinimalNorm => "min-norm",
            SolvePath::LeastSquares => "lsq",
        }
    }
}

impl std::str::FromStr for SolvePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-norm" => Ok(SolvePath::MinimalNorm),
            "lsq" => Ok(SolvePath::LeastSquares),
            other => Err(Error::invalid(format!("unknown solve path '{other}' (expected min-norm or lsq)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub path: SolvePath,
    pub iterations: usize,
    /// `‖r‖ / ‖rhs‖` of the CG system, recomputed from the final iterate.
    pub relative_residual: f64,
    pub hit_iteration_cap: bool,
    pub seconds: f64,
}

/// Unknowns `μ`, one `dim`-vector per point.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceElementField {
    dim: usize,
    values: Vec<f64>,
}

impl SurfaceElementField {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} values do not split into rows of {dim}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("surface elements contain non-finite values"));
        }
        Ok(SurfaceElementField { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn negate(&mut self) {
        self.values.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Preconditioned CG on an SPD operator given through `apply`.
/// Returns the solution, iterations, final relative residual and whether
/// the cap was hit.
fn pcg(
    n: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    inv_diag: &[f64],
    opts: &CgOptions,
) -> Result<(Vec<f64>, usize, f64, bool)> {
    let rhs_norm = norm(rhs);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok((x, 0, 0.0, false));
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut capped = false;
    loop {
        if norm(&r) <= opts.tol * rhs_norm {
            break;
        }
        if iterations >= opts.max_iter {
            capped = true;
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::numeric(format!(
                "conjugate gradients broke down at iteration {iterations}: p·Ap = {pap:e}, \
                 relative residual {:.3e}",
                norm(&r) / rhs_norm
            )));
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(&r)
            .zip(inv_diag)
            .for_each(|((zi, ri), di)| *zi = ri * di);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        iterations += 1;
    }
    // true residual of the returned iterate
    apply(&x, &mut ap);
    let true_res = ap.iter().zip(rhs).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt() / rhs_norm;
    Ok((x, iterations, true_res, capped))
}

fn jacobi(diag: &[f64]) -> Vec<f64> {
    diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect()
}

fn check_sizes<B: LinearOperator + ?Sized>(op: &B, b: &[f64], gamma_sq: &[f64], gamma_len: usize) -> Result<()> {
    if b.len() != op.nrows() {
        return Err(Error::invalid(format!(
            "right-hand side has {} entries, operator has {} rows",
            b.len(),
            op.nrows()
        )));
    }
    if gamma_sq.len() != gamma_len {
        return Err(Error::invalid(format!(
            "regularization diagonal has {} entries, expected {gamma_len}",
            gamma_sq.len()
        )));
    }
    if gamma_sq.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::invalid("regularization diagonal must be nonnegative"));
    }
    Ok(())
}

/// `μ = Bᵀξ` with `(BBᵀ + diag(gamma_sq)) ξ = b`; `gamma_sq` has one entry
/// per row of `B`.
pub fn solve_minimal_norm<B: LinearOperator + ?Sized>(
    op: &B,
    b: &[f64],
    gamma_sq: &[f64],
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    check_sizes(op, b, gamma_sq, op.nrows())?;
    let start = Instant::now();
    let precond: Vec<f64> = op.row_norms_sq().iter().zip(gamma_sq).map(|(a, g)| a + g).collect();
    let inv = jacobi(&precond);
    let mut tmp = vec![0.0; op.ncols()];
    let apply = |v: &[f64], out: &mut [f64]| {
        let mut t = vec![0.0; op.ncols()];
        op.apply_transpose(v, &mut t);
        op.apply(&t, out);
        for ((o, vi), g) in out.iter_mut().zip(v).zip(gamma_sq) {
            *o += g * vi;
        }
    };
    let (xi, iterations, relative_residual, hit_iteration_cap) = pcg(op.nrows(), apply, b, &inv, opts)?;
    op.apply_transpose(&xi, &mut tmp);
    Ok((
        tmp,
        SolveReport {
            path: SolvePath::MinimalNorm,
            iterations,
            relative_residual,
            hit_iteration_cap,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// `μ = (BᵀB + diag(gamma_sq))⁻¹ Bᵀb`; `gamma_sq` has one entry per column.
pub fn solve_least_squares<B: LinearOperator + ?Sized>(
    op: &B,
    b: &[f64],
    gamma_sq: &[f64],
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    check_sizes(op, b, gamma_sq, op.ncols())?;
    let start = Instant::now();
    let precond: Vec<f64> = op.column_norms_sq().iter().zip(gamma_sq).map(|(a, g)| a + g).collect();
    let inv = jacobi(&precond);
    let mut rhs = vec![0.0; op.ncols()];
    op.apply_transpose(b, &mut rhs);
    let apply = |v: &[f64], out: &mut [f64]| {
        let mut t = vec![0.0; op.nrows()];
        op.apply(v, &mut t);
        op.apply_transpose(&t, out);
        for ((o, vi), g) in out.iter_mut().zip(v).zip(gamma_sq) {
            *o += g * vi;
        }
    };
    let (mu, iterations, relative_residual, hit_iteration_cap) = pcg(op.ncols(), apply, &rhs, &inv, opts)?;
    Ok((
        mu,
        SolveReport {
            path: SolvePath::LeastSquares,
            iterations,
            relative_residual,
            hit_iteration_cap,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// How the regularization factor scales `diag(BᵀB)` (or `diag(BBᵀ)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizationScale {
    /// `ΓᵀΓ = (α / 8)·diag`
    #[default]
    Relative,
    /// `ΓᵀΓ = α·10M·diag`
    TenM,
}

impl RegularizationScale {
    pub fn factor(self, alpha: f64, points: usize) -> f64 {
        match self {
            RegularizationScale::Relative => alpha / 8.0,
            RegularizationScale::TenM => alpha * 10.0 * points as f64,
        }
    }
}

impl std::str::FromStr for RegularizationScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(RegularizationScale::Relative),
            "10m" | "ten-m" => Ok(RegularizationScale::TenM),
            other => Err(Error::invalid(format!(
                "unknown regularization scale '{other}' (expected relative or 10m)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub scale: RegularizationScale,
    pub cg: CgOptions,
    pub force_path: Option<SolvePath>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 2.0,
            scale: RegularizationScale::default(),
            cg: CgOptions::default(),
            force_path: None,
        }
    }
}

/// A stacked constraint system `[B_f A; H] μ = [½; 0]` together with the
/// sizes that drive path selection.
pub trait ConstraintOperator: LinearOperator {
    fn dim(&self) -> usize;
    fn points(&self) -> usize;
    fn homogeneous_rows(&self) -> usize;
    fn rhs(&self) -> &[f64];
}

/// Solves with `ΓᵀΓ = factor·diag(BᵀB)` on the least-squares path and
/// `factor·diag(BBᵀ)` on the minimal-norm path.
pub fn solve_system<S: ConstraintOperator + ?Sized>(
    system: &S,
    config: &SolverConfig,
) -> Result<(SurfaceElementField, SolveReport)> {
    if !(config.alpha >= 0.0) || !config.alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be nonnegative, got {}", config.alpha)));
    }
    let path = config
        .force_path
        .unwrap_or_else(|| SolvePath::automatic(system.points(), system.homogeneous_rows()));
    let factor = config.scale.factor(config.alpha, system.points());
    let (mu, report) = match path {
        SolvePath::MinimalNorm => {
            let gamma: Vec<f64> = system.row_norms_sq().iter().map(|d| factor * d).collect();
            solve_minimal_norm(system, system.rhs(), &gamma, &config.cg)?
        }
        SolvePath::LeastSquares => {
            let gamma: Vec<f64> = system.column_norms_sq().iter().map(|d| factor * d).collect();
            solve_least_squares(system, system.rhs(), &gamma, &config.cg)?
        }
    };
    let field = SurfaceElementField::new(system.dim(), mu)?;
    if field.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::numeric("solve produced an all-zero surface element field"));
    }
    Ok((field, report))
}
