//! Normalization of the input cloud and assembly of the constraint system
//! `[B_f A; H] μ = [½; 0]`.
//!
//! `B_f` holds basis values at the points and `A` the mollified fields
//! `F̄` at the points, so `(B_f A μ)(p) = Σ_b B_b(p) Σ_i F̄_b(p_i)·μ_i` is the
//! reconstructed indicator at `p`. The product block is applied either as
//! `B_f (A x)` with both factors sparse, or as an explicit dense matrix when
//! it fits the memory budget. Both are computed exactly; for dense storage
//! each tensor-product sum over translations is factored per axis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{
    for_each_product, slot, BasisSet, FactorSource, PointFactors, SLOT_PHI, SLOT_PHI_INT, SLOT_PSI,
    SLOT_PSI_INT,
};
use crate::error::{Error, Result};
use crate::fields::DivFreeKernel;
use crate::mollifier::MollifiedBasis;
use crate::solver::{ConstraintOperator, LinearOperator};
use crate::sparse::SparseMatrix;
use crate::wavelet::SUPPORT;

/// Isotropic map `u = (x − center)·scale + ½` into the unit cube. In 2-D the
/// third coordinate is left at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub dim: usize,
    pub scale: f64,
    pub center: [f64; 3],
}

impl Similarity {
    pub fn identity(dim: usize) -> Self {
        Similarity {
            dim,
            scale: 1.0,
            center: [0.5, 0.5, if dim == 3 { 0.5 } else { 0.0 }],
        }
    }

    pub fn apply(&self, x: &[f64; 3]) -> [f64; 3] {
        let mut u = [0.0; 3];
        for a in 0..self.dim {
            u[a] = (x[a] - self.center[a]) * self.scale + 0.5;
        }
        u
    }

    pub fn invert(&self, u: &[f64; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (u[a] - 0.5) / self.scale + self.center[a];
        }
        x
    }

    /// Factor converting unit-cube surface measure back to input units:
    /// `scale⁻²` for areas in 3-D, `scale⁻¹` for lengths in 2-D.
    pub fn measure_factor(&self) -> f64 {
        self.scale.powi(-(self.dim as i32 - 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCloud {
    dim: usize,
    points: Vec<[f64; 3]>,
    transform: Similarity,
}

impl NormalizedCloud {
    /// Scales the cloud isotropically so its longest bounding-box side spans
    /// `[margin, 1 − margin]`, centered in the cube.
    pub fn normalize(points: &[[f64; 3]], dim: usize, margin: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if !(0.0..0.5).contains(&margin) {
            return Err(Error::invalid(format!("margin must lie in [0, 0.5), got {margin}")));
        }
        if points.len() < 4 {
            return Err(Error::invalid(format!(
                "at least 4 points are required, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| p[..dim].iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        let (lo, hi) = bounds(points, dim);
        let extent = (0..dim).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let diag = (0..dim).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
        let size = (0..dim).map(|a| lo[a].abs().max(hi[a].abs())).fold(0.0, f64::max);
        if !(diag > 1e-12 * size.max(1e-300)) {
            return Err(Error::Degenerate(
                "all points coincide (zero bounding-box diagonal)".into(),
            ));
        }
        let mut center = [0.0; 3];
        for a in 0..dim {
            center[a] = 0.5 * (lo[a] + hi[a]);
        }
        let transform = Similarity {
            dim,
            scale: (1.0 - 2.0 * margin) / extent,
            center,
        };
        let unit = points.iter().map(|p| transform.apply(p)).collect();
        Ok(NormalizedCloud {
            dim,
            points: unit,
            transform,
        })
    }

    /// Points already in unit-cube coordinates.
    pub fn from_unit_points(points: Vec<[f64; 3]>, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if points.is_empty() {
            return Err(Error::invalid("cloud is empty"));
        }
        if points.iter().any(|p| p[..dim].iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        let points = points
            .into_iter()
            .map(|mut p| {
                if dim == 2 {
                    p[2] = 0.0;
                }
                p
            })
            .collect();
        Ok(NormalizedCloud {
            dim,
            points,
            transform: Similarity::identity(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn transform(&self) -> &Similarity {
        &self.transform
    }

    /// Point `i` in input coordinates.
    pub fn original(&self, i: usize) -> [f64; 3] {
        self.transform.invert(&self.points[i])
    }

    /// Bounding box of the normalized points.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        bounds(&self.points, self.dim)
    }
}

pub(crate) fn bounds(points: &[[f64; 3]], dim: usize) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..dim {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    for a in dim..3 {
        lo[a] = 0.0;
        hi[a] = 0.0;
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Rescale every homogeneous row to the root-mean-square norm of the
    /// nonhomogeneous rows.
    pub balance_homogeneous: bool,
    /// Store `B_f A` densely when it has at most this many entries.
    pub dense_limit: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            balance_homogeneous: true,
            dense_limit: 40_000_000,
        }
    }
}

#[derive(Debug, Clone)]
enum ProductBlock {
    /// Column-major `M × dim·M`.
    Dense(Vec<f64>),
    /// `B_f` (`M × N_b`); `A` is the transpose of `at`.
    Factored(SparseMatrix),
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    dim: usize,
    points: usize,
    num_bases: usize,
    block: ProductBlock,
    /// `Aᵀ`: one row per unknown `(i, d)`, columns are bases.
    at: SparseMatrix,
    /// Row-major `N_h × dim·M`, already balanced.
    homogeneous: Vec<f64>,
    homogeneous_rows: usize,
    homogeneous_scale: Vec<f64>,
    rhs: Vec<f64>,
    column_norms: Vec<f64>,
    row_norms: Vec<f64>,
}

fn profile_slots_for(kind: crate::wavelet::TypeVector, axis: usize, integral_axis: usize) -> usize {
    let p = kind.profile(axis);
    slot(if axis == integral_axis { p.integral() } else { p })
}

/// Largest number of nonzero 1-D factors a single point can see along one
/// axis at `level`, for a pointwise (non-plateau) profile.
fn pointwise_bound(level: u32, epsilon: f64) -> usize {
    let s = (level as f64).exp2();
    (SUPPORT as f64 + 2.0 * s * epsilon).ceil() as usize
}

/// Rows of `Aᵀ` for point `i`: `dim` lists of `(basis, value)`.
fn a_rows(
    set: &BasisSet,
    factors: &PointFactors,
    epsilon: f64,
) -> Result<Vec<Vec<(u32, f64)>>> {
    let dim = set.dim();
    let mut rows = vec![Vec::new(); dim];
    for g in set.groups() {
        let r = &set.ranges()[g.range];
        let d = g.kind.integral_axis();
        let f = &factors.factors[g.range];
        let lists = [
            &f[0][profile_slots_for(g.kind, 0, d)],
            &f[1][profile_slots_for(g.kind, 1, d)],
            &f[2][profile_slots_for(g.kind, 2, d)],
        ];
        let mut bound = 1usize;
        let mut count = 1usize;
        for a in 0..dim {
            bound *= if a == d && !g.kind.is_wavelet(a) {
                r.len[a]
            } else {
                pointwise_bound(r.level, epsilon)
            };
            count *= lists[a].len();
        }
        if count > bound {
            return Err(Error::numeric(format!(
                "basis enumeration bug: {count} nonzeros in one column for level {} type {:b}, bound {bound}",
                r.level,
                g.kind.bits()
            )));
        }
        let row = &mut rows[d];
        for_each_product(dim, r.len, lists, |flat, v| {
            row.push(((g.offset + flat) as u32, v));
        });
    }
    Ok(rows)
}

/// Rows of `B_f` at one point.
pub(crate) fn bf_row(set: &BasisSet, factors: &PointFactors) -> Vec<(u32, f64)> {
    let dim = set.dim();
    let mut row = Vec::new();
    for g in set.groups() {
        let r = &set.ranges()[g.range];
        let f = &factors.factors[g.range];
        let lists = [
            &f[0][slot(g.kind.profile(0))],
            &f[1][slot(g.kind.profile(1))],
            &f[2][slot(g.kind.profile(2))],
        ];
        for_each_product(dim, r.len, lists, |flat, v| {
            row.push(((g.offset + flat) as u32, v));
        });
    }
    row
}

/// Column block of `B_f A` for unknowns of point `i`, laid out `[d][q]`.
fn product_columns(
    set: &BasisSet,
    plain: &[PointFactors],
    moll: &PointFactors,
    out: &mut [f64],
) {
    let dim = set.dim();
    let m = plain.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    // 1-D kernels K[a][f][integral](q) = Σ_k f(q_a; k) · ḡ(p_a; k)
    let mut kern = vec![0.0; 3 * 2 * 2 * m];
    let idx = |a: usize, f: usize, int: usize, q: usize| ((a * 2 + f) * 2 + int) * m + q;
    for (ri, r) in set.ranges().iter().enumerate() {
        let mf = &moll.factors[ri];
        for a in 0..dim {
            let mut dense = [vec![0.0; r.len[a]], vec![0.0; r.len[a]], vec![0.0; r.len[a]], vec![0.0; r.len[a]]];
            for (sl, d) in dense.iter_mut().enumerate() {
                for &(k, v) in &mf[a][sl] {
                    d[k as usize] = v;
                }
            }
            for (q, pf) in plain.iter().enumerate() {
                let lists = &pf.factors[ri][a];
                for (fi, (fs, gs, gi)) in [(SLOT_PHI, SLOT_PHI, SLOT_PHI_INT), (SLOT_PSI, SLOT_PSI, SLOT_PSI_INT)]
                    .into_iter()
                    .enumerate()
                {
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for &(k, v) in &lists[fs] {
                        s0 += v * dense[gs][k as usize];
                        s1 += v * dense[gi][k as usize];
                    }
                    kern[idx(a, fi, 0, q)] = s0;
                    kern[idx(a, fi, 1, q)] = s1;
                }
            }
        }
        for g in set.groups().iter().filter(|g| g.range == ri) {
            let d = g.kind.integral_axis();
            let col = &mut out[d * m..(d + 1) * m];
            let sel: Vec<usize> = (0..dim)
                .map(|a| idx(a, g.kind.is_wavelet(a) as usize, (a == d) as usize, 0))
                .collect();
            for (q, c) in col.iter_mut().enumerate() {
                let mut v = 1.0;
                for &s in &sel {
                    v *= kern[s + q];
                }
                *c += v;
            }
        }
    }
}

/// Assembles the constraint system. The mollified tables must cover every
/// level of `bases`.
pub fn assemble(
    cloud: &NormalizedCloud,
    bases: &BasisSet,
    mollified: &MollifiedBasis,
    kernels: &[DivFreeKernel],
    options: &AssemblyOptions,
) -> Result<ConstraintSystem> {
    let dim = cloud.dim();
    if bases.dim() != dim {
        return Err(Error::invalid("basis set and cloud dimensions differ"));
    }
    if mollified.level_count() < bases.level_count() {
        return Err(Error::invalid("mollified tables do not cover every basis level"));
    }
    if let Some(k) = kernels.iter().find(|k| k.dim() != dim) {
        return Err(Error::invalid(format!(
            "kernel of dimension {} used with a {dim}-D cloud",
            k.dim()
        )));
    }
    if bases.len() > u32::MAX as usize {
        return Err(Error::invalid("too many basis functions"));
    }
    let m = cloud.len();
    let n = dim * m;
    let epsilon = mollified.epsilon();
    mollified.build_all();

    let plain_source = FactorSource::Plain(mollified.wavelet_table());
    let moll_source = FactorSource::Mollified(mollified);
    let plain: Vec<PointFactors> = cloud
        .points()
        .par_iter()
        .map(|p| PointFactors::new(bases, &plain_source, p, &[SLOT_PHI, SLOT_PSI]))
        .collect();
    let moll: Vec<PointFactors> = cloud
        .points()
        .par_iter()
        .map(|p| PointFactors::new(bases, &moll_source, p, &[SLOT_PHI, SLOT_PSI, SLOT_PHI_INT, SLOT_PSI_INT]))
        .collect();

    let a_blocks: Vec<Vec<Vec<(u32, f64)>>> = moll
        .par_iter()
        .map(|f| a_rows(bases, f, epsilon))
        .collect::<Result<_>>()?;
    let at = SparseMatrix::from_rows(bases.len(), a_blocks.into_iter().flatten().collect());

    // Column and row norms of the product block, plus the block itself when dense.
    let dense = m.saturating_mul(n) <= options.dense_limit;
    let mut column_norms = vec![0.0; n];
    let (block, product_row_norms) = if dense {
        let mut data = vec![0.0; m * n];
        data.par_chunks_mut(dim * m)
            .zip(moll.par_iter())
            .for_each(|(chunk, mf)| product_columns(bases, &plain, mf, chunk));
        let mut row_norms = vec![0.0; m];
        for (c, col) in data.chunks(m).enumerate() {
            column_norms[c] = col.iter().map(|v| v * v).sum();
            for (r, v) in row_norms.iter_mut().zip(col) {
                *r += v * v;
            }
        }
        (ProductBlock::Dense(data), row_norms)
    } else {
        let (cols, rows) = moll
            .par_iter()
            .enumerate()
            .fold(
                || (Vec::new(), vec![0.0; m], vec![0.0; dim * m]),
                |(mut cols, mut rows, mut buf): (Vec<(usize, f64)>, Vec<f64>, Vec<f64>), (i, mf)| {
                    product_columns(bases, &plain, mf, &mut buf);
                    for (d, col) in buf.chunks(m).enumerate() {
                        cols.push((i * dim + d, col.iter().map(|v| v * v).sum()));
                        for (r, v) in rows.iter_mut().zip(col) {
                            *r += v * v;
                        }
                    }
                    (cols, rows, buf)
                },
            )
            .map(|(c, r, _)| (c, r))
            .reduce(
                || (Vec::new(), vec![0.0; m]),
                |(mut c1, mut r1), (c2, r2)| {
                    c1.extend(c2);
                    r1.iter_mut().zip(r2).for_each(|(a, b)| *a += b);
                    (c1, r1)
                },
            );
        for (c, v) in cols {
            column_norms[c] = v;
        }
        let bf = SparseMatrix::from_rows(bases.len(), plain.par_iter().map(|f| bf_row(bases, f)).collect());
        (ProductBlock::Factored(bf), rows)
    };

    // Homogeneous rows.
    let nh = kernels.len();
    let mut homogeneous = vec![0.0; nh * n];
    homogeneous
        .par_chunks_mut(n.max(1))
        .zip(kernels.par_iter())
        .try_for_each(|(row, k)| -> Result<()> {
            for (i, p) in cloud.points().iter().enumerate() {
                let f = k.curl_field(p)?;
                row[i * dim..(i + 1) * dim].copy_from_slice(&f[..dim]);
            }
            Ok(())
        })?;
    let target = (product_row_norms.iter().sum::<f64>() / m as f64).sqrt();
    let mut homogeneous_scale = vec![1.0; nh];
    if options.balance_homogeneous && target > 0.0 {
        for (j, row) in homogeneous.chunks_mut(n.max(1)).enumerate().take(nh) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let s = target / norm;
                homogeneous_scale[j] = s;
                row.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    let mut row_norms = product_row_norms;
    for row in homogeneous.chunks(n.max(1)).take(nh) {
        row_norms.push(row.iter().map(|v| v * v).sum());
        for (c, v) in column_norms.iter_mut().zip(row) {
            *c += v * v;
        }
    }

    let mut rhs = vec![0.5; m];
    rhs.resize(m + nh, 0.0);
    log::debug!(
        "assembled {m} points, {} bases, {nh} homogeneous rows, {} nonzeros in A, {} product block",
        bases.len(),
        at.nnz(),
        if dense { "dense" } else { "factored" }
    );
    Ok(ConstraintSystem {
        dim,
        points: m,
        num_bases: bases.len(),
        block,
        at,
        homogeneous,
        homogeneous_rows: nh,
        homogeneous_scale,
        rhs,
        column_norms,
        row_norms,
    })
}

impl ConstraintSystem {
    pub fn num_bases(&self) -> usize {
        self.num_bases
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.block, ProductBlock::Dense(_))
    }

    /// Nonzeros of `A`.
    pub fn field_nnz(&self) -> usize {
        self.at.nnz()
    }

    /// Scale applied to each homogeneous row by balancing.
    pub fn homogeneous_scale(&self) -> &[f64] {
        &self.homogeneous_scale
    }

    /// Basis coefficients `c = A μ`.
    pub fn coefficients(&self, mu: &[f64]) -> Vec<f64> {
        assert_eq!(mu.len(), self.at.nrows());
        let mut c = vec![0.0; self.num_bases];
        for (r, &v) in mu.iter().enumerate() {
            if v != 0.0 {
                self.at.axpy_row(r, v, &mut c);
            }
        }
        c
    }

    /// Entry `(q, col)` of the stacked matrix; for tests and small systems.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let n = self.dim * self.points;
        if row >= self.points {
            return self.homogeneous[(row - self.points) * n + col];
        }
        match &self.block {
            ProductBlock::Dense(d) => d[col * self.points + row],
            ProductBlock::Factored(bf) => bf.row(row).map(|(b, v)| v * self.at.get(col, b)).sum(),
        }
    }
}

impl LinearOperator for ConstraintSystem {
    fn nrows(&self) -> usize {
        self.points + self.homogeneous_rows
    }

    fn ncols(&self) -> usize {
        self.dim * self.points
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.points;
        let n = self.ncols();
        let (top, bottom) = y.split_at_mut(m);
        match &self.block {
            ProductBlock::Dense(d) => {
                top.par_chunks_mut(256).enumerate().for_each(|(ci, chunk)| {
                    let q0 = ci * 256;
                    chunk.iter_mut().for_each(|v| *v = 0.0);
                    for (c, &xc) in x.iter().enumerate() {
                        if xc != 0.0 {
                            let col = &d[c * m + q0..c * m + q0 + chunk.len()];
                            for (v, a) in chunk.iter_mut().zip(col) {
                                *v += xc * a;
                            }
                        }
                    }
                });
            }
            ProductBlock::Factored(bf) => {
                let c = self.coefficients(x);
                bf.mul_vec(&c, top);
            }
        }
        bottom
            .par_iter_mut()
            .enumerate()
            .for_each(|(j, v)| *v = crate::solver::dot(&self.homogeneous[j * n..(j + 1) * n], x));
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        let m = self.points;
        let n = self.ncols();
        let (top, bottom) = y.split_at(m);
        match &self.block {
            ProductBlock::Dense(d) => {
                x.par_iter_mut()
                    .enumerate()
                    .for_each(|(c, v)| *v = crate::solver::dot(&d[c * m..(c + 1) * m], top));
            }
            ProductBlock::Factored(bf) => {
                let mut c = vec![0.0; self.num_bases];
                for (q, &v) in top.iter().enumerate() {
                    if v != 0.0 {
                        bf.axpy_row(q, v, &mut c);
                    }
                }
                self.at.mul_vec(&c, x);
            }
        }
        for (j, &v) in bottom.iter().enumerate() {
            if v != 0.0 {
                for (xi, h) in x.iter_mut().zip(&self.homogeneous[j * n..(j + 1) * n]) {
                    *xi += v * h;
                }
            }
        }
    }

    fn column_norms_sq(&self) -> Vec<f64> {
        self.column_norms.clone()
    }

    fn row_norms_sq(&self) -> Vec<f64> {
        self.row_norms.clone()
    }
}

impl ConstraintOperator for ConstraintSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn points(&self) -> usize {
        self.points
    }

    fn homogeneous_rows(&self) -> usize {
        self.homogeneous_rows
    }

    fn rhs(&self) -> &[f64] {
        &self.rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_bases;
    use crate::fields::{field_a, sample_kernels, KernelFamily};
    use crate::wavelet::{build_filter, cascade, WaveletTable};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use std::sync::Arc;

    fn table() -> Arc<WaveletTable> {
        Arc::new(cascade(&build_filter(), 256).unwrap())
    }

    fn random_cloud(m: usize, dim: usize, seed: u64) -> NormalizedCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 3]> = (0..m)
            .map(|_| [rng.random::<f64>() * 3.0, rng.random::<f64>() - 2.0, rng.random::<f64>()])
            .collect();
        NormalizedCloud::normalize(&pts, dim, 0.1).unwrap()
    }

    fn brute_force(cloud: &NormalizedCloud, set: &BasisSet, mb: &MollifiedBasis, x: &[f64]) -> Vec<f64> {
        let dim = cloud.dim();
        let mut c = vec![0.0; set.len()];
        for (bi, b) in set.iter().enumerate() {
            for (i, p) in cloud.points().iter().enumerate() {
                let f = field_a(&b, mb, p);
                for d in 0..dim {
                    c[bi] += f[d] * x[i * dim + d];
                }
            }
        }
        cloud
            .points()
            .iter()
            .map(|q| set.iter().zip(&c).map(|(b, cb)| b.evaluate(mb.wavelet_table(), q) * cb).sum())
            .collect()
    }

    #[test]
    fn normalize_examples() {
        let pts: Vec<[f64; 3]> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.7;
                [100.0 * t.cos() + 5.0, 100.0 * t.sin() - 3.0, 100.0 * (t * 0.3).sin() + 7.0]
            })
            .collect();
        let cloud = NormalizedCloud::normalize(&pts, 3, 0.1).unwrap();
        let (lo, hi) = cloud.bounds();
        let longest = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        assert!((lo[longest] - 0.1).abs() < 1e-12 && (hi[longest] - 0.9).abs() < 1e-12);
        for a in 0..3 {
            assert!(lo[a] >= 0.1 - 1e-12 && hi[a] <= 0.9 + 1e-12);
        }
        for (i, p) in pts.iter().enumerate() {
            let back = cloud.original(i);
            for a in 0..3 {
                assert!((back[a] - p[a]).abs() <= 1e-9 * p[a].abs().max(1.0));
            }
        }
        assert!(NormalizedCloud::normalize(&pts[..3], 3, 0.1).is_err());
        let same = vec![[1.0, 2.0, 3.0]; 6];
        assert!(matches!(NormalizedCloud::normalize(&same, 3, 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_point_system() {
        let cloud = NormalizedCloud::from_unit_points(vec![[0.5, 0.5, 0.5]], 3).unwrap();
        let set = enumerate_bases(3, 0, 0.0, [0.5; 3], [0.5; 3]);
        let mb = MollifiedBasis::new(table(), 0.0, 1).unwrap();
        let sys = assemble(&cloud, &set, &mb, &[], &AssemblyOptions::default()).unwrap();
        assert_eq!(sys.nrows(), 1);
        assert_eq!(sys.rhs(), &[0.5]);
    }

    #[test]
    fn dense_and_factored_match_brute_force() {
        for dim in [2, 3] {
            let cloud = random_cloud(12, dim, 5 + dim as u64);
            let (lo, hi) = cloud.bounds();
            let eps = 1.0 / 16.0;
            let set = enumerate_bases(dim, 2, eps, lo, hi);
            let mb = MollifiedBasis::new(table(), eps, set.level_count()).unwrap();
            let kernels = sample_kernels(5, 1, KernelFamily::TrigSqrt, dim, [0.0; 3], [1.0; 3]).unwrap();
            let dense = assemble(&cloud, &set, &mb, &kernels, &AssemblyOptions::default()).unwrap();
            let factored = assemble(
                &cloud,
                &set,
                &mb,
                &kernels,
                &AssemblyOptions { dense_limit: 0, ..Default::default() },
            )
            .unwrap();
            assert!(dense.is_dense() && !factored.is_dense());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            let x: Vec<f64> = (0..dim * 12).map(|_| rng.random::<f64>() - 0.5).collect();
            let expected = brute_force(&cloud, &set, &mb, &x);
            for sys in [&dense, &factored] {
                let mut y = vec![0.0; sys.nrows()];
                sys.apply(&x, &mut y);
                for q in 0..12 {
                    assert!((y[q] - expected[q]).abs() < 1e-10, "{} vs {}", y[q], expected[q]);
                }
                // adjoint consistency
                let z: Vec<f64> = (0..sys.nrows()).map(|_| rng.random::<f64>() - 0.5).collect();
                let mut bt = vec![0.0; sys.ncols()];
                sys.apply_transpose(&z, &mut bt);
                let lhs = crate::solver::dot(&y, &z);
                let rhs = crate::solver::dot(&x, &bt);
                assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
            }
            for (a, b) in dense.column_norms_sq().iter().zip(factored.column_norms_sq()) {
                assert!((a - b).abs() < 1e-10 * a.max(1.0));
            }
            for (a, b) in dense.row_norms_sq().iter().zip(factored.row_norms_sq()) {
                assert!((a - b).abs() < 1e-10 * a.max(1.0));
            }
        }
    }

    #[test]
    fn norms_match_entries() {
        let cloud = random_cloud(8, 3, 2);
        let (lo, hi) = cloud.bounds();
        let set = enumerate_bases(3, 1, 0.05, lo, hi);
        let mb = MollifiedBasis::new(table(), 0.05, 1).unwrap();
        let kernels = sample_kernels(3, 2, KernelFamily::Center, 3, [0.0; 3], [1.0; 3]).unwrap();
        let sys = assemble(&cloud, &set, &mb, &kernels, &AssemblyOptions::default()).unwrap();
        let cols = sys.column_norms_sq();
        for c in 0..sys.ncols() {
            let direct: f64 = (0..sys.nrows()).map(|r| sys.entry(r, c).powi(2)).sum();
            assert!((direct - cols[c]).abs() < 1e-10 * direct.max(1.0));
        }
        // balanced rows share the RMS norm of the top block
        let rows = sys.row_norms_sq();
        let rms = rows[..8].iter().sum::<f64>() / 8.0;
        for r in &rows[8..] {
            assert!((r - rms).abs() < 1e-9 * rms);
        }
    }

    #[test]
    fn perturbing_a_point_is_local() {
        let mut cloud = random_cloud(10, 3, 9);
        let (lo, hi) = cloud.bounds();
        let set = enumerate_bases(3, 1, 0.05, lo, hi);
        let mb = MollifiedBasis::new(table(), 0.05, 1).unwrap();
        let a = assemble(&cloud, &set, &mb, &[], &AssemblyOptions::default()).unwrap();
        cloud.points[4][0] += 1e-3;
        let b = assemble(&cloud, &set, &mb, &[], &AssemblyOptions::default()).unwrap();
        // A changes only in the columns of point 4 (row 4 of B_f also changes)
        for c in 0..a.ncols() {
            for r in 0..10 {
                let changed = (a.entry(r, c) - b.entry(r, c)).abs() > 0.0;
                if changed {
                    assert!(c / 3 == 4 || r == 4, "entry ({r}, {c}) changed");
                }
            }
        }
    }

    #[test]
    fn rescaled_input_gives_identical_system() {
        let cloud = random_cloud(9, 3, 4);
        let raw: Vec<[f64; 3]> = (0..9).map(|i| cloud.original(i)).collect();
        let scaled: Vec<[f64; 3]> = raw.iter().map(|p| [p[0] * 8.0, p[1] * 8.0, p[2] * 8.0]).collect();
        let c1 = NormalizedCloud::normalize(&raw, 3, 0.1).unwrap();
        let c2 = NormalizedCloud::normalize(&scaled, 3, 0.1).unwrap();
        assert_eq!(c1.points(), c2.points());
    }
}
