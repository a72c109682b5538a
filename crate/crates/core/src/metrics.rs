//! Chamfer distance between sampled surfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isosurface::{Mesh, Polyline};
use crate::kdtree::KdTree;

pub const DEFAULT_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSurface {
    pub samples: Vec<[f64; 3]>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chamfer {
    pub cd: f64,
    pub cd_x1e4: f64,
}

impl Chamfer {
    fn new(cd: f64) -> Self {
        Chamfer { cd, cd_x1e4: cd * 1e4 }
    }
}

/// Area-weighted uniform samples on the triangles of `mesh`.
pub fn sample_mesh(mesh: &Mesh, k: usize, seed: u64) -> Result<SampledSurface> {
    if k == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in &mesh.triangles {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("mesh has zero area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..k)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let i = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangles[i].map(|v| mesh.vertices[v as usize]);
            let s = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
            [
                wa * a[0] + wb * b[0] + wc * c[0],
                wa * a[1] + wb * b[1] + wc * c[1],
                wa * a[2] + wb * b[2] + wc * c[2],
            ]
        })
        .collect();
    Ok(SampledSurface { samples, seed })
}

/// Length-weighted uniform samples on polylines.
pub fn sample_polylines(lines: &[Polyline], k: usize, seed: u64) -> Result<SampledSurface> {
    if k == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut segments = Vec::new();
    let mut cumulative = Vec::new();
    let mut total = 0.0;
    for l in lines {
        let n = l.points.len();
        let count = if l.closed { n } else { n.saturating_sub(1) };
        for s in 0..count {
            let (a, b) = (l.points[s], l.points[(s + 1) % n]);
            total += crate::kdtree::dist_sq(&a, &b).sqrt();
            segments.push((a, b));
            cumulative.push(total);
        }
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("polylines have zero length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..k)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let i = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
            let (a, b) = segments[i];
            let t = rng.random::<f64>();
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
        })
        .collect();
    Ok(SampledSurface { samples, seed })
}

fn one_sided(from: &[[f64; 3]], to: &KdTree) -> f64 {
    let d: Vec<f64> = from
        .par_iter()
        .map(|p| to.nearest(p).map_or(f64::INFINITY, |(_, d)| d))
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric mean squared nearest-neighbour distance.
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<Chamfer> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance needs two nonempty sample sets"));
    }
    let ta = KdTree::new(a);
    let tb = KdTree::new(b);
    Ok(Chamfer::new(one_sided(a, &tb) + one_sided(b, &ta)))
}

/// Center and scale mapping the bounding box of `reference` to unit diagonal.
pub fn unit_diagonal_transform(reference: &[[f64; 3]]) -> Result<([f64; 3], f64)> {
    let (lo, hi) = crate::assembly::bounds(reference, 3);
    let diag = crate::kdtree::dist_sq(&lo, &hi).sqrt();
    if !(diag > 0.0) || !diag.is_finite() {
        return Err(Error::Degenerate("reference has zero bounding-box diagonal".into()));
    }
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
    Ok((center, 1.0 / diag))
}

/// Chamfer distance after mapping both sets with the transform that gives
/// `truth` a unit bounding-box diagonal.
pub fn normalized_chamfer(recon: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<Chamfer> {
    let (c, s) = unit_diagonal_transform(truth)?;
    let map = |p: &[f64; 3]| [(p[0] - c[0]) * s, (p[1] - c[1]) * s, (p[2] - c[2]) * s];
    let r: Vec<[f64; 3]> = recon.iter().map(map).collect();
    let t: Vec<[f64; 3]> = truth.iter().map(map).collect();
    chamfer(&r, &t)
}
