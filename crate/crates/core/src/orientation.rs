//! Normals and area elements from the solved surface elements.

use serde::{Deserialize, Serialize};

use crate::assembly::NormalizedCloud;
use crate::error::{Error, Result};
use crate::solver::SurfaceElementField;

/// Relative row norm below which a surface element carries no direction.
pub const DEGENERATE_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedCloud {
    pub dim: usize,
    /// Input coordinates.
    pub points: Vec<[f64; 3]>,
    /// Unit normals; degenerate rows carry the placeholder `(0, 0, 1)`
    /// (`(0, 1)` in 2-D).
    pub normals: Vec<[f64; 3]>,
    /// Area (3-D) or length (2-D) elements in input units.
    pub areas: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl OrientedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// `n_i = μ_i / ‖μ_i‖`, `σ_i = ‖μ_i‖` mapped back to input units.
pub fn extract_normals(mu: &SurfaceElementField, cloud: &NormalizedCloud) -> Result<OrientedCloud> {
    let dim = cloud.dim();
    if mu.dim() != dim || mu.len() != cloud.len() {
        return Err(Error::invalid(format!(
            "surface elements ({} rows of {}) do not match the cloud ({} points in {dim}-D)",
            mu.len(),
            mu.dim(),
            cloud.len()
        )));
    }
    let norms: Vec<f64> = (0..mu.len())
        .map(|i| mu.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let largest = norms.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return Err(Error::Degenerate(
            "all surface elements are zero; no orientation information".into(),
        ));
    }
    let factor = cloud.transform().measure_factor();
    let placeholder = if dim == 3 { [0.0, 0.0, 1.0] } else { [0.0, 1.0, 0.0] };
    let mut out = OrientedCloud {
        dim,
        points: (0..cloud.len()).map(|i| cloud.original(i)).collect(),
        normals: Vec::with_capacity(mu.len()),
        areas: Vec::with_capacity(mu.len()),
        degenerate: Vec::with_capacity(mu.len()),
    };
    for (i, &s) in norms.iter().enumerate() {
        if s < DEGENERATE_RATIO * largest {
            out.normals.push(placeholder);
            out.areas.push(0.0);
            out.degenerate.push(true);
        } else {
            let mut n = [0.0; 3];
            for (a, v) in mu.row(i).iter().enumerate() {
                n[a] = v / s;
            }
            out.normals.push(n);
            out.areas.push(s * factor);
            out.degenerate.push(false);
        }
    }
    Ok(out)
}

/// Fraction of normals with a positive dot product against the truth.
pub fn pgp90(estimated: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} estimated normals against {} reference normals",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.is_empty() {
        return Err(Error::invalid("no normals to compare"));
    }
    let good = estimated
        .iter()
        .zip(truth)
        .filter(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2] > 0.0)
        .count();
    Ok(good as f64 / estimated.len() as f64)
}

/// Mean angle in degrees between estimated and reference normals.
pub fn mean_angle_degrees(estimated: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<f64> {
    if estimated.len() != truth.len() || estimated.is_empty() {
        return Err(Error::invalid("normal sets must be nonempty and of equal size"));
    }
    let total: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(a, b)| {
            let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
            c.clamp(-1.0, 1.0).acos().to_degrees()
        })
        .sum();
    Ok(total / estimated.len() as f64)
}
