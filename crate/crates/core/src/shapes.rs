//! Analytic test shapes with exact outward normals, and noise injection.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Fibonacci lattice on a sphere centered at the origin.
    Sphere { radius: f64 },
    /// Area-uniform random samples on a torus around the z axis.
    Torus { major: f64, minor: f64 },
    /// Equally spaced samples on a circle in the xy plane.
    Circle { radius: f64 },
    /// Two concentric circles; the region between them is the inside.
    Ring { inner: f64, outer: f64 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Sphere { .. } | Shape::Torus { .. } => 3,
            Shape::Circle { .. } | Shape::Ring { .. } => 2,
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<PointCloud> {
        if count == 0 {
            return Err(Error::invalid("sample count must be positive"));
        }
        match *self {
            Shape::Sphere { radius } => {
                positive(radius)?;
                Ok(sphere(count, radius))
            }
            Shape::Torus { major, minor } => {
                positive(minor)?;
                if major <= minor {
                    return Err(Error::invalid("torus major radius must exceed the minor radius"));
                }
                Ok(torus(count, major, minor, seed))
            }
            Shape::Circle { radius } => {
                positive(radius)?;
                Ok(circle(count, radius, 1.0, 0.0))
            }
            Shape::Ring { inner, outer } => {
                positive(inner)?;
                if outer <= inner {
                    return Err(Error::invalid("ring outer radius must exceed the inner radius"));
                }
                if count < 2 {
                    return Err(Error::invalid("a ring needs at least two samples"));
                }
                let n_in = ((count as f64 * inner / (inner + outer)).round() as usize).clamp(1, count - 1);
                let mut c = circle(count - n_in, outer, 1.0, 0.0);
                let hole = circle(n_in, inner, -1.0, PI / n_in as f64);
                c.points.extend(hole.points);
                c.normals.as_mut().expect("normals").extend(hole.normals.expect("normals"));
                Ok(c)
            }
        }
    }
}

fn positive(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("radius must be positive, got {v}")))
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Shape::Sphere { radius: 1.0 }),
            "torus" => Ok(Shape::Torus { major: 1.0, minor: 0.4 }),
            "circle" => Ok(Shape::Circle { radius: 1.0 }),
            "ring" | "annulus" => Ok(Shape::Ring { inner: 0.5, outer: 1.0 }),
            other => Err(Error::invalid(format!("unknown shape '{other}'"))),
        }
    }
}

fn sphere(count: usize, radius: f64) -> PointCloud {
    let golden = PI * (3.0 - 5f64.sqrt());
    let (points, normals) = (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            let n = [r * t.cos(), r * t.sin(), z];
            (n.map(|v| v * radius), n)
        })
        .unzip();
    PointCloud {
        points,
        normals: Some(normals),
    }
}

fn torus(count: usize, major: f64, minor: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    while points.len() < count {
        let u = rng.random::<f64>() * TAU;
        let v = rng.random::<f64>() * TAU;
        // the area element is proportional to major + minor·cos v
        if rng.random::<f64>() * (major + minor) > major + minor * v.cos() {
            continue;
        }
        let n = [v.cos() * u.cos(), v.cos() * u.sin(), v.sin()];
        let ring = major + minor * v.cos();
        points.push([ring * u.cos(), ring * u.sin(), minor * v.sin()]);
        normals.push(n);
    }
    PointCloud {
        points,
        normals: Some(normals),
    }
}

/// `sign` = 1 for normals pointing away from the center, −1 toward it.
fn circle(count: usize, radius: f64, sign: f64, phase: f64) -> PointCloud {
    let (points, normals) = (0..count)
        .map(|i| {
            let t = phase + TAU * i as f64 / count as f64;
            let (s, c) = t.sin_cos();
            ([radius * c, radius * s, 0.0], [sign * c, sign * s, 0.0])
        })
        .unzip();
    PointCloud {
        points,
        normals: Some(normals),
    }
}

/// Adds isotropic Gaussian noise with standard deviation `fraction` times the
/// bounding-box diagonal. In 2-D the third coordinate is left untouched.
pub fn perturb(cloud: &PointCloud, fraction: f64, dim: usize, seed: u64) -> Result<PointCloud> {
    if !(fraction >= 0.0) || !fraction.is_finite() {
        return Err(Error::invalid(format!("noise fraction must be nonnegative, got {fraction}")));
    }
    if dim != 2 && dim != 3 {
        return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
    }
    if cloud.is_empty() {
        return Err(Error::invalid("cannot perturb an empty cloud"));
    }
    let (lo, hi) = crate::assembly::bounds(&cloud.points, dim);
    let diag = crate::kdtree::dist_sq(&lo, &hi).sqrt();
    let sigma = fraction * diag;
    let mut out = cloud.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut out.points {
        for v in p.iter_mut().take(dim) {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64; 3]) -> f64 {
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    #[test]
    fn sphere_points_and_normals() {
        let c = Shape::Sphere { radius: 2.0 }.sample(500, 0).unwrap();
        let n = c.normals.as_ref().unwrap();
        for (p, q) in c.points.iter().zip(n) {
            assert!((norm(p) - 2.0).abs() < 1e-12);
            assert!((norm(q) - 1.0).abs() < 1e-12);
            assert!((p[0] / 2.0 - q[0]).abs() < 1e-12);
        }
        let mean_z: f64 = c.points.iter().map(|p| p[2]).sum::<f64>() / 500.0;
        assert!(mean_z.abs() < 1e-9);
    }

    #[test]
    fn torus_on_surface_and_seeded() {
        let shape = Shape::Torus { major: 1.0, minor: 0.3 };
        let c = shape.sample(400, 9).unwrap();
        for (p, n) in c.points.iter().zip(c.normals.as_ref().unwrap()) {
            let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!(((rho - 1.0).powi(2) + p[2] * p[2] - 0.09).abs() < 1e-12);
            // normal points away from the tube axis
            let axis = [p[0] / rho, p[1] / rho, 0.0];
            let d = [p[0] - axis[0], p[1] - axis[1], p[2]];
            assert!((d[0] * n[0] + d[1] * n[1] + d[2] * n[2] - 0.3).abs() < 1e-12);
        }
        assert_eq!(c, shape.sample(400, 9).unwrap());
        assert_ne!(c, shape.sample(400, 10).unwrap());
    }

    #[test]
    fn ring_normals_face_outward_of_annulus() {
        let c = Shape::Ring { inner: 0.5, outer: 1.0 }.sample(400, 0).unwrap();
        assert_eq!(c.len(), 400);
        for (p, n) in c.points.iter().zip(c.normals.as_ref().unwrap()) {
            let r = norm(p);
            let radial = p[0] * n[0] + p[1] * n[1];
            if r > 0.75 {
                assert!((radial - r).abs() < 1e-12);
            } else {
                assert!((radial + r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perturb_scales_with_diagonal() {
        let c = Shape::Sphere { radius: 1.0 }.sample(4000, 0).unwrap();
        let noisy = perturb(&c, 0.01, 3, 5).unwrap();
        let (lo, hi) = crate::assembly::bounds(&c.points, 3);
        let diag = crate::kdtree::dist_sq(&lo, &hi).sqrt();
        let var: f64 = c
            .points
            .iter()
            .zip(&noisy.points)
            .map(|(a, b)| crate::kdtree::dist_sq(a, b))
            .sum::<f64>()
            / (3.0 * 4000.0);
        assert!((var.sqrt() / (0.01 * diag) - 1.0).abs() < 0.05);
        assert_eq!(noisy, perturb(&c, 0.01, 3, 5).unwrap());
        assert_eq!(perturb(&c, 0.0, 3, 5).unwrap(), c);
        assert!(perturb(&c, -1.0, 3, 5).is_err());
        let flat = Shape::Circle { radius: 1.0 }.sample(50, 0).unwrap();
        assert!(perturb(&flat, 0.1, 2, 1).unwrap().points.iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn invalid_shapes() {
        assert!(Shape::Sphere { radius: 0.0 }.sample(10, 0).is_err());
        assert!(Shape::Torus { major: 0.2, minor: 0.4 }.sample(10, 0).is_err());
        assert!(Shape::Circle { radius: 1.0 }.sample(0, 0).is_err());
        assert!("cube".parse::<Shape>().is_err());
    }
}
