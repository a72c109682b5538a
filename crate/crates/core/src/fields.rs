//! Vector fields whose divergence is a mollified basis function, and
//! divergence-free curl fields used for the homogeneous constraints.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::MollifiedBasis;
use crate::wavelet::BasisIndex;

/// Value of the mollified basis function `B̄` at `p`.
pub fn mollified_basis_value(basis: &BasisIndex, mollified: &MollifiedBasis, p: &[f64]) -> f64 {
    let mut v = 1.0;
    for a in 0..basis.dim as usize {
        v *= mollified.evaluate(basis.kind.profile(a), basis.level, basis.shift[a], p[a]);
        if v == 0.0 {
            break;
        }
    }
    v
}

/// The field `F̄` with `div F̄ = B̄`: the antiderivative sits on
/// `basis.kind.integral_axis()`, the other axes carry the mollified factors.
/// Components beyond `basis.dim` are zero.
pub fn field_a(basis: &BasisIndex, mollified: &MollifiedBasis, p: &[f64]) -> [f64; 3] {
    let d = basis.kind.integral_axis();
    let mut v = 1.0;
    for a in 0..basis.dim as usize {
        let profile = basis.kind.profile(a);
        let profile = if a == d { profile.integral() } else { profile };
        v *= mollified.evaluate(profile, basis.level, basis.shift[a], p[a]);
        if v == 0.0 {
            break;
        }
    }
    let mut out = [0.0; 3];
    out[d] = v;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `G = (w₂ₓ cos s, w₂ᵧ sin s, w₂_z √(s + shift))`, `s = w₁·x`.
    #[default]
    TrigSqrt,
    /// `G = (1/r, 1/r, 1/r)` around a center outside the domain.
    Center,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trig-sqrt" | "trig" => Ok(KernelFamily::TrigSqrt),
            "center" => Ok(KernelFamily::Center),
            other => Err(Error::invalid(format!(
                "unknown kernel family '{other}' (expected trig-sqrt or center)"
            ))),
        }
    }
}

/// A divergence-free field `F = ∇×G` (3-D) or `F = (∂G/∂y, −∂G/∂x)` (2-D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DivFreeKernel {
    TrigSqrt {
        dim: usize,
        w1: [f64; 3],
        w2: [f64; 3],
        shift: f64,
    },
    Center {
        dim: usize,
        center: [f64; 3],
    },
}

fn dot(a: &[f64; 3], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Largest `|w·x|` over the corners of `[lo, hi]` (first `dim` axes).
fn max_abs_projection(w: &[f64; 3], dim: usize, lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for a in 0..dim {
        let (x, y) = (w[a] * lo[a], w[a] * hi[a]);
        pos += x.max(y);
        neg += x.min(y);
    }
    f64::max(pos.abs(), neg.abs())
}

impl DivFreeKernel {
    /// Trigonometric/square-root family. The square root is evaluated at
    /// `w₁·x + shift`, with `shift = 1 + max |w₁·x|` over the box `[lo, hi]`.
    pub fn trig_sqrt(dim: usize, w1: [f64; 3], w2: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        check_dim(dim)?;
        let mut w1 = w1;
        let mut w2 = w2;
        for a in dim..3 {
            w1[a] = 0.0;
            w2[a] = 0.0;
        }
        if norm(&w1) == 0.0 || norm(&w2) == 0.0 {
            return Err(Error::invalid("kernel weights w1 and w2 must be nonzero"));
        }
        if !w1.iter().chain(&w2).all(|v| v.is_finite()) {
            return Err(Error::invalid("kernel weights must be finite"));
        }
        let shift = 1.0 + max_abs_projection(&w1, dim, &lo, &hi);
        Ok(DivFreeKernel::TrigSqrt { dim, w1, w2, shift })
    }

    pub fn center(dim: usize, center: [f64; 3]) -> Result<Self> {
        check_dim(dim)?;
        let mut center = center;
        if dim == 2 {
            center[2] = 0.0;
        }
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("kernel center must be finite"));
        }
        Ok(DivFreeKernel::Center { dim, center })
    }

    pub fn dim(&self) -> usize {
        match self {
            DivFreeKernel::TrigSqrt { dim, .. } | DivFreeKernel::Center { dim, .. } => *dim,
        }
    }

    /// Closed-form field value at `p`; the third component is zero in 2-D.
    pub fn curl_field(&self, p: &[f64]) -> Result<[f64; 3]> {
        match *self {
            DivFreeKernel::TrigSqrt { dim, w1, w2, shift } => {
                let mut x = [0.0; 3];
                x[..dim].copy_from_slice(&p[..dim]);
                let s = dot(&w1, &x);
                if dim == 3 {
                    let arg = s + shift;
                    if !(arg > 0.0) {
                        return Err(Error::numeric(format!(
                            "square-root argument {arg} is not positive; point lies outside the kernel domain"
                        )));
                    }
                    let g = [-w2[0] * s.sin(), w2[1] * s.cos(), w2[2] / (2.0 * arg.sqrt())];
                    Ok(cross(&w1, &g))
                } else {
                    let g = -w2[0] * s.sin() + w2[1] * s.cos();
                    Ok([g * w1[1], -g * w1[0], 0.0])
                }
            }
            DivFreeKernel::Center { dim, center } => {
                let mut r = [0.0; 3];
                for a in 0..dim {
                    r[a] = p[a] - center[a];
                }
                let len = norm(&r);
                if len == 0.0 {
                    return Err(Error::numeric("field evaluated at its own center"));
                }
                let inv3 = 1.0 / (len * len * len);
                if dim == 3 {
                    let g = [-r[0] * inv3, -r[1] * inv3, -r[2] * inv3];
                    Ok([g[1] - g[2], g[2] - g[0], g[0] - g[1]])
                } else {
                    Ok([-r[1] * inv3, r[0] * inv3, 0.0])
                }
            }
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")))
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> [f64; 3] {
    loop {
        let mut v = [0.0; 3];
        for c in v.iter_mut().take(dim) {
            *c = StandardNormal.sample(rng);
        }
        let n = norm(&v);
        if n > 1e-8 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn nearly_parallel(a: &[f64; 3], b: &[f64; 3]) -> bool {
    norm(&cross(a, b)) < 1e-6 * norm(a) * norm(b)
}

/// Draws `count` kernels deterministically from `seed`.
///
/// Trig-sqrt: `w₁` uniform in `[−5, 5]^dim` (rejecting `|w₁| < 0.1` and
/// directions parallel to an earlier draw), `w₂` a random direction with
/// length uniform in `[0.5, 1.5]`. Center: centers at 1.2 to 2.5 times the
/// half-diagonal of `[lo, hi]` from its midpoint, in a random direction.
pub fn sample_kernels(
    count: usize,
    seed: u64,
    family: KernelFamily,
    dim: usize,
    lo: [f64; 3],
    hi: [f64; 3],
) -> Result<Vec<DivFreeKernel>> {
    check_dim(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<DivFreeKernel> = Vec::with_capacity(count);
    match family {
        KernelFamily::TrigSqrt => {
            let mut w1s: Vec<[f64; 3]> = Vec::with_capacity(count);
            while out.len() < count {
                let mut w1 = [0.0; 3];
                for c in w1.iter_mut().take(dim) {
                    *c = rng.random_range(-5.0..5.0);
                }
                if norm(&w1) < 0.1 {
                    continue;
                }
                if w1s.iter().any(|w| nearly_parallel(w, &w1)) {
                    continue;
                }
                let dir = unit_vector(&mut rng, dim);
                let len = rng.random_range(0.5..1.5);
                let w2 = [dir[0] * len, dir[1] * len, dir[2] * len];
                out.push(DivFreeKernel::trig_sqrt(dim, w1, w2, lo, hi)?);
                w1s.push(w1);
            }
        }
        KernelFamily::Center => {
            let mut mid = [0.0; 3];
            let mut half = 0.0;
            for a in 0..dim {
                mid[a] = 0.5 * (lo[a] + hi[a]);
                half += (0.5 * (hi[a] - lo[a])).powi(2);
            }
            let half = half.sqrt().max(1e-12);
            while out.len() < count {
                let dir = unit_vector(&mut rng, dim);
                let r = half * rng.random_range(1.2..2.5);
                let c = [mid[0] + r * dir[0], mid[1] + r * dir[1], mid[2] + r * dir[2]];
                out.push(DivFreeKernel::center(dim, c)?);
            }
        }
    }
    Ok(out)
}
