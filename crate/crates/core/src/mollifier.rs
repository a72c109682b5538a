//! Mollification of the 1-D profiles.
//!
//! Convolving `ψ_{j,k}` with `K_ε` equals `2^{j/2} ψ̄_{2^j ε}(2^j x − k)`, so only
//! the standard-level profiles are ever convolved: one table per level, with
//! kernel width `2^j ε` in that level's coordinates.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::wavelet::{lerp_samples, Profile, WaveletTable};

/// Unnormalized bump `exp(1 / (x² − 1))` on `(−1, 1)`.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 / (x * x - 1.0)).exp()
    }
}

/// `∫_{−1}^{1} exp(1 / (x² − 1)) dx`. The integrand is flat to all orders at
/// the endpoints, so the trapezoid rule converges geometrically.
pub fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        let n = 1 << 14;
        let h = 2.0 / n as f64;
        (1..n).map(|i| bump(-1.0 + i as f64 * h)).sum::<f64>() * h
    })
}

/// `K_ε(x) = K(x / ε) / ε` tabulated on the wavelet grid.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    width: f64,
    resolution: usize,
    samples: Vec<f64>,
    weights: Vec<f64>,
}

pub fn build_kernel(width: f64, resolution: usize) -> Result<MollifierKernel> {
    MollifierKernel::new(width, resolution)
}

impl MollifierKernel {
    pub fn new(width: f64, resolution: usize) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::invalid(format!("mollifier width must be positive, got {width}")));
        }
        if resolution == 0 {
            return Err(Error::invalid("resolution must be positive"));
        }
        let half = (width * resolution as f64).round() as i64;
        let r = resolution as f64;
        let mut samples: Vec<f64> = if half == 0 {
            // Narrower than one grid cell: acts as the identity.
            vec![r]
        } else {
            (-half..=half).map(|n| analytic(width, n as f64 / r)).collect()
        };
        // Unit mass on the grid, so convolution preserves discrete integrals exactly.
        let mass = samples.iter().sum::<f64>() / r;
        for s in samples.iter_mut() {
            *s /= mass;
        }
        let weights = hat_weights(width, resolution);
        Ok(MollifierKernel {
            width,
            resolution,
            samples,
            weights,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Closed-form `K_ε(x)`.
    pub fn value(&self, x: f64) -> f64 {
        analytic(self.width, x)
    }

    /// Grid samples at `n / resolution`, `n = −h..=h`.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn half_width_samples(&self) -> usize {
        (self.samples.len() - 1) / 2
    }

    /// Convolution weights `W_m = ∫ K_ε(y) hat(m − y·R) dy`, `m = −H..=H`,
    /// where `hat` is the linear interpolation basis. Convolving grid values
    /// with these weights gives the exact convolution of the piecewise-linear
    /// interpolant at the grid nodes. They sum to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Trapezoid integral of the tabulation.
    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.resolution as f64
    }
}

fn analytic(width: f64, x: f64) -> f64 {
    bump(x / width) / (width * bump_mass())
}

const GAUSS_NODES: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn hat_weights(width: f64, resolution: usize) -> Vec<f64> {
    let r = resolution as f64;
    let half = (width * r - 1e-9).ceil().max(0.0) as i64;
    // Each grid cell is split into `sub` Gauss panels; the kernel is smooth
    // inside a cell, and the hat is linear there.
    let sub = 4;
    let mut cells = vec![0.0; 2 * half as usize + 2];
    let mut first = vec![0.0; 2 * half as usize + 2];
    // cell c covers [(c − half − 1)/R, (c − half)/R] in kernel coordinates
    for c in 0..cells.len() {
        let a = (c as f64 - half as f64 - 1.0) / r;
        let step = 1.0 / (r * sub as f64);
        let (mut mass, mut moment) = (0.0, 0.0);
        for p in 0..sub {
            let lo = a + p as f64 * step;
            for &(t, w) in &GAUSS_NODES {
                let y = lo + 0.5 * step * (t + 1.0);
                let k = analytic(width, y) * 0.5 * step * w;
                mass += k;
                moment += k * (y - a) * r;
            }
        }
        cells[c] = mass;
        first[c] = moment;
    }
    // With y in cell c at fraction s, the node on its right gets s and the
    // node on its left gets 1 − s.
    let mut weights: Vec<f64> = (-half..=half)
        .map(|m| {
            let right_of = (m + half) as usize;
            let left_of = right_of + 1;
            first[right_of] + cells[left_of] - first[left_of]
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    weights
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Interpolation {
    Linear,
    Cubic,
}

/// Mollified profiles `φ̄`, `ψ̄`, `Φ̄`, `Ψ̄` for one kernel width, sampled on
/// `[−w, 7 + w]`.
#[derive(Debug, Clone)]
pub struct MollifiedTable {
    width: f64,
    resolution: usize,
    offset: usize,
    interpolation: Interpolation,
    phi: Vec<f64>,
    psi: Vec<f64>,
    phi_integral: Vec<f64>,
    psi_integral: Vec<f64>,
}

/// Convolves the base profiles of `table` with `kernel`.
pub fn mollify_base(table: &WaveletTable, kernel: &MollifierKernel) -> Result<MollifiedTable> {
    if kernel.width >= 1.0 {
        return Err(Error::invalid(format!(
            "kernel width {} must be below one base-level unit",
            kernel.width
        )));
    }
    if kernel.resolution != table.resolution() {
        return Err(Error::invalid("kernel and wavelet table resolutions differ"));
    }
    let half = (kernel.weights.len() - 1) / 2;
    let convolve = |f: &[f64]| -> Vec<f64> {
        let n = f.len() as i64;
        (0..f.len() + 2 * half)
            .map(|m| {
                let centre = m as i64 - half as i64;
                let mut acc = 0.0;
                for (idx, &k) in kernel.weights.iter().enumerate() {
                    let i = centre - (idx as i64 - half as i64);
                    if (0..n).contains(&i) {
                        acc += k * f[i as usize];
                    }
                }
                acc
            })
            .collect()
    };
    let phi = convolve(table.samples(Profile::Scaling));
    let psi = convolve(table.samples(Profile::Wavelet));
    let h = table.spacing();
    Ok(MollifiedTable {
        width: kernel.width,
        resolution: table.resolution(),
        offset: half,
        interpolation: Interpolation::Cubic,
        phi_integral: cubic_cumulative(&phi, h),
        psi_integral: cubic_cumulative(&psi, h),
        phi,
        psi,
    })
}

impl MollifiedTable {
    /// Zero-width mollification: the unmollified profiles with linear
    /// interpolation.
    pub fn unmollified(table: &WaveletTable) -> Self {
        MollifiedTable {
            width: 0.0,
            resolution: table.resolution(),
            offset: 0,
            interpolation: Interpolation::Linear,
            phi: table.samples(Profile::Scaling).to_vec(),
            psi: table.samples(Profile::Wavelet).to_vec(),
            phi_integral: table.samples(Profile::ScalingIntegral).to_vec(),
            psi_integral: table.samples(Profile::WaveletIntegral).to_vec(),
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Support of the mollified profiles, `[−w, 7 + w]` rounded to the grid.
    pub fn support(&self) -> (f64, f64) {
        let h = 1.0 / self.resolution as f64;
        let lo = -(self.offset as f64) * h;
        (lo, lo + (self.phi.len() - 1) as f64 * h)
    }

    pub fn samples(&self, profile: Profile) -> &[f64] {
        match profile {
            Profile::Scaling => &self.phi,
            Profile::Wavelet => &self.psi,
            Profile::ScalingIntegral => &self.phi_integral,
            Profile::WaveletIntegral => &self.psi_integral,
        }
    }

    pub fn tail(&self, profile: Profile) -> f64 {
        if profile.is_integral() {
            *self.samples(profile).last().expect("nonempty table")
        } else {
            0.0
        }
    }

    /// Standard-level mollified profile at `t`.
    pub fn sample(&self, profile: Profile, t: f64) -> f64 {
        let u = t * self.resolution as f64 + self.offset as f64;
        let s = self.samples(profile);
        let tail = self.tail(profile);
        match self.interpolation {
            Interpolation::Linear => lerp_samples(s, u, 0.0, tail),
            Interpolation::Cubic => cubic_samples(s, u, 0.0, tail),
        }
    }
}

/// 4-point Lagrange interpolation; indices outside the table read `left` or
/// `right`.
fn cubic_samples(s: &[f64], u: f64, left: f64, right: f64) -> f64 {
    let last = (s.len() - 1) as f64;
    if u < -1.0 {
        return left;
    }
    if u > last + 1.0 {
        return right;
    }
    let i = u.floor() as i64;
    let f = u - i as f64;
    let at = |j: i64| -> f64 {
        if j < 0 {
            left
        } else if j as usize >= s.len() {
            right
        } else {
            s[j as usize]
        }
    };
    let wm = -f * (f - 1.0) * (f - 2.0) / 6.0;
    let w0 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
    let w1 = -(f + 1.0) * f * (f - 2.0) / 2.0;
    let w2 = (f + 1.0) * f * (f - 1.0) / 6.0;
    wm * at(i - 1) + w0 * at(i) + w1 * at(i + 1) + w2 * at(i + 2)
}

/// Running integral of the cubic interpolant through `f` (zero outside).
fn cubic_cumulative(f: &[f64], h: f64) -> Vec<f64> {
    let at = |j: i64| -> f64 {
        if j < 0 || j as usize >= f.len() {
            0.0
        } else {
            f[j as usize]
        }
    };
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..f.len() as i64 - 1 {
        acc += h * (-at(i - 1) + 13.0 * at(i) + 13.0 * at(i + 1) - at(i + 2)) / 24.0;
        out.push(acc);
    }
    out
}

/// Mollified profiles for every level `0..levels`, each built on first use.
#[derive(Debug)]
pub struct MollifiedBasis {
    table: Arc<WaveletTable>,
    epsilon: f64,
    levels: Vec<OnceLock<MollifiedTable>>,
}

impl MollifiedBasis {
    /// `epsilon` is the mollifier width in unit-cube coordinates; `levels`
    /// is the number of dyadic levels that will be evaluated.
    pub fn new(table: Arc<WaveletTable>, epsilon: f64, levels: u32) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        let levels = levels.max(1);
        let widest = epsilon * ((levels - 1) as f64).exp2();
        if widest >= 1.0 {
            return Err(Error::invalid(format!(
                "epsilon {epsilon} is too wide for {levels} levels (level width {widest} >= 1)"
            )));
        }
        Ok(MollifiedBasis {
            table,
            epsilon,
            levels: (0..levels).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn wavelet_table(&self) -> &WaveletTable {
        &self.table
    }

    pub fn level_count(&self) -> u32 {
        self.levels.len() as u32
    }

    /// Table for `level`, built with kernel width `2^level · ε`.
    pub fn level_table(&self, level: u32) -> &MollifiedTable {
        let slot = self
            .levels
            .get(level as usize)
            .unwrap_or_else(|| panic!("level {level} outside 0..{}", self.levels.len()));
        slot.get_or_init(|| {
            let width = self.epsilon * (level as f64).exp2();
            if width == 0.0 {
                return MollifiedTable::unmollified(&self.table);
            }
            let kernel = MollifierKernel::new(width, self.table.resolution())
                .expect("width validated at construction");
            mollify_base(&self.table, &kernel).expect("width validated at construction")
        })
    }

    /// Builds every level table up front.
    pub fn build_all(&self) {
        for level in 0..self.level_count() {
            self.level_table(level);
        }
    }

    /// `2^{j/2} f̄_{2^j ε}(2^j x − k)`, or `2^{−j/2} F̄_{2^j ε}(2^j x − k)` for
    /// the antiderivative profiles.
    pub fn evaluate(&self, profile: Profile, level: u32, shift: i64, x: f64) -> f64 {
        let t = (level as f64).exp2() * x - shift as f64;
        profile.level_factor(level) * self.level_table(level).sample(profile, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{build_filter, cascade};

    fn table(r: usize) -> Arc<WaveletTable> {
        Arc::new(cascade(&build_filter(), r).unwrap())
    }

    #[test]
    fn kernel_normalization() {
        let k = build_kernel(1.0, 256).unwrap();
        assert!((k.integral() - 1.0).abs() < 1e-10);
        // the analytic kernel integrates to one as well
        let n = 20000;
        let h = 2.0 / n as f64;
        let s: f64 = (1..n).map(|i| k.value(-1.0 + i as f64 * h)).sum::<f64>() * h;
        assert!((s - 1.0).abs() < 1e-10, "{s}");
    }

    #[test]
    fn kernel_support_edge() {
        let k = build_kernel(1.0, 256).unwrap();
        assert_eq!(k.value(1.0), 0.0);
        assert_eq!(k.value(-1.0), 0.0);
        assert!(k.value(0.999) > 0.0);
        assert!(k.value(0.7) == k.value(-0.7));
    }

    #[test]
    fn kernel_scaling_rule() {
        let k1 = build_kernel(1.0, 256).unwrap();
        let k2 = build_kernel(0.5, 256).unwrap();
        assert!((k2.value(0.0) - 2.0 * k1.value(0.0)).abs() < 1e-14);
    }

    #[test]
    fn kernel_rejects_nonpositive_width() {
        assert!(build_kernel(0.0, 256).is_err());
        assert!(build_kernel(-1.0, 256).is_err());
        assert!(build_kernel(f64::NAN, 256).is_err());
    }

    #[test]
    fn tabulated_kernel_even_and_nonnegative() {
        let k = build_kernel(0.1, 1024).unwrap();
        let s = k.samples();
        for i in 0..s.len() {
            assert!(s[i] >= 0.0);
            assert_eq!(s[i], s[s.len() - 1 - i]);
        }
    }

    #[test]
    fn hat_weights_match_linear_interpolant() {
        for (width, r) in [(0.1, 1024), (0.25, 256), (0.0004, 1024)] {
            let k = build_kernel(width, r).unwrap();
            let w = k.weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for i in 0..w.len() {
                assert!(w[i] >= 0.0);
                assert!((w[i] - w[w.len() - 1 - i]).abs() < 1e-15);
            }
            if width * (r as f64) < 4.0 {
                continue;
            }
            // second moment of K plus that of the hat, 1 / (6 R²)
            let h = (w.len() as f64 - 1.0) / 2.0;
            let m2: f64 = w.iter().enumerate().map(|(i, &v)| v * ((i as f64 - h) / r as f64).powi(2)).sum();
            let n = 20_000;
            let step = 2.0 * width / n as f64;
            let exact: f64 = (1..n)
                .map(|i| {
                    let y = -width + i as f64 * step;
                    k.value(y) * y * y * step
                })
                .sum::<f64>()
                + 1.0 / (6.0 * (r * r) as f64);
            assert!((m2 - exact).abs() < 1e-9 * exact, "{m2} vs {exact}");
        }
    }

    #[test]
    fn mollified_support_and_mass() {
        let t = table(256);
        let k = build_kernel(0.25, 256).unwrap();
        let m = mollify_base(&t, &k).unwrap();
        let (lo, hi) = m.support();
        assert!((lo + 0.25).abs() < 1e-12 && (hi - 7.25).abs() < 1e-12);
        for x in [-0.3, -0.25, 7.25, 7.5] {
            assert_eq!(m.sample(Profile::Wavelet, x), 0.0);
            assert_eq!(m.sample(Profile::Scaling, x), 0.0);
        }
        let h = 1.0 / 256.0;
        let phi_mass: f64 = m.samples(Profile::Scaling).iter().sum::<f64>() * h;
        let psi_mass: f64 = m.samples(Profile::Wavelet).iter().sum::<f64>() * h;
        assert!((phi_mass - 1.0).abs() < 1e-8);
        assert!(psi_mass.abs() < 1e-8);
        assert!((m.tail(Profile::ScalingIntegral) - 1.0).abs() < 1e-8);
        assert!(m.tail(Profile::WaveletIntegral).abs() < 1e-8);
    }

    #[test]
    fn narrow_kernel_approaches_identity() {
        let t = table(256);
        let k = build_kernel(1.0 / 256.0, 256).unwrap();
        let m = mollify_base(&t, &k).unwrap();
        let peak = t.samples(Profile::Wavelet).iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut worst = 0.0f64;
        for i in 0..7 * 256 {
            let x = i as f64 / 256.0;
            worst = worst.max((m.sample(Profile::Wavelet, x) - t.sample(Profile::Wavelet, x)).abs());
        }
        assert!(worst < 0.05 * peak, "{worst} vs {peak}");
    }

    #[test]
    fn zero_epsilon_short_circuits() {
        let t = table(256);
        let mb = MollifiedBasis::new(t.clone(), 0.0, 3).unwrap();
        for x in [0.1, 0.33, 0.71] {
            for level in 0..3 {
                for p in [Profile::Scaling, Profile::Wavelet, Profile::WaveletIntegral] {
                    assert_eq!(mb.evaluate(p, level, -1, x), t.evaluate(p, level, -1, x));
                }
            }
        }
    }

    #[test]
    fn level_zero_identity() {
        let t = table(256);
        let mb = MollifiedBasis::new(t.clone(), 1.0 / 16.0, 3).unwrap();
        let direct = mollify_base(&t, &build_kernel(1.0 / 16.0, 256).unwrap()).unwrap();
        for x in [0.05, 0.5, 2.3, 6.9] {
            assert_eq!(mb.evaluate(Profile::Wavelet, 0, 0, x), direct.sample(Profile::Wavelet, x));
        }
    }

    #[test]
    fn rescaled_level_uses_wider_kernel() {
        let t = table(256);
        let eps = 1.0 / 32.0;
        let mb = MollifiedBasis::new(t.clone(), eps, 4).unwrap();
        let wide = mollify_base(&t, &build_kernel(4.0 * eps, 256).unwrap()).unwrap();
        for x in [0.8, 1.1, 1.7] {
            let lhs = mb.evaluate(Profile::Wavelet, 2, 3, x);
            let rhs = 2.0 * wide.sample(Profile::Wavelet, 4.0 * x - 3.0);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn too_wide_epsilon_rejected() {
        let t = table(64);
        assert!(MollifiedBasis::new(t.clone(), 0.3, 3).is_err());
        assert!(MollifiedBasis::new(t, -0.1, 3).is_err());
    }
}
