//! Daubechies-4 scaling function and wavelet, tabulated on a dyadic grid.
//!
//! Db4 has no closed form, so `φ` is obtained by iterating the two-scale
//! relation `φ(x) = √2 Σ h(k) φ(2x − k)` on a grid with `resolution` samples per
//! unit until it stops changing. Every other quantity (`ψ`, the antiderivatives,
//! dilates and translates) is derived from that table and evaluated by linear
//! interpolation.

use crate::error::{Error, Result};

/// Length of the support of `φ` and of the tabulated `ψ`: `2N − 1` for `N = 4`.
pub const SUPPORT: usize = 7;

/// Number of filter taps (`2N`).
pub const TAPS: usize = 8;

const DB4: [f64; TAPS] = [
    0.230_377_813_308_896_500_863_291_183_044_070_850_001_6,
    0.714_846_570_552_915_647_089_921_955_273_992_603_707_6,
    0.630_880_767_929_858_907_881_716_338_300_615_220_203_2,
    -0.027_983_769_416_859_854_211_413_747_180_075_385_411_99,
    -0.187_034_811_719_093_084_079_570_672_789_081_419_584_5,
    0.030_841_381_835_560_763_627_219_362_534_959_050_170_31,
    0.032_883_011_666_885_199_735_407_513_549_244_388_664_54,
    -0.010_597_401_785_069_032_104_883_208_524_027_229_181_10,
];

const MAX_CASCADE_ITERATIONS: usize = 400;
const CASCADE_TOLERANCE: f64 = 1e-13;

/// Quadrature mirror (scaling) filter `h(k)`, `k = 0..7`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmfFilter {
    h: [f64; TAPS],
}

impl QmfFilter {
    /// The standard Daubechies filter with four vanishing moments.
    pub fn daubechies4() -> Self {
        QmfFilter { h: DB4 }
    }

    /// Arbitrary 8-tap filter. No validation is done here; a filter that
    /// does not generate a refinable function is caught by [`cascade`].
    pub fn from_coefficients(h: [f64; TAPS]) -> Self {
        QmfFilter { h }
    }

    pub fn coefficients(&self) -> &[f64; TAPS] {
        &self.h
    }

    /// `h(k)`, zero outside `0..8`.
    pub fn scaling(&self, k: i64) -> f64 {
        if (0..TAPS as i64).contains(&k) {
            self.h[k as usize]
        } else {
            0.0
        }
    }

    /// Wavelet filter `g(k) = (−1)^k h(1 − k)`, nonzero for `k ∈ [−6, 1]`.
    pub fn wavelet(&self, k: i64) -> f64 {
        let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign * self.scaling(1 - k)
    }

    /// `g(k − 6)` for `k = 0..7`: the wavelet filter translated by an even
    /// offset so the generated wavelet shares `φ`'s support `[0, 7]`.
    pub fn wavelet_taps(&self) -> [f64; TAPS] {
        let mut g = [0.0; TAPS];
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = self.wavelet(k as i64 - (TAPS as i64 - 2));
        }
        g
    }
}

pub fn build_filter() -> QmfFilter {
    QmfFilter::daubechies4()
}

/// Which 1-D profile to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// `φ`
    Scaling,
    /// `ψ`
    Wavelet,
    /// `Φ(x) = ∫_{−∞}^x φ`, plateaus at 1.
    ScalingIntegral,
    /// `Ψ(x) = ∫_{−∞}^x ψ`, compactly supported.
    WaveletIntegral,
}

impl Profile {
    pub fn is_integral(self) -> bool {
        matches!(self, Profile::ScalingIntegral | Profile::WaveletIntegral)
    }

    pub fn integral(self) -> Profile {
        match self {
            Profile::Scaling | Profile::ScalingIntegral => Profile::ScalingIntegral,
            Profile::Wavelet | Profile::WaveletIntegral => Profile::WaveletIntegral,
        }
    }

    /// `2^{j/2}` for function values, `2^{−j/2}` for antiderivatives.
    pub fn level_factor(self, level: u32) -> f64 {
        let half = (level as f64 * 0.5).exp2();
        if self.is_integral() {
            1.0 / half
        } else {
            half
        }
    }
}

/// `φ`, `ψ` and their antiderivatives sampled at `x = i / resolution`,
/// `i = 0..=7·resolution`.
#[derive(Debug, Clone)]
pub struct WaveletTable {
    resolution: usize,
    phi: Vec<f64>,
    psi: Vec<f64>,
    phi_integral: Vec<f64>,
    psi_integral: Vec<f64>,
    iterations: usize,
}

/// Runs the cascade iteration for `filter` on a grid with `resolution`
/// samples per unit length.
pub fn cascade(filter: &QmfFilter, resolution: usize) -> Result<WaveletTable> {
    if resolution < 64 || !resolution.is_power_of_two() {
        return Err(Error::invalid(format!(
            "grid resolution must be a power of two >= 64, got {resolution}"
        )));
    }
    let n = SUPPORT * resolution + 1;
    let sqrt2 = std::f64::consts::SQRT_2;

    // Hat function on [0, 2]; its integer samples sum to one, which the
    // iteration preserves.
    let mut phi: Vec<f64> = (0..n)
        .map(|i| (1.0 - (i as f64 / resolution as f64 - 1.0).abs()).max(0.0))
        .collect();
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        refine(&phi, filter.coefficients(), resolution, sqrt2, &mut next);
        let change = phi
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut phi, &mut next);
        if !change.is_finite() || change > 1e6 {
            return Err(Error::numeric(format!(
                "cascade diverged after {iterations} iterations; filter is not refinable"
            )));
        }
        if change < CASCADE_TOLERANCE {
            break;
        }
        if iterations >= MAX_CASCADE_ITERATIONS {
            return Err(Error::numeric(format!(
                "cascade did not converge in {MAX_CASCADE_ITERATIONS} iterations \
                 (last change {change:.3e}); filter is defective"
            )));
        }
    }

    let mut psi = vec![0.0; n];
    refine(&phi, &filter.wavelet_taps(), resolution, sqrt2, &mut psi);

    let h = 1.0 / resolution as f64;
    let phi_integral = trapezoid_cumulative(&phi, h);
    let psi_integral = trapezoid_cumulative(&psi, h);
    Ok(WaveletTable {
        resolution,
        phi,
        psi,
        phi_integral,
        psi_integral,
        iterations,
    })
}

/// `out(x) = scale · Σ taps(k) f(2x − k)` on the shared grid.
fn refine(f: &[f64], taps: &[f64; TAPS], resolution: usize, scale: f64, out: &mut [f64]) {
    let n = f.len() as i64;
    let r = resolution as i64;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &t) in taps.iter().enumerate() {
            let idx = 2 * i as i64 - k as i64 * r;
            if (0..n).contains(&idx) {
                acc += t * f[idx as usize];
            }
        }
        *o = scale * acc;
    }
}

fn trapezoid_cumulative(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Linear interpolation of samples at `u` (in sample units). Outside the
/// table the value is `left` before the first sample and `right` after the
/// last one.
pub(crate) fn lerp_samples(samples: &[f64], u: f64, left: f64, right: f64) -> f64 {
    if u <= 0.0 {
        return if u == 0.0 { samples[0] } else { left };
    }
    let last = samples.len() - 1;
    if u >= last as f64 {
        return if u == last as f64 { samples[last] } else { right };
    }
    let i = u.floor() as usize;
    let f = u - i as f64;
    samples[i] * (1.0 - f) + samples[i + 1] * f
}

impl WaveletTable {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cascade_iterations(&self) -> usize {
        self.iterations
    }

    /// Grid spacing `1 / resolution`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn samples(&self, profile: Profile) -> &[f64] {
        match profile {
            Profile::Scaling => &self.phi,
            Profile::Wavelet => &self.psi,
            Profile::ScalingIntegral => &self.phi_integral,
            Profile::WaveletIntegral => &self.psi_integral,
        }
    }

    /// Value of the tail plateau right of the support.
    pub fn tail(&self, profile: Profile) -> f64 {
        match profile {
            Profile::Scaling | Profile::Wavelet => 0.0,
            _ => *self.samples(profile).last().expect("nonempty table"),
        }
    }

    /// The standard-level profile at `t`.
    pub fn sample(&self, profile: Profile, t: f64) -> f64 {
        lerp_samples(
            self.samples(profile),
            t * self.resolution as f64,
            0.0,
            self.tail(profile),
        )
    }

    /// `2^{j/2} f(2^j x − k)` for `φ`/`ψ` and `2^{−j/2} F(2^j x − k)` for
    /// the antiderivatives.
    pub fn evaluate(&self, profile: Profile, level: u32, shift: i64, x: f64) -> f64 {
        let t = (level as f64).exp2() * x - shift as f64;
        profile.level_factor(level) * self.sample(profile, t)
    }
}

/// Per-axis choice between scaling function (bit clear) and wavelet (bit set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeVector(u8);

impl TypeVector {
    pub const SCALING: TypeVector = TypeVector(0);

    pub fn from_bits(bits: u8) -> Self {
        TypeVector(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn is_wavelet(self, axis: usize) -> bool {
        self.0 >> axis & 1 == 1
    }

    pub fn profile(self, axis: usize) -> Profile {
        if self.is_wavelet(axis) {
            Profile::Wavelet
        } else {
            Profile::Scaling
        }
    }

    /// Axis that carries the antiderivative in the divergence field: the
    /// first wavelet axis, or axis 0 for the pure scaling type.
    pub fn integral_axis(self) -> usize {
        if self.0 == 0 {
            0
        } else {
            self.0.trailing_zeros() as usize
        }
    }

    /// The `2^dim − 1` wavelet types in a `dim`-dimensional tensor basis.
    pub fn wavelet_types(dim: usize) -> impl Iterator<Item = TypeVector> {
        (1u8..(1u8 << dim)).map(TypeVector)
    }
}

/// One tensor-product basis function `Π_a f_{e_a}(2^j x_a − k_a)·2^{j·dim/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub kind: TypeVector,
    pub level: u32,
    pub shift: [i64; 3],
    pub dim: u8,
}

impl BasisIndex {
    /// Per-axis support `[k / 2^j, (k + 7) / 2^j]`.
    pub fn support(&self, axis: usize) -> (f64, f64) {
        let s = (self.level as f64).exp2();
        let k = self.shift[axis] as f64;
        (k / s, (k + SUPPORT as f64) / s)
    }

    /// Unmollified value at `x`.
    pub fn evaluate(&self, table: &WaveletTable, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for axis in 0..self.dim as usize {
            v *= table.evaluate(self.kind.profile(axis), self.level, self.shift[axis], x[axis]);
            if v == 0.0 {
                break;
            }
        }
        v
    }
}
