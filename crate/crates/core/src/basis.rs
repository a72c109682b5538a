//! The truncated tensor-product basis: one scaling layer at level 0 plus
//! wavelet layers `0..depth`, restricted to functions whose (mollified)
//! support reaches the point cloud.

use crate::mollifier::MollifiedBasis;
use crate::wavelet::{BasisIndex, Profile, TypeVector, WaveletTable, SUPPORT};

/// Admissible translations of one level: `lo[a] .. lo[a] + len[a]` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelRange {
    pub level: u32,
    pub lo: [i64; 3],
    pub len: [usize; 3],
}

impl LevelRange {
    pub fn count(&self, dim: usize) -> usize {
        self.len[..dim].iter().product()
    }
}

/// All translations of one `(level, type)` pair, stored contiguously.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisGroup {
    pub range: usize,
    pub kind: TypeVector,
    pub offset: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    dim: usize,
    depth: u32,
    ranges: Vec<LevelRange>,
    groups: Vec<BasisGroup>,
    len: usize,
}

/// Enumerates every basis function whose support, widened by `epsilon` on
/// each side, overlaps the box `[lo, hi]`.
pub fn enumerate_bases(dim: usize, depth: u32, epsilon: f64, lo: [f64; 3], hi: [f64; 3]) -> BasisSet {
    assert!(dim == 2 || dim == 3, "dimension must be 2 or 3");
    let levels = depth.max(1);
    let ranges: Vec<LevelRange> = (0..levels)
        .map(|level| {
            let s = (level as f64).exp2();
            let mut r = LevelRange {
                level,
                lo: [0; 3],
                len: [1, 1, 1],
            };
            for a in 0..dim {
                // k/s − ε < hi  and  (k + 7)/s + ε > lo, both strict
                let k_max = ((s * (hi[a] + epsilon)).ceil() as i64) - 1;
                let k_min = ((s * (lo[a] - epsilon) - SUPPORT as f64).floor() as i64) + 1;
                r.lo[a] = k_min;
                r.len[a] = (k_max - k_min + 1).max(0) as usize;
            }
            r
        })
        .collect();

    let mut groups = Vec::new();
    let mut offset = 0;
    let mut push = |range: usize, kind: TypeVector| {
        let count = ranges[range].count(dim);
        groups.push(BasisGroup {
            range,
            kind,
            offset,
            count,
        });
        offset += count;
    };
    push(0, TypeVector::SCALING);
    for level in 0..depth {
        for kind in TypeVector::wavelet_types(dim) {
            push(level as usize, kind);
        }
    }
    BasisSet {
        dim,
        depth,
        ranges,
        groups,
        len: offset,
    }
}

impl BasisSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ranges(&self) -> &[LevelRange] {
        &self.ranges
    }

    pub fn groups(&self) -> &[BasisGroup] {
        &self.groups
    }

    /// Number of dyadic levels used (for sizing the mollified tables).
    pub fn level_count(&self) -> u32 {
        self.ranges.len() as u32
    }

    fn flat(&self, range: &LevelRange, idx: [usize; 3]) -> usize {
        let mut f = 0;
        for a in 0..self.dim {
            f = f * range.len[a] + idx[a];
        }
        f
    }

    pub fn get(&self, index: usize) -> Option<BasisIndex> {
        let g = self
            .groups
            .iter()
            .find(|g| index >= g.offset && index < g.offset + g.count)?;
        let r = &self.ranges[g.range];
        let mut rem = index - g.offset;
        let mut shift = [0i64; 3];
        for a in (0..self.dim).rev() {
            shift[a] = r.lo[a] + (rem % r.len[a]) as i64;
            rem /= r.len[a];
        }
        Some(BasisIndex {
            kind: g.kind,
            level: r.level,
            shift,
            dim: self.dim as u8,
        })
    }

    pub fn index_of(&self, b: &BasisIndex) -> Option<usize> {
        let is_scaling = b.kind == TypeVector::SCALING;
        let g = self.groups.iter().find(|g| {
            g.kind == b.kind && (is_scaling || self.ranges[g.range].level == b.level)
        })?;
        let r = &self.ranges[g.range];
        if is_scaling && b.level != r.level {
            return None;
        }
        let mut idx = [0usize; 3];
        for a in 0..self.dim {
            let off = b.shift[a] - r.lo[a];
            if off < 0 || off as usize >= r.len[a] {
                return None;
            }
            idx[a] = off as usize;
        }
        Some(g.offset + self.flat(r, idx))
    }

    pub fn iter(&self) -> impl Iterator<Item = BasisIndex> + '_ {
        (0..self.len).map(move |i| self.get(i).expect("index in range"))
    }
}

/// Nonzero 1-D factors of one level along one axis: `(offset into range, value)`.
pub(crate) type Factors = Vec<(u32, f64)>;

/// 1-D factor values of every level at one point, for the profiles that a
/// caller needs.
pub(crate) struct PointFactors {
    /// `[range][axis][profile slot]`
    pub factors: Vec<[[Factors; 4]; 3]>,
}

pub(crate) const SLOT_PHI: usize = 0;
pub(crate) const SLOT_PSI: usize = 1;
pub(crate) const SLOT_PHI_INT: usize = 2;
pub(crate) const SLOT_PSI_INT: usize = 3;

pub(crate) fn slot(profile: Profile) -> usize {
    match profile {
        Profile::Scaling => SLOT_PHI,
        Profile::Wavelet => SLOT_PSI,
        Profile::ScalingIntegral => SLOT_PHI_INT,
        Profile::WaveletIntegral => SLOT_PSI_INT,
    }
}

/// Where 1-D factors come from.
pub(crate) enum FactorSource<'a> {
    Plain(&'a WaveletTable),
    Mollified(&'a MollifiedBasis),
}

impl FactorSource<'_> {
    fn evaluate(&self, profile: Profile, level: u32, shift: i64, x: f64) -> f64 {
        match self {
            FactorSource::Plain(t) => t.evaluate(profile, level, shift, x),
            FactorSource::Mollified(m) => m.evaluate(profile, level, shift, x),
        }
    }

    fn slack(&self) -> f64 {
        match self {
            FactorSource::Plain(_) => 0.0,
            FactorSource::Mollified(m) => m.epsilon(),
        }
    }
}

impl PointFactors {
    /// Evaluates the requested profile slots at `p` for every level range.
    /// Integral slots include the plateau to the right of the support.
    pub fn new(set: &BasisSet, source: &FactorSource<'_>, p: &[f64], slots: &[usize]) -> Self {
        let slack = source.slack();
        let factors = set
            .ranges
            .iter()
            .map(|r| {
                let s = (r.level as f64).exp2();
                let mut per_axis: [[Factors; 4]; 3] = Default::default();
                for a in 0..set.dim {
                    let x = p[a];
                    // support of a mollified factor in k: s(x − slack) − 7 < k < s(x + slack)
                    let k_hi = ((s * (x + slack)).ceil() as i64 - 1).min(r.lo[a] + r.len[a] as i64 - 1);
                    let k_lo = (((s * (x - slack) - SUPPORT as f64).floor() as i64) + 1).max(r.lo[a]);
                    for &sl in slots {
                        let profile = match sl {
                            SLOT_PHI => Profile::Scaling,
                            SLOT_PSI => Profile::Wavelet,
                            SLOT_PHI_INT => Profile::ScalingIntegral,
                            _ => Profile::WaveletIntegral,
                        };
                        // the scaling antiderivative plateaus at every k left of the support
                        let lo = if sl == SLOT_PHI_INT { r.lo[a] } else { k_lo };
                        let list = &mut per_axis[a][sl];
                        for k in lo..=k_hi {
                            let v = source.evaluate(profile, r.level, k, x);
                            if v != 0.0 {
                                list.push(((k - r.lo[a]) as u32, v));
                            }
                        }
                    }
                }
                per_axis
            })
            .collect();
        PointFactors { factors }
    }
}

/// Visits the nonzero products `Π_a lists[a]` as `(flat index in group, value)`.
pub(crate) fn for_each_product(
    dim: usize,
    len: [usize; 3],
    lists: [&Factors; 3],
    mut f: impl FnMut(usize, f64),
) {
    if dim == 2 {
        for &(i0, v0) in lists[0] {
            let base = i0 as usize * len[1];
            for &(i1, v1) in lists[1] {
                f(base + i1 as usize, v0 * v1);
            }
        }
    } else {
        for &(i0, v0) in lists[0] {
            for &(i1, v1) in lists[1] {
                let base = (i0 as usize * len[1] + i1 as usize) * len[2];
                let v01 = v0 * v1;
                for &(i2, v2) in lists[2] {
                    f(base + i2 as usize, v01 * v2);
                }
            }
        }
    }
}
