//! Evaluation of the reconstructed indicator and iso-surface extraction.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{bf_row, NormalizedCloud, Similarity};
use crate::basis::{BasisSet, FactorSource, PointFactors, SLOT_PHI, SLOT_PSI};
use crate::error::{Error, Result};
use crate::wavelet::WaveletTable;

/// `χ̄(x) = Σ_b c_b B_b(x)` with cached coefficients `c = Aμ`.
#[derive(Debug, Clone)]
pub struct IndicatorField {
    set: BasisSet,
    table: Arc<WaveletTable>,
    coefficients: Vec<f64>,
}

impl IndicatorField {
    pub fn new(set: BasisSet, table: Arc<WaveletTable>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != set.len() {
            return Err(Error::invalid(format!(
                "{} coefficients for {} basis functions",
                coefficients.len(),
                set.len()
            )));
        }
        Ok(IndicatorField {
            set,
            table,
            coefficients,
        })
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn negate(&mut self) {
        self.coefficients.iter_mut().for_each(|c| *c = -*c);
    }

    /// Field value at a unit-cube point.
    pub fn evaluate(&self, p: &[f64; 3]) -> f64 {
        let source = FactorSource::Plain(&self.table);
        let factors = PointFactors::new(&self.set, &source, p, &[SLOT_PHI, SLOT_PSI]);
        bf_row(&self.set, &factors)
            .into_iter()
            .map(|(b, v)| v * self.coefficients[b as usize])
            .sum()
    }

    pub fn evaluate_many(&self, points: &[[f64; 3]]) -> Vec<f64> {
        points.par_iter().map(|p| self.evaluate(p)).collect()
    }

    /// Values at the `2^depth + 1` corners per axis of a uniform grid over the
    /// unit cube (square in 2-D), using the tensor structure of each basis
    /// group.
    pub fn evaluate_grid(&self, depth: u32) -> Result<ImplicitGrid> {
        if depth == 0 || depth > 10 {
            return Err(Error::invalid(format!("grid depth must lie in 1..=10, got {depth}")));
        }
        let dim = self.dim();
        let n = (1usize << depth) + 1;
        let coords: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut values = vec![0.0; n.pow(dim as u32)];
        for g in self.set.groups() {
            let r = &self.set.ranges()[g.range];
            // per-axis factor matrices F_a[x][k]
            let mats: Vec<Vec<f64>> = (0..dim)
                .map(|a| {
                    let len = r.len[a];
                    let mut m = vec![0.0; n * len];
                    for (xi, &x) in coords.iter().enumerate() {
                        for k in 0..len {
                            m[xi * len + k] = self.table.evaluate(
                                g.kind.profile(a),
                                r.level,
                                r.lo[a] + k as i64,
                                x,
                            );
                        }
                    }
                    m
                })
                .collect();
            let c = &self.coefficients[g.offset..g.offset + g.count];
            if dim == 2 {
                let (l0, l1) = (r.len[0], r.len[1]);
                // T[x0][k1] = Σ_k0 F0[x0][k0] c[k0][k1]
                let mut t = vec![0.0; n * l1];
                for x0 in 0..n {
                    for k0 in 0..l0 {
                        let f = mats[0][x0 * l0 + k0];
                        if f != 0.0 {
                            for k1 in 0..l1 {
                                t[x0 * l1 + k1] += f * c[k0 * l1 + k1];
                            }
                        }
                    }
                }
                values.par_chunks_mut(n).enumerate().for_each(|(x0, row)| {
                    for (x1, v) in row.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for k1 in 0..l1 {
                            s += mats[1][x1 * l1 + k1] * t[x0 * l1 + k1];
                        }
                        *v += s;
                    }
                });
            } else {
                let (l0, l1, l2) = (r.len[0], r.len[1], r.len[2]);
                let mut t1 = vec![0.0; n * l1 * l2];
                for x0 in 0..n {
                    for k0 in 0..l0 {
                        let f = mats[0][x0 * l0 + k0];
                        if f != 0.0 {
                            let src = &c[k0 * l1 * l2..(k0 + 1) * l1 * l2];
                            let dst = &mut t1[x0 * l1 * l2..(x0 + 1) * l1 * l2];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += f * s;
                            }
                        }
                    }
                }
                let mut t2 = vec![0.0; n * n * l2];
                for x0 in 0..n {
                    for x1 in 0..n {
                        let dst = &mut t2[(x0 * n + x1) * l2..(x0 * n + x1 + 1) * l2];
                        for k1 in 0..l1 {
                            let f = mats[1][x1 * l1 + k1];
                            if f != 0.0 {
                                let src = &t1[(x0 * l1 + k1) * l2..(x0 * l1 + k1 + 1) * l2];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += f * s;
                                }
                            }
                        }
                    }
                }
                values.par_chunks_mut(n).enumerate().for_each(|(x01, row)| {
                    let src = &t2[x01 * l2..(x01 + 1) * l2];
                    for (x2, v) in row.iter_mut().enumerate() {
                        let f = &mats[2][x2 * l2..(x2 + 1) * l2];
                        *v += f.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
            }
        }
        ImplicitGrid::new(dim, depth, values, 0.5)
    }
}

/// Mean field value over the input points.
pub fn compute_isovalue(field: &IndicatorField, cloud: &NormalizedCloud) -> f64 {
    let values = field.evaluate_many(cloud.points());
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Field values at the corners of the unit cube (square in 2-D).
pub fn corner_values(field: &IndicatorField) -> Vec<f64> {
    let dim = field.dim();
    (0..1usize << dim)
        .map(|c| {
            let mut p = [0.0; 3];
            for (a, v) in p.iter_mut().enumerate().take(dim) {
                *v = (c >> a & 1) as f64;
            }
            field.evaluate(&p)
        })
        .collect()
}

/// Field samples on a uniform grid with `2^depth + 1` corners per axis.
/// Values are stored with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitGrid {
    dim: usize,
    depth: u32,
    n: usize,
    values: Vec<f64>,
    iso: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeDiagnostics {
    pub min: f64,
    pub max: f64,
    /// Fraction of samples outside `[−0.2, 1.2]`.
    pub outside_fraction: f64,
}

impl ImplicitGrid {
    pub fn new(dim: usize, depth: u32, values: Vec<f64>, iso: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
        }
        let n = (1usize << depth) + 1;
        if values.len() != n.pow(dim as u32) {
            return Err(Error::invalid(format!(
                "grid of depth {depth} needs {} values, got {}",
                n.pow(dim as u32),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("grid contains non-finite values"));
        }
        Ok(ImplicitGrid {
            dim,
            depth,
            n,
            values,
            iso,
        })
    }

    /// Samples `f` at the grid corners.
    pub fn from_fn(dim: usize, depth: u32, iso: f64, f: impl Fn([f64; 3]) -> f64 + Sync) -> Result<Self> {
        let n = (1usize << depth) + 1;
        let h = 1.0 / (n - 1) as f64;
        let values = (0..n.pow(dim as u32))
            .into_par_iter()
            .map(|idx| {
                let mut p = [0.0; 3];
                let mut rem = idx;
                for a in (0..dim).rev() {
                    p[a] = (rem % n) as f64 * h;
                    rem /= n;
                }
                f(p)
            })
            .collect();
        Self::new(dim, depth, values, iso)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Corners per axis.
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iso(&self) -> f64 {
        self.iso
    }

    pub fn set_iso(&mut self, iso: f64) {
        self.iso = iso;
    }

    pub fn negate(&mut self) {
        self.values.iter_mut().for_each(|v| *v = -*v);
        self.iso = -self.iso;
    }

    fn index(&self, i: [usize; 3]) -> usize {
        let mut idx = 0;
        for &c in i.iter().take(self.dim) {
            idx = idx * self.n + c;
        }
        idx
    }

    pub fn value(&self, i: [usize; 3]) -> f64 {
        self.values[self.index(i)]
    }

    pub fn position(&self, i: [usize; 3]) -> [f64; 3] {
        let h = 1.0 / (self.n - 1) as f64;
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = i[a] as f64 * h;
        }
        p
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn range_diagnostics(&self) -> RangeDiagnostics {
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let outside = self.values.iter().filter(|v| !(-0.2..=1.2).contains(*v)).count();
        RangeDiagnostics {
            min,
            max,
            outside_fraction: outside as f64 / self.values.len() as f64,
        }
    }

    /// True when the iso-value lies strictly inside the sampled range.
    pub fn iso_in_range(&self) -> bool {
        let d = self.range_diagnostics();
        d.min < self.iso && self.iso < d.max
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        triangle_area(
            &self.vertices[t[0] as usize],
            &self.vertices[t[1] as usize],
            &self.vertices[t[2] as usize],
        )
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    /// Number of directed edges without a matching opposite edge. Zero for a
    /// closed, consistently oriented surface.
    pub fn unmatched_edges(&self) -> usize {
        let mut count: HashMap<(u32, u32), i64> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a, b)).or_default() += 1;
            }
        }
        count
            .iter()
            .filter(|(&(a, b), &c)| c != 1 || count.get(&(b, a)).copied() != Some(1))
            .count()
    }
}

pub(crate) fn triangle_area(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Corner `c` of the unit cube: bit `a` of `c` is the coordinate on axis `a`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, c >> 1 & 1, c >> 2 & 1]
}

/// The 12 cube edges as `(lower corner, axis)`.
fn cube_edges() -> &'static [(usize, usize); 12] {
    static EDGES: OnceLock<[(usize, usize); 12]> = OnceLock::new();
    EDGES.get_or_init(|| {
        let mut e = [(0, 0); 12];
        let mut i = 0;
        for axis in 0..3 {
            for c in 0..8 {
                if c >> axis & 1 == 0 {
                    e[i] = (c, axis);
                    i += 1;
                }
            }
        }
        e
    })
}

fn edge_index(a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    let axis = (lo ^ hi).trailing_zeros() as usize;
    cube_edges()
        .iter()
        .position(|&(c, ax)| c == lo && ax == axis)
        .expect("corners share an edge")
}

/// For every inside/outside pattern, closed loops of crossed edges, each
/// wound counter-clockwise when seen from outside.
fn case_table() -> &'static Vec<Vec<Vec<u8>>> {
    static TABLE: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(build_case).collect())
}

fn build_case(case: usize) -> Vec<Vec<u8>> {
    let inside = |c: usize| case >> c & 1 == 1;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 12];
    for axis in 0..3 {
        for side in 0..2 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let base = side << axis;
            let cyc = [base, base | 1 << u, base | 1 << u | 1 << v, base | 1 << v];
            let edges: Vec<usize> = (0..4).map(|k| edge_index(cyc[k], cyc[(k + 1) % 4])).collect();
            let crossing: Vec<usize> = (0..4)
                .filter(|&k| inside(cyc[k]) != inside(cyc[(k + 1) % 4]))
                .collect();
            let mut link = |a: usize, b: usize| {
                adj[a].push(b);
                adj[b].push(a);
            };
            match crossing.len() {
                0 => {}
                2 => link(edges[crossing[0]], edges[crossing[1]]),
                4 => {
                    // ambiguous face: cut off each inside corner separately
                    for k in 0..4 {
                        if inside(cyc[k]) {
                            link(edges[(k + 3) % 4], edges[k]);
                        }
                    }
                }
                _ => unreachable!("a face has an even number of crossings"),
            }
        }
    }
    let midpoint = |e: usize| {
        let (c, axis) = cube_edges()[e];
        let o = corner_offset(c);
        let mut p = [o[0] as f64, o[1] as f64, o[2] as f64];
        p[axis] += 0.5;
        p
    };
    let mut used = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if used[start] || adj[start].is_empty() {
            continue;
        }
        debug_assert_eq!(adj[start].len(), 2);
        let mut lp = vec![start];
        used[start] = true;
        let mut prev = start;
        let mut cur = adj[start][0];
        while cur != start {
            used[cur] = true;
            lp.push(cur);
            let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
            prev = cur;
            cur = next;
        }
        // Newell normal of the loop versus the inside-to-outside direction
        let mut normal = [0.0; 3];
        for k in 0..lp.len() {
            let p = midpoint(lp[k]);
            let q = midpoint(lp[(k + 1) % lp.len()]);
            normal[0] += (p[1] - q[1]) * (p[2] + q[2]);
            normal[1] += (p[2] - q[2]) * (p[0] + q[0]);
            normal[2] += (p[0] - q[0]) * (p[1] + q[1]);
        }
        let mut outward = [0.0; 3];
        for &e in &lp {
            let (c, axis) = cube_edges()[e];
            outward[axis] += if inside(c) { 1.0 } else { -1.0 };
        }
        let d: f64 = (0..3).map(|a| normal[a] * outward[a]).sum();
        debug_assert!(d != 0.0);
        if d < 0.0 {
            lp.reverse();
        }
        loops.push(lp.into_iter().map(|e| e as u8).collect());
    }
    loops
}

/// Position along the edge `v0 → v1` where the field crosses `iso`.
fn crossing(v0: f64, v1: f64, iso: f64) -> f64 {
    let t = (iso - v0) / (v1 - v0);
    if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Extracts the `iso` level set of a 3-D grid. Inside is `value > iso`;
/// triangles face outward. Vertices are mapped through `transform.invert`.
pub fn marching_cubes(grid: &ImplicitGrid, transform: &Similarity) -> Result<Mesh> {
    if grid.dim() != 3 {
        return Err(Error::invalid("marching cubes needs a 3-D grid"));
    }
    let n = grid.size();
    let iso = grid.iso();
    let table = case_table();
    let mut mesh = Mesh::default();
    if !grid.iso_in_range() {
        log::warn!("iso-value {iso} lies outside the sampled field range; surface is empty");
        return Ok(mesh);
    }
    let mut vertex_of: HashMap<(usize, usize), u32> = HashMap::new();
    let h = grid.cell_size();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            for k in 0..n - 1 {
                let mut vals = [0.0; 8];
                let mut case = 0;
                for (c, v) in vals.iter_mut().enumerate() {
                    let o = corner_offset(c);
                    *v = grid.value([i + o[0], j + o[1], k + o[2]]);
                    if *v > iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                for lp in &table[case] {
                    let ids: Vec<u32> = lp
                        .iter()
                        .map(|&e| {
                            let (c, axis) = cube_edges()[e as usize];
                            let o = corner_offset(c);
                            let g = [i + o[0], j + o[1], k + o[2]];
                            let key = (grid.index(g), axis);
                            *vertex_of.entry(key).or_insert_with(|| {
                                let v0 = vals[c];
                                let v1 = vals[c | 1 << axis];
                                let t = crossing(v0, v1, iso);
                                let mut p = grid.position(g);
                                p[axis] += t * h;
                                mesh.vertices.push(transform.invert(&p));
                                (mesh.vertices.len() - 1) as u32
                            })
                        })
                        .collect();
                    for s in 1..ids.len() - 1 {
                        let tri = [ids[0], ids[s], ids[s + 1]];
                        if mesh.triangle_area(&tri) >= 1e-14 {
                            mesh.triangles.push(tri);
                        }
                    }
                }
            }
        }
    }
    if mesh.triangles.is_empty() {
        log::warn!("marching cubes produced an empty surface");
    }
    Ok(mesh)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 3]>,
    pub closed: bool,
}

impl Polyline {
    /// Signed area (positive for counter-clockwise winding).
    pub fn signed_area(&self) -> f64 {
        let p = &self.points;
        (0..p.len())
            .map(|k| {
                let (a, b) = (p[k], p[(k + 1) % p.len()]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            * 0.5
    }
}

/// Extracts the `iso` contours of a 2-D grid with the inside (`value > iso`)
/// on the left of each polyline, so outer boundaries run counter-clockwise.
pub fn marching_squares(grid: &ImplicitGrid, transform: &Similarity) -> Result<Vec<Polyline>> {
    if grid.dim() != 2 {
        return Err(Error::invalid("marching squares needs a 2-D grid"));
    }
    let n = grid.size();
    let iso = grid.iso();
    if !grid.iso_in_range() {
        log::warn!("iso-value {iso} lies outside the sampled field range; contour is empty");
        return Ok(Vec::new());
    }
    let h = grid.cell_size();
    // vertex key: (lower corner index, axis)
    let mut position: HashMap<(usize, usize), [f64; 3]> = HashMap::new();
    let mut next: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut has_prev: HashMap<(usize, usize), bool> = HashMap::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let cyc = [[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]];
            let vals: Vec<f64> = cyc.iter().map(|c| grid.value([c[0], c[1], 0])).collect();
            let inside: Vec<bool> = vals.iter().map(|&v| v > iso).collect();
            let mut edge_key = |k: usize| {
                let (a, b) = (cyc[k], cyc[(k + 1) % 4]);
                let (lo, hi, vlo, vhi) = if a[0] + a[1] <= b[0] + b[1] {
                    (a, b, vals[k], vals[(k + 1) % 4])
                } else {
                    (b, a, vals[(k + 1) % 4], vals[k])
                };
                let axis = if lo[0] != hi[0] { 0 } else { 1 };
                let key = (grid.index([lo[0], lo[1], 0]), axis);
                position.entry(key).or_insert_with(|| {
                    let mut p = grid.position([lo[0], lo[1], 0]);
                    p[axis] += crossing(vlo, vhi, iso) * h;
                    p
                });
                key
            };
            let crossings: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
            let mut segments: Vec<(usize, usize)> = Vec::new();
            match crossings.len() {
                0 => {}
                2 => segments.push((crossings[0], crossings[1])),
                4 => {
                    for k in 0..4 {
                        if inside[k] {
                            segments.push(((k + 3) % 4, k));
                        }
                    }
                }
                _ => unreachable!(),
            }
            for (ea, eb) in segments {
                let ka = edge_key(ea);
                let kb = edge_key(eb);
                // corners run counter-clockwise, so the contour leaves the cell
                // boundary where it passes from an inside corner to an outside one
                let (from, to) = if inside[ea] { (ka, kb) } else { (kb, ka) };
                next.insert(from, to);
                has_prev.insert(to, true);
            }
        }
    }
    let mut visited: HashMap<(usize, usize), bool> = HashMap::new();
    let mut lines = Vec::new();
    let mut starts: Vec<(usize, usize)> = next.keys().copied().collect();
    starts.sort_unstable();
    // open chains first (they start at a vertex with no predecessor)
    starts.sort_by_key(|k| has_prev.contains_key(k));
    for start in starts {
        if visited.contains_key(&start) {
            continue;
        }
        let mut pts = Vec::new();
        let mut cur = start;
        let mut closed = false;
        loop {
            visited.insert(cur, true);
            pts.push(transform.invert(&position[&cur]));
            match next.get(&cur) {
                Some(&nx) if nx == start => {
                    closed = true;
                    break;
                }
                Some(&nx) if !visited.contains_key(&nx) => cur = nx,
                _ => break,
            }
        }
        if pts.len() >= 2 {
            lines.push(Polyline { points: pts, closed });
        }
    }
    Ok(lines)
}
