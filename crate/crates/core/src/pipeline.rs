//! End-to-end driver: normalize, build constraints, solve, orient, evaluate
//! the indicator and extract its iso-surface.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, AssemblyOptions, NormalizedCloud};
use crate::basis::enumerate_bases;
use crate::error::{Error, Result};
use crate::fields::{sample_kernels, KernelFamily};
use crate::io::{self, PointCloud};
use crate::isosurface::{
    compute_isovalue, corner_values, marching_cubes, marching_squares, ImplicitGrid, IndicatorField, Mesh,
    Polyline, RangeDiagnostics,
};
use crate::mollifier::MollifiedBasis;
use crate::orientation::{extract_normals, mean_angle_degrees, pgp90, OrientedCloud};
use crate::solver::{solve_system, CgOptions, RegularizationScale, SolvePath, SolveReport, SolverConfig};
use crate::wavelet::{build_filter, cascade};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Mode {
    #[serde(rename = "2d")]
    TwoD,
    #[default]
    #[serde(rename = "3d")]
    ThreeD,
}

impl Mode {
    pub fn dim(self) -> usize {
        match self {
            Mode::TwoD => 2,
            Mode::ThreeD => 3,
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Ok(Mode::TwoD),
            "3d" => Ok(Mode::ThreeD),
            other => Err(Error::invalid(format!("unknown mode '{other}' (expected 2d or 3d)"))),
        }
    }
}

/// Number of homogeneous constraints, absolute or as a multiple of the
/// point count (`"2M"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NhSpec {
    Absolute(usize),
    PerPoint(f64),
}

impl NhSpec {
    pub fn resolve(self, points: usize) -> usize {
        match self {
            NhSpec::Absolute(n) => n,
            NhSpec::PerPoint(f) => (f * points as f64).round() as usize,
        }
    }
}

impl Default for NhSpec {
    fn default() -> Self {
        NhSpec::PerPoint(2.0)
    }
}

impl fmt::Display for NhSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NhSpec::Absolute(n) => write!(f, "{n}"),
            NhSpec::PerPoint(x) => write!(f, "{x}M"),
        }
    }
}

impl FromStr for NhSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("invalid constraint count '{s}' (expected e.g. 500 or 2M)"));
        if let Some(factor) = s.strip_suffix(['M', 'm']) {
            let f = if factor.is_empty() { 1.0 } else { factor.parse::<f64>().map_err(|_| bad())? };
            if !(f >= 0.0) || !f.is_finite() {
                return Err(bad());
            }
            Ok(NhSpec::PerPoint(f))
        } else {
            s.parse::<usize>().map(NhSpec::Absolute).map_err(|_| bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub depth: u32,
    /// Mollifier width in unit-cube coordinates; `None` means `0.5·2^−depth`.
    pub epsilon: Option<f64>,
    pub alpha: f64,
    pub nh: NhSpec,
    pub seed: u64,
    pub grid_depth: u32,
    pub mode: Mode,
    pub tol: f64,
    pub max_iter: usize,
    pub kernel_family: KernelFamily,
    pub force_path: Option<SolvePath>,
    pub regularization: RegularizationScale,
    pub balance_homogeneous: bool,
    /// Samples per unit of the tabulated wavelet profiles.
    pub resolution: usize,
    /// Empty border kept on each side of the normalized cloud.
    pub margin: f64,
    pub dense_limit: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cg = CgOptions::default();
        PipelineConfig {
            depth: 3,
            epsilon: None,
            alpha: 2.0,
            nh: NhSpec::default(),
            seed: 0,
            grid_depth: 6,
            mode: Mode::ThreeD,
            tol: cg.tol,
            max_iter: cg.max_iter,
            kernel_family: KernelFamily::default(),
            force_path: None,
            regularization: RegularizationScale::default(),
            balance_homogeneous: true,
            resolution: 1024,
            margin: 0.1,
            dense_limit: AssemblyOptions::default().dense_limit,
        }
    }
}

impl PipelineConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.5 * (-(self.depth as f64)).exp2())
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 8 {
            return Err(Error::invalid(format!("depth must lie in 1..=8, got {}", self.depth)));
        }
        let eps = self.epsilon();
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!("epsilon must be positive, got {eps}")));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if self.grid_depth == 0 || self.grid_depth > 10 {
            return Err(Error::invalid(format!("grid depth must lie in 1..=10, got {}", self.grid_depth)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("tolerance and iteration cap must be positive"));
        }
        if !(0.0..0.5).contains(&self.margin) {
            return Err(Error::invalid(format!("margin must lie in [0, 0.5), got {}", self.margin)));
        }
        if self.resolution < 16 {
            return Err(Error::invalid("wavelet table resolution must be at least 16"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub mode: Mode,
    pub points: usize,
    pub depth: u32,
    pub epsilon: f64,
    pub alpha: f64,
    pub homogeneous_constraints: usize,
    pub seed: u64,
    pub grid_depth: u32,
    pub kernel_family: KernelFamily,
    pub basis_functions: usize,
    pub dense_product: bool,
    pub solve: SolveReport,
    pub v_iso: f64,
    pub sign_flipped: bool,
    pub degenerate_normals: usize,
    pub pgp90: Option<f64>,
    pub mean_angle_deg: Option<f64>,
    pub range: Option<RangeDiagnostics>,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
    pub contours: usize,
    pub warnings: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub cloud: NormalizedCloud,
    pub oriented: OrientedCloud,
    pub field: IndicatorField,
    pub grid: Option<ImplicitGrid>,
    pub mesh: Option<Mesh>,
    pub contours: Option<Vec<Polyline>>,
    pub report: Report,
}

impl Reconstruction {
    /// Indicator value at a point given in input coordinates.
    pub fn field_at(&self, x: &[f64; 3]) -> f64 {
        self.field.evaluate(&self.cloud.transform().apply(x))
    }
}

/// How far [`run_pipeline`] goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    Orientation,
    Surface,
}

struct Clock {
    start: Instant,
    timings: Vec<StageTiming>,
}

impl Clock {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| e.in_stage(name));
        self.timings.push(StageTiming {
            stage: name.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

pub fn run_pipeline(config: &PipelineConfig, input: &PointCloud, extent: Extent) -> Result<Reconstruction> {
    let mut clock = Clock {
        start: Instant::now(),
        timings: Vec::new(),
    };
    config.validate()?;
    let dim = config.mode.dim();
    let eps = config.epsilon();
    let mut warnings = Vec::new();

    let (cloud, truth) = clock.stage("normalize", || {
        let points: Vec<[f64; 3]> = input
            .points
            .iter()
            .map(|p| if dim == 2 { [p[0], p[1], 0.0] } else { *p })
            .collect();
        let cloud = NormalizedCloud::normalize(&points, dim, config.margin)?;
        let truth = input.normals.as_ref().map(|ns| {
            ns.iter()
                .map(|n| if dim == 2 { [n[0], n[1], 0.0] } else { *n })
                .collect::<Vec<_>>()
        });
        Ok((cloud, truth))
    })?;
    let m = cloud.len();
    let nh = config.nh.resolve(m);

    let (table, bases, mollified) = clock.stage("mollify", || {
        let table = Arc::new(cascade(&build_filter(), config.resolution)?);
        let (lo, hi) = cloud.bounds();
        let bases = enumerate_bases(dim, config.depth, eps, lo, hi);
        let mollified = MollifiedBasis::new(table.clone(), eps, bases.level_count())?;
        mollified.build_all();
        Ok((table, bases, mollified))
    })?;

    let kernels = clock.stage("kernels", || {
        let (lo, hi) = cloud.bounds();
        sample_kernels(nh, config.seed, config.kernel_family, dim, lo, hi)
    })?;

    let system = clock.stage("assemble", || {
        let options = AssemblyOptions {
            balance_homogeneous: config.balance_homogeneous,
            dense_limit: config.dense_limit,
        };
        assemble(&cloud, &bases, &mollified, &kernels, &options)
    })?;

    let (mut mu, solve) = clock.stage("solve", || {
        let solver = SolverConfig {
            alpha: config.alpha,
            scale: config.regularization,
            cg: CgOptions {
                tol: config.tol,
                max_iter: config.max_iter,
            },
            force_path: config.force_path,
        };
        solve_system(&system, &solver)
    })?;
    if solve.hit_iteration_cap {
        warnings.push(format!(
            "solver stopped at the iteration cap ({}) with relative residual {:.3e}",
            solve.iterations, solve.relative_residual
        ));
    }

    let (field, v_iso, flipped) = clock.stage("isovalue", || {
        let mut field = IndicatorField::new(bases.clone(), table, system.coefficients(mu.as_slice()))?;
        let mut v_iso = compute_isovalue(&field, &cloud);
        let corners = corner_values(&field);
        let corner_mean = corners.iter().sum::<f64>() / corners.len() as f64;
        // the outside of the shape must lie below the iso-value
        let flipped = corner_mean > v_iso;
        if flipped {
            field.negate();
            mu.negate();
            v_iso = -v_iso;
        }
        Ok((field, v_iso, flipped))
    })?;
    if flipped {
        warnings.push("field orientation reversed so the exterior lies below the iso-value".into());
    }

    let oriented = clock.stage("orient", || extract_normals(&mu, &cloud))?;
    let degenerate = oriented.degenerate_count();
    if degenerate > 0 {
        warnings.push(format!("{degenerate} points have vanishing surface elements"));
    }
    let (pgp, angle) = match &truth {
        Some(t) => (
            Some(pgp90(&oriented.normals, t)?),
            Some(mean_angle_degrees(&oriented.normals, t)?),
        ),
        None => (None, None),
    };

    let mut grid = None;
    let mut mesh = None;
    let mut contours = None;
    if extent == Extent::Surface {
        let g = clock.stage("grid", || {
            let mut g = field.evaluate_grid(config.grid_depth)?;
            g.set_iso(v_iso);
            Ok(g)
        })?;
        clock.stage("extract", || {
            if dim == 3 {
                mesh = Some(marching_cubes(&g, cloud.transform())?);
            } else {
                contours = Some(marching_squares(&g, cloud.transform())?);
            }
            Ok(())
        })?;
        if mesh.as_ref().is_some_and(Mesh::is_empty) || contours.as_ref().is_some_and(Vec::is_empty) {
            warnings.push("extracted surface is empty".into());
        }
        grid = Some(g);
    }

    for w in &warnings {
        log::warn!("{w}");
    }
    let report = Report {
        schema: REPORT_SCHEMA,
        mode: config.mode,
        points: m,
        depth: config.depth,
        epsilon: eps,
        alpha: config.alpha,
        homogeneous_constraints: nh,
        seed: config.seed,
        grid_depth: config.grid_depth,
        kernel_family: config.kernel_family,
        basis_functions: bases.len(),
        dense_product: system.is_dense(),
        solve,
        v_iso,
        sign_flipped: flipped,
        degenerate_normals: degenerate,
        pgp90: pgp,
        mean_angle_deg: angle,
        range: grid.as_ref().map(ImplicitGrid::range_diagnostics),
        mesh_vertices: mesh.as_ref().map_or(0, |m| m.vertices.len()),
        mesh_triangles: mesh.as_ref().map_or(0, |m| m.triangles.len()),
        contours: contours.as_ref().map_or(0, Vec::len),
        warnings,
        timings: clock.timings,
        total_seconds: clock.start.elapsed().as_secs_f64(),
    };
    Ok(Reconstruction {
        cloud,
        oriented,
        field,
        grid,
        mesh,
        contours,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeshFormat {
    #[default]
    Obj,
    Ply,
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "ply" => Ok(MeshFormat::Ply),
            other => Err(Error::invalid(format!("unknown mesh format '{other}'"))),
        }
    }
}

/// Renders every artifact in memory, then writes them; if any write fails the
/// files already written are removed again.
pub fn write_artifacts(
    recon: &Reconstruction,
    dir: &Path,
    stem: &str,
    mesh_format: MeshFormat,
) -> Result<Vec<PathBuf>> {
    let o = &recon.oriented;
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![(
        dir.join(format!("{stem}_oriented.ply")),
        io::oriented_ply_string(&o.points, &o.normals, Some(&o.areas)).into_bytes(),
    )];
    if let Some(mesh) = &recon.mesh {
        let (ext, text) = match mesh_format {
            MeshFormat::Obj => ("obj", io::obj_string(mesh)),
            MeshFormat::Ply => ("ply", io::mesh_ply_string(mesh)),
        };
        files.push((dir.join(format!("{stem}_mesh.{ext}")), text.into_bytes()));
    }
    if let Some(lines) = &recon.contours {
        files.push((dir.join(format!("{stem}_contours.svg")), io::svg_string(lines).into_bytes()));
        files.push((dir.join(format!("{stem}_contours.csv")), io::csv_string(lines).into_bytes()));
    }
    let json = serde_json::to_vec_pretty(&recon.report).map_err(|e| Error::invalid(e.to_string()))?;
    files.push((dir.join(format!("{stem}_report.json")), json));

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (path, bytes) in &files {
        if let Err(e) = io::write_atomic(path, bytes) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path.clone());
    }
    Ok(written)
}
