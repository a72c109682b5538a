//! `uwsr`: orientation and surface reconstruction for unoriented point clouds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use uwsr::fields::KernelFamily;
use uwsr::io::{self, load_points, PointCloud, PointFormat};
use uwsr::metrics::{normalized_chamfer, sample_mesh, DEFAULT_SAMPLES};
use uwsr::orientation::pgp90;
use uwsr::pipeline::{run_pipeline, write_artifacts, Extent, MeshFormat, Mode, NhSpec, PipelineConfig};
use uwsr::shapes::{perturb, Shape};
use uwsr::solver::SolvePath;
use uwsr::Error;

#[derive(Parser)]
#[command(name = "uwsr", version, about = "Wavelet-based orientation and surface reconstruction")]
struct Cli {
    /// Log progress (-v for info, -vv for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Orient the cloud and extract the surface (mesh in 3-D, contours in 2-D).
    Reconstruct(RunArgs),
    /// Orient the cloud only.
    Orient(RunArgs),
    /// Normalized chamfer distance between two surfaces, plus PGP90 when
    /// oriented normals and reference normals are given.
    Metrics(MetricsArgs),
    /// Add seeded Gaussian noise scaled by the bounding-box diagonal.
    Perturb(PerturbArgs),
    /// Write samples of an analytic shape with exact normals.
    SampleShape(SampleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input cloud (.xyz or .ply); normals in the file are used only for scoring.
    input: PathBuf,
    /// Input format; inferred from the extension by default.
    #[arg(long)]
    format: Option<PointFormat>,
    #[arg(long, default_value_t = 3)]
    depth: u32,
    /// Mollifier width in unit-cube coordinates [default: 0.5·2^-depth].
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    /// Homogeneous constraints, absolute ("300") or per point ("2M").
    #[arg(long, default_value = "2M")]
    nh: NhSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    grid_depth: u32,
    #[arg(long, default_value = "3d")]
    mode: Mode,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value = "trig-sqrt")]
    kernel_family: KernelFamily,
    /// Override the automatic choice between the two solver paths.
    #[arg(long, value_name = "min-norm|lsq")]
    force_path: Option<SolvePath>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    /// File name prefix for the artifacts [default: input file stem].
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "obj", value_name = "obj|ply")]
    mesh_format: MeshFormat,
}

impl RunArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            depth: self.depth,
            epsilon: self.epsilon,
            alpha: self.alpha,
            nh: self.nh,
            seed: self.seed,
            grid_depth: self.grid_depth,
            mode: self.mode,
            tol: self.tol,
            max_iter: self.max_iter,
            kernel_family: self.kernel_family,
            force_path: self.force_path,
            ..PipelineConfig::default()
        }
    }

    fn stem(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.input
                .file_stem()
                .map_or_else(|| "cloud".into(), |s| s.to_string_lossy().into_owned())
        })
    }
}

#[derive(Args)]
struct MetricsArgs {
    /// Reconstructed surface: a mesh (.obj/.ply) or a point set (.xyz).
    #[arg(long)]
    recon: PathBuf,
    /// Reference surface; its bounding box sets the unit-diagonal scale.
    #[arg(long)]
    truth: PathBuf,
    /// Samples drawn from each mesh.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Oriented cloud written by `orient` or `reconstruct`.
    #[arg(long, requires = "reference")]
    oriented: Option<PathBuf>,
    /// Cloud carrying ground-truth normals, in the same order.
    #[arg(long, requires = "oriented")]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    input: PathBuf,
    /// Noise standard deviation as a fraction of the bounding-box diagonal.
    #[arg(long, alias = "noise")]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// In 2-D the third coordinate is left unchanged.
    #[arg(long, default_value = "3d")]
    mode: Mode,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// sphere, torus, circle or ring.
    shape: Shape,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; .ply writes a PLY with normals, anything else XYZ.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Serialize)]
struct MetricsOutput {
    cd: f64,
    cd_x1e4: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pgp90: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> uwsr::Result<()> {
    match command {
        Command::Reconstruct(args) => pipeline(&args, Extent::Surface),
        Command::Orient(args) => pipeline(&args, Extent::Orientation),
        Command::Metrics(args) => metrics(&args),
        Command::Perturb(args) => {
            let cloud = load_points(&args.input, None)?;
            let noisy = perturb(&cloud, args.fraction, args.mode.dim(), args.seed)?;
            write_cloud(&args.output, &noisy)
        }
        Command::SampleShape(args) => {
            let cloud = args.shape.sample(args.count, args.seed)?;
            write_cloud(&args.output, &cloud)
        }
    }
}

fn pipeline(args: &RunArgs, extent: Extent) -> uwsr::Result<()> {
    let cloud = load_points(&args.input, args.format)?;
    let recon = run_pipeline(&args.config(), &cloud, extent)?;
    let r = &recon.report;
    log::info!(
        "{} points, {} bases, {} iterations ({}), v_iso {:.4}",
        r.points,
        r.basis_functions,
        r.solve.iterations,
        r.solve.path.as_str(),
        r.v_iso
    );
    if let Some(p) = r.pgp90 {
        log::info!("pgp90 {p:.4}");
    }
    for path in write_artifacts(&recon, &args.output_dir, &args.stem(), args.mesh_format)? {
        println!("{}", path.display());
    }
    Ok(())
}

/// Uniform samples on a mesh, or the points themselves for point files and
/// face-less PLY files.
fn surface_samples(path: &Path, count: usize, seed: u64) -> uwsr::Result<Vec<[f64; 3]>> {
    if PointFormat::from_path(path) == PointFormat::Xyz && !is_obj(path) {
        return Ok(load_points(path, Some(PointFormat::Xyz))?.points);
    }
    let mesh = io::load_mesh(path)?;
    if mesh.triangles.is_empty() {
        if mesh.vertices.is_empty() {
            return Err(Error::InvalidArgument(format!("{} contains no points", path.display())));
        }
        return Ok(mesh.vertices);
    }
    Ok(sample_mesh(&mesh, count, seed)?.samples)
}

fn is_obj(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj"))
}

fn metrics(args: &MetricsArgs) -> uwsr::Result<()> {
    let recon = surface_samples(&args.recon, args.samples, args.seed)?;
    let truth = surface_samples(&args.truth, args.samples, args.seed.wrapping_add(1))?;
    let cd = normalized_chamfer(&recon, &truth)?;
    let pgp = match (&args.oriented, &args.reference) {
        (Some(o), Some(r)) => {
            let est = normals_of(o)?;
            let reference = normals_of(r)?;
            Some(pgp90(&est, &reference)?)
        }
        _ => None,
    };
    let out = MetricsOutput {
        cd: cd.cd,
        cd_x1e4: cd.cd_x1e4,
        pgp90: pgp,
    };
    println!("{}", serde_json::to_string(&out).expect("metrics serialize"));
    Ok(())
}

fn normals_of(path: &Path) -> uwsr::Result<Vec<[f64; 3]>> {
    load_points(path, None)?
        .normals
        .ok_or_else(|| Error::InvalidArgument(format!("{} carries no normals", path.display())))
}

fn write_cloud(path: &Path, cloud: &PointCloud) -> uwsr::Result<()> {
    let text = if PointFormat::from_path(path) == PointFormat::Ply {
        io::cloud_ply_string(cloud)
    } else {
        io::xyz_string(cloud)
    };
    io::write_atomic(path, text.as_bytes())?;
    println!("{}", path.display());
    Ok(())
}
