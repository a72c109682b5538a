//! Python bindings: point clouds go in and out as lists of `[x, y, z]`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use engine::fields::KernelFamily;
use engine::isosurface::Mesh;
use engine::io::PointCloud;
use engine::pipeline::{self, Extent, Mode, NhSpec};
use engine::shapes::Shape;
use engine::solver::SolvePath;

type Points = Vec<[f64; 3]>;

fn to_py(e: engine::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = engine::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Pipeline settings; see the `uwsr` command-line flags of the same names.
#[pyclass(name = "PipelineConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    #[pyo3(get, set)]
    depth: u32,
    #[pyo3(get, set)]
    epsilon: Option<f64>,
    #[pyo3(get, set)]
    alpha: f64,
    #[pyo3(get, set)]
    nh: String,
    #[pyo3(get, set)]
    seed: u64,
    #[pyo3(get, set)]
    grid_depth: u32,
    #[pyo3(get, set)]
    mode: String,
    #[pyo3(get, set)]
    tol: f64,
    #[pyo3(get, set)]
    max_iter: usize,
    #[pyo3(get, set)]
    kernel_family: String,
    #[pyo3(get, set)]
    force_path: Option<String>,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        depth = 3, epsilon = None, alpha = 2.0, nh = "2M".to_string(), seed = 0, grid_depth = 6,
        mode = "3d".to_string(), tol = 1e-7, max_iter = 2000, kernel_family = "trig-sqrt".to_string(),
        force_path = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        depth: u32,
        epsilon: Option<f64>,
        alpha: f64,
        nh: String,
        seed: u64,
        grid_depth: u32,
        mode: String,
        tol: f64,
        max_iter: usize,
        kernel_family: String,
        force_path: Option<String>,
    ) -> PyResult<Self> {
        let c = PyConfig {
            depth,
            epsilon,
            alpha,
            nh,
            seed,
            grid_depth,
            mode,
            tol,
            max_iter,
            kernel_family,
            force_path,
        };
        c.resolve()?.validate().map_err(to_py)?;
        Ok(c)
    }

    fn __repr__(&self) -> String {
        format!(
            "PipelineConfig(depth={}, epsilon={:?}, alpha={}, nh='{}', seed={}, mode='{}')",
            self.depth, self.epsilon, self.alpha, self.nh, self.seed, self.mode
        )
    }
}

impl PyConfig {
    fn resolve(&self) -> PyResult<pipeline::PipelineConfig> {
        Ok(pipeline::PipelineConfig {
            depth: self.depth,
            epsilon: self.epsilon,
            alpha: self.alpha,
            nh: parse::<NhSpec>(&self.nh)?,
            seed: self.seed,
            grid_depth: self.grid_depth,
            mode: parse::<Mode>(&self.mode)?,
            tol: self.tol,
            max_iter: self.max_iter,
            kernel_family: parse::<KernelFamily>(&self.kernel_family)?,
            force_path: self.force_path.as_deref().map(parse::<SolvePath>).transpose()?,
            ..pipeline::PipelineConfig::default()
        })
    }
}

/// Result of `reconstruct` or `orient`.
#[pyclass(name = "Reconstruction", frozen)]
struct PyReconstruction {
    inner: pipeline::Reconstruction,
}

#[pymethods]
impl PyReconstruction {
    /// Input points, in input coordinates.
    #[getter]
    fn points(&self) -> Points {
        self.inner.oriented.points.clone()
    }

    /// Unit normals; degenerate rows carry a placeholder.
    #[getter]
    fn normals(&self) -> Points {
        self.inner.oriented.normals.clone()
    }

    #[getter]
    fn areas(&self) -> Vec<f64> {
        self.inner.oriented.areas.clone()
    }

    #[getter]
    fn degenerate(&self) -> Vec<bool> {
        self.inner.oriented.degenerate.clone()
    }

    #[getter]
    fn v_iso(&self) -> f64 {
        self.inner.report.v_iso
    }

    /// Fraction of normals within 90° of the input normals, if any were given.
    #[getter]
    fn pgp90(&self) -> Option<f64> {
        self.inner.report.pgp90
    }

    /// `(vertices, triangles)` in 3-D surface runs, otherwise `None`.
    #[getter]
    fn mesh(&self) -> Option<(Points, Vec<[u32; 3]>)> {
        self.inner
            .mesh
            .as_ref()
            .map(|m| (m.vertices.clone(), m.triangles.clone()))
    }

    /// `[(points, closed), ...]` in 2-D surface runs, otherwise `None`.
    #[getter]
    fn contours(&self) -> Option<Vec<(Points, bool)>> {
        self.inner
            .contours
            .as_ref()
            .map(|ls| ls.iter().map(|l| (l.points.clone(), l.closed)).collect())
    }

    /// The run report as a JSON string.
    fn report_json(&self) -> String {
        serde_json::to_string(&self.inner.report).expect("report serialize")
    }

    /// Indicator values at points given in input coordinates.
    fn evaluate(&self, py: Python<'_>, points: Points) -> Vec<f64> {
        py.detach(|| points.iter().map(|p| self.inner.field_at(p)).collect())
    }

    /// Writes the oriented cloud, surface and report into `directory`.
    #[pyo3(signature = (directory, stem, mesh_format = "obj"))]
    fn write(&self, directory: &str, stem: &str, mesh_format: &str) -> PyResult<Vec<String>> {
        let fmt = parse::<pipeline::MeshFormat>(mesh_format)?;
        let paths = pipeline::write_artifacts(&self.inner, directory.as_ref(), stem, fmt).map_err(to_py)?;
        Ok(paths.into_iter().map(|p| p.display().to_string()).collect())
    }
}

fn run(
    py: Python<'_>,
    points: Points,
    normals: Option<Points>,
    config: Option<PyConfig>,
    extent: Extent,
) -> PyResult<PyReconstruction> {
    let config = config.map_or_else(|| Ok(pipeline::PipelineConfig::default()), |c| c.resolve())?;
    let cloud = PointCloud { points, normals };
    let inner = py
        .detach(|| pipeline::run_pipeline(&config, &cloud, extent))
        .map_err(to_py)?;
    Ok(PyReconstruction { inner })
}

/// Orients the cloud and extracts the surface.
#[pyfunction]
#[pyo3(signature = (points, normals = None, config = None))]
fn reconstruct(
    py: Python<'_>,
    points: Points,
    normals: Option<Points>,
    config: Option<PyConfig>,
) -> PyResult<PyReconstruction> {
    run(py, points, normals, config, Extent::Surface)
}

/// Orients the cloud without extracting a surface.
#[pyfunction]
#[pyo3(signature = (points, normals = None, config = None))]
fn orient(
    py: Python<'_>,
    points: Points,
    normals: Option<Points>,
    config: Option<PyConfig>,
) -> PyResult<PyReconstruction> {
    run(py, points, normals, config, Extent::Orientation)
}

/// `(points, normals)` sampled from "sphere", "torus", "circle" or "ring".
#[pyfunction]
#[pyo3(signature = (shape, count, seed = 0))]
fn sample_shape(shape: &str, count: usize, seed: u64) -> PyResult<(Points, Points)> {
    let cloud = parse::<Shape>(shape)?.sample(count, seed).map_err(to_py)?;
    Ok((cloud.points, cloud.normals.unwrap_or_default()))
}

#[pyfunction]
#[pyo3(signature = (points, fraction, seed = 0, dim = 3))]
fn perturb(points: Points, fraction: f64, seed: u64, dim: usize) -> PyResult<Points> {
    let cloud = PointCloud { points, normals: None };
    Ok(engine::shapes::perturb(&cloud, fraction, dim, seed).map_err(to_py)?.points)
}

/// `(points, normals or None)` from an XYZ or PLY file.
#[pyfunction]
fn load_points(path: &str) -> PyResult<(Points, Option<Points>)> {
    let cloud = engine::io::load_points(path.as_ref(), None).map_err(to_py)?;
    Ok((cloud.points, cloud.normals))
}

#[pyfunction]
#[pyo3(signature = (vertices, triangles, count = engine::metrics::DEFAULT_SAMPLES, seed = 0))]
fn sample_mesh(vertices: Points, triangles: Vec<[u32; 3]>, count: usize, seed: u64) -> PyResult<Points> {
    if let Some(t) = triangles.iter().flatten().find(|&&v| v as usize >= vertices.len()) {
        return Err(PyValueError::new_err(format!("triangle index {t} out of range")));
    }
    let mesh = Mesh { vertices, triangles };
    Ok(engine::metrics::sample_mesh(&mesh, count, seed).map_err(to_py)?.samples)
}

/// Symmetric mean squared nearest-neighbour distance.
#[pyfunction]
fn chamfer(py: Python<'_>, a: Points, b: Points) -> PyResult<f64> {
    Ok(py.detach(|| engine::metrics::chamfer(&a, &b)).map_err(to_py)?.cd)
}

/// Chamfer distance after scaling `truth` to a unit bounding-box diagonal.
#[pyfunction]
fn normalized_chamfer(py: Python<'_>, recon: Points, truth: Points) -> PyResult<f64> {
    Ok(py
        .detach(|| engine::metrics::normalized_chamfer(&recon, &truth))
        .map_err(to_py)?
        .cd)
}

#[pyfunction]
fn pgp90(estimated: Points, truth: Points) -> PyResult<f64> {
    engine::orientation::pgp90(&estimated, &truth).map_err(to_py)
}

#[pymodule(name = "uwsr")]
fn uwsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyReconstruction>()?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(orient, m)?)?;
    m.add_function(wrap_pyfunction!(sample_shape, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(load_points, m)?)?;
    m.add_function(wrap_pyfunction!(sample_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(pgp90, m)?)?;
    m.add("REPORT_SCHEMA", pipeline::REPORT_SCHEMA)?;
    Ok(())
}
