//! Python bindings. Vectors and matrices cross the boundary as plain lists
//! (row-major nested lists for matrices); lengths are metres throughout.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use semshape::synthetic::{axis_difference_spec, body_measurement_spec, random_mixed_spec};
use semshape::{
    CovarianceMode, DiagGaussian, FitConfig, LinearShapeModel, MeasurementObservation,
    MeasurementRegressor, MeasurementSpec as CoreSpec, Profile,
};

fn to_py(e: semshape::Error) -> PyErr {
    match e {
        semshape::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn diag(mean: Vec<f64>, variances: Vec<f64>) -> PyResult<DiagGaussian> {
    DiagGaussian::new(vec(mean), vec(variances)).map_err(to_py)
}

fn observations(
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
) -> PyResult<Vec<MeasurementObservation>> {
    if means.len() != variances.len() {
        return Err(PyValueError::new_err(format!(
            "{} mean vectors but {} variance vectors",
            means.len(),
            variances.len()
        )));
    }
    means
        .into_iter()
        .zip(variances)
        .enumerate()
        .map(|(i, (m, v))| Ok(MeasurementObservation::new(format!("obs{i}"), diag(m, v)?)))
        .collect()
}

/// Linear blend-shape model `V(β) = T + S·β`.
#[pyclass(name = "ShapeModel", frozen)]
struct PyShapeModel(LinearShapeModel);

#[pymethods]
impl PyShapeModel {
    #[staticmethod]
    #[pyo3(signature = (seed, num_vertices, num_coeffs, profile = "body-like"))]
    fn synthetic(
        seed: u64,
        num_vertices: usize,
        num_coeffs: usize,
        profile: &str,
    ) -> PyResult<Self> {
        let profile: Profile = profile.parse().map_err(to_py)?;
        semshape::generate_synthetic_model(seed, num_vertices, num_coeffs, profile)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        semshape::load_model(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        semshape::save_model(&self.0, path).map_err(to_py)
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.0.num_vertices()
    }

    #[getter]
    fn num_coeffs(&self) -> usize {
        self.0.num_coeffs()
    }

    fn truncated(&self, num_coeffs: usize) -> PyResult<Self> {
        self.0.truncated(num_coeffs).map(Self).map_err(to_py)
    }

    /// Vertex positions as `[[x, y, z], ...]`.
    fn vertices(&self, beta: Vec<f64>) -> PyResult<Vec<[f64; 3]>> {
        let mesh = self.0.shape_to_vertices(&vec(beta)).map_err(to_py)?;
        Ok(mesh.vertices.iter().map(|p| [p.x, p.y, p.z]).collect())
    }

    fn export_obj(&self, beta: Vec<f64>, path: &str) -> PyResult<()> {
        let mesh = self.0.shape_to_vertices(&vec(beta)).map_err(to_py)?;
        semshape::export_obj(&mesh, path, None).map_err(to_py)
    }
}

/// Ordered list of named measurements.
#[pyclass(name = "MeasurementSpec", frozen)]
struct PySpec(CoreSpec);

#[pymethods]
impl PySpec {
    /// The 23-slot body spec that matches `ShapeModel.synthetic(..., "body-like")`.
    #[staticmethod]
    fn body(num_vertices: usize) -> PyResult<Self> {
        body_measurement_spec(num_vertices).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn axis_difference(num_vertices: usize, count: usize, seed: u64) -> PyResult<Self> {
        axis_difference_spec(num_vertices, count, seed)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn mixed(num_vertices: usize, count: usize, seed: u64) -> PyResult<Self> {
        random_mixed_spec(num_vertices, count, seed)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        CoreSpec::load(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.output_names().to_vec()
    }

    fn measure(&self, model: &PyShapeModel, beta: Vec<f64>) -> PyResult<Vec<f64>> {
        semshape::measure(&model.0, &self.0, &vec(beta))
            .map(|m| m.as_slice().to_vec())
            .map_err(to_py)
    }

    fn jacobian(&self, model: &PyShapeModel, beta: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        semshape::measurement_jacobian(&model.0, &self.0, &vec(beta))
            .map(|j| rows(&j))
            .map_err(to_py)
    }
}

/// Linear map from measurement offsets to coefficient offsets.
#[pyclass(name = "Regressor", frozen)]
struct PyRegressor(MeasurementRegressor);

#[pymethods]
impl PyRegressor {
    #[staticmethod]
    #[pyo3(signature = (model, spec, num_samples = 1_000_000, seed = 0, coeff_stddev = 1.25))]
    fn fit(
        py: Python<'_>,
        model: &PyShapeModel,
        spec: &PySpec,
        num_samples: usize,
        seed: u64,
        coeff_stddev: f64,
    ) -> PyResult<Self> {
        let config = FitConfig {
            num_samples,
            coeff_stddev,
            seed,
            ..FitConfig::default()
        };
        py.detach(|| semshape::fit_regressor(&model.0, &spec.0, &config))
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        MeasurementRegressor::load(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    /// K × |β| weights, row per measurement.
    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        rows(self.0.weights())
    }

    #[getter]
    fn base_measurements(&self) -> Vec<f64> {
        self.0.base_measurements().as_slice().to_vec()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.meta().rank
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.meta().warnings.clone()
    }

    fn coeff_offset(&self, delta_m: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0
            .coeff_offset(&vec(delta_m))
            .map(|b| b.as_slice().to_vec())
            .map_err(to_py)
    }
}

/// Returns `(new_beta, achieved_delta_m)`.
#[pyfunction]
fn apply_offset(
    model: &PyShapeModel,
    spec: &PySpec,
    regressor: &PyRegressor,
    base_beta: Vec<f64>,
    delta_m: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (beta, achieved) = semshape::apply_measurement_offset(
        &model.0,
        &spec.0,
        &regressor.0,
        &vec(base_beta),
        &vec(delta_m),
    )
    .map_err(to_py)?;
    Ok((beta.as_slice().to_vec(), achieved.as_slice().to_vec()))
}

/// Product-of-Gaussians fusion of per-observation `(means, variances)`.
/// Returns the fused `(mean, variances)`.
#[pyfunction]
fn fuse(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let f = semshape::fuse(&observations(means, variances)?).map_err(to_py)?;
    Ok((
        f.mean().as_slice().to_vec(),
        f.variances().as_slice().to_vec(),
    ))
}

/// Per-slot plain average, the baseline fusion is compared against.
#[pyfunction]
fn naive_average(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let f = semshape::naive_average(&observations(means, variances)?).map_err(to_py)?;
    Ok((
        f.mean().as_slice().to_vec(),
        f.variances().as_slice().to_vec(),
    ))
}

/// Coefficient distribution `(mean, covariance)` for a measurement-space
/// diagonal Gaussian.
#[pyfunction]
fn propagate_to_coeffs(
    regressor: &PyRegressor,
    mean: Vec<f64>,
    variances: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let g = semshape::propagate_to_coeffs(&regressor.0, &diag(mean, variances)?).map_err(to_py)?;
    Ok((g.mean().as_slice().to_vec(), rows(g.covariance())))
}

/// Per-vertex `[var_x, var_y, var_z]` for a measurement-space diagonal Gaussian.
#[pyfunction]
fn vertex_variance(
    model: &PyShapeModel,
    regressor: &PyRegressor,
    mean: Vec<f64>,
    variances: Vec<f64>,
) -> PyResult<Vec<[f64; 3]>> {
    let g = semshape::propagate_to_coeffs(&regressor.0, &diag(mean, variances)?).map_err(to_py)?;
    let vg = semshape::propagate_to_vertices(&model.0, &g, CovarianceMode::Lazy).map_err(to_py)?;
    let field = semshape::directional_vertex_variance(&vg).map_err(to_py)?;
    Ok(field.row_iter().map(|r| [r[0], r[1], r[2]]).collect())
}

#[pymodule(name = "semshape")]
fn semshape_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyShapeModel>()?;
    m.add_class::<PySpec>()?;
    m.add_class::<PyRegressor>()?;
    m.add_function(wrap_pyfunction!(apply_offset, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(naive_average, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_to_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(vertex_variance, m)?)?;
    Ok(())
}
