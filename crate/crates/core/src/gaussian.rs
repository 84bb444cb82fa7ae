//! Gaussian uncertainty carried from measurement space to shape coefficients
//! and on to T-pose vertices.
//!
//! An independent Gaussian over measurement offsets maps through the
//! regressor to a full Gaussian over coefficients,
//! `N(Wᵀμ, Wᵀ·diag(σ²)·W)`, and through the basis to a Gaussian over the
//! flattened vertices, `N(S·μ_β + t, S·Σ_β·Sᵀ)`.
//!
//! Propagated covariances are kept in factored form `Σ = L·Lᵀ` alongside
//! the dense matrix; vertex covariances use only the factor unless the full
//! (3V)² matrix is explicitly requested and fits under the size cap.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::model::LinearShapeModel;
use crate::regressor::MeasurementRegressor;

/// Relative tolerance for covariance symmetry and negative eigenvalues.
pub const PSD_TOL: f64 = 1e-9;

/// Default largest vertex count for which a dense vertex covariance is built.
pub const DEFAULT_MAX_FULL_VERTICES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: DVector<f64>,
    variances: DVector<f64>,
}

impl DiagGaussian {
    pub fn new(mean: DVector<f64>, variances: DVector<f64>) -> Result<Self> {
        check_len("variances", mean.len(), variances.len())?;
        check_finite("mean", mean.iter())?;
        check_finite("variances", variances.iter())?;
        if let Some(i) = variances.iter().position(|v| *v < 0.0) {
            return Err(Error::invalid(format!(
                "variance {i} is negative ({})",
                variances[i]
            )));
        }
        Ok(Self { mean, variances })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Raises every variance to at least `floor`.
    pub fn clamp_variances(&self, floor: f64) -> Self {
        Self {
            mean: self.mean.clone(),
            variances: self.variances.map(|v| v.max(floor)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullGaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    // Σ = L·Lᵀ when known.
    factor: Option<DMatrix<f64>>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl FullGaussian {
    /// Validates symmetry and positive semi-definiteness; eigenvalues in
    /// `[-PSD_TOL·λ_max, 0)` are clamped to zero.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if !covariance.is_square() {
            return Err(Error::invalid("covariance must be square"));
        }
        check_len("covariance", n, covariance.nrows())?;
        check_finite("mean", mean.iter())?;
        check_finite("covariance", covariance.iter())?;
        let scale = covariance.amax();
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > PSD_TOL * scale {
            return Err(Error::invalid(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let (covariance, factor) = clamp_psd(&symmetrize(&covariance))?;
        Ok(Self {
            mean,
            covariance,
            factor: Some(factor),
        })
    }

    /// Builds `N(mean, L·Lᵀ)`, which is PSD by construction.
    pub fn from_factor(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        check_len("covariance factor rows", mean.len(), factor.nrows())?;
        let covariance = symmetrize(&(&factor * factor.transpose()));
        Ok(Self {
            mean,
            covariance,
            factor: Some(factor),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A factor `L` with `Σ = L·Lᵀ`.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        match &self.factor {
            Some(f) => Ok(f.clone()),
            None => Ok(clamp_psd(&self.covariance)?.1),
        }
    }
}

/// Symmetric eigen-decomposition with small negative eigenvalues clamped to
/// zero. Returns the clamped matrix and a factor `U·√Λ`.
fn clamp_psd(sym: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = sym.nrows();
    if n == 0 {
        return Ok((sym.clone(), DMatrix::zeros(0, 0)));
    }
    let eig = sym.clone().symmetric_eigen();
    let max = eig.eigenvalues.max().max(0.0);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * max || (max == 0.0 && min < 0.0) {
        return Err(Error::invalid(format!(
            "covariance is not positive semi-definite (min eigenvalue {min:e}, max {max:e})"
        )));
    }
    if min >= 0.0 {
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        return Ok((sym.clone(), factor));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&clamped.map(f64::sqrt));
    let rebuilt = symmetrize(&(&factor * factor.transpose()));
    Ok((rebuilt, factor))
}

/// Checks `Σ` is symmetric within `PSD_TOL` relative and that its smallest
/// eigenvalue is at least `-PSD_TOL·λ_max`.
pub fn is_symmetric_psd(cov: &DMatrix<f64>) -> bool {
    if !cov.is_square() {
        return false;
    }
    let scale = cov.amax();
    if (cov - cov.transpose()).amax() > PSD_TOL * scale {
        return false;
    }
    if scale == 0.0 {
        return true;
    }
    let eig = symmetrize(cov).symmetric_eigen();
    let max = eig.eigenvalues.max();
    eig.eigenvalues.min() >= -PSD_TOL * max.max(0.0)
}

/// `N(Wᵀμ, Wᵀ·diag(σ²)·W)` over shape coefficients.
pub fn propagate_to_coeffs(reg: &MeasurementRegressor, d: &DiagGaussian) -> Result<FullGaussian> {
    check_len("measurement distribution", reg.num_measurements(), d.len())?;
    let w = reg.weights();
    let mean = w.tr_mul(d.mean());
    // L = Wᵀ·diag(σ)
    let mut factor = w.transpose();
    for (j, s2) in d.variances().iter().enumerate() {
        factor.column_mut(j).scale_mut(s2.sqrt());
    }
    FullGaussian::from_factor(mean, factor)
}

/// How much of the vertex covariance to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// Dense (3V)² covariance; refused above `max_vertices`.
    Full { max_vertices: usize },
    /// Factor only: diagonal and per-vertex blocks on demand.
    Lazy,
}

impl Default for CovarianceMode {
    fn default() -> Self {
        CovarianceMode::Full {
            max_vertices: DEFAULT_MAX_FULL_VERTICES,
        }
    }
}

/// Gaussian over flattened T-pose vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexGaussian {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    full: Option<FullGaussian>,
}

impl VertexGaussian {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn num_vertices(&self) -> usize {
        self.mean.len() / 3
    }

    /// Dense covariance, present only in [`CovarianceMode::Full`].
    pub fn full(&self) -> Option<&FullGaussian> {
        self.full.as_ref()
    }

    /// Diagonal of `Σ_V`.
    pub fn diagonal(&self) -> DVector<f64> {
        match &self.full {
            Some(g) => g.covariance().diagonal(),
            None => DVector::from_iterator(
                self.factor.nrows(),
                self.factor.row_iter().map(|r| r.norm_squared()),
            ),
        }
    }

    /// 3 × 3 covariance block of vertex `v`.
    pub fn block(&self, v: usize) -> Result<Matrix3<f64>> {
        if v >= self.num_vertices() {
            return Err(Error::invalid(format!(
                "vertex {v} out of range ({} vertices)",
                self.num_vertices()
            )));
        }
        let rows = self.factor.rows(3 * v, 3);
        let b = rows * rows.transpose();
        Ok(Matrix3::from_iterator(b.iter().copied()))
    }
}

/// `N(S·μ_β + t, S·Σ_β·Sᵀ)` over flattened vertices.
pub fn propagate_to_vertices(
    model: &LinearShapeModel,
    g: &FullGaussian,
    mode: CovarianceMode,
) -> Result<VertexGaussian> {
    check_len("coefficient distribution", model.num_coeffs(), g.dim())?;
    let mean = model.flat_vertices(g.mean())?;
    let factor = model.basis() * g.factor()?;
    let full = match mode {
        CovarianceMode::Lazy => None,
        CovarianceMode::Full { max_vertices } => {
            if model.num_vertices() > max_vertices {
                return Err(Error::Capacity(format!(
                    "full vertex covariance for {} vertices exceeds the cap of {max_vertices}; \
                     use the lazy mode",
                    model.num_vertices()
                )));
            }
            Some(FullGaussian::from_factor(mean.clone(), factor.clone())?)
        }
    };
    Ok(VertexGaussian { mean, factor, full })
}

/// Anything exposing the diagonal of a covariance.
pub trait VarianceDiagonal {
    fn variance_diagonal(&self) -> DVector<f64>;
}

impl VarianceDiagonal for FullGaussian {
    fn variance_diagonal(&self) -> DVector<f64> {
        self.covariance.diagonal()
    }
}

impl VarianceDiagonal for VertexGaussian {
    fn variance_diagonal(&self) -> DVector<f64> {
        self.diagonal()
    }
}

/// Per-vertex `(σ²_x, σ²_y, σ²_z)` as a V × 3 matrix.
pub fn directional_vertex_variance(vg: &impl VarianceDiagonal) -> Result<DMatrix<f64>> {
    let d = vg.variance_diagonal();
    if !d.len().is_multiple_of(3) {
        return Err(Error::invalid(format!(
            "vertex covariance dimension {} is not divisible by 3",
            d.len()
        )));
    }
    Ok(DMatrix::from_row_slice(d.len() / 3, 3, d.as_slice()))
}
