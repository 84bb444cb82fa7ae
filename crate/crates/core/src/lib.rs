//! Semantic, locally controllable linear blend-shape models.
//!
//! A linear regressor maps interpretable body measurements to blend-shape
//! coefficients. Gaussian uncertainty over measurements propagates in closed
//! form to coefficients and vertices, and distributions from several
//! observations are fused by a product of Gaussians in measurement space.
//!
//! All lengths are metres internally; reports convert to millimetres.

pub mod error;
pub mod fusion;
pub mod gaussian;
pub mod io;
pub mod measurements;
pub mod model;
pub mod obj;
pub mod regressor;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, Result};
pub use fusion::{
    fuse, fused_shape_estimate, load_observations, naive_average, save_observations, FusedShape,
    FusionReport, MeasurementObservation, VARIANCE_FLOOR,
};
pub use gaussian::{
    directional_vertex_variance, propagate_to_coeffs, propagate_to_vertices, CovarianceMode,
    DiagGaussian, FullGaussian, VertexGaussian,
};
pub use io::{load_model, save_model};
pub use measurements::{
    measure, measurement_jacobian, Anchor, Axis, MeasurementDef, MeasurementEvaluator,
    MeasurementKind, MeasurementSpec,
};
pub use model::{LinearShapeModel, Mesh};
pub use obj::export_obj;
pub use regressor::{
    apply_measurement_offset, eval_local_offsets, eval_reconstruction, fit_regressor,
    measurements_to_coeff_offset, sample_shapes, FitConfig, FitMeta, LocalOffsetReport,
    MeasurementRegressor, ReconstructionReport,
};
pub use synthetic::{generate_synthetic_model, Profile};
