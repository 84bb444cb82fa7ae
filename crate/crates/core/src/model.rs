//! Linear blend-shape models: `vertices(beta) = vec⁻¹(S·beta + t)`.
//!
//! Vertices are flattened interleaved, `(x0, y0, z0, x1, y1, z1, …)`, so the
//! three rows belonging to vertex `v` are `3v..3v + 3`. Coordinates are
//! metres with `y` as height, `x` as width and `z` as depth.

use nalgebra::{DMatrix, DVector, Point3};

use crate::error::{check_finite, check_len, Error, Result};

/// Maximum allowed deviation of a joint-regressor row sum from one.
pub const JOINT_ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearShapeModel {
    template: DVector<f64>,
    basis: DMatrix<f64>,
    joint_regressor: Option<DMatrix<f64>>,
    faces: Vec<[u32; 3]>,
}

/// A T-pose mesh evaluated from shape coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub joints: Option<Vec<Point3<f64>>>,
    pub faces: Vec<[u32; 3]>,
}

impl Mesh {
    /// Interleaved `(x, y, z, …)` copy of the vertex positions.
    pub fn flat_vertices(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.vertices.len() * 3,
            self.vertices.iter().flat_map(|p| [p.x, p.y, p.z]),
        )
    }
}

impl LinearShapeModel {
    /// Builds a model, validating every structural invariant.
    pub fn new(
        template: DVector<f64>,
        basis: DMatrix<f64>,
        joint_regressor: Option<DMatrix<f64>>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Self> {
        if template.is_empty() || !template.len().is_multiple_of(3) {
            return Err(Error::invalid(format!(
                "template length {} is not a positive multiple of 3",
                template.len()
            )));
        }
        let num_vertices = template.len() / 3;
        if basis.ncols() == 0 {
            return Err(Error::invalid("basis must have at least one column"));
        }
        if basis.nrows() != template.len() {
            return Err(Error::invalid(format!(
                "basis has {} rows but 3·num_vertices = {}",
                basis.nrows(),
                template.len()
            )));
        }
        check_finite("template", template.iter())?;
        check_finite("basis", basis.iter())?;
        if let Some(jr) = &joint_regressor {
            check_len("joint_regressor columns", num_vertices, jr.ncols())?;
            check_finite("joint_regressor", jr.iter())?;
            for (j, row) in jr.row_iter().enumerate() {
                let sum = row.sum();
                if (sum - 1.0).abs() > JOINT_ROW_SUM_TOL {
                    return Err(Error::invalid(format!(
                        "joint_regressor row {j} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        if let Some(f) = faces
            .iter()
            .find(|f| f.iter().any(|&i| i as usize >= num_vertices))
        {
            return Err(Error::invalid(format!(
                "face {f:?} references a vertex >= {num_vertices}"
            )));
        }
        Ok(Self {
            template,
            basis,
            joint_regressor,
            faces,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.template.len() / 3
    }

    pub fn num_coeffs(&self) -> usize {
        self.basis.ncols()
    }

    pub fn num_joints(&self) -> usize {
        self.joint_regressor.as_ref().map_or(0, |j| j.nrows())
    }

    pub fn template(&self) -> &DVector<f64> {
        &self.template
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn joint_regressor(&self) -> Option<&DMatrix<f64>> {
        self.joint_regressor.as_ref()
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Returns a copy of the model truncated to its first `num_coeffs`
    /// basis columns.
    pub fn truncated(&self, num_coeffs: usize) -> Result<Self> {
        if num_coeffs == 0 || num_coeffs > self.num_coeffs() {
            return Err(Error::invalid(format!(
                "cannot truncate {} coefficients to {num_coeffs}",
                self.num_coeffs()
            )));
        }
        Ok(Self {
            template: self.template.clone(),
            basis: self.basis.columns(0, num_coeffs).into_owned(),
            joint_regressor: self.joint_regressor.clone(),
            faces: self.faces.clone(),
        })
    }

    /// Checks length and finiteness of a coefficient vector.
    pub fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        check_len("shape coefficients", self.num_coeffs(), beta.len())?;
        check_finite("shape coefficients", beta.iter())
    }

    /// Flattened vertex positions `S·beta + t`.
    pub fn flat_vertices(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_beta(beta)?;
        Ok(&self.basis * beta + &self.template)
    }

    /// Evaluates the T-pose mesh for `beta`, with joints when the model has a
    /// joint regressor.
    pub fn shape_to_vertices(&self, beta: &DVector<f64>) -> Result<Mesh> {
        let flat = self.flat_vertices(beta)?;
        let vertices: Vec<Point3<f64>> = flat
            .as_slice()
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        let joints = self
            .joint_regressor
            .as_ref()
            .map(|jr| regress_joints(jr, &vertices));
        Ok(Mesh {
            vertices,
            joints,
            faces: self.faces.clone(),
        })
    }

    /// Position of a single vertex, without evaluating the whole mesh.
    pub fn vertex(&self, beta: &DVector<f64>, index: usize) -> Point3<f64> {
        let rows = self.basis.rows(3 * index, 3);
        let p = rows * beta;
        Point3::new(
            p[0] + self.template[3 * index],
            p[1] + self.template[3 * index + 1],
            p[2] + self.template[3 * index + 2],
        )
    }

    /// The 3 × |β| block of the basis that moves vertex `index`.
    pub fn vertex_basis(&self, index: usize) -> DMatrix<f64> {
        self.basis.rows(3 * index, 3).into_owned()
    }
}

fn regress_joints(regressor: &DMatrix<f64>, vertices: &[Point3<f64>]) -> Vec<Point3<f64>> {
    regressor
        .row_iter()
        .map(|row| {
            let mut acc = Point3::origin();
            for (w, v) in row.iter().zip(vertices) {
                if *w != 0.0 {
                    acc.coords += v.coords * *w;
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_vertex() -> LinearShapeModel {
        LinearShapeModel::new(
            DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(6, 1, &[0.0, 0.0, 0.0, 0.1, 0.0, 0.0]),
            None,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn hand_evaluated_two_vertex_model() {
        let mesh = two_vertex()
            .shape_to_vertices(&DVector::from_vec(vec![2.0]))
            .unwrap();
        assert_eq!(mesh.vertices[0], Point3::new(0.0, 0.0, 0.0));
        assert!((mesh.vertices[1].x - 1.2).abs() < 1e-15);
        assert_eq!(mesh.vertices[1].y, 0.0);
        assert_eq!(mesh.vertices[1].z, 0.0);
    }

    #[test]
    fn zero_beta_gives_template() {
        let m = two_vertex();
        let flat = m.flat_vertices(&DVector::zeros(1)).unwrap();
        assert_eq!(&flat, m.template());
    }

    #[test]
    fn wrong_beta_length_is_rejected() {
        let err = two_vertex()
            .shape_to_vertices(&DVector::zeros(3))
            .unwrap_err();
        match err {
            Error::DimensionMismatch {
                expected, actual, ..
            } => assert_eq!((expected, actual), (1, 3)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn joint_rows_must_sum_to_one() {
        let jr = DMatrix::from_row_slice(1, 2, &[0.5, 0.4]);
        let err = LinearShapeModel::new(DVector::zeros(6), DMatrix::zeros(6, 1), Some(jr), vec![])
            .unwrap_err();
        assert!(err.to_string().contains("sums to"));
    }

    #[test]
    fn faces_must_reference_existing_vertices() {
        assert!(LinearShapeModel::new(
            DVector::zeros(6),
            DMatrix::zeros(6, 1),
            None,
            vec![[0, 1, 2]],
        )
        .is_err());
    }

    #[test]
    fn single_vertex_matches_full_evaluation() {
        let m = two_vertex();
        let beta = DVector::from_vec(vec![-0.7]);
        let mesh = m.shape_to_vertices(&beta).unwrap();
        assert_eq!(m.vertex(&beta, 1), mesh.vertices[1]);
    }
}
