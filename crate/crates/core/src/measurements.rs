//! Semantic body measurements over T-pose meshes.
//!
//! A [`MeasurementSpec`] lists named definitions over vertex or joint
//! anchors. Widths, depths and lengths are Euclidean distances between two
//! endpoints; circumferences sum Euclidean distances around a closed loop of
//! waypoints. `AxisDifference` is a signed coordinate difference, which keeps
//! the whole measurement map exactly affine in the shape coefficients.
//!
//! Left/right definitions linked through `pair_with` are averaged into one
//! output slot. The slot name is the definition name with its side token
//! (`left_`, `right_`, `_left`, `_right`, `l_`, `r_`, `_l`, `_r`) removed.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearShapeModel, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Vertex(usize),
    Joint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Distance,
    Circumference,
    AxisDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDef {
    pub name: String,
    pub kind: MeasurementKind,
    pub anchors: Vec<Anchor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_with: Option<String>,
}

impl MeasurementDef {
    pub fn distance(name: &str, a: Anchor, b: Anchor) -> Self {
        Self {
            name: name.to_string(),
            kind: MeasurementKind::Distance,
            anchors: vec![a, b],
            axis: None,
            pair_with: None,
        }
    }

    pub fn circumference(name: &str, waypoints: Vec<Anchor>) -> Self {
        Self {
            name: name.to_string(),
            kind: MeasurementKind::Circumference,
            anchors: waypoints,
            axis: None,
            pair_with: None,
        }
    }

    pub fn axis_difference(name: &str, from: Anchor, to: Anchor, axis: Axis) -> Self {
        Self {
            name: name.to_string(),
            kind: MeasurementKind::AxisDifference,
            anchors: vec![from, to],
            axis: Some(axis),
            pair_with: None,
        }
    }

    pub fn paired_with(mut self, other: &str) -> Self {
        self.pair_with = Some(other.to_string());
        self
    }

    fn validate_shape(&self) -> Result<()> {
        let field = format!("defs[{}]", self.name);
        let n = self.anchors.len();
        match self.kind {
            MeasurementKind::Distance | MeasurementKind::AxisDifference if n != 2 => {
                return Err(Error::format(
                    field,
                    format!("{:?} needs exactly 2 anchors, got {n}", self.kind),
                ))
            }
            MeasurementKind::Circumference if n < 3 => {
                return Err(Error::format(
                    field,
                    format!("Circumference needs at least 3 anchors, got {n}"),
                ))
            }
            _ => {}
        }
        match (self.kind, self.axis) {
            (MeasurementKind::AxisDifference, None) => {
                Err(Error::format(field, "AxisDifference requires an axis"))
            }
            (MeasurementKind::Distance | MeasurementKind::Circumference, Some(_)) => Err(
                Error::format(field, "axis is only valid for AxisDifference"),
            ),
            _ => Ok(()),
        }
    }
}

/// Output slot name for a paired definition.
pub fn strip_side(name: &str) -> &str {
    for p in ["left_", "right_", "l_", "r_"] {
        if let Some(rest) = name.strip_prefix(p) {
            if !rest.is_empty() {
                return rest;
            }
        }
    }
    for s in ["_left", "_right", "_l", "_r"] {
        if let Some(rest) = name.strip_suffix(s) {
            if !rest.is_empty() {
                return rest;
            }
        }
    }
    name
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementSpec {
    defs: Vec<MeasurementDef>,
    output_names: Vec<String>,
    #[serde(skip)]
    slots: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawSpec {
    defs: Vec<MeasurementDef>,
    output_names: Vec<String>,
}

impl<'de> Deserialize<'de> for MeasurementSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpec::deserialize(d)?;
        MeasurementSpec::new(raw.defs, raw.output_names).map_err(serde::de::Error::custom)
    }
}

impl MeasurementSpec {
    /// Validates definitions and builds the slot mapping.
    pub fn new(defs: Vec<MeasurementDef>, output_names: Vec<String>) -> Result<Self> {
        let mut by_name = HashMap::new();
        for (i, d) in defs.iter().enumerate() {
            d.validate_shape()?;
            if by_name.insert(d.name.as_str(), i).is_some() {
                return Err(Error::format(
                    format!("defs[{}]", d.name),
                    "duplicate definition name",
                ));
            }
        }
        let mut seen = HashSet::new();
        for n in &output_names {
            if !seen.insert(n.as_str()) {
                return Err(Error::format(
                    "output_names",
                    format!("duplicate output name {n:?}"),
                ));
            }
        }

        let slot_of: HashMap<&str, usize> = output_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut slots = vec![Vec::new(); output_names.len()];
        for (i, d) in defs.iter().enumerate() {
            let field = format!("defs[{}]", d.name);
            let slot_name = match &d.pair_with {
                None => d.name.as_str(),
                Some(other) => {
                    let j = *by_name.get(other.as_str()).ok_or_else(|| {
                        Error::format(&field, format!("pair_with references unknown {other:?}"))
                    })?;
                    let partner = &defs[j];
                    if j == i {
                        return Err(Error::format(&field, "definition paired with itself"));
                    }
                    if partner.kind != d.kind {
                        return Err(Error::format(&field, "paired definitions differ in kind"));
                    }
                    if partner.pair_with.as_deref() != Some(d.name.as_str()) {
                        return Err(Error::format(
                            &field,
                            format!("pairing with {other:?} is not symmetric"),
                        ));
                    }
                    let base = strip_side(&d.name);
                    if base != strip_side(other) || base == d.name {
                        return Err(Error::format(
                            &field,
                            format!(
                                "paired names {:?} and {other:?} must differ only by a left/right token",
                                d.name
                            ),
                        ));
                    }
                    base
                }
            };
            let slot = *slot_of.get(slot_name).ok_or_else(|| {
                Error::format(
                    &field,
                    format!("output slot {slot_name:?} missing from output_names"),
                )
            })?;
            slots[slot].push(i);
        }
        for (name, s) in output_names.iter().zip(&slots) {
            if s.is_empty() {
                return Err(Error::format(
                    "output_names",
                    format!("{name:?} has no definition"),
                ));
            }
        }
        Ok(Self {
            defs,
            output_names,
            slots,
        })
    }

    /// Builds a spec with unpaired definitions, one slot per definition.
    pub fn from_defs(defs: Vec<MeasurementDef>) -> Result<Self> {
        let mut names = Vec::new();
        for d in &defs {
            let slot = if d.pair_with.is_some() {
                strip_side(&d.name)
            } else {
                d.name.as_str()
            };
            if !names.iter().any(|n| n == slot) {
                names.push(slot.to_string());
            }
        }
        Self::new(defs, names)
    }

    pub fn defs(&self) -> &[MeasurementDef] {
        &self.defs
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn num_outputs(&self) -> usize {
        self.output_names.len()
    }

    /// Definition indices averaged into each output slot.
    pub fn slots(&self) -> &[Vec<usize>] {
        &self.slots
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.output_names.iter().position(|n| n == name)
    }

    pub fn uses_joints(&self) -> bool {
        self.defs
            .iter()
            .flat_map(|d| &d.anchors)
            .any(|a| matches!(a, Anchor::Joint(_)))
    }

    pub fn only_axis_differences(&self) -> bool {
        self.defs
            .iter()
            .all(|d| d.kind == MeasurementKind::AxisDifference)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("spec serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Checks that every anchor exists on `model`.
    pub fn check_against(&self, model: &LinearShapeModel) -> Result<()> {
        for d in &self.defs {
            for a in &d.anchors {
                match *a {
                    Anchor::Vertex(i) if i >= model.num_vertices() => {
                        return Err(Error::invalid(format!(
                            "measurement {:?}: vertex {i} out of range ({} vertices)",
                            d.name,
                            model.num_vertices()
                        )))
                    }
                    Anchor::Joint(j) if model.joint_regressor().is_none() => {
                        return Err(Error::invalid(format!(
                            "measurement {:?}: joint {j} requested but the model has no joint regressor",
                            d.name
                        )))
                    }
                    Anchor::Joint(j) if j >= model.num_joints() => {
                        return Err(Error::invalid(format!(
                            "measurement {:?}: joint {j} out of range ({} joints)",
                            d.name,
                            model.num_joints()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

fn def_value(def: &MeasurementDef, pts: &[Point3<f64>]) -> f64 {
    match def.kind {
        MeasurementKind::Distance => (pts[1] - pts[0]).norm(),
        MeasurementKind::Circumference => {
            let n = pts.len();
            (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).sum()
        }
        MeasurementKind::AxisDifference => {
            let a = def.axis.expect("validated").index();
            pts[1][a] - pts[0][a]
        }
    }
}

fn average_slots(spec: &MeasurementSpec, per_def: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        spec.num_outputs(),
        spec.slots
            .iter()
            .map(|s| s.iter().map(|&i| per_def[i]).sum::<f64>() / s.len() as f64),
    )
}

/// Evaluates `spec` directly on an already-built mesh.
pub fn measure_mesh(spec: &MeasurementSpec, mesh: &Mesh) -> Result<DVector<f64>> {
    let mut per_def = Vec::with_capacity(spec.defs.len());
    for d in &spec.defs {
        let pts = d
            .anchors
            .iter()
            .map(|a| match *a {
                Anchor::Vertex(i) => mesh.vertices.get(i).copied().ok_or_else(|| {
                    Error::invalid(format!("measurement {:?}: vertex {i} out of range", d.name))
                }),
                Anchor::Joint(j) => mesh
                    .joints
                    .as_ref()
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "measurement {:?}: joint {j} requested but the mesh has no joints",
                            d.name
                        ))
                    })?
                    .get(j)
                    .copied()
                    .ok_or_else(|| {
                        Error::invalid(format!("measurement {:?}: joint {j} out of range", d.name))
                    }),
            })
            .collect::<Result<Vec<_>>>()?;
        per_def.push(def_value(d, &pts));
    }
    Ok(average_slots(spec, &per_def))
}

/// A spec bound to a model.
///
/// Every distinct anchor is reduced to an affine map `p(β) = A·β + c`, with
/// `A` a 3 × |β| block, so evaluating a body touches only the anchor rows of
/// the basis rather than the whole mesh.
#[derive(Debug, Clone)]
pub struct MeasurementEvaluator<'a> {
    spec: &'a MeasurementSpec,
    num_coeffs: usize,
    // 3·n_anchors × |β|, interleaved like the model's vertex flattening.
    anchor_basis: DMatrix<f64>,
    anchor_offset: DVector<f64>,
    // Per definition, indices into the anchor table.
    def_anchors: Vec<Vec<usize>>,
}

impl<'a> MeasurementEvaluator<'a> {
    pub fn new(model: &LinearShapeModel, spec: &'a MeasurementSpec) -> Result<Self> {
        spec.check_against(model)?;
        let mut table: Vec<Anchor> = Vec::new();
        let mut index: HashMap<Anchor, usize> = HashMap::new();
        let def_anchors = spec
            .defs
            .iter()
            .map(|d| {
                d.anchors
                    .iter()
                    .map(|a| {
                        *index.entry(*a).or_insert_with(|| {
                            table.push(*a);
                            table.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();

        let b = model.num_coeffs();
        let mut anchor_basis = DMatrix::zeros(3 * table.len(), b);
        let mut anchor_offset = DVector::zeros(3 * table.len());
        for (k, a) in table.iter().enumerate() {
            match *a {
                Anchor::Vertex(v) => {
                    anchor_basis
                        .rows_mut(3 * k, 3)
                        .copy_from(&model.basis().rows(3 * v, 3));
                    anchor_offset
                        .rows_mut(3 * k, 3)
                        .copy_from(&model.template().rows(3 * v, 3));
                }
                Anchor::Joint(j) => {
                    let jr = model.joint_regressor().expect("checked");
                    for (v, &w) in jr.row(j).iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let mut rows = anchor_basis.rows_mut(3 * k, 3);
                        rows += model.basis().rows(3 * v, 3) * w;
                        let mut off = anchor_offset.rows_mut(3 * k, 3);
                        off += model.template().rows(3 * v, 3) * w;
                    }
                }
            }
        }
        Ok(Self {
            spec,
            num_coeffs: b,
            anchor_basis,
            anchor_offset,
            def_anchors,
        })
    }

    pub fn spec(&self) -> &MeasurementSpec {
        self.spec
    }

    pub fn num_outputs(&self) -> usize {
        self.spec.num_outputs()
    }

    fn anchor_points(&self, beta: &DVector<f64>) -> Result<Vec<Point3<f64>>> {
        crate::error::check_len("shape coefficients", self.num_coeffs, beta.len())?;
        crate::error::check_finite("shape coefficients", beta.iter())?;
        let flat = &self.anchor_basis * beta + &self.anchor_offset;
        Ok(flat
            .as_slice()
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect())
    }

    /// Measurement vector (metres) for `beta`, ordered by output name.
    pub fn measure(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let pts = self.anchor_points(beta)?;
        let per_def: Vec<f64> = self
            .spec
            .defs
            .iter()
            .zip(&self.def_anchors)
            .map(|(d, idx)| {
                let p: Vec<Point3<f64>> = idx.iter().map(|&i| pts[i]).collect();
                def_value(d, &p)
            })
            .collect();
        Ok(average_slots(self.spec, &per_def))
    }

    /// Analytic `∂m/∂β` at `beta`, K × |β|.
    pub fn jacobian(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pts = self.anchor_points(beta)?;
        let block = |i: usize| self.anchor_basis.rows(3 * i, 3);
        let mut per_def = Vec::with_capacity(self.spec.defs.len());
        for (d, idx) in self.spec.defs.iter().zip(&self.def_anchors) {
            let mut row = DMatrix::<f64>::zeros(1, self.num_coeffs);
            let mut segment = |from: usize, to: usize| -> Result<()> {
                let delta: Vector3<f64> = pts[to] - pts[from];
                let len = delta.norm();
                if len <= 1e-12 {
                    return Err(Error::Singular(format!(
                        "measurement {:?} has a zero-length segment",
                        d.name
                    )));
                }
                let u = (delta / len).transpose();
                row += u * (block(to) - block(from));
                Ok(())
            };
            match d.kind {
                MeasurementKind::Distance => segment(idx[0], idx[1])?,
                MeasurementKind::Circumference => {
                    let n = idx.len();
                    for i in 0..n {
                        segment(idx[i], idx[(i + 1) % n])?;
                    }
                }
                MeasurementKind::AxisDifference => {
                    let a = d.axis.expect("validated").index();
                    row += block(idx[1]).row(a) - block(idx[0]).row(a);
                }
            }
            per_def.push(row);
        }
        let mut jac = DMatrix::zeros(self.spec.num_outputs(), self.num_coeffs);
        for (k, slot) in self.spec.slots.iter().enumerate() {
            let mut r = jac.row_mut(k);
            for &i in slot {
                r += &per_def[i];
            }
            r /= slot.len() as f64;
        }
        Ok(jac)
    }
}

/// `measure(β)` for a single body.
pub fn measure(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    MeasurementEvaluator::new(model, spec)?.measure(beta)
}

/// Analytic measurement Jacobian at `beta`.
pub fn measurement_jacobian(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    MeasurementEvaluator::new(model, spec)?.jacobian(beta)
}

/// Placeholder 23-measurement spec laid out like the SMPL measurement set.
///
/// Anchor indices are all zero and must be replaced with real vertex/joint
/// IDs before the spec is used; the layout (names, kinds, left/right
/// pairing, waypoint counts) is what this provides.
pub fn smpl_spec_template() -> MeasurementSpec {
    let v0 = Anchor::Vertex(0);
    let j0 = Anchor::Joint(0);
    let ring = |n: usize| vec![v0; n];
    let mut defs = vec![
        MeasurementDef::distance("chest_width", v0, v0),
        MeasurementDef::distance("chest_depth", v0, v0),
        MeasurementDef::circumference("chest_circumference", ring(8)),
        MeasurementDef::distance("stomach_width", v0, v0),
        MeasurementDef::distance("stomach_depth", v0, v0),
        MeasurementDef::circumference("stomach_circumference", ring(8)),
        MeasurementDef::distance("hip_width", v0, v0),
        MeasurementDef::distance("hip_depth", v0, v0),
        MeasurementDef::circumference("hip_circumference", ring(8)),
        MeasurementDef::distance("shoulder_width", j0, j0),
        MeasurementDef::distance("torso_length", j0, j0),
        MeasurementDef::circumference("neck_circumference", ring(6)),
        MeasurementDef::distance("height", v0, v0),
    ];
    for (limb, kind) in [
        ("upper_arm_circumference", MeasurementKind::Circumference),
        ("forearm_circumference", MeasurementKind::Circumference),
        ("arm_length", MeasurementKind::Distance),
        ("thigh_circumference", MeasurementKind::Circumference),
        ("calf_circumference", MeasurementKind::Circumference),
        ("thigh_length", MeasurementKind::Distance),
        ("calf_length", MeasurementKind::Distance),
        ("ankle_circumference", MeasurementKind::Circumference),
        ("wrist_circumference", MeasurementKind::Circumference),
        ("foot_length", MeasurementKind::Distance),
    ] {
        let (l, r) = (format!("left_{limb}"), format!("right_{limb}"));
        let mk = |name: &str| match kind {
            MeasurementKind::Circumference => MeasurementDef::circumference(name, ring(6)),
            _ => MeasurementDef::distance(name, j0, j0),
        };
        defs.push(mk(&l).paired_with(&r));
        defs.push(mk(&r).paired_with(&l));
    }
    MeasurementSpec::from_defs(defs).expect("template is well-formed")
}
