//! Procedural linear blend-shape models for tests and demos.
//!
//! `BodyLike` builds a torso and four hanging limbs from stacked elliptical
//! rings. Its basis is PCA-like: early columns are broad smooth deformations,
//! later ones increasingly local bumps, so truncating the basis behaves like
//! using fewer principal components. `RandomSmooth` is a sphere with smooth
//! random displacement fields and no joints.
//!
//! Every basis column has Euclidean norm [`BASIS_COLUMN_NORM`].

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{Anchor, Axis, MeasurementDef, MeasurementSpec};
use crate::model::LinearShapeModel;
use crate::sampling::chunk_rng;

pub const BASIS_COLUMN_NORM: f64 = 0.05;

/// Smallest vertex count for which [`body_measurement_spec`] can place all
/// of its rings.
pub const MIN_BODY_SPEC_VERTICES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    BodyLike,
    RandomSmooth,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "body-like" => Ok(Profile::BodyLike),
            "random-smooth" => Ok(Profile::RandomSmooth),
            other => Err(Error::invalid(format!(
                "unknown profile {other:?} (expected body-like or random-smooth)"
            ))),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::BodyLike => "body-like",
            Profile::RandomSmooth => "random-smooth",
        })
    }
}

/// One tube of the body: rings stacked from `start` to `end`.
#[derive(Debug, Clone)]
struct Part {
    first_vertex: usize,
    count: usize,
    ring_size: usize,
    start: Point3<f64>,
    end: Point3<f64>,
    // Half-axes (x, z) at the start and the end of the tube.
    radii_start: (f64, f64),
    radii_end: (f64, f64),
}

impl Part {
    fn full_rings(&self) -> usize {
        self.count / self.ring_size
    }

    fn num_rings(&self) -> usize {
        self.count.div_ceil(self.ring_size)
    }

    fn ring(&self, k: usize) -> Vec<usize> {
        let base = self.first_vertex + k * self.ring_size;
        (base..base + self.ring_size).collect()
    }

    /// Full ring closest to fraction `t` of the way from start to end.
    fn ring_at(&self, t: f64) -> usize {
        let n = self.full_rings();
        ((t * (n - 1) as f64).round() as usize).min(n - 1)
    }

    fn vertex(&self, i: usize) -> usize {
        self.first_vertex + i
    }

    fn position(&self, local: usize) -> Point3<f64> {
        let rings = self.num_rings();
        let k = local / self.ring_size;
        let s = local % self.ring_size;
        let t = if rings > 1 {
            k as f64 / (rings - 1) as f64
        } else {
            0.5
        };
        // Slight waist for the torso comes from the per-part radius profile.
        let bulge = (PI * t).sin();
        let rx = self.radii_start.0 + (self.radii_end.0 - self.radii_start.0) * t;
        let rz = self.radii_start.1 + (self.radii_end.1 - self.radii_start.1) * t;
        let (rx, rz) = (rx * (1.0 - 0.12 * bulge), rz * (1.0 - 0.08 * bulge));
        let theta = 2.0 * PI * s as f64 / self.ring_size as f64;
        let c = self.start + (self.end - self.start) * t;
        Point3::new(c.x + rx * theta.cos(), c.y, c.z + rz * theta.sin())
    }
}

/// Outward direction, unit axis direction and ring centre of one vertex.
#[derive(Debug, Clone, Copy)]
struct Frame {
    radial: Vector3<f64>,
    axis: Vector3<f64>,
    centre: Point3<f64>,
}

#[derive(Debug, Clone)]
struct BodyLayout {
    torso: Part,
    arms: [Part; 2],
    legs: [Part; 2],
}

const LEFT: usize = 0;
const RIGHT: usize = 1;

fn ring_size_for(count: usize, circumference: f64, length: f64, multiple: usize) -> usize {
    if count < 3 {
        return count.max(1);
    }
    let r = ((count as f64) * circumference / length).sqrt().round() as usize;
    let r = r.clamp(3, count);
    if multiple > 1 && count >= multiple {
        (r.div_ceil(multiple) * multiple).min(count / multiple * multiple)
    } else {
        r
    }
}

impl BodyLayout {
    fn new(num_vertices: usize) -> Self {
        let limb = num_vertices * 3 / 20;
        let torso_count = num_vertices - 4 * limb;
        let mut next = 0;
        let mut part = |count: usize,
                        start: Point3<f64>,
                        end: Point3<f64>,
                        radii_start: (f64, f64),
                        radii_end: (f64, f64),
                        multiple: usize| {
            let circ = PI * (radii_start.0 + radii_start.1);
            let ring_size = ring_size_for(count, circ, (end - start).norm(), multiple);
            let p = Part {
                first_vertex: next,
                count,
                ring_size,
                start,
                end,
                radii_start,
                radii_end,
            };
            next += count;
            p
        };
        let torso = part(
            torso_count,
            Point3::new(0.0, 0.85, 0.0),
            Point3::new(0.0, 1.55, 0.0),
            (0.18, 0.12),
            (0.17, 0.11),
            4,
        );
        let arm = |side: f64| {
            (
                Point3::new(0.25 * side, 1.50, 0.0),
                Point3::new(0.25 * side, 0.80, 0.0),
            )
        };
        let (la0, la1) = arm(1.0);
        let (ra0, ra1) = arm(-1.0);
        let arms = [
            part(limb, la0, la1, (0.05, 0.05), (0.03, 0.03), 1),
            part(limb, ra0, ra1, (0.05, 0.05), (0.03, 0.03), 1),
        ];
        let leg = |side: f64| {
            (
                Point3::new(0.09 * side, 0.85, 0.0),
                Point3::new(0.09 * side, 0.0, 0.0),
            )
        };
        let (ll0, ll1) = leg(1.0);
        let (rl0, rl1) = leg(-1.0);
        let legs = [
            part(limb, ll0, ll1, (0.075, 0.075), (0.04, 0.04), 1),
            part(limb, rl0, rl1, (0.075, 0.075), (0.04, 0.04), 1),
        ];
        Self { torso, arms, legs }
    }

    fn parts(&self) -> [&Part; 5] {
        [
            &self.torso,
            &self.arms[LEFT],
            &self.arms[RIGHT],
            &self.legs[LEFT],
            &self.legs[RIGHT],
        ]
    }

    fn positions(&self) -> Vec<Point3<f64>> {
        self.parts()
            .iter()
            .flat_map(|p| (0..p.count).map(move |i| p.position(i)))
            .collect()
    }

    fn frames(&self, positions: &[Point3<f64>]) -> Vec<Frame> {
        self.parts()
            .iter()
            .flat_map(|p| {
                let axis = (p.end - p.start).normalize();
                (0..p.count).map(move |i| {
                    let pos = positions[p.vertex(i)];
                    let rel = pos - p.start;
                    let radial = rel - axis * rel.dot(&axis);
                    let radial = if radial.norm() > 1e-12 {
                        radial.normalize()
                    } else {
                        Vector3::x()
                    };
                    Frame {
                        radial,
                        axis,
                        centre: p.start + axis * rel.dot(&axis),
                    }
                })
            })
            .collect()
    }

    fn faces(&self) -> Vec<[u32; 3]> {
        let mut faces = Vec::new();
        for p in self.parts() {
            let r = p.ring_size;
            let full = p.full_rings();
            if r < 3 || full == 0 {
                continue;
            }
            for k in 0..full.saturating_sub(1) {
                let a = p.ring(k);
                let b = p.ring(k + 1);
                for s in 0..r {
                    let s1 = (s + 1) % r;
                    faces.push([a[s] as u32, a[s1] as u32, b[s1] as u32]);
                    faces.push([a[s] as u32, b[s1] as u32, b[s] as u32]);
                }
            }
            // Fan caps close both ends of each tube.
            for (k, flip) in [(0, true), (full - 1, false)] {
                let ring = p.ring(k);
                for s in 1..r - 1 {
                    let tri = [ring[0] as u32, ring[s] as u32, ring[s + 1] as u32];
                    faces.push(if flip { [tri[0], tri[2], tri[1]] } else { tri });
                }
            }
        }
        faces
    }

    /// Ring-centroid joints in a fixed order: pelvis, neck, then shoulder,
    /// elbow, wrist for each arm and hip, knee, ankle for each leg.
    fn joint_rings(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out = Vec::new();
        let t = &self.torso;
        out.push((JOINT_PELVIS, t.ring(0)));
        out.push((JOINT_NECK, t.ring(t.full_rings() - 1)));
        for (side, arm) in self.arms.iter().enumerate() {
            let base = JOINT_SHOULDER[side];
            out.push((base, arm.ring(0)));
            out.push((base + 1, arm.ring(arm.ring_at(0.5))));
            out.push((base + 2, arm.ring(arm.full_rings() - 1)));
        }
        for (side, leg) in self.legs.iter().enumerate() {
            let base = JOINT_HIP[side];
            out.push((base, leg.ring(0)));
            out.push((base + 1, leg.ring(leg.ring_at(0.5))));
            out.push((base + 2, leg.ring(leg.full_rings() - 1)));
        }
        out
    }

    fn joint_regressor(&self, num_vertices: usize) -> DMatrix<f64> {
        let rings = self.joint_rings();
        let mut jr = DMatrix::zeros(NUM_BODY_JOINTS, num_vertices);
        for (j, ring) in rings {
            let w = 1.0 / ring.len() as f64;
            for v in ring {
                jr[(j, v)] = w;
            }
        }
        jr
    }
}

pub const NUM_BODY_JOINTS: usize = 14;
pub const JOINT_PELVIS: usize = 0;
pub const JOINT_NECK: usize = 1;
/// Shoulder joint index per side; elbow and wrist follow it.
pub const JOINT_SHOULDER: [usize; 2] = [2, 5];
/// Hip joint index per side; knee and ankle follow it.
pub const JOINT_HIP: [usize; 2] = [8, 11];

fn normalize_column(col: &mut DVector<f64>) {
    let n = col.norm();
    if n > 0.0 {
        *col *= BASIS_COLUMN_NORM / n;
    }
}

fn gaussian_weight(d2: f64, radius: f64) -> f64 {
    (-d2 / (2.0 * radius * radius)).exp()
}

/// Farthest-point ordering of `positions` starting from `start`.
fn farthest_point_order(positions: &[Point3<f64>], start: usize, count: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; positions.len()];
    let mut next = start;
    for _ in 0..count.min(positions.len()) {
        order.push(next);
        let c = positions[next];
        for (d, p) in dist.iter_mut().zip(positions) {
            *d = d.min((p - c).norm_squared());
        }
        next = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty");
    }
    order
}

fn body_basis(
    rng: &mut ChaCha8Rng,
    positions: &[Point3<f64>],
    frames: &[Frame],
    torso_count: usize,
    num_coeffs: usize,
) -> DMatrix<f64> {
    let v = positions.len();
    let centres = farthest_point_order(positions, rng.random_range(0..v), v);
    let mut basis = DMatrix::zeros(3 * v, num_coeffs);
    for c in 0..num_coeffs {
        // Broad deformations first, local bumps later.
        let radius = (BUMP_RADIUS_MAX / (1.0 + c as f64 / BUMP_DECAY)).max(BUMP_RADIUS_MIN);
        let seed_vertex = centres[c % centres.len()];
        let centre = positions[seed_vertex];
        let ring_centre = frames[seed_vertex].centre;
        let phase = rng.random_range(0.0..2.0 * PI);
        let quad = rng.random_range(-1.5..1.5);
        let phase4 = rng.random_range(0.0..2.0 * PI);
        let octo = rng.random_range(-1.0..1.0);
        let axial = rng.random_range(-1.0..1.0);
        let swell_amp = rng.random_range(-1.0..1.0);
        let shift_angle = rng.random_range(0.0..2.0 * PI);
        let shift =
            Vector3::new(shift_angle.cos(), 0.0, shift_angle.sin()) * rng.random_range(-1.0..1.0);
        let mut col = DVector::zeros(3 * v);
        for (i, (p, f)) in positions.iter().zip(frames).enumerate() {
            // Swelling is local on the surface; translation moves whole rings.
            let w_surface = gaussian_weight((p - centre).norm_squared(), radius);
            let w_ring = gaussian_weight((f.centre - ring_centre).norm_squared(), radius);
            if w_surface < 1e-8 && w_ring < 1e-8 {
                continue;
            }
            let theta = f.radial.z.atan2(f.radial.x);
            let swell = swell_amp
                * (1.0
                    + quad * (2.0 * (theta - phase)).cos()
                    + octo * (4.0 * (theta - phase4)).cos());
            let translation = if i < torso_count {
                f.axis * axial
            } else {
                f.axis * axial + shift
            };
            // Thin limbs swell in proportion to their girth.
            let girth = (p - f.centre).norm() / SWELL_REFERENCE_RADIUS;
            let d = f.radial * (swell * w_surface * girth) + translation * w_ring;
            col.rows_mut(3 * i, 3).copy_from(&d);
        }
        normalize_column(&mut col);
        basis.set_column(c, &col);
    }
    basis
}

const BUMP_RADIUS_MAX: f64 = 0.8;
const BUMP_RADIUS_MIN: f64 = 0.06;
const BUMP_DECAY: f64 = 4.0;
const SWELL_REFERENCE_RADIUS: f64 = 0.15;

fn fibonacci_sphere(n: usize, radius: f64) -> Vec<Point3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            Point3::new(
                radius * r * phi.cos(),
                radius * (1.0 + y),
                radius * r * phi.sin(),
            )
        })
        .collect()
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn smooth_random_basis(
    rng: &mut ChaCha8Rng,
    positions: &[Point3<f64>],
    num_coeffs: usize,
) -> DMatrix<f64> {
    let v = positions.len();
    let mut basis = DMatrix::zeros(3 * v, num_coeffs);
    for c in 0..num_coeffs {
        let mut col = DVector::zeros(3 * v);
        for _ in 0..3 {
            let centre = positions[rng.random_range(0..v)];
            let dir = random_unit(rng);
            let radius = rng.random_range(0.15..0.4);
            for (i, p) in positions.iter().enumerate() {
                let w = gaussian_weight((p - centre).norm_squared(), radius);
                let mut rows = col.rows_mut(3 * i, 3);
                rows += dir * w;
            }
        }
        normalize_column(&mut col);
        basis.set_column(c, &col);
    }
    basis
}

fn flatten(points: &[Point3<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        points.len() * 3,
        points.iter().flat_map(|p| [p.x, p.y, p.z]),
    )
}

/// Deterministic synthetic model for `seed`.
pub fn generate_synthetic_model(
    seed: u64,
    num_vertices: usize,
    num_coeffs: usize,
    profile: Profile,
) -> Result<LinearShapeModel> {
    if num_vertices < 8 {
        return Err(Error::invalid(format!(
            "num_vertices must be at least 8, got {num_vertices}"
        )));
    }
    if num_coeffs < 1 {
        return Err(Error::invalid("num_coeffs must be at least 1"));
    }
    let mut rng = chunk_rng(seed, u64::MAX);
    match profile {
        Profile::BodyLike => {
            let layout = BodyLayout::new(num_vertices);
            let positions = layout.positions();
            let frames = layout.frames(&positions);
            let basis = body_basis(
                &mut rng,
                &positions,
                &frames,
                layout.torso.count,
                num_coeffs,
            );
            let jr = layout.joint_regressor(num_vertices);
            LinearShapeModel::new(flatten(&positions), basis, Some(jr), layout.faces())
        }
        Profile::RandomSmooth => {
            let positions = fibonacci_sphere(num_vertices, 0.5);
            let basis = smooth_random_basis(&mut rng, &positions, num_coeffs);
            LinearShapeModel::new(flatten(&positions), basis, None, vec![])
        }
    }
}

const CIRCUMFERENCE_BAND: f64 = 0.12;

/// The 23-slot measurement spec matching a body-like model with
/// `num_vertices` vertices.
///
/// Mixes distances, closed-ring circumferences, joint-to-joint lengths and
/// vertical axis differences, with left/right limb pairs.
pub fn body_measurement_spec(num_vertices: usize) -> Result<MeasurementSpec> {
    if num_vertices < MIN_BODY_SPEC_VERTICES {
        return Err(Error::invalid(format!(
            "body measurement spec needs at least {MIN_BODY_SPEC_VERTICES} vertices, got {num_vertices}"
        )));
    }
    let layout = BodyLayout::new(num_vertices);
    let t = &layout.torso;
    let v = |i: usize| Anchor::Vertex(i);
    let j = Anchor::Joint;
    let r = t.ring_size;
    let mut defs = Vec::new();
    // Circumferences sit one band above the width/depth ring, as tape
    // measurements and caliper widths do on a real body.
    for (name, frac) in [("hip", 0.15), ("stomach", 0.45), ("chest", 0.75)] {
        let ring = t.ring(t.ring_at(frac));
        let band = t.ring(t.ring_at(frac + CIRCUMFERENCE_BAND));
        defs.push(MeasurementDef::distance(
            &format!("{name}_width"),
            v(ring[0]),
            v(ring[r / 2]),
        ));
        defs.push(MeasurementDef::distance(
            &format!("{name}_depth"),
            v(ring[r / 4]),
            v(ring[3 * r / 4]),
        ));
        defs.push(MeasurementDef::circumference(
            &format!("{name}_circumference"),
            band.into_iter().map(v).collect(),
        ));
    }
    defs.push(MeasurementDef::distance(
        "shoulder_width",
        j(JOINT_SHOULDER[LEFT]),
        j(JOINT_SHOULDER[RIGHT]),
    ));
    defs.push(MeasurementDef::distance(
        "torso_length",
        j(JOINT_PELVIS),
        j(JOINT_NECK),
    ));
    let left_leg = &layout.legs[LEFT];
    let foot = left_leg.ring(left_leg.full_rings() - 1)[0];
    let top = t.ring(t.full_rings() - 1)[r / 4];
    defs.push(MeasurementDef::axis_difference(
        "body_height",
        v(foot),
        v(top),
        Axis::Y,
    ));
    defs.push(MeasurementDef::axis_difference(
        "crotch_height",
        v(foot),
        v(left_leg.ring(0)[left_leg.ring_size / 2]),
        Axis::Y,
    ));

    let sides = [("left", LEFT, "right"), ("right", RIGHT, "left")];
    let limb_rings: [(&str, bool, f64); 7] = [
        ("upper_arm_circumference", true, 0.15),
        ("forearm_circumference", true, 0.6),
        ("wrist_circumference", true, 1.0),
        ("thigh_circumference", false, 0.15),
        ("knee_circumference", false, 0.5),
        ("calf_circumference", false, 0.7),
        ("ankle_circumference", false, 1.0),
    ];
    for (name, is_arm, frac) in limb_rings {
        for (side, idx, other) in sides {
            let part = if is_arm {
                &layout.arms[idx]
            } else {
                &layout.legs[idx]
            };
            defs.push(
                MeasurementDef::circumference(
                    &format!("{side}_{name}"),
                    part.ring(part.ring_at(frac)).into_iter().map(v).collect(),
                )
                .paired_with(&format!("{other}_{name}")),
            );
        }
    }
    let limb_lengths: [(&str, [usize; 2], usize, usize); 3] = [
        ("arm_length", JOINT_SHOULDER, 0, 2),
        ("thigh_length", JOINT_HIP, 0, 1),
        ("calf_length", JOINT_HIP, 1, 2),
    ];
    for (name, base, from, to) in limb_lengths {
        for (side, idx, other) in sides {
            defs.push(
                MeasurementDef::distance(
                    &format!("{side}_{name}"),
                    j(base[idx] + from),
                    j(base[idx] + to),
                )
                .paired_with(&format!("{other}_{name}")),
            );
        }
    }
    MeasurementSpec::from_defs(defs)
}

/// `count` AxisDifference measurements between random vertex pairs.
///
/// Every measurement is exactly affine in the shape coefficients, which makes
/// specs built here an exact oracle for the regressor.
pub fn axis_difference_spec(
    num_vertices: usize,
    count: usize,
    seed: u64,
) -> Result<MeasurementSpec> {
    if num_vertices < 2 || count == 0 {
        return Err(Error::invalid(
            "axis-difference spec needs at least 2 vertices and 1 measurement",
        ));
    }
    let mut rng = chunk_rng(seed, u64::MAX - 1);
    let axes = [Axis::X, Axis::Y, Axis::Z];
    let defs = (0..count)
        .map(|k| {
            let a = rng.random_range(0..num_vertices);
            let mut b = rng.random_range(0..num_vertices - 1);
            if b >= a {
                b += 1;
            }
            MeasurementDef::axis_difference(
                &format!("axis_{k}"),
                Anchor::Vertex(a),
                Anchor::Vertex(b),
                axes[rng.random_range(0..3)],
            )
        })
        .collect();
    MeasurementSpec::from_defs(defs)
}

/// A mixed spec over random vertices: distances, triangle-loop
/// circumferences and axis differences, `count` outputs in total.
pub fn random_mixed_spec(num_vertices: usize, count: usize, seed: u64) -> Result<MeasurementSpec> {
    if num_vertices < 3 || count == 0 {
        return Err(Error::invalid(
            "mixed spec needs at least 3 vertices and 1 measurement",
        ));
    }
    let mut rng = chunk_rng(seed, u64::MAX - 2);
    let mut distinct = |n: usize| -> Vec<usize> {
        let mut picked: Vec<usize> = Vec::with_capacity(n);
        while picked.len() < n {
            let c = rng.random_range(0..num_vertices);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        picked
    };
    let axes = [Axis::X, Axis::Y, Axis::Z];
    let defs = (0..count)
        .map(|k| {
            let name = format!("m{k}");
            match k % 3 {
                0 => {
                    let p = distinct(2);
                    MeasurementDef::distance(&name, Anchor::Vertex(p[0]), Anchor::Vertex(p[1]))
                }
                1 => MeasurementDef::circumference(
                    &name,
                    distinct(3).into_iter().map(Anchor::Vertex).collect(),
                ),
                _ => {
                    let p = distinct(2);
                    MeasurementDef::axis_difference(
                        &name,
                        Anchor::Vertex(p[0]),
                        Anchor::Vertex(p[1]),
                        axes[k % 3],
                    )
                }
            }
        })
        .collect();
    MeasurementSpec::from_defs(defs)
}

/// The spec written next to a generated model: the body spec for
/// body-like models that are large enough, a mixed random spec otherwise.
pub fn default_spec_for(
    profile: Profile,
    num_vertices: usize,
    seed: u64,
) -> Result<MeasurementSpec> {
    match profile {
        Profile::BodyLike if num_vertices >= MIN_BODY_SPEC_VERTICES => {
            body_measurement_spec(num_vertices)
        }
        _ => random_mixed_spec(num_vertices, 23.min(num_vertices), seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::measure;

    #[test]
    fn same_seed_is_bit_identical() {
        for profile in [Profile::BodyLike, Profile::RandomSmooth] {
            let a = generate_synthetic_model(7, 300, 12, profile).unwrap();
            let b = generate_synthetic_model(7, 300, 12, profile).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_synthetic_model(1, 300, 5, Profile::BodyLike).unwrap();
        let b = generate_synthetic_model(2, 300, 5, Profile::BodyLike).unwrap();
        assert_ne!(a.basis(), b.basis());
        assert_eq!(a.template(), b.template());
    }

    #[test]
    fn body_like_is_taller_than_wide() {
        let m = generate_synthetic_model(1, 600, 30, Profile::BodyLike).unwrap();
        let t = m.template();
        let coord = |axis: usize| {
            let vals: Vec<f64> = t.iter().skip(axis).step_by(3).copied().collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        assert!(
            coord(1) > coord(0),
            "height {} width {}",
            coord(1),
            coord(0)
        );
    }

    #[test]
    fn columns_have_fixed_norm() {
        for profile in [Profile::BodyLike, Profile::RandomSmooth] {
            let m = generate_synthetic_model(3, 400, 20, profile).unwrap();
            for c in m.basis().column_iter() {
                assert!((c.norm() - BASIS_COLUMN_NORM).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_sizes_are_rejected() {
        assert!(generate_synthetic_model(1, 600, 0, Profile::BodyLike).is_err());
        assert!(generate_synthetic_model(1, 7, 3, Profile::RandomSmooth).is_err());
    }

    #[test]
    fn smallest_model_is_valid() {
        for profile in [Profile::BodyLike, Profile::RandomSmooth] {
            let m = generate_synthetic_model(0, 8, 1, profile).unwrap();
            assert_eq!(m.num_vertices(), 8);
        }
    }

    #[test]
    fn body_spec_has_23_outputs_and_evaluates() {
        let m = generate_synthetic_model(1, 600, 30, Profile::BodyLike).unwrap();
        let spec = body_measurement_spec(600).unwrap();
        assert_eq!(spec.num_outputs(), 23);
        let v = measure(&m, &spec, &DVector::zeros(30)).unwrap();
        let get = |n: &str| v[spec.output_index(n).unwrap()];
        assert!(get("chest_width") > 0.25 && get("chest_width") < 0.4);
        assert!(get("body_height") > 1.4);
        assert!(get("arm_length") > 0.5);
        assert!(get("calf_circumference") > 0.1);
    }

    #[test]
    fn joint_regressor_rows_are_affine() {
        let m = generate_synthetic_model(1, 250, 4, Profile::BodyLike).unwrap();
        let jr = m.joint_regressor().unwrap();
        assert_eq!(jr.nrows(), NUM_BODY_JOINTS);
    }

    #[test]
    fn faces_are_in_range() {
        let m = generate_synthetic_model(1, 600, 3, Profile::BodyLike).unwrap();
        assert!(!m.faces().is_empty());
    }
}
