//! Product-of-Gaussians fusion of per-observation measurement distributions.
//!
//! Each slot is fused independently: precisions add, and the fused mean is
//! the precision-weighted average of the observation means. Terms are summed
//! in a canonical order (sorted by precision, then mean) so the result is
//! bitwise independent of the order observations are supplied in.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::DiagGaussian;
use crate::io::{read_json, write_json};
use crate::measurements::{MeasurementEvaluator, MeasurementSpec};
use crate::model::{LinearShapeModel, Mesh};
use crate::regressor::MeasurementRegressor;

/// Smallest variance (m²) callers should clamp observation variances to
/// before fusing.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementObservation {
    pub id: String,
    pub distribution: DiagGaussian,
}

impl MeasurementObservation {
    pub fn new(id: impl Into<String>, distribution: DiagGaussian) -> Self {
        Self {
            id: id.into(),
            distribution,
        }
    }
}

fn check_observations(observations: &[MeasurementObservation]) -> Result<usize> {
    let first = observations
        .first()
        .ok_or_else(|| Error::invalid("at least one observation is required"))?;
    let k = first.distribution.len();
    for o in observations {
        if o.distribution.len() != k {
            return Err(Error::invalid(format!(
                "observation {:?} has {} measurements, expected {k}",
                o.id,
                o.distribution.len()
            )));
        }
    }
    Ok(k)
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Order-independent arithmetic mean: sorted, compensated sum over the count.
fn plain_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.iter().all(|x| *x == v[0]) {
        return v[0];
    }
    v.sort_by(f64::total_cmp);
    compensated_sum(v.iter().copied()) / v.len() as f64
}

/// Precision-weighted product of the observation Gaussians.
pub fn fuse(observations: &[MeasurementObservation]) -> Result<DiagGaussian> {
    let k = check_observations(observations)?;
    let mut mean = DVector::zeros(k);
    let mut var = DVector::zeros(k);
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(observations.len());
    for slot in 0..k {
        terms.clear();
        for o in observations {
            let s2 = o.distribution.variances()[slot];
            if s2 <= 0.0 {
                return Err(Error::invalid(format!(
                    "observation {:?} has zero variance in slot {slot}; clamp variances to at \
                     least {VARIANCE_FLOOR:e} m² before fusing",
                    o.id
                )));
            }
            terms.push((1.0 / s2, o.distribution.mean()[slot]));
        }
        terms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let precision = compensated_sum(terms.iter().map(|t| t.0));
        let min_variance = observations
            .iter()
            .map(|o| o.distribution.variances()[slot])
            .fold(f64::INFINITY, f64::min);
        // Rounding must never let the fused variance exceed the smallest input.
        var[slot] = (1.0 / precision).min(min_variance);
        mean[slot] = if terms.iter().all(|t| t.0 == terms[0].0) {
            // Equal weights: same arithmetic as the naive average.
            plain_mean(terms.iter().map(|t| t.1))
        } else {
            compensated_sum(terms.iter().map(|t| t.0 * t.1)) / precision
        };
    }
    DiagGaussian::new(mean, var)
}

/// Unweighted mean of the observation means; variance is the mean variance
/// divided by the number of observations.
pub fn naive_average(observations: &[MeasurementObservation]) -> Result<DiagGaussian> {
    let k = check_observations(observations)?;
    let n = observations.len() as f64;
    let mean = DVector::from_fn(k, |slot, _| {
        plain_mean(observations.iter().map(|o| o.distribution.mean()[slot]))
    });
    let var = DVector::from_fn(k, |slot, _| {
        plain_mean(
            observations
                .iter()
                .map(|o| o.distribution.variances()[slot]),
        ) / n
    });
    DiagGaussian::new(mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedShape {
    pub fused: DiagGaussian,
    pub beta_hat: DVector<f64>,
    pub mesh: Mesh,
    /// Absolute measurements of the fused body, metres.
    pub measurement_estimate: DVector<f64>,
}

/// Fuses the observations and maps the fused mean offset to a body.
pub fn fused_shape_estimate(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    reg: &MeasurementRegressor,
    observations: &[MeasurementObservation],
) -> Result<FusedShape> {
    let fused = fuse(observations)?;
    crate::error::check_len("observations", reg.num_measurements(), fused.len())?;
    let beta_hat = reg.coeff_offset(fused.mean())?;
    let mesh = model.shape_to_vertices(&beta_hat)?;
    let measurement_estimate = MeasurementEvaluator::new(model, spec)?.measure(&beta_hat)?;
    Ok(FusedShape {
        fused,
        beta_hat,
        mesh,
        measurement_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObservationRecord {
    id: String,
    mean_mm: Vec<f64>,
    variance_mm2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObservationFile {
    observations: Vec<ObservationRecord>,
}

/// Reads observations stored in millimetres and converts them to metres.
pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<MeasurementObservation>> {
    let file: ObservationFile = read_json(path.as_ref())?;
    file.observations
        .into_iter()
        .map(|r| {
            if r.mean_mm.len() != r.variance_mm2.len() {
                return Err(Error::format(
                    format!("observations[{}]", r.id),
                    format!(
                        "{} means but {} variances",
                        r.mean_mm.len(),
                        r.variance_mm2.len()
                    ),
                ));
            }
            let mean = DVector::from_iterator(r.mean_mm.len(), r.mean_mm.iter().map(|v| v * 1e-3));
            let var = DVector::from_iterator(
                r.variance_mm2.len(),
                r.variance_mm2.iter().map(|v| v * 1e-6),
            );
            let dist = DiagGaussian::new(mean, var)
                .map_err(|e| Error::format(format!("observations[{}]", r.id), e.to_string()))?;
            Ok(MeasurementObservation::new(r.id, dist))
        })
        .collect()
}

pub fn save_observations(
    observations: &[MeasurementObservation],
    path: impl AsRef<Path>,
) -> Result<()> {
    let file = ObservationFile {
        observations: observations
            .iter()
            .map(|o| ObservationRecord {
                id: o.id.clone(),
                mean_mm: o.distribution.mean().iter().map(|v| v * 1e3).collect(),
                variance_mm2: o.distribution.variances().iter().map(|v| v * 1e6).collect(),
            })
            .collect(),
    };
    write_json(path.as_ref(), &file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotFusion {
    pub name: String,
    pub fused_mean: f64,
    pub fused_variance: f64,
    pub naive_mean: f64,
    pub naive_variance: f64,
    pub observation_means: Vec<f64>,
    pub observation_variances: Vec<f64>,
}

/// Per-slot fused and naive-average results with explicit units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub length_unit: String,
    pub variance_unit: String,
    pub observation_ids: Vec<String>,
    pub slots: Vec<SlotFusion>,
}

impl FusionReport {
    /// `scale` converts metres to the report unit (1e3 for mm).
    pub fn new(
        names: &[String],
        observations: &[MeasurementObservation],
        fused: &DiagGaussian,
        naive: &DiagGaussian,
        scale: f64,
        unit: &str,
    ) -> Self {
        let s2 = scale * scale;
        let slots = names
            .iter()
            .enumerate()
            .map(|(i, name)| SlotFusion {
                name: name.clone(),
                fused_mean: fused.mean()[i] * scale,
                fused_variance: fused.variances()[i] * s2,
                naive_mean: naive.mean()[i] * scale,
                naive_variance: naive.variances()[i] * s2,
                observation_means: observations
                    .iter()
                    .map(|o| o.distribution.mean()[i] * scale)
                    .collect(),
                observation_variances: observations
                    .iter()
                    .map(|o| o.distribution.variances()[i] * s2)
                    .collect(),
            })
            .collect();
        Self {
            length_unit: unit.to_string(),
            variance_unit: format!("{unit}2"),
            observation_ids: observations.iter().map(|o| o.id.clone()).collect(),
            slots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(id: &str, mean: &[f64], var: &[f64]) -> MeasurementObservation {
        MeasurementObservation::new(
            id,
            DiagGaussian::new(DVector::from_row_slice(mean), DVector::from_row_slice(var)).unwrap(),
        )
    }

    #[test]
    fn two_copies_halve_variance() {
        let o = obs("a", &[0.7], &[0.09]);
        let f = fuse(&[o.clone(), o]).unwrap();
        assert!((f.mean()[0] - 0.7).abs() < 1e-15);
        assert!((f.variances()[0] - 0.045).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_precision_weighting() {
        // precisions 25 and 100: mean (25·1 + 100·3)/125, variance 1/125
        let f = fuse(&[obs("a", &[1.0], &[0.04]), obs("b", &[3.0], &[0.01])]).unwrap();
        assert!((f.mean()[0] - 2.6).abs() < 1e-14);
        assert!((f.variances()[0] - 0.008).abs() < 1e-15);
    }

    #[test]
    fn certain_observation_dominates() {
        let f = fuse(&[obs("a", &[4.0], &[1e6]), obs("b", &[-1.0], &[1e-4])]).unwrap();
        assert!((f.mean()[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn empty_and_zero_variance_rejected() {
        assert!(fuse(&[]).is_err());
        let err = fuse(&[obs("z", &[1.0], &[0.0])]).unwrap_err();
        assert!(err.to_string().contains("1e-12"), "{err}");
    }

    #[test]
    fn mismatched_lengths_name_the_observation() {
        let err = fuse(&[
            obs("a", &[1.0], &[1.0]),
            obs("odd", &[1.0, 2.0], &[1.0, 1.0]),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("odd"));
    }

    #[test]
    fn naive_contrast_case() {
        let os = [obs("a", &[0.0], &[1.0]), obs("b", &[10.0], &[100.0])];
        let n = naive_average(&os).unwrap();
        let f = fuse(&os).unwrap();
        assert_eq!(n.mean()[0], 5.0);
        // (1·0 + 0.01·10) / 1.01
        assert!((f.mean()[0] - 0.1 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn naive_single_and_equal_variances() {
        let a = obs("a", &[0.3, -0.2], &[0.5, 0.5]);
        assert_eq!(
            naive_average(std::slice::from_ref(&a)).unwrap().mean(),
            a.distribution.mean()
        );
        let b = obs("b", &[0.1, 0.4], &[0.5, 0.5]);
        let n = naive_average(&[a.clone(), b.clone()]).unwrap();
        let f = fuse(&[a, b]).unwrap();
        assert_eq!(n.mean(), f.mean());
    }

    #[test]
    fn observation_file_converts_units() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.json");
        std::fs::write(
            &p,
            r#"{"observations":[{"id":"front","mean_mm":[50.0,-2.0],"variance_mm2":[4.0,9.0]}]}"#,
        )
        .unwrap();
        let o = load_observations(&p).unwrap();
        assert_eq!(o[0].id, "front");
        assert!((o[0].distribution.mean()[0] - 0.05).abs() < 1e-15);
        assert!((o[0].distribution.variances()[1] - 9e-6).abs() < 1e-18);
        save_observations(&o, &p).unwrap();
        let back = load_observations(&p).unwrap();
        assert!((back[0].distribution.mean() - o[0].distribution.mean()).amax() < 1e-15);
    }

    #[test]
    fn mismatched_record_lengths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.json");
        std::fs::write(
            &p,
            r#"{"observations":[{"id":"x","mean_mm":[1.0],"variance_mm2":[1.0,2.0]}]}"#,
        )
        .unwrap();
        assert!(load_observations(&p)
            .unwrap_err()
            .to_string()
            .contains("observations[x]"));
    }
}
