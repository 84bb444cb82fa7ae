//! Linear map from measurement offsets to shape-coefficient offsets.
//!
//! `Δβᵀ = Δmᵀ·W`, where `W` (K × |β|) is the least-squares solution of
//! `ΔM·W ≈ ΔB` over randomly sampled bodies.
//!
//! The fit never materialises `ΔM` or `ΔB`. Each chunk of samples is reduced
//! to the triangular factor of `[ΔM_c | ΔB_c]`; the factors are folded
//! together in chunk order (TSQR), and `W = R₁₁⁺·R₁₂` is solved with an SVD
//! that truncates singular values below `rank_tolerance · σ_max`. Memory is
//! O((K + |β|)² + chunk) and the result does not depend on thread count.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::io::{
    payload_name, read_json, resolve_payload, write_json, PayloadReader, PayloadWriter,
};
use crate::measurements::{MeasurementEvaluator, MeasurementSpec};
use crate::model::LinearShapeModel;
use crate::sampling::{map_chunks, normal_vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub num_samples: usize,
    pub coeff_stddev: f64,
    pub measurement_offset_stddev: f64,
    pub rank_tolerance: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            num_samples: 1_000_000,
            coeff_stddev: 1.25,
            measurement_offset_stddev: 0.02,
            rank_tolerance: 1e-10,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_samples(num_samples: usize, seed: u64) -> Self {
        Self {
            num_samples,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::invalid("num_samples must be positive"));
        }
        if !(self.coeff_stddev > 0.0 && self.coeff_stddev.is_finite()) {
            return Err(Error::invalid("coeff_stddev must be positive"));
        }
        if !(self.measurement_offset_stddev >= 0.0 && self.measurement_offset_stddev.is_finite()) {
            return Err(Error::invalid(
                "measurement_offset_stddev must be non-negative",
            ));
        }
        if !(self.rank_tolerance >= 0.0 && self.rank_tolerance < 1.0) {
            return Err(Error::invalid("rank_tolerance must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Record of how a regressor was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub num_samples: usize,
    pub sampling_stddev: f64,
    pub rank_tolerance: f64,
    pub seed: u64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// `‖ΔM·W − ΔB‖_F` over the fitting samples.
    pub residual_norm: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitMeta {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.singular_values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRegressor {
    weights: DMatrix<f64>,
    base_measurements: DVector<f64>,
    output_names: Vec<String>,
    meta: FitMeta,
}

impl MeasurementRegressor {
    pub fn new(
        weights: DMatrix<f64>,
        base_measurements: DVector<f64>,
        output_names: Vec<String>,
        meta: FitMeta,
    ) -> Result<Self> {
        check_len(
            "base measurements",
            weights.nrows(),
            base_measurements.len(),
        )?;
        check_len("output names", weights.nrows(), output_names.len())?;
        crate::error::check_finite("regressor weights", weights.iter())?;
        crate::error::check_finite("base measurements", base_measurements.iter())?;
        Ok(Self {
            weights,
            base_measurements,
            output_names,
            meta,
        })
    }

    /// K × |β|.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `m̄ = measure(0)`.
    pub fn base_measurements(&self) -> &DVector<f64> {
        &self.base_measurements
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn num_measurements(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_coeffs(&self) -> usize {
        self.weights.ncols()
    }

    /// Checks that the regressor was fitted for this model and spec.
    pub fn check_compatible(&self, model: &LinearShapeModel, spec: &MeasurementSpec) -> Result<()> {
        check_len(
            "regressor coefficients",
            model.num_coeffs(),
            self.num_coeffs(),
        )?;
        check_len(
            "regressor measurements",
            spec.num_outputs(),
            self.num_measurements(),
        )?;
        if spec.output_names() != self.output_names.as_slice() {
            return Err(Error::invalid(
                "regressor output names do not match the measurement spec",
            ));
        }
        Ok(())
    }

    /// `Δβ = Wᵀ·Δm`.
    pub fn coeff_offset(&self, delta_m: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(
            "measurement offsets",
            self.num_measurements(),
            delta_m.len(),
        )?;
        crate::error::check_finite("measurement offsets", delta_m.iter())?;
        Ok(self.weights.tr_mul(delta_m))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let payload = payload_name(path);
        let header = RegressorHeader {
            num_measurements: self.num_measurements(),
            num_coeffs: self.num_coeffs(),
            output_names: self.output_names.clone(),
            meta: self.meta.clone(),
            payload: payload.clone(),
        };
        let mut w = PayloadWriter::default();
        w.f64s(self.weights.transpose().iter());
        w.f64s(self.base_measurements.iter());
        let payload_path = resolve_payload(path, &payload);
        std::fs::write(&payload_path, w.finish()).map_err(|e| Error::io(&payload_path, e))?;
        write_json(path, &header)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let h: RegressorHeader = read_json(path)?;
        if h.output_names.len() != h.num_measurements {
            return Err(Error::format(
                "output_names",
                format!(
                    "{} names for {} measurements",
                    h.output_names.len(),
                    h.num_measurements
                ),
            ));
        }
        let payload_path = resolve_payload(path, &h.payload);
        let bytes = std::fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let mut r = PayloadReader::new(&bytes);
        let w = r.f64s("weights", h.num_measurements * h.num_coeffs)?;
        let base = r.f64s("base_measurements", h.num_measurements)?;
        r.finish()?;
        Self::new(
            DMatrix::from_row_slice(h.num_measurements, h.num_coeffs, &w),
            DVector::from_vec(base),
            h.output_names,
            h.meta,
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RegressorHeader {
    num_measurements: usize,
    num_coeffs: usize,
    output_names: Vec<String>,
    meta: FitMeta,
    payload: String,
}

/// Folds `block` into the n × n triangular factor `acc`.
fn fold_rows(acc: &DMatrix<f64>, block: &DMatrix<f64>) -> DMatrix<f64> {
    let n = acc.ncols();
    let mut stacked = DMatrix::zeros(n + block.nrows(), n);
    stacked.rows_mut(0, n).copy_from(acc);
    stacked.rows_mut(n, block.nrows()).copy_from(block);
    stacked.qr().r()
}

/// Samples the design rows `[ΔM | ΔB]` for samples `range` of a fit.
fn design_chunk(
    eval: &MeasurementEvaluator<'_>,
    base: &DVector<f64>,
    num_coeffs: usize,
    stddev: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
    range: std::ops::Range<usize>,
) -> Result<DMatrix<f64>> {
    let k = base.len();
    let mut block = DMatrix::zeros(range.len(), k + num_coeffs);
    for (row, sample) in range.enumerate() {
        let beta = normal_vector(rng, num_coeffs, stddev);
        let m = eval.measure(&beta)?;
        if let Some(slot) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "measurement {slot} of fitting sample {sample}"
            )));
        }
        for i in 0..k {
            block[(row, i)] = m[i] - base[i];
        }
        for i in 0..num_coeffs {
            block[(row, k + i)] = beta[i];
        }
    }
    Ok(block)
}

/// The fitting design matrices `(ΔM, ΔB)`, materialised.
///
/// Uses the same samples as [`fit_regressor`] with the same config; meant for
/// checking a fit, not for large `num_samples`.
pub fn fit_design(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    config: &FitConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    config.validate()?;
    let eval = MeasurementEvaluator::new(model, spec)?;
    let base = eval.measure(&DVector::zeros(model.num_coeffs()))?;
    let b = model.num_coeffs();
    let blocks = map_chunks(config.num_samples, config.seed, |rng, range| {
        design_chunk(&eval, &base, b, config.coeff_stddev, rng, range)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let k = base.len();
    let mut dm = DMatrix::zeros(config.num_samples, k);
    let mut db = DMatrix::zeros(config.num_samples, b);
    let mut row = 0;
    for blk in blocks {
        let n = blk.nrows();
        dm.rows_mut(row, n).copy_from(&blk.columns(0, k));
        db.rows_mut(row, n).copy_from(&blk.columns(k, b));
        row += n;
    }
    Ok((dm, db))
}

/// Fits `W` by rank-tolerant least squares over `config.num_samples`
/// bodies drawn from `N(0, coeff_stddev²·I)`.
pub fn fit_regressor(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    config: &FitConfig,
) -> Result<MeasurementRegressor> {
    config.validate()?;
    let eval = MeasurementEvaluator::new(model, spec)?;
    let b = model.num_coeffs();
    let base = eval.measure(&DVector::zeros(b))?;
    let k = base.len();
    let n = k + b;

    let factors = map_chunks(config.num_samples, config.seed, |rng, range| {
        let block = design_chunk(&eval, &base, b, config.coeff_stddev, rng, range)?;
        Ok(fold_rows(&DMatrix::zeros(n, n), &block))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let r = factors
        .iter()
        .skip(1)
        .fold(factors[0].clone(), |acc, f| fold_rows(&acc, f));

    let r11 = r.view((0, 0), (k, k)).into_owned();
    let r12 = r.view((0, k), (k, b)).into_owned();
    let r22 = r.view((k, k), (b, b));

    let svd = r11.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = config.rank_tolerance * sigma_max;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut weights = DMatrix::zeros(k, b);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            // W += v_i · (u_iᵀ R₁₂) / σ_i
            let proj = u.column(i).tr_mul(&r12) / s;
            weights += v_t.row(i).transpose() * proj;
        }
    }
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));

    let fit_residual = &r11 * &weights - &r12;
    let residual_norm = (fit_residual.norm_squared() + r22.norm_squared()).sqrt();

    let mut warnings = Vec::new();
    if rank < k {
        warnings.push(format!(
            "measurement design is rank deficient: rank {rank} < {k} measurements \
             (num_samples = {}); using the minimum-norm solution",
            config.num_samples
        ));
    }
    let meta = FitMeta {
        num_samples: config.num_samples,
        sampling_stddev: config.coeff_stddev,
        rank_tolerance: config.rank_tolerance,
        seed: config.seed,
        rank,
        singular_values,
        residual_norm,
        warnings,
    };
    MeasurementRegressor::new(weights, base, spec.output_names().to_vec(), meta)
}

/// `Δβ = Wᵀ·Δm`.
pub fn measurements_to_coeff_offset(
    reg: &MeasurementRegressor,
    delta_m: &DVector<f64>,
) -> Result<DVector<f64>> {
    reg.coeff_offset(delta_m)
}

/// Offsets `base_beta` by `Wᵀ·Δm` and reports what the measurements actually
/// moved by: `(new_beta, measure(new_beta) − measure(base_beta))`.
pub fn apply_measurement_offset(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    reg: &MeasurementRegressor,
    base_beta: &DVector<f64>,
    delta_m: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    reg.check_compatible(model, spec)?;
    let eval = MeasurementEvaluator::new(model, spec)?;
    let new_beta = base_beta + reg.coeff_offset(delta_m)?;
    let achieved = eval.measure(&new_beta)? - eval.measure(base_beta)?;
    Ok((new_beta, achieved))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetProbe {
    pub slot: usize,
    pub name: String,
    pub requested_mm: f64,
    /// Achieved offset of every output slot, mm.
    pub achieved_mm: Vec<f64>,
}

impl OffsetProbe {
    pub fn on_target_mm(&self) -> f64 {
        self.achieved_mm[self.slot]
    }

    pub fn off_target_mm(&self) -> impl Iterator<Item = f64> + '_ {
        self.achieved_mm
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.slot)
            .map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOffsetReport {
    pub output_names: Vec<String>,
    pub probes: Vec<OffsetProbe>,
}

impl LocalOffsetReport {
    /// Mean absolute off-target offset over every probe, mm.
    pub fn mean_leakage_mm(&self) -> f64 {
        let vals: Vec<f64> = self
            .probes
            .iter()
            .flat_map(|p| p.off_target_mm())
            .map(f64::abs)
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// One row per probe: input slot, requested offset, then every output.
    pub fn to_csv(&self, scale: f64, suffix: &str) -> String {
        let mut out = format!("input,requested_{suffix}");
        for n in &self.output_names {
            let _ = write!(out, ",{n}_{suffix}");
        }
        out.push('\n');
        for p in &self.probes {
            let _ = write!(out, "{},{}", p.name, p.requested_mm * scale);
            for v in &p.achieved_mm {
                let _ = write!(out, ",{}", v * scale);
            }
            out.push('\n');
        }
        out
    }
}

/// Applies each `(slot, delta metres)` offset to the mean body and records
/// the achieved change of every measurement.
pub fn eval_local_offsets(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    reg: &MeasurementRegressor,
    offsets: &[(usize, f64)],
) -> Result<LocalOffsetReport> {
    reg.check_compatible(model, spec)?;
    let k = spec.num_outputs();
    let zero = DVector::zeros(model.num_coeffs());
    let probes = offsets
        .iter()
        .map(|&(slot, delta)| {
            if slot >= k {
                return Err(Error::invalid(format!(
                    "offset slot {slot} out of range ({k} measurements)"
                )));
            }
            let mut dm = DVector::zeros(k);
            dm[slot] = delta;
            let (_, achieved) = apply_measurement_offset(model, spec, reg, &zero, &dm)?;
            Ok(OffsetProbe {
                slot,
                name: spec.output_names()[slot].clone(),
                requested_mm: delta * 1e3,
                achieved_mm: achieved.iter().map(|v| v * 1e3).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalOffsetReport {
        output_names: spec.output_names().to_vec(),
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub num_bodies: usize,
    pub coeff_stddev: f64,
    pub seed: u64,
    /// Mean |measure(β̂) − measure(β)| over slots and bodies, mm.
    pub meas_mae_mm: f64,
    /// Mean per-vertex distance between the two T-pose meshes, mm.
    pub pve_t_mm: f64,
}

/// Samples bodies, reconstructs them from their measurements alone and
/// reports measurement and per-vertex errors.
pub fn eval_reconstruction(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    reg: &MeasurementRegressor,
    num_bodies: usize,
    coeff_stddev: f64,
    seed: u64,
) -> Result<ReconstructionReport> {
    if num_bodies == 0 {
        return Err(Error::invalid("num_bodies must be at least 1"));
    }
    if !(coeff_stddev > 0.0 && coeff_stddev.is_finite()) {
        return Err(Error::invalid("coeff_stddev must be positive"));
    }
    reg.check_compatible(model, spec)?;
    let eval = MeasurementEvaluator::new(model, spec)?;
    let b = model.num_coeffs();
    let v = model.num_vertices();
    let k = spec.num_outputs();
    let partials = map_chunks(num_bodies, seed, |rng, range| {
        let mut meas = 0.0;
        let mut pve = 0.0;
        for _ in range {
            let beta = normal_vector(rng, b, coeff_stddev);
            let m = eval.measure(&beta)?;
            let beta_hat = reg.coeff_offset(&(&m - reg.base_measurements()))?;
            let m_hat = eval.measure(&beta_hat)?;
            meas += (&m_hat - &m).abs().sum() / k as f64;
            let dv = model.basis() * (&beta_hat - &beta);
            pve += dv
                .as_slice()
                .chunks_exact(3)
                .map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt())
                .sum::<f64>()
                / v as f64;
        }
        Ok((meas, pve))
    })
    .into_iter()
    .collect::<Result<Vec<(f64, f64)>>>()?;
    let (meas, pve) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    Ok(ReconstructionReport {
        num_bodies,
        coeff_stddev,
        seed,
        meas_mae_mm: meas / num_bodies as f64 * 1e3,
        pve_t_mm: pve / num_bodies as f64 * 1e3,
    })
}

/// Two-stage shape sampling: base bodies from `N(0, coeff_stddev²·I)`, each
/// offset by `Wᵀ·Δm` with `Δm ~ N(0, measurement_offset_stddev²·I)`.
pub fn sample_shapes(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    reg: &MeasurementRegressor,
    count: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    config.validate()?;
    reg.check_compatible(model, spec)?;
    let b = model.num_coeffs();
    let k = reg.num_measurements();
    let chunks = map_chunks(count, seed, |rng, range| {
        range
            .map(|_| {
                let base = normal_vector(rng, b, config.coeff_stddev);
                let dm = normal_vector(rng, k, config.measurement_offset_stddev);
                base + reg.weights().tr_mul(&dm)
            })
            .collect::<Vec<_>>()
    });
    Ok(chunks.into_iter().flatten().collect())
}

/// Measures many coefficient vectors in parallel, preserving order.
pub fn measure_many(
    model: &LinearShapeModel,
    spec: &MeasurementSpec,
    betas: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let eval = MeasurementEvaluator::new(model, spec)?;
    betas.par_iter().map(|b| eval.measure(b)).collect()
}
