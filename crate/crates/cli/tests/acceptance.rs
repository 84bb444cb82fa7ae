//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use semshape::gaussian::is_symmetric_psd;
use semshape::sampling::{chunk_rng, normal_samples, normal_vector};
use semshape::synthetic::{axis_difference_spec, body_measurement_spec, random_mixed_spec};
use semshape::{
    eval_local_offsets, eval_reconstruction, fit_regressor, fuse, fused_shape_estimate,
    generate_synthetic_model, measure, measurement_jacobian, naive_average, propagate_to_coeffs,
    propagate_to_vertices, CovarianceMode, DiagGaussian, FitConfig, LinearShapeModel,
    MeasurementObservation, MeasurementSpec, Profile,
};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn diag_obs(id: String, mean: DVector<f64>, var: DVector<f64>) -> MeasurementObservation {
    MeasurementObservation::new(id, DiagGaussian::new(mean, var).unwrap())
}

fn random_observations(seed: u64, n: usize, k: usize) -> Vec<MeasurementObservation> {
    let mut rng = chunk_rng(seed, 0);
    (0..n)
        .map(|i| {
            let mean = DVector::from_fn(k, |_, _| rng.random_range(-0.1..0.1));
            let var = DVector::from_fn(k, |_, _| 10f64.powf(rng.random_range(-8.0..-2.0)));
            diag_obs(format!("obs{i}"), mean, var)
        })
        .collect()
}

fn fusion_oracle() -> Outcome {
    let mut rng = chunk_rng(101, 0);
    let mut density = 0.0f64;
    for k in [1usize, 2] {
        for _ in 0..100 {
            let obs: Vec<_> = (0..2)
                .map(|i| {
                    let mean = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
                    let var = DVector::from_fn(k, |_, _| rng.random_range(0.2..4.0));
                    diag_obs(format!("{i}"), mean, var)
                })
                .collect();
            let f = fuse(&obs).unwrap();
            for s in 0..k {
                let (m1, v1) = (
                    obs[0].distribution.mean()[s],
                    obs[0].distribution.variances()[s],
                );
                let (m2, v2) = (
                    obs[1].distribution.mean()[s],
                    obs[1].distribution.variances()[s],
                );
                let (mu, var) = (f.mean()[s], f.variances()[s]);
                let norm = normal_pdf(m1, m2, v1 + v2);
                let sd = var.sqrt();
                for i in 0..1001 {
                    let x = mu - 5.0 * sd + 10.0 * sd * i as f64 / 1000.0;
                    let product = normal_pdf(x, m1, v1) * normal_pdf(x, m2, v2) / norm;
                    density = density.max((normal_pdf(x, mu, var) - product).abs());
                }
            }
        }
    }

    let (mut additivity, mut order, mut assoc_mean, mut assoc_var) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut contraction = true;
    for case in 0..1000u64 {
        let n = 2 + (case as usize % 6);
        let mut obs = random_observations(case, n, 3);
        let f = fuse(&obs).unwrap();
        for s in 0..3 {
            let precision: f64 = obs
                .iter()
                .map(|o| 1.0 / o.distribution.variances()[s])
                .sum();
            additivity = additivity.max(rel(1.0 / f.variances()[s], precision));
            let min = obs
                .iter()
                .map(|o| o.distribution.variances()[s])
                .fold(f64::INFINITY, f64::min);
            contraction &= f.variances()[s] <= min;
        }
        if n > 2 {
            let nested = fuse(&[
                MeasurementObservation::new("head", fuse(&obs[..2]).unwrap()),
                MeasurementObservation::new("tail", fuse(&obs[2..]).unwrap()),
            ])
            .unwrap();
            for s in 0..3 {
                let scale = obs
                    .iter()
                    .map(|o| o.distribution.mean()[s].abs())
                    .fold(0.0, f64::max);
                assoc_mean = assoc_mean.max((nested.mean()[s] - f.mean()[s]).abs() / scale);
                assoc_var = assoc_var.max(rel(nested.variances()[s], f.variances()[s]));
            }
        }
        obs.shuffle(&mut rng);
        let g = fuse(&obs).unwrap();
        for s in 0..3 {
            order = order.max(rel(f.mean()[s], g.mean()[s]));
            order = order.max(rel(f.variances()[s], g.variances()[s]));
        }
    }
    let ok = density < 1e-9
        && additivity < 1e-14
        && contraction
        && order <= 1e-15
        && assoc_mean <= 1e-12
        && assoc_var <= 1e-12;
    outcome(
        ok,
        format!(
            "density err {density:.1e}, additivity {additivity:.1e}, order {order:.1e}, \
             associativity {:.1e}, contraction {contraction}",
            assoc_mean.max(assoc_var)
        ),
    )
}

fn sample_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples.len() as f64;
    let mean = samples
        .iter()
        .fold(DVector::zeros(samples[0].len()), |a, s| a + s)
        / n;
    let d = mean.len();
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = s - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov / (n - 1.0)
}

struct CovarianceCheck {
    /// Worst relative error over entries that 1e5 samples can resolve to 5 %.
    worst_relative: f64,
    resolved: usize,
    /// Worst error in Monte-Carlo standard errors over the remaining entries.
    worst_z: f64,
    unresolved: usize,
}

impl CovarianceCheck {
    fn ok(&self) -> bool {
        self.worst_relative < 0.05 && self.worst_z < 4.0 && self.resolved > 0
    }

    fn describe(&self) -> String {
        let mut s = format!(
            "worst {:.2}% over {} entries",
            100.0 * self.worst_relative,
            self.resolved
        );
        if self.unresolved > 0 {
            s += &format!(
                ", {} weakly correlated entries within {:.1} SE",
                self.unresolved, self.worst_z
            );
        }
        s
    }
}

/// Compares entries of `exact` above 1e-6 of its trace. An entry counts as
/// resolvable when four standard errors of its sample estimate,
/// `sqrt((Σii·Σjj + Σij²)/n)`, fit inside the 5 % band.
fn compare_covariance(empirical: &DMatrix<f64>, exact: &DMatrix<f64>, n: f64) -> CovarianceCheck {
    let floor = 1e-6 * exact.trace();
    let mut check = CovarianceCheck {
        worst_relative: 0.0,
        resolved: 0,
        worst_z: 0.0,
        unresolved: 0,
    };
    for i in 0..exact.nrows() {
        for j in 0..exact.ncols() {
            let x = exact[(i, j)];
            if x.abs() <= floor {
                continue;
            }
            let err = (empirical[(i, j)] - x).abs();
            let se = ((exact[(i, i)] * exact[(j, j)] + x * x) / n).sqrt();
            if 4.0 * se <= 0.05 * x.abs() {
                check.resolved += 1;
                check.worst_relative = check.worst_relative.max(err / x.abs());
            } else {
                check.unresolved += 1;
                check.worst_z = check.worst_z.max(err / se);
            }
        }
    }
    check
}

fn propagation_oracle() -> Outcome {
    let (v, b, k) = (50, 10, 6);
    let model = generate_synthetic_model(7, v, b, Profile::RandomSmooth).unwrap();
    let spec = random_mixed_spec(v, k, 8).unwrap();
    let reg = fit_regressor(&model, &spec, &FitConfig::with_samples(10_000, 9)).unwrap();
    let mut rng = chunk_rng(10, 0);
    let mean = DVector::from_fn(k, |_, _| rng.random_range(-0.03..0.03));
    let var = DVector::from_fn(k, |_, _| rng.random_range(1e-5..4e-4));
    let d = DiagGaussian::new(mean, var).unwrap();
    let g = propagate_to_coeffs(&reg, &d).unwrap();
    let vg = propagate_to_vertices(&model, &g, CovarianceMode::default()).unwrap();

    let sd = d.variances().map(f64::sqrt);
    let betas: Vec<DVector<f64>> = normal_samples(100_000, k, 1.0, 11)
        .into_iter()
        .map(|z| {
            reg.coeff_offset(&(d.mean() + z.component_mul(&sd)))
                .unwrap()
        })
        .collect();
    let n = betas.len() as f64;
    let beta_check = compare_covariance(&sample_covariance(&betas), g.covariance(), n);

    let v3 = 3 * v;
    let (mut sum, mut sq) = (DVector::zeros(v3), DVector::zeros(v3));
    for beta in &betas {
        let x = model.flat_vertices(beta).unwrap();
        sq += x.component_mul(&x);
        sum += x;
    }
    let emp_mean = &sum / n;
    let emp_var = (sq / n - emp_mean.component_mul(&emp_mean)) * (n / (n - 1.0));
    let vertex_check = compare_covariance(
        &DMatrix::from_diagonal(&emp_var),
        &DMatrix::from_diagonal(&vg.diagonal()),
        n,
    );

    let mut psd = 0;
    for case in 0..100u64 {
        let kk = 1 + case as usize % 8;
        let mut rng = chunk_rng(case, 2);
        let w = DMatrix::from_fn(kk, b, |_, _| rng.random_range(-1.0..1.0));
        let r = semshape::MeasurementRegressor::new(
            w,
            DVector::zeros(kk),
            (0..kk).map(|i| format!("m{i}")).collect(),
            reg.meta().clone(),
        )
        .unwrap();
        let dd = DiagGaussian::new(
            DVector::from_fn(kk, |_, _| rng.random_range(-0.05..0.05)),
            DVector::from_fn(kk, |_, _| rng.random_range(0.0..4e-4)),
        )
        .unwrap();
        let gg = propagate_to_coeffs(&r, &dd).unwrap();
        let vv = propagate_to_vertices(&model, &gg, CovarianceMode::default()).unwrap();
        if is_symmetric_psd(gg.covariance()) && is_symmetric_psd(vv.full().unwrap().covariance()) {
            psd += 1;
        }
    }
    outcome(
        beta_check.ok() && vertex_check.ok() && psd == 100,
        format!(
            "Σβ {}; diag ΣV {}; PSD {psd}/100",
            beta_check.describe(),
            vertex_check.describe()
        ),
    )
}

fn exact_linear_oracle() -> Outcome {
    let mut round_trip = 0.0f64;
    let mut mae = 0.0f64;
    let mut full_rank = true;
    for (case, (k, b)) in [(6usize, 10usize), (8, 8), (4, 20)].into_iter().enumerate() {
        let seed = 300 + case as u64;
        let model = generate_synthetic_model(seed, 80, b, Profile::RandomSmooth).unwrap();
        let spec = axis_difference_spec(80, k, seed).unwrap();
        let reg = fit_regressor(&model, &spec, &FitConfig::with_samples(10_000, seed)).unwrap();
        full_rank &= reg.meta().rank == k;
        let mut rng = chunk_rng(seed, 1);
        for _ in 0..100 {
            let dm = normal_vector(&mut rng, k, 0.05);
            let got = measure(&model, &spec, &reg.coeff_offset(&dm).unwrap()).unwrap()
                - reg.base_measurements();
            round_trip = round_trip.max((got - dm).amax());
        }
        let rep = eval_reconstruction(&model, &spec, &reg, 10_000, 1.25, seed).unwrap();
        mae = mae.max(rep.meas_mae_mm);
    }
    outcome(
        full_rank && round_trip < 1e-8 && mae < 1e-6,
        format!("round trip {round_trip:.1e} m, meas MAE {mae:.1e} mm, full rank {full_rank}"),
    )
}

fn central_difference(
    m: &LinearShapeModel,
    s: &MeasurementSpec,
    beta: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(s.num_outputs(), beta.len());
    for c in 0..beta.len() {
        let (mut up, mut down) = (beta.clone(), beta.clone());
        up[c] += h;
        down[c] -= h;
        j.set_column(
            c,
            &((measure(m, s, &up).unwrap() - measure(m, s, &down).unwrap()) / (2.0 * h)),
        );
    }
    j
}

fn jacobian_check() -> Outcome {
    let mut rng = chunk_rng(404, 0);
    let mut worst = 0.0f64;
    let cases = 60u64;
    for seed in 0..cases {
        let (model, spec) = if seed % 2 == 0 {
            let v = rng.random_range(200..400);
            (
                generate_synthetic_model(seed, v, rng.random_range(4..20), Profile::BodyLike)
                    .unwrap(),
                body_measurement_spec(v).unwrap(),
            )
        } else {
            let v = rng.random_range(20..120);
            (
                generate_synthetic_model(seed, v, rng.random_range(2..16), Profile::RandomSmooth)
                    .unwrap(),
                random_mixed_spec(v, rng.random_range(3..12), seed).unwrap(),
            )
        };
        let beta = normal_vector(&mut rng, model.num_coeffs(), 1.0);
        let analytic = measurement_jacobian(&model, &spec, &beta).unwrap();
        worst = worst.max((analytic - central_difference(&model, &spec, &beta, 1e-6)).amax());
    }
    outcome(
        worst < 1e-6,
        format!("{cases} cases, worst deviation {worst:.1e}"),
    )
}

const LOCALITY_PROBES: [&str; 3] = ["chest_width", "stomach_depth", "calf_length"];
const GUARD_COLUMNS: [&str; 6] = [
    "chest_width",
    "chest_depth",
    "stomach_width",
    "stomach_depth",
    "calf_circumference",
    "calf_length",
];

fn locality_trends() -> Outcome {
    let v = 600;
    let samples = 20_000;
    let seeds = 5u64;
    let spec = body_measurement_spec(v).unwrap();
    let k = spec.num_outputs();
    let index = |n: &str| spec.output_index(n).unwrap();
    let probes: Vec<(usize, f64)> = LOCALITY_PROBES.iter().map(|n| (index(n), 0.05)).collect();
    let columns: Vec<usize> = GUARD_COLUMNS.iter().map(|n| index(n)).collect();
    let sizes = [k / 2, k, 3 * k];
    let mut leak = [0.0f64; 3];
    let mut mae = [0.0f64; 3];
    let mut worst_ratio = 0.0f64;
    for seed in 0..seeds {
        let full = generate_synthetic_model(seed, v, 3 * k, Profile::BodyLike).unwrap();
        for (i, &b) in sizes.iter().enumerate() {
            let m = full.truncated(b).unwrap();
            let reg = fit_regressor(&m, &spec, &FitConfig::with_samples(samples, seed)).unwrap();
            let loc = eval_local_offsets(&m, &spec, &reg, &probes).unwrap();
            let rec = eval_reconstruction(&m, &spec, &reg, 2_000, 1.25, seed + 100).unwrap();
            leak[i] += loc.mean_leakage_mm() / seeds as f64;
            mae[i] += rec.meas_mae_mm / seeds as f64;
            if b == 3 * k {
                for p in &loc.probes {
                    for &c in columns.iter().filter(|&&c| c != p.slot) {
                        worst_ratio = worst_ratio.max(p.achieved_mm[c].abs() / p.on_target_mm());
                    }
                }
            }
        }
    }
    let leak_ok = leak[0] >= leak[1] && leak[1] >= leak[2];
    let mae_ok = mae[0] <= mae[1] && mae[1] <= mae[2];
    outcome(
        leak_ok && mae_ok && worst_ratio < 0.2,
        format!(
            "|β| {sizes:?}: leakage {:.2}/{:.2}/{:.2} mm, meas MAE {:.3}/{:.3}/{:.3} mm, \
             worst off-target ratio at 3K {worst_ratio:.3}",
            leak[0], leak[1], leak[2], mae[0], mae[1], mae[2]
        ),
    )
}

fn fusion_beats_naive() -> Outcome {
    let (k, b) = (6, 8);
    let model = generate_synthetic_model(21, 60, b, Profile::RandomSmooth).unwrap();
    let spec = axis_difference_spec(60, k, 22).unwrap();
    let reg = fit_regressor(&model, &spec, &FitConfig::with_samples(10_000, 1)).unwrap();
    let mut rng = chunk_rng(606, 0);
    let mut wins = 0;
    let mut slots = 0;
    let mut shape_wins = 0;
    for _ in 0..100 {
        let truth = DVector::from_fn(k, |_, _| rng.random_range(-0.05..0.05));
        let certain = rng.random_range(1e-6..1e-5);
        let ratio = rng.random_range(100.0..10_000.0);
        let split: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
        // Each observation sits exactly one standard deviation from the truth
        // on every slot, in a random direction.
        let mut build = |first: bool| {
            let var = DVector::from_fn(k, |i, _| {
                if split[i] == first {
                    certain
                } else {
                    certain * ratio
                }
            });
            let sign = DVector::from_fn(k, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            diag_obs(
                format!("{first}"),
                &truth + var.map(f64::sqrt).component_mul(&sign),
                var,
            )
        };
        let obs = [build(true), build(false)];
        let fused = fuse(&obs).unwrap();
        let naive = naive_average(&obs).unwrap();
        let est = fused_shape_estimate(&model, &spec, &reg, &obs).unwrap();
        let achieved = &est.measurement_estimate - reg.base_measurements();
        for s in 0..k {
            let fe = (fused.mean()[s] - truth[s]).abs();
            let ne = (naive.mean()[s] - truth[s]).abs();
            slots += 1;
            wins += usize::from(fe < ne);
            shape_wins += usize::from((achieved[s] - truth[s]).abs() < ne);
        }
    }
    outcome(
        wins == slots && shape_wins == slots,
        format!("fused beats naive on {wins}/{slots} slots ({shape_wins}/{slots} through the fitted shape)"),
    )
}

/// Runs the full CLI pipeline into `dir` with the given thread count.
fn run_pipeline(dir: &Path, threads: usize) -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_semshape");
    let obs = dir.join("observations.json");
    semshape::save_observations(&random_observations(808, 3, 23), &obs).unwrap();
    let globals = [
        "--model",
        "model.json",
        "--spec",
        "spec.json",
        "--regressor",
        "regressor.json",
        "--seed",
        "7",
        "--out",
        ".",
    ];
    let threads = threads.to_string();
    let steps: [&[&str]; 8] = [
        &["gen-model", "--vertices", "600", "--coeffs", "30"],
        &["fit", "--samples", "20000"],
        &["measure"],
        &[
            "offset",
            "--measure",
            "chest_width=+50",
            "--measure",
            "calf_length=-30",
        ],
        &["fuse", "--observations", "observations.json"],
        &["eval", "local"],
        &["eval", "recon", "--bodies", "5000"],
        &[
            "export",
            "--observations",
            "observations.json",
            "--component",
            "total",
        ],
    ];
    for step in steps {
        let status = Command::new(bin)
            .current_dir(dir)
            .args(globals)
            .args(["--threads", &threads])
            .args(step)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "{step:?} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ));
        }
    }
    Ok(())
}

/// File contents keyed by name, with the timing block removed from JSON reports.
fn masked_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).unwrap();
        let bytes = match serde_json::from_slice::<serde_json::Value>(&bytes) {
            Ok(serde_json::Value::Object(mut map)) if name.ends_with(".json") => {
                map.remove("timing");
                serde_json::to_vec(&map).unwrap()
            }
            _ => bytes,
        };
        out.insert(name, bytes);
    }
    out
}

fn determinism() -> Outcome {
    let runs: Vec<_> = [1usize, 4, 4]
        .into_iter()
        .map(|t| {
            let dir = tempfile::tempdir().unwrap();
            run_pipeline(dir.path(), t).map(|()| masked_outputs(dir.path()))
        })
        .collect();
    let runs: Result<Vec<_>, _> = runs.into_iter().collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let differing: Vec<&String> = runs[0]
        .iter()
        .filter(|(name, bytes)| runs[1..].iter().any(|r| r.get(*name) != Some(bytes)))
        .map(|(name, _)| name)
        .collect();
    let same_names = runs.iter().all(|r| r.keys().eq(runs[0].keys()));
    outcome(
        differing.is_empty() && same_names,
        if differing.is_empty() {
            format!(
                "{} output files byte-identical across --threads 1, 4 and a repeat run",
                runs[0].len()
            )
        } else {
            format!("differing outputs: {differing:?}")
        },
    )
}

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("1", "fusion oracle", Duration::from_secs(5), fusion_oracle),
        (
            "2",
            "propagation oracle",
            Duration::from_secs(30),
            propagation_oracle,
        ),
        (
            "3",
            "exact-linear regressor oracle",
            Duration::from_secs(10),
            exact_linear_oracle,
        ),
        (
            "4",
            "Jacobian check",
            Duration::from_secs(10),
            jacobian_check,
        ),
        (
            "5",
            "locality/reconstruction trends",
            Duration::from_secs(120),
            locality_trends,
        ),
        (
            "6",
            "fusion beats naive averaging",
            Duration::from_secs(10),
            fusion_beats_naive,
        ),
        ("8", "determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let ok = result.ok && in_time;
        failed += usize::from(!ok);
        println!(
            "{} [{id}] {name}: {} ({:.1}s, budget {}s{})",
            if ok { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("NOTE [7] SMPL replication needs a user-supplied SMPL model; see the README recipe");
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
