//! `semshape` command-line tool.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Deserialize;
use serde_json::{json, Value};

use semshape::gaussian::VertexGaussian;
use semshape::measurements::smpl_spec_template;
use semshape::regressor::LocalOffsetReport;
use semshape::synthetic::{axis_difference_spec, default_spec_for, random_mixed_spec};
use semshape::{
    apply_measurement_offset, directional_vertex_variance, eval_local_offsets, eval_reconstruction,
    export_obj, fit_regressor, fuse, fused_shape_estimate, generate_synthetic_model, load_model,
    load_observations, measure, naive_average, propagate_to_coeffs, propagate_to_vertices,
    save_model, CovarianceMode, FitConfig, FusionReport, LinearShapeModel, MeasurementRegressor,
    MeasurementSpec, Profile,
};

use report::{ensure_dir, out_path, usage, write_report, write_text, CliResult, Timer, Units};

#[derive(Parser, Debug)]
#[command(
    name = "semshape",
    version,
    about = "Measurement-driven linear blend-shape toolkit"
)]
struct Cli {
    /// Model header JSON.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Measurement spec JSON.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Regressor header JSON (written by `fit`, read by the other commands).
    #[arg(long, global = true)]
    regressor: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core. Never changes outputs.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Length unit of reports and of offsets given on the command line.
    #[arg(long, global = true, value_enum, default_value_t = Units::Mm)]
    units: Units,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic model and a measurement spec for it.
    GenModel(GenModelArgs),
    /// Fit the measurements-to-coefficients regressor.
    Fit(FitArgs),
    /// Measure a body.
    Measure(BetaArgs),
    /// Apply measurement offsets to a base body and export the meshes.
    Offset(OffsetArgs),
    /// Fuse measurement distributions from several observations.
    Fuse(FuseArgs),
    /// Local-offset and reconstruction evaluations.
    Eval {
        #[command(subcommand)]
        which: EvalCommand,
    },
    /// Export a body as OBJ, optionally with a vertex variance field.
    Export(ExportArgs),
    /// Write the 23-slot SMPL spec template with placeholder anchors.
    SpecTemplate,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    Local(LocalArgs),
    Recon(ReconArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    BodyLike,
    RandomSmooth,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::BodyLike => Profile::BodyLike,
            ProfileArg::RandomSmooth => Profile::RandomSmooth,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpecKind {
    /// Body spec for body-like models, mixed otherwise.
    Default,
    /// Random distances, circumferences and axis differences.
    Mixed,
    /// Axis differences only; exactly linear in the coefficients.
    AxisDifference,
}

#[derive(Args, Debug)]
struct GenModelArgs {
    #[arg(long)]
    vertices: usize,
    #[arg(long)]
    coeffs: usize,
    #[arg(long, value_enum, default_value_t = ProfileArg::BodyLike)]
    profile: ProfileArg,
    #[arg(long, value_enum, default_value_t = SpecKind::Default)]
    spec_kind: SpecKind,
    /// Measurement count for generated mixed and axis-difference specs.
    #[arg(long, default_value_t = 23)]
    measurements: usize,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Number of sampled bodies L.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 1.25)]
    coeff_stddev: f64,
    #[arg(long, default_value_t = 1e-10)]
    rank_tolerance: f64,
}

#[derive(Args, Debug)]
struct BetaArgs {
    /// JSON file with shape coefficients (array, or object with "beta").
    #[arg(long)]
    beta: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OffsetArgs {
    #[command(flatten)]
    base: BetaArgs,
    /// `name=value` in `--units`, repeatable.
    #[arg(long = "measure", value_name = "NAME=VALUE")]
    measures: Vec<String>,
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Observation file (means in mm, variances in mm²).
    #[arg(long)]
    observations: PathBuf,
    #[command(flatten)]
    covariance: CovarianceArgs,
}

#[derive(Args, Debug)]
struct CovarianceArgs {
    /// Build the dense vertex covariance instead of only its diagonal.
    #[arg(long)]
    full_covariance: bool,
    #[arg(long, default_value_t = semshape::gaussian::DEFAULT_MAX_FULL_VERTICES)]
    max_full_vertices: usize,
}

impl CovarianceArgs {
    fn mode(&self) -> CovarianceMode {
        if self.full_covariance {
            CovarianceMode::Full {
                max_vertices: self.max_full_vertices,
            }
        } else {
            CovarianceMode::Lazy
        }
    }
}

#[derive(Args, Debug)]
struct LocalArgs {
    /// `name=value` in `--units`, repeatable. Defaults to +50 mm on
    /// chest_width, stomach_depth and calf_length when the spec has them,
    /// otherwise on every slot.
    #[arg(long = "probe", value_name = "NAME=VALUE")]
    probes: Vec<String>,
}

#[derive(Args, Debug)]
struct ReconArgs {
    #[arg(long, default_value_t = 100_000)]
    bodies: usize,
    #[arg(long, default_value_t = 1.25)]
    coeff_stddev: f64,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    base: BetaArgs,
    /// Observations whose fused distribution supplies a vertex variance field.
    #[arg(long)]
    observations: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Component::Total)]
    component: Component,
    #[command(flatten)]
    covariance: CovarianceArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Component {
    X,
    Y,
    Z,
    Total,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("usage error: cannot configure {} threads: {e}", cli.threads);
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semshape: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    ensure_dir(&cli.out)?;
    match &cli.command {
        Command::GenModel(a) => gen_model(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Measure(a) => measure_cmd(cli, a),
        Command::Offset(a) => offset(cli, a),
        Command::Fuse(a) => fuse_cmd(cli, a),
        Command::Eval { which } => match which {
            EvalCommand::Local(a) => eval_local(cli, a),
            EvalCommand::Recon(a) => eval_recon(cli, a),
        },
        Command::Export(a) => export(cli, a),
        Command::SpecTemplate => {
            let path = out_path(&cli.out, "smpl_spec_template.json");
            smpl_spec_template().save(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| usage(format!("--{flag} is required for this command")))
}

fn load_model_spec(cli: &Cli) -> CliResult<(LinearShapeModel, MeasurementSpec)> {
    let model = load_model(required(&cli.model, "model")?)?;
    let spec = MeasurementSpec::load(required(&cli.spec, "spec")?)?;
    spec.check_against(&model)?;
    Ok((model, spec))
}

fn load_all(cli: &Cli) -> CliResult<(LinearShapeModel, MeasurementSpec, MeasurementRegressor)> {
    let (model, spec) = load_model_spec(cli)?;
    let reg = MeasurementRegressor::load(required(&cli.regressor, "regressor")?)?;
    reg.check_compatible(&model, &spec)?;
    Ok((model, spec, reg))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BetaFile {
    Plain(Vec<f64>),
    Wrapped { beta: Vec<f64> },
}

fn load_beta(path: Option<&Path>, model: &LinearShapeModel) -> CliResult<DVector<f64>> {
    let Some(path) = path else {
        return Ok(DVector::zeros(model.num_coeffs()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| semshape::Error::io(path, e))?;
    let parsed: BetaFile = serde_json::from_str(&text).map_err(|e| semshape::Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let v = match parsed {
        BetaFile::Plain(v) | BetaFile::Wrapped { beta: v } => v,
    };
    let beta = DVector::from_vec(v);
    model.check_beta(&beta)?;
    Ok(beta)
}

/// Parses `name=value` pairs into `(slot, metres)`.
fn parse_offsets(
    spec: &MeasurementSpec,
    items: &[String],
    units: Units,
) -> CliResult<Vec<(usize, f64)>> {
    items
        .iter()
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| usage(format!("expected NAME=VALUE, got {item:?}")))?;
            let slot = spec.output_index(name.trim()).ok_or_else(|| {
                usage(format!(
                    "unknown measurement {:?}; valid names: {}",
                    name.trim(),
                    spec.output_names().join(", ")
                ))
            })?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| usage(format!("invalid number {value:?} in {item:?}")))?;
            if !v.is_finite() {
                return Err(usage(format!("offset in {item:?} must be finite")));
            }
            Ok((slot, v / units.scale()))
        })
        .collect()
}

fn gen_model(cli: &Cli, a: &GenModelArgs) -> CliResult<()> {
    let timer = Timer::start();
    if a.vertices < 8 {
        return Err(usage("--vertices must be at least 8"));
    }
    if a.coeffs == 0 {
        return Err(usage("--coeffs must be at least 1"));
    }
    if a.measurements == 0 {
        return Err(usage("--measurements must be at least 1"));
    }
    let profile: Profile = a.profile.into();
    let model = generate_synthetic_model(cli.seed, a.vertices, a.coeffs, profile)?;
    let spec = match a.spec_kind {
        SpecKind::Default => default_spec_for(profile, a.vertices, cli.seed)?,
        SpecKind::Mixed => random_mixed_spec(a.vertices, a.measurements, cli.seed)?,
        SpecKind::AxisDifference => axis_difference_spec(a.vertices, a.measurements, cli.seed)?,
    };
    let model_path = cli
        .model
        .clone()
        .unwrap_or_else(|| out_path(&cli.out, "model.json"));
    let spec_path = cli
        .spec
        .clone()
        .unwrap_or_else(|| out_path(&cli.out, "spec.json"));
    save_model(&model, &model_path)?;
    spec.save(&spec_path)?;
    let provenance = json!({
        "tool": "semshape",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.seed,
        "profile": profile.to_string(),
        "num_vertices": a.vertices,
        "num_coeffs": a.coeffs,
        "num_joints": model.num_joints(),
        "spec_kind": format!("{:?}", a.spec_kind).to_lowercase(),
        "num_measurements": spec.num_outputs(),
        "model": model_path.file_name().map(|s| s.to_string_lossy().into_owned()),
        "spec": spec_path.file_name().map(|s| s.to_string_lossy().into_owned()),
    });
    write_report(&out_path(&cli.out, "provenance.json"), provenance, &timer)?;
    println!(
        "wrote {} ({} vertices, {} coefficients) and {} ({} measurements)",
        model_path.display(),
        a.vertices,
        a.coeffs,
        spec_path.display(),
        spec.num_outputs()
    );
    Ok(())
}

fn fit(cli: &Cli, a: &FitArgs) -> CliResult<()> {
    let timer = Timer::start();
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    if !(a.coeff_stddev > 0.0 && a.coeff_stddev.is_finite()) {
        return Err(usage("--coeff-stddev must be positive"));
    }
    if !(a.rank_tolerance >= 0.0 && a.rank_tolerance < 1.0) {
        return Err(usage("--rank-tolerance must lie in [0, 1)"));
    }
    let (model, spec) = load_model_spec(cli)?;
    let config = FitConfig {
        num_samples: a.samples,
        coeff_stddev: a.coeff_stddev,
        rank_tolerance: a.rank_tolerance,
        seed: cli.seed,
        ..FitConfig::default()
    };
    let reg = fit_regressor(&model, &spec, &config)?;
    let reg_path = cli
        .regressor
        .clone()
        .unwrap_or_else(|| out_path(&cli.out, "regressor.json"));
    reg.save(&reg_path)?;
    let meta = reg.meta();
    for w in &meta.warnings {
        eprintln!("warning: {w}");
    }
    let report = json!({
        "num_samples": meta.num_samples,
        "num_measurements": reg.num_measurements(),
        "num_coeffs": reg.num_coeffs(),
        "sampling_stddev": meta.sampling_stddev,
        "rank_tolerance": meta.rank_tolerance,
        "seed": meta.seed,
        "rank": meta.rank,
        "rank_deficient": meta.rank_deficient(),
        "singular_values": meta.singular_values,
        "residual_norm": meta.residual_norm,
        "warnings": meta.warnings,
        "regressor": reg_path.file_name().map(|s| s.to_string_lossy().into_owned()),
    });
    write_report(&out_path(&cli.out, "fit_report.json"), report, &timer)?;
    println!(
        "fitted {}x{} regressor from {} samples, rank {}",
        reg.num_measurements(),
        reg.num_coeffs(),
        meta.num_samples,
        meta.rank
    );
    Ok(())
}

fn measure_cmd(cli: &Cli, a: &BetaArgs) -> CliResult<()> {
    let timer = Timer::start();
    let (model, spec) = load_model_spec(cli)?;
    let beta = load_beta(a.beta.as_deref(), &model)?;
    let m = measure(&model, &spec, &beta)?;
    let u = cli.units;
    let mut csv = format!("measurement,{}\n", u.key("value"));
    let mut rows = Vec::new();
    for (name, v) in spec.output_names().iter().zip(m.iter()) {
        csv += &format!("{name},{}\n", v * u.scale());
        rows.push(json!({ "name": name, u.key("value"): v * u.scale() }));
        println!("{name:32} {:>12.4} {}", v * u.scale(), u.suffix());
    }
    write_text(&out_path(&cli.out, "measurements.csv"), &csv)?;
    write_report(
        &out_path(&cli.out, "measurements.json"),
        json!({ "measurements": rows }),
        &timer,
    )
}

fn safe_name(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn offset(cli: &Cli, a: &OffsetArgs) -> CliResult<()> {
    let timer = Timer::start();
    let (model, spec, reg) = load_all(cli)?;
    let offsets = parse_offsets(&spec, &a.measures, cli.units)?;
    let base = load_beta(a.base.beta.as_deref(), &model)?;
    export_obj(
        &model.shape_to_vertices(&base)?,
        out_path(&cli.out, "base.obj"),
        None,
    )?;
    let u = cli.units;
    let k = spec.num_outputs();
    let mut csv = format!(
        "input,measurement,{},{}\n",
        u.key("requested"),
        u.key("achieved")
    );
    let mut probes = Vec::new();
    for &(slot, delta) in &offsets {
        let mut dm = DVector::zeros(k);
        dm[slot] = delta;
        let (new_beta, achieved) = apply_measurement_offset(&model, &spec, &reg, &base, &dm)?;
        let input = &spec.output_names()[slot];
        let mesh_name = format!("offset_{}.obj", safe_name(input));
        export_obj(
            &model.shape_to_vertices(&new_beta)?,
            out_path(&cli.out, &mesh_name),
            None,
        )?;
        for (i, name) in spec.output_names().iter().enumerate() {
            csv += &format!(
                "{input},{name},{},{}\n",
                dm[i] * u.scale(),
                achieved[i] * u.scale()
            );
        }
        println!(
            "{input}: requested {:+.3} {s}, achieved {:+.3} {s}",
            delta * u.scale(),
            achieved[slot] * u.scale(),
            s = u.suffix()
        );
        probes.push(json!({
            "input": input,
            u.key("requested"): delta * u.scale(),
            u.key("achieved_on_target"): achieved[slot] * u.scale(),
            u.key("achieved"): achieved.iter().map(|v| v * u.scale()).collect::<Vec<_>>(),
            "beta": new_beta.as_slice(),
            "mesh": mesh_name,
        }));
    }
    write_text(&out_path(&cli.out, "offsets.csv"), &csv)?;
    write_report(
        &out_path(&cli.out, "offsets.json"),
        json!({
            "output_names": spec.output_names(),
            "base_beta": base.as_slice(),
            "offsets": probes,
        }),
        &timer,
    )
}

fn variance_csv(vg: &VertexGaussian, units: Units) -> CliResult<String> {
    let field = directional_vertex_variance(vg)?;
    let s2 = units.scale() * units.scale();
    let mut csv = format!(
        "vertex_index,{},{},{}\n",
        units.var_key("var_x"),
        units.var_key("var_y"),
        units.var_key("var_z")
    );
    for (i, row) in field.row_iter().enumerate() {
        csv += &format!("{i},{},{},{}\n", row[0] * s2, row[1] * s2, row[2] * s2);
    }
    Ok(csv)
}

fn slot_json(s: &semshape::fusion::SlotFusion, u: Units) -> Value {
    json!({
        "name": s.name,
        u.key("fused_mean"): s.fused_mean,
        u.var_key("fused_variance"): s.fused_variance,
        u.key("naive_mean"): s.naive_mean,
        u.var_key("naive_variance"): s.naive_variance,
        u.key("observation_means"): s.observation_means,
        u.var_key("observation_variances"): s.observation_variances,
    })
}

fn fuse_cmd(cli: &Cli, a: &FuseArgs) -> CliResult<()> {
    let timer = Timer::start();
    let (model, spec, reg) = load_all(cli)?;
    let observations = load_observations(&a.observations)?;
    let fused = fuse(&observations)?;
    let naive = naive_average(&observations)?;
    let estimate = fused_shape_estimate(&model, &spec, &reg, &observations)?;
    let u = cli.units;
    let fr = FusionReport::new(
        spec.output_names(),
        &observations,
        &fused,
        &naive,
        u.scale(),
        u.suffix(),
    );
    export_obj(&estimate.mesh, out_path(&cli.out, "fused.obj"), None)?;
    let vg = propagate_to_vertices(
        &model,
        &propagate_to_coeffs(&reg, &fused)?,
        a.covariance.mode(),
    )?;
    write_text(
        &out_path(&cli.out, "fused_variance.csv"),
        &variance_csv(&vg, u)?,
    )?;
    let estimate_rows: Vec<Value> = spec
        .output_names()
        .iter()
        .zip(estimate.measurement_estimate.iter())
        .map(|(n, v)| json!({ "name": n, u.key("value"): v * u.scale() }))
        .collect();
    write_report(
        &out_path(&cli.out, "fusion_report.json"),
        json!({
            "observation_ids": fr.observation_ids,
            "slots": fr.slots.iter().map(|s| slot_json(s, u)).collect::<Vec<_>>(),
            "beta_hat": estimate.beta_hat.as_slice(),
            "measurement_estimate": estimate_rows,
            "mesh": "fused.obj",
            "variance_field": "fused_variance.csv",
        }),
        &timer,
    )?;
    println!(
        "fused {} observations over {} measurements",
        observations.len(),
        fused.len()
    );
    Ok(())
}

fn default_probes(spec: &MeasurementSpec) -> Vec<(usize, f64)> {
    let table: Option<Vec<usize>> = ["chest_width", "stomach_depth", "calf_length"]
        .iter()
        .map(|n| spec.output_index(n))
        .collect();
    table
        .unwrap_or_else(|| (0..spec.num_outputs()).collect())
        .into_iter()
        .map(|slot| (slot, 0.05))
        .collect()
}

fn local_json(rep: &LocalOffsetReport, u: Units) -> Value {
    let probes: Vec<Value> = rep
        .probes
        .iter()
        .map(|p| {
            json!({
                "input": p.name,
                u.key("requested"): p.requested_mm * 1e-3 * u.scale(),
                u.key("on_target"): p.on_target_mm() * 1e-3 * u.scale(),
                u.key("achieved"): p.achieved_mm.iter().map(|v| v * 1e-3 * u.scale()).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "output_names": rep.output_names,
        "probes": probes,
        u.key("mean_leakage"): rep.mean_leakage_mm() * 1e-3 * u.scale(),
    })
}

fn eval_local(cli: &Cli, a: &LocalArgs) -> CliResult<()> {
    let timer = Timer::start();
    let (model, spec, reg) = load_all(cli)?;
    let probes = if a.probes.is_empty() {
        default_probes(&spec)
    } else {
        parse_offsets(&spec, &a.probes, cli.units)?
    };
    let rep = eval_local_offsets(&model, &spec, &reg, &probes)?;
    let u = cli.units;
    let scale = 1e-3 * u.scale();
    write_text(
        &out_path(&cli.out, "eval_local.csv"),
        &rep.to_csv(scale, u.suffix()),
    )?;
    write_report(
        &out_path(&cli.out, "eval_local.json"),
        local_json(&rep, u),
        &timer,
    )?;
    for p in &rep.probes {
        println!(
            "{}: requested {:+.2} {s}, on-target {:+.2} {s}",
            p.name,
            p.requested_mm * scale,
            p.on_target_mm() * scale,
            s = u.suffix()
        );
    }
    println!(
        "mean leakage {:.3} {}",
        rep.mean_leakage_mm() * scale,
        u.suffix()
    );
    Ok(())
}

fn eval_recon(cli: &Cli, a: &ReconArgs) -> CliResult<()> {
    let timer = Timer::start();
    if a.bodies == 0 {
        return Err(usage("--bodies must be at least 1"));
    }
    if !(a.coeff_stddev > 0.0 && a.coeff_stddev.is_finite()) {
        return Err(usage("--coeff-stddev must be positive"));
    }
    let (model, spec, reg) = load_all(cli)?;
    let rep = eval_reconstruction(&model, &spec, &reg, a.bodies, a.coeff_stddev, cli.seed)?;
    let u = cli.units;
    let scale = 1e-3 * u.scale();
    let mae = rep.meas_mae_mm * scale;
    let pve = rep.pve_t_mm * scale;
    write_text(
        &out_path(&cli.out, "eval_recon.csv"),
        &format!(
            "num_coeffs,num_bodies,{},{}\n{},{},{mae},{pve}\n",
            u.key("meas_mae"),
            u.key("pve_t"),
            model.num_coeffs(),
            rep.num_bodies
        ),
    )?;
    write_report(
        &out_path(&cli.out, "eval_recon.json"),
        json!({
            "num_coeffs": model.num_coeffs(),
            "num_bodies": rep.num_bodies,
            "coeff_stddev": rep.coeff_stddev,
            "seed": rep.seed,
            u.key("meas_mae"): mae,
            u.key("pve_t"): pve,
        }),
        &timer,
    )?;
    println!(
        "meas MAE {mae:.6} {s}, PVE-T {pve:.6} {s} over {} bodies",
        rep.num_bodies,
        s = u.suffix()
    );
    Ok(())
}

fn export(cli: &Cli, a: &ExportArgs) -> CliResult<()> {
    let model = load_model(required(&cli.model, "model")?)?;
    let path = out_path(&cli.out, "export.obj");
    let Some(obs_path) = &a.observations else {
        let beta = load_beta(a.base.beta.as_deref(), &model)?;
        export_obj(&model.shape_to_vertices(&beta)?, &path, None)?;
        println!("wrote {}", path.display());
        return Ok(());
    };
    let spec = MeasurementSpec::load(required(&cli.spec, "spec")?)?;
    spec.check_against(&model)?;
    let reg = MeasurementRegressor::load(required(&cli.regressor, "regressor")?)?;
    reg.check_compatible(&model, &spec)?;
    let fused = fuse(&load_observations(obs_path)?)?;
    let g = propagate_to_coeffs(&reg, &fused)?;
    let beta = match &a.base.beta {
        Some(p) => load_beta(Some(p), &model)?,
        None => g.mean().clone(),
    };
    let vg = propagate_to_vertices(&model, &g, a.covariance.mode())?;
    let field = directional_vertex_variance(&vg)?;
    let s2 = cli.units.scale() * cli.units.scale();
    let scalars: Vec<f64> = field
        .row_iter()
        .map(|r| {
            s2 * match a.component {
                Component::X => r[0],
                Component::Y => r[1],
                Component::Z => r[2],
                Component::Total => r[0] + r[1] + r[2],
            }
        })
        .collect();
    export_obj(&model.shape_to_vertices(&beta)?, &path, Some(&scalars))?;
    println!(
        "wrote {} with {:?} variance in {}2",
        path.display(),
        a.component,
        cli.units.suffix()
    );
    Ok(())
}
