//! The subcommands: argument sets, config-file merging, and the work.
//!
//! Every command takes an optional `--config <json>` whose keys mirror
//! the flags; explicit flags win. The fully resolved configuration is
//! echoed in the JSON report printed to stdout, so a run can be audited
//! and replayed from its output alone.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lfrecon::arfit::{
    estimate_blocks, estimate_blocks_with_ridge, lag_covariances, truncation_residual_check,
    BlockEstimates, TruncationCheck,
};
use lfrecon::evaluate::{evaluate_multi, evaluate_single, MultiEvalReport, SingleEvalReport};
use lfrecon::io::{
    load_json, parse_trajectory_binary, parse_trajectory_csv, save_json, save_trajectory_binary,
    save_trajectory_csv, TRAJECTORY_MAGIC,
};
use lfrecon::multi::{check_assumptions, recover_multi, MultiLeaderRecovery, MultiRecoveryOptions};
use lfrecon::network::{
    assemble, check_stability, generate_paper_network, DynamicsMatrix, GenerateParams, NetworkSpec,
};
use lfrecon::pipeline::{convergence_sweep, PipelineConfig, PipelineSeeds, SweepConfig};
use lfrecon::simulate::{follower_variances, run, RunParams, Trajectory};
use lfrecon::single::{recover_single, SingleLeaderRecovery};
use lfrecon::threshold::ThresholdRule;
use lfrecon::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::svg;

// ---------------------------------------------------------------------------
// shared plumbing

fn load_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load_json(p),
        None => Ok(T::default()),
    }
}

fn print_report<T: Serialize>(report: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::InvalidParameter(format!("{what} must be given, as a flag or in the config file"))
    })
}

/// Read a trajectory file in either supported format, told apart by the
/// leading magic of the binary layout.
fn load_trajectory_any(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path)?;
    if bytes.len() >= TRAJECTORY_MAGIC.len()
        && &bytes[..TRAJECTORY_MAGIC.len()] == TRAJECTORY_MAGIC
    {
        parse_trajectory_binary(&bytes)
    } else {
        parse_trajectory_csv(&bytes)
    }
}

fn threshold_rule(relative: Option<f64>, absolute: Option<f64>) -> Result<ThresholdRule> {
    let rule = match (relative, absolute) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter(
                "pass either a relative or an absolute threshold, not both".into(),
            ))
        }
        (None, Some(a)) => ThresholdRule::Absolute(a),
        (Some(f), None) => ThresholdRule::Relative(f),
        (None, None) => ThresholdRule::default(),
    };
    rule.validate()?;
    Ok(rule)
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryFormat {
    Csv,
    Binary,
}

impl TrajectoryFormat {
    fn default_out(self) -> &'static str {
        match self {
            TrajectoryFormat::Csv => "trajectory.csv",
            TrajectoryFormat::Binary => "trajectory.bin",
        }
    }

    fn save(self, traj: &Trajectory, path: &Path) -> Result<()> {
        match self {
            TrajectoryFormat::Csv => save_trajectory_csv(traj, path),
            TrajectoryFormat::Binary => save_trajectory_binary(traj, path),
        }
    }
}

/// What `reconstruct` writes: the fitted blocks plus whichever recovery
/// ran, self-describing enough for `evaluate` to consume.
#[derive(Serialize, Deserialize)]
pub struct ReconstructionFile {
    pub mode: String,
    pub n_lags: usize,
    pub threshold: ThresholdRule,
    pub estimates: BlockEstimates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleLeaderRecovery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi: Option<MultiLeaderRecovery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationCheck>,
}

/// What `evaluate` writes.
#[derive(Serialize, Deserialize)]
pub struct EvalFile {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleEvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi: Option<MultiEvalReport>,
}

#[derive(Serialize)]
struct ScatterRow {
    block: String,
    row: usize,
    col: usize,
    #[serde(rename = "true")]
    truth: f64,
    estimated: f64,
}

fn matrix_scatter(
    rows: &mut Vec<ScatterRow>,
    block: &str,
    truth: &nalgebra::DMatrix<f64>,
    est: &nalgebra::DMatrix<f64>,
) {
    for i in 0..truth.nrows() {
        for j in 0..truth.ncols() {
            rows.push(ScatterRow {
                block: block.to_string(),
                row: i,
                col: j,
                truth: truth[(i, j)],
                estimated: est[(i, j)],
            });
        }
    }
}

fn scatter_rows_single(
    dm: &DynamicsMatrix,
    alphas: &[f64],
    est: &BlockEstimates,
    rec: &SingleLeaderRecovery,
) -> Vec<ScatterRow> {
    let mut rows = Vec::new();
    matrix_scatter(&mut rows, "B", dm.b(), est.b_hat());
    matrix_scatter(&mut rows, "CD", &dm.cd(), est.cd_hat());
    matrix_scatter(&mut rows, "CED", &dm.ced(), est.ced_hat());
    for i in 0..rec.c_hat.len() {
        rows.push(ScatterRow {
            block: "C".into(),
            row: i,
            col: 0,
            truth: dm.c()[(i, 0)],
            estimated: rec.c_hat[i],
        });
    }
    for j in 0..rec.d_hat.len() {
        rows.push(ScatterRow {
            block: "D".into(),
            row: 0,
            col: j,
            truth: dm.d()[(0, j)],
            estimated: rec.d_hat[j],
        });
    }
    rows.push(ScatterRow {
        block: "E".into(),
        row: 0,
        col: 0,
        truth: dm.e()[(0, 0)],
        estimated: rec.e_hat.value,
    });
    rows.push(ScatterRow {
        block: "alpha".into(),
        row: 0,
        col: 0,
        truth: alphas[0],
        estimated: rec.alpha_hat,
    });
    rows
}

fn scatter_rows_multi(
    dm: &DynamicsMatrix,
    alphas: &[f64],
    est: &BlockEstimates,
    rec: &MultiLeaderRecovery,
    eval: &MultiEvalReport,
) -> Vec<ScatterRow> {
    let mut rows = Vec::new();
    matrix_scatter(&mut rows, "B", dm.b(), est.b_hat());
    matrix_scatter(&mut rows, "CD", &dm.cd(), est.cd_hat());
    matrix_scatter(&mut rows, "CED", &dm.ced(), est.ced_hat());
    for (k, assigned) in eval.assignment.iter().enumerate() {
        let Some(a) = assigned else { continue };
        for i in 0..rec.c_hat.nrows() {
            rows.push(ScatterRow {
                block: "C".into(),
                row: i,
                col: k,
                truth: dm.c()[(i, k)],
                estimated: rec.c_hat[(i, *a)],
            });
        }
        rows.push(ScatterRow {
            block: "E".into(),
            row: k,
            col: k,
            truth: dm.e()[(k, k)],
            estimated: rec.e_diag[*a],
        });
        rows.push(ScatterRow {
            block: "alpha".into(),
            row: k,
            col: 0,
            truth: alphas[k],
            estimated: rec.alpha_hat[*a],
        });
    }
    rows
}

fn write_scatter_csv(rows: &[ScatterRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_scatter_svg(rows: &[ScatterRow], path: &Path) -> Result<()> {
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for row in rows {
        match groups.iter_mut().find(|(name, _)| *name == row.block) {
            Some((_, points)) => points.push((row.truth, row.estimated)),
            None => groups.push((row.block.clone(), vec![(row.truth, row.estimated)])),
        }
    }
    fs::write(path, svg::scatter_svg(&groups))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

#[derive(Args)]
pub struct GenerateArgs {
    /// JSON file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observed agent count
    #[arg(long)]
    followers: Option<usize>,
    /// Hidden agent count
    #[arg(long)]
    leaders: Option<usize>,
    /// Uniform weight draws at or below this threshold are dropped
    #[arg(long)]
    keep_threshold: Option<f64>,
    /// One pull value shared by every leader
    #[arg(long, conflicts_with = "alphas")]
    alpha: Option<f64>,
    /// Per-leader pull values, comma separated
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Overwrite leader rows so leader-follower coupling is symmetric
    #[arg(long)]
    symmetric_leaders: bool,
    /// Follower noise amplitude, uniform across followers
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rejected-draw budget before generation gives up
    #[arg(long)]
    max_retries: Option<usize>,
    /// Keep draws whose dynamics is unstable
    #[arg(long)]
    allow_unstable: bool,
    /// Output path for the network JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateFile {
    followers: Option<usize>,
    leaders: Option<usize>,
    keep_threshold: Option<f64>,
    alpha: Option<f64>,
    alphas: Option<Vec<f64>>,
    symmetric_leaders: Option<bool>,
    noise_std: Option<f64>,
    seed: Option<u64>,
    max_retries: Option<usize>,
    allow_unstable: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenerateEffective {
    followers: usize,
    leaders: usize,
    keep_threshold: f64,
    alphas: Vec<f64>,
    symmetric_leaders: bool,
    noise_std: f64,
    seed: u64,
    max_retries: usize,
    allow_unstable: bool,
    out: PathBuf,
}

#[derive(Serialize)]
struct AssumptionEcho {
    satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

#[derive(Serialize)]
struct GenerateReport {
    command: &'static str,
    config: GenerateEffective,
    spectral_radius: f64,
    stable: bool,
    retries_used: Option<usize>,
    /// Present when the draw has two or more leaders: whether it
    /// satisfies the structure the multi-leader recovery assumes.
    #[serde(skip_serializing_if = "Option::is_none")]
    multi_assumptions: Option<AssumptionEcho>,
}

fn resolve_alphas(
    uniform: Option<f64>,
    per_leader: Option<Vec<f64>>,
    n_leaders: usize,
) -> Result<Vec<f64>> {
    match (uniform, per_leader) {
        (Some(_), Some(_)) => Err(Error::InvalidParameter(
            "pass either one shared pull or a per-leader list, not both".into(),
        )),
        (_, Some(list)) => Ok(list),
        (Some(a), None) => Ok(vec![a; n_leaders]),
        (None, None) => Ok(vec![0.0; n_leaders]),
    }
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let file: GenerateFile = load_file(args.config.as_deref())?;
    let followers = require(args.followers.or(file.followers), "--followers")?;
    let leaders = args.leaders.or(file.leaders).unwrap_or(1);
    let keep_threshold = args.keep_threshold.or(file.keep_threshold).unwrap_or(0.6);
    let alphas = resolve_alphas(
        args.alpha.or(file.alpha),
        args.alphas.or(file.alphas),
        leaders,
    )?;
    let noise_std = args
        .noise_std
        .or(file.noise_std)
        .unwrap_or(lfrecon::network::DEFAULT_NOISE_STD);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let max_retries = args
        .max_retries
        .or(file.max_retries)
        .unwrap_or(lfrecon::network::DEFAULT_MAX_RETRIES);
    let allow_unstable = args.allow_unstable || file.allow_unstable.unwrap_or(false);
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("network.json"));

    let params = GenerateParams {
        symmetric_leader_coupling: args.symmetric_leaders || file.symmetric_leaders.unwrap_or(false),
        alphas: Some(alphas.clone()),
        noise_std: Some(vec![noise_std; followers]),
        max_retries,
        require_stable: !allow_unstable,
        ..GenerateParams::new(followers, leaders, keep_threshold)
    };
    let spec = generate_paper_network(&params, seed)?;
    let stability = check_stability(&assemble(&spec), params.stability_margin);
    let multi_assumptions = (leaders >= 2).then(|| match check_assumptions(&spec) {
        Ok(()) => AssumptionEcho {
            satisfied: true,
            detail: None,
        },
        Err(e) => AssumptionEcho {
            satisfied: false,
            detail: Some(e.to_string()),
        },
    });
    save_json(&spec, &out)?;

    print_report(&GenerateReport {
        command: "generate",
        config: GenerateEffective {
            followers,
            leaders,
            keep_threshold,
            alphas,
            symmetric_leaders: params.symmetric_leader_coupling,
            noise_std,
            seed,
            max_retries,
            allow_unstable,
            out,
        },
        spectral_radius: stability.spectral_radius,
        stable: stability.stable,
        retries_used: spec.recipe().map(|r| r.retries_used),
        multi_assumptions,
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network JSON produced by generate
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Recorded steps
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Steps run and discarded before recording starts
    #[arg(long)]
    burn_in: Option<usize>,
    /// Integrate even when the dynamics is unstable
    #[arg(long)]
    force: bool,
    #[arg(long, value_enum)]
    format: Option<TrajectoryFormat>,
    /// Output path for the follower time series
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateFile {
    spec: Option<PathBuf>,
    steps: Option<usize>,
    seed: Option<u64>,
    burn_in: Option<usize>,
    force: Option<bool>,
    format: Option<TrajectoryFormat>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateEffective {
    spec: PathBuf,
    steps: usize,
    seed: u64,
    burn_in: usize,
    force: bool,
    format: TrajectoryFormat,
    out: PathBuf,
}

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    config: SimulateEffective,
    follower_variances: Vec<f64>,
    mean_follower_variance: f64,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let file: SimulateFile = load_file(args.config.as_deref())?;
    let spec_path = require(args.spec.or(file.spec), "--spec")?;
    let steps = require(args.steps.or(file.steps), "--steps")?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let burn_in = args.burn_in.or(file.burn_in).unwrap_or(0);
    let force = args.force || file.force.unwrap_or(false);
    let format = args.format.or(file.format).unwrap_or(TrajectoryFormat::Csv);
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from(format.default_out()));

    let spec: NetworkSpec = load_json(&spec_path)?;
    let params = RunParams {
        burn_in,
        force,
        ..RunParams::new(steps)
    };
    let traj = run(&spec, &params, seed)?;
    format.save(&traj, &out)?;
    let follower_variances = follower_variances(&traj);
    let mean = follower_variances.iter().sum::<f64>() / follower_variances.len().max(1) as f64;

    print_report(&SimulateReport {
        command: "simulate",
        config: SimulateEffective {
            spec: spec_path,
            steps,
            seed,
            burn_in,
            force,
            format,
            out,
        },
        follower_variances,
        mean_follower_variance: mean,
    })
}

// ---------------------------------------------------------------------------
// reconstruct

#[derive(Args)]
pub struct ReconstructArgs {
    /// JSON file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trajectory file, CSV or binary (told apart by content)
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Fitted lag count; lags beyond 3 feed the truncation diagnostic
    #[arg(long)]
    lags: Option<usize>,
    /// Hidden-leader count: 1 selects the single-leader recovery, 2 or
    /// more pins the cluster count, absent lets the clusters decide
    #[arg(long)]
    leaders: Option<usize>,
    /// Support threshold as a fraction of the largest magnitude
    #[arg(long)]
    threshold: Option<f64>,
    /// Support threshold as an absolute magnitude
    #[arg(long, conflicts_with = "threshold")]
    absolute_threshold: Option<f64>,
    /// Cosine slack when clustering lag-1 columns
    #[arg(long)]
    dependence_tol: Option<f64>,
    /// Add an automatically sized diagonal ridge to the moment matrix
    #[arg(long)]
    ridge: bool,
    /// Add a diagonal ridge with this strength to the moment matrix
    #[arg(long, conflicts_with = "ridge")]
    ridge_lambda: Option<f64>,
    /// Output path for the reconstruction JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReconstructFile {
    trajectory: Option<PathBuf>,
    lags: Option<usize>,
    leaders: Option<usize>,
    threshold: Option<f64>,
    absolute_threshold: Option<f64>,
    dependence_tol: Option<f64>,
    ridge: Option<bool>,
    ridge_lambda: Option<f64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReconstructEffective {
    trajectory: PathBuf,
    lags: usize,
    leaders: Option<usize>,
    threshold: ThresholdRule,
    dependence_tol: f64,
    ridge: bool,
    ridge_lambda: Option<f64>,
    out: PathBuf,
}

#[derive(Serialize)]
struct ReconstructReport {
    command: &'static str,
    config: ReconstructEffective,
    mode: String,
    condition_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_leaders_found: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

pub fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let file: ReconstructFile = load_file(args.config.as_deref())?;
    let trajectory = require(args.trajectory.or(file.trajectory), "--trajectory")?;
    let lags = args.lags.or(file.lags).unwrap_or(3);
    let leaders = args.leaders.or(file.leaders);
    let rule = threshold_rule(
        args.threshold.or(file.threshold),
        args.absolute_threshold.or(file.absolute_threshold),
    )?;
    let dependence_tol = args
        .dependence_tol
        .or(file.dependence_tol)
        .unwrap_or(lfrecon::multi::DEFAULT_DEPENDENCE_TOL);
    let ridge = args.ridge || file.ridge.unwrap_or(false);
    let ridge_lambda = args.ridge_lambda.or(file.ridge_lambda);
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("reconstruction.json"));

    if leaders == Some(0) {
        return Err(Error::InvalidParameter(
            "reconstruction needs at least one hidden leader; \
             a leaderless fit is just the visible block"
                .into(),
        ));
    }

    let traj = load_trajectory_any(&trajectory)?;
    let cov = lag_covariances(&traj, lags)?;
    let est = if ridge || ridge_lambda.is_some() {
        estimate_blocks_with_ridge(&cov, ridge_lambda)?
    } else {
        estimate_blocks(&cov)?
    };

    let mut single = None;
    let mut multi = None;
    let mode;
    let mut report_e = None;
    let mut report_alpha = None;
    let mut found = None;
    let mut warnings = Vec::new();
    let e_magnitude;
    if leaders == Some(1) {
        let rec = recover_single(&est, &rule)?;
        mode = "single";
        report_e = Some(rec.e_hat.value);
        report_alpha = Some(rec.alpha_hat);
        e_magnitude = rec.e_hat.value.abs();
        single = Some(rec);
    } else {
        let options = MultiRecoveryOptions {
            clamp_threshold: rule,
            dependence_tol,
            n_leaders: leaders,
            ..MultiRecoveryOptions::default()
        };
        let rec = recover_multi(&est, &options)?;
        mode = "multi";
        found = Some(rec.n_leaders());
        warnings = rec.warnings.clone();
        e_magnitude = rec.e_diag.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        multi = Some(rec);
    }
    let truncation = if lags >= 4 {
        Some(truncation_residual_check(&est, e_magnitude)?)
    } else {
        None
    };

    let condition_estimate = est.condition_estimate();
    save_json(
        &ReconstructionFile {
            mode: mode.into(),
            n_lags: lags,
            threshold: rule,
            estimates: est,
            single,
            multi,
            truncation,
        },
        &out,
    )?;

    print_report(&ReconstructReport {
        command: "reconstruct",
        config: ReconstructEffective {
            trajectory,
            lags,
            leaders,
            threshold: rule,
            dependence_tol,
            ridge,
            ridge_lambda,
            out,
        },
        mode: mode.into(),
        condition_estimate,
        e_hat: report_e,
        alpha_hat: report_alpha,
        n_leaders_found: found,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// JSON file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth network JSON
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Reconstruction JSON produced by reconstruct
    #[arg(long)]
    reconstruction: Option<PathBuf>,
    /// Support threshold as a fraction of the largest magnitude
    #[arg(long)]
    threshold: Option<f64>,
    /// Support threshold as an absolute magnitude
    #[arg(long, conflicts_with = "threshold")]
    absolute_threshold: Option<f64>,
    /// Output path for the metrics JSON
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output path for the per-entry scatter CSV
    #[arg(long)]
    scatter: Option<PathBuf>,
    /// Also write a scatter SVG here
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateFile {
    spec: Option<PathBuf>,
    reconstruction: Option<PathBuf>,
    threshold: Option<f64>,
    absolute_threshold: Option<f64>,
    out: Option<PathBuf>,
    scatter: Option<PathBuf>,
    svg: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvaluateEffective {
    spec: PathBuf,
    reconstruction: PathBuf,
    threshold: ThresholdRule,
    out: PathBuf,
    scatter: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    svg: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvaluateReport {
    command: &'static str,
    config: EvaluateEffective,
    mode: String,
    b_max_abs_error: f64,
    support_precision: f64,
    support_recall: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_leaders_found: Option<usize>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let file: EvaluateFile = load_file(args.config.as_deref())?;
    let spec_path = require(args.spec.or(file.spec), "--spec")?;
    let rec_path = require(
        args.reconstruction.or(file.reconstruction),
        "--reconstruction",
    )?;
    let rule = threshold_rule(
        args.threshold.or(file.threshold),
        args.absolute_threshold.or(file.absolute_threshold),
    )?;
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("report.json"));
    let scatter = args
        .scatter
        .or(file.scatter)
        .unwrap_or_else(|| PathBuf::from("scatter.csv"));
    let svg_path = args.svg.or(file.svg);

    let spec: NetworkSpec = load_json(&spec_path)?;
    let recon: ReconstructionFile = load_json(&rec_path)?;
    let dm = assemble(&spec);

    let (eval_file, rows, report_core) = match (recon.mode.as_str(), &recon.single, &recon.multi) {
        ("single", Some(rec), _) => {
            let eval = evaluate_single(&spec, &recon.estimates, rec, &rule)?;
            let rows = scatter_rows_single(&dm, spec.alphas(), &recon.estimates, rec);
            let core = (
                eval.b.max_abs_error,
                eval.cd_support.precision,
                eval.cd_support.recall,
                Some(eval.e_error),
                Some(eval.alpha_error),
                None,
            );
            (
                EvalFile {
                    mode: "single".into(),
                    single: Some(eval),
                    multi: None,
                },
                rows,
                core,
            )
        }
        ("multi", _, Some(rec)) => {
            check_assumptions(&spec)?;
            let eval = evaluate_multi(&spec, &recon.estimates, rec, &rule)?;
            let rows = scatter_rows_multi(&dm, spec.alphas(), &recon.estimates, rec, &eval);
            let core = (
                eval.b.max_abs_error,
                eval.cd_support.precision,
                eval.cd_support.recall,
                None,
                None,
                Some(eval.n_leaders_found),
            );
            (
                EvalFile {
                    mode: "multi".into(),
                    single: None,
                    multi: Some(eval),
                },
                rows,
                core,
            )
        }
        _ => {
            return Err(Error::Parse(format!(
                "reconstruction file mode {:?} does not match its recovery payload",
                recon.mode
            )))
        }
    };

    save_json(&eval_file, &out)?;
    write_scatter_csv(&rows, &scatter)?;
    if let Some(p) = &svg_path {
        write_scatter_svg(&rows, p)?;
    }

    let (b_err, precision, recall, e_error, alpha_error, found) = report_core;
    print_report(&EvaluateReport {
        command: "evaluate",
        config: EvaluateEffective {
            spec: spec_path,
            reconstruction: rec_path,
            threshold: rule,
            out,
            scatter,
            svg: svg_path,
        },
        mode: eval_file.mode.clone(),
        b_max_abs_error: b_err,
        support_precision: precision,
        support_recall: recall,
        e_error,
        alpha_error,
        n_leaders_found: found,
    })
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Args)]
pub struct SweepArgs {
    /// JSON file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    followers: Option<usize>,
    #[arg(long)]
    leaders: Option<usize>,
    #[arg(long)]
    keep_threshold: Option<f64>,
    /// One pull value shared by every leader
    #[arg(long, conflicts_with = "alphas")]
    alpha: Option<f64>,
    /// Per-leader pull values, comma separated
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    symmetric_leaders: bool,
    #[arg(long)]
    noise_std: Option<f64>,
    /// Record lengths to sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Seeds per record length
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    lags: Option<usize>,
    /// Support threshold as a fraction of the largest magnitude
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    dependence_tol: Option<f64>,
    /// Output path for the sweep JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepFile {
    followers: Option<usize>,
    leaders: Option<usize>,
    keep_threshold: Option<f64>,
    alpha: Option<f64>,
    alphas: Option<Vec<f64>>,
    symmetric_leaders: Option<bool>,
    noise_std: Option<f64>,
    steps: Option<Vec<usize>>,
    seeds: Option<usize>,
    base_seed: Option<u64>,
    lags: Option<usize>,
    threshold: Option<f64>,
    dependence_tol: Option<f64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepEffective {
    followers: usize,
    leaders: usize,
    keep_threshold: f64,
    alphas: Vec<f64>,
    symmetric_leaders: bool,
    noise_std: f64,
    steps: Vec<usize>,
    seeds: usize,
    base_seed: u64,
    lags: usize,
    threshold: ThresholdRule,
    dependence_tol: f64,
    out: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let file: SweepFile = load_file(args.config.as_deref())?;
    let followers = require(args.followers.or(file.followers), "--followers")?;
    let leaders = args.leaders.or(file.leaders).unwrap_or(1);
    let keep_threshold = args.keep_threshold.or(file.keep_threshold).unwrap_or(0.6);
    let alphas = resolve_alphas(
        args.alpha.or(file.alpha),
        args.alphas.or(file.alphas),
        leaders,
    )?;
    let noise_std = args
        .noise_std
        .or(file.noise_std)
        .unwrap_or(lfrecon::network::DEFAULT_NOISE_STD);
    let symmetric = args.symmetric_leaders || file.symmetric_leaders.unwrap_or(false);
    let steps = require(args.steps.or(file.steps), "--steps")?;
    let seeds = args.seeds.or(file.seeds).unwrap_or(20);
    let base_seed = args.base_seed.or(file.base_seed).unwrap_or(0);
    let lags = args.lags.or(file.lags).unwrap_or(3);
    let rule = threshold_rule(args.threshold.or(file.threshold), None)?;
    let dependence_tol = args
        .dependence_tol
        .or(file.dependence_tol)
        .unwrap_or(lfrecon::multi::DEFAULT_DEPENDENCE_TOL);
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("sweep.json"));

    let generate = GenerateParams {
        symmetric_leader_coupling: symmetric,
        alphas: Some(alphas.clone()),
        noise_std: Some(vec![noise_std; followers]),
        ..GenerateParams::new(followers, leaders, keep_threshold)
    };
    let base = PipelineConfig {
        n_lags: lags,
        threshold: rule,
        dependence_tol,
        ..PipelineConfig::new(generate, steps[0])
    };
    let result = convergence_sweep(&SweepConfig {
        base,
        step_counts: steps.clone(),
        n_seeds: seeds,
        base_seed,
    })?;
    save_json(&result, &out)?;

    let effective = SweepEffective {
        followers,
        leaders,
        keep_threshold,
        alphas,
        symmetric_leaders: symmetric,
        noise_std,
        steps,
        seeds,
        base_seed,
        lags,
        threshold: rule,
        dependence_tol,
        out,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "command": "sweep",
            "config": effective,
        }))?
    );
    println!(
        "{:>10} {:>5} {:>5} {:>12} {:>12} {:>12}",
        "steps", "ok", "fail", "b_err_med", "e_err_med", "alpha_err_med"
    );
    for s in &result.summaries {
        println!(
            "{:>10} {:>5} {:>5} {:>12} {:>12} {:>12}",
            s.n_steps,
            s.n_ok,
            s.n_failed,
            fmt_opt(s.b_error_median),
            fmt_opt(s.e_error_median),
            fmt_opt(s.alpha_error_median),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reproduce-fig1 / reproduce-fig2

#[derive(Clone, Copy)]
pub enum Recipe {
    Fig1,
    Fig2,
}

#[derive(Args)]
pub struct ReproduceArgs {
    /// JSON file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; network and trajectory seeds derive from it
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for all artifacts
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write a scatter SVG
    #[arg(long)]
    svg: bool,
    /// Trajectory format
    #[arg(long, value_enum)]
    format: Option<TrajectoryFormat>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReproduceFile {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    svg: Option<bool>,
    format: Option<TrajectoryFormat>,
}

#[derive(Serialize)]
struct ReproduceEffective {
    recipe: &'static str,
    followers: usize,
    leaders: usize,
    keep_threshold: f64,
    alphas: Vec<f64>,
    symmetric_leaders: bool,
    steps: usize,
    seed: u64,
    network_seed: u64,
    trajectory_seed: u64,
    out_dir: PathBuf,
    svg: bool,
    format: TrajectoryFormat,
}

#[derive(Serialize)]
struct ReproduceReport {
    command: &'static str,
    config: ReproduceEffective,
    spectral_radius: f64,
    outputs: Vec<PathBuf>,
    b_max_abs_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_leaders_found: Option<usize>,
}

pub fn reproduce(recipe: Recipe, args: ReproduceArgs) -> Result<()> {
    let file: ReproduceFile = load_file(args.config.as_deref())?;
    let seed = args.seed.or(file.seed).unwrap_or(12);
    let (name, params, steps) = match recipe {
        Recipe::Fig1 => (
            "fig1",
            GenerateParams {
                alphas: Some(vec![0.1]),
                ..GenerateParams::new(9, 1, 0.6)
            },
            500_000,
        ),
        Recipe::Fig2 => (
            "fig2",
            GenerateParams {
                symmetric_leader_coupling: true,
                alphas: Some(vec![0.2, 0.1, 0.05, 0.1]),
                ..GenerateParams::new(10, 4, 0.8)
            },
            1_000_000,
        ),
    };
    let out_dir = args
        .out_dir
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from(format!("{name}-run")));
    let svg_wanted = args.svg || file.svg.unwrap_or(false);
    let format = args
        .format
        .or(file.format)
        .unwrap_or(TrajectoryFormat::Binary);
    fs::create_dir_all(&out_dir)?;

    let seeds = PipelineSeeds::from_base(seed);
    let spec = generate_paper_network(&params, seeds.network)?;
    let dm = assemble(&spec);
    let stability = check_stability(&dm, params.stability_margin);
    let traj = run(&spec, &RunParams::new(steps), seeds.trajectory)?;
    let cov = lag_covariances(&traj, 3)?;
    let est = estimate_blocks(&cov)?;
    let rule = ThresholdRule::default();

    let spec_path = out_dir.join("network.json");
    let traj_path = out_dir.join(format.default_out());
    save_json(&spec, &spec_path)?;
    format.save(&traj, &traj_path)?;

    let mut outputs = vec![spec_path, traj_path];
    let recon_path = out_dir.join("reconstruction.json");
    let report_path = out_dir.join("report.json");
    let scatter_path = out_dir.join("scatter.csv");
    let summary_path = out_dir.join("summary.txt");
    let config_path = out_dir.join("config.json");

    let effective = ReproduceEffective {
        recipe: name,
        followers: params.n_followers,
        leaders: params.n_leaders,
        keep_threshold: params.keep_threshold,
        alphas: params.alphas.clone().unwrap_or_default(),
        symmetric_leaders: params.symmetric_leader_coupling,
        steps,
        seed,
        network_seed: seeds.network,
        trajectory_seed: seeds.trajectory,
        out_dir: out_dir.clone(),
        svg: svg_wanted,
        format,
    };
    save_json(&effective, &config_path)?;

    let (rows, summary, b_err, e_hat, alpha_hat, found);
    match recipe {
        Recipe::Fig1 => {
            let rec = recover_single(&est, &rule)?;
            let eval = evaluate_single(&spec, &est, &rec, &rule)?;
            rows = scatter_rows_single(&dm, spec.alphas(), &est, &rec);
            summary = fig1_summary(&spec, &stability, &rec, &eval, steps, seed);
            b_err = eval.b.max_abs_error;
            e_hat = Some(rec.e_hat.value);
            alpha_hat = Some(rec.alpha_hat);
            found = None;
            save_json(
                &ReconstructionFile {
                    mode: "single".into(),
                    n_lags: 3,
                    threshold: rule,
                    estimates: est,
                    single: Some(rec),
                    multi: None,
                    truncation: None,
                },
                &recon_path,
            )?;
            save_json(
                &EvalFile {
                    mode: "single".into(),
                    single: Some(eval),
                    multi: None,
                },
                &report_path,
            )?;
        }
        Recipe::Fig2 => {
            let rec = recover_multi(&est, &MultiRecoveryOptions::default())?;
            let eval = evaluate_multi(&spec, &est, &rec, &rule)?;
            rows = scatter_rows_multi(&dm, spec.alphas(), &est, &rec, &eval);
            summary = fig2_summary(&spec, &stability, &rec, &eval, steps, seed);
            b_err = eval.b.max_abs_error;
            e_hat = None;
            alpha_hat = None;
            found = Some(eval.n_leaders_found);
            save_json(
                &ReconstructionFile {
                    mode: "multi".into(),
                    n_lags: 3,
                    threshold: rule,
                    estimates: est,
                    single: None,
                    multi: Some(rec),
                    truncation: None,
                },
                &recon_path,
            )?;
            save_json(
                &EvalFile {
                    mode: "multi".into(),
                    single: None,
                    multi: Some(eval),
                },
                &report_path,
            )?;
        }
    }
    write_scatter_csv(&rows, &scatter_path)?;
    fs::write(&summary_path, &summary)?;
    outputs.extend([recon_path, report_path, scatter_path, summary_path, config_path]);
    if svg_wanted {
        let svg_path = out_dir.join("scatter.svg");
        write_scatter_svg(&rows, &svg_path)?;
        outputs.push(svg_path);
    }

    print_report(&ReproduceReport {
        command: match recipe {
            Recipe::Fig1 => "reproduce-fig1",
            Recipe::Fig2 => "reproduce-fig2",
        },
        config: effective,
        spectral_radius: stability.spectral_radius,
        outputs,
        b_max_abs_error: b_err,
        e_hat,
        alpha_hat,
        n_leaders_found: found,
    })
}

fn fig1_summary(
    spec: &NetworkSpec,
    stability: &lfrecon::network::StabilityReport,
    rec: &SingleLeaderRecovery,
    eval: &SingleEvalReport,
    steps: usize,
    seed: u64,
) -> String {
    let e_true = spec.alphas()[0] - spec.in_degree(spec.n_followers());
    format!(
        "single-hidden-leader benchmark, base seed {seed}\n\
         recipe: 9 followers, 1 hidden leader, keep threshold 0.6, pull 0.1, {steps} recorded steps\n\
         spectral radius: {:.6}\n\
         \n\
         true internal parameter E:   {e_true:.6}\n\
         estimated E:                 {:.6} (ratio spread {:.4} over {} support entries)\n\
         true pull alpha:             {:.6}\n\
         estimated alpha:             {:.6}\n\
         visible-block max-abs error: {:.6}\n\
         coupling support precision:  {:.3}\n\
         coupling support recall:     {:.3}\n\
         \n\
         reference instance values for this recipe: true E -0.435246,\n\
         estimated E -0.371 (ratio spread 0.0635), estimated alpha 0.1564 for true 0.1\n",
        stability.spectral_radius,
        rec.e_hat.value,
        rec.e_hat.std,
        rec.e_hat.support_size,
        spec.alphas()[0],
        rec.alpha_hat,
        eval.b.max_abs_error,
        eval.cd_support.precision,
        eval.cd_support.recall,
    )
}

fn fig2_summary(
    spec: &NetworkSpec,
    stability: &lfrecon::network::StabilityReport,
    rec: &MultiLeaderRecovery,
    eval: &MultiEvalReport,
    steps: usize,
    seed: u64,
) -> String {
    let aligned: Vec<String> = eval
        .assignment
        .iter()
        .map(|a| match a {
            Some(j) => format!("{:.4}", rec.alpha_hat[*j]),
            None => "n/a".into(),
        })
        .collect();
    let errors: Vec<String> = eval
        .alpha_errors
        .iter()
        .map(|e| match e {
            Some(v) => format!("{:.4}", v.abs()),
            None => "n/a".into(),
        })
        .collect();
    let warnings = if rec.warnings.is_empty() {
        "none".to_string()
    } else {
        rec.warnings.join("; ")
    };
    format!(
        "four-hidden-leader benchmark, base seed {seed}\n\
         recipe: 10 followers, 4 hidden leaders, symmetric coupling, keep threshold 0.8,\n\
         pulls (0.2, 0.1, 0.05, 0.1), {steps} recorded steps\n\
         spectral radius: {:.6}\n\
         \n\
         clusters found: {} (expected 4)\n\
         true pulls:                  ({})\n\
         aligned pull estimates:      ({})\n\
         per-leader |pull error|:     ({})\n\
         visible-block max-abs error: {:.6}\n\
         warnings: {warnings}\n\
         \n\
         reference instance estimates for this recipe: pulls (0.27, 0.12, 0.10, 0.13)\n\
         for true (0.2, 0.1, 0.05, 0.1)\n",
        stability.spectral_radius,
        eval.n_leaders_found,
        spec.alphas()
            .iter()
            .map(|a| format!("{a:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
        aligned.join(", "),
        errors.join(", "),
        eval.b.max_abs_error,
    )
}
