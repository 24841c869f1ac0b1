//! End-to-end runs: generate a network, simulate it, fit the lag blocks,
//! recover the hidden leaders, and score the result. Also the sample-size
//! sweep built on top.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arfit::{fit_trajectory, truncation_ratio, BlockEstimates, DEFAULT_N_LAGS};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_multi, evaluate_single, MultiEvalReport, SingleEvalReport};
use crate::multi::{
    check_assumptions, recover_multi, MultiLeaderRecovery, MultiRecoveryOptions,
    DEFAULT_DEPENDENCE_TOL,
};
use crate::network::{assemble, generate_paper_network, GenerateParams, NetworkSpec};
use crate::simulate::{follower_variances, run, RunParams};
use crate::single::{recover_single, SingleLeaderRecovery};
use crate::threshold::ThresholdRule;
use crate::util::{derive_seed, median, percentile};

/// Which recovery to run on the fitted blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryMode {
    Single,
    Multi,
}

/// Everything one end-to-end run needs.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub generate: GenerateParams,
    pub n_steps: usize,
    pub n_lags: usize,
    pub threshold: ThresholdRule,
    pub dependence_tol: f64,
    pub mode: RecoveryMode,
}

impl PipelineConfig {
    /// Defaults for everything behind the network shape; the mode follows
    /// the leader count.
    pub fn new(generate: GenerateParams, n_steps: usize) -> Self {
        let mode = if generate.n_leaders == 1 {
            RecoveryMode::Single
        } else {
            RecoveryMode::Multi
        };
        Self {
            generate,
            n_steps,
            n_lags: DEFAULT_N_LAGS,
            threshold: ThresholdRule::default(),
            dependence_tol: DEFAULT_DEPENDENCE_TOL,
            mode,
        }
    }
}

/// Independent RNG seeds for the two random stages of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSeeds {
    pub network: u64,
    pub trajectory: u64,
}

impl PipelineSeeds {
    /// Derive both stage seeds from one base seed.
    pub fn from_base(base: u64) -> Self {
        Self {
            network: derive_seed(base, 0, 0),
            trajectory: derive_seed(base, 1, 0),
        }
    }
}

/// Recovery plus its evaluation, tagged by mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RecoveryOutcome {
    Single {
        recovery: SingleLeaderRecovery,
        eval: SingleEvalReport,
    },
    Multi {
        recovery: MultiLeaderRecovery,
        eval: MultiEvalReport,
    },
}

/// Result of one end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutcome {
    pub spec: NetworkSpec,
    pub estimates: BlockEstimates,
    pub outcome: RecoveryOutcome,
    /// Size of the first neglected memory term of the true system,
    /// relative to the first kept one.
    pub truncation_ratio: f64,
    pub seeds: PipelineSeeds,
    pub n_steps: usize,
    pub mean_follower_variance: f64,
}

/// Generate, simulate, fit, recover, evaluate.
pub fn run_pipeline(config: &PipelineConfig, seeds: PipelineSeeds) -> Result<PipelineOutcome> {
    if config.mode == RecoveryMode::Single && config.generate.n_leaders != 1 {
        return Err(Error::AssumptionViolated(format!(
            "single-leader recovery assumes one hidden leader, configured {}",
            config.generate.n_leaders
        )));
    }
    if config.generate.n_leaders == 0 {
        return Err(Error::InvalidParameter(
            "recovery needs at least one leader".into(),
        ));
    }

    let spec = generate_paper_network(&config.generate, seeds.network)?;
    if config.mode == RecoveryMode::Multi {
        check_assumptions(&spec)?;
    }

    let traj = run(&spec, &RunParams::new(config.n_steps), seeds.trajectory)?;
    let est = fit_trajectory(&traj, config.n_lags)?;

    let outcome = match config.mode {
        RecoveryMode::Single => {
            let recovery = recover_single(&est, &config.threshold)?;
            let eval = evaluate_single(&spec, &est, &recovery, &config.threshold)?;
            RecoveryOutcome::Single { recovery, eval }
        }
        RecoveryMode::Multi => {
            let opts = MultiRecoveryOptions {
                clamp_threshold: config.threshold,
                dependence_tol: config.dependence_tol,
                ..MultiRecoveryOptions::default()
            };
            let recovery = recover_multi(&est, &opts)?;
            let eval = evaluate_multi(&spec, &est, &recovery, &config.threshold)?;
            RecoveryOutcome::Multi { recovery, eval }
        }
    };

    let vars = follower_variances(&traj);
    let mean_follower_variance = vars.iter().sum::<f64>() / vars.len() as f64;
    let dm = assemble(&spec);
    Ok(PipelineOutcome {
        truncation_ratio: truncation_ratio(&dm),
        spec,
        estimates: est,
        outcome,
        seeds,
        n_steps: config.n_steps,
        mean_follower_variance,
    })
}

/// Sweep configuration: the same networks and noise streams are reused
/// across every step count, so sample size is the only thing that varies
/// along that axis.
#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    /// Template run; its `n_steps` is overridden per cell.
    pub base: PipelineConfig,
    pub step_counts: Vec<usize>,
    pub n_seeds: usize,
    pub base_seed: u64,
}

/// Headline errors of one sweep cell; `None` where the run failed or the
/// metric was unavailable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub n_steps: usize,
    pub seed_index: usize,
    pub b_max_abs_error: Option<f64>,
    /// Absolute internal-parameter error: the scalar error for single
    /// mode, the worst matched-leader error for multi mode.
    pub e_abs_error: Option<f64>,
    /// Absolute pull-strength error, aggregated the same way.
    pub alpha_abs_error: Option<f64>,
    pub n_leaders_found: Option<usize>,
    pub failure: Option<String>,
}

/// Distribution summary of one step count across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub n_steps: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub b_error_median: Option<f64>,
    pub b_error_p25: Option<f64>,
    pub b_error_p75: Option<f64>,
    pub e_error_median: Option<f64>,
    pub alpha_error_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub summaries: Vec<SweepSummary>,
}

fn cell_metrics(outcome: &PipelineOutcome) -> (Option<f64>, Option<f64>, Option<usize>) {
    match &outcome.outcome {
        RecoveryOutcome::Single { eval, .. } => (
            Some(eval.e_error.abs()),
            Some(eval.alpha_error.abs()),
            Some(1),
        ),
        RecoveryOutcome::Multi { recovery, eval } => {
            let worst = |errors: &[Option<f64>]| {
                let vals: Vec<f64> = errors.iter().flatten().map(|e| e.abs()).collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().fold(0.0f64, |a, &v| a.max(v)))
                }
            };
            (
                worst(&eval.e_errors),
                worst(&eval.alpha_errors),
                Some(recovery.n_leaders()),
            )
        }
    }
}

/// Run the grid of (step count, seed) cells and summarize each step
/// count. Failed cells are recorded rather than aborting the sweep.
pub fn convergence_sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.step_counts.is_empty() {
        return Err(Error::InvalidParameter("no step counts to sweep".into()));
    }
    if config.n_seeds == 0 {
        return Err(Error::InvalidParameter("n_seeds must be positive".into()));
    }

    let grid: Vec<(usize, usize)> = config
        .step_counts
        .iter()
        .flat_map(|&n| (0..config.n_seeds).map(move |s| (n, s)))
        .collect();

    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|&(n_steps, seed_index)| {
            let mut cell_config = config.base.clone();
            cell_config.n_steps = n_steps;
            let seeds = PipelineSeeds {
                network: derive_seed(config.base_seed, 0, seed_index as u64),
                trajectory: derive_seed(config.base_seed, 1, seed_index as u64),
            };
            match run_pipeline(&cell_config, seeds) {
                Ok(outcome) => {
                    let b_err = match &outcome.outcome {
                        RecoveryOutcome::Single { eval, .. } => eval.b.max_abs_error,
                        RecoveryOutcome::Multi { eval, .. } => eval.b.max_abs_error,
                    };
                    let (e_err, alpha_err, n_found) = cell_metrics(&outcome);
                    SweepCell {
                        n_steps,
                        seed_index,
                        b_max_abs_error: Some(b_err),
                        e_abs_error: e_err,
                        alpha_abs_error: alpha_err,
                        n_leaders_found: n_found,
                        failure: None,
                    }
                }
                Err(err) => SweepCell {
                    n_steps,
                    seed_index,
                    b_max_abs_error: None,
                    e_abs_error: None,
                    alpha_abs_error: None,
                    n_leaders_found: None,
                    failure: Some(err.to_string()),
                },
            }
        })
        .collect();

    let summaries = config
        .step_counts
        .iter()
        .map(|&n_steps| {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| c.n_steps == n_steps).collect();
            let collect = |f: fn(&SweepCell) -> Option<f64>| -> Vec<f64> {
                group.iter().filter_map(|c| f(c)).collect()
            };
            let b_errs = collect(|c| c.b_max_abs_error);
            let e_errs = collect(|c| c.e_abs_error);
            let a_errs = collect(|c| c.alpha_abs_error);
            let stat = |vals: &[f64], p: f64| {
                if vals.is_empty() {
                    None
                } else {
                    Some(percentile(vals, p))
                }
            };
            let med = |vals: &[f64]| {
                if vals.is_empty() {
                    None
                } else {
                    Some(median(vals))
                }
            };
            SweepSummary {
                n_steps,
                n_ok: group.iter().filter(|c| c.failure.is_none()).count(),
                n_failed: group.iter().filter(|c| c.failure.is_some()).count(),
                b_error_median: med(&b_errs),
                b_error_p25: stat(&b_errs, 25.0),
                b_error_p75: stat(&b_errs, 75.0),
                e_error_median: med(&e_errs),
                alpha_error_median: med(&a_errs),
            }
        })
        .collect();

    Ok(SweepResult { cells, summaries })
}
