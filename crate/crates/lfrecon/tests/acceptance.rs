//! Acceptance gate: one test per primary behavioral guarantee, each
//! printing a single PASS/FAIL verdict line with the measured numbers.
//!
//! `cargo test --test acceptance -- --nocapture` shows the verdict
//! lines; the test names alone carry the same result.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use common::{fig1_params, fig2_params, max_abs_diff, naive_lag_fit};
use lfrecon::arfit::{estimate_blocks, fit_trajectory, lag_covariances, BlockEstimates};
use lfrecon::evaluate::{
    align_leader_permutation, evaluate_multi, evaluate_single, support_metrics,
};
use lfrecon::multi::{recover_multi, MultiRecoveryOptions};
use lfrecon::network::{
    assemble, generate_paper_network, DynamicsMatrix, GenerateParams, NetworkSpec,
};
use lfrecon::pipeline::{convergence_sweep, run_pipeline, PipelineConfig, PipelineSeeds, SweepConfig};
use lfrecon::simulate::{run, run_dynamics, RunParams, Trajectory};
use lfrecon::single::recover_single;
use lfrecon::threshold::ThresholdRule;
use lfrecon::{derive_seed, log_log_slope, median};
use nalgebra::DMatrix;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};

fn verdict(criterion: &str, pass: bool, details: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("acceptance criterion {criterion}: {tag} - {details}");
    assert!(pass, "criterion {criterion}: {details}");
}

fn generated_spec(
    nf: usize,
    nl: usize,
    keep: f64,
    symmetric: bool,
    alpha: f64,
    seed: u64,
) -> Option<NetworkSpec> {
    let params = GenerateParams {
        symmetric_leader_coupling: symmetric,
        alphas: Some(vec![alpha; nl]),
        ..GenerateParams::new(nf, nl, keep)
    };
    generate_paper_network(&params, seed).ok()
}

/// One single-leader benchmark run: default recipe, half-million steps.
struct SingleRunStats {
    b_err: f64,
    e_err: f64,
    alpha_err: f64,
    cd_precision: f64,
    cd_recall: f64,
    ced_recall: f64,
}

const SINGLE_BATTERY_SEEDS: usize = 60;
const SINGLE_BATTERY_BASE: u64 = 9_200;

/// Sixty full single-leader runs, computed once and shared by the
/// accuracy and support-classification criteria. Per-draw errors have a
/// heavy right tail (weak-coupling draws), so the medians need a good
/// sample. Draws whose leader row is entirely zero carry no leader
/// signal and recovery refuses them; the battery takes the next seed
/// instead.
fn single_battery() -> &'static Vec<SingleRunStats> {
    static BATTERY: OnceLock<Vec<SingleRunStats>> = OnceLock::new();
    BATTERY.get_or_init(|| {
        let mut out = Vec::new();
        let mut index = 0u64;
        while out.len() < SINGLE_BATTERY_SEEDS {
            assert!(
                index < 2 * SINGLE_BATTERY_SEEDS as u64,
                "too many unusable draws for the benchmark recipe"
            );
            let i = index;
            index += 1;
            let Ok(spec) =
                generate_paper_network(&fig1_params(), derive_seed(SINGLE_BATTERY_BASE, 0, i))
            else {
                continue;
            };
            let traj = run(
                &spec,
                &RunParams::new(500_000),
                derive_seed(SINGLE_BATTERY_BASE, 1, i),
            )
            .unwrap();
            let est = estimate_blocks(&lag_covariances(&traj, 3).unwrap()).unwrap();
            let rec = match recover_single(&est, &ThresholdRule::default()) {
                Ok(rec) => rec,
                Err(lfrecon::Error::EmptySupport { .. }) => continue,
                Err(e) => panic!("unexpected recovery failure: {e}"),
            };
            let report = evaluate_single(&spec, &est, &rec, &ThresholdRule::default()).unwrap();
            let dm = assemble(&spec);
            let ced_threshold = ThresholdRule::default().resolve(est.ced_hat().abs().max());
            let ced = support_metrics(&dm.ced(), est.ced_hat(), ced_threshold).unwrap();
            out.push(SingleRunStats {
                b_err: report.b.max_abs_error,
                e_err: report.e_error.abs(),
                alpha_err: report.alpha_error.abs(),
                cd_precision: report.cd_support.precision,
                cd_recall: report.cd_support.recall,
                ced_recall: ced.recall,
            });
        }
        out
    })
}

#[test]
fn criterion_1_exact_input_identities() {
    let config = PropConfig {
        cases: 64,
        failure_persistence: None,
        ..PropConfig::default()
    };
    let started = Instant::now();

    let mut runner = TestRunner::new_with_rng(
        config.clone(),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let single = runner.run(
        &(4usize..=10, 0.55f64..0.9, -0.9f64..0.9, 0u64..1_000_000),
        |(nf, keep, alpha, seed)| {
            let Some(spec) = generated_spec(nf, 1, keep, false, alpha, seed) else {
                return Ok(());
            };
            let dm = assemble(&spec);
            let est =
                BlockEstimates::from_exact_blocks(dm.b().clone(), dm.cd(), dm.ced()).unwrap();
            if dm.cd().abs().max() == 0.0 {
                let refused = matches!(
                    recover_single(&est, &ThresholdRule::default()),
                    Err(lfrecon::Error::EmptySupport { .. })
                );
                assert!(refused, "zero leader row must be refused");
                return Ok(());
            }
            let rec = recover_single(&est, &ThresholdRule::default()).unwrap();
            for i in 0..nf {
                assert!((rec.c_hat[i] - dm.c()[(i, 0)]).abs() < 1e-10);
                assert!((rec.d_hat[i] - dm.d()[(0, i)]).abs() < 1e-10);
            }
            assert!((rec.e_hat.value - dm.e()[(0, 0)]).abs() < 1e-10);
            assert!((rec.alpha_hat - alpha).abs() < 1e-10);
            assert!(rec.d_residual < 1e-10);
            Ok(())
        },
    );

    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let multi = runner.run(
        &(6usize..=12, 2usize..=4, 0.55f64..0.9, -0.9f64..0.9, 0u64..1_000_000),
        |(nf, nl, keep, alpha, seed)| {
            let Some(spec) = generated_spec(nf, nl, keep, true, alpha, seed) else {
                return Ok(());
            };
            let dm = assemble(&spec);
            let est =
                BlockEstimates::from_exact_blocks(dm.b().clone(), dm.cd(), dm.ced()).unwrap();
            let rec = recover_multi(&est, &MultiRecoveryOptions::default()).unwrap();
            assert_eq!(rec.n_leaders(), nl);
            let assignment = align_leader_permutation(dm.c(), &rec.c_hat).unwrap();
            for (k, assigned) in assignment.iter().enumerate() {
                let a = assigned.expect("every true leader matches a recovered column");
                for i in 0..nf {
                    assert!((rec.c_hat[(i, a)] - dm.c()[(i, k)]).abs() < 1e-10);
                }
                assert!((rec.e_diag[a] - dm.e()[(k, k)]).abs() < 1e-10);
                assert!((rec.alpha_hat[a] - alpha).abs() < 1e-10);
            }
            Ok(())
        },
    );

    let elapsed = started.elapsed().as_secs_f64();
    let pass = single.is_ok() && multi.is_ok() && elapsed < 1.0;
    let mut details = format!(
        "128 exact-input cases recovered to 1e-10 up to column permutation in {elapsed:.3}s (< 1s)"
    );
    if let Err(e) = &single {
        details = format!("single-leader identity failed: {e}");
    }
    if let Err(e) = &multi {
        details = format!("multi-leader identity failed: {e}");
    }
    verdict("1", pass, &details);
}

#[test]
fn criterion_2_single_leader_benchmark_accuracy() {
    let stats = single_battery();
    let b = median(&stats.iter().map(|s| s.b_err).collect::<Vec<_>>());
    let e = median(&stats.iter().map(|s| s.e_err).collect::<Vec<_>>());
    let a = median(&stats.iter().map(|s| s.alpha_err).collect::<Vec<_>>());
    let pass = b < 0.02 && e < 0.12 && a < 0.12;
    verdict(
        "2",
        pass,
        &format!(
            "{}-seed medians: visible-block max-abs error {b:.4} (< 0.02), \
             internal-parameter error {e:.4} (< 0.12), pull error {a:.4} (< 0.12)",
            stats.len()
        ),
    );
}

#[test]
fn criterion_3_multi_leader_benchmark_accuracy() {
    let n_seeds = 10u64;
    let mut found_four = 0usize;
    let mut cluster_counts = Vec::new();
    let mut per_leader: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for i in 0..n_seeds {
        let spec = generate_paper_network(&fig2_params(), derive_seed(9_300, 0, i)).unwrap();
        let traj = run(&spec, &RunParams::new(1_000_000), derive_seed(9_300, 1, i)).unwrap();
        let est = estimate_blocks(&lag_covariances(&traj, 3).unwrap()).unwrap();
        let rec = recover_multi(&est, &MultiRecoveryOptions::default()).unwrap();
        cluster_counts.push(rec.n_leaders());
        if rec.n_leaders() == 4 {
            found_four += 1;
        }
        let report = evaluate_multi(&spec, &est, &rec, &ThresholdRule::default()).unwrap();
        for k in 0..4 {
            if let Some(err) = report.alpha_errors[k] {
                per_leader[k].push(err.abs());
            }
        }
    }
    let medians: Vec<f64> = per_leader.iter().map(|v| median(v)).collect();
    let worst = medians.iter().cloned().fold(0.0, f64::max);
    let enough = per_leader.iter().all(|v| v.len() >= 8);
    let pass = found_four >= 9 && worst < 0.1 && enough;
    let medians_txt: Vec<String> = medians.iter().map(|m| format!("{m:.3}")).collect();
    verdict(
        "3",
        pass,
        &format!(
            "four leaders found in {found_four}/{n_seeds} seeds (>= 9, counts {cluster_counts:?}); \
             aligned per-leader pull error medians [{}] (each < 0.1)",
            medians_txt.join(", ")
        ),
    );
}

#[test]
fn criterion_4_error_scaling_with_record_length() {
    // Rate check on systems with the internal parameter pinned to zero,
    // so the truncated fit is exact and only sampling noise remains.
    let step_grid = [10_000usize, 100_000, 1_000_000];
    let mut errs: Vec<Vec<f64>> = vec![Vec::new(); step_grid.len()];
    let mut usable = 0usize;
    let mut index = 0u64;
    while usable < 12 {
        assert!(index < 24, "too many unusable pinned draws");
        let i = index;
        index += 1;
        let Ok(spec) = generate_paper_network(&fig1_params(), derive_seed(9_400, 0, i)) else {
            continue;
        };
        // The leader can be the maximum in-degree node, whose normalized
        // degree is 1 up to rounding; keep the pinned pull in range.
        let kappa = spec.in_degree(9).min(1.0);
        let spec = spec.with_alphas(vec![kappa]).unwrap();
        let dm = assemble(&spec);
        if dm.spectral_radius() >= 0.999 {
            continue;
        }
        for (g, &n_steps) in step_grid.iter().enumerate() {
            let traj = run(
                &spec,
                &RunParams::new(n_steps),
                derive_seed(9_400, 1 + g as u64, i),
            )
            .unwrap();
            let est = estimate_blocks(&lag_covariances(&traj, 3).unwrap()).unwrap();
            errs[g].push((est.b_hat() - dm.b()).abs().max());
        }
        usable += 1;
    }
    let meds: Vec<f64> = errs.iter().map(|v| median(v)).collect();
    let points: Vec<(f64, f64)> = step_grid
        .iter()
        .zip(&meds)
        .map(|(&n, &m)| (n as f64, m))
        .collect();
    let slope = log_log_slope(&points);
    let rate_ok = (slope + 0.5).abs() <= 0.15;

    // Trend check on the stock recipe: longer records must not make the
    // internal-parameter estimate worse.
    let sweep = convergence_sweep(&SweepConfig {
        base: PipelineConfig::new(fig1_params(), 10_000),
        step_counts: step_grid.to_vec(),
        n_seeds: 60,
        base_seed: 9_500,
    })
    .unwrap();
    assert_eq!(
        sweep.summaries.iter().map(|s| s.n_steps).collect::<Vec<_>>(),
        step_grid.to_vec()
    );
    let e_meds: Vec<f64> = sweep
        .summaries
        .iter()
        .map(|s| s.e_error_median.expect("every step count has successes"))
        .collect();
    let trend_ok = e_meds[0] >= e_meds[1] - 1e-12 && e_meds[1] >= e_meds[2] - 1e-12;
    let e_txt: Vec<String> = e_meds.iter().map(|m| format!("{m:.4}")).collect();
    let med_txt: Vec<String> = meds.iter().map(|m| format!("{m:.5}")).collect();

    verdict(
        "4",
        rate_ok && trend_ok,
        &format!(
            "visible-block error slope {slope:.3} vs record length (within -0.5 +/- 0.15, \
             medians [{}]); internal-parameter error medians [{}] non-increasing",
            med_txt.join(", "),
            e_txt.join(", ")
        ),
    );
}

#[test]
fn criterion_5_known_coefficient_synthesis_and_reference_solver() {
    // Build a system whose exact dynamics are the three-lag recursion
    // with known coefficients: the delayed copies ride along as
    // noiseless hidden state.
    let spec = generate_paper_network(&fig1_params(), 58).unwrap();
    let dm = assemble(&spec);
    let nf = spec.n_followers();
    let (b, cd, ced) = (dm.b().clone(), dm.cd(), dm.ced());
    let mut shifted = DMatrix::zeros(nf, 2 * nf);
    shifted.view_mut((0, 0), (nf, nf)).copy_from(&cd);
    shifted.view_mut((0, nf), (nf, nf)).copy_from(&ced);
    let mut delay_in = DMatrix::zeros(2 * nf, nf);
    delay_in
        .view_mut((0, 0), (nf, nf))
        .copy_from(&DMatrix::identity(nf, nf));
    let mut delay_chain = DMatrix::zeros(2 * nf, 2 * nf);
    delay_chain
        .view_mut((nf, 0), (nf, nf))
        .copy_from(&DMatrix::identity(nf, nf));
    let companion = DynamicsMatrix::from_blocks(b.clone(), shifted, delay_in, delay_chain).unwrap();
    assert!(companion.spectral_radius() < 1.0, "delay embedding must stay stable");

    let noise = vec![spec.noise_std()[0]; nf];
    let traj = run_dynamics(&companion, &noise, &RunParams::new(1_000_000), 5_800).unwrap();
    let est = estimate_blocks(&lag_covariances(&traj, 3).unwrap()).unwrap();
    let errs = [
        max_abs_diff(est.b_hat(), &b),
        max_abs_diff(est.cd_hat(), &cd),
        max_abs_diff(est.ced_hat(), &ced),
    ];
    let synth_ok = errs.iter().all(|v| *v < 0.02);
    let errs_txt: Vec<String> = errs.iter().map(|v| format!("{v:.4}")).collect();

    // Same fit through a dense one-shot normal-equations solve, a
    // deliberately different code path.
    let short = run_dynamics(&companion, &noise, &RunParams::new(50_000), 5_801).unwrap();
    let est_short = estimate_blocks(&lag_covariances(&short, 3).unwrap()).unwrap();
    let reference = naive_lag_fit(&short, 3);
    let deviation = [
        max_abs_diff(est_short.b_hat(), &reference[0]),
        max_abs_diff(est_short.cd_hat(), &reference[1]),
        max_abs_diff(est_short.ced_hat(), &reference[2]),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let solver_ok = deviation <= 1e-8;

    verdict(
        "5",
        synth_ok && solver_ok,
        &format!(
            "known-coefficient fit errors [{}] (each < 0.02); \
             reference solver deviation {deviation:.2e} (<= 1e-8)",
            errs_txt.join(", ")
        ),
    );
}

#[test]
fn criterion_6_structural_invariants_and_determinism() {
    // Row-sum identities across a spread of generated shapes.
    let mut worst_row = 0.0f64;
    for (nf, nl, keep, symmetric, alpha, seed) in [
        (9usize, 1usize, 0.6, false, 0.1, 61u64),
        (10, 4, 0.8, true, 0.2, 62),
        (6, 2, 0.7, false, -0.5, 63),
        (12, 3, 0.55, true, 0.75, 64),
    ] {
        let params = GenerateParams {
            symmetric_leader_coupling: symmetric,
            alphas: Some(vec![alpha; nl]),
            ..GenerateParams::new(nf, nl, keep)
        };
        let spec = generate_paper_network(&params, seed).unwrap();
        let dm = assemble(&spec);
        for i in 0..nf {
            let total = dm.b().row(i).sum() + dm.c().row(i).sum();
            worst_row = worst_row.max((total - 1.0).abs());
        }
        for k in 0..nl {
            let total = dm.d().row(k).sum() + dm.e().row(k).sum();
            worst_row = worst_row.max((total - alpha).abs());
        }
    }
    let rows_ok = worst_row < 1e-12;

    // Rescaling every observation leaves the fitted coefficients alone.
    let spec = generate_paper_network(&fig1_params(), 65).unwrap();
    let traj = run(&spec, &RunParams::new(40_000), 6_500).unwrap();
    let scaled = Trajectory::from_rows(
        traj.data().iter().map(|v| v * 3.7).collect(),
        traj.n_steps(),
        traj.n_followers(),
    )
    .unwrap();
    let plain = fit_trajectory(&traj, 3).unwrap();
    let rescaled = fit_trajectory(&scaled, 3).unwrap();
    let scale_dev = [
        max_abs_diff(plain.b_hat(), rescaled.b_hat()),
        max_abs_diff(plain.cd_hat(), rescaled.cd_hat()),
        max_abs_diff(plain.ced_hat(), rescaled.ced_hat()),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let scale_ok = scale_dev < 1e-10;

    // Bit-identical reruns, stage by stage and end to end.
    let config = PipelineConfig::new(fig1_params(), 20_000);
    let seeds = PipelineSeeds::from_base(66);
    let once = run_pipeline(&config, seeds).unwrap();
    let twice = run_pipeline(&config, seeds).unwrap();
    let spec_a = generate_paper_network(&fig1_params(), seeds.network).unwrap();
    let spec_b = generate_paper_network(&fig1_params(), seeds.network).unwrap();
    let traj_a = run(&spec_a, &RunParams::new(20_000), seeds.trajectory).unwrap();
    let traj_b = run(&spec_b, &RunParams::new(20_000), seeds.trajectory).unwrap();
    let deterministic = once == twice
        && serde_json::to_string(&spec_a).unwrap() == serde_json::to_string(&spec_b).unwrap()
        && traj_a.data() == traj_b.data()
        && serde_json::to_string(&once.estimates).unwrap()
            == serde_json::to_string(&twice.estimates).unwrap();

    verdict(
        "6",
        rows_ok && scale_ok && deterministic,
        &format!(
            "worst row-sum defect {worst_row:.2e} (< 1e-12); \
             rescaled-data coefficient deviation {scale_dev:.2e} (< 1e-10); \
             repeated runs identical: {deterministic}"
        ),
    );
}

#[test]
fn criterion_7_leader_coupling_support_classification() {
    let stats = single_battery();
    let precision = median(&stats.iter().map(|s| s.cd_precision).collect::<Vec<_>>());
    let recall = median(&stats.iter().map(|s| s.cd_recall).collect::<Vec<_>>());
    let pass = precision >= 0.9 && recall >= 0.9;
    verdict(
        "7",
        pass,
        &format!(
            "first-memory support at default threshold: median precision {precision:.3}, \
             median recall {recall:.3} (each >= 0.9)"
        ),
    );
}

#[test]
fn second_memory_support_recall_holds() {
    let stats = single_battery();
    let recall = median(&stats.iter().map(|s| s.ced_recall).collect::<Vec<_>>());
    println!("acceptance note: second-memory support median recall {recall:.3} (>= 0.9)");
    assert!(recall >= 0.9, "second-memory recall median {recall:.3}");
}
