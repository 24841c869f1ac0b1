//! Oracle checks: answers computed by independent means (hand
//! arithmetic, Lyapunov fixed points, Monte-Carlo perturbations,
//! brute-force search) frozen into tests and compared against the
//! production code paths.

mod common;

use common::{fig1_params, lyapunov_covariance, max_abs_diff};
use lfrecon::arfit::{
    estimate_blocks, lag_covariances, truncation_residual_check, BlockEstimates,
};
use lfrecon::evaluate::{align_leader_permutation, support_metrics};
use lfrecon::multi::{recover_multi, MultiRecoveryOptions};
use lfrecon::network::{
    assemble, generate_paper_network, DynamicsMatrix, GenerateParams, NetworkSpec,
};
use lfrecon::pipeline::{convergence_sweep, PipelineConfig, SweepConfig};
use lfrecon::simulate::{follower_variances, run, run_dynamics, RunParams};
use lfrecon::single::{recover_alpha, recover_c, recover_d, recover_single};
use lfrecon::threshold::ThresholdRule;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Fig-1-shaped spec with the leader's internal parameter pinned to
/// `e` exactly, by setting its pull to in-degree + e.
fn fig1_spec_with_e(seed: u64, e: f64) -> NetworkSpec {
    let spec = generate_paper_network(&fig1_params(), seed).unwrap();
    let kappa = spec.in_degree(9);
    spec.with_alphas(vec![kappa + e]).unwrap()
}

#[test]
fn stationary_moments_match_lyapunov_fixed_point() {
    let spec = generate_paper_network(&fig1_params(), 41).unwrap();
    let dm = assemble(&spec);
    let p = lyapunov_covariance(&dm, spec.noise_std());

    let traj = run(&spec, &RunParams::new(1_000_000), 4_100).unwrap();
    let sample = follower_variances(&traj);
    for (i, v) in sample.iter().enumerate() {
        let truth = p[(i, i)];
        assert!(
            (v - truth).abs() / truth < 0.03,
            "follower {i}: sample variance {v} vs Lyapunov {truth}"
        );
    }

    // The top-left block of the lag moment matrix is the same follower
    // covariance, accumulated by a different code path.
    let lc = lag_covariances(&traj, 3).unwrap();
    let top = lc.sigma0().view((0, 0), (9, 9)).into_owned();
    let p_ff = p.view((0, 0), (9, 9)).into_owned();
    let scale = p_ff.abs().max();
    assert!(max_abs_diff(&top, &p_ff) / scale < 0.03);
    for i in 0..9 {
        assert!((top[(i, i)] - p_ff[(i, i)]).abs() / p_ff[(i, i)] < 0.03);
    }
}

#[test]
fn leaderless_data_yields_vanishing_hidden_blocks() {
    // A leaderless network straight from the generator is row-stochastic
    // and therefore marginal (the consensus mode random-walks), so take
    // the substochastic follower block of a one-leader system as the
    // ground truth: same sparsity, strictly stable, still no leader.
    let spec = generate_paper_network(&fig1_params(), 17).unwrap();
    let b = assemble(&spec).b().clone();
    let leaderless = DynamicsMatrix::from_blocks(
        b.clone(),
        DMatrix::zeros(9, 0),
        DMatrix::zeros(0, 9),
        DMatrix::zeros(0, 0),
    )
    .unwrap();
    assert!(leaderless.spectral_radius() < 1.0);

    let traj = run_dynamics(
        &leaderless,
        spec.noise_std(),
        &RunParams::new(1_000_000),
        1_700,
    )
    .unwrap();
    let est = estimate_blocks(&lag_covariances(&traj, 3).unwrap()).unwrap();

    assert!(max_abs_diff(est.b_hat(), &b) < 0.01);
    assert!(est.cd_hat().abs().max() < 0.01);
    assert!(est.ced_hat().abs().max() < 0.01);
}

#[test]
fn truncation_ratio_tracks_leader_memory() {
    // With the internal parameter pinned near -0.435, the neglected lag-3
    // term carries weight E^2 ~ 0.19, and the fitted lag-3 block should
    // sit at that order rather than at the noise floor.
    let e_true = -0.435_246;
    let spec = fig1_spec_with_e(3, e_true);
    let traj = run(&spec, &RunParams::new(500_000), 300).unwrap();
    let est = estimate_blocks(&lag_covariances(&traj, 4).unwrap()).unwrap();
    let check = truncation_residual_check(&est, e_true.abs()).unwrap();

    let expected = e_true * e_true;
    assert!(
        check.ratio > 0.25 * expected && check.ratio < 2.5 * expected,
        "lag-3/lag-1 ratio {} not on the order of {expected}",
        check.ratio
    );
}

#[test]
fn memoryless_leader_leaves_no_lag3_signal() {
    // Pull equal to in-degree makes the internal parameter exactly zero,
    // so the dynamics is exactly two-lag and the fitted lag-3 block is
    // pure estimation noise. A fast-mixing instance (spectral radius
    // ~0.81, strong lag-1 entries) keeps that noise floor far below the
    // bound; recipe-dense networks sit near radius 1, where lag
    // collinearity inflates the floor by an order of magnitude.
    let mut w = DMatrix::zeros(4, 4);
    for i in 0..3 {
        w[(i, 3)] = 0.5;
    }
    w[(3, 0)] = 0.5;
    let kappa = 0.5;
    let spec = NetworkSpec::new(3, 1, w, vec![kappa], vec![0.1; 3]).unwrap();
    assert_eq!(assemble(&spec).e()[(0, 0)], 0.0);

    let traj = run(&spec, &RunParams::new(2_000_000), 301).unwrap();
    let est = estimate_blocks(&lag_covariances(&traj, 4).unwrap()).unwrap();
    let check = truncation_residual_check(&est, 0.0).unwrap();

    assert!(check.ratio < 0.02, "ratio {} should be noise", check.ratio);
    assert!(check.flagged, "any measurable ratio exceeds a zero budget");
}

#[test]
fn coupling_reads_row_sum_deficits() {
    let b = DMatrix::from_row_slice(
        3,
        3,
        &[0.5, 0.2, 0.1, 0.5, 0.25, 0.25, 0.45, 0.25, 0.25],
    );
    let c = recover_c(&b, &ThresholdRule::Absolute(0.0)).unwrap();
    assert!((c[0] - 0.2).abs() < 1e-12);
    assert!(c[1].abs() < 1e-12);
    assert!((c[2] - 0.05).abs() < 1e-12);
}

#[test]
fn rank_one_factor_survives_small_noise() {
    let c = [0.5, 0.8, 0.3];
    let d_true = [0.3, 0.0, 0.4];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let noise = Normal::new(0.0, 1e-3).unwrap();

    for draw in 0..100 {
        let mut cd = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                cd[(i, j)] = c[i] * d_true[j] + noise.sample(&mut rng);
            }
        }
        let (d_hat, _residual) = recover_d(&c, &cd).unwrap();
        let worst = d_hat
            .iter()
            .zip(&d_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 5e-3, "draw {draw}: max-abs error {worst}");
    }
}

#[test]
fn pull_adds_ratio_and_couplings() {
    let alpha = recover_alpha(-0.371, &[0.3, 0.2274]);
    assert!((alpha - 0.1564).abs() < 1e-12);
    assert_eq!(recover_alpha(0.0, &[0.0, 0.0]), 0.0);
}

#[test]
fn single_and_multi_routes_agree_on_one_leader() {
    // Under symmetric coupling the lag-1 block is C·Cᵀ, so the
    // multi-leader factorization and the single-leader row-sum route
    // must land on the same couplings.
    let params = GenerateParams {
        symmetric_leader_coupling: true,
        alphas: Some(vec![0.3]),
        ..GenerateParams::new(6, 1, 0.6)
    };
    let spec = generate_paper_network(&params, 23).unwrap();
    let dm = assemble(&spec);
    let est = BlockEstimates::from_exact_blocks(dm.b().clone(), dm.cd(), dm.ced()).unwrap();

    let single = recover_single(&est, &ThresholdRule::default()).unwrap();
    let multi = recover_multi(&est, &MultiRecoveryOptions::default()).unwrap();

    assert_eq!(multi.n_leaders(), 1);
    for i in 0..6 {
        assert!((multi.c_hat[(i, 0)] - single.c_hat[i]).abs() < 1e-10);
    }
    assert!((multi.e_diag[0] - single.e_hat.value).abs() < 1e-10);
    assert!((multi.alpha_hat[0] - single.alpha_hat).abs() < 1e-10);
}

#[test]
fn shared_follower_triggers_overlap_warning() {
    // Two leaders hear follower 1: the mixed lag-1 column forms a
    // cluster of its own and the recovered supports overlap.
    let c1 = DMatrix::from_column_slice(3, 1, &[0.5, 0.3, 0.0]);
    let c2 = DMatrix::from_column_slice(3, 1, &[0.0, 0.4, 0.6]);
    let cct = &c1 * c1.transpose() + &c2 * c2.transpose();
    let cect = &c1 * c1.transpose() * -0.3 + &c2 * c2.transpose() * -0.5;
    let b = DMatrix::identity(3, 3) * 0.1;
    let est = BlockEstimates::from_exact_blocks(b, cct, cect).unwrap();

    let multi = recover_multi(&est, &MultiRecoveryOptions::default()).unwrap();
    assert_eq!(multi.n_leaders(), 3, "the mixed column reads as a third leader");
    assert!(
        multi.warnings.iter().any(|w| w.contains("share followers")),
        "warnings: {:?}",
        multi.warnings
    );
}

#[test]
fn alignment_survives_small_noise() {
    let c_true = DMatrix::from_row_slice(
        6,
        4,
        &[
            0.7, 0.0, 0.0, 0.0, //
            0.0, 0.6, 0.0, 0.0, //
            0.0, 0.0, 0.8, 0.0, //
            0.0, 0.0, 0.0, 0.9, //
            0.4, 0.0, 0.0, 0.0, //
            0.0, 0.5, 0.0, 0.0, //
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let noise = Normal::new(0.0, 0.01).unwrap();

    let mut identity_hits = 0;
    for _ in 0..100 {
        let mut c_hat = c_true.clone();
        for v in c_hat.iter_mut() {
            *v += noise.sample(&mut rng);
        }
        let assignment = align_leader_permutation(&c_true, &c_hat).unwrap();
        if assignment.iter().enumerate().all(|(k, m)| *m == Some(k)) {
            identity_hits += 1;
        }
    }
    assert!(identity_hits >= 99, "identity recovered {identity_hits}/100");
}

#[test]
fn alignment_matches_brute_force() {
    fn cosine(a: &DMatrix<f64>, ca: usize, b: &DMatrix<f64>, cb: usize) -> f64 {
        let x = a.column(ca);
        let y = b.column(cb);
        let dot: f64 = x.iter().zip(y.iter()).map(|(p, q)| p * q).sum();
        let nx = x.norm();
        let ny = y.norm();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            (dot / (nx * ny)).abs()
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for slot in 0..n {
                let mut q: Vec<usize> = p.iter().map(|&v| if v >= slot { v + 1 } else { v }).collect();
                q.push(slot);
                q.rotate_right(1);
                out.push(q);
            }
        }
        out
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let noise = Normal::new(0.0, 0.3).unwrap();
    for _ in 0..20 {
        let c_true = DMatrix::from_fn(5, 4, |_, _| f64::abs(noise.sample(&mut rng)));
        let c_hat = DMatrix::from_fn(5, 4, |_, _| f64::abs(noise.sample(&mut rng)));

        let assignment = align_leader_permutation(&c_true, &c_hat).unwrap();
        let achieved: f64 = assignment
            .iter()
            .enumerate()
            .map(|(k, m)| cosine(&c_true, k, &c_hat, m.unwrap()))
            .sum();

        let best = permutations(4)
            .into_iter()
            .map(|p| {
                (0..4)
                    .map(|k| cosine(&c_true, k, &c_hat, p[k]))
                    .sum::<f64>()
            })
            .fold(f64::MIN, f64::max);

        assert!(
            (achieved - best).abs() < 1e-12,
            "assignment total {achieved} vs brute force {best}"
        );
    }
}

#[test]
fn support_counts_match_hand_tally() {
    let mut truth = DMatrix::zeros(9, 9);
    for i in 0..9 {
        for j in 0..9 {
            if (i * 9 + j) % 4 == 1 {
                truth[(i, j)] = 0.5;
            }
        }
    }
    assert_eq!(truth.iter().filter(|v| **v != 0.0).count(), 20);

    let mut est = truth.clone();
    assert_eq!(est[(8, 8)], 0.0);
    est[(8, 8)] = 0.5;

    let m = support_metrics(&truth, &est, 0.1).unwrap();
    assert!((m.precision - 20.0 / 21.0).abs() < 1e-12);
    assert!((m.recall - 1.0).abs() < 1e-12);

    let clean = support_metrics(&truth, &truth, 0.1).unwrap();
    assert_eq!((clean.precision, clean.recall), (1.0, 1.0));
}

#[test]
fn sweep_single_entry_gives_single_row() {
    let config = SweepConfig {
        base: PipelineConfig::new(
            GenerateParams {
                alphas: Some(vec![0.1]),
                ..GenerateParams::new(5, 1, 0.6)
            },
            8_000,
        ),
        step_counts: vec![4_000],
        n_seeds: 3,
        base_seed: 5,
    };
    let result = convergence_sweep(&config).unwrap();
    assert_eq!(result.summaries.len(), 1);
    assert_eq!(result.summaries[0].n_steps, 4_000);
    assert_eq!(result.cells.len(), 3);
    assert!(result.cells.iter().all(|c| c.n_steps == 4_000));
}

#[test]
fn fig1_ratio_estimate_lands_in_paper_band() {
    // At this series length the ratio estimator carries a truncation
    // bias of a few hundredths on top of sampling error; the estimate
    // should land in a band around the pinned internal parameter.
    let e_true = -0.435_246;
    for seed in [11, 12, 13] {
        let spec = fig1_spec_with_e(seed, e_true);
        let traj = run(&spec, &RunParams::new(500_000), seed * 100).unwrap();
        let est = estimate_blocks(&lag_covariances(&traj, 3).unwrap()).unwrap();
        let rec = recover_single(&est, &ThresholdRule::default()).unwrap();
        assert!(
            rec.e_hat.value > -0.50 && rec.e_hat.value < -0.25,
            "seed {seed}: ratio estimate {} outside the expected band",
            rec.e_hat.value
        );
    }
}
