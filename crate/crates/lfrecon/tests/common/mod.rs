#![allow(dead_code)]

//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles here deliberately avoid the production code paths: the
//! least-squares fit builds an explicit design matrix and solves plain
//! normal equations with LU, and the stationary covariance comes from
//! iterating the discrete Lyapunov recursion. Agreement between these and
//! the library is evidence for both.

use lfrecon::network::{DynamicsMatrix, GenerateParams};
use lfrecon::simulate::Trajectory;
use nalgebra::DMatrix;

/// The 9-follower, 1-leader recipe behind the single-leader experiments:
/// keep threshold 0.6, leader pull 0.1.
pub fn fig1_params() -> GenerateParams {
    GenerateParams {
        alphas: Some(vec![0.1]),
        ..GenerateParams::new(9, 1, 0.6)
    }
}

/// The 10-follower, 4-leader recipe behind the multi-leader experiments:
/// keep threshold 0.8, symmetric disjoint leader coupling, pulls
/// (0.2, 0.1, 0.05, 0.1).
pub fn fig2_params() -> GenerateParams {
    GenerateParams {
        symmetric_leader_coupling: true,
        alphas: Some(vec![0.2, 0.1, 0.05, 0.1]),
        ..GenerateParams::new(10, 4, 0.8)
    }
}

/// Least-squares lag blocks by explicit normal equations: stack the lag
/// window into a dense design matrix, accumulate XᵀX and XᵀY by plain
/// summation, solve with LU, and slice the coefficient matrix into
/// `n_lags` blocks `[B, CD, CED, ...]`.
pub fn naive_lag_fit(traj: &Trajectory, n_lags: usize) -> Vec<DMatrix<f64>> {
    let nf = traj.n_followers();
    let m = n_lags;
    let n_t = traj.n_steps();
    assert!(n_t >= m + 2, "series too short for {m} lags");
    let w = n_t - m;
    let dim = m * nf;

    let mut x = DMatrix::zeros(w, dim);
    let mut y = DMatrix::zeros(w, nf);
    for (row, k) in ((m - 1)..=(n_t - 2)).enumerate() {
        for lag in 0..m {
            let src = traj.row(k - lag);
            for j in 0..nf {
                x[(row, lag * nf + j)] = src[j];
            }
        }
        let tgt = traj.row(k + 1);
        for j in 0..nf {
            y[(row, j)] = tgt[j];
        }
    }

    let xtx = x.tr_mul(&x);
    let xty = x.tr_mul(&y);
    let sol = xtx
        .lu()
        .solve(&xty)
        .expect("normal equations are solvable");
    let g = sol.transpose();
    (0..m)
        .map(|i| g.view((0, i * nf), (nf, nf)).into_owned())
        .collect()
}

/// Stationary covariance of the full state by fixed-point iteration of
/// `P <- A P Aᵀ + Q` with `Q = diag(noise², 0)`.
pub fn lyapunov_covariance(dm: &DynamicsMatrix, noise_std: &[f64]) -> DMatrix<f64> {
    assert_eq!(noise_std.len(), dm.n_followers());
    let n = dm.n_followers() + dm.n_leaders();
    let a = dm.full_matrix();
    let mut q = DMatrix::zeros(n, n);
    for (i, s) in noise_std.iter().enumerate() {
        q[(i, i)] = s * s;
    }
    let mut p = q.clone();
    for _ in 0..200_000 {
        let next = &a * &p * a.transpose() + &q;
        let delta = (&next - &p).abs().max();
        p = next;
        if delta < 1e-14 {
            return p;
        }
    }
    panic!("Lyapunov iteration did not converge; is the system stable?");
}

/// Max-abs difference between two matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
