//! Truncated autoregressive fit of follower-only data.
//!
//! Eliminating the hidden leader states from the dynamics gives
//! `x_o(t+1) = B x_o(t) + C D x_o(t-1) + C E D x_o(t-2) + ...` with terms
//! `C E^k D` that die off geometrically for stable leader blocks. Keeping
//! three lags and regressing `x_o(t+1)` on the stacked lag vector yields
//! the three blocks every downstream recovery works from.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::DynamicsMatrix;
use crate::simulate::Trajectory;
use crate::util::Kahan;

/// Default number of lags in the truncated regression.
pub const DEFAULT_N_LAGS: usize = 3;

/// Largest `sigma0` eigenvalue spread the plain solver accepts; beyond it
/// the caller must opt into the ridge fallback.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e10;

/// Second-moment statistics of a trajectory over a single sample window.
///
/// With `X(k) = [x_o(k); x_o(k-1); ...; x_o(k-m+1)]` and `k` running from
/// `m-1` to `N_t - 2` (so every moment uses the same `W = N_t - m`
/// samples): `sigma0 = <X Xᵀ>`, `sigma1 = <x_o(k+1) Xᵀ>`, and `target =
/// <x_o(k+1) x_o(k+1)ᵀ>` for residual bookkeeping. `sigma0` is exactly
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCovariances {
    sigma0: DMatrix<f64>,
    sigma1: DMatrix<f64>,
    target: DMatrix<f64>,
    n_followers: usize,
    n_lags: usize,
    n_samples: usize,
    eig_min: f64,
    eig_max: f64,
}

impl LagCovariances {
    /// `<X Xᵀ>`, square with side `n_lags * n_followers`.
    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    /// `<x_o(k+1) Xᵀ>`, `n_followers` by `n_lags * n_followers`.
    pub fn sigma1(&self) -> &DMatrix<f64> {
        &self.sigma1
    }

    /// `<x_o(k+1) x_o(k+1)ᵀ>`.
    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn n_followers(&self) -> usize {
        self.n_followers
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    /// Number of windows averaged over: `N_t - n_lags`.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Side of `sigma0`.
    pub fn design_dimension(&self) -> usize {
        self.n_lags * self.n_followers
    }

    /// Eigenvalue spread of `sigma0`; infinite when the matrix is
    /// singular (zero data, or duplicated follower signals).
    pub fn condition_estimate(&self) -> f64 {
        if !self.eig_max.is_finite() || self.eig_max <= 0.0 || self.eig_min <= 0.0 {
            f64::INFINITY
        } else {
            self.eig_max / self.eig_min
        }
    }
}

/// Accumulate the lag moments of a trajectory in one pass.
///
/// Sums use compensated (Kahan) accumulation so million-step series do not
/// lose the small late terms, and only the upper triangle is accumulated
/// before mirroring, which keeps `sigma0` exactly symmetric.
pub fn lag_covariances(traj: &Trajectory, n_lags: usize) -> Result<LagCovariances> {
    if n_lags < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 lags, got {n_lags}"
        )));
    }
    let nf = traj.n_followers();
    let m = n_lags;
    let n_t = traj.n_steps();
    if n_t < m + 2 {
        return Err(Error::TooShort {
            n_steps: n_t,
            min: m + 2,
        });
    }
    let dim = m
        .checked_add(1)
        .and_then(|v| v.checked_mul(nf))
        .ok_or_else(|| Error::InvalidParameter("lag window overflows".into()))?;
    let w = n_t - m;

    // y(k) = [x_o(k+1); x_o(k); ...; x_o(k-m+1)] stacks the regression
    // target on top of X(k); one upper-triangular outer-product
    // accumulation then holds every moment as a block.
    let mut acc = vec![Kahan::default(); dim * dim];
    let mut y = vec![0.0; dim];
    for k in (m - 1)..=(n_t - 2) {
        for lag in 0..=m {
            let row = traj.row(k + 1 - lag);
            y[lag * nf..(lag + 1) * nf].copy_from_slice(row);
        }
        for a in 0..dim {
            let ya = y[a];
            let row_acc = &mut acc[a * dim..(a + 1) * dim];
            for (b, slot) in row_acc.iter_mut().enumerate().skip(a) {
                slot.add(ya * y[b]);
            }
        }
    }

    let scale = 1.0 / w as f64;
    let mut full = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let v = acc[a * dim + b].value() * scale;
            full[(a, b)] = v;
            full[(b, a)] = v;
        }
    }

    let sigma0 = full.view((nf, nf), (m * nf, m * nf)).into_owned();
    let eigs = sigma0.symmetric_eigenvalues();
    let eig_min = eigs.iter().fold(f64::INFINITY, |a, &l| a.min(l));
    let eig_max = eigs.iter().fold(f64::NEG_INFINITY, |a, &l| a.max(l));

    Ok(LagCovariances {
        target: full.view((0, 0), (nf, nf)).into_owned(),
        sigma1: full.view((0, nf), (nf, m * nf)).into_owned(),
        sigma0,
        n_followers: nf,
        n_lags: m,
        n_samples: w,
        eig_min,
        eig_max,
    })
}

/// The fitted lag blocks of the truncated regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimates {
    /// Lag-0 block, the estimate of `B`.
    #[serde(with = "crate::io::matrix_serde")]
    b: DMatrix<f64>,
    /// Lag-1 block, the estimate of `C·D`.
    #[serde(with = "crate::io::matrix_serde")]
    cd: DMatrix<f64>,
    /// Lag-2 block, the estimate of `C·E·D`.
    #[serde(with = "crate::io::matrix_serde")]
    ced: DMatrix<f64>,
    /// Fitted blocks beyond lag 2 when more than three lags were
    /// requested; diagnostic inputs for the truncation check.
    #[serde(with = "crate::io::matrix_vec_serde", default)]
    extra: Vec<DMatrix<f64>>,
    /// Residual covariance of the fit, the estimate of the noise
    /// covariance.
    #[serde(with = "crate::io::matrix_serde")]
    residual_cov: DMatrix<f64>,
    n_samples: usize,
    n_lags: usize,
    /// Eigenvalue spread of the moment matrix the fit solved against;
    /// absent for exact-block inputs.
    condition_estimate: Option<f64>,
    /// Diagonal regularization added to the moment matrix; 0.0 unless the
    /// ridge fallback was requested.
    ridge: f64,
}

impl BlockEstimates {
    /// Wrap exact blocks, bypassing the regression. Shapes must agree.
    pub fn from_exact_blocks(
        b: DMatrix<f64>,
        cd: DMatrix<f64>,
        ced: DMatrix<f64>,
    ) -> Result<Self> {
        let nf = b.nrows();
        for (name, m) in [("lag-0", &b), ("lag-1", &cd), ("lag-2", &ced)] {
            if m.nrows() != nf || m.ncols() != nf {
                return Err(Error::Shape(format!(
                    "{name} block must be {nf}x{nf}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} block must be finite"
                )));
            }
        }
        Ok(Self {
            residual_cov: DMatrix::zeros(nf, nf),
            b,
            cd,
            ced,
            extra: Vec::new(),
            n_samples: 0,
            n_lags: DEFAULT_N_LAGS,
            condition_estimate: None,
            ridge: 0.0,
        })
    }

    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn cd_hat(&self) -> &DMatrix<f64> {
        &self.cd
    }

    pub fn ced_hat(&self) -> &DMatrix<f64> {
        &self.ced
    }

    pub fn extra_blocks(&self) -> &[DMatrix<f64>] {
        &self.extra
    }

    pub fn residual_cov(&self) -> &DMatrix<f64> {
        &self.residual_cov
    }

    /// Per-follower noise variance estimate: the residual diagonal,
    /// clamped at zero.
    pub fn noise_variances(&self) -> Vec<f64> {
        (0..self.residual_cov.nrows())
            .map(|i| self.residual_cov[(i, i)].max(0.0))
            .collect()
    }

    pub fn n_followers(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    /// Conditioning of the moment matrix behind the fit; `None` for
    /// exact-block inputs.
    pub fn condition_estimate(&self) -> Option<f64> {
        self.condition_estimate
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }
}

/// Solve the truncated regression from accumulated moments:
/// `[B, CD, CED] = sigma1 · sigma0⁻¹` via a Cholesky factorization.
///
/// Needs at least three lags (the recoveries read three named blocks) and
/// more samples than regressors. Refuses moment matrices whose eigenvalue
/// spread exceeds [`DEFAULT_CONDITION_LIMIT`]; use
/// [`estimate_blocks_with_ridge`] to force a regularized solve instead.
pub fn estimate_blocks(cov: &LagCovariances) -> Result<BlockEstimates> {
    check_problem_size(cov)?;
    let cond = cov.condition_estimate();
    if cond > DEFAULT_CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }
    solve_blocks(cov, 0.0)
}

/// The same regression with a diagonal ridge added to `sigma0`, for
/// moment matrices [`estimate_blocks`] refuses. `lambda` defaults to
/// `1e-8 · trace(sigma0) / dim`. The ridge biases every block, so it is
/// recorded on the result instead of being applied silently.
pub fn estimate_blocks_with_ridge(
    cov: &LagCovariances,
    lambda: Option<f64>,
) -> Result<BlockEstimates> {
    let lambda = lambda
        .unwrap_or_else(|| 1e-8 * cov.sigma0().trace() / cov.design_dimension() as f64);
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "ridge strength must be finite and nonnegative, got {lambda}"
        )));
    }
    solve_blocks(cov, lambda)
}

fn check_problem_size(cov: &LagCovariances) -> Result<()> {
    let m = cov.n_lags();
    if m < 3 {
        return Err(Error::InvalidParameter(format!(
            "block estimation needs at least 3 lags, got {m}"
        )));
    }
    let dim = cov.design_dimension();
    if cov.n_samples() < dim {
        return Err(Error::TooShort {
            n_steps: cov.n_samples() + m,
            min: dim + m,
        });
    }
    Ok(())
}

fn solve_blocks(cov: &LagCovariances, ridge: f64) -> Result<BlockEstimates> {
    check_problem_size(cov)?;
    let nf = cov.n_followers();
    let m = cov.n_lags();
    let dim = cov.design_dimension();

    let sigma0 = cov.sigma0();
    let chol = if ridge > 0.0 {
        let mut reg = sigma0.clone();
        for i in 0..dim {
            reg[(i, i)] += ridge;
        }
        Cholesky::new(reg)
    } else {
        Cholesky::new(sigma0.clone())
    };
    let chol = chol.ok_or(Error::IllConditioned {
        cond: cov.condition_estimate(),
    })?;

    let z = chol.solve(&cov.sigma1().transpose());
    let g = z.transpose();

    // Residual covariance from the unregularized moments:
    // R = target - G sigma1ᵀ - sigma1 Gᵀ + G sigma0 Gᵀ.
    let gs1t = &g * cov.sigma1().transpose();
    let residual_cov = cov.target() - &gs1t - gs1t.transpose() + &g * sigma0 * g.transpose();

    let block = |idx: usize| g.view((0, idx * nf), (nf, nf)).into_owned();
    Ok(BlockEstimates {
        b: block(0),
        cd: block(1),
        ced: block(2),
        extra: (3..m).map(block).collect(),
        residual_cov,
        n_samples: cov.n_samples(),
        n_lags: m,
        condition_estimate: Some(cov.condition_estimate()),
        ridge,
    })
}

/// Convenience wrapper: moments then regression in one call.
pub fn fit_trajectory(traj: &Trajectory, n_lags: usize) -> Result<BlockEstimates> {
    estimate_blocks(&lag_covariances(traj, n_lags)?)
}

/// Outcome of comparing the first neglected lag block against the first
/// kept one on a fit with four or more lags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck {
    /// Largest magnitude in the lag-3 block (estimating `C·E²·D`).
    pub lag3_max_abs: f64,
    /// Largest magnitude in the lag-1 block (estimating `C·D`).
    pub lag1_max_abs: f64,
    /// Their ratio; 0 when both vanish.
    pub ratio: f64,
    /// Squared internal-parameter magnitude, the size the neglected term
    /// would have if it were real rather than noise.
    pub expected_ratio: f64,
    /// Whether the measured ratio exceeds the expected one, meaning the
    /// three-lag truncation dropped something substantial.
    pub flagged: bool,
}

/// Empirical admissibility check for the three-lag truncation, from a fit
/// with at least four lags.
pub fn truncation_residual_check(
    be: &BlockEstimates,
    e_hat_magnitude: f64,
) -> Result<TruncationCheck> {
    let Some(lag3) = be.extra_blocks().first() else {
        return Err(Error::InvalidParameter(
            "truncation check needs a fit with at least 4 lags".into(),
        ));
    };
    if !e_hat_magnitude.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "internal-parameter magnitude must be finite, got {e_hat_magnitude}"
        )));
    }
    let lag3_max_abs = lag3.abs().max();
    let lag1_max_abs = be.cd_hat().abs().max();
    let ratio = if lag3_max_abs == 0.0 {
        0.0
    } else if lag1_max_abs == 0.0 {
        f64::INFINITY
    } else {
        lag3_max_abs / lag1_max_abs
    };
    let expected_ratio = e_hat_magnitude * e_hat_magnitude;
    Ok(TruncationCheck {
        lag3_max_abs,
        lag1_max_abs,
        ratio,
        expected_ratio,
        flagged: ratio > expected_ratio,
    })
}

/// Size of the first neglected memory term relative to the first kept
/// one: `max|C E² D| / max|C D|`. Small values justify the three-lag
/// truncation; 0.0 when both vanish.
pub fn truncation_ratio(dm: &DynamicsMatrix) -> f64 {
    let cd_norm = dm.cd().abs().max();
    let ce2d = dm.c() * (dm.e() * dm.e()) * dm.d();
    let next_norm = ce2d.abs().max();
    if next_norm == 0.0 {
        0.0
    } else if cd_norm == 0.0 {
        f64::INFINITY
    } else {
        next_norm / cd_norm
    }
}
