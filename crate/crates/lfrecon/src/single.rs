//! Recovery of a single hidden leader from fitted lag blocks.
//!
//! The chain runs in dependency order: the coupling vector from the
//! follower row-sum deficit, the leader's incoming row from projecting the
//! lag-1 block onto that vector, the internal parameter from lag-2/lag-1
//! ratios, and finally the pull strength from the leader row-sum identity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arfit::BlockEstimates;
use crate::error::{Error, Result};
use crate::threshold::ThresholdRule;
use crate::util::percentile;

/// Scalar estimated from a population of ratios, with spread diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub value: f64,
    /// Population standard deviation of the ratios.
    pub std: f64,
    /// Number of matrix entries the ratios were taken over.
    pub support_size: usize,
    /// Mean after clamping ratios to their 5th..95th percentile range;
    /// reported as a robustness diagnostic once 20 or more ratios exist.
    pub winsorized: Option<f64>,
}

/// One reconstructed system with a single hidden leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleLeaderRecovery {
    #[serde(with = "crate::io::matrix_serde")]
    pub b_hat: DMatrix<f64>,
    /// Couplings from the leader onto each follower.
    pub c_hat: Vec<f64>,
    /// Couplings from each follower onto the leader.
    pub d_hat: Vec<f64>,
    pub e_hat: ScalarEstimate,
    pub alpha_hat: f64,
    /// Frobenius norm of `c·d - CD`, the part of the lag-1 block the
    /// rank-one factorization cannot explain.
    pub d_residual: f64,
    /// Resolved clamp threshold applied to the coupling vector.
    pub c_threshold: f64,
    /// Resolved support threshold applied to the lag-1 block.
    pub support_threshold: f64,
}

impl SingleLeaderRecovery {
    pub fn n_followers(&self) -> usize {
        self.b_hat.nrows()
    }

    /// The reconstructed full map `[[B, c], [d, E]]`.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let nf = self.n_followers();
        let mut a = DMatrix::zeros(nf + 1, nf + 1);
        a.view_mut((0, 0), (nf, nf)).copy_from(&self.b_hat);
        for i in 0..nf {
            a[(i, nf)] = self.c_hat[i];
            a[(nf, i)] = self.d_hat[i];
        }
        a[(nf, nf)] = self.e_hat.value;
        a
    }
}

/// Leader-to-follower couplings from the row-sum deficit: with follower
/// rows of the true dynamics summing to one, `c_i = 1 - Σ_j B_ij`.
/// Entries whose magnitude falls below the resolved threshold are clamped
/// to zero (followers the leader does not reach).
pub fn recover_c(b_hat: &DMatrix<f64>, rule: &ThresholdRule) -> Result<Vec<f64>> {
    if b_hat.nrows() != b_hat.ncols() || b_hat.is_empty() {
        return Err(Error::Shape("lag-0 block must be square".into()));
    }
    rule.validate()?;
    let raw: Vec<f64> = (0..b_hat.nrows())
        .map(|i| 1.0 - b_hat.row(i).sum())
        .collect();
    let max_abs = raw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let threshold = rule.resolve(max_abs);
    let c_hat: Vec<f64> = raw
        .iter()
        .map(|v| if v.abs() <= threshold { 0.0 } else { *v })
        .collect();
    if c_hat.iter().all(|v| *v == 0.0) {
        return Err(Error::NoLeaderCoupling);
    }
    Ok(c_hat)
}

/// Follower-to-leader couplings: with the lag-1 block equal to `c·d`, the
/// least-squares row is `d = (cᵀ · CD) / |c|²`. The second value is the
/// Frobenius norm of `c·d - CD`, zero exactly when the block is rank one
/// with column space spanned by `c`.
pub fn recover_d(c_hat: &[f64], cd_hat: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let nf = c_hat.len();
    if cd_hat.nrows() != nf || cd_hat.ncols() != nf {
        return Err(Error::Shape(format!(
            "lag-1 block must be {nf}x{nf}, got {}x{}",
            cd_hat.nrows(),
            cd_hat.ncols()
        )));
    }
    let norm_sq: f64 = c_hat.iter().map(|v| v * v).sum();
    if norm_sq <= 0.0 {
        return Err(Error::ZeroCouplingVector);
    }
    let mut d_hat = vec![0.0; nf];
    for (j, dj) in d_hat.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, ci) in c_hat.iter().enumerate() {
            acc += ci * cd_hat[(i, j)];
        }
        *dj = acc / norm_sq;
    }
    let mut residual_sq = 0.0;
    for i in 0..nf {
        for j in 0..nf {
            let r = c_hat[i] * d_hat[j] - cd_hat[(i, j)];
            residual_sq += r * r;
        }
    }
    Ok((d_hat, residual_sq.sqrt()))
}

/// The leader's internal parameter from entrywise lag-2 over lag-1
/// ratios: wherever `CD` is visibly nonzero, `CED_ij / CD_ij = E`.
/// The estimate averages the ratios over that support; the spread and a
/// winsorized mean come along as diagnostics.
pub fn recover_e_scalar(
    cd_hat: &DMatrix<f64>,
    ced_hat: &DMatrix<f64>,
    rule: &ThresholdRule,
) -> Result<ScalarEstimate> {
    if cd_hat.shape() != ced_hat.shape() {
        return Err(Error::Shape(format!(
            "lag blocks disagree: {:?} vs {:?}",
            cd_hat.shape(),
            ced_hat.shape()
        )));
    }
    rule.validate()?;
    let threshold = rule.resolve(cd_hat.abs().max());
    let mut ratios = Vec::new();
    for i in 0..cd_hat.nrows() {
        for j in 0..cd_hat.ncols() {
            if cd_hat[(i, j)].abs() > threshold {
                ratios.push(ced_hat[(i, j)] / cd_hat[(i, j)]);
            }
        }
    }
    if ratios.is_empty() {
        return Err(Error::EmptySupport { threshold });
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let winsorized = if ratios.len() >= 20 {
        let lo = percentile(&ratios, 5.0);
        let hi = percentile(&ratios, 95.0);
        Some(ratios.iter().map(|r| r.clamp(lo, hi)).sum::<f64>() / n)
    } else {
        None
    };
    Ok(ScalarEstimate {
        value: mean,
        std: var.max(0.0).sqrt(),
        support_size: ratios.len(),
        winsorized,
    })
}

/// The leader's pull toward its own state, from its row-sum identity:
/// `α = E + Σ_j d_j`.
pub fn recover_alpha(e_hat: f64, d_hat: &[f64]) -> f64 {
    e_hat + d_hat.iter().sum::<f64>()
}

/// Full single-leader reconstruction from fitted lag blocks.
pub fn recover_single(
    est: &BlockEstimates,
    rule: &ThresholdRule,
) -> Result<SingleLeaderRecovery> {
    let c_hat = recover_c(est.b_hat(), rule)?;
    let (d_hat, d_residual) = recover_d(&c_hat, est.cd_hat())?;
    let e_hat = recover_e_scalar(est.cd_hat(), est.ced_hat(), rule)?;
    let alpha_hat = recover_alpha(e_hat.value, &d_hat);

    let raw_max = (0..est.b_hat().nrows())
        .map(|i| (1.0 - est.b_hat().row(i).sum()).abs())
        .fold(0.0f64, f64::max);
    Ok(SingleLeaderRecovery {
        b_hat: est.b_hat().clone(),
        c_threshold: rule.resolve(raw_max),
        support_threshold: rule.resolve(est.cd_hat().abs().max()),
        c_hat,
        d_hat,
        e_hat,
        alpha_hat,
        d_residual,
    })
}
