//! Scoring reconstructions against ground truth: per-block error metrics,
//! support detection, leader order alignment, and scatter exports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arfit::BlockEstimates;
use crate::error::{Error, Result};
use crate::multi::MultiLeaderRecovery;
use crate::network::{assemble, NetworkSpec};
use crate::single::SingleLeaderRecovery;
use crate::threshold::ThresholdRule;

/// Summary of the entrywise difference between two same-shaped matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockComparison {
    pub max_abs_error: f64,
    pub rms_error: f64,
    /// Frobenius norm of the difference over the Frobenius norm of the
    /// truth; 0 when both vanish.
    pub rel_frobenius_error: f64,
}

pub fn compare_matrices(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<BlockComparison> {
    if truth.shape() != est.shape() {
        return Err(Error::Shape(format!(
            "cannot compare {:?} with {:?}",
            truth.shape(),
            est.shape()
        )));
    }
    let diff = est - truth;
    let max_abs_error = diff.abs().max();
    let n = (truth.nrows() * truth.ncols()).max(1) as f64;
    let fro = diff.norm();
    let rms_error = fro / n.sqrt();
    let truth_fro = truth.norm();
    let rel_frobenius_error = if truth_fro > 0.0 {
        fro / truth_fro
    } else if fro > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(BlockComparison {
        max_abs_error,
        rms_error,
        rel_frobenius_error,
    })
}

/// Edge-detection counts: a true edge is an exactly nonzero entry of the
/// truth, a predicted edge an estimate above the threshold in magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    /// TP / (TP + FP); 1.0 when nothing was predicted.
    pub precision: f64,
    /// TP / (TP + FN); 1.0 when the truth has no edges.
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

pub fn support_metrics(
    truth: &DMatrix<f64>,
    est: &DMatrix<f64>,
    threshold: f64,
) -> Result<SupportMetrics> {
    if truth.shape() != est.shape() {
        return Err(Error::Shape(format!(
            "cannot compare supports of {:?} and {:?}",
            truth.shape(),
            est.shape()
        )));
    }
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "support threshold must be finite and nonnegative, got {threshold}"
        )));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fnn = 0;
    for (t, e) in truth.iter().zip(est.iter()) {
        let real = *t != 0.0;
        let predicted = e.abs() > threshold;
        match (real, predicted) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fnn += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fnn == 0 {
        1.0
    } else {
        tp as f64 / (tp + fnn) as f64
    };
    Ok(SupportMetrics {
        precision,
        recall,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fnn,
    })
}

/// Match recovered leader columns to true ones by absolute cosine
/// similarity, maximizing the total. Entry `k` of the result is the
/// recovered column assigned to true leader `k`, or `None` when there are
/// fewer recovered columns than true leaders.
///
/// Exhaustive over permutations up to 8 columns (optimal); greedy
/// best-pair-first beyond that.
pub fn align_leader_permutation(
    c_true: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
) -> Result<Vec<Option<usize>>> {
    if c_true.nrows() != c_hat.nrows() {
        return Err(Error::Shape(format!(
            "column spaces disagree: {} vs {} followers",
            c_true.nrows(),
            c_hat.nrows()
        )));
    }
    let nt = c_true.ncols();
    let nh = c_hat.ncols();
    if nt == 0 {
        return Ok(Vec::new());
    }
    let mut score = vec![vec![0.0f64; nh]; nt];
    for (k, row) in score.iter_mut().enumerate() {
        let a = c_true.column(k);
        let na = a.norm();
        for (j, s) in row.iter_mut().enumerate() {
            let b = c_hat.column(j);
            let nb = b.norm();
            *s = if na > 0.0 && nb > 0.0 {
                (a.dot(&b) / (na * nb)).abs()
            } else {
                0.0
            };
        }
    }

    if nt.max(nh) <= 8 {
        let mut best_total = f64::NEG_INFINITY;
        let mut best = vec![None; nt];
        let mut current = vec![None; nt];
        exhaustive_assign(
            0,
            0u32,
            0.0,
            &score,
            nh,
            &mut current,
            &mut best_total,
            &mut best,
        );
        Ok(best)
    } else {
        Ok(greedy_assign(&score, nt, nh))
    }
}

#[allow(clippy::too_many_arguments)]
fn exhaustive_assign(
    k: usize,
    used: u32,
    total: f64,
    score: &[Vec<f64>],
    nh: usize,
    current: &mut Vec<Option<usize>>,
    best_total: &mut f64,
    best: &mut Vec<Option<usize>>,
) {
    if k == score.len() {
        if total > *best_total {
            *best_total = total;
            best.clone_from(current);
        }
        return;
    }
    for j in 0..nh {
        if used & (1 << j) == 0 {
            current[k] = Some(j);
            exhaustive_assign(
                k + 1,
                used | (1 << j),
                total + score[k][j],
                score,
                nh,
                current,
                best_total,
                best,
            );
        }
    }
    // Leaving a true leader unmatched is only ever necessary when the
    // recovered set is too small.
    if nh < score.len() {
        current[k] = None;
        exhaustive_assign(k + 1, used, total, score, nh, current, best_total, best);
    }
    current[k] = None;
}

fn greedy_assign(score: &[Vec<f64>], nt: usize, nh: usize) -> Vec<Option<usize>> {
    let mut assignment = vec![None; nt];
    let mut used_t = vec![false; nt];
    let mut used_h = vec![false; nh];
    for _ in 0..nt.min(nh) {
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for (k, row) in score.iter().enumerate() {
            if used_t[k] {
                continue;
            }
            for (j, s) in row.iter().enumerate() {
                if !used_h[j] && *s > best.2 {
                    best = (k, j, *s);
                }
            }
        }
        let (k, j, s) = best;
        if !s.is_finite() {
            break;
        }
        assignment[k] = Some(j);
        used_t[k] = true;
        used_h[j] = true;
    }
    assignment
}

/// Scores for a single-leader reconstruction against its generating spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleEvalReport {
    pub b: BlockComparison,
    pub c_max_abs_error: f64,
    pub d_max_abs_error: f64,
    /// Signed error of the internal parameter estimate.
    pub e_error: f64,
    /// Signed error of the pull-strength estimate.
    pub alpha_error: f64,
    /// Edge detection on the lag-1 memory block.
    pub cd_support: SupportMetrics,
    /// Threshold the support was judged at.
    pub support_threshold: f64,
}

pub fn evaluate_single(
    spec: &NetworkSpec,
    est: &BlockEstimates,
    rec: &SingleLeaderRecovery,
    rule: &ThresholdRule,
) -> Result<SingleEvalReport> {
    if spec.n_leaders() != 1 {
        return Err(Error::InvalidParameter(format!(
            "single-leader evaluation needs a 1-leader spec, got {}",
            spec.n_leaders()
        )));
    }
    let nf = spec.n_followers();
    if rec.n_followers() != nf || est.n_followers() != nf {
        return Err(Error::Shape(format!(
            "follower counts disagree: spec {nf}, fit {}, recovery {}",
            est.n_followers(),
            rec.n_followers()
        )));
    }
    rule.validate()?;
    let dm = assemble(spec);
    let b = compare_matrices(dm.b(), &rec.b_hat)?;
    let c_max_abs_error = (0..nf)
        .map(|i| (rec.c_hat[i] - dm.c()[(i, 0)]).abs())
        .fold(0.0f64, f64::max);
    let d_max_abs_error = (0..nf)
        .map(|i| (rec.d_hat[i] - dm.d()[(0, i)]).abs())
        .fold(0.0f64, f64::max);
    let e_error = rec.e_hat.value - dm.e()[(0, 0)];
    let alpha_error = rec.alpha_hat - spec.alphas()[0];
    let support_threshold = rule.resolve(est.cd_hat().abs().max());
    let cd_support = support_metrics(&dm.cd(), est.cd_hat(), support_threshold)?;
    Ok(SingleEvalReport {
        b,
        c_max_abs_error,
        d_max_abs_error,
        e_error,
        alpha_error,
        cd_support,
        support_threshold,
    })
}

/// Scores for a multi-leader reconstruction against its generating spec.
/// Recovered leaders are aligned to true ones before the per-leader
/// errors are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiEvalReport {
    pub b: BlockComparison,
    pub n_leaders_true: usize,
    pub n_leaders_found: usize,
    /// Recovered column matched to each true leader.
    pub assignment: Vec<Option<usize>>,
    /// Per true leader: max-abs error of its coupling column, when matched.
    pub c_column_errors: Vec<Option<f64>>,
    /// Per true leader: signed internal-parameter error, when matched.
    pub e_errors: Vec<Option<f64>>,
    /// Per true leader: signed pull-strength error, when matched.
    pub alpha_errors: Vec<Option<f64>>,
    pub cd_support: SupportMetrics,
    pub support_threshold: f64,
}

pub fn evaluate_multi(
    spec: &NetworkSpec,
    est: &BlockEstimates,
    rec: &MultiLeaderRecovery,
    rule: &ThresholdRule,
) -> Result<MultiEvalReport> {
    let nf = spec.n_followers();
    let nl = spec.n_leaders();
    if nl == 0 {
        return Err(Error::InvalidParameter(
            "multi-leader evaluation needs a spec with leaders".into(),
        ));
    }
    if rec.n_followers() != nf || est.n_followers() != nf {
        return Err(Error::Shape(format!(
            "follower counts disagree: spec {nf}, fit {}, recovery {}",
            est.n_followers(),
            rec.n_followers()
        )));
    }
    rule.validate()?;
    let dm = assemble(spec);
    let b = compare_matrices(dm.b(), &rec.b_hat)?;
    let assignment = align_leader_permutation(dm.c(), &rec.c_hat)?;

    let mut c_column_errors = Vec::with_capacity(nl);
    let mut e_errors = Vec::with_capacity(nl);
    let mut alpha_errors = Vec::with_capacity(nl);
    for (k, assigned) in assignment.iter().enumerate() {
        match assigned {
            Some(j) => {
                let col_err = (0..nf)
                    .map(|i| (rec.c_hat[(i, *j)] - dm.c()[(i, k)]).abs())
                    .fold(0.0f64, f64::max);
                c_column_errors.push(Some(col_err));
                e_errors.push(Some(rec.e_diag[*j] - dm.e()[(k, k)]));
                alpha_errors.push(Some(rec.alpha_hat[*j] - spec.alphas()[k]));
            }
            None => {
                c_column_errors.push(None);
                e_errors.push(None);
                alpha_errors.push(None);
            }
        }
    }

    let support_threshold = rule.resolve(est.cd_hat().abs().max());
    let cd_support = support_metrics(&dm.cd(), est.cd_hat(), support_threshold)?;
    Ok(MultiEvalReport {
        b,
        n_leaders_true: nl,
        n_leaders_found: rec.n_leaders(),
        assignment,
        c_column_errors,
        e_errors,
        alpha_errors,
        cd_support,
        support_threshold,
    })
}

fn block_label(i: usize, j: usize, nf: usize) -> &'static str {
    match (i < nf, j < nf) {
        (true, true) => "b",
        (true, false) => "c",
        (false, true) => "d",
        (false, false) => "e",
    }
}

/// Entrywise scatter of a reconstructed full matrix against the truth, as
/// CSV with columns `block,row,col,true,estimated`.
pub fn scatter_csv(
    a_true: &DMatrix<f64>,
    a_est: &DMatrix<f64>,
    n_followers: usize,
) -> Result<String> {
    if a_true.shape() != a_est.shape() {
        return Err(Error::Shape(format!(
            "cannot scatter {:?} against {:?}",
            a_true.shape(),
            a_est.shape()
        )));
    }
    let mut out = String::from("block,row,col,true,estimated\n");
    for i in 0..a_true.nrows() {
        for j in 0..a_true.ncols() {
            out.push_str(&format!(
                "{},{i},{j},{},{}\n",
                block_label(i, j, n_followers),
                a_true[(i, j)],
                a_est[(i, j)]
            ));
        }
    }
    Ok(out)
}

/// Self-contained SVG scatter plot of estimated against true entries,
/// colored by block, with the identity line for reference.
pub fn render_scatter_svg(
    a_true: &DMatrix<f64>,
    a_est: &DMatrix<f64>,
    n_followers: usize,
) -> Result<String> {
    if a_true.shape() != a_est.shape() {
        return Err(Error::Shape(format!(
            "cannot scatter {:?} against {:?}",
            a_true.shape(),
            a_est.shape()
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in a_true.iter().chain(a_est.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = 0.05 * (hi - lo).max(1e-9);
    lo -= pad;
    hi += pad;
    let size = 480.0;
    let margin = 50.0;
    let plot = size - 2.0 * margin;
    let to_px = |v: f64| margin + (v - lo) / (hi - lo) * plot;
    let to_py = |v: f64| size - margin - (v - lo) / (hi - lo) * plot;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
        to_px(lo),
        to_py(lo),
        to_px(hi),
        to_py(hi)
    ));
    svg.push_str(&format!(
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{plot}\" height=\"{plot}\" \
         fill=\"none\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">true entry</text>\n",
        size / 2.0,
        size - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 14 {})\">estimated entry</text>\n",
        size / 2.0,
        size / 2.0
    ));
    for (label, color) in [("b", "#888888"), ("c", "#1f77b4"), ("d", "#d62728"), ("e", "#000000")]
    {
        for i in 0..a_true.nrows() {
            for j in 0..a_true.ncols() {
                if block_label(i, j, n_followers) == label {
                    svg.push_str(&format!(
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\" \
                         fill-opacity=\"0.7\"><title>{label}[{i},{j}]</title></circle>\n",
                        to_px(a_true[(i, j)]),
                        to_py(a_est[(i, j)])
                    ));
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
