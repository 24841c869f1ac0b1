//! Recovery of several hidden leaders from fitted lag blocks.
//!
//! Works under three structural assumptions: leaders do not couple to each
//! other (diagonal `E`), leader coupling is symmetric (`D = Cᵀ`, so the
//! lag-1 block is `C·Cᵀ`), and no follower couples to two leaders
//! (disjoint columns of `C`). Columns of the lag-1 block belonging to the
//! same leader are then parallel, which is what the clustering exploits.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::arfit::BlockEstimates;
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::threshold::ThresholdRule;

/// Two columns count as belonging to the same leader when the absolute
/// cosine of their angle exceeds `1 - tol`.
pub const DEFAULT_DEPENDENCE_TOL: f64 = 0.05;

/// Columns whose norm falls below this fraction of the largest column norm
/// are treated as leaderless.
pub const DEFAULT_NORM_FRACTION: f64 = 0.1;

/// Ratio diagnostics above these bounds earn a warning on the result.
const E_OFFDIAG_WARN: f64 = 0.1;
const ASYMMETRY_WARN: f64 = 0.5;

const PERMUTATION_NOTE: &str =
    "recovered leaders are identified only up to a permutation of the true leader indices";

/// Knobs for [`recover_multi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRecoveryOptions {
    /// Column-norm cutoff separating leader-reached columns from the rest.
    pub norm_threshold: ThresholdRule,
    /// Zeroing rule for entries of the recovered coupling columns.
    pub clamp_threshold: ThresholdRule,
    /// Cosine slack for the linear-dependence clustering.
    pub dependence_tol: f64,
    /// Pin the leader count: keep only the strongest clusters and warn on a
    /// mismatch. `None` lets the cluster count decide.
    pub n_leaders: Option<usize>,
}

impl Default for MultiRecoveryOptions {
    fn default() -> Self {
        MultiRecoveryOptions {
            norm_threshold: ThresholdRule::Relative(DEFAULT_NORM_FRACTION),
            clamp_threshold: ThresholdRule::default(),
            dependence_tol: DEFAULT_DEPENDENCE_TOL,
            n_leaders: None,
        }
    }
}

/// Verify that a ground-truth spec satisfies the three structural
/// assumptions the multi-leader recovery needs: no leader-to-leader
/// coupling, symmetric leader-follower coupling, and no follower coupled
/// to more than one leader.
pub fn check_assumptions(spec: &NetworkSpec) -> Result<()> {
    let nf = spec.n_followers();
    let nl = spec.n_leaders();
    let w = spec.weights();
    for k in 0..nl {
        for l in 0..nl {
            if k != l && w[(nf + k, nf + l)] != 0.0 {
                return Err(Error::AssumptionViolated(format!(
                    "leaders {k} and {l} couple to each other"
                )));
            }
        }
        for i in 0..nf {
            if w[(nf + k, i)] != w[(i, nf + k)] {
                return Err(Error::AssumptionViolated(format!(
                    "coupling between follower {i} and leader {k} is not symmetric"
                )));
            }
        }
    }
    for i in 0..nf {
        let coupled = (0..nl).filter(|&k| w[(i, nf + k)] != 0.0).count();
        if coupled > 1 {
            return Err(Error::AssumptionViolated(format!(
                "follower {i} couples to {coupled} leaders"
            )));
        }
    }
    Ok(())
}

/// One group of mutually parallel columns, presumed to belong to a single
/// leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCluster {
    /// Follower column indices, ascending.
    pub members: Vec<usize>,
    /// Member with the largest column norm.
    pub leading_column: usize,
    /// Absolute cosine of each member's column against the leading column,
    /// parallel to `members`; the leading column itself scores 1.
    pub cosines: Vec<f64>,
}

/// Grouping of lag-1 block columns by linear dependence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnClusters {
    /// One group per detected leader, sorted by descending leading-column
    /// norm.
    pub clusters: Vec<ColumnCluster>,
    /// Columns whose norm fell below the resolved threshold (followers no
    /// leader reaches).
    pub unassigned: Vec<usize>,
    /// Resolved column-norm threshold that split the two sets.
    pub norm_threshold: f64,
}

/// Cluster the columns of the (estimated) `C·Cᵀ` block: columns with norm
/// above the resolved threshold are joined whenever their absolute cosine
/// exceeds `1 - dependence_tol`, with transitive closure.
pub fn group_dependent_columns(
    cct_hat: &DMatrix<f64>,
    rule: &ThresholdRule,
    dependence_tol: f64,
) -> Result<ColumnClusters> {
    if cct_hat.nrows() != cct_hat.ncols() || cct_hat.is_empty() {
        return Err(Error::Shape("lag-1 block must be square".into()));
    }
    if !(dependence_tol > 0.0 && dependence_tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dependence tolerance must lie in (0, 1), got {dependence_tol}"
        )));
    }
    rule.validate()?;
    let nf = cct_hat.ncols();
    let norms: Vec<f64> = (0..nf).map(|j| cct_hat.column(j).norm()).collect();
    let max_norm = norms.iter().fold(0.0f64, |a, &v| a.max(v));
    let norm_threshold = rule.resolve(max_norm);
    let active: Vec<usize> = (0..nf).filter(|&j| norms[j] > norm_threshold).collect();
    let unassigned: Vec<usize> = (0..nf).filter(|&j| norms[j] <= norm_threshold).collect();

    let mut parent: Vec<usize> = (0..nf).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for (ai, &a) in active.iter().enumerate() {
        for &b in &active[ai + 1..] {
            let cos = cct_hat.column(a).dot(&cct_hat.column(b)) / (norms[a] * norms[b]);
            if cos.abs() > 1.0 - dependence_tol {
                let ra = find(&mut parent, a);
                let rb = find(&mut parent, b);
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_to_group = std::collections::HashMap::new();
    for &j in &active {
        let root = find(&mut parent, j);
        let idx = *root_to_group.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[idx].push(j);
    }

    let mut clusters: Vec<ColumnCluster> = groups
        .into_iter()
        .map(|members| {
            let leading_column = members
                .iter()
                .copied()
                .max_by(|&a, &b| norms[a].total_cmp(&norms[b]))
                .expect("groups are nonempty");
            let lead = cct_hat.column(leading_column);
            let cosines = members
                .iter()
                .map(|&j| {
                    if j == leading_column {
                        1.0
                    } else {
                        (cct_hat.column(j).dot(&lead) / (norms[j] * norms[leading_column])).abs()
                    }
                })
                .collect();
            ColumnCluster {
                members,
                leading_column,
                cosines,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        norms[b.leading_column]
            .total_cmp(&norms[a.leading_column])
            .then(a.leading_column.cmp(&b.leading_column))
    });

    Ok(ColumnClusters {
        clusters,
        unassigned,
        norm_threshold,
    })
}

/// Coupling columns recovered from the lag-1 block, one per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingColumns {
    #[serde(with = "crate::io::matrix_serde")]
    pub c_hat: DMatrix<f64>,
    /// Representative column j(i) chosen per leader: the cluster member
    /// with the largest diagonal entry. The representative's own entry of
    /// `c_hat` squares back to that diagonal exactly.
    pub column_map: Vec<usize>,
    /// Resolved zeroing threshold applied to the recovered entries.
    pub clamp_threshold: f64,
    /// Positions `(row, leader)` whose entry was more negative than the
    /// threshold allows. Couplings are nonnegative, so these point at
    /// estimation trouble; the entries are zeroed like the rest.
    pub negative_clamped: Vec<(usize, usize)>,
}

/// One coupling column per cluster: take the member with the largest
/// diagonal entry as representative and rescale, `ĉ = CCᵀ[:, j*] /
/// sqrt(CCᵀ[j*, j*])`. Entries below the clamp threshold are zeroed;
/// negative entries beyond it are zeroed and reported.
pub fn recover_c_columns(
    cct_hat: &DMatrix<f64>,
    clusters: &[ColumnCluster],
    clamp: &ThresholdRule,
) -> Result<CouplingColumns> {
    clamp.validate()?;
    let nf = cct_hat.nrows();
    let mut c_hat = DMatrix::zeros(nf, clusters.len());
    let mut column_map = Vec::with_capacity(clusters.len());
    for (a, cluster) in clusters.iter().enumerate() {
        if cluster.members.is_empty() {
            return Err(Error::Degenerate("empty column cluster".into()));
        }
        let mut j_star = cluster.members[0];
        for &j in &cluster.members {
            if j >= nf {
                return Err(Error::Shape(format!("cluster index {j} out of range")));
            }
            if cct_hat[(j, j)] > cct_hat[(j_star, j_star)] {
                j_star = j;
            }
        }
        let diag = cct_hat[(j_star, j_star)];
        if !(diag > 0.0) {
            return Err(Error::Degenerate(format!(
                "representative column {j_star} has non-positive diagonal {diag}"
            )));
        }
        let scale = diag.sqrt();
        for i in 0..nf {
            c_hat[(i, a)] = cct_hat[(i, j_star)] / scale;
        }
        column_map.push(j_star);
    }

    let clamp_threshold = clamp.resolve(c_hat.abs().max());
    let mut negative_clamped = Vec::new();
    for a in 0..c_hat.ncols() {
        for i in 0..nf {
            let v = c_hat[(i, a)];
            if v.abs() <= clamp_threshold {
                c_hat[(i, a)] = 0.0;
            } else if v < 0.0 {
                c_hat[(i, a)] = 0.0;
                negative_clamped.push((i, a));
            }
        }
    }

    Ok(CouplingColumns {
        c_hat,
        column_map,
        clamp_threshold,
        negative_clamped,
    })
}

/// Leader internal parameters: conjugate the lag-2 block with the
/// pseudoinverse of the recovered coupling matrix, `Ê = Ĉ⁺ · CECᵀ ·
/// (Ĉ⁺)ᵀ`, then keep the diagonal. The largest off-diagonal magnitude is
/// returned as a diagnostic for the diagonal-`E` assumption.
pub fn recover_e_diag(
    c_hat: &DMatrix<f64>,
    cect_hat: &DMatrix<f64>,
) -> Result<(Vec<f64>, f64)> {
    let nf = c_hat.nrows();
    if cect_hat.nrows() != nf || cect_hat.ncols() != nf {
        return Err(Error::Shape(format!(
            "lag-2 block must be {nf}x{nf}, got {}x{}",
            cect_hat.nrows(),
            cect_hat.ncols()
        )));
    }
    if c_hat.ncols() == 0 {
        return Err(Error::NoLeaderDetected);
    }
    let svd = SVD::new(c_hat.clone(), true, true);
    let max_sv = svd.singular_values.iter().fold(0.0f64, |a, &v| a.max(v));
    if !(max_sv > 0.0) || !max_sv.is_finite() {
        return Err(Error::Degenerate(
            "recovered coupling matrix has no usable singular values".into(),
        ));
    }
    let pinv = svd
        .pseudo_inverse(max_sv * 1e-12)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let e_full = &pinv * cect_hat * pinv.transpose();
    let nl = e_full.nrows();
    let e_diag: Vec<f64> = (0..nl).map(|a| e_full[(a, a)]).collect();
    let mut offdiag_max = 0.0f64;
    for a in 0..nl {
        for b in 0..nl {
            if a != b {
                offdiag_max = offdiag_max.max(e_full[(a, b)].abs());
            }
        }
    }
    Ok((e_diag, offdiag_max))
}

/// Pull strengths from the leader row-sum identity with `D = Cᵀ`:
/// `α_a = E_aa + Σ_i ĉ_ia`.
pub fn recover_alphas(c_hat: &DMatrix<f64>, e_diag: &[f64]) -> Result<Vec<f64>> {
    if c_hat.ncols() != e_diag.len() {
        return Err(Error::Shape(format!(
            "{} coupling columns vs {} internal parameters",
            c_hat.ncols(),
            e_diag.len()
        )));
    }
    Ok(e_diag
        .iter()
        .enumerate()
        .map(|(a, e)| e + c_hat.column(a).sum())
        .collect())
}

/// One reconstructed system with several hidden leaders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLeaderRecovery {
    #[serde(with = "crate::io::matrix_serde")]
    pub b_hat: DMatrix<f64>,
    /// Leader-to-follower couplings, one column per detected leader, in
    /// cluster order (strongest first).
    #[serde(with = "crate::io::matrix_serde")]
    pub c_hat: DMatrix<f64>,
    pub e_diag: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    /// Representative lag-1 column per recovered leader.
    pub column_map: Vec<usize>,
    /// Column groups per detected leader with their cosine similarities.
    pub clusters: Vec<ColumnCluster>,
    /// Columns attributed to no kept leader.
    pub unassigned: Vec<usize>,
    pub norm_threshold: f64,
    pub clamp_threshold: f64,
    pub dependence_tol: f64,
    /// Largest off-diagonal magnitude of the conjugated lag-2 block;
    /// large values mean the diagonal-`E` assumption is suspect.
    pub e_offdiag_max: f64,
    /// Relative asymmetry of the lag-1 block; large values mean the
    /// `D = Cᵀ` assumption is suspect.
    pub cd_asymmetry: f64,
    pub permutation_note: String,
    pub warnings: Vec<String>,
}

impl MultiLeaderRecovery {
    pub fn n_followers(&self) -> usize {
        self.b_hat.nrows()
    }

    pub fn n_leaders(&self) -> usize {
        self.c_hat.ncols()
    }

    /// The reconstructed full map `[[B, Ĉ], [Ĉᵀ, diag(Ê)]]`.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let nf = self.n_followers();
        let nl = self.n_leaders();
        let n = nf + nl;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (nf, nf)).copy_from(&self.b_hat);
        for i in 0..nf {
            for k in 0..nl {
                a[(i, nf + k)] = self.c_hat[(i, k)];
                a[(nf + k, i)] = self.c_hat[(i, k)];
            }
        }
        for k in 0..nl {
            a[(nf + k, nf + k)] = self.e_diag[k];
        }
        a
    }
}

/// Full multi-leader reconstruction from fitted lag blocks.
pub fn recover_multi(
    est: &BlockEstimates,
    opts: &MultiRecoveryOptions,
) -> Result<MultiLeaderRecovery> {
    let grouping = group_dependent_columns(est.cd_hat(), &opts.norm_threshold, opts.dependence_tol)?;
    if grouping.clusters.is_empty() {
        return Err(Error::NoLeaderDetected);
    }
    let mut clusters = grouping.clusters;
    let mut unassigned = grouping.unassigned;
    let mut warnings = Vec::new();

    // A leader cluster's best diagonal entry estimates a squared coupling,
    // so a non-positive one marks the cluster as noise that cleared the
    // norm threshold. Drop those instead of failing the whole recovery.
    clusters.retain(|cluster| {
        let best = cluster
            .members
            .iter()
            .map(|&j| est.cd_hat()[(j, j)])
            .fold(f64::NEG_INFINITY, f64::max);
        if best > 0.0 {
            true
        } else {
            warnings.push(format!(
                "dropped cluster {:?}: no positive diagonal entry",
                cluster.members
            ));
            unassigned.extend(cluster.members.iter().copied());
            false
        }
    });
    if clusters.is_empty() {
        return Err(Error::NoLeaderDetected);
    }
    unassigned.sort_unstable();

    if let Some(pinned) = opts.n_leaders {
        if pinned == 0 {
            return Err(Error::InvalidParameter(
                "pinned leader count must be at least 1".into(),
            ));
        }
        if clusters.len() != pinned {
            warnings.push(format!(
                "found {} column clusters but {pinned} leaders were requested",
                clusters.len()
            ));
            if clusters.len() > pinned {
                for dropped in clusters.drain(pinned..) {
                    unassigned.extend(dropped.members);
                }
                unassigned.sort_unstable();
            }
        }
    }

    let cols = recover_c_columns(est.cd_hat(), &clusters, &opts.clamp_threshold)?;
    let c_hat = cols.c_hat;
    if !cols.negative_clamped.is_empty() {
        warnings.push(format!(
            "{} negative coupling entries beyond the threshold were zeroed",
            cols.negative_clamped.len()
        ));
    }
    let nf = c_hat.nrows();
    for a in 0..c_hat.ncols() {
        for b in a + 1..c_hat.ncols() {
            let shared: Vec<usize> = (0..nf)
                .filter(|&i| c_hat[(i, a)] != 0.0 && c_hat[(i, b)] != 0.0)
                .collect();
            if !shared.is_empty() {
                warnings.push(format!(
                    "recovered leaders {a} and {b} share followers {shared:?} after thresholding"
                ));
            }
        }
    }

    let (e_diag, e_offdiag_max) = recover_e_diag(&c_hat, est.ced_hat())?;
    let alpha_hat = recover_alphas(&c_hat, &e_diag)?;

    let cd_max = est.cd_hat().abs().max();
    let cd_asymmetry = if cd_max > 0.0 {
        (est.cd_hat() - est.cd_hat().transpose()).abs().max() / cd_max
    } else {
        0.0
    };

    let e_scale = e_diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if e_offdiag_max > E_OFFDIAG_WARN * e_scale.max(1e-12) {
        warnings.push(format!(
            "off-diagonal internal coupling {e_offdiag_max:.3e} is large next to the diagonal; \
             the leaders may couple to each other"
        ));
    }
    if cd_asymmetry > ASYMMETRY_WARN {
        warnings.push(format!(
            "lag-1 block asymmetry {cd_asymmetry:.3} is large; leader coupling may not be symmetric"
        ));
    }
    if est.ridge() > 0.0 {
        warnings.push(format!(
            "lag regression needed a diagonal ridge of {:.3e}",
            est.ridge()
        ));
    }

    Ok(MultiLeaderRecovery {
        b_hat: est.b_hat().clone(),
        c_hat,
        e_diag,
        alpha_hat,
        column_map: cols.column_map,
        clusters,
        unassigned,
        norm_threshold: grouping.norm_threshold,
        clamp_threshold: cols.clamp_threshold,
        dependence_tol: opts.dependence_tol,
        e_offdiag_max,
        cd_asymmetry,
        permutation_note: PERMUTATION_NOTE.to_string(),
        warnings,
    })
}
