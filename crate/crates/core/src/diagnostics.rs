//! Subspace alignment and the solvability test.
//!
//! For orthonormal bases `U_d`, `U_t` with projectors `P = U U^T`, the
//! alignment operator is `O = P_d P_t P_d`. Its nonzero eigenvalues are the
//! squared cosines of the principal angles between the two subspaces, so a
//! value near 1 marks a direction shared by both.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::report::Table;
use crate::rgm::data_covariance;
use crate::rng::{self, SimRng};

pub const ORTHONORMAL_TOLERANCE: f64 = 1e-8;
pub const ALIGNMENT_THRESHOLDS: [f64; 3] = [0.8, 0.5, 0.1];

/// What [`projector`] does with a basis that is not orthonormal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonOrthonormal {
    #[default]
    Reject,
    Reorthonormalize,
}

/// Largest entry of `|U^T U - I|`.
pub fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let g = u.tr_mul(u);
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthonormal basis of the column span of `u` (columns dropped when they
/// are numerically dependent).
pub fn orthonormalize(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (left, s, _) = linalg::thin_svd(u)?;
    let top = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > 1e-10 * top.max(1e-300)).count();
    Ok(left.columns(0, rank).into_owned())
}

/// `P = U U^T` for the columns of `vectors`.
pub fn projector(vectors: &DMatrix<f64>, policy: NonOrthonormal) -> Result<DMatrix<f64>> {
    let defect = orthonormality_defect(vectors);
    let basis = if defect <= ORTHONORMAL_TOLERANCE {
        vectors.clone()
    } else {
        match policy {
            NonOrthonormal::Reject => {
                return Err(Error::arg(format!(
                    "basis is not orthonormal (defect {defect:e})"
                )))
            }
            NonOrthonormal::Reorthonormalize => orthonormalize(vectors)?,
        }
    };
    Ok(&basis * basis.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// Eigenvalues of `O`, descending.
    pub eigenvalues: Vec<f64>,
    /// `(threshold, number of eigenvalues above it)`.
    pub count_above: Vec<(f64, usize)>,
    /// Ranks of the data and trained projectors.
    pub subspace_dims: (usize, usize),
}

impl AlignmentReport {
    fn from_eigenvalues(eigenvalues: Vec<f64>, subspace_dims: (usize, usize)) -> Self {
        let count_above = ALIGNMENT_THRESHOLDS
            .iter()
            .map(|&t| (t, eigenvalues.iter().filter(|&&x| x > t).count()))
            .collect();
        Self {
            eigenvalues,
            count_above,
            subspace_dims,
        }
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|&&x| x > threshold).count()
    }

    /// Mean of the leading `k` eigenvalues.
    pub fn mean_top(&self, k: usize) -> f64 {
        mean_top(&self.eigenvalues, k)
    }

    pub fn to_table(&self) -> Table {
        let rows = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &x)| vec![(i + 1) as f64, x])
            .collect();
        Table::new(vec!["index".into(), "eigenvalue".into()], rows)
    }
}

fn mean_top(values: &[f64], k: usize) -> f64 {
    let k = k.min(values.len());
    if k == 0 {
        return 0.0;
    }
    values[..k].iter().sum::<f64>() / k as f64
}

fn projector_rank(p: &DMatrix<f64>) -> usize {
    p.trace().round().max(0.0) as usize
}

/// Eigenvalues of `P_data P_trained P_data`.
pub fn alignment_spectrum(p_data: &DMatrix<f64>, p_trained: &DMatrix<f64>) -> Result<AlignmentReport> {
    if p_data.shape() != p_trained.shape() || p_data.nrows() != p_data.ncols() {
        return Err(Error::dim(format!(
            "projectors of shapes {:?} and {:?}",
            p_data.shape(),
            p_trained.shape()
        )));
    }
    let o = p_data * p_trained * p_data;
    let o = (&o + o.transpose()) * 0.5;
    let (values, _) = linalg::symmetric_eigen(&o)?;
    Ok(AlignmentReport::from_eigenvalues(
        values,
        (projector_rank(p_data), projector_rank(p_trained)),
    ))
}

/// The nonzero part of the alignment spectrum straight from orthonormal
/// bases: the squared singular values of `U_d^T U_t`, descending.
pub fn alignment_from_bases(u_data: &DMatrix<f64>, u_trained: &DMatrix<f64>) -> Result<AlignmentReport> {
    if u_data.nrows() != u_trained.nrows() {
        return Err(Error::dim("bases live in different dimensions"));
    }
    let (_, s, _) = linalg::thin_svd(&u_data.tr_mul(u_trained))?;
    let values = s.iter().map(|x| x * x).collect();
    Ok(AlignmentReport::from_eigenvalues(
        values,
        (u_data.ncols(), u_trained.ncols()),
    ))
}

/// A uniformly random `k`-dimensional orthonormal basis in `dim` dimensions.
pub fn random_subspace(dim: usize, k: usize, rng: &mut SimRng) -> Result<DMatrix<f64>> {
    if k > dim {
        return Err(Error::arg(format!("cannot pick {k} directions in {dim} dimensions")));
    }
    let g = DMatrix::from_fn(dim, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(g.qr().q())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolvabilityConfig {
    pub trials: usize,
    /// Initial subset size of every trial.
    pub subset_size: usize,
    /// Eigenvalues `>= eigen_floor * max` count as retained.
    pub eigen_floor: f64,
    /// Stable when every pair's mean top-k alignment reaches this.
    pub threshold: f64,
    /// Fractional subset growth per step.
    pub growth: f64,
    /// More retained directions than this fraction of the dimension means
    /// no reduction.
    pub max_rank_fraction: f64,
    pub seed: u64,
}

impl Default for SolvabilityConfig {
    fn default() -> Self {
        Self {
            trials: 5,
            subset_size: 200,
            eigen_floor: 0.01,
            threshold: 0.8,
            growth: 0.1,
            max_rank_fraction: 0.9,
            seed: 0,
        }
    }
}

impl SolvabilityConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::arg("solvability check needs at least 2 trials"));
        }
        if self.subset_size < 2 || self.subset_size > dataset_len {
            return Err(Error::arg(format!(
                "subset size {} must lie in [2, {dataset_len}]",
                self.subset_size
            )));
        }
        if !(0.0..=1.0).contains(&self.eigen_floor) || !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::arg("eigen floor and threshold must lie in [0, 1]"));
        }
        if !(self.growth > 0.0) {
            return Err(Error::arg("growth must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnstableReason {
    /// Trials disagree on the retained subspace.
    LowAlignment,
    /// Almost every direction is retained.
    NoReduction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable(UnstableReason),
    /// The data has no variance at all.
    TriviallyStable,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    /// Subset size when the retained count settled.
    pub final_subset: usize,
    pub retained: usize,
    pub growth_steps: usize,
    /// Orthonormal retained eigenvectors.
    pub basis: DMatrix<f64>,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct PairAlignment {
    pub first: usize,
    pub second: usize,
    pub report: AlignmentReport,
    /// Mean of the top `min(k_first, k_second)` eigenvalues.
    pub mean_top_k: f64,
}

#[derive(Debug, Clone)]
pub struct SolvabilityReport {
    pub trials: Vec<TrialResult>,
    pub pairs: Vec<PairAlignment>,
    pub verdict: Verdict,
}

impl SolvabilityReport {
    pub fn to_table(&self) -> Table {
        let rows = self
            .pairs
            .iter()
            .map(|p| {
                vec![
                    p.first as f64,
                    p.second as f64,
                    self.trials[p.first].retained as f64,
                    self.trials[p.second].retained as f64,
                    p.mean_top_k,
                ]
            })
            .collect();
        Table::new(
            ["trial_a", "trial_b", "retained_a", "retained_b", "mean_top_k"]
                .map(String::from)
                .to_vec(),
            rows,
        )
    }
}

fn retained_basis(dataset: &Dataset, idx: &[usize], floor: f64) -> Result<(DMatrix<f64>, f64)> {
    let cov = data_covariance(&dataset.subset(idx)?)?;
    let (values, vectors) = linalg::symmetric_eigen(&cov)?;
    let max = values.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Ok((DMatrix::zeros(dataset.dim(), 0), 0.0));
    }
    let k = values.iter().filter(|&&l| l >= floor * max).count();
    Ok((vectors.columns(0, k).into_owned(), max))
}

fn run_trial(dataset: &Dataset, cfg: &SolvabilityConfig, trial: usize) -> Result<TrialResult> {
    let mut r = rng::stream(cfg.seed, trial as u64);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut r);
    let mut n = cfg.subset_size;
    let (mut basis, mut max) = retained_basis(dataset, &order[..n], cfg.eigen_floor)?;
    let mut unchanged = 0;
    let mut steps = 0;
    while unchanged < 2 && n < dataset.len() {
        let next = ((n as f64 * (1.0 + cfg.growth)).ceil() as usize).clamp(n + 1, dataset.len());
        let (b, m) = retained_basis(dataset, &order[..next], cfg.eigen_floor)?;
        unchanged = if b.ncols() == basis.ncols() { unchanged + 1 } else { 0 };
        basis = b;
        max = m;
        n = next;
        steps += 1;
    }
    Ok(TrialResult {
        trial,
        final_subset: n,
        retained: basis.ncols(),
        growth_steps: steps,
        basis,
        max_eigenvalue: max,
    })
}

/// Alignment between two retained bases.
pub fn pairwise_alignment(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(AlignmentReport, f64)> {
    let report = alignment_from_bases(a, b)?;
    let k = a.ncols().min(b.ncols());
    let mean = report.mean_top(k);
    Ok((report, mean))
}

/// Draws random subsets, grows each until its retained eigenvector count
/// stops changing, and compares the resulting subspaces pairwise.
pub fn solvability_check(dataset: &Dataset, config: &SolvabilityConfig) -> Result<SolvabilityReport> {
    config.validate(dataset.len())?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(dataset, config, t))
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    for i in 0..trials.len() {
        for j in i + 1..trials.len() {
            let (report, mean_top_k) = pairwise_alignment(&trials[i].basis, &trials[j].basis)?;
            pairs.push(PairAlignment {
                first: i,
                second: j,
                report,
                mean_top_k,
            });
        }
    }

    let verdict = if trials.iter().all(|t| t.max_eigenvalue <= 0.0) {
        Verdict::TriviallyStable
    } else if trials
        .iter()
        .any(|t| t.retained as f64 > config.max_rank_fraction * dataset.dim() as f64)
    {
        Verdict::Unstable(UnstableReason::NoReduction)
    } else if pairs.iter().all(|p| p.mean_top_k >= config.threshold) {
        Verdict::Stable
    } else {
        Verdict::Unstable(UnstableReason::LowAlignment)
    };
    Ok(SolvabilityReport {
        trials,
        pairs,
        verdict,
    })
}
