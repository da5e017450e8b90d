//! Building RBM parameters directly from data.
//!
//! The recipe: covariance eigenvectors of the data, a low-pass Fourier
//! truncation of each, a singular-value estimate from a block-spin map,
//! and a weight matrix assembled mode by mode.
//!
//! Fourier modes use the centred convention `k, p ∈ [-α, α]`; the
//! coefficients of mode `I` are
//! `C_kp = Σ_{l,n} e_I(l, n) exp(-i 2π (l k + n p) / L_v)` with 0-based
//! site indices, so `C_{-k,-p} = conj(C_kp)` for real eigenvectors. The
//! weights are
//!
//! ```text
//! W_(m,n)(a,b) = gain · Σ_I S_I v_I(m, n) h_I(a, b)
//! v_I(m, n) = (1/L_v²) Σ_kp C_kp exp(+i 2π (m k + n p) / L_v)
//! h_I(a, b) = (1/L_h²) Σ_xy (C_xy / 2) exp(-i 2π (a x + b y) / L_h)
//! ```
//!
//! Modes beyond `L_h / 2` alias on the hidden lattice; that is allowed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coarse::{self, BlockSpinSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rbm::RbmParams;
use crate::spectral::{self, angle, phase};

/// Largest tolerated imaginary part of an assembled vector.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;
/// Eigenvalues at or below this fraction of the mean squared data entry are
/// treated as zero.
const NULL_EIGEN_FRACTION: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgmConfig {
    pub visible_side: usize,
    pub hidden_side: usize,
    /// Retained modes; `None` keeps eigenvalues `>= kappa_floor * max`.
    pub kappa: Option<usize>,
    pub kappa_floor: f64,
    /// Fourier cutoff per axis.
    pub alpha: usize,
    /// Block-spin map used for the singular-value estimates.
    pub block_spec: BlockSpinSpec,
    /// Multiplies the assembled weights.
    pub gain: f64,
}

/// `round(10 L_v / 80)`, at least 1.
pub fn default_alpha(visible_side: usize) -> usize {
    ((10.0 * visible_side as f64 / 80.0).round() as usize).max(1)
}

impl RgmConfig {
    /// Defaults: `κ` from a 1% eigenvalue floor, `α = round(10 L_v / 80)`,
    /// a 4x4 block with stride `L_v / L_h`, unit gain.
    pub fn new(visible_side: usize, hidden_side: usize) -> Result<Self> {
        if hidden_side == 0 || visible_side % hidden_side != 0 {
            return Err(Error::arg(format!(
                "hidden side {hidden_side} does not divide visible side {visible_side}"
            )));
        }
        let stride = visible_side / hidden_side;
        let cfg = Self {
            visible_side,
            hidden_side,
            kappa: None,
            kappa_floor: 0.01,
            alpha: default_alpha(visible_side).min(hidden_side),
            block_spec: BlockSpinSpec::new(visible_side, 4, stride)?,
            gain: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (lv, lh) = (self.visible_side, self.hidden_side);
        if lv == 0 || lh == 0 || lh > lv {
            return Err(Error::arg(format!("invalid sides {lv} -> {lh}")));
        }
        if let Some(k) = self.kappa {
            if k > lh * lh {
                return Err(Error::arg(format!("kappa {k} exceeds L_h^2 = {}", lh * lh)));
            }
        }
        if !(0.0..=1.0).contains(&self.kappa_floor) {
            return Err(Error::arg("kappa floor must lie in [0, 1]"));
        }
        if self.alpha > lh {
            return Err(Error::arg(format!("alpha {} exceeds L_h = {lh}", self.alpha)));
        }
        if 2 * self.alpha + 1 > lv {
            return Err(Error::arg(format!(
                "alpha {} needs 2 alpha + 1 <= L_v = {lv}",
                self.alpha
            )));
        }
        self.block_spec.validate()?;
        if self.block_spec.visible_side != lv {
            return Err(Error::dim("block spec side differs from L_v"));
        }
        if !self.gain.is_finite() {
            return Err(Error::arg("gain must be finite"));
        }
        Ok(())
    }
}

/// Retained Fourier coefficients of one mode, `k, p ∈ [-α, α]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoeffs {
    side: usize,
    alpha: usize,
    values: Vec<Complex64>,
}

impl FourierCoeffs {
    /// `values` is row-major over `(k, p)`, `k` outer, both from `-α`.
    pub fn new(side: usize, alpha: usize, values: Vec<Complex64>) -> Result<Self> {
        let w = 2 * alpha + 1;
        if values.len() != w * w {
            return Err(Error::dim(format!(
                "{} coefficients for alpha {alpha}, expected {}",
                values.len(),
                w * w
            )));
        }
        if w > side {
            return Err(Error::arg(format!("alpha {alpha} too large for side {side}")));
        }
        Ok(Self {
            side,
            alpha,
            values,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn get(&self, k: isize, p: isize) -> Complex64 {
        let a = self.alpha as isize;
        if k.abs() > a || p.abs() > a {
            return Complex64::new(0.0, 0.0);
        }
        let w = 2 * a + 1;
        self.values[((k + a) * w + (p + a)) as usize]
    }

    /// Modes `(k, p)` in storage order.
    pub fn modes(&self) -> impl Iterator<Item = (isize, isize)> {
        let a = self.alpha as isize;
        (-a..=a).flat_map(move |k| (-a..=a).map(move |p| (k, p)))
    }

    /// Largest `|C_kp - conj(C_-k-p)|`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        self.modes()
            .map(|(k, p)| (self.get(k, p) - self.get(-k, -p).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `(1/L²) Σ_kp C_kp exp(sign · i 2π (l k + n p) / L)` on an `L x L`
    /// lattice, row-major, separably.
    fn synthesize(&self, lattice: usize, sign: f64) -> Vec<Complex64> {
        let a = self.alpha as isize;
        let w = 2 * self.alpha + 1;
        let twiddle = |x: usize, k: isize| phase(sign * angle(k * x as isize, lattice));
        // partial[l][p] = Σ_k C_kp e(l k)
        let mut partial = vec![Complex64::new(0.0, 0.0); lattice * w];
        for l in 0..lattice {
            for k in -a..=a {
                let t = twiddle(l, k);
                for p in -a..=a {
                    partial[l * w + (p + a) as usize] += self.get(k, p) * t;
                }
            }
        }
        let norm = 1.0 / (lattice * lattice) as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); lattice * lattice];
        for l in 0..lattice {
            for n in 0..lattice {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in -a..=a {
                    acc += partial[l * w + (p + a) as usize] * twiddle(n, p);
                }
                out[l * lattice + n] = acc * norm;
            }
        }
        out
    }

    /// The low-pass filtered mode on the visible lattice, `v_I`.
    pub fn visible_vector(&self) -> Result<DVector<f64>> {
        real_part(self.synthesize(self.side, 1.0))
    }

    /// The transferred mode on an `L_h x L_h` lattice, `h_I`.
    pub fn hidden_vector(&self, hidden_side: usize) -> Result<DVector<f64>> {
        let mut z = self.synthesize(hidden_side, -1.0);
        z.iter_mut().for_each(|c| *c *= 0.5);
        real_part(z)
    }
}

fn real_part(z: Vec<Complex64>) -> Result<DVector<f64>> {
    let worst = z.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if worst > IMAGINARY_TOLERANCE {
        return Err(Error::Numeric(format!(
            "assembled vector has imaginary residual {worst:e}"
        )));
    }
    Ok(DVector::from_iterator(z.len(), z.iter().map(|c| c.re)))
}

/// `(1/N) Σ_A (x_A - x̄)(x_A - x̄)^T`.
pub fn data_covariance(dataset: &Dataset) -> Result<DMatrix<f64>> {
    if dataset.len() < 2 {
        return Err(Error::arg(format!(
            "covariance needs at least 2 samples, got {}",
            dataset.len()
        )));
    }
    let mut x = dataset.to_matrix();
    let mean = dataset.mean();
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut c = x.tr_mul(&x) / dataset.len() as f64;
    // exact symmetry regardless of gemm blocking
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModes {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns matching `eigenvalues`.
    pub vectors: DMatrix<f64>,
}

pub fn top_covariance_modes(cov: &DMatrix<f64>, kappa: usize) -> Result<CovarianceModes> {
    let tol = 1e-8 * cov.amax().max(1.0);
    let asym = linalg::asymmetry(cov);
    if asym > tol {
        return Err(Error::arg(format!("covariance is not symmetric (|C - C^T| = {asym:e})")));
    }
    if kappa > cov.nrows() {
        return Err(Error::arg(format!(
            "kappa {kappa} exceeds dimension {}",
            cov.nrows()
        )));
    }
    let (values, vectors) = linalg::symmetric_eigen(cov)?;
    Ok(CovarianceModes {
        eigenvalues: values[..kappa].to_vec(),
        vectors: vectors.columns(0, kappa).into_owned(),
    })
}

/// DFT of `eigvec` on its `L x L` lattice, keeping `|k|, |p| <= α`.
pub fn fourier_truncate(eigvec: &[f64], alpha: usize) -> Result<FourierCoeffs> {
    let side = linalg::lattice_side(eigvec.len()).ok_or_else(|| {
        Error::dim(format!("length {} is not a perfect square", eigvec.len()))
    })?;
    let raw = spectral::dft2(eigvec, side)?;
    let a = alpha as isize;
    if 2 * alpha + 1 > side {
        return Err(Error::arg(format!("alpha {alpha} too large for side {side}")));
    }
    let wrap = |k: isize| k.rem_euclid(side as isize) as usize;
    let values = (-a..=a)
        .flat_map(|k| (-a..=a).map(move |p| (k, p)))
        .map(|(k, p)| raw[wrap(k) * side + wrap(p)])
        .collect();
    FourierCoeffs::new(side, alpha, values)
}

/// `|M^T e|` for the block-spin matrix `M` of `spec`.
pub fn estimate_singular_value(eigvec: &DVector<f64>, spec: &BlockSpinSpec) -> Result<f64> {
    let m = coarse::block_spin_matrix(spec)?;
    Ok(coarse::apply_block_spin(eigvec, &m)?.norm())
}

/// [`estimate_singular_value`] for every column of `modes`, sharing one
/// block matrix.
pub fn estimate_singular_values(modes: &DMatrix<f64>, spec: &BlockSpinSpec) -> Result<Vec<f64>> {
    let m = coarse::block_spin_matrix(spec)?;
    if modes.nrows() != m.nrows() {
        return Err(Error::dim(format!(
            "modes of length {} against a {}-row block matrix",
            modes.nrows(),
            m.nrows()
        )));
    }
    let sums = m.tr_mul(modes);
    Ok(sums.column_iter().map(|c| c.norm()).collect())
}

/// `gain · Σ_I S_I v_I h_I^T`, accumulated in mode order.
pub fn assemble_rgm_weights(
    coeffs: &[FourierCoeffs],
    singular_values: &[f64],
    config: &RgmConfig,
) -> Result<DMatrix<f64>> {
    if coeffs.len() != singular_values.len() {
        return Err(Error::dim(format!(
            "{} coefficient sets for {} singular values",
            coeffs.len(),
            singular_values.len()
        )));
    }
    let (nv, nh) = (
        config.visible_side * config.visible_side,
        config.hidden_side * config.hidden_side,
    );
    if coeffs.iter().any(|c| c.side() != config.visible_side) {
        return Err(Error::dim("coefficients were taken on a different lattice"));
    }
    let pairs = coeffs
        .par_iter()
        .map(|c| Ok((c.visible_vector()?, c.hidden_vector(config.hidden_side)?)))
        .collect::<Result<Vec<_>>>()?;
    let k = pairs.len();
    let mut v = DMatrix::zeros(nv, k);
    let mut h = DMatrix::zeros(nh, k);
    for (i, (vi, hi)) in pairs.iter().enumerate() {
        v.set_column(i, &(vi * (config.gain * singular_values[i])));
        h.set_column(i, hi);
    }
    Ok(v * h.transpose())
}

/// `(S_1 v̂, S_1 ĥ)` with `v̂, ĥ` the unit vectors along the inputs.
pub fn rgm_biases(
    top_visible: &DVector<f64>,
    top_hidden: &DVector<f64>,
    s1: f64,
) -> (DVector<f64>, DVector<f64>) {
    (
        linalg::normalized(top_visible) * s1,
        linalg::normalized(top_hidden) * s1,
    )
}

/// Everything computed on the way to the parameters.
#[derive(Debug, Clone)]
pub struct RgmBuild {
    pub params: RbmParams,
    /// Number of modes actually used.
    pub kappa: usize,
    /// Covariance eigenvalues of the used modes.
    pub eigenvalues: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub coeffs: Vec<FourierCoeffs>,
    /// The eigenvectors, as unit columns.
    pub modes: DMatrix<f64>,
}

pub fn build_rgm(dataset: &Dataset, config: &RgmConfig) -> Result<RbmParams> {
    build_rgm_report(dataset, config).map(|b| b.params)
}

/// [`build_rgm`] keeping the intermediate quantities.
///
/// Each eigenvector is oriented to have non-negative overlap with the data
/// mean (largest entry positive when the overlap vanishes), which fixes the
/// sign of the biases.
pub fn build_rgm_report(dataset: &Dataset, config: &RgmConfig) -> Result<RgmBuild> {
    config.validate()?;
    if dataset.side() != config.visible_side {
        return Err(Error::dim(format!(
            "dataset side {} but config expects {}",
            dataset.side(),
            config.visible_side
        )));
    }
    let cov = data_covariance(dataset)?;
    let (all_values, all_vectors) = linalg::symmetric_eigen(&cov)?;
    let max = all_values.first().copied().unwrap_or(0.0).max(0.0);
    let requested = match config.kappa {
        Some(k) => k,
        None => all_values
            .iter()
            .filter(|&&l| max > 0.0 && l >= config.kappa_floor * max)
            .count()
            .min(config.hidden_side * config.hidden_side),
    };
    let scale = dataset.as_flat().iter().map(|x| x * x).sum::<f64>() / dataset.as_flat().len() as f64;
    let usable = all_values
        .iter()
        .take_while(|&&l| l > NULL_EIGEN_FRACTION * scale)
        .count();
    let kappa = requested.min(usable);
    if kappa < requested {
        log::warn!("only {kappa} of {requested} covariance modes are non-degenerate");
    }

    let mean = dataset.mean();
    let mut modes = all_vectors.columns(0, kappa).into_owned();
    linalg::canonicalize_signs(&mut modes, None);
    for mut col in modes.column_iter_mut() {
        if col.dot(&mean) < -1e-12 * mean.norm() {
            col.neg_mut();
        }
    }

    let singular_values = estimate_singular_values(&modes, &config.block_spec)?;
    let coeffs = (0..kappa)
        .into_par_iter()
        .map(|i| fourier_truncate(modes.column(i).as_slice(), config.alpha))
        .collect::<Result<Vec<_>>>()?;
    let weights = assemble_rgm_weights(&coeffs, &singular_values, config)?;

    let (nv, nh) = weights.shape();
    let (bv, bh) = match coeffs.first() {
        Some(c) => rgm_biases(
            &c.visible_vector()?,
            &c.hidden_vector(config.hidden_side)?,
            singular_values[0],
        ),
        None => (DVector::zeros(nv), DVector::zeros(nh)),
    };
    let params = RbmParams::new(weights, bv, bh, config.visible_side, config.hidden_side)?;
    Ok(RgmBuild {
        params,
        kappa,
        eigenvalues: all_values[..kappa].to_vec(),
        singular_values,
        coeffs,
        modes,
    })
}
