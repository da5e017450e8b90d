//! Singular-value and Fourier diagnostics for weight matrices.
//!
//! A weight matrix `W` (visible × hidden) is decomposed as
//! `W = Σ_I S_I |v,I⟩⟨h,I|`. The visible vectors live on the input lattice
//! and the hidden vectors on the output lattice, so each can be Fourier
//! transformed and radially averaged. Relevant directions (large `S_I`) have
//! their support at low modes, and the hidden spectrum matches the visible
//! one up to an overall factor once the high modes are dropped.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg;

/// Singular triples of a matrix, ordered by non-increasing singular value.
///
/// Column `I` of `visible` (resp. `hidden`) is `|v,I⟩` (resp. `⟨h,I|`).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdBundle {
    pub singular_values: Vec<f64>,
    pub visible: DMatrix<f64>,
    pub hidden: DMatrix<f64>,
}

impl SvdBundle {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn visible_vector(&self, i: usize) -> DVector<f64> {
        self.visible.column(i).into_owned()
    }

    pub fn hidden_vector(&self, i: usize) -> DVector<f64> {
        self.hidden.column(i).into_owned()
    }

    /// `Σ_I S_I |v,I⟩⟨h,I|`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.visible.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.hidden.transpose()
    }

    /// Visible and hidden lattice sides, when both vector lengths are
    /// perfect squares.
    pub fn sides(&self) -> Option<(usize, usize)> {
        Some((
            linalg::lattice_side(self.visible.nrows())?,
            linalg::lattice_side(self.hidden.nrows())?,
        ))
    }
}

/// Full thin SVD of `matrix`.
///
/// Signs are fixed so that every visible vector's largest-magnitude entry is
/// positive (lowest index on ties) and the hidden vector follows it.
pub fn svd(matrix: &DMatrix<f64>) -> Result<SvdBundle> {
    let (mut u, s, mut v) = linalg::thin_svd(matrix)?;
    linalg::canonicalize_signs(&mut u, Some(&mut v));
    Ok(SvdBundle {
        singular_values: s,
        visible: u,
        hidden: v,
    })
}

/// Which singular triples survive truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// The `k` largest.
    TopK(usize),
    /// Those with `S_I >= floor * S_1`.
    RelativeFloor(f64),
}

pub fn truncate_svd(bundle: &SvdBundle, rule: Truncation) -> Result<SvdBundle> {
    let keep = match rule {
        Truncation::TopK(k) => k.min(bundle.rank()),
        Truncation::RelativeFloor(floor) => {
            if !(0.0..=1.0).contains(&floor) {
                return Err(Error::arg(format!(
                    "relative floor must lie in [0, 1], got {floor}"
                )));
            }
            let top = bundle.singular_values.first().copied().unwrap_or(0.0);
            bundle
                .singular_values
                .iter()
                .take_while(|&&s| s >= floor * top)
                .count()
        }
    };
    Ok(SvdBundle {
        singular_values: bundle.singular_values[..keep].to_vec(),
        visible: bundle.visible.columns(0, keep).into_owned(),
        hidden: bundle.hidden.columns(0, keep).into_owned(),
    })
}

fn check_square(len: usize, side: usize) -> Result<()> {
    if side == 0 || len != side * side {
        return Err(Error::dim(format!(
            "{len} values do not form a {side}x{side} lattice"
        )));
    }
    Ok(())
}

/// Unshifted 2D DFT of a row-major `side x side` array:
/// `F(u, v) = Σ_{m,n} f(m, n) exp(-i 2π (m u + n v) / L)`, with `u` the row
/// frequency. Output is row-major with `u, v ∈ 0..L`.
pub fn dft2(values: &[f64], side: usize) -> Result<Vec<Complex64>> {
    check_square(values.len(), side)?;
    let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let fft = FftPlanner::new().plan_fft_forward(side);
    // rows
    for row in data.chunks_exact_mut(side) {
        fft.process(row);
    }
    // columns
    let mut col = vec![Complex64::new(0.0, 0.0); side];
    for c in 0..side {
        for r in 0..side {
            col[r] = data[r * side + c];
        }
        fft.process(&mut col);
        for r in 0..side {
            data[r * side + c] = col[r];
        }
    }
    Ok(data)
}

/// 2D DFT with the zero frequency moved to index `(L/2, L/2)` (integer
/// division), the layout of `numpy.fft.fftshift`.
pub fn fft2d(values: &[f64], side: usize) -> Result<Vec<Complex64>> {
    let raw = dft2(values, side)?;
    let h = side / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); raw.len()];
    for u in 0..side {
        for v in 0..side {
            out[((u + h) % side) * side + (v + h) % side] = raw[u * side + v];
        }
    }
    Ok(out)
}

/// Annulus averages of a centred 2D spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpectrum {
    /// Mean of `|F|` over each annulus; index = mode (integer radius).
    pub magnitudes: Vec<f64>,
    /// Mean of `|F|^2` over each annulus.
    pub power: Vec<f64>,
    /// Number of frequency bins in each annulus.
    pub counts: Vec<usize>,
}

impl RadialSpectrum {
    pub fn max_mode(&self) -> usize {
        self.magnitudes.len().saturating_sub(1)
    }

    /// `Σ_r counts[r] * power[r]`, which equals `Σ |F|^2`.
    pub fn total_power(&self) -> f64 {
        self.counts
            .iter()
            .zip(&self.power)
            .map(|(&c, &p)| c as f64 * p)
            .sum()
    }
}

/// Radius bin of frequency offset `(du, dv)` from the centre.
pub fn annulus_index(du: isize, dv: isize) -> usize {
    (((du * du + dv * dv) as f64).sqrt()).round() as usize
}

/// Radially averaged magnitude of the 2D DFT of a flattened lattice vector.
/// Bins have width 1 and are centred on integer radii.
pub fn radial_fft(vector: &[f64], side: usize) -> Result<RadialSpectrum> {
    let spectrum = fft2d(vector, side)?;
    let c = (side / 2) as isize;
    let mut sums = Vec::new();
    let mut power = Vec::new();
    let mut counts = Vec::new();
    for u in 0..side {
        for v in 0..side {
            let r = annulus_index(u as isize - c, v as isize - c);
            if r >= sums.len() {
                sums.resize(r + 1, 0.0);
                power.resize(r + 1, 0.0);
                counts.resize(r + 1, 0);
            }
            let z = spectrum[u * side + v];
            sums[r] += z.norm();
            power[r] += z.norm_sqr();
            counts[r] += 1;
        }
    }
    let mean = |s: &[f64]| {
        s.iter()
            .zip(&counts)
            .map(|(x, &n)| if n > 0 { x / n as f64 } else { 0.0 })
            .collect::<Vec<_>>()
    };
    Ok(RadialSpectrum {
        magnitudes: mean(&sums),
        power: mean(&power),
        counts,
    })
}

/// Fraction of the spectral energy at modes `<= cutoff`.
pub fn low_mode_support(spectrum: &RadialSpectrum, cutoff: usize) -> f64 {
    let total = spectrum.total_power();
    if total <= 0.0 {
        return 1.0;
    }
    let low: f64 = spectrum
        .counts
        .iter()
        .zip(&spectrum.power)
        .take(cutoff + 1)
        .map(|(&c, &p)| c as f64 * p)
        .sum();
    (low / total).clamp(0.0, 1.0)
}

/// How the hidden spectrum is scaled before comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rescale {
    Fixed(f64),
    /// Least-squares factor over the shared modes.
    Fit,
}

/// Agreement between the radial spectra of a visible/hidden singular pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub index: usize,
    pub singular_value: f64,
    pub visible: RadialSpectrum,
    pub hidden: RadialSpectrum,
    /// Highest mode compared, `floor(L_h / 2)`.
    pub max_shared: usize,
    pub rescale: f64,
    /// `‖vis - rescale * hid‖ / ‖vis‖` over modes `0..=max_shared`.
    pub relative_difference: f64,
}

pub fn compare_visible_hidden(
    bundle: &SvdBundle,
    index: usize,
    rescale: Rescale,
) -> Result<PairComparison> {
    if index >= bundle.rank() {
        return Err(Error::arg(format!(
            "singular index {index} out of range (rank {})",
            bundle.rank()
        )));
    }
    let (lv, lh) = bundle
        .sides()
        .ok_or_else(|| Error::dim("singular vectors do not live on square lattices"))?;
    let visible = radial_fft(bundle.visible.column(index).as_slice(), lv)?;
    let hidden = radial_fft(bundle.hidden.column(index).as_slice(), lh)?;
    let max_shared = (lh / 2).min(visible.max_mode()).min(hidden.max_mode());
    let vis = &visible.magnitudes[..=max_shared];
    let hid = &hidden.magnitudes[..=max_shared];
    let factor = match rescale {
        Rescale::Fixed(f) => f,
        Rescale::Fit => {
            let num: f64 = vis.iter().zip(hid).map(|(a, b)| a * b).sum();
            let den: f64 = hid.iter().map(|b| b * b).sum();
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        }
    };
    let diff: f64 = vis
        .iter()
        .zip(hid)
        .map(|(a, b)| (a - factor * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = vis.iter().map(|a| a * a).sum::<f64>().sqrt();
    let relative_difference = if norm > 0.0 {
        diff / norm
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(PairComparison {
        index,
        singular_value: bundle.singular_values[index],
        visible,
        hidden,
        max_shared,
        rescale: factor,
        relative_difference,
    })
}

/// The three stages of the effective parameter count of a fully connected
/// layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    /// `N_v * N_h` weights.
    pub naive: u64,
    /// After keeping `k` singular triples: `k * N_v` (the hidden vectors are
    /// fixed by the visible ones and the singular values are overall
    /// factors).
    pub after_truncation: u64,
    /// After restricting each visible vector to modes `<= cutoff`: the
    /// number of distinct modes grows as the square of the mode number, so
    /// the count shrinks by `(max_mode / cutoff)^2`. Rounded down.
    pub effective: u64,
}

pub fn effective_parameter_count(
    n_visible: u64,
    n_hidden: u64,
    kept: u64,
    cutoff_mode: u64,
    max_mode: u64,
) -> Result<ParameterCount> {
    if cutoff_mode == 0 {
        return Err(Error::arg("cutoff mode must be positive"));
    }
    if cutoff_mode > max_mode {
        return Err(Error::arg(format!(
            "cutoff mode {cutoff_mode} exceeds max mode {max_mode}"
        )));
    }
    if n_visible == 0 || n_hidden == 0 || kept == 0 {
        return Err(Error::arg("dimensions and kept count must be positive"));
    }
    if kept > n_hidden.min(n_visible) {
        return Err(Error::arg(format!(
            "cannot keep {kept} singular values of a {n_visible}x{n_hidden} matrix"
        )));
    }
    let naive = n_visible * n_hidden;
    let after_truncation = kept * n_visible;
    let effective = (after_truncation as u128 * (cutoff_mode * cutoff_mode) as u128
        / (max_mode * max_mode) as u128) as u64;
    Ok(ParameterCount {
        naive,
        after_truncation,
        effective,
    })
}

/// `exp(i θ)`.
pub(crate) fn phase(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), theta.sin())
}

/// `2π k / L`, reduced modulo the lattice so large products stay accurate.
pub(crate) fn angle(k: isize, l: usize) -> f64 {
    2.0 * PI * (k.rem_euclid(l as isize) as f64) / l as f64
}
