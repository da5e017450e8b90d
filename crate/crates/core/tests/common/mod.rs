//! Independent reference implementations used as test oracles. None of these
//! call into the library's numerical routines.
#![allow(dead_code)]

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rgflow::Complex64;

/// Direct `O(L^4)` DFT, `F(u, v) = Σ f(m, n) e^{-i2π(mu + nv)/L}`, unshifted.
pub fn naive_dft2(values: &[f64], side: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); side * side];
    for u in 0..side {
        for v in 0..side {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..side {
                for n in 0..side {
                    let th = -TAU * ((m * u + n * v) % side) as f64 / side as f64;
                    acc += values[m * side + n] * Complex64::new(th.cos(), th.sin());
                }
            }
            out[u * side + v] = acc;
        }
    }
    out
}

/// Cyclic Jacobi eigensolver for symmetric matrices; eigenvalues descending.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// One-sided Jacobi (Hestenes) singular values, descending.
pub fn jacobi_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut a = if m.nrows() >= m.ncols() { m.clone() } else { m.transpose() };
    let n = a.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..a.nrows() {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * x - s * y;
                    a[(k, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Two-pass population covariance over row samples.
pub fn naive_covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for i in 0..d {
            mean[i] += r[i];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut c = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for r in rows {
                acc += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
            c[(i, j)] = acc / n as f64;
        }
    }
    c
}

/// Block-spin matrix built straight from the definition, one entry at a time.
pub fn block_matrix_oracle(lv: usize, b: usize, stride: usize) -> DMatrix<f64> {
    let lh = lv / stride;
    DMatrix::from_fn(lv * lv, lh * lh, |i, j| {
        let (r, c) = (i / lv, i % lv);
        let (br, bc) = (j / lh, j % lh);
        let inside = |x: usize, start: usize| x >= start && x < start + b;
        if inside(r, br * stride) && inside(c, bc * stride) {
            1.0
        } else {
            0.0
        }
    })
}

/// Direct evaluation of the weight formula: for every `(m, n, a, b)` sum over
/// modes, `(k, p)` and `(x, y)` with complex arithmetic.
/// `coeffs[I][(k + α)(2α + 1) + (p + α)]` holds `C^I_kp`.
pub fn rgm_weight_oracle(
    coeffs: &[Vec<Complex64>],
    s: &[f64],
    lv: usize,
    lh: usize,
    alpha: usize,
) -> DMatrix<f64> {
    let a = alpha as i64;
    let w = 2 * alpha + 1;
    let c = |i: usize, k: i64, p: i64| coeffs[i][((k + a) as usize) * w + (p + a) as usize];
    let mut out = DMatrix::zeros(lv * lv, lh * lh);
    for m in 0..lv {
        for n in 0..lv {
            for ah in 0..lh {
                for bh in 0..lh {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..coeffs.len() {
                        for k in -a..=a {
                            for p in -a..=a {
                                for x in -a..=a {
                                    for y in -a..=a {
                                        let th = TAU
                                            * ((m as i64 * k + n as i64 * p) as f64 / lv as f64
                                                - (ah as i64 * x + bh as i64 * y) as f64
                                                    / lh as f64);
                                        acc += s[i]
                                            * c(i, k, p)
                                            * c(i, x, y)
                                            * 0.5
                                            * Complex64::new(th.cos(), th.sin());
                                    }
                                }
                            }
                        }
                    }
                    let norm = 1.0 / ((lv * lv) as f64 * (lh * lh) as f64);
                    assert!(acc.im.abs() * norm < 1e-9, "oracle imaginary part");
                    out[(m * lv + n, ah * lh + bh)] = acc.re * norm;
                }
            }
        }
    }
    out
}

/// All ±1 vectors of length `n`, in binary counting order.
pub fn spin_states(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|bits| {
            (0..n)
                .map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// `E = -vᵀWh - b_vᵀv - b_hᵀh` by explicit loops.
pub fn rbm_energy_loops(w: &DMatrix<f64>, bv: &[f64], bh: &[f64], v: &[f64], h: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..v.len() {
        for a in 0..h.len() {
            e -= v[i] * w[(i, a)] * h[a];
        }
    }
    for i in 0..v.len() {
        e -= v[i] * bv[i];
    }
    for a in 0..h.len() {
        e -= h[a] * bh[a];
    }
    e
}

/// Exact `⟨v_i h_a⟩` under `e^{-E}/Z` by enumerating every joint state.
pub fn exact_vh_expectation(w: &DMatrix<f64>, bv: &[f64], bh: &[f64]) -> DMatrix<f64> {
    let (nv, nh) = w.shape();
    let mut z = 0.0;
    let mut acc = DMatrix::zeros(nv, nh);
    for v in spin_states(nv) {
        for h in spin_states(nh) {
            let p = (-rbm_energy_loops(w, bv, bh, &v, &h)).exp();
            z += p;
            for i in 0..nv {
                for a in 0..nh {
                    acc[(i, a)] += p * v[i] * h[a];
                }
            }
        }
    }
    acc / z
}

/// Exact `⟨|m|⟩` and `⟨E⟩` per site of a periodic `L x L` Ising lattice by
/// enumeration (`L <= 4`).
pub fn exact_ising_moments(side: usize, temperature: f64) -> (f64, f64) {
    let n = side * side;
    let (mut z, mut abs_m, mut energy) = (0.0, 0.0, 0.0);
    for s in spin_states(n) {
        let mut e = 0.0;
        for r in 0..side {
            for c in 0..side {
                let x = s[r * side + c];
                e -= x * s[r * side + (c + 1) % side];
                e -= x * s[((r + 1) % side) * side + c];
            }
        }
        let w = (-e / temperature).exp();
        z += w;
        abs_m += w * s.iter().sum::<f64>().abs() / n as f64;
        energy += w * e / n as f64;
    }
    (abs_m / z, energy / z)
}

/// Deterministic pseudo-random values in `[-1, 1)` for fixtures, independent
/// of the library's generators (SplitMix64).
pub fn fixture_values(seed: u64, n: usize) -> Vec<f64> {
    let mut x = seed;
    (0..n)
        .map(|_| {
            x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = x;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

pub fn fixture_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, &fixture_values(seed, rows * cols))
}

pub fn fixture_unit_vector(seed: u64, n: usize) -> DVector<f64> {
    let v = DVector::from_vec(fixture_values(seed, n));
    let norm = v.norm();
    v / norm
}

/// SplitMix64 generator for oracle samplers, independent of the library's.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Heat-bath sampler with sequential site order, periodic boundaries.
/// Returns `(mean |m|, mean nearest-neighbour correlation)` per recorded
/// sample, one sample every `interval` sweeps after `burn_in` sweeps.
pub fn heat_bath_ising(
    side: usize,
    temperature: f64,
    burn_in: usize,
    interval: usize,
    samples: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut rng = SplitMix(seed);
    let mut s: Vec<f64> = (0..side * side)
        .map(|_| if rng.uniform() < 0.5 { 1.0 } else { -1.0 })
        .collect();
    let at = |s: &[f64], r: usize, c: usize| s[(r % side) * side + c % side];
    let sweep = |s: &mut Vec<f64>, rng: &mut SplitMix| {
        for r in 0..side {
            for c in 0..side {
                let h = at(s, r + 1, c) + at(s, r + side - 1, c) + at(s, r, c + 1) + at(s, r, c + side - 1);
                let p_up = 1.0 / (1.0 + (-2.0 * h / temperature).exp());
                s[r * side + c] = if rng.uniform() < p_up { 1.0 } else { -1.0 };
            }
        }
    };
    for _ in 0..burn_in {
        sweep(&mut s, &mut rng);
    }
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        for _ in 0..interval {
            sweep(&mut s, &mut rng);
        }
        let m = s.iter().sum::<f64>().abs() / (side * side) as f64;
        let mut bonds = 0.0;
        for r in 0..side {
            for c in 0..side {
                bonds += s[r * side + c] * (at(&s, r, c + 1) + at(&s, r + 1, c));
            }
        }
        out.push((m, bonds / (2 * side * side) as f64));
    }
    out
}

/// Mean and standard error of the mean.
pub fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
