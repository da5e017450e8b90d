//! Two-dimensional Ising model on a periodic square lattice.
//!
//! Spins live on an `L x L` grid stored row-major, which is also the layout
//! of every flattened sample in a [`Dataset`]. Site `(row, col)` maps to
//! index `row * L + col`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ValueRange};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Square lattice of ±1 spins with periodic boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinLattice {
    side: usize,
    spins: Vec<i8>,
}

impl SpinLattice {
    pub fn new(side: usize, spins: Vec<i8>) -> Result<Self> {
        if side < 2 {
            return Err(Error::arg(format!("lattice side must be >= 2, got {side}")));
        }
        if spins.len() != side * side {
            return Err(Error::dim(format!(
                "{} spins for a {side}x{side} lattice",
                spins.len()
            )));
        }
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::arg(format!("spin value {bad} is not ±1")));
        }
        Ok(Self { side, spins })
    }

    /// All spins set to `spin` (which must be ±1).
    pub fn uniform(side: usize, spin: i8) -> Result<Self> {
        Self::new(side, vec![spin; side * side])
    }

    /// Independent uniformly random spins (infinite-temperature state).
    pub fn random(side: usize, rng: &mut SimRng) -> Result<Self> {
        let spins = (0..side * side)
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect();
        Self::new(side, spins)
    }

    /// Builds a lattice from a flattened ±1 vector.
    pub fn from_values(side: usize, values: &[f64]) -> Result<Self> {
        let spins = values
            .iter()
            .map(|&v| {
                if v == 1.0 {
                    Ok(1)
                } else if v == -1.0 {
                    Ok(-1)
                } else {
                    Err(Error::arg(format!("value {v} is not a spin")))
                }
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::new(side, spins)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.spins[row * self.side + col]
    }

    pub fn flip(&mut self, row: usize, col: usize) {
        let i = row * self.side + col;
        self.spins[i] = -self.spins[i];
    }

    /// Sum of the four periodic nearest neighbours of `(row, col)`.
    ///
    /// For `L = 2` the left and right neighbour coincide and are counted
    /// twice, consistent with [`ising_energy`]'s bond enumeration.
    pub fn neighbour_sum(&self, row: usize, col: usize) -> i32 {
        let l = self.side;
        let up = (row + l - 1) % l;
        let down = (row + 1) % l;
        let left = (col + l - 1) % l;
        let right = (col + 1) % l;
        [
            self.get(up, col),
            self.get(down, col),
            self.get(row, left),
            self.get(row, right),
        ]
        .iter()
        .map(|&s| s as i32)
        .sum()
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().map(|&s| s as f64).sum::<f64>() / self.spins.len() as f64
    }

    /// Mean of `s_i s_j` over the `2 L^2` right/down bonds.
    pub fn nearest_neighbour_correlation(&self) -> f64 {
        -ising_energy(self, 1.0) / (2 * self.side * self.side) as f64
    }

    pub fn to_values(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| s as f64).collect()
    }
}

/// `H = -J Σ s_i s_j`, one term per right and per down bond of every site
/// (periodic), i.e. `2 L^2` bonds.
pub fn ising_energy(lattice: &SpinLattice, coupling: f64) -> f64 {
    let l = lattice.side;
    let mut sum = 0i64;
    for r in 0..l {
        for c in 0..l {
            let s = lattice.get(r, c) as i64;
            sum += s * lattice.get(r, (c + 1) % l) as i64;
            sum += s * lattice.get((r + 1) % l, c) as i64;
        }
    }
    -coupling * sum as f64
}

/// Parameters of a Metropolis run that produces a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsingSamplerConfig {
    pub side_length: usize,
    pub temperature: f64,
    pub coupling: f64,
    pub sweeps_per_sample: usize,
    pub burn_in_sweeps: usize,
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl Default for IsingSamplerConfig {
    fn default() -> Self {
        Self {
            side_length: 16,
            temperature: 4.0,
            coupling: 1.0,
            sweeps_per_sample: 10,
            burn_in_sweeps: 1000,
            sample_count: 1000,
            rng_seed: 0,
        }
    }
}

impl IsingSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side_length < 2 {
            return Err(Error::arg("side_length must be >= 2"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::arg(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !self.coupling.is_finite() {
            return Err(Error::arg("coupling must be finite"));
        }
        if self.sample_count == 0 {
            return Err(Error::arg("sample_count must be >= 1"));
        }
        if self.sweeps_per_sample == 0 {
            return Err(Error::arg("sweeps_per_sample must be >= 1"));
        }
        Ok(())
    }
}

/// Precomputed acceptance probabilities indexed by `s * Σ neighbours`.
struct AcceptanceTable {
    // s*h takes values -4, -2, 0, 2, 4; index (s*h + 4) / 2
    probs: [f64; 5],
}

impl AcceptanceTable {
    fn new(temperature: f64, coupling: f64) -> Self {
        let mut probs = [0.0; 5];
        for (k, p) in probs.iter_mut().enumerate() {
            let sh = 2 * k as i32 - 4;
            let delta_e = 2.0 * coupling * sh as f64;
            *p = if delta_e <= 0.0 {
                1.0
            } else {
                (-delta_e / temperature).exp()
            };
        }
        Self { probs }
    }

    fn get(&self, sh: i32) -> f64 {
        self.probs[((sh + 4) / 2) as usize]
    }
}

/// One sweep: `L^2` single-spin Metropolis updates at uniformly chosen sites.
///
/// A flip changing the energy by `ΔE` is accepted with probability
/// `min(1, exp(-ΔE / T))`.
pub fn metropolis_sweep(lattice: &mut SpinLattice, temperature: f64, coupling: f64, rng: &mut SimRng) {
    let table = AcceptanceTable::new(temperature, coupling);
    sweep_with_table(lattice, &table, rng);
}

fn sweep_with_table(lattice: &mut SpinLattice, table: &AcceptanceTable, rng: &mut SimRng) {
    let l = lattice.side;
    for _ in 0..l * l {
        let row = rng.gen_range(0..l);
        let col = rng.gen_range(0..l);
        let sh = lattice.get(row, col) as i32 * lattice.neighbour_sum(row, col);
        let p = table.get(sh);
        if p >= 1.0 || rng.gen::<f64>() < p {
            lattice.flip(row, col);
        }
    }
}

/// Runs a single Metropolis chain from a random start and records one
/// flattened lattice every `sweeps_per_sample` sweeps after burn-in.
pub fn generate_ising_dataset(config: &IsingSamplerConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = rng::seeded(config.rng_seed);
    let mut lattice = SpinLattice::random(config.side_length, &mut rng)?;
    let table = AcceptanceTable::new(config.temperature, config.coupling);
    for _ in 0..config.burn_in_sweeps {
        sweep_with_table(&mut lattice, &table, &mut rng);
    }
    let mut samples = Vec::with_capacity(config.sample_count);
    for _ in 0..config.sample_count {
        for _ in 0..config.sweeps_per_sample {
            sweep_with_table(&mut lattice, &table, &mut rng);
        }
        samples.push(lattice.to_values());
    }
    Dataset::new(
        samples,
        config.side_length,
        ValueRange::Spin,
        format!(
            "ising L={} T={} J={} burn_in={} interval={} seed={}",
            config.side_length,
            config.temperature,
            config.coupling,
            config.burn_in_sweeps,
            config.sweeps_per_sample,
            config.rng_seed
        ),
    )
}
