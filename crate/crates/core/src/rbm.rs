//! Restricted Boltzmann machine with ±1 units.
//!
//! Energy:
//!
//! ```text
//! E(v, h) = -Σ_ia v_i W_ia h_a - Σ_i v_i b_i^(v) - Σ_a h_a b_a^(h)
//! ```
//!
//! so the conditionals are `p(h_a = 1 | v) = (1 + tanh(Σ_i W_ia v_i + b_a^(h))) / 2`
//! and the mirror expression for `v`. Training is CD-1: one
//! `v̂ → ĥ → ṽ → h̃` round trip per batch, with the update
//! `θ += lr * (⟨·⟩_data - ⟨·⟩_model)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coarse::{self, BlockSpinSpec};
use crate::dataset::{Dataset, ValueRange};
use crate::error::{Error, Result};
use crate::io_util::{self, Reader};
use crate::linalg;
use crate::rng::{self, SimRng};

const RBMW_MAGIC: &[u8; 4] = b"RBMW";
const RBMW_VERSION: u32 = 1;

/// Weights and biases of one RBM layer. `weights` is `N_v x N_h` with
/// `N_v = L_v^2` and `N_h = L_h^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    weights: DMatrix<f64>,
    visible_bias: DVector<f64>,
    hidden_bias: DVector<f64>,
    visible_side: usize,
    hidden_side: usize,
}

impl RbmParams {
    pub fn new(
        weights: DMatrix<f64>,
        visible_bias: DVector<f64>,
        hidden_bias: DVector<f64>,
        visible_side: usize,
        hidden_side: usize,
    ) -> Result<Self> {
        let (nv, nh) = (visible_side * visible_side, hidden_side * hidden_side);
        if weights.shape() != (nv, nh) {
            return Err(Error::dim(format!(
                "weights are {:?}, expected ({nv}, {nh}) for sides {visible_side}/{hidden_side}",
                weights.shape()
            )));
        }
        if visible_bias.len() != nv || hidden_bias.len() != nh {
            return Err(Error::dim("bias lengths do not match the lattice sides"));
        }
        let params = Self {
            weights,
            visible_bias,
            hidden_bias,
            visible_side,
            hidden_side,
        };
        params.check_finite()?;
        Ok(params)
    }

    /// Parameters for layer sizes that need not be perfect squares. When a
    /// size is not square its side is reported as 0; such parameters cannot
    /// be written as RBMW.
    pub fn unstructured(
        weights: DMatrix<f64>,
        visible_bias: DVector<f64>,
        hidden_bias: DVector<f64>,
    ) -> Result<Self> {
        let (nv, nh) = weights.shape();
        if visible_bias.len() != nv || hidden_bias.len() != nh {
            return Err(Error::dim("bias lengths do not match the weight matrix"));
        }
        let params = Self {
            weights,
            visible_bias,
            hidden_bias,
            visible_side: linalg::lattice_side(nv).unwrap_or(0),
            hidden_side: linalg::lattice_side(nh).unwrap_or(0),
        };
        params.check_finite()?;
        Ok(params)
    }

    pub fn zeros(visible_side: usize, hidden_side: usize) -> Self {
        let (nv, nh) = (visible_side * visible_side, hidden_side * hidden_side);
        Self {
            weights: DMatrix::zeros(nv, nh),
            visible_bias: DVector::zeros(nv),
            hidden_bias: DVector::zeros(nh),
            visible_side,
            hidden_side,
        }
    }

    /// Uniform weights in `±sqrt(6 / (N_v + N_h))`, zero biases.
    pub fn xavier(visible_side: usize, hidden_side: usize, rng: &mut SimRng) -> Self {
        let mut p = Self::zeros(visible_side, hidden_side);
        let (nv, nh) = p.weights.shape();
        let a = (6.0 / (nv + nh) as f64).sqrt();
        // row-major fill so the draw order matches the file layout
        for i in 0..nv {
            for j in 0..nh {
                p.weights[(i, j)] = rng.gen_range(-a..a);
            }
        }
        p
    }

    /// The block-spin matrix scaled by `gain`, zero biases.
    pub fn block_spin(spec: &BlockSpinSpec, gain: f64) -> Result<Self> {
        let m = coarse::block_spin_matrix(spec)? * gain;
        let (nv, nh) = m.shape();
        Self::new(
            m,
            DVector::zeros(nv),
            DVector::zeros(nh),
            spec.visible_side,
            spec.hidden_side(),
        )
    }

    /// The same parameters with the weights multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.weights *= factor;
        self
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &DVector<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &DVector<f64> {
        &self.hidden_bias
    }

    pub fn visible_side(&self) -> usize {
        self.visible_side
    }

    pub fn hidden_side(&self) -> usize {
        self.hidden_side
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self.weights.iter().all(|x| x.is_finite())
            && self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::Numeric("RBM parameters are not finite".into()))
        }
    }

    fn apply(&mut self, grad: &Gradient, lr: f64) {
        self.weights += &grad.weights * lr;
        self.visible_bias.axpy(lr, &grad.visible_bias, 1.0);
        self.hidden_bias.axpy(lr, &grad.hidden_bias, 1.0);
    }
}

/// How a layer's initial parameters are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Xavier,
    BlockSpin,
    Rgm,
    /// Parameters supplied by the caller (e.g. loaded from a file).
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    pub init_mode: InitMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 1000,
            epochs: 10,
            rng_seed: 0,
            init_mode: InitMode::Xavier,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::arg(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be >= 1"));
        }
        Ok(())
    }
}

fn dim_check(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::dim(format!("{what} has length {got}, expected {want}")))
    }
}

/// `(1 + tanh(x)) / 2`, kept strictly inside `(0, 1)`.
pub fn spin_up_probability(field: f64) -> f64 {
    let p = 0.5 * (1.0 + field.tanh());
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn rbm_energy(v: &[f64], h: &[f64], params: &RbmParams) -> Result<f64> {
    dim_check("visible state", v.len(), params.n_visible())?;
    dim_check("hidden state", h.len(), params.n_hidden())?;
    let v = DVector::from_column_slice(v);
    let h = DVector::from_column_slice(h);
    let coupling = v.dot(&(&params.weights * &h));
    Ok(-coupling - v.dot(&params.visible_bias) - h.dot(&params.hidden_bias))
}

pub fn hidden_activation_prob(v: &[f64], params: &RbmParams) -> Result<DVector<f64>> {
    dim_check("visible state", v.len(), params.n_visible())?;
    let field = params.weights.tr_mul(&DVector::from_column_slice(v)) + &params.hidden_bias;
    Ok(field.map(spin_up_probability))
}

pub fn visible_activation_prob(h: &[f64], params: &RbmParams) -> Result<DVector<f64>> {
    dim_check("hidden state", h.len(), params.n_hidden())?;
    let field = &params.weights * DVector::from_column_slice(h) + &params.visible_bias;
    Ok(field.map(spin_up_probability))
}

/// Row-wise hidden probabilities for a batch of visible rows.
pub fn hidden_probs_batch(v: &DMatrix<f64>, params: &RbmParams) -> DMatrix<f64> {
    let mut field = v * &params.weights;
    for mut row in field.row_iter_mut() {
        row += params.hidden_bias.transpose();
    }
    field.map(spin_up_probability)
}

/// Row-wise visible probabilities for a batch of hidden rows.
pub fn visible_probs_batch(h: &DMatrix<f64>, params: &RbmParams) -> DMatrix<f64> {
    let mut field = h * params.weights.transpose();
    for mut row in field.row_iter_mut() {
        row += params.visible_bias.transpose();
    }
    field.map(spin_up_probability)
}

/// Draws `+1` with probability `p_i`, else `-1`. Exactly one uniform `f64`
/// is consumed per entry, in order; the draw is `+1` when `u < p_i`.
pub fn sample_binary(probs: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::arg(format!("probability {p} outside [0, 1]")));
    }
    Ok(probs.iter().map(|&p| draw(p, rng)).collect())
}

fn draw(p: f64, rng: &mut SimRng) -> f64 {
    if rng.gen::<f64>() < p {
        1.0
    } else {
        -1.0
    }
}

/// Samples a batch of probabilities row by row.
fn sample_batch(probs: &DMatrix<f64>, rng: &mut SimRng) -> DMatrix<f64> {
    let (n, m) = probs.shape();
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            out[(i, j)] = draw(probs[(i, j)], rng);
        }
    }
    out
}

/// Data-minus-model expectation differences from one CD-1 step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: DMatrix<f64>,
    pub visible_bias: DVector<f64>,
    pub hidden_bias: DVector<f64>,
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    m.row_mean().transpose()
}

/// One contrastive-divergence step on a batch (one sample per row).
///
/// `ĥ ~ p(h|v̂)`, `ṽ ~ p(v|ĥ)`, `h̃ ~ p(h|ṽ)`; returns
/// `⟨v h⟩_data - ⟨v h⟩_model` and the matching bias terms, each averaged
/// over the batch.
pub fn cd1_step(batch: &DMatrix<f64>, params: &RbmParams, rng: &mut SimRng) -> Result<Gradient> {
    if batch.nrows() == 0 {
        return Err(Error::arg("empty batch"));
    }
    dim_check("batch row", batch.ncols(), params.n_visible())?;
    let n = batch.nrows() as f64;
    let h_data = sample_batch(&hidden_probs_batch(batch, params), rng);
    let v_model = sample_batch(&visible_probs_batch(&h_data, params), rng);
    let h_model = sample_batch(&hidden_probs_batch(&v_model, params), rng);
    let weights = (batch.tr_mul(&h_data) - v_model.tr_mul(&h_model)) / n;
    Ok(Gradient {
        weights,
        visible_bias: column_means(batch) - column_means(&v_model),
        hidden_bias: column_means(&h_data) - column_means(&h_model),
    })
}

/// Deterministic reconstruction `v → p(h|v) → 2p - 1 → p(v|·)`; returns the
/// visible probabilities.
pub fn reconstruct(v: &[f64], params: &RbmParams) -> Result<DVector<f64>> {
    let ph = hidden_activation_prob(v, params)?;
    let h = ph.map(|p| 2.0 * p - 1.0);
    visible_activation_prob(h.as_slice(), params)
}

/// Reconstructions of a batch of rows, as expected values `2p - 1`.
pub fn reconstruct_batch(v: &DMatrix<f64>, params: &RbmParams) -> DMatrix<f64> {
    let h = hidden_probs_batch(v, params).map(|p| 2.0 * p - 1.0);
    visible_probs_batch(&h, params).map(|p| 2.0 * p - 1.0)
}

/// Mean over samples and sites of `(v̂ - (2p - 1))^2`, where `p` is the
/// reconstruction probability. Lies in `[0, 4]`.
pub fn reconstruction_error(dataset: &Dataset, params: &RbmParams) -> Result<f64> {
    dim_check("dataset sample", dataset.dim(), params.n_visible())?;
    if dataset.is_empty() {
        return Err(Error::arg("empty dataset"));
    }
    const CHUNK: usize = 1024;
    let mut total = 0.0;
    let all: Vec<usize> = (0..dataset.len()).collect();
    for idx in all.chunks(CHUNK) {
        let v = dataset.rows(idx);
        let r = reconstruct_batch(&v, params);
        total += (v - r).norm_squared();
    }
    Ok(total / (dataset.len() * dataset.dim()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_error: f64,
    pub holdout_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: RbmParams,
    /// Epoch 0 holds the errors of the initial parameters.
    pub history: Vec<EpochRecord>,
}

pub fn train(dataset: &Dataset, config: &TrainConfig, init: &RbmParams) -> Result<TrainOutcome> {
    train_monitored(dataset, None, config, init)
}

/// [`train`], also recording the reconstruction error on `holdout` after
/// every epoch.
///
/// Each epoch visits the samples in a fresh seeded shuffle, in batches of
/// `batch_size` (the last one may be short).
pub fn train_monitored(
    dataset: &Dataset,
    holdout: Option<&Dataset>,
    config: &TrainConfig,
    init: &RbmParams,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    dim_check("dataset sample", dataset.dim(), init.n_visible())?;
    if let Some(h) = holdout {
        dim_check("holdout sample", h.dim(), init.n_visible())?;
    }
    let record = |epoch, params: &RbmParams| -> Result<EpochRecord> {
        let train_error = reconstruction_error(dataset, params)?;
        let holdout_error = holdout.map(|h| reconstruction_error(h, params)).transpose()?;
        if !train_error.is_finite() || holdout_error.is_some_and(|e| !e.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite reconstruction error at epoch {epoch}"
            )));
        }
        Ok(EpochRecord {
            epoch,
            train_error,
            holdout_error,
        })
    };

    let mut params = init.clone();
    let mut history = vec![record(0, &params)?];
    let mut rng = rng::seeded(config.rng_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let batch = dataset.rows(idx);
            let grad = cd1_step(&batch, &params, &mut rng)?;
            params.apply(&grad, config.learning_rate);
        }
        params.check_finite()?;
        history.push(record(epoch, &params)?);
    }
    Ok(TrainOutcome { params, history })
}

/// What a trained layer passes on to the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackFeed {
    /// Expected hidden values `2p - 1`.
    #[default]
    Expected,
    /// ±1 samples drawn from `p(h|v)`.
    Sampled,
}

/// One layer of a greedy stack.
#[derive(Debug, Clone)]
pub struct StackLayer {
    pub hidden_side: usize,
    pub config: TrainConfig,
    /// Overrides the initialisation implied by `config.init_mode`.
    pub init: Option<RbmParams>,
    /// Block rule used when `init_mode` is `block_spin`.
    pub block_size: usize,
    pub block_gain: f64,
}

impl StackLayer {
    pub fn new(hidden_side: usize, config: TrainConfig) -> Self {
        Self {
            hidden_side,
            config,
            init: None,
            block_size: 4,
            block_gain: 1.0,
        }
    }

    fn initial_params(&self, visible_side: usize) -> Result<RbmParams> {
        if let Some(p) = &self.init {
            if p.visible_side != visible_side || p.hidden_side != self.hidden_side {
                return Err(Error::dim(format!(
                    "initial parameters are {}->{}, layer is {visible_side}->{}",
                    p.visible_side, p.hidden_side, self.hidden_side
                )));
            }
            return Ok(p.clone());
        }
        match self.config.init_mode {
            InitMode::Xavier => {
                let mut r = rng::stream(self.config.rng_seed, 1);
                Ok(RbmParams::xavier(visible_side, self.hidden_side, &mut r))
            }
            InitMode::BlockSpin => {
                if self.hidden_side == 0 || visible_side % self.hidden_side != 0 {
                    return Err(Error::dim(format!(
                        "hidden side {} does not divide visible side {visible_side}",
                        self.hidden_side
                    )));
                }
                let spec = BlockSpinSpec::new(
                    visible_side,
                    self.block_size,
                    visible_side / self.hidden_side,
                )?;
                RbmParams::block_spin(&spec, self.block_gain)
            }
            mode => Err(Error::arg(format!(
                "init mode {mode:?} needs explicit initial parameters"
            ))),
        }
    }
}

/// Hidden representation of every sample, used as the next layer's data.
pub fn propagate(
    dataset: &Dataset,
    params: &RbmParams,
    feed: StackFeed,
    rng: &mut SimRng,
) -> Result<Dataset> {
    dim_check("dataset sample", dataset.dim(), params.n_visible())?;
    let probs = hidden_probs_batch(&dataset.to_matrix(), params);
    let (values, range) = match feed {
        StackFeed::Expected => (probs.map(|p| 2.0 * p - 1.0), ValueRange::Real),
        StackFeed::Sampled => (sample_batch(&probs, rng), ValueRange::Spin),
    };
    let flat: Vec<f64> = values.transpose().iter().copied().collect();
    Dataset::from_flat(
        flat,
        params.hidden_side,
        range,
        format!("{} | hidden layer {feed:?}", dataset.provenance()),
    )
}

/// Greedy layer-wise training: layer `k + 1` is trained on the hidden
/// representation of layer `k`.
pub fn train_stacked(
    dataset: &Dataset,
    layers: &[StackLayer],
    feed: StackFeed,
) -> Result<Vec<TrainOutcome>> {
    let mut data = dataset.clone();
    let mut out = Vec::with_capacity(layers.len());
    for (k, layer) in layers.iter().enumerate() {
        let init = layer.initial_params(data.side())?;
        let outcome = train(&data, &layer.config, &init)?;
        if k + 1 < layers.len() {
            let mut r = rng::stream(layer.config.rng_seed, 2);
            data = propagate(&data, &outcome.params, feed, &mut r)?;
        }
        out.push(outcome);
    }
    Ok(out)
}

/// One block-Gibbs update: `h ~ p(h|v)`, then `v ~ p(v|h)`.
pub fn gibbs_step(
    v: &mut Vec<f64>,
    h: &mut Vec<f64>,
    params: &RbmParams,
    rng: &mut SimRng,
) -> Result<()> {
    *h = sample_binary(hidden_activation_prob(v, params)?.as_slice(), rng)?;
    *v = sample_binary(visible_activation_prob(h, params)?.as_slice(), rng)?;
    Ok(())
}

/// `RBMW` layout, little-endian: magic, version u32, `L_v` u32, `L_h` u32,
/// row-major f64 weights, visible bias, hidden bias.
pub fn encode_params(p: &RbmParams) -> Result<Vec<u8>> {
    let (nv, nh) = p.weights.shape();
    if p.visible_side * p.visible_side != nv || p.hidden_side * p.hidden_side != nh {
        return Err(Error::dim("RBMW needs square visible and hidden layers"));
    }
    let mut out = Vec::with_capacity(16 + 8 * (nv * nh + nv + nh));
    out.extend_from_slice(RBMW_MAGIC);
    out.extend_from_slice(&RBMW_VERSION.to_le_bytes());
    out.extend_from_slice(&(p.visible_side as u32).to_le_bytes());
    out.extend_from_slice(&(p.hidden_side as u32).to_le_bytes());
    for i in 0..nv {
        for j in 0..nh {
            out.extend_from_slice(&p.weights[(i, j)].to_le_bytes());
        }
    }
    for x in p.visible_bias.iter().chain(p.hidden_bias.iter()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<RbmParams> {
    let mut r = Reader::new(bytes, "RBMW");
    if r.take(4)? != RBMW_MAGIC {
        return Err(Error::format("RBMW", "bad magic"));
    }
    let version = r.u32_le()?;
    if version != RBMW_VERSION {
        return Err(Error::format("RBMW", format!("unsupported version {version}")));
    }
    let lv = r.u32_le()? as usize;
    let lh = r.u32_le()? as usize;
    let (nv, nh) = (lv * lv, lh * lh);
    if r.remaining() != 8 * (nv * nh + nv + nh) {
        return Err(Error::format(
            "RBMW",
            format!("payload is {} bytes, expected {}", r.remaining(), 8 * (nv * nh + nv + nh)),
        ));
    }
    let mut weights = DMatrix::zeros(nv, nh);
    for i in 0..nv {
        for j in 0..nh {
            weights[(i, j)] = r.f64_le()?;
        }
    }
    let vb = (0..nv).map(|_| r.f64_le()).collect::<Result<Vec<_>>>()?;
    let hb = (0..nh).map(|_| r.f64_le()).collect::<Result<Vec<_>>>()?;
    RbmParams::new(weights, DVector::from_vec(vb), DVector::from_vec(hb), lv, lh)
}

pub fn save_params(p: &RbmParams, path: &Path) -> Result<()> {
    io_util::write_atomic(path, &encode_params(p)?)
}

pub fn load_params(path: &Path) -> Result<RbmParams> {
    decode_params(&fs::read(path)?)
}

/// Long-form CSV `kind,row,col,value` with kinds `w`, `bv`, `bh`.
pub fn write_params_csv<W: Write>(p: &RbmParams, mut out: W) -> Result<()> {
    writeln!(out, "kind,row,col,value")?;
    for i in 0..p.n_visible() {
        for j in 0..p.n_hidden() {
            writeln!(out, "w,{i},{j},{}", p.weights[(i, j)])?;
        }
    }
    for (i, x) in p.visible_bias.iter().enumerate() {
        writeln!(out, "bv,{i},0,{x}")?;
    }
    for (j, x) in p.hidden_bias.iter().enumerate() {
        writeln!(out, "bh,{j},0,{x}")?;
    }
    Ok(())
}
