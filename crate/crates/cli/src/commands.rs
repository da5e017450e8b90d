//! The six verbs.
//!
//! Output file names (inside the output directory):
//!
//! | verb        | files |
//! |-------------|-------|
//! | `generate`  | `dataset.rgds`, `holdout.rgds` (when held-out data exists) |
//! | `train`     | `layer{k}.rbmw`, `loss_layer{k}.csv/.svg` per layer |
//! | `build-rgm` | `rgm.rbmw`, `rgm_modes.csv/.svg` |
//! | `analyze`   | `singular_values.csv/.svg`, `radial_visible.csv/.svg`, `radial_hidden.csv/.svg`, `comparison.csv`, `vectors.csv/.png`, `parameters.csv`, `alignment.csv/.svg` and `alignment_baseline.csv` (with `alignment = true`) |
//! | `compare`   | `reconstruction_error.csv`, `reconstructions.csv/.png` |
//! | `solvable`  | `solvability.csv` |
//!
//! Every SVG and PNG is rendered from the CSV written next to it, after
//! reading that CSV back.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rgflow::coarse::{block_spin_svd_profile, BlockSpinSpec};
use rgflow::dataset::{load_dataset, load_idx, load_image_folder, save_dataset, Dataset, ImagePipeline};
use rgflow::diagnostics::{alignment_from_bases, random_subspace, solvability_check, SolvabilityConfig};
use rgflow::ising::generate_ising_dataset;
use rgflow::rbm::{
    load_params, propagate, reconstruct_batch, reconstruction_error, save_params, train_monitored,
    EpochRecord, InitMode, RbmParams, TrainConfig,
};
use rgflow::report::{image_grid, save_png, save_text, svg_line_plot, PlotOptions, Table};
use rgflow::rgm::{build_rgm_report, data_covariance, RgmConfig};
use rgflow::spectral::{
    annulus_index, compare_visible_hidden, effective_parameter_count, low_mode_support,
    svd, Rescale,
};
use rgflow::{linalg, rng};

use crate::config::{ExperimentConfig, Source};
use crate::CliError;

pub type Verb = fn(&ExperimentConfig) -> Result<(), CliError>;

const DATASET_FILE: &str = "dataset.rgds";
const HOLDOUT_FILE: &str = "holdout.rgds";

struct Data {
    train: Dataset,
    holdout: Option<Dataset>,
}

fn require(path: &Option<PathBuf>) -> Result<&Path, CliError> {
    let p = path
        .as_deref()
        .ok_or_else(|| CliError::Config("missing input path".into()))?;
    if !p.exists() {
        return Err(CliError::Io(format!("{} does not exist", p.display())));
    }
    Ok(p)
}

fn load_source(cfg: &ExperimentConfig, path: &Option<PathBuf>, labels: &Option<PathBuf>) -> Result<Dataset, CliError> {
    let spec = &cfg.dataset;
    let ds = match spec.source {
        Source::Ising => {
            let mut sampler = spec.ising.clone().expect("validated");
            sampler.rng_seed = cfg.seed;
            generate_ising_dataset(&sampler)?
        }
        Source::Idx => {
            let labels = match labels {
                Some(_) => Some(require(labels)?),
                None => None,
            };
            load_idx(require(path)?, labels)?
        }
        Source::Images => {
            let pipeline = ImagePipeline {
                target_side: spec.side.expect("validated"),
                grayscale: spec.grayscale,
                tile: spec.tile,
            };
            let ingest = load_image_folder(require(path)?, pipeline)?;
            for p in &ingest.skipped {
                warn!("skipped undecodable file {}", p.display());
            }
            ingest.dataset
        }
        Source::Rgds => load_dataset(require(path)?)?,
    };
    match spec.limit {
        Some(n) if n < ds.len() => Ok(ds.subset(&(0..n).collect::<Vec<_>>())?),
        _ => Ok(ds),
    }
}

/// Builds the dataset described by the config.
fn ingest(cfg: &ExperimentConfig) -> Result<Data, CliError> {
    let spec = &cfg.dataset;
    let all = load_source(cfg, &spec.path, &spec.labels)?;
    if spec.holdout_path.is_some() {
        let holdout = load_source(cfg, &spec.holdout_path, &spec.holdout_labels)?;
        return Ok(Data {
            train: all,
            holdout: Some(holdout),
        });
    }
    if spec.holdout_fraction > 0.0 {
        let (train, holdout) = all.split(spec.holdout_fraction, cfg.seed)?;
        return Ok(Data {
            train,
            holdout: (!holdout.is_empty()).then_some(holdout),
        });
    }
    Ok(Data {
        train: all,
        holdout: None,
    })
}

/// The data a downstream verb works on: the files written by `generate` when
/// they exist, otherwise a fresh ingest.
fn load_data(cfg: &ExperimentConfig) -> Result<Data, CliError> {
    let cached = cfg.out_dir.join(DATASET_FILE);
    if cfg.dataset.source != Source::Rgds && cached.exists() {
        info!("using {}", cached.display());
        let holdout_path = cfg.out_dir.join(HOLDOUT_FILE);
        let holdout = if holdout_path.exists() {
            Some(load_dataset(&holdout_path)?)
        } else {
            None
        };
        return Ok(Data {
            train: load_dataset(&cached)?,
            holdout,
        });
    }
    ingest(cfg)
}

fn range_name(ds: &Dataset) -> &'static str {
    match ds.range() {
        rgflow::dataset::ValueRange::Spin => "spin",
        rgflow::dataset::ValueRange::Real => "real",
    }
}

pub fn generate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let data = ingest(cfg)?;
    save_dataset(&data.train, &cfg.out_dir.join(DATASET_FILE))?;
    let held = match &data.holdout {
        Some(h) => {
            save_dataset(h, &cfg.out_dir.join(HOLDOUT_FILE))?;
            h.len()
        }
        None => 0,
    };
    println!(
        "{}: N_s={} L={} range={} holdout={} -> {}",
        cfg.name,
        data.train.len(),
        data.train.side(),
        range_name(&data.train),
        held,
        cfg.out_dir.join(DATASET_FILE).display()
    );
    Ok(())
}

fn rgm_config(cfg: &ExperimentConfig, visible_side: usize, hidden_side: usize) -> Result<RgmConfig, CliError> {
    let mut rc = RgmConfig::new(visible_side, hidden_side)?;
    if let Some(spec) = &cfg.rgm {
        rc.kappa = spec.kappa;
        rc.kappa_floor = spec.kappa_floor;
        if let Some(a) = spec.alpha {
            rc.alpha = a;
        }
        rc.block_spec = BlockSpinSpec::new(visible_side, spec.block_size, visible_side / hidden_side)?;
        rc.gain = spec.gain;
    }
    rc.validate()?;
    Ok(rc)
}

fn check_side(data: &Dataset, visible_side: usize) -> Result<(), CliError> {
    if data.side() != visible_side {
        return Err(CliError::Config(format!(
            "dataset side {} but model.visible_side = {visible_side}",
            data.side()
        )));
    }
    Ok(())
}

/// Initial parameters of layer `k`. Modes that need a file or the raw data
/// (`rgm`, `explicit`) apply to the first layer only; later layers fall back
/// to Xavier.
fn initial_params(
    cfg: &ExperimentConfig,
    k: usize,
    data: &Dataset,
    visible_side: usize,
    hidden_side: usize,
    seed: u64,
) -> Result<RbmParams, CliError> {
    let model = cfg.model()?;
    let mut mode = cfg.train.init_mode;
    if k > 0 && matches!(mode, InitMode::Rgm | InitMode::Explicit) {
        info!("layer {k}: {mode:?} init applies to the first layer only, using Xavier");
        mode = InitMode::Xavier;
    }
    let params = match mode {
        InitMode::Xavier => RbmParams::xavier(visible_side, hidden_side, &mut rng::stream(seed, 1)),
        InitMode::BlockSpin => {
            if visible_side % hidden_side != 0 {
                return Err(CliError::Config(format!(
                    "block-spin init needs {hidden_side} to divide {visible_side}"
                )));
            }
            let spec = BlockSpinSpec::new(visible_side, model.block_size, visible_side / hidden_side)?;
            RbmParams::block_spin(&spec, model.block_gain)?
        }
        InitMode::Rgm | InitMode::Explicit => match &model.init_file {
            Some(p) => load_params(require(&Some(cfg.weights_path(p)))?)?,
            None if mode == InitMode::Rgm => {
                build_rgm_report(data, &rgm_config(cfg, visible_side, hidden_side)?)?.params
            }
            None => unreachable!("validated"),
        },
    };
    if (params.visible_side(), params.hidden_side()) != (visible_side, hidden_side) {
        return Err(CliError::Config(format!(
            "initial parameters are {}->{}, layer {k} is {visible_side}->{hidden_side}",
            params.visible_side(),
            params.hidden_side()
        )));
    }
    Ok(if k == 0 { params.scaled(model.init_scale) } else { params })
}

fn loss_table(history: &[EpochRecord]) -> Table {
    let rows = history
        .iter()
        .map(|r| vec![r.epoch as f64, r.train_error, r.holdout_error.unwrap_or(f64::NAN)])
        .collect();
    Table::new(
        ["epoch", "train_error", "holdout_error"].map(String::from).to_vec(),
        rows,
    )
}

/// Writes `table` as CSV, then renders a line plot from the file.
fn emit_plot(table: &Table, out: &Path, stem: &str, x: &str, ys: &[&str], opts: PlotOptions) -> Result<(), CliError> {
    let csv = out.join(format!("{stem}.csv"));
    table.save(&csv)?;
    let reread = Table::load(&csv)?;
    let svg = svg_line_plot(&reread, x, ys, &opts)?;
    save_text(&svg, &out.join(format!("{stem}.svg")))?;
    Ok(())
}

pub fn train(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let Data { mut train, mut holdout } = load_data(cfg)?;
    check_side(&train, model.visible_side)?;
    let mut visible_side = model.visible_side;
    let layers = model.hidden_sides.len();
    for (k, &hidden_side) in model.hidden_sides.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(k as u64);
        let tc = TrainConfig {
            rng_seed: seed,
            ..cfg.train.clone()
        };
        let init = initial_params(cfg, k, &train, visible_side, hidden_side, seed)?;
        let outcome = train_monitored(&train, holdout.as_ref(), &tc, &init)?;
        let path = cfg.out_dir.join(format!("layer{k}.rbmw"));
        save_params(&outcome.params, &path)?;
        emit_plot(
            &loss_table(&outcome.history),
            &cfg.out_dir,
            &format!("loss_layer{k}"),
            "epoch",
            &["train_error", "holdout_error"],
            PlotOptions {
                title: format!("{} layer {k}: {visible_side}x{visible_side} -> {hidden_side}x{hidden_side}", cfg.name),
                x_label: "epoch".into(),
                y_label: "reconstruction error".into(),
                ..Default::default()
            },
        )?;
        let last = outcome.history.last().expect("epoch 0 is always recorded");
        println!(
            "layer {k}: {visible_side}->{hidden_side} epochs={} train_error={:.6}{} -> {}",
            tc.epochs,
            last.train_error,
            last.holdout_error.map(|e| format!(" holdout_error={e:.6}")).unwrap_or_default(),
            path.display()
        );
        if k + 1 < layers {
            let mut r = rng::stream(seed, 2);
            train = propagate(&train, &outcome.params, model.feed, &mut r)?;
            holdout = holdout
                .map(|h| propagate(&h, &outcome.params, model.feed, &mut r))
                .transpose()?;
        }
        visible_side = hidden_side;
    }
    Ok(())
}

pub fn build_rgm(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = cfg.model()?;
    let data = load_data(cfg)?;
    check_side(&data.train, model.visible_side)?;
    let rc = rgm_config(cfg, model.visible_side, model.hidden_sides[0])?;
    let build = build_rgm_report(&data.train, &rc)?;
    if build.kappa == 0 {
        warn!("no covariance modes retained; the weights are zero");
    }
    let path = cfg.out_dir.join("rgm.rbmw");
    save_params(&build.params, &path)?;
    let table = Table::from_columns(vec![
        ("mode", (1..=build.kappa).map(|i| i as f64).collect()),
        ("eigenvalue", build.eigenvalues.clone()),
        ("singular_value", build.singular_values.clone()),
    ])?;
    emit_plot(
        &table,
        &cfg.out_dir,
        "rgm_modes",
        "mode",
        &["eigenvalue", "singular_value"],
        PlotOptions {
            title: format!("{}: retained covariance modes", cfg.name),
            x_label: "mode".into(),
            log_y: true,
            ..Default::default()
        },
    )?;
    println!(
        "rgm: {}->{} kappa={} alpha={} S_1={:.6} -> {}",
        rc.visible_side,
        rc.hidden_side,
        build.kappa,
        rc.alpha,
        build.singular_values.first().copied().unwrap_or(0.0),
        path.display()
    );
    Ok(())
}

fn pad(values: &[f64], len: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.resize(len, f64::NAN);
    v
}

fn columns_table(first: (&str, Vec<f64>), cols: Vec<(String, Vec<f64>)>) -> Result<Table, CliError> {
    let len = cols.iter().map(|c| c.1.len()).chain([first.1.len()]).max().unwrap_or(0);
    let mut headers = vec![first.0.to_string()];
    let mut data = vec![pad(&first.1, len)];
    for (h, v) in cols {
        headers.push(h);
        data.push(pad(&v, len));
    }
    let rows = (0..len).map(|i| data.iter().map(|c| c[i]).collect()).collect();
    Ok(Table::new(headers, rows))
}

pub fn analyze(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let a = &cfg.analysis;
    let weights = cfg.weights_path(a.weights.as_deref().unwrap_or(Path::new("layer0.rbmw")));
    if !weights.exists() {
        return Err(CliError::Io(format!("{} does not exist", weights.display())));
    }
    let params = load_params(&weights)?;
    let (lv, lh) = (params.visible_side(), params.hidden_side());
    let bundle = svd(params.weights())?;
    let s = &bundle.singular_values;
    let top = s.first().copied().unwrap_or(0.0);
    let kept = if top > 0.0 {
        s.iter().take_while(|&&x| x >= a.floor * top).count()
    } else {
        0
    };
    let out = &cfg.out_dir;

    let index: Vec<f64> = (1..=s.len()).map(|i| i as f64).collect();
    let mut cols = vec![("value".to_string(), s.clone())];
    let mut ys = vec!["value"];
    if let Some(b) = a.reference_block {
        let stride = if lh > 0 { lv / lh } else { 0 };
        let spec = BlockSpinSpec::new(lv, b, stride)?;
        if spec.hidden_side() != lh {
            return Err(CliError::Config(format!(
                "block-spin reference {b}/{stride} gives hidden side {}, weights have {lh}",
                spec.hidden_side()
            )));
        }
        cols.push(("block_spin".into(), block_spin_svd_profile(&spec)?.singular_values));
        ys.push("block_spin");
    }
    emit_plot(
        &columns_table(("index", index), cols)?,
        out,
        "singular_values",
        "index",
        &ys,
        PlotOptions {
            title: format!("{}: singular values", cfg.name),
            x_label: "index".into(),
            log_y: true,
            ..Default::default()
        },
    )?;

    let cutoff = a.cutoff.unwrap_or((lh / 4).max(1));
    // zero singular values have arbitrary vectors; they are not compared
    let indices: Vec<usize> = a
        .indices
        .iter()
        .copied()
        .filter(|&i| i < s.len() && s[i] > 0.0)
        .collect();
    let mut rows = Vec::new();
    let mut vis_cols = Vec::new();
    let mut hid_cols = Vec::new();
    let mut vectors = Vec::new();
    for &i in &indices {
        let c = compare_visible_hidden(&bundle, i, Rescale::Fit)?;
        rows.push(vec![
            i as f64,
            c.singular_value,
            low_mode_support(&c.visible, cutoff),
            low_mode_support(&c.hidden, cutoff),
            c.rescale,
            c.relative_difference,
        ]);
        vis_cols.push((format!("s{i}"), c.visible.magnitudes.clone()));
        hid_cols.push((format!("s{i}"), c.hidden.magnitudes.clone()));
        let v = bundle.visible_vector(i);
        let m = v.amax();
        vectors.push(v.iter().map(|x| x / m).collect::<Vec<_>>());
    }
    Table::new(
        ["index", "singular_value", "support_visible", "support_hidden", "rescale", "difference"]
            .map(String::from)
            .to_vec(),
        rows,
    )
    .save(&out.join("comparison.csv"))?;
    for (stem, cols, side) in [("radial_visible", vis_cols, lv), ("radial_hidden", hid_cols, lh)] {
        let modes = (0..=annulus_index((side / 2) as isize, (side / 2) as isize))
            .map(|m| m as f64)
            .collect();
        let names: Vec<String> = cols.iter().map(|c| c.0.clone()).collect();
        let table = columns_table(("mode", modes), cols)?;
        emit_plot(
            &table,
            out,
            stem,
            "mode",
            &names.iter().map(String::as_str).collect::<Vec<_>>(),
            PlotOptions {
                title: format!("{}: {stem}", cfg.name),
                x_label: "mode".into(),
                y_label: "mean |F|".into(),
                ..Default::default()
            },
        )?;
    }
    let vtable = Table::new((0..lv * lv).map(|j| format!("x{j}")).collect(), vectors);
    vtable.save(&out.join("vectors.csv"))?;
    if !indices.is_empty() {
        let grid = image_grid(&Table::load(&out.join("vectors.csv"))?, lv, indices.len())?;
        save_png(&grid, &out.join("vectors.png"))?;
    }

    let max_mode = a
        .max_mode
        .unwrap_or(annulus_index((lv / 2) as isize, (lv / 2) as isize) as u64);
    if kept > 0 {
        let count = effective_parameter_count(
            (lv * lv) as u64,
            (lh * lh) as u64,
            kept as u64,
            cutoff as u64,
            max_mode,
        )?;
        Table::from_columns(vec![
            ("naive", vec![count.naive as f64]),
            ("after_truncation", vec![count.after_truncation as f64]),
            ("effective", vec![count.effective as f64]),
        ])?
        .save(&out.join("parameters.csv"))?;
        println!(
            "parameters: {} -> {} -> {}",
            count.naive, count.after_truncation, count.effective
        );
    }

    if a.alignment && kept > 0 {
        let data = load_data(cfg)?;
        if data.train.dim() != lv * lv {
            return Err(CliError::Config("dataset does not match the visible layer".into()));
        }
        let (_, vecs) = linalg::symmetric_eigen(&data_covariance(&data.train)?)?;
        let u_data = vecs.columns(0, kept).into_owned();
        let u_trained = bundle.visible.columns(0, kept).into_owned();
        let report = alignment_from_bases(&u_data, &u_trained)?;
        emit_plot(
            &report.to_table(),
            out,
            "alignment",
            "index",
            &["eigenvalue"],
            PlotOptions {
                title: format!("{}: alignment spectrum", cfg.name),
                x_label: "index".into(),
                ..Default::default()
            },
        )?;
        let mut r = rng::stream(cfg.seed, 7);
        let baseline = (0..a.baselines)
            .map(|_| {
                let q = random_subspace(lv * lv, kept, &mut r)?;
                Ok(alignment_from_bases(&u_data, &q)?.mean_top(kept))
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        Table::from_columns(vec![
            ("baseline", (0..baseline.len()).map(|i| i as f64).collect()),
            ("mean_top_k", baseline.clone()),
        ])?
        .save(&out.join("alignment_baseline.csv"))?;
        let n = baseline.len().max(1) as f64;
        let mean = baseline.iter().sum::<f64>() / n;
        let sd = (baseline.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        println!(
            "alignment: k={kept} trained={:.4} random={mean:.4}+-{sd:.4} above_0.8={}",
            report.mean_top(kept),
            report.count_above(0.8)
        );
    }

    println!(
        "analyze: {lv}->{lh} S_1={top:.6} kept={kept} (floor {}) compared={} -> {}",
        a.floor,
        indices.len(),
        out.display()
    );
    Ok(())
}

pub fn compare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let c = &cfg.compare;
    if c.models.is_empty() {
        return Err(CliError::Usage("compare.models is empty".into()));
    }
    let data = load_data(cfg)?;
    let eval = data.holdout.as_ref().unwrap_or(&data.train);
    if data.holdout.is_none() {
        warn!("no held-out data; comparing on the training samples");
    }
    let shown: Vec<usize> = (0..c.samples.min(eval.len())).collect();
    let originals = eval.rows(&shown);
    let mut images: Vec<Vec<f64>> = originals.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut errors = Vec::new();
    for (m, path) in c.models.iter().enumerate() {
        let path = &cfg.weights_path(path);
        if !path.exists() {
            return Err(CliError::Io(format!("{} does not exist", path.display())));
        }
        let params = load_params(path)?;
        let err = reconstruction_error(eval, &params)?;
        let label = c.labels.get(m).cloned().unwrap_or_else(|| path.display().to_string());
        println!("model {m} ({label}): mean reconstruction error {err:.6}");
        errors.push(vec![m as f64, err, eval.len() as f64]);
        let rec = reconstruct_batch(&originals, &params);
        images.extend(rec.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()));
    }
    Table::new(
        ["model", "mean_error", "samples"].map(String::from).to_vec(),
        errors,
    )
    .save(&cfg.out_dir.join("reconstruction_error.csv"))?;
    let side = eval.side();
    let csv = cfg.out_dir.join("reconstructions.csv");
    Table::new((0..side * side).map(|j| format!("x{j}")).collect(), images).save(&csv)?;
    if !shown.is_empty() {
        let grid = image_grid(&Table::load(&csv)?, side, shown.len())?;
        save_png(&grid, &cfg.out_dir.join("reconstructions.png"))?;
    }
    Ok(())
}

pub fn solvable(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let sc = SolvabilityConfig {
        seed: cfg.seed,
        ..cfg.solvable.clone()
    };
    let report = solvability_check(&data.train, &sc)?;
    report.to_table().save(&cfg.out_dir.join("solvability.csv"))?;
    for t in &report.trials {
        println!(
            "trial {}: retained={} subset={} growth_steps={}",
            t.trial, t.retained, t.final_subset, t.growth_steps
        );
    }
    let scores: Vec<f64> = report.pairs.iter().map(|p| p.mean_top_k).collect();
    let (min, mean) = (
        scores.iter().copied().fold(f64::INFINITY, f64::min),
        scores.iter().sum::<f64>() / scores.len().max(1) as f64,
    );
    println!(
        "verdict: {:?} (pairs={} mean_top_k mean={mean:.4} min={min:.4})",
        report.verdict,
        scores.len()
    );
    Ok(())
}
