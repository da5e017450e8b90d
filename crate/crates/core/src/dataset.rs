//! Training sets: an in-memory container plus the loaders and the `RGDS`
//! binary format.
//!
//! All samples are flattened square lattices (row-major). Spin data holds
//! exact ±1 values; image data is mapped into `[-1, 1]` by
//! `x = 2 * (pixel / 255) - 1`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_util::{self, Reader};
use crate::rng;

const RGDS_MAGIC: &[u8; 4] = b"RGDS";
const RGDS_VERSION: u32 = 1;
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Which values a dataset's entries may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueRange {
    /// Exactly ±1 (Ising configurations).
    Spin,
    /// Any real in `[-1, 1]` (grayscale images).
    Real,
}

impl ValueRange {
    fn tag(self) -> u8 {
        match self {
            ValueRange::Spin => 0,
            ValueRange::Real => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ValueRange::Spin),
            1 => Ok(ValueRange::Real),
            t => Err(Error::format("RGDS", format!("unknown range tag {t}"))),
        }
    }

    fn admits(self, x: f64) -> bool {
        match self {
            ValueRange::Spin => x == 1.0 || x == -1.0,
            ValueRange::Real => (-1.0..=1.0).contains(&x),
        }
    }
}

/// A set of equally sized samples living on an `L x L` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<f64>,
    side: usize,
    range: ValueRange,
    provenance: String,
    labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        samples: Vec<Vec<f64>>,
        side: usize,
        range: ValueRange,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let dim = side * side;
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != dim) {
            return Err(Error::dim(format!(
                "sample {i} has length {}, expected {dim}",
                s.len()
            )));
        }
        Self::from_flat(samples.concat(), side, range, provenance)
    }

    /// Builds a dataset from row-major concatenated samples.
    pub fn from_flat(
        data: Vec<f64>,
        side: usize,
        range: ValueRange,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if side == 0 {
            return Err(Error::arg("side length must be positive"));
        }
        if data.len() % (side * side) != 0 {
            return Err(Error::dim(format!(
                "{} values is not a whole number of {side}x{side} samples",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&x| !range.admits(x)) {
            return Err(Error::arg(format!("value {bad} outside the {range:?} range")));
        }
        Ok(Self {
            data,
            side,
            range,
            provenance: provenance.into(),
            labels: None,
        })
    }

    /// Attaches per-sample labels (kept as metadata only).
    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::dim(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of entries per sample, `L^2`.
    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Samples as the rows of an `N_s x N_v` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim(), &self.data)
    }

    /// Rows `indices` as a matrix, in the given order.
    pub fn rows(&self, indices: &[usize]) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(indices.len(), d, |r, c| self.data[indices[r] * d + c])
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for s in self.samples() {
            for (acc, &x) in m.iter_mut().zip(s) {
                *acc += x;
            }
        }
        m / self.len().max(1) as f64
    }

    /// Dataset made of the samples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::arg(format!("sample index {i} out of range")));
            }
            data.extend_from_slice(self.sample(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self {
            data,
            side: self.side,
            range: self.range,
            provenance: self.provenance.clone(),
            labels,
        })
    }

    /// Deterministic seeded shuffle followed by a split into
    /// `(train, holdout)`; the split is recorded in both provenances.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::arg(format!(
                "holdout fraction must lie in [0, 1), got {holdout_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::seeded(seed));
        let n_hold = (self.len() as f64 * holdout_fraction).round() as usize;
        let (hold, train) = order.split_at(n_hold);
        let mut train = self.subset(train)?;
        let mut hold = self.subset(hold)?;
        train.provenance = format!("{} | split seed={seed} part=train", self.provenance);
        hold.provenance = format!("{} | split seed={seed} part=holdout", self.provenance);
        Ok((train, hold))
    }

    /// CSV with a header row `x0,x1,...`, one sample per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for s in self.samples() {
            let row: Vec<String> = s.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Serializes to the `RGDS` layout (little-endian): magic, version u32,
/// sample count u32, side u32, range tag u8, row-major f64 samples, then a
/// trailer of provenance length u32 and UTF-8 provenance bytes.
pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.is_empty() {
        return Err(Error::arg("refusing to save an empty dataset"));
    }
    let mut out = Vec::with_capacity(17 + ds.data.len() * 8 + ds.provenance.len() + 4);
    out.extend_from_slice(RGDS_MAGIC);
    out.extend_from_slice(&RGDS_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.side as u32).to_le_bytes());
    out.push(ds.range.tag());
    for x in &ds.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(ds.provenance.len() as u32).to_le_bytes());
    out.extend_from_slice(ds.provenance.as_bytes());
    Ok(out)
}

/// Inverse of [`encode_dataset`]. A missing provenance trailer is accepted.
pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes, "RGDS");
    if r.take(4)? != RGDS_MAGIC {
        return Err(Error::format("RGDS", "bad magic"));
    }
    let version = r.u32_le()?;
    if version != RGDS_VERSION {
        return Err(Error::format("RGDS", format!("unsupported version {version}")));
    }
    let n = r.u32_le()? as usize;
    let side = r.u32_le()? as usize;
    let range = ValueRange::from_tag(r.u8()?)?;
    let count = n
        .checked_mul(side * side)
        .ok_or_else(|| Error::format("RGDS", "sample count overflow"))?;
    if r.remaining() < count * 8 {
        return Err(Error::format("RGDS", "truncated sample block"));
    }
    let data = (0..count).map(|_| r.f64_le()).collect::<Result<Vec<_>>>()?;
    let provenance = if r.remaining() == 0 {
        String::new()
    } else {
        let len = r.u32_le()? as usize;
        String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::format("RGDS", "provenance is not UTF-8"))?
    };
    Dataset::from_flat(data, side, range, provenance)
        .map_err(|e| Error::format("RGDS", e.to_string()))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    io_util::write_atomic(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

/// Maps an 8-bit intensity to `[-1, 1]`.
pub fn pixel_to_unit(p: f64) -> f64 {
    2.0 * (p / 255.0) - 1.0
}

/// Loads a big-endian IDX image file (magic `0x00000803`), optionally with
/// its label file. Images must be square.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let bytes = fs::read(images_path)?;
    let mut r = Reader::new(&bytes, "IDX");
    let magic = r.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format("IDX", format!("bad image magic {magic:#010x}")));
    }
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    if rows != cols {
        return Err(Error::format("IDX", format!("non-square images {rows}x{cols}")));
    }
    let pixels = r.take(n * rows * cols)?;
    let data = pixels.iter().map(|&p| pixel_to_unit(p as f64)).collect();
    let ds = Dataset::from_flat(
        data,
        rows,
        ValueRange::Real,
        format!("idx {}", images_path.display()),
    )?;
    match labels_path {
        None => Ok(ds),
        Some(lp) => {
            let bytes = fs::read(lp)?;
            let mut r = Reader::new(&bytes, "IDX");
            let magic = r.u32_be()?;
            if magic != IDX_LABELS_MAGIC {
                return Err(Error::format("IDX", format!("bad label magic {magic:#010x}")));
            }
            let count = r.u32_be()? as usize;
            let labels = r.take(count)?.to_vec();
            ds.with_labels(labels)
        }
    }
}

/// Result of ingesting an image folder.
#[derive(Debug, Clone)]
pub struct FolderIngest {
    pub dataset: Dataset,
    pub images_loaded: usize,
    /// Files that could not be decoded and were skipped.
    pub skipped: Vec<PathBuf>,
}

/// Options for [`load_image_folder`].
#[derive(Debug, Clone, Copy)]
pub struct ImagePipeline {
    pub target_side: usize,
    /// Convert colour images with ITU-R 601 luma. When false the first
    /// channel is used.
    pub grayscale: bool,
    /// Split every image into `t x t` equal tiles before resizing.
    pub tile: Option<usize>,
}

/// Decodes every image in `dir` (sorted by file name) and runs it through
/// grayscale, optional tiling, bilinear resize and the `[-1, 1]` mapping.
pub fn load_image_folder(dir: &Path, pipeline: ImagePipeline) -> Result<FolderIngest> {
    if pipeline.target_side == 0 {
        return Err(Error::arg("target side must be positive"));
    }
    if pipeline.tile == Some(0) {
        return Err(Error::arg("tile count must be positive"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::arg(format!("no files in {}", dir.display())));
    }
    let decoded: Vec<(PathBuf, Option<Vec<Vec<f64>>>)> = files
        .into_par_iter()
        .map(|p| {
            let out = match image::open(&p) {
                Ok(img) => Some(process_image(&img, pipeline)),
                Err(e) => {
                    log::warn!("skipping {}: {e}", p.display());
                    None
                }
            };
            (p, out)
        })
        .collect();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let mut images_loaded = 0;
    for (path, out) in decoded {
        match out {
            Some(tiles) => {
                images_loaded += 1;
                samples.extend(tiles);
            }
            None => skipped.push(path),
        }
    }
    if samples.is_empty() {
        return Err(Error::arg(format!(
            "no decodable images in {}",
            dir.display()
        )));
    }
    let provenance = format!(
        "images {} side={} grayscale={} tile={:?}",
        dir.display(),
        pipeline.target_side,
        pipeline.grayscale,
        pipeline.tile
    );
    let dataset = Dataset::new(samples, pipeline.target_side, ValueRange::Real, provenance)?;
    Ok(FolderIngest {
        dataset,
        images_loaded,
        skipped,
    })
}

/// Grayscale → tiles → resize → `[-1, 1]`, for one decoded image.
pub fn process_image(img: &image::DynamicImage, pipeline: ImagePipeline) -> Vec<Vec<f64>> {
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let gray: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_fn(w, h, |x, y| {
        let p = rgb.get_pixel(x, y).0;
        let v = if pipeline.grayscale {
            0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
        } else {
            p[0]
        };
        // f32 resampling clamps to [0, 1], so scale to 0..255 afterwards
        Luma([v])
    });
    let t = pipeline.tile.unwrap_or(1) as u32;
    let (tw, th) = (w / t, h / t);
    let side = pipeline.target_side as u32;
    let mut out = Vec::with_capacity((t * t) as usize);
    for ty in 0..t {
        for tx in 0..t {
            let tile = imageops::crop_imm(&gray, tx * tw, ty * th, tw, th).to_image();
            let resized = if tile.dimensions() == (side, side) {
                tile
            } else {
                imageops::resize(&tile, side, side, FilterType::Triangle)
            };
            out.push(
                resized
                    .pixels()
                    .map(|p| pixel_to_unit((p.0[0] as f64 * 255.0).clamp(0.0, 255.0)))
                    .collect(),
            );
        }
    }
    out
}
