//! Block-spin coarse graining as a linear map.
//!
//! Output site `(b, c)` of the hidden lattice sums the `B x B` block of
//! visible spins whose top-left corner is `(b * stride, c * stride)`. Blocks
//! overlap when `B > stride`; sites that would fall outside the visible
//! lattice are dropped (no wraparound). Entries are sums rather than means,
//! so a non-overlapping `2 x 2` rule has every singular value equal to 2.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, SvdBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpinSpec {
    pub visible_side: usize,
    pub block_size: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    2
}

impl BlockSpinSpec {
    pub fn new(visible_side: usize, block_size: usize, stride: usize) -> Result<Self> {
        let spec = Self {
            visible_side,
            block_size,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.block_size == 0 || self.visible_side == 0 {
            return Err(Error::arg("block size, stride and side must be positive"));
        }
        if self.visible_side % self.stride != 0 {
            return Err(Error::arg(format!(
                "stride {} does not divide lattice side {}",
                self.stride, self.visible_side
            )));
        }
        Ok(())
    }

    pub fn hidden_side(&self) -> usize {
        self.visible_side / self.stride
    }

    /// Visible sites `(row, col)` covered by the block of output `(b, c)`.
    pub fn block_sites(&self, b: usize, c: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (r0, c0) = (b * self.stride, c * self.stride);
        let end = |start: usize| (start + self.block_size).min(self.visible_side);
        (r0..end(r0)).flat_map(move |r| (c0..end(c0)).map(move |cc| (r, cc)))
    }
}

/// The `L_v^2 x L_h^2` 0/1 matrix whose column `b * L_h + c` marks the block
/// of output site `(b, c)`.
pub fn block_spin_matrix(spec: &BlockSpinSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (lv, lh) = (spec.visible_side, spec.hidden_side());
    let mut m = DMatrix::zeros(lv * lv, lh * lh);
    for b in 0..lh {
        for c in 0..lh {
            for (r, cc) in spec.block_sites(b, c) {
                m[(r * lv + cc, b * lh + c)] = 1.0;
            }
        }
    }
    Ok(m)
}

/// `matrix^T v`: the block sums of `v`.
pub fn apply_block_spin(v: &DVector<f64>, matrix: &DMatrix<f64>) -> Result<DVector<f64>> {
    if v.len() != matrix.nrows() {
        return Err(Error::dim(format!(
            "vector of length {} against a {}-row block matrix",
            v.len(),
            matrix.nrows()
        )));
    }
    Ok(matrix.tr_mul(v))
}

pub fn block_spin_svd_profile(spec: &BlockSpinSpec) -> Result<SvdBundle> {
    spectral::svd(&block_spin_matrix(spec)?)
}
