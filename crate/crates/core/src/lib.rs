//! Lattice restricted Boltzmann machines and renormalization-group tooling.
//!
//! The crate covers the full loop: generate or ingest lattice data
//! ([`ising`], [`dataset`]), train ±1 RBMs with CD-1 ([`rbm`]), build
//! weights straight from data ([`rgm`]), and compare learned weights with
//! block-spin coarse graining through singular vectors and their Fourier
//! content ([`coarse`], [`spectral`], [`diagnostics`]).
//!
//! ```
//! use rgflow::coarse::{block_spin_svd_profile, BlockSpinSpec};
//!
//! let spec = BlockSpinSpec::new(8, 2, 2)?;
//! let profile = block_spin_svd_profile(&spec)?;
//! assert!(profile.singular_values.iter().all(|s| (s - 2.0).abs() < 1e-12));
//! # Ok::<(), rgflow::Error>(())
//! ```

pub mod coarse;
pub mod dataset;
pub mod diagnostics;
mod error;
pub mod io_util;
pub mod ising;
pub mod linalg;
pub mod rbm;
pub mod report;
pub mod rgm;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattice-data.md")]
    mod lattice_data {}
    #[doc = include_str!("../../../book/src/rbm.md")]
    mod rbm {}
    #[doc = include_str!("../../../book/src/block-spin.md")]
    mod block_spin {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/rgm.md")]
    mod rgm {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
