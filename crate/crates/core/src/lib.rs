//! Universal defensive underpainting patches.
//!
//! A small square patch is tiled under the background pixels of a text
//! image so that a scene-text detector stops finding the words, while the
//! glyph pixels themselves stay untouched. The crate covers the whole loop:
//!
//! - [`corpus`]: synthetic pages with pixel-exact character masks,
//! - [`imageops`]: tiling, fusion, random scaling, clipping and JPEG,
//! - [`detector`]: a trainable white-box surrogate and external adapters,
//! - [`udup`]: the patch objective and the momentum sign optimizer,
//! - [`eval`]: box extraction, matching metrics, sweeps and ablations.

pub mod corpus;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod imageops;
pub mod raster;
pub mod udup;

pub use error::{Error, Result};
pub use raster::{Raster, Real};
