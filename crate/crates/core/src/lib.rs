//! Training-free query-by-example spoken term detection.
//!
//! A spoken query and a reference recording are turned into frame-level
//! feature matrices, compared frame by frame into a distance-matrix image,
//! and an occurrence of the query shows up as a dark quasi-diagonal line in
//! that image. Canny edges plus a Hough line search find those lines, which
//! gives a detection decision, an occurrence count and time localization.
//!
//! The pipeline stages live in their own modules:
//!
//! * [`audio`]: WAV loading and standardization to 16 kHz mono.
//! * [`features`]: native MFCC extraction and the QBF1 exchange format.
//! * [`distmat`]: frame distance matrices and their 8-bit rendering.
//! * [`edge`]: Canny edge detection.
//! * [`hough`]: Hough accumulation, segment tracing and the acceptance rule.
//! * [`detector`]: the end-to-end detector, corpus scan and a DTW baseline.
//! * [`eval`]: trial manifests, confusion matrices and MTWV scoring.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod audio;
pub mod detector;
pub mod distmat;
pub mod edge;
mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod hough;
pub mod par;
pub mod synth;

pub use error::{Error, Result};
pub use par::Exec;
