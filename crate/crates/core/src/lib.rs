//! Volumetric texture analysis for nodule-style CT data.
//!
//! The crate is organised the way the pipeline runs:
//!
//! * [`imagio`]: PGM and raw-volume I/O, intensity windowing, median filtering, quantization.
//! * [`otsu`]: histograms and the multilevel Otsu objective, plus an exhaustive reference search.
//! * [`wsa`]: water strider search over threshold vectors using the Otsu objective.
//! * [`glcm`]: 2D, 2.5D and volume-space 3D co-occurrence matrices and Haralick descriptors.
//! * [`fusion`]: a from-scratch LSTM classifier that fuses GLCM sequences.
//! * [`metrics`]: confusion-based rates, F1, and one-vs-rest ROC/AUC.

pub mod error;
pub mod fusion;
pub mod glcm;
pub mod imagio;
pub mod metrics;
pub mod otsu;
pub mod wsa;

pub use error::{Error, Result};
