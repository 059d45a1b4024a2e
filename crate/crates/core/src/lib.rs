//! Photon-pair spectrometer pipeline for time-stamping pixel cameras.
//!
//! The crate takes raw pixel hits from a 256×256 time-stamping camera and
//! turns them into calibrated single-photon spectra:
//!
//! - [`event_io`]: the [`PixelHit`] model, PHX1/CSV readers and writers, time chunking
//! - [`clustering`]: time-windowed connected-component clustering, ToT centroids,
//!   largest-ToT timing with time-walk correction
//! - [`calibration`]: ROI projection, Gaussian line fits, linear pixel→wavelength scale
//! - [`coincidence`]: closest-in-time pairing across channels, Δt histogram and fit
//! - [`spectra`]: median/FWHM summaries, joint spectral intensity, pump reconstruction
//! - [`synth`]: a seeded generator for argon-lamp and photon-pair datasets with truth labels
//! - [`pipeline`]: composition of the stages used by the command-line tool
//!
//! Data-parallel stages go through [`Exec`]; building without the default
//! `parallel` feature swaps every parallel loop for its sequential twin.

pub mod acceptance;
pub mod calibration;
pub mod clustering;
pub mod coincidence;
pub mod error;
pub mod event_io;
pub mod exec;
pub mod fit;
pub mod histogram;
pub mod oracle;
pub mod pipeline;
pub mod spectra;
pub mod synth;

pub use calibration::{CalibrationModel, RegionOfInterest};
pub use clustering::{Adjacency, Cluster, PhotonEvent, TimeWalkTable};
pub use coincidence::PhotonPair;
pub use error::{Error, Result};
pub use event_io::{HitChunk, HitFormat, PixelHit, TICK_NS};
pub use exec::Exec;
pub use fit::GaussianFit;
pub use histogram::{Axis, Histogram1D, Histogram2D};
