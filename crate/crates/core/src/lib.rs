//! Link-level simulation of chirp-permuted AFDM (CP-AFDM).
//!
//! The crate is organised bottom-up:
//!
//! - [`transforms`]: permutations, chirp sequences and the (permuted) discrete
//!   affine Fourier transform.
//! - [`channel`]: doubly-dispersive channels in circulant form, effective
//!   channels and the delay-Doppler location index.
//! - [`waveform`]: constellations, typed frames, modulator and demodulator.
//! - [`detection`]: MMSE equalisation, hard demapping, exhaustive ML and BER
//!   Monte Carlo.
//! - [`metrics`]: PAPR and its CCDF, discrete ambiguity functions and sidelobe
//!   metrics.
//! - [`cpim`]: chirp-permutation index modulation.
//! - [`physec`]: permutation-keyed transmission and eavesdropper experiments.

pub mod channel;
pub mod cpim;
pub mod detection;
pub mod error;
pub mod metrics;
pub mod physec;
pub mod seed;
pub mod transforms;
pub mod waveform;

pub use nalgebra::DMatrix;
pub use num_bigint::BigUint;
pub use num_complex::Complex64;

pub use channel::{ChannelFamily, ChannelSpec, EffectiveChannel, PathSpec, PrefixPhaseRule};
pub use detection::{BerExperiment, BerRecord, DetectionResult};
pub use error::{Error, Result};
pub use metrics::{AfGrid, CutKind, PaprCcdf, SidelobeMetrics};
pub use transforms::{ChirpSequence, CpDaft, Permutation, TransformConfig, TransformMode};
pub use waveform::{Constellation, Frame, Modem, WaveformId, WaveformKind};

/// Dense complex matrix used for channels and transforms.
pub type CMatrix = DMatrix<Complex64>;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
