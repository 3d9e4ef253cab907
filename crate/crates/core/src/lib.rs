//! Building blocks for sample-drop detection in multi-device recordings.
//!
//! * [`signal`]: waveforms, FFT, STFT and dB spectrograms.
//! * [`wav`]: PCM16 WAV reading and writing.
//! * [`scene`]: image-method room simulation of multi-device recordings.
//! * [`drops`]: sample-drop injection and labelled window-pair extraction.
//! * [`xcorr`]: coarse drop localisation by 2D normalized cross-correlation.
//! * [`registry`]: name-keyed registry used for runtime-selectable strategies.

pub mod drops;
pub mod error;
pub mod registry;
pub mod rng;
pub mod scene;
pub mod signal;
pub mod wav;
pub mod xcorr;

pub use error::{Error, Result};
pub use signal::{Spectrogram, StftConfig, Waveform};
