//! Signal front end: audio buffers, STFT analysis/synthesis, spectral
//! features and WAV I/O.

mod audio;
mod features;
mod stft;
pub mod wav;

pub use audio::{AudioBuffer, DEFAULT_SAMPLE_RATE};
pub use features::{
    compress_value, delta_phase, input_features, magnitude_features, phase_advance,
    power_compress, FeatureKind, FeatureTensor, DEFAULT_COMPRESSION_POWER,
};
pub(crate) use features::frame_features;
pub use stft::{hann_window, istft, stft, ComplexSpectrogram, StftParams, WOLA_FLOOR};
pub(crate) use stft::{FrameTransform, OverlapAdd};
