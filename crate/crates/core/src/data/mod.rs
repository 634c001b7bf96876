//! Synthetic two-microphone mixture corpus, manifests and chunking.

mod manifest;
mod synth;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use manifest::{DatasetManifest, MixtureSpec, Split, GENERATOR_VERSION, MANIFEST_COLUMNS};
pub use synth::{chunk_fixed, mix_at_snr, synth_noise, synth_target, Mixture, NoiseProfile};

use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::dsp::AudioBuffer;
use crate::error::Result;

/// Training chunk length in seconds.
pub const CHUNK_S: f64 = 3.0;

pub fn noise_profile(split: Split) -> NoiseProfile {
    match split {
        Split::Train => NoiseProfile::TRAIN,
        Split::Dev | Split::Eval => NoiseProfile::HELD_OUT,
    }
}

/// The mixture an entry describes.
pub fn synthesize(entry: &MixtureSpec, split: Split) -> Result<Mixture> {
    let target = synth_target(entry.duration_s, entry.target_seed)?;
    let noise = synth_noise(entry.duration_s, entry.noise_seed, &noise_profile(split))?;
    mix_at_snr(&target, &noise, entry.snr_db)
}

/// Every mixture of a manifest, in entry order.
pub fn synthesize_all(manifest: &DatasetManifest) -> Result<Vec<Mixture>> {
    manifest.entries.par_iter().map(|e| synthesize(e, manifest.split)).collect()
}

pub fn noisy_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}_noisy.wav"))
}

pub fn clean_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}_clean.wav"))
}

/// Writes `<id>_noisy.wav` (two channels) and `<id>_clean.wav` (channel 0
/// of the target) as 32-bit float for every entry. Returns the paths
/// written, noisy before clean, in entry order.
pub fn build_corpus(manifest: &DatasetManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    manifest.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let written: Vec<[PathBuf; 2]> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let m = synthesize(e, manifest.split)?;
            let (n, c) = (noisy_path(dir, &e.id), clean_path(dir, &e.id));
            write_wav(&n, &m.noisy, WavFormat::Float32)?;
            write_wav(&c, &m.clean, WavFormat::Float32)?;
            Ok([n, c])
        })
        .collect::<Result<_>>()?;
    Ok(written.into_iter().flatten().collect())
}

/// Reads back one `(noisy, clean)` pair written by [`build_corpus`].
pub fn load_pair(dir: &Path, id: &str) -> Result<(AudioBuffer, AudioBuffer)> {
    Ok((read_wav(noisy_path(dir, id))?, read_wav(clean_path(dir, id))?))
}

#[cfg(test)]
mod tests;
