//! Training, random search and the look-ahead sweep.

mod adam;
mod search;
mod sweep;
mod train;

use std::path::Path;

use rayon::prelude::*;

pub use adam::{Adam, BETA1, BETA2, CLIP_NORM, EPSILON};
pub use search::{random_search, save_scatter_csv, scatter_csv, IntRange, SearchSpace, SearchTrial};
pub use sweep::{lookahead_sweep, look_ahead_frames_for_ms, SweepOptions, SweepPoint, SweepReport, SweepRow};
pub use train::{train, training_examples, EvalPoint, TrainOptions, TrainRun};

use crate::data::{load_pair, synthesize_all, DatasetManifest};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::eval::{bss_sdr, SdrResult};
use crate::model::EnhancementModel;
use crate::nn::ParameterSet;

/// Environment variable capping evaluation and batch parallelism.
pub const THREADS_ENV: &str = "MASKSTREAM_THREADS";

/// A scored utterance: two-channel mixture and mono reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub snr_db: f64,
    pub noisy: AudioBuffer,
    pub clean: AudioBuffer,
}

/// Synthesizes every entry of `manifest` in memory.
pub fn utterances(manifest: &DatasetManifest) -> Result<Vec<Utterance>> {
    let mixes = synthesize_all(manifest)?;
    Ok(manifest
        .entries
        .iter()
        .zip(mixes)
        .map(|(e, m)| Utterance {
            id: e.id.clone(),
            snr_db: e.snr_db,
            noisy: m.noisy,
            clean: m.clean,
        })
        .collect())
}

/// Reads the pairs of `manifest` from a corpus directory written by
/// [`crate::data::build_corpus`].
pub fn load_utterances(manifest: &DatasetManifest, dir: &Path) -> Result<Vec<Utterance>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let (noisy, clean) = load_pair(dir, &e.id)?;
            Ok(Utterance {
                id: e.id.clone(),
                snr_db: e.snr_db,
                noisy,
                clean,
            })
        })
        .collect()
}

/// Rayon pool sized by `MASKSTREAM_THREADS`, or rayon's default when unset.
pub fn eval_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Offline enhancement and BSS Eval SDR of every utterance, in input order.
pub fn evaluate(
    model: &EnhancementModel,
    params: &ParameterSet<f32>,
    utterances: &[Utterance],
    filter_len: usize,
) -> Result<Vec<SdrResult>> {
    eval_pool()?.install(|| {
        utterances
            .par_iter()
            .map(|u| {
                let est = model.enhance(params, &u.noisy)?;
                let sdr = bss_sdr(&est, &u.clean, filter_len)?;
                Ok(SdrResult {
                    utterance_id: u.id.clone(),
                    input_snr_db: u.snr_db,
                    sdr_db: sdr.db,
                    capped: sdr.capped,
                    filter_len: sdr.filter_len,
                    trial: None,
                })
            })
            .collect()
    })
}
