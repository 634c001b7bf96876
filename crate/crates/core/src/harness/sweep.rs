//! Repeated-trial look-ahead sweep of causal models.

use std::fmt::Write as _;
use std::path::Path;

use super::train::{train, TrainOptions};
use super::{evaluate, Utterance};
use crate::dsp::StftParams;
use crate::error::{Error, Result};
use crate::eval::{mean, sample_std};
use crate::model::{EnhancementModel, ModelConfig};

pub const MIN_LOOK_AHEAD_MS: i32 = -100;
pub const MAX_LOOK_AHEAD_MS: i32 = 200;

/// Frames of look-ahead for `ms` milliseconds; `ms` must be a whole number
/// of hops within -100..=200.
pub fn look_ahead_frames_for_ms(ms: i32, stft: &StftParams, sample_rate: u32) -> Result<i32> {
    if !(MIN_LOOK_AHEAD_MS..=MAX_LOOK_AHEAD_MS).contains(&ms) {
        return Err(Error::InvalidParameter(format!(
            "look-ahead {ms} ms outside {MIN_LOOK_AHEAD_MS}..={MAX_LOOK_AHEAD_MS} ms"
        )));
    }
    let samples = ms as i64 * sample_rate as i64;
    let hop = stft.hop() as i64 * 1000;
    if samples % hop != 0 {
        return Err(Error::InvalidParameter(format!(
            "look-ahead {ms} ms is not a multiple of the {} ms hop",
            stft.hop() as f64 * 1000.0 / sample_rate as f64
        )));
    }
    Ok((samples / hop) as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub look_ahead_ms: Vec<i32>,
    /// One training seed per trial; every look-ahead reuses the same list.
    pub trial_seeds: Vec<u64>,
    pub train: TrainOptions,
}

impl SweepOptions {
    /// Trials seeded `seed, seed + 1, ...`.
    pub fn new(look_ahead_ms: Vec<i32>, trials_per_point: usize, seed: u64, train: TrainOptions) -> Self {
        Self {
            look_ahead_ms,
            trial_seeds: (0..trials_per_point as u64).map(|i| seed.wrapping_add(i)).collect(),
            train,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub look_ahead_ms: i32,
    pub trial: usize,
    pub seed: u64,
    /// Mean dev SDR of the best checkpoint; NaN when the trial failed first.
    pub sdr_dev: f64,
    pub sdr_eval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub look_ahead_ms: i32,
    pub trials: usize,
    pub dev_mean: f64,
    pub dev_std: f64,
    pub eval_mean: f64,
    pub eval_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn point(&self, look_ahead_ms: i32) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.look_ahead_ms == look_ahead_ms)
    }

    /// `look_ahead_ms,trial,sdr_dev,sdr_eval`
    pub fn csv(&self) -> String {
        let mut s = String::from("look_ahead_ms,trial,sdr_dev,sdr_eval\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.look_ahead_ms, r.trial, r.sdr_dev, r.sdr_eval);
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv()).map_err(|e| Error::io(path, e))
    }

    /// Mean and run-to-run std per look-ahead, one line each.
    pub fn summary(&self) -> String {
        let mut s = String::from("look_ahead_ms  trials  dev_mean  dev_std  eval_mean  eval_std\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:>13}  {:>6}  {:>8.3}  {:>7.3}  {:>9.3}  {:>8.3}",
                p.look_ahead_ms, p.trials, p.dev_mean, p.dev_std, p.eval_mean, p.eval_std
            );
        }
        s
    }
}

/// Trains one causal model per (look-ahead, trial seed) from `base`, keeps
/// each trial's best dev checkpoint and scores it on `dev` and `eval`.
pub fn lookahead_sweep(
    base: &ModelConfig,
    opts: &SweepOptions,
    train_set: &[Utterance],
    dev: &[Utterance],
    eval: &[Utterance],
) -> Result<SweepReport> {
    if opts.trial_seeds.is_empty() || opts.look_ahead_ms.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one look-ahead and one trial".into()));
    }
    let stft = StftParams::default();
    let frames: Vec<i32> = opts
        .look_ahead_ms
        .iter()
        .map(|&ms| look_ahead_frames_for_ms(ms, &stft, 16_000))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (&ms, &k) in opts.look_ahead_ms.iter().zip(&frames) {
        let config = ModelConfig {
            causal: true,
            look_ahead_frames: k,
            ..base.clone()
        };
        let model = EnhancementModel::new(config.clone())?;
        let (mut dev_sdrs, mut eval_sdrs) = (Vec::new(), Vec::new());
        for (trial, &seed) in opts.trial_seeds.iter().enumerate() {
            let run = train(&config, train_set, dev, &TrainOptions { seed, ..opts.train.clone() })?;
            let (d, e) = match run.best {
                Some(best) => {
                    let r = evaluate(&model, &run.best_params, eval, opts.train.filter_len)?;
                    (best.dev_sdr, mean(&r.iter().map(|r| r.sdr_db).collect::<Vec<_>>()))
                }
                None => (f64::NAN, f64::NAN),
            };
            log::info!("look-ahead {ms} ms, trial {trial}: dev {d:.3} dB, eval {e:.3} dB");
            rows.push(SweepRow {
                look_ahead_ms: ms,
                trial,
                seed,
                sdr_dev: d,
                sdr_eval: e,
            });
            dev_sdrs.push(d);
            eval_sdrs.push(e);
        }
        points.push(SweepPoint {
            look_ahead_ms: ms,
            trials: dev_sdrs.len(),
            dev_mean: mean(&dev_sdrs),
            dev_std: sample_std(&dev_sdrs),
            eval_mean: mean(&eval_sdrs),
            eval_std: sample_std(&eval_sdrs),
        });
    }
    Ok(SweepReport { rows, points })
}
