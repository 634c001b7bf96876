//! Seeded random search over the hyperparameter space.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::{train, TrainOptions, TrainRun};
use super::Utterance;
use crate::dsp::StftParams;
use crate::error::{Error, Result};
use crate::model::{parse_conv_rows, parse_key_values, ConvConfig, EnhancementModel, ModelConfig};
use crate::nn::{ops_per_audio_second, param_count};

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntRange {
    pub lo: usize,
    pub hi: usize,
}

impl IntRange {
    pub const fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

/// Ranges sampled by [`random_search`]. The default is the full published
/// space; narrower ranges must stay inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub conv_configs: Vec<ConvConfig>,
    pub blstm_depth: IntRange,
    pub blstm_width: IntRange,
    pub fc_depth: IntRange,
    pub fc_width: IntRange,
    pub delta_phase: Vec<bool>,
    pub lambda: (f64, f64),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub input_channels: IntRange,
    /// Fixed for every trial.
    pub causal: bool,
    pub look_ahead_frames: i32,
}

impl SearchSpace {
    pub const DEPTH: IntRange = IntRange::new(0, 5);
    pub const WIDTH: IntRange = IntRange::new(8, 1024);
    pub const CHANNELS: IntRange = IntRange::new(1, 2);
    pub const LAMBDA: (f64, f64) = (0.0, 1.0);
    pub const LEARNING_RATE: (f64, f64) = (3e-6, 1e-3);
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            conv_configs: vec![ConvConfig::Small, ConvConfig::Large],
            blstm_depth: Self::DEPTH,
            blstm_width: Self::WIDTH,
            fc_depth: Self::DEPTH,
            fc_width: Self::WIDTH,
            delta_phase: vec![true, false],
            lambda: Self::LAMBDA,
            learning_rate: Self::LEARNING_RATE,
            input_channels: Self::CHANNELS,
            causal: false,
            look_ahead_frames: 0,
        }
    }
}

fn parse_int_range(v: &str) -> Option<IntRange> {
    match v.split_once("..") {
        Some((a, b)) => Some(IntRange::new(a.trim().parse().ok()?, b.trim().parse().ok()?)),
        None => v.trim().parse().ok().map(|x| IntRange::new(x, x)),
    }
}

fn parse_f64_range(v: &str) -> Option<(f64, f64)> {
    match v.split_once("..") {
        Some((a, b)) => Some((a.trim().parse().ok()?, b.trim().parse().ok()?)),
        None => v.trim().parse().ok().map(|x| (x, x)),
    }
}

fn within(inner: (f64, f64), outer: (f64, f64)) -> bool {
    inner.0 <= inner.1 && inner.0 >= outer.0 && inner.1 <= outer.1
}

impl SearchSpace {
    /// Every constraint violated, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        if self.conv_configs.is_empty() {
            e.push("conv_config: no choices".to_string());
        }
        if self.delta_phase.is_empty() {
            e.push("delta_phase: no choices".to_string());
        }
        let ints = [
            ("blstm_depth", self.blstm_depth, Self::DEPTH),
            ("blstm_width", self.blstm_width, Self::WIDTH),
            ("fc_depth", self.fc_depth, Self::DEPTH),
            ("fc_width", self.fc_width, Self::WIDTH),
            ("input_channels", self.input_channels, Self::CHANNELS),
        ];
        for (name, r, limit) in ints {
            if r.lo > r.hi || !limit.contains(r.lo) || !limit.contains(r.hi) {
                e.push(format!("{name} = {}..{} outside {}..{}", r.lo, r.hi, limit.lo, limit.hi));
            }
        }
        if !within(self.lambda, Self::LAMBDA) {
            e.push(format!("lambda range {:?} outside [0, 1]", self.lambda));
        }
        if !within(self.learning_rate, Self::LEARNING_RATE) {
            e.push(format!("learning_rate range {:?} outside [3e-6, 1e-3]", self.learning_rate));
        }
        if !self.causal && self.look_ahead_frames != 0 {
            e.push("look_ahead_frames must be 0 for a non-causal search".to_string());
        }
        for c in &self.conv_configs {
            let probe = ModelConfig {
                conv_config: c.clone(),
                ..ModelConfig::default()
            };
            if let Err(Error::Config(m)) = probe.validate() {
                e.extend(m);
            }
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    /// Flat key-value form: `key = lo..hi`, a single value, or a comma list
    /// for `conv_config` and `delta_phase`. Missing keys keep the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        let mut errors = Vec::new();
        let mut names: Option<String> = None;
        let mut rows: Option<String> = None;
        for (k, v) in parse_key_values(text)? {
            let bad = format!("{k}: bad value {v:?}");
            let ok = match k.as_str() {
                "conv_config" => {
                    names = Some(v.clone());
                    true
                }
                "conv_layers" => {
                    rows = Some(v.clone());
                    true
                }
                "blstm_depth" => parse_int_range(&v).map(|r| s.blstm_depth = r).is_some(),
                "blstm_width" => parse_int_range(&v).map(|r| s.blstm_width = r).is_some(),
                "fc_depth" => parse_int_range(&v).map(|r| s.fc_depth = r).is_some(),
                "fc_width" => parse_int_range(&v).map(|r| s.fc_width = r).is_some(),
                "input_channels" => parse_int_range(&v).map(|r| s.input_channels = r).is_some(),
                "lambda" => parse_f64_range(&v).map(|r| s.lambda = r).is_some(),
                "learning_rate" => parse_f64_range(&v).map(|r| s.learning_rate = r).is_some(),
                "delta_phase" => {
                    let parsed: Option<Vec<bool>> = v
                        .split(',')
                        .map(|x| match x.trim() {
                            "yes" | "true" => Some(true),
                            "no" | "false" => Some(false),
                            _ => None,
                        })
                        .collect();
                    parsed.map(|p| s.delta_phase = p).is_some()
                }
                "causal" => match v.as_str() {
                    "yes" | "true" => {
                        s.causal = true;
                        true
                    }
                    "no" | "false" => {
                        s.causal = false;
                        true
                    }
                    _ => false,
                },
                "look_ahead_frames" => v.parse().map(|x| s.look_ahead_frames = x).is_ok(),
                _ => {
                    errors.push(format!("unknown key {k:?}"));
                    true
                }
            };
            if !ok {
                errors.push(bad);
            }
        }
        if let Some(names) = names {
            s.conv_configs.clear();
            for n in names.split(',').map(str::trim) {
                match n {
                    "small" => s.conv_configs.push(ConvConfig::Small),
                    "large" => s.conv_configs.push(ConvConfig::Large),
                    "none" => s.conv_configs.push(ConvConfig::None),
                    "custom" => match rows.as_deref().map(parse_conv_rows) {
                        Some(Ok(r)) => s.conv_configs.push(ConvConfig::Custom(r)),
                        Some(Err(Error::Config(m))) => errors.extend(m),
                        Some(Err(other)) => errors.push(other.to_string()),
                        None => errors.push("conv_config lists custom without conv_layers".into()),
                    },
                    other => errors.push(format!("conv_config: unknown value {other:?}")),
                }
            }
        } else if rows.is_some() {
            errors.push("conv_layers needs conv_config to list custom".into());
        }
        if let Err(Error::Config(m)) = s.validate() {
            errors.extend(m);
        }
        if errors.is_empty() {
            Ok(s)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// One configuration drawn uniformly per field, log-uniformly for the
    /// learning rate.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> ModelConfig {
        let int = |rng: &mut R, r: IntRange| rng.random_range(r.lo..=r.hi);
        let conv_config = self.conv_configs[rng.random_range(0..self.conv_configs.len())].clone();
        let blstm_depth = int(rng, self.blstm_depth);
        let blstm_width = int(rng, self.blstm_width);
        let fc_depth = int(rng, self.fc_depth);
        let fc_width = int(rng, self.fc_width);
        let delta_phase = self.delta_phase[rng.random_range(0..self.delta_phase.len())];
        let lambda = self.lambda.0 + (self.lambda.1 - self.lambda.0) * rng.random::<f64>();
        let (lo, hi) = (self.learning_rate.0.ln(), self.learning_rate.1.ln());
        let learning_rate = (lo + (hi - lo) * rng.random::<f64>()).exp().clamp(self.learning_rate.0, self.learning_rate.1);
        let input_channels = int(rng, self.input_channels);
        ModelConfig {
            conv_config,
            blstm_depth,
            blstm_width,
            fc_depth,
            fc_width,
            delta_phase,
            lambda,
            learning_rate,
            input_channels,
            causal: self.causal,
            look_ahead_frames: self.look_ahead_frames,
            ..ModelConfig::default()
        }
    }
}

/// One search trial; `run` is absent when training could not start.
#[derive(Debug, Clone)]
pub struct SearchTrial {
    pub trial: usize,
    pub seed: u64,
    pub config: ModelConfig,
    pub param_count: usize,
    pub ops_per_second: f64,
    pub run: Option<TrainRun>,
    pub error: Option<String>,
}

impl SearchTrial {
    pub fn failed(&self) -> bool {
        self.best_dev_sdr().is_none() || self.run.as_ref().is_some_and(TrainRun::failed)
    }

    pub fn best_dev_sdr(&self) -> Option<f64> {
        self.run.as_ref().and_then(TrainRun::best_dev_sdr)
    }
}

/// Trains `budget` sampled configurations for `opts.max_steps` steps each
/// and returns them best first. Failed trials follow in trial order.
pub fn random_search(
    space: &SearchSpace,
    budget: usize,
    train_set: &[Utterance],
    dev_set: &[Utterance],
    opts: &TrainOptions,
    seed: u64,
) -> Result<Vec<SearchTrial>> {
    if budget == 0 {
        return Err(Error::InvalidParameter("search budget must be at least 1".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5);
    let stft = StftParams::default();
    let mut trials = Vec::with_capacity(budget);
    for trial in 0..budget {
        let config = space.sample(&mut rng);
        let trial_seed: u64 = rng.random();
        let spec = EnhancementModel::network_spec(&config, stft.num_bins())?;
        let (pc, ops) = (param_count(&spec)?, ops_per_audio_second(&spec, &stft, 16_000)?);
        log::info!("trial {trial}: {pc} parameters, {ops:.3e} ops/s");
        let trial_opts = TrainOptions {
            seed: trial_seed,
            ..opts.clone()
        };
        let (run, error) = match train(&config, train_set, dev_set, &trial_opts) {
            Ok(r) => (Some(r), None),
            Err(e) => {
                log::warn!("trial {trial} failed: {e}");
                (None, Some(e.to_string()))
            }
        };
        trials.push(SearchTrial {
            trial,
            seed: trial_seed,
            config,
            param_count: pc,
            ops_per_second: ops,
            run,
            error,
        });
    }
    trials.sort_by(|a, b| match (a.failed(), b.failed()) {
        (false, false) => b
            .best_dev_sdr()
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.best_dev_sdr().unwrap_or(f64::NEG_INFINITY)),
        (fa, fb) => fa.cmp(&fb),
    });
    Ok(trials)
}

/// `trial,param_count,ops_per_second,best_dev_sdr,failed`, one row per trial
/// in the given order.
pub fn scatter_csv(trials: &[SearchTrial]) -> String {
    let mut s = String::from("trial,param_count,ops_per_second,best_dev_sdr,failed\n");
    for t in trials {
        let sdr = t.best_dev_sdr().map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", t.trial, t.param_count, t.ops_per_second, sdr, t.failed());
    }
    s
}

pub fn save_scatter_csv(path: &Path, trials: &[SearchTrial]) -> Result<()> {
    std::fs::write(path, scatter_csv(trials)).map_err(|e| Error::io(path, e))
}
