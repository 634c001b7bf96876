//! Training loop with periodic dev scoring and best-checkpoint selection.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::{eval_pool, evaluate, Utterance};
use crate::data::chunk_fixed;
use crate::error::{Error, Result};
use crate::eval::{mean, DEFAULT_FILTER_LEN};
use crate::model::{build_model, EnhancementModel, ModelConfig, TrainingExample};
use crate::nn::{save_checkpoint, ParameterSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Seeds parameter initialization and batch order.
    pub seed: u64,
    pub max_steps: usize,
    pub batch_size: usize,
    /// Dev scoring cadence in steps; the final step is always scored.
    pub eval_every: usize,
    /// Training chunk length in seconds.
    pub chunk_s: f64,
    pub filter_len: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_steps: 2_000,
            batch_size: 4,
            eval_every: 200,
            chunk_s: crate::data::CHUNK_S,
            filter_len: DEFAULT_FILTER_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub dev_sdr: f64,
}

/// Record of one training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: ModelConfig,
    pub options: TrainOptions,
    /// Mean clip loss of every completed step.
    pub losses: Vec<f64>,
    pub evals: Vec<EvalPoint>,
    /// Highest-scoring dev evaluation; earliest wins ties.
    pub best: Option<EvalPoint>,
    pub best_params: ParameterSet<f32>,
    /// Mean dev SDR of the unprocessed channel 0.
    pub input_dev_sdr: f64,
    /// Set when the run diverged; the record covers the steps before it.
    pub failure: Option<String>,
}

impl TrainRun {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn best_dev_sdr(&self) -> Option<f64> {
        self.best.map(|b| b.dev_sdr)
    }

    /// `step,loss,dev_sdr` per step; `dev_sdr` is empty where not scored.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("step,loss,dev_sdr\n");
        let mut evals = self.evals.iter().peekable();
        for (i, l) in self.losses.iter().enumerate() {
            let step = i + 1;
            let _ = write!(s, "{step},{l},");
            while let Some(e) = evals.next_if(|e| e.step <= step) {
                if e.step == step {
                    let _ = write!(s, "{}", e.dev_sdr);
                }
            }
            s.push('\n');
        }
        for e in evals {
            let _ = writeln!(s, "{},,{}", e.step, e.dev_sdr);
        }
        s
    }

    /// Writes `best.ckpt`, `config.txt` and `metrics.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&dir.join("best.ckpt"), &self.best_params)?;
        self.config.save(&dir.join("config.txt"))?;
        let p = dir.join("metrics.csv");
        std::fs::write(&p, self.metrics_csv()).map_err(|e| Error::io(&p, e))
    }
}

/// Chunks every training utterance and precomputes model inputs.
pub fn training_examples(model: &EnhancementModel, train: &[Utterance], chunk_s: f64) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for u in train {
        let noisy = chunk_fixed(std::slice::from_ref(&u.noisy), chunk_s)?;
        let clean = chunk_fixed(std::slice::from_ref(&u.clean), chunk_s)?;
        for (n, c) in noisy.iter().zip(&clean) {
            out.push(model.prepare_example(n, c)?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no training utterance is at least {chunk_s} s long")));
    }
    Ok(out)
}

fn dev_sdr(model: &EnhancementModel, params: &ParameterSet<f32>, dev: &[Utterance], filter_len: usize) -> Result<f64> {
    let r = evaluate(model, params, dev, filter_len)?;
    Ok(mean(&r.iter().map(|r| r.sdr_db).collect::<Vec<_>>()))
}

/// Adam on the mean clip loss of shuffled chunk batches, clipped at global
/// norm 5, scoring the dev set every `eval_every` steps and at the end.
pub fn train(config: &ModelConfig, train: &[Utterance], dev: &[Utterance], opts: &TrainOptions) -> Result<TrainRun> {
    if opts.batch_size == 0 || opts.eval_every == 0 {
        return Err(Error::InvalidParameter("batch size and eval interval must be at least 1".into()));
    }
    if dev.is_empty() {
        return Err(Error::InvalidInput("dev set is empty".into()));
    }
    let (model, mut params) = build_model(config, opts.seed)?;
    let examples = training_examples(&model, train, opts.chunk_s)?;
    let input_dev_sdr = mean(
        &dev.iter()
            .map(|u| Ok(crate::eval::bss_sdr(&u.noisy.select_channel(0), &u.clean, opts.filter_len)?.db))
            .collect::<Result<Vec<_>>>()?,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = Vec::new();
    let mut adam = Adam::new(&params, config.learning_rate);
    let pool = eval_pool()?;
    let mut run = TrainRun {
        config: config.clone(),
        options: opts.clone(),
        losses: Vec::with_capacity(opts.max_steps),
        evals: Vec::new(),
        best: None,
        best_params: params.clone(),
        input_dev_sdr,
        failure: None,
    };
    let record = |run: &mut TrainRun, step: usize, params: &ParameterSet<f32>| -> Result<()> {
        let sdr = dev_sdr(&model, params, dev, opts.filter_len)?;
        log::info!("step {step}: dev SDR {sdr:.3} dB (input {:.3} dB)", run.input_dev_sdr);
        if !sdr.is_finite() {
            run.failure = Some(format!("dev SDR is {sdr} at step {step}"));
            return Ok(());
        }
        let point = EvalPoint { step, dev_sdr: sdr };
        run.evals.push(point);
        if run.best.is_none_or(|b| sdr > b.dev_sdr) {
            run.best = Some(point);
            run.best_params = params.clone();
        }
        Ok(())
    };

    for step in 1..=opts.max_steps {
        let mut batch = Vec::with_capacity(opts.batch_size);
        while batch.len() < opts.batch_size {
            if order.is_empty() {
                order = (0..examples.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(order.pop().unwrap_or(0));
        }
        let per: Vec<(f64, ParameterSet<f32>)> = pool.install(|| {
            batch
                .par_iter()
                .map(|&i| {
                    let mut g = params.zeros_like();
                    let l = model.loss_and_grads(&params, &examples[i], &mut g)?;
                    Ok((l, g))
                })
                .collect::<Result<_>>()
        })?;
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &per {
            loss += l;
            grads.add_scaled(1.0, g);
        }
        let scale = 1.0 / batch.len() as f64;
        loss *= scale;
        grads.scale(scale as f32);
        if !loss.is_finite() || grads.has_non_finite() {
            run.failure = Some(format!("loss diverged at step {step}"));
            log::warn!("{}", run.failure.as_deref().unwrap_or_default());
            break;
        }
        Adam::clip(&mut grads);
        adam.step(&mut params, &grads);
        run.losses.push(loss);
        if step % opts.eval_every == 0 || step == opts.max_steps {
            record(&mut run, step, &params)?;
            if run.failed() {
                break;
            }
        }
    }
    if run.evals.is_empty() && !run.failed() {
        let step = run.losses.len();
        record(&mut run, step, &params)?;
    }
    Ok(run)
}
