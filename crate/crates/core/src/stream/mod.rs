//! Frame-by-frame causal inference with look-ahead, matching offline
//! inference of the same model, plus latency accounting.
//!
//! Output sample `n` is final once every analysis frame overlapping it has
//! been synthesized. Frame `t` covers `[t*hop, t*hop + frame_len)`, and its
//! mask needs feature frame `t + k`, which needs input up to
//! `(t + k)*hop + frame_len`. The first sample of the hop block of frame `t`
//! therefore waits `frame_len - hop + k*hop + hop` samples.

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::dsp::{frame_features, AudioBuffer, FrameTransform, OverlapAdd, StftParams};
use crate::error::{Error, Result};
use crate::model::{EnhancementModel, ModelConfig};
use crate::nn::{ParameterSet, StepState};

/// Breakdown of the algorithmic delay of the streaming engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    /// Samples of a frame that precede its last hop.
    pub framing_samples: usize,
    /// Feature frames consumed ahead of the output frame.
    pub look_ahead_samples: usize,
    /// The newest hop is final only after its normalization is complete.
    pub finalization_samples: usize,
    pub sample_rate: u32,
}

impl Latency {
    pub fn total_samples(&self) -> usize {
        self.framing_samples + self.look_ahead_samples + self.finalization_samples
    }

    pub fn total_ms(&self) -> f64 {
        self.total_samples() as f64 * 1000.0 / self.sample_rate as f64
    }
}

/// Delay from an input sample to the matching final output sample.
/// Negative look-ahead does not reduce it.
pub fn algorithmic_latency(config: &ModelConfig, stft: &StftParams, sample_rate: u32) -> Latency {
    Latency {
        framing_samples: stft.frame_len() - stft.hop(),
        look_ahead_samples: config.look_ahead_frames.max(0) as usize * stft.hop(),
        finalization_samples: stft.hop(),
        sample_rate,
    }
}

/// State of one enhancement stream over a shared model and parameter set.
pub struct StreamState<'a> {
    model: &'a EnhancementModel,
    params: &'a ParameterSet<f32>,
    stft: StftParams,
    transform: FrameTransform,
    /// Channels pushed by the caller.
    audio_channels: usize,
    /// Channels the model reads: the first `model_channels` of the input.
    model_channels: usize,
    look_ahead: i32,
    /// Input samples from the start of the next analysis frame, per channel.
    pending: Vec<Vec<f64>>,
    prev_bins: Option<Vec<Complex64>>,
    /// Noisy spectra `[bin][channel]` awaiting their mask, oldest first.
    spectra: VecDeque<Vec<Complex64>>,
    /// Feature frames delayed by a negative look-ahead.
    delayed: VecDeque<Vec<f32>>,
    net: StepState<f32>,
    /// Overlap-add tail starting at the first sample not yet emitted.
    tail_acc: Vec<f64>,
    tail_norm: Vec<f64>,
    frames_analysed: usize,
    frames_fed: usize,
    frames_emitted: usize,
    samples_in: usize,
    samples_out: usize,
    flushed: bool,
    masks: Option<Vec<f32>>,
    scratch_bins: Vec<Complex64>,
    scratch_frame: Vec<f64>,
}

/// Starts a stream of `audio_channels`-channel input. The model must be
/// causal.
pub fn init_stream<'a>(
    model: &'a EnhancementModel,
    params: &'a ParameterSet<f32>,
    audio_channels: usize,
) -> Result<StreamState<'a>> {
    let config = model.config();
    if !config.causal {
        return Err(Error::Stream("streaming needs a causal model".into()));
    }
    let want = config.input_channels;
    let model_channels = match audio_channels {
        n if n == want => want,
        n if n > want && want == 1 => 1,
        n => return Err(Error::InvalidInput(format!("model needs {want} input channels, got {n}"))),
    };
    model.network().check_params(params)?;
    let net = model.network().step_state()?;
    let stft = model.stft_params().clone();
    let bins = stft.num_bins();
    Ok(StreamState {
        model,
        params,
        transform: FrameTransform::new(&stft),
        audio_channels,
        model_channels,
        look_ahead: config.look_ahead_frames,
        pending: vec![Vec::with_capacity(stft.frame_len()); model_channels],
        prev_bins: None,
        spectra: VecDeque::new(),
        delayed: VecDeque::new(),
        net,
        tail_acc: vec![0.0; stft.frame_len() - stft.hop()],
        tail_norm: vec![0.0; stft.frame_len() - stft.hop()],
        frames_analysed: 0,
        frames_fed: 0,
        frames_emitted: 0,
        samples_in: 0,
        samples_out: 0,
        flushed: false,
        masks: None,
        scratch_bins: vec![Complex64::new(0.0, 0.0); bins],
        scratch_frame: vec![0.0; stft.frame_len()],
        stft,
    })
}

/// Streams `audio` through a fresh state in `chunk`-sample pushes and
/// returns the mono result.
pub fn enhance_streaming(
    model: &EnhancementModel,
    params: &ParameterSet<f32>,
    audio: &AudioBuffer,
    chunk: usize,
) -> Result<AudioBuffer> {
    let mut state = init_stream(model, params, audio.num_channels())?;
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(audio.len());
    let mut pos = 0;
    while pos < audio.len() {
        let n = chunk.min(audio.len() - pos);
        let slices: Vec<&[f64]> = audio.channels().iter().map(|c| &c[pos..pos + n]).collect();
        out.extend(state.push_samples(&slices)?);
        pos += n;
    }
    out.extend(state.flush()?);
    AudioBuffer::mono(audio.sample_rate(), out)
}

impl<'a> StreamState<'a> {
    /// Keeps a copy of every emitted mask frame, for inspection.
    pub fn record_masks(&mut self) {
        self.masks.get_or_insert_with(Vec::new);
    }

    /// Emitted mask frames `[frame][bin]` if recording was enabled.
    pub fn recorded_masks(&self) -> Option<&[f32]> {
        self.masks.as_deref()
    }

    pub fn frames_emitted(&self) -> usize {
        self.frames_emitted
    }

    pub fn look_ahead_frames(&self) -> i32 {
        self.look_ahead
    }

    pub fn samples_in(&self) -> usize {
        self.samples_in
    }

    pub fn samples_out(&self) -> usize {
        self.samples_out
    }

    /// Past frames kept by each conv layer.
    pub fn history_lengths(&self) -> Vec<usize> {
        self.net.history_lengths()
    }

    pub fn recurrent_widths(&self) -> Vec<usize> {
        self.net.recurrent_widths()
    }

    /// Length of the overlap-add tail.
    pub fn accumulator_len(&self) -> usize {
        self.tail_acc.len()
    }

    /// Buffers one chunk (one slice per channel, equal lengths) and returns
    /// the enhanced mono samples that became final.
    pub fn push_samples(&mut self, chunk: &[&[f64]]) -> Result<Vec<f64>> {
        if self.flushed {
            return Err(Error::Stream("push after flush".into()));
        }
        if chunk.len() != self.audio_channels {
            return Err(Error::InvalidInput(format!(
                "stream has {} channels, chunk has {}",
                self.audio_channels,
                chunk.len()
            )));
        }
        let len = chunk.first().map_or(0, |c| c.len());
        if chunk.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("chunk channels differ in length".into()));
        }
        let fl = self.stft.frame_len();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < len {
            let take = (fl - self.pending[0].len()).min(len - pos);
            for (p, c) in self.pending.iter_mut().zip(chunk) {
                p.extend_from_slice(&c[pos..pos + take]);
            }
            pos += take;
            if self.pending[0].len() == fl {
                self.analyse(&mut out)?;
            }
        }
        self.samples_in += len;
        Ok(out)
    }

    /// Pads the input with zeros, drains the look-ahead and the synthesis
    /// tail, and returns the remaining samples. Total output length equals
    /// total input length.
    pub fn flush(&mut self) -> Result<Vec<f64>> {
        if self.flushed {
            return Err(Error::Stream("stream already flushed".into()));
        }
        self.flushed = true;
        let mut out = Vec::new();
        if self.samples_in == 0 {
            return Ok(out);
        }
        let before = self.samples_out;
        let frames = self.stft.frame_count(self.samples_in);
        let fl = self.stft.frame_len();
        while self.frames_analysed < frames {
            for p in &mut self.pending {
                p.resize(fl, 0.0);
            }
            self.analyse(&mut out)?;
        }
        for _ in 0..self.look_ahead.max(0) {
            let zeros = vec![0.0; self.model.network().input_size()];
            self.feed(zeros, &mut out)?;
        }
        // every frame is in, so the whole tail is final
        out.extend(self.tail_acc.iter().zip(&self.tail_norm).map(|(&a, &n)| OverlapAdd::normalized(a, n)));
        out.truncate(self.samples_in - before);
        self.tail_acc.clear();
        self.tail_norm.clear();
        self.samples_out = self.samples_in;
        Ok(out)
    }

    /// Analyses the full frame in `pending` and advances the network.
    fn analyse(&mut self, out: &mut Vec<f64>) -> Result<()> {
        let (mc, hop) = (self.model_channels, self.stft.hop());
        let bins = self.stft.num_bins();
        let mut cur = vec![Complex64::new(0.0, 0.0); bins * mc];
        for c in 0..mc {
            self.transform.analyze(&self.pending[c], &mut self.scratch_bins);
            for (f, &v) in self.scratch_bins.iter().enumerate() {
                cur[f * mc + c] = v;
            }
            self.pending[c].drain(..hop);
        }
        let config = self.model.config();
        let mut feat = vec![0.0f32; self.model.network().input_size()];
        frame_features(
            &cur,
            self.prev_bins.as_deref(),
            mc,
            config.compression_power,
            config.delta_phase,
            &mut feat,
        );
        self.prev_bins = Some(cur.clone());
        self.spectra.push_back(cur);
        self.frames_analysed += 1;
        self.feed(feat, out)
    }

    /// Consumes feature frame `frames_fed` and steps the network once the
    /// look-ahead shift allows it.
    fn feed(&mut self, feat: Vec<f32>, out: &mut Vec<f64>) -> Result<()> {
        let k = self.look_ahead;
        let input = if k >= 0 {
            if self.frames_fed < k as usize {
                self.frames_fed += 1;
                return Ok(());
            }
            feat
        } else {
            let zeros = vec![0.0; feat.len()];
            self.delayed.push_back(feat);
            if self.delayed.len() > k.unsigned_abs() as usize {
                self.delayed.pop_front().unwrap_or(zeros)
            } else {
                zeros
            }
        };
        self.frames_fed += 1;
        let mut mask = vec![0.0f32; self.stft.num_bins()];
        self.model.network().step(self.params, &mut self.net, &input, &mut mask)?;
        self.emit(&mask, out)
    }

    /// Masks and synthesizes the oldest pending spectrum, then releases one
    /// hop of final samples.
    fn emit(&mut self, mask: &[f32], out: &mut Vec<f64>) -> Result<()> {
        let spectrum = self
            .spectra
            .pop_front()
            .ok_or_else(|| Error::Stream("mask produced before its frame was analysed".into()))?;
        let mc = self.model_channels;
        for (f, b) in self.scratch_bins.iter_mut().enumerate() {
            *b = spectrum[f * mc..(f + 1) * mc].iter().sum::<Complex64>() * mask[f] as f64;
        }
        self.transform.synthesize(&self.scratch_bins, &mut self.scratch_frame);
        let (fl, hop) = (self.stft.frame_len(), self.stft.hop());
        self.tail_acc.resize(fl, 0.0);
        self.tail_norm.resize(fl, 0.0);
        let window = self.stft.window();
        for i in 0..fl {
            self.tail_acc[i] += self.scratch_frame[i];
            self.tail_norm[i] += window[i] * window[i];
        }
        out.extend((0..hop).map(|i| OverlapAdd::normalized(self.tail_acc[i], self.tail_norm[i])));
        self.tail_acc.drain(..hop);
        self.tail_norm.drain(..hop);
        self.samples_out += hop;
        self.frames_emitted += 1;
        if let Some(m) = &mut self.masks {
            m.extend_from_slice(mask);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
