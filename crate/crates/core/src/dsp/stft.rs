//! STFT analysis and weighted overlap-add synthesis.
//!
//! Frames start at multiples of the hop, are multiplied by a periodic Hann
//! window and zero-padded to the FFT size. The input is zero-padded at the end
//! so that every sample is covered by at least one frame. Synthesis windows
//! every inverse frame again and divides by the accumulated squared window,
//! which gives exact reconstruction for any hop that keeps that sum nonzero.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Overlap-add denominators below this are left unnormalized.
pub const WOLA_FLOOR: f64 = 1e-10;

/// Periodic Hann window: `w[n] = 0.5 - 0.5 cos(2 pi n / len)`.
pub fn hann_window(frame_len: usize) -> Result<Vec<f64>> {
    if frame_len < 2 {
        return Err(Error::InvalidParameter(format!(
            "Hann window needs at least 2 samples, got {frame_len}"
        )));
    }
    Ok((0..frame_len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame_len as f64).cos())
        .collect())
}

/// Analysis/synthesis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StftParams {
    frame_len: usize,
    hop: usize,
    fft_size: usize,
    window: Vec<f64>,
}

impl Default for StftParams {
    /// 25 ms Hann window, 10 ms hop, 512-point FFT at 16 kHz: 257 bins.
    fn default() -> Self {
        Self::new(400, 160, 512).expect("default STFT parameters are valid")
    }
}

impl StftParams {
    /// Parameters with a periodic Hann window of `frame_len` samples.
    pub fn new(frame_len: usize, hop: usize, fft_size: usize) -> Result<Self> {
        let window = hann_window(frame_len)?;
        Self::with_window(hop, fft_size, window)
    }

    pub fn with_window(hop: usize, fft_size: usize, window: Vec<f64>) -> Result<Self> {
        let frame_len = window.len();
        if hop == 0 || hop > frame_len || frame_len > fft_size {
            return Err(Error::InvalidParameter(format!(
                "need 0 < hop <= frame_len <= fft_size, got hop={hop} frame_len={frame_len} fft_size={fft_size}"
            )));
        }
        if window.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "window coefficients must be non-negative".into(),
            ));
        }
        Ok(Self {
            frame_len,
            hop,
            fft_size,
            window,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Non-negative frequency bins: `fft_size / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames needed to cover `len` samples with end padding.
    pub fn frame_count(&self, len: usize) -> usize {
        len.saturating_sub(self.frame_len).div_ceil(self.hop) + 1
    }

    /// Frames per second of audio at `sample_rate`.
    pub fn frames_per_second(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.hop as f64
    }
}

/// Complex STFT values indexed `[frame][bin][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    values: Vec<Complex64>,
    frames: usize,
    channels: usize,
    params: StftParams,
    original_length: usize,
    sample_rate: u32,
}

impl ComplexSpectrogram {
    /// Builds a spectrogram from raw values laid out `[frame][bin][channel]`.
    pub fn from_values(
        values: Vec<Complex64>,
        frames: usize,
        channels: usize,
        params: StftParams,
        original_length: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let bins = params.num_bins();
        if values.len() != frames * bins * channels {
            return Err(Error::InvalidInput(format!(
                "{} values do not fill {frames} frames x {bins} bins x {channels} channels",
                values.len()
            )));
        }
        if channels == 0 || channels > 2 {
            return Err(Error::InvalidInput(format!(
                "expected 1 or 2 channels, got {channels}"
            )));
        }
        Ok(Self {
            values,
            frames,
            channels,
            params,
            original_length,
            sample_rate,
        })
    }

    pub fn zeros(
        frames: usize,
        channels: usize,
        params: StftParams,
        original_length: usize,
        sample_rate: u32,
    ) -> Self {
        let n = frames * params.num_bins() * channels;
        Self {
            values: vec![Complex64::new(0.0, 0.0); n],
            frames,
            channels,
            params,
            original_length,
            sample_rate,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.params.num_bins()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn index(&self, t: usize, f: usize, c: usize) -> usize {
        (t * self.bins() + f) * self.channels + c
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize, c: usize) -> Complex64 {
        self.values[self.index(t, f, c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, f: usize, c: usize, v: Complex64) {
        let i = self.index(t, f, c);
        self.values[i] = v;
    }

    /// Only channel `c`, as a one-channel spectrogram.
    pub fn select_channel(&self, c: usize) -> ComplexSpectrogram {
        let values = self
            .values
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        ComplexSpectrogram {
            values,
            frames: self.frames,
            channels: 1,
            params: self.params.clone(),
            original_length: self.original_length,
            sample_rate: self.sample_rate,
        }
    }

    /// Frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> ComplexSpectrogram {
        let stride = self.bins() * self.channels;
        ComplexSpectrogram {
            values: self.values[start * stride..(start + len) * stride].to_vec(),
            frames: len,
            channels: self.channels,
            params: self.params.clone(),
            original_length: self.original_length,
            sample_rate: self.sample_rate,
        }
    }

    pub fn same_layout(&self, other: &ComplexSpectrogram) -> bool {
        self.frames == other.frames
            && self.channels == other.channels
            && self.bins() == other.bins()
    }
}

/// Forward and inverse transform of single frames, shared by the offline
/// and streaming paths so both produce bit-identical results.
pub(crate) struct FrameTransform {
    params: StftParams,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl FrameTransform {
    pub(crate) fn new(params: &StftParams) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(params.fft_size);
        let inverse = planner.plan_fft_inverse(params.fft_size);
        Self {
            params: params.clone(),
            forward,
            inverse,
            buf: vec![Complex64::new(0.0, 0.0); params.fft_size],
        }
    }

    /// Windows `frame` (exactly `frame_len` samples), transforms, and writes
    /// the non-negative-frequency bins into `out`.
    pub(crate) fn analyze(&mut self, frame: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(frame.len(), self.params.frame_len);
        for (b, (&x, &w)) in self.buf.iter_mut().zip(frame.iter().zip(&self.params.window)) {
            *b = Complex64::new(x * w, 0.0);
        }
        for b in &mut self.buf[self.params.frame_len..] {
            *b = Complex64::new(0.0, 0.0);
        }
        self.forward.process(&mut self.buf);
        out.copy_from_slice(&self.buf[..self.params.num_bins()]);
    }

    /// Inverse-transforms one frame of bins and writes the windowed first
    /// `frame_len` output samples into `out`.
    pub(crate) fn synthesize(&mut self, bins: &[Complex64], out: &mut [f64]) {
        let n = self.params.fft_size;
        let nb = self.params.num_bins();
        self.buf[..nb].copy_from_slice(bins);
        for k in nb..n {
            self.buf[k] = bins[n - k].conj();
        }
        self.inverse.process(&mut self.buf);
        let scale = 1.0 / n as f64;
        for ((o, b), &w) in out.iter_mut().zip(&self.buf).zip(&self.params.window) {
            *o = b.re * scale * w;
        }
    }
}

/// Running weighted overlap-add accumulator for one channel.
#[derive(Debug, Clone, Default)]
pub(crate) struct OverlapAdd {
    pub(crate) acc: Vec<f64>,
    pub(crate) norm: Vec<f64>,
}

impl OverlapAdd {
    pub(crate) fn with_len(len: usize) -> Self {
        Self {
            acc: vec![0.0; len],
            norm: vec![0.0; len],
        }
    }

    /// Adds a windowed frame at `offset`; grows the buffers as needed.
    pub(crate) fn add(&mut self, offset: usize, frame: &[f64], window: &[f64]) {
        let end = offset + frame.len();
        if self.acc.len() < end {
            self.acc.resize(end, 0.0);
            self.norm.resize(end, 0.0);
        }
        for i in 0..frame.len() {
            self.acc[offset + i] += frame[i];
            self.norm[offset + i] += window[i] * window[i];
        }
    }

    #[inline]
    pub(crate) fn normalized(acc: f64, norm: f64) -> f64 {
        if norm < WOLA_FLOOR {
            acc
        } else {
            acc / norm
        }
    }
}

/// Short-time Fourier transform of every channel of `audio`.
pub fn stft(audio: &AudioBuffer, params: &StftParams) -> Result<ComplexSpectrogram> {
    if audio.is_empty() {
        return Err(Error::InvalidInput("cannot transform empty audio".into()));
    }
    let len = audio.len();
    let frames = params.frame_count(len);
    let bins = params.num_bins();
    let channels = audio.num_channels();
    let padded_len = (frames - 1) * params.hop + params.frame_len;

    let mut spec = ComplexSpectrogram::zeros(frames, channels, params.clone(), len, audio.sample_rate());
    let mut transform = FrameTransform::new(params);
    let mut frame_bins = vec![Complex64::new(0.0, 0.0); bins];
    for c in 0..channels {
        let mut padded = audio.channel(c).to_vec();
        padded.resize(padded_len, 0.0);
        for t in 0..frames {
            let start = t * params.hop;
            transform.analyze(&padded[start..start + params.frame_len], &mut frame_bins);
            for (f, &v) in frame_bins.iter().enumerate() {
                spec.set(t, f, c, v);
            }
        }
    }
    Ok(spec)
}

/// Inverse STFT by weighted overlap-add, trimmed to the original length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioBuffer> {
    let params = spec.params();
    let bins = spec.bins();
    let mut transform = FrameTransform::new(params);
    let mut frame_bins = vec![Complex64::new(0.0, 0.0); bins];
    let mut frame = vec![0.0; params.frame_len];
    let mut channels = Vec::with_capacity(spec.channels());
    for c in 0..spec.channels() {
        let mut ola = OverlapAdd::with_len(0);
        for t in 0..spec.frames() {
            for (f, b) in frame_bins.iter_mut().enumerate() {
                *b = spec.get(t, f, c);
            }
            transform.synthesize(&frame_bins, &mut frame);
            ola.add(t * params.hop, &frame, &params.window);
        }
        let mut out: Vec<f64> = ola
            .acc
            .iter()
            .zip(&ola.norm)
            .map(|(&a, &n)| OverlapAdd::normalized(a, n))
            .collect();
        out.resize(spec.original_length(), 0.0);
        channels.push(out);
    }
    AudioBuffer::new(spec.sample_rate(), channels)
}
