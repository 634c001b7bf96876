use std::f64::consts::PI;

use num_complex::Complex64;

use super::stft::ComplexSpectrogram;
use crate::error::{Error, Result};

/// Power used for all spectral compression unless configured otherwise.
pub const DEFAULT_COMPRESSION_POWER: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Magnitude,
    DeltaPhase,
    Concatenated,
}

/// Real network input features indexed `[frame][bin][feature channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    values: Vec<f32>,
    frames: usize,
    bins: usize,
    channels: usize,
    kind: FeatureKind,
}

impl FeatureTensor {
    pub fn new(
        values: Vec<f32>,
        frames: usize,
        bins: usize,
        channels: usize,
        kind: FeatureKind,
    ) -> Result<Self> {
        if values.len() != frames * bins * channels {
            return Err(Error::InvalidInput(format!(
                "{} feature values do not fill {frames}x{bins}x{channels}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            frames,
            bins,
            channels,
            kind,
        })
    }

    pub fn zeros(frames: usize, bins: usize, channels: usize, kind: FeatureKind) -> Self {
        Self {
            values: vec![0.0; frames * bins * channels],
            frames,
            bins,
            channels,
            kind,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize, c: usize) -> f32 {
        self.values[(t * self.bins + f) * self.channels + c]
    }

    /// All features of frame `t`, laid out `[bin][channel]`.
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.bins * self.channels;
        &self.values[t * n..(t + 1) * n]
    }

    /// Stacks feature channels: all of `self`'s channels, then `other`'s.
    pub fn concat(&self, other: &FeatureTensor) -> Result<FeatureTensor> {
        if self.frames != other.frames || self.bins != other.bins {
            return Err(Error::InvalidInput(
                "cannot concatenate features of different frame/bin extents".into(),
            ));
        }
        let channels = self.channels + other.channels;
        let mut values = Vec::with_capacity(self.frames * self.bins * channels);
        for t in 0..self.frames {
            for f in 0..self.bins {
                let a = (t * self.bins + f) * self.channels;
                let b = (t * other.bins + f) * other.channels;
                values.extend_from_slice(&self.values[a..a + self.channels]);
                values.extend_from_slice(&other.values[b..b + other.channels]);
            }
        }
        FeatureTensor::new(values, self.frames, self.bins, channels, FeatureKind::Concatenated)
    }
}

fn check_power(power: f64) -> Result<()> {
    if !(power > 0.0 && power <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "compression power must lie in (0, 1], got {power}"
        )));
    }
    Ok(())
}

/// `|z|^p e^{i arg z}`, with zero mapped to zero.
#[inline]
pub fn compress_value(z: Complex64, power: f64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z * r.powf(power - 1.0)
    }
}

/// Power-law compression of every magnitude, keeping the phase.
pub fn power_compress(spec: &ComplexSpectrogram, power: f64) -> Result<ComplexSpectrogram> {
    check_power(power)?;
    let mut out = spec.clone();
    for v in out.values_mut() {
        *v = compress_value(*v, power);
    }
    Ok(out)
}

/// `|S(t,f,c)|^power` for every channel.
pub fn magnitude_features(spec: &ComplexSpectrogram, power: f64) -> Result<FeatureTensor> {
    check_power(power)?;
    let values = spec
        .values()
        .iter()
        .map(|z| z.norm().powf(power) as f32)
        .collect();
    FeatureTensor::new(
        values,
        spec.frames(),
        spec.bins(),
        spec.channels(),
        FeatureKind::Magnitude,
    )
}

/// Principal angle of `cur * conj(prev)` in (-pi, pi]; 0 when either is zero.
#[inline]
pub fn phase_advance(cur: Complex64, prev: Complex64) -> f64 {
    let p = cur * prev.conj();
    if p.re == 0.0 && p.im == 0.0 {
        return 0.0;
    }
    let a = p.im.atan2(p.re);
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Frame-to-frame phase difference per bin and channel; the first frame is 0.
pub fn delta_phase(spec: &ComplexSpectrogram) -> Result<FeatureTensor> {
    let (frames, bins, channels) = (spec.frames(), spec.bins(), spec.channels());
    let mut out = FeatureTensor::zeros(frames, bins, channels, FeatureKind::DeltaPhase);
    let stride = bins * channels;
    let src = spec.values();
    let dst = out.values_mut();
    for t in 1..frames {
        for i in 0..stride {
            dst[t * stride + i] = phase_advance(src[t * stride + i], src[(t - 1) * stride + i]) as f32;
        }
    }
    Ok(out)
}

/// Network input for a noisy spectrogram: compressed magnitudes, followed by
/// delta-phase channels when requested.
pub fn input_features(
    spec: &ComplexSpectrogram,
    power: f64,
    with_delta_phase: bool,
) -> Result<FeatureTensor> {
    let mag = magnitude_features(spec, power)?;
    if with_delta_phase {
        mag.concat(&delta_phase(spec)?)
    } else {
        Ok(mag)
    }
}

/// Features for a single frame, written `[bin][channel]` into `out`.
///
/// `cur` and `prev` hold `[bin][channel]` STFT values; `prev` is `None` for
/// the first frame of a signal.
pub(crate) fn frame_features(
    cur: &[Complex64],
    prev: Option<&[Complex64]>,
    channels: usize,
    power: f64,
    with_delta_phase: bool,
    out: &mut [f32],
) {
    let bins = cur.len() / channels;
    let fc = if with_delta_phase { 2 * channels } else { channels };
    for f in 0..bins {
        for c in 0..channels {
            let z = cur[f * channels + c];
            out[f * fc + c] = z.norm().powf(power) as f32;
            if with_delta_phase {
                out[f * fc + channels + c] = match prev {
                    Some(p) => phase_advance(z, p[f * channels + c]) as f32,
                    None => 0.0,
                };
            }
        }
    }
}
