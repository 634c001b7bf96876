//! Speech-like targets and two-microphone noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dsp::{AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

/// Parameters are updated once per block and interpolated in between.
const BLOCK: usize = 80;
/// Harmonics stop below this frequency.
const MAX_HARMONIC_HZ: f64 = 7_000.0;
const TARGET_PEAK: f64 = 0.5;
const NOISE_RMS: f64 = 0.1;

fn sample_count(duration_s: f64) -> Result<usize> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("duration must be positive, got {duration_s}")));
    }
    Ok(((duration_s * DEFAULT_SAMPLE_RATE as f64).round() as usize).max(1))
}

/// Per-block control values of the voice.
struct VoiceTrack {
    f0: Vec<f64>,
    gain: Vec<f64>,
    formants: Vec<[f64; 3]>,
}

fn voice_track(rng: &mut ChaCha8Rng, blocks: usize) -> VoiceTrack {
    let sr = DEFAULT_SAMPLE_RATE as f64;
    let block_s = BLOCK as f64 / sr;
    let centre = rng.random_range(100f64..220.0).ln();
    let step = Normal::new(0.0, 0.03).unwrap();
    let mut lf = centre;
    let mut track = VoiceTrack {
        f0: Vec::with_capacity(blocks),
        gain: Vec::with_capacity(blocks),
        formants: Vec::with_capacity(blocks),
    };
    let new_vowel = |rng: &mut ChaCha8Rng| {
        [
            rng.random_range(300.0..850.0),
            rng.random_range(850.0..2_400.0),
            rng.random_range(2_400.0..3_300.0),
        ]
    };
    let mut vowel = new_vowel(rng);
    let mut formants = vowel;
    // syllable or pause currently running: (blocks left, total blocks, voiced);
    // every utterance opens with a short silence
    let lead = (rng.random_range(0.05..0.25) / block_s) as usize;
    let mut seg = (lead.max(1), lead.max(1), false);
    for _ in 0..blocks {
        if seg.0 == 0 {
            seg = if seg.2 && rng.random_bool(0.4) {
                let n = (rng.random_range(0.1..0.4) / block_s) as usize;
                (n.max(1), n.max(1), false)
            } else {
                vowel = new_vowel(rng);
                let n = (1.0 / rng.random_range(2.0..8.0) / block_s) as usize;
                (n.max(1), n.max(1), true)
            };
        }
        let pos = 1.0 - seg.0 as f64 / seg.1 as f64;
        seg.0 -= 1;
        lf += step.sample(rng) + 0.05 * (centre - lf);
        lf = lf.clamp(80f64.ln(), 300f64.ln());
        for (f, v) in formants.iter_mut().zip(vowel) {
            *f += 0.15 * (v - *f);
        }
        track.f0.push(lf.exp());
        track.gain.push(if seg.2 { (PI * pos).sin().max(0.0).powf(1.5) } else { 0.0 });
        track.formants.push(formants);
    }
    track
}

/// Spectral envelope: three resonances and a gentle tilt.
fn envelope(f: f64, formants: &[f64; 3]) -> f64 {
    const BW: [f64; 3] = [90.0, 130.0, 200.0];
    const GAIN: [f64; 3] = [1.0, 0.6, 0.3];
    let peaks: f64 = (0..3).map(|i| GAIN[i] / (1.0 + ((f - formants[i]) / BW[i]).powi(2))).sum();
    (peaks + 0.01) / (1.0 + f / 2_000.0)
}

/// Harmonic voice with a wandering pitch in 80..300 Hz, moving formants,
/// syllable-rate amplitude bursts and pauses. Both channels are identical
/// and the peak is 0.5.
pub fn synth_target(duration_s: f64, seed: u64) -> Result<AudioBuffer> {
    let n = sample_count(duration_s)?;
    let sr = DEFAULT_SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let blocks = n / BLOCK + 2;
    let track = voice_track(&mut rng, blocks);
    let max_h = (MAX_HARMONIC_HZ / 80.0) as usize;
    let mut phases: Vec<f64> = (0..max_h).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let amps = |b: usize| -> Vec<f64> {
        (1..=max_h)
            .map(|k| {
                let f = k as f64 * track.f0[b];
                if f < MAX_HARMONIC_HZ {
                    envelope(f, &track.formants[b]) * track.gain[b]
                } else {
                    0.0
                }
            })
            .collect()
    };
    let mut out = vec![0.0; n];
    let mut a0 = amps(0);
    for b in 0..n.div_ceil(BLOCK) {
        let a1 = amps(b + 1);
        for i in 0..BLOCK {
            let idx = b * BLOCK + i;
            if idx >= n {
                break;
            }
            let u = i as f64 / BLOCK as f64;
            let f0 = track.f0[b] + u * (track.f0[b + 1] - track.f0[b]);
            let mut s = 0.0;
            for k in 0..max_h {
                let a = a0[k] + u * (a1[k] - a0[k]);
                phases[k] += 2.0 * PI * (k + 1) as f64 * f0 / sr;
                if a > 0.0 {
                    s += a * phases[k].sin();
                }
            }
            out[idx] = s;
        }
        for p in &mut phases {
            *p %= 2.0 * PI;
        }
        a0 = a1;
    }
    let peak = out.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak == 0.0 {
        // clips shorter than one syllable onset come out silent; an impulse
        // keeps the target nonzero
        out[0] = TARGET_PEAK;
    } else {
        out.iter_mut().for_each(|x| *x *= TARGET_PEAK / peak);
    }
    AudioBuffer::new(DEFAULT_SAMPLE_RATE, vec![out.clone(), out])
}

/// Ranges the noise generator draws from. Dev and eval differ from train
/// only in the spatial ranges: channel correlation and tone lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    /// Correlation of the two channels' broadband noise.
    pub correlation: (f64, f64),
    /// White noise mixed into the pink noise, relative amplitude.
    pub whiteness: (f64, f64),
    pub tones: (usize, usize),
    pub tone_hz: (f64, f64),
    /// Tone amplitude relative to the broadband RMS.
    pub tone_level: (f64, f64),
    /// Phase lag of tones at channel 1, in radians.
    pub tone_lag: (f64, f64),
}

impl NoiseProfile {
    pub const TRAIN: NoiseProfile = NoiseProfile {
        correlation: (0.45, 0.75),
        whiteness: (0.0, 0.3),
        tones: (1, 3),
        tone_hz: (300.0, 2_500.0),
        tone_level: (0.2, 0.6),
        tone_lag: (0.1, 0.8),
    };

    pub const HELD_OUT: NoiseProfile = NoiseProfile {
        correlation: (0.3, 0.6),
        whiteness: (0.0, 0.3),
        tones: (1, 3),
        tone_hz: (300.0, 2_500.0),
        tone_level: (0.2, 0.6),
        tone_lag: (0.3, 1.0),
    };
}

/// Pink noise by the Kellet filter on white Gaussian input.
fn pink(rng: &mut ChaCha8Rng, n: usize, whiteness: f64) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let p = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            0.2 * p + whiteness * w
        })
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// On/off gate with 10 ms raised-cosine ramps, segments of 0.2..1 s.
fn gate(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let sr = DEFAULT_SAMPLE_RATE as f64;
    let mut hard = Vec::with_capacity(n);
    let mut on = rng.random_bool(0.5);
    while hard.len() < n {
        let len = (rng.random_range(0.2..1.0) * sr) as usize;
        hard.extend(std::iter::repeat_n(if on { 1.0 } else { 0.0 }, len));
        on = !on;
    }
    hard.truncate(n);
    let ramp = (0.01 * sr) as usize;
    let mut out = hard.clone();
    let mut level = hard[0];
    let step = 1.0 / ramp as f64;
    for (o, &h) in out.iter_mut().zip(&hard) {
        level = if h > level { (level + step).min(h) } else { (level - step).max(h) };
        *o = 0.5 - 0.5 * (PI * level).cos();
    }
    out
}

/// Two-channel noise: pink noise with a shared and an independent part per
/// channel under a shared slow envelope, plus gated tones arriving with a
/// small inter-channel phase lag. RMS is 0.1 over both channels.
pub fn synth_noise(duration_s: f64, seed: u64, profile: &NoiseProfile) -> Result<AudioBuffer> {
    let n = sample_count(duration_s)?;
    let sr = DEFAULT_SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let rho = rng.random_range(profile.correlation.0..=profile.correlation.1);
    let white = rng.random_range(profile.whiteness.0..=profile.whiteness.1);
    let shared = pink(&mut rng, n, white);
    let own = [pink(&mut rng, n, white), pink(&mut rng, n, white)];
    let env_hz = rng.random_range(0.2..1.0);
    let env_phase = rng.random_range(0.0..2.0 * PI);
    let mut chans: Vec<Vec<f64>> = own
        .iter()
        .map(|o| {
            (0..n)
                .map(|i| {
                    let env = 1.0 + 0.3 * (2.0 * PI * env_hz * i as f64 / sr + env_phase).sin();
                    env * (rho.sqrt() * shared[i] + (1.0 - rho).sqrt() * o[i])
                })
                .collect()
        })
        .collect();
    let base = rms(&chans[0]);
    for _ in 0..rng.random_range(profile.tones.0..=profile.tones.1) {
        let f = rng.random_range(profile.tone_hz.0..profile.tone_hz.1);
        let amp = rng.random_range(profile.tone_level.0..profile.tone_level.1) * base * 2f64.sqrt();
        let lag = rng.random_range(profile.tone_lag.0..=profile.tone_lag.1);
        let phase = rng.random_range(0.0..2.0 * PI);
        let g = gate(&mut rng, n);
        for (c, ch) in chans.iter_mut().enumerate() {
            let phase = phase - c as f64 * lag;
            for (i, x) in ch.iter_mut().enumerate() {
                *x += amp * g[i] * (2.0 * PI * f * (i as f64) / sr + phase).sin();
            }
        }
    }
    let all = rms(&[chans[0].as_slice(), chans[1].as_slice()].concat());
    for ch in &mut chans {
        ch.iter_mut().for_each(|x| *x *= NOISE_RMS / all);
    }
    AudioBuffer::new(DEFAULT_SAMPLE_RATE, chans)
}

/// A mixture and its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    /// Target plus scaled noise, two channels.
    pub noisy: AudioBuffer,
    /// Target channel 0, the scoring and training reference.
    pub clean: AudioBuffer,
    /// Target component of `noisy`.
    pub target: AudioBuffer,
    /// Noise component of `noisy` after scaling.
    pub noise: AudioBuffer,
}

/// Scales `noise` so the channel-0 SNR is exactly `snr_db` and adds it.
pub fn mix_at_snr(target: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<Mixture> {
    if target.len() != noise.len() || target.num_channels() != noise.num_channels() {
        return Err(Error::InvalidInput("target and noise shapes differ".into()));
    }
    let (et, en) = (target.energy(0), noise.energy(0));
    if et == 0.0 || en == 0.0 {
        return Err(Error::InvalidInput("target or noise is silent".into()));
    }
    let gain = (et / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise = noise.scaled(gain);
    let noisy: Vec<Vec<f64>> = target
        .channels()
        .iter()
        .zip(noise.channels())
        .map(|(t, n)| t.iter().zip(n).map(|(a, b)| a + b).collect())
        .collect();
    Ok(Mixture {
        noisy: AudioBuffer::new(target.sample_rate(), noisy)?,
        clean: target.select_channel(0),
        target: target.clone(),
        noise,
    })
}

/// Consecutive `chunk_s`-second pieces of every clip; a trailing partial
/// piece is dropped.
pub fn chunk_fixed(clips: &[AudioBuffer], chunk_s: f64) -> Result<Vec<AudioBuffer>> {
    if !(chunk_s > 0.0 && chunk_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("chunk length must be positive, got {chunk_s}")));
    }
    let mut out = Vec::new();
    for clip in clips {
        let len = (chunk_s * clip.sample_rate() as f64).round() as usize;
        if len == 0 {
            return Err(Error::InvalidParameter("chunk shorter than one sample".into()));
        }
        for k in 0..clip.len() / len {
            out.push(clip.slice(k * len, len));
        }
    }
    Ok(out)
}
