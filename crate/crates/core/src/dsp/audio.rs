use crate::error::{Error, Result};

/// Sample rate every model in this crate is designed around.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Multi-channel time-domain audio.
///
/// Samples are stored per channel as `f64`; all channels have equal length.
/// One or two channels are supported.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "expected 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("channels differ in length".into()));
        }
        Ok(Self {
            sample_rate,
            channels,
        })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// A new buffer holding only channel `c`.
    pub fn select_channel(&self, c: usize) -> AudioBuffer {
        AudioBuffer {
            sample_rate: self.sample_rate,
            channels: vec![self.channels[c].clone()],
        }
    }

    /// A new buffer holding the first `n` channels.
    pub fn first_channels(&self, n: usize) -> Result<AudioBuffer> {
        if n == 0 || n > self.num_channels() {
            return Err(Error::InvalidInput(format!(
                "requested {n} channels from a {}-channel buffer",
                self.num_channels()
            )));
        }
        Ok(AudioBuffer {
            sample_rate: self.sample_rate,
            channels: self.channels[..n].to_vec(),
        })
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> AudioBuffer {
        AudioBuffer {
            sample_rate: self.sample_rate,
            channels: self
                .channels
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
        }
    }

    /// Sum over channels, as a mono buffer.
    pub fn channel_sum(&self) -> AudioBuffer {
        let mut out = vec![0.0; self.len()];
        for ch in &self.channels {
            for (o, &x) in out.iter_mut().zip(ch) {
                *o += x;
            }
        }
        AudioBuffer {
            sample_rate: self.sample_rate,
            channels: vec![out],
        }
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Sum of squares of channel `c`.
    pub fn energy(&self, c: usize) -> f64 {
        self.channels[c].iter().map(|x| x * x).sum()
    }

    pub fn scaled(&self, gain: f64) -> AudioBuffer {
        AudioBuffer {
            sample_rate: self.sample_rate,
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|x| x * gain).collect())
                .collect(),
        }
    }
}
