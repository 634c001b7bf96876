//! RIFF WAV reading and writing: 16-bit PCM and 32-bit float, one or two
//! channels.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::audio::{AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::InvalidInput(format!(
            "{}: {channels} channels, only 1 or 2 are supported",
            path.display()
        )));
    }
    if spec.sample_rate != DEFAULT_SAMPLE_RATE {
        log::warn!(
            "{}: sample rate {} Hz, models expect {} Hz; no resampling is done",
            path.display(),
            spec.sample_rate,
            DEFAULT_SAMPLE_RATE
        );
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits",
                path.display()
            )))
        }
    };
    let mut out = vec![Vec::with_capacity(interleaved.len() / channels); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, &s) in frame.iter().enumerate() {
            out[c].push(s);
        }
    }
    AudioBuffer::new(spec.sample_rate, out)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: audio.num_channels() as u16,
        sample_rate: audio.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for n in 0..audio.len() {
        for c in 0..audio.num_channels() {
            let x = audio.channel(c)[n];
            match format {
                WavFormat::Pcm16 => {
                    let v = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v).map_err(wav_err)?;
                }
                WavFormat::Float32 => writer.write_sample(x as f32).map_err(wav_err)?,
            }
        }
    }
    writer.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let left: Vec<f64> = (0..100).map(|i| ((i as f32) * 0.01 - 0.5) as f64).collect();
        let right: Vec<f64> = left.iter().map(|x| -x).collect();
        let audio = AudioBuffer::new(16_000, vec![left, right]).unwrap();
        write_wav(&path, &audio, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), audio);
    }

    #[test]
    fn pcm16_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin() * 0.9).collect();
        let audio = AudioBuffer::mono(16_000, x.clone()).unwrap();
        write_wav(&path, &audio, WavFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in back.channel(0).iter().zip(&x) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_wav("/nonexistent/x.wav").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.wav"));
    }
}
