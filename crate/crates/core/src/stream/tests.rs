use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dsp::AudioBuffer;
use crate::model::{build_model, ConvConfig};
use crate::nn::SMALL_CONV_ROWS;

fn desk_causal(k: i32) -> ModelConfig {
    ModelConfig {
        conv_config: ConvConfig::Custom(vec![(3, 1, 5, 1, 1), (3, 3, 1, 2, 1), (2, 3, 1, 4, 1)]),
        blstm_depth: 1,
        blstm_width: 8,
        fc_depth: 1,
        fc_width: 8,
        causal: true,
        look_ahead_frames: k,
        ..ModelConfig::default()
    }
}

fn noise(seed: u64, len: usize, channels: usize) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chans = (0..channels)
        .map(|_| (0..len).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    AudioBuffer::new(16_000, chans).unwrap()
}

fn run_stream(state: &mut StreamState, audio: &AudioBuffer, chunks: &[usize]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut pos = 0;
    let mut i = 0;
    while pos < audio.len() {
        let n = chunks[i % chunks.len()].min(audio.len() - pos);
        let slices: Vec<&[f64]> = audio.channels().iter().map(|c| &c[pos..pos + n]).collect();
        out.extend(state.push_samples(&slices).unwrap());
        assert!(state.accumulator_len() < 400);
        pos += n;
        i += 1;
    }
    out.extend(state.flush().unwrap());
    out
}

#[test]
fn latency_examples() {
    let stft = StftParams::default();
    let l0 = algorithmic_latency(&desk_causal(0), &stft, 16_000);
    assert_eq!(l0.total_samples(), 400);
    assert!((l0.total_ms() - 25.0).abs() < 1e-12);
    let l20 = algorithmic_latency(&desk_causal(20), &stft, 16_000);
    assert_eq!(l20.total_samples(), 3600);
    assert!((l20.total_ms() - 225.0).abs() < 1e-12);
    assert_eq!(algorithmic_latency(&desk_causal(-10), &stft, 16_000), l0);
}

#[test]
fn fresh_state() {
    let (model, params) = build_model(&desk_causal(0), 0).unwrap();
    let s = init_stream(&model, &params, 2).unwrap();
    assert_eq!(s.frames_emitted(), 0);
    assert_eq!(s.history_lengths(), vec![0, 4, 8]);
    assert_eq!(s.recurrent_widths(), vec![8]);
    assert!(s.accumulator_len() < 400);
}

#[test]
fn ring_lengths_follow_causal_extent() {
    let cfg = ModelConfig {
        conv_config: ConvConfig::Custom(vec![(2, 5, 5, 16, 1)]),
        blstm_depth: 0,
        fc_depth: 0,
        causal: true,
        ..ModelConfig::default()
    };
    let (model, params) = build_model(&cfg, 0).unwrap();
    assert_eq!(init_stream(&model, &params, 2).unwrap().history_lengths(), vec![64]);

    // the causal best-model layout, checked without allocating its parameters
    let big = EnhancementModel::new(ModelConfig { causal: true, ..ModelConfig::default() }).unwrap();
    let state = big.network().step_state::<f32>().unwrap();
    let want: Vec<usize> = SMALL_CONV_ROWS.iter().map(|&(_, tw, _, td, _)| (tw - 1) * td).collect();
    assert_eq!(state.history_lengths(), want);
    assert_eq!(state.recurrent_widths(), vec![1023; 3]);
}

#[test]
fn non_causal_model_is_rejected() {
    let cfg = ModelConfig { causal: false, look_ahead_frames: 0, ..desk_causal(0) };
    let (model, params) = build_model(&cfg, 0).unwrap();
    assert!(matches!(init_stream(&model, &params, 2), Err(Error::Stream(_))));
}

#[test]
fn matches_offline_for_every_look_ahead() {
    for (i, k) in [-10, 0, 10, 20].into_iter().enumerate() {
        let (model, params) = build_model(&desk_causal(k), 10 + i as u64).unwrap();
        let audio = noise(i as u64, 8_123, 2);
        let offline = model.enhance(&params, &audio).unwrap();
        let mut s = init_stream(&model, &params, 2).unwrap();
        s.record_masks();
        let out = run_stream(&mut s, &audio, &[777]);
        assert_eq!(out.len(), audio.len());
        let worst = out.iter().zip(offline.channel(0)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-5 * offline.peak().max(1e-12), "k={k}: {worst:e}");

        let spec = crate::dsp::stft(&audio, model.stft_params()).unwrap();
        let mask = model.forward_mask(&params, &model.features(&spec).unwrap()).unwrap();
        let streamed = s.recorded_masks().unwrap();
        assert_eq!(streamed.len(), mask.values().len());
        let worst = streamed.iter().zip(mask.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst < 1e-5, "k={k}: mask {worst:e}");
    }
}

#[test]
fn chunking_is_bit_exact() {
    let (model, params) = build_model(&desk_causal(3), 5).unwrap();
    let audio = noise(5, 3_001, 2);
    let whole = run_stream(&mut init_stream(&model, &params, 2).unwrap(), &audio, &[usize::MAX]);
    let single = run_stream(&mut init_stream(&model, &params, 2).unwrap(), &audio, &[1]);
    let mixed = run_stream(&mut init_stream(&model, &params, 2).unwrap(), &audio, &[0, 17, 400, 3, 161]);
    assert_eq!(whole, single);
    assert_eq!(whole, mixed);
    let wrapped = enhance_streaming(&model, &params, &audio, 250).unwrap();
    assert_eq!(wrapped.channel(0), &whole[..]);
}

#[test]
fn output_length_equals_input_length() {
    let (model, params) = build_model(&desk_causal(2), 6).unwrap();
    for len in [1, 100, 399, 400, 401, 560, 1000, 2017] {
        let audio = noise(len as u64, len, 2);
        let out = run_stream(&mut init_stream(&model, &params, 2).unwrap(), &audio, &[64]);
        assert_eq!(out.len(), len);
        let offline = model.enhance(&params, &audio).unwrap();
        let worst = out.iter().zip(offline.channel(0)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-5 * offline.peak(), "len {len}: {worst:e}");
    }
}

#[test]
fn zero_length_and_misuse() {
    let (model, params) = build_model(&desk_causal(0), 7).unwrap();
    let mut s = init_stream(&model, &params, 2).unwrap();
    assert!(s.push_samples(&[&[], &[]]).unwrap().is_empty());
    assert!(s.flush().unwrap().is_empty());
    assert!(matches!(s.flush(), Err(Error::Stream(_))));
    assert!(matches!(s.push_samples(&[&[0.0], &[0.0]]), Err(Error::Stream(_))));

    let mut s = init_stream(&model, &params, 2).unwrap();
    assert!(s.push_samples(&[&[0.0]]).is_err());
    assert!(s.push_samples(&[&[0.0], &[0.0, 1.0]]).is_err());
    assert!(init_stream(&model, &params, 1).is_err());
}

#[test]
fn mono_model_reads_channel_zero() {
    let cfg = ModelConfig { input_channels: 1, ..desk_causal(0) };
    let (model, params) = build_model(&cfg, 8).unwrap();
    let audio = noise(8, 1_500, 2);
    let out = run_stream(&mut init_stream(&model, &params, 2).unwrap(), &audio, &[100]);
    let mono = run_stream(&mut init_stream(&model, &params, 1).unwrap(), &audio.select_channel(0), &[100]);
    assert_eq!(out, mono);
}

/// Input samples received when output sample `n` was released, per `n`.
fn release_points(k: i32, len: usize) -> Vec<usize> {
    let (model, params) = build_model(&desk_causal(k), 9).unwrap();
    let audio = noise(9, len, 2);
    let mut s = init_stream(&model, &params, 2).unwrap();
    let mut at = Vec::new();
    for n in 0..len {
        let got = s.push_samples(&[&audio.channel(0)[n..=n], &audio.channel(1)[n..=n]]).unwrap();
        at.extend(std::iter::repeat_n(n + 1, got.len()));
    }
    at
}

#[test]
fn emission_delay_matches_latency() {
    for k in [-4, 0, 20] {
        let lat = algorithmic_latency(&desk_causal(k), &StftParams::default(), 16_000).total_samples();
        let at = release_points(k, 6_000);
        assert!(!at.is_empty());
        assert_eq!(at[0], lat, "k={k}");
        let worst = at.iter().enumerate().map(|(n, &r)| r - n).max().unwrap();
        assert_eq!(worst, lat, "k={k}");
    }
}

#[test]
fn output_never_depends_on_later_input() {
    for k in [-3, 0, 5] {
        let (model, params) = build_model(&desk_causal(k), 11).unwrap();
        let lat = algorithmic_latency(&desk_causal(k), &StftParams::default(), 16_000).total_samples();
        let audio = noise(11, 5_000, 2);
        let base = model.enhance(&params, &audio).unwrap();
        let cut = 3_000;
        let mut chans = audio.clone().into_channels();
        for c in &mut chans {
            for x in &mut c[cut..] {
                *x = -*x * 3.0;
            }
        }
        let pert = model.enhance(&params, &AudioBuffer::new(16_000, chans).unwrap()).unwrap();
        let keep = cut - lat + 1;
        assert_eq!(&base.channel(0)[..keep], &pert.channel(0)[..keep], "k={k}");
        assert_ne!(base.channel(0)[keep..], pert.channel(0)[keep..]);
    }
}
