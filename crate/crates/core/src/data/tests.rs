use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dsp::{stft, StftParams};
use crate::eval::{snr_db, SNR_BUCKETS_DB};
use crate::Error;

/// Power-weighted mean frequency over the whole clip.
fn centroid_hz(a: &AudioBuffer) -> f64 {
    let p = StftParams::default();
    let s = stft(&a.select_channel(0), &p).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for t in 0..s.frames() {
        for f in 0..s.bins() {
            let e = s.get(t, f, 0).norm_sqr();
            num += e * f as f64 * 16_000.0 / 512.0;
            den += e;
        }
    }
    num / den
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn target_is_deterministic_broadside_and_normalized() {
    let a = synth_target(1.3, 9).unwrap();
    let b = synth_target(1.3, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synth_target(1.3, 10).unwrap());
    assert_eq!(a.num_channels(), 2);
    assert_eq!(a.channel(0), a.channel(1));
    assert_eq!(a.len(), 20_800);
    assert!((a.peak() - 0.5).abs() < 1e-12);
}

#[test]
fn target_is_speech_like() {
    for seed in 0..50 {
        let a = synth_target(1.0, seed).unwrap();
        let c = centroid_hz(&a);
        assert!(c < 4_000.0, "seed {seed}: centroid {c} Hz");
        // pauses and syllable edges leave quiet 10 ms stretches
        let quiet = a.channel(0).chunks(160).filter(|w| w.iter().map(|x| x * x).sum::<f64>() < 1e-4).count();
        assert!(quiet >= 3, "seed {seed}: {quiet} quiet windows");
    }
}

#[test]
fn noise_is_deterministic_persistent_and_partly_correlated() {
    for profile in [NoiseProfile::TRAIN, NoiseProfile::HELD_OUT] {
        assert_eq!(synth_noise(0.5, 3, &profile).unwrap(), synth_noise(0.5, 3, &profile).unwrap());
        for seed in 0..30 {
            let n = synth_noise(2.0, seed, &profile).unwrap();
            let r = correlation(n.channel(0), n.channel(1));
            assert!(r > 0.2 && r < 0.9, "seed {seed}: correlation {r}");
            for c in 0..2 {
                assert!(n.channel(c).chunks(1_600).all(|w| w.iter().map(|x| x * x).sum::<f64>() > 0.0));
            }
        }
    }
    assert_ne!(synth_noise(1.0, 3, &NoiseProfile::TRAIN).unwrap(), synth_noise(1.0, 3, &NoiseProfile::HELD_OUT).unwrap());
}

#[test]
fn mixing_hits_the_requested_snr() {
    let t = synth_target(1.0, 1).unwrap();
    let n = synth_noise(1.0, 2, &NoiseProfile::TRAIN).unwrap();
    let m = mix_at_snr(&t, &n, 0.0).unwrap();
    let (pt, pn) = (m.target.energy(0), m.noise.energy(0));
    assert!((pt - pn).abs() / pt < 1e-9);
    let m6 = mix_at_snr(&t, &n, -6.0).unwrap();
    assert!((m6.noise.energy(0) / m6.target.energy(0) - 10f64.powf(0.6)).abs() < 1e-9);
    for &snr in &SNR_BUCKETS_DB {
        let m = mix_at_snr(&t, &n, snr).unwrap();
        let got = snr_db(&m.target.select_channel(0), &m.noise.select_channel(0)).unwrap();
        assert!((got - snr).abs() < 1e-6);
        assert_eq!(m.clean, t.select_channel(0));
        assert_eq!(m.target.channel(0), m.target.channel(1));
        for c in 0..2 {
            for ((y, s), v) in m.noisy.channel(c).iter().zip(m.target.channel(c)).zip(m.noise.channel(c)) {
                assert_eq!(*y, s + v);
            }
        }
    }
    let silent = AudioBuffer::new(16_000, vec![vec![0.0; 16_000]; 2]).unwrap();
    assert!(mix_at_snr(&silent, &n, 0.0).is_err());
}

#[test]
fn chunking_drops_partial_tails() {
    let clip = |s: f64| AudioBuffer::mono(16_000, vec![0.1; (s * 16_000.0) as usize]).unwrap();
    assert_eq!(chunk_fixed(&[clip(7.5)], CHUNK_S).unwrap().len(), 2);
    assert!(chunk_fixed(&[clip(2.9)], CHUNK_S).unwrap().is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let nine = AudioBuffer::mono(16_000, (0..144_000).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let parts = chunk_fixed(std::slice::from_ref(&nine), CHUNK_S).unwrap();
    assert_eq!(parts.len(), 3);
    let joined: Vec<f64> = parts.iter().flat_map(|p| p.channel(0).to_vec()).collect();
    assert_eq!(joined, nine.channel(0));
    assert_eq!(chunk_fixed(&[clip(7.5), clip(3.0)], CHUNK_S).unwrap().len(), 3);
    assert!(chunk_fixed(&[clip(1.0)], 0.0).is_err());
}

#[test]
fn manifests_round_trip_and_validate() {
    let m = DatasetManifest::generate(Split::Dev, 6, 3.0, 42).unwrap();
    let snrs: Vec<f64> = m.entries.iter().map(|e| e.snr_db).collect();
    assert_eq!(snrs, SNR_BUCKETS_DB);
    let text = m.to_text();
    assert!(text.contains(MANIFEST_COLUMNS));
    assert_eq!(DatasetManifest::parse(&text).unwrap(), m);

    let train = DatasetManifest::generate(Split::Train, 6, 3.0, 42).unwrap();
    let eval = DatasetManifest::generate(Split::Eval, 6, 3.0, 42).unwrap();
    let seeds = |m: &DatasetManifest| -> Vec<u64> { m.entries.iter().flat_map(|e| [e.target_seed, e.noise_seed]).collect() };
    let all: Vec<u64> = [seeds(&m), seeds(&train), seeds(&eval)].concat();
    let mut dedup = all.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), all.len());

    let bad = |t: String| matches!(DatasetManifest::parse(&t), Err(Error::InvalidInput(_)));
    assert!(bad(text.replace("dev_0001", "dev_0000")));
    assert!(bad(text.replace(",-3\n", ",-4\n")));
    assert!(bad(text.replace("# split = dev", "# split = train")));
    assert!(bad(text.replace("# generator_version = 1", "# generator_version = 9")));
    assert!(bad(text.replace("# split = dev\n", "")));
    assert!(bad(format!("{text}extra,1\n")));
    assert!(bad(text.replace(",3,", ",0,")));
}

#[test]
fn corpus_files_are_deterministic_and_meet_their_snr() {
    let m = DatasetManifest::generate(Split::Eval, 6, 0.5, 1).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let p1 = build_corpus(&m, d1.path()).unwrap();
    let p2 = build_corpus(&m, d2.path()).unwrap();
    assert_eq!(p1.len(), 12);
    assert_eq!(std::fs::read_dir(d1.path()).unwrap().count(), 12);
    for (a, b) in p1.iter().zip(&p2) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
    for e in &m.entries {
        let (noisy, clean) = load_pair(d1.path(), &e.id).unwrap();
        assert_eq!((noisy.num_channels(), clean.num_channels()), (2, 1));
        let noise: Vec<f64> = noisy.channel(0).iter().zip(clean.channel(0)).map(|(y, s)| y - s).collect();
        let got = snr_db(&clean, &AudioBuffer::mono(16_000, noise).unwrap()).unwrap();
        assert!((got - e.snr_db).abs() < 1e-6, "{}: {got}", e.id);
    }
}
