use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn mono(v: Vec<f64>) -> AudioBuffer {
    AudioBuffer::mono(16_000, v).unwrap()
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Delayed copies of `r` over the extended domain, one column per tap.
fn delay_matrix(r: &[f64], taps: usize, rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, taps, |i, j| if i >= j && i - j < r.len() { r[i - j] } else { 0.0 })
}

/// Dense least-squares SDR oracle.
fn dense_sdr(est: &[f64], r: &[f64], taps: usize) -> f64 {
    let rows = est.len() + taps - 1;
    let a = delay_matrix(r, taps, rows);
    let mut y = DVector::zeros(rows);
    y.rows_mut(0, est.len()).copy_from_slice(est);
    let x = a.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    let target = &a * x;
    let resid = &y - &target;
    10.0 * (target.norm_squared() / resid.norm_squared()).log10()
}

#[test]
fn matches_dense_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let r = random(&mut rng, 64);
        let mut est: Vec<f64> = r.iter().map(|x| 0.7 * x).collect();
        for (i, e) in est.iter_mut().enumerate().skip(3) {
            *e += 0.3 * r[i - 3] + rng.random_range(-0.5..0.5);
        }
        let fast = bss_sdr(&mono(est.clone()), &mono(r.clone()), 8).unwrap();
        let slow = dense_sdr(&est, &r, 8);
        assert!((fast.db - slow).abs() < 1e-6, "{} vs {slow}", fast.db);
        assert!(!fast.capped);
    }
}

#[test]
fn identical_signals_hit_the_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = random(&mut rng, 4_000);
    let s = bss_sdr(&mono(r.clone()), &mono(r), 512).unwrap();
    assert_eq!(s.db, SDR_CAP_DB);
    assert!(s.capped);
}

#[test]
fn orthogonal_noise_at_ten_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, taps) = (3_000, 64);
    let r = random(&mut rng, n);
    // noise supported on the first n samples, orthogonal to every delayed reference
    let a = delay_matrix(&r, taps, n);
    let v = DVector::from_vec(random(&mut rng, n));
    let coef = a.clone().svd(true, true).solve(&v, 1e-14).unwrap();
    let mut noise = v - &a * coef;
    let energy: f64 = r.iter().map(|x| x * x).sum();
    noise *= (0.1 * energy / noise.norm_squared()).sqrt();
    let est: Vec<f64> = r.iter().zip(noise.iter()).map(|(x, e)| x + e).collect();
    let s = bss_sdr(&mono(est), &mono(r), taps).unwrap();
    assert!((s.db - 10.0).abs() < 0.01, "{}", s.db);
}

#[test]
fn filtering_inside_the_span_is_forgiven() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // a silent end keeps the whole filtered reference inside the clip
    let mut r = random(&mut rng, 8_000);
    r[7_900..].fill(0.0);
    let h = random(&mut rng, 100);
    let est: Vec<f64> = (0..r.len())
        .map(|i| (0..h.len().min(i + 1)).map(|j| h[j] * r[i - j]).sum())
        .collect();
    let s = bss_sdr(&mono(est), &mono(r), 512).unwrap();
    assert!(s.db > 60.0, "{}", s.db);
}

#[test]
fn rejects_bad_inputs() {
    let r = mono(vec![0.5; 100]);
    assert!(bss_sdr(&r, &r, 101).is_err());
    assert!(bss_sdr(&r, &mono(vec![0.0; 100]), 8).is_err());
    assert!(bss_sdr(&r, &mono(vec![0.5; 99]), 8).is_err());
    assert!(bss_sdr(&r, &r, 0).is_err());
    let two = AudioBuffer::new(16_000, vec![vec![0.5; 100]; 2]).unwrap();
    assert!(bss_sdr(&two, &r, 8).is_err());
}

#[test]
fn snr_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random(&mut rng, 1_000);
    let flipped: Vec<f64> = s.iter().rev().copied().collect();
    assert!(snr_db(&mono(s.clone()), &mono(flipped)).unwrap().abs() < 1e-12);
    let n = random(&mut rng, 1_000);
    let base = snr_db(&mono(s.clone()), &mono(n.clone())).unwrap();
    let twice = snr_db(&mono(s.clone()), &mono(n.iter().map(|x| 2.0 * x).collect())).unwrap();
    assert!((base - twice - 6.0206).abs() < 1e-4);
    let ratio: f64 = s.iter().map(|x| x * x).sum::<f64>() / n.iter().map(|x| x * x).sum::<f64>();
    assert!((base - 10.0 * ratio.log10()).abs() < 1e-9);
    assert!(snr_db(&mono(s), &mono(vec![0.0; 1_000])).is_err());
}

fn result(id: &str, snr: f64, sdr: f64, trial: Option<usize>) -> SdrResult {
    SdrResult {
        utterance_id: id.into(),
        input_snr_db: snr,
        sdr_db: sdr,
        capped: false,
        filter_len: 512,
        trial,
    }
}

#[test]
fn table_row_average() {
    let row = [12.17, 13.44, 14.70, 15.83, 17.30, 18.78];
    let results: Vec<SdrResult> =
        SNR_BUCKETS_DB.iter().zip(row).map(|(&b, v)| result(&format!("u{b}"), b, v, None)).collect();
    let rep = aggregate(&results).unwrap();
    for (m, v) in rep.bucket_means.iter().zip(row) {
        assert_eq!(*m, Some(v));
    }
    assert!((rep.average.unwrap() - 15.37).abs() < 0.005);
    assert_eq!(rep.count, 6);
    assert_eq!(rep.trial_std, None);
}

#[test]
fn empty_buckets_are_absent() {
    let rep = aggregate(&[result("a", 0.0, 5.0, None), result("b", 0.2, 7.0, None)]).unwrap();
    assert_eq!(rep.bucket_means, [None, None, Some(6.0), None, None, None]);
    assert_eq!(rep.average, Some(6.0));
    let empty = aggregate(&[]).unwrap();
    assert_eq!(empty.average, None);
    assert!(aggregate(&[result("x", 1.5, 0.0, None)]).is_err());
}

#[test]
fn duplicated_trials_have_zero_std() {
    let mut v = Vec::new();
    for t in 0..3 {
        for &b in &SNR_BUCKETS_DB {
            v.push(result("u", b, b + 10.0, Some(t)));
        }
    }
    let rep = aggregate(&v).unwrap();
    assert_eq!(rep.trials, 3);
    assert_eq!(rep.trial_std, Some(0.0));
    v.iter_mut().filter(|r| r.trial == Some(2)).for_each(|r| r.sdr_db += 3.0);
    let rep = aggregate(&v).unwrap();
    assert!((rep.trial_std.unwrap() - sample_std(&[11.5, 11.5, 14.5])).abs() < 1e-12);
}

#[test]
fn csv_has_rows_and_summary() {
    let v = vec![result("a", -6.0, 1.0, None), result("b", -6.0, 3.0, None), result("c", 9.0, 8.0, None)];
    let mut buf = Vec::new();
    write_sdr_csv(&mut buf, &v).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "utterance_id,input_snr_db,sdr_db");
    assert_eq!(lines[1], "a,-6,1.0000");
    assert!(lines.contains(&"mean_-6dB,-6,2.0000"));
    assert_eq!(*lines.last().unwrap(), "mean_avg,,5.0000");
    assert!(format_report(&aggregate(&v).unwrap()).contains("Avg"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn toeplitz_solve_matches_dense(seed in 0u64..10_000, taps in 1usize..12, len in 32usize..96) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random(&mut rng, len);
        let est: Vec<f64> = r.iter().map(|x| x * 0.5 + rng.random_range(-1.0..1.0)).collect();
        let fast = bss_sdr(&mono(est.clone()), &mono(r.clone()), taps).unwrap();
        prop_assert!((fast.db - dense_sdr(&est, &r, taps)).abs() < 1e-6);
    }

    #[test]
    fn joint_scaling_leaves_sdr_unchanged(seed in 0u64..10_000, gain in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random(&mut rng, 600);
        let est: Vec<f64> = r.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect();
        let a = bss_sdr(&mono(est.clone()), &mono(r.clone()), 32).unwrap();
        let sc = |v: &[f64]| mono(v.iter().map(|x| x * gain).collect());
        let b = bss_sdr(&sc(&est), &sc(&r), 32).unwrap();
        prop_assert!((a.db - b.db).abs() < 1e-9);
    }

    #[test]
    fn longer_filters_never_lower_sdr(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random(&mut rng, 500);
        let est: Vec<f64> = r.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        let mut last = f64::NEG_INFINITY;
        for taps in [1, 2, 4, 8, 16, 32, 64] {
            let s = bss_sdr(&mono(est.clone()), &mono(r.clone()), taps).unwrap();
            prop_assert!(s.db <= SDR_CAP_DB);
            prop_assert!(s.db >= last - 1e-9);
            last = s.db;
        }
    }
}
