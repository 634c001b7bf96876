//! Source-to-distortion ratio with an allowed FIR distortion, SNR, and
//! per-SNR reporting.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Ceiling for SDR values, reached when the residual vanishes.
pub const SDR_CAP_DB: f64 = 100.0;
pub const DEFAULT_FILTER_LEN: usize = 512;
/// Input SNR buckets of the mixture corpus.
pub const SNR_BUCKETS_DB: [f64; 6] = [-6.0, -3.0, 0.0, 3.0, 6.0, 9.0];

/// Diagonal loading of the normal equations, relative to the zero-lag
/// autocorrelation.
const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sdr {
    pub db: f64,
    /// True when the value sits at [`SDR_CAP_DB`].
    pub capped: bool,
    pub filter_len: usize,
}

/// One scored utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrResult {
    pub utterance_id: String,
    pub input_snr_db: f64,
    pub sdr_db: f64,
    pub capped: bool,
    pub filter_len: usize,
    pub trial: Option<usize>,
}

fn single_channel(a: &AudioBuffer, what: &str) -> Result<Vec<f64>> {
    if a.num_channels() != 1 {
        return Err(Error::InvalidInput(format!("{what} must have one channel, got {}", a.num_channels())));
    }
    Ok(a.channel(0).to_vec())
}

fn fft(buf: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    plan.process(buf);
    if inverse {
        let s = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }
}

fn padded(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    v.resize(n, Complex64::new(0.0, 0.0));
    v
}

/// SDR of `estimate` against `reference`, where the target part of the
/// estimate is its least-squares fit by the reference filtered with
/// `filter_len` causal taps. Both signals are extended by `filter_len - 1`
/// zeros so every delayed copy of the reference is complete.
pub fn bss_sdr(estimate: &AudioBuffer, reference: &AudioBuffer, filter_len: usize) -> Result<Sdr> {
    let est = single_channel(estimate, "estimate")?;
    let refr = single_channel(reference, "reference")?;
    if filter_len == 0 {
        return Err(Error::InvalidParameter("filter length must be at least 1".into()));
    }
    if est.len() != refr.len() {
        return Err(Error::InvalidInput(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            refr.len()
        )));
    }
    if est.len() < filter_len {
        return Err(Error::InvalidInput(format!(
            "signals of {} samples are shorter than the {filter_len}-tap filter",
            est.len()
        )));
    }
    let ext = est.len() + filter_len - 1;
    let n = (ext + filter_len).next_power_of_two();
    let mut r = padded(&refr, n);
    let mut e = padded(&est, n);
    fft(&mut r, false);
    fft(&mut e, false);

    let mut auto: Vec<Complex64> = r.iter().map(|z| z * z.conj()).collect();
    fft(&mut auto, true);
    let mut cross: Vec<Complex64> = e.iter().zip(&r).map(|(a, b)| a * b.conj()).collect();
    fft(&mut cross, true);
    let r0 = auto[0].re;
    if r0 <= 0.0 {
        return Err(Error::InvalidInput("reference is silent".into()));
    }

    let gram = DMatrix::from_fn(filter_len, filter_len, |i, j| {
        let v = auto[i.abs_diff(j)].re;
        if i == j {
            v + REGULARIZATION * r0
        } else {
            v
        }
    });
    let rhs = DVector::from_fn(filter_len, |i, _| cross[i].re);
    let taps = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("normal equations are not positive definite".into()))?
        .solve(&rhs);

    let mut h = padded(taps.as_slice(), n);
    fft(&mut h, false);
    let mut target: Vec<Complex64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
    fft(&mut target, true);
    let (mut s2, mut e2) = (0.0, 0.0);
    for (i, t) in target[..ext].iter().enumerate() {
        let x = est.get(i).copied().unwrap_or(0.0);
        s2 += t.re * t.re;
        e2 += (x - t.re) * (x - t.re);
    }
    let db = 10.0 * (s2 / e2).log10();
    Ok(if e2 == 0.0 || db >= SDR_CAP_DB {
        Sdr { db: SDR_CAP_DB, capped: true, filter_len }
    } else {
        Sdr { db, capped: false, filter_len }
    })
}

/// `10 log10(|signal|^2 / |noise|^2)` over every channel.
pub fn snr_db(signal: &AudioBuffer, noise: &AudioBuffer) -> Result<f64> {
    if signal.len() != noise.len() || signal.num_channels() != noise.num_channels() {
        return Err(Error::InvalidInput("signal and noise shapes differ".into()));
    }
    let energy = |a: &AudioBuffer| (0..a.num_channels()).map(|c| a.energy(c)).sum::<f64>();
    let pn = energy(noise);
    if pn == 0.0 {
        return Err(Error::InvalidInput("noise is silent".into()));
    }
    Ok(10.0 * (energy(signal) / pn).log10())
}

/// Table of mean SDR per input-SNR bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrReport {
    /// Mean per bucket of [`SNR_BUCKETS_DB`]; `None` when the bucket is empty.
    pub bucket_means: [Option<f64>; 6],
    /// Mean of the present bucket means.
    pub average: Option<f64>,
    pub count: usize,
    pub trials: usize,
    /// Sample standard deviation of per-trial averages, with two or more trials.
    pub trial_std: Option<f64>,
}

/// Index into [`SNR_BUCKETS_DB`] of the bucket within 0.5 dB of `snr`.
pub fn snr_bucket(snr: f64) -> Option<usize> {
    SNR_BUCKETS_DB.iter().position(|&b| (snr - b).abs() < 0.5)
}

fn bucket_table(results: &[&SdrResult]) -> Result<([Option<f64>; 6], Option<f64>)> {
    let mut sums = [0.0; 6];
    let mut counts = [0usize; 6];
    for r in results {
        let b = snr_bucket(r.input_snr_db).ok_or_else(|| {
            Error::InvalidInput(format!("{}: input SNR {} dB is not a bucket", r.utterance_id, r.input_snr_db))
        })?;
        sums[b] += r.sdr_db;
        counts[b] += 1;
    }
    let means: [Option<f64>; 6] = std::array::from_fn(|b| (counts[b] > 0).then(|| sums[b] / counts[b] as f64));
    let present: Vec<f64> = means.iter().flatten().copied().collect();
    let avg = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok((means, avg))
}

pub fn aggregate(results: &[SdrResult]) -> Result<SdrReport> {
    let all: Vec<&SdrResult> = results.iter().collect();
    let (bucket_means, average) = bucket_table(&all)?;
    let mut trial_ids: Vec<usize> = results.iter().filter_map(|r| r.trial).collect();
    trial_ids.sort_unstable();
    trial_ids.dedup();
    let mut trial_avgs = Vec::new();
    for &t in &trial_ids {
        let of: Vec<&SdrResult> = results.iter().filter(|r| r.trial == Some(t)).collect();
        if let (_, Some(a)) = bucket_table(&of)? {
            trial_avgs.push(a);
        }
    }
    let trial_std = (trial_avgs.len() >= 2).then(|| sample_std(&trial_avgs));
    Ok(SdrReport {
        bucket_means,
        average,
        count: results.len(),
        trials: trial_ids.len().max(usize::from(!results.is_empty())),
        trial_std,
    })
}

/// Standard deviation with the `n - 1` denominator; 0 for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sdr_rows<W: Write>(mut w: W, results: &[SdrResult], report: &SdrReport) -> std::io::Result<()> {
    writeln!(w, "utterance_id,input_snr_db,sdr_db")?;
    for r in results {
        writeln!(w, "{},{},{:.4}", r.utterance_id, r.input_snr_db, r.sdr_db)?;
    }
    for (b, m) in SNR_BUCKETS_DB.iter().zip(&report.bucket_means) {
        if let Some(m) = m {
            writeln!(w, "mean_{b}dB,{b},{m:.4}")?;
        }
    }
    if let Some(a) = report.average {
        writeln!(w, "mean_avg,,{a:.4}")?;
    }
    w.flush()
}

/// `utterance_id,input_snr_db,sdr_db` rows, then one summary row per
/// present bucket (`mean_<snr>dB`) and an overall `mean_avg` row.
pub fn write_sdr_csv<W: Write>(w: W, results: &[SdrResult]) -> Result<()> {
    let report = aggregate(results)?;
    sdr_rows(w, results, &report).map_err(|e| Error::io("<output>", e))
}

pub fn save_sdr_csv(path: &Path, results: &[SdrResult]) -> Result<()> {
    let report = aggregate(results)?;
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    sdr_rows(std::io::BufWriter::new(f), results, &report).map_err(|e| Error::io(path, e))
}

/// The report as a Table-4 style text block.
pub fn format_report(report: &SdrReport) -> String {
    let mut head = String::new();
    let mut row = String::new();
    for (b, m) in SNR_BUCKETS_DB.iter().zip(&report.bucket_means) {
        head.push_str(&format!("{:>8}", format!("{b}dB")));
        row.push_str(&match m {
            Some(m) => format!("{m:>8.2}"),
            None => format!("{:>8}", "-"),
        });
    }
    head.push_str(&format!("{:>8}", "Avg"));
    row.push_str(&match report.average {
        Some(a) => format!("{a:>8.2}"),
        None => format!("{:>8}", "-"),
    });
    let mut s = format!("{head}\n{row}\n");
    if let Some(sd) = report.trial_std {
        s.push_str(&format!("std across {} trials: {sd:.3} dB\n", report.trials));
    }
    s
}

#[cfg(test)]
mod tests;
