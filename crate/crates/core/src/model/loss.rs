//! Compressed-spectrum loss: a magnitude term plus a weighted complex term.
//!
//! With `X^p = |X|^p e^{i arg X}`,
//! `L = sum (|C|^p - |E|^p)^2 + lambda * sum |C^p - E^p|^2`,
//! summed over every frame and bin of one clip.

use num_complex::Complex64;

use crate::dsp::{compress_value, ComplexSpectrogram};
use crate::error::{Error, Result};

fn check(enhanced: &ComplexSpectrogram, clean: &ComplexSpectrogram, power: f64) -> Result<()> {
    if enhanced.channels() != 1 || clean.channels() != 1 {
        return Err(Error::InvalidInput("loss compares single-channel spectrograms".into()));
    }
    if !enhanced.same_layout(clean) {
        return Err(Error::shape(
            "loss",
            format!("{}x{}", clean.frames(), clean.bins()),
            format!("{}x{}", enhanced.frames(), enhanced.bins()),
        ));
    }
    if !(power > 0.0 && power <= 1.0) {
        return Err(Error::InvalidParameter(format!("compression power must lie in (0, 1], got {power}")));
    }
    Ok(())
}

/// Per-bin loss and its gradient with respect to `(Re E, Im E)`, packed as
/// a complex number. The gradient is 0 where `E = 0`.
#[inline]
pub(crate) fn bin_loss_grad(e: Complex64, c: Complex64, lambda: f64, power: f64) -> (f64, Complex64) {
    let cp = compress_value(c, power);
    let ep = compress_value(e, power);
    let r = e.norm();
    let rp = r.powf(power);
    let mag = c.norm().powf(power) - rp;
    let d = ep - cp;
    let l = mag * mag + lambda * d.norm_sqr();
    if r == 0.0 {
        return (l, Complex64::new(0.0, 0.0));
    }
    let g_mag = e * (-2.0 * mag * power * r.powf(power - 2.0));
    let rpm1 = r.powf(power - 1.0);
    let g_cplx = d * (2.0 * rpm1) + e * (2.0 * (power - 1.0) * r.powf(power - 3.0) * (e.conj() * d).re);
    (l, g_mag + g_cplx * lambda)
}

/// Loss of `enhanced` against the clean channel-0 reference.
pub fn loss(enhanced: &ComplexSpectrogram, clean: &ComplexSpectrogram, lambda: f64, power: f64) -> Result<f64> {
    check(enhanced, clean, power)?;
    Ok(enhanced
        .values()
        .iter()
        .zip(clean.values())
        .map(|(&e, &c)| bin_loss_grad(e, c, lambda, power).0)
        .sum())
}

/// Loss and its gradient with respect to every enhanced value, laid out like
/// `enhanced.values()`.
pub fn loss_and_input_grad(
    enhanced: &ComplexSpectrogram,
    clean: &ComplexSpectrogram,
    lambda: f64,
    power: f64,
) -> Result<(f64, Vec<Complex64>)> {
    check(enhanced, clean, power)?;
    let mut total = 0.0;
    let grad = enhanced
        .values()
        .iter()
        .zip(clean.values())
        .map(|(&e, &c)| {
            let (l, g) = bin_loss_grad(e, c, lambda, power);
            total += l;
            g
        })
        .collect();
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dsp::StftParams;

    fn single(v: Vec<Complex64>, frames: usize, bins_params: &StftParams) -> ComplexSpectrogram {
        ComplexSpectrogram::from_values(v, frames, 1, bins_params.clone(), 0, 16_000).unwrap()
    }

    /// Tiny STFT geometry: 8-point FFT, 5 bins.
    fn tiny() -> StftParams {
        StftParams::new(8, 4, 8).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_examples() {
        let (l, _) = bin_loss_grad(c(32.0, 0.0), c(1.0, 0.0), 0.0, 0.3);
        assert!((l - (1.0 - 32f64.powf(0.3)).powi(2)).abs() < 1e-12);
        assert!((l - 3.3431).abs() < 1e-4);
        let (l, _) = bin_loss_grad(c(0.0, 1.0), c(1.0, 0.0), 1.0, 1.0);
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_match_has_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<Complex64> = (0..20).map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
        let s = single(v, 4, &tiny());
        let (l, g) = loss_and_input_grad(&s, &s, 0.7, 0.3).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|z| z.norm() < 1e-12));
    }

    fn fd_check(lambda: f64, power: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand = |n| -> Vec<Complex64> {
            (0..n).map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect()
        };
        let e = single(rand(20), 4, &tiny());
        let cl = single(rand(20), 4, &tiny());
        let (_, g) = loss_and_input_grad(&e, &cl, lambda, power).unwrap();
        let eps = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..20 {
            if e.values()[i].norm() < 1e-2 {
                continue;
            }
            for (k, dir) in [c(1.0, 0.0), c(0.0, 1.0)].into_iter().enumerate() {
                let mut p = e.clone();
                p.values_mut()[i] += dir * eps;
                let mut m = e.clone();
                m.values_mut()[i] -= dir * eps;
                let num = (loss(&p, &cl, lambda, power).unwrap() - loss(&m, &cl, lambda, power).unwrap()) / (2.0 * eps);
                let ana = if k == 0 { g[i].re } else { g[i].im };
                worst = worst.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-3));
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for lambda in [0.0, 0.113, 1.0] {
            for power in [0.3, 1.0] {
                for seed in 0..5 {
                    let w = fd_check(lambda, power, seed);
                    assert!(w < 1e-4, "lambda {lambda} power {power}: {w:e}");
                }
            }
        }
    }

    #[test]
    fn gradient_is_linear_in_lambda() {
        let e = c(0.7, -1.1);
        let cl = c(-0.2, 0.4);
        let g0 = bin_loss_grad(e, cl, 0.0, 0.3).1;
        let g1 = bin_loss_grad(e, cl, 1.0, 0.3).1;
        let gh = bin_loss_grad(e, cl, 0.5, 0.3).1;
        assert!((gh - (g0 + (g1 - g0) * 0.5)).norm() < 1e-12);
    }

    #[test]
    fn zero_bin_has_zero_gradient() {
        let (l, g) = bin_loss_grad(c(0.0, 0.0), c(1.0, 1.0), 0.5, 0.3);
        assert!(l > 0.0);
        assert_eq!(g, c(0.0, 0.0));
    }

    #[test]
    fn magnitude_term_ignores_phase_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let e = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let cl = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let rot = Complex64::from_polar(1.0, rng.random_range(-3.0..3.0));
            let a = bin_loss_grad(e, cl, 0.0, 0.3).0;
            let b = bin_loss_grad(e * rot, cl, 0.0, 0.3).0;
            assert!((a - b).abs() < 1e-12);
            assert!(a >= 0.0 && bin_loss_grad(e, cl, 0.6, 0.3).0 >= a);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = single(vec![c(0.0, 0.0); 20], 4, &tiny());
        let b = single(vec![c(0.0, 0.0); 15], 3, &tiny());
        assert!(loss(&a, &b, 0.1, 0.3).is_err());
    }
}
