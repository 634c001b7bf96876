//! Vector primitives shared by every layer.
//!
//! Reductions use eight independent partial sums so the compiler can keep
//! them in SIMD registers; the summation order is fixed, so results are
//! deterministic for a given input.

use super::scalar::Real;

#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [F::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn sum<F: Real>(a: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let mut ca = a.chunks_exact(8);
    for x in &mut ca {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for &x in ca.remainder() {
        s += x;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<F: Real>(y: &mut [F], alpha: F, x: &[F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `out = W x + b` for a row-major `W` of shape `[out.len()][x.len()]`.
#[inline]
pub(crate) fn affine<F: Real>(w: &[F], b: &[F], x: &[F], out: &mut [F]) {
    let d = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * d..(r + 1) * d], x);
    }
}

/// `out += W^T g`
#[inline]
pub(crate) fn affine_transpose_acc<F: Real>(w: &[F], g: &[F], out: &mut [F]) {
    let d = out.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != F::zero() {
            axpy(out, gr, &w[r * d..(r + 1) * d]);
        }
    }
}

/// `dW += g x^T`
#[inline]
pub(crate) fn outer_acc<F: Real>(dw: &mut [F], g: &[F], x: &[F]) {
    let d = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != F::zero() {
            axpy(&mut dw[r * d..(r + 1) * d], gr, x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        for n in [0usize, 1, 7, 8, 9, 33] {
            let a: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 3.0).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
            assert!((sum(&a) - a.iter().sum::<f64>()).abs() < 1e-12);
        }
    }
}
