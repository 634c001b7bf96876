use super::kernels::{affine, affine_transpose_acc, outer_acc, sigmoid};
use super::scalar::Real;
use super::spec::{Activation, DenseLayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `out = act(W x + b)` with `W` of shape `[out.len(), x.len()]`.
pub(crate) fn dense_frame<F: Real>(w: &[F], b: &[F], act: Activation, x: &[F], out: &mut [F]) {
    affine(w, b, x, out);
    for v in out.iter_mut() {
        *v = match act {
            Activation::Relu => {
                if *v > F::zero() {
                    *v
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => sigmoid(*v),
        };
    }
}

/// Backward for one frame given the post-activation output `y`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_frame_backward<F: Real>(
    w: &[F],
    act: Activation,
    x: &[F],
    y: &[F],
    dy: &[F],
    dz: &mut [F],
    dw: &mut [F],
    db: &mut [F],
    dx: Option<&mut [F]>,
) {
    for k in 0..y.len() {
        dz[k] = match act {
            Activation::Relu => {
                if y[k] > F::zero() {
                    dy[k]
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => dy[k] * y[k] * (F::one() - y[k]),
        };
        db[k] += dz[k];
    }
    outer_acc(dw, dz, x);
    if let Some(dx) = dx {
        affine_transpose_acc(w, dz, dx);
    }
}

/// Fully connected layer on `[T, D]`; `weight` is `[width, D]`.
pub fn dense_forward<F: Real>(
    input: &Tensor<F>,
    spec: &DenseLayerSpec,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    let &[frames, d] = input.shape() else {
        return Err(Error::shape("dense", "[frames, features]", format!("{:?}", input.shape())));
    };
    if weight.shape() != [spec.width, d] {
        return Err(Error::shape("dense weight", format!("[{}, {d}]", spec.width), format!("{:?}", weight.shape())));
    }
    if bias.shape() != [spec.width] {
        return Err(Error::shape("dense bias", format!("[{}]", spec.width), format!("{:?}", bias.shape())));
    }
    let mut out = vec![F::zero(); frames * spec.width];
    for t in 0..frames {
        dense_frame(
            weight.data(),
            bias.data(),
            spec.activation,
            &input.data()[t * d..(t + 1) * d],
            &mut out[t * spec.width..(t + 1) * spec.width],
        );
    }
    Tensor::from_vec(&[frames, spec.width], out)
}
