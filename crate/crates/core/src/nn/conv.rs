//! Dilated 2-D convolution over (time, frequency) with ReLU.
//!
//! Internally each frame is stored channel-major (`[channel][bin]`), so the
//! innermost loops run over contiguous frequency bins. The public
//! [`conv2d_forward`] takes and returns the `[frame][bin][channel]` layout.

use super::kernels::{axpy, dot, sum};
use super::scalar::Real;
use super::spec::{ConvLayerSpec, PaddingMode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Tap offsets of one convolution layer, fixed for a given input geometry.
#[derive(Debug, Clone)]
pub(crate) struct ConvGeometry {
    pub(crate) cin: usize,
    pub(crate) cout: usize,
    pub(crate) bins: usize,
    /// Time offset of each kernel row relative to the output frame.
    pub(crate) t_offsets: Vec<isize>,
    /// Frequency offset of each kernel column relative to the output bin.
    pub(crate) f_offsets: Vec<isize>,
}

impl ConvGeometry {
    pub(crate) fn new(spec: &ConvLayerSpec, cin: usize, bins: usize) -> Self {
        let t_pad = match spec.padding {
            PaddingMode::Causal => spec.time_extent(),
            PaddingMode::Centered => spec.time_context().0,
        } as isize;
        let f_pad = spec.freq_padding() as isize;
        Self {
            cin,
            cout: spec.filters,
            bins,
            t_offsets: (0..spec.t_width)
                .map(|i| (i * spec.t_dilation) as isize - t_pad)
                .collect(),
            f_offsets: (0..spec.f_width)
                .map(|j| (j * spec.f_dilation) as isize - f_pad)
                .collect(),
        }
    }

    pub(crate) fn weight_shape(&self) -> [usize; 4] {
        [self.cout, self.t_offsets.len(), self.f_offsets.len(), self.cin]
    }

    pub(crate) fn frame_in(&self) -> usize {
        self.cin * self.bins
    }

    pub(crate) fn frame_out(&self) -> usize {
        self.cout * self.bins
    }

    /// Output bins `[f0, f1)` whose input bin `f + off` is in range.
    #[inline]
    fn valid_bins(&self, off: isize) -> Option<(usize, usize)> {
        let n = self.bins as isize;
        let f0 = (-off).max(0);
        let f1 = (n - off).min(n);
        (f0 < f1).then_some((f0 as usize, f1 as usize))
    }
}

/// One output frame. `taps[i]` is the input frame at `t_offsets[i]`, or
/// `None` where the zero padding applies.
pub(crate) fn conv_frame<F: Real>(
    g: &ConvGeometry,
    weight: &[F],
    bias: &[F],
    taps: &[Option<&[F]>],
    out: &mut [F],
) {
    let nf = g.bins;
    let (tw, fw, cin) = (g.t_offsets.len(), g.f_offsets.len(), g.cin);
    for o in 0..g.cout {
        let row = &mut out[o * nf..(o + 1) * nf];
        row.fill(bias[o]);
        for (i, tap) in taps.iter().enumerate() {
            let Some(x) = tap else { continue };
            for (j, &off) in g.f_offsets.iter().enumerate() {
                let Some((f0, f1)) = g.valid_bins(off) else { continue };
                let s0 = (f0 as isize + off) as usize;
                let s1 = (f1 as isize + off) as usize;
                for c in 0..cin {
                    let w = weight[((o * tw + i) * fw + j) * cin + c];
                    axpy(&mut row[f0..f1], w, &x[c * nf + s0..c * nf + s1]);
                }
            }
        }
        for v in row.iter_mut() {
            if !(*v > F::zero()) {
                *v = F::zero();
            }
        }
    }
}

/// Forward pass over a whole `[T][cin][bins]` sequence.
pub(crate) fn conv_sequence<F: Real>(
    g: &ConvGeometry,
    weight: &[F],
    bias: &[F],
    input: &[F],
    frames: usize,
) -> Vec<F> {
    let (fi, fo) = (g.frame_in(), g.frame_out());
    let mut out = vec![F::zero(); frames * fo];
    let mut taps: Vec<Option<&[F]>> = vec![None; g.t_offsets.len()];
    for t in 0..frames {
        for (tap, &dt) in taps.iter_mut().zip(&g.t_offsets) {
            let tt = t as isize + dt;
            *tap = (tt >= 0 && (tt as usize) < frames)
                .then(|| &input[tt as usize * fi..(tt as usize + 1) * fi]);
        }
        conv_frame(g, weight, bias, &taps, &mut out[t * fo..(t + 1) * fo]);
    }
    out
}

/// Backward pass over a sequence. Accumulates into `dweight`, `dbias` and
/// `dinput`; `output` is the post-ReLU forward output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_sequence_backward<F: Real>(
    g: &ConvGeometry,
    weight: &[F],
    input: &[F],
    output: &[F],
    dout: &[F],
    frames: usize,
    dweight: &mut [F],
    dbias: &mut [F],
    dinput: Option<&mut [F]>,
) {
    let nf = g.bins;
    let (fi, fo) = (g.frame_in(), g.frame_out());
    let (tw, fw, cin) = (g.t_offsets.len(), g.f_offsets.len(), g.cin);
    let mut dinput = dinput;
    let mut dz = vec![F::zero(); fo];
    for t in 0..frames {
        for k in 0..fo {
            dz[k] = if output[t * fo + k] > F::zero() {
                dout[t * fo + k]
            } else {
                F::zero()
            };
        }
        for o in 0..g.cout {
            let dzo = &dz[o * nf..(o + 1) * nf];
            dbias[o] += sum(dzo);
            for (i, &dt) in g.t_offsets.iter().enumerate() {
                let tt = t as isize + dt;
                if tt < 0 || tt as usize >= frames {
                    continue;
                }
                let base = tt as usize * fi;
                for (j, &off) in g.f_offsets.iter().enumerate() {
                    let Some((f0, f1)) = g.valid_bins(off) else { continue };
                    let s0 = (f0 as isize + off) as usize;
                    let s1 = (f1 as isize + off) as usize;
                    for c in 0..cin {
                        let wi = ((o * tw + i) * fw + j) * cin + c;
                        let x = &input[base + c * nf + s0..base + c * nf + s1];
                        dweight[wi] += dot(&dzo[f0..f1], x);
                        if let Some(dx) = dinput.as_deref_mut() {
                            axpy(&mut dx[base + c * nf + s0..base + c * nf + s1], weight[wi], &dzo[f0..f1]);
                        }
                    }
                }
            }
        }
    }
}

/// `[T][bins][channels]` to `[T][channels][bins]`.
pub(crate) fn to_channel_major<F: Real>(x: &[F], frames: usize, bins: usize, channels: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for t in 0..frames {
        let base = t * bins * channels;
        for f in 0..bins {
            for c in 0..channels {
                out[base + c * bins + f] = x[base + f * channels + c];
            }
        }
    }
    out
}

/// `[T][channels][bins]` to `[T][bins][channels]`.
pub(crate) fn to_bin_major<F: Real>(x: &[F], frames: usize, bins: usize, channels: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for t in 0..frames {
        let base = t * bins * channels;
        for c in 0..channels {
            for f in 0..bins {
                out[base + f * channels + c] = x[base + c * bins + f];
            }
        }
    }
    out
}

/// Convolution + bias + ReLU on a `[T, bins, C_in]` tensor, producing
/// `[T, bins, filters]`. `weight` has shape `[filters, t_width, f_width, C_in]`.
pub fn conv2d_forward<F: Real>(
    input: &Tensor<F>,
    spec: &ConvLayerSpec,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    let &[frames, bins, cin] = input.shape() else {
        return Err(Error::shape("conv", "[frames, bins, channels]", format!("{:?}", input.shape())));
    };
    let g = ConvGeometry::new(spec, cin, bins);
    if weight.shape() != g.weight_shape() {
        return Err(Error::shape("conv weight", format!("{:?}", g.weight_shape()), format!("{:?}", weight.shape())));
    }
    if bias.shape() != [spec.filters] {
        return Err(Error::shape("conv bias", format!("[{}]", spec.filters), format!("{:?}", bias.shape())));
    }
    let x = to_channel_major(input.data(), frames, bins, cin);
    let y = conv_sequence(&g, weight.data(), bias.data(), &x, frames);
    Tensor::from_vec(&[frames, bins, spec.filters], to_bin_major(&y, frames, bins, spec.filters))
}
