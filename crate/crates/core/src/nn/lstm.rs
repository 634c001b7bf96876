//! LSTM cell with gate order input, forget, cell, output.

use super::kernels::{affine_transpose_acc, dot, outer_acc, sigmoid};
use super::scalar::Real;
use super::spec::RecurrentLayerSpec;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weights of one direction: `w_ih` is `[4W, D]`, `w_hh` is `[4W, W]`.
#[derive(Clone, Copy)]
pub(crate) struct LstmWeights<'a, F> {
    pub(crate) w_ih: &'a [F],
    pub(crate) w_hh: &'a [F],
    pub(crate) bias: &'a [F],
    pub(crate) width: usize,
    pub(crate) input: usize,
}

/// One time step. Updates `h` and `c` in place and leaves the activated
/// gates `[i, f, g, o]` in `gates`.
pub(crate) fn lstm_step<F: Real>(w: &LstmWeights<F>, x: &[F], h: &mut [F], c: &mut [F], gates: &mut [F]) {
    let (nw, d) = (w.width, w.input);
    for r in 0..4 * nw {
        gates[r] = w.bias[r] + dot(&w.w_ih[r * d..(r + 1) * d], x) + dot(&w.w_hh[r * nw..(r + 1) * nw], h);
    }
    for k in 0..nw {
        let i = sigmoid(gates[k]);
        let f = sigmoid(gates[nw + k]);
        let g = gates[2 * nw + k].tanh();
        let o = sigmoid(gates[3 * nw + k]);
        gates[k] = i;
        gates[nw + k] = f;
        gates[2 * nw + k] = g;
        gates[3 * nw + k] = o;
        c[k] = f * c[k] + i * g;
        h[k] = o * c[k].tanh();
    }
}

/// Per-frame gates, cells and hidden states of one direction, indexed by
/// frame (not by processing order).
#[derive(Debug, Clone)]
pub(crate) struct DirTrace<F> {
    pub(crate) gates: Vec<F>,
    pub(crate) cells: Vec<F>,
    pub(crate) hidden: Vec<F>,
}

fn order(frames: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..frames).rev())
    } else {
        Box::new(0..frames)
    }
}

/// Runs one direction over `x` (`[T][D]`) from state `(h0, c0)`.
pub(crate) fn lstm_direction<F: Real>(
    w: &LstmWeights<F>,
    x: &[F],
    frames: usize,
    reverse: bool,
    h0: &[F],
    c0: &[F],
) -> DirTrace<F> {
    let nw = w.width;
    let mut tr = DirTrace {
        gates: vec![F::zero(); frames * 4 * nw],
        cells: vec![F::zero(); frames * nw],
        hidden: vec![F::zero(); frames * nw],
    };
    let mut h = h0.to_vec();
    let mut c = c0.to_vec();
    for t in order(frames, reverse) {
        lstm_step(
            w,
            &x[t * w.input..(t + 1) * w.input],
            &mut h,
            &mut c,
            &mut tr.gates[t * 4 * nw..(t + 1) * 4 * nw],
        );
        tr.cells[t * nw..(t + 1) * nw].copy_from_slice(&c);
        tr.hidden[t * nw..(t + 1) * nw].copy_from_slice(&h);
    }
    tr
}

/// Gradient sinks for one direction.
pub(crate) struct LstmGrads<'a, F> {
    pub(crate) w_ih: &'a mut [F],
    pub(crate) w_hh: &'a mut [F],
    pub(crate) bias: &'a mut [F],
}

/// Backpropagation through time for a direction started from the zero
/// state. `dout` holds the loss gradient of the hidden state at column
/// `offset` of rows of width `stride`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_direction_backward<F: Real>(
    w: &LstmWeights<F>,
    x: &[F],
    frames: usize,
    reverse: bool,
    tr: &DirTrace<F>,
    dout: &[F],
    stride: usize,
    offset: usize,
    grads: LstmGrads<F>,
    mut dx: Option<&mut [F]>,
) {
    let (nw, d) = (w.width, w.input);
    let zeros = vec![F::zero(); nw];
    let mut dh_next = vec![F::zero(); nw];
    let mut dc_next = vec![F::zero(); nw];
    let mut dz = vec![F::zero(); 4 * nw];
    let steps: Vec<usize> = order(frames, reverse).collect();
    for (s, &t) in steps.iter().enumerate().rev() {
        let (h_prev, c_prev) = if s == 0 {
            (&zeros[..], &zeros[..])
        } else {
            let p = steps[s - 1];
            (&tr.hidden[p * nw..(p + 1) * nw], &tr.cells[p * nw..(p + 1) * nw])
        };
        let gates = &tr.gates[t * 4 * nw..(t + 1) * 4 * nw];
        let cells = &tr.cells[t * nw..(t + 1) * nw];
        for k in 0..nw {
            let (i, f, g, o) = (gates[k], gates[nw + k], gates[2 * nw + k], gates[3 * nw + k]);
            let dh = dout[t * stride + offset + k] + dh_next[k];
            let tc = cells[k].tanh();
            let dc = dh * o * (F::one() - tc * tc) + dc_next[k];
            dz[k] = dc * g * i * (F::one() - i);
            dz[nw + k] = dc * c_prev[k] * f * (F::one() - f);
            dz[2 * nw + k] = dc * i * (F::one() - g * g);
            dz[3 * nw + k] = dh * tc * o * (F::one() - o);
            dc_next[k] = dc * f;
        }
        for (b, &z) in grads.bias.iter_mut().zip(&dz) {
            *b += z;
        }
        let xt = &x[t * d..(t + 1) * d];
        outer_acc(grads.w_ih, &dz, xt);
        outer_acc(grads.w_hh, &dz, h_prev);
        if let Some(dx) = dx.as_deref_mut() {
            affine_transpose_acc(w.w_ih, &dz, &mut dx[t * d..(t + 1) * d]);
        }
        dh_next.fill(F::zero());
        affine_transpose_acc(w.w_hh, &dz, &mut dh_next);
    }
}

/// Weights of one direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirectionParams<'a, F> {
    /// `[4W, D]`
    pub w_ih: &'a Tensor<F>,
    /// `[4W, W]`
    pub w_hh: &'a Tensor<F>,
    /// `[4W]`
    pub bias: &'a Tensor<F>,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a, F> {
    pub forward: LstmDirectionParams<'a, F>,
    /// Present iff the layer is bidirectional.
    pub backward: Option<LstmDirectionParams<'a, F>>,
    /// `[W * dirs, D]` bypass projection, present iff the layer is residual
    /// and the input width differs from the output width.
    pub proj: Option<&'a Tensor<F>>,
}

/// Hidden and cell state per direction. The reverse direction's state is the
/// one after processing frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<F> {
    pub h: Vec<Vec<F>>,
    pub c: Vec<Vec<F>>,
}

impl<F: Real> LstmState<F> {
    pub fn zeros(spec: &RecurrentLayerSpec) -> Self {
        let dirs = spec.directions();
        Self {
            h: vec![vec![F::zero(); spec.width]; dirs],
            c: vec![vec![F::zero(); spec.width]; dirs],
        }
    }
}

fn check_shape<F: Real>(name: &str, t: &Tensor<F>, want: &[usize]) -> Result<()> {
    if t.shape() != want {
        return Err(Error::shape(name, format!("{want:?}"), format!("{:?}", t.shape())));
    }
    Ok(())
}

/// LSTM layer over `input` (`[T, D]`) from `initial` (zeros when `None`).
/// Returns `[T, width * dirs]` and the final state.
pub fn lstm_forward<F: Real>(
    input: &Tensor<F>,
    spec: &RecurrentLayerSpec,
    params: &LstmParams<F>,
    initial: Option<&LstmState<F>>,
) -> Result<(Tensor<F>, LstmState<F>)> {
    let &[frames, d] = input.shape() else {
        return Err(Error::shape("lstm", "[frames, features]", format!("{:?}", input.shape())));
    };
    let nw = spec.width;
    let dirs = spec.directions();
    let out_dim = spec.output_dim();
    let zero = LstmState::zeros(spec);
    let init = initial.unwrap_or(&zero);
    if init.h.len() != dirs
        || init.c.len() != dirs
        || init.h.iter().chain(&init.c).any(|v| v.len() != nw)
    {
        return Err(Error::shape("lstm state", format!("{dirs} x [{nw}]"), "mismatched state"));
    }
    let mut directions = vec![params.forward];
    match (spec.bidirectional, params.backward) {
        (true, Some(b)) => directions.push(b),
        (false, None) => {}
        _ => return Err(Error::shape("lstm", format!("{dirs} directions"), "other direction count")),
    }
    for p in &directions {
        check_shape("lstm w_ih", p.w_ih, &[4 * nw, d])?;
        check_shape("lstm w_hh", p.w_hh, &[4 * nw, nw])?;
        check_shape("lstm bias", p.bias, &[4 * nw])?;
    }
    let needs_proj = spec.residual && d != out_dim;
    match (needs_proj, params.proj) {
        (true, Some(p)) => check_shape("lstm proj", p, &[out_dim, d])?,
        (false, None) => {}
        _ => return Err(Error::shape("lstm proj", "projection iff residual with width change", "mismatch")),
    }
    let mut out = vec![F::zero(); frames * out_dim];
    let mut fin = init.clone();
    for (k, p) in directions.iter().enumerate() {
        let w = LstmWeights {
            w_ih: p.w_ih.data(),
            w_hh: p.w_hh.data(),
            bias: p.bias.data(),
            width: nw,
            input: d,
        };
        let reverse = k == 1;
        let tr = lstm_direction(&w, input.data(), frames, reverse, &init.h[k], &init.c[k]);
        for t in 0..frames {
            out[t * out_dim + k * nw..t * out_dim + (k + 1) * nw].copy_from_slice(&tr.hidden[t * nw..(t + 1) * nw]);
        }
        if frames > 0 {
            let last = if reverse { 0 } else { frames - 1 };
            fin.h[k] = tr.hidden[last * nw..(last + 1) * nw].to_vec();
            fin.c[k] = tr.cells[last * nw..(last + 1) * nw].to_vec();
        }
    }
    if spec.residual {
        for t in 0..frames {
            let x = &input.data()[t * d..(t + 1) * d];
            let y = &mut out[t * out_dim..(t + 1) * out_dim];
            match params.proj {
                Some(p) => {
                    for (r, v) in y.iter_mut().enumerate() {
                        *v += dot(&p.data()[r * d..(r + 1) * d], x);
                    }
                }
                None => {
                    for (v, &xi) in y.iter_mut().zip(x) {
                        *v += xi;
                    }
                }
            }
        }
    }
    Ok((Tensor::from_vec(&[frames, out_dim], out)?, fin))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn uni(width: usize) -> RecurrentLayerSpec {
        RecurrentLayerSpec {
            width,
            bidirectional: false,
            residual: false,
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let (d, nw) = (3, 2);
        let x = Tensor::<f64>::filled(&[4, d], 1.0);
        let (w_ih, w_hh, b) = (Tensor::zeros(&[4 * nw, d]), Tensor::zeros(&[4 * nw, nw]), Tensor::zeros(&[4 * nw]));
        let dir = LstmDirectionParams { w_ih: &w_ih, w_hh: &w_hh, bias: &b };
        let params = LstmParams { forward: dir, backward: None, proj: None };
        let (y, st) = lstm_forward(&x, &uni(nw), &params, None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!(st, LstmState::zeros(&uni(nw)));
    }

    #[test]
    fn two_unit_cell_matches_hand_equations() {
        // T = 1 and T = 5 against the textbook cell equations
        let nw = 2;
        let w_ih: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.35).collect();
        let w_hh: Vec<f64> = (0..16).map(|i| 0.05 * ((i * 5 % 7) as f64) - 0.15).collect();
        let b: Vec<f64> = vec![0.05, -0.1, 1.0, 1.0, -0.1, 0.2, 0.3, -0.3];
        let xs = [0.3, -1.2, 0.9, 0.0, 2.0];
        let (mut h, mut c) = ([0.25f64, -0.1], [-0.5f64, 0.4]);
        let mut expect = Vec::new();
        for &x in &xs {
            let z: Vec<f64> = (0..8).map(|r| b[r] + w_ih[r] * x + w_hh[2 * r] * h[0] + w_hh[2 * r + 1] * h[1]).collect();
            for k in 0..2 {
                c[k] = sig(z[2 + k]) * c[k] + sig(z[k]) * z[4 + k].tanh();
                h[k] = sig(z[6 + k]) * c[k].tanh();
            }
            expect.extend_from_slice(&h);
        }
        let (ti, th, tb) = (
            Tensor::from_vec(&[8, 1], w_ih).unwrap(),
            Tensor::from_vec(&[8, 2], w_hh).unwrap(),
            Tensor::from_vec(&[8], b).unwrap(),
        );
        let params = LstmParams {
            forward: LstmDirectionParams { w_ih: &ti, w_hh: &th, bias: &tb },
            backward: None,
            proj: None,
        };
        let init = LstmState { h: vec![vec![0.25, -0.1]], c: vec![vec![-0.5, 0.4]] };
        let (y1, _) = lstm_forward(&Tensor::from_vec(&[1, 1], vec![xs[0]]).unwrap(), &uni(nw), &params, Some(&init)).unwrap();
        for (a, e) in y1.data().iter().zip(&expect[..2]) {
            assert!((a - e).abs() < 1e-6);
        }
        let (y, st) = lstm_forward(&Tensor::from_vec(&[5, 1], xs.to_vec()).unwrap(), &uni(nw), &params, Some(&init)).unwrap();
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-6);
        }
        assert!((st.h[0][0] - h[0]).abs() < 1e-12 && (st.c[0][1] - c[1]).abs() < 1e-12);
    }

    #[test]
    fn bidirectional_concatenates_and_residual_projects() {
        let (d, nw) = (3, 2);
        let spec = RecurrentLayerSpec { width: nw, bidirectional: true, residual: true };
        let mk = |n: usize, s: f64| Tensor::from_vec(&[n], (0..n).map(|i| ((i as f64) * s).sin() * 0.3).collect()).unwrap();
        let (a1, a2, a3) = (mk(8 * d, 0.7).reshape(&[8, d]).unwrap(), mk(16, 1.1).reshape(&[8, 2]).unwrap(), mk(8, 0.4));
        let (b1, b2, b3) = (mk(8 * d, 0.9).reshape(&[8, d]).unwrap(), mk(16, 1.3).reshape(&[8, 2]).unwrap(), mk(8, 0.2));
        let proj = mk(4 * d, 0.5).reshape(&[4, d]).unwrap();
        let fwd = LstmDirectionParams { w_ih: &a1, w_hh: &a2, bias: &a3 };
        let bwd = LstmDirectionParams { w_ih: &b1, w_hh: &b2, bias: &b3 };
        let x = mk(5 * d, 0.33).reshape(&[5, d]).unwrap();
        let full = LstmParams { forward: fwd, backward: Some(bwd), proj: Some(&proj) };
        let (y, _) = lstm_forward(&x, &spec, &full, None).unwrap();
        assert_eq!(y.shape(), &[5, 4]);

        let plain = RecurrentLayerSpec { width: nw, bidirectional: false, residual: false };
        let (yf, _) = lstm_forward(&x, &plain, &LstmParams { forward: fwd, backward: None, proj: None }, None).unwrap();
        let rev = Tensor::from_vec(&[5, d], (0..5).rev().flat_map(|t| x.data()[t * d..(t + 1) * d].to_vec()).collect()).unwrap();
        let (yb, _) = lstm_forward(&rev, &plain, &LstmParams { forward: bwd, backward: None, proj: None }, None).unwrap();
        for t in 0..5 {
            let xt = &x.data()[t * d..(t + 1) * d];
            for k in 0..4 {
                let lstm = if k < 2 { yf.data()[t * 2 + k] } else { yb.data()[(4 - t) * 2 + k - 2] };
                let bypass: f64 = (0..d).map(|j| proj.data()[k * d + j] * xt[j]).sum();
                assert!((y.data()[t * 4 + k] - lstm - bypass).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_state_width_is_rejected() {
        let x = Tensor::<f64>::zeros(&[2, 3]);
        let (w_ih, w_hh, b) = (Tensor::zeros(&[8, 3]), Tensor::zeros(&[8, 2]), Tensor::zeros(&[8]));
        let params = LstmParams {
            forward: LstmDirectionParams { w_ih: &w_ih, w_hh: &w_hh, bias: &b },
            backward: None,
            proj: None,
        };
        let bad = LstmState { h: vec![vec![0.0; 2]], c: vec![vec![0.0; 3]] };
        assert!(lstm_forward(&x, &uni(2), &params, Some(&bad)).is_err());
    }
}
