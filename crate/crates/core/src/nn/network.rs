//! Layer stack with offline forward/backward and frame-by-frame stepping.
//!
//! Convolution layers work on channel-major frames (`[C][F]`); recurrent and
//! dense layers see frames flattened frequency-major (`f * C + c`), which is
//! also the layout of the public `[T, F, C]` tensors. Convolutions always form
//! a prefix of the stack, so there is at most one transpose on the way in and
//! one on the way out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv_frame, conv_sequence, conv_sequence_backward, to_bin_major, to_channel_major, ConvGeometry};
use super::dense::{dense_frame, dense_frame_backward};
use super::kernels::{affine_transpose_acc, dot, outer_acc};
use super::lstm::{lstm_direction, lstm_direction_backward, lstm_step, DirTrace, LstmGrads, LstmWeights};
use super::params::ParameterSet;
use super::scalar::Real;
use super::spec::{Activation, DenseLayerSpec, FrameShape, LayerSpec, NetworkSpec, RecurrentLayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Init {
    Uniform(f64),
    Zero,
    /// Zero except the forget-gate block, which is one.
    ForgetBias(usize),
}

#[derive(Debug, Clone)]
enum Plan {
    Conv {
        geom: ConvGeometry,
        weight: usize,
        bias: usize,
    },
    Recurrent {
        spec: RecurrentLayerSpec,
        input: usize,
        /// `[w_ih, w_hh, bias]` per direction.
        dirs: Vec<[usize; 3]>,
        proj: Option<usize>,
    },
    Dense {
        spec: DenseLayerSpec,
        input: usize,
        weight: usize,
        bias: usize,
    },
}

/// A validated [`NetworkSpec`] with its parameter layout.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<FrameShape>,
    plan: Vec<Plan>,
    layout: Vec<(String, Vec<usize>, Init)>,
}

/// Activations recorded by [`Network::forward_trace`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    frames: usize,
    /// `acts[k]` is the input of layer `k` in that layer's working layout;
    /// the last entry is the network output.
    acts: Vec<Vec<F>>,
    lstm: Vec<Vec<DirTrace<F>>>,
}

impl<F: Real> ForwardTrace<F> {
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Network output flattened per frame.
    pub fn output(&self) -> &[F] {
        self.acts.last().expect("trace holds the input")
    }
}

/// Parameter and input gradients.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub params: ParameterSet<F>,
    pub input: Tensor<F>,
}

fn residual_add<F: Real>(y: &mut [F], x: &[F], proj: Option<&[F]>) {
    match proj {
        Some(p) => {
            let d = x.len();
            for (r, v) in y.iter_mut().enumerate() {
                *v += dot(&p[r * d..(r + 1) * d], x);
            }
        }
        None => {
            for (v, &xi) in y.iter_mut().zip(x) {
                *v += xi;
            }
        }
    }
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let shapes = spec.frame_shapes()?;
        let mut plan = Vec::with_capacity(spec.layers.len());
        let mut layout: Vec<(String, Vec<usize>, Init)> = Vec::new();
        let (mut nc, mut nr, mut nd) = (0, 0, 0);
        let push = |layout: &mut Vec<(String, Vec<usize>, Init)>, name: String, shape: Vec<usize>, init| {
            layout.push((name, shape, init));
            layout.len() - 1
        };
        for (k, layer) in spec.layers.iter().enumerate() {
            let in_shape = shapes[k];
            match layer {
                LayerSpec::Conv(c) => {
                    let FrameShape::Map { channels, bins } = in_shape else {
                        unreachable!("frame_shapes rejects conv after vector layers")
                    };
                    let geom = ConvGeometry::new(c, channels, bins);
                    let ws = geom.weight_shape();
                    let fan_in = c.t_width * c.f_width * channels;
                    let fan_out = c.t_width * c.f_width * c.filters;
                    let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let weight = push(&mut layout, format!("conv{nc}.weight"), ws.to_vec(), Init::Uniform(lim));
                    let bias = push(&mut layout, format!("conv{nc}.bias"), vec![c.filters], Init::Zero);
                    nc += 1;
                    plan.push(Plan::Conv { geom, weight, bias });
                }
                LayerSpec::Recurrent(r) => {
                    let d = in_shape.size();
                    let nw = r.width;
                    let lim = 1.0 / (nw as f64).sqrt();
                    let mut dirs = Vec::new();
                    for dir in ["fwd", "bwd"].iter().take(r.directions()) {
                        let a = push(&mut layout, format!("lstm{nr}.{dir}.w_ih"), vec![4 * nw, d], Init::Uniform(lim));
                        let b = push(&mut layout, format!("lstm{nr}.{dir}.w_hh"), vec![4 * nw, nw], Init::Uniform(lim));
                        let c = push(&mut layout, format!("lstm{nr}.{dir}.bias"), vec![4 * nw], Init::ForgetBias(nw));
                        dirs.push([a, b, c]);
                    }
                    let out = r.output_dim();
                    let proj = (r.residual && d != out).then(|| {
                        let lim = (6.0 / (d + out) as f64).sqrt();
                        push(&mut layout, format!("lstm{nr}.proj"), vec![out, d], Init::Uniform(lim))
                    });
                    nr += 1;
                    plan.push(Plan::Recurrent {
                        spec: *r,
                        input: d,
                        dirs,
                        proj,
                    });
                }
                LayerSpec::Dense(dn) => {
                    let d = in_shape.size();
                    let lim = (6.0 / (d + dn.width) as f64).sqrt();
                    let weight = push(&mut layout, format!("dense{nd}.weight"), vec![dn.width, d], Init::Uniform(lim));
                    let bias = push(&mut layout, format!("dense{nd}.bias"), vec![dn.width], Init::Zero);
                    nd += 1;
                    plan.push(Plan::Dense {
                        spec: *dn,
                        input: d,
                        weight,
                        bias,
                    });
                }
            }
        }
        Ok(Self {
            spec,
            shapes,
            plan,
            layout,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Per-frame shapes entering each layer plus the output shape.
    pub fn frame_shapes(&self) -> &[FrameShape] {
        &self.shapes
    }

    pub fn input_size(&self) -> usize {
        self.shapes[0].size()
    }

    pub fn output_shape(&self) -> FrameShape {
        *self.shapes.last().unwrap()
    }

    pub fn output_size(&self) -> usize {
        self.output_shape().size()
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        self.layout.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect()
    }

    /// Seeded initialization: uniform Glorot limits for conv, dense and
    /// projection weights, `±1/sqrt(W)` for LSTM matrices, zero biases except
    /// a forget-gate bias of one.
    pub fn init_params<F: Real>(&self, seed: u64) -> ParameterSet<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = self
            .layout
            .iter()
            .map(|(name, shape, init)| {
                let n: usize = shape.iter().product();
                let data: Vec<F> = match *init {
                    Init::Uniform(lim) => (0..n).map(|_| F::of(rng.random_range(-lim..lim))).collect(),
                    Init::Zero => vec![F::zero(); n],
                    Init::ForgetBias(nw) => (0..n).map(|i| if i / nw == 1 { F::one() } else { F::zero() }).collect(),
                };
                (name.clone(), Tensor::from_vec(shape, data).expect("layout shape"))
            })
            .collect();
        ParameterSet::new(entries, Some(seed)).expect("layout names are unique")
    }

    /// Errors unless `params` has exactly this network's names and shapes.
    pub fn check_params<F: Real>(&self, params: &ParameterSet<F>) -> Result<()> {
        if params.len() != self.layout.len() {
            return Err(Error::shape(
                "parameters",
                format!("{} tensors", self.layout.len()),
                format!("{} tensors", params.len()),
            ));
        }
        for (i, (name, shape, _)) in self.layout.iter().enumerate() {
            if params.name(i) != name || params.tensor(i).shape() != shape.as_slice() {
                return Err(Error::shape(
                    name.clone(),
                    format!("{name} {shape:?}"),
                    format!("{} {:?}", params.name(i), params.tensor(i).shape()),
                ));
            }
        }
        Ok(())
    }

    fn conv_major(&self, k: usize) -> bool {
        matches!(self.plan.get(k), Some(Plan::Conv { .. }))
    }

    fn check_input<F: Real>(&self, input: &Tensor<F>) -> Result<usize> {
        let (channels, bins) = (self.spec.input_channels, self.spec.bins);
        match input.shape() {
            &[t, f, c] if f == bins && c == channels => Ok(t),
            s => Err(Error::shape("network input", format!("[frames, {bins}, {channels}]"), format!("{s:?}"))),
        }
    }

    fn output_tensor<F: Real>(&self, frames: usize, data: Vec<F>) -> Result<Tensor<F>> {
        match self.output_shape() {
            FrameShape::Map { channels, bins } => Tensor::from_vec(&[frames, bins, channels], data),
            FrameShape::Vector(d) => Tensor::from_vec(&[frames, d], data),
        }
    }

    pub fn forward<F: Real>(&self, params: &ParameterSet<F>, input: &Tensor<F>) -> Result<Tensor<F>> {
        let tr = self.forward_trace(params, input)?;
        let frames = tr.frames;
        self.output_tensor(frames, tr.acts.into_iter().last().unwrap())
    }

    pub fn forward_trace<F: Real>(&self, params: &ParameterSet<F>, input: &Tensor<F>) -> Result<ForwardTrace<F>> {
        self.check_params(params)?;
        let frames = self.check_input(input)?;
        let mut first = input.data().to_vec();
        if self.conv_major(0) {
            first = to_channel_major(&first, frames, self.spec.bins, self.spec.input_channels);
        }
        let mut acts = vec![first];
        let mut lstm = Vec::with_capacity(self.plan.len());
        for (k, plan) in self.plan.iter().enumerate() {
            let x = &acts[k];
            let mut dirs_tr = Vec::new();
            let y = match plan {
                Plan::Conv { geom, weight, bias } => {
                    let y = conv_sequence(geom, params.tensor(*weight).data(), params.tensor(*bias).data(), x, frames);
                    if self.conv_major(k + 1) {
                        y
                    } else {
                        to_bin_major(&y, frames, geom.bins, geom.cout)
                    }
                }
                Plan::Recurrent { spec, input, dirs, proj } => {
                    let (nw, out) = (spec.width, spec.output_dim());
                    let mut y = vec![F::zero(); frames * out];
                    let zeros = vec![F::zero(); nw];
                    for (di, idx) in dirs.iter().enumerate() {
                        let w = self.lstm_weights(params, idx, nw, *input);
                        let tr = lstm_direction(&w, x, frames, di == 1, &zeros, &zeros);
                        for t in 0..frames {
                            y[t * out + di * nw..t * out + (di + 1) * nw]
                                .copy_from_slice(&tr.hidden[t * nw..(t + 1) * nw]);
                        }
                        dirs_tr.push(tr);
                    }
                    if spec.residual {
                        let p = proj.map(|i| params.tensor(i).data());
                        for t in 0..frames {
                            residual_add(&mut y[t * out..(t + 1) * out], &x[t * input..(t + 1) * input], p);
                        }
                    }
                    y
                }
                Plan::Dense { spec, input, weight, bias } => {
                    let nw = spec.width;
                    let mut y = vec![F::zero(); frames * nw];
                    for t in 0..frames {
                        dense_frame(
                            params.tensor(*weight).data(),
                            params.tensor(*bias).data(),
                            spec.activation,
                            &x[t * input..(t + 1) * input],
                            &mut y[t * nw..(t + 1) * nw],
                        );
                    }
                    y
                }
            };
            lstm.push(dirs_tr);
            acts.push(y);
        }
        Ok(ForwardTrace { frames, acts, lstm })
    }

    fn lstm_weights<'a, F: Real>(
        &self,
        params: &'a ParameterSet<F>,
        idx: &[usize; 3],
        width: usize,
        input: usize,
    ) -> LstmWeights<'a, F> {
        LstmWeights {
            w_ih: params.tensor(idx[0]).data(),
            w_hh: params.tensor(idx[1]).data(),
            bias: params.tensor(idx[2]).data(),
            width,
            input,
        }
    }

    fn check_trace<F: Real>(&self, trace: &ForwardTrace<F>) -> Result<()> {
        let ok = trace.acts.len() == self.plan.len() + 1
            && trace.lstm.len() == self.plan.len()
            && trace
                .acts
                .iter()
                .zip(&self.shapes)
                .all(|(a, s)| a.len() == trace.frames * s.size());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("forward trace does not belong to this network".into()))
        }
    }

    /// Reverse-mode gradients of a loss whose gradient with respect to the
    /// network output is `dout` (same shape as the forward output).
    pub fn backward<F: Real>(
        &self,
        params: &ParameterSet<F>,
        trace: &ForwardTrace<F>,
        dout: &Tensor<F>,
    ) -> Result<Gradients<F>> {
        let mut grads = params.zeros_like();
        let dx = self
            .backward_into(params, trace, dout.data(), &mut grads, true)?
            .expect("input gradient requested");
        Ok(Gradients {
            params: grads,
            input: Tensor::from_vec(&[trace.frames, self.spec.bins, self.spec.input_channels], dx)?,
        })
    }

    /// Accumulates parameter gradients into `grads`; returns the input
    /// gradient (flattened `[T][F][C]`) when `want_input` is set.
    pub fn backward_into<F: Real>(
        &self,
        params: &ParameterSet<F>,
        trace: &ForwardTrace<F>,
        dout: &[F],
        grads: &mut ParameterSet<F>,
        want_input: bool,
    ) -> Result<Option<Vec<F>>> {
        self.check_params(params)?;
        self.check_trace(trace)?;
        if !grads.same_layout(params) {
            return Err(Error::shape("gradients", "parameter layout", "other layout"));
        }
        let frames = trace.frames;
        if dout.len() != trace.output().len() {
            return Err(Error::shape(
                "output gradient",
                trace.output().len(),
                dout.len(),
            ));
        }
        let mut dcur = dout.to_vec();
        for k in (0..self.plan.len()).rev() {
            let x = &trace.acts[k];
            let need_dx = k > 0 || want_input;
            let mut dx = need_dx.then(|| vec![F::zero(); x.len()]);
            match &self.plan[k] {
                Plan::Conv { geom, weight, bias } => {
                    let (y, dy) = if self.conv_major(k + 1) {
                        (std::borrow::Cow::Borrowed(&trace.acts[k + 1]), dcur)
                    } else {
                        (
                            std::borrow::Cow::Owned(to_channel_major(&trace.acts[k + 1], frames, geom.bins, geom.cout)),
                            to_channel_major(&dcur, frames, geom.bins, geom.cout),
                        )
                    };
                    let [dw, db] = grads.disjoint_data_mut([*weight, *bias]);
                    conv_sequence_backward(
                        geom,
                        params.tensor(*weight).data(),
                        x,
                        &y,
                        &dy,
                        frames,
                        dw,
                        db,
                        dx.as_deref_mut(),
                    );
                }
                Plan::Recurrent { spec, input, dirs, proj } => {
                    let (nw, out, d) = (spec.width, spec.output_dim(), *input);
                    if spec.residual {
                        match proj {
                            Some(pi) => {
                                let p = params.tensor(*pi).data();
                                let [dp] = grads.disjoint_data_mut([*pi]);
                                for t in 0..frames {
                                    let g = &dcur[t * out..(t + 1) * out];
                                    outer_acc(dp, g, &x[t * d..(t + 1) * d]);
                                    if let Some(dx) = dx.as_deref_mut() {
                                        affine_transpose_acc(p, g, &mut dx[t * d..(t + 1) * d]);
                                    }
                                }
                            }
                            None => {
                                if let Some(dx) = dx.as_deref_mut() {
                                    for (a, &g) in dx.iter_mut().zip(&dcur) {
                                        *a += g;
                                    }
                                }
                            }
                        }
                    }
                    for (di, idx) in dirs.iter().enumerate() {
                        let w = self.lstm_weights(params, idx, nw, d);
                        let [gi, gh, gb] = grads.disjoint_data_mut(*idx);
                        lstm_direction_backward(
                            &w,
                            x,
                            frames,
                            di == 1,
                            &trace.lstm[k][di],
                            &dcur,
                            out,
                            di * nw,
                            LstmGrads {
                                w_ih: gi,
                                w_hh: gh,
                                bias: gb,
                            },
                            dx.as_deref_mut(),
                        );
                    }
                }
                Plan::Dense { spec, input, weight, bias } => {
                    let (nw, d) = (spec.width, *input);
                    let y = &trace.acts[k + 1];
                    let w = params.tensor(*weight).data();
                    let [dw, db] = grads.disjoint_data_mut([*weight, *bias]);
                    let mut dz = vec![F::zero(); nw];
                    for t in 0..frames {
                        dense_frame_backward(
                            w,
                            spec.activation,
                            &x[t * d..(t + 1) * d],
                            &y[t * nw..(t + 1) * nw],
                            &dcur[t * nw..(t + 1) * nw],
                            &mut dz,
                            dw,
                            db,
                            dx.as_deref_mut().map(|v| &mut v[t * d..(t + 1) * d]),
                        );
                    }
                }
            }
            match dx {
                Some(v) => dcur = v,
                None => return Ok(None),
            }
        }
        if self.conv_major(0) {
            dcur = to_bin_major(&dcur, frames, self.spec.bins, self.spec.input_channels);
        }
        Ok(want_input.then_some(dcur))
    }

    /// Sign pattern of every ReLU output in the trace.
    pub fn relu_pattern<F: Real>(&self, trace: &ForwardTrace<F>) -> Vec<bool> {
        let mut out = Vec::new();
        for (k, plan) in self.plan.iter().enumerate() {
            let relu = match plan {
                Plan::Conv { .. } => true,
                Plan::Dense { spec, .. } => spec.activation == Activation::Relu,
                Plan::Recurrent { .. } => false,
            };
            if relu {
                out.extend(trace.acts[k + 1].iter().map(|&v| v > F::zero()));
            }
        }
        out
    }

    /// Fresh frame-by-frame state. Only causal networks can be stepped.
    pub fn step_state<F: Real>(&self) -> Result<StepState<F>> {
        if !self.spec.is_causal() {
            return Err(Error::Stream("frame-by-frame inference needs a causal network".into()));
        }
        let layers = self
            .plan
            .iter()
            .map(|plan| match plan {
                Plan::Conv { geom, .. } => {
                    let depth = geom.t_offsets.iter().map(|&o| (-o) as usize).max().unwrap_or(0) + 1;
                    LayerState::Conv(Ring {
                        data: vec![F::zero(); depth * geom.frame_in()],
                        frame: geom.frame_in(),
                        depth,
                        head: 0,
                        fill: 0,
                    })
                }
                Plan::Recurrent { spec, .. } => LayerState::Recurrent {
                    h: vec![F::zero(); spec.width],
                    c: vec![F::zero(); spec.width],
                    gates: vec![F::zero(); 4 * spec.width],
                },
                Plan::Dense { .. } => LayerState::Dense,
            })
            .collect();
        Ok(StepState { layers, steps: 0 })
    }

    /// Advances one frame. `frame` is `[F][C]` flattened; `out` receives one
    /// output frame. Matches [`Network::forward`] bit for bit.
    pub fn step<F: Real>(
        &self,
        params: &ParameterSet<F>,
        state: &mut StepState<F>,
        frame: &[F],
        out: &mut [F],
    ) -> Result<()> {
        if state.layers.len() != self.plan.len() {
            return Err(Error::Stream("step state belongs to another network".into()));
        }
        if frame.len() != self.input_size() || out.len() != self.output_size() {
            return Err(Error::shape(
                "network step",
                format!("{} in, {} out", self.input_size(), self.output_size()),
                format!("{} in, {} out", frame.len(), out.len()),
            ));
        }
        let mut cur = if self.conv_major(0) {
            to_channel_major(frame, 1, self.spec.bins, self.spec.input_channels)
        } else {
            frame.to_vec()
        };
        for (k, (plan, ls)) in self.plan.iter().zip(state.layers.iter_mut()).enumerate() {
            cur = match (plan, ls) {
                (Plan::Conv { geom, weight, bias }, LayerState::Conv(ring)) => {
                    ring.push(&cur);
                    let taps: Vec<Option<&[F]>> = geom.t_offsets.iter().map(|&o| ring.back((-o) as usize)).collect();
                    let mut y = vec![F::zero(); geom.frame_out()];
                    conv_frame(geom, params.tensor(*weight).data(), params.tensor(*bias).data(), &taps, &mut y);
                    if self.conv_major(k + 1) {
                        y
                    } else {
                        to_bin_major(&y, 1, geom.bins, geom.cout)
                    }
                }
                (Plan::Recurrent { spec, input, dirs, proj }, LayerState::Recurrent { h, c, gates }) => {
                    let w = self.lstm_weights(params, &dirs[0], spec.width, *input);
                    lstm_step(&w, &cur, h, c, gates);
                    let mut y = h.clone();
                    if spec.residual {
                        residual_add(&mut y, &cur, proj.map(|i| params.tensor(i).data()));
                    }
                    y
                }
                (Plan::Dense { spec, weight, bias, .. }, LayerState::Dense) => {
                    let mut y = vec![F::zero(); spec.width];
                    dense_frame(
                        params.tensor(*weight).data(),
                        params.tensor(*bias).data(),
                        spec.activation,
                        &cur,
                        &mut y,
                    );
                    y
                }
                _ => return Err(Error::Stream("step state belongs to another network".into())),
            };
        }
        out.copy_from_slice(&cur);
        state.steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Ring<F> {
    data: Vec<F>,
    frame: usize,
    depth: usize,
    head: usize,
    fill: usize,
}

impl<F: Real> Ring<F> {
    fn push(&mut self, x: &[F]) {
        self.data[self.head * self.frame..(self.head + 1) * self.frame].copy_from_slice(x);
        self.head = (self.head + 1) % self.depth;
        self.fill = (self.fill + 1).min(self.depth);
    }

    /// Frame pushed `back` steps before the newest one, if it exists.
    fn back(&self, back: usize) -> Option<&[F]> {
        if back >= self.fill {
            return None;
        }
        let slot = (self.head + self.depth - 1 - back) % self.depth;
        Some(&self.data[slot * self.frame..(slot + 1) * self.frame])
    }
}

#[derive(Debug, Clone)]
enum LayerState<F> {
    Conv(Ring<F>),
    Recurrent { h: Vec<F>, c: Vec<F>, gates: Vec<F> },
    Dense,
}

/// Per-layer history for [`Network::step`].
#[derive(Debug, Clone)]
pub struct StepState<F> {
    layers: Vec<LayerState<F>>,
    steps: usize,
}

impl<F> StepState<F> {
    /// Frames consumed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Past frames each conv layer keeps, `(t_width - 1) * t_dilation`.
    pub fn history_lengths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerState::Conv(r) => Some(r.depth - 1),
                _ => None,
            })
            .collect()
    }

    /// Hidden width of each recurrent layer's carry.
    pub fn recurrent_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerState::Recurrent { h, .. } => Some(h.len()),
                _ => None,
            })
            .collect()
    }
}
