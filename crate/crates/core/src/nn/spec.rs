use crate::error::{Error, Result};

/// How a convolution pads the time axis. Frequency is always padded
/// symmetrically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaddingMode {
    /// Receptive field centered on the output frame (left-biased for even
    /// extents).
    Centered,
    /// Past frames only.
    Causal,
}

/// One 2-D convolution over (time, frequency), followed by ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub t_width: usize,
    pub f_width: usize,
    pub t_dilation: usize,
    pub f_dilation: usize,
    pub padding: PaddingMode,
}

impl ConvLayerSpec {
    pub const fn new(
        filters: usize,
        t_width: usize,
        f_width: usize,
        t_dilation: usize,
        f_dilation: usize,
    ) -> Self {
        Self {
            filters,
            t_width,
            f_width,
            t_dilation,
            f_dilation,
            padding: PaddingMode::Centered,
        }
    }

    pub const fn with_padding(mut self, padding: PaddingMode) -> Self {
        self.padding = padding;
        self
    }

    /// Frames spanned by the kernel beyond the output frame.
    pub fn time_extent(&self) -> usize {
        (self.t_width - 1) * self.t_dilation
    }

    /// Past and future frames seen by one output frame.
    pub fn time_context(&self) -> (usize, usize) {
        let extent = self.time_extent();
        match self.padding {
            PaddingMode::Causal => (extent, 0),
            PaddingMode::Centered => {
                let past = extent.div_ceil(2);
                (past, extent - past)
            }
        }
    }

    /// Zero padding ahead of bin 0.
    pub fn freq_padding(&self) -> usize {
        ((self.f_width - 1) * self.f_dilation).div_ceil(2)
    }

    fn validate(&self, errors: &mut Vec<String>, idx: usize) {
        for (name, v) in [
            ("filters", self.filters),
            ("t_width", self.t_width),
            ("f_width", self.f_width),
            ("t_dilation", self.t_dilation),
            ("f_dilation", self.f_dilation),
        ] {
            if v == 0 {
                errors.push(format!("conv layer {idx}: {name} must be >= 1"));
            }
        }
    }
}

/// Rows of the small convolution configuration, as
/// `(filters, t_width, f_width, t_dilation, f_dilation)`.
pub const SMALL_CONV_ROWS: [(usize, usize, usize, usize, usize); 8] = [
    (32, 1, 7, 1, 1),
    (32, 7, 1, 1, 1),
    (32, 5, 5, 1, 1),
    (32, 5, 5, 2, 1),
    (32, 5, 5, 4, 1),
    (32, 5, 5, 8, 1),
    (32, 5, 5, 16, 1),
    (8, 1, 1, 1, 1),
];

/// Rows of the large convolution configuration.
pub const LARGE_CONV_ROWS: [(usize, usize, usize, usize, usize); 15] = [
    (32, 1, 7, 1, 1),
    (32, 7, 1, 1, 1),
    (32, 5, 5, 1, 1),
    (32, 5, 5, 2, 1),
    (32, 5, 5, 4, 1),
    (32, 5, 5, 8, 1),
    (32, 5, 5, 16, 1),
    (32, 5, 5, 32, 1),
    (32, 5, 5, 1, 1),
    (32, 5, 5, 2, 2),
    (32, 5, 5, 4, 4),
    (32, 5, 5, 8, 8),
    (32, 5, 5, 16, 16),
    (32, 5, 5, 32, 32),
    (8, 1, 1, 1, 1),
];

pub fn conv_stack(rows: &[(usize, usize, usize, usize, usize)], padding: PaddingMode) -> Vec<ConvLayerSpec> {
    rows.iter()
        .map(|&(n, tw, fw, td, fd)| ConvLayerSpec::new(n, tw, fw, td, fd).with_padding(padding))
        .collect()
}

pub fn small_conv_stack(padding: PaddingMode) -> Vec<ConvLayerSpec> {
    conv_stack(&SMALL_CONV_ROWS, padding)
}

pub fn large_conv_stack(padding: PaddingMode) -> Vec<ConvLayerSpec> {
    conv_stack(&LARGE_CONV_ROWS, padding)
}

/// Accumulated `(past, future)` time receptive field of a convolution stack.
pub fn conv_stack_receptive_field(specs: &[ConvLayerSpec]) -> (usize, usize) {
    specs.iter().fold((0, 0), |(p, f), s| {
        let (sp, sf) = s.time_context();
        (p + sp, f + sf)
    })
}

/// LSTM layer; the bypass adds the layer input to its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecurrentLayerSpec {
    /// Units per direction.
    pub width: usize,
    pub bidirectional: bool,
    pub residual: bool,
}

impl RecurrentLayerSpec {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_dim(&self) -> usize {
        self.width * self.directions()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayerSpec {
    pub width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv(ConvLayerSpec),
    Recurrent(RecurrentLayerSpec),
    Dense(DenseLayerSpec),
}

/// Activation shape of one frame between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameShape {
    /// `channels` feature maps over `bins` frequency bins.
    Map { channels: usize, bins: usize },
    Vector(usize),
}

impl FrameShape {
    /// Flattened per-frame width.
    pub fn size(&self) -> usize {
        match *self {
            FrameShape::Map { channels, bins } => channels * bins,
            FrameShape::Vector(d) => d,
        }
    }
}

/// Full layer stack over a `[frames x bins x channels]` input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub bins: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn conv_layers(&self) -> Vec<ConvLayerSpec> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Per-frame shape entering each layer, plus the final output shape.
    pub fn frame_shapes(&self) -> Result<Vec<FrameShape>> {
        let mut errors = Vec::new();
        if self.bins == 0 {
            errors.push("bins must be >= 1".to_string());
        }
        if self.input_channels == 0 {
            errors.push("input_channels must be >= 1".to_string());
        }
        let mut shapes = vec![FrameShape::Map {
            channels: self.input_channels,
            bins: self.bins,
        }];
        let mut seen_vector_layer = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let next = match layer {
                LayerSpec::Conv(c) => {
                    c.validate(&mut errors, i);
                    if seen_vector_layer {
                        errors.push(format!("layer {i}: convolution after a recurrent or dense layer"));
                    }
                    FrameShape::Map {
                        channels: c.filters,
                        bins: self.bins,
                    }
                }
                LayerSpec::Recurrent(r) => {
                    seen_vector_layer = true;
                    if r.width == 0 {
                        errors.push(format!("layer {i}: recurrent width must be >= 1"));
                    }
                    FrameShape::Vector(r.output_dim())
                }
                LayerSpec::Dense(d) => {
                    seen_vector_layer = true;
                    if d.width == 0 {
                        errors.push(format!("layer {i}: dense width must be >= 1"));
                    }
                    FrameShape::Vector(d.width)
                }
            };
            shapes.push(next);
        }
        if errors.is_empty() {
            Ok(shapes)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn output_shape(&self) -> Result<FrameShape> {
        Ok(*self.frame_shapes()?.last().unwrap())
    }

    /// Whether every layer only looks at past and current frames.
    pub fn is_causal(&self) -> bool {
        self.layers.iter().all(|l| match l {
            LayerSpec::Conv(c) => c.time_context().1 == 0,
            LayerSpec::Recurrent(r) => !r.bidirectional,
            LayerSpec::Dense(_) => true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_causal_receptive_field_is_per_layer_sum() {
        let stack = small_conv_stack(PaddingMode::Causal);
        // per-layer (t_width - 1) * t_dilation, summed by hand over the rows
        let oracle: usize = SMALL_CONV_ROWS.iter().map(|&(_, tw, _, td, _)| (tw - 1) * td).sum();
        assert_eq!(oracle, 6 + 4 + 8 + 16 + 32 + 64);
        assert_eq!(conv_stack_receptive_field(&stack), (130, 0));
    }

    #[test]
    fn small_centered_receptive_field_is_split() {
        let stack = small_conv_stack(PaddingMode::Centered);
        assert_eq!(conv_stack_receptive_field(&stack), (65, 65));
    }

    #[test]
    fn frequency_only_layer_has_no_time_context() {
        let l = ConvLayerSpec::new(32, 1, 7, 1, 1);
        assert_eq!(conv_stack_receptive_field(&[l]), (0, 0));
    }

    #[test]
    fn even_extent_centered_is_left_biased() {
        let l = ConvLayerSpec::new(1, 2, 2, 1, 1);
        assert_eq!(l.time_context(), (1, 0));
        assert_eq!(l.freq_padding(), 1);
    }

    #[test]
    fn conv_after_dense_is_rejected() {
        let spec = NetworkSpec {
            bins: 4,
            input_channels: 1,
            layers: vec![
                LayerSpec::Dense(DenseLayerSpec {
                    width: 3,
                    activation: Activation::Relu,
                }),
                LayerSpec::Conv(ConvLayerSpec::new(2, 1, 1, 1, 1)),
            ],
        };
        assert!(matches!(spec.frame_shapes(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_widths_are_reported_together() {
        let spec = NetworkSpec {
            bins: 4,
            input_channels: 1,
            layers: vec![
                LayerSpec::Conv(ConvLayerSpec::new(0, 1, 1, 1, 1)),
                LayerSpec::Dense(DenseLayerSpec {
                    width: 0,
                    activation: Activation::Relu,
                }),
            ],
        };
        match spec.frame_shapes() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
