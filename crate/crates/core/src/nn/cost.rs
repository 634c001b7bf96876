use super::spec::{FrameShape, LayerSpec, NetworkSpec};
use crate::dsp::StftParams;
use crate::error::Result;

/// Parameter count and multiply-adds per frame of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub params: usize,
    pub ops_per_frame: u64,
}

/// Cost of every layer in order.
pub fn layer_costs(spec: &NetworkSpec) -> Result<Vec<LayerCost>> {
    let shapes = spec.frame_shapes()?;
    Ok(spec
        .layers
        .iter()
        .zip(&shapes)
        .map(|(layer, shape)| match layer {
            LayerSpec::Conv(c) => {
                let (cin, bins) = match *shape {
                    FrameShape::Map { channels, bins } => (channels, bins),
                    FrameShape::Vector(_) => unreachable!("frame_shapes rejects conv after vector layers"),
                };
                let taps = c.filters * c.t_width * c.f_width * cin;
                LayerCost {
                    params: taps + c.filters,
                    ops_per_frame: (bins * taps) as u64,
                }
            }
            LayerSpec::Recurrent(r) => {
                let d = shape.size();
                let w = r.width;
                let mut params = r.directions() * 4 * (w * (d + w) + w);
                if r.residual && d != r.output_dim() {
                    params += d * r.output_dim();
                }
                LayerCost {
                    params,
                    ops_per_frame: params as u64,
                }
            }
            LayerSpec::Dense(dn) => {
                let params = shape.size() * dn.width + dn.width;
                LayerCost {
                    params,
                    ops_per_frame: params as u64,
                }
            }
        })
        .collect())
}

/// Total scalar parameters.
pub fn param_count(spec: &NetworkSpec) -> Result<usize> {
    Ok(layer_costs(spec)?.iter().map(|c| c.params).sum())
}

/// Multiply-adds per second of audio at `sample_rate`.
pub fn ops_per_audio_second(spec: &NetworkSpec, stft: &StftParams, sample_rate: u32) -> Result<f64> {
    let per_frame: u64 = layer_costs(spec)?.iter().map(|c| c.ops_per_frame).sum();
    Ok(per_frame as f64 * stft.frames_per_second(sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{
        large_conv_stack, small_conv_stack, Activation, DenseLayerSpec, PaddingMode, RecurrentLayerSpec,
    };

    fn dense(d: usize, w: usize) -> NetworkSpec {
        NetworkSpec {
            bins: d,
            input_channels: 1,
            layers: vec![LayerSpec::Dense(DenseLayerSpec {
                width: w,
                activation: Activation::Sigmoid,
            })],
        }
    }

    #[test]
    fn dense_layer_count_and_rate() {
        assert_eq!(param_count(&dense(3, 2)).unwrap(), 8);
        let ops = ops_per_audio_second(&dense(3, 2), &StftParams::default(), 16_000).unwrap();
        assert_eq!(ops, 800.0);
    }

    #[test]
    fn lstm_gate_arithmetic() {
        let (d, w) = (5, 3);
        let spec = NetworkSpec {
            bins: d,
            input_channels: 1,
            layers: vec![LayerSpec::Recurrent(RecurrentLayerSpec {
                width: w,
                bidirectional: false,
                residual: false,
            })],
        };
        assert_eq!(param_count(&spec).unwrap(), 4 * (w * (d + w) + w));
    }

    #[test]
    fn empty_model_costs_nothing() {
        let spec = NetworkSpec {
            bins: 257,
            input_channels: 2,
            layers: vec![],
        };
        assert_eq!(param_count(&spec).unwrap(), 0);
        assert_eq!(ops_per_audio_second(&spec, &StftParams::default(), 16_000).unwrap(), 0.0);
    }

    #[test]
    fn large_conv_costs_about_twice_small() {
        let cost = |layers: Vec<_>| {
            let spec = NetworkSpec {
                bins: 257,
                input_channels: 4,
                layers: layers.into_iter().map(LayerSpec::Conv).collect(),
            };
            ops_per_audio_second(&spec, &StftParams::default(), 16_000).unwrap()
        };
        let ratio = cost(large_conv_stack(PaddingMode::Centered)) / cost(small_conv_stack(PaddingMode::Centered));
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn conv_cost_closed_form() {
        let spec = NetworkSpec {
            bins: 10,
            input_channels: 3,
            layers: vec![LayerSpec::Conv(crate::nn::spec::ConvLayerSpec::new(4, 5, 7, 2, 1))],
        };
        let c = layer_costs(&spec).unwrap()[0];
        assert_eq!(c.params, 4 * 5 * 7 * 3 + 4);
        assert_eq!(c.ops_per_frame, 10 * 3 * 4 * 5 * 7);
    }
}
