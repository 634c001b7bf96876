//! Dense-tensor network kernels: dilated convolution, LSTM and fully
//! connected layers with hand-written backward passes.

mod checkpoint;
mod conv;
mod cost;
mod dense;
mod kernels;
mod lstm;
mod network;
mod params;
mod scalar;
mod spec;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use conv::conv2d_forward;
pub use cost::{layer_costs, ops_per_audio_second, param_count, LayerCost};
pub use dense::dense_forward;
pub use lstm::{lstm_forward, LstmDirectionParams, LstmParams, LstmState};
pub use network::{ForwardTrace, Gradients, Network, StepState};
pub use params::ParameterSet;
pub use scalar::Real;
pub use spec::{
    conv_stack, conv_stack_receptive_field, large_conv_stack, small_conv_stack, Activation,
    ConvLayerSpec, DenseLayerSpec, FrameShape, LayerSpec, NetworkSpec, PaddingMode,
    RecurrentLayerSpec, LARGE_CONV_ROWS, SMALL_CONV_ROWS,
};
pub use tensor::Tensor;
