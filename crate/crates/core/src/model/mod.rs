//! The enhancement model: feature extraction, the mask network, mask
//! application and the training loss.

mod config;
mod loss;

use num_complex::Complex64;

pub use config::{parse_conv_rows, parse_key_values, ConvConfig, ConvRow, ModelConfig, CONFIG_KEYS};
pub use loss::{loss, loss_and_input_grad};

use crate::dsp::{input_features, istft, stft, AudioBuffer, ComplexSpectrogram, FeatureTensor, StftParams};
use crate::error::{Error, Result};
use crate::nn::{
    Activation, DenseLayerSpec, LayerSpec, Network, NetworkSpec, PaddingMode, ParameterSet, Real,
    RecurrentLayerSpec, Tensor,
};

/// Real mask `[frame][bin]`, shared by every input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTensor {
    values: Vec<f32>,
    frames: usize,
    bins: usize,
}

impl MaskTensor {
    pub fn new(values: Vec<f32>, frames: usize, bins: usize) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(Error::shape("mask", format!("{frames}x{bins}"), values.len()));
        }
        Ok(Self { values, frames, bins })
    }

    pub fn filled(frames: usize, bins: usize, v: f32) -> Self {
        Self {
            values: vec![v; frames * bins],
            frames,
            bins,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, t: usize, f: usize) -> f32 {
        self.values[t * self.bins + f]
    }
}

/// `M(t,f) * sum_c S(t,f,c)`, a one-channel spectrogram.
pub fn apply_mask(mask: &MaskTensor, noisy: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if mask.frames != noisy.frames() || mask.bins != noisy.bins() {
        return Err(Error::shape(
            "apply_mask",
            format!("{}x{}", noisy.frames(), noisy.bins()),
            format!("{}x{}", mask.frames, mask.bins),
        ));
    }
    let ch = noisy.channels();
    let values = noisy
        .values()
        .chunks_exact(ch)
        .zip(&mask.values)
        .map(|(s, &m)| s.iter().sum::<Complex64>() * m as f64)
        .collect();
    ComplexSpectrogram::from_values(
        values,
        noisy.frames(),
        1,
        noisy.params().clone(),
        noisy.original_length(),
        noisy.sample_rate(),
    )
}

/// Loss of the masked `noisy` against `clean` for a mask network, adding
/// the parameter gradients to `grads`. Generic so the whole chain can be
/// checked in 64-bit arithmetic.
#[allow(clippy::too_many_arguments)]
pub fn mask_loss_and_grads<F: Real>(
    network: &Network,
    params: &ParameterSet<F>,
    input: &Tensor<F>,
    noisy: &ComplexSpectrogram,
    clean: &ComplexSpectrogram,
    lambda: f64,
    power: f64,
    grads: &mut ParameterSet<F>,
) -> Result<f64> {
    let trace = network.forward_trace(params, input)?;
    let (frames, bins) = (trace.frames(), noisy.bins());
    if trace.output().len() != frames * bins || noisy.frames() != frames {
        return Err(Error::shape("mask head", format!("{frames}x{bins}"), trace.output().len()));
    }
    let ch = noisy.channels();
    let enhanced: Vec<Complex64> = noisy
        .values()
        .chunks_exact(ch)
        .zip(trace.output())
        .map(|(s, &m)| s.iter().sum::<Complex64>() * m.as_f64())
        .collect();
    let enhanced = ComplexSpectrogram::from_values(
        enhanced,
        frames,
        1,
        noisy.params().clone(),
        noisy.original_length(),
        noisy.sample_rate(),
    )?;
    let (l, g) = loss_and_input_grad(&enhanced, clean, lambda, power)?;
    let dmask: Vec<F> = noisy
        .values()
        .chunks_exact(ch)
        .zip(&g)
        .map(|(s, g)| F::of((s.iter().sum::<Complex64>().conj() * g).re))
        .collect();
    network.backward_into(params, &trace, &dmask, grads, false)?;
    Ok(l)
}

/// Inputs and target of one training clip, precomputed once.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    /// The channels the model sees.
    pub noisy: ComplexSpectrogram,
    /// Clean channel 0.
    pub clean: ComplexSpectrogram,
    /// Network input after the look-ahead shift.
    pub input: Tensor<f32>,
}

/// A model config bound to its network.
#[derive(Debug, Clone)]
pub struct EnhancementModel {
    config: ModelConfig,
    network: Network,
    stft: StftParams,
}

/// Builds the model and seeds its parameters.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<(EnhancementModel, ParameterSet<f32>)> {
    let model = EnhancementModel::new(config.clone())?;
    let params = model.network.init_params(seed);
    Ok((model, params))
}

impl EnhancementModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let stft = StftParams::default();
        let network = Network::new(Self::network_spec(&config, stft.num_bins())?)?;
        Ok(Self { config, network, stft })
    }

    /// Conv stack, then recurrent layers with bypass, then ReLU dense layers
    /// and a sigmoid head with one unit per bin.
    pub fn network_spec(config: &ModelConfig, bins: usize) -> Result<NetworkSpec> {
        config.validate()?;
        let padding = if config.causal { PaddingMode::Causal } else { PaddingMode::Centered };
        let mut layers: Vec<LayerSpec> = config.conv_config.layers(padding).into_iter().map(LayerSpec::Conv).collect();
        for _ in 0..config.blstm_depth {
            layers.push(LayerSpec::Recurrent(RecurrentLayerSpec {
                width: config.blstm_width,
                bidirectional: !config.causal,
                residual: true,
            }));
        }
        for _ in 0..config.fc_depth {
            layers.push(LayerSpec::Dense(DenseLayerSpec {
                width: config.fc_width,
                activation: Activation::Relu,
            }));
        }
        layers.push(LayerSpec::Dense(DenseLayerSpec {
            width: bins,
            activation: Activation::Sigmoid,
        }));
        Ok(NetworkSpec {
            bins,
            input_channels: config.feature_channels(),
            layers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn stft_params(&self) -> &StftParams {
        &self.stft
    }

    /// The first `input_channels` channels of `noisy`.
    pub fn model_channels(&self, noisy: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
        let want = self.config.input_channels;
        match noisy.channels() {
            n if n == want => Ok(noisy.clone()),
            n if n > want => Ok(noisy.select_channel(0)),
            n => Err(Error::InvalidInput(format!("model needs {want} input channels, got {n}"))),
        }
    }

    pub fn features(&self, noisy: &ComplexSpectrogram) -> Result<FeatureTensor> {
        input_features(&self.model_channels(noisy)?, self.config.compression_power, self.config.delta_phase)
    }

    /// Network input with frame `tau` holding feature frame
    /// `tau + look_ahead_frames` (zero outside the clip).
    pub fn network_input(&self, features: &FeatureTensor) -> Result<Tensor<f32>> {
        if features.channels() != self.config.feature_channels() || features.bins() != self.stft.num_bins() {
            return Err(Error::shape(
                "model features",
                format!("{} bins x {} channels", self.stft.num_bins(), self.config.feature_channels()),
                format!("{} bins x {} channels", features.bins(), features.channels()),
            ));
        }
        let frames = features.frames();
        let stride = features.bins() * features.channels();
        let k = self.config.look_ahead_frames as isize;
        let mut data = vec![0.0f32; frames * stride];
        for tau in 0..frames {
            let src = tau as isize + k;
            if src >= 0 && (src as usize) < frames {
                data[tau * stride..(tau + 1) * stride].copy_from_slice(features.frame(src as usize));
            }
        }
        Tensor::from_vec(&[frames, features.bins(), features.channels()], data)
    }

    pub fn forward_mask(&self, params: &ParameterSet<f32>, features: &FeatureTensor) -> Result<MaskTensor> {
        let input = self.network_input(features)?;
        let out = self.network.forward(params, &input)?;
        MaskTensor::new(out.into_data(), features.frames(), self.stft.num_bins())
    }

    pub fn enhance_spectrogram(
        &self,
        params: &ParameterSet<f32>,
        noisy: &ComplexSpectrogram,
    ) -> Result<ComplexSpectrogram> {
        let mask = self.forward_mask(params, &self.features(noisy)?)?;
        apply_mask(&mask, &self.model_channels(noisy)?)
    }

    /// Whole-clip offline enhancement.
    pub fn enhance(&self, params: &ParameterSet<f32>, noisy: &AudioBuffer) -> Result<AudioBuffer> {
        istft(&self.enhance_spectrogram(params, &stft(noisy, &self.stft)?)?)
    }

    pub fn prepare_example(&self, noisy: &AudioBuffer, clean: &AudioBuffer) -> Result<TrainingExample> {
        if noisy.len() != clean.len() {
            return Err(Error::InvalidInput("noisy and clean lengths differ".into()));
        }
        let noisy = self.model_channels(&stft(noisy, &self.stft)?)?;
        let clean = stft(&clean.select_channel(0), &self.stft)?;
        let input = self.network_input(&input_features(
            &noisy,
            self.config.compression_power,
            self.config.delta_phase,
        )?)?;
        Ok(TrainingExample { noisy, clean, input })
    }

    /// Loss of one clip; parameter gradients are added to `grads`.
    pub fn loss_and_grads(
        &self,
        params: &ParameterSet<f32>,
        ex: &TrainingExample,
        grads: &mut ParameterSet<f32>,
    ) -> Result<f64> {
        mask_loss_and_grads(
            &self.network,
            params,
            &ex.input,
            &ex.noisy,
            &ex.clean,
            self.config.lambda,
            self.config.compression_power,
            grads,
        )
    }

    /// Loss of one clip without gradients.
    pub fn clip_loss(&self, params: &ParameterSet<f32>, ex: &TrainingExample) -> Result<f64> {
        let out = self.network.forward(params, &ex.input)?;
        let frames = ex.input.shape()[0];
        let mask = MaskTensor::new(out.into_data(), frames, self.stft.num_bins())?;
        loss(&apply_mask(&mask, &ex.noisy)?, &ex.clean, self.config.lambda, self.config.compression_power)
    }
}
