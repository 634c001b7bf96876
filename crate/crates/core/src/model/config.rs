use std::fmt::Write as _;
use std::path::Path;

use crate::dsp::DEFAULT_COMPRESSION_POWER;
use crate::error::{Error, Result};
use crate::nn::{conv_stack, PaddingMode, ConvLayerSpec, LARGE_CONV_ROWS, SMALL_CONV_ROWS};

/// `(filters, t_width, f_width, t_dilation, f_dilation)`
pub type ConvRow = (usize, usize, usize, usize, usize);

/// Convolution front end of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConvConfig {
    Small,
    Large,
    None,
    /// Explicit rows, for models small enough to train on a laptop.
    Custom(Vec<ConvRow>),
}

impl ConvConfig {
    pub fn rows(&self) -> Vec<ConvRow> {
        match self {
            ConvConfig::Small => SMALL_CONV_ROWS.to_vec(),
            ConvConfig::Large => LARGE_CONV_ROWS.to_vec(),
            ConvConfig::None => Vec::new(),
            ConvConfig::Custom(rows) => rows.clone(),
        }
    }

    pub fn layers(&self, padding: PaddingMode) -> Vec<ConvLayerSpec> {
        conv_stack(&self.rows(), padding)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConvConfig::Small => "small",
            ConvConfig::Large => "large",
            ConvConfig::None => "none",
            ConvConfig::Custom(_) => "custom",
        }
    }
}

/// Parses `FxTWxFWxTDxFD` rows separated by commas.
pub fn parse_conv_rows(s: &str) -> Result<Vec<ConvRow>> {
    s.split(',')
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| {
            let v: Vec<usize> = r
                .split('x')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(vec![format!("conv_layers: bad row {r:?}")]))?;
            match v[..] {
                [a, b, c, d, e] => Ok((a, b, c, d, e)),
                _ => Err(Error::Config(vec![format!(
                    "conv_layers: row {r:?} needs 5 fields FxTWxFWxTDxFD"
                )])),
            }
        })
        .collect()
}

fn format_conv_rows(rows: &[ConvRow]) -> String {
    rows.iter()
        .map(|(a, b, c, d, e)| format!("{a}x{b}x{c}x{d}x{e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Hyperparameters of one enhancement model. Defaults are the best model of
/// the published search.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub conv_config: ConvConfig,
    pub blstm_depth: usize,
    /// Units per direction.
    pub blstm_width: usize,
    pub fc_depth: usize,
    pub fc_width: usize,
    pub delta_phase: bool,
    pub lambda: f64,
    pub learning_rate: f64,
    pub input_channels: usize,
    pub causal: bool,
    /// Future feature frames visible when emitting a mask frame; negative
    /// values predict masks ahead of the input.
    pub look_ahead_frames: i32,
    pub compression_power: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_config: ConvConfig::Small,
            blstm_depth: 3,
            blstm_width: 1023,
            fc_depth: 2,
            fc_width: 873,
            delta_phase: true,
            lambda: 0.113,
            learning_rate: 2.1e-4,
            input_channels: 2,
            causal: false,
            look_ahead_frames: 0,
            compression_power: DEFAULT_COMPRESSION_POWER,
        }
    }
}

pub const CONFIG_KEYS: [&str; 13] = [
    "conv_config",
    "conv_layers",
    "blstm_depth",
    "blstm_width",
    "fc_depth",
    "fc_width",
    "delta_phase",
    "lambda",
    "learning_rate",
    "input_channels",
    "causal",
    "look_ahead_frames",
    "compression_power",
];

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "yes" | "true" | "1" | "on" => Some(true),
        "no" | "false" | "0" | "off" => Some(false),
        _ => None,
    }
}

/// `key = value` pairs of a flat config file; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => out.push((k.trim().to_string(), v.trim().to_string())),
            _ => errors.push(format!("line {}: expected key = value", n + 1)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Config(errors))
    }
}

impl ModelConfig {
    /// Number of feature maps entering the network.
    pub fn feature_channels(&self) -> usize {
        self.input_channels * if self.delta_phase { 2 } else { 1 }
    }

    /// Every violated constraint, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let mut range = |name: &str, v: usize, lo: usize, hi: usize| {
            if !(lo..=hi).contains(&v) {
                e.push(format!("{name} = {v} outside {lo}..={hi}"));
            }
        };
        range("blstm_depth", self.blstm_depth, 0, 5);
        range("blstm_width", self.blstm_width, 8, 1024);
        range("fc_depth", self.fc_depth, 0, 5);
        range("fc_width", self.fc_width, 8, 1024);
        range("input_channels", self.input_channels, 1, 2);
        if !(0.0..=1.0).contains(&self.lambda) {
            e.push(format!("lambda = {} outside [0, 1]", self.lambda));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            e.push(format!("learning_rate = {} must be finite and >= 0", self.learning_rate));
        }
        if !(self.compression_power > 0.0 && self.compression_power <= 1.0) {
            e.push(format!("compression_power = {} outside (0, 1]", self.compression_power));
        }
        if !self.causal && self.look_ahead_frames != 0 {
            e.push("look_ahead_frames must be 0 for a non-causal model".to_string());
        }
        if let ConvConfig::Custom(rows) = &self.conv_config {
            if rows.is_empty() {
                e.push("conv_layers is empty; use conv_config = none".to_string());
            }
            for (i, r) in rows.iter().enumerate() {
                if [r.0, r.1, r.2, r.3, r.4].contains(&0) {
                    e.push(format!("conv_layers row {i}: every field must be >= 1"));
                }
            }
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    /// Parses a config file body. Missing keys keep their defaults; unknown
    /// keys and bad values are all reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let mut errors = Vec::new();
        let mut conv_name: Option<String> = None;
        let mut conv_rows: Option<String> = None;
        for (k, v) in parse_key_values(text)? {
            let bad = |errors: &mut Vec<String>| errors.push(format!("{k}: bad value {v:?}"));
            macro_rules! num {
                ($field:expr) => {
                    match v.parse() {
                        Ok(x) => $field = x,
                        Err(_) => bad(&mut errors),
                    }
                };
            }
            macro_rules! flag {
                ($field:expr) => {
                    match parse_bool(&v) {
                        Some(x) => $field = x,
                        None => bad(&mut errors),
                    }
                };
            }
            match k.as_str() {
                "conv_config" => conv_name = Some(v.clone()),
                "conv_layers" => conv_rows = Some(v.clone()),
                "blstm_depth" => num!(cfg.blstm_depth),
                "blstm_width" => num!(cfg.blstm_width),
                "fc_depth" => num!(cfg.fc_depth),
                "fc_width" => num!(cfg.fc_width),
                "delta_phase" => flag!(cfg.delta_phase),
                "lambda" => num!(cfg.lambda),
                "learning_rate" => num!(cfg.learning_rate),
                "input_channels" => num!(cfg.input_channels),
                "causal" => flag!(cfg.causal),
                "look_ahead_frames" => num!(cfg.look_ahead_frames),
                "compression_power" => num!(cfg.compression_power),
                _ => errors.push(format!("unknown key {k:?}")),
            }
        }
        match (conv_name.as_deref(), conv_rows) {
            (Some("custom"), Some(rows)) => match parse_conv_rows(&rows) {
                Ok(r) => cfg.conv_config = ConvConfig::Custom(r),
                Err(Error::Config(m)) => errors.extend(m),
                Err(other) => errors.push(other.to_string()),
            },
            (Some("custom"), None) => errors.push("conv_config = custom needs conv_layers".into()),
            (_, Some(_)) => errors.push("conv_layers is only allowed with conv_config = custom".into()),
            (Some("small") | None, None) => cfg.conv_config = ConvConfig::Small,
            (Some("large"), None) => cfg.conv_config = ConvConfig::Large,
            (Some("none"), None) => cfg.conv_config = ConvConfig::None,
            (Some(other), None) => errors.push(format!("conv_config: unknown value {other:?}")),
        }
        if let Err(Error::Config(m)) = cfg.validate() {
            errors.extend(m);
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Canonical text form; `parse(to_text())` returns an equal config.
    pub fn to_text(&self) -> String {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let mut s = String::new();
        let _ = writeln!(s, "conv_config = {}", self.conv_config.name());
        if let ConvConfig::Custom(rows) = &self.conv_config {
            let _ = writeln!(s, "conv_layers = {}", format_conv_rows(rows));
        }
        let _ = writeln!(s, "blstm_depth = {}", self.blstm_depth);
        let _ = writeln!(s, "blstm_width = {}", self.blstm_width);
        let _ = writeln!(s, "fc_depth = {}", self.fc_depth);
        let _ = writeln!(s, "fc_width = {}", self.fc_width);
        let _ = writeln!(s, "delta_phase = {}", yn(self.delta_phase));
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "input_channels = {}", self.input_channels);
        let _ = writeln!(s, "causal = {}", yn(self.causal));
        let _ = writeln!(s, "look_ahead_frames = {}", self.look_ahead_frames);
        let _ = writeln!(s, "compression_power = {}", self.compression_power);
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
