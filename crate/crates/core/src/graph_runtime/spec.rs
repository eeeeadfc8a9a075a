//! Model spec sidecar: describes an exported inference graph, how to feed it
//! and which internal tensors to tap.
//!
//! The sidecar is a TOML file:
//!
//! ```toml
//! model_name = "inception_v3"
//! graph_path = "inception_v3.onnx"   # relative to the sidecar's directory
//! concat_dim = 10048                  # optional, checked against the taps
//!
//! [input]
//! channel_order = "rgb"               # or "bgr"
//! policy = "native"                   # or "fixed"
//! # fixed_size = [299, 299]           # [height, width], required for "fixed"
//! # min_size = [75, 75]               # optional; derived from the graph otherwise
//!
//! [preprocessing]
//! pixel_range = [0.0, 1.0]
//! mean = [0.485, 0.456, 0.406]
//! scale = [0.229, 0.224, 0.225]
//!
//! [[taps]]
//! output_name = "mixed0"
//! channel_dim = 256
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SizePolicy {
    /// Keep the image's own resolution.
    #[default]
    Native,
    /// Resize every image to `fixed_size`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLayout {
    #[serde(default)]
    pub channel_order: ChannelOrder,
    #[serde(default)]
    pub policy: SizePolicy,
    /// `[height, width]` used by the fixed policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_size: Option<[u32; 2]>,
    /// Smallest `[height, width]` the graph accepts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_size: Option<[u32; 2]>,
}

impl Default for InputLayout {
    fn default() -> Self {
        InputLayout {
            channel_order: ChannelOrder::Rgb,
            policy: SizePolicy::Native,
            fixed_size: None,
            min_size: None,
        }
    }
}

/// Pixel normalisation: bytes are mapped linearly onto `pixel_range`, then
/// `(v - mean[c]) / scale[c]` is applied per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub pixel_range: [f32; 2],
    pub mean: [f32; 3],
    pub scale: [f32; 3],
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            pixel_range: [0.0, 1.0],
            mean: [0.0; 3],
            scale: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tap {
    pub output_name: String,
    pub channel_dim: usize,
}

impl Tap {
    pub fn new(output_name: impl Into<String>, channel_dim: usize) -> Self {
        Tap {
            output_name: output_name.into(),
            channel_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_name: String,
    pub graph_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concat_dim: Option<usize>,
    #[serde(default)]
    pub input: InputLayout,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    /// Shallow to deep.
    pub taps: Vec<Tap>,
}

pub const GOOGLENET_TAPS: [(&str, usize); 9] = [
    ("inception_3a-output", 256),
    ("inception_3b-output", 480),
    ("inception_4a-output", 512),
    ("inception_4b-output", 512),
    ("inception_4c-output", 512),
    ("inception_4d-output", 528),
    ("inception_4e-output", 832),
    ("inception_5a-output", 832),
    ("inception_5b-output", 1024),
];

pub const INCEPTION_V3_TAPS: [(&str, usize); 11] = [
    ("mixed0", 256),
    ("mixed1", 288),
    ("mixed2", 288),
    ("mixed3", 768),
    ("mixed4", 768),
    ("mixed5", 768),
    ("mixed6", 768),
    ("mixed7", 768),
    ("mixed8", 1280),
    ("mixed9", 2048),
    ("mixed10", 2048),
];

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

impl ModelSpec {
    /// Stock GoogLeNet layout: nine Inception blocks, 5488 features in total.
    pub fn stock_googlenet(graph_path: impl Into<PathBuf>) -> Self {
        Self::stock("googlenet", graph_path.into(), &GOOGLENET_TAPS)
    }

    /// Stock Inception-V3 layout: eleven Inception blocks, 10048 features in total.
    pub fn stock_inception_v3(graph_path: impl Into<PathBuf>) -> Self {
        Self::stock("inception_v3", graph_path.into(), &INCEPTION_V3_TAPS)
    }

    fn stock(name: &str, graph_path: PathBuf, taps: &[(&str, usize)]) -> Self {
        let taps: Vec<Tap> = taps.iter().map(|&(n, c)| Tap::new(n, c)).collect();
        ModelSpec {
            model_name: name.to_string(),
            graph_path,
            concat_dim: Some(taps.iter().map(|t| t.channel_dim).sum()),
            input: InputLayout::default(),
            preprocessing: Preprocessing {
                pixel_range: [0.0, 1.0],
                mean: IMAGENET_MEAN,
                scale: IMAGENET_STD,
            },
            taps,
        }
    }

    /// Reads a sidecar; a relative `graph_path` is resolved against the
    /// sidecar's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml_str(&text)?;
        if spec.graph_path.is_relative() {
            if let Some(dir) = path.parent() {
                spec.graph_path = dir.join(&spec.graph_path);
            }
        }
        Ok(spec)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::InvalidSpec("tap list is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for tap in &self.taps {
            if tap.channel_dim == 0 {
                return Err(Error::InvalidSpec(format!(
                    "tap `{}` has zero channels",
                    tap.output_name
                )));
            }
            if !seen.insert(tap.output_name.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "tap `{}` listed twice",
                    tap.output_name
                )));
            }
        }
        if let Some(declared) = self.concat_dim {
            if declared != self.total_dim() {
                return Err(Error::InvalidSpec(format!(
                    "concat_dim = {declared} but taps sum to {}",
                    self.total_dim()
                )));
            }
        }
        let p = &self.preprocessing;
        if !(p.pixel_range[0].is_finite() && p.pixel_range[1].is_finite())
            || p.pixel_range[0] >= p.pixel_range[1]
        {
            return Err(Error::InvalidSpec("pixel_range must be increasing".into()));
        }
        if p.scale.iter().any(|s| !s.is_finite() || *s == 0.0) || p.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidSpec(
                "preprocessing mean/scale must be finite, scale non-zero".into(),
            ));
        }
        match (self.input.policy, self.input.fixed_size) {
            (SizePolicy::Fixed, None) => {
                return Err(Error::InvalidSpec("fixed policy needs fixed_size".into()))
            }
            (_, Some([h, w])) if h == 0 || w == 0 => {
                return Err(Error::InvalidSpec("fixed_size must be positive".into()))
            }
            _ => {}
        }
        if let Some([h, w]) = self.input.min_size {
            if h == 0 || w == 0 {
                return Err(Error::InvalidSpec("min_size must be positive".into()));
            }
        }
        Ok(())
    }

    /// Length of the concatenated descriptor.
    pub fn total_dim(&self) -> usize {
        self.taps.iter().map(|t| t.channel_dim).sum()
    }

    pub fn tap_names(&self) -> impl Iterator<Item = &str> {
        self.taps.iter().map(|t| t.output_name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_dims() {
        let g = ModelSpec::stock_googlenet("g.onnx");
        assert_eq!(g.taps.len(), 9);
        assert_eq!(g.total_dim(), 5488);
        let v3 = ModelSpec::stock_inception_v3("v3.onnx");
        assert_eq!(v3.taps.len(), 11);
        assert_eq!(v3.total_dim(), 10048);
        assert_eq!(
            v3.taps.iter().map(|t| t.channel_dim).collect::<Vec<_>>(),
            vec![256, 288, 288, 768, 768, 768, 768, 768, 1280, 2048, 2048]
        );
    }

    #[test]
    fn toml_round_trip() {
        let spec = ModelSpec::stock_inception_v3("v3.onnx");
        let text = spec.to_toml_string().unwrap();
        assert_eq!(ModelSpec::from_toml_str(&text).unwrap(), spec);
    }

    #[test]
    fn empty_taps_rejected() {
        let mut spec = ModelSpec::stock_googlenet("g.onnx");
        spec.taps.clear();
        spec.concat_dim = None;
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn declared_dim_must_match() {
        let text = r#"
model_name = "m"
graph_path = "m.onnx"
concat_dim = 10

[[taps]]
output_name = "a"
channel_dim = 4
"#;
        assert!(ModelSpec::from_toml_str(text).is_err());
    }

    #[test]
    fn minimal_sidecar_defaults() {
        let text = r#"
model_name = "m"
graph_path = "m.onnx"

[[taps]]
output_name = "a"
channel_dim = 4
"#;
        let spec = ModelSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.input.policy, SizePolicy::Native);
        assert_eq!(spec.preprocessing, Preprocessing::default());
    }
}
