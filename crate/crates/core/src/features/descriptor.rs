use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_runtime::{FeatureMap, ModelSpec};

/// Where one layer's pooled features sit inside a descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub layer_name: String,
    pub offset: usize,
    pub length: usize,
}

/// Builds contiguous segments from `(name, dim)` pairs.
pub fn layout_from_dims<'a>(dims: impl IntoIterator<Item = (&'a str, usize)>) -> Vec<Segment> {
    let mut offset = 0;
    dims.into_iter()
        .map(|(name, length)| {
            let seg = Segment {
                layer_name: name.to_string(),
                offset,
                length,
            };
            offset += length;
            seg
        })
        .collect()
}

pub fn layout_for_spec(spec: &ModelSpec) -> Vec<Segment> {
    layout_from_dims(spec.taps.iter().map(|t| (t.output_name.as_str(), t.channel_dim)))
}

pub fn layout_dim(layout: &[Segment]) -> usize {
    layout.last().map(|s| s.offset + s.length).unwrap_or(0)
}

pub(crate) fn check_layout(layout: &[Segment]) -> Result<()> {
    let mut expected = 0;
    for seg in layout {
        if seg.offset != expected || seg.length == 0 {
            return Err(Error::Shape(format!(
                "segment `{}` at offset {} (length {}) breaks the contiguous layout",
                seg.layer_name, seg.offset, seg.length
            )));
        }
        expected += seg.length;
    }
    Ok(())
}

/// Concatenated pooled descriptor of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub segments: Vec<Segment>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(image_id: impl Into<String>, segments: Vec<Segment>, values: Vec<f64>) -> Result<Self> {
        check_layout(&segments)?;
        if layout_dim(&segments) != values.len() {
            return Err(Error::Shape(format!(
                "segments cover {} values, vector has {}",
                layout_dim(&segments),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature vector has non-finite values".into()));
        }
        Ok(FeatureVector {
            image_id: image_id.into(),
            segments,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn segment(&self, layer_name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.layer_name == layer_name)
            .ok_or_else(|| Error::UnknownLayer(layer_name.to_string()))
    }
}

/// Global average pooling: the per-channel mean over all spatial positions.
pub fn gap(map: &FeatureMap) -> Result<Vec<f64>> {
    map.validate()?;
    let c = map.channels;
    let mut sums = vec![0.0f64; c];
    for pixel in map.values.chunks_exact(c) {
        for (s, v) in sums.iter_mut().zip(pixel) {
            *s += v;
        }
    }
    let area = (map.height * map.width) as f64;
    Ok(sums.into_iter().map(|s| s / area).collect())
}

/// Pools every tapped map and concatenates the results in tap order.
pub fn concatenate(image_id: &str, maps: &[FeatureMap], spec: &ModelSpec) -> Result<FeatureVector> {
    if maps.len() != spec.taps.len() {
        return Err(Error::Shape(format!(
            "{} feature maps for {} taps",
            maps.len(),
            spec.taps.len()
        )));
    }
    let mut values = Vec::with_capacity(spec.total_dim());
    for (map, tap) in maps.iter().zip(&spec.taps) {
        if map.layer_name != tap.output_name || map.channels != tap.channel_dim {
            return Err(Error::Shape(format!(
                "map `{}` ({} channels) does not match tap `{}` ({} channels)",
                map.layer_name, map.channels, tap.output_name, tap.channel_dim
            )));
        }
        values.extend(gap(map)?);
    }
    FeatureVector::new(image_id, layout_for_spec(spec), values)
}

/// One layer's values out of a concatenated descriptor.
pub fn slice_layer<'a>(v: &'a FeatureVector, layer_name: &str) -> Result<&'a [f64]> {
    let seg = v.segment(layer_name)?;
    Ok(&v.values[seg.offset..seg.offset + seg.length])
}
