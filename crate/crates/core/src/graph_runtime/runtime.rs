use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use tract_onnx::prelude::*;
use tract_onnx::pb::ModelProto;

use super::min_input::min_input_size;
use super::preprocess::InputTensor;
use super::spec::{ModelSpec, SizePolicy};
use crate::error::{Error, Result};

/// Activations of one tapped layer, row-major `(h, w, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub layer_name: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        layer_name: impl Into<String>,
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let map = FeatureMap {
            layer_name: layer_name.into(),
            height,
            width,
            channels,
            values,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Shape(format!(
                "feature map `{}` has an empty dimension ({}x{}x{})",
                self.layer_name, self.height, self.width, self.channels
            )));
        }
        if self.values.len() != self.height * self.width * self.channels {
            return Err(Error::Shape(format!(
                "feature map `{}` is {}x{}x{} but holds {} values",
                self.layer_name,
                self.height,
                self.width,
                self.channels,
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "feature map `{}` has a non-finite value at index {i}",
                self.layer_name
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize, c: usize) -> f64 {
        self.values[(h * self.width + w) * self.channels + c]
    }
}

type Plan = Arc<TypedRunnableModel>;

fn tract_err(context: &str) -> impl Fn(TractError) -> Error + '_ {
    move |e| Error::Inference(format!("{context}: {e:#}"))
}

/// A loaded graph with its taps selected. Optimised plans are built lazily,
/// one per input resolution, and reused.
pub struct ModelHandle {
    spec: ModelSpec,
    model: InferenceModel,
    plans: Mutex<HashMap<(usize, usize), Plan>>,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle")
            .field("model_name", &self.spec.model_name)
            .field("taps", &self.spec.taps.len())
            .finish()
    }
}

/// Loads the graph referenced by `spec` and checks every tap against it.
pub fn load_model(spec: &ModelSpec) -> Result<ModelHandle> {
    spec.validate()?;
    let bytes = std::fs::read(&spec.graph_path).map_err(|e| Error::io(&spec.graph_path, e))?;
    load_model_from_bytes(spec, &bytes)
}

pub fn load_model_from_bytes(spec: &ModelSpec, bytes: &[u8]) -> Result<ModelHandle> {
    spec.validate()?;
    let onnx = tract_onnx::onnx();
    let proto: ModelProto = onnx
        .proto_model_for_read(&mut &bytes[..])
        .map_err(tract_err("cannot parse graph"))?;
    let graph = proto
        .graph
        .as_ref()
        .ok_or_else(|| Error::Inference("graph file has no graph".into()))?;

    let mut tensors: std::collections::HashSet<&str> =
        graph.input.iter().map(|i| i.name.as_str()).collect();
    tensors.extend(graph.node.iter().flat_map(|n| n.output.iter().map(|o| o.as_str())));
    if let Some(missing) = spec.tap_names().find(|t| !tensors.contains(t)) {
        return Err(Error::UnknownTap(missing.to_string()));
    }

    let mut resolved = spec.clone();
    if resolved.input.min_size.is_none() {
        let taps: Vec<&str> = spec.tap_names().collect();
        resolved.input.min_size = Some(min_input_size(graph, &taps)?);
    }

    let model = onnx
        .model_for_proto_model(&proto)
        .map_err(tract_err("cannot load graph"))?
        .with_outputs_by_name(spec.tap_names())
        .map_err(tract_err("cannot select tap outputs"))?;

    let handle = ModelHandle {
        spec: resolved,
        model,
        plans: Mutex::new(HashMap::new()),
    };
    handle.check_channels()?;
    Ok(handle)
}

impl ModelHandle {
    /// The spec with `min_size` resolved from the graph when the sidecar
    /// leaves it out.
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn tap_count(&self) -> usize {
        self.spec.taps.len()
    }

    pub fn min_input_size(&self) -> [u32; 2] {
        self.spec.input.min_size.unwrap_or([1, 1])
    }

    fn probe_size(&self) -> (usize, usize) {
        let [h, w] = match self.spec.input.policy {
            SizePolicy::Fixed => self.spec.input.fixed_size.unwrap_or([1, 1]),
            SizePolicy::Native => self.min_input_size(),
        };
        (h as usize, w as usize)
    }

    fn check_channels(&self) -> Result<()> {
        let (h, w) = self.probe_size();
        let plan = self.plan(h, w)?;
        for (ix, tap) in self.spec.taps.iter().enumerate() {
            let fact = plan.model().output_fact(ix).map_err(tract_err("output fact"))?;
            let shape = fact.shape.as_concrete().ok_or_else(|| {
                Error::Inference(format!("tap `{}` has a symbolic shape", tap.output_name))
            })?;
            if shape.len() != 4 {
                return Err(Error::Shape(format!(
                    "tap `{}` has rank {}, expected NCHW",
                    tap.output_name,
                    shape.len()
                )));
            }
            if shape[1] != tap.channel_dim {
                return Err(Error::ChannelMismatch {
                    layer: tap.output_name.clone(),
                    expected: tap.channel_dim,
                    found: shape[1],
                });
            }
        }
        Ok(())
    }

    fn plan(&self, height: usize, width: usize) -> Result<Plan> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        if let Some(plan) = plans.get(&(height, width)) {
            return Ok(plan.clone());
        }
        let fact = InferenceFact::dt_shape(f32::datum_type(), tvec!(1, 3, height, width));
        let plan = self
            .model
            .clone()
            .with_input_fact(0, fact)
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| {
                Error::Shape(format!(
                    "graph cannot run on a {height}x{width} input: {e:#}"
                ))
            })?;
        plans.insert((height, width), plan.clone());
        Ok(plan)
    }

    /// Runs one forward pass and returns the tapped activations in spec order.
    pub fn forward_taps(&self, input: &InputTensor) -> Result<Vec<FeatureMap>> {
        if input.data.len() != 3 * input.height * input.width {
            return Err(Error::Shape("input tensor length does not match its shape".into()));
        }
        let plan = self.plan(input.height, input.width)?;
        let tensor: Tensor = tract_ndarray::Array4::from_shape_vec(
            (1, 3, input.height, input.width),
            input.data.clone(),
        )
        .map_err(|e| Error::Shape(e.to_string()))?
        .into();
        let outputs = plan
            .run(tvec!(tensor.into()))
            .map_err(tract_err("forward pass"))?;

        self.spec
            .taps
            .iter()
            .zip(outputs.iter())
            .map(|(tap, out)| {
                let view = out
                    .to_plain_array_view::<f32>()
                    .map_err(tract_err("tap output is not f32"))?;
                let shape = view.shape();
                if shape.len() != 4 || shape[0] != 1 {
                    return Err(Error::Shape(format!(
                        "tap `{}` has shape {shape:?}, expected [1, C, H, W]",
                        tap.output_name
                    )));
                }
                let (c, h, w) = (shape[1], shape[2], shape[3]);
                if c != tap.channel_dim {
                    return Err(Error::ChannelMismatch {
                        layer: tap.output_name.clone(),
                        expected: tap.channel_dim,
                        found: c,
                    });
                }
                // NCHW -> (h, w, c)
                let nhwc = view.permuted_axes(tract_ndarray::IxDyn(&[0, 2, 3, 1]));
                let values: Vec<f64> = nhwc.iter().map(|&v| v as f64).collect();
                FeatureMap::new(tap.output_name.clone(), h, w, c, values)
                    .map_err(|e| Error::Inference(e.to_string()))
            })
            .collect()
    }
}

pub fn load_model_from_sidecar(path: impl AsRef<Path>) -> Result<ModelHandle> {
    load_model(&ModelSpec::from_file(path)?)
}
