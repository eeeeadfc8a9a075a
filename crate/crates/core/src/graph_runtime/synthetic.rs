//! Small randomly initialised ONNX graphs with Inception-style tap layouts.
//!
//! They reproduce the tap names, channel dimensions and the window/stride
//! chain of the stock networks while keeping internal widths tiny, so the
//! whole extraction pipeline can be exercised without the exported
//! pretrained weights.

use prost::Message;
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tract_onnx::pb::attribute_proto::AttributeType;
use tract_onnx::pb::tensor_shape_proto::{dimension, Dimension};
use tract_onnx::pb::{
    type_proto, AttributeProto, GraphProto, ModelProto, NodeProto, OperatorSetIdProto,
    TensorProto, TensorShapeProto, TypeProto, ValueInfoProto,
};

use super::spec::{ModelSpec, Tap, GOOGLENET_TAPS, INCEPTION_V3_TAPS};

pub const INPUT_NAME: &str = "image";

struct Tensor4 {
    name: String,
    channels: usize,
}

struct GraphBuilder {
    nodes: Vec<NodeProto>,
    initializers: Vec<TensorProto>,
    counter: usize,
    rng: ChaCha8Rng,
}

fn int_attr(name: &str, v: i64) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Int as i32,
        i: v,
        ..Default::default()
    }
}

fn ints_attr(name: &str, v: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Ints as i32,
        ints: v.to_vec(),
        ..Default::default()
    }
}

fn value_info(name: &str, dims: Option<Vec<Dimension>>) -> ValueInfoProto {
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: 1,
                shape: dims.map(|dim| TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

impl GraphBuilder {
    fn new(seed: u64) -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            initializers: Vec::new(),
            counter: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{prefix}_{}", self.counter)
    }

    fn uniform(&mut self, bound: f32) -> f32 {
        let u = (self.rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32;
        (2.0 * u - 1.0) * bound
    }

    fn initializer(&mut self, prefix: &str, dims: Vec<i64>, bound: f32) -> String {
        let name = self.fresh(prefix);
        let len: i64 = dims.iter().product();
        let float_data = (0..len).map(|_| self.uniform(bound)).collect();
        self.initializers.push(TensorProto {
            name: name.clone(),
            dims,
            data_type: 1,
            float_data,
            ..Default::default()
        });
        name
    }

    fn node(&mut self, op: &str, inputs: Vec<String>, output: String, attrs: Vec<AttributeProto>) {
        let name = self.fresh(&op.to_lowercase());
        self.nodes.push(NodeProto {
            input: inputs,
            output: vec![output],
            name,
            op_type: op.into(),
            attribute: attrs,
            ..Default::default()
        });
    }

    fn conv(&mut self, x: &Tensor4, out: usize, kernel: i64, stride: i64, pad: i64) -> Tensor4 {
        let fan_in = (x.channels as i64 * kernel * kernel) as f32;
        let bound = (3.0 / fan_in).sqrt();
        let w = self.initializer("w", vec![out as i64, x.channels as i64, kernel, kernel], bound);
        let b = self.initializer("b", vec![out as i64], 0.1);
        let conv_out = self.fresh("conv");
        self.node(
            "Conv",
            vec![x.name.clone(), w, b],
            conv_out.clone(),
            vec![
                ints_attr("kernel_shape", &[kernel, kernel]),
                ints_attr("strides", &[stride, stride]),
                ints_attr("pads", &[pad, pad, pad, pad]),
            ],
        );
        let relu_out = self.fresh("relu");
        self.node("Relu", vec![conv_out], relu_out.clone(), vec![]);
        Tensor4 {
            name: relu_out,
            channels: out,
        }
    }

    fn max_pool(&mut self, x: &Tensor4, kernel: i64, stride: i64, ceil: bool) -> Tensor4 {
        let name = self.fresh("pool");
        self.node(
            "MaxPool",
            vec![x.name.clone()],
            name.clone(),
            vec![
                ints_attr("kernel_shape", &[kernel, kernel]),
                ints_attr("strides", &[stride, stride]),
                int_attr("ceil_mode", ceil as i64),
            ],
        );
        Tensor4 {
            name,
            channels: x.channels,
        }
    }

    /// Two-branch block concatenated into a tensor called `name`. With
    /// `reduce`, both branches downsample by a 3×3 stride-2 window.
    fn block(&mut self, x: &Tensor4, name: &str, channels: usize, reduce: bool) -> Tensor4 {
        let a = channels / 2;
        let b = channels - a;
        let (left, right) = if reduce {
            let left = self.conv(x, a, 3, 2, 0);
            let pooled = self.max_pool(x, 3, 2, false);
            (left, self.conv(&pooled, b, 1, 1, 0))
        } else {
            (self.conv(x, a, 1, 1, 0), self.conv(x, b, 3, 1, 1))
        };
        self.nodes.push(NodeProto {
            input: vec![left.name, right.name],
            output: vec![name.to_string()],
            name: format!("{name}_concat"),
            op_type: "Concat".into(),
            attribute: vec![int_attr("axis", 1)],
            ..Default::default()
        });
        Tensor4 {
            name: name.to_string(),
            channels,
        }
    }

    fn finish(self, outputs: &[String]) -> Vec<u8> {
        let dyn_dim = |p: &str| Dimension {
            value: Some(dimension::Value::DimParam(p.into())),
            ..Default::default()
        };
        let fixed_dim = |v: i64| Dimension {
            value: Some(dimension::Value::DimValue(v)),
            ..Default::default()
        };
        let graph = GraphProto {
            node: self.nodes,
            name: "synthetic".into(),
            initializer: self.initializers,
            input: vec![value_info(
                INPUT_NAME,
                Some(vec![fixed_dim(1), fixed_dim(3), dyn_dim("height"), dyn_dim("width")]),
            )],
            output: outputs.iter().map(|o| value_info(o, None)).collect(),
            ..Default::default()
        };
        let model = ModelProto {
            ir_version: 8,
            opset_import: vec![OperatorSetIdProto {
                domain: String::new(),
                version: 13,
            }],
            producer_name: "nriqa-synthetic".into(),
            graph: Some(graph),
            ..Default::default()
        };
        model.encode_to_vec()
    }
}

/// Graph bytes plus a matching spec (identity preprocessing, native size).
#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub bytes: Vec<u8>,
    pub spec: ModelSpec,
}

impl SyntheticGraph {
    /// Writes `<dir>/<model_name>.onnx` and `<dir>/<model_name>.toml`;
    /// returns the sidecar path.
    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<std::path::PathBuf> {
        let graph_file = format!("{}.onnx", self.spec.model_name);
        std::fs::write(dir.join(&graph_file), &self.bytes)?;
        let mut spec = self.spec.clone();
        spec.graph_path = graph_file.into();
        let sidecar = dir.join(format!("{}.toml", self.spec.model_name));
        let text = spec
            .to_toml_string()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        std::fs::write(&sidecar, text)?;
        Ok(sidecar)
    }
}

fn spec_for(name: &str, taps: &[(&str, usize)]) -> ModelSpec {
    let taps: Vec<Tap> = taps.iter().map(|&(n, c)| Tap::new(n, c)).collect();
    ModelSpec {
        model_name: name.into(),
        graph_path: format!("{name}.onnx").into(),
        concat_dim: Some(taps.iter().map(|t| t.channel_dim).sum()),
        input: Default::default(),
        preprocessing: Default::default(),
        taps,
    }
}

/// Inception-V3 layout: eleven taps `mixed0`..`mixed10` (Σ 10048) behind the
/// stock stem, grid reductions inside `mixed3` and `mixed8`. Smallest valid
/// input is 75×75.
pub fn inception_v3_like(seed: u64) -> SyntheticGraph {
    let mut g = GraphBuilder::new(seed);
    let trunk_width = 8;
    let x = Tensor4 {
        name: INPUT_NAME.into(),
        channels: 3,
    };
    let x = g.conv(&x, 8, 3, 2, 0);
    let x = g.conv(&x, 8, 3, 1, 0);
    let x = g.conv(&x, 8, 3, 1, 1);
    let x = g.max_pool(&x, 3, 2, false);
    let x = g.conv(&x, 8, 1, 1, 0);
    let x = g.conv(&x, 16, 3, 1, 0);
    let mut x = g.max_pool(&x, 3, 2, false);
    let mut outputs = Vec::new();
    for &(name, channels) in INCEPTION_V3_TAPS.iter() {
        let reduce = matches!(name, "mixed3" | "mixed8");
        let tap = g.block(&x, name, channels, reduce);
        outputs.push(tap.name.clone());
        x = g.conv(&tap, trunk_width, 1, 1, 0);
    }
    SyntheticGraph {
        bytes: g.finish(&outputs),
        spec: spec_for("inception_v3_like", &INCEPTION_V3_TAPS),
    }
}

/// GoogLeNet layout: nine taps `inception_3a-output`..`inception_5b-output`
/// (Σ 5488) behind the stock stem with ceil-mode pooling between stages.
pub fn googlenet_like(seed: u64) -> SyntheticGraph {
    let mut g = GraphBuilder::new(seed);
    let trunk_width = 8;
    let x = Tensor4 {
        name: INPUT_NAME.into(),
        channels: 3,
    };
    let x = g.conv(&x, 8, 7, 2, 3);
    let x = g.max_pool(&x, 3, 2, true);
    let x = g.conv(&x, 8, 1, 1, 0);
    let x = g.conv(&x, 16, 3, 1, 1);
    let mut x = g.max_pool(&x, 3, 2, true);
    let mut outputs = Vec::new();
    for &(name, channels) in GOOGLENET_TAPS.iter() {
        let tap = g.block(&x, name, channels, false);
        outputs.push(tap.name.clone());
        x = g.conv(&tap, trunk_width, 1, 1, 0);
        match name {
            "inception_3b-output" => x = g.max_pool(&x, 3, 2, true),
            "inception_4e-output" => x = g.max_pool(&x, 2, 2, true),
            _ => {}
        }
    }
    SyntheticGraph {
        bytes: g.finish(&outputs),
        spec: spec_for("googlenet_like", &GOOGLENET_TAPS),
    }
}

/// A small net with arbitrary taps; each tap after the first halves the
/// spatial resolution (2×2 max pooling).
pub fn tiny(taps: &[(&str, usize)], seed: u64) -> SyntheticGraph {
    let mut g = GraphBuilder::new(seed);
    let x = Tensor4 {
        name: INPUT_NAME.into(),
        channels: 3,
    };
    let mut x = g.conv(&x, 4, 3, 1, 1);
    let mut outputs = Vec::new();
    for (i, &(name, channels)) in taps.iter().enumerate() {
        if i > 0 {
            x = g.max_pool(&x, 2, 2, false);
        }
        let tap = g.block(&x, name, channels, false);
        outputs.push(tap.name.clone());
        x = g.conv(&tap, 4, 1, 1, 0);
    }
    SyntheticGraph {
        bytes: g.finish(&outputs),
        spec: spec_for("tiny", taps),
    }
}
