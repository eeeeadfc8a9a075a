//! Smallest spatial input a graph accepts, derived from its window/stride chain.
//!
//! Walks the graph backwards from the tapped tensors. Every tensor carries the
//! smallest `(height, width)` it must have for all tapped outputs downstream
//! of it to be at least 1×1. Windowed ops (Conv, pooling) translate an output
//! requirement into an input requirement; every other op passes requirements
//! through unchanged.

use std::collections::{HashMap, HashSet};

use tract_onnx::pb::{AttributeProto, GraphProto, NodeProto};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    kernel: i64,
    stride: i64,
    dilation: i64,
    pad_begin: i64,
    pad_end: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Padding {
    Explicit { ceil: bool },
    Same,
    Valid,
}

fn attr<'a>(node: &'a NodeProto, name: &str) -> Option<&'a AttributeProto> {
    node.attribute.iter().find(|a| a.name == name)
}

fn ints(node: &NodeProto, name: &str) -> Option<Vec<i64>> {
    attr(node, name).map(|a| a.ints.clone())
}

/// Input size needed along one axis so that the op yields `out` samples.
fn required_input(out: i64, w: Window, padding: Padding) -> i64 {
    let eff_kernel = w.dilation * (w.kernel - 1) + 1;
    let pads = w.pad_begin + w.pad_end;
    let need = match padding {
        Padding::Same => (out - 1) * w.stride + 1,
        Padding::Valid => (out - 1) * w.stride + eff_kernel,
        Padding::Explicit { ceil: false } => (out - 1) * w.stride + eff_kernel - pads,
        Padding::Explicit { ceil: true } => {
            // ceil((in + pads - k) / s) + 1 >= out, with in + pads >= k
            let base = eff_kernel - pads;
            if out <= 1 {
                base
            } else {
                base.max((out - 2) * w.stride + eff_kernel - pads + 1)
            }
        }
    };
    need.max(1)
}

fn window_of(
    node: &NodeProto,
    initializer_dims: &HashMap<&str, &[i64]>,
) -> Result<Option<([Window; 2], Padding)>> {
    let kernel = match ints(node, "kernel_shape") {
        Some(k) => k,
        None if node.op_type == "Conv" => node
            .input
            .get(1)
            .and_then(|w| initializer_dims.get(w.as_str()))
            .map(|dims| dims.iter().skip(2).copied().collect())
            .ok_or_else(|| {
                Error::InvalidSpec(format!(
                    "cannot determine kernel shape of Conv node `{}`",
                    node.name
                ))
            })?,
        None => return Ok(None),
    };
    if kernel.len() != 2 {
        return Ok(None);
    }
    let strides = ints(node, "strides").unwrap_or_else(|| vec![1, 1]);
    let dilations = ints(node, "dilations").unwrap_or_else(|| vec![1, 1]);
    let pads = ints(node, "pads").unwrap_or_else(|| vec![0; 4]);
    let ceil = attr(node, "ceil_mode").map(|a| a.i != 0).unwrap_or(false);
    let padding = match attr(node, "auto_pad").map(|a| String::from_utf8_lossy(&a.s).into_owned()) {
        Some(p) if p.starts_with("SAME") => Padding::Same,
        Some(p) if p == "VALID" => Padding::Valid,
        _ => Padding::Explicit { ceil },
    };
    let axis = |i: usize| Window {
        kernel: kernel[i],
        stride: strides.get(i).copied().unwrap_or(1),
        dilation: dilations.get(i).copied().unwrap_or(1),
        pad_begin: pads.get(i).copied().unwrap_or(0),
        pad_end: pads.get(i + 2).copied().unwrap_or(0),
    };
    Ok(Some(([axis(0), axis(1)], padding)))
}

/// Smallest `[height, width]` for the graph input such that every tensor in
/// `taps` has a non-empty spatial extent.
pub fn min_input_size(graph: &GraphProto, taps: &[&str]) -> Result<[u32; 2]> {
    let initializers: HashSet<&str> = graph.initializer.iter().map(|t| t.name.as_str()).collect();
    let initializer_dims: HashMap<&str, &[i64]> = graph
        .initializer
        .iter()
        .map(|t| (t.name.as_str(), t.dims.as_slice()))
        .collect();
    let input = graph
        .input
        .iter()
        .map(|i| i.name.as_str())
        .find(|n| !initializers.contains(n))
        .ok_or_else(|| Error::InvalidSpec("graph has no data input".into()))?;

    let mut need: HashMap<&str, [i64; 2]> = HashMap::new();
    for tap in taps {
        need.insert(tap, [1, 1]);
    }

    // ONNX requires nodes in topological order
    for node in graph.node.iter().rev() {
        let Some(out_need) = node
            .output
            .iter()
            .filter_map(|o| need.get(o.as_str()))
            .copied()
            .reduce(|a, b| [a[0].max(b[0]), a[1].max(b[1])])
        else {
            continue;
        };
        let (in_need, data_inputs): ([i64; 2], Vec<&str>) = match node.op_type.as_str() {
            "Conv" | "MaxPool" | "AveragePool" | "LpPool" => {
                let data = node.input.first().map(|s| s.as_str()).into_iter().collect();
                match window_of(node, &initializer_dims)? {
                    Some((axes, padding)) => (
                        [
                            required_input(out_need[0], axes[0], padding),
                            required_input(out_need[1], axes[1], padding),
                        ],
                        data,
                    ),
                    None => (out_need, data),
                }
            }
            "GlobalAveragePool" | "GlobalMaxPool" | "GlobalLpPool" => (
                [1, 1],
                node.input.first().map(|s| s.as_str()).into_iter().collect(),
            ),
            _ => (
                out_need,
                node.input
                    .iter()
                    .map(|s| s.as_str())
                    .filter(|s| !s.is_empty() && !initializers.contains(s))
                    .collect(),
            ),
        };
        for name in data_inputs {
            let entry = need.entry(name).or_insert([1, 1]);
            entry[0] = entry[0].max(in_need[0]);
            entry[1] = entry[1].max(in_need[1]);
        }
    }

    let [h, w] = need.get(input).copied().unwrap_or([1, 1]);
    Ok([h as u32, w as u32])
}
