//! Shipped model graph definitions and the named precision policies.
//!
//! `alexnet` carries the classic 227x227 geometry with two-group conv2/4/5;
//! `vgg9` is the 6-conv/3-fc CIFAR architecture; `mnist-small` is the
//! desk-scale 3-conv/2-fc network the training pipeline uses. Spatial input
//! dims are recorded per layer, so pooling between layers is implicit in
//! the recorded sizes.

use crate::analyzer::{Layer, LayerKind, ModelGraph, Policy};
use crate::error::{Result, TacError};

fn conv(
    name: &str,
    in_c: u64,
    out_c: u64,
    k: u64,
    stride: u64,
    pad: u64,
    groups: u64,
    input: u64,
) -> Layer {
    Layer {
        name: name.into(),
        kind: LayerKind::Conv {
            in_channels: in_c,
            out_channels: out_c,
            kernel_h: k,
            kernel_w: k,
            stride,
            padding: pad,
            groups,
            input_h: input,
            input_w: input,
        },
        policy: Policy::Full,
    }
}

fn fc(name: &str, in_f: u64, out_f: u64) -> Layer {
    Layer {
        name: name.into(),
        kind: LayerKind::Fc {
            in_features: in_f,
            out_features: out_f,
        },
        policy: Policy::Full,
    }
}

/// Eight-layer 227x227 ImageNet network (grouped conv2/4/5).
pub fn alexnet() -> ModelGraph {
    ModelGraph {
        name: "alexnet".into(),
        layers: vec![
            conv("conv1", 3, 96, 11, 4, 0, 1, 227),
            conv("conv2", 96, 256, 5, 1, 2, 2, 27),
            conv("conv3", 256, 384, 3, 1, 1, 1, 13),
            conv("conv4", 384, 384, 3, 1, 1, 2, 13),
            conv("conv5", 384, 256, 3, 1, 1, 2, 13),
            fc("fc6", 9216, 4096),
            fc("fc7", 4096, 4096),
            fc("fc8", 4096, 1000),
        ],
    }
}

/// Six conv + three fc CIFAR network (32x32 inputs, pooling after each
/// conv pair).
pub fn vgg9(num_classes: u64) -> ModelGraph {
    ModelGraph {
        name: if num_classes == 10 {
            "vgg9".into()
        } else {
            format!("vgg9-{num_classes}")
        },
        layers: vec![
            conv("conv1", 3, 128, 3, 1, 1, 1, 32),
            conv("conv2", 128, 128, 3, 1, 1, 1, 32),
            conv("conv3", 128, 256, 3, 1, 1, 1, 16),
            conv("conv4", 256, 256, 3, 1, 1, 1, 16),
            conv("conv5", 256, 512, 3, 1, 1, 1, 8),
            conv("conv6", 512, 512, 3, 1, 1, 1, 8),
            fc("fc1", 8192, 1024),
            fc("fc2", 1024, 1024),
            fc("fc3", 1024, num_classes),
        ],
    }
}

/// Desk-scale 28x28 network: three 3x3 convs with 2x2 pooling after each,
/// then two fc layers.
pub fn mnist_small() -> ModelGraph {
    ModelGraph {
        name: "mnist-small".into(),
        layers: vec![
            conv("conv1", 1, 8, 3, 1, 1, 1, 28),
            conv("conv2", 8, 16, 3, 1, 1, 1, 14),
            conv("conv3", 16, 32, 3, 1, 1, 1, 7),
            fc("fc1", 288, 64),
            fc("fc2", 64, 10),
        ],
    }
}

pub fn known_names() -> &'static [&'static str] {
    &["alexnet", "vgg9", "vgg9-100", "mnist-small"]
}

pub fn by_name(name: &str) -> Result<ModelGraph> {
    match name {
        "alexnet" => Ok(alexnet()),
        "vgg9" => Ok(vgg9(10)),
        "vgg9-100" => Ok(vgg9(100)),
        "mnist-small" => Ok(mnist_small()),
        other => Err(TacError::InvalidArgument(format!(
            "unknown graph '{other}'; known graphs: {}",
            known_names().join(", ")
        ))),
    }
}

/// The shipped precision policies.
///
/// `Xnor`/`Bnn` binarize everything except the first and last layer
/// (scaled and unscaled respectively). `Tac`/`TacBnn` binarize the conv
/// stack except the first layer and replace fc binarization with pruning
/// plus quantization; the final fc layer is quantized but left unpruned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedPolicy {
    Full,
    Xnor,
    Bnn,
    Tac,
    TacBnn,
}

impl NamedPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "xnor" => Ok(Self::Xnor),
            "bnn" => Ok(Self::Bnn),
            "tac" | "tac-xnor" => Ok(Self::Tac),
            "tac-bnn" => Ok(Self::TacBnn),
            other => Err(TacError::InvalidArgument(format!(
                "unknown policy '{other}'; known policies: full, xnor, bnn, tac, tac-bnn"
            ))),
        }
    }
}

/// Applies a named policy to a graph. `rate` and `bit_width` configure the
/// pruned-quantized fc layers of the `Tac`/`TacBnn` policies.
pub fn apply_policy(
    graph: &ModelGraph,
    policy: NamedPolicy,
    rate: f64,
    bit_width: u32,
) -> Result<ModelGraph> {
    let mut g = graph.clone();
    let last = g.layers.len() - 1;
    match policy {
        NamedPolicy::Full => {
            g = g.with_all_policies(Policy::Full);
        }
        NamedPolicy::Xnor | NamedPolicy::Bnn => {
            let scaled = policy == NamedPolicy::Xnor;
            for (i, l) in g.layers.iter_mut().enumerate() {
                l.policy = if i == 0 || i == last {
                    Policy::Full
                } else {
                    Policy::Binary { scaled }
                };
            }
        }
        NamedPolicy::Tac | NamedPolicy::TacBnn => {
            let scaled = policy == NamedPolicy::Tac;
            for (i, l) in g.layers.iter_mut().enumerate() {
                l.policy = match l.kind {
                    LayerKind::Conv { .. } => {
                        if i == 0 {
                            Policy::Full
                        } else {
                            Policy::Binary { scaled }
                        }
                    }
                    LayerKind::Fc { .. } => Policy::PrunedQuant {
                        rate: if i == last { 0.0 } else { rate },
                        bit_width,
                    },
                };
            }
        }
    }
    g.validate()?;
    Ok(g)
}
