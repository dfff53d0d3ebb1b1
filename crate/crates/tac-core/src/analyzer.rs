//! Static accounting of parameters, FLOPs, and model size for a layered
//! network under a per-layer precision policy.
//!
//! Conventions: one multiply-accumulate costs 2 FLOPs at full precision.
//! A binarized layer's multiply-accumulates cost 1/64 FLOP each, plus one
//! full-precision multiply per output element when the layer carries
//! per-channel scales. A pruned/quantized FC layer costs 2 FLOPs per kept
//! weight. Sizes: 32 bits per full-precision weight, 1 bit per binarized
//! weight (+32 per scale), and the shared [`sparse_layer_size_bits`]
//! formula for pruned/quantized layers, where the per-entry cost of the
//! column indices is an explicit policy knob.

use crate::compress::sparse_layer_size_bits;
use crate::error::{Result, TacError};

/// FLOPs granted to one binary multiply-accumulate: 1/64 of a FLOP.
pub const BINARY_MAC_DISCOUNT: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        in_channels: u64,
        out_channels: u64,
        kernel_h: u64,
        kernel_w: u64,
        stride: u64,
        padding: u64,
        groups: u64,
        input_h: u64,
        input_w: u64,
    },
    Fc {
        in_features: u64,
        out_features: u64,
    },
}

impl LayerKind {
    pub fn weight_count(&self) -> u64 {
        match *self {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                groups,
                ..
            } => out_channels * (in_channels / groups) * kernel_h * kernel_w,
            LayerKind::Fc {
                in_features,
                out_features,
            } => in_features * out_features,
        }
    }

    pub fn bias_count(&self) -> u64 {
        match *self {
            LayerKind::Conv { out_channels, .. } => out_channels,
            LayerKind::Fc { out_features, .. } => out_features,
        }
    }

    pub fn output_elements(&self) -> u64 {
        match *self {
            LayerKind::Conv { out_channels, .. } => {
                let (oh, ow) = self.conv_output_dims().expect("validated conv");
                out_channels * oh * ow
            }
            LayerKind::Fc { out_features, .. } => out_features,
        }
    }

    /// Multiply-accumulate count for one forward pass.
    pub fn macs(&self) -> u64 {
        match self {
            LayerKind::Conv { .. } => {
                let (oh, ow) = self.conv_output_dims().expect("validated conv");
                self.weight_count() * oh * ow
            }
            LayerKind::Fc { .. } => self.weight_count(),
        }
    }

    fn conv_output_dims(&self) -> Result<(u64, u64)> {
        match *self {
            LayerKind::Conv {
                kernel_h,
                kernel_w,
                stride,
                padding,
                input_h,
                input_w,
                ..
            } => {
                if stride == 0
                    || input_h + 2 * padding < kernel_h
                    || input_w + 2 * padding < kernel_w
                {
                    return Err(TacError::InvalidArgument(format!(
                        "impossible convolution geometry: {self:?}"
                    )));
                }
                Ok((
                    (input_h + 2 * padding - kernel_h) / stride + 1,
                    (input_w + 2 * padding - kernel_w) / stride + 1,
                ))
            }
            LayerKind::Fc { .. } => Err(TacError::InvalidArgument(
                "fc layer has no spatial dims".into(),
            )),
        }
    }
}

/// Per-layer numeric treatment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Full,
    Binary { scaled: bool },
    PrunedQuant { rate: f64, bit_width: u32 },
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::Full => "full".into(),
            Policy::Binary { scaled: true } => "binary-scaled".into(),
            Policy::Binary { scaled: false } => "binary".into(),
            Policy::PrunedQuant { rate, bit_width } => format!("pq({rate},{bit_width})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub policy: Policy,
}

/// Ordered layer descriptors with a precision policy per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl ModelGraph {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(TacError::InvalidArgument("graph has no layers".into()));
        }
        let mut prev: Option<&Layer> = None;
        for layer in &self.layers {
            match layer.kind {
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    groups,
                    input_h,
                    input_w,
                    ..
                } => {
                    if in_channels == 0
                        || out_channels == 0
                        || kernel_h == 0
                        || kernel_w == 0
                        || input_h == 0
                        || input_w == 0
                    {
                        return Err(TacError::InvalidArgument(format!(
                            "layer {}: zero dimension",
                            layer.name
                        )));
                    }
                    if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
                        return Err(TacError::InvalidArgument(format!(
                            "layer {}: groups {groups} must divide channels {in_channels}/{out_channels}",
                            layer.name
                        )));
                    }
                    layer.kind.conv_output_dims()?;
                    if let Some(p) = prev {
                        match p.kind {
                            LayerKind::Conv { out_channels: prev_out, .. } => {
                                if prev_out != in_channels {
                                    return Err(TacError::InvalidArgument(format!(
                                        "layer {}: expects {in_channels} input channels, previous layer {} emits {prev_out}",
                                        layer.name, p.name
                                    )));
                                }
                            }
                            LayerKind::Fc { .. } => {
                                return Err(TacError::InvalidArgument(format!(
                                    "layer {}: conv after fc is not supported",
                                    layer.name
                                )));
                            }
                        }
                    }
                }
                LayerKind::Fc {
                    in_features,
                    out_features,
                } => {
                    if in_features == 0 || out_features == 0 {
                        return Err(TacError::InvalidArgument(format!(
                            "layer {}: zero dimension",
                            layer.name
                        )));
                    }
                    if let Some(p) = prev {
                        match p.kind {
                            LayerKind::Fc { out_features: prev_out, .. } => {
                                if prev_out != in_features {
                                    return Err(TacError::InvalidArgument(format!(
                                        "layer {}: expects {in_features} inputs, previous layer {} emits {prev_out}",
                                        layer.name, p.name
                                    )));
                                }
                            }
                            LayerKind::Conv { out_channels, .. } => {
                                if in_features % out_channels != 0 {
                                    return Err(TacError::InvalidArgument(format!(
                                        "layer {}: {in_features} inputs not a multiple of {out_channels} channels from {}",
                                        layer.name, p.name
                                    )));
                                }
                            }
                        }
                    }
                }
            }
            match layer.policy {
                Policy::PrunedQuant { rate, bit_width } => {
                    if matches!(layer.kind, LayerKind::Conv { .. }) {
                        return Err(TacError::InvalidArgument(format!(
                            "layer {}: pruned-quantized policy applies to fc layers only",
                            layer.name
                        )));
                    }
                    if !(0.0..1.0).contains(&rate) {
                        return Err(TacError::InvalidArgument(format!(
                            "layer {}: pruning rate {rate} outside [0, 1)",
                            layer.name
                        )));
                    }
                    if !(1..=24).contains(&bit_width) {
                        return Err(TacError::InvalidArgument(format!(
                            "layer {}: bit width {bit_width} outside 1..=24",
                            layer.name
                        )));
                    }
                }
                Policy::Full | Policy::Binary { .. } => {}
            }
            prev = Some(layer);
        }
        Ok(())
    }

    /// Same layer names and kinds, policies free to differ.
    pub fn skeleton_matches(&self, other: &ModelGraph) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.name == b.name && a.kind == b.kind)
    }

    pub fn with_all_policies(&self, policy: Policy) -> ModelGraph {
        let mut g = self.clone();
        for l in &mut g.layers {
            l.policy = policy;
        }
        g
    }

    pub fn set_policy(&mut self, layer_name: &str, policy: Policy) -> Result<()> {
        match self.layers.iter_mut().find(|l| l.name == layer_name) {
            Some(l) => {
                l.policy = policy;
                Ok(())
            }
            None => Err(TacError::InvalidArgument(format!(
                "no layer named {layer_name} in graph {}",
                self.name
            ))),
        }
    }
}

/// Accounting knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyzerOptions {
    /// Bits charged per kept-weight column index in sparse layers. The
    /// serializer spends 16 (or 32 for very wide layers); 0 reproduces
    /// accounting that ignores index storage entirely.
    pub index_bits: u32,
    /// Count biases (32 bits and one add per output element).
    pub include_bias: bool,
}

impl Default for AnalyzerOptions {
    fn default() -> Self {
        Self {
            index_bits: 16,
            include_bias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub name: String,
    pub policy: String,
    pub weights: u64,
    pub bits: u64,
    pub flops: f64,
}

fn kept_after_prune(total: u64, rate: f64) -> u64 {
    total - (rate * total as f64).floor() as u64
}

fn scale_count(kind: &LayerKind) -> u64 {
    match *kind {
        LayerKind::Conv { out_channels, .. } => out_channels,
        LayerKind::Fc { out_features, .. } => out_features,
    }
}

fn layer_report(layer: &Layer, opts: &AnalyzerOptions) -> LayerReport {
    let kind = &layer.kind;
    let weights = kind.weight_count() + if opts.include_bias { kind.bias_count() } else { 0 };
    let macs = kind.macs() as f64;
    let bias_bits = if opts.include_bias { 32 * kind.bias_count() } else { 0 };
    let bias_flops = if opts.include_bias {
        kind.output_elements() as f64
    } else {
        0.0
    };

    let (bits, flops) = match layer.policy {
        Policy::Full => (32 * kind.weight_count() + bias_bits, 2.0 * macs + bias_flops),
        Policy::Binary { scaled } => {
            let scale_bits = if scaled { 32 * scale_count(kind) } else { 0 };
            let scale_flops = if scaled {
                kind.output_elements() as f64
            } else {
                0.0
            };
            (
                kind.weight_count() + scale_bits + bias_bits,
                macs / BINARY_MAC_DISCOUNT + scale_flops + bias_flops,
            )
        }
        Policy::PrunedQuant { rate, bit_width } => {
            let (rows, cols) = match *kind {
                LayerKind::Fc {
                    in_features,
                    out_features,
                } => (out_features, in_features),
                LayerKind::Conv { .. } => unreachable!("rejected by validate"),
            };
            let kept = kept_after_prune(kind.weight_count(), rate);
            let levels = kept.min(1 << bit_width);
            let bits = sparse_layer_size_bits(rows, cols, kept, bit_width, levels, opts.index_bits)
                + bias_bits;
            (bits, 2.0 * kept as f64 + bias_flops)
        }
    };

    LayerReport {
        name: layer.name.clone(),
        policy: layer.policy.label(),
        weights,
        bits,
        flops,
    }
}

/// Per-layer accounting rows for one graph.
pub fn analyze(g: &ModelGraph, opts: &AnalyzerOptions) -> Result<Vec<LayerReport>> {
    g.validate()?;
    Ok(g.layers.iter().map(|l| layer_report(l, opts)).collect())
}

/// Per-layer weight counts.
pub fn count_params(g: &ModelGraph, opts: &AnalyzerOptions) -> Result<Vec<(String, u64)>> {
    Ok(analyze(g, opts)?
        .into_iter()
        .map(|r| (r.name, r.weights))
        .collect())
}

/// Per-layer FLOPs under the graph's policies.
pub fn count_flops(g: &ModelGraph, opts: &AnalyzerOptions) -> Result<Vec<(String, f64)>> {
    Ok(analyze(g, opts)?
        .into_iter()
        .map(|r| (r.name, r.flops))
        .collect())
}

/// Per-layer bit counts plus the byte total.
pub struct ModelSize {
    pub per_layer_bits: Vec<(String, u64)>,
    pub total_bits: u64,
}

impl ModelSize {
    pub fn total_bytes(&self) -> u64 {
        self.total_bits.div_ceil(8)
    }
}

pub fn model_size(g: &ModelGraph, opts: &AnalyzerOptions) -> Result<ModelSize> {
    let rows = analyze(g, opts)?;
    let total_bits = rows.iter().map(|r| r.bits).sum();
    Ok(ModelSize {
        per_layer_bits: rows.into_iter().map(|r| (r.name, r.bits)).collect(),
        total_bits,
    })
}

/// Side-by-side accounting of a compressed graph against its full-precision
/// baseline with the same skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub graph_name: String,
    pub index_bits: u32,
    pub layers: Vec<LayerReport>,
    pub total_weights: u64,
    pub total_bits: u64,
    pub total_flops: f64,
    pub baseline_bits: u64,
    pub baseline_flops: f64,
    pub compression_rate: f64,
    pub computation_saving: f64,
}

pub fn compare(
    full: &ModelGraph,
    compressed: &ModelGraph,
    opts: &AnalyzerOptions,
) -> Result<CompressionReport> {
    if !full.skeleton_matches(compressed) {
        return Err(TacError::ShapeMismatch {
            expected: format!("skeleton of graph {}", full.name),
            actual: format!("skeleton of graph {}", compressed.name),
        });
    }
    let base = analyze(full, opts)?;
    let layers = analyze(compressed, opts)?;
    let baseline_bits: u64 = base.iter().map(|r| r.bits).sum();
    let baseline_flops: f64 = base.iter().map(|r| r.flops).sum();
    let total_bits: u64 = layers.iter().map(|r| r.bits).sum();
    let total_flops: f64 = layers.iter().map(|r| r.flops).sum();
    Ok(CompressionReport {
        graph_name: compressed.name.clone(),
        index_bits: opts.index_bits,
        total_weights: layers.iter().map(|r| r.weights).sum(),
        layers,
        total_bits,
        total_flops,
        baseline_bits,
        baseline_flops,
        compression_rate: baseline_bits as f64 / total_bits as f64,
        computation_saving: baseline_flops / total_flops,
    })
}

/// Formats an f64 FLOPs value without a trailing `.0` on whole numbers.
fn fmt_flops(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn human_bytes(bits: u64) -> String {
    let bytes = bits as f64 / 8.0;
    const MIB: f64 = 1024.0 * 1024.0;
    if bytes >= MIB {
        format!("{:.2}MiB", bytes / MIB)
    } else if bytes >= 1024.0 {
        format!("{:.2}KiB", bytes / 1024.0)
    } else {
        format!("{bytes:.0}B")
    }
}

impl CompressionReport {
    /// Aligned table for humans.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model: {} (index bits: {})\n",
            self.graph_name, self.index_bits
        ));
        out.push_str(&format!(
            "{:<10} {:>14} {:>12} {:>16} {:>16} {:>10}\n",
            "layer", "policy", "weights", "bits", "flops", "size"
        ));
        for r in &self.layers {
            out.push_str(&format!(
                "{:<10} {:>14} {:>12} {:>16} {:>16} {:>10}\n",
                r.name,
                r.policy,
                r.weights,
                r.bits,
                fmt_flops(r.flops),
                human_bytes(r.bits)
            ));
        }
        out.push_str(&format!(
            "{:<10} {:>14} {:>12} {:>16} {:>16} {:>10}\n",
            "total",
            "",
            self.total_weights,
            self.total_bits,
            fmt_flops(self.total_flops),
            human_bytes(self.total_bits)
        ));
        out.push_str(&format!(
            "compression rate:   {:.3}x (vs {} full precision)\n",
            self.compression_rate,
            human_bytes(self.baseline_bits)
        ));
        out.push_str(&format!(
            "computation saving: {:.3}x (vs {} full-precision flops)\n",
            self.computation_saving,
            fmt_flops(self.baseline_flops)
        ));
        out
    }

    /// Tab-separated records, one line per layer plus totals and ratios.
    pub fn render_machine(&self) -> String {
        let mut out = String::from("layer\tpolicy\tweights\tbits\tflops\n");
        for r in &self.layers {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.name,
                r.policy,
                r.weights,
                r.bits,
                fmt_flops(r.flops)
            ));
        }
        out.push_str(&format!(
            "total\t-\t{}\t{}\t{}\n",
            self.total_weights,
            self.total_bits,
            fmt_flops(self.total_flops)
        ));
        out.push_str(&format!("compression_rate\t{:.6}\n", self.compression_rate));
        out.push_str(&format!(
            "computation_saving\t{:.6}\n",
            self.computation_saving
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs;

    fn opts0() -> AnalyzerOptions {
        AnalyzerOptions {
            index_bits: 0,
            include_bias: false,
        }
    }

    #[test]
    fn alexnet_full_precision_weights_and_flops() {
        let g = graphs::alexnet();
        let rows = analyze(&g, &AnalyzerOptions::default()).unwrap();
        let expected: &[(&str, u64, f64)] = &[
            ("conv1", 34_848, 210_830_400.0),
            ("conv2", 307_200, 447_897_600.0),
            ("conv3", 884_736, 299_040_768.0),
            ("conv4", 663_552, 224_280_576.0),
            ("conv5", 442_368, 149_520_384.0),
            ("fc6", 37_748_736, 75_497_472.0),
            ("fc7", 16_777_216, 33_554_432.0),
            ("fc8", 4_096_000, 8_192_000.0),
        ];
        assert_eq!(rows.len(), expected.len());
        for (r, &(name, w, f)) in rows.iter().zip(expected) {
            assert_eq!(r.name, name);
            assert_eq!(r.weights, w, "{name} weights");
            assert_eq!(r.flops, f, "{name} flops");
        }
        let total_w: u64 = rows.iter().map(|r| r.weights).sum();
        let total_f: f64 = rows.iter().map(|r| r.flops).sum();
        assert_eq!(total_w, 60_954_656);
        assert_eq!(total_f, 1_448_813_632.0);
    }

    #[test]
    fn one_by_one_conv_has_one_weight() {
        let g = ModelGraph {
            name: "tiny".into(),
            layers: vec![Layer {
                name: "c".into(),
                kind: LayerKind::Conv {
                    in_channels: 1,
                    out_channels: 1,
                    kernel_h: 1,
                    kernel_w: 1,
                    stride: 1,
                    padding: 0,
                    groups: 1,
                    input_h: 5,
                    input_w: 5,
                },
                policy: Policy::Full,
            }],
        };
        assert_eq!(count_params(&g, &opts0()).unwrap()[0].1, 1);
    }

    #[test]
    fn binary_layer_with_64_macs_costs_one_flop() {
        let g = ModelGraph {
            name: "unit".into(),
            layers: vec![Layer {
                name: "fc".into(),
                kind: LayerKind::Fc {
                    in_features: 8,
                    out_features: 8,
                },
                policy: Policy::Binary { scaled: false },
            }],
        };
        let rows = analyze(&g, &opts0()).unwrap();
        assert_eq!(rows[0].flops, 1.0);
    }

    #[test]
    fn binary_64_weight_layer_size_is_8_bytes_plus_alpha() {
        let g = ModelGraph {
            name: "unit".into(),
            layers: vec![Layer {
                name: "fc".into(),
                kind: LayerKind::Fc {
                    in_features: 64,
                    out_features: 1,
                },
                policy: Policy::Binary { scaled: true },
            }],
        };
        let size = model_size(&g, &opts0()).unwrap();
        assert_eq!(size.total_bits, 64 + 32); // 8 bytes of bits + one 4-byte scale
    }

    #[test]
    fn full_alexnet_is_about_232_mib() {
        let g = graphs::alexnet();
        let size = model_size(&g, &AnalyzerOptions::default()).unwrap();
        let mib = size.total_bytes() as f64 / (1024.0 * 1024.0);
        assert!((mib - 232.52).abs() < 0.05, "got {mib} MiB");
    }

    #[test]
    fn xnor_policy_reproduces_published_totals() {
        let g = graphs::alexnet();
        let full = graphs::apply_policy(&g, graphs::NamedPolicy::Full, 0.75, 4).unwrap();
        let xnor = graphs::apply_policy(&g, graphs::NamedPolicy::Xnor, 0.75, 4).unwrap();
        let report = compare(&full, &xnor, &opts0()).unwrap();
        // 1.45e9 over 2.29e8 when a binary MAC is 1/64 FLOP.
        assert_eq!(report.total_flops, 228_998_016.0);
        assert!((report.computation_saving - 6.1).abs() / 6.1 < 0.05);
        // Size lands on the published 22.6M figure.
        let mib = report.total_bits as f64 / 8.0 / (1024.0 * 1024.0);
        assert!((mib - 22.6).abs() / 22.6 < 0.01, "got {mib} MiB");
        assert!((report.compression_rate - 10.3).abs() / 10.3 < 0.01);
    }

    #[test]
    fn tac_policy_reproduces_published_totals() {
        let g = graphs::alexnet();
        let full = graphs::apply_policy(&g, graphs::NamedPolicy::Full, 0.75, 4).unwrap();
        let tac = graphs::apply_policy(&g, graphs::NamedPolicy::Tac, 0.75, 4).unwrap();
        let report = compare(&full, &tac, &opts0()).unwrap();
        assert_eq!(report.total_flops, 255_400_832.0);
        assert!((report.computation_saving - 5.5).abs() / 5.5 < 0.05);
        let mib = report.total_bits as f64 / 8.0 / (1024.0 * 1024.0);
        assert!((mib - 8.9).abs() / 8.9 < 0.15, "got {mib} MiB");
        assert!((report.compression_rate - 26.1).abs() / 26.1 < 0.15);
    }

    #[test]
    fn totals_are_sums_of_layers() {
        let g = graphs::alexnet();
        let full = graphs::apply_policy(&g, graphs::NamedPolicy::Full, 0.75, 4).unwrap();
        let tac = graphs::apply_policy(&g, graphs::NamedPolicy::Tac, 0.75, 4).unwrap();
        let report = compare(&full, &tac, &AnalyzerOptions::default()).unwrap();
        assert_eq!(
            report.total_bits,
            report.layers.iter().map(|r| r.bits).sum::<u64>()
        );
        assert_eq!(
            report.total_flops,
            report.layers.iter().map(|r| r.flops).sum::<f64>()
        );
        assert_eq!(
            report.total_weights,
            report.layers.iter().map(|r| r.weights).sum::<u64>()
        );
    }

    #[test]
    fn binarizing_more_layers_never_raises_flops() {
        let g = graphs::alexnet();
        let opts = AnalyzerOptions::default();
        let mut current = g.with_all_policies(Policy::Full);
        let mut prev_flops: f64 = analyze(&current, &opts)
            .unwrap()
            .iter()
            .map(|r| r.flops)
            .sum();
        let names: Vec<String> = g.layers.iter().map(|l| l.name.clone()).collect();
        for name in names {
            current
                .set_policy(&name, Policy::Binary { scaled: true })
                .unwrap();
            let flops: f64 = analyze(&current, &opts)
                .unwrap()
                .iter()
                .map(|r| r.flops)
                .sum();
            assert!(flops <= prev_flops, "{name} raised FLOPs");
            prev_flops = flops;
        }
    }

    #[test]
    fn higher_prune_rate_never_raises_fc_size() {
        let opts = AnalyzerOptions::default();
        let mut prev = u64::MAX;
        for rate in [0.0, 0.2, 0.4, 0.6, 0.7, 0.75, 0.9] {
            let g = ModelGraph {
                name: "fc".into(),
                layers: vec![Layer {
                    name: "fc1".into(),
                    kind: LayerKind::Fc {
                        in_features: 1000,
                        out_features: 100,
                    },
                    policy: Policy::PrunedQuant {
                        rate,
                        bit_width: 4,
                    },
                }],
            };
            let bits = model_size(&g, &opts).unwrap().total_bits;
            assert!(bits <= prev, "rate {rate} raised size");
            prev = bits;
        }
    }

    #[test]
    fn identical_graphs_compare_at_unity() {
        let g = graphs::alexnet();
        let report = compare(&g, &g, &AnalyzerOptions::default()).unwrap();
        assert_eq!(report.compression_rate, 1.0);
        assert_eq!(report.computation_saving, 1.0);
    }

    #[test]
    fn compare_rejects_different_skeletons() {
        let a = graphs::alexnet();
        let v = graphs::vgg9(10);
        assert!(compare(&a, &v, &AnalyzerOptions::default()).is_err());
    }

    #[test]
    fn analyzer_size_matches_serializer_bytes() {
        use crate::compress::{prune_quantize, sparse_layer_size_bits};
        use crate::tensor::Tensor;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let (rows, cols, rate, bits) = (40usize, 50usize, 0.5f64, 3u32);
        let w = Tensor::new(
            vec![rows, cols],
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (_, layer) = prune_quantize(&w, rate, bits).unwrap();
        // Plenty of distinct weights: the codebook fills all 2^b levels,
        // matching the analyzer's generic assumption.
        assert_eq!(layer.codebook().levels().len(), 1 << bits);

        let g = ModelGraph {
            name: "fc".into(),
            layers: vec![Layer {
                name: "fc1".into(),
                kind: LayerKind::Fc {
                    in_features: cols as u64,
                    out_features: rows as u64,
                },
                policy: Policy::PrunedQuant {
                    rate,
                    bit_width: bits,
                },
            }],
        };
        let predicted = model_size(&g, &AnalyzerOptions::default())
            .unwrap()
            .total_bits;
        assert_eq!(predicted, layer.to_bytes().len() as u64 * 8);
        assert_eq!(
            predicted,
            sparse_layer_size_bits(
                rows as u64,
                cols as u64,
                layer.kept_count() as u64,
                bits,
                1 << bits,
                16
            )
        );
    }

    #[test]
    fn pruned_quant_on_conv_is_rejected() {
        let mut g = graphs::alexnet();
        g.set_policy(
            "conv2",
            Policy::PrunedQuant {
                rate: 0.5,
                bit_width: 4,
            },
        )
        .unwrap();
        assert!(analyze(&g, &AnalyzerOptions::default()).is_err());
    }
}
