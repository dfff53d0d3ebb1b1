//! Layers and hand-written forward/backward passes for the desk-scale nets.
//!
//! Convolution layers keep full-precision shadow weights. A binary conv
//! binarizes its weights on the forward pass (sign, with an optional
//! per-channel mean-|w| scale) and routes weight gradients through the
//! clipped straight-through estimator; the shadow weights are never
//! overwritten by binarization. Binary conv accumulation is kept as exact
//! integers with a single alpha multiply per output so it agrees bit-for-bit
//! with the packed XNOR kernel.

use crate::analyzer::{LayerKind, ModelGraph, Policy};
use crate::compress::{decode, fc_forward, PruneMask, SparseQuantLayer};
use crate::error::{Result, TacError};
use crate::tensor::Tensor;
use crate::xnor::ConvGeometry;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub geom: ConvGeometry,
    pub binary: bool,
    pub scaled: bool,
    pub frozen: bool,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub w_grad: Vec<f64>,
    pub b_grad: Vec<f64>,
    input: Vec<f64>,
}

impl ConvLayer {
    pub fn new(geom: ConvGeometry, binary: bool, scaled: bool, rng: &mut ChaCha8Rng) -> Self {
        let wlen = geom.out_channels * geom.in_channels * geom.kernel_h * geom.kernel_w;
        let fan_in = (geom.in_channels * geom.kernel_h * geom.kernel_w) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weights = (0..wlen).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            geom,
            binary,
            scaled,
            frozen: false,
            weights,
            bias: vec![0.0; geom.out_channels],
            w_grad: vec![0.0; wlen],
            b_grad: vec![0.0; geom.out_channels],
            input: Vec::new(),
        }
    }

    /// Per-output-channel scale: mean |w| when scaled, else 1.
    pub fn alphas(&self) -> Vec<f64> {
        let row = self.geom.in_channels * self.geom.kernel_h * self.geom.kernel_w;
        (0..self.geom.out_channels)
            .map(|k| {
                if self.scaled {
                    self.weights[k * row..(k + 1) * row]
                        .iter()
                        .map(|v| v.abs())
                        .sum::<f64>()
                        / row as f64
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn output_len(&self) -> usize {
        self.geom.out_channels * self.geom.output_h() * self.geom.output_w()
    }

    fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        self.input = x.to_vec();
        let g = &self.geom;
        let (oh, ow) = (g.output_h(), g.output_w());
        let mut out = vec![0.0; g.out_channels * oh * ow];
        let row = g.in_channels * g.kernel_h * g.kernel_w;
        let alphas = if self.binary { self.alphas() } else { Vec::new() };
        for k in 0..g.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..g.in_channels {
                        for ky in 0..g.kernel_h {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.input_h as isize {
                                continue;
                            }
                            for kx in 0..g.kernel_w {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix >= g.input_w as isize {
                                    continue;
                                }
                                let xv = x[(c * g.input_h + iy as usize) * g.input_w
                                    + ix as usize];
                                let w = self.weights
                                    [k * row + (c * g.kernel_h + ky) * g.kernel_w + kx];
                                if self.binary {
                                    // Integer accumulation over sign(w) * x.
                                    acc += if w >= 0.0 { xv } else { -xv };
                                } else {
                                    acc += w * xv;
                                }
                            }
                        }
                    }
                    let y = if self.binary { alphas[k] * acc } else { acc };
                    out[(k * oh + oy) * ow + ox] = y + self.bias[k];
                }
            }
        }
        out
    }

    fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        let g = &self.geom;
        let (oh, ow) = (g.output_h(), g.output_w());
        let row = g.in_channels * g.kernel_h * g.kernel_w;
        let alphas = if self.binary { self.alphas() } else { Vec::new() };
        let mut dx = vec![0.0; g.in_channels * g.input_h * g.input_w];
        for k in 0..g.out_channels {
            let alpha = if self.binary { alphas[k] } else { 1.0 };
            for oy in 0..oh {
                for ox in 0..ow {
                    let d = dy[(k * oh + oy) * ow + ox];
                    self.b_grad[k] += d;
                    for c in 0..g.in_channels {
                        for ky in 0..g.kernel_h {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy >= g.input_h as isize {
                                continue;
                            }
                            for kx in 0..g.kernel_w {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix >= g.input_w as isize {
                                    continue;
                                }
                                let xi = (c * g.input_h + iy as usize) * g.input_w + ix as usize;
                                let wi = k * row + (c * g.kernel_h + ky) * g.kernel_w + kx;
                                let w = self.weights[wi];
                                let eff_w = if self.binary {
                                    alpha * if w >= 0.0 { 1.0 } else { -1.0 }
                                } else {
                                    w
                                };
                                dx[xi] += d * eff_w;
                                if self.binary {
                                    // Straight-through: gradient reaches the
                                    // shadow weight only inside |w| <= 1.
                                    if w.abs() <= 1.0 {
                                        self.w_grad[wi] += d * alpha * self.input[xi];
                                    }
                                } else {
                                    self.w_grad[wi] += d * self.input[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub struct PoolLayer {
    pub channels: usize,
    pub input_h: usize,
    pub input_w: usize,
    argmax: Vec<usize>,
}

impl PoolLayer {
    pub fn new(channels: usize, input_h: usize, input_w: usize) -> Self {
        Self {
            channels,
            input_h,
            input_w,
            argmax: Vec::new(),
        }
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.input_h / 2, self.input_w / 2)
    }

    fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        let (oh, ow) = self.output_dims();
        let mut out = vec![0.0; self.channels * oh * ow];
        self.argmax = vec![0; out.len()];
        for c in 0..self.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let i = (c * self.input_h + oy * 2 + dy) * self.input_w + ox * 2 + dx;
                            if x[i] > best {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = (c * oh + oy) * ow + ox;
                    out[o] = best;
                    self.argmax[o] = best_i;
                }
            }
        }
        out
    }

    fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.channels * self.input_h * self.input_w];
        for (o, &i) in self.argmax.iter().enumerate() {
            dx[i] += dy[o];
        }
        dx
    }
}

/// Sign activation with clipped straight-through backward.
#[derive(Debug, Clone, Default)]
pub struct SignLayer {
    pre: Vec<f64>,
}

impl SignLayer {
    fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        self.pre = x.to_vec();
        x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect()
    }

    fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        dy.iter()
            .zip(&self.pre)
            .map(|(&d, &x)| if x.abs() <= 1.0 { d } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReluLayer {
    pre: Vec<f64>,
}

impl ReluLayer {
    fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        self.pre = x.to_vec();
        x.iter().map(|&v| v.max(0.0)).collect()
    }

    fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        dy.iter()
            .zip(&self.pre)
            .map(|(&d, &x)| if x > 0.0 { d } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FcLayer {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub mask: Option<PruneMask>,
    pub w_grad: Vec<f64>,
    pub b_grad: Vec<f64>,
    input: Vec<f64>,
}

impl FcLayer {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / in_features as f64).sqrt();
        Self {
            in_features,
            out_features,
            weights: (0..in_features * out_features)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
            bias: vec![0.0; out_features],
            mask: None,
            w_grad: vec![0.0; in_features * out_features],
            b_grad: vec![0.0; out_features],
            input: Vec::new(),
        }
    }

    pub fn weight_tensor(&self) -> Tensor {
        Tensor::new(vec![self.out_features, self.in_features], self.weights.clone())
            .expect("weights are finite")
    }

    /// Installs a prune mask and zeroes the pruned weights.
    pub fn apply_mask(&mut self, mask: PruneMask) {
        for (i, w) in self.weights.iter_mut().enumerate() {
            if !mask.is_kept(i) {
                *w = 0.0;
            }
        }
        self.mask = Some(mask);
    }

    fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        self.input = x.to_vec();
        (0..self.out_features)
            .map(|k| {
                let row = &self.weights[k * self.in_features..(k + 1) * self.in_features];
                row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias[k]
            })
            .collect()
    }

    fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_features];
        for k in 0..self.out_features {
            self.b_grad[k] += dy[k];
            for j in 0..self.in_features {
                let idx = k * self.in_features + j;
                let keep = self.mask.as_ref().is_none_or(|m| m.is_kept(idx));
                if keep {
                    self.w_grad[idx] += dy[k] * self.input[j];
                }
                dx[j] += dy[k] * self.weights[idx];
            }
        }
        dx
    }
}

/// Frozen pruned/quantized fc layer; only the bias keeps training.
#[derive(Debug, Clone)]
pub struct QuantFcLayer {
    pub layer: SparseQuantLayer,
    pub bias: Vec<f64>,
    pub b_grad: Vec<f64>,
    dense: Tensor,
    input: Vec<f64>,
}

impl QuantFcLayer {
    pub fn new(layer: SparseQuantLayer, bias: Vec<f64>) -> Self {
        let dense = decode(&layer);
        let out = layer.rows();
        Self {
            layer,
            bias,
            b_grad: vec![0.0; out],
            dense,
            input: Vec::new(),
        }
    }

    fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        self.input = x.to_vec();
        let xt = Tensor::from_vec(x.to_vec()).expect("finite activations");
        let y = fc_forward(&self.layer, &xt).expect("shape fixed at construction");
        y.data()
            .iter()
            .zip(&self.bias)
            .map(|(v, b)| v + b)
            .collect()
    }

    fn backward(&mut self, dy: &[f64]) -> Vec<f64> {
        let cols = self.layer.cols();
        let mut dx = vec![0.0; cols];
        for k in 0..self.layer.rows() {
            self.b_grad[k] += dy[k];
            for j in 0..cols {
                dx[j] += dy[k] * self.dense.data()[k * cols + j];
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub enum NetLayer {
    Conv(ConvLayer),
    Pool(PoolLayer),
    Sign(SignLayer),
    Relu(ReluLayer),
    Fc(FcLayer),
    QuantFc(QuantFcLayer),
}

/// A small sequential network over flattened `[c, h, w]` buffers.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<NetLayer>,
    pub input_channels: usize,
    pub input_h: usize,
    pub input_w: usize,
    pub num_classes: usize,
}

impl Network {
    pub fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &mut self.layers {
            cur = match layer {
                NetLayer::Conv(l) => l.forward(&cur),
                NetLayer::Pool(l) => l.forward(&cur),
                NetLayer::Sign(l) => l.forward(&cur),
                NetLayer::Relu(l) => l.forward(&cur),
                NetLayer::Fc(l) => l.forward(&cur),
                NetLayer::QuantFc(l) => l.forward(&cur),
            };
        }
        cur
    }

    pub fn backward(&mut self, dlogits: &[f64]) {
        let mut cur = dlogits.to_vec();
        for layer in self.layers.iter_mut().rev() {
            cur = match layer {
                NetLayer::Conv(l) => l.backward(&cur),
                NetLayer::Pool(l) => l.backward(&cur),
                NetLayer::Sign(l) => l.backward(&cur),
                NetLayer::Relu(l) => l.backward(&cur),
                NetLayer::Fc(l) => l.backward(&cur),
                NetLayer::QuantFc(l) => l.backward(&cur),
            };
        }
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            match layer {
                NetLayer::Conv(l) => {
                    l.w_grad.iter_mut().for_each(|g| *g = 0.0);
                    l.b_grad.iter_mut().for_each(|g| *g = 0.0);
                }
                NetLayer::Fc(l) => {
                    l.w_grad.iter_mut().for_each(|g| *g = 0.0);
                    l.b_grad.iter_mut().for_each(|g| *g = 0.0);
                }
                NetLayer::QuantFc(l) => l.b_grad.iter_mut().for_each(|g| *g = 0.0),
                _ => {}
            }
        }
    }

    /// Visits every trainable parameter group with its gradient, in a
    /// stable order. Frozen conv layers are skipped entirely.
    pub fn visit_params(&mut self, f: &mut impl FnMut(usize, &mut [f64], &[f64])) {
        let mut group = 0;
        for layer in &mut self.layers {
            match layer {
                NetLayer::Conv(l) => {
                    if !l.frozen {
                        f(group, &mut l.weights, &l.w_grad);
                        f(group + 1, &mut l.bias, &l.b_grad);
                    }
                    group += 2;
                }
                NetLayer::Fc(l) => {
                    f(group, &mut l.weights, &l.w_grad);
                    f(group + 1, &mut l.bias, &l.b_grad);
                    group += 2;
                }
                NetLayer::QuantFc(l) => {
                    f(group, &mut l.bias, &l.b_grad);
                    group += 1;
                }
                _ => {}
            }
        }
    }

    /// Flattened copies of all trainable parameters, for determinism checks.
    pub fn parameter_snapshot(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p, _| out.extend_from_slice(p));
        out
    }
}

/// Stable softmax cross-entropy; returns the loss and dlogits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(exps[label] / sum).ln();
    let mut dlogits: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    dlogits[label] -= 1.0;
    (loss, dlogits)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Builds a trainable network from a graph description. Binary conv layers
/// come from the graph's `Binary` policies; fc layers always start at full
/// precision (compression replaces them later). 2x2 pooling is inserted
/// wherever the recorded spatial dims halve, a sign activation feeds every
/// binary conv, and ReLU is used elsewhere.
pub fn build_network(graph: &ModelGraph, rng: &mut ChaCha8Rng) -> Result<Network> {
    graph.validate()?;
    let mut layers: Vec<NetLayer> = Vec::new();
    let n = graph.layers.len();
    let (mut in_c, mut in_h, mut in_w) = match graph.layers[0].kind {
        LayerKind::Conv {
            in_channels,
            input_h,
            input_w,
            ..
        } => (in_channels as usize, input_h as usize, input_w as usize),
        LayerKind::Fc { in_features, .. } => (in_features as usize, 1, 1),
    };
    let input_shape = (in_c, in_h, in_w);
    let mut num_classes = 0;

    for (i, spec) in graph.layers.iter().enumerate() {
        match spec.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
                groups,
                input_h,
                input_w,
            } => {
                if groups != 1 {
                    return Err(TacError::InvalidArgument(format!(
                        "layer {}: grouped convolutions are analysis-only",
                        spec.name
                    )));
                }
                let geom = ConvGeometry {
                    in_channels: in_channels as usize,
                    out_channels: out_channels as usize,
                    kernel_h: kernel_h as usize,
                    kernel_w: kernel_w as usize,
                    stride: stride as usize,
                    padding: padding as usize,
                    input_h: input_h as usize,
                    input_w: input_w as usize,
                };
                geom.validate()?;
                if (geom.in_channels, geom.input_h, geom.input_w) != (in_c, in_h, in_w) {
                    return Err(TacError::ShapeMismatch {
                        expected: format!("layer {} input {:?}", spec.name, (in_c, in_h, in_w)),
                        actual: format!(
                            "{:?}",
                            (geom.in_channels, geom.input_h, geom.input_w)
                        ),
                    });
                }
                let binary = matches!(spec.policy, Policy::Binary { .. });
                let scaled = matches!(spec.policy, Policy::Binary { scaled: true });
                layers.push(NetLayer::Conv(ConvLayer::new(geom, binary, scaled, rng)));
                in_c = geom.out_channels;
                in_h = geom.output_h();
                in_w = geom.output_w();

                // Work out what the next layer expects and bridge with
                // pooling plus an activation.
                if i + 1 < n {
                    let next = &graph.layers[i + 1];
                    let want_spatial = match next.kind {
                        LayerKind::Conv { input_h, .. } => Some(input_h as usize),
                        LayerKind::Fc { in_features, .. } => {
                            let flat = in_c * in_h * in_w;
                            let halved = in_c * (in_h / 2) * (in_w / 2);
                            if in_features as usize == flat {
                                None
                            } else if in_features as usize == halved {
                                Some(in_h / 2)
                            } else {
                                return Err(TacError::ShapeMismatch {
                                    expected: format!(
                                        "fc {} wants {} inputs",
                                        next.name, in_features
                                    ),
                                    actual: format!("{flat} (or {halved} after pooling)"),
                                });
                            }
                        }
                    };
                    if let Some(spatial) = want_spatial {
                        if spatial == in_h / 2 {
                            layers.push(NetLayer::Pool(PoolLayer::new(in_c, in_h, in_w)));
                            in_h /= 2;
                            in_w /= 2;
                        } else if spatial != in_h {
                            return Err(TacError::ShapeMismatch {
                                expected: format!("next layer input {spatial}x{spatial}"),
                                actual: format!("{in_h}x{in_w} (pooling only halves)"),
                            });
                        }
                    }
                    let next_binary = matches!(next.policy, Policy::Binary { .. })
                        && matches!(next.kind, LayerKind::Conv { .. });
                    if next_binary {
                        layers.push(NetLayer::Sign(SignLayer::default()));
                    } else {
                        layers.push(NetLayer::Relu(ReluLayer::default()));
                    }
                }
            }
            LayerKind::Fc {
                in_features,
                out_features,
            } => {
                let expect = in_c * in_h * in_w;
                if in_features as usize != expect {
                    return Err(TacError::ShapeMismatch {
                        expected: format!("fc {} input of {expect}", spec.name),
                        actual: format!("{in_features}"),
                    });
                }
                layers.push(NetLayer::Fc(FcLayer::new(
                    in_features as usize,
                    out_features as usize,
                    rng,
                )));
                in_c = out_features as usize;
                in_h = 1;
                in_w = 1;
                num_classes = out_features as usize;
                if i + 1 < n {
                    layers.push(NetLayer::Relu(ReluLayer::default()));
                }
            }
        }
    }

    Ok(Network {
        layers,
        input_channels: input_shape.0,
        input_h: input_shape.1,
        input_w: input_shape.2,
        num_classes,
    })
}
