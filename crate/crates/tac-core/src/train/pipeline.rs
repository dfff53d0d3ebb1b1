//! The three-stage pipeline: train with binarized convolutions, iteratively
//! prune and fine-tune the fc layers, then quantize and fine-tune again.
//! Stages must run in that order; the state tracks where it is and rejects
//! out-of-order calls.

use crate::compress::{prune_by_magnitude, quantize_with_mask};
use crate::error::{Result, TacError};
use crate::train::data::Dataset;
use crate::train::net::{argmax, build_network, softmax_cross_entropy, NetLayer, Network};
use crate::train::optim::{Adam, AdamConfig};
use crate::analyzer::ModelGraph;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate used by the fine-tune passes after pruning and after
    /// quantization. The published recipe uses 1e-8, which barely moves a
    /// desk-scale net; runs that need measurable fine-tuning use 1e-4.
    pub fine_tune_lr: f64,
    /// Adam's first-moment coefficient.
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decay_factor: f64,
    pub lr_decay_interval: usize,
    pub prune_schedule: Vec<f64>,
    pub quant_bits: u32,
    pub seed: u64,
    /// Fine-tune epochs after each prune step and after quantization.
    pub finetune_epochs: usize,
    /// Keep conv weights fixed during fine-tuning.
    pub freeze_conv_finetune: bool,
    /// Prune the last fc layer too (by default it is only quantized).
    pub prune_last_layer: bool,
    /// Accepted accuracy drop from quantization before a warning is raised.
    pub quant_accuracy_budget: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            fine_tune_lr: 1e-8,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 32,
            epochs: 20,
            lr_decay_factor: 0.5,
            lr_decay_interval: 60,
            prune_schedule: vec![0.2, 0.4, 0.6, 0.7, 0.75],
            quant_bits: 4,
            seed: 42,
            finetune_epochs: 10,
            freeze_conv_finetune: false,
            prune_last_layer: false,
            quant_accuracy_budget: 0.02,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TacError::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TacError::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(1..=24).contains(&self.quant_bits) {
            return Err(TacError::Config(format!(
                "quant_bits {} outside 1..=24",
                self.quant_bits
            )));
        }
        validate_schedule(&self.prune_schedule)?;
        Ok(())
    }

    fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.momentum,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

fn validate_schedule(schedule: &[f64]) -> Result<()> {
    for w in schedule.windows(2) {
        if w[0] >= w[1] {
            return Err(TacError::InvalidArgument(format!(
                "prune schedule must be strictly ascending, got {w:?}"
            )));
        }
    }
    if let Some(&r) = schedule.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(TacError::InvalidArgument(format!(
            "prune rate {r} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Where the pipeline currently stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Trained,
    Pruned,
    Quantized,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Trained => "trained",
            Stage::Pruned => "pruned",
            Stage::Quantized => "quantized",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trained" => Ok(Stage::Trained),
            "pruned" => Ok(Stage::Pruned),
            "quantized" => Ok(Stage::Quantized),
            other => Err(TacError::CorruptData(format!("unknown stage '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Trainable model plus everything needed to reproduce and resume a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: Network,
    pub opt: Adam,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub stage: Stage,
    pub graph_name: String,
    pub pruned_rate: Option<f64>,
    /// Every prune rate applied so far, in order.
    pub prune_history: Vec<f64>,
    pub quant_bits: Option<u32>,
    pub history: Vec<EpochStats>,
}

/// One pass over the data: mini-batch gradient descent with the Adam step,
/// returning mean loss and training accuracy. `lr` is used as given.
fn run_epoch(state: &mut TrainState, data: &Dataset, cfg: &TrainConfig, lr: f64) -> Result<EpochStats> {
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut state.rng);

    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for batch in order.chunks(cfg.batch_size) {
        state.net.zero_grads();
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let logits = state.net.forward(data.image(i));
            let label = data.labels[i] as usize;
            let (loss, mut dlogits) = softmax_cross_entropy(&logits, label);
            total_loss += loss;
            if argmax(&logits) == label {
                correct += 1;
            }
            for d in &mut dlogits {
                *d *= scale;
            }
            state.net.backward(&dlogits);
        }
        state.opt.begin_step();
        let opt = &mut state.opt;
        state
            .net
            .visit_params(&mut |group, params, grads| opt.update(group, lr, params, grads));
    }

    let stats = EpochStats {
        epoch: state.epoch,
        loss: total_loss / n as f64,
        accuracy: correct as f64 / n as f64,
    };
    if !stats.loss.is_finite() {
        return Err(TacError::Diverged { epoch: state.epoch });
    }
    state.epoch += 1;
    state.history.push(stats);
    Ok(stats)
}

fn decayed_lr(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.lr_decay_interval == 0 {
        return cfg.learning_rate;
    }
    cfg.learning_rate * cfg.lr_decay_factor.powi((epoch / cfg.lr_decay_interval) as i32)
}

/// Stage 1: trains a fresh network (binary convs per the graph's policies,
/// full-precision fc) for `cfg.epochs` epochs.
pub fn train_binary_net(graph: &ModelGraph, data: &Dataset, cfg: &TrainConfig) -> Result<TrainState> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TacError::InvalidArgument("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = build_network(graph, &mut rng)?;
    if net.num_classes < data.num_classes {
        return Err(TacError::ShapeMismatch {
            expected: format!("{} classes", data.num_classes),
            actual: format!("head with {} outputs", net.num_classes),
        });
    }
    let mut state = TrainState {
        net,
        opt: Adam::new(cfg.adam_config()),
        rng,
        epoch: 0,
        stage: Stage::Trained,
        graph_name: graph.name.clone(),
        pruned_rate: None,
        prune_history: Vec::new(),
        quant_bits: None,
        history: Vec::new(),
    };
    for e in 0..cfg.epochs {
        let lr = decayed_lr(cfg, e);
        run_epoch(&mut state, data, cfg, lr)?;
    }
    Ok(state)
}

/// Continues training an existing state (used by the fine-tune passes).
pub fn fine_tune(state: &mut TrainState, data: &Dataset, cfg: &TrainConfig, epochs: usize) -> Result<()> {
    // Fresh optimizer: parameter groups may have changed shape.
    state.opt = Adam::new(cfg.adam_config());
    if cfg.freeze_conv_finetune {
        for layer in &mut state.net.layers {
            if let NetLayer::Conv(c) = layer {
                c.frozen = true;
            }
        }
    }
    for _ in 0..epochs {
        run_epoch(state, data, cfg, cfg.fine_tune_lr)?;
    }
    if cfg.freeze_conv_finetune {
        for layer in &mut state.net.layers {
            if let NetLayer::Conv(c) = layer {
                c.frozen = false;
            }
        }
    }
    Ok(())
}

/// Indices of fc layers eligible for pruning (all but the last unless
/// configured otherwise).
fn prunable_fc_indices(net: &Network, prune_last: bool) -> Vec<usize> {
    let fc: Vec<usize> = net
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| matches!(l, NetLayer::Fc(_)).then_some(i))
        .collect();
    if prune_last || fc.len() <= 1 {
        fc
    } else {
        fc[..fc.len() - 1].to_vec()
    }
}

/// Stage 2: prunes the fc layers at each schedule rate, fine-tuning in
/// between. Pruned positions are frozen at zero from then on.
pub fn iterative_prune_finetune(
    state: &mut TrainState,
    schedule: &[f64],
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<()> {
    if state.stage == Stage::Quantized {
        return Err(TacError::PipelineOrder(
            "cannot prune after quantization; order is train, prune, quantize".into(),
        ));
    }
    validate_schedule(schedule)?;
    if let (Some(prev), Some(&first)) = (state.pruned_rate, schedule.first()) {
        if first <= prev {
            return Err(TacError::InvalidArgument(format!(
                "schedule starts at {first} but the state is already pruned to {prev}"
            )));
        }
    }
    for &rate in schedule {
        for idx in prunable_fc_indices(&state.net, cfg.prune_last_layer) {
            if let NetLayer::Fc(fc) = &mut state.net.layers[idx] {
                let mask = prune_by_magnitude(&fc.weight_tensor(), rate)?;
                fc.apply_mask(mask);
            }
        }
        state.stage = Stage::Pruned;
        state.pruned_rate = Some(rate);
        state.prune_history.push(rate);
        fine_tune(state, data, cfg, cfg.finetune_epochs)?;
    }
    Ok(())
}

/// Outcome of the quantization stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizeReport {
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    /// Set when the accuracy drop exceeded the configured budget.
    pub over_budget: bool,
}

/// Stage 3: replaces every fc layer with its pruned/quantized form and
/// fine-tunes the remaining parameters (codebooks and quantized weights
/// are frozen).
pub fn quantize_finetune(
    state: &mut TrainState,
    bits: u32,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<QuantizeReport> {
    if state.stage == Stage::Quantized {
        return Err(TacError::PipelineOrder("state is already quantized".into()));
    }
    let pre = evaluate(&mut state.net, data)?.top1;
    for layer in &mut state.net.layers {
        if let NetLayer::Fc(fc) = layer {
            let w = fc.weight_tensor();
            let mask = match &fc.mask {
                Some(m) => m.clone(),
                None => prune_by_magnitude(&w, 0.0)?,
            };
            let sparse = quantize_with_mask(&w, &mask, bits)?;
            *layer = NetLayer::QuantFc(crate::train::net::QuantFcLayer::new(
                sparse,
                fc.bias.clone(),
            ));
        }
    }
    state.stage = Stage::Quantized;
    state.quant_bits = Some(bits);
    fine_tune(state, data, cfg, cfg.finetune_epochs)?;
    let post = evaluate(&mut state.net, data)?.top1;
    Ok(QuantizeReport {
        pre_accuracy: pre,
        post_accuracy: post,
        over_budget: pre - post > cfg.quant_accuracy_budget,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub top1: f64,
    /// Top-5 accuracy, when the model has at least five classes.
    pub top5: Option<f64>,
}

/// Deterministic accuracy over a dataset.
pub fn evaluate(net: &mut Network, data: &Dataset) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(TacError::InvalidArgument("empty evaluation set".into()));
    }
    if data.num_classes > net.num_classes {
        return Err(TacError::ShapeMismatch {
            expected: format!("at least {} classes", data.num_classes),
            actual: format!("{} outputs", net.num_classes),
        });
    }
    let mut top1 = 0usize;
    let mut top5 = 0usize;
    let k = 5.min(net.num_classes);
    for i in 0..data.len() {
        let logits = net.forward(data.image(i));
        let label = data.labels[i] as usize;
        if argmax(&logits) == label {
            top1 += 1;
        }
        if k >= 5 {
            let mut order: Vec<usize> = (0..logits.len()).collect();
            order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
            if order[..k].contains(&label) {
                top5 += 1;
            }
        }
    }
    Ok(EvalResult {
        top1: top1 as f64 / data.len() as f64,
        top5: (k >= 5).then(|| top5 as f64 / data.len() as f64),
    })
}
