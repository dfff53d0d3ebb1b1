//! Checkpoints: a versioned text manifest plus one binary blob per
//! parameter tensor, mask, or quantized layer. Everything is written in a
//! fixed order with no timestamps, so identical states produce identical
//! bytes.

use crate::compress::{PruneMask, SparseQuantLayer};
use crate::error::{Result, TacError};
use crate::tensor::{BitTensor, Tensor};
use crate::train::net::{ConvLayer, FcLayer, NetLayer, Network, PoolLayer, QuantFcLayer, ReluLayer, SignLayer};
use crate::train::optim::{Adam, AdamConfig};
use crate::train::pipeline::{EpochStats, Stage, TrainState};
use crate::xnor::ConvGeometry;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.txt";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<Vec<u8>> {
    if s.len() % 2 != 0 {
        return Err(TacError::CorruptData("odd hex string".into()));
    }
    (0..s.len() / 2)
        .map(|i| {
            u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|_| TacError::CorruptData("bad hex digit".into()))
        })
        .collect()
}

fn write_blob(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn read_tensor(dir: &Path, name: &str) -> Result<Vec<f64>> {
    let t = Tensor::from_bytes(&fs::read(dir.join(name))?)?;
    Ok(t.data().to_vec())
}

fn flat_tensor(data: &[f64]) -> Tensor {
    Tensor::from_vec(data.to_vec()).expect("parameters stay finite")
}

/// Serializes the full training state under `dir` (created if missing).
pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut m = String::new();
    writeln!(m, "tac-checkpoint {MANIFEST_VERSION}").unwrap();
    writeln!(m, "graph {}", state.graph_name).unwrap();
    writeln!(m, "stage {}", state.stage.as_str()).unwrap();
    writeln!(m, "epoch {}", state.epoch).unwrap();
    writeln!(m, "pruned-rate {}", match state.pruned_rate {
        Some(r) => r.to_string(),
        None => "-".into(),
    })
    .unwrap();
    writeln!(m, "quant-bits {}", match state.quant_bits {
        Some(b) => b.to_string(),
        None => "-".into(),
    })
    .unwrap();
    writeln!(m, "prune-schedule {}", if state.prune_history.is_empty() {
        "-".to_string()
    } else {
        state
            .prune_history
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",")
    })
    .unwrap();
    writeln!(m, "rng-seed {}", hex(&state.rng.get_seed())).unwrap();
    writeln!(m, "rng-word-pos {}", state.rng.get_word_pos()).unwrap();
    writeln!(
        m,
        "input {} {} {}",
        state.net.input_channels, state.net.input_h, state.net.input_w
    )
    .unwrap();
    writeln!(m, "classes {}", state.net.num_classes).unwrap();

    let cfg = state.opt.cfg;
    writeln!(
        m,
        "opt adam step={} beta1={} beta2={} eps={} wd={}",
        state.opt.step_count(),
        cfg.beta1,
        cfg.beta2,
        cfg.eps,
        cfg.weight_decay
    )
    .unwrap();
    let (moments_m, moments_v) = state.opt.moments();
    writeln!(m, "opt-groups {}", moments_m.len()).unwrap();
    for (g, (mm, vv)) in moments_m.iter().zip(moments_v).enumerate() {
        write_blob(dir, &format!("opt.m{g}.bin"), &flat_tensor(mm).to_bytes())?;
        write_blob(dir, &format!("opt.v{g}.bin"), &flat_tensor(vv).to_bytes())?;
    }

    writeln!(m, "layers {}", state.net.layers.len()).unwrap();
    for (i, layer) in state.net.layers.iter().enumerate() {
        match layer {
            NetLayer::Conv(c) => {
                let g = &c.geom;
                writeln!(
                    m,
                    "layer {i} conv in={} out={} kh={} kw={} stride={} pad={} h={} w={} binary={} scaled={}",
                    g.in_channels,
                    g.out_channels,
                    g.kernel_h,
                    g.kernel_w,
                    g.stride,
                    g.padding,
                    g.input_h,
                    g.input_w,
                    c.binary as u8,
                    c.scaled as u8
                )
                .unwrap();
                write_blob(dir, &format!("l{i}.w.bin"), &flat_tensor(&c.weights).to_bytes())?;
                write_blob(dir, &format!("l{i}.b.bin"), &flat_tensor(&c.bias).to_bytes())?;
            }
            NetLayer::Pool(p) => {
                writeln!(m, "layer {i} pool c={} h={} w={}", p.channels, p.input_h, p.input_w)
                    .unwrap();
            }
            NetLayer::Sign(_) => writeln!(m, "layer {i} sign").unwrap(),
            NetLayer::Relu(_) => writeln!(m, "layer {i} relu").unwrap(),
            NetLayer::Fc(fc) => {
                writeln!(
                    m,
                    "layer {i} fc in={} out={} mask={}",
                    fc.in_features,
                    fc.out_features,
                    fc.mask.is_some() as u8
                )
                .unwrap();
                write_blob(dir, &format!("l{i}.w.bin"), &flat_tensor(&fc.weights).to_bytes())?;
                write_blob(dir, &format!("l{i}.b.bin"), &flat_tensor(&fc.bias).to_bytes())?;
                if let Some(mask) = &fc.mask {
                    let bits = BitTensor::from_fn(mask.shape().to_vec(), |j| mask.is_kept(j))?;
                    write_blob(dir, &format!("l{i}.mask.bin"), &bits.to_bytes())?;
                }
            }
            NetLayer::QuantFc(q) => {
                writeln!(m, "layer {i} qfc").unwrap();
                write_blob(dir, &format!("l{i}.sq.bin"), &q.layer.to_bytes())?;
                write_blob(dir, &format!("l{i}.b.bin"), &flat_tensor(&q.bias).to_bytes())?;
            }
        }
    }

    writeln!(m, "history {}", state.history.len()).unwrap();
    for h in &state.history {
        writeln!(m, "h {} {} {}", h.epoch, h.loss, h.accuracy).unwrap();
    }
    fs::write(dir.join(MANIFEST_NAME), m)?;
    Ok(())
}

struct Fields<'a>(HashMap<&'a str, &'a str>);

impl<'a> Fields<'a> {
    fn parse(tokens: &[&'a str]) -> Self {
        let mut map = HashMap::new();
        for t in tokens {
            if let Some((k, v)) = t.split_once('=') {
                map.insert(k, v);
            }
        }
        Fields(map)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.0
            .get(key)
            .ok_or_else(|| TacError::CorruptData(format!("missing field {key}")))?
            .parse()
            .map_err(|_| TacError::CorruptData(format!("bad value for {key}")))
    }
}

/// Restores a training state saved by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let manifest = fs::read_to_string(dir.join(MANIFEST_NAME)).map_err(|e| {
        TacError::CorruptData(format!("cannot read {}: {e}", dir.join(MANIFEST_NAME).display()))
    })?;
    let mut lines = manifest.lines();
    let header = lines
        .next()
        .ok_or_else(|| TacError::CorruptData("empty manifest".into()))?;
    let version: u32 = header
        .strip_prefix("tac-checkpoint ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| TacError::CorruptData(format!("bad manifest header '{header}'")))?;
    if version != MANIFEST_VERSION {
        return Err(TacError::CorruptData(format!(
            "manifest version {version} unsupported (want {MANIFEST_VERSION})"
        )));
    }

    let mut graph_name = String::new();
    let mut stage = Stage::Trained;
    let mut epoch = 0usize;
    let mut pruned_rate = None;
    let mut prune_history: Vec<f64> = Vec::new();
    let mut quant_bits = None;
    let mut rng_seed = [0u8; 32];
    let mut rng_word_pos = 0u128;
    let mut input = (0usize, 0usize, 0usize);
    let mut classes = 0usize;
    let mut adam_cfg = AdamConfig::default();
    let mut adam_step = 0u64;
    let mut opt_groups = 0usize;
    let mut layers: Vec<NetLayer> = Vec::new();
    let mut history: Vec<EpochStats> = Vec::new();

    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["graph", name] => graph_name = name.to_string(),
            ["stage", s] => stage = Stage::parse(s)?,
            ["epoch", e] => {
                epoch = e
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad epoch".into()))?
            }
            ["pruned-rate", "-"] => pruned_rate = None,
            ["pruned-rate", r] => {
                pruned_rate = Some(
                    r.parse()
                        .map_err(|_| TacError::CorruptData("bad pruned-rate".into()))?,
                )
            }
            ["prune-schedule", "-"] => prune_history.clear(),
            ["prune-schedule", rates] => {
                prune_history = rates
                    .split(',')
                    .map(|r| {
                        r.parse()
                            .map_err(|_| TacError::CorruptData("bad prune-schedule".into()))
                    })
                    .collect::<Result<_>>()?
            }
            ["quant-bits", "-"] => quant_bits = None,
            ["quant-bits", b] => {
                quant_bits = Some(
                    b.parse()
                        .map_err(|_| TacError::CorruptData("bad quant-bits".into()))?,
                )
            }
            ["rng-seed", s] => {
                let bytes = unhex(s)?;
                if bytes.len() != 32 {
                    return Err(TacError::CorruptData("rng seed must be 32 bytes".into()));
                }
                rng_seed.copy_from_slice(&bytes);
            }
            ["rng-word-pos", p] => {
                rng_word_pos = p
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad rng-word-pos".into()))?
            }
            ["input", c, h, w] => {
                input = (
                    c.parse().map_err(|_| TacError::CorruptData("bad input".into()))?,
                    h.parse().map_err(|_| TacError::CorruptData("bad input".into()))?,
                    w.parse().map_err(|_| TacError::CorruptData("bad input".into()))?,
                )
            }
            ["classes", c] => {
                classes = c
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad classes".into()))?
            }
            ["opt", "adam", rest @ ..] => {
                let f = Fields::parse(rest);
                adam_step = f.get("step")?;
                adam_cfg = AdamConfig {
                    beta1: f.get("beta1")?,
                    beta2: f.get("beta2")?,
                    eps: f.get("eps")?,
                    weight_decay: f.get("wd")?,
                };
            }
            ["opt-groups", g] => {
                opt_groups = g
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad opt-groups".into()))?
            }
            ["layers", _] => {}
            ["layer", idx, kind, rest @ ..] => {
                let i: usize = idx
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad layer index".into()))?;
                if i != layers.len() {
                    return Err(TacError::CorruptData(format!(
                        "layer {i} out of order (expected {})",
                        layers.len()
                    )));
                }
                let f = Fields::parse(rest);
                let layer = match *kind {
                    "conv" => {
                        let geom = ConvGeometry {
                            in_channels: f.get("in")?,
                            out_channels: f.get("out")?,
                            kernel_h: f.get("kh")?,
                            kernel_w: f.get("kw")?,
                            stride: f.get("stride")?,
                            padding: f.get("pad")?,
                            input_h: f.get("h")?,
                            input_w: f.get("w")?,
                        };
                        let binary: u8 = f.get("binary")?;
                        let scaled: u8 = f.get("scaled")?;
                        let mut rng = ChaCha8Rng::seed_from_u64(0);
                        let mut c = ConvLayer::new(geom, binary != 0, scaled != 0, &mut rng);
                        c.weights = read_tensor(dir, &format!("l{i}.w.bin"))?;
                        c.bias = read_tensor(dir, &format!("l{i}.b.bin"))?;
                        let wlen =
                            geom.out_channels * geom.in_channels * geom.kernel_h * geom.kernel_w;
                        if c.weights.len() != wlen || c.bias.len() != geom.out_channels {
                            return Err(TacError::CorruptData(format!(
                                "layer {i}: blob sizes disagree with geometry"
                            )));
                        }
                        c.w_grad = vec![0.0; wlen];
                        c.b_grad = vec![0.0; geom.out_channels];
                        NetLayer::Conv(c)
                    }
                    "pool" => NetLayer::Pool(PoolLayer::new(f.get("c")?, f.get("h")?, f.get("w")?)),
                    "sign" => NetLayer::Sign(SignLayer::default()),
                    "relu" => NetLayer::Relu(ReluLayer::default()),
                    "fc" => {
                        let in_f: usize = f.get("in")?;
                        let out_f: usize = f.get("out")?;
                        let mut rng = ChaCha8Rng::seed_from_u64(0);
                        let mut fc = FcLayer::new(in_f, out_f, &mut rng);
                        fc.weights = read_tensor(dir, &format!("l{i}.w.bin"))?;
                        fc.bias = read_tensor(dir, &format!("l{i}.b.bin"))?;
                        if fc.weights.len() != in_f * out_f || fc.bias.len() != out_f {
                            return Err(TacError::CorruptData(format!(
                                "layer {i}: blob sizes disagree with dims"
                            )));
                        }
                        let has_mask: u8 = f.get("mask")?;
                        if has_mask != 0 {
                            let bits =
                                BitTensor::from_bytes(&fs::read(dir.join(format!("l{i}.mask.bin")))?)?;
                            let flags: Vec<bool> =
                                (0..bits.logical_len()).map(|j| bits.get(j)).collect();
                            fc.mask = Some(PruneMask::new(bits.shape().to_vec(), flags)?);
                        }
                        NetLayer::Fc(fc)
                    }
                    "qfc" => {
                        let sparse =
                            SparseQuantLayer::from_bytes(&fs::read(dir.join(format!("l{i}.sq.bin")))?)?;
                        let bias = read_tensor(dir, &format!("l{i}.b.bin"))?;
                        if bias.len() != sparse.rows() {
                            return Err(TacError::CorruptData(format!(
                                "layer {i}: bias length disagrees with rows"
                            )));
                        }
                        NetLayer::QuantFc(QuantFcLayer::new(sparse, bias))
                    }
                    other => {
                        return Err(TacError::CorruptData(format!(
                            "unknown layer kind '{other}'"
                        )))
                    }
                };
                layers.push(layer);
            }
            ["history", _] => {}
            ["h", e, loss, acc] => history.push(EpochStats {
                epoch: e
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad history".into()))?,
                loss: loss
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad history".into()))?,
                accuracy: acc
                    .parse()
                    .map_err(|_| TacError::CorruptData("bad history".into()))?,
            }),
            other => {
                return Err(TacError::CorruptData(format!(
                    "unrecognized manifest line: {other:?}"
                )))
            }
        }
    }

    if layers.is_empty() {
        return Err(TacError::CorruptData("manifest lists no layers".into()));
    }

    let mut moments_m = Vec::with_capacity(opt_groups);
    let mut moments_v = Vec::with_capacity(opt_groups);
    for g in 0..opt_groups {
        moments_m.push(read_tensor(dir, &format!("opt.m{g}.bin"))?);
        moments_v.push(read_tensor(dir, &format!("opt.v{g}.bin"))?);
    }

    let mut rng = ChaCha8Rng::from_seed(rng_seed);
    rng.set_word_pos(rng_word_pos);

    Ok(TrainState {
        net: Network {
            layers,
            input_channels: input.0,
            input_h: input.1,
            input_w: input.2,
            num_classes: classes,
        },
        opt: Adam::restore(adam_cfg, adam_step, moments_m, moments_v),
        rng,
        epoch,
        stage,
        graph_name,
        pruned_rate,
        prune_history,
        quant_bits,
        history,
    })
}
