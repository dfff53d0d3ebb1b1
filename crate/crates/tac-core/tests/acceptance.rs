//! Acceptance suite: one test per shipped claim, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//! Reference values are checked against independent oracles implemented in
//! this file, not against the library's own code paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::Instant;
use tac_core::analyzer::{analyze, compare, AnalyzerOptions, LayerKind, ModelGraph, Policy};
use tac_core::binarize::binarize_filters;
use tac_core::compress::{
    decode, kmeans_quantize, prune_by_magnitude, prune_quantize, reconstruction_mse,
    SparseQuantLayer,
};
use tac_core::graphs::{self, NamedPolicy};
use tac_core::tensor::{pack, Tensor};
use tac_core::train::{
    self, build_network, evaluate, iterative_prune_finetune, quantize_finetune, train_binary_net,
    TrainConfig,
};
use tac_core::xnor::{binary_conv2d, binary_linear, ConvGeometry, Padding};

const MIB: f64 = 1024.0 * 1024.0;

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

// ---------------------------------------------------------------------------
// Criterion 1: packed kernels equal a brute-force dense reference exactly.
// ---------------------------------------------------------------------------

/// Brute-force dense convolution over plus/minus-one values, written
/// independently of the packed implementation.
fn oracle_conv(input: &[f64], weights: &[f64], g: &ConvGeometry, pad: f64) -> Vec<f64> {
    let (oh, ow) = (g.output_h(), g.output_w());
    let mut out = vec![0.0; g.out_channels * oh * ow];
    for k in 0..g.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for c in 0..g.in_channels {
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            let x = if iy < 0
                                || ix < 0
                                || iy >= g.input_h as isize
                                || ix >= g.input_w as isize
                            {
                                pad
                            } else {
                                input[(c * g.input_h + iy as usize) * g.input_w + ix as usize]
                            };
                            acc += x
                                * weights[((k * g.in_channels + c) * g.kernel_h + ky)
                                    * g.kernel_w
                                    + kx];
                        }
                    }
                }
                out[(k * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

#[test]
fn criterion_1_kernel_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE01);
    let pm = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
    };

    let mut instances = 0usize;
    for _ in 0..300 {
        let g = ConvGeometry {
            in_channels: rng.gen_range(1..=8),
            out_channels: rng.gen_range(1..=8),
            kernel_h: rng.gen_range(1..=5),
            kernel_w: rng.gen_range(1..=5),
            stride: rng.gen_range(1..=3),
            padding: rng.gen_range(0..=2),
            input_h: rng.gen_range(5..=16),
            input_w: rng.gen_range(5..=16),
        };
        let input = pm(&mut rng, g.in_channels * g.input_h * g.input_w);
        let weights = pm(&mut rng, g.out_channels * g.patch_len());
        let packed = pack(
            &Tensor::new(vec![g.in_channels, g.input_h, g.input_w], input.clone()).unwrap(),
        )
        .unwrap();
        let bank = binarize_filters(
            &Tensor::new(
                vec![g.out_channels, g.in_channels, g.kernel_h, g.kernel_w],
                weights.clone(),
            )
            .unwrap(),
            false,
        )
        .unwrap();
        for (mode, pad) in [
            (Padding::PlusOne, 1.0),
            (Padding::MinusOne, -1.0),
            (Padding::Zero, 0.0),
        ] {
            let got = binary_conv2d(&packed, &bank, &g, mode).unwrap();
            let want = oracle_conv(&input, &weights, &g, pad);
            assert_eq!(got.data(), &want[..], "conv mismatch {g:?} {mode:?}");
        }
        instances += 1;
    }
    for _ in 0..200 {
        let out_f = rng.gen_range(1..=8);
        let in_f = rng.gen_range(1..=256);
        let x = pm(&mut rng, in_f);
        let w = pm(&mut rng, out_f * in_f);
        let bank = binarize_filters(&Tensor::new(vec![out_f, in_f], w.clone()).unwrap(), false)
            .unwrap();
        let got = binary_linear(&pack(&Tensor::from_vec(x.clone()).unwrap()).unwrap(), &bank)
            .unwrap();
        for k in 0..out_f {
            let want: f64 = (0..in_f).map(|j| x[j] * w[k * in_f + j]).sum();
            assert_eq!(got.data()[k], want, "linear mismatch at row {k}");
        }
        instances += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(instances >= 500);
    assert!(secs < 60.0, "took {secs:.1}s");
    println!(
        "criterion 1 (kernel equivalence): {instances} instances, zero tolerance, {secs:.1}s: PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: full-precision reference rows for the eight-layer 227x227
// network, within +/-3% of the published figures.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_alexnet_full_precision_rows() {
    let g = graphs::alexnet();
    let rows = analyze(&g, &AnalyzerOptions::default()).unwrap();
    // (name, published weights, published FLOPs). The total-FLOPs row uses
    // the more precise 1.45e9 figure the same source quotes elsewhere; its
    // coarser "1.5G" rounding is 3.4% from the exact sum.
    let expected: &[(&str, f64, f64)] = &[
        ("conv1", 35e3, 211e6),
        ("conv2", 307e3, 448e6),
        ("conv3", 885e3, 299e6),
        ("conv4", 663e3, 224e6),
        ("conv5", 442e3, 150e6),
        ("fc6", 38e6, 75e6),
        ("fc7", 17e6, 34e6),
        ("fc8", 4e6, 8e6),
    ];
    for (row, &(name, w, f)) in rows.iter().zip(expected) {
        assert_eq!(row.name, name);
        assert!(
            rel_err(row.weights as f64, w) <= 0.03,
            "{name} weights {} vs {w}",
            row.weights
        );
        assert!(
            rel_err(row.flops, f) <= 0.03,
            "{name} flops {} vs {f}",
            row.flops
        );
    }
    let total_w: u64 = rows.iter().map(|r| r.weights).sum();
    let total_f: f64 = rows.iter().map(|r| r.flops).sum();
    assert!(rel_err(total_w as f64, 61e6) <= 0.03, "total weights {total_w}");
    assert!(rel_err(total_f, 1.45e9) <= 0.03, "total flops {total_f}");
    println!(
        "criterion 2 (full-precision rows): 8 layers + totals within 3% \
         (total {total_w} weights, {total_f:.4e} flops): PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: computation savings of the xnor and tac policies.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_computation_savings() {
    let base = graphs::alexnet();
    let opts = AnalyzerOptions::default();
    let full = graphs::apply_policy(&base, NamedPolicy::Full, 0.75, 4).unwrap();

    let xnor = graphs::apply_policy(&base, NamedPolicy::Xnor, 0.75, 4).unwrap();
    let xnor_saving = compare(&full, &xnor, &opts).unwrap().computation_saving;
    assert!(
        rel_err(xnor_saving, 6.1) <= 0.05,
        "xnor saving {xnor_saving}"
    );

    let tac = graphs::apply_policy(&base, NamedPolicy::Tac, 0.75, 4).unwrap();
    let tac_saving = compare(&full, &tac, &opts).unwrap().computation_saving;
    assert!(rel_err(tac_saving, 5.5) <= 0.05, "tac saving {tac_saving}");
    println!(
        "criterion 3 (computation saving, 1-bit MAC at 1/64 FLOP): \
         xnor {xnor_saving:.3}x vs 6.1x, tac {tac_saving:.3}x vs 5.5x, within 5%: PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: model size columns. The compressed-size figure is only
// reproducible when sparse index storage is not charged, so the check runs
// under the documented index-bits=0 accounting knob.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_model_size_columns() {
    let base = graphs::alexnet();
    let opts = AnalyzerOptions {
        index_bits: 0,
        include_bias: false,
    };
    let full = graphs::apply_policy(&base, NamedPolicy::Full, 0.75, 4).unwrap();
    let full_mib = tac_core::analyzer::model_size(&full, &opts)
        .unwrap()
        .total_bytes() as f64
        / MIB;
    assert!(rel_err(full_mib, 232.0) <= 0.005, "full size {full_mib} MiB");

    let tac = graphs::apply_policy(&base, NamedPolicy::Tac, 0.75, 4).unwrap();
    let report = compare(&full, &tac, &opts).unwrap();
    let tac_mib = report.total_bits as f64 / 8.0 / MIB;
    assert!(rel_err(tac_mib, 8.9) <= 0.15, "tac size {tac_mib} MiB");
    assert!(
        rel_err(report.compression_rate, 26.1) <= 0.15,
        "rate {}",
        report.compression_rate
    );
    println!(
        "criterion 4 (model size, index-bits=0 accounting): full {full_mib:.2}MiB vs 232MB, \
         tac {tac_mib:.2}MiB vs 8.9MB, rate {:.2}x vs 26.1x: PASS",
        report.compression_rate
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: pruning equals full-sort selection and nests across rates.
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_pruning_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE05);
    let mut instances = 0usize;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=600);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let w = Tensor::from_vec(values.clone()).unwrap();
        let r1: f64 = rng.gen_range(0.0..0.95);
        let r2: f64 = (r1 + rng.gen_range(0.0..0.4)).min(0.9999);

        // Independent oracle: stable full sort on (magnitude, index).
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            (values[a].abs(), a)
                .partial_cmp(&(values[b].abs(), b))
                .unwrap()
        });
        let expect = |rate: f64| -> Vec<bool> {
            let remove = (rate * n as f64).floor() as usize;
            let mut kept = vec![true; n];
            for &i in &order[..remove] {
                kept[i] = false;
            }
            kept
        };

        let m1 = prune_by_magnitude(&w, r1).unwrap();
        let m2 = prune_by_magnitude(&w, r2).unwrap();
        assert_eq!(m1.flags(), &expect(r1)[..]);
        assert_eq!(m2.flags(), &expect(r2)[..]);
        assert_eq!(m1.kept_count(), n - (r1 * n as f64).floor() as usize);
        for i in 0..n {
            assert!(!m2.is_kept(i) || m1.is_kept(i), "kept sets do not nest");
        }
        instances += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s");
    println!(
        "criterion 5 (pruning oracle): {instances} random vectors, sort-equal + nested, \
         {secs:.1}s: PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: quantization properties.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_quantization_properties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE06);

    // Lossless when distinct values fit the codebook (values on the f32
    // grid, the storage precision of levels).
    for _ in 0..200 {
        let b = rng.gen_range(1..=6u32);
        let k = rng.gen_range(1..=(1usize << b));
        let distinct: Vec<f64> = {
            let mut s = std::collections::BTreeSet::new();
            while s.len() < k {
                s.insert((rng.gen_range(-100i32..100), ()));
            }
            s.into_iter().map(|(v, _)| v as f64 / 16.0).collect()
        };
        let weights: Vec<f64> = (0..rng.gen_range(1..200))
            .map(|_| distinct[rng.gen_range(0..k)])
            .collect();
        let (cb, codes) = kmeans_quantize(&weights, b).unwrap();
        for (i, &w) in weights.iter().enumerate() {
            assert_eq!(cb.levels()[codes[i] as usize], w, "lossless case not exact");
        }
    }

    // Reconstruction error never rises with more bits.
    for _ in 0..30 {
        let n = rng.gen_range(30..300);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut prev = f64::INFINITY;
        for b in 1..=6 {
            let (cb, codes) = kmeans_quantize(&weights, b).unwrap();
            let mse = reconstruction_mse(&weights, &cb, &codes);
            assert!(
                mse <= prev * (1.0 + 1e-9) + 1e-12,
                "MSE rose from {prev} to {mse} at {b} bits"
            );
            prev = mse;
        }
    }

    // Encode/decode and serialize/deserialize roundtrips are exact.
    for _ in 0..100 {
        let rows = rng.gen_range(1..=20);
        let cols = rng.gen_range(1..=20);
        let rate = rng.gen_range(0.0..0.9);
        let bits = rng.gen_range(1..=5);
        let w = Tensor::new(
            vec![rows, cols],
            (0..rows * cols)
                .map(|_| rng.gen_range(-1.0f32..1.0) as f64)
                .collect(),
        )
        .unwrap();
        let (mask, layer) = prune_quantize(&w, rate, bits).unwrap();
        let dense = decode(&layer);
        for i in 0..rows * cols {
            if mask.is_kept(i) {
                let nearest = layer.codebook().nearest(w.data()[i]);
                assert_eq!(dense.data()[i], layer.codebook().levels()[nearest]);
            } else {
                assert_eq!(dense.data()[i], 0.0);
            }
        }
        let bytes = layer.to_bytes();
        let back = SparseQuantLayer::from_bytes(&bytes).unwrap();
        assert_eq!(back, layer, "serialize/deserialize roundtrip differs");
        assert_eq!(back.to_bytes(), bytes);
    }

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s");
    println!(
        "criterion 6 (quantization): lossless fit exact, MSE monotone in bits, \
         roundtrips exact, {secs:.1}s: PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

/// Loss of the network on one sample, as a pure function of its current
/// parameters.
fn sample_loss(net: &mut train::Network, x: &[f64], label: usize) -> f64 {
    let logits = net.forward(x);
    train::net::softmax_cross_entropy(&logits, label).0
}

fn gradient_check(net: &mut train::Network, x: &[f64], label: usize) -> (f64, usize) {
    // Analytic gradients from one backward pass.
    net.zero_grads();
    let logits = net.forward(x);
    let (_, dlogits) = train::net::softmax_cross_entropy(&logits, label);
    net.backward(&dlogits);
    let mut analytic: Vec<f64> = Vec::new();
    net.visit_params(&mut |_, _, g| analytic.extend_from_slice(g));

    // Central finite differences per parameter.
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut count = 0usize;
    let mut flat_index = 0usize;
    let n_params = analytic.len();
    for pi in 0..n_params {
        let mut bump = |delta: f64, net: &mut train::Network| {
            let mut seen = 0usize;
            net.visit_params(&mut |_, p, _| {
                if pi >= seen && pi < seen + p.len() {
                    p[pi - seen] += delta;
                }
                seen += p.len();
            });
        };
        bump(h, net);
        let plus = sample_loss(net, x, label);
        bump(-2.0 * h, net);
        let minus = sample_loss(net, x, label);
        bump(h, net);
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[pi].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((analytic[pi] - numeric).abs() / denom);
        count += 1;
        flat_index += 1;
    }
    let _ = flat_index;
    (worst, count)
}

#[test]
fn criterion_7_gradient_check() {
    let start = Instant::now();
    // Fully differentiable tiny net: conv 1->2 k2 on 4x4 (10 params) then
    // fc 18->2 (38 params), 48 parameters total.
    let graph = ModelGraph {
        name: "grad-check".into(),
        layers: vec![
            tac_core::analyzer::Layer {
                name: "conv1".into(),
                kind: LayerKind::Conv {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_h: 2,
                    kernel_w: 2,
                    stride: 1,
                    padding: 0,
                    groups: 1,
                    input_h: 4,
                    input_w: 4,
                },
                policy: Policy::Full,
            },
            tac_core::analyzer::Layer {
                name: "fc1".into(),
                kind: LayerKind::Fc {
                    in_features: 18,
                    out_features: 2,
                },
                policy: Policy::Full,
            },
        ],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE07);
    let mut net = build_network(&graph, &mut rng).unwrap();
    let total_params = net.parameter_snapshot().len();
    assert!(total_params <= 50, "{total_params} params");

    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for trial in 0..5 {
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = trial % 2;
        let (w, c) = gradient_check(&mut net, &x, label);
        worst = worst.max(w);
        checked += c;
    }
    assert!(worst <= 1e-4, "worst relative gradient error {worst:e}");

    // A net with a binarized conv: the fc parameters sit downstream of the
    // sign activation, so finite differences stay valid for them.
    let mut g2 = graph.clone();
    g2.layers[0].policy = Policy::Binary { scaled: true };
    let mut bnet = build_network(&g2, &mut rng).unwrap();
    // Freeze the conv so only the non-binarized parameters are visited.
    for layer in &mut bnet.layers {
        if let train::net::NetLayer::Conv(c) = layer {
            c.frozen = true;
        }
    }
    let mut bworst = 0.0f64;
    for trial in 0..5 {
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (w, c) = gradient_check(&mut bnet, &x, trial % 2);
        bworst = bworst.max(w);
        checked += c;
    }
    assert!(bworst <= 1e-4, "binary-net fc gradient error {bworst:e}");

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s");
    println!(
        "criterion 7 (gradient check): {checked} parameter derivatives, worst relative \
         error {worst:.2e} (differentiable) / {bworst:.2e} (fc under binary conv), \
         tolerance 1e-4: PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: the whole desk-scale pipeline. Published CIFAR/ImageNet
// accuracy tables are not desk-reproducible; this drives the same stages on
// the deterministic synthetic set.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_desk_scale_pipeline() {
    let start = Instant::now();
    let train_set = train::data::synthetic(2000, 1000);
    let test_set = train::data::synthetic(500, 2000);

    let graph = graphs::apply_policy(&graphs::mnist_small(), NamedPolicy::Tac, 0.75, 4).unwrap();
    let cfg = TrainConfig {
        epochs: 12,
        batch_size: 32,
        fine_tune_lr: 1e-4,
        finetune_epochs: 2,
        seed: 7,
        ..TrainConfig::default()
    };

    // Stage 1: binary-conv training; this is the accuracy baseline.
    let mut state = train_binary_net(&graph, &train_set, &cfg).unwrap();
    let baseline = evaluate(&mut state.net, &test_set).unwrap().top1;

    // Stages 2 and 3: iterative pruning to 75%, then 4-bit quantization.
    iterative_prune_finetune(&mut state, &[0.2, 0.4, 0.6, 0.7, 0.75], &train_set, &cfg).unwrap();
    quantize_finetune(&mut state, 4, &train_set, &cfg).unwrap();
    let final_acc = evaluate(&mut state.net, &test_set).unwrap().top1;

    // Analyzer-reported fc shrink under the documented index-bits=0
    // accounting (codes + levels + offsets, no per-entry index charge).
    let opts = AnalyzerOptions {
        index_bits: 0,
        include_bias: false,
    };
    let full = graphs::apply_policy(&graphs::mnist_small(), NamedPolicy::Full, 0.75, 4).unwrap();
    let fc_bits = |g: &ModelGraph| -> u64 {
        analyze(g, &opts)
            .unwrap()
            .iter()
            .zip(&g.layers)
            .filter(|(_, l)| matches!(l.kind, LayerKind::Fc { .. }))
            .map(|(r, _)| r.bits)
            .sum()
    };
    let fc_shrink = fc_bits(&full) as f64 / fc_bits(&graph) as f64;

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 1800.0, "pipeline took {secs:.0}s");
    assert!(
        baseline - final_acc <= 0.02,
        "accuracy dropped from {baseline} to {final_acc}"
    );
    assert!(fc_shrink >= 8.0, "fc size shrank only {fc_shrink:.1}x");
    println!(
        "criterion 8 (desk-scale pipeline): baseline {baseline:.4}, final {final_acc:.4} \
         (drop <= 2 points), fc size shrink {fc_shrink:.1}x (>= 8x), {secs:.0}s (< 30 min): PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical outputs under a fixed seed.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_determinism() {
    let bin = env!("CARGO_BIN_EXE_tac");
    let mk_cfg = |dir: &Path| -> std::path::PathBuf {
        let p = dir.join("cfg.toml");
        std::fs::write(
            &p,
            format!(
                r#"
model = "mnist-small"
out_dir = "{}"
[dataset]
name = "synthetic"
train_count = 48
test_count = 16
[train]
epochs = 2
batch_size = 16
seed = 5
fine_tune_lr = 1e-4
finetune_epochs = 1
"#,
                dir.join("runs").display()
            ),
        )
        .unwrap();
        p
    };

    // Two identically seeded end-to-end runs: train, then compress.
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [d1.path(), d2.path()] {
        let cfg = mk_cfg(d);
        let t = Command::new(bin)
            .args(["train", "--config"])
            .arg(&cfg)
            .output()
            .unwrap();
        assert!(t.status.success());
        let c = Command::new(bin)
            .args(["compress", "--checkpoint"])
            .arg(d.join("runs/checkpoint"))
            .args(["--config"])
            .arg(&cfg)
            .args(["--rates", "0.5,0.75"])
            .output()
            .unwrap();
        assert!(c.status.success());
    }
    for sub in ["runs/checkpoint", "runs/compressed"] {
        let mut names: Vec<String> = std::fs::read_dir(d1.path().join(sub))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(
                std::fs::read(d1.path().join(sub).join(&n)).unwrap(),
                std::fs::read(d2.path().join(sub).join(&n)).unwrap(),
                "{sub}/{n} differs across identically seeded runs"
            );
        }
    }

    // Reports: analyze and verify are byte-stable too.
    let a1 = Command::new(bin)
        .args(["analyze", "alexnet", "--policy", "tac", "--machine"])
        .output()
        .unwrap();
    let a2 = Command::new(bin)
        .args(["analyze", "alexnet", "--policy", "tac", "--machine"])
        .output()
        .unwrap();
    assert_eq!(a1.stdout, a2.stdout);
    let v1 = Command::new(bin)
        .args(["verify", "--seed", "3", "--instances", "30"])
        .output()
        .unwrap();
    let v2 = Command::new(bin)
        .args(["verify", "--seed", "3", "--instances", "30"])
        .output()
        .unwrap();
    assert!(v1.status.success());
    assert_eq!(v1.stdout, v2.stdout);

    println!(
        "criterion 9 (determinism): checkpoints, compressed models, and reports \
         byte-identical under fixed seeds: PASS"
    );
}
