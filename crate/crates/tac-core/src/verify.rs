//! Randomized self-check suites behind the `verify` command: kernel
//! equivalence against a dense reference, pruning against a full sort, and
//! quantization/serialization roundtrips. Each suite is driven by an
//! explicit seed so failures reproduce exactly.

use crate::binarize::binarize_filters;
use crate::compress::{decode, prune_by_magnitude, prune_quantize, SparseQuantLayer};
use crate::tensor::{pack, Tensor};
use crate::xnor::{binary_conv2d, binary_linear, ConvGeometry, Padding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub instances: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Test-only fault hook: in debug builds, setting `TAC_VERIFY_FAULT`
/// corrupts one kernel expectation so the failure path can be exercised
/// end to end.
fn fault_injected() -> bool {
    cfg!(debug_assertions) && std::env::var_os("TAC_VERIFY_FAULT").is_some()
}

fn random_pm_one(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// Dense convolution over unpacked values; the reference the packed kernel
/// must match bit for bit on the integer accumulations.
fn dense_conv(input: &[f64], weights: &[f64], geom: &ConvGeometry, pad: f64) -> Vec<f64> {
    let (oh, ow) = (geom.output_h(), geom.output_w());
    let mut out = vec![0.0; geom.out_channels * oh * ow];
    for k in 0..geom.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for c in 0..geom.in_channels {
                    for ky in 0..geom.kernel_h {
                        for kx in 0..geom.kernel_w {
                            let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                            let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                            let x = if iy < 0
                                || ix < 0
                                || iy >= geom.input_h as isize
                                || ix >= geom.input_w as isize
                            {
                                pad
                            } else {
                                input[(c * geom.input_h + iy as usize) * geom.input_w
                                    + ix as usize]
                            };
                            let w = weights[((k * geom.in_channels + c) * geom.kernel_h + ky)
                                * geom.kernel_w
                                + kx];
                            acc += x * w;
                        }
                    }
                }
                out[(k * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Packed XNOR conv and linear kernels vs. the dense reference.
pub fn kernel_equivalence_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..instances {
        if case % 2 == 0 {
            let geom = ConvGeometry {
                in_channels: rng.gen_range(1..=8),
                out_channels: rng.gen_range(1..=8),
                kernel_h: rng.gen_range(1..=5),
                kernel_w: rng.gen_range(1..=5),
                stride: rng.gen_range(1..=2),
                padding: rng.gen_range(0..=2),
                input_h: rng.gen_range(5..=16),
                input_w: rng.gen_range(5..=16),
            };
            let input = random_pm_one(&mut rng, geom.in_channels * geom.input_h * geom.input_w);
            let weights = random_pm_one(&mut rng, geom.patch_len() * geom.out_channels);
            let it = Tensor::new(
                vec![geom.in_channels, geom.input_h, geom.input_w],
                input.clone(),
            )
            .unwrap();
            let wt = Tensor::new(
                vec![
                    geom.out_channels,
                    geom.in_channels,
                    geom.kernel_h,
                    geom.kernel_w,
                ],
                weights.clone(),
            )
            .unwrap();
            let bank = binarize_filters(&wt, false).unwrap();
            let packed = pack(&it).unwrap();
            for (mode, pad) in [
                (Padding::PlusOne, 1.0),
                (Padding::MinusOne, -1.0),
                (Padding::Zero, 0.0),
            ] {
                let got = match binary_conv2d(&packed, &bank, &geom, mode) {
                    Ok(t) => t,
                    Err(e) => {
                        failures.push(format!("case {case} ({mode:?}): kernel error {e}"));
                        continue;
                    }
                };
                let mut want = dense_conv(&input, &weights, &geom, pad);
                if fault_injected() && case == 0 {
                    want[0] += 2.0;
                }
                if got.data() != &want[..] {
                    failures.push(format!(
                        "case {case} ({mode:?}): conv mismatch for geometry {geom:?}"
                    ));
                }
            }
        } else {
            let out_f = rng.gen_range(1..=8);
            let in_f = rng.gen_range(1..=200);
            let x = random_pm_one(&mut rng, in_f);
            let w = random_pm_one(&mut rng, in_f * out_f);
            let xt = Tensor::from_vec(x.clone()).unwrap();
            let wt = Tensor::new(vec![out_f, in_f], w.clone()).unwrap();
            let bank = binarize_filters(&wt, false).unwrap();
            let got = binary_linear(&pack(&xt).unwrap(), &bank).unwrap();
            for k in 0..out_f {
                let want: f64 = (0..in_f).map(|j| x[j] * w[k * in_f + j]).sum();
                if got.data()[k] != want {
                    failures.push(format!("case {case}: linear row {k} mismatch"));
                }
            }
        }
    }
    SuiteReport {
        name: "kernel-equivalence",
        instances,
        failures,
    }
}

/// Selection-based pruning vs. a full stable sort, plus nesting across an
/// ascending pair of rates.
pub fn pruning_oracle_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7072756e65);
    let mut failures = Vec::new();
    for case in 0..instances {
        let n = rng.gen_range(1..=1000);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let r1: f64 = rng.gen_range(0.0..0.95);
        let r2: f64 = (r1 + rng.gen_range(0.0..0.5)).min(0.9999);
        let w = Tensor::from_vec(values.clone()).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            (values[a].abs(), a)
                .partial_cmp(&(values[b].abs(), b))
                .unwrap()
        });

        for (which, rate) in [("r1", r1), ("r2", r2)] {
            let mask = match prune_by_magnitude(&w, rate) {
                Ok(m) => m,
                Err(e) => {
                    failures.push(format!("case {case} {which}: {e}"));
                    continue;
                }
            };
            let remove = (rate * n as f64).floor() as usize;
            let mut expect = vec![true; n];
            for &i in &order[..remove] {
                expect[i] = false;
            }
            if mask.flags() != expect {
                failures.push(format!("case {case} {which}: mask disagrees with sort"));
            }
        }
        let m1 = prune_by_magnitude(&w, r1).unwrap();
        let m2 = prune_by_magnitude(&w, r2).unwrap();
        if (0..n).any(|i| m2.is_kept(i) && !m1.is_kept(i)) {
            failures.push(format!("case {case}: kept sets do not nest ({r1} vs {r2})"));
        }
    }
    SuiteReport {
        name: "pruning-oracle",
        instances,
        failures,
    }
}

/// Encode/decode and serialize/deserialize roundtrips on random layers.
pub fn quantization_roundtrip_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7175616e74);
    let mut failures = Vec::new();
    for case in 0..instances {
        let rows = rng.gen_range(1..=16);
        let cols = rng.gen_range(1..=16);
        let rate = rng.gen_range(0.0..0.9);
        let bits = rng.gen_range(1..=5);
        // f32-grid weights keep every roundtrip exact end to end.
        let w = Tensor::new(
            vec![rows, cols],
            (0..rows * cols)
                .map(|_| rng.gen_range(-1.0f32..1.0) as f64)
                .collect(),
        )
        .unwrap();
        let (mask, layer) = match prune_quantize(&w, rate, bits) {
            Ok(x) => x,
            Err(e) => {
                failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let dense = decode(&layer);
        for i in 0..rows * cols {
            let v = dense.data()[i];
            if !mask.is_kept(i) && v != 0.0 {
                failures.push(format!("case {case}: pruned position {i} decoded {v}"));
                break;
            }
            if mask.is_kept(i) && !layer.codebook().levels().contains(&v) {
                failures.push(format!("case {case}: kept position {i} not on a level"));
                break;
            }
        }
        let bytes = layer.to_bytes();
        match SparseQuantLayer::from_bytes(&bytes) {
            Ok(back) => {
                if back != layer {
                    failures.push(format!("case {case}: serialize roundtrip differs"));
                } else if back.to_bytes() != bytes {
                    failures.push(format!("case {case}: bytes not stable"));
                }
            }
            Err(e) => failures.push(format!("case {case}: deserialize failed: {e}")),
        }
        // Lossless check when the codebook can hold every kept value.
        let kept: Vec<f64> = w
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| mask.is_kept(*i))
            .map(|(_, &v)| v)
            .collect();
        let mut distinct = kept.clone();
        distinct.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        if distinct.len() <= 1 << bits {
            for (i, &v) in w.data().iter().enumerate() {
                if mask.is_kept(i) && dense.data()[i] != v {
                    failures.push(format!("case {case}: lossless case not exact at {i}"));
                    break;
                }
            }
        }
    }
    SuiteReport {
        name: "quantization-roundtrip",
        instances,
        failures,
    }
}

/// Runs all three suites.
pub fn run_all(seed: u64, instances: usize) -> Vec<SuiteReport> {
    vec![
        kernel_equivalence_suite(seed, instances),
        pruning_oracle_suite(seed, instances),
        quantization_roundtrip_suite(seed, instances),
    ]
}
