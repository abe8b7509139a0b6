// Index loops in the oracle mirror the textbook formulas.
#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgbd_tracker::refiner::*;
use rgbd_tracker::synth::make_refiner_dataset;

/// Model with every parameter, biases included, drawn uniformly so that no
/// term of the forward pass is trivially zero.
fn busy_model(seed: u64) -> RefinerModel {
    let mut model = RefinerModel::init(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for (_, values) in model.tensors_mut() {
        for v in values.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    model
}

type Planes = Vec<Vec<f64>>;

fn naive_conv(x: &Planes, side: usize, w: &[f64], b: &[f64]) -> (Planes, usize) {
    let cin = x.len();
    let cout = b.len();
    let out = (side - 1) / 2 + 1;
    let mut y = vec![vec![0.0; out * out]; cout];
    for o in 0..cout {
        for oy in 0..out {
            for ox in 0..out {
                let mut acc = b[o];
                for c in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (2 * oy + ky) as i64 - 1;
                            let ix = (2 * ox + kx) as i64 - 1;
                            if iy < 0 || ix < 0 || iy >= side as i64 || ix >= side as i64 {
                                continue;
                            }
                            let wi = ((o * cin + c) * 3 + ky) * 3 + kx;
                            acc += w[wi] * x[c][iy as usize * side + ix as usize];
                        }
                    }
                }
                y[o][oy * out + ox] = silu(acc);
            }
        }
    }
    (y, out)
}

fn naive_pool(x: &Planes, side: usize, out: usize) -> Planes {
    let bounds = |i: usize| {
        let lo = (i as f64 * side as f64 / out as f64).floor() as usize;
        let hi = ((i + 1) as f64 * side as f64 / out as f64).ceil() as usize;
        lo..hi
    };
    x.iter()
        .map(|plane| {
            let mut y = vec![0.0; out * out];
            for oy in 0..out {
                for ox in 0..out {
                    let (mut s, mut n) = (0.0, 0.0);
                    for iy in bounds(oy) {
                        for ix in bounds(ox) {
                            s += plane[iy * side + ix];
                            n += 1.0;
                        }
                    }
                    y[oy * out + ox] = s / n;
                }
            }
            y
        })
        .collect()
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, &bias)| bias + x.iter().enumerate().map(|(i, v)| w[o * x.len() + i] * v).sum::<f64>())
        .collect()
}

/// Loop-by-loop forward pass written from the architecture description.
fn naive_forward(model: &RefinerModel, input: &RefinerInput) -> [f64; 4] {
    let t: HashMap<String, Vec<f64>> = model.tensors().into_iter().map(|(s, v)| (s.name, v.to_vec())).collect();
    let branch = |prefix: &str, data: &ndarray::Array2<f64>| -> Planes {
        let x: Planes = data.outer_iter().map(|r| r.to_vec()).collect();
        let mut side = 100;
        let mut acts = Vec::new();
        let mut cur = x;
        for layer in 1..=3 {
            let (y, s) = naive_conv(
                &cur,
                side,
                &t[&format!("{prefix}.conv{layer}.weight")],
                &t[&format!("{prefix}.conv{layer}.bias")],
            );
            acts.push((y.clone(), s));
            cur = y;
            side = s;
        }
        let (first, first_side) = &acts[0];
        let mut features = naive_pool(first, *first_side, side);
        features.extend(acts[2].0.clone());
        features
    };
    let mut stacked = branch("color", input.color());
    stacked.extend(branch("depth", input.depth()));
    let n = stacked[0].len();
    let fw = &t["fusion.weight"];
    let fb = &t["fusion.bias"];
    let fused: Planes = (0..fb.len())
        .map(|o| {
            (0..n)
                .map(|p| {
                    silu(
                        fb[o]
                            + (0..stacked.len())
                                .map(|c| fw[o * stacked.len() + c] * stacked[c][p])
                                .sum::<f64>(),
                    )
                })
                .collect()
        })
        .collect();
    let pooled: Vec<f64> = naive_pool(&fused, 13, 4).concat();
    let hidden: Vec<f64> = dense(&t["fc1.weight"], &t["fc1.bias"], &pooled)
        .into_iter()
        .map(silu)
        .collect();
    let logits = dense(&t["fc2.weight"], &t["fc2.bias"], &hidden);
    let mut out = [0.0; 4];
    for (o, z) in out.iter_mut().zip(logits) {
        *o = 1.0 / (1.0 + (-z).exp());
    }
    out
}

#[test]
fn forward_matches_naive_oracle() {
    for seed in [1, 2] {
        let model = busy_model(seed);
        let (input, _) = make_refiner_dataset(1, seed + 10).unwrap().pop().unwrap();
        let fast = forward_raw(&model, &input).unwrap();
        let slow = naive_forward(&model, &input);
        for k in 0..4 {
            assert!(
                (fast[k] - slow[k]).abs() < 1e-9,
                "output {k}: {} vs {}",
                fast[k],
                slow[k]
            );
        }
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let report = seeded_grad_check(GRAD_CHECK_SEED).unwrap();
    assert!(report.checked >= 200, "only {} parameters checked", report.checked);
    assert!(report.max_rel_error < 1e-4, "{report:?}");

    // a biased model and a second sample
    let model = busy_model(5);
    let (input, gt) = make_refiner_dataset(1, 77).unwrap().pop().unwrap();
    let report = grad_check(&model, &input, &gt, GRAD_CHECK_EPS, 9).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn gradient_check_catches_a_wrong_gradient() {
    let model = busy_model(3);
    let (input, gt) = make_refiner_dataset(1, 3).unwrap().pop().unwrap();
    let (_, mut analytic) = gradients(&model, &input, &gt, true).unwrap();
    for (spec, values) in analytic.tensors_mut() {
        if spec.name == "fusion.weight" {
            values.iter_mut().for_each(|v| *v *= 1.05);
        }
    }
    let report = compare_gradients(&model, &input, &gt, &analytic, GRAD_CHECK_EPS, 3).unwrap();
    assert!(report.max_rel_error > 1e-2, "{report:?}");
    assert_eq!(report.worst.0, "fusion.weight");
}

#[test]
fn perfect_prediction_is_a_stationary_point() {
    let model = busy_model(4);
    let (input, _) = make_refiner_dataset(1, 4).unwrap().pop().unwrap();
    let target = forward(&model, &input).unwrap();
    let (value, grads) = gradients(&model, &input, &target, true).unwrap();
    assert_eq!(value, 0.0);
    assert!(grads.tensors().iter().all(|(_, v)| v.iter().all(|&g| g == 0.0)));
}

fn backbone(model: &RefinerModel) -> Vec<Vec<f64>> {
    model
        .tensors()
        .into_iter()
        .filter(|(s, _)| s.is_backbone())
        .map(|(_, v)| v.to_vec())
        .collect()
}

fn head(model: &RefinerModel) -> Vec<Vec<f64>> {
    model
        .tensors()
        .into_iter()
        .filter(|(s, _)| !s.is_backbone())
        .map(|(_, v)| v.to_vec())
        .collect()
}

#[test]
fn backbone_stays_frozen_for_three_epochs() {
    let data = make_refiner_dataset(32, 8).unwrap();
    let start = RefinerModel::init(8);
    let three = TrainConfig {
        epochs: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(start.clone(), &data, &three).unwrap();
    assert_eq!(backbone(&out.model), backbone(&start));
    assert_ne!(head(&out.model), head(&start));
    assert!(out.trace.iter().all(|e| e.backbone_frozen));

    let four = TrainConfig { epochs: 4, ..three };
    let out = train(start.clone(), &data, &four).unwrap();
    assert_ne!(backbone(&out.model), backbone(&start));
    assert!(!out.trace[3].backbone_frozen);
}

#[test]
fn schedule_and_loss_trend() {
    let data = make_refiner_dataset(64, 12).unwrap();
    let cfg = TrainConfig {
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(RefinerModel::init(12), &data, &cfg).unwrap();
    assert_eq!(out.trace.len(), 20);
    assert_eq!(out.trace[0].lr_first, 0.05);
    assert!((out.trace[19].lr_last - 0.0001).abs() < 1e-15);
    let frozen: Vec<bool> = out.trace.iter().map(|e| e.backbone_frozen).collect();
    assert_eq!(frozen.iter().filter(|&&f| f).count(), 3);
    assert!(frozen[..3].iter().all(|&f| f));
    for pair in out.trace.windows(2) {
        assert!(pair[1].lr_first < pair[0].lr_first);
    }
    assert!(out.trace[19].mean_loss < out.trace[0].mean_loss, "{:?}", out.trace);
}

#[test]
fn training_is_reproducible() {
    let data = make_refiner_dataset(20, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = train(RefinerModel::init(1), &data, &cfg).unwrap();
    let b = train(RefinerModel::init(1), &data, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn weights_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("refiner.bin");
    let model = busy_model(6);
    save_weights(&model, &path).unwrap();
    let back = load_weights(&path).unwrap();
    let (input, _) = make_refiner_dataset(1, 6).unwrap().pop().unwrap();
    let a = forward_raw(&model, &input).unwrap();
    let b = forward_raw(&back, &input).unwrap();
    for k in 0..4 {
        // f32 storage
        assert!((a[k] - b[k]).abs() < 1e-5);
    }
    assert!(load_weights(&dir.path().join("missing.bin")).is_err());
}
