use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn random_features(r: &mut ChaCha8Rng, steps: usize, dim: usize) -> FeatureSequence {
    FeatureSequence::new(
        steps,
        dim,
        (0..steps * dim)
            .map(|_| r.random_range(-1.5..1.5))
            .collect(),
    )
    .unwrap()
}

fn random_labels(r: &mut ChaCha8Rng, steps: usize, classes: usize) -> LabelGrid {
    LabelGrid::from_bools(
        steps,
        classes,
        (0..steps * classes).map(|_| r.random_bool(0.4)).collect(),
    )
    .unwrap()
}

fn random_attention(r: &mut ChaCha8Rng, h: usize) -> AttentionParams {
    let mut proj = || Projection {
        weight: random_tensor(r, &[h, h]),
        bias: random_tensor(r, &[h]),
    };
    AttentionParams {
        query: proj(),
        key: proj(),
        value: proj(),
    }
}

/// Model whose every parameter (biases and merge weights included) is random.
fn random_model(config: ModelConfig, seed: u64) -> Mlad {
    let mut model = Mlad::new(config).unwrap();
    let mut r = rng(seed);
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v = r.random_range(-0.8..0.8);
        }
    }
    model
}

fn config(c: usize, f: usize, h: usize, l: usize, branches: Branches) -> ModelConfig {
    ModelConfig {
        hidden: h,
        layers: l,
        branches,
        ..ModelConfig::new(c, f)
    }
}

// ---- naive oracles -------------------------------------------------------

fn oracle_extract(x: &FeatureSequence, p: &ClassExtractorParams, c: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for t in 0..x.steps() {
        for class in 0..c {
            let w = p.class_weight(class, h);
            let b = p.class_bias(class, h);
            for k in 0..h {
                let mut z = b.data()[k];
                for f in 0..x.dim() {
                    z += w.get(&[f, k]) * x.row(t)[f];
                }
                out.push(if z > 0.0 { z } else { 0.0 });
            }
        }
    }
    out
}

fn oracle_project(rows: &[Vec<f64>], p: &Projection) -> Vec<Vec<f64>> {
    let h = p.bias.len();
    rows.iter()
        .map(|row| {
            (0..h)
                .map(|j| {
                    p.bias.data()[j]
                        + (0..row.len())
                            .map(|i| row[i] * p.weight.get(&[i, j]))
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Self-attention over a list of item vectors, written out entry by entry.
fn oracle_attention(items: &[Vec<f64>], p: &AttentionParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let h = items[0].len();
    let q = oracle_project(items, &p.query);
    let k = oracle_project(items, &p.key);
    let v = oracle_project(items, &p.value);
    let n = items.len();
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| (0..h).map(|d| q[i][d] * k[j][d]).sum::<f64>() / (h as f64).sqrt())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for j in 0..n {
            weights[i][j] = logits[j].exp() / z;
        }
    }
    let out = (0..n)
        .map(|i| {
            (0..h)
                .map(|d| (0..n).map(|j| weights[i][j] * v[j][d]).sum())
                .collect()
        })
        .collect();
    (out, weights)
}

fn feature_vec(f: &Tensor, t: usize, c: usize) -> Vec<f64> {
    let h = f.shape()[2];
    (0..h).map(|k| f.get(&[t, c, k])).collect()
}

// ---- extract_class_features ---------------------------------------------

#[test]
fn extract_zero_weights_give_zero_features() {
    let cfg = config(3, 4, 2, 0, Branches::None);
    let p = ClassExtractorParams {
        weight: Tensor::zeros(&[4, 6]),
        bias: Tensor::zeros(&[6]),
    };
    let x = random_features(&mut rng(1), 5, cfg.features);
    let f = extract_class_features(&x, &p, 2).unwrap();
    assert_eq!(f.shape(), &[5, 3, 2]);
    assert!(f.data().iter().all(|&v| v == 0.0));
}

#[test]
fn extract_identity_copies_nonnegative_inputs() {
    // F = H = 3, W_c = I for both classes.
    let (c, h) = (2, 3);
    let mut w = vec![0.0; h * c * h];
    for class in 0..c {
        for k in 0..h {
            w[k * (c * h) + class * h + k] = 1.0;
        }
    }
    let p = ClassExtractorParams {
        weight: Tensor::new(vec![h, c * h], w).unwrap(),
        bias: Tensor::zeros(&[c * h]),
    };
    let x = FeatureSequence::from_rows(&[vec![0.5, 0.0, 2.0], vec![1.0, 3.0, 0.25]], 3).unwrap();
    let f = extract_class_features(&x, &p, h).unwrap();
    for t in 0..2 {
        for class in 0..c {
            assert_eq!(feature_vec(&f, t, class), x.row(t));
        }
    }
}

#[test]
fn extract_matches_loop_oracle() {
    let mut r = rng(2);
    let (t, f, c, h) = (3, 2, 2, 2);
    let p = ClassExtractorParams {
        weight: random_tensor(&mut r, &[f, c * h]),
        bias: random_tensor(&mut r, &[c * h]),
    };
    let x = random_features(&mut r, t, f);
    let got = extract_class_features(&x, &p, h).unwrap();
    let want = oracle_extract(&x, &p, c, h);
    for (a, b) in got.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(got.data().iter().all(|&v| v >= 0.0));
}

#[test]
fn extract_rejects_wrong_width() {
    let p = ClassExtractorParams {
        weight: Tensor::zeros(&[4, 6]),
        bias: Tensor::zeros(&[6]),
    };
    let x = FeatureSequence::zeros(2, 3);
    assert!(matches!(
        extract_class_features(&x, &p, 2),
        Err(Error::DimensionMismatch { .. })
    ));
}

// ---- co-occurrence branch -------------------------------------------------

#[test]
fn cb_single_class_passes_values_through() {
    let mut r = rng(3);
    let p = random_attention(&mut r, 4);
    let f = random_tensor(&mut r, &[3, 1, 4]);
    let (out, maps) = cb_branch(&f, &p).unwrap();
    assert_eq!(maps.shape(), &[3, 1, 1]);
    assert!(maps.data().iter().all(|&a| a == 1.0));
    for t in 0..3 {
        let v = oracle_project(&[feature_vec(&f, t, 0)], &p.value);
        for k in 0..4 {
            assert!((out.get(&[t, 0, k]) - v[0][k]).abs() < 1e-12);
        }
    }
}

#[test]
fn cb_identical_classes_attend_uniformly() {
    let mut r = rng(4);
    let p = random_attention(&mut r, 3);
    let row = [0.3, -0.2, 0.9];
    let f = Tensor::new(
        vec![2, 4, 3],
        row.iter().copied().cycle().take(24).collect(),
    )
    .unwrap();
    let (_, maps) = cb_branch(&f, &p).unwrap();
    for a in maps.data() {
        assert!((a - 0.25).abs() < 1e-15);
    }
}

#[test]
fn cb_matches_per_step_oracle() {
    let mut r = rng(5);
    let (t, c, h) = (2, 3, 4);
    let p = random_attention(&mut r, h);
    let f = random_tensor(&mut r, &[t, c, h]);
    let (out, maps) = cb_branch(&f, &p).unwrap();
    for step in 0..t {
        let items: Vec<Vec<f64>> = (0..c).map(|class| feature_vec(&f, step, class)).collect();
        let (want_out, want_a) = oracle_attention(&items, &p);
        for i in 0..c {
            for j in 0..c {
                assert!((maps.get(&[step, i, j]) - want_a[i][j]).abs() < 1e-12);
            }
            for k in 0..h {
                assert!((out.get(&[step, i, k]) - want_out[i][k]).abs() < 1e-12);
            }
        }
    }
}

// ---- temporal branch --------------------------------------------------------

#[test]
fn tb_single_step_passes_values_through() {
    let mut r = rng(6);
    let p = random_attention(&mut r, 4);
    let f = random_tensor(&mut r, &[1, 3, 4]);
    let (out, maps) = tb_branch(&f, &p).unwrap();
    assert_eq!(maps.shape(), &[3, 1, 1]);
    assert!(maps.data().iter().all(|&a| a == 1.0));
    for class in 0..3 {
        let v = oracle_project(&[feature_vec(&f, 0, class)], &p.value);
        for k in 0..4 {
            assert!((out.get(&[0, class, k]) - v[0][k]).abs() < 1e-12);
        }
    }
}

#[test]
fn tb_identical_steps_attend_uniformly() {
    let mut r = rng(7);
    let p = random_attention(&mut r, 2);
    // class 0 constant over time, class 1 varies
    let data = vec![
        0.4, -0.1, 0.3, 0.0, 0.4, -0.1, 0.9, 0.2, 0.4, -0.1, -0.5, 0.7, 0.4, -0.1, 0.1, 0.1, 0.4,
        -0.1, 2.0, 0.0,
    ];
    let f = Tensor::new(vec![5, 2, 2], data).unwrap();
    let (_, maps) = tb_branch(&f, &p).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            assert!((maps.get(&[0, i, j]) - 0.2).abs() < 1e-15);
        }
    }
}

#[test]
fn tb_matches_per_class_oracle() {
    let mut r = rng(8);
    let (t, c, h) = (3, 2, 4);
    let p = random_attention(&mut r, h);
    let f = random_tensor(&mut r, &[t, c, h]);
    let (out, maps) = tb_branch(&f, &p).unwrap();
    for class in 0..c {
        let items: Vec<Vec<f64>> = (0..t).map(|step| feature_vec(&f, step, class)).collect();
        let (want_out, want_a) = oracle_attention(&items, &p);
        for i in 0..t {
            for j in 0..t {
                assert!((maps.get(&[class, i, j]) - want_a[i][j]).abs() < 1e-12);
            }
            for k in 0..h {
                assert!((out.get(&[i, class, k]) - want_out[i][k]).abs() < 1e-12);
            }
        }
    }
}

// ---- merge and classify --------------------------------------------------------

#[test]
fn merge_endpoints_and_average() {
    let mut r = rng(9);
    let a = random_tensor(&mut r, &[2, 3, 2]);
    let b = random_tensor(&mut r, &[2, 3, 2]);
    assert_eq!(merge(&a, &b, 1.0).unwrap(), a);
    assert_eq!(merge(&a, &b, 0.0).unwrap(), b);
    let avg = merge(&a, &b, 0.5).unwrap();
    for ((m, x), y) in avg.data().iter().zip(a.data()).zip(b.data()) {
        assert_eq!(*m, 0.5 * x + 0.5 * y);
    }
    assert!(merge(&a, &b, 1.5).is_err());
    assert!(merge(&a, &b, -0.1).is_err());
}

#[test]
fn classify_zero_head_gives_one_half() {
    let g = random_tensor(&mut rng(10), &[4, 3, 2]);
    let head = ClassifierParams {
        weight: Tensor::zeros(&[3, 2]),
        bias: Tensor::zeros(&[3]),
    };
    let y = classify(&g, &head).unwrap();
    assert!(y.data().iter().all(|&s| s == 0.5));
}

#[test]
fn classify_saturates() {
    let g = Tensor::zeros(&[1, 1, 2]);
    let head = ClassifierParams {
        weight: Tensor::zeros(&[1, 2]),
        bias: Tensor::vector(vec![30.0]),
    };
    assert!(classify(&g, &head).unwrap().get(0, 0) > 1.0 - 1e-9);
}

#[test]
fn classify_matches_dot_product_oracle() {
    let mut r = rng(11);
    let (t, c, h) = (2, 2, 3);
    let g = random_tensor(&mut r, &[t, c, h]);
    let head = ClassifierParams {
        weight: random_tensor(&mut r, &[c, h]),
        bias: random_tensor(&mut r, &[c]),
    };
    let y = classify(&g, &head).unwrap();
    for step in 0..t {
        for class in 0..c {
            let z: f64 = head.bias.data()[class]
                + (0..h)
                    .map(|k| head.weight.get(&[class, k]) * g.get(&[step, class, k]))
                    .sum::<f64>();
            assert!((y.get(step, class) - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
        }
    }
}

#[test]
fn classify_rejects_mismatched_head() {
    let g = Tensor::zeros(&[1, 2, 3]);
    let head = ClassifierParams {
        weight: Tensor::zeros(&[2, 4]),
        bias: Tensor::zeros(&[2]),
    };
    assert!(classify(&g, &head).is_err());
}

// ---- forward ---------------------------------------------------------------------

#[test]
fn zero_layers_is_the_class_feature_baseline() {
    let model = random_model(config(3, 4, 5, 0, Branches::Both), 12);
    let x = random_features(&mut rng(13), 6, 4);
    let out = model.forward(&x).unwrap();
    assert!(out.cb_maps.is_empty() && out.tb_maps.is_empty());
    let f0 = extract_class_features(&x, &model.params().extractor, 5).unwrap();
    assert_eq!(
        out.y_final,
        classify(&f0, &model.params().final_head).unwrap()
    );

    // branches = none forces zero layers whatever L says
    let none = random_model(config(3, 4, 5, 3, Branches::None), 12);
    assert!(none.params().layers.is_empty());
    assert!(none.forward(&x).unwrap().cb_maps.is_empty());
}

#[test]
fn tb_only_has_no_cb_maps_and_no_alpha() {
    let model = random_model(config(3, 4, 5, 2, Branches::TbOnly), 14);
    let out = model.forward(&random_features(&mut rng(15), 6, 4)).unwrap();
    assert!(out.cb_maps.is_empty());
    assert_eq!(out.tb_maps.len(), 2);
    assert!(model
        .params()
        .layers
        .iter()
        .all(|l| l.alpha_raw.is_none() && l.cb.is_none()));
    assert_eq!(model.alphas(), vec![None, None]);
}

#[test]
fn forward_is_the_composition_of_its_parts() {
    let cfg = config(3, 5, 4, 2, Branches::Both);
    let model = random_model(cfg, 16);
    let x = random_features(&mut rng(17), 4, 5);
    let out = model.forward(&x).unwrap();
    let p = model.params();

    let mut g = extract_class_features(&x, &p.extractor, 4).unwrap();
    assert_eq!(out.y_init, classify(&g, &p.initial_head).unwrap());
    let alphas = model.alphas();
    for (l, layer) in p.layers.iter().enumerate() {
        let (f1, a1) = cb_branch(&g, layer.cb.as_ref().unwrap()).unwrap();
        let (f2, a2) = tb_branch(&g, layer.tb.as_ref().unwrap()).unwrap();
        assert_eq!(out.cb_maps[l], a1);
        assert_eq!(out.tb_maps[l], a2);
        g = merge(&f1, &f2, alphas[l].unwrap()).unwrap();
    }
    let expected = classify(&g, &p.final_head).unwrap();
    assert!(out
        .y_final
        .data()
        .iter()
        .zip(expected.data())
        .all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn forward_rejects_wrong_feature_width() {
    let model = Mlad::new(config(2, 3, 4, 1, Branches::Both)).unwrap();
    assert!(model.forward(&FeatureSequence::zeros(4, 5)).is_err());
    assert!(model.forward(&FeatureSequence::zeros(0, 3)).is_err());
}

#[test]
fn attention_rows_are_stochastic_and_scores_open() {
    let model = random_model(config(4, 3, 3, 2, Branches::Both), 18);
    let out = model.forward(&random_features(&mut rng(19), 9, 3)).unwrap();
    for maps in out.cb_maps.iter().chain(&out.tb_maps) {
        let n = *maps.shape().last().unwrap();
        for row in maps.data().chunks(n) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    for s in out.y_init.data().iter().chain(out.y_final.data()) {
        assert!(*s > 0.0 && *s < 1.0);
    }
    // T·C² + C·T² per layer
    assert_eq!(out.attention_entries(), 2 * (9 * 16 + 4 * 81));
}

#[test]
fn equal_class_parameters_give_equal_class_outputs() {
    let cfg = config(3, 2, 3, 1, Branches::Both);
    let mut model = random_model(cfg, 20);
    let p = model.params_mut();
    let w0 = p.extractor.class_weight(0, 3);
    let b0 = p.extractor.class_bias(0, 3);
    for class in 1..3 {
        for f in 0..2 {
            for k in 0..3 {
                let idx = f * 9 + class * 3 + k;
                p.extractor.weight.data_mut()[idx] = w0.get(&[f, k]);
            }
        }
        for k in 0..3 {
            p.extractor.bias.data_mut()[class * 3 + k] = b0.data()[k];
        }
        for head in [&mut p.initial_head, &mut p.final_head] {
            for k in 0..3 {
                let v = head.weight.get(&[0, k]);
                head.weight.data_mut()[class * 3 + k] = v;
            }
            let b = head.bias.data()[0];
            head.bias.data_mut()[class] = b;
        }
    }
    let out = model.forward(&random_features(&mut rng(21), 5, 2)).unwrap();
    for t in 0..5 {
        let row = out.y_final.row(t);
        assert!((row[0] - row[1]).abs() < 1e-12 && (row[0] - row[2]).abs() < 1e-12);
    }
}

#[test]
fn learned_alpha_adds_one_parameter_per_layer() {
    for layers in [1, 2, 5] {
        let learned = Mlad::new(config(3, 4, 5, layers, Branches::Both)).unwrap();
        let fixed = Mlad::new(ModelConfig {
            alpha_mode: AlphaMode::Fixed,
            ..config(3, 4, 5, layers, Branches::Both)
        })
        .unwrap();
        assert_eq!(learned.params().count() - fixed.params().count(), layers);
        assert!(learned.alphas().iter().all(|a| *a == Some(0.5)));
    }
}

#[test]
fn fixed_alpha_is_used_exactly() {
    let cfg = ModelConfig {
        alpha_mode: AlphaMode::Fixed,
        alpha_fixed: 0.3,
        ..config(2, 3, 2, 1, Branches::Both)
    };
    let model = random_model(cfg, 22);
    assert_eq!(model.alphas(), vec![Some(0.3)]);
}

// ---- loss ----------------------------------------------------------------------------

fn output_with(scores: ScoreGrid) -> ForwardOutput {
    ForwardOutput {
        y_init: scores.clone(),
        y_final: scores,
        cb_maps: Vec::new(),
        tb_maps: Vec::new(),
    }
}

#[test]
fn loss_of_saturated_correct_predictions_vanishes() {
    let y = LabelGrid::from_columns(&[&[1, 0, 1], &[0, 0, 1]]).unwrap();
    let data = y
        .as_f64()
        .iter()
        .map(|&v| if v == 1.0 { 1.0 - 1e-12 } else { 1e-12 })
        .collect();
    let out = output_with(ScoreGrid::new(3, 2, data).unwrap());
    assert!(mean_bce(&out.y_final, &y).unwrap() < 1e-10);
    assert!(loss(&out, &y).unwrap() < 2e-10);
}

#[test]
fn loss_of_coin_flips_is_ln2_per_head() {
    let y = LabelGrid::from_columns(&[&[1, 0, 1], &[0, 0, 1]]).unwrap();
    let out = output_with(ScoreGrid::new(3, 2, vec![0.5; 6]).unwrap());
    assert!((mean_bce(&out.y_final, &y).unwrap() - 2f64.ln()).abs() < 1e-15);
    assert!((loss(&out, &y).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
}

#[test]
fn loss_matches_scalar_oracle_and_logit_path() {
    let model = random_model(config(3, 4, 3, 1, Branches::Both), 23);
    let mut r = rng(24);
    let x = random_features(&mut r, 5, 4);
    let y = random_labels(&mut r, 5, 3);
    let out = model.forward(&x).unwrap();
    let mut oracle = 0.0;
    for head in [&out.y_init, &out.y_final] {
        let mut total = 0.0;
        for t in 0..5 {
            for c in 0..3 {
                let p = head.get(t, c);
                total -= if y.get(t, c) { p.ln() } else { (1.0 - p).ln() };
            }
        }
        oracle += total / 15.0;
    }
    let value = loss(&out, &y).unwrap();
    assert!((value - oracle).abs() < 1e-12);
    let (tape_value, _) = model.loss_and_grad(&x, &y, 5).unwrap();
    assert!((tape_value - oracle).abs() < 1e-12);
}

#[test]
fn loss_rejects_shape_mismatch_and_bad_labels() {
    let out = output_with(ScoreGrid::new(2, 2, vec![0.5; 4]).unwrap());
    let y = LabelGrid::new(3, 2);
    assert!(loss(&out, &y).is_err());
    assert!(matches!(
        LabelGrid::from_columns(&[&[0, 2]]),
        Err(Error::InvalidLabel(_))
    ));
}

#[test]
fn padded_steps_are_masked_out() {
    let model = random_model(config(2, 3, 2, 1, Branches::Both), 25);
    let mut r = rng(26);
    let x = random_features(&mut r, 4, 3);
    let y = random_labels(&mut r, 4, 2);
    let (short, _) = model.loss_and_grad(&x, &y, 4).unwrap();
    // Pad with two zero steps carrying arbitrary labels; masked out.
    let padded_x = x.window(0, 6);
    let mut padded_y = y.window(0, 6);
    padded_y.set(5, 1, true);
    let (masked, _) = model.loss_and_grad(&padded_x, &padded_y, 4).unwrap();
    // Attention still sees the padded steps, so only the label mask is
    // checked here: changing padded labels must not move the loss.
    let mut other_y = padded_y.clone();
    other_y.set(4, 0, true);
    let (masked2, _) = model.loss_and_grad(&padded_x, &other_y, 4).unwrap();
    assert_eq!(masked, masked2);
    assert!(short.is_finite() && masked.is_finite());
}

// ---- gradients ---------------------------------------------------------------------

/// Central differences on every parameter entry; returns the worst relative
/// error `|a − n| / max(|a|, |n|, 1e-6)`.
pub(super) fn worst_gradient_error(model: &Mlad, x: &FeatureSequence, y: &LabelGrid) -> f64 {
    let eps = 1e-5;
    let (_, analytic) = model.loss_and_grad(x, y, x.steps()).unwrap();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let n_tensors = analytic.len();
    for ti in 0..n_tensors {
        for k in 0..analytic[ti].len() {
            let original = probe.params_mut().tensors_mut()[ti].data()[k];
            probe.params_mut().tensors_mut()[ti].data_mut()[k] = original + eps;
            let up = loss(&probe.forward(x).unwrap(), y).unwrap();
            probe.params_mut().tensors_mut()[ti].data_mut()[k] = original - eps;
            let down = loss(&probe.forward(x).unwrap(), y).unwrap();
            probe.params_mut().tensors_mut()[ti].data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[ti].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    let mut r = rng(27);
    for (i, branches) in [
        Branches::Both,
        Branches::CbOnly,
        Branches::TbOnly,
        Branches::None,
    ]
    .into_iter()
    .enumerate()
    {
        for alpha_mode in [AlphaMode::Learned, AlphaMode::Fixed] {
            let cfg = ModelConfig {
                alpha_mode,
                ..config(3, 4, 3, 2, branches)
            };
            let model = random_model(cfg, 100 + i as u64);
            let x = random_features(&mut r, 5, 4);
            let y = random_labels(&mut r, 5, 3);
            let worst = worst_gradient_error(&model, &x, &y);
            assert!(worst < 1e-4, "{branches:?}/{alpha_mode:?}: {worst}");
        }
    }
}

// ---- training --------------------------------------------------------------------------

fn tiny_dataset(seed: u64, videos: usize, steps: usize, c: usize, f: usize) -> Vec<TrainExample> {
    let mut r = rng(seed);
    (0..videos)
        .map(|_| TrainExample {
            features: random_features(&mut r, steps, f),
            labels: random_labels(&mut r, steps, c),
        })
        .collect()
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let cfg = config(2, 3, 4, 1, Branches::Both);
    let data = tiny_dataset(28, 3, 6, 2, 3);
    let tc = TrainConfig {
        lr: 0.0,
        epochs: 3,
        train_lengths: vec![6],
        ..TrainConfig::default()
    };
    let (model, history) = train(&data, &cfg, &tc, None).unwrap();
    assert_eq!(model.params(), Mlad::new(cfg).unwrap().params());
    let losses = history.losses();
    assert!(losses.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn training_is_deterministic() {
    let cfg = config(2, 3, 4, 1, Branches::Both);
    let data = tiny_dataset(29, 4, 9, 2, 3);
    let tc = TrainConfig {
        lr: 1e-2,
        epochs: 3,
        train_lengths: vec![4, 6, 12],
        batch_size: Some(2),
        seed: 5,
        lr_schedule: LrSchedule::Cosine,
    };
    let (a, ha) = train(&data, &cfg, &tc, Some(&data)).unwrap();
    let (b, hb) = train(&data, &cfg, &tc, Some(&data)).unwrap();
    let bits = |m: &Mlad| -> Vec<u64> {
        m.params()
            .tensors()
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ha, hb);
    assert!(ha.epochs.iter().all(|e| e.val_fmap.is_some()));
    assert_ne!(a.params(), Mlad::new(cfg).unwrap().params());
}

#[test]
fn training_reduces_loss_on_a_fixed_batch() {
    let cfg = config(2, 3, 4, 1, Branches::Both);
    let data = tiny_dataset(30, 4, 6, 2, 3);
    let tc = TrainConfig {
        lr: 1e-2,
        epochs: 40,
        train_lengths: vec![6],
        ..TrainConfig::default()
    };
    let (_, history) = train(&data, &cfg, &tc, None).unwrap();
    let losses = history.losses();
    assert!(losses.last().unwrap() < &(losses[0] * 0.9), "{losses:?}");
}

#[test]
fn training_rejects_bad_input() {
    let cfg = config(2, 3, 4, 1, Branches::Both);
    assert!(matches!(
        train(&[], &cfg, &TrainConfig::default(), None),
        Err(Error::EmptyDataset)
    ));
    let wrong = tiny_dataset(31, 2, 5, 3, 3);
    assert!(train(&wrong, &cfg, &TrainConfig::default(), None).is_err());
    let ok = tiny_dataset(31, 2, 5, 2, 3);
    let bad = TrainConfig {
        train_lengths: vec![],
        ..TrainConfig::default()
    };
    assert!(train(&ok, &cfg, &bad, None).is_err());
}

#[test]
fn learned_alpha_stays_in_open_interval() {
    let cfg = config(2, 3, 4, 2, Branches::Both);
    let data = tiny_dataset(32, 3, 6, 2, 3);
    let tc = TrainConfig {
        lr: 0.5,
        epochs: 10,
        train_lengths: vec![6],
        batch_size: Some(1),
        ..TrainConfig::default()
    };
    let (model, history) = train(&data, &cfg, &tc, None).unwrap();
    for e in &history.epochs {
        assert_eq!(e.alpha_min.len(), 2);
        assert!(e
            .alpha_min
            .iter()
            .chain(&e.alpha_max)
            .all(|a| *a > 0.0 && *a < 1.0));
    }
    assert!(model.alphas().iter().all(|a| a.unwrap() != 0.5));
}

#[test]
fn cosine_schedule_decays_to_zero() {
    let s = LrSchedule::Cosine;
    assert_eq!(s.rate(0.1, 0, 10), 0.1);
    assert!((s.rate(0.1, 5, 10) - 0.05).abs() < 1e-15);
    assert!(s.rate(0.1, 9, 10) < 0.003);
    assert_eq!(LrSchedule::Constant.rate(0.1, 9, 10), 0.1);
}

// ---- windowed inference ---------------------------------------------------------------

#[test]
fn window_plan_covers_every_step_once() {
    for (steps, window) in [(48, 32), (64, 32), (65, 32), (100, 7), (33, 32)] {
        let mut seen = vec![0; steps];
        for (start, keep) in window_plan(steps, window) {
            assert!(start + window <= steps);
            for t in keep..window {
                seen[start + t] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1), "{steps}/{window}");
    }
}

#[test]
fn windowed_prediction_on_short_video_is_one_pass() {
    let model = random_model(config(2, 3, 2, 1, Branches::Both), 33);
    let x = random_features(&mut rng(34), 5, 3);
    assert_eq!(
        model.predict_windowed(&x, 8).unwrap(),
        model.predict(&x).unwrap()
    );
    let long = random_features(&mut rng(35), 12, 3);
    let windowed = model.predict_windowed(&long, 8).unwrap();
    assert_eq!(windowed.steps(), 12);
    // first window is scored on its own
    let first = model.predict(&long.window(0, 8)).unwrap();
    assert_eq!(&windowed.data()[..16], first.data());
    // tail comes from the right-aligned window [4, 12)
    let tail = model.predict(&long.window(4, 8)).unwrap();
    assert_eq!(&windowed.data()[16..], &tail.data()[8..]);
}

// ---- serialization ---------------------------------------------------------------------

#[test]
fn round_trip_is_bit_exact() {
    let mut model = random_model(config(3, 4, 2, 2, Branches::Both), 36);
    model.inference_window = Some(16);
    let bytes = serialize_model(&model).unwrap();
    let back = deserialize_model(&bytes).unwrap();
    assert_eq!(back, model);
    let x = random_features(&mut rng(37), 6, 4);
    assert_eq!(back.forward(&x).unwrap(), model.forward(&x).unwrap());
}

#[test]
fn every_corrupted_byte_is_rejected() {
    let model = random_model(config(2, 2, 2, 1, Branches::Both), 38);
    let bytes = serialize_model(&model).unwrap();
    // The trailing newline is not part of the JSON value.
    for i in 0..bytes.len() - 1 {
        let mut bad = bytes.clone();
        bad[i] ^= 0x01;
        assert!(
            deserialize_model(&bad).is_err(),
            "byte {i} ({:?})",
            bytes[i] as char
        );
    }
}

#[test]
fn truncation_and_version_mismatch_are_rejected() {
    let model = Mlad::new(config(2, 2, 2, 1, Branches::CbOnly)).unwrap();
    let bytes = serialize_model(&model).unwrap();
    assert!(deserialize_model(&bytes[..bytes.len() / 2]).is_err());
    let text = String::from_utf8(bytes).unwrap();
    let other = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
    let err = deserialize_model(other.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}
