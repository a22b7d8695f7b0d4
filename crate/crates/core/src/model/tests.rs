use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn tiny(variant: Variant, x: usize, r: usize) -> ModelConfig {
    ModelConfig {
        block_len: 8,
        ..ModelConfig::reference(variant, x, r).with_channels(6, 4, 5)
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Perturb every parameter so zero-initialized layers take part.
fn scramble(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

fn run_block(model: &Model, block: usize, input: &Tensor, opts: &ForwardOptions) -> (Tensor, Option<Vec<f64>>) {
    let mut tape = Tape::new();
    let params: Vec<Var> = model.params().iter().map(|p| tape.constant(p.clone())).collect();
    let y = tape.constant(input.clone());
    let (out, a) = model
        .build_block(&mut tape, &params, &model.index().blocks[block], y, opts)
        .unwrap();
    (tape.value(out).clone(), a.map(|a| tape.value(a).data().to_vec()))
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn encode_zero_and_negative_inputs() {
    let model = Model::new(tiny(Variant::Tcn, 1, 1), 0).unwrap();
    assert!(model.encode(&[0.0; 40]).unwrap().data().iter().all(|&v| v == 0.0));

    let mut m = model.clone();
    let enc = m.param_by_name_mut("encoder").unwrap();
    enc.data_mut().iter_mut().for_each(|v| *v = -v.abs() - 0.01);
    assert!(m.encode(&[0.5; 40]).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn encode_matches_framewise_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Model::new(tiny(Variant::Tcn, 1, 1), 1).unwrap();
    let x = random_signal(&mut rng, 37);
    let w = model.encode(&x).unwrap();
    let frames = crate::dsp::frame_signal(&x, 8).unwrap();
    let basis = model.param_by_name("encoder").unwrap(); // [N, 1, L]
    let n = 6;
    assert_eq!(w.shape(), &[n, frames.shape()[0]]);
    for l in 0..frames.shape()[0] {
        for c in 0..n {
            let dot: f64 = frames
                .row(l)
                .iter()
                .zip(&basis.data()[c * 8..(c + 1) * 8])
                .map(|(a, b)| a * b)
                .sum();
            assert!((w.data()[c * frames.shape()[0] + l] - dot.max(0.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn zeroed_block_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for variant in [Variant::Tcn, Variant::WdTcn] {
        let mut model = Model::new(tiny(variant, 2, 1), 3).unwrap();
        let names: Vec<String> = model.specs().iter().map(|s| s.name.clone()).collect();
        for name in names.iter().filter(|n| n.starts_with("blocks.1.")) {
            model.param_by_name_mut(name).unwrap().data_mut().fill(0.0);
        }
        let y = random_tensor(&mut rng, &[4, 13]);
        let (out, _) = run_block(&model, 1, &y, &ForwardOptions::default());
        assert_eq!(out, y);
    }
}

#[test]
fn pinned_attention_reduces_wd_block_to_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut wd = Model::new(tiny(Variant::WdTcn, 3, 1), 5).unwrap();
    scramble(&mut wd, 6);
    let mut tcn = Model::new(tiny(Variant::Tcn, 3, 1), 7).unwrap();
    for spec in tcn.specs().to_vec() {
        // Shared names; the baseline kernel is the WD exponential-dilation kernel.
        *tcn.param_by_name_mut(&spec.name).unwrap() = wd.param_by_name(&spec.name).unwrap().clone();
    }
    let pinned = ForwardOptions {
        attention_override: Some(vec![1.0, 0.0]),
        ..Default::default()
    };
    for block in 0..3 {
        let y = random_tensor(&mut rng, &[4, 21]);
        let (a, _) = run_block(&wd, block, &y, &pinned);
        let (b, _) = run_block(&tcn, block, &y, &ForwardOptions::default());
        assert!(max_abs_diff(&a, &b) < 1e-10);
    }
}

#[test]
fn identical_kernels_make_attention_irrelevant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // X=1 so both kernels share dilation 1.
    let mut wd = Model::new(tiny(Variant::WdTcn, 1, 1), 9).unwrap();
    scramble(&mut wd, 10);
    let k0 = wd.param_by_name("blocks.0.dconv.0").unwrap().clone();
    *wd.param_by_name_mut("blocks.0.dconv.1").unwrap() = k0;
    let y = random_tensor(&mut rng, &[4, 17]);
    let (reference, _) = run_block(
        &wd,
        0,
        &y,
        &ForwardOptions {
            attention_override: Some(vec![1.0, 0.0]),
            ..Default::default()
        },
    );
    for a in [[0.5, 0.5], [0.2, 0.8], [0.93, 0.07]] {
        let (out, _) = run_block(
            &wd,
            0,
            &y,
            &ForwardOptions {
                attention_override: Some(a.to_vec()),
                ..Default::default()
            },
        );
        assert!(max_abs_diff(&out, &reference) < 1e-10);
    }
    let (free, weights) = run_block(&wd, 0, &y, &ForwardOptions::default());
    assert!(max_abs_diff(&free, &reference) < 1e-10);
    assert!(weights.is_some());
}

fn se_weights(model: &Model, z: &Tensor) -> Vec<f64> {
    let mut tape = Tape::new();
    let params: Vec<Var> = model.params().iter().map(|p| tape.constant(p.clone())).collect();
    let zv = tape.constant(z.clone());
    let se = model.index().blocks[0].se.as_ref().unwrap();
    let a = model.build_se(&mut tape, &params, se, zv).unwrap();
    tape.value(a).data().to_vec()
}

#[test]
fn se_attention_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = Model::new(tiny(Variant::WdTcn, 1, 1), 12).unwrap();
    assert_eq!(se_weights(&model, &Tensor::zeros(&[5, 9])), vec![0.5, 0.5]);

    let mut trained = model.clone();
    scramble(&mut trained, 13);
    for _ in 0..10 {
        let z = random_tensor(&mut rng, &[5, 9]).map(|v| 3.0 * v);
        let a = se_weights(&trained, &z);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&v| v > 0.0));

        let mut shifted = trained.clone();
        shifted
            .param_by_name_mut("blocks.0.se.excite.bias")
            .unwrap()
            .data_mut()
            .iter_mut()
            .for_each(|v| *v += 4.5);
        let b = se_weights(&shifted, &z);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn masknet_mask_and_trace_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for variant in [Variant::Tcn, Variant::WdTcn] {
        let mut model = Model::new(tiny(variant, 2, 2), 15).unwrap();
        scramble(&mut model, 16);
        let x = AudioClip::new(random_signal(&mut rng, 101), 8000);
        let (_, trace) = model.forward(&x).unwrap();
        assert!(trace.mask.data().iter().all(|&m| m >= 0.0));
        let product = trace.mask.zip_map(&trace.encoded, |m, w| m * w).unwrap();
        assert_eq!(product, trace.masked);
        let expected = if variant == Variant::WdTcn { 4 } else { 0 };
        assert_eq!(trace.attention.len(), expected);
        for a in &trace.attention {
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn decode_examples() {
    let model = Model::new(tiny(Variant::Tcn, 1, 1), 17).unwrap();
    let silent = model.decode(&Tensor::zeros(&[6, 5]), 20, 8000).unwrap();
    assert!(silent.samples.iter().all(|&v| v == 0.0));
    assert_eq!(silent.len(), 20);

    let mut v = Tensor::zeros(&[6, 3]);
    let coeffs = [0.5, -1.0, 0.0, 2.0, 0.25, 1.5];
    for (c, &a) in coeffs.iter().enumerate() {
        v.data_mut()[c * 3 + 1] = a;
    }
    let out = model.decode(&v, 16, 8000).unwrap();
    let u = model.param_by_name("decoder").unwrap();
    for i in 0..16 {
        let want = if (4..12).contains(&i) {
            (0..6).map(|c| coeffs[c] * u.data()[c * 8 + i - 4]).sum()
        } else {
            0.0
        };
        assert!((out.samples[i] - want).abs() < 1e-14);
    }
}

#[test]
fn forward_is_finite_deterministic_and_length_preserving() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let model = Model::new(tiny(Variant::WdTcn, 2, 1), 19).unwrap();
    for len in [5, 8, 33, 100, 257] {
        let x = AudioClip::new(random_signal(&mut rng, len), 8000);
        let (a, ta) = model.forward(&x).unwrap();
        let (b, tb) = model.forward(&x).unwrap();
        assert_eq!(a.len(), len);
        assert!(a.samples.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }
}

#[test]
fn doubling_input_doubles_encoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let model = Model::new(tiny(Variant::Tcn, 1, 1), 21).unwrap();
    let x = random_signal(&mut rng, 64);
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let w = model.encode(&x).unwrap();
    assert_eq!(model.encode(&x2).unwrap(), w.map(|v| 2.0 * v));
}

#[test]
fn zeroed_blocks_leave_only_output_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut a = Model::new(tiny(Variant::WdTcn, 2, 2), 23).unwrap();
    scramble(&mut a, 24);
    let names: Vec<String> = a.specs().iter().map(|s| s.name.clone()).collect();
    for n in names.iter().filter(|n| n.starts_with("blocks.")) {
        a.param_by_name_mut(n).unwrap().data_mut().fill(0.0);
    }
    let mut b = a.clone();
    b.param_by_name_mut("mask.pconv").unwrap().data_mut()[0] += 0.1;
    let x = AudioClip::new(random_signal(&mut rng, 80), 8000);
    let (_, ta) = a.forward(&x).unwrap();
    let (_, tb) = b.forward(&x).unwrap();
    assert_ne!(ta.mask, tb.mask);

    // Mask equals the output layers applied to the bottleneck output.
    let mut tape = Tape::new();
    let params: Vec<Var> = a.params().iter().map(|p| tape.constant(p.clone())).collect();
    let w = tape.constant(ta.encoded.clone());
    let idx = a.index();
    let normed = tape
        .global_layer_norm(w, params[idx.bottleneck_gain], params[idx.bottleneck_bias], GLN_EPS)
        .unwrap();
    let y = tape.pointwise_conv1d(normed, params[idx.bottleneck_pconv]).unwrap();
    let act = tape.prelu(y, params[idx.mask_prelu]).unwrap();
    let logits = tape.pointwise_conv1d(act, params[idx.mask_pconv]).unwrap();
    let mask = tape.relu(logits).unwrap();
    assert_eq!(tape.value(mask), &ta.mask);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = Model::new(tiny(Variant::WdTcn, 2, 1), 25).unwrap();
    scramble(&mut model, 26);
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    assert_eq!(Model::load(&path).unwrap(), model);

    let mut ck = Checkpoint::from_model(&model);
    ck.magic = "nope".into();
    assert!(ck.to_model().is_err());
    let mut ck = Checkpoint::from_model(&model);
    ck.params.pop();
    assert!(ck.to_model().is_err());
}

#[test]
fn wd_block_has_two_kernels_with_expected_dilations() {
    let model = Model::new(tiny(Variant::WdTcn, 3, 2), 27).unwrap();
    let pairs: Vec<(usize, usize)> = model
        .index()
        .blocks
        .iter()
        .map(|b| (b.dilations[1], b.dilations[0]))
        .collect();
    assert_eq!(pairs, wd_dilation_pairs(3, 2));
    let tcn = Model::new(tiny(Variant::Tcn, 3, 2), 27).unwrap();
    assert!(tcn.index().blocks.iter().all(|b| b.dconv.len() == 1 && b.se.is_none()));
    assert_eq!(tcn.num_parameters(), count_parameters(tcn.config()).total);
    assert_eq!(model.num_parameters(), count_parameters(model.config()).total);
}
