#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wdtcn::dsp::{generate_corpus, CorpusConfig, ReverbSample};
use wdtcn::model::{ForwardOptions, ModelConfig, Variant};
use wdtcn::{Result, Tape, Tensor, Var};

pub const FD_TOLERANCE: f64 = 1e-4;
/// Central-difference step for single ops.
pub const FD_STEP: f64 = 1e-5;
/// Smaller step for the full model, where thousands of ReLU kinks make a
/// wide stencil likely to straddle one.
pub const FD_STEP_MODEL: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`; absolute when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Compares reverse-mode gradients of the scalar built by `build` against
/// central differences, for up to `max_probes` entries of each input.
/// Returns the relative error per input tensor.
pub fn gradient_check<F>(inputs: &[Tensor], max_probes: usize, seed: u64, step: f64, build: F) -> Vec<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).data()[0]
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.variable(v.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    assert_eq!(tape.value(out).numel(), 1, "gradient check needs a scalar output");
    tape.backward(out).unwrap();

    let mut rng = rng(seed);
    let mut errors = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        let n = input.numel();
        let probes: Vec<usize> = if n <= max_probes {
            (0..n).collect()
        } else {
            (0..max_probes).map(|_| rng.random_range(0..n)).collect()
        };
        let mut fd = Vec::with_capacity(probes.len());
        let mut an = Vec::with_capacity(probes.len());
        for &j in &probes {
            let mut values = inputs.to_vec();
            let x0 = values[i].data()[j];
            let h = step * x0.abs().max(1.0);
            values[i].data_mut()[j] = x0 + h;
            let plus = eval(&values);
            values[i].data_mut()[j] = x0 - h;
            let minus = eval(&values);
            fd.push((plus - minus) / (2.0 * h));
            an.push(analytic.data()[j]);
        }
        errors.push(relative_error(&an, &fd));
    }
    errors
}

/// Contracts `out` with a fixed random tensor to a scalar.
pub fn project(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let r = random_tensor(&mut rng(seed), &shape);
    let r = tape.constant(r);
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

/// Small model used by the full-model gradient check.
pub fn gradcheck_config(variant: Variant) -> ModelConfig {
    ModelConfig::toy(variant).with_channels(32, 16, 32)
}

/// Corpus of the toy-training protocol: 16 clips of 4 s at 8 kHz,
/// T60 in [0.1, 1.0] s.
pub fn toy_corpus(seed: u64) -> Vec<ReverbSample> {
    generate_corpus(&CorpusConfig {
        count: 16,
        duration_s: 4.0,
        sample_rate: 8000,
        t60_min: 0.1,
        t60_max: 1.0,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Finite-difference check of every differentiable tape op.
/// Returns `(op, worst relative error over its inputs)`.
pub fn op_gradient_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut t = |shape: &[usize]| random_tensor(&mut r, shape);
    let worst = |errs: Vec<f64>| errs.into_iter().fold(0.0, f64::max);
    let mut out = Vec::new();

    let (x, k) = (t(&[2, 23]), t(&[3, 2, 4]));
    out.push((
        "conv1d",
        worst(gradient_check(&[x, k], 64, seed * 100 + 1, FD_STEP, |tp, v| {
            let y = tp.conv1d(v[0], v[1], 2, 1)?;
            project(tp, y, seed * 100 + 10)
        })),
    ));

    let (x, k) = (t(&[3, 17]), t(&[3, 3]));
    out.push((
        "depthwise_conv1d",
        worst(gradient_check(&[x, k], 64, seed * 100 + 2, FD_STEP, |tp, v| {
            let y = tp.depthwise_conv1d(v[0], v[1], 2)?;
            project(tp, y, seed * 100 + 11)
        })),
    ));

    let (x, k) = (t(&[4, 9]), t(&[4, 3]));
    out.push((
        "pointwise_conv1d",
        worst(gradient_check(&[x, k], 64, seed * 100 + 3, FD_STEP, |tp, v| {
            let y = tp.pointwise_conv1d(v[0], v[1])?;
            project(tp, y, seed * 100 + 12)
        })),
    ));

    let (x, k) = (t(&[3, 6]), t(&[3, 8]));
    out.push((
        "transposed_conv1d",
        worst(gradient_check(&[x, k], 64, seed * 100 + 4, FD_STEP, |tp, v| {
            let y = tp.transposed_conv1d(v[0], v[1], 4)?;
            project(tp, y, seed * 100 + 13)
        })),
    ));

    let x = t(&[3, 7]);
    out.push((
        "relu",
        worst(gradient_check(&[x], 64, seed * 100 + 5, FD_STEP, |tp, v| {
            let y = tp.relu(v[0])?;
            project(tp, y, seed * 100 + 14)
        })),
    ));

    let (x, a) = (t(&[3, 7]), Tensor::from_vec(vec![0.25]));
    out.push((
        "prelu",
        worst(gradient_check(&[x, a], 64, seed * 100 + 6, FD_STEP, |tp, v| {
            let y = tp.prelu(v[0], v[1])?;
            project(tp, y, seed * 100 + 15)
        })),
    ));

    let x = t(&[5]);
    out.push((
        "softmax",
        worst(gradient_check(&[x], 64, seed * 100 + 7, FD_STEP, |tp, v| {
            let y = tp.softmax(v[0])?;
            project(tp, y, seed * 100 + 16)
        })),
    ));

    let (x, g, b) = (t(&[4, 6]), t(&[4]), t(&[4]));
    out.push((
        "global_layer_norm",
        worst(gradient_check(&[x, g, b], 64, seed * 100 + 8, FD_STEP, |tp, v| {
            let y = tp.global_layer_norm(v[0], v[1], v[2], 1e-8)?;
            project(tp, y, seed * 100 + 17)
        })),
    ));

    let x = t(&[4, 6]);
    out.push((
        "global_avg_pool",
        worst(gradient_check(&[x], 64, seed * 100 + 9, FD_STEP, |tp, v| {
            let y = tp.global_avg_pool(v[0])?;
            project(tp, y, seed * 100 + 18)
        })),
    ));

    let (x, w, b) = (t(&[5]), t(&[3, 5]), t(&[3]));
    out.push((
        "linear",
        worst(gradient_check(&[x, w, b], 64, seed * 100 + 10, FD_STEP, |tp, v| {
            let y = tp.linear(v[0], v[1], v[2])?;
            project(tp, y, seed * 100 + 19)
        })),
    ));

    let (x, y) = (t(&[3, 4]), t(&[3, 4]));
    out.push((
        "add",
        worst(gradient_check(
            &[x.clone(), y.clone()],
            64,
            seed * 100 + 11,
            FD_STEP,
            |tp, v| {
                let s = tp.add(v[0], v[1])?;
                project(tp, s, seed * 100 + 20)
            },
        )),
    ));
    out.push((
        "mul",
        worst(gradient_check(&[x, y], 64, seed * 100 + 12, FD_STEP, |tp, v| {
            let s = tp.mul(v[0], v[1])?;
            project(tp, s, seed * 100 + 21)
        })),
    ));

    let (x, a) = (t(&[3, 4]), t(&[2]));
    out.push((
        "scale_by_element",
        worst(gradient_check(&[x, a], 64, seed * 100 + 13, FD_STEP, |tp, v| {
            let s = tp.scale_by_element(v[0], v[1], 1)?;
            project(tp, s, seed * 100 + 22)
        })),
    ));

    let x = t(&[3, 4]);
    out.push((
        "sum",
        worst(gradient_check(&[x], 64, seed * 100 + 14, FD_STEP, |tp, v| tp.sum(v[0]))),
    ));

    let x = t(&[1, 12]);
    out.push((
        "crop",
        worst(gradient_check(&[x], 64, seed * 100 + 15, FD_STEP, |tp, v| {
            let s = tp.crop(v[0], 9)?;
            project(tp, s, seed * 100 + 23)
        })),
    ));

    let est = t(&[1, 32]);
    let reference = random_signal(&mut rng(seed + 99), 32);
    out.push((
        "neg_sisdr",
        worst(gradient_check(&[est], 64, seed * 100 + 16, FD_STEP, move |tp, v| {
            tp.neg_sisdr(v[0], &reference)
        })),
    ));

    out
}

/// Finite-difference check of the full model (N=32, B=16, H=32, 0.5 s at
/// 8 kHz) under the negative-SISDR loss, probing every parameter tensor.
/// Returns `(parameter name, relative error)`.
pub fn model_gradient_check(variant: Variant, seed: u64, probes: usize) -> Vec<(String, f64)> {
    let mut model = wdtcn::model::Model::new(gradcheck_config(variant), seed).unwrap();
    // Move zero-initialized layers off zero so every path carries gradient.
    let mut r = rng(seed + 1000);
    for p in model.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v += r.random_range(-0.1..0.1));
    }
    let signal = random_signal(&mut r, 4000);
    let target = random_signal(&mut r, 4000);
    let names: Vec<String> = model.specs().iter().map(|s| s.name.clone()).collect();
    let params = model.params().to_vec();
    let errors = gradient_check(&params, probes, seed, FD_STEP_MODEL, |tp, vars| {
        let g = model.build_on(tp, vars, &signal, &ForwardOptions::default())?;
        tp.neg_sisdr(g.estimate, &target)
    });
    names.into_iter().zip(errors).collect()
}
