//! Parameter layout: names, shapes and initializers, in a fixed order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{dilation_schedule, ModelConfig, Variant, SE_HIDDEN};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// U(−1/√fan_in, 1/√fan_in)
    Uniform {
        fan_in: usize,
    },
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn initialize(&self, rng: &mut impl Rng) -> Tensor {
        let n = self.numel();
        let data = match self.init {
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Init::Const(v) => vec![v; n],
        };
        Tensor::new(&self.shape, data).expect("layout shapes are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeIndex {
    pub squeeze_weight: usize,
    pub squeeze_bias: usize,
    pub excite_weight: usize,
    pub excite_bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockIndex {
    pub in_pconv: usize,
    pub prelu1: usize,
    pub norm1_gain: usize,
    pub norm1_bias: usize,
    /// Depthwise kernels; for WD blocks index 0 carries the exponential
    /// dilation and index 1 the local (f = 1) one.
    pub dconv: Vec<usize>,
    pub dilations: Vec<usize>,
    pub se: Option<SeIndex>,
    pub prelu2: usize,
    pub norm2_gain: usize,
    pub norm2_bias: usize,
    pub out_pconv: usize,
}

/// Positions of every parameter inside the model's flat parameter list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIndex {
    pub encoder: usize,
    pub bottleneck_gain: usize,
    pub bottleneck_bias: usize,
    pub bottleneck_pconv: usize,
    pub blocks: Vec<BlockIndex>,
    pub mask_prelu: usize,
    pub mask_pconv: usize,
    pub decoder: usize,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn push(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        self.specs.push(ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        });
        self.specs.len() - 1
    }

    fn uniform(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> usize {
        self.push(name, shape, Init::Uniform { fan_in })
    }
}

/// Enumerates the parameters of `config` without allocating them.
pub fn layout(config: &ModelConfig) -> (Vec<ParamSpec>, ParamIndex) {
    let ModelConfig {
        n, b, h, p, block_len, ..
    } = *config;
    let mut bld = Builder { specs: Vec::new() };
    let encoder = bld.uniform("encoder", &[n, 1, block_len], block_len);
    let bottleneck_gain = bld.push("bottleneck.norm.gain", &[n], Init::Const(1.0));
    let bottleneck_bias = bld.push("bottleneck.norm.bias", &[n], Init::Const(0.0));
    let bottleneck_pconv = bld.uniform("bottleneck.pconv", &[n, b], n);

    let blocks = dilation_schedule(config.x, config.r)
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let pre = format!("blocks.{i}");
            let in_pconv = bld.uniform(format!("{pre}.in_pconv"), &[b, h], b);
            let prelu1 = bld.push(format!("{pre}.prelu1"), &[1], Init::Const(0.25));
            let norm1_gain = bld.push(format!("{pre}.norm1.gain"), &[h], Init::Const(1.0));
            let norm1_bias = bld.push(format!("{pre}.norm1.bias"), &[h], Init::Const(0.0));
            let dilations = match config.variant {
                Variant::Tcn => vec![f],
                Variant::WdTcn => vec![f, 1],
            };
            let dconv = (0..dilations.len())
                .map(|q| bld.uniform(format!("{pre}.dconv.{q}"), &[h, p], p))
                .collect();
            let se = (config.variant == Variant::WdTcn).then(|| {
                let q = config.q;
                SeIndex {
                    squeeze_weight: bld.uniform(format!("{pre}.se.squeeze.weight"), &[SE_HIDDEN, h], h),
                    squeeze_bias: bld.push(format!("{pre}.se.squeeze.bias"), &[SE_HIDDEN], Init::Const(0.0)),
                    excite_weight: bld.push(format!("{pre}.se.excite.weight"), &[q, SE_HIDDEN], Init::Const(0.0)),
                    excite_bias: bld.push(format!("{pre}.se.excite.bias"), &[q], Init::Const(0.0)),
                }
            });
            let prelu2 = bld.push(format!("{pre}.prelu2"), &[1], Init::Const(0.25));
            let norm2_gain = bld.push(format!("{pre}.norm2.gain"), &[h], Init::Const(1.0));
            let norm2_bias = bld.push(format!("{pre}.norm2.bias"), &[h], Init::Const(0.0));
            let out_pconv = bld.uniform(format!("{pre}.out_pconv"), &[h, b], h);
            BlockIndex {
                in_pconv,
                prelu1,
                norm1_gain,
                norm1_bias,
                dconv,
                dilations,
                se,
                prelu2,
                norm2_gain,
                norm2_bias,
                out_pconv,
            }
        })
        .collect();

    let mask_prelu = bld.push("mask.prelu", &[1], Init::Const(0.25));
    let mask_pconv = bld.uniform("mask.pconv", &[b, n], b);
    let decoder = bld.uniform("decoder", &[n, block_len], n);
    (
        bld.specs,
        ParamIndex {
            encoder,
            bottleneck_gain,
            bottleneck_bias,
            bottleneck_pconv,
            blocks,
            mask_prelu,
            mask_pconv,
            decoder,
        },
    )
}

pub(crate) fn initialize(specs: &[ParamSpec], seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    specs.iter().map(|s| s.initialize(&mut rng)).collect()
}
