use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant, SE_HIDDEN};
use super::params::layout;
use super::{ForwardOptions, Model};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Trainable scalar counts grouped by submodule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamReport {
    pub config: ModelConfig,
    pub entries: Vec<(String, usize)>,
    pub total: usize,
}

fn group_of(name: &str) -> String {
    let mut parts = name.split('.');
    match parts.next() {
        Some("blocks") => {
            let _block = parts.next();
            format!("blocks.{}", parts.next().unwrap_or("?"))
        }
        Some(top) => top.to_string(),
        None => String::new(),
    }
}

/// Enumerates the layout of `config` and itemizes it per submodule.
pub fn count_parameters(config: &ModelConfig) -> ParamReport {
    let (specs, _) = layout(config);
    let mut entries: Vec<(String, usize)> = Vec::new();
    for s in &specs {
        let g = group_of(&s.name);
        match entries.iter_mut().find(|(name, _)| *name == g) {
            Some((_, n)) => *n += s.numel(),
            None => entries.push((g, s.numel())),
        }
    }
    let total = entries.iter().map(|(_, n)| n).sum();
    ParamReport {
        config: config.clone(),
        entries,
        total,
    }
}

/// Closed-form extra parameters of one WD block over a baseline block:
/// the additional depthwise kernels plus the squeeze-and-excite layers.
pub fn wd_overhead_per_block(config: &ModelConfig) -> usize {
    let (h, p, q) = (config.h, config.p, config.q);
    h * p * (q - 1) + (h * SE_HIDDEN + SE_HIDDEN) + (SE_HIDDEN * q + q)
}

/// Frames of mask-network input that influence one output frame:
/// `1 + R·(P−1)·(2^X − 1)`.
pub fn receptive_field(config: &ModelConfig) -> usize {
    1 + config.r * (config.p - 1) * ((1usize << config.x) - 1)
}

/// Measures the receptive field of `model`'s mask network: the span of input
/// frames whose gradient is nonzero for the mask at one centre frame.
/// Global statistics are detached so only the convolution stack couples
/// frames.
pub fn probe_receptive_field(model: &Model, seed: u64) -> Result<usize> {
    let cfg = model.config();
    let expected = receptive_field(cfg);
    // Spare frames so the probe can move off a centre where the mask is zero.
    const SLACK: usize = 64;
    let frames = 2 * expected + 1 + SLACK;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..cfg.n * frames).map(|_| rng.random_range(0.0..1.0)).collect();

    let mut tape = Tape::new();
    let params: Vec<Var> = model.params().iter().map(|p| tape.constant(p.clone())).collect();
    let w = tape.variable(Tensor::new(&[cfg.n, frames], w)?);
    let opts = ForwardOptions {
        detach_global: true,
        ..Default::default()
    };
    let (mask, _) = model.build_masknet(&mut tape, &params, w, &opts)?;
    let active = |t: usize| (0..cfg.n).any(|c| tape.value(mask).data()[c * frames + t] > 0.0);
    let centre = (expected..=expected + SLACK)
        .find(|&t| active(t))
        .ok_or_else(|| Error::Domain("mask is inactive around the probe frame".into()))?;
    let mut select = Tensor::zeros(&[cfg.n, frames]);
    for c in 0..cfg.n {
        select.data_mut()[c * frames + centre] = 1.0;
    }
    let select = tape.constant(select);
    let picked = tape.mul(mask, select)?;
    let loss = tape.sum(picked)?;
    tape.backward(loss)?;

    let grad = tape
        .grad(w)
        .ok_or_else(|| Error::Contract("probe input has no gradient".into()))?;
    let live: Vec<usize> = (0..frames)
        .filter(|&t| (0..cfg.n).any(|c| grad.data()[c * frames + t] != 0.0))
        .collect();
    match (live.first(), live.last()) {
        (Some(first), Some(last)) => Ok(last - first + 1),
        _ => Err(Error::Domain("probe frame has no gradient support".into())),
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "{} X={} R={} N={} B={} H={} P={} L={}",
            c.variant, c.x, c.r, c.n, c.b, c.h, c.p, c.block_len
        )?;
        for (name, n) in &self.entries {
            writeln!(f, "{name:<20} {n:>12}")?;
        }
        writeln!(f, "{:<20} {:>12}", "total", self.total)?;
        write!(f, "{:<20} {:>11.2}M", "", self.total as f64 / 1e6)
    }
}

impl ParamReport {
    pub fn variant(&self) -> Variant {
        self.config.variant
    }
}
