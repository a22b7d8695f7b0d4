//! Encoder, mask network and decoder for the baseline TCN and the weighted
//! multi-dilation WD-TCN.
//!
//! ```text
//! x ─frame/conv─▶ ReLU ─▶ w ─▶ gLN ─▶ P-Conv(N→B) ─▶ R·X blocks ─▶ PReLU ─▶ P-Conv(B→N) ─▶ ReLU ─▶ m
//! v = m ⊙ w ─▶ transposed conv (overlap-add) ─▶ trim ─▶ ŝ
//! ```
//!
//! Each block is `y + P-Conv(gLN(PReLU(D(gLN(PReLU(P-Conv(y)))))))` where `D`
//! is a single dilated depthwise convolution (TCN) or the attention-weighted
//! sum of two depthwise convolutions (WD-TCN), with weights from a
//! squeeze-and-excite network applied to the depthwise input.

mod accounting;
mod checkpoint;
mod config;
mod params;

pub use accounting::{count_parameters, probe_receptive_field, receptive_field, wd_overhead_per_block, ParamReport};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{dilation_schedule, wd_dilation_pairs, ModelConfig, Variant, GLN_EPS, SE_HIDDEN};
pub use params::{layout, BlockIndex, Init, ParamIndex, ParamSpec, SeIndex};

use crate::dsp::{padded_len, AudioClip};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    index: ParamIndex,
    params: Vec<Tensor>,
}

/// Switches used by tests and analysis probes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardOptions {
    /// Replace every block's attention output with these weights.
    pub attention_override: Option<Vec<f64>>,
    /// Treat global statistics (gLN mean/variance, attention weights) as
    /// constants in the backward pass.
    pub detach_global: bool,
}

/// Handles into a forward graph.
#[derive(Debug, Clone)]
pub struct ForwardGraph {
    pub params: Vec<Var>,
    pub encoded: Var,
    pub mask: Var,
    pub masked: Var,
    pub estimate: Var,
    pub attention: Vec<Var>,
}

/// Intermediate values from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// One weight vector per block (WD only).
    pub attention: Vec<Vec<f64>>,
    pub encoded: Tensor,
    pub mask: Tensor,
    pub masked: Tensor,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, index) = layout(&config);
        let params = params::initialize(&specs, seed);
        Ok(Self {
            config,
            specs,
            index,
            params,
        })
    }

    pub fn from_parts(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let (specs, index) = layout(&config);
        if specs.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if s.shape != p.shape() {
                return Err(Error::Checkpoint(format!(
                    "{}: expected shape {:?}, got {:?}",
                    s.name,
                    s.shape,
                    p.shape()
                )));
            }
        }
        Ok(Self {
            config,
            specs,
            index,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn index(&self) -> &ParamIndex {
        &self.index
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_by_name(&self, name: &str) -> Option<&Tensor> {
        self.specs.iter().position(|s| s.name == name).map(|i| &self.params[i])
    }

    pub fn param_by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| &mut self.params[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records the full forward pass of `signal` on `tape`.
    pub fn build(&self, tape: &mut Tape, signal: &[f64], opts: &ForwardOptions) -> Result<ForwardGraph> {
        let params: Vec<Var> = self.params.iter().map(|p| tape.variable(p.clone())).collect();
        self.build_on(tape, &params, signal, opts)
    }

    /// As [`Model::build`], with parameter nodes supplied by the caller in
    /// layout order instead of this model's stored values.
    pub fn build_on(
        &self,
        tape: &mut Tape,
        params: &[Var],
        signal: &[f64],
        opts: &ForwardOptions,
    ) -> Result<ForwardGraph> {
        if signal.is_empty() {
            return Err(Error::dim("forward", "empty signal"));
        }
        if params.len() != self.params.len() {
            return Err(Error::dim(
                "forward",
                format!("{} parameter nodes for {} tensors", params.len(), self.params.len()),
            ));
        }
        let cfg = &self.config;
        let hop = cfg.hop();

        let mut padded = signal.to_vec();
        padded.resize(padded_len(signal.len(), cfg.block_len)?, 0.0);
        let len = padded.len();
        let x = tape.constant(Tensor::new(&[1, len], padded)?);

        let pre = tape.conv1d(x, params[self.index.encoder], hop, 0)?;
        let encoded = tape.relu(pre)?;
        let (mask, attention) = self.build_masknet(tape, params, encoded, opts)?;
        let masked = tape.mul(mask, encoded)?;
        let full = tape.transposed_conv1d(masked, params[self.index.decoder], hop)?;
        let estimate = tape.crop(full, signal.len())?;
        Ok(ForwardGraph {
            params: params.to_vec(),
            encoded,
            mask,
            masked,
            estimate,
            attention,
        })
    }

    /// Records the mask network on encoded features `w [N × frames]`.
    /// `params` are the model's parameter nodes on `tape`, in layout order.
    pub fn build_masknet(
        &self,
        tape: &mut Tape,
        params: &[Var],
        w: Var,
        opts: &ForwardOptions,
    ) -> Result<(Var, Vec<Var>)> {
        let idx = &self.index;
        let normed = self.norm(tape, w, params[idx.bottleneck_gain], params[idx.bottleneck_bias], opts)?;
        let mut y = tape.pointwise_conv1d(normed, params[idx.bottleneck_pconv])?;
        let mut attention = Vec::new();
        for block in &idx.blocks {
            let (out, a) = self.build_block(tape, params, block, y, opts)?;
            y = out;
            attention.extend(a);
        }
        let act = tape.prelu(y, params[idx.mask_prelu])?;
        let logits = tape.pointwise_conv1d(act, params[idx.mask_pconv])?;
        let mask = tape.relu(logits)?;
        Ok((mask, attention))
    }

    fn norm(&self, tape: &mut Tape, x: Var, gain: Var, bias: Var, opts: &ForwardOptions) -> Result<Var> {
        if opts.detach_global {
            tape.global_layer_norm_detached(x, gain, bias, GLN_EPS)
        } else {
            tape.global_layer_norm(x, gain, bias, GLN_EPS)
        }
    }

    /// One residual convolutional block; returns the block output and, for
    /// WD blocks, the attention weight node.
    pub fn build_block(
        &self,
        tape: &mut Tape,
        params: &[Var],
        block: &BlockIndex,
        input: Var,
        opts: &ForwardOptions,
    ) -> Result<(Var, Option<Var>)> {
        let h = tape.pointwise_conv1d(input, params[block.in_pconv])?;
        let h = tape.prelu(h, params[block.prelu1])?;
        let z = self.norm(tape, h, params[block.norm1_gain], params[block.norm1_bias], opts)?;

        let (mixed, weights) = match &block.se {
            None => (
                tape.depthwise_conv1d(z, params[block.dconv[0]], block.dilations[0])?,
                None,
            ),
            Some(se) => {
                let a = match &opts.attention_override {
                    Some(fixed) => {
                        if fixed.len() != block.dconv.len() {
                            return Err(Error::dim(
                                "attention_override",
                                format!("{} weights for {} kernels", fixed.len(), block.dconv.len()),
                            ));
                        }
                        tape.constant(Tensor::from_vec(fixed.clone()))
                    }
                    None => {
                        let a = self.build_se(tape, params, se, z)?;
                        if opts.detach_global {
                            tape.constant(tape.value(a).clone())
                        } else {
                            a
                        }
                    }
                };
                let mut acc: Option<Var> = None;
                for (q, (&k, &f)) in block.dconv.iter().zip(&block.dilations).enumerate() {
                    let d = tape.depthwise_conv1d(z, params[k], f)?;
                    let scaled = tape.scale_by_element(d, a, q)?;
                    acc = Some(match acc {
                        Some(prev) => tape.add(prev, scaled)?,
                        None => scaled,
                    });
                }
                (acc.expect("at least one kernel"), Some(a))
            }
        };

        let h = tape.prelu(mixed, params[block.prelu2])?;
        let h = self.norm(tape, h, params[block.norm2_gain], params[block.norm2_bias], opts)?;
        let h = tape.pointwise_conv1d(h, params[block.out_pconv])?;
        Ok((tape.add(input, h)?, weights))
    }

    /// Squeeze-and-excite weights: softmax(W₂·ReLU(W₁·mean_t(z) + b₁) + b₂).
    pub fn build_se(&self, tape: &mut Tape, params: &[Var], se: &SeIndex, z: Var) -> Result<Var> {
        let pooled = tape.global_avg_pool(z)?;
        let squeezed = tape.linear(pooled, params[se.squeeze_weight], params[se.squeeze_bias])?;
        let squeezed = tape.relu(squeezed)?;
        let logits = tape.linear(squeezed, params[se.excite_weight], params[se.excite_bias])?;
        tape.softmax(logits)
    }

    pub fn forward_with(&self, x: &AudioClip, opts: &ForwardOptions) -> Result<(AudioClip, ForwardTrace)> {
        let mut tape = Tape::new();
        let g = self.build(&mut tape, &x.samples, opts)?;
        let trace = ForwardTrace {
            attention: g.attention.iter().map(|&a| tape.value(a).data().to_vec()).collect(),
            encoded: tape.value(g.encoded).clone(),
            mask: tape.value(g.mask).clone(),
            masked: tape.value(g.masked).clone(),
        };
        let est = AudioClip::new(tape.value(g.estimate).data().to_vec(), x.sample_rate);
        Ok((est, trace))
    }

    pub fn forward(&self, x: &AudioClip) -> Result<(AudioClip, ForwardTrace)> {
        self.forward_with(x, &ForwardOptions::default())
    }

    /// Encoded features `ReLU(x_ℓ·B)` for every frame of `signal`.
    pub fn encode(&self, signal: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let mut padded = signal.to_vec();
        padded.resize(padded_len(signal.len(), self.config.block_len)?, 0.0);
        let len = padded.len();
        let x = tape.constant(Tensor::new(&[1, len], padded)?);
        let k = tape.constant(self.params[self.index.encoder].clone());
        let pre = tape.conv1d(x, k, self.config.hop(), 0)?;
        let w = tape.relu(pre)?;
        Ok(tape.value(w).clone())
    }

    /// Transposed-convolution decoder with overlap-add, trimmed to `len`.
    pub fn decode(&self, masked: &Tensor, len: usize, sample_rate: u32) -> Result<AudioClip> {
        let mut tape = Tape::new();
        let v = tape.constant(masked.clone());
        let u = tape.constant(self.params[self.index.decoder].clone());
        let full = tape.transposed_conv1d(v, u, self.config.hop())?;
        let out = tape.crop(full, len)?;
        Ok(AudioClip::new(tape.value(out).data().to_vec(), sample_rate))
    }
}

#[cfg(test)]
mod tests;
