//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation in creation order, which is a valid
//! topological order of the (acyclic) graph. [`Tape::backward`] walks it in
//! reverse and accumulates gradients additively, so a value used twice
//! receives the sum of both contributions.

use crate::error::{Error, Result};
use crate::kernels::{self, Conv1dGeom};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        geom: Conv1dGeom,
        cols: Vec<f64>,
    },
    Depthwise {
        input: Var,
        kernel: Var,
        dilation: usize,
    },
    Pointwise {
        input: Var,
        kernel: Var,
    },
    Transposed {
        input: Var,
        kernel: Var,
        stride: usize,
    },
    Relu {
        input: Var,
    },
    Prelu {
        input: Var,
        slope: Var,
    },
    Softmax {
        input: Var,
    },
    GlobalLayerNorm {
        input: Var,
        gain: Var,
        bias: Var,
        inv_std: f64,
        normalized: Tensor,
        detach_stats: bool,
    },
    GlobalAvgPool {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Add {
        lhs: Var,
        rhs: Var,
    },
    Mul {
        lhs: Var,
        rhs: Var,
    },
    ScaleByElement {
        input: Var,
        weights: Var,
        index: usize,
    },
    Sum {
        input: Var,
    },
    Crop {
        input: Var,
    },
    NegSisdr {
        estimate: Var,
        grad: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    finite: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf holding a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Leaf whose gradient is tracked (a trainable parameter or probe input).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let finite = value.is_finite();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            finite,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Gradient of the last `backward` loss with respect to `var`, if `var`
    /// lies on a differentiable path to it.
    pub fn grad(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    fn check(&self, var: Var) -> Result<&Tensor> {
        self.nodes
            .get(var.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::Contract(format!("node {} is not on this tape", var.0)))
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let inputs_finite = parents.iter().all(|p| self.nodes[p.0].finite);
        let finite = value.is_finite();
        debug_assert!(
            finite || !inputs_finite,
            "non-finite output from finite inputs in {op:?}",
            op = std::mem::discriminant(&op)
        );
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            finite,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv1d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (x, k) = (self.check(input)?, self.check(kernel)?);
        let geom = Conv1dGeom::new(x, k, stride, padding)?;
        let (value, cols) = kernels::conv1d(x, k, stride, padding)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                kernel,
                geom,
                cols,
            },
            &[input, kernel],
        ))
    }

    pub fn depthwise_conv1d(&mut self, input: Var, kernel: Var, dilation: usize) -> Result<Var> {
        let value = kernels::depthwise_conv1d(self.check(input)?, self.check(kernel)?, dilation)?;
        Ok(self.push(
            value,
            Op::Depthwise {
                input,
                kernel,
                dilation,
            },
            &[input, kernel],
        ))
    }

    pub fn pointwise_conv1d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let value = kernels::pointwise_conv1d(self.check(input)?, self.check(kernel)?)?;
        Ok(self.push(value, Op::Pointwise { input, kernel }, &[input, kernel]))
    }

    pub fn transposed_conv1d(&mut self, input: Var, kernel: Var, stride: usize) -> Result<Var> {
        let value = kernels::transposed_conv1d(self.check(input)?, self.check(kernel)?, stride)?;
        Ok(self.push(value, Op::Transposed { input, kernel, stride }, &[input, kernel]))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        // NaN passes through rather than being clamped to zero.
        let value = self.check(input)?.map(|v| if v > 0.0 || v.is_nan() { v } else { 0.0 });
        Ok(self.push(value, Op::Relu { input }, &[input]))
    }

    /// `x` where positive, `slope·x` otherwise; `slope` is a one-element tensor.
    pub fn prelu(&mut self, input: Var, slope: Var) -> Result<Var> {
        let s = self.check(slope)?;
        if s.numel() != 1 {
            return Err(Error::dim(
                "prelu",
                format!("slope must be scalar, got {:?}", s.shape()),
            ));
        }
        let a = s.data()[0];
        let value = self.check(input)?.map(|v| if v > 0.0 { v } else { a * v });
        Ok(self.push(value, Op::Prelu { input, slope }, &[input, slope]))
    }

    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.check(input)?;
        x.expect_rank("softmax", 1)?;
        let value = Tensor::from_vec(softmax(x.data()));
        Ok(self.push(value, Op::Softmax { input }, &[input]))
    }

    /// Normalizes by mean and variance taken jointly over channels and
    /// frames, then applies a per-channel affine map.
    pub fn global_layer_norm(&mut self, input: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        self.global_layer_norm_impl(input, gain, bias, eps, false)
    }

    /// As [`Tape::global_layer_norm`], but the mean and variance are treated
    /// as constants during backpropagation. Used to probe the local
    /// receptive field of the convolution stack.
    pub fn global_layer_norm_detached(&mut self, input: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        self.global_layer_norm_impl(input, gain, bias, eps, true)
    }

    fn global_layer_norm_impl(
        &mut self,
        input: Var,
        gain: Var,
        bias: Var,
        eps: f64,
        detach_stats: bool,
    ) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer norm eps must be positive, got {eps}")));
        }
        let x = self.check(input)?;
        x.expect_rank("global_layer_norm", 2)?;
        let (c, len) = (x.shape()[0], x.shape()[1]);
        let (g, b) = (self.check(gain)?, self.check(bias)?);
        if g.shape() != [c] || b.shape() != [c] {
            return Err(Error::dim(
                "global_layer_norm",
                format!("gain {:?} / bias {:?} must be [{c}]", g.shape(), b.shape()),
            ));
        }
        let n = x.numel() as f64;
        let mean = x.sum() / n;
        let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + eps).sqrt();
        let normalized = x.map(|v| (v - mean) * inv_std);
        let mut out = normalized.clone();
        for ch in 0..c {
            let (gc, bc) = (g.data()[ch], b.data()[ch]);
            for v in &mut out.data_mut()[ch * len..(ch + 1) * len] {
                *v = gc * *v + bc;
            }
        }
        Ok(self.push(
            out,
            Op::GlobalLayerNorm {
                input,
                gain,
                bias,
                inv_std,
                normalized,
                detach_stats,
            },
            &[input, gain, bias],
        ))
    }

    /// Mean over the frame axis: `[H × L] -> [H]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.check(input)?;
        x.expect_rank("global_avg_pool", 2)?;
        let (h, len) = (x.shape()[0], x.shape()[1]);
        let value = Tensor::from_vec((0..h).map(|r| x.row(r).iter().sum::<f64>() / len as f64).collect());
        Ok(self.push(value, Op::GlobalAvgPool { input }, &[input]))
    }

    /// `weight · input + bias` for `input [D_in]`, `weight [D_out × D_in]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.check(input)?, self.check(weight)?, self.check(bias)?);
        x.expect_rank("linear", 1)?;
        w.expect_rank("linear", 2)?;
        let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
        if x.numel() != d_in || b.shape() != [d_out] {
            return Err(Error::dim(
                "linear",
                format!("input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
            ));
        }
        let value = Tensor::from_vec(
            (0..d_out)
                .map(|o| b.data()[o] + w.row(o).iter().zip(x.data()).map(|(a, c)| a * c).sum::<f64>())
                .collect(),
        );
        Ok(self.push(value, Op::Linear { input, weight, bias }, &[input, weight, bias]))
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let value = self.check(lhs)?.zip_map(self.check(rhs)?, |a, b| a + b)?;
        Ok(self.push(value, Op::Add { lhs, rhs }, &[lhs, rhs]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let value = self.check(lhs)?.zip_map(self.check(rhs)?, |a, b| a * b)?;
        Ok(self.push(value, Op::Mul { lhs, rhs }, &[lhs, rhs]))
    }

    /// `input · weights[index]`.
    pub fn scale_by_element(&mut self, input: Var, weights: Var, index: usize) -> Result<Var> {
        let w = self.check(weights)?;
        let a = *w
            .data()
            .get(index)
            .ok_or_else(|| Error::dim("scale_by_element", format!("index {index} out of {:?}", w.shape())))?;
        let value = self.check(input)?.map(|v| a * v);
        Ok(self.push(value, Op::ScaleByElement { input, weights, index }, &[input, weights]))
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let value = Tensor::scalar(self.check(input)?.sum());
        Ok(self.push(value, Op::Sum { input }, &[input]))
    }

    /// Keep the first `len` samples of a `[1 × L]` signal.
    pub fn crop(&mut self, input: Var, len: usize) -> Result<Var> {
        let x = self.check(input)?;
        x.expect_rank("crop", 2)?;
        if x.shape()[0] != 1 || len == 0 || len > x.shape()[1] {
            return Err(Error::dim("crop", format!("cannot crop {:?} to {len}", x.shape())));
        }
        let value = Tensor::new(&[1, len], x.data()[..len].to_vec())?;
        Ok(self.push(value, Op::Crop { input }, &[input]))
    }

    /// Negative scale-invariant SDR of `estimate` against a fixed reference,
    /// in dB. The reference is not differentiated.
    pub fn neg_sisdr(&mut self, estimate: Var, reference: &[f64]) -> Result<Var> {
        let est = self.check(estimate)?;
        let (result, grad) = crate::loss::sisdr_with_grad(est.data(), reference)?;
        let grad = Tensor::new(est.shape(), grad.into_iter().map(|g| -g).collect())?;
        Ok(self.push(
            Tensor::scalar(-result.value_db),
            Op::NegSisdr { estimate, grad },
            &[estimate],
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`. Replaces gradients from any
    /// earlier sweep.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let value = self.check(loss)?;
        if value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::new(value.shape(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (parent, contribution) in self.local_grads(i, &g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for upstream gradient `g`.
    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv1d {
                input,
                kernel,
                geom,
                cols,
            } => {
                let (dx, dk) = kernels::conv1d_backward(geom, val(*kernel), cols, g);
                vec![(*input, dx), (*kernel, dk)]
            }
            Op::Depthwise {
                input,
                kernel,
                dilation,
            } => {
                let (dx, dk) = kernels::depthwise_conv1d_backward(val(*input), val(*kernel), *dilation, g);
                vec![(*input, dx), (*kernel, dk)]
            }
            Op::Pointwise { input, kernel } => {
                let (dx, dk) = kernels::pointwise_conv1d_backward(val(*input), val(*kernel), g);
                vec![(*input, dx), (*kernel, dk)]
            }
            Op::Transposed { input, kernel, stride } => {
                let (dx, dk) = kernels::transposed_conv1d_backward(val(*input), val(*kernel), *stride, g);
                vec![(*input, dx), (*kernel, dk)]
            }
            Op::Relu { input } => {
                let dx = val(*input)
                    .zip_map(g, |x, d| if x > 0.0 { d } else { 0.0 })
                    .expect("shape");
                vec![(*input, dx)]
            }
            Op::Prelu { input, slope } => {
                let x = val(*input);
                let a = val(*slope).data()[0];
                let dx = x.zip_map(g, |x, d| if x > 0.0 { d } else { a * d }).expect("shape");
                let da: f64 = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .filter(|(&x, _)| x <= 0.0)
                    .map(|(x, d)| x * d)
                    .sum();
                vec![
                    (*input, dx),
                    (*slope, Tensor::new(val(*slope).shape(), vec![da]).expect("scalar")),
                ]
            }
            Op::Softmax { input } => {
                let y = &node.value;
                let inner = y.dot(g);
                let dx = y.zip_map(g, |y, d| y * (d - inner)).expect("shape");
                vec![(*input, dx)]
            }
            Op::GlobalLayerNorm {
                input,
                gain,
                bias,
                inv_std,
                normalized,
                detach_stats,
            } => {
                let gn = val(*gain);
                let (c, len) = (normalized.shape()[0], normalized.shape()[1]);
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                let mut dxhat = vec![0.0; c * len];
                for ch in 0..c {
                    let range = ch * len..(ch + 1) * len;
                    for ((dh, &d), &xh) in dxhat[range.clone()]
                        .iter_mut()
                        .zip(&g.data()[range.clone()])
                        .zip(&normalized.data()[range])
                    {
                        dgain[ch] += d * xh;
                        dbias[ch] += d;
                        *dh = d * gn.data()[ch];
                    }
                }
                let dx = if *detach_stats {
                    dxhat.iter().map(|d| d * inv_std).collect()
                } else {
                    let n = (c * len) as f64;
                    let mean_d = dxhat.iter().sum::<f64>() / n;
                    let mean_dx = dxhat.iter().zip(normalized.data()).map(|(d, x)| d * x).sum::<f64>() / n;
                    dxhat
                        .iter()
                        .zip(normalized.data())
                        .map(|(d, x)| inv_std * (d - mean_d - x * mean_dx))
                        .collect()
                };
                vec![
                    (*input, Tensor::new(&[c, len], dx).expect("shape")),
                    (*gain, Tensor::from_vec(dgain)),
                    (*bias, Tensor::from_vec(dbias)),
                ]
            }
            Op::GlobalAvgPool { input } => {
                let x = val(*input);
                let (h, len) = (x.shape()[0], x.shape()[1]);
                let scale = 1.0 / len as f64;
                let dx = (0..h)
                    .flat_map(|r| std::iter::repeat_n(g.data()[r] * scale, len))
                    .collect();
                vec![(*input, Tensor::new(&[h, len], dx).expect("shape"))]
            }
            Op::Linear { input, weight, bias } => {
                let (x, w) = (val(*input), val(*weight));
                let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
                let mut dx = vec![0.0; d_in];
                let mut dw = vec![0.0; d_out * d_in];
                for o in 0..d_out {
                    let go = g.data()[o];
                    for j in 0..d_in {
                        dx[j] += w.data()[o * d_in + j] * go;
                        dw[o * d_in + j] = go * x.data()[j];
                    }
                }
                vec![
                    (*input, Tensor::from_vec(dx)),
                    (*weight, Tensor::new(&[d_out, d_in], dw).expect("shape")),
                    (*bias, g.clone()),
                ]
            }
            Op::Add { lhs, rhs } => vec![(*lhs, g.clone()), (*rhs, g.clone())],
            Op::Mul { lhs, rhs } => {
                let dl = val(*rhs).zip_map(g, |b, d| b * d).expect("shape");
                let dr = val(*lhs).zip_map(g, |a, d| a * d).expect("shape");
                vec![(*lhs, dl), (*rhs, dr)]
            }
            Op::ScaleByElement { input, weights, index } => {
                let w = val(*weights);
                let a = w.data()[*index];
                let mut dw = Tensor::zeros(w.shape());
                dw.data_mut()[*index] = val(*input).dot(g);
                vec![(*input, g.map(|d| a * d)), (*weights, dw)]
            }
            Op::Sum { input } => {
                vec![(*input, Tensor::full(val(*input).shape(), g.data()[0]))]
            }
            Op::Crop { input } => {
                let x = val(*input);
                let mut dx = Tensor::zeros(x.shape());
                dx.data_mut()[..g.numel()].copy_from_slice(g.data());
                vec![(*input, dx)]
            }
            Op::NegSisdr { estimate, grad } => {
                let scale = g.data()[0];
                vec![(*estimate, grad.map(|v| v * scale))]
            }
        }
    }
}

/// Numerically stable softmax (the maximum is subtracted first).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
