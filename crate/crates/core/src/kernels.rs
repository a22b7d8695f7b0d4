//! Forward and adjoint kernels for the convolution family.
//!
//! All convolutions use the cross-correlation convention (no kernel flip).
//! Layouts are channel-major: a signal is `[channels × frames]`.

use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Tensor};

/// Output length of a strided, zero-padded 1-D convolution.
pub fn conv1d_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "conv1d needs kernel >= 1 and stride >= 1 (kernel {kernel}, stride {stride})"
        )));
    }
    let padded = len + 2 * padding;
    if padded < kernel {
        return Err(Error::dim(
            "conv1d",
            format!("padded length {padded} (axis 1) shorter than kernel {kernel} (axis 2)"),
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Unfold `input [c_in × len]` into `[(c_in·k) × out_len]` columns.
fn im2col(input: &[f64], c_in: usize, len: usize, k: usize, stride: usize, padding: usize, out_len: usize) -> Vec<f64> {
    let mut cols = vec![0.0; c_in * k * out_len];
    for c in 0..c_in {
        let x = &input[c * len..(c + 1) * len];
        for j in 0..k {
            let row = &mut cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            for (t, slot) in row.iter_mut().enumerate() {
                let pos = (t * stride + j) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    *slot = x[pos as usize];
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], c_in: usize, len: usize, k: usize, stride: usize, padding: usize, out_len: usize) -> Vec<f64> {
    let mut grad = vec![0.0; c_in * len];
    for c in 0..c_in {
        let g = &mut grad[c * len..(c + 1) * len];
        for j in 0..k {
            let row = &cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            for (t, &v) in row.iter().enumerate() {
                let pos = (t * stride + j) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    g[pos as usize] += v;
                }
            }
        }
    }
    grad
}

/// Geometry of a validated `conv1d` call.
#[derive(Debug, Clone, Copy)]
pub struct Conv1dGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_len: usize,
}

impl Conv1dGeom {
    pub fn new(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        input.expect_rank("conv1d", 2)?;
        kernel.expect_rank("conv1d", 3)?;
        let (c_in, len) = (input.shape()[0], input.shape()[1]);
        let (c_out, kc_in, k) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
        if kc_in != c_in {
            return Err(Error::dim(
                "conv1d",
                format!("input axis 0 has {c_in} channels but kernel axis 1 expects {kc_in}"),
            ));
        }
        let out_len = conv1d_out_len(len, k, stride, padding)?;
        Ok(Self {
            c_in,
            c_out,
            len,
            k,
            stride,
            padding,
            out_len,
        })
    }
}

/// Returns the output and the unfolded columns (kept for the backward pass).
pub fn conv1d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<(Tensor, Vec<f64>)> {
    let g = Conv1dGeom::new(input, kernel, stride, padding)?;
    let cols = im2col(input.data(), g.c_in, g.len, g.k, g.stride, g.padding, g.out_len);
    let mut out = vec![0.0; g.c_out * g.out_len];
    gemm(
        MatRef::row_major(kernel.data(), g.c_out, g.c_in * g.k),
        MatRef::row_major(&cols, g.c_in * g.k, g.out_len),
        0.0,
        &mut out,
    );
    Ok((Tensor::new(&[g.c_out, g.out_len], out)?, cols))
}

/// Gradients of `conv1d` with respect to input and kernel.
pub fn conv1d_backward(geom: &Conv1dGeom, kernel: &Tensor, cols: &[f64], grad_out: &Tensor) -> (Tensor, Tensor) {
    let g = geom;
    let ck = g.c_in * g.k;
    let mut grad_k = vec![0.0; g.c_out * ck];
    gemm(
        MatRef::row_major(grad_out.data(), g.c_out, g.out_len),
        MatRef::row_major(cols, ck, g.out_len).t(),
        0.0,
        &mut grad_k,
    );
    let mut grad_cols = vec![0.0; ck * g.out_len];
    gemm(
        MatRef::row_major(kernel.data(), g.c_out, ck).t(),
        MatRef::row_major(grad_out.data(), g.c_out, g.out_len),
        0.0,
        &mut grad_cols,
    );
    let grad_in = col2im(&grad_cols, g.c_in, g.len, g.k, g.stride, g.padding, g.out_len);
    (
        Tensor::new(&[g.c_in, g.len], grad_in).expect("input shape"),
        Tensor::new(&[g.c_out, g.c_in, g.k], grad_k).expect("kernel shape"),
    )
}

fn depthwise_check(input: &Tensor, kernel: &Tensor, dilation: usize) -> Result<(usize, usize, usize)> {
    input.expect_rank("depthwise_conv1d", 2)?;
    kernel.expect_rank("depthwise_conv1d", 2)?;
    let (g, len) = (input.shape()[0], input.shape()[1]);
    let (kg, p) = (kernel.shape()[0], kernel.shape()[1]);
    if kg != g {
        return Err(Error::dim(
            "depthwise_conv1d",
            format!("input axis 0 has {g} channels but kernel axis 0 has {kg}"),
        ));
    }
    if p % 2 == 0 {
        return Err(Error::Config(format!(
            "depthwise kernel size must be odd for length-preserving padding, got {p}"
        )));
    }
    if dilation == 0 {
        return Err(Error::Config("dilation must be >= 1".into()));
    }
    Ok((g, len, p))
}

/// Per-channel dilated cross-correlation with symmetric zero padding
/// `(P−1)·f/2`, so the frame count is preserved.
pub fn depthwise_conv1d(input: &Tensor, kernel: &Tensor, dilation: usize) -> Result<Tensor> {
    let (g, len, p) = depthwise_check(input, kernel, dilation)?;
    let half = (p - 1) / 2 * dilation;
    let mut out = vec![0.0; g * len];
    for c in 0..g {
        let x = input.row(c);
        let k = kernel.row(c);
        let y = &mut out[c * len..(c + 1) * len];
        for (j, &w) in k.iter().enumerate() {
            // y[t] += w · x[t + j·f − half]
            let shift = (j * dilation) as isize - half as isize;
            let t0 = (-shift).max(0) as usize;
            let t1 = (len as isize - shift).clamp(0, len as isize) as usize;
            for t in t0..t1 {
                y[t] += w * x[(t as isize + shift) as usize];
            }
        }
    }
    Tensor::new(&[g, len], out)
}

pub fn depthwise_conv1d_backward(
    input: &Tensor,
    kernel: &Tensor,
    dilation: usize,
    grad_out: &Tensor,
) -> (Tensor, Tensor) {
    let (g, len) = (input.shape()[0], input.shape()[1]);
    let p = kernel.shape()[1];
    let half = (p - 1) / 2 * dilation;
    let mut grad_in = vec![0.0; g * len];
    let mut grad_k = vec![0.0; g * p];
    for c in 0..g {
        let x = input.row(c);
        let k = kernel.row(c);
        let dy = grad_out.row(c);
        let dx = &mut grad_in[c * len..(c + 1) * len];
        for (j, &w) in k.iter().enumerate() {
            let shift = (j * dilation) as isize - half as isize;
            let t0 = (-shift).max(0) as usize;
            let t1 = (len as isize - shift).clamp(0, len as isize) as usize;
            let mut acc = 0.0;
            for (t, &d) in dy.iter().enumerate().take(t1).skip(t0) {
                let src = (t as isize + shift) as usize;
                acc += d * x[src];
                dx[src] += w * d;
            }
            grad_k[c * p + j] = acc;
        }
    }
    (
        Tensor::new(&[g, len], grad_in).expect("input shape"),
        Tensor::new(&[g, p], grad_k).expect("kernel shape"),
    )
}

/// `output[:, t] = kernelᵀ · input[:, t]` for `input [G × L]`, `kernel [G × H]`.
pub fn pointwise_conv1d(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    input.expect_rank("pointwise_conv1d", 2)?;
    kernel.expect_rank("pointwise_conv1d", 2)?;
    let (g, len) = (input.shape()[0], input.shape()[1]);
    let (kg, h) = (kernel.shape()[0], kernel.shape()[1]);
    if kg != g {
        return Err(Error::dim(
            "pointwise_conv1d",
            format!("input axis 0 has {g} channels but kernel axis 0 has {kg}"),
        ));
    }
    let mut out = vec![0.0; h * len];
    gemm(
        MatRef::row_major(kernel.data(), g, h).t(),
        MatRef::row_major(input.data(), g, len),
        0.0,
        &mut out,
    );
    Tensor::new(&[h, len], out)
}

pub fn pointwise_conv1d_backward(input: &Tensor, kernel: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor) {
    let (g, len) = (input.shape()[0], input.shape()[1]);
    let h = kernel.shape()[1];
    let mut grad_in = vec![0.0; g * len];
    gemm(
        MatRef::row_major(kernel.data(), g, h),
        MatRef::row_major(grad_out.data(), h, len),
        0.0,
        &mut grad_in,
    );
    let mut grad_k = vec![0.0; g * h];
    gemm(
        MatRef::row_major(input.data(), g, len),
        MatRef::row_major(grad_out.data(), h, len).t(),
        0.0,
        &mut grad_k,
    );
    (
        Tensor::new(&[g, len], grad_in).expect("input shape"),
        Tensor::new(&[g, h], grad_k).expect("kernel shape"),
    )
}

fn transposed_check(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<(usize, usize, usize)> {
    input.expect_rank("transposed_conv1d", 2)?;
    kernel.expect_rank("transposed_conv1d", 2)?;
    let (n, frames) = (input.shape()[0], input.shape()[1]);
    let (kn, k) = (kernel.shape()[0], kernel.shape()[1]);
    if kn != n {
        return Err(Error::dim(
            "transposed_conv1d",
            format!("input axis 0 has {n} channels but kernel axis 0 has {kn}"),
        ));
    }
    if stride == 0 || k % stride != 0 {
        return Err(Error::Config(format!(
            "transposed_conv1d stride {stride} must divide kernel size {k}"
        )));
    }
    Ok((n, frames, k))
}

/// Overlap-add synthesis: each frame `t` contributes `kernelᵀ·input[:, t]`
/// at offset `t·stride`. Output is `[1 × ((frames−1)·stride + K)]`.
pub fn transposed_conv1d(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    let (n, frames, k) = transposed_check(input, kernel, stride)?;
    let mut blocks = vec![0.0; k * frames];
    gemm(
        MatRef::row_major(kernel.data(), n, k).t(),
        MatRef::row_major(input.data(), n, frames),
        0.0,
        &mut blocks,
    );
    let out_len = (frames - 1) * stride + k;
    let mut out = vec![0.0; out_len];
    for j in 0..k {
        let row = &blocks[j * frames..(j + 1) * frames];
        for (t, &v) in row.iter().enumerate() {
            out[t * stride + j] += v;
        }
    }
    Tensor::new(&[1, out_len], out)
}

pub fn transposed_conv1d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> (Tensor, Tensor) {
    let (n, frames) = (input.shape()[0], input.shape()[1]);
    let k = kernel.shape()[1];
    let dy = grad_out.data();
    let mut grad_blocks = vec![0.0; k * frames];
    for j in 0..k {
        for t in 0..frames {
            grad_blocks[j * frames + t] = dy[t * stride + j];
        }
    }
    let mut grad_in = vec![0.0; n * frames];
    gemm(
        MatRef::row_major(kernel.data(), n, k),
        MatRef::row_major(&grad_blocks, k, frames),
        0.0,
        &mut grad_in,
    );
    let mut grad_k = vec![0.0; n * k];
    gemm(
        MatRef::row_major(input.data(), n, frames),
        MatRef::row_major(&grad_blocks, k, frames).t(),
        0.0,
        &mut grad_k,
    );
    (
        Tensor::new(&[n, frames], grad_in).expect("input shape"),
        Tensor::new(&[n, k], grad_k).expect("kernel shape"),
    )
}
