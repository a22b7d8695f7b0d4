use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "tcn")]
    Tcn,
    #[serde(rename = "wd-tcn")]
    WdTcn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Tcn => "tcn",
            Variant::WdTcn => "wd-tcn",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tcn" => Ok(Variant::Tcn),
            "wd-tcn" | "wdtcn" | "wd_tcn" => Ok(Variant::WdTcn),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected tcn or wd-tcn)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Squeeze width of the attention network.
pub const SE_HIDDEN: usize = 4;

/// Global layer norm epsilon.
pub const GLN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Blocks per dilation stack.
    pub x: usize,
    /// Number of stack repeats.
    pub r: usize,
    /// Encoder channels.
    pub n: usize,
    /// Bottleneck channels.
    pub b: usize,
    /// Channels inside each convolutional block.
    pub h: usize,
    /// Depthwise kernel size.
    pub p: usize,
    /// Encoder kernel / frame length in samples.
    pub block_len: usize,
    /// Parallel depthwise kernels per block (WD only).
    pub q: usize,
}

impl ModelConfig {
    /// Full-size model: N=512, B=128, H=512, P=3, L_BL=16.
    pub fn reference(variant: Variant, x: usize, r: usize) -> Self {
        Self {
            variant,
            x,
            r,
            n: 512,
            b: 128,
            h: 512,
            p: 3,
            block_len: 16,
            q: 2,
        }
    }

    /// Desk-scale model: X=2, R=2, N=64, B=32, H=64.
    pub fn toy(variant: Variant) -> Self {
        Self {
            n: 64,
            b: 32,
            h: 64,
            ..Self::reference(variant, 2, 2)
        }
    }

    pub fn with_channels(mut self, n: usize, b: usize, h: usize) -> Self {
        self.n = n;
        self.b = b;
        self.h = h;
        self
    }

    pub fn hop(&self) -> usize {
        self.block_len / 2
    }

    pub fn num_blocks(&self) -> usize {
        self.x * self.r
    }

    /// Depthwise kernels per block for this variant.
    pub fn kernels_per_block(&self) -> usize {
        match self.variant {
            Variant::Tcn => 1,
            Variant::WdTcn => self.q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.x == 0 || self.r == 0 {
            return fail(format!("X and R must be >= 1 (X={}, R={})", self.x, self.r));
        }
        if self.x > 30 {
            return fail(format!("X={} overflows the dilation schedule", self.x));
        }
        if self.n == 0 || self.b == 0 || self.h == 0 {
            return fail("channel counts must be positive".into());
        }
        if self.p.is_multiple_of(2) {
            return fail(format!("depthwise kernel size P must be odd, got {}", self.p));
        }
        if self.block_len == 0 || !self.block_len.is_multiple_of(2) {
            return fail(format!("block length must be even, got {}", self.block_len));
        }
        if self.variant == Variant::WdTcn && self.q != 2 {
            return fail(format!("only Q=2 is supported, got {}", self.q));
        }
        Ok(())
    }
}

/// `R` copies of `[2⁰, 2¹, …, 2^(X−1)]`.
pub fn dilation_schedule(x: usize, r: usize) -> Vec<usize> {
    (0..r).flat_map(|_| (0..x).map(|i| 1usize << i)).collect()
}

/// Per-block `(f_local, f_exp)` dilations of the two WD depthwise kernels.
pub fn wd_dilation_pairs(x: usize, r: usize) -> Vec<(usize, usize)> {
    dilation_schedule(x, r).into_iter().map(|f| (1, f)).collect()
}
