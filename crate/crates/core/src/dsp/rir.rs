//! Statistical room impulse responses: a single direct-path tap followed by
//! an exponentially decaying Gaussian tail whose 60 dB decay time is T60.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

/// Tail gain relative to the direct-path gain.
pub const DEFAULT_TAIL_RATIO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RirParams {
    pub t60: f64,
    /// Direct-path delay τ in samples.
    pub delay: usize,
    /// Direct-path gain α.
    pub gain: f64,
    pub sample_rate: u32,
    /// Total number of taps.
    pub length: usize,
    /// Tail gain g as a fraction of α.
    pub tail_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub direct_delay: usize,
    pub direct_gain: f64,
    pub t60: f64,
    pub sample_rate: u32,
    pub tail_gain: f64,
}

impl Rir {
    /// Pure direct path `α·δ[i−τ]`.
    pub fn direct_only(delay: usize, gain: f64, sample_rate: u32) -> Self {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = gain;
        Self {
            taps,
            direct_delay: delay,
            direct_gain: gain,
            t60: 0.0,
            sample_rate,
            tail_gain: 0.0,
        }
    }

    /// Deterministic tail envelope `g·10^(−3(i−τ)/(fs·T60))` for `i > τ`.
    pub fn envelope(&self, i: usize) -> f64 {
        if i <= self.direct_delay || self.t60 <= 0.0 {
            return 0.0;
        }
        let lag = (i - self.direct_delay) as f64;
        self.tail_gain * 10f64.powf(-3.0 * lag / (f64::from(self.sample_rate) * self.t60))
    }

    pub fn tail_energy(&self) -> f64 {
        self.taps[self.direct_delay + 1..].iter().map(|v| v * v).sum()
    }
}

pub fn synth_rir(params: &RirParams, seed: u64) -> Result<Rir> {
    if params.t60 <= 0.0 || !params.t60.is_finite() {
        return Err(Error::Config(format!("t60 must be positive, got {}", params.t60)));
    }
    if params.length <= params.delay {
        return Err(Error::Config(format!(
            "rir length {} must exceed direct delay {}",
            params.length, params.delay
        )));
    }
    if params.gain <= 0.0 {
        return Err(Error::Config(format!(
            "direct gain must be positive, got {}",
            params.gain
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rir = Rir {
        taps: vec![0.0; params.length],
        direct_delay: params.delay,
        direct_gain: params.gain,
        t60: params.t60,
        sample_rate: params.sample_rate,
        tail_gain: params.tail_ratio * params.gain,
    };
    rir.taps[params.delay] = params.gain;
    for i in params.delay + 1..params.length {
        let n: f64 = rng.sample(StandardNormal);
        rir.taps[i] = n * rir.envelope(i);
    }
    Ok(rir)
}

/// Reverberant signal `x = h ∗ s` (truncated to `len(s)`) and the direct-path
/// target `s_dir[i] = α·s[i−τ]`.
pub fn apply_rir(s: &AudioClip, h: &Rir) -> (AudioClip, AudioClip) {
    let len = s.len();
    let mut x = vec![0.0; len];
    for (j, &tap) in h.taps.iter().enumerate() {
        if tap == 0.0 || j >= len {
            continue;
        }
        for (xi, &si) in x[j..].iter_mut().zip(&s.samples) {
            *xi += tap * si;
        }
    }
    let mut target = vec![0.0; len];
    if h.direct_delay < len {
        for (t, &si) in target[h.direct_delay..].iter_mut().zip(&s.samples) {
            *t = h.direct_gain * si;
        }
    }
    (AudioClip::new(x, s.sample_rate), AudioClip::new(target, s.sample_rate))
}
