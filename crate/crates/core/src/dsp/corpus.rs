//! Seeded synthetic dereverberation corpus.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rir::{apply_rir, synth_rir, RirParams, DEFAULT_TAIL_RATIO};
use super::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub count: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub t60_min: f64,
    pub t60_max: f64,
    pub seed: u64,
    #[serde(default = "default_tail_ratio")]
    pub tail_ratio: f64,
}

fn default_tail_ratio() -> f64 {
    DEFAULT_TAIL_RATIO
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            count: 16,
            duration_s: 4.0,
            sample_rate: 8000,
            t60_min: 0.1,
            t60_max: 1.0,
            seed: 0,
            tail_ratio: DEFAULT_TAIL_RATIO,
        }
    }
}

/// Reverberant input paired with its direct-path target.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverbSample {
    pub input: AudioClip,
    pub target: AudioClip,
    pub t60: f64,
    pub seed: u64,
    pub direct_delay: usize,
    pub direct_gain: f64,
}

/// Voiced "syllables" of 3–5 amplitude-modulated harmonics over a gliding
/// f0 in [80, 300] Hz, with a little low-passed noise, separated by silence.
pub fn speech_like(len: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let mut out = vec![0.0; len];
    let mut start = (rng.random_range(0.0..0.15) * fs) as usize;
    while start < len {
        let syl = ((rng.random_range(0.12..0.40) * fs) as usize).max(1);
        let f0_a: f64 = rng.random_range(80.0..300.0);
        let f0_b = (f0_a * rng.random_range(0.8..1.2)).clamp(80.0, 300.0);
        let harmonics = rng.random_range(3..=5usize);
        let amps: Vec<f64> = (1..=harmonics).map(|k| rng.random_range(0.5..1.0) / k as f64).collect();
        let phases: Vec<f64> = (0..harmonics)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let am_rate = rng.random_range(3.0..7.0);
        let am_depth = rng.random_range(0.2..0.5);
        let noise_level = rng.random_range(0.02..0.08);
        let mut phase = 0.0;
        let mut lp = 0.0;
        for i in 0..syl.min(len - start) {
            let frac = i as f64 / syl as f64;
            let t = i as f64 / fs;
            let f0 = f0_a + (f0_b - f0_a) * frac;
            phase += std::f64::consts::TAU * f0 / fs;
            let env =
                (std::f64::consts::PI * frac).sin() * (1.0 + am_depth * (std::f64::consts::TAU * am_rate * t).sin());
            let voiced: f64 = amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(k, (a, p))| a * ((k + 1) as f64 * phase + p).sin())
                .sum();
            let white: f64 = rng.sample(StandardNormal);
            lp = 0.7 * lp + 0.3 * white;
            out[start + i] = env * (voiced + noise_level * lp);
        }
        let gap = (rng.random_range(0.05..0.25) * fs) as usize;
        start += syl + gap;
    }
    out
}

/// Generates `count` samples with T60 stratified over `[t60_min, t60_max]`
/// (sample `i` draws from the `i`-th of `count` equal sub-intervals).
/// Pure function of the config.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<ReverbSample>> {
    if !(config.t60_min > 0.0 && config.t60_min <= config.t60_max) {
        return Err(Error::Config(format!(
            "t60 range [{}, {}] must be positive and ordered",
            config.t60_min, config.t60_max
        )));
    }
    if config.duration_s <= 0.0 || config.sample_rate == 0 {
        return Err(Error::Config("duration and sample rate must be positive".into()));
    }
    let len = (config.duration_s * f64::from(config.sample_rate)).round() as usize;
    let fs = f64::from(config.sample_rate);
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let seed = master.next_u64();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = (config.t60_max - config.t60_min) / config.count as f64;
        let t60 = config.t60_min + width * (i as f64 + rng.random_range(0.0..1.0));
        let delay = rng.random_range(8..=40usize);
        let gain = rng.random_range(0.3..=1.0);
        let clean = AudioClip::new(speech_like(len, config.sample_rate, &mut rng), config.sample_rate);
        let rir = synth_rir(
            &RirParams {
                t60,
                delay,
                gain,
                sample_rate: config.sample_rate,
                length: delay + (fs * t60).ceil() as usize + 1,
                tail_ratio: config.tail_ratio,
            },
            rng.next_u64(),
        )?;
        let (mut input, mut target) = apply_rir(&clean, &rir);
        let peak = input.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let scale = 0.9 / peak;
            input.samples.iter_mut().for_each(|v| *v *= scale);
            target.samples.iter_mut().for_each(|v| *v *= scale);
        }
        samples.push(ReverbSample {
            input,
            target,
            t60,
            seed,
            direct_delay: delay,
            direct_gain: gain,
        });
    }
    Ok(samples)
}
