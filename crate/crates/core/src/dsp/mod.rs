//! Time-domain signal plumbing: framing, overlap-add, synthetic room
//! impulse responses, corpus generation and WAV/manifest I/O.

mod corpus;
mod framing;
mod rir;
mod wav;

pub use corpus::{generate_corpus, speech_like, CorpusConfig, ReverbSample};
pub use framing::{frame_count, frame_signal, overlap_add, padded_len};
pub use rir::{apply_rir, synth_rir, Rir, RirParams, DEFAULT_TAIL_RATIO};
pub use wav::{load_corpus, read_manifest, read_wav, write_corpus, write_manifest, write_wav, ManifestRecord};

/// Mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Truncate or zero-pad to exactly `len` samples.
    pub fn fit_to(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self::new(samples, self.sample_rate)
    }
}
