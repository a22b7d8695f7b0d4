//! 16-bit PCM mono WAV files and the JSON-lines corpus manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AudioClip, ReverbSample};
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32768.0;

fn wav_err(path: &Path, field: &'static str, detail: impl ToString) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        field,
        detail: detail.to_string(),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::io(path, io),
        other => wav_err(path, "header", other),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(
            path,
            "channels",
            format!("{} channels, only mono is supported", spec.channels),
        ));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(wav_err(path, "format", "only integer PCM is supported"));
    }
    if spec.bits_per_sample != 16 {
        return Err(wav_err(
            path,
            "bits_per_sample",
            format!("{} bits, only 16 is supported", spec.bits_per_sample),
        ));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, "data", e))?;
    if samples.is_empty() {
        return Err(wav_err(path, "data", "no samples"));
    }
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes `clip` as 16-bit PCM; values outside [−1, 1) are clipped.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, "create", e))?;
    for &v in &clip.samples {
        let q = (v * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE - 1.0) as i16;
        writer.write_sample(q).map_err(|e| wav_err(path, "data", e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, "finalize", e))
}

/// One corpus entry; paths are relative to the manifest's directory unless
/// absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path_in: PathBuf,
    pub path_target: PathBuf,
    pub t60: f64,
    pub seed: u64,
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes `in_NNNN.wav` / `target_NNNN.wav` pairs and `manifest.jsonl` into
/// `dir`, returning the manifest path.
pub fn write_corpus(dir: impl AsRef<Path>, samples: &[ReverbSample]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let path_in = PathBuf::from(format!("in_{i:04}.wav"));
        let path_target = PathBuf::from(format!("target_{i:04}.wav"));
        write_wav(dir.join(&path_in), &s.input)?;
        write_wav(dir.join(&path_target), &s.target)?;
        records.push(ManifestRecord {
            path_in,
            path_target,
            t60: s.t60,
            seed: s.seed,
        });
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

/// Loads every pair listed in a manifest.
pub fn load_corpus(manifest: impl AsRef<Path>) -> Result<Vec<ReverbSample>> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .into_iter()
        .map(|r| {
            let input = read_wav(base.join(&r.path_in))?;
            let target = read_wav(base.join(&r.path_target))?;
            if input.len() != target.len() || input.sample_rate != target.sample_rate {
                return Err(Error::dim(
                    "load_corpus",
                    format!(
                        "{} and {} differ in length or rate",
                        r.path_in.display(),
                        r.path_target.display()
                    ),
                ));
            }
            Ok(ReverbSample {
                input,
                target,
                t60: r.t60,
                seed: r.seed,
                direct_delay: 0,
                direct_gain: 0.0,
            })
        })
        .collect()
}
