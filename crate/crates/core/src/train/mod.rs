//! Negative-SISDR training with Adam, gradient-norm clipping and a
//! plateau-halving learning-rate schedule.

mod adam;
mod schedule;

pub use adam::Adam;
pub use schedule::PlateauSchedule;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::ReverbSample;
use crate::error::{Error, Result};
use crate::loss::{sisdr, SisdrResult};
use crate::model::{Checkpoint, ForwardOptions, Model};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_halve_patience: usize,
    pub clip_seconds: f64,
    pub seed: u64,
    /// Global L2 gradient-norm bound; `None` disables clipping.
    pub grad_clip_norm: Option<f64>,
    /// Fraction of the corpus held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            lr_initial: 0.001,
            lr_halve_patience: 3,
            clip_seconds: 4.0,
            seed: 0,
            grad_clip_norm: Some(5.0),
            validation_fraction: 1.0 / 8.0,
        }
    }
}

/// One row of the loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss_db: f64,
    pub val_loss_db: f64,
    pub lr: f64,
    pub clipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub best_validation_loss: f64,
    pub schedule: PlateauSchedule,
    pub optimizer: Adam,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            best_validation_loss: f64::INFINITY,
            schedule: PlateauSchedule::new(cfg.lr_initial, cfg.lr_halve_patience),
            optimizer: Adam::new(model.params()),
            seed: cfg.seed,
            history: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub best_model: Model,
}

/// Train/validation partition of corpus indices, fixed by the seed.
pub fn split_indices(len: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005E_ED0F_5A17_u64);
    idx.shuffle(&mut rng);
    let n_val = ((len as f64) * fraction).floor() as usize;
    if n_val == 0 || n_val >= len {
        // Too small to hold out: validate on the training set.
        return (idx.clone(), idx);
    }
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Truncate/pad every clip to `clip_seconds`.
pub fn prepare(corpus: &[ReverbSample], clip_seconds: f64) -> Vec<ReverbSample> {
    corpus
        .iter()
        .map(|s| {
            let len = (clip_seconds * f64::from(s.input.sample_rate)).round().max(1.0) as usize;
            ReverbSample {
                input: s.input.fit_to(len),
                target: s.target.fit_to(len),
                ..s.clone()
            }
        })
        .collect()
}

/// Loss and parameter gradients for one utterance.
pub fn loss_and_grads(model: &Model, sample: &ReverbSample) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let g = model.build(&mut tape, &sample.input.samples, &ForwardOptions::default())?;
    let loss = tape.neg_sisdr(g.estimate, &sample.target.samples)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    tape.backward(loss)?;
    let grads = g
        .params
        .iter()
        .zip(model.params())
        .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, grads))
}

/// SISDR of the model output for each sample.
pub fn evaluate(model: &Model, samples: &[ReverbSample]) -> Result<Vec<SisdrResult>> {
    samples
        .iter()
        .map(|s| {
            let (est, _) = model.forward(&s.input)?;
            sisdr(&est.samples, &s.target.samples)
        })
        .collect()
}

/// SISDR of the unprocessed reverberant input.
pub fn input_sisdr(samples: &[ReverbSample]) -> Result<Vec<SisdrResult>> {
    samples
        .iter()
        .map(|s| sisdr(&s.input.samples, &s.target.samples))
        .collect()
}

pub fn mean_db(results: &[SisdrResult]) -> f64 {
    results.iter().map(|r| r.value_db).sum::<f64>() / results.len() as f64
}

fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> bool {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm <= max_norm {
        return false;
    }
    let scale = max_norm / norm;
    for g in grads {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    true
}

/// Loss curve as CSV: `epoch,train_loss_db,val_loss_db,lr`.
pub fn loss_curve_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss_db,val_loss_db,lr\n");
    for r in history {
        let _ = writeln!(out, "{},{:?},{:?},{:?}", r.epoch, r.train_loss_db, r.val_loss_db, r.lr);
    }
    out
}

/// Files written by [`train`] when given an output directory.
pub struct OutputPaths {
    pub loss_curve: PathBuf,
    pub best: PathBuf,
    pub last: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            loss_curve: dir.join("loss_curve.csv"),
            best: dir.join("best.ckpt.json"),
            last: dir.join("last.ckpt.json"),
        }
    }
}

/// Resumable checkpoint: model parameters plus training state.
pub fn save_resumable(model: &Model, state: &TrainState, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::from_model(model);
    ck.train_state = Some(serde_json::to_value(state)?);
    ck.save(path)
}

pub fn load_resumable(path: &Path) -> Result<(Model, TrainState)> {
    let ck = Checkpoint::load(path)?;
    let model = ck.to_model()?;
    let state = ck
        .train_state
        .clone()
        .ok_or_else(|| Error::Checkpoint(format!("{} has no training state", path.display())))?;
    Ok((model, serde_json::from_value(state)?))
}

/// Runs epochs `state.epoch + 1 ..= cfg.epochs`.
///
/// Each epoch shuffles the training split with a seed derived from
/// `(cfg.seed, epoch)`, so a resumed run replays the same batches.
pub fn train(
    model: &mut Model,
    corpus: &[ReverbSample],
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let data = prepare(corpus, cfg.clip_seconds);
    let (train_idx, val_idx) = split_indices(data.len(), cfg.validation_fraction, cfg.seed);
    let val_set: Vec<ReverbSample> = val_idx.iter().map(|&i| data[i].clone()).collect();
    let paths = out_dir.map(OutputPaths::in_dir);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut state = resume.unwrap_or_else(|| TrainState::new(model, cfg));
    let mut best_model = model.clone();

    for epoch in state.epoch + 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let lr = state.lr();
        let mut loss_sum = 0.0;
        let mut clipped_steps = 0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Option<Vec<Tensor>> = None;
            for &i in batch {
                let (loss, grads) = loss_and_grads(model, &data[i])?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_no + 1,
                    });
                }
                loss_sum += loss;
                match &mut acc {
                    Some(a) => a.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                    None => acc = Some(grads),
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            grads
                .iter_mut()
                .for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= inv));
            if let Some(max_norm) = cfg.grad_clip_norm {
                if clip_global_norm(&mut grads, max_norm) {
                    clipped_steps += 1;
                }
            }
            state.optimizer.step(model.params_mut(), &grads, lr)?;
        }

        let val_loss = -mean_db(&evaluate(model, &val_set)?);
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let record = EpochRecord {
            epoch,
            train_loss_db: loss_sum / order.len() as f64,
            val_loss_db: val_loss,
            lr,
            clipped_steps,
        };
        state.schedule.update(val_loss);
        if val_loss < state.best_validation_loss {
            state.best_validation_loss = val_loss;
            best_model = model.clone();
            if let Some(p) = &paths {
                best_model.save(&p.best)?;
            }
        }
        state.epoch = epoch;
        state.history.push(record.clone());
        if let Some(p) = &paths {
            std::fs::write(&p.loss_curve, loss_curve_csv(&state.history)).map_err(|e| Error::io(&p.loss_curve, e))?;
            save_resumable(model, &state, &p.last)?;
        }
        on_epoch(&record);
    }
    Ok(TrainOutcome { state, best_model })
}
