//! Scale-invariant signal-to-distortion ratio and its use as a loss.
//!
//! The estimate is projected onto the reference; the projection is the
//! "target" component and the remainder is distortion. Both energies carry a
//! guard of `EPS·‖est‖²`, which bounds the ratio to ±10·log10(1/EPS) = ±120 dB
//! and keeps the ratio exactly invariant to power-of-two and sign rescaling
//! of the estimate.

use crate::error::{Error, Result};

/// Relative energy guard.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisdrResult {
    pub value_db: f64,
    /// ‖ref‖²
    pub target_energy: f64,
    /// ‖proj‖² where proj = ⟨est, ref⟩ / ‖ref‖² · ref
    pub projection_energy: f64,
    /// ‖est − proj‖²
    pub residual_energy: f64,
    /// ‖est‖²
    pub estimate_energy: f64,
}

impl SisdrResult {
    /// Loss form used for training (negative SISDR, dB).
    pub fn loss(&self) -> f64 {
        -self.value_db
    }

    /// Recomputes the dB value from the stored energies.
    pub fn value_from_energies(&self) -> f64 {
        let guard = EPS * self.estimate_energy + f64::MIN_POSITIVE;
        10.0 * ((self.projection_energy + guard) / (self.residual_energy + guard)).log10()
    }
}

struct Parts {
    result: SisdrResult,
    proj: Vec<f64>,
    residual: Vec<f64>,
}

fn decompose(est: &[f64], reference: &[f64]) -> Result<Parts> {
    if est.len() != reference.len() {
        return Err(Error::dim(
            "sisdr",
            format!("estimate has {} samples, reference {}", est.len(), reference.len()),
        ));
    }
    let target_energy: f64 = reference.iter().map(|r| r * r).sum();
    if target_energy == 0.0 {
        return Err(Error::Domain("sisdr reference is identically zero".into()));
    }
    let inner: f64 = est.iter().zip(reference).map(|(e, r)| e * r).sum();
    let scale = inner / target_energy;
    let proj: Vec<f64> = reference.iter().map(|r| scale * r).collect();
    let residual: Vec<f64> = est.iter().zip(&proj).map(|(e, p)| e - p).collect();
    let projection_energy = proj.iter().map(|p| p * p).sum();
    let residual_energy = residual.iter().map(|r| r * r).sum();
    let estimate_energy = est.iter().map(|e| e * e).sum();
    let mut result = SisdrResult {
        value_db: 0.0,
        target_energy,
        projection_energy,
        residual_energy,
        estimate_energy,
    };
    result.value_db = result.value_from_energies();
    Ok(Parts { result, proj, residual })
}

pub fn sisdr(est: &[f64], reference: &[f64]) -> Result<SisdrResult> {
    decompose(est, reference).map(|p| p.result)
}

/// SISDR together with its gradient with respect to the estimate.
pub fn sisdr_with_grad(est: &[f64], reference: &[f64]) -> Result<(SisdrResult, Vec<f64>)> {
    let Parts { result, proj, residual } = decompose(est, reference)?;
    let guard = EPS * result.estimate_energy + f64::MIN_POSITIVE;
    let num = result.projection_energy + guard;
    let den = result.residual_energy + guard;
    // d‖proj‖² = 2·proj, d‖res‖² = 2·res, d(EPS‖est‖²) = 2·EPS·est
    let c = 10.0 / std::f64::consts::LN_10;
    let grad = est
        .iter()
        .zip(proj.iter().zip(&residual))
        .map(|(&e, (&p, &r))| c * (2.0 * (p + EPS * e) / num - 2.0 * (r + EPS * e) / den))
        .collect();
    Ok((result, grad))
}

/// Gradient of the negative-SISDR loss with respect to the estimate,
/// computed through the autodiff graph.
pub fn sisdr_loss_grad(est: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    use crate::{tape::Tape, tensor::Tensor};
    let mut tape = Tape::new();
    let e = tape.variable(Tensor::from_vec(est.to_vec()));
    let loss = tape.neg_sisdr(e, reference)?;
    tape.backward(loss)?;
    Ok(tape.grad(e).expect("estimate is differentiable").data().to_vec())
}
