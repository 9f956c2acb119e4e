use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::effective_channel;
use crate::element::TrCoefficients;
use crate::error::{Error, Result};

use super::{Beamforming, BeamformingProblem, Objective, Slot};

/// `SINR_k = |a_k^T w_k|² / (Σ_{i≠k} |a_k^T w_i|² + σ²)`
pub fn sinrs(channels: &[DVector<Complex64>], w: &DMatrix<Complex64>, noise: f64) -> Vec<f64> {
    channels
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let z = w.transpose() * a;
            let signal = z[k].norm_sqr();
            let total: f64 = z.iter().map(|v| v.norm_sqr()).sum();
            signal / (total - signal + noise)
        })
        .collect()
}

/// `Σ_k log2(1 + SINR_k)` in bit/s/Hz.
pub fn sum_spectral_efficiency(channels: &[DVector<Complex64>], w: &DMatrix<Complex64>, noise: f64) -> f64 {
    sinrs(channels, w, noise).iter().map(|s| (1.0 + s).log2()).sum()
}

/// Largest distance of any element's `φ^r − φ^t` from the nearer of π/2 and
/// 3π/2, skipping elements with a switched-off mode.
pub fn phase_violation(coeffs: &[TrCoefficients]) -> f64 {
    coeffs.iter().map(|c| c.phase_violation()).fold(0.0, f64::max)
}

fn slot_channels(prob: &BeamformingProblem, slot: &Slot) -> Result<Vec<DVector<Complex64>>> {
    let k = prob.users();
    if slot.precoders.ncols() != k || slot.precoders.nrows() != prob.n_bs_antennas() {
        return Err(Error::LengthMismatch {
            expected: prob.n_bs_antennas() * k,
            got: slot.precoders.len(),
        });
    }
    (0..k)
        .map(|u| effective_channel(&prob.channels, &slot.coeffs, u))
        .collect()
}

fn slot_value(prob: &BeamformingProblem, slot: &Slot) -> Result<f64> {
    let a = slot_channels(prob, slot)?;
    Ok(match prob.objective {
        Objective::SumSpectralEfficiency { .. } => sum_spectral_efficiency(&a, &slot.precoders, prob.noise_power),
        Objective::TransmitPower { .. } => slot.precoders.iter().map(|w| w.norm_sqr()).sum(),
    })
}

/// Objective of a candidate: sum spectral efficiency (time-weighted across
/// slots for time switching) or total transmit power.
pub fn evaluate_objective(prob: &BeamformingProblem, beamforming: &Beamforming) -> Result<f64> {
    match beamforming {
        Beamforming::Shared(slot) => slot_value(prob, slot),
        Beamforming::TimeSwitched {
            transmission,
            reflection,
            fractions,
        } => Ok(fractions.transmission * slot_value(prob, transmission)?
            + fractions.reflection * slot_value(prob, reflection)?),
    }
}
