//! Beamforming solvers over BS precoders and surface T&R coefficients.
//!
//! * [`penalty_optimize`]: penalty framework for the coupled phase-shift
//!   model: a growing weight on the violation of the phase-difference rule
//!   wrapped around a block ascent (precoder update, projected gradient on
//!   the coefficients).
//! * [`alternating_optimize`]: alternating baseline that projects onto the
//!   coupled set after every coefficient block.
//! * [`element_wise_optimize`]: coordinate descent for the single-antenna,
//!   two-user power minimisation problem.
//!
//! Lossless amplitudes are parameterised as `β^t = sin²θ`, `β^r = cos²θ`.

mod alternating;
mod element_wise;
mod objective;
mod penalty;
mod precoder;
mod system;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::element::{OperatingProtocol, PhaseShiftModel, TrCoefficients, TsFractions};
use crate::error::{Error, Result};

pub use alternating::alternating_optimize;
pub use element_wise::{element_wise_optimize, ElementWiseConfig, ElementWiseSolver};
pub use objective::{evaluate_objective, phase_violation, sinrs, sum_spectral_efficiency};
pub use penalty::{penalty_optimize, penalty_optimize_from};
pub use precoder::{min_power_precoders, mrt_precoders, precoder_update, wmmse_round, PowerSolution, PrecoderTarget};

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Maximise `Σ_k log2(1 + SINR_k)` under a total power budget (W).
    SumSpectralEfficiency { power_budget: f64 },
    /// Minimise total transmit power subject to per-user SINR targets
    /// (linear). Powers above `power_cap` (W) are reported as infeasible.
    TransmitPower { sinr_targets: Vec<f64>, power_cap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingProblem {
    pub objective: Objective,
    pub channels: ChannelRealization,
    /// Receiver noise power, W.
    pub noise_power: f64,
    pub model: PhaseShiftModel,
    pub protocol: OperatingProtocol,
}

impl BeamformingProblem {
    pub fn n_bs_antennas(&self) -> usize {
        self.channels.antennas()
    }

    pub fn users(&self) -> usize {
        self.channels.users.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.channels.users.is_empty() {
            return Err(Error::ScenarioMismatch("problem has no users".into()));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::InvalidParameter {
                name: "noise_power",
                reason: format!("must be positive, got {}", self.noise_power),
            });
        }
        match &self.objective {
            Objective::SumSpectralEfficiency { power_budget } => {
                if !(*power_budget >= 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "power_budget",
                        reason: format!("must be non-negative, got {power_budget}"),
                    });
                }
            }
            Objective::TransmitPower { sinr_targets, .. } => {
                if sinr_targets.len() != self.users() {
                    return Err(Error::LengthMismatch {
                        expected: self.users(),
                        got: sinr_targets.len(),
                    });
                }
                if sinr_targets.iter().any(|g| !(*g > 0.0)) {
                    return Err(Error::InvalidParameter {
                        name: "sinr_targets",
                        reason: "targets must be positive".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Penalty schedule and inner-loop stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub rho0: f64,
    pub growth: f64,
    /// Largest admissible phase-difference violation, radians.
    pub violation_tol: f64,
    pub max_outer: usize,
    /// Relative objective change that ends an inner loop.
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            rho0: 1e-2,
            growth: 5.0,
            violation_tol: 1e-4,
            max_outer: 20,
            inner_tol: 1e-5,
            max_inner: 200,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.rho0 > 0.0) {
            return bad("rho0", "must be positive");
        }
        if !(self.growth > 1.0) {
            return bad("growth", "must exceed 1");
        }
        if !(self.violation_tol > 0.0) {
            return bad("violation_tol", "must be positive");
        }
        if !(self.inner_tol > 0.0) {
            return bad("inner_tol", "must be positive");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("max_outer", "iteration limits must be positive");
        }
        Ok(())
    }
}

/// Precoders and coefficients used during one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    /// Antennas x users.
    pub precoders: DMatrix<Complex64>,
    pub coeffs: Vec<TrCoefficients>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Beamforming {
    Shared(Slot),
    TimeSwitched {
        transmission: Slot,
        reflection: Slot,
        fractions: TsFractions,
    },
}

impl Beamforming {
    pub fn max_violation(&self) -> f64 {
        match self {
            Beamforming::Shared(s) => phase_violation(&s.coeffs),
            Beamforming::TimeSwitched {
                transmission,
                reflection,
                ..
            } => phase_violation(&transmission.coeffs).max(phase_violation(&reflection.coeffs)),
        }
    }

    /// Total transmit power. For time switching, the time-averaged power.
    pub fn transmit_power(&self) -> f64 {
        let p = |s: &Slot| s.precoders.iter().map(|w| w.norm_sqr()).sum::<f64>();
        match self {
            Beamforming::Shared(s) => p(s),
            Beamforming::TimeSwitched {
                transmission,
                reflection,
                fractions,
            } => fractions.transmission * p(transmission) + fractions.reflection * p(reflection),
        }
    }
}

/// One solver iteration as recorded in [`Solution::trace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    /// Unpenalised objective (bit/s/Hz or W).
    pub objective: f64,
    /// Largest phase-difference violation of the iterate, radians.
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beamforming: Beamforming,
    pub objective_value: f64,
    pub trace: Vec<TraceRow>,
    /// Total inner iterations (or element updates) performed.
    pub iterations: usize,
}

impl Solution {
    pub fn max_violation(&self) -> f64 {
        self.beamforming.max_violation()
    }

    /// Violation recorded at the end of each outer iteration.
    pub fn outer_violations(&self) -> Vec<f64> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for row in &self.trace {
            match out.last_mut() {
                Some((o, v)) if *o == row.outer => *v = row.max_violation,
                _ => out.push((row.outer, row.max_violation)),
            }
        }
        out.into_iter().map(|(_, v)| v).collect()
    }
}
