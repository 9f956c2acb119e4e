//! Element-wise coordinate descent for the single-antenna, two-user
//! transmit-power problem under the coupled phase-shift model.
//!
//! With one BS antenna the effective channels are scalars
//! `a_k = d_k + Σ_m c_m^{side_k} q_km`, and the power needed for user `k` to
//! reach SNR `γ_k` is `γ_k σ² / |a_k|²`. The solver minimises the larger of
//! the two, `P = max_k γ_k σ² / |a_k|²`, one element at a time: for each
//! auxiliary bit it scans a phase grid (and a split-angle grid), refines the
//! best point by golden section, and accepts the result only if `P` drops.
//! The per-element cost is constant, so one sweep is linear in `M`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::element::{OperatingProtocol, PhaseShiftModel, Side, TrCoefficients};
use crate::error::{Error, Result};

use super::system::Params;
use super::{Beamforming, BeamformingProblem, Objective, Slot, Solution, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementWiseConfig {
    /// Phase grid size per auxiliary bit.
    pub grid_points: usize,
    /// Split-angle grid size over `[0, π/2]`.
    pub amplitude_points: usize,
    /// Alternating golden-section refinements of phase and split angle.
    pub refine_rounds: usize,
    /// Relative improvement over a full sweep below which the solver stops.
    pub inner_tol: f64,
    pub max_sweeps: usize,
}

impl Default for ElementWiseConfig {
    fn default() -> Self {
        Self {
            grid_points: 64,
            amplitude_points: 17,
            refine_rounds: 2,
            inner_tol: 1e-5,
            max_sweeps: 100,
        }
    }
}

/// Stateful solver, exposed so callers can drive and time individual sweeps.
#[derive(Debug, Clone)]
pub struct ElementWiseSolver {
    cfg: ElementWiseConfig,
    /// Cascade gains `h_km g_m` for the transmission (0) and reflection (1) user.
    q: [Vec<Complex64>; 2],
    /// Scaled targets `γ_k σ²`.
    need: [f64; 2],
    /// Problem user index of the transmission and reflection user.
    user_index: [usize; 2],
    power_cap: f64,
    direct: [Complex64; 2],
    params: Params,
    a: [Complex64; 2],
    trace: Vec<TraceRow>,
    sweeps: usize,
    updates: usize,
}

impl ElementWiseSolver {
    pub fn new(prob: &BeamformingProblem, cfg: ElementWiseConfig, seed: u64) -> Result<Self> {
        prob.validate()?;
        let Objective::TransmitPower {
            sinr_targets,
            power_cap,
        } = &prob.objective
        else {
            return Err(Error::ScenarioMismatch(
                "element-wise solver minimises transmit power".into(),
            ));
        };
        if prob.n_bs_antennas() != 1 {
            return Err(Error::ScenarioMismatch(format!(
                "element-wise solver needs a single BS antenna, got {}",
                prob.n_bs_antennas()
            )));
        }
        if prob.model != PhaseShiftModel::Coupled {
            return Err(Error::ScenarioMismatch(
                "element-wise solver targets the coupled model".into(),
            ));
        }
        if prob.protocol != OperatingProtocol::EnergySplitting {
            return Err(Error::ScenarioMismatch(
                "element-wise solver needs energy splitting".into(),
            ));
        }
        let users = &prob.channels.users;
        let t = users.iter().position(|u| u.side == Side::Transmission);
        let r = users.iter().position(|u| u.side == Side::Reflection);
        let (Some(t), Some(r), 2) = (t, r, users.len()) else {
            return Err(Error::ScenarioMismatch(
                "element-wise solver needs exactly one user per side".into(),
            ));
        };
        if cfg.grid_points < 2 || cfg.amplitude_points < 2 {
            return Err(Error::InvalidParameter {
                name: "grid_points",
                reason: "grids need at least two points".into(),
            });
        }

        let g = prob.channels.g.column(0);
        let cascade = |k: usize| -> Vec<Complex64> { users[k].h.iter().zip(g.iter()).map(|(h, g)| h * g).collect() };
        let noise = prob.noise_power;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::random(prob.channels.elements(), true, &mut rng);
        let mut solver = Self {
            cfg,
            q: [cascade(t), cascade(r)],
            need: [sinr_targets[t] * noise, sinr_targets[r] * noise],
            user_index: [t, r],
            power_cap: *power_cap,
            direct: [users[t].direct[0], users[r].direct[0]],
            params,
            a: [Complex64::new(0.0, 0.0); 2],
            trace: Vec::new(),
            sweeps: 0,
            updates: 0,
        };
        solver.a = solver.effective();
        Ok(solver)
    }

    fn effective(&self) -> [Complex64; 2] {
        let mut a = self.direct;
        for i in 0..self.params.m() {
            a[0] += self.params.coefficient(Side::Transmission, i) * self.q[0][i];
            a[1] += self.params.coefficient(Side::Reflection, i) * self.q[1][i];
        }
        a
    }

    fn power_of(&self, a: [Complex64; 2]) -> f64 {
        (self.need[0] / a[0].norm_sqr()).max(self.need[1] / a[1].norm_sqr())
    }

    /// Power currently needed to meet both targets, W.
    pub fn required_power(&self) -> f64 {
        self.power_of(self.a)
    }

    pub fn coefficients(&self) -> Vec<TrCoefficients> {
        self.params.to_coefficients()
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    fn update_element(&mut self, i: usize) {
        let ct = self.params.coefficient(Side::Transmission, i);
        let cr = self.params.coefficient(Side::Reflection, i);
        let base = [self.a[0] - ct * self.q[0][i], self.a[1] - cr * self.q[1][i]];
        let (qt, qr) = (self.q[0][i], self.q[1][i]);
        let eval = |theta: f64, phi: f64, bit: f64| -> f64 {
            let (s, c) = theta.sin_cos();
            let at = base[0] + Complex64::from_polar(s, phi) * qt;
            let ar = base[1] + Complex64::from_polar(c, phi + FRAC_PI_2 + bit * PI) * qr;
            self.power_of([at, ar])
        };

        let g = self.cfg.grid_points;
        let na = self.cfg.amplitude_points;
        let dphi = TAU / g as f64;
        let dtheta = FRAC_PI_2 / (na - 1) as f64;
        let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
        for bit in [0.0, 1.0] {
            let mut local = (f64::INFINITY, 0.0, 0.0);
            for p in 0..g {
                let phi = p as f64 * dphi;
                for j in 0..na {
                    let theta = j as f64 * dtheta;
                    let v = eval(theta, phi, bit);
                    if v < local.0 {
                        local = (v, theta, phi);
                    }
                }
            }
            let (_, mut theta, mut phi) = local;
            for _ in 0..self.cfg.refine_rounds {
                phi = golden_min(|x| eval(theta, x, bit), phi - dphi, phi + dphi, 1e-10);
                theta = golden_min(
                    |x| eval(x, phi, bit),
                    (theta - dtheta).max(0.0),
                    (theta + dtheta).min(FRAC_PI_2),
                    1e-10,
                );
            }
            let refined = eval(theta, phi, bit);
            let (v, theta, phi) = if refined <= local.0 {
                (refined, theta, phi)
            } else {
                local
            };
            if v < best.0 {
                best = (v, theta, phi, bit);
            }
        }

        let (value, theta, phi, bit) = best;
        // accept only strict improvements over the stored state
        if value < self.required_power() {
            self.params.theta[i] = theta;
            self.params.phi_t[i] = crate::element::canonical_phase(phi);
            self.params.phi_r[i] = crate::element::canonical_phase(phi + FRAC_PI_2 + bit * PI);
            let (s, c) = theta.sin_cos();
            self.a = [
                base[0] + Complex64::from_polar(s, phi) * qt,
                base[1] + Complex64::from_polar(c, phi + FRAC_PI_2 + bit * PI) * qr,
            ];
        }
        self.updates += 1;
        self.trace.push(TraceRow {
            outer: self.sweeps,
            inner: i,
            objective: self.required_power(),
            max_violation: self.params.violation(),
        });
    }

    /// One cyclic pass over all elements; returns the power afterwards.
    pub fn sweep(&mut self) -> f64 {
        for i in 0..self.params.m() {
            self.update_element(i);
        }
        self.sweeps += 1;
        self.required_power()
    }

    /// Sweeps until the relative improvement of a sweep drops below
    /// `inner_tol`.
    pub fn solve(mut self) -> Result<Solution> {
        let mut prev = self.required_power();
        for _ in 0..self.cfg.max_sweeps {
            let now = self.sweep();
            let done = prev.is_finite() && (prev - now) <= self.cfg.inner_tol * prev;
            prev = now;
            if done {
                break;
            }
        }
        let power = self.required_power();
        if !(power <= self.power_cap) {
            return Err(Error::InfeasibleTargets(format!(
                "required power {power:e} W exceeds cap of {:e} W",
                self.power_cap
            )));
        }
        Ok(self.into_solution())
    }

    /// Packs the current state. Precoder column `k` carries the power user
    /// `k` alone needs, co-phased with its channel; the objective is the
    /// larger of the two.
    pub fn into_solution(self) -> Solution {
        let power = self.required_power();
        let mut w = DMatrix::from_element(1, 2, Complex64::new(0.0, 0.0));
        for side in 0..2 {
            let a = self.a[side];
            let p = self.need[side] / a.norm_sqr();
            w[(0, self.user_index[side])] = Complex64::from_polar(p.sqrt(), -a.arg());
        }
        let coeffs = self.coefficients();
        Solution {
            beamforming: Beamforming::Shared(Slot { precoders: w, coeffs }),
            objective_value: power,
            trace: self.trace,
            iterations: self.updates,
        }
    }
}

/// Element-wise solver from a seeded coupled initialisation.
pub fn element_wise_optimize(prob: &BeamformingProblem, cfg: &ElementWiseConfig, seed: u64) -> Result<Solution> {
    ElementWiseSolver::new(prob, *cfg, seed)?.solve()
}

fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
