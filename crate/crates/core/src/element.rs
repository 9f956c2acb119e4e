//! Element-level model of a simultaneously transmitting and reflecting surface.
//!
//! Covers the load-impedance mapping to transmission/reflection (T&R)
//! coefficients, the per-element signal split, the dual-sided 2x2 T&R matrix
//! and its energy classification, the coupled phase-shift constraint, and the
//! three operating protocols.
//!
//! Phases are canonical in `[0, 2π)` and all phase comparisons go through the
//! unit circle, so `0` and `2π - 1e-15` are treated as neighbours.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Free-space wave impedance in ohms.
pub const ETA0: f64 = 376.730;

/// Tolerance for structural equalities (unitarity, energy sums, reciprocity).
pub const STRUCTURAL_TOL: f64 = 1e-9;

/// Default tolerance for phase-constraint satisfaction, radians.
pub const PHASE_TOL: f64 = 1e-6;

/// Amplitudes below this are treated as "mode off"; their phase is undefined.
pub const ZERO_AMPLITUDE: f64 = 1e-12;

const SINGULAR_TOL: f64 = 1e-12;

/// Maps any angle onto `[0, 2π)`.
pub fn canonical_phase(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Maps any angle onto `(-π, π]`.
pub fn wrap_to_pi(phi: f64) -> f64 {
    let p = canonical_phase(phi);
    if p > PI {
        p - TAU
    } else {
        p
    }
}

/// Shortest distance between two angles on the unit circle, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_to_pi(a - b).abs()
}

/// Distance of a transmit/reflect phase pair from the nearer admissible
/// coupled difference (π/2 or 3π/2).
pub fn coupled_violation(phi_t: f64, phi_r: f64) -> f64 {
    let diff = phi_r - phi_t;
    angular_distance(diff, FRAC_PI_2).min(angular_distance(diff, 3.0 * FRAC_PI_2))
}

/// Lumped electric admittance and magnetic impedance of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedancePair {
    /// Electric admittance, siemens.
    pub y: Complex64,
    /// Magnetic impedance, ohms.
    pub z: Complex64,
    /// Free-space impedance, ohms.
    pub eta0: f64,
}

impl ImpedancePair {
    pub fn new(y: Complex64, z: Complex64) -> Self {
        Self { y, z, eta0: ETA0 }
    }

    pub fn with_eta0(y: Complex64, z: Complex64, eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eta0",
                reason: format!("must be positive, got {eta0}"),
            });
        }
        Ok(Self { y, z, eta0 })
    }

    /// Purely imaginary admittance and impedance (no resistive part).
    pub fn is_lossless_realizable(&self) -> bool {
        self.y.re.abs() <= 1e-12 && self.z.re.abs() <= 1e-12
    }
}

/// Complex transmission and reflection coefficients of a loaded element.
pub fn coeffs_from_impedance(p: &ImpedancePair) -> Result<(Complex64, Complex64)> {
    let eta = p.eta0;
    let d1 = Complex64::new(2.0, 0.0) + p.y * eta;
    let d2 = Complex64::new(2.0 * eta, 0.0) + p.z;
    let worst = d1.norm().min(d2.norm());
    if worst < SINGULAR_TOL {
        return Err(Error::SingularImpedance(worst));
    }
    let r = -(p.y * (eta * eta) - p.z) * 2.0 / (d1 * d2);
    let t = (Complex64::new(2.0, 0.0) - p.y * eta) / d1 - r;
    Ok((t, r))
}

/// Checks that a lossless impedance pair produces coefficients obeying both
/// energy conservation and the coupled phase-difference rule.
pub fn coupled_consistency_check(p: &ImpedancePair) -> Result<bool> {
    if !p.is_lossless_realizable() {
        return Err(Error::NotRealizable);
    }
    let (t, r) = coeffs_from_impedance(p)?;
    let energy_ok = (t.norm_sqr() + r.norm_sqr() - 1.0).abs() <= STRUCTURAL_TOL;
    if t.norm() < ZERO_AMPLITUDE || r.norm() < ZERO_AMPLITUDE {
        return Ok(energy_ok);
    }
    Ok(energy_ok && coupled_violation(t.arg(), r.arg()) <= STRUCTURAL_TOL)
}

/// Per-element transmission/reflection power fractions and phase shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrCoefficients {
    beta_t: f64,
    beta_r: f64,
    phi_t: f64,
    phi_r: f64,
}

impl TrCoefficients {
    /// Builds coefficients, canonicalizing both phases.
    ///
    /// Panics if either power fraction is negative or not finite.
    pub fn new(beta_t: f64, beta_r: f64, phi_t: f64, phi_r: f64) -> Self {
        assert!(
            beta_t >= 0.0 && beta_r >= 0.0 && beta_t.is_finite() && beta_r.is_finite(),
            "power fractions must be finite and non-negative"
        );
        Self {
            beta_t,
            beta_r,
            phi_t: canonical_phase(phi_t),
            phi_r: canonical_phase(phi_r),
        }
    }

    /// Decomposes complex coefficients into power fractions and phases.
    pub fn from_complex(t: Complex64, r: Complex64) -> Self {
        Self::new(t.norm_sqr(), r.norm_sqr(), t.arg(), r.arg())
    }

    /// Lossless element with `beta_t = sin²θ`, `beta_r = cos²θ`.
    pub fn from_split_angle(theta: f64, phi_t: f64, phi_r: f64) -> Self {
        let (s, c) = split_sin_cos(theta);
        Self::new(s * s, c * c, phi_t, phi_r)
    }

    pub fn beta_t(&self) -> f64 {
        self.beta_t
    }
    pub fn beta_r(&self) -> f64 {
        self.beta_r
    }
    pub fn phi_t(&self) -> f64 {
        self.phi_t
    }
    pub fn phi_r(&self) -> f64 {
        self.phi_r
    }

    /// `√β^t e^{jφ^t}`
    pub fn transmission(&self) -> Complex64 {
        Complex64::from_polar(self.beta_t.sqrt(), self.phi_t)
    }

    /// `√β^r e^{jφ^r}`
    pub fn reflection(&self) -> Complex64 {
        Complex64::from_polar(self.beta_r.sqrt(), self.phi_r)
    }

    pub fn coefficient(&self, side: Side) -> Complex64 {
        match side {
            Side::Transmission => self.transmission(),
            Side::Reflection => self.reflection(),
        }
    }

    pub fn is_passive(&self) -> bool {
        self.beta_t <= 1.0 + STRUCTURAL_TOL && self.beta_r <= 1.0 + STRUCTURAL_TOL
    }

    pub fn is_lossless(&self) -> bool {
        self.is_passive() && (self.beta_t + self.beta_r - 1.0).abs() <= STRUCTURAL_TOL
    }

    /// Whether both modes carry power, so the phase pair is meaningful.
    pub fn both_modes_active(&self) -> bool {
        self.beta_t >= ZERO_AMPLITUDE && self.beta_r >= ZERO_AMPLITUDE
    }

    /// Coupled-model violation, or zero when one mode is switched off.
    pub fn phase_violation(&self) -> f64 {
        if self.both_modes_active() {
            coupled_violation(self.phi_t, self.phi_r)
        } else {
            0.0
        }
    }

    pub fn with_amplitudes(&self, beta_t: f64, beta_r: f64) -> Self {
        Self::new(beta_t, beta_r, self.phi_t, self.phi_r)
    }
}

/// Which half-space a signal leaves the surface into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Transmission,
    Reflection,
}

/// `(sin θ, cos θ)` with exact values at `θ = π/2`, so a pure transmission
/// split has exactly zero reflected power.
pub fn split_sin_cos(theta: f64) -> (f64, f64) {
    if theta == FRAC_PI_2 {
        (1.0, 0.0)
    } else {
        theta.sin_cos()
    }
}

/// Splits an incident signal into its transmitted and reflected parts.
pub fn split_signal(c: &TrCoefficients, s: Complex64) -> (Complex64, Complex64) {
    (c.transmission() * s, c.reflection() * s)
}

/// Auxiliary bit selecting which admissible difference a pair is nearest:
/// 0 for π/2, 1 for 3π/2. Ties go to 0.
pub fn auxiliary_bit(c: &TrCoefficients) -> u8 {
    let diff = c.phi_r - c.phi_t;
    if angular_distance(diff, 3.0 * FRAC_PI_2) < angular_distance(diff, FRAC_PI_2) {
        1
    } else {
        0
    }
}

/// Projects a phase pair onto the coupled set, moving `φ^t` and `φ^r` by
/// equal and opposite halves of the correction. Amplitudes are untouched.
pub fn project_coupled(c: &TrCoefficients) -> TrCoefficients {
    let diff = c.phi_r - c.phi_t;
    let target = FRAC_PI_2 + PI * f64::from(auxiliary_bit(c));
    let correction = wrap_to_pi(target - diff);
    if correction.abs() <= 1e-12 {
        return *c;
    }
    TrCoefficients::new(
        c.beta_t,
        c.beta_r,
        c.phi_t - 0.5 * correction,
        c.phi_r + 0.5 * correction,
    )
}

/// Energy class of a dual-sided element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementClass {
    PassiveLossless,
    PassiveLossy,
    Active,
    Indefinite,
}

/// 2x2 T&R matrix mapping signals incident on faces A and B to the outgoing
/// signals on both faces: `[[R^A, T^AB], [T^BA, R^B]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrMatrix {
    pub xi: [[Complex64; 2]; 2],
}

impl TrMatrix {
    pub fn new(r_a: Complex64, t_ab: Complex64, t_ba: Complex64, r_b: Complex64) -> Self {
        Self {
            xi: [[r_a, t_ab], [t_ba, r_b]],
        }
    }

    /// Symmetric element responding identically from both faces.
    pub fn symmetric(t: Complex64, r: Complex64) -> Self {
        Self::new(r, t, t, r)
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self::new(one, zero, zero, one)
    }

    pub fn scaled(&self, k: Complex64) -> Self {
        let x = self.xi;
        Self::new(x[0][0] * k, x[0][1] * k, x[1][0] * k, x[1][1] * k)
    }

    pub fn transpose(&self) -> Self {
        let x = self.xi;
        Self::new(x[0][0], x[1][0], x[0][1], x[1][1])
    }

    pub fn is_reciprocal(&self) -> bool {
        (self.xi[0][1] - self.xi[1][0]).norm() <= STRUCTURAL_TOL
    }

    /// `Ξ^H Ξ` as `(a, b, d)` for the Hermitian matrix `[[a, b], [b*, d]]`.
    pub fn gram(&self) -> (f64, Complex64, f64) {
        let x = self.xi;
        let a = x[0][0].norm_sqr() + x[1][0].norm_sqr();
        let d = x[0][1].norm_sqr() + x[1][1].norm_sqr();
        let b = x[0][0].conj() * x[0][1] + x[1][0].conj() * x[1][1];
        (a, b, d)
    }

    pub fn classify(&self) -> ElementClass {
        self.classify_with_tol(STRUCTURAL_TOL)
    }

    /// Classifies `Ξ^H Ξ - I` by Sylvester's criterion on shifted 2x2
    /// Hermitian matrices: `[[p, b], [b*, q]]` is definite iff `p` has the
    /// sign and the determinant is positive.
    pub fn classify_with_tol(&self, tol: f64) -> ElementClass {
        let (a, b, d) = self.gram();
        let (p, q) = (a - 1.0, d - 1.0);
        let b2 = b.norm_sqr();
        // PSD test for [[u, b], [b*, v]]
        let psd = |u: f64, v: f64| u >= 0.0 && v >= 0.0 && u * v - b2 >= 0.0;
        // positive-definite test
        let pd = |u: f64, v: f64| u > 0.0 && u * v - b2 > 0.0;

        if psd(tol - p, tol - q) && psd(tol + p, tol + q) {
            ElementClass::PassiveLossless
        } else if pd(-p - tol, -q - tol) {
            ElementClass::PassiveLossy
        } else if pd(p - tol, q - tol) {
            ElementClass::Active
        } else {
            ElementClass::Indefinite
        }
    }
}

/// `y = Ξ s` for signals `(s_a, s_b)` incident on the two faces.
pub fn apply_dual_sided(x: &TrMatrix, s_a: Complex64, s_b: Complex64) -> (Complex64, Complex64) {
    let m = x.xi;
    (m[0][0] * s_a + m[0][1] * s_b, m[1][0] * s_a + m[1][1] * s_b)
}

/// Whether transmit and reflect phases may be chosen freely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseShiftModel {
    Independent,
    Coupled,
}

impl PhaseShiftModel {
    /// Whether every element with both modes active satisfies the model.
    pub fn admits(&self, coeffs: &[TrCoefficients], tol: f64) -> bool {
        match self {
            PhaseShiftModel::Independent => true,
            PhaseShiftModel::Coupled => coeffs.iter().all(|c| c.phase_violation() <= tol),
        }
    }
}

/// Time fractions of the transmission-only and reflection-only slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsFractions {
    pub transmission: f64,
    pub reflection: f64,
}

impl TsFractions {
    pub fn new(transmission: f64, reflection: f64) -> Result<Self> {
        if transmission < 0.0 || reflection < 0.0 || transmission + reflection > 1.0 + STRUCTURAL_TOL {
            return Err(Error::InvalidParameter {
                name: "ts_fractions",
                reason: format!("need non-negative fractions summing to at most 1, got ({transmission}, {reflection})"),
            });
        }
        Ok(Self {
            transmission,
            reflection,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OperatingProtocol {
    EnergySplitting,
    ModeSwitching,
    TimeSwitching { fractions: Option<TsFractions> },
}

/// Coefficients under a protocol: one shared vector, or one vector per
/// time slot for time switching.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolCoefficients {
    Shared(Vec<TrCoefficients>),
    TimeSwitched {
        transmission: Vec<TrCoefficients>,
        reflection: Vec<TrCoefficients>,
        fractions: TsFractions,
    },
}

/// Element layout and configuration of a surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceConfig {
    positions: Vec<[f64; 3]>,
    pub model: PhaseShiftModel,
    pub protocol: OperatingProtocol,
    largest_dimension: f64,
}

impl SurfaceConfig {
    pub fn new(positions: Vec<[f64; 3]>, model: PhaseShiftModel, protocol: OperatingProtocol) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter {
                name: "elements",
                reason: "surface needs at least one element".into(),
            });
        }
        let mut largest = 0.0f64;
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[i + 1..] {
                largest = largest.max(distance(a, b));
            }
        }
        Ok(Self {
            positions,
            model,
            protocol,
            largest_dimension: largest,
        })
    }

    /// `rows x cols` grid in the y-z plane centred on the origin; the surface
    /// normal is +x.
    pub fn planar(
        rows: usize,
        cols: usize,
        spacing: f64,
        model: PhaseShiftModel,
        protocol: OperatingProtocol,
    ) -> Result<Self> {
        let mut positions = Vec::with_capacity(rows * cols);
        let y0 = 0.5 * (cols as f64 - 1.0) * spacing;
        let z0 = 0.5 * (rows as f64 - 1.0) * spacing;
        for r in 0..rows {
            for c in 0..cols {
                positions.push([0.0, c as f64 * spacing - y0, r as f64 * spacing - z0]);
            }
        }
        Self::new(positions, model, protocol)
    }

    pub fn m(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn largest_dimension(&self) -> f64 {
        self.largest_dimension
    }

    pub fn center(&self) -> [f64; 3] {
        let n = self.positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for k in 0..3 {
                c[k] += p[k] / n;
            }
        }
        c
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Applies the surface's operating protocol to a coefficient vector.
///
/// Mode switching rounds each element to the mode with the larger power
/// fraction (ties go to reflection); time switching returns the two
/// single-mode vectors with the configured slot fractions.
pub fn enforce_protocol(cfg: &SurfaceConfig, coeffs: &[TrCoefficients]) -> Result<ProtocolCoefficients> {
    if coeffs.len() != cfg.m() {
        return Err(Error::LengthMismatch {
            expected: cfg.m(),
            got: coeffs.len(),
        });
    }
    match cfg.protocol {
        OperatingProtocol::EnergySplitting => {
            if let Some((index, c)) = coeffs.iter().enumerate().find(|(_, c)| !c.is_passive()) {
                return Err(Error::InvalidAmplitude {
                    index,
                    beta_t: c.beta_t(),
                    beta_r: c.beta_r(),
                });
            }
            Ok(ProtocolCoefficients::Shared(coeffs.to_vec()))
        }
        OperatingProtocol::ModeSwitching => {
            Ok(ProtocolCoefficients::Shared(coeffs.iter().map(round_to_mode).collect()))
        }
        OperatingProtocol::TimeSwitching { fractions } => {
            let fractions =
                fractions.ok_or_else(|| Error::ProtocolMismatch("time switching requires slot fractions".into()))?;
            Ok(ProtocolCoefficients::TimeSwitched {
                transmission: coeffs.iter().map(|c| c.with_amplitudes(1.0, 0.0)).collect(),
                reflection: coeffs.iter().map(|c| c.with_amplitudes(0.0, 1.0)).collect(),
                fractions,
            })
        }
    }
}

/// Nearest binary mode; ties break to reflection-only.
pub fn round_to_mode(c: &TrCoefficients) -> TrCoefficients {
    if c.beta_t() > c.beta_r() {
        c.with_amplitudes(1.0, 0.0)
    } else {
        c.with_amplitudes(0.0, 1.0)
    }
}
