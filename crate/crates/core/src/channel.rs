//! Geometry-aware channel generation.
//!
//! The surface lies in a plane with normal +x (see
//! [`SurfaceConfig::planar`]). The base station sits on the reflection side;
//! users on the opposite half-space are served by transmission.
//!
//! Each hop (BS antenna → element, element → user, BS antenna → user) is a
//! Rician draw whose line-of-sight phase is `e^{-j2πd/λ}`. The far-field
//! model uses the centre-to-centre distance for path loss and the plane-wave
//! expansion of `d` for the phase; the near-field model uses the exact
//! per-element distance for both.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::element::{distance, Side, SurfaceConfig, TrCoefficients};
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Near/far boundary `2L²/λ` of an aperture of largest dimension `l`.
pub fn rayleigh_distance(l: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidWavelength(lambda));
    }
    if l < 0.0 {
        return Err(Error::InvalidParameter {
            name: "largest_dimension",
            reason: format!("must be non-negative, got {l}"),
        });
    }
    Ok(2.0 * l * l / lambda)
}

pub fn wavelength(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz
}

/// Large- and small-scale fading parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParams {
    /// Linear LOS-to-scatter power ratio; `f64::INFINITY` is pure LOS.
    pub rician_k: f64,
    pub pathloss_exponent_bs: f64,
    pub pathloss_exponent_user: f64,
    pub pathloss_exponent_direct: f64,
    /// Linear power gain at 1 m.
    pub reference_gain: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            rician_k: 3.0,
            pathloss_exponent_bs: 2.0,
            pathloss_exponent_user: 2.0,
            pathloss_exponent_direct: 3.5,
            reference_gain: 1e-3,
            wavelength: wavelength(3.5e9),
        }
    }
}

/// Uniform linear BS array along z, centred on `position`.
#[derive(Debug, Clone, PartialEq)]
pub struct BsArray {
    pub position: [f64; 3],
    pub antennas: usize,
    pub spacing: f64,
}

impl BsArray {
    pub fn antenna_positions(&self) -> Vec<[f64; 3]> {
        let offset = 0.5 * (self.antennas as f64 - 1.0);
        (0..self.antennas)
            .map(|n| {
                let mut p = self.position;
                p[2] += (n as f64 - offset) * self.spacing;
                p
            })
            .collect()
    }
}

/// Position of one user and the half-space it occupies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub user_position: [f64; 3],
    pub side: Side,
}

impl LinkGeometry {
    /// Infers the side from which half-space the user shares with the BS.
    pub fn locate(surface: &SurfaceConfig, bs: &BsArray, user_position: [f64; 3]) -> Result<Self> {
        let plane = surface.center()[0];
        let bs_sign = (bs.position[0] - plane).signum();
        let offset = user_position[0] - plane;
        if offset == 0.0 || bs.position[0] == plane {
            return Err(Error::InvalidParameter {
                name: "user_position",
                reason: "BS and users must lie off the surface plane".into(),
            });
        }
        let side = if offset.signum() == bs_sign {
            Side::Reflection
        } else {
            Side::Transmission
        };
        Ok(Self { user_position, side })
    }

    /// Like [`LinkGeometry::locate`] but checks a declared side.
    pub fn with_side(surface: &SurfaceConfig, bs: &BsArray, user_position: [f64; 3], side: Side) -> Result<Self> {
        let g = Self::locate(surface, bs, user_position)?;
        if g.side != side {
            return Err(Error::InvalidParameter {
                name: "side",
                reason: format!(
                    "user at {user_position:?} is on the {:?} side, declared {side:?}",
                    g.side
                ),
            });
        }
        Ok(g)
    }
}

/// Surface, BS and users of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub surface: SurfaceConfig,
    pub bs: BsArray,
    pub users: Vec<LinkGeometry>,
    /// Whether the BS→user direct path is unblocked.
    pub direct_link: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldModel {
    FarField,
    NearField,
}

/// Channels seen by one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub side: Side,
    /// Element → user, length M.
    pub h: DVector<Complex64>,
    /// BS antennas → user, length N; zero when blocked.
    pub direct: DVector<Complex64>,
}

/// One channel draw for a deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS → surface, M x N.
    pub g: DMatrix<Complex64>,
    pub users: Vec<UserChannel>,
}

impl ChannelRealization {
    pub fn elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.g.ncols()
    }
}

pub fn far_field_links(dep: &Deployment, fading: &FadingParams, seed: u64) -> ChannelRealization {
    let far = rayleigh_distance(dep.surface.largest_dimension(), fading.wavelength).unwrap_or(0.0);
    let c = dep.surface.center();
    let short = dep
        .users
        .iter()
        .map(|u| distance(&u.user_position, &c))
        .chain(std::iter::once(distance(&dep.bs.position, &c)))
        .any(|d| d <= far);
    if short {
        warn!("far-field model used inside the Rayleigh distance ({far:.3} m)");
    }
    generate(dep, fading, FieldModel::FarField, seed)
}

pub fn near_field_links(dep: &Deployment, fading: &FadingParams, seed: u64) -> ChannelRealization {
    generate(dep, fading, FieldModel::NearField, seed)
}

/// Draws `G`, then each user's `h` in order, then each user's direct link
/// when enabled. The draw order is identical for both field models.
pub fn generate(dep: &Deployment, fading: &FadingParams, model: FieldModel, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elements = dep.surface.positions();
    let surface_c = dep.surface.center();
    let antennas = dep.bs.antenna_positions();
    let m = elements.len();
    let n = antennas.len();

    let bs_hop = Hop::new(
        &antennas,
        dep.bs.position,
        elements,
        surface_c,
        fading.pathloss_exponent_bs,
        model,
    );
    let mut g = DMatrix::zeros(m, n);
    for i in 0..m {
        for a in 0..n {
            g[(i, a)] = bs_hop.draw(a, i, fading, &mut rng);
        }
    }

    let mut users = Vec::with_capacity(dep.users.len());
    for u in &dep.users {
        let point = [u.user_position];
        let hop = Hop::new(
            elements,
            surface_c,
            &point,
            u.user_position,
            fading.pathloss_exponent_user,
            model,
        );
        let h = DVector::from_iterator(m, (0..m).map(|i| hop.draw(i, 0, fading, &mut rng)));
        users.push(UserChannel {
            side: u.side,
            h,
            direct: DVector::zeros(n),
        });
    }
    if dep.direct_link {
        for (u, ch) in dep.users.iter().zip(users.iter_mut()) {
            let point = [u.user_position];
            let hop = Hop::new(
                &antennas,
                dep.bs.position,
                &point,
                u.user_position,
                fading.pathloss_exponent_direct,
                model,
            );
            ch.direct = DVector::from_iterator(n, (0..n).map(|a| hop.draw(a, 0, fading, &mut rng)));
        }
    }
    ChannelRealization { g, users }
}

/// Line-of-sight geometry between two point sets.
struct Hop<'a> {
    tx: &'a [[f64; 3]],
    tx_center: [f64; 3],
    rx: &'a [[f64; 3]],
    rx_center: [f64; 3],
    exponent: f64,
    model: FieldModel,
    center_distance: f64,
    direction: [f64; 3],
}

impl<'a> Hop<'a> {
    fn new(
        tx: &'a [[f64; 3]],
        tx_center: [f64; 3],
        rx: &'a [[f64; 3]],
        rx_center: [f64; 3],
        exponent: f64,
        model: FieldModel,
    ) -> Self {
        let d = distance(&tx_center, &rx_center);
        let direction = [
            (rx_center[0] - tx_center[0]) / d,
            (rx_center[1] - tx_center[1]) / d,
            (rx_center[2] - tx_center[2]) / d,
        ];
        Self {
            tx,
            tx_center,
            rx,
            rx_center,
            exponent,
            model,
            center_distance: d,
            direction,
        }
    }

    /// Path length used for the phase, and distance used for the amplitude.
    fn lengths(&self, t: usize, r: usize) -> (f64, f64) {
        match self.model {
            FieldModel::NearField => {
                let d = distance(&self.tx[t], &self.rx[r]);
                (d, d)
            }
            FieldModel::FarField => {
                let u = self.direction;
                let along =
                    |p: &[f64; 3], c: &[f64; 3]| u[0] * (p[0] - c[0]) + u[1] * (p[1] - c[1]) + u[2] * (p[2] - c[2]);
                let phase_len =
                    self.center_distance + along(&self.rx[r], &self.rx_center) - along(&self.tx[t], &self.tx_center);
                (phase_len, self.center_distance)
            }
        }
    }

    fn draw(&self, t: usize, r: usize, fading: &FadingParams, rng: &mut ChaCha8Rng) -> Complex64 {
        let (phase_len, amp_len) = self.lengths(t, r);
        let amplitude = (fading.reference_gain * amp_len.powf(-self.exponent)).sqrt();
        let los = Complex64::from_polar(1.0, -TAU * phase_len / fading.wavelength);
        amplitude * rician(los, fading.rician_k, rng)
    }
}

/// Unit-power Rician sample around a unit-modulus LOS term.
fn rician(los: Complex64, k: f64, rng: &mut ChaCha8Rng) -> Complex64 {
    if k.is_infinite() {
        return los;
    }
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let scatter = Complex64::new(re, im) * FRAC_1_SQRT_2;
    los * (k / (k + 1.0)).sqrt() + scatter * (1.0 / (k + 1.0)).sqrt()
}

/// Per-antenna effective channel of user `user`:
/// `d + Σ_m h_m · c_m^{side} · G[m, :]`.
pub fn effective_channel(
    real: &ChannelRealization,
    coeffs: &[TrCoefficients],
    user: usize,
) -> Result<DVector<Complex64>> {
    let m = real.elements();
    if coeffs.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: coeffs.len(),
        });
    }
    let uc = real.users.get(user).ok_or(Error::LengthMismatch {
        expected: real.users.len(),
        got: user + 1,
    })?;
    let mut out = uc.direct.clone();
    for (i, c) in coeffs.iter().enumerate() {
        let w = uc.h[i] * c.coefficient(uc.side);
        for a in 0..real.antennas() {
            out[a] += w * real.g[(i, a)];
        }
    }
    Ok(out)
}
