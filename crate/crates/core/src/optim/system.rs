//! Cascaded system model shared by the solvers: effective channels,
//! sum-rate, the coupled-phase penalty and their analytic gradients.
//!
//! Gradients are taken over the flat parameter vector
//! `[θ_1..θ_M, φ^t_1..φ^t_M, φ^r_1..φ^r_M]`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelRealization;
use crate::element::{canonical_phase, split_sin_cos, Side, TrCoefficients, ZERO_AMPLITUDE};

use super::precoder::{min_power_precoders, PowerSolution};
use crate::error::Result;

/// Split angles and phases of every element.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params {
    pub theta: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub phi_r: Vec<f64>,
}

impl Params {
    pub fn m(&self) -> usize {
        self.theta.len()
    }

    /// Even split with uniform phases; coupled draws pick a random auxiliary
    /// bit per element.
    pub fn random<R: Rng>(m: usize, coupled: bool, rng: &mut R) -> Self {
        let mut phi_t = Vec::with_capacity(m);
        let mut phi_r = Vec::with_capacity(m);
        for _ in 0..m {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let r = if coupled {
                let bit = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                t + FRAC_PI_2 + bit * std::f64::consts::PI
            } else {
                rng.random_range(0.0..std::f64::consts::TAU)
            };
            phi_t.push(t);
            phi_r.push(canonical_phase(r));
        }
        Self {
            theta: vec![FRAC_PI_4; m],
            phi_t,
            phi_r,
        }
    }

    pub fn from_coefficients(coeffs: &[TrCoefficients]) -> Self {
        Self {
            theta: coeffs
                .iter()
                .map(|c| c.beta_t().sqrt().atan2(c.beta_r().sqrt()))
                .collect(),
            phi_t: coeffs.iter().map(|c| c.phi_t()).collect(),
            phi_r: coeffs.iter().map(|c| c.phi_r()).collect(),
        }
    }

    pub fn to_coefficients(&self) -> Vec<TrCoefficients> {
        (0..self.m())
            .map(|i| TrCoefficients::from_split_angle(self.theta[i], self.phi_t[i], self.phi_r[i]))
            .collect()
    }

    pub fn coefficient(&self, side: Side, i: usize) -> Complex64 {
        match side {
            Side::Transmission => Complex64::from_polar(split_sin_cos(self.theta[i]).0, self.phi_t[i]),
            Side::Reflection => Complex64::from_polar(split_sin_cos(self.theta[i]).1, self.phi_r[i]),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.m());
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.phi_t);
        v.extend_from_slice(&self.phi_r);
        v
    }

    pub fn from_flat(x: &[f64]) -> Self {
        let m = x.len() / 3;
        Self {
            theta: x[..m].to_vec(),
            phi_t: x[m..2 * m].to_vec(),
            phi_r: x[2 * m..].to_vec(),
        }
    }

    /// Folds `θ` into `[0, π/2]`, moving a negative `sin θ` or `cos θ` into
    /// the phase of that side, and wraps phases. The complex coefficients are
    /// unchanged and a coupled pair stays coupled (only `ν` flips).
    pub fn canonicalize(&mut self) {
        for i in 0..self.m() {
            let (s, c) = self.theta[i].sin_cos();
            if s < 0.0 {
                self.phi_t[i] += std::f64::consts::PI;
            }
            if c < 0.0 {
                self.phi_r[i] += std::f64::consts::PI;
            }
            self.theta[i] = s.abs().atan2(c.abs());
        }
        for p in self.phi_t.iter_mut().chain(self.phi_r.iter_mut()) {
            *p = canonical_phase(*p);
        }
    }

    /// Largest phase-difference violation over elements with both modes on.
    pub fn violation(&self) -> f64 {
        (0..self.m())
            .map(|i| {
                let (s, c) = self.theta[i].sin_cos();
                if s * s < ZERO_AMPLITUDE || c * c < ZERO_AMPLITUDE {
                    0.0
                } else {
                    crate::element::coupled_violation(self.phi_t[i], self.phi_r[i])
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `Σ_m min_τ |e^{jΔ_m} − e^{jτ}|²` over τ ∈ {π/2, 3π/2}, which equals
/// `Σ_m 2 − 2|sin Δ_m|`, and its gradient.
pub(crate) fn coupled_penalty(p: &Params, grad: Option<&mut [f64]>) -> f64 {
    let m = p.m();
    let mut total = 0.0;
    let mut g = grad;
    for i in 0..m {
        let d = p.phi_r[i] - p.phi_t[i];
        let (s, c) = d.sin_cos();
        total += 2.0 - 2.0 * s.abs();
        if let Some(g) = g.as_deref_mut() {
            let dd = -2.0 * s.signum() * c;
            g[m + i] -= dd;
            g[2 * m + i] += dd;
        }
    }
    total
}

/// One user's link: side, direct channel and per-element cascade rows
/// `h_m · G[m, :]`.
#[derive(Debug, Clone)]
pub(crate) struct Link {
    pub side: Side,
    pub direct: DVector<Complex64>,
    pub cascade: DMatrix<Complex64>,
}

#[derive(Debug, Clone)]
pub(crate) struct System {
    pub links: Vec<Link>,
    pub noise: f64,
}

impl System {
    pub fn new(real: &ChannelRealization, noise: f64) -> Self {
        let links = real
            .users
            .iter()
            .map(|u| {
                let mut cascade = real.g.clone();
                for (i, mut row) in cascade.row_iter_mut().enumerate() {
                    row *= u.h[i];
                }
                Link {
                    side: u.side,
                    direct: u.direct.clone(),
                    cascade,
                }
            })
            .collect();
        Self { links, noise }
    }

    pub fn m(&self) -> usize {
        self.links[0].cascade.nrows()
    }

    pub fn n(&self) -> usize {
        self.links[0].cascade.ncols()
    }

    pub fn k(&self) -> usize {
        self.links.len()
    }

    /// Effective channels `a_k` with `y_k = a_k^T x + n_k`.
    pub fn effective(&self, p: &Params) -> Vec<DVector<Complex64>> {
        self.links
            .iter()
            .map(|l| {
                let mut a = l.direct.clone();
                for i in 0..self.m() {
                    let c = p.coefficient(l.side, i);
                    if c == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    a.axpy(c, &l.cascade.row(i).transpose(), Complex64::new(1.0, 0.0));
                }
                a
            })
            .collect()
    }

    pub fn se(&self, p: &Params, w: &DMatrix<Complex64>) -> f64 {
        super::objective::sum_spectral_efficiency(&self.effective(p), w, self.noise)
    }

    /// Sum rate and its gradient with respect to the flat parameters.
    pub fn se_with_grad(&self, p: &Params, w: &DMatrix<Complex64>) -> (f64, Vec<f64>) {
        let m = self.m();
        let kk = self.k();
        let mut gt = vec![Complex64::new(0.0, 0.0); m];
        let mut gr = vec![Complex64::new(0.0, 0.0); m];
        let mut se = 0.0;
        let a = self.effective(p);
        for (k, link) in self.links.iter().enumerate() {
            // z_ki = a_k^T w_i, q_kim = cascade_k[m, :] w_i
            let z = w.transpose() * &a[k];
            let q = &link.cascade * w;
            let total: f64 = z.iter().map(|v| v.norm_sqr()).sum::<f64>() + self.noise;
            let interference = total - z[k].norm_sqr();
            se += (total / interference).log2();
            let g = match link.side {
                Side::Transmission => &mut gt,
                Side::Reflection => &mut gr,
            };
            for i in 0..kk {
                let coef = if i == k {
                    1.0 / total
                } else {
                    1.0 / total - 1.0 / interference
                };
                if coef == 0.0 {
                    continue;
                }
                let zc = z[i] * (coef / LN_2);
                for (mi, gm) in g.iter_mut().enumerate() {
                    *gm += zc * q[(mi, i)].conj();
                }
            }
        }
        (se, self.chain_rule(p, &gt, &gr))
    }

    /// Maps Wirtinger gradients `∂f/∂c*` of each side onto the flat
    /// parameters through `df/dx = 2 Re(conj(∂f/∂c*) · dc/dx)`.
    pub fn chain_rule(&self, p: &Params, gt: &[Complex64], gr: &[Complex64]) -> Vec<f64> {
        let m = p.m();
        let mut out = vec![0.0; 3 * m];
        let j = Complex64::new(0.0, 1.0);
        for i in 0..m {
            let (s, c) = p.theta[i].sin_cos();
            let et = Complex64::from_polar(1.0, p.phi_t[i]);
            let er = Complex64::from_polar(1.0, p.phi_r[i]);
            out[i] = 2.0 * (gt[i].conj() * et * c).re + 2.0 * (gr[i].conj() * er * (-s)).re;
            out[m + i] = 2.0 * (gt[i].conj() * j * et * s).re;
            out[2 * m + i] = 2.0 * (gr[i].conj() * j * er * c).re;
        }
        out
    }

    /// Minimum power meeting `targets` and its gradient, via the Lagrange
    /// multipliers of the downlink problem (uplink dual powers).
    pub fn power_with_grad(&self, p: &Params, targets: &[f64], cap: f64) -> Result<(PowerSolution, Vec<f64>)> {
        let a = self.effective(p);
        let sol = min_power_precoders(&a, targets, self.noise, cap)?;
        let m = self.m();
        let kk = self.k();
        let w = &sol.precoders;
        let mut gt = vec![Complex64::new(0.0, 0.0); m];
        let mut gr = vec![Complex64::new(0.0, 0.0); m];
        for (k, link) in self.links.iter().enumerate() {
            let z = w.transpose() * &a[k];
            let q = &link.cascade * w;
            let g = match link.side {
                Side::Transmission => &mut gt,
                Side::Reflection => &mut gr,
            };
            let mu = sol.multipliers[k];
            for i in 0..kk {
                let coef = if i == k { -mu / targets[k] } else { mu };
                let zc = z[i] * coef;
                for (mi, gm) in g.iter_mut().enumerate() {
                    *gm += zc * q[(mi, i)].conj();
                }
            }
        }
        let grad = self.chain_rule(p, &gt, &gr);
        Ok((sol, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::UserChannel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_system(m: usize, n: usize, sides: &[Side], direct: bool, seed: u64) -> System {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cn = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(m, n, |_, _| cn());
        let users = sides
            .iter()
            .map(|s| UserChannel {
                side: *s,
                h: DVector::from_fn(m, |_, _| cn()),
                direct: if direct {
                    DVector::from_fn(n, |_, _| cn() * 0.3)
                } else {
                    DVector::zeros(n)
                },
            })
            .collect();
        System::new(&ChannelRealization { g, users }, 0.5)
    }

    fn fd_grad(f: impl Fn(&Params) -> f64, p: &Params) -> Vec<f64> {
        let x = p.flat();
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                (f(&Params::from_flat(&xp)) - f(&Params::from_flat(&xm))) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn se_gradient_matches_finite_differences() {
        let sys = random_system(5, 3, &[Side::Transmission, Side::Reflection, Side::Reflection], true, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = Params::random(5, false, &mut rng);
        p.theta = (0..5).map(|_| rng.random_range(0.1..1.4)).collect();
        let w = DMatrix::from_fn(3, 3, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let (_, g) = sys.se_with_grad(&p, &w);
        let fd = fd_grad(|q| sys.se(q, &w), &p);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Params::random(6, false, &mut rng);
        let mut g = vec![0.0; 18];
        coupled_penalty(&p, Some(&mut g));
        let fd = fd_grad(|q| coupled_penalty(q, None), &p);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn penalty_vanishes_exactly_on_coupled_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Params::random(8, true, &mut rng);
        assert!(coupled_penalty(&p, None) < 1e-12);
        assert!(p.violation() < 1e-12);
    }

    #[test]
    fn power_gradient_matches_finite_differences() {
        let sys = random_system(4, 3, &[Side::Transmission, Side::Reflection], true, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut p = Params::random(4, false, &mut rng);
        p.theta = (0..4).map(|_| rng.random_range(0.2..1.3)).collect();
        let targets = [2.0, 3.0];
        let (_, g) = sys.power_with_grad(&p, &targets, 1e9).unwrap();
        let fd = fd_grad(|q| sys.power_with_grad(q, &targets, 1e9).unwrap().0.power, &p);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn params_round_trip_through_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = Params::random(4, false, &mut rng);
        p.theta = vec![0.0, 0.3, 1.0, FRAC_PI_2];
        let back = Params::from_coefficients(&p.to_coefficients());
        for i in 0..4 {
            assert!((back.theta[i] - p.theta[i]).abs() < 1e-12);
        }
    }
}
