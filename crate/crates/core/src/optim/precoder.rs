//! Transmit beamforming blocks for fixed effective channels.
//!
//! Channels are passed as the vectors `a_k` with `y_k = a_k^T x + n_k`, so
//! the conventional `h_k` (with `y_k = h_k^H x`) is `conj(a_k)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// What the precoder block optimises.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecoderTarget {
    /// One weighted-MMSE round under a total power budget (W).
    SumRate { power_budget: f64 },
    /// Minimum total power meeting linear SINR targets.
    MinPower { sinr_targets: Vec<f64>, power_cap: f64 },
}

/// Result of the downlink power minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub precoders: DMatrix<Complex64>,
    /// Total power, W.
    pub power: f64,
    /// Lagrange multipliers of the SINR constraints (dual uplink powers).
    pub multipliers: Vec<f64>,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Maximum-ratio transmission: `w_k ∝ conj(a_k)`, equal power per user,
/// total power `budget`.
pub fn mrt_precoders(channels: &[DVector<Complex64>], n: usize, budget: f64) -> DMatrix<Complex64> {
    let k = channels.len();
    let mut w = DMatrix::from_element(n, k, zero());
    let per_user = budget / k as f64;
    for (i, a) in channels.iter().enumerate() {
        let norm = a.norm();
        if norm > 0.0 {
            let col = a.map(|v| v.conj()) * Complex64::new(per_user.sqrt() / norm, 0.0);
            w.set_column(i, &col);
        }
    }
    w
}

/// One round of weighted-MMSE block updates (receive scalars, MSE weights,
/// precoders) with the multiplier on the power constraint found by
/// bisection, so that `‖W‖² ≤ budget`. The sum rate is non-decreasing over
/// rounds.
pub fn wmmse_round(
    channels: &[DVector<Complex64>],
    w: &DMatrix<Complex64>,
    noise: f64,
    budget: f64,
) -> DMatrix<Complex64> {
    let n = w.nrows();
    let k = channels.len();
    if budget <= 0.0 {
        return DMatrix::from_element(n, k, zero());
    }
    let mut b = DMatrix::from_element(n, n, zero());
    let mut rhs = DMatrix::from_element(n, k, zero());
    for (i, a) in channels.iter().enumerate() {
        let z = w.transpose() * a;
        let total: f64 = z.iter().map(|v| v.norm_sqr()).sum::<f64>() + noise;
        let u = z[i] / total;
        let mse = 1.0 - z[i].norm_sqr() / total;
        let weight = 1.0 / mse.max(1e-300);
        let h = a.map(|v| v.conj());
        b += &h * h.adjoint() * Complex64::new(weight * u.norm_sqr(), 0.0);
        rhs.set_column(i, &(&h * (u * weight)));
    }
    let eig = SymmetricEigen::new(b);
    let y = eig.eigenvectors.adjoint() * &rhs;
    let lambda = eig.eigenvalues;
    let scale = lambda.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let floor = 1e-13 * scale.max(f64::MIN_POSITIVE);
    // energy of each eigen-direction's projection
    let energy: Vec<f64> = (0..n).map(|r| (0..k).map(|c| y[(r, c)].norm_sqr()).sum()).collect();
    let power = |mu: f64| -> f64 {
        (0..n)
            .map(|r| {
                let d = lambda[r] + mu;
                if d <= floor {
                    0.0
                } else {
                    energy[r] / (d * d)
                }
            })
            .sum()
    };
    let mu = if power(0.0) <= budget {
        0.0
    } else {
        let total: f64 = energy.iter().sum();
        let mut lo = 0.0;
        let mut hi = (total / budget).sqrt().max(floor);
        while power(hi) > budget {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if power(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    };
    let mut scaled = y;
    for r in 0..n {
        let d = lambda[r] + mu;
        let f = if d <= floor { 0.0 } else { 1.0 / d };
        for c in 0..k {
            scaled[(r, c)] *= f;
        }
    }
    eig.eigenvectors * scaled
}

/// Minimum-power downlink beamformers meeting `sinr_targets`, by the
/// uplink-downlink duality fixed point on the dual powers followed by a
/// linear solve for the downlink powers along the MMSE directions.
pub fn min_power_precoders(
    channels: &[DVector<Complex64>],
    sinr_targets: &[f64],
    noise: f64,
    power_cap: f64,
) -> Result<PowerSolution> {
    let k = channels.len();
    let n = channels.first().map(|a| a.len()).unwrap_or(0);
    if sinr_targets.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: sinr_targets.len(),
        });
    }
    if let Some(i) = channels.iter().position(|a| a.norm_squared() < 1e-300) {
        return Err(Error::InfeasibleTargets(format!(
            "user {i} has a zero effective channel"
        )));
    }
    let h: Vec<DVector<Complex64>> = channels.iter().map(|a| a.map(|v| v.conj())).collect();
    let lambda_cap = power_cap / noise;

    let covariance = |lam: &[f64]| {
        let mut m = DMatrix::<Complex64>::identity(n, n);
        for (hi, l) in h.iter().zip(lam) {
            m += hi * hi.adjoint() * Complex64::new(*l, 0.0);
        }
        m
    };

    let mut lam: Vec<f64> = (0..k).map(|i| sinr_targets[i] / h[i].norm_squared()).collect();
    let mut converged = false;
    for _ in 0..2000 {
        let chol = covariance(&lam)
            .cholesky()
            .ok_or_else(|| Error::InfeasibleTargets("dual covariance lost definiteness".into()))?;
        let next: Vec<f64> = (0..k)
            .map(|i| {
                let q = h[i].dotc(&chol.solve(&h[i])).re;
                1.0 / ((1.0 + 1.0 / sinr_targets[i]) * q)
            })
            .collect();
        let sum: f64 = next.iter().sum();
        if !sum.is_finite() || sum > lambda_cap {
            return Err(Error::InfeasibleTargets(format!(
                "required power exceeds cap of {power_cap:e} W"
            )));
        }
        let change = next
            .iter()
            .zip(&lam)
            .map(|(a, b)| (a - b).abs() / a.max(1e-300))
            .fold(0.0, f64::max);
        lam = next;
        if change < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::InfeasibleTargets("dual power iteration did not converge".into()));
    }

    let chol = covariance(&lam).cholesky().expect("identity plus PSD is definite");
    let dirs: Vec<DVector<Complex64>> = h
        .iter()
        .map(|hi| {
            let v = chol.solve(hi);
            let norm = v.norm();
            v / Complex64::new(norm, 0.0)
        })
        .collect();
    // p_k |a_k v_k|²/γ_k − Σ_{i≠k} p_i |a_k v_i|² = σ²
    let mut d = DMatrix::<f64>::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            let g = h[r].dotc(&dirs[c]).norm_sqr();
            d[(r, c)] = if r == c { g / sinr_targets[r] } else { -g };
        }
    }
    let p = d
        .lu()
        .solve(&DVector::from_element(k, noise))
        .ok_or_else(|| Error::InfeasibleTargets("singular power system".into()))?;
    if p.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InfeasibleTargets("negative downlink power".into()));
    }
    let power: f64 = p.iter().sum();
    if power > power_cap {
        return Err(Error::InfeasibleTargets(format!(
            "required power {power:e} W exceeds cap of {power_cap:e} W"
        )));
    }
    let mut w = DMatrix::from_element(n, k, zero());
    for (i, v) in dirs.iter().enumerate() {
        w.set_column(i, &(v * Complex64::new(p[i].sqrt(), 0.0)));
    }
    Ok(PowerSolution {
        precoders: w,
        power,
        multipliers: lam,
    })
}

/// Precoder block for fixed effective channels.
pub fn precoder_update(
    channels: &[DVector<Complex64>],
    current: &DMatrix<Complex64>,
    noise: f64,
    target: &PrecoderTarget,
) -> Result<DMatrix<Complex64>> {
    match target {
        PrecoderTarget::SumRate { power_budget } => Ok(wmmse_round(channels, current, noise, *power_budget)),
        PrecoderTarget::MinPower {
            sinr_targets,
            power_cap,
        } => Ok(min_power_precoders(channels, sinr_targets, noise, *power_cap)?.precoders),
    }
}
