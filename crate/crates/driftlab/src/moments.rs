//! Conditional one-step moments of the neutral frequency processes.
//!
//! Both reduced processes are balanced, so the conditional mean is the
//! current frequency; the variance and third central moment below are what
//! the hitting-time bounds feed on.  `check_sqrt_bound` verifies the cubic
//! expansion inequality those bounds use to control `E[sqrt(p')]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTriple {
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
}

/// One-step conditional moments of the reduced PBIL process at frequency
/// `p`: variance `(rho^2 / mu) p (1 - p)` and third central moment
/// `(rho^3 / mu^2) p (1 - p) (1 - 2p)`.
pub fn pbil_conditional_moments(p: f64, mu: u32, rho: f64) -> Result<MomentTriple> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("frequency {p} outside [0, 1]")));
    }
    if mu < 1 {
        return Err(Error::Domain("mu must be at least 1".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("learning rate {rho} outside (0, 1]")));
    }
    let pq = p * (1.0 - p);
    let mu_f = mu as f64;
    Ok(MomentTriple {
        mean: p,
        variance: rho * rho / mu_f * pq,
        third_central: rho.powi(3) / (mu_f * mu_f) * pq * (1.0 - 2.0 * p),
    })
}

/// One-step conditional moments of the reduced cGA process at frequency
/// `num / k`: variance `(2 / K^2) p (1 - p)`; the third central moment
/// vanishes because up and down moves are equally likely.
pub fn cga_conditional_moments(num: u32, k: u32) -> Result<MomentTriple> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::Domain(format!("K must be even and at least 2, got {k}")));
    }
    if num > k {
        return Err(Error::Domain(format!("numerator {num} exceeds K={k}")));
    }
    let p = num as f64 / k as f64;
    let pq = p * (1.0 - p);
    Ok(MomentTriple {
        mean: p,
        variance: 2.0 / (k as f64 * k as f64) * pq,
        third_central: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `sqrt(z) <= sqrt(z0) + (z - z0) / (2 sqrt(z0))
///                  - (z - z0)^2 / (8 z0^(3/2)) + (z - z0)^3 / (16 z0^(5/2))`
/// for `z >= 0`, `z0 > 0`, up to a `1e-12`-scaled rounding allowance.
pub fn check_sqrt_bound(z: f64, z0: f64) -> Result<SqrtBoundCheck> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("z must be finite and nonnegative, got {z}")));
    }
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(Error::Domain(format!("z0 must be finite and positive, got {z0}")));
    }
    let d = z - z0;
    let s = z0.sqrt();
    let rhs = s + d / (2.0 * s) - d * d / (8.0 * z0 * s) + d * d * d / (16.0 * z0 * z0 * s);
    let lhs = z.sqrt();
    let holds = lhs <= rhs + 1e-12 * rhs.max(1.0);
    Ok(SqrtBoundCheck { lhs, rhs, holds })
}

/// Mean, unbiased variance and plug-in third central moment of a sample,
/// all taken about the sample mean.
pub fn empirical_moments(samples: &[f64]) -> Result<MomentTriple> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 samples for central moments, got {n}"
        )));
    }
    let n_f = n as f64;
    let mean = samples.iter().sum::<f64>() / n_f;
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_f - 1.0);
    let third_central = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n_f;
    Ok(MomentTriple {
        mean,
        variance,
        third_central,
    })
}
