//! Kernels of the linear and Gaussian RKHS, their weighted sum, and the
//! complex-to-real sample mapping.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// A real input vector of length `2M`, obtained from an `M`-antenna complex
/// sample by [`realify`]. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSample(Vec<f64>);

impl RealSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite entry {bad}")));
        }
        Ok(RealSample(values))
    }

    pub fn zeros(len: usize) -> Self {
        RealSample(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for RealSample {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Weights of the sum space `w_L * H_L + w_G * H_G` and the Gaussian width.
///
/// `w_linear = 0` is the purely nonlinear filter (NLAF); `w_gaussian = 0`
/// degenerates to a normalized linear adaptive filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub w_linear: f64,
    pub w_gaussian: f64,
    pub sigma: f64,
}

impl KernelConfig {
    pub fn new(w_linear: f64, w_gaussian: f64, sigma: f64) -> Result<Self> {
        let cfg = KernelConfig {
            w_linear,
            w_gaussian,
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Partially linear weights `(w_L, w_G) = (0.2, 0.8)`.
    pub fn partially_linear(sigma: f64) -> Self {
        KernelConfig {
            w_linear: 0.2,
            w_gaussian: 0.8,
            sigma,
        }
    }

    /// Purely Gaussian filter, `(w_L, w_G) = (0, 1)`.
    pub fn nonlinear(sigma: f64) -> Self {
        KernelConfig {
            w_linear: 0.0,
            w_gaussian: 1.0,
            sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.w_linear.is_finite() && self.w_gaussian.is_finite();
        if !finite || self.w_linear < 0.0 || self.w_gaussian < 0.0 {
            return Err(Error::Config(format!(
                "kernel weights must be non-negative, got w_linear={} w_gaussian={}",
                self.w_linear, self.w_gaussian
            )));
        }
        if self.w_linear + self.w_gaussian <= 0.0 {
            return Err(Error::Config("kernel weights must not both be zero".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "gaussian width must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

fn check_len(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub(crate) fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// `exp(-||u - v||^2 / (2 sigma^2))` without the length check.
#[inline]
pub(crate) fn gaussian_raw(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    (-squared_distance(u, v) / (2.0 * sigma * sigma)).exp()
}

/// `u^T v`.
pub fn linear_kernel(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u, v)?;
    Ok(dot(u, v))
}

/// Gaussian kernel `exp(-||u - v||^2 / (2 sigma^2))`, valued in `(0, 1]`.
pub fn gaussian_kernel(u: &[f64], v: &[f64], sigma: f64) -> Result<f64> {
    check_len(u, v)?;
    if !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "gaussian width must be positive, got {sigma}"
        )));
    }
    Ok(gaussian_raw(u, v, sigma))
}

/// Reproducing kernel of the weighted sum space, `w_L k_L + w_G k_G`.
pub fn sum_kernel(u: &[f64], v: &[f64], cfg: &KernelConfig) -> Result<f64> {
    check_len(u, v)?;
    Ok(cfg.w_linear * dot(u, v) + cfg.w_gaussian * gaussian_raw(u, v, cfg.sigma))
}

/// Maps an `M`-antenna complex sample to the two real inputs
/// `r1 = [Re r; Im r]` and `r2 = [Im r; -Re r]`.
///
/// With real labels `b1 = Re b`, `b2 = Im b`, a real filter `f` gives the
/// complex detector `g(r) = f(r1) + i f(r2)`.
pub fn realify(r: &[C64]) -> Result<(RealSample, RealSample)> {
    if r.is_empty() {
        return Err(Error::InvalidSample(
            "complex sample must have at least one antenna".into(),
        ));
    }
    let m = r.len();
    let mut first = Vec::with_capacity(2 * m);
    let mut second = Vec::with_capacity(2 * m);
    first.extend(r.iter().map(|z| z.re));
    first.extend(r.iter().map(|z| z.im));
    second.extend(r.iter().map(|z| z.im));
    second.extend(r.iter().map(|z| -z.re));
    Ok((RealSample::new(first)?, RealSample::new(second)?))
}
