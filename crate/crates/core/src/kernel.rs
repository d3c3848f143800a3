//! Stationary covariance kernels and their analytic derivatives.
//!
//! Every family is written as `K(x, x') = σ² ∏_k g_k(x_k − x'_k)` with a
//! one-dimensional even profile `g`. Derivatives are taken with respect to the
//! lag `t = x − x'`, so that
//!
//! ```text
//! ∂^{p+q} K / ∂x^p ∂x'^q (x, x') = (−1)^q · σ² · g^{(p+q)}(x − x')
//! ```
//!
//! Matérn profiles are functions of `r = |t|`; odd lag derivatives pick up
//! `sign(t)` and vanish at `t = 0` where they exist.

use serde::{Deserialize, Serialize};

use crate::error::{CgpError, Result};
use crate::model::ConstraintKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Matern52,
    Matern32,
    Exponential,
}

impl KernelFamily {
    pub fn smoothness(self) -> SmoothnessClass {
        match self {
            KernelFamily::Gaussian => SmoothnessClass { max_mixed_order: None },
            KernelFamily::Matern52 => SmoothnessClass { max_mixed_order: Some(2) },
            KernelFamily::Matern32 => SmoothnessClass { max_mixed_order: Some(1) },
            KernelFamily::Exponential => SmoothnessClass { max_mixed_order: Some(0) },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Exponential => "exponential",
        }
    }
}

/// Largest `p` such that `∂^{2p}K/∂x^p∂x'^p` exists and is continuous.
/// `None` means unbounded (C^∞).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothnessClass {
    pub max_mixed_order: Option<u32>,
}

impl SmoothnessClass {
    /// Whether a derivative of total order `p + q` is available.
    pub fn allows(&self, total_order: u32) -> bool {
        match self.max_mixed_order {
            None => true,
            Some(p) => total_order <= 2 * p,
        }
    }
}

/// Kernel family with variance `σ²` and one length-scale per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let spec = KernelSpec {
            family,
            variance,
            lengthscales,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(CgpError::Config(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(CgpError::Config("kernel needs at least one length-scale".into()));
        }
        if let Some(&bad) = self
            .lengthscales
            .iter()
            .find(|&&l| !(l.is_finite() && l > 0.0))
        {
            return Err(CgpError::Config(format!(
                "length-scales must be positive, got {bad}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn smoothness(&self) -> SmoothnessClass {
        self.family.smoothness()
    }

    /// Same kernel with the variance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> KernelSpec {
        KernelSpec {
            variance: self.variance * factor,
            ..self.clone()
        }
    }

    /// `K(x, x')`, a product of one-dimensional profiles for `d > 1`.
    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(CgpError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if xp.len() != d {
            return Err(CgpError::DimensionMismatch {
                expected: d,
                got: xp.len(),
            });
        }
        Ok(self.eval_unchecked(x, xp))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], xp: &[f64]) -> f64 {
        let mut value = self.variance;
        for ((&a, &b), &theta) in x.iter().zip(xp).zip(&self.lengthscales) {
            value *= profile_derivative(self.family, a - b, theta, 0);
        }
        value
    }

    /// `∂^{p+q} K / ∂x^p ∂x'^q` at scalar inputs, from closed forms.
    ///
    /// Only defined for one-dimensional kernels.
    pub fn eval_deriv(&self, x: f64, xp: f64, p: u32, q: u32) -> Result<f64> {
        if self.dim() != 1 {
            return Err(CgpError::DimensionMismatch {
                expected: 1,
                got: self.dim(),
            });
        }
        if p > 2 || q > 2 {
            return Err(CgpError::Config(format!(
                "derivative orders are limited to 2 per argument, got ({p}, {q})"
            )));
        }
        self.check_order(p + q)?;
        Ok(self.deriv_unchecked(x, xp, p, q))
    }

    pub(crate) fn deriv_unchecked(&self, x: f64, xp: f64, p: u32, q: u32) -> f64 {
        let sign = if q % 2 == 1 { -1.0 } else { 1.0 };
        sign * self.variance * profile_derivative(self.family, x - xp, self.lengthscales[0], p + q)
    }

    fn check_order(&self, total: u32) -> Result<()> {
        let smooth = self.smoothness();
        if smooth.allows(total) {
            Ok(())
        } else {
            Err(CgpError::KernelTooRough {
                family: self.family.name().to_string(),
                supported: smooth.max_mixed_order.unwrap_or(u32::MAX),
                requested: total.div_ceil(2),
            })
        }
    }

    /// Whether this kernel can back a model of the given constraint kind.
    pub fn capability(&self, constraint: &ConstraintKind) -> Result<()> {
        let mixed = constraint.required_mixed_order();
        self.check_order(2 * mixed)
    }
}

/// `d^m/dt^m g(t)` for the unit-variance profile `g` of `family`.
fn profile_derivative(family: KernelFamily, t: f64, theta: f64, m: u32) -> f64 {
    match family {
        KernelFamily::Gaussian => {
            // g^{(m)}(t) = (−1/θ)^m He_m(t/θ) exp(−t²/2θ²)
            let s = t / theta;
            let he = match m {
                0 => 1.0,
                1 => s,
                2 => s * s - 1.0,
                3 => s * s * s - 3.0 * s,
                4 => {
                    let s2 = s * s;
                    s2 * s2 - 6.0 * s2 + 3.0
                }
                _ => unreachable!("order {m} not supported"),
            };
            let factor = (-1.0 / theta).powi(m as i32);
            factor * he * (-0.5 * s * s).exp()
        }
        KernelFamily::Matern52 => {
            let a = 5f64.sqrt() / theta;
            let r = t.abs();
            let ar = a * r;
            let e = (-ar).exp();
            let even = match m {
                0 => (1.0 + ar + ar * ar / 3.0) * e,
                1 => -(a * a / 3.0) * r * (1.0 + ar) * e,
                2 => -(a * a / 3.0) * (1.0 + ar - ar * ar) * e,
                3 => (a.powi(4) / 3.0) * r * (3.0 - ar) * e,
                4 => (a.powi(4) / 3.0) * (3.0 - 5.0 * ar + ar * ar) * e,
                _ => unreachable!("order {m} not supported"),
            };
            odd_sign(t, m) * even
        }
        KernelFamily::Matern32 => {
            let b = 3f64.sqrt() / theta;
            let r = t.abs();
            let br = b * r;
            let e = (-br).exp();
            let even = match m {
                0 => (1.0 + br) * e,
                1 => -b * b * r * e,
                2 => -b * b * (1.0 - br) * e,
                _ => unreachable!("order {m} not supported"),
            };
            odd_sign(t, m) * even
        }
        KernelFamily::Exponential => match m {
            0 => (-t.abs() / theta).exp(),
            _ => unreachable!("order {m} not supported"),
        },
    }
}

/// Derivatives of an even function of `|t|`: odd orders carry `sign(t)`.
/// The odd-order closed forms above all vanish at `r = 0`, so the choice at
/// `t = 0` does not matter.
fn odd_sign(t: f64, m: u32) -> f64 {
    if m % 2 == 1 && t < 0.0 {
        -1.0
    } else {
        1.0
    }
}
