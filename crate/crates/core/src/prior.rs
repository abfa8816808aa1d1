//! Truncated trigonometric-series Gaussian priors on the log Robin
//! coefficient `θ` over `[0, 1]`.
//!
//! A draw is `θ = κ Σ_{|k| <= K} w_k g_k φ_k` with `g_k` i.i.d. standard
//! normal and the period-one basis
//!
//! ```text
//!   φ_k(x) = sin(2πkx)   k > 0
//!   φ_k(x) = cos(2πkx)   k < 0
//!   φ_0(x) = 1
//! ```
//!
//! Matérn-type weights are `w_k = (1 + k²)^(−α/2)`, squared-exponential
//! weights `w_k = exp(−r k² / 2)`. The amplitude `κ` is one unless the prior
//! is rescaled with the sample count `N`: `κ = N^(−1/(4α+2))` (Matérn) or
//! `κ = 1 / log N` (squared exponential).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    Matern { alpha: f64 },
    SquaredExp { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rescale {
    #[default]
    Off,
    On {
        n: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    family: PriorFamily,
    truncation: usize,
    rescale: Rescale,
}

impl PriorSpec {
    pub fn new(family: PriorFamily, truncation: usize, rescale: Rescale) -> Result<Self> {
        match family {
            PriorFamily::Matern { alpha } if !(alpha > 0.5 && alpha.is_finite()) => {
                return Err(Error::InvalidPrior(format!(
                    "Matérn smoothness must exceed 1/2, got {alpha}"
                )))
            }
            PriorFamily::SquaredExp { r } if !(r > 0.0 && r.is_finite()) => {
                return Err(Error::InvalidPrior(format!(
                    "squared-exponential decay must be positive, got {r}"
                )))
            }
            _ => {}
        }
        if let Rescale::On { n } = rescale {
            if !(n >= 2.0 && n.is_finite()) {
                return Err(Error::RescaleSampleCount(n));
            }
        }
        Ok(Self {
            family,
            truncation,
            rescale,
        })
    }

    pub fn matern(alpha: f64, truncation: usize) -> Result<Self> {
        Self::new(PriorFamily::Matern { alpha }, truncation, Rescale::Off)
    }

    pub fn squared_exp(r: f64, truncation: usize) -> Result<Self> {
        Self::new(PriorFamily::SquaredExp { r }, truncation, Rescale::Off)
    }

    pub fn family(&self) -> PriorFamily {
        self.family
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn rescale(&self) -> Rescale {
        self.rescale
    }

    pub fn dim(&self) -> usize {
        2 * self.truncation + 1
    }

    /// Spectral weight `w_k`.
    pub fn weight(&self, k: i64) -> Result<f64> {
        if k.unsigned_abs() as usize > self.truncation {
            return Err(Error::FrequencyOutOfRange {
                k,
                truncation: self.truncation,
            });
        }
        let k2 = (k * k) as f64;
        Ok(match self.family {
            PriorFamily::Matern { alpha } => (1.0 + k2).powf(-alpha / 2.0),
            PriorFamily::SquaredExp { r } => (-0.5 * r * k2).exp(),
        })
    }

    /// Rescaling factor for sample count `n`; one when rescaling is off.
    pub fn rescale_factor(&self, n: f64) -> Result<f64> {
        match self.rescale {
            Rescale::Off => Ok(1.0),
            Rescale::On { .. } => {
                if !(n >= 2.0) {
                    return Err(Error::RescaleSampleCount(n));
                }
                Ok(match self.family {
                    PriorFamily::Matern { alpha } => n.powf(-1.0 / (4.0 * alpha + 2.0)),
                    PriorFamily::SquaredExp { .. } => 1.0 / n.ln(),
                })
            }
        }
    }

    /// The amplitude `κ` in effect for this spec.
    pub fn kappa(&self) -> f64 {
        match self.rescale {
            Rescale::Off => 1.0,
            Rescale::On { n } => self.rescale_factor(n).expect("validated at construction"),
        }
    }

    /// Marginal standard deviations `κ w_k`, ordered `k = −K..=K`.
    pub fn std_devs(&self) -> Vec<f64> {
        let kappa = self.kappa();
        self.frequencies()
            .map(|k| kappa * self.weight(k).expect("k within truncation"))
            .collect()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = i64> {
        let k = self.truncation as i64;
        -k..=k
    }

    /// Independent draw from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CoeffVector {
        CoeffVector(
            self.std_devs()
                .into_iter()
                .map(|s| s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }

    /// Truncated covariance `Σ κ² w_k² φ_k(x) φ_k(y)`.
    pub fn covariance(&self, x: f64, y: f64) -> f64 {
        self.frequencies()
            .zip(self.std_devs())
            .map(|(k, s)| s * s * basis(k, x) * basis(k, y))
            .sum()
    }
}

/// Free-function forms of the prior operations.
pub fn weight(spec: &PriorSpec, k: i64) -> Result<f64> {
    spec.weight(k)
}

pub fn rescale_factor(spec: &PriorSpec, n: f64) -> Result<f64> {
    spec.rescale_factor(n)
}

pub fn sample_coeffs<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> CoeffVector {
    spec.sample(rng)
}

pub fn covariance(spec: &PriorSpec, x: f64, y: f64) -> f64 {
    spec.covariance(x, y)
}

pub fn eval_theta(coeffs: &CoeffVector, x: f64) -> Result<f64> {
    coeffs.eval(x)
}

/// Basis function `φ_k(x)`.
#[inline]
pub fn basis(k: i64, x: f64) -> f64 {
    match k {
        0 => 1.0,
        k if k > 0 => (2.0 * PI * k as f64 * x).sin(),
        k => (2.0 * PI * (-k) as f64 * x).cos(),
    }
}

/// Coefficients `θ_k` for `k = −K..=K`. Serializes as a flat array in that
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CoeffVector(Vec<f64>);

impl TryFrom<Vec<f64>> for CoeffVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<CoeffVector> for Vec<f64> {
    fn from(c: CoeffVector) -> Self {
        c.0
    }
}

impl CoeffVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "coefficient vector needs odd length 2K+1, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(truncation: usize) -> Self {
        Self(vec![0.0; 2 * truncation + 1])
    }

    pub fn truncation(&self) -> usize {
        self.0.len() / 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Coefficient of frequency `k`.
    pub fn get(&self, k: i64) -> f64 {
        self.0[(k + self.truncation() as i64) as usize]
    }

    pub fn frequencies(&self) -> impl Iterator<Item = i64> {
        let k = self.truncation() as i64;
        -k..=k
    }

    /// `θ(x)` for `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: 1.0 });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        self.frequencies()
            .zip(&self.0)
            .map(|(k, c)| c * basis(k, x))
            .sum()
    }
}
