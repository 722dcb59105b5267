//! Exponential-family response distributions with canonical links.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::formula::FamilyKind;

#[derive(Error, Debug)]
pub enum FamilyError {
    #[error("binomial responses must lie in [0, 1]; found {0} at row {1}")]
    BinomialRange(f64, usize),
    #[error("poisson responses must be nonnegative integers; found {0} at row {1}")]
    PoissonRange(f64, usize),
    #[error("non-finite response {0} at row {1}")]
    NonFinite(f64, usize),
}

/// Response family with canonical link: identity (gaussian), logit
/// (binomial, single-trial responses in [0,1]), log (poisson).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Family {
    pub kind: FamilyKind,
}

/// Working weights are clamped to this range in IWLS steps.
pub const WEIGHT_FLOOR: f64 = 1e-10;
pub const WEIGHT_CEIL: f64 = 1e10;

impl Family {
    pub fn new(kind: FamilyKind) -> Self {
        Family { kind }
    }

    pub fn gaussian() -> Self {
        Family::new(FamilyKind::Gaussian)
    }

    pub fn binomial() -> Self {
        Family::new(FamilyKind::Binomial)
    }

    pub fn poisson() -> Self {
        Family::new(FamilyKind::Poisson)
    }

    pub fn is_gaussian(&self) -> bool {
        self.kind == FamilyKind::Gaussian
    }

    pub fn validate_response(&self, y: &[f64]) -> Result<(), FamilyError> {
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(FamilyError::NonFinite(v, i));
            }
            match self.kind {
                FamilyKind::Gaussian => {}
                FamilyKind::Binomial => {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(FamilyError::BinomialRange(v, i));
                    }
                }
                FamilyKind::Poisson => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(FamilyError::PoissonRange(v, i));
                    }
                }
            }
        }
        Ok(())
    }

    /// Response function h: inverse of the canonical link.
    pub fn mean(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => eta,
            FamilyKind::Binomial => 1.0 / (1.0 + (-eta).exp()),
            FamilyKind::Poisson => eta.min(700.0).exp(),
        }
    }

    /// IWLS working weight at linear predictor `eta` (before the 1/phi
    /// dispersion factor of the Gaussian case).
    pub fn working_weight(&self, eta: f64) -> f64 {
        let w = match self.kind {
            FamilyKind::Gaussian => 1.0,
            FamilyKind::Binomial => {
                let mu = self.mean(eta);
                mu * (1.0 - mu)
            }
            FamilyKind::Poisson => self.mean(eta),
        };
        w.clamp(WEIGHT_FLOOR, WEIGHT_CEIL)
    }

    /// Log-likelihood of the full sample, including normalizing constants.
    /// `phi` is the Gaussian error variance and is ignored otherwise.
    pub fn log_likelihood(&self, y: &[f64], eta: &[f64], phi: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => {
                let n = y.len() as f64;
                let ssr: f64 = y
                    .iter()
                    .zip(eta)
                    .map(|(&yi, &ei)| (yi - ei) * (yi - ei))
                    .sum();
                -0.5 * (n * (2.0 * std::f64::consts::PI * phi).ln() + ssr / phi)
            }
            FamilyKind::Binomial => y
                .iter()
                .zip(eta)
                .map(|(&yi, &ei)| {
                    let mu = self.mean(ei).clamp(1e-12, 1.0 - 1e-12);
                    yi * mu.ln() + (1.0 - yi) * (1.0 - mu).ln()
                })
                .sum(),
            FamilyKind::Poisson => y
                .iter()
                .zip(eta)
                .map(|(&yi, &ei)| yi * ei - ei.min(700.0).exp() - ln_factorial(yi))
                .sum(),
        }
    }

    /// Deviance: -2 log-likelihood.
    pub fn deviance(&self, y: &[f64], eta: &[f64], phi: f64) -> f64 {
        -2.0 * self.log_likelihood(y, eta, phi)
    }

    /// Deviance of the covariate-free intercept model at its maximum
    /// likelihood fit.
    pub fn null_deviance(&self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        match self.kind {
            FamilyKind::Gaussian => {
                let ssr: f64 = y.iter().map(|&v| (v - mean) * (v - mean)).sum();
                let sigma2 = (ssr / n).max(f64::MIN_POSITIVE);
                n * (2.0 * std::f64::consts::PI * sigma2).ln() + n
            }
            FamilyKind::Binomial => {
                let eta = ((mean.clamp(1e-12, 1.0 - 1e-12)) / (1.0 - mean.clamp(1e-12, 1.0 - 1e-12))).ln();
                self.deviance(y, &vec![eta; y.len()], 1.0)
            }
            FamilyKind::Poisson => {
                let eta = mean.max(f64::MIN_POSITIVE).ln();
                self.deviance(y, &vec![eta; y.len()], 1.0)
            }
        }
    }

    /// Starting linear predictor for IWLS, one value per observation.
    pub fn initial_eta(&self, y: &[f64]) -> Vec<f64> {
        match self.kind {
            FamilyKind::Gaussian => y.to_vec(),
            FamilyKind::Binomial => y
                .iter()
                .map(|&v| {
                    let mu = (v + 0.5) / 2.0;
                    (mu / (1.0 - mu)).ln()
                })
                .collect(),
            FamilyKind::Poisson => y.iter().map(|&v| (v + 0.5).ln()).collect(),
        }
    }
}

fn ln_factorial(y: f64) -> f64 {
    // y is a validated nonnegative integer; lgamma(y + 1).
    let mut acc = 0.0;
    let mut k = 2.0;
    if y > 170.0 {
        // Stirling for large counts.
        return y * y.ln() - y + 0.5 * (2.0 * std::f64::consts::PI * y).ln();
    }
    while k <= y {
        acc += k.ln();
        k += 1.0;
    }
    acc
}
