use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Observation model, one term per row of the design.
pub trait Likelihood: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows that enter the likelihood.
    fn active(&self, i: usize) -> bool;

    /// `(log p(y_i | eta), d/d eta, -d^2/d eta^2)`
    fn eval(&self, i: usize, eta: f64) -> (f64, f64, f64);

    /// Starting value for the intercept, if the data suggest one.
    fn intercept_hint(&self) -> Option<f64> {
        None
    }
}

/// `y_i ~ Poisson(E_i exp(eta_i))`
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonObs {
    counts: Vec<u64>,
    offsets: Vec<f64>,
    log_const: Vec<f64>,
}

impl PoissonObs {
    pub fn new(counts: Vec<u64>, offsets: Vec<f64>) -> Result<Self> {
        if counts.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: counts.len(),
                found: offsets.len(),
            });
        }
        if let Some(e) = offsets.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return Err(Error::domain(format!("offsets must be finite and non-negative, got {e}")));
        }
        if let Some(i) = (0..counts.len()).find(|&i| offsets[i] == 0.0 && counts[i] > 0) {
            return Err(Error::domain(format!("row {i} has cases but a zero offset")));
        }
        let log_const = counts
            .iter()
            .zip(&offsets)
            .map(|(&y, &e)| {
                if e > 0.0 {
                    y as f64 * e.ln() - ln_gamma(y as f64 + 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(PoissonObs {
            counts,
            offsets,
            log_const,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
}

impl Likelihood for PoissonObs {
    fn len(&self) -> usize {
        self.counts.len()
    }

    fn active(&self, i: usize) -> bool {
        self.offsets[i] > 0.0
    }

    fn eval(&self, i: usize, eta: f64) -> (f64, f64, f64) {
        let y = self.counts[i] as f64;
        let mu = self.offsets[i] * eta.exp();
        (self.log_const[i] + y * eta - mu, y - mu, mu)
    }

    fn intercept_hint(&self) -> Option<f64> {
        let y: u64 = self.counts.iter().sum();
        let e: f64 = self.offsets.iter().sum();
        (e > 0.0).then(|| ((y as f64).max(0.5) / e).ln())
    }
}

/// `y_i ~ N(eta_i, 1 / precision_i)`
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianObs {
    y: Vec<f64>,
    precision: Vec<f64>,
}

impl GaussianObs {
    pub fn new(y: Vec<f64>, precision: Vec<f64>) -> Result<Self> {
        if y.len() != precision.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: precision.len(),
            });
        }
        if precision.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::domain("observation precisions must be positive"));
        }
        Ok(GaussianObs { y, precision })
    }
}

impl Likelihood for GaussianObs {
    fn len(&self) -> usize {
        self.y.len()
    }

    fn active(&self, _i: usize) -> bool {
        true
    }

    fn eval(&self, i: usize, eta: f64) -> (f64, f64, f64) {
        let p = self.precision[i];
        let r = self.y[i] - eta;
        (
            0.5 * (p / (2.0 * std::f64::consts::PI)).ln() - 0.5 * p * r * r,
            p * r,
            p,
        )
    }
}
