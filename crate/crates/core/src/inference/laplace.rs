use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use super::likelihood::Likelihood;
use crate::error::{Error, Result};
use crate::gmrf::{CholeskyFactor, ConstraintSet, Kriging, SparseMatrix, SparseSymMatrix, SymbolicCholesky};

/// Prior precision of the intercept.
pub const INTERCEPT_PRECISION: f64 = 1e-6;

/// Latent Gaussian prior at fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct LatentPrior {
    /// Must keep the same sparsity pattern for every `theta`.
    pub q: SparseSymMatrix,
    pub constraint: ConstraintSet,
}

/// A latent Gaussian model with hyperparameters on an unconstrained
/// internal scale.
pub trait LatentModel: Send + Sync {
    fn latent_dim(&self) -> usize;

    fn hyper_dim(&self) -> usize;

    /// Names of the hyperparameters on their natural scale.
    fn hyper_names(&self) -> Vec<String>;

    /// Internal coordinates to natural scale.
    fn hyper_natural(&self, theta: &[f64]) -> Vec<f64>;

    fn prior(&self, theta: &[f64]) -> Result<LatentPrior>;

    /// Rows map the latent vector to the predictor of each observation.
    fn design(&self, theta: &[f64]) -> Result<SparseMatrix>;

    /// Rows map the latent vector to each reported target.
    fn targets(&self, theta: &[f64]) -> Result<SparseMatrix>;

    /// Log prior density of the internal coordinates, Jacobian included.
    fn log_hyper_prior(&self, theta: &[f64]) -> f64;

    fn bounds(&self) -> Vec<(f64, f64)>;

    fn initial_hyper(&self) -> Vec<f64>;

    /// Index of the intercept in the latent vector.
    fn intercept_index(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            grad_tol: 1e-6,
            step_tol: 1e-8,
            max_halvings: 30,
        }
    }
}

/// Gaussian approximation of `x | y, theta` at its mode.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub theta: Vec<f64>,
    pub mode: Vec<f64>,
    /// Factor of the precision at the mode.
    pub factor: CholeskyFactor,
    pub kriging: Kriging,
    pub constraint: ConstraintSet,
    pub log_lik: f64,
    pub log_prior_latent: f64,
    pub log_gaussian: f64,
    pub iterations: usize,
    /// Largest projected gradient component at the mode.
    pub grad_norm: f64,
}

impl GaussianApprox {
    /// Laplace approximation of `log p(y | theta)`.
    pub fn log_marginal(&self) -> f64 {
        self.log_lik + self.log_prior_latent - self.log_gaussian
    }
}

fn cached(cell: &OnceLock<Arc<SymbolicCholesky>>, m: &SparseSymMatrix) -> Arc<SymbolicCholesky> {
    let s = cell.get_or_init(|| Arc::new(SymbolicCholesky::analyse(m)));
    if s.matches(m) {
        s.clone()
    } else {
        Arc::new(SymbolicCholesky::analyse(m))
    }
}

/// Laplace engine for one model and one data set.
pub struct Laplace<'a> {
    model: &'a dyn LatentModel,
    lik: &'a dyn Likelihood,
    active: Vec<usize>,
    opts: NewtonOptions,
    sym_q: OnceLock<Arc<SymbolicCholesky>>,
    sym_h: OnceLock<Arc<SymbolicCholesky>>,
}

impl<'a> Laplace<'a> {
    pub fn new(model: &'a dyn LatentModel, lik: &'a dyn Likelihood, opts: NewtonOptions) -> Result<Self> {
        let active = (0..lik.len()).filter(|&i| lik.active(i)).collect();
        Ok(Laplace {
            model,
            lik,
            active,
            opts,
            sym_q: OnceLock::new(),
            sym_h: OnceLock::new(),
        })
    }

    pub fn model(&self) -> &dyn LatentModel {
        self.model
    }

    pub fn likelihood(&self) -> &dyn Likelihood {
        self.lik
    }

    fn starting_point(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        if let (Some(i), Some(b)) = (self.model.intercept_index(), self.lik.intercept_hint()) {
            x[i] = b;
        }
        x
    }

    fn log_lik_terms(&self, d: &SparseMatrix, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let eta = d.mul_vec(x);
        let mut ll = 0.0;
        let mut g = Vec::with_capacity(eta.len());
        let mut w = Vec::with_capacity(eta.len());
        for (&row, &e) in self.active.iter().zip(&eta) {
            let (l, gi, wi) = self.lik.eval(row, e);
            ll += l;
            g.push(gi);
            w.push(wi);
        }
        (ll, g, w)
    }

    fn hessian(&self, q: &SparseSymMatrix, d: &SparseMatrix, w: &[f64]) -> Result<SparseSymMatrix> {
        let mut t: Vec<(usize, usize, f64)> = q.iter().collect();
        t.extend(d.weighted_gram_triplets(w));
        SparseSymMatrix::from_triplets(q.n(), &t)
    }

    /// Newton iterations for the mode of `x | y, theta` under the latent
    /// constraints, started from `x0` (or from the data-informed default).
    pub fn gaussian_approx(&self, theta: &[f64], x0: Option<&[f64]>) -> Result<GaussianApprox> {
        let model = self.model;
        let prior = model.prior(theta)?;
        let n = model.latent_dim();
        if prior.q.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: prior.q.n(),
            });
        }
        let design = model.design(theta)?;
        if design.nrows() != self.lik.len() || design.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: self.lik.len(),
                found: design.nrows(),
            });
        }
        let d = design.select_rows(&self.active);
        let q = &prior.q;
        let c = &prior.constraint;
        let fail = || Error::NonConvergence {
            theta: model.hyper_natural(theta),
        };

        let mut x = match x0 {
            Some(x0) if x0.len() == n => x0.to_vec(),
            _ => self.starting_point(n),
        };
        c.project(&mut x);

        let objective = |x: &[f64]| -> f64 {
            let eta = d.mul_vec(x);
            let ll: f64 = self.active.iter().zip(&eta).map(|(&r, &e)| self.lik.eval(r, e).0).sum();
            ll - 0.5 * q.quad_form(x)
        };

        let mut f_x = objective(&x);
        let mut iterations = 0;
        let mut grad_norm;
        loop {
            let (_, g_eta, w) = self.log_lik_terms(&d, &x);
            let qx = q.mul_vec(&x);
            let grad: Vec<f64> = d.transpose_mul_vec(&g_eta).iter().zip(&qx).map(|(a, b)| a - b).collect();
            let mut pg = grad.clone();
            c.project(&mut pg);
            grad_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if grad_norm <= self.opts.grad_tol {
                break;
            }
            if iterations >= self.opts.max_iter {
                return Err(fail());
            }
            iterations += 1;

            let h = self.hessian(q, &d, &w)?;
            let fh = CholeskyFactor::new(cached(&self.sym_h, &h), &h)?;
            let mut delta = fh.solve(&grad)?;
            if !c.is_empty() {
                let kr = Kriging::new(&fh, c)?;
                kr.correct(c, &mut delta, &vec![0.0; c.k()]);
            }

            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=self.opts.max_halvings {
                let cand: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + t * b).collect();
                let f_c = objective(&cand);
                if f_c.is_finite() && f_c >= f_x - 1e-12 * f_x.abs() {
                    x = cand;
                    f_x = f_c;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let step = t * delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !accepted {
                // No ascent along the Newton direction: numerically at the mode.
                break;
            }
            if step <= self.opts.step_tol {
                break;
            }
        }

        // Precision and density terms at the mode.
        let (log_lik, _, w) = self.log_lik_terms(&d, &x);
        let h = self.hessian(q, &d, &w)?;
        let factor = CholeskyFactor::new(cached(&self.sym_h, &h), &h)?;
        let kriging = Kriging::new(&factor, c)?;
        let fq = CholeskyFactor::new(cached(&self.sym_q, q), q)?;
        let kq = Kriging::new(&fq, c)?;
        let k = c.k() as f64;
        let base = -0.5 * (n as f64 - k) * (2.0 * PI).ln() - 0.5 * c.log_det_aat();
        let log_prior_latent = base + 0.5 * fq.logdet() + 0.5 * kq.log_det_w() - 0.5 * q.quad_form(&x);
        let log_gaussian = base + 0.5 * factor.logdet() + 0.5 * kriging.log_det_w();

        Ok(GaussianApprox {
            theta: theta.to_vec(),
            mode: x,
            factor,
            kriging,
            constraint: c.clone(),
            log_lik,
            log_prior_latent,
            log_gaussian,
            iterations,
            grad_norm,
        })
    }

    /// Laplace log marginal likelihood plus the hyperprior.
    pub fn log_posterior(&self, theta: &[f64], x0: Option<&[f64]>) -> Result<(f64, GaussianApprox)> {
        let ga = self.gaussian_approx(theta, x0)?;
        Ok((ga.log_marginal() + self.model.log_hyper_prior(theta), ga))
    }
}
