#![allow(dead_code)]

pub mod metrics;

use nalgebra::{DMatrix, DVector};
use riskfield::gmrf::{ConstraintSet, SparseMatrix, SparseSymMatrix};
use riskfield::inference::{LatentModel, LatentPrior, Likelihood};
use riskfield::Result;

/// Latent model without hyperparameters.
pub struct FixedModel {
    pub q: DMatrix<f64>,
    pub design: Vec<Vec<(usize, f64)>>,
}

impl LatentModel for FixedModel {
    fn latent_dim(&self) -> usize {
        self.q.nrows()
    }
    fn hyper_dim(&self) -> usize {
        0
    }
    fn hyper_names(&self) -> Vec<String> {
        Vec::new()
    }
    fn hyper_natural(&self, _theta: &[f64]) -> Vec<f64> {
        Vec::new()
    }
    fn prior(&self, _theta: &[f64]) -> Result<LatentPrior> {
        Ok(LatentPrior {
            q: SparseSymMatrix::from_dense(&self.q)?,
            constraint: ConstraintSet::empty(self.q.nrows()),
        })
    }
    fn design(&self, _theta: &[f64]) -> Result<SparseMatrix> {
        SparseMatrix::from_rows(self.q.nrows(), self.design.clone())
    }
    fn targets(&self, theta: &[f64]) -> Result<SparseMatrix> {
        self.design(theta)
    }
    fn log_hyper_prior(&self, _theta: &[f64]) -> f64 {
        0.0
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }
    fn initial_hyper(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `x ~ N(0, exp(-theta) R^{-1})` with one log-precision hyperparameter
/// and a Gaussian prior `N(mu, s^2)` on it.
pub struct ScaledModel {
    pub r: DMatrix<f64>,
    pub design: Vec<Vec<(usize, f64)>>,
    pub prior_mean: f64,
    pub prior_sd: f64,
}

impl LatentModel for ScaledModel {
    fn latent_dim(&self) -> usize {
        self.r.nrows()
    }
    fn hyper_dim(&self) -> usize {
        1
    }
    fn hyper_names(&self) -> Vec<String> {
        vec!["log_precision".into()]
    }
    fn hyper_natural(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
    fn prior(&self, theta: &[f64]) -> Result<LatentPrior> {
        Ok(LatentPrior {
            q: SparseSymMatrix::from_dense(&(&self.r * theta[0].exp()))?,
            constraint: ConstraintSet::empty(self.r.nrows()),
        })
    }
    fn design(&self, _theta: &[f64]) -> Result<SparseMatrix> {
        SparseMatrix::from_rows(self.r.nrows(), self.design.clone())
    }
    fn targets(&self, theta: &[f64]) -> Result<SparseMatrix> {
        self.design(theta)
    }
    fn log_hyper_prior(&self, theta: &[f64]) -> f64 {
        riskfield::special::norm_logpdf(theta[0], self.prior_mean, self.prior_sd)
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-6.0, 8.0)]
    }
    fn initial_hyper(&self) -> Vec<f64> {
        vec![self.prior_mean]
    }
}

pub fn dense_design(design: &[Vec<(usize, f64)>], n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(design.len(), n);
    for (i, row) in design.iter().enumerate() {
        for &(j, v) in row {
            d[(i, j)] += v;
        }
    }
    d
}

/// Dense log of `p(y | x) p(x)` for a fixed prior precision.
fn log_joint(q: &DMatrix<f64>, logdet_q: f64, d: &DMatrix<f64>, lik: &dyn Likelihood, x: &DVector<f64>) -> f64 {
    let n = q.nrows() as f64;
    let eta = d * x;
    let ll: f64 = (0..lik.len()).filter(|&i| lik.active(i)).map(|i| lik.eval(i, eta[i]).0).sum();
    ll - 0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * logdet_q - 0.5 * (x.transpose() * q * x)[(0, 0)]
}

pub struct QuadratureOracle {
    pub log_marginal: f64,
    pub mean_eta: Vec<f64>,
    pub sd_eta: Vec<f64>,
}

/// Tensor trapezoid quadrature of `p(y | x) p(x)` in coordinates whitened
/// by a dense Newton mode and curvature, `points` nodes per axis over
/// `+-half_width` standard deviations.
pub fn quadrature(q: &DMatrix<f64>, design: &[Vec<(usize, f64)>], lik: &dyn Likelihood, points: usize, half_width: f64) -> QuadratureOracle {
    let n = q.nrows();
    let d = dense_design(design, n);
    let logdet_q = 2.0 * q.clone().cholesky().unwrap().l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    // dense Newton for the mode
    let mut x = DVector::zeros(n);
    let mut h = q.clone();
    for _ in 0..200 {
        let eta = &d * &x;
        let mut g = -(q * &x);
        h = q.clone();
        for i in 0..lik.len() {
            if !lik.active(i) {
                continue;
            }
            let (_, gi, wi) = lik.eval(i, eta[i]);
            for a in 0..n {
                g[a] += d[(i, a)] * gi;
                for b in 0..n {
                    h[(a, b)] += wi * d[(i, a)] * d[(i, b)];
                }
            }
        }
        let step = h.clone().cholesky().unwrap().solve(&g);
        x += &step;
        if step.norm() < 1e-13 {
            break;
        }
    }
    let chol = h.cholesky().unwrap();
    // x = mode + L^{-T} z
    let lt_inv = chol.l().transpose().try_inverse().unwrap();
    let log_jac = -chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let step = 2.0 * half_width / (points - 1) as f64;
    let total = points.pow(n as u32);
    let m = design.len();
    let mut sum_w = 0.0;
    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    let lmode = log_joint(q, logdet_q, &d, lik, &x);
    for idx in 0..total {
        let mut rem = idx;
        let mut z = DVector::zeros(n);
        let mut tw = 1.0;
        for k in 0..n {
            let i = rem % points;
            rem /= points;
            z[k] = -half_width + i as f64 * step;
            if i == 0 || i == points - 1 {
                tw *= 0.5;
            }
        }
        let xv = &x + &lt_inv * z;
        let w = tw * (log_joint(q, logdet_q, &d, lik, &xv) - lmode).exp();
        sum_w += w;
        let eta = &d * &xv;
        for g in 0..m {
            s1[g] += w * eta[g];
            s2[g] += w * eta[g] * eta[g];
        }
    }
    let log_marginal = lmode + sum_w.ln() + n as f64 * step.ln() + log_jac;
    let mean_eta: Vec<f64> = s1.iter().map(|s| s / sum_w).collect();
    let sd_eta = s2.iter().zip(&mean_eta).map(|(s, m)| (s / sum_w - m * m).sqrt()).collect();
    QuadratureOracle {
        log_marginal,
        mean_eta,
        sd_eta,
    }
}

/// The three Poisson toys: (prior precision, design, counts, offsets).
pub fn poisson_toys() -> Vec<(DMatrix<f64>, Vec<Vec<(usize, f64)>>, Vec<u64>, Vec<f64>)> {
    vec![
        // one cell, intercept only
        (
            DMatrix::from_element(1, 1, 0.25),
            vec![vec![(0, 1.0)]],
            vec![412],
            vec![1.0e5],
        ),
        // three correlated cells
        (
            DMatrix::from_row_slice(3, 3, &[2.0, -0.8, 0.0, -0.8, 2.0, -0.8, 0.0, -0.8, 2.0]),
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]],
            vec![920, 1220, 720],
            vec![4.0e4, 5.0e4, 3.2e4],
        ),
        // intercept plus four cell effects, five observations
        (
            DMatrix::from_fn(5, 5, |i, j| match (i, j) {
                (0, 0) => 0.01,
                (a, b) if a == b => 4.0,
                (a, b) if a > 0 && b > 0 && a.abs_diff(b) == 1 => -1.0,
                _ => 0.0,
            }),
            vec![
                vec![(0, 1.0), (1, 1.0)],
                vec![(0, 1.0), (2, 1.0)],
                vec![(0, 1.0), (3, 1.0)],
                vec![(0, 1.0), (4, 1.0)],
                vec![(0, 1.0), (1, 0.5), (4, 0.5)],
            ],
            vec![160, 210, 190, 250, 205],
            vec![2.0e4, 2.2e4, 1.8e4, 2.4e4, 2.1e4],
        ),
    ]
}

pub struct CovarianceCheck {
    pub pairs: usize,
    pub max_rel_err: f64,
    /// largest gap between the selected inverse and a direct solve on shared entries
    pub selinv_gap: f64,
}

/// SPDE node-pair covariances against the Matérn closed form, over pairs of
/// window nodes whose distance lies in `[lo, hi]`.
pub fn spde_covariance_check(
    window: &riskfield::domain::Window,
    spacing: f64,
    extension: f64,
    hyper: &riskfield::spde::MaternHyper,
    sources: usize,
    lo: f64,
    hi: f64,
) -> CovarianceCheck {
    use riskfield::gmrf::cholesky;
    use riskfield::spde::{assemble_fem, build_mesh, matern_covariance, spde_precision};

    let mesh = build_mesh(window, spacing, extension).unwrap();
    let fem = assemble_fem(&mesh).unwrap();
    let q = spde_precision(&fem, hyper).unwrap();
    let f = cholesky(&q).unwrap();
    let sel = f.selected_inverse();
    let nodes = mesh.nodes();
    let inner: Vec<usize> = (0..nodes.len()).filter(|&i| mesh.interior()[i]).collect();
    let c = riskfield::domain::Point::new(0.5 * (window.xmin + window.xmax), 0.5 * (window.ymin + window.ymax));
    let mut by_centre = inner.clone();
    by_centre.sort_by(|&a, &b| nodes[a].dist2(&c).total_cmp(&nodes[b].dist2(&c)));
    // spread the sources over the central part of the window
    let step = (by_centre.len() / 4 / sources).max(1);
    let mut out = CovarianceCheck {
        pairs: 0,
        max_rel_err: 0.0,
        selinv_gap: 0.0,
    };
    for &s in by_centre.iter().step_by(step).take(sources) {
        let mut e = vec![0.0; nodes.len()];
        e[s] = 1.0;
        let col = f.solve(&e).unwrap();
        for &t in &inner {
            if let Some(v) = sel.get(s, t) {
                out.selinv_gap = out.selinv_gap.max((v - col[t]).abs() / col[s]);
            }
            let h = nodes[s].dist(&nodes[t]);
            if t == s || h < lo || h > hi {
                continue;
            }
            let m = matern_covariance(h, hyper);
            out.max_rel_err = out.max_rel_err.max((col[t] - m).abs() / m);
            out.pairs += 1;
        }
    }
    out
}
