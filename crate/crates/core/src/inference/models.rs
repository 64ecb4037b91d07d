use std::time::Instant;

use super::hyper::{explore_grid, optimize_hyper};
use super::laplace::{Laplace, LatentModel, LatentPrior, NewtonOptions, INTERCEPT_PRECISION};
use super::likelihood::{Likelihood, PoissonObs};
use super::marginals::{predictor_marginals, FitResult, MarginalOptions};
use crate::bym::{pc_log_prior_tau, BymHyper, IcarStructure, PhiPrior, PhiPriorKind};
use crate::domain::Point;
use crate::error::{Error, Result};
use crate::gmrf::{ConstraintSet, SparseMatrix, SparseSymMatrix};
use crate::simulate::AggregatedCounts;
use crate::spde::{pc_log_prior_range_sigma, projector, spde_precision, FemMatrices, MaternHyper, Mesh};

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Latent `(beta0, v, u*)` with predictor
/// `beta0 + sigma (sqrt(1 - phi) v + sqrt(phi) u*)`.
/// Hyperparameters: `(ln sigma, logit phi)` with `sigma = 1/sqrt(tau)`.
pub struct BymModel {
    n: usize,
    q: SparseSymMatrix,
    constraint: ConstraintSet,
    phi_prior: PhiPrior,
}

impl BymModel {
    pub fn new(icar: &IcarStructure, phi_prior: PhiPriorKind) -> Result<Self> {
        let n = icar.n();
        let mut t = vec![(0, 0, INTERCEPT_PRECISION)];
        t.extend((0..n).map(|i| (1 + i, 1 + i, 1.0)));
        t.extend(icar.q_star_augmented().iter().map(|(i, j, v)| (1 + n + i, 1 + n + j, v)));
        Ok(BymModel {
            n,
            q: SparseSymMatrix::from_triplets(2 * n + 1, &t)?,
            constraint: ConstraintSet::sum_to_zero(2 * n + 1, 1 + n, n),
            phi_prior: phi_prior.build(icar)?,
        })
    }

    pub fn hyper(theta: &[f64]) -> BymHyper {
        BymHyper {
            tau: (-2.0 * theta[0]).exp(),
            phi: logistic(theta[1]),
        }
    }
}

impl LatentModel for BymModel {
    fn latent_dim(&self) -> usize {
        2 * self.n + 1
    }

    fn hyper_dim(&self) -> usize {
        2
    }

    fn hyper_names(&self) -> Vec<String> {
        vec!["tau".into(), "phi".into()]
    }

    fn hyper_natural(&self, theta: &[f64]) -> Vec<f64> {
        let h = Self::hyper(theta);
        vec![h.tau, h.phi]
    }

    fn prior(&self, _theta: &[f64]) -> Result<LatentPrior> {
        Ok(LatentPrior {
            q: self.q.clone(),
            constraint: self.constraint.clone(),
        })
    }

    fn design(&self, theta: &[f64]) -> Result<SparseMatrix> {
        let (wv, wu) = Self::hyper(theta).predictor_weights();
        let n = self.n;
        SparseMatrix::from_rows(
            2 * n + 1,
            (0..n).map(|i| vec![(0, 1.0), (1 + i, wv), (1 + n + i, wu)]).collect(),
        )
    }

    fn targets(&self, theta: &[f64]) -> Result<SparseMatrix> {
        self.design(theta)
    }

    fn log_hyper_prior(&self, theta: &[f64]) -> f64 {
        let h = Self::hyper(theta);
        let lt = pc_log_prior_tau(h.tau).unwrap_or(f64::NEG_INFINITY) + (2.0 * h.tau).ln();
        let lp = self.phi_prior.log_density(h.phi).unwrap_or(f64::NEG_INFINITY) + h.phi.ln() + (1.0 - h.phi).ln();
        lt + lp
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-5.0, 3.0), (-8.0, 8.0)]
    }

    fn initial_hyper(&self) -> Vec<f64> {
        vec![-1.0, 0.0]
    }

    fn intercept_index(&self) -> Option<usize> {
        Some(0)
    }
}

/// Latent `(beta0, z)` with `z` the SPDE field at the mesh nodes and
/// predictor `beta0 + A z`. Hyperparameters: `(ln rho, ln sigma)`.
pub struct LgcpModel<'a> {
    fem: &'a FemMatrices,
    targets: SparseMatrix,
    bounds: Vec<(f64, f64)>,
    initial: Vec<f64>,
}

impl<'a> LgcpModel<'a> {
    /// `points` are the target locations (evaluation-cell centroids);
    /// `spacing` and `diameter` set the range search box.
    pub fn new(mesh: &Mesh, fem: &'a FemMatrices, points: &[Point], spacing: f64, diameter: f64) -> Result<Self> {
        let a = projector(mesh, points)?;
        let m = mesh.len();
        let rows = (0..a.nrows())
            .map(|g| {
                let mut r = vec![(0, 1.0)];
                r.extend(a.row(g).map(|(j, v)| (1 + j, v)));
                r
            })
            .collect();
        let targets = SparseMatrix::from_rows(m + 1, rows)?;
        let lo = spacing.ln();
        let hi = (10.0 * diameter).ln();
        if !(hi > lo) {
            return Err(Error::config("mesh spacing too large for the domain"));
        }
        let init_rho = (0.25 * diameter).min(crate::spde::RANGE_PRIOR_MEDIAN).ln().clamp(lo, hi);
        Ok(LgcpModel {
            fem,
            targets,
            bounds: vec![(lo, hi), (-5.0, 3.0)],
            initial: vec![init_rho, 0.5f64.ln()],
        })
    }

    pub fn hyper(theta: &[f64]) -> MaternHyper {
        MaternHyper {
            rho: theta[0].exp(),
            sigma: theta[1].exp(),
        }
    }
}

impl LatentModel for LgcpModel<'_> {
    fn latent_dim(&self) -> usize {
        self.fem.n() + 1
    }

    fn hyper_dim(&self) -> usize {
        2
    }

    fn hyper_names(&self) -> Vec<String> {
        vec!["rho".into(), "sigma".into()]
    }

    fn hyper_natural(&self, theta: &[f64]) -> Vec<f64> {
        let h = Self::hyper(theta);
        vec![h.rho, h.sigma]
    }

    fn prior(&self, theta: &[f64]) -> Result<LatentPrior> {
        let qs = spde_precision(self.fem, &Self::hyper(theta))?;
        let mut t = vec![(0, 0, INTERCEPT_PRECISION)];
        t.extend(qs.iter().map(|(i, j, v)| (i + 1, j + 1, v)));
        Ok(LatentPrior {
            q: SparseSymMatrix::from_triplets(self.fem.n() + 1, &t)?,
            constraint: ConstraintSet::empty(self.fem.n() + 1),
        })
    }

    fn design(&self, _theta: &[f64]) -> Result<SparseMatrix> {
        Ok(self.targets.clone())
    }

    fn targets(&self, _theta: &[f64]) -> Result<SparseMatrix> {
        Ok(self.targets.clone())
    }

    fn log_hyper_prior(&self, theta: &[f64]) -> f64 {
        pc_log_prior_range_sigma(&Self::hyper(theta)).unwrap_or(f64::NEG_INFINITY) + theta[0] + theta[1]
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }

    fn initial_hyper(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn intercept_index(&self) -> Option<usize> {
        Some(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub marginals: MarginalOptions,
    pub newton: NewtonOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            marginals: MarginalOptions::default(),
            newton: NewtonOptions::default(),
        }
    }
}

/// Hyper mode search, grid exploration and target marginals.
pub fn fit_model(model: &dyn LatentModel, lik: &dyn Likelihood, opts: &FitOptions) -> Result<FitResult> {
    let start = Instant::now();
    let lap = Laplace::new(model, lik, opts.newton)?;
    let mode = optimize_hyper(&lap, &model.initial_hyper())?;
    let grid = explore_grid(&lap, &mode)?;
    let mut out = predictor_marginals(model, &grid, &opts.marginals)?;
    out.hyper.mode = model.hyper_natural(&mode.theta);
    let d = &mut out.diagnostics;
    d.newton_iterations = mode.approx.iterations;
    d.hyper_evaluations = mode.evaluations;
    d.log_posterior_mode = mode.log_posterior;
    let mut warnings = mode.warnings;
    warnings.append(&mut d.warnings);
    d.warnings = warnings;
    d.runtime_secs = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    Ok(out)
}

/// BYM2 fit on unit-level counts with populations as offsets; targets are
/// the units.
pub fn fit_bym(counts: &AggregatedCounts, icar: &IcarStructure, phi_prior: PhiPriorKind, opts: &FitOptions) -> Result<FitResult> {
    if counts.cases.len() != icar.n() {
        return Err(Error::DimensionMismatch {
            expected: icar.n(),
            found: counts.cases.len(),
        });
    }
    let model = BymModel::new(icar, phi_prior)?;
    let lik = PoissonObs::new(counts.cases.clone(), counts.population.iter().map(|&p| p as f64).collect())?;
    fit_model(&model, &lik, opts)
}

/// SPDE log-Gaussian Cox process fit on cell counts with cell populations
/// as offsets; targets are the cells at `centroids`.
pub fn fit_lgcp(
    counts: &AggregatedCounts,
    centroids: &[Point],
    mesh: &Mesh,
    fem: &FemMatrices,
    spacing: f64,
    diameter: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    if counts.cases.len() != centroids.len() {
        return Err(Error::DimensionMismatch {
            expected: centroids.len(),
            found: counts.cases.len(),
        });
    }
    let model = LgcpModel::new(mesh, fem, centroids, spacing, diameter)?;
    let lik = PoissonObs::new(counts.cases.clone(), counts.population.iter().map(|&p| p as f64).collect())?;
    fit_model(&model, &lik, opts)
}
