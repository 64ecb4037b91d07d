//! Latent Gaussian model engine: Gaussian approximation of the latent field
//! at its conditional mode, Laplace approximation of the hyperparameter
//! marginal likelihood, a Nelder-Mead mode search with grid integration over
//! the hyperparameters, and mixture marginals for linear predictors.

mod hyper;
mod laplace;
mod likelihood;
mod marginals;
mod models;

pub use hyper::{explore_grid, optimize_hyper, GridPoint, HyperGrid, HyperMode};
pub use laplace::{GaussianApprox, Laplace, LatentModel, LatentPrior, NewtonOptions, INTERCEPT_PRECISION};
pub use likelihood::{GaussianObs, Likelihood, PoissonObs};
pub use marginals::{
    mixture_cdf, mixture_quantile, mixture_tail, predictor_marginals, Component, FitDiagnostics, FitResult,
    HyperSummary, MarginalOptions, SampleMoments,
};
pub use models::{fit_bym, fit_lgcp, fit_model, BymModel, FitOptions, LgcpModel};
