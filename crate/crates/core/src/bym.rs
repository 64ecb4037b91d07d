//! BYM2 latent structure: the scaled intrinsic CAR precision, the stacked
//! precision over `(v, u*)` and the PC priors on the marginal precision
//! `tau` and the mixing parameter `phi`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::AdjacencyGraph;
use crate::error::{Error, Result};
use crate::gmrf::{ConstraintSet, SparseSymMatrix};

/// Upper tail probability defining the PC priors on standard deviations.
pub const SIGMA_TAIL_PROB: f64 = 0.01;

/// Number of points in the tabulated `phi` prior.
pub const PHI_TABLE_POINTS: usize = 512;

#[derive(Debug, Clone)]
pub struct IcarStructure {
    q_icar: SparseSymMatrix,
    scale_factor: f64,
    q_star: SparseSymMatrix,
    constraint: ConstraintSet,
    /// Non-zero eigenvalues of the generalised inverse of `q_star`.
    gamma: Vec<f64>,
    /// Constrained marginal variances of the scaled field.
    marginal_variances: Vec<f64>,
}

impl IcarStructure {
    pub fn n(&self) -> usize {
        self.q_icar.n()
    }

    pub fn q_icar(&self) -> &SparseSymMatrix {
        &self.q_icar
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn q_star(&self) -> &SparseSymMatrix {
        &self.q_star
    }

    pub fn constraint(&self) -> &ConstraintSet {
        &self.constraint
    }

    pub fn generalized_inverse_eigenvalues(&self) -> &[f64] {
        &self.gamma
    }

    pub fn marginal_variances(&self) -> &[f64] {
        &self.marginal_variances
    }

    /// `Q* + 1 1'`. Proper, and identical to `Q*` on the sum-to-zero
    /// subspace, so conditioning on the constraint recovers the intrinsic
    /// density exactly.
    pub fn q_star_augmented(&self) -> SparseSymMatrix {
        let n = self.n();
        let mut t: Vec<(usize, usize, f64)> = self.q_star.iter().collect();
        for j in 0..n {
            for i in j..n {
                t.push((i, j, 1.0));
            }
        }
        SparseSymMatrix::from_triplets(n, &t).expect("indices in range")
    }
}

/// `Q = diag(degree) - W` plus its scaling to unit geometric-mean marginal
/// variance under the sum-to-zero constraint.
pub fn icar_precision(g: &AdjacencyGraph) -> Result<IcarStructure> {
    let n = g.len();
    if n == 0 {
        return Err(Error::domain("empty adjacency graph"));
    }
    let comps = g.components();
    if comps.len() > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    let mut t = Vec::with_capacity(n + 2 * g.edges().count());
    for i in 0..n {
        t.push((i, i, g.degree(i) as f64));
    }
    for (i, j) in g.edges() {
        t.push((j, i, -1.0));
    }
    let q_icar = SparseSymMatrix::from_triplets(n, &t)?;

    let (scale_factor, gamma, marginal_variances) = if n == 1 {
        (1.0, Vec::new(), vec![0.0])
    } else {
        let eig = SymmetricEigen::new(q_icar.to_dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        // Connected graph: exactly one zero eigenvalue, the constant vector.
        let kept = &order[1..];
        let mut var = vec![0.0; n];
        for &k in kept {
            let inv = 1.0 / eig.eigenvalues[k];
            let col = eig.eigenvectors.column(k);
            for (v, e) in var.iter_mut().zip(col.iter()) {
                *v += inv * e * e;
            }
        }
        let gm = (var.iter().map(|v| v.ln()).sum::<f64>() / n as f64).exp();
        let gamma: Vec<f64> = kept.iter().map(|&k| 1.0 / (gm * eig.eigenvalues[k])).collect();
        let var: Vec<f64> = var.iter().map(|v| v / gm).collect();
        (gm, gamma, var)
    };

    Ok(IcarStructure {
        q_star: q_icar.scaled(scale_factor),
        q_icar,
        scale_factor,
        constraint: ConstraintSet::sum_to_zero(n, 0, n),
        gamma,
        marginal_variances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BymHyper {
    pub tau: f64,
    pub phi: f64,
}

impl BymHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::domain(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(Error::domain(format!("phi must lie in [0, 1], got {}", self.phi)));
        }
        Ok(())
    }

    /// Weights of `v` and `u*` in the linear predictor.
    pub fn predictor_weights(&self) -> (f64, f64) {
        let s = 1.0 / self.tau.sqrt();
        (s * (1.0 - self.phi).sqrt(), s * self.phi.sqrt())
    }
}

/// Block precision over the stacked `(v, u*)`.
#[derive(Debug, Clone)]
pub struct Bym2Precision {
    /// `diag(I, Q* + 1 1')`, size `2N`.
    pub q: SparseSymMatrix,
    /// Sum-to-zero on the `u*` block.
    pub constraint: ConstraintSet,
    pub weight_v: f64,
    pub weight_u: f64,
}

impl Bym2Precision {
    /// Linear predictor contribution of unit `i` for stacked `(v, u*)`.
    pub fn contribution(&self, x: &[f64], i: usize) -> f64 {
        let n = self.q.n() / 2;
        self.weight_v * x[i] + self.weight_u * x[n + i]
    }
}

pub fn bym2_precision(s: &IcarStructure, h: &BymHyper) -> Result<Bym2Precision> {
    h.validate()?;
    let n = s.n();
    let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
    t.extend(s.q_star_augmented().iter().map(|(i, j, v)| (n + i, n + j, v)));
    let (weight_v, weight_u) = h.predictor_weights();
    Ok(Bym2Precision {
        q: SparseSymMatrix::from_triplets(2 * n, &t)?,
        constraint: ConstraintSet::sum_to_zero(2 * n, n, n),
        weight_v,
        weight_u,
    })
}

/// Rate of the exponential prior on `sigma = 1/sqrt(tau)` giving
/// `P(sigma > 1) = 0.01`.
pub fn pc_tau_rate() -> f64 {
    -SIGMA_TAIL_PROB.ln()
}

/// `(theta/2) tau^{-3/2} exp(-theta tau^{-1/2})` on the log scale.
pub fn pc_log_prior_tau(tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let theta = pc_tau_rate();
    Ok((theta / 2.0).ln() - 1.5 * tau.ln() - theta / tau.sqrt())
}

/// Tabulated PC prior on `phi` with median 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct PcPriorPhi {
    /// Rate on the distance scale; negative when the median condition
    /// needs mass pushed towards `phi = 1`.
    rate: f64,
    phi: Vec<f64>,
    log_density: Vec<f64>,
}

/// `sqrt(2 KLD(phi))` from the generalised-inverse eigenvalues.
pub fn phi_distance(phi: f64, gamma: &[f64]) -> f64 {
    let kld: f64 = gamma
        .iter()
        .map(|&g| {
            let a = phi * (g - 1.0);
            // a - ln(1 + a), accurate for small a
            a - a.ln_1p()
        })
        .sum::<f64>()
        * 0.5;
    (2.0 * kld.max(0.0)).sqrt()
}

fn phi_distance_derivative(phi: f64, gamma: &[f64]) -> f64 {
    if phi <= 0.0 {
        return (0.5 * gamma.iter().map(|g| (g - 1.0).powi(2)).sum::<f64>()).sqrt();
    }
    let d = phi_distance(phi, gamma);
    let dkld = 0.5 * gamma.iter().map(|&g| (g - 1.0).powi(2) * phi / (1.0 + phi * (g - 1.0))).sum::<f64>();
    dkld / d
}

/// `P(d <= x)` for a truncated exponential on `[0, d1]` with the given rate.
fn truncated_exp_cdf(x: f64, d1: f64, rate: f64) -> f64 {
    if rate.abs() * d1 < 1e-12 {
        return x / d1;
    }
    (-(-rate * x).exp_m1()) / (-(-rate * d1).exp_m1())
}

impl PcPriorPhi {
    pub fn new(s: &IcarStructure) -> Result<Self> {
        let gamma = s.generalized_inverse_eigenvalues();
        let d_half = phi_distance(0.5, gamma);
        let d1 = phi_distance(1.0, gamma);
        if !(d1 > 0.0) {
            return Err(Error::domain("phi prior is undefined for a single-unit graph"));
        }
        // P(phi <= 0.5) is increasing in the rate.
        let target = |rate: f64| truncated_exp_cdf(d_half, d1, rate) - 0.5;
        let (mut lo, mut hi) = (-1.0, 1.0);
        while target(lo) > 0.0 {
            lo *= 2.0;
        }
        while target(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if target(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rate = 0.5 * (lo + hi);
        let norm = if rate.abs() * d1 < 1e-12 {
            -d1.ln()
        } else {
            (rate / -(-rate * d1).exp_m1()).abs().ln()
        };
        let phi: Vec<f64> = (0..PHI_TABLE_POINTS)
            .map(|i| i as f64 / (PHI_TABLE_POINTS - 1) as f64)
            .collect();
        let log_density: Vec<f64> = phi
            .iter()
            .map(|&p| norm - rate * phi_distance(p, gamma) + phi_distance_derivative(p, gamma).ln())
            .collect();
        let mut prior = PcPriorPhi { rate, phi, log_density };
        // Normalise the interpolated table to unit mass.
        let mass = prior.cdf(1.0);
        prior.log_density.iter_mut().for_each(|v| *v -= mass.ln());
        Ok(prior)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn log_density(&self, phi: f64) -> Result<f64> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::domain(format!("phi must lie in (0, 1), got {phi}")));
        }
        let h = 1.0 / (PHI_TABLE_POINTS - 1) as f64;
        let i = ((phi / h).floor() as usize).min(PHI_TABLE_POINTS - 2);
        let w = (phi - self.phi[i]) / h;
        Ok((1.0 - w) * self.log_density[i] + w * self.log_density[i + 1])
    }

    /// Trapezoidal CDF of the tabulated density.
    pub fn cdf(&self, phi: f64) -> f64 {
        let phi = phi.clamp(0.0, 1.0);
        let h = 1.0 / (PHI_TABLE_POINTS - 1) as f64;
        let dens: Vec<f64> = self.log_density.iter().map(|v| v.exp()).collect();
        let mut acc = 0.0;
        for i in 0..PHI_TABLE_POINTS - 1 {
            let (a, b) = (self.phi[i], self.phi[i + 1]);
            if phi <= a {
                break;
            }
            let top = phi.min(b);
            let frac = (top - a) / h;
            let end = dens[i] + frac * (dens[i + 1] - dens[i]);
            acc += 0.5 * (dens[i] + end) * (top - a);
        }
        acc
    }
}

/// Prior on the mixing parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiPrior {
    Pc(PcPriorPhi),
    Uniform,
}

impl PhiPrior {
    pub fn log_density(&self, phi: f64) -> Result<f64> {
        match self {
            PhiPrior::Pc(p) => p.log_density(phi),
            PhiPrior::Uniform if phi > 0.0 && phi < 1.0 => Ok(0.0),
            PhiPrior::Uniform => Err(Error::domain(format!("phi must lie in (0, 1), got {phi}"))),
        }
    }
}

/// Which prior to use on `phi`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiPriorKind {
    #[default]
    Pc,
    Uniform,
}

impl PhiPriorKind {
    /// Builds the prior; a single-unit graph carries no structured effect
    /// and falls back to uniform.
    pub fn build(self, s: &IcarStructure) -> Result<PhiPrior> {
        match self {
            PhiPriorKind::Pc if s.n() > 1 => Ok(PhiPrior::Pc(PcPriorPhi::new(s)?)),
            _ => Ok(PhiPrior::Uniform),
        }
    }
}

/// Dense constrained marginal variances by brute-force pseudo-inverse, for
/// checks on small graphs.
pub fn pseudo_inverse_variances(q: &SparseSymMatrix) -> Vec<f64> {
    let d: DMatrix<f64> = q.to_dense();
    let p = d.pseudo_inverse(1e-10).expect("eps is non-negative");
    p.diagonal().iter().copied().collect()
}
