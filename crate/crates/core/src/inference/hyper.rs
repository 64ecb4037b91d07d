use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::laplace::{GaussianApprox, Laplace};
use crate::error::{Error, Result};

/// Simplex tolerance in internal coordinates.
pub const HYPER_TOL: f64 = 1e-4;
/// Relative weight below which grid points are dropped.
pub const GRID_DROP: f64 = 1e-3;
/// Fallback grid spacing when the Hessian is not negative definite.
pub const FALLBACK_SPACING: f64 = 0.5;

const GRID_HALF_WIDTH: i32 = 2;
const FD_STEP: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct HyperMode {
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    pub approx: GaussianApprox,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

fn clip(theta: &mut [f64], bounds: &[(f64, f64)]) -> bool {
    let mut clipped = false;
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        let c = t.clamp(lo, hi);
        clipped |= c != *t;
        *t = c;
    }
    clipped
}

/// Maximises the Laplace log posterior of the hyperparameters by
/// Nelder-Mead in internal coordinates, clipped to the model's box.
pub fn optimize_hyper(lap: &Laplace<'_>, theta_init: &[f64]) -> Result<HyperMode> {
    let model = lap.model();
    let bounds = model.bounds();
    let d = model.hyper_dim();
    let mut warnings = Vec::new();
    let mut start = theta_init.to_vec();
    if clip(&mut start, &bounds) {
        warnings.push("initial hyperparameters clipped to the search box".to_string());
    }
    if d == 0 {
        let (lp, approx) = lap.log_posterior(&start, None)?;
        return Ok(HyperMode {
            theta: start,
            log_posterior: lp,
            approx,
            evaluations: 1,
            warnings,
        });
    }

    let mut evaluations = 0;
    let mut warm: Option<Vec<f64>> = None;
    let mut best: Option<(f64, GaussianApprox)> = None;
    let mut eval = |theta: &[f64]| -> Result<f64> {
        evaluations += 1;
        let r = match lap.log_posterior(theta, warm.as_deref()) {
            Ok(r) => Ok(r),
            Err(Error::NonConvergence { .. }) => lap.log_posterior(theta, None),
            Err(e) => Err(e),
        };
        match r {
            Ok((lp, ga)) => {
                warm = Some(ga.mode.clone());
                if best.as_ref().is_none_or(|b| lp > b.0) {
                    best = Some((lp, ga));
                }
                Ok(-lp)
            }
            Err(Error::NonConvergence { .. }) | Err(Error::NotPositiveDefinite { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    // Initial simplex: unit steps of 0.5, reflected inward at the box.
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..d {
        let mut p = start.clone();
        p[i] += if p[i] + 0.5 <= bounds[i].1 { 0.5 } else { -0.5 };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect::<Result<_>>()?;

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..400 * d {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let size = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size <= HYPER_TOL {
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let towards = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clip(&mut p, &bounds);
            p
        };
        let xr = towards(alpha);
        let fr = eval(&xr)?;
        if fr < values[0] {
            let xe = towards(gamma);
            let fe = eval(&xe)?;
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
        } else {
            let (xc, fc) = if fr < values[d] {
                let xc = towards(rho);
                let fc = eval(&xc)?;
                (xc, fc)
            } else {
                let xc = towards(-rho);
                let fc = eval(&xc)?;
                (xc, fc)
            };
            if fc < values[d].min(fr) {
                simplex[d] = xc;
                values[d] = fc;
            } else {
                for i in 1..=d {
                    let p: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, x)| b + sigma * (x - b))
                        .collect();
                    values[i] = eval(&p)?;
                    simplex[i] = p;
                }
            }
        }
    }

    let (lp, approx) = best.ok_or(Error::NonConvergence {
        theta: model.hyper_natural(&start),
    })?;
    let theta = approx.theta.clone();
    for (i, (&t, &(lo, hi))) in theta.iter().zip(&bounds).enumerate() {
        if (t - lo).abs() < 1e-9 || (t - hi).abs() < 1e-9 {
            warnings.push(format!("hyperparameter {} at the search-box edge", model.hyper_names()[i]));
        }
    }
    Ok(HyperMode {
        theta,
        log_posterior: lp,
        approx,
        evaluations,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    pub weight: f64,
    pub approx: GaussianApprox,
}

#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub points: Vec<GridPoint>,
    pub warnings: Vec<String>,
    /// Whether the Hessian-based spacing was used.
    pub hessian_spacing: bool,
}

/// Central finite-difference Hessian of the log posterior.
fn fd_hessian(lap: &Laplace<'_>, mode: &HyperMode) -> Result<DMatrix<f64>> {
    let d = mode.theta.len();
    let x0 = mode.approx.mode.as_slice();
    let f = |t: &[f64]| -> Result<f64> { Ok(lap.log_posterior(t, Some(x0))?.0) };
    let h = FD_STEP;
    let f0 = mode.log_posterior;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut p = mode.theta.clone();
        p[i] += h;
        let fp = f(&p)?;
        p[i] -= 2.0 * h;
        let fm = f(&p)?;
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let s = |a: f64, b: f64| -> Result<f64> {
                let mut p = mode.theta.clone();
                p[i] += a;
                p[j] += b;
                f(&p)
            };
            let v = (s(h, h)? - s(h, -h)? - s(-h, h)? + s(-h, -h)?) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// A `5^d` grid around the mode, one posterior standard deviation per step
/// along the eigenvectors of the finite-difference Hessian.
pub fn explore_grid(lap: &Laplace<'_>, mode: &HyperMode) -> Result<HyperGrid> {
    let d = mode.theta.len();
    let mut warnings = Vec::new();
    if d == 0 {
        return Ok(HyperGrid {
            points: vec![GridPoint {
                theta: Vec::new(),
                log_posterior: mode.log_posterior,
                weight: 1.0,
                approx: mode.approx.clone(),
            }],
            warnings,
            hessian_spacing: false,
        });
    }

    let hess = match fd_hessian(lap, mode) {
        Ok(h) => Some(h),
        Err(Error::NonConvergence { .. }) | Err(Error::NotPositiveDefinite { .. }) => None,
        Err(e) => return Err(e),
    };
    // Columns of `axes` are the step vectors.
    let mut axes = DMatrix::<f64>::identity(d, d) * FALLBACK_SPACING;
    let mut hessian_spacing = false;
    match hess {
        Some(h) => {
            let eig = SymmetricEigen::new(-h);
            if eig.eigenvalues.iter().all(|&l| l > 0.0 && l.is_finite()) {
                for k in 0..d {
                    let s = 1.0 / eig.eigenvalues[k].sqrt();
                    for r in 0..d {
                        axes[(r, k)] = eig.eigenvectors[(r, k)] * s;
                    }
                }
                hessian_spacing = true;
            } else {
                warnings.push("hyperposterior Hessian not negative definite; fixed grid spacing used".to_string());
            }
        }
        None => warnings.push("hyperposterior Hessian unavailable; fixed grid spacing used".to_string()),
    }

    let bounds = lap.model().bounds();
    let side = (2 * GRID_HALF_WIDTH + 1) as usize;
    let total = side.pow(d as u32);
    let centre_index = (total - 1) / 2;
    let mut thetas: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut skipped = 0;
    for idx in 0..total {
        let mut rem = idx;
        let mut theta = mode.theta.clone();
        for k in 0..d {
            let z = (rem % side) as i32 - GRID_HALF_WIDTH;
            rem /= side;
            for r in 0..d {
                theta[r] += z as f64 * axes[(r, k)];
            }
        }
        if theta.iter().zip(&bounds).all(|(t, &(lo, hi))| *t >= lo && *t <= hi) || idx == centre_index {
            thetas.push((idx, theta));
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        warnings.push(format!("{skipped} grid points outside the search box skipped"));
    }

    let x0 = mode.approx.mode.as_slice();
    let evaluated: Vec<Option<(Vec<f64>, f64, GaussianApprox)>> = thetas
        .par_iter()
        .map(|(idx, theta)| -> Result<Option<_>> {
            if *idx == centre_index {
                return Ok(Some((mode.theta.clone(), mode.log_posterior, mode.approx.clone())));
            }
            match lap.log_posterior(theta, Some(x0)) {
                Ok((lp, ga)) => Ok(Some((theta.clone(), lp, ga))),
                Err(Error::NonConvergence { .. }) | Err(Error::NotPositiveDefinite { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let failed = evaluated.iter().filter(|e| e.is_none()).count();
    if failed > 0 {
        warnings.push(format!("{failed} grid points failed to converge and were dropped"));
    }
    let kept: Vec<(Vec<f64>, f64, GaussianApprox)> = evaluated.into_iter().flatten().collect();
    let max_lp = kept.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut points: Vec<GridPoint> = kept
        .into_iter()
        .map(|(theta, lp, approx)| GridPoint {
            theta,
            log_posterior: lp,
            weight: (lp - max_lp).exp(),
            approx,
        })
        .filter(|p| p.weight >= GRID_DROP)
        .collect();
    let total_w: f64 = points.iter().map(|p| p.weight).sum();
    points.iter_mut().for_each(|p| p.weight /= total_w);
    Ok(HyperGrid {
        points,
        warnings,
        hessian_spacing,
    })
}
