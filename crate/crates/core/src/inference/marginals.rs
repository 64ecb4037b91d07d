use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hyper::HyperGrid;
use super::laplace::LatentModel;
use crate::error::{Error, Result};
use crate::gmrf::{SelectedInverse, SparseMatrix};
use crate::special::{norm_cdf, norm_sf};

/// One Gaussian component of a target's posterior on the predictor scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

fn tail(c: &Component, x: f64) -> f64 {
    if c.sd > 0.0 {
        norm_sf((x - c.mean) / c.sd)
    } else if c.mean > x {
        1.0
    } else {
        0.0
    }
}

/// `P(eta > x)` under a Gaussian mixture.
pub fn mixture_tail(comps: &[Component], x: f64) -> f64 {
    comps.iter().map(|c| c.weight * tail(c, x)).sum::<f64>().clamp(0.0, 1.0)
}

pub fn mixture_cdf(comps: &[Component], x: f64) -> f64 {
    comps
        .iter()
        .map(|c| {
            c.weight
                * if c.sd > 0.0 {
                    norm_cdf((x - c.mean) / c.sd)
                } else if x >= c.mean {
                    1.0
                } else {
                    0.0
                }
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Quantile of a Gaussian mixture by bisection.
pub fn mixture_quantile(comps: &[Component], p: f64) -> f64 {
    let lo0 = comps.iter().map(|c| c.mean - 12.0 * c.sd).fold(f64::INFINITY, f64::min);
    let hi0 = comps.iter().map(|c| c.mean + 12.0 * c.sd).fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo0, hi0);
    if hi - lo <= 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mixture_cdf(comps, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Sample-based first and second moments per target on both scales.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub count: usize,
    pub eta_mean: Vec<f64>,
    pub eta_sq: Vec<f64>,
    pub risk_mean: Vec<f64>,
    pub risk_sq: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperSummary {
    pub names: Vec<String>,
    /// Mode on the natural scale.
    pub mode: Vec<f64>,
    /// Grid-weighted posterior mean on the natural scale.
    pub mean: Vec<f64>,
    /// Grid points on the natural scale with their log posterior and weight.
    pub grid: Vec<(Vec<f64>, f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub newton_iterations: usize,
    pub hyper_evaluations: usize,
    pub grid_size: usize,
    pub runtime_secs: f64,
    pub log_posterior_mode: f64,
    pub warnings: Vec<String>,
}

/// Posterior summaries per target.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub thresholds: Vec<f64>,
    pub mean_eta: Vec<f64>,
    pub sd_eta: Vec<f64>,
    pub mean_risk: Vec<f64>,
    /// `exceedance[t][g] = P(lambda_g > thresholds[t])`
    pub exceedance: Vec<Vec<f64>>,
    pub lo95_risk: Vec<f64>,
    pub hi95_risk: Vec<f64>,
    pub moments: Option<SampleMoments>,
    /// Predictor draws, `samples[s][g]`.
    pub samples: Option<Vec<Vec<f64>>>,
    pub hyper: HyperSummary,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn len(&self) -> usize {
        self.mean_eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_eta.is_empty()
    }

    /// Re-indexes targets: entry `i` of the result is target `map[i]`.
    pub fn expand(&self, map: &[usize]) -> FitResult {
        let pick = |v: &Vec<f64>| map.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        FitResult {
            thresholds: self.thresholds.clone(),
            mean_eta: pick(&self.mean_eta),
            sd_eta: pick(&self.sd_eta),
            mean_risk: pick(&self.mean_risk),
            exceedance: self.exceedance.iter().map(pick).collect(),
            lo95_risk: pick(&self.lo95_risk),
            hi95_risk: pick(&self.hi95_risk),
            moments: self.moments.as_ref().map(|m| SampleMoments {
                count: m.count,
                eta_mean: pick(&m.eta_mean),
                eta_sq: pick(&m.eta_sq),
                risk_mean: pick(&m.risk_mean),
                risk_sq: pick(&m.risk_sq),
            }),
            samples: self.samples.as_ref().map(|s| s.iter().map(pick).collect()),
            hyper: self.hyper.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// `target_id,mean_eta,sd_eta,mean_risk,exc_p@t...,lo95_risk,hi95_risk`
    /// followed by the sample moments when present.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let mut header = String::from("target_id,mean_eta,sd_eta,mean_risk");
        for t in &self.thresholds {
            header.push_str(&format!(",exc_p@{t}"));
        }
        header.push_str(",lo95_risk,hi95_risk");
        if self.moments.is_some() {
            header.push_str(",m1_eta,m2_eta,m1_risk,m2_risk");
        }
        writeln!(w, "{header}").map_err(io)?;
        for g in 0..self.len() {
            let mut line = format!("{g},{},{},{}", self.mean_eta[g], self.sd_eta[g], self.mean_risk[g]);
            for e in &self.exceedance {
                line.push_str(&format!(",{}", e[g]));
            }
            line.push_str(&format!(",{},{}", self.lo95_risk[g], self.hi95_risk[g]));
            if let Some(m) = &self.moments {
                line.push_str(&format!(",{},{},{},{}", m.eta_mean[g], m.eta_sq[g], m.risk_mean[g], m.risk_sq[g]));
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a file written by [`FitResult::write_csv`]; hyperparameters,
    /// diagnostics and samples are not part of the file.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<FitResult> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        let thresholds: Vec<f64> = headers
            .iter()
            .filter_map(|h| h.strip_prefix("exc_p@"))
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                message: format!("bad threshold header: {e}"),
            })?;
        let nt = thresholds.len();
        let has_moments = headers.iter().any(|h| h == "m1_eta");
        let expected = 6 + nt + if has_moments { 4 } else { 0 };
        if headers.len() != expected || &headers[0] != "target_id" {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                message: format!("unexpected header with {} columns", headers.len()),
            });
        }
        let mut out = FitResult {
            thresholds,
            exceedance: vec![Vec::new(); nt],
            ..Default::default()
        };
        let mut moments = SampleMoments::default();
        for (row, rec) in rdr.records().enumerate() {
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                row: row + 1,
                message,
            };
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(e.to_string()))?;
            if v[0] as usize != row {
                return Err(parse_err(format!("target ids must be consecutive, got {}", v[0])));
            }
            out.mean_eta.push(v[1]);
            out.sd_eta.push(v[2]);
            out.mean_risk.push(v[3]);
            for t in 0..nt {
                out.exceedance[t].push(v[4 + t]);
            }
            out.lo95_risk.push(v[4 + nt]);
            out.hi95_risk.push(v[5 + nt]);
            if has_moments {
                moments.eta_mean.push(v[6 + nt]);
                moments.eta_sq.push(v[7 + nt]);
                moments.risk_mean.push(v[8 + nt]);
                moments.risk_sq.push(v[9 + nt]);
            }
        }
        if has_moments {
            out.moments = Some(moments);
        }
        Ok(out)
    }

    /// Hyperparameter mode and grid as CSV.
    pub fn write_hyper_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let h = &self.hyper;
        writeln!(w, "point,{},log_posterior,weight", h.names.join(",")).map_err(io)?;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let sep = if h.names.is_empty() { "" } else { "," };
        writeln!(w, "mode{sep}{},{},", join(&h.mode), self.diagnostics.log_posterior_mode).map_err(io)?;
        writeln!(w, "mean{sep}{},,", join(&h.mean)).map_err(io)?;
        for (k, (theta, lp, wt)) in h.grid.iter().enumerate() {
            writeln!(w, "{k}{sep}{},{lp},{wt}", join(theta)).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalOptions {
    /// Exceedance thresholds on the risk scale.
    pub thresholds: Vec<f64>,
    pub n_samples: usize,
    pub keep_samples: bool,
    pub seed: u64,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        MarginalOptions {
            thresholds: Vec::new(),
            n_samples: 0,
            keep_samples: false,
            seed: 0,
        }
    }
}

fn target_variance(
    sinv: &SelectedInverse,
    approx: &super::laplace::GaussianApprox,
    a: &[(usize, f64)],
) -> Result<f64> {
    let mut var = 0.0;
    let mut missing = false;
    'outer: for &(i, wi) in a {
        for &(j, wj) in a {
            match sinv.get(i, j) {
                Some(s) => var += wi * wj * s,
                None => {
                    missing = true;
                    break 'outer;
                }
            }
        }
    }
    if missing {
        let mut e = vec![0.0; approx.factor.n()];
        for &(i, w) in a {
            e[i] += w;
        }
        let s = approx.factor.solve(&e)?;
        var = a.iter().map(|&(i, w)| w * s[i]).sum();
    }
    Ok((var - approx.kriging.variance_reduction(a)).max(0.0))
}

/// Mixture-of-Gaussians marginals of the targets over the hyper grid,
/// exceedance probabilities and optional posterior draws.
pub fn predictor_marginals(model: &dyn LatentModel, grid: &HyperGrid, opts: &MarginalOptions) -> Result<FitResult> {
    if let Some(t) = opts.thresholds.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::config(format!("exceedance thresholds must be positive, got {t}")));
    }
    if grid.points.is_empty() {
        return Err(Error::domain("empty hyperparameter grid"));
    }
    let targets: Vec<SparseMatrix> = grid
        .points
        .iter()
        .map(|p| model.targets(&p.theta))
        .collect::<Result<_>>()?;
    let m = targets[0].nrows();

    // comps[g][k]
    let mut comps: Vec<Vec<Component>> = vec![Vec::with_capacity(grid.points.len()); m];
    for (p, t) in grid.points.iter().zip(&targets) {
        let sinv = p.approx.factor.selected_inverse();
        for (g, comp) in comps.iter_mut().enumerate() {
            let a = t.row_vec(g);
            let mean: f64 = a.iter().map(|&(i, w)| w * p.approx.mode[i]).sum();
            let var = target_variance(&sinv, &p.approx, &a)?;
            comp.push(Component {
                weight: p.weight,
                mean,
                sd: var.sqrt(),
            });
        }
    }

    let log_t: Vec<f64> = opts.thresholds.iter().map(|t| t.ln()).collect();
    let mut out = FitResult {
        thresholds: opts.thresholds.clone(),
        exceedance: vec![Vec::with_capacity(m); log_t.len()],
        ..Default::default()
    };
    for c in &comps {
        let mean: f64 = c.iter().map(|k| k.weight * k.mean).sum();
        let second: f64 = c.iter().map(|k| k.weight * (k.sd * k.sd + k.mean * k.mean)).sum();
        out.mean_eta.push(mean);
        out.sd_eta.push((second - mean * mean).max(0.0).sqrt());
        out.mean_risk
            .push(c.iter().map(|k| k.weight * (k.mean + 0.5 * k.sd * k.sd).exp()).sum());
        for (e, &lt) in out.exceedance.iter_mut().zip(&log_t) {
            e.push(mixture_tail(c, lt));
        }
        out.lo95_risk.push(mixture_quantile(c, 0.025).exp());
        out.hi95_risk.push(mixture_quantile(c, 0.975).exp());
    }

    if opts.n_samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut mom = SampleMoments {
            count: opts.n_samples,
            eta_mean: vec![0.0; m],
            eta_sq: vec![0.0; m],
            risk_mean: vec![0.0; m],
            risk_sq: vec![0.0; m],
        };
        let mut kept = Vec::new();
        for _ in 0..opts.n_samples {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = grid.points.len() - 1;
            for (i, p) in grid.points.iter().enumerate() {
                acc += p.weight;
                if u < acc {
                    k = i;
                    break;
                }
            }
            let p = &grid.points[k];
            let z = p.approx.factor.standard_normal(&mut rng);
            let mut x = p.approx.factor.transform_standard_normal(&p.approx.mode, z);
            let e = p.approx.constraint.apply(&p.approx.mode);
            p.approx.kriging.correct(&p.approx.constraint, &mut x, &e);
            let eta = targets[k].mul_vec(&x);
            for (g, &v) in eta.iter().enumerate() {
                let r = v.exp();
                mom.eta_mean[g] += v;
                mom.eta_sq[g] += v * v;
                mom.risk_mean[g] += r;
                mom.risk_sq[g] += r * r;
            }
            if opts.keep_samples {
                kept.push(eta);
            }
        }
        let inv = 1.0 / opts.n_samples as f64;
        for v in [&mut mom.eta_mean, &mut mom.eta_sq, &mut mom.risk_mean, &mut mom.risk_sq] {
            v.iter_mut().for_each(|x| *x *= inv);
        }
        out.moments = Some(mom);
        if opts.keep_samples {
            out.samples = Some(kept);
        }
    }

    let names = model.hyper_names();
    let natural: Vec<Vec<f64>> = grid.points.iter().map(|p| model.hyper_natural(&p.theta)).collect();
    let mean: Vec<f64> = (0..names.len())
        .map(|j| grid.points.iter().zip(&natural).map(|(p, v)| p.weight * v[j]).sum())
        .collect();
    out.hyper = HyperSummary {
        names,
        mode: Vec::new(),
        mean,
        grid: grid
            .points
            .iter()
            .zip(natural)
            .map(|(p, v)| (v, p.log_posterior, p.weight))
            .collect(),
    };
    out.diagnostics.grid_size = grid.points.len();
    out.diagnostics.warnings = grid.warnings.clone();
    Ok(out)
}
