//! Performance measures of fitted risk maps against the true surface:
//! integrated squared error, interval coverage, exceedance ROC curves and
//! replicate summaries.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{BWeight, EvalGrid};
use crate::error::{Error, Result};

/// Minimum number of posterior draws per cell for the sample RMISE.
pub const MIN_RMISE_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RScale {
    /// `R = ln lambda`
    Log,
    /// `R = lambda`
    Risk,
}

impl RScale {
    fn apply(self, lambda: f64) -> f64 {
        match self {
            RScale::Log => lambda.ln(),
            RScale::Risk => lambda,
        }
    }
}

/// The four RMISE variants in report order.
pub const RMISE_VARIANTS: [(BWeight, RScale); 4] = [
    (BWeight::Unit, RScale::Log),
    (BWeight::Unit, RScale::Risk),
    (BWeight::PopulationDensity, RScale::Log),
    (BWeight::PopulationDensity, RScale::Risk),
];

pub fn variant_name(b: BWeight, s: RScale) -> &'static str {
    match (b, s) {
        (BWeight::Unit, RScale::Log) => "rmise_unit_log",
        (BWeight::Unit, RScale::Risk) => "rmise_unit_risk",
        (BWeight::PopulationDensity, RScale::Log) => "rmise_pop_log",
        (BWeight::PopulationDensity, RScale::Risk) => "rmise_pop_risk",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub q_grid: Vec<f64>,
    /// Rate defining the true high-risk cells and the exceedance reference.
    pub reference_rate: f64,
}

impl MetricsConfig {
    pub fn new(reference_rate: f64) -> Self {
        MetricsConfig {
            q_grid: default_q_grid(),
            reference_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reference_rate > 0.0) {
            return Err(Error::config("metrics.reference_rate must be positive"));
        }
        if self.q_grid.is_empty() {
            return Err(Error::config("metrics.q_grid is empty"));
        }
        for (i, q) in self.q_grid.iter().enumerate() {
            if !(0.0..1.0).contains(q) || (i > 0 && *q <= self.q_grid[i - 1]) {
                return Err(Error::config("metrics.q_grid must be strictly increasing in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// `0, 0.05, ..., 0.95`
pub fn default_q_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 / 20.0).collect()
}

/// Per-cell weights `b_g |D_g|` with areas in square kilometres; the
/// population-density weight reduces to the cell population.
pub fn cell_weights(grid: &EvalGrid, b: BWeight) -> Vec<f64> {
    const KM2: f64 = 1e-6;
    (0..grid.len())
        .map(|g| match b {
            BWeight::Unit => grid.area(g) * KM2,
            // persons per km2 times km2
            BWeight::PopulationDensity => grid.b_weight(g, b) * grid.area(g),
        })
        .collect()
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `sqrt(mean_s sum_g w_g (R^s_g - R_g)^2)` from draws of the predictor
/// `eta = ln lambda`; `truth` and `weights` are per cell, `samples[s][g]`.
pub fn rmise(truth: &[f64], samples: &[Vec<f64>], weights: &[f64], scale: RScale) -> Result<f64> {
    check_len(truth.len(), weights.len())?;
    if samples.len() < MIN_RMISE_SAMPLES {
        return Err(Error::config(format!(
            "RMISE needs at least {MIN_RMISE_SAMPLES} posterior draws, got {}",
            samples.len()
        )));
    }
    let r: Vec<f64> = truth.iter().map(|&l| scale.apply(l)).collect();
    let mut total = 0.0;
    for s in samples {
        check_len(truth.len(), s.len())?;
        total += s
            .iter()
            .zip(&r)
            .zip(weights)
            .map(|((&eta, &rg), &w)| {
                let est = match scale {
                    RScale::Log => eta,
                    RScale::Risk => eta.exp(),
                };
                w * (est - rg) * (est - rg)
            })
            .sum::<f64>();
    }
    Ok((total / samples.len() as f64).sqrt())
}

/// The same quantity from per-cell draw moments `E[R^]` and `E[R^2]` on
/// the chosen scale; identical to [`rmise`] on the draws that produced them.
pub fn rmise_from_moments(truth: &[f64], m1: &[f64], m2: &[f64], weights: &[f64], scale: RScale) -> Result<f64> {
    check_len(truth.len(), m1.len())?;
    check_len(truth.len(), m2.len())?;
    check_len(truth.len(), weights.len())?;
    let total: f64 = (0..truth.len())
        .map(|g| {
            let r = scale.apply(truth[g]);
            weights[g] * (m2[g] - 2.0 * r * m1[g] + r * r).max(0.0)
        })
        .sum();
    Ok(total.max(0.0).sqrt())
}

/// Central credible interval per cell of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervals {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    /// Share of replicates covering each cell.
    pub per_cell: Vec<f64>,
    /// Share of cells covered in each replicate.
    pub per_replicate: Vec<f64>,
}

pub fn coverage(truth: &[f64], intervals: &[Intervals]) -> Result<Coverage> {
    let g = truth.len();
    let mut cell_hits = vec![0u64; g];
    let mut per_replicate = Vec::with_capacity(intervals.len());
    for iv in intervals {
        check_len(g, iv.lo.len())?;
        check_len(g, iv.hi.len())?;
        let mut hits = 0u64;
        for k in 0..g {
            if iv.lo[k] <= truth[k] && truth[k] <= iv.hi[k] {
                hits += 1;
                cell_hits[k] += 1;
            }
        }
        per_replicate.push(if g == 0 { 0.0 } else { hits as f64 / g as f64 });
    }
    let j = intervals.len();
    let per_cell = cell_hits
        .iter()
        .map(|&h| if j == 0 { 0.0 } else { h as f64 / j as f64 })
        .collect();
    Ok(Coverage {
        per_cell,
        per_replicate,
    })
}

/// Cells whose true risk exceeds `rate`.
pub fn high_risk_set(truth: &[f64], rate: f64) -> Vec<bool> {
    truth.iter().map(|&l| l > rate).collect()
}

/// Cut points for the predicted high-risk sets `{g : score_g > q}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RocThresholds<'a> {
    Grid(&'a [f64]),
    /// Every distinct score.
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub cuts: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub specificity: Vec<f64>,
    pub auc: f64,
}

/// Sensitivity `|A n B_q| / |A|` and specificity `|A' n B_q'| / |A'|` with
/// `|.|` the sum of `weights`, closed with `(0,0)` and `(1,1)`; AUC by the
/// trapezoid rule over `(1 - specificity, sensitivity)`.
pub fn roc_curve(truth: &[bool], scores: &[f64], weights: &[f64], cuts: RocThresholds<'_>) -> Result<RocCurve> {
    check_len(truth.len(), scores.len())?;
    check_len(truth.len(), weights.len())?;
    let pos: f64 = truth.iter().zip(weights).filter(|(t, _)| **t).map(|(_, w)| w).sum();
    let neg: f64 = truth.iter().zip(weights).filter(|(t, _)| !**t).map(|(_, w)| w).sum();
    if !(pos > 0.0) {
        return Err(Error::config("true high-risk set is empty"));
    }
    if !(neg > 0.0) {
        return Err(Error::config("true high-risk set covers every cell"));
    }
    let cuts: Vec<f64> = match cuts {
        RocThresholds::Grid(q) => q.to_vec(),
        RocThresholds::Empirical => {
            let mut s = scores.to_vec();
            s.sort_by(f64::total_cmp);
            s.dedup();
            s
        }
    };
    let mut sensitivity = Vec::with_capacity(cuts.len());
    let mut specificity = Vec::with_capacity(cuts.len());
    for &q in &cuts {
        let (mut tp, mut tn) = (0.0, 0.0);
        for ((&t, &s), &w) in truth.iter().zip(scores).zip(weights) {
            match (t, s > q) {
                (true, true) => tp += w,
                (false, false) => tn += w,
                _ => {}
            }
        }
        sensitivity.push(tp / pos);
        specificity.push(tn / neg);
    }
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 1.0)];
    pts.extend(specificity.iter().zip(&sensitivity).map(|(sp, se)| (1.0 - sp, *se)));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let auc = pts.windows(2).map(|w| (w[1].0 - w[0].0) * 0.5 * (w[1].1 + w[0].1)).sum();
    Ok(RocCurve {
        cuts,
        sensitivity,
        specificity,
        auc,
    })
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub n: usize,
}

/// Median and 2.5/97.5 percentiles of the finite values.
pub fn scenario_summary(values: &[f64]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Summary {
        median: percentile(&v, 0.5),
        p2_5: percentile(&v, 0.025),
        p97_5: percentile(&v, 0.975),
        n: v.len(),
    })
}

/// Metrics of one fitted replicate; `None` where undefined (flat
/// scenarios have no ROC) or missing (fit absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub replicate: u32,
    pub model: String,
    pub status: String,
    /// In [`RMISE_VARIANTS`] order.
    pub rmise: [Option<f64>; 4],
    pub coverage: Option<f64>,
    pub auc_area: Option<f64>,
    pub auc_population: Option<f64>,
}

impl ReplicateMetrics {
    pub fn gap(replicate: u32, model: &str, status: &str) -> Self {
        ReplicateMetrics {
            replicate,
            model: model.to_string(),
            status: status.to_string(),
            rmise: [None; 4],
            coverage: None,
            auc_area: None,
            auc_population: None,
        }
    }

    pub const METRIC_NAMES: [&'static str; 7] = [
        "rmise_unit_log",
        "rmise_unit_risk",
        "rmise_pop_log",
        "rmise_pop_risk",
        "coverage",
        "auc_area",
        "auc_population",
    ];

    pub fn values(&self) -> [Option<f64>; 7] {
        [
            self.rmise[0],
            self.rmise[1],
            self.rmise[2],
            self.rmise[3],
            self.coverage,
            self.auc_area,
            self.auc_population,
        ]
    }
}

/// Inputs describing one fitted replicate on the evaluation grid.
pub struct ReplicateFit<'a> {
    pub mean_risk_moments: (&'a [f64], &'a [f64]),
    pub eta_moments: (&'a [f64], &'a [f64]),
    pub intervals: &'a Intervals,
    /// Exceedance of the reference rate per cell.
    pub exceedance: Option<&'a [f64]>,
}

/// RMISE variants, coverage proportion and AUCs of one replicate.
pub fn evaluate_replicate(
    grid: &EvalGrid,
    truth: &[f64],
    fit: &ReplicateFit<'_>,
    cfg: &MetricsConfig,
    replicate: u32,
    model: &str,
) -> Result<ReplicateMetrics> {
    let mut out = ReplicateMetrics::gap(replicate, model, "ok");
    for (k, (b, s)) in RMISE_VARIANTS.iter().enumerate() {
        let w = cell_weights(grid, *b);
        let (m1, m2) = match s {
            RScale::Log => fit.eta_moments,
            RScale::Risk => fit.mean_risk_moments,
        };
        out.rmise[k] = Some(rmise_from_moments(truth, m1, m2, &w, *s)?);
    }
    let cov = coverage(truth, std::slice::from_ref(fit.intervals))?;
    out.coverage = Some(cov.per_replicate[0]);
    let a = high_risk_set(truth, cfg.reference_rate);
    if let (Some(exc), true) = (fit.exceedance, a.iter().any(|&x| x)) {
        let area = cell_weights(grid, BWeight::Unit);
        let pop: Vec<f64> = grid.populations().iter().map(|&p| p as f64).collect();
        out.auc_area = Some(roc_curve(&a, exc, &area, RocThresholds::Grid(&cfg.q_grid))?.auc);
        out.auc_population = Some(roc_curve(&a, exc, &pop, RocThresholds::Grid(&cfg.q_grid))?.auc);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_replicate_csv(rows: &[ReplicateMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "replicate,model,status,{}", ReplicateMetrics::METRIC_NAMES.join(",")).map_err(io)?;
    for r in rows {
        let vals: Vec<String> = r.values().iter().map(|v| opt(*v)).collect();
        writeln!(w, "{},{},{},{}", r.replicate, r.model, r.status, vals.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads back a replicate metrics file.
pub fn read_replicate_csv(path: impl AsRef<Path>) -> Result<Vec<ReplicateMetrics>> {
    let path = path.as_ref();
    let perr = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| perr(i + 1, e.to_string()))?;
        if rec.len() != 10 {
            return Err(perr(i + 1, format!("expected 10 fields, found {}", rec.len())));
        }
        let f = |k: usize| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                rec[k].parse().map(Some).map_err(|_| perr(i + 1, format!("bad number '{}'", &rec[k])))
            }
        };
        out.push(ReplicateMetrics {
            replicate: rec[0].parse().map_err(|_| perr(i + 1, "bad replicate".into()))?,
            model: rec[1].to_string(),
            status: rec[2].to_string(),
            rmise: [f(3)?, f(4)?, f(5)?, f(6)?],
            coverage: f(7)?,
            auc_area: f(8)?,
            auc_population: f(9)?,
        });
    }
    Ok(out)
}

/// `scenario,model,metric,median,p2_5,p97_5,n,missing` for every metric
/// with at least one value.
pub fn write_summary_csv(scenario: &str, rows: &[ReplicateMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "scenario,model,metric,median,p2_5,p97_5,n,missing").map_err(io)?;
    let mut models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    for m in models {
        let sub: Vec<&ReplicateMetrics> = rows.iter().filter(|r| r.model == m).collect();
        let missing = sub.iter().filter(|r| r.status != "ok").count();
        for (k, name) in ReplicateMetrics::METRIC_NAMES.iter().enumerate() {
            let vals: Vec<f64> = sub.iter().filter_map(|r| r.values()[k]).collect();
            if let Some(s) = scenario_summary(&vals) {
                writeln!(w, "{scenario},{m},{name},{},{},{},{},{missing}", s.median, s.p2_5, s.p97_5, s.n)
                    .map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// `cell_id,coverage` across replicates.
pub fn write_cell_coverage_csv(per_cell: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "cell_id,coverage").map_err(io)?;
    for (g, p) in per_cell.iter().enumerate() {
        writeln!(w, "{g},{p}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_posterior_at_truth() {
        let truth = [0.01, 0.02];
        let s: Vec<Vec<f64>> = vec![truth.iter().map(|l: &f64| l.ln()).collect(); 100];
        for scale in [RScale::Log, RScale::Risk] {
            assert!(rmise(&truth, &s, &[1.0, 3.0], scale).unwrap() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(rmise(&[1.0], &vec![vec![0.0]; 99], &[1.0], RScale::Log).is_err());
    }

    #[test]
    fn percentile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert!((percentile(&v, 0.025) - 1.075).abs() < 1e-12);
        assert_eq!(percentile(&v, 1.0), 4.0);
    }

    #[test]
    fn q_grid_validation() {
        let mut c = MetricsConfig::new(0.001);
        assert_eq!(c.q_grid.len(), 20);
        c.validate().unwrap();
        c.q_grid = vec![0.5, 0.5];
        assert!(c.validate().is_err());
        c.q_grid = vec![0.5, 1.0];
        assert!(c.validate().is_err());
    }
}
