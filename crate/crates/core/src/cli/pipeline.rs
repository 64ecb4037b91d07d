use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelKind, ScenarioConfig, ScenarioSpec};
use crate::bym::{icar_precision, IcarStructure, PhiPriorKind};
use crate::domain::{
    adjacency_from_partition, build_areal_partition, build_synthetic_population, load_population_csv,
    write_partition_csv, write_population_csv, ArealPartition, EvalGrid, Point, PopulationGrid,
    SyntheticPopulationSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    coverage, evaluate_replicate, write_cell_coverage_csv, write_replicate_csv, write_summary_csv, Intervals,
    MetricsConfig, ReplicateFit, ReplicateMetrics,
};
use crate::inference::{fit_bym, fit_lgcp, FitOptions, FitResult, MarginalOptions};
use crate::risk::{expected_cases, solve_surface_parameters, CircleSpec, RiskSurface, Shape, SurfaceRequest};
use crate::simulate::{
    aggregate_to_grid, aggregate_to_units, mix_seed, read_dataset_csv, replicate_seed, simulate_dataset,
    stable_hash, write_dataset_csv,
};
use crate::spde::{assemble_fem, build_mesh, default_extension, FemMatrices, Mesh};

/// Everything shared by the scenarios of one configuration.
pub struct Workspace {
    pub cfg: ScenarioConfig,
    pub pop: PopulationGrid,
    pub partition: ArealPartition,
    pub icar: IcarStructure,
    pub grid: EvalGrid,
    pub mesh: Mesh,
    pub fem: FemMatrices,
    /// Unit (0-based) containing each evaluation-cell centroid.
    pub cell_unit: Vec<usize>,
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

impl Workspace {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let window = cfg.window()?;
        let p = &cfg.population;
        let pop = match &p.csv {
            Some(path) => load_population_csv(path, window, p.cell_size)?,
            None => {
                let spec = SyntheticPopulationSpec {
                    centres: p.centres.clone(),
                    floor_fraction: p.floor_fraction,
                };
                build_synthetic_population(window, p.cell_size, p.total, &spec, p.seed)?
            }
        };
        let partition = build_areal_partition(&pop, cfg.partition.target_units, cfg.partition.seed)?;
        let icar = icar_precision(&adjacency_from_partition(&partition)?)?;
        let grid = EvalGrid::from_population(&pop, cfg.grid.cell_size)?;
        let ext = cfg.mesh.extension.unwrap_or_else(|| default_extension(&window));
        let mesh = build_mesh(&window, cfg.mesh.spacing, ext)?;
        let fem = assemble_fem(&mesh)?;
        let cell_unit = grid
            .centroids()
            .iter()
            .map(|c| {
                partition
                    .unit_at(c)
                    .map(|u| u - 1)
                    .ok_or_else(|| Error::domain(format!("evaluation centroid ({}, {}) lies in no unit", c.x, c.y)))
            })
            .collect::<Result<_>>()?;
        Ok(Workspace {
            cfg: cfg.clone(),
            pop,
            partition,
            icar,
            grid,
            mesh,
            fem,
            cell_unit,
        })
    }

    pub fn circles(&self, r: f64) -> CircleSpec {
        let centres = match &self.cfg.simulation.circle_centres {
            Some(cs) => cs.iter().map(|c| Point::new(c[0], c[1])).collect(),
            None => self.cfg.population.centres.iter().map(|c| c.point).collect(),
        };
        CircleSpec { centres, radius: r }
    }

    pub fn surface(&self, spec: &ScenarioSpec) -> Result<RiskSurface> {
        let circles = self.circles(if spec.shape == Shape::Flat { 1.0 } else { spec.r });
        solve_surface_parameters(
            &self.pop,
            &SurfaceRequest {
                circles: &circles,
                shape: spec.shape,
                c: spec.c,
                k: spec.k,
                n_ref: self.cfg.simulation.n_ref,
            },
        )
    }

    /// True risk at each evaluation-cell centroid.
    pub fn truth(&self, surface: &RiskSurface) -> Vec<f64> {
        self.grid.centroids().iter().map(|c| surface.risk_at(c)).collect()
    }

    /// `kn / P_W`, the scenario's mean risk.
    pub fn reference_rate(&self, spec: &ScenarioSpec) -> f64 {
        spec.k * self.cfg.simulation.n_ref / self.pop.total() as f64
    }

    /// Writes population, partition and mesh files under `out/domain`.
    pub fn write_domain(&self, out: &Path) -> Result<()> {
        let dir = out.join("domain");
        create_dir(&dir)?;
        write_population_csv(&self.pop, dir.join("population.csv"))?;
        write_partition_csv(&self.partition, dir.join("partition.csv"))?;
        self.mesh.write_csv(&dir)?;
        let path = dir.join("config.toml");
        fs::write(&path, self.cfg.to_toml()?).map_err(|e| Error::io(&path, e))
    }
}

pub fn data_dir(out: &Path, spec: &ScenarioSpec) -> PathBuf {
    out.join("data").join(spec.id())
}

pub fn fit_dir(out: &Path, spec: &ScenarioSpec, model: ModelKind) -> PathBuf {
    out.join("fits").join(spec.id()).join(model.name())
}

pub fn metrics_dir(out: &Path, spec: &ScenarioSpec) -> PathBuf {
    out.join("metrics").join(spec.id())
}

pub fn replicate_file(rep: u32) -> String {
    format!("rep_{rep:04}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub replicate: u32,
    pub seed: u64,
    pub file: String,
    pub total_cases: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario_id: String,
    pub scenario: ScenarioSpec,
    pub base_seed: u64,
    pub n_ref: f64,
    /// `k * n_ref`
    pub target_cases: f64,
    pub population_total: u64,
    pub expected_cases: f64,
    pub reference_rate: f64,
    pub surface: RiskSurface,
    pub datasets: Vec<DatasetEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
    }
}

/// Draws the replicate datasets of one scenario.
pub fn simulate(ws: &Workspace, spec: &ScenarioSpec, out: &Path) -> Result<Manifest> {
    let surface = ws.surface(spec)?;
    let sid = spec.id();
    let dir = data_dir(out, spec);
    create_dir(&dir)?;
    let sim = &ws.cfg.simulation;
    let datasets = (0..sim.replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(sim.seed, &sid, rep);
            let ds = simulate_dataset(&surface, &ws.pop, seed, &sid, rep)?;
            let file = replicate_file(rep);
            write_dataset_csv(&ds, dir.join(&file))?;
            Ok(DatasetEntry {
                replicate: rep,
                seed,
                file,
                total_cases: ds.total_cases,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        scenario_id: sid,
        scenario: spec.clone(),
        base_seed: sim.seed,
        n_ref: sim.n_ref,
        target_cases: spec.k * sim.n_ref,
        population_total: ws.pop.total(),
        expected_cases: expected_cases(&surface, &ws.pop),
        reference_rate: ws.reference_rate(spec),
        surface,
        datasets,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    let truth = ws.truth(&manifest.surface);
    write_truth_csv(ws, &truth, dir.join("truth.csv"))?;
    Ok(manifest)
}

fn write_truth_csv(ws: &Workspace, truth: &[f64], path: PathBuf) -> Result<()> {
    let io = |e| Error::io(&path, e);
    let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(io)?);
    writeln!(w, "cell_id,x,y,population,unit_id,risk").map_err(io)?;
    for (g, r) in truth.iter().enumerate() {
        let c = ws.grid.centroid(g);
        writeln!(w, "{g},{},{},{},{},{r}", c.x, c.y, ws.grid.population(g), ws.cell_unit[g] + 1).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One line of `diagnostics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub scenario_id: String,
    pub replicate: u32,
    pub model: ModelKind,
    pub converged: bool,
    pub error: Option<String>,
    pub newton_iterations: usize,
    pub hyper_evaluations: usize,
    pub grid_size: usize,
    pub runtime_secs: f64,
    pub log_posterior_mode: f64,
    pub hyper_names: Vec<String>,
    pub hyper_mode: Vec<f64>,
    pub warnings: Vec<String>,
}

fn fit_one(ws: &Workspace, manifest: &Manifest, entry: &DatasetEntry, model: ModelKind, out: &Path) -> Result<FitResult> {
    let spec = &manifest.scenario;
    let ds = read_dataset_csv(
        data_dir(out, spec).join(&entry.file),
        *ws.pop.raster(),
        &manifest.scenario_id,
        entry.replicate,
        entry.seed,
    )?;
    let opts = FitOptions {
        marginals: MarginalOptions {
            thresholds: vec![manifest.reference_rate],
            n_samples: ws.cfg.fit.n_samples,
            keep_samples: false,
            seed: mix_seed(
                mix_seed(ws.cfg.fit.seed, stable_hash(&manifest.scenario_id)),
                mix_seed(u64::from(entry.replicate), stable_hash(model.name())),
            ),
        },
        ..Default::default()
    };
    match model {
        ModelKind::Bym => {
            let counts = aggregate_to_units(&ds, &ws.pop, &ws.partition)?;
            let fit = fit_bym(&counts, &ws.icar, PhiPriorKind::Pc, &opts)?;
            Ok(fit.expand(&ws.cell_unit))
        }
        ModelKind::Lgcp => {
            let counts = aggregate_to_grid(&ds, &ws.grid)?;
            fit_lgcp(
                &counts,
                &ws.grid.centroids(),
                &ws.mesh,
                &ws.fem,
                ws.cfg.mesh.spacing,
                ws.grid.window().diameter(),
                &opts,
            )
        }
    }
}

/// Fits every dataset of the scenario with every configured model on a
/// pool of `jobs` threads. Failed fits are recorded, not fatal.
pub fn fit(ws: &Workspace, spec: &ScenarioSpec, out: &Path, jobs: usize) -> Result<Vec<FitRecord>> {
    let manifest = Manifest::read(data_dir(out, spec).join("manifest.json"))?;
    if manifest.scenario_id != spec.id() {
        return Err(Error::config(format!(
            "manifest is for scenario {}, expected {}",
            manifest.scenario_id,
            spec.id()
        )));
    }
    let models = &ws.cfg.fit.models;
    if models.is_empty() {
        return Err(Error::config("fit.models: at least one model is required"));
    }
    for &m in models {
        create_dir(&fit_dir(out, spec, m))?;
    }
    let tasks: Vec<(&DatasetEntry, ModelKind)> = manifest
        .datasets
        .iter()
        .flat_map(|e| models.iter().map(move |&m| (e, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let records: Vec<Result<FitRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(entry, model)| {
                let dir = fit_dir(out, spec, model);
                let csv = dir.join(replicate_file(entry.replicate));
                // stale output from an earlier run must not survive a failure
                let _ = fs::remove_file(&csv);
                let mut rec = FitRecord {
                    scenario_id: manifest.scenario_id.clone(),
                    replicate: entry.replicate,
                    model,
                    converged: false,
                    error: None,
                    newton_iterations: 0,
                    hyper_evaluations: 0,
                    grid_size: 0,
                    runtime_secs: 0.0,
                    log_posterior_mode: f64::NAN,
                    hyper_names: Vec::new(),
                    hyper_mode: Vec::new(),
                    warnings: Vec::new(),
                };
                let start = std::time::Instant::now();
                match fit_one(ws, &manifest, entry, model, out) {
                    Ok(res) => {
                        res.write_csv(&csv)?;
                        res.write_hyper_csv(dir.join(format!("rep_{:04}_hyper.csv", entry.replicate)))?;
                        let d = &res.diagnostics;
                        rec.converged = true;
                        rec.newton_iterations = d.newton_iterations;
                        rec.hyper_evaluations = d.hyper_evaluations;
                        rec.grid_size = d.grid_size;
                        rec.runtime_secs = d.runtime_secs;
                        rec.log_posterior_mode = d.log_posterior_mode;
                        rec.hyper_names = res.hyper.names.clone();
                        rec.hyper_mode = res.hyper.mode.clone();
                        rec.warnings = d.warnings.clone();
                    }
                    Err(e @ Error::Io { .. }) => return Err(e),
                    Err(e) => {
                        rec.error = Some(e.to_string());
                        rec.runtime_secs = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
                    }
                }
                Ok(rec)
            })
            .collect()
    });
    let records: Vec<FitRecord> = records.into_iter().collect::<Result<_>>()?;
    let path = out.join("fits").join(spec.id()).join("diagnostics.jsonl");
    let io = |e| Error::io(&path, e);
    let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(io)?);
    for r in &records {
        let line = serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(records)
}

/// Replicate metrics, per-cell coverage and the summary table of one
/// scenario. Absent fits give explicit gap rows.
pub fn evaluate(ws: &Workspace, spec: &ScenarioSpec, out: &Path) -> Result<Vec<ReplicateMetrics>> {
    let manifest = Manifest::read(data_dir(out, spec).join("manifest.json"))?;
    let truth = ws.truth(&manifest.surface);
    let cfg = MetricsConfig::new(manifest.reference_rate);
    cfg.validate()?;
    if spec.shape != Shape::Flat && !truth.iter().any(|&l| l > cfg.reference_rate) {
        return Err(Error::config(format!(
            "no evaluation cell exceeds the reference rate in scenario {}",
            spec.id()
        )));
    }
    let dir = metrics_dir(out, spec);
    create_dir(&dir)?;
    let mut rows = Vec::new();
    for &model in &ws.cfg.fit.models {
        let mut intervals = Vec::new();
        for entry in &manifest.datasets {
            let path = fit_dir(out, spec, model).join(replicate_file(entry.replicate));
            if !path.exists() {
                rows.push(ReplicateMetrics::gap(entry.replicate, model.name(), "missing"));
                continue;
            }
            let fit = FitResult::read_csv(&path)?;
            if fit.len() != ws.grid.len() {
                return Err(Error::DimensionMismatch {
                    expected: ws.grid.len(),
                    found: fit.len(),
                });
            }
            let m = fit
                .moments
                .as_ref()
                .ok_or_else(|| Error::config(format!("{} has no sample moments", path.display())))?;
            let iv = Intervals {
                lo: fit.lo95_risk.clone(),
                hi: fit.hi95_risk.clone(),
            };
            let exc = fit.exceedance.first().map(|v| v.as_slice());
            let rf = ReplicateFit {
                mean_risk_moments: (&m.risk_mean, &m.risk_sq),
                eta_moments: (&m.eta_mean, &m.eta_sq),
                intervals: &iv,
                exceedance: if spec.shape == Shape::Flat { None } else { exc },
            };
            rows.push(evaluate_replicate(&ws.grid, &truth, &rf, &cfg, entry.replicate, model.name())?);
            intervals.push(iv);
        }
        let cov = coverage(&truth, &intervals)?;
        write_cell_coverage_csv(&cov.per_cell, dir.join(format!("cell_coverage_{}.csv", model.name())))?;
    }
    write_replicate_csv(&rows, dir.join("replicates.csv"))?;
    write_summary_csv(&spec.id(), &rows, dir.join("summary.csv"))?;
    Ok(rows)
}

/// Simulate, fit and evaluate every scenario of the sweep; the summaries
/// are concatenated into `metrics/sweep_summary.csv`.
pub fn sweep(ws: &Workspace, out: &Path, jobs: usize) -> Result<Vec<ScenarioSpec>> {
    let specs = ws.cfg.sweep.scenarios();
    let mut merged = String::new();
    for (i, spec) in specs.iter().enumerate() {
        simulate(ws, spec, out)?;
        fit(ws, spec, out, jobs)?;
        evaluate(ws, spec, out)?;
        let path = metrics_dir(out, spec).join("summary.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            merged.push_str(header);
            merged.push('\n');
        }
        for l in lines {
            merged.push_str(l);
            merged.push('\n');
        }
    }
    let path = out.join("metrics").join("sweep_summary.csv");
    fs::write(&path, merged).map_err(|e| Error::io(&path, e))?;
    Ok(specs)
}
