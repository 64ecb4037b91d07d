//! Batch pipeline behind the `riskfield` binary: scenario configuration,
//! simulation, fitting, evaluation, maps and the factorial sweep.
//!
//! Output layout under `--out`:
//! `domain/` (population, partition, mesh), `data/<scenario>/`
//! (manifest, truth and one case file per replicate), `fits/<scenario>/<model>/`
//! (per-target CSVs plus `diagnostics.jsonl` one level up),
//! `metrics/<scenario>/` and `maps/`.

mod config;
mod maps;
mod pipeline;

pub use config::{
    FitConfig, GridConfig, MapConfig, MeshConfig, ModelKind, PartitionConfig, PopulationConfig, ScenarioConfig,
    ScenarioSpec, SimulationConfig, SweepConfig,
};
pub use maps::{write_maps, write_pbm, write_pgm, MapSummary};
pub use pipeline::{
    data_dir, evaluate, fit, fit_dir, metrics_dir, replicate_file, simulate, sweep, DatasetEntry, FitRecord, Manifest,
    Workspace,
};
