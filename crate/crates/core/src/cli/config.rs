use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{PopulationCentre, Point, Window};
use crate::error::{Error, Result};
use crate::risk::Shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    /// `[xmin, ymin, xmax, ymax]` in metres.
    pub window: [f64; 4],
    pub cell_size: f64,
    pub total: u64,
    pub seed: u64,
    pub floor_fraction: f64,
    pub centres: Vec<PopulationCentre>,
    /// `x,y,count` file replacing the synthetic generator.
    pub csv: Option<PathBuf>,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        let c = |x, y, weight, spread| PopulationCentre {
            point: Point::new(x, y),
            weight,
            spread,
        };
        PopulationConfig {
            window: [0.0, 0.0, 40_000.0, 30_000.0],
            cell_size: 250.0,
            total: 200_000,
            seed: 2000,
            floor_fraction: 0.1,
            // urban, semi-urban, rural
            centres: vec![
                c(12_000.0, 14_000.0, 0.6, 3_000.0),
                c(30_000.0, 22_000.0, 0.3, 2_500.0),
                c(31_000.0, 7_000.0, 0.1, 2_000.0),
            ],
            csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub target_units: usize,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            target_units: 170,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub shape: Shape,
    pub c: f64,
    pub r: f64,
    pub k: f64,
}

impl ScenarioSpec {
    pub fn id(&self) -> String {
        match self.shape {
            Shape::Flat => format!("flat_k{}", self.k),
            s => format!("{s}_r{}_c{}_k{}", self.r, self.c, self.k),
        }
    }
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            shape: Shape::Step,
            c: 5.0,
            r: 10_000.0,
            k: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub replicates: u32,
    pub seed: u64,
    /// Reference case count `n`.
    pub n_ref: f64,
    /// Circle centres; defaults to the population centres.
    pub circle_centres: Option<Vec<[f64; 2]>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            replicates: 30,
            seed: 1,
            n_ref: 334.0,
            circle_centres: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cell_size: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { cell_size: 1000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub spacing: f64,
    pub extension: Option<f64>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            spacing: 1500.0,
            extension: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bym,
    Lgcp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bym => "bym",
            ModelKind::Lgcp => "lgcp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub models: Vec<ModelKind>,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            models: vec![ModelKind::Bym, ModelKind::Lgcp],
            n_samples: 500,
            seed: 99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Exceedance-probability levels for the contour masks.
    pub probability_thresholds: Vec<f64>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            probability_thresholds: vec![0.5, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub shapes: Vec<Shape>,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub include_flat: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            shapes: vec![Shape::Step, Shape::Smooth],
            radii: vec![1000.0, 5000.0, 10_000.0],
            ratios: vec![2.0, 5.0],
            multipliers: vec![1.0, 5.0, 10.0],
            include_flat: true,
        }
    }
}

impl SweepConfig {
    /// Flat scenarios first, then shape x radius x ratio, per multiplier.
    pub fn scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &k in &self.multipliers {
            if self.include_flat {
                out.push(ScenarioSpec {
                    shape: Shape::Flat,
                    c: 1.0,
                    r: 0.0,
                    k,
                });
            }
            for &shape in self.shapes.iter().filter(|s| **s != Shape::Flat) {
                for &r in &self.radii {
                    for &c in &self.ratios {
                        out.push(ScenarioSpec { shape, c, r, k });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub population: PopulationConfig,
    pub partition: PartitionConfig,
    pub scenario: ScenarioSpec,
    pub simulation: SimulationConfig,
    pub grid: GridConfig,
    pub mesh: MeshConfig,
    pub fit: FitConfig,
    pub map: MapConfig,
    pub sweep: SweepConfig,
}

fn field_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_err(path, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative CSV paths are taken from the config file's directory
        if let (Some(csv), Some(dir)) = (&cfg.population.csv, path.parent()) {
            if csv.is_relative() {
                cfg.population.csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn window(&self) -> Result<Window> {
        let [a, b, c, d] = self.population.window;
        Window::new(a, b, c, d).map_err(|e| field_err("population.window", e))
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.window()?;
        let p = &self.population;
        positive("population.cell_size", p.cell_size)?;
        w.tiling(p.cell_size).map_err(|e| field_err("population.cell_size", e))?;
        if p.csv.is_none() {
            if p.total == 0 {
                return Err(field_err("population.total", "must be positive"));
            }
            if p.centres.is_empty() {
                return Err(field_err("population.centres", "at least one centre is required"));
            }
            for (i, c) in p.centres.iter().enumerate() {
                positive(&format!("population.centres[{i}].spread"), c.spread)?;
                positive(&format!("population.centres[{i}].weight"), c.weight)?;
            }
            if !(0.0..=1.0).contains(&p.floor_fraction) {
                return Err(field_err("population.floor_fraction", "must lie in [0, 1]"));
            }
        }
        if self.partition.target_units < 2 {
            return Err(field_err("partition.target_units", "must be at least 2"));
        }
        self.validate_scenario(&self.scenario, "scenario")?;
        if self.simulation.replicates == 0 {
            return Err(field_err("simulation.replicates", "must be at least 1"));
        }
        positive("simulation.n_ref", self.simulation.n_ref)?;
        if let Some(cs) = &self.simulation.circle_centres {
            if cs.is_empty() {
                return Err(field_err("simulation.circle_centres", "must not be empty"));
            }
            for (i, c) in cs.iter().enumerate() {
                if !w.contains(&Point::new(c[0], c[1])) {
                    return Err(field_err(&format!("simulation.circle_centres[{i}]"), "outside the window"));
                }
            }
        }
        positive("grid.cell_size", self.grid.cell_size)?;
        let ratio = self.grid.cell_size / p.cell_size;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(field_err("grid.cell_size", "must be a whole multiple of population.cell_size"));
        }
        w.tiling(self.grid.cell_size).map_err(|e| field_err("grid.cell_size", e))?;
        positive("mesh.spacing", self.mesh.spacing)?;
        if let Some(e) = self.mesh.extension {
            if !(e >= 0.0) {
                return Err(field_err("mesh.extension", "must be non-negative"));
            }
        }
        if self.fit.models.is_empty() {
            return Err(field_err("fit.models", "at least one model is required"));
        }
        if self.fit.n_samples < crate::evaluation::MIN_RMISE_SAMPLES {
            return Err(field_err(
                "fit.n_samples",
                format!("must be at least {}", crate::evaluation::MIN_RMISE_SAMPLES),
            ));
        }
        for (i, t) in self.map.probability_thresholds.iter().enumerate() {
            if !(0.0..1.0).contains(t) {
                return Err(field_err(&format!("map.probability_thresholds[{i}]"), "must lie in [0, 1)"));
            }
        }
        for (i, s) in self.sweep.scenarios().iter().enumerate() {
            self.validate_scenario(s, &format!("sweep[{i}]"))?;
        }
        Ok(())
    }

    fn validate_scenario(&self, s: &ScenarioSpec, path: &str) -> Result<()> {
        positive(&format!("{path}.k"), s.k)?;
        if s.shape != Shape::Flat {
            positive(&format!("{path}.r"), s.r)?;
            if !(s.c > 1.0) {
                return Err(field_err(&format!("{path}.c"), format!("must exceed 1, got {}", s.c)));
            }
        }
        Ok(())
    }

    /// Copy with `scenario` replaced.
    pub fn with_scenario(&self, s: ScenarioSpec) -> Self {
        ScenarioConfig {
            scenario: s,
            ..self.clone()
        }
    }
}
