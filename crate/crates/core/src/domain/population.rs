use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{Point, Raster, Window};
use crate::error::{Error, Result};

/// Persons-at-risk per raster cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGrid {
    raster: Raster,
    counts: Vec<u64>,
    total: u64,
}

impl PopulationGrid {
    pub fn from_counts(window: Window, cell_size: f64, counts: Vec<u64>) -> Result<Self> {
        let raster = Raster::new(window, cell_size)?;
        if counts.len() != raster.len() {
            return Err(Error::DimensionMismatch {
                expected: raster.len(),
                found: counts.len(),
            });
        }
        let total = counts.iter().sum();
        Ok(PopulationGrid {
            raster,
            counts,
            total,
        })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn window(&self) -> &Window {
        &self.raster.window
    }

    pub fn cell_size(&self) -> f64 {
        self.raster.cell_size
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn centroid(&self, idx: usize) -> Point {
        self.raster.centroid(idx)
    }

    /// Indices of cells with at least one person.
    pub fn populated(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
    }
}

/// A Gaussian population bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationCentre {
    pub point: Point,
    pub weight: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulationSpec {
    pub centres: Vec<PopulationCentre>,
    /// Share of persons spread uniformly over the window.
    #[serde(default = "default_floor")]
    pub floor_fraction: f64,
}

fn default_floor() -> f64 {
    0.1
}

impl SyntheticPopulationSpec {
    pub fn new(centres: Vec<PopulationCentre>) -> Self {
        SyntheticPopulationSpec {
            centres,
            floor_fraction: default_floor(),
        }
    }
}

/// Multinomial allocation of `total` persons over the raster with cell
/// probabilities from a mixture of isotropic Gaussian bumps plus a uniform
/// floor. Each bump is renormalised over the window.
pub fn build_synthetic_population(
    window: Window,
    cell_size: f64,
    total: u64,
    spec: &SyntheticPopulationSpec,
    seed: u64,
) -> Result<PopulationGrid> {
    let raster = Raster::new(window, cell_size)?;
    if total == 0 {
        return Err(Error::config("population total must be positive"));
    }
    if spec.centres.is_empty() {
        return Err(Error::config("at least one population centre is required"));
    }
    if !(0.0..=1.0).contains(&spec.floor_fraction) {
        return Err(Error::config("floor_fraction must lie in [0, 1]"));
    }
    for c in &spec.centres {
        if !(c.spread > 0.0) || !(c.weight > 0.0) {
            return Err(Error::config("centre spreads and weights must be positive"));
        }
    }

    let n = raster.len();
    let weight_sum: f64 = spec.centres.iter().map(|c| c.weight).sum();
    let mut probs = vec![spec.floor_fraction / n as f64; n];
    let mut bump = vec![0.0; n];
    for c in &spec.centres {
        let inv = 1.0 / (2.0 * c.spread * c.spread);
        let mut mass = 0.0;
        for (i, b) in bump.iter_mut().enumerate() {
            *b = (-raster.centroid(i).dist2(&c.point) * inv).exp();
            mass += *b;
        }
        if mass <= 0.0 {
            return Err(Error::config("population centre carries no mass inside the window"));
        }
        let scale = (1.0 - spec.floor_fraction) * c.weight / weight_sum / mass;
        for (p, b) in probs.iter_mut().zip(&bump) {
            *p += scale * b;
        }
    }

    let counts = multinomial(total, &probs, seed);
    PopulationGrid::from_counts(window, cell_size, counts)
}

/// Sequential conditional-binomial multinomial draw.
fn multinomial(total: u64, probs: &[f64], seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = total;
    let mut mass_left: f64 = probs.iter().sum();
    let mut out = vec![0u64; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .expect("valid binomial parameters")
                .sample(&mut rng)
        };
        out[i] = k;
        remaining -= k;
        mass_left -= p;
    }
    out
}

/// Reads `x,y,count` rows (optional header) and bins them onto the raster.
pub fn load_population_csv(
    path: impl AsRef<Path>,
    window: Window,
    cell_size: f64,
) -> Result<PopulationGrid> {
    let path = path.as_ref();
    let raster = Raster::new(window, cell_size)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut counts = vec![0u64; raster.len()];
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", record.len())));
        }
        let x: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid x '{}'", &record[0])))?;
        let y: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid y '{}'", &record[1])))?;
        let count: u64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid count '{}'", &record[2])))?;
        let cell = raster
            .locate(&Point::new(x, y))
            .ok_or_else(|| parse_err(line, format!("point ({x}, {y}) outside window")))?;
        counts[cell] += count;
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(0, "no population rows".into()));
    }
    PopulationGrid::from_counts(window, cell_size, counts)
}

/// Writes populated cells as `x,y,count` at their centroids.
pub fn write_population_csv(pop: &PopulationGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "x,y,count").map_err(io)?;
    for i in pop.populated() {
        let c = pop.centroid(i);
        writeln!(w, "{},{},{}", c.x, c.y, pop.count(i)).map_err(io)?;
    }
    w.flush().map_err(io)
}
