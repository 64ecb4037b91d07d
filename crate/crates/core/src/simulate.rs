//! Replicate case datasets drawn from a risk surface over the population
//! raster, plus aggregation to areal units and to the evaluation grid.
//!
//! Every person is a case independently with probability equal to the risk
//! at their cell centroid, so a cell's count is `Binomial(persons, risk)`.
//! Each cell draws from its own ChaCha stream, so results do not depend on
//! the order in which cells or replicates are processed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::domain::{ArealPartition, EvalGrid, PopulationGrid, Raster};
use crate::error::{Error, Result};
use crate::risk::RiskSurface;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub raster: Raster,
    pub case_counts: Vec<u64>,
    pub total_cases: u64,
    pub scenario_id: String,
    pub replicate_id: u32,
    pub seed: u64,
}

/// Per-unit or per-cell case counts with the matching population.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedCounts {
    pub cases: Vec<u64>,
    pub population: Vec<u64>,
}

impl AggregatedCounts {
    pub fn total_cases(&self) -> u64 {
        self.cases.iter().sum()
    }

    pub fn total_population(&self) -> u64 {
        self.population.iter().sum()
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a of a string; stable across platforms and compiler versions.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of replicate `replicate` of scenario `scenario_id` under a base seed.
pub fn replicate_seed(base: u64, scenario_id: &str, replicate: u32) -> u64 {
    mix_seed(mix_seed(base, stable_hash(scenario_id)), u64::from(replicate))
}

pub fn simulate_dataset(
    surface: &RiskSurface,
    pop: &PopulationGrid,
    seed: u64,
    scenario_id: &str,
    replicate_id: u32,
) -> Result<Dataset> {
    let mut case_counts = vec![0u64; pop.len()];
    for cell in pop.populated() {
        let risk = surface.risk_at(&pop.centroid(cell));
        if !(0.0..1.0).contains(&risk) {
            return Err(Error::domain(format!("risk {risk} at cell {cell} outside [0, 1)")));
        }
        if risk == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(cell as u64);
        case_counts[cell] = Binomial::new(pop.count(cell), risk)
            .map_err(|e| Error::domain(e.to_string()))?
            .sample(&mut rng);
    }
    let total_cases = case_counts.iter().sum();
    Ok(Dataset {
        raster: *pop.raster(),
        case_counts,
        total_cases,
        scenario_id: scenario_id.to_string(),
        replicate_id,
        seed,
    })
}

/// Sums cases and persons over each unit of the partition.
pub fn aggregate_to_units(
    ds: &Dataset,
    pop: &PopulationGrid,
    part: &ArealPartition,
) -> Result<AggregatedCounts> {
    if ds.raster != *part.raster() || ds.raster != *pop.raster() {
        return Err(Error::domain("dataset, population and partition rasters differ"));
    }
    let n = part.unit_count();
    let mut cases = vec![0u64; n];
    let mut population = vec![0u64; n];
    for cell in 0..ds.case_counts.len() {
        match part.unit_of(cell) {
            Some(u) => {
                cases[u - 1] += ds.case_counts[cell];
                population[u - 1] += pop.count(cell);
            }
            None if ds.case_counts[cell] > 0 || pop.count(cell) > 0 => {
                return Err(Error::domain(format!("cell {cell} carries data but has no unit")));
            }
            None => {}
        }
    }
    Ok(AggregatedCounts { cases, population })
}

/// Sums cases onto evaluation-grid cells; populations come from the grid.
pub fn aggregate_to_grid(ds: &Dataset, grid: &EvalGrid) -> Result<AggregatedCounts> {
    if ds.case_counts.len() != grid.fine_to_eval().len() || ds.raster.window != *grid.window() {
        return Err(Error::domain("dataset raster does not match the evaluation grid"));
    }
    let mut cases = vec![0u64; grid.len()];
    for (cell, &g) in grid.fine_to_eval().iter().enumerate() {
        cases[g] += ds.case_counts[cell];
    }
    Ok(AggregatedCounts {
        cases,
        population: grid.populations().to_vec(),
    })
}

/// Writes `cell_row,cell_col,cases` for every cell with at least one case.
pub fn write_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "cell_row,cell_col,cases").map_err(io)?;
    for (i, &c) in ds.case_counts.iter().enumerate() {
        if c > 0 {
            let (r, col) = ds.raster.row_col(i);
            writeln!(w, "{r},{col},{c}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_dataset_csv(
    path: impl AsRef<Path>,
    raster: Raster,
    scenario_id: &str,
    replicate_id: u32,
    seed: u64,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut case_counts = vec![0u64; raster.len()];
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != 3 {
            return Err(parse_err(line, "expected cell_row,cell_col,cases".into()));
        }
        let field = |k: usize| -> Result<u64> {
            rec[k]
                .parse()
                .map_err(|_| parse_err(line, format!("invalid integer '{}'", &rec[k])))
        };
        let (r, c, n) = (field(0)? as usize, field(1)? as usize, field(2)?);
        if r >= raster.nrows || c >= raster.ncols {
            return Err(parse_err(line, format!("cell ({r}, {c}) outside raster")));
        }
        case_counts[raster.index(r, c)] += n;
    }
    let total_cases = case_counts.iter().sum();
    Ok(Dataset {
        raster,
        case_counts,
        total_cases,
        scenario_id: scenario_id.to_string(),
        replicate_id,
        seed,
    })
}
