use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::Raster;
use crate::error::{Error, Result};
use crate::inference::FitResult;

/// Plain grayscale PGM, north up; values scaled linearly from `lo..hi` to
/// `0..255`. A constant field maps to 0.
pub fn write_pgm(raster: &Raster, values: &[f64], lo: f64, hi: f64, path: impl AsRef<Path>) -> Result<()> {
    check(raster, values.len())?;
    let span = hi - lo;
    let mut s = format!("P2\n{} {}\n255\n", raster.ncols, raster.nrows);
    for r in (0..raster.nrows).rev() {
        let row: Vec<String> = (0..raster.ncols)
            .map(|c| {
                let v = values[raster.index(r, c)];
                let t = if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
                ((t * 255.0).round() as u8).to_string()
            })
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let path = path.as_ref();
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Plain PBM, north up; 1 marks a set cell.
pub fn write_pbm(raster: &Raster, mask: &[bool], path: impl AsRef<Path>) -> Result<()> {
    check(raster, mask.len())?;
    let mut s = format!("P1\n{} {}\n", raster.ncols, raster.nrows);
    for r in (0..raster.nrows).rev() {
        let row: Vec<&str> = (0..raster.ncols)
            .map(|c| if mask[raster.index(r, c)] { "1" } else { "0" })
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let path = path.as_ref();
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn check(raster: &Raster, n: usize) -> Result<()> {
    if raster.len() != n {
        return Err(Error::DimensionMismatch {
            expected: raster.len(),
            found: n,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    /// `(probability threshold, cells in the mask)`
    pub masks: Vec<(f64, usize)>,
}

/// Heatmaps of posterior mean risk and of the first exceedance column,
/// and one mask per probability threshold of the cells whose exceedance
/// probability is above it.
pub fn write_maps(raster: &Raster, fit: &FitResult, prob_thresholds: &[f64], dir: impl AsRef<Path>) -> Result<MapSummary> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let lo = fit.mean_risk.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fit.mean_risk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    write_pgm(raster, &fit.mean_risk, lo, hi, dir.join("mean_risk.pgm"))?;
    let mut masks = Vec::new();
    if let Some(exc) = fit.exceedance.first() {
        write_pgm(raster, exc, 0.0, 1.0, dir.join("exceedance.pgm"))?;
        for &q in prob_thresholds {
            let mask: Vec<bool> = exc.iter().map(|&p| p > q).collect();
            write_pbm(raster, &mask, dir.join(format!("mask_p{q}.pbm")))?;
            masks.push((q, mask.iter().filter(|&&m| m).count()));
        }
    }
    Ok(MapSummary { masks })
}
