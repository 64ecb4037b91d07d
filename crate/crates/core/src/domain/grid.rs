use serde::{Deserialize, Serialize};

use super::{Point, PopulationGrid, Raster, Window};
use crate::error::{Error, Result};

/// Weight function `b_g` of the integrated squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BWeight {
    /// `b_g = 1`
    Unit,
    /// `b_g = persons in D_g / |D_g|`
    PopulationDensity,
}

/// Pixel partition of the window on which risk surfaces are evaluated,
/// compared and (for the point-process model) observed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    raster: Raster,
    populations: Vec<u64>,
    /// Evaluation cell of each population-raster cell.
    fine_to_eval: Vec<usize>,
}

impl EvalGrid {
    /// Aggregates the population raster onto a grid of `cell_size` over the
    /// same window. `cell_size` must be a whole multiple of the population
    /// cell size.
    pub fn from_population(pop: &PopulationGrid, cell_size: f64) -> Result<Self> {
        let raster = Raster::new(*pop.window(), cell_size)?;
        let ratio = cell_size / pop.cell_size();
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::config(format!(
                "evaluation cell size {cell_size} is not a multiple of the population cell size {}",
                pop.cell_size()
            )));
        }
        let fine_to_eval = pop.raster().coarsen_map(&raster)?;
        let mut populations = vec![0u64; raster.len()];
        for (i, &g) in fine_to_eval.iter().enumerate() {
            populations[g] += pop.count(i);
        }
        Ok(EvalGrid {
            raster,
            populations,
            fine_to_eval,
        })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn window(&self) -> &Window {
        &self.raster.window
    }

    pub fn len(&self) -> usize {
        self.raster.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raster.is_empty()
    }

    pub fn centroid(&self, g: usize) -> Point {
        self.raster.centroid(g)
    }

    pub fn centroids(&self) -> Vec<Point> {
        (0..self.len()).map(|g| self.centroid(g)).collect()
    }

    pub fn area(&self, _g: usize) -> f64 {
        self.raster.cell_area()
    }

    pub fn population(&self, g: usize) -> u64 {
        self.populations[g]
    }

    pub fn populations(&self) -> &[u64] {
        &self.populations
    }

    pub fn total_population(&self) -> u64 {
        self.populations.iter().sum()
    }

    pub fn fine_to_eval(&self) -> &[usize] {
        &self.fine_to_eval
    }

    pub fn b_weight(&self, g: usize, mode: BWeight) -> f64 {
        match mode {
            BWeight::Unit => 1.0,
            BWeight::PopulationDensity => self.populations[g] as f64 / self.area(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_weights_integrate_to_population_and_area() {
        let w = Window::new(0.0, 0.0, 400.0, 200.0).unwrap();
        let counts: Vec<u64> = (0..32).map(|i| (i * 7 % 5) as u64).collect();
        let pop = PopulationGrid::from_counts(w, 50.0, counts).unwrap();
        let grid = EvalGrid::from_population(&pop, 100.0).unwrap();
        assert_eq!(grid.len(), 8);
        assert_eq!(grid.total_population(), pop.total());
        let s_pop: f64 = (0..grid.len())
            .map(|g| grid.b_weight(g, BWeight::PopulationDensity) * grid.area(g))
            .sum();
        let s_unit: f64 = (0..grid.len())
            .map(|g| grid.b_weight(g, BWeight::Unit) * grid.area(g))
            .sum();
        assert!((s_pop - pop.total() as f64).abs() < 1e-9);
        assert!((s_unit - w.area()).abs() < 1e-9);
    }

    #[test]
    fn non_multiple_cell_size_rejected() {
        let w = Window::new(0.0, 0.0, 300.0, 300.0).unwrap();
        let pop = PopulationGrid::from_counts(w, 100.0, vec![1; 9]).unwrap();
        assert!(EvalGrid::from_population(&pop, 150.0).is_err());
        assert!(EvalGrid::from_population(&pop, 300.0).is_ok());
    }
}
