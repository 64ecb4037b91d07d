use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point, PopulationGrid, Raster};
use crate::error::{Error, Result};

/// Assignment of raster cells to areal units `1..=unit_count`; 0 marks a
/// cell outside every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ArealPartition {
    raster: Raster,
    unit_ids: Vec<usize>,
    unit_count: usize,
}

impl ArealPartition {
    /// Validates that every populated cell has a unit and every unit holds
    /// at least one populated cell.
    pub fn new(pop: &PopulationGrid, unit_ids: Vec<usize>) -> Result<Self> {
        if unit_ids.len() != pop.len() {
            return Err(Error::DimensionMismatch {
                expected: pop.len(),
                found: unit_ids.len(),
            });
        }
        let unit_count = unit_ids.iter().copied().max().unwrap_or(0);
        let mut populated = vec![false; unit_count + 1];
        for (i, &u) in unit_ids.iter().enumerate() {
            if pop.count(i) > 0 {
                if u == 0 {
                    return Err(Error::domain(format!("populated cell {i} has no unit")));
                }
                populated[u] = true;
            }
        }
        if let Some(u) = (1..=unit_count).find(|&u| !populated[u]) {
            return Err(Error::domain(format!("unit {u} has no populated cell")));
        }
        Ok(ArealPartition {
            raster: *pop.raster(),
            unit_ids,
            unit_count,
        })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn unit_ids(&self) -> &[usize] {
        &self.unit_ids
    }

    /// Unit of a cell (1-based) or `None`.
    pub fn unit_of(&self, cell: usize) -> Option<usize> {
        match self.unit_ids[cell] {
            0 => None,
            u => Some(u),
        }
    }

    pub fn unit_count(&self) -> usize {
        self.unit_count
    }

    /// Unit containing a point, if any.
    pub fn unit_at(&self, p: &Point) -> Option<usize> {
        self.raster.locate(p).and_then(|c| self.unit_of(c))
    }
}

/// Population-weighted k-means over populated-cell centroids; all cells go
/// to their nearest seed, units without population are dropped, and
/// non-contiguous pieces are handed to the neighbouring unit sharing the
/// longest boundary.
pub fn build_areal_partition(
    pop: &PopulationGrid,
    target_units: usize,
    seed: u64,
) -> Result<ArealPartition> {
    let populated: Vec<usize> = pop.populated().collect();
    if target_units < 2 || target_units > populated.len() {
        return Err(Error::config(format!(
            "target_units must lie in [2, {}], got {target_units}",
            populated.len()
        )));
    }
    let raster = *pop.raster();
    let points: Vec<Point> = populated.iter().map(|&i| raster.centroid(i)).collect();
    let weights: Vec<f64> = populated.iter().map(|&i| pop.count(i) as f64).collect();

    let mut seeds = kmeans_pp_init(&points, &weights, target_units, seed);
    lloyd(&points, &weights, &mut seeds, 100);

    // Seeds that own at least one populated cell survive.
    let mut owns = vec![false; seeds.len()];
    for p in &points {
        owns[nearest(&seeds, p)] = true;
    }
    let seeds: Vec<Point> = seeds
        .into_iter()
        .zip(owns)
        .filter_map(|(s, o)| o.then_some(s))
        .collect();

    let mut labels: Vec<usize> = (0..raster.len())
        .map(|i| nearest(&seeds, &raster.centroid(i)))
        .collect();
    repair_contiguity(&raster, pop, &mut labels);

    // Renumber 1..=N in row-major order of first appearance.
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 1;
    let unit_ids = labels
        .iter()
        .map(|&l| {
            *remap.entry(l).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    ArealPartition::new(pop, unit_ids)
}

fn nearest(seeds: &[Point], p: &Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, s) in seeds.iter().enumerate() {
        let d = s.dist2(p);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn kmeans_pp_init(points: &[Point], weights: &[f64], k: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    let total: f64 = weights.iter().sum();
    let first = pick(&mut rng, weights, total);
    chosen.push(points[first]);
    let mut d2: Vec<f64> = points.iter().map(|p| p.dist2(&points[first])).collect();
    while chosen.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let mass: f64 = scores.iter().sum();
        if mass <= 0.0 {
            break;
        }
        let next = pick(&mut rng, &scores, mass);
        chosen.push(points[next]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.dist2(&points[next]));
        }
    }
    chosen
}

fn pick(rng: &mut ChaCha8Rng, scores: &[f64], mass: f64) -> usize {
    let target = rng.random::<f64>() * mass;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 {
            last = i;
            acc += s;
            if acc > target {
                return i;
            }
        }
    }
    last
}

fn lloyd(points: &[Point], weights: &[f64], seeds: &mut [Point], max_iter: usize) {
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let k = nearest(seeds, p);
            if *a != k {
                *a = k;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sx = vec![0.0; seeds.len()];
        let mut sy = vec![0.0; seeds.len()];
        let mut sw = vec![0.0; seeds.len()];
        for ((p, &w), &a) in points.iter().zip(weights).zip(&assign) {
            sx[a] += w * p.x;
            sy[a] += w * p.y;
            sw[a] += w;
        }
        for (k, s) in seeds.iter_mut().enumerate() {
            if sw[k] > 0.0 {
                *s = Point::new(sx[k] / sw[k], sy[k] / sw[k]);
            }
        }
    }
}

/// Repeatedly moves detached pieces of a unit into the neighbouring unit
/// with the longest shared boundary. Each move strictly lowers the total
/// number of connected pieces.
fn repair_contiguity(raster: &Raster, pop: &PopulationGrid, labels: &mut [usize]) {
    loop {
        let comps = components(raster, labels);
        // Group component ids by label.
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (cid, cells) in comps.iter().enumerate() {
            by_label.entry(labels[cells[0]]).or_default().push(cid);
        }
        let Some((_, pieces)) = by_label.iter().find(|(_, v)| v.len() > 1) else {
            return;
        };
        let main = *pieces
            .iter()
            .max_by_key(|&&c| {
                let people: u64 = comps[c].iter().map(|&i| pop.count(i)).sum();
                (people, comps[c].len(), std::cmp::Reverse(comps[c][0]))
            })
            .expect("non-empty");
        for &cid in pieces.iter().filter(|&&c| c != main) {
            let own = labels[comps[cid][0]];
            let mut border: BTreeMap<usize, usize> = BTreeMap::new();
            for &cell in &comps[cid] {
                for nb in raster.neighbours(cell) {
                    if labels[nb] != own {
                        *border.entry(labels[nb]).or_default() += 1;
                    }
                }
            }
            if let Some((&target, _)) = border
                .iter()
                .max_by_key(|(&l, &n)| (n, std::cmp::Reverse(l)))
            {
                for &cell in &comps[cid] {
                    labels[cell] = target;
                }
            }
        }
    }
}

/// 4-connected components of equal-label cells, each listed in BFS order
/// starting from its smallest cell index.
fn components(raster: &Raster, labels: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; labels.len()];
    let mut out = Vec::new();
    for start in 0..labels.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for nb in raster.neighbours(c) {
                if !seen[nb] && labels[nb] == labels[start] {
                    seen[nb] = true;
                    comp.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Writes `cell_row,cell_col,unit_id` for every cell with a unit.
pub fn write_partition_csv(part: &ArealPartition, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "cell_row,cell_col,unit_id").map_err(io)?;
    for (i, &u) in part.unit_ids().iter().enumerate() {
        if u > 0 {
            let (r, c) = part.raster().row_col(i);
            writeln!(w, "{r},{c},{u}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Window;

    fn grid(rows: usize, cols: usize, counts: Vec<u64>) -> PopulationGrid {
        let w = Window::new(0.0, 0.0, cols as f64 * 100.0, rows as f64 * 100.0).unwrap();
        PopulationGrid::from_counts(w, 100.0, counts).unwrap()
    }

    #[test]
    fn one_unit_per_populated_cell() {
        let counts = vec![3, 0, 1, 0, 0, 2, 5, 0, 0, 1, 0, 4];
        let pop = grid(3, 4, counts.clone());
        let n_pop = counts.iter().filter(|&&c| c > 0).count();
        let part = build_areal_partition(&pop, n_pop, 11).unwrap();
        assert_eq!(part.unit_count(), n_pop);
        let mut units: Vec<usize> = pop.populated().map(|i| part.unit_of(i).unwrap()).collect();
        units.sort_unstable();
        units.dedup();
        assert_eq!(units.len(), n_pop);
    }

    #[test]
    fn two_blobs_are_recovered() {
        // 6x12 raster: blob A in columns 0..3, blob B in columns 9..12.
        let mut counts = vec![0u64; 72];
        for r in 1..5 {
            for c in 0..3 {
                counts[r * 12 + c] = 10;
            }
            for c in 9..12 {
                counts[r * 12 + c] = 7;
            }
        }
        let pop = grid(6, 12, counts);
        for seed in 0..5 {
            let part = build_areal_partition(&pop, 2, seed).unwrap();
            assert_eq!(part.unit_count(), 2);
            // Brute force: every populated cell shares a unit with the
            // populated cells of its own blob and not the other.
            let ua: Vec<usize> = pop
                .populated()
                .filter(|&i| i % 12 < 3)
                .map(|i| part.unit_of(i).unwrap())
                .collect();
            let ub: Vec<usize> = pop
                .populated()
                .filter(|&i| i % 12 >= 9)
                .map(|i| part.unit_of(i).unwrap())
                .collect();
            assert!(ua.iter().all(|&u| u == ua[0]));
            assert!(ub.iter().all(|&u| u == ub[0]));
            assert_ne!(ua[0], ub[0]);
        }
    }

    #[test]
    fn units_are_contiguous_and_conserve_population() {
        let counts: Vec<u64> = (0..400).map(|i| ((i * 37) % 11) as u64).collect();
        let pop = grid(20, 20, counts);
        let part = build_areal_partition(&pop, 15, 5).unwrap();
        let comps = components(part.raster(), part.unit_ids());
        assert_eq!(comps.len(), part.unit_count());
        let mut per_unit = vec![0u64; part.unit_count() + 1];
        for i in 0..pop.len() {
            per_unit[part.unit_ids()[i]] += pop.count(i);
        }
        assert_eq!(per_unit.iter().sum::<u64>(), pop.total());
        assert!(per_unit[1..].iter().all(|&p| p > 0));
    }

    #[test]
    fn target_out_of_range() {
        let pop = grid(2, 2, vec![1, 1, 0, 1]);
        assert!(build_areal_partition(&pop, 1, 0).is_err());
        assert!(build_areal_partition(&pop, 4, 0).is_err());
    }

    #[test]
    fn invalid_partitions_rejected() {
        let pop = grid(1, 3, vec![1, 0, 1]);
        assert!(ArealPartition::new(&pop, vec![1, 1, 0]).is_err());
        assert!(ArealPartition::new(&pop, vec![1, 2, 1]).is_err());
        assert!(ArealPartition::new(&pop, vec![1, 1, 2]).is_ok());
    }
}
