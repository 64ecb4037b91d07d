use std::collections::{BTreeSet, VecDeque};

use super::ArealPartition;
use crate::error::{Error, Result};

/// First-order (rook) neighbourhood graph over areal units, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbours: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Builds a symmetric graph from undirected edges; self-loops and
    /// duplicates are ignored. Fails if the graph is disconnected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::domain(format!("edge ({a}, {b}) out of range for {n} units")));
            }
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        let graph = AdjacencyGraph {
            neighbours: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        };
        graph.check_connected()?;
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbours[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> u8 {
        u8::from(self.neighbours[i].binary_search(&j).is_ok())
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbours
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &w in &self.neighbours[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        q.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    fn check_connected(&self) -> Result<()> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(Error::Disconnected { components: comps });
        }
        Ok(())
    }
}

/// Units are neighbours iff they share at least one raster cell edge.
pub fn adjacency_from_partition(part: &ArealPartition) -> Result<AdjacencyGraph> {
    let raster = part.raster();
    let mut edges = Vec::new();
    for cell in 0..raster.len() {
        let Some(u) = part.unit_of(cell) else { continue };
        for nb in raster.neighbours(cell).filter(|&nb| nb > cell) {
            if let Some(v) = part.unit_of(nb) {
                if u != v {
                    edges.push((u - 1, v - 1));
                }
            }
        }
    }
    AdjacencyGraph::from_edges(part.unit_count(), &edges)
}
