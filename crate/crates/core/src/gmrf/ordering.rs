use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Minimum-degree elimination ordering on an explicit elimination graph.
/// Ties break towards the smaller index, so the result is deterministic.
/// Returns `perm` with `perm[new] = old`.
pub fn minimum_degree(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut graph: Vec<Vec<usize>> = adj.to_vec();
    for g in &mut graph {
        g.sort_unstable();
        g.dedup();
    }
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|v| Reverse((graph[v].len(), v))).collect();
    let mut perm = Vec::with_capacity(n);

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != graph[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut graph[v]);
        for &u in &nbrs {
            // N(u) <- (N(u) ∪ N(v)) \ {u, v}
            let merged = merge_excluding(&graph[u], &nbrs, u, v);
            graph[u] = merged;
            heap.push(Reverse((graph[u].len(), u)));
        }
    }
    perm
}

fn merge_excluding(a: &[usize], b: &[usize], skip1: usize, skip2: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if next != skip1 && next != skip2 {
            out.push(next);
        }
    }
    out
}
