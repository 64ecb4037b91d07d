use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ordering::minimum_degree;
use super::sparse::SparseSymMatrix;
use crate::error::{Error, Result};

/// Fill-reducing ordering and the sparsity pattern of the factor for one
/// matrix pattern. Reusable for every matrix with exactly that pattern.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `iperm[old] = new`
    iperm: Vec<usize>,
    /// Factor pattern, CSC, diagonal first in each column.
    l_ptr: Vec<usize>,
    l_row: Vec<usize>,
    /// Pattern the analysis was built for.
    a_ptr: Vec<usize>,
    a_row: Vec<usize>,
    /// For each stored entry of A, its (permuted column, permuted row).
    a_dest: Vec<(usize, usize)>,
}

impl SymbolicCholesky {
    pub fn analyse(a: &SparseSymMatrix) -> Self {
        let n = a.n();
        let perm = minimum_degree(&a.adjacency());
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut a_dest = Vec::with_capacity(a.nnz());
        let mut lower_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j, _) in a.iter() {
            let (pi, pj) = (iperm[i], iperm[j]);
            let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
            a_dest.push((c, r));
            if r != c {
                lower_adj[c].push(r);
            }
        }

        // Column patterns via the elimination tree: struct(L_j) is the
        // lower pattern of A_j united with the children's patterns.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut patterns: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut mark = vec![usize::MAX; n];
        for j in 0..n {
            let mut pat: Vec<usize> = Vec::new();
            mark[j] = j;
            for &r in &lower_adj[j] {
                if mark[r] != j {
                    mark[r] = j;
                    pat.push(r);
                }
            }
            for &c in &children[j] {
                let cp: &Vec<usize> = &patterns[c];
                for &r in cp {
                    if r > j && mark[r] != j {
                        mark[r] = j;
                        pat.push(r);
                    }
                }
            }
            pat.sort_unstable();
            if let Some(&parent) = pat.first() {
                children[parent].push(j);
            }
            patterns.push(pat);
        }

        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_row = Vec::new();
        l_ptr.push(0);
        for (j, pat) in patterns.iter().enumerate() {
            l_row.push(j);
            l_row.extend_from_slice(pat);
            l_ptr.push(l_row.len());
        }

        SymbolicCholesky {
            n,
            perm,
            iperm,
            l_ptr,
            l_row,
            a_ptr: a.col_ptr().to_vec(),
            a_row: a.row_idx().to_vec(),
            a_dest,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_row.len()
    }

    pub fn matches(&self, a: &SparseSymMatrix) -> bool {
        a.n() == self.n && a.col_ptr() == self.a_ptr.as_slice() && a.row_idx() == self.a_row.as_slice()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }
}

/// `P Q P' = L L'` for a symmetric positive-definite `Q`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicCholesky>,
    l_val: Vec<f64>,
}

/// Factorises with a freshly computed ordering.
pub fn cholesky(q: &SparseSymMatrix) -> Result<CholeskyFactor> {
    CholeskyFactor::new(Arc::new(SymbolicCholesky::analyse(q)), q)
}

impl CholeskyFactor {
    /// Left-looking numeric factorisation against a prior analysis.
    pub fn new(symbolic: Arc<SymbolicCholesky>, q: &SparseSymMatrix) -> Result<Self> {
        if !symbolic.matches(q) {
            return Err(Error::domain("matrix pattern differs from the symbolic analysis"));
        }
        let s = &*symbolic;
        let n = s.n;

        // Permuted lower triangle of Q, column-wise.
        let mut a_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(c, r), &v) in s.a_dest.iter().zip(q.values()) {
            a_cols[c].push((r, v));
        }

        let mut l_val = vec![0.0; s.l_row.len()];
        let mut x = vec![0.0; n];
        // For each finished column k: next unconsumed position; `pending[j]`
        // lists columns whose next row is j.
        let mut next = vec![0usize; n];
        let mut pending: Vec<Vec<usize>> = vec![Vec::new(); n];

        for j in 0..n {
            for &(r, v) in &a_cols[j] {
                x[r] += v;
            }
            for k in std::mem::take(&mut pending[j]) {
                let p0 = next[k];
                let ljk = l_val[p0];
                for p in p0..s.l_ptr[k + 1] {
                    x[s.l_row[p]] -= l_val[p] * ljk;
                }
                let p1 = p0 + 1;
                if p1 < s.l_ptr[k + 1] {
                    next[k] = p1;
                    pending[s.l_row[p1]].push(k);
                }
            }
            let d = x[j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: s.perm[j],
                    value: d,
                });
            }
            let ljj = d.sqrt();
            let (start, end) = (s.l_ptr[j], s.l_ptr[j + 1]);
            l_val[start] = ljj;
            x[j] = 0.0;
            for p in start + 1..end {
                let r = s.l_row[p];
                l_val[p] = x[r] / ljj;
                x[r] = 0.0;
            }
            if start + 1 < end {
                next[j] = start + 1;
                pending[s.l_row[start + 1]].push(j);
            }
        }
        Ok(CholeskyFactor { symbolic, l_val })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    /// `ln det Q = 2 sum ln L_jj`
    pub fn logdet(&self) -> f64 {
        let s = &self.symbolic;
        2.0 * (0..s.n).map(|j| self.l_val[s.l_ptr[j]].ln()).sum::<f64>()
    }

    /// `L y = b` in place (permuted space).
    fn forward(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for j in 0..s.n {
            let (start, end) = (s.l_ptr[j], s.l_ptr[j + 1]);
            y[j] /= self.l_val[start];
            let yj = y[j];
            for p in start + 1..end {
                y[s.l_row[p]] -= self.l_val[p] * yj;
            }
        }
    }

    /// `L' x = y` in place (permuted space).
    fn backward(&self, x: &mut [f64]) {
        let s = &self.symbolic;
        for j in (0..s.n).rev() {
            let (start, end) = (s.l_ptr[j], s.l_ptr[j + 1]);
            let mut acc = x[j];
            for p in start + 1..end {
                acc -= self.l_val[p] * x[s.l_row[p]];
            }
            x[j] = acc / self.l_val[start];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let s = &self.symbolic;
        if b.len() != s.n {
            return Err(Error::DimensionMismatch {
                expected: s.n,
                found: b.len(),
            });
        }
        let mut y: Vec<f64> = s.perm.iter().map(|&old| b[old]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    /// `mean + L^{-T} z` mapped back to the original ordering, for a
    /// standard-normal `z` in permuted space.
    pub fn transform_standard_normal(&self, mean: &[f64], mut z: Vec<f64>) -> Vec<f64> {
        let s = &self.symbolic;
        self.backward(&mut z);
        let mut x = mean.to_vec();
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] += z[new];
        }
        x
    }

    /// Standard normal vector of the factor's dimension.
    pub fn standard_normal(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n()).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Draw from `N(mean, Q^{-1})` with its own seeded stream.
    pub fn sample_gaussian(&self, mean: &[f64], seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(mean, &mut rng)
    }

    pub fn sample_with(&self, mean: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if mean.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: mean.len(),
            });
        }
        let z = self.standard_normal(rng);
        Ok(self.transform_standard_normal(mean, z))
    }

    /// Entries of `Q^{-1}` on the factor's pattern (Takahashi recursion).
    pub fn selected_inverse(&self) -> SelectedInverse {
        let s = &self.symbolic;
        let n = s.n;
        let mut sig = vec![0.0; s.l_row.len()];
        let mut acc = vec![0.0; n];
        for j in (0..n).rev() {
            let (start, end) = (s.l_ptr[j], s.l_ptr[j + 1]);
            let ljj = self.l_val[start];
            // acc[i] = sum_{k in pat_j} L_kj Sigma_ik for i in pat_j
            for pk in start + 1..end {
                let k = s.l_row[pk];
                let lkj = self.l_val[pk];
                let (kstart, kend) = (s.l_ptr[k], s.l_ptr[k + 1]);
                acc[k] += lkj * sig[kstart];
                // merge pat_j (rows > k) with column k
                let mut q = kstart + 1;
                for pi in pk + 1..end {
                    let i = s.l_row[pi];
                    while s.l_row[q] < i {
                        q += 1;
                        debug_assert!(q < kend);
                    }
                    let sik = sig[q];
                    acc[i] += lkj * sik;
                    acc[k] += self.l_val[pi] * sik;
                }
            }
            let mut diag_acc = 0.0;
            for p in start + 1..end {
                let i = s.l_row[p];
                let v = -acc[i] / ljj;
                sig[p] = v;
                diag_acc += self.l_val[p] * v;
                acc[i] = 0.0;
            }
            sig[start] = 1.0 / (ljj * ljj) - diag_acc / ljj;
        }
        SelectedInverse {
            symbolic: Arc::clone(&self.symbolic),
            values: sig,
        }
    }

    /// Diagonal of `Q^{-1}` in the original ordering.
    pub fn selected_inverse_diagonal(&self) -> Vec<f64> {
        self.selected_inverse().diagonal()
    }
}

/// `Q^{-1}` restricted to the pattern of the Cholesky factor.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
}

impl SelectedInverse {
    pub fn diagonal(&self) -> Vec<f64> {
        let s = &self.symbolic;
        let mut d = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            d[old] = self.values[s.l_ptr[new]];
        }
        d
    }

    /// `(Q^{-1})_{ij}` if the pair lies on the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let s = &self.symbolic;
        let (pi, pj) = (s.iperm[i], s.iperm[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let rows = &s.l_row[s.l_ptr[c]..s.l_ptr[c + 1]];
        rows.binary_search(&r).ok().map(|p| self.values[s.l_ptr[c] + p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    /// Random sparse SPD matrix: sparse symmetric part plus a dominant diagonal.
    pub(crate) fn random_spd(n: usize, density: f64, seed: u64) -> SparseSymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        let mut rowsum = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                if rng.random::<f64>() < density {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    t.push((i, j, v));
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
        }
        for (i, s) in rowsum.iter().enumerate() {
            t.push((i, i, s + 0.5 + rng.random::<f64>()));
        }
        SparseSymMatrix::from_triplets(n, &t).unwrap()
    }

    fn reconstruct(f: &CholeskyFactor) -> DMatrix<f64> {
        let s = f.symbolic();
        let n = s.n;
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            for p in s.l_ptr[j]..s.l_ptr[j + 1] {
                l[(s.l_row[p], j)] = f.l_val[p];
            }
        }
        let pq = &l * l.transpose();
        let mut q = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                q[(s.perm[a], s.perm[b])] = pq[(a, b)];
            }
        }
        q
    }

    #[test]
    fn identity_factor() {
        let f = cholesky(&SparseSymMatrix::identity(5)).unwrap();
        assert_eq!(f.logdet(), 0.0);
        assert!(f.l_val.iter().all(|&v| v == 1.0));
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(f.selected_inverse_diagonal(), vec![1.0; 5]);
    }

    #[test]
    fn two_by_two_logdet() {
        let q = SparseSymMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let f = cholesky(&q).unwrap();
        assert!((f.logdet() - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn scaled_identity() {
        let n = 7;
        let q = SparseSymMatrix::from_diagonal(&vec![2.0; n]);
        let f = cholesky(&q).unwrap();
        assert!((f.logdet() - n as f64 * 2f64.ln()).abs() < 1e-13);
        let x = f.solve(&vec![1.0; n]).unwrap();
        assert!(x.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let d = SparseSymMatrix::from_diagonal(&[1.0, 4.0, 0.5]);
        let inv = cholesky(&d).unwrap().selected_inverse_diagonal();
        for (a, b) in inv.iter().zip([1.0, 0.25, 2.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reconstruct_random_spd() {
        let q = random_spd(50, 0.1, 1);
        let f = cholesky(&q).unwrap();
        let dense = q.to_dense();
        let err = (reconstruct(&f) - &dense).norm() / dense.norm();
        assert!(err < 1e-10, "relative Frobenius error {err}");
    }

    #[test]
    fn solve_residual() {
        let q = random_spd(80, 0.05, 2);
        let f = cholesky(&q).unwrap();
        let b: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = f.solve(&b).unwrap();
        let r: Vec<f64> = q.mul_vec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rn / bn <= 1e-8);
        assert!(f.solve(&[1.0]).is_err());
    }

    #[test]
    fn logdet_against_dense() {
        for (n, seed) in [(20, 3), (120, 4), (200, 5)] {
            let q = random_spd(n, 0.08, seed);
            let f = cholesky(&q).unwrap();
            let dense = q.to_dense().cholesky().unwrap();
            let ld: f64 = 2.0 * dense.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            assert!((f.logdet() - ld).abs() < 1e-9 * ld.abs().max(1.0));
        }
    }

    #[test]
    fn selected_inverse_against_dense() {
        let q = random_spd(100, 0.06, 6);
        let f = cholesky(&q).unwrap();
        let sinv = f.selected_inverse();
        let dense = q.to_dense().try_inverse().unwrap();
        let diag = sinv.diagonal();
        for i in 0..100 {
            assert!((diag[i] - dense[(i, i)]).abs() <= 1e-8);
        }
        for (i, j, _) in q.iter() {
            let v = sinv.get(i, j).expect("Q pattern lies inside the factor pattern");
            assert!((v - dense[(i, j)]).abs() <= 1e-8);
        }
    }

    #[test]
    fn not_positive_definite() {
        let q = SparseSymMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(cholesky(&q), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn sampling_moments() {
        let f = cholesky(&SparseSymMatrix::identity(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mut cov = [[0.0; 3]; 3];
        for _ in 0..n {
            let x = f.sample_with(&[0.0; 3], &mut rng).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += x[a] * x[b] / n as f64;
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                // Var(x^2) = 2, Var(x y) = 1
                let (target, sd) = if a == b { (1.0, 2f64.sqrt()) } else { (0.0, 1.0) };
                assert!((cov[a][b] - target).abs() < 4.5 * sd / (n as f64).sqrt(), "cov[{a}][{b}]");
            }
        }

        let f1 = cholesky(&SparseSymMatrix::from_diagonal(&[4.0])).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| f1.sample_with(&[0.0], &mut rng).unwrap()[0]).collect();
        let sd = (draws.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        assert!((sd - 0.5).abs() < 4.0 * 0.5 / (2.0 * n as f64).sqrt());
    }

    #[test]
    fn mean_shift_is_affine() {
        let q = random_spd(10, 0.3, 8);
        let f = cholesky(&q).unwrap();
        let m: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let a = f.sample_gaussian(&m, 3).unwrap();
        let b = f.sample_gaussian(&[0.0; 10], 3).unwrap();
        for i in 0..10 {
            assert!((a[i] - b[i] - m[i]).abs() < 1e-12);
        }
    }
}
