use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::cholesky::CholeskyFactor;
use crate::error::{Error, Result};

/// Hard linear constraints `A x = 0`, stored as dense rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl ConstraintSet {
    pub fn empty(n: usize) -> Self {
        ConstraintSet { n, rows: Vec::new() }
    }

    pub fn new(n: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: r.len(),
            });
        }
        Ok(ConstraintSet { n, rows })
    }

    /// Sum-to-zero over the index range `start..start + len` of an
    /// `n`-vector.
    pub fn sum_to_zero(n: usize, start: usize, len: usize) -> Self {
        let mut row = vec![0.0; n];
        row[start..start + len].iter_mut().for_each(|v| *v = 1.0);
        ConstraintSet { n, rows: vec![row] }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Euclidean projection onto the null space of `A`.
    pub fn project(&self, x: &mut [f64]) {
        let k = self.k();
        if k == 0 {
            return;
        }
        let m = DMatrix::from_fn(k, k, |a, b| {
            self.rows[a].iter().zip(&self.rows[b]).map(|(x, y)| x * y).sum()
        });
        let Some(chol) = m.cholesky() else { return };
        let coef = chol.solve(&DVector::from_vec(self.apply(x)));
        for (row, &c) in self.rows.iter().zip(coef.iter()) {
            for (xi, r) in x.iter_mut().zip(row) {
                *xi -= c * r;
            }
        }
    }

    /// `ln det(A A')`
    pub fn log_det_aat(&self) -> f64 {
        let k = self.k();
        if k == 0 {
            return 0.0;
        }
        let m = DMatrix::from_fn(k, k, |a, b| {
            self.rows[a].iter().zip(&self.rows[b]).map(|(x, y)| x * y).sum()
        });
        m.cholesky()
            .map(|c| 2.0 * c.l().diagonal().iter().map(|v: &f64| v.ln()).sum::<f64>())
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Conditioning-by-kriging terms `V = Q^{-1} A'` and `W = A V` for a
/// factor and a constraint set.
#[derive(Debug, Clone)]
pub struct Kriging {
    /// Columns of `V`.
    v: Vec<Vec<f64>>,
    w_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    log_det_w: f64,
}

impl Kriging {
    pub fn new(f: &CholeskyFactor, c: &ConstraintSet) -> Result<Self> {
        if c.n() != f.n() {
            return Err(Error::DimensionMismatch {
                expected: f.n(),
                found: c.n(),
            });
        }
        let k = c.k();
        if k == 0 {
            return Ok(Kriging {
                v: Vec::new(),
                w_chol: None,
                log_det_w: 0.0,
            });
        }
        let v: Vec<Vec<f64>> = c.rows().iter().map(|r| f.solve(r)).collect::<Result<_>>()?;
        let w = DMatrix::from_fn(k, k, |a, b| {
            c.rows()[a].iter().zip(&v[b]).map(|(x, y)| x * y).sum()
        });
        let w = (&w + w.transpose()) * 0.5;
        let chol = w.clone().cholesky().ok_or(Error::SingularConstraints)?;
        // Reject numerically rank-deficient A relative to the scale of W.
        let scale = w.diagonal().max();
        if chol.l().diagonal().iter().any(|d: &f64| d * d <= 1e-12 * scale) {
            return Err(Error::SingularConstraints);
        }
        let log_det_w = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det_w.is_finite() {
            return Err(Error::SingularConstraints);
        }
        Ok(Kriging {
            v,
            w_chol: Some(chol),
            log_det_w,
        })
    }

    pub fn is_trivial(&self) -> bool {
        self.v.is_empty()
    }

    /// `ln det(A Q^{-1} A')`
    pub fn log_det_w(&self) -> f64 {
        self.log_det_w
    }

    /// `x - V W^{-1} (A x - e)`
    pub fn correct(&self, c: &ConstraintSet, x: &mut [f64], e: &[f64]) {
        let Some(chol) = &self.w_chol else { return };
        let r: Vec<f64> = c.apply(x).iter().zip(e).map(|(a, b)| a - b).collect();
        let coef = chol.solve(&DVector::from_vec(r));
        for (col, &cf) in self.v.iter().zip(coef.iter()) {
            for (xi, vi) in x.iter_mut().zip(col) {
                *xi -= cf * vi;
            }
        }
    }

    /// `a' V W^{-1} V' a` for a sparse functional `a`: the variance removed
    /// by conditioning on the constraints.
    pub fn variance_reduction(&self, a: &[(usize, f64)]) -> f64 {
        let Some(chol) = &self.w_chol else { return 0.0 };
        let va = DVector::from_iterator(
            self.v.len(),
            self.v.iter().map(|col| a.iter().map(|&(i, w)| w * col[i]).sum::<f64>()),
        );
        let z = chol.l().solve_lower_triangular(&va).expect("positive diagonal");
        z.norm_squared()
    }
}

/// Draw from `N(mean, Q^{-1})` conditioned on `A x = 0`.
pub fn sample_constrained(
    f: &CholeskyFactor,
    mean: &[f64],
    c: &ConstraintSet,
    seed: u64,
) -> Result<Vec<f64>> {
    let kr = Kriging::new(f, c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = f.sample_with(mean, &mut rng)?;
    kr.correct(c, &mut x, &vec![0.0; c.k()]);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmrf::{cholesky, SparseSymMatrix};

    #[test]
    fn no_constraints_equals_plain_sample() {
        let f = cholesky(&SparseSymMatrix::from_diagonal(&[1.0, 2.0, 3.0])).unwrap();
        let a = sample_constrained(&f, &[0.0; 3], &ConstraintSet::empty(3), 9).unwrap();
        let b = f.sample_gaussian(&[0.0; 3], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sum_to_zero_exact() {
        let f = cholesky(&SparseSymMatrix::identity(6)).unwrap();
        let c = ConstraintSet::sum_to_zero(6, 0, 6);
        for seed in 0..20 {
            let x = sample_constrained(&f, &[0.0; 6], &c, seed).unwrap();
            assert!(x.iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn conditional_covariance_three_dim() {
        let f = cholesky(&SparseSymMatrix::identity(3)).unwrap();
        let c = ConstraintSet::sum_to_zero(3, 0, 3);
        let kr = Kriging::new(&f, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut cov = [[0.0; 3]; 3];
        for _ in 0..n {
            let mut x = f.sample_with(&[0.0; 3], &mut rng).unwrap();
            kr.correct(&c, &mut x, &[0.0]);
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += x[a] * x[b] / n as f64;
                }
            }
        }
        // analytic: I - J/3
        for a in 0..3 {
            for b in 0..3 {
                let target = if a == b { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((cov[a][b] - target).abs() < 4.0 / (n as f64).sqrt());
            }
        }
        // analytic variance reduction for e_0: 1/3
        assert!((kr.variance_reduction(&[(0, 1.0)]) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_constraints_rejected() {
        let f = cholesky(&SparseSymMatrix::identity(3)).unwrap();
        let c = ConstraintSet::new(3, vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        assert!(matches!(Kriging::new(&f, &c), Err(Error::SingularConstraints)));
    }
}
