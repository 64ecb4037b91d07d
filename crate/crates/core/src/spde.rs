//! Finite-element GMRF approximation of a Matérn (nu = 1) field on a
//! regular triangular lattice.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Point, Window};
use crate::error::{Error, Result};
use crate::gmrf::{SparseMatrix, SparseSymMatrix};
use crate::special::bessel_k1;

/// Prior median of the range, in metres.
pub const RANGE_PRIOR_MEDIAN: f64 = 30_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Lattice {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    interior: Vec<bool>,
    lattice: Option<Lattice>,
}

impl Mesh {
    /// A general triangulation. Triangles are reoriented counter-clockwise;
    /// degenerate ones are rejected.
    pub fn from_parts(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, window: &Window) -> Result<Self> {
        let mut tris = Vec::with_capacity(triangles.len());
        for mut t in triangles {
            if t.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::domain("triangle refers to a missing node"));
            }
            let a = signed_area(&nodes[t[0]], &nodes[t[1]], &nodes[t[2]]);
            if a.abs() <= 1e-12 {
                return Err(Error::domain(format!("degenerate triangle {t:?}")));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
            tris.push(t);
        }
        let interior = nodes.iter().map(|p| window.contains(p)).collect();
        Ok(Mesh {
            nodes,
            triangles: tris,
            interior,
            lattice: None,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Whether each node lies inside the observation window.
    pub fn interior(&self) -> &[bool] {
        &self.interior
    }

    /// Bounding box of the nodes.
    pub fn bounds(&self) -> Window {
        let mut w = Window {
            xmin: f64::INFINITY,
            ymin: f64::INFINITY,
            xmax: f64::NEG_INFINITY,
            ymax: f64::NEG_INFINITY,
        };
        for p in &self.nodes {
            w.xmin = w.xmin.min(p.x);
            w.ymin = w.ymin.min(p.y);
            w.xmax = w.xmax.max(p.x);
            w.ymax = w.ymax.max(p.y);
        }
        w
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| signed_area(&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]]))
            .sum()
    }

    /// Containing triangle and barycentric weights of `p`.
    pub fn locate(&self, p: &Point) -> Option<(usize, [f64; 3])> {
        match self.lattice {
            Some(l) => self.locate_lattice(&l, p),
            None => self.triangles.iter().enumerate().find_map(|(k, t)| {
                let w = barycentric(&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]], p);
                let tol = -1e-10;
                (w.iter().all(|&v| v >= tol)).then_some((k, w.map(|v| v.max(0.0))))
            }),
        }
    }

    fn locate_lattice(&self, l: &Lattice, p: &Point) -> Option<(usize, [f64; 3])> {
        let fx = (p.x - l.x0) / l.h;
        let fy = (p.y - l.y0) / l.h;
        let eps = 1e-9;
        if !(fx >= -eps && fx <= l.nx as f64 + eps && fy >= -eps && fy <= l.ny as f64 + eps) {
            return None;
        }
        let ix = (fx.floor().max(0.0) as usize).min(l.nx - 1);
        let iy = (fy.floor().max(0.0) as usize).min(l.ny - 1);
        let u = (fx - ix as f64).clamp(0.0, 1.0);
        let v = (fy - iy as f64).clamp(0.0, 1.0);
        let cell = iy * l.nx + ix;
        if u >= v {
            Some((2 * cell, [1.0 - u, u - v, v]))
        } else {
            Some((2 * cell + 1, [1.0 - v, u, v - u]))
        }
    }

    /// Writes `nodes.csv` (`node_id,x,y,interior`) and `triangles.csv`
    /// (`triangle_id,a,b,c`) into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("nodes.csv");
        let io = |e| Error::io(&path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io)?);
        writeln!(w, "node_id,x,y,interior").map_err(io)?;
        for (i, (p, inside)) in self.nodes.iter().zip(&self.interior).enumerate() {
            writeln!(w, "{i},{},{},{}", p.x, p.y, u8::from(*inside)).map_err(io)?;
        }
        w.flush().map_err(io)?;

        let path = dir.join("triangles.csv");
        let io = |e| Error::io(&path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io)?);
        writeln!(w, "triangle_id,a,b,c").map_err(io)?;
        for (k, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{k},{},{},{}", t[0], t[1], t[2]).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

fn barycentric(a: &Point, b: &Point, c: &Point, p: &Point) -> [f64; 3] {
    let area = signed_area(a, b, c);
    [
        signed_area(p, b, c) / area,
        signed_area(a, p, c) / area,
        signed_area(a, b, p) / area,
    ]
}

/// Default mesh extension: the prior median range, capped at a quarter of
/// the longer window side.
pub fn default_extension(window: &Window) -> f64 {
    RANGE_PRIOR_MEDIAN.min(0.25 * window.width().max(window.height()))
}

/// Regular lattice of squares split along the rising diagonal, covering the
/// window grown by `extension` on every side. The last row and column are
/// pushed out so the spacing stays exact.
pub fn build_mesh(window: &Window, spacing: f64, extension: f64) -> Result<Mesh> {
    window.validate()?;
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::config(format!("mesh spacing must be positive, got {spacing}")));
    }
    if !(extension >= 0.0) || !extension.is_finite() {
        return Err(Error::config(format!("mesh extension must be non-negative, got {extension}")));
    }
    let x0 = window.xmin - extension;
    let y0 = window.ymin - extension;
    let cells = |len: f64| ((len / spacing) - 1e-9).ceil().max(1.0) as usize;
    let nx = cells(window.width() + 2.0 * extension);
    let ny = cells(window.height() + 2.0 * extension);

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Point::new(x0 + i as f64 * spacing, y0 + j as f64 * spacing));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let interior = nodes.iter().map(|p| window.contains(p)).collect();
    Ok(Mesh {
        nodes,
        triangles,
        interior,
        lattice: Some(Lattice {
            x0,
            y0,
            h: spacing,
            nx,
            ny,
        }),
    })
}

/// Lumped mass `C`, stiffness `G` and `G C^{-1} G`, the three matrices
/// sharing one sparsity pattern.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    c: Vec<f64>,
    g: SparseSymMatrix,
    gcg: SparseSymMatrix,
    c_on_pattern: Vec<f64>,
}

impl FemMatrices {
    /// Diagonal of the lumped mass matrix.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn g(&self) -> &SparseSymMatrix {
        &self.g
    }

    pub fn gcg(&self) -> &SparseSymMatrix {
        &self.gcg
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }
}

pub fn assemble_fem(mesh: &Mesh) -> Result<FemMatrices> {
    let n = mesh.len();
    let mut c = vec![0.0; n];
    let mut gt = Vec::with_capacity(mesh.triangles.len() * 6);
    for t in &mesh.triangles {
        let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
        let area = signed_area(&p[0], &p[1], &p[2]);
        if !(area > 1e-12) {
            return Err(Error::domain(format!("degenerate or clockwise triangle {t:?}")));
        }
        // gradients of the hat functions times 2A
        let b = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
        let d = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
        for a in 0..3 {
            c[t[a]] += area / 3.0;
            for e in 0..=a {
                gt.push((t[a], t[e], (b[a] * b[e] + d[a] * d[e]) / (4.0 * area)));
            }
        }
    }
    let g = SparseSymMatrix::from_triplets(n, &gt)?;

    let adj = g.adjacency();
    let mut kt = Vec::new();
    for k in 0..n {
        let mut row: Vec<(usize, f64)> = vec![(k, g.get(k, k))];
        row.extend(adj[k].iter().map(|&j| (j, g.get(k, j))));
        for &(i, gi) in &row {
            for &(j, gj) in &row {
                if i >= j {
                    kt.push((i, j, gi * gj / c[k]));
                }
            }
        }
    }
    let gcg = SparseSymMatrix::from_triplets(n, &kt)?;
    // Put G and C on the (wider) pattern of G C^{-1} G.
    let zeros: Vec<(usize, usize, f64)> = gcg.iter().map(|(i, j, _)| (i, j, 0.0)).collect();
    let mut g_t: Vec<_> = g.iter().collect();
    g_t.extend(zeros.iter().copied());
    let g = SparseSymMatrix::from_triplets(n, &g_t)?;
    let c_on_pattern: Vec<f64> = gcg.iter().map(|(i, j, _)| if i == j { c[i] } else { 0.0 }).collect();
    debug_assert!(g.same_pattern(&gcg));
    Ok(FemMatrices {
        c,
        g,
        gcg,
        c_on_pattern,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternHyper {
    pub rho: f64,
    pub sigma: f64,
}

impl MaternHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.sigma > 0.0) || !self.rho.is_finite() || !self.sigma.is_finite() {
            return Err(Error::domain(format!(
                "range and sd must be positive, got rho = {}, sigma = {}",
                self.rho, self.sigma
            )));
        }
        Ok(())
    }

    /// `sqrt(8 nu) / rho` with `nu = 1`.
    pub fn kappa(&self) -> f64 {
        8f64.sqrt() / self.rho
    }

    /// `1 / (4 pi kappa^2 sigma^2)`
    pub fn tau_sq(&self) -> f64 {
        let k = self.kappa();
        1.0 / (4.0 * std::f64::consts::PI * k * k * self.sigma * self.sigma)
    }
}

/// `tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)`
pub fn spde_precision(fem: &FemMatrices, hyper: &MaternHyper) -> Result<SparseSymMatrix> {
    hyper.validate()?;
    let k2 = hyper.kappa().powi(2);
    let t2 = hyper.tau_sq();
    let mut q = fem.gcg.clone();
    for ((q, &c), &g) in q.values_mut().iter_mut().zip(&fem.c_on_pattern).zip(fem.g.values()) {
        *q = t2 * (k2 * k2 * c + 2.0 * k2 * g + *q);
    }
    Ok(q)
}

/// `sigma^2 (kappa h) K_1(kappa h)`
pub fn matern_covariance(h: f64, hyper: &MaternHyper) -> f64 {
    let s2 = hyper.sigma * hyper.sigma;
    if h <= 0.0 {
        return s2;
    }
    let x = hyper.kappa() * h;
    s2 * x * bessel_k1(x)
}

/// Barycentric interpolation rows for `points`.
pub fn projector(mesh: &Mesh, points: &[Point]) -> Result<SparseMatrix> {
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let (t, w) = mesh.locate(p).ok_or(Error::OutsideMesh { x: p.x, y: p.y })?;
        let tri = mesh.triangles[t];
        rows.push(
            tri.iter()
                .zip(w)
                .filter(|&(_, w)| w > 0.0)
                .map(|(&i, w)| (i, w))
                .collect(),
        );
    }
    SparseMatrix::from_rows(mesh.len(), rows)
}

/// Rates of the joint PC prior on `(rho, sigma)`.
pub fn pc_range_sigma_rates() -> (f64, f64) {
    (-RANGE_PRIOR_MEDIAN * 0.5f64.ln(), -crate::bym::SIGMA_TAIL_PROB.ln())
}

/// `lr rho^-2 exp(-lr / rho) * ls exp(-ls sigma)` on the log scale.
pub fn pc_log_prior_range_sigma(hyper: &MaternHyper) -> Result<f64> {
    hyper.validate()?;
    let (lr, ls) = pc_range_sigma_rates();
    Ok(lr.ln() - 2.0 * hyper.rho.ln() - lr / hyper.rho + ls.ln() - ls * hyper.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmrf::cholesky;

    fn unit() -> Window {
        Window::new(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn unit_square_single_cell() {
        let m = build_mesh(&unit(), 1.0, 0.0).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.triangles().len(), 2);
        assert!(m.interior().iter().all(|&b| b));
    }

    #[test]
    fn node_count_on_rectangle() {
        let w = Window::new(0.0, 0.0, 4000.0, 3000.0).unwrap();
        let m = build_mesh(&w, 500.0, 0.0).unwrap();
        assert_eq!(m.len(), 9 * 7);
        let m = build_mesh(&w, 500.0, 1000.0).unwrap();
        assert_eq!(m.len(), 13 * 11);
        assert_eq!(m.interior().iter().filter(|&&b| b).count(), 9 * 7);
    }

    #[test]
    fn single_element_oracle() {
        let nodes = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let m = Mesh::from_parts(nodes, vec![[0, 1, 2]], &unit()).unwrap();
        assert!((m.area() - 0.5).abs() < 1e-15);
        let f = assemble_fem(&m).unwrap();
        assert!(f.c().iter().all(|&c| (c - 1.0 / 6.0).abs() < 1e-15));
        // stiffness of the reference triangle
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((f.g().get(i, j) - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fem_invariants() {
        let w = Window::new(0.0, 0.0, 3000.0, 2000.0).unwrap();
        let m = build_mesh(&w, 400.0, 700.0).unwrap();
        let f = assemble_fem(&m).unwrap();
        let rs = f.g().mul_vec(&vec![1.0; m.len()]);
        assert!(rs.iter().all(|v| v.abs() < 1e-12));
        assert!(f.c().iter().all(|&c| c > 0.0));
        let total: f64 = f.c().iter().sum();
        let b = m.bounds();
        assert!((total - (b.xmax - b.xmin) * (b.ymax - b.ymin)).abs() < 1e-9 * total);
    }

    #[test]
    fn kappa_and_scaling() {
        let h = MaternHyper { rho: 30_000.0, sigma: 1.0 };
        assert!((h.kappa() - 9.428_090_415_820_634e-5).abs() < 1e-15);
        let m = build_mesh(&unit(), 0.25, 0.0).unwrap();
        let f = assemble_fem(&m).unwrap();
        let q1 = spde_precision(&f, &MaternHyper { rho: 0.5, sigma: 1.0 }).unwrap();
        let q2 = spde_precision(&f, &MaternHyper { rho: 0.5, sigma: 2.0 }).unwrap();
        for (a, b) in q1.values().iter().zip(q2.values()) {
            assert!((a / 4.0 - b).abs() <= 1e-14 * a.abs());
        }
        assert!(cholesky(&q1).is_ok());
        assert!(spde_precision(&f, &MaternHyper { rho: 0.0, sigma: 1.0 }).is_err());
    }

    #[test]
    fn matern_values() {
        let h = MaternHyper { rho: 3000.0, sigma: 2.0 };
        assert_eq!(matern_covariance(0.0, &h), 4.0);
        assert!((matern_covariance(3000.0, &h) / 4.0 - 0.1396).abs() < 1e-4);
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let c = matern_covariance(i as f64 * 50.0, &h);
            assert!(c < prev);
            prev = c;
        }
    }

    #[test]
    fn projector_rows() {
        let w = Window::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let m = build_mesh(&w, 2.0, 0.0).unwrap();
        let a = projector(&m, &[Point::new(4.0, 6.0)]).unwrap();
        assert_eq!(a.row_vec(0).len(), 1);
        assert_eq!(a.row_vec(0)[0].1, 1.0);
        // centroid of the lower triangle in the first cell
        let a = projector(&m, &[Point::new(4.0 / 3.0, 2.0 / 3.0)]).unwrap();
        let r = a.row_vec(0);
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|&(_, v)| (v - 1.0 / 3.0).abs() < 1e-12));
        // linear reproduction
        let f = |p: &Point| 1.5 - 0.3 * p.x + 2.0 * p.y;
        let vals: Vec<f64> = m.nodes().iter().map(f).collect();
        let pts = [Point::new(3.3, 7.1), Point::new(9.99, 0.01), Point::new(10.0, 10.0), Point::new(5.5, 5.5)];
        let a = projector(&m, &pts).unwrap();
        for (p, v) in pts.iter().zip(a.mul_vec(&vals)) {
            assert!((v - f(p)).abs() < 1e-12);
        }
        for i in 0..pts.len() {
            let s: f64 = a.row(i).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12 && a.row(i).all(|(_, v)| v >= 0.0));
        }
        assert!(matches!(projector(&m, &[Point::new(-1.0, 2.0)]), Err(Error::OutsideMesh { .. })));
    }

    #[test]
    fn general_mesh_locate_matches_lattice() {
        let w = Window::new(0.0, 0.0, 6.0, 4.0).unwrap();
        let m = build_mesh(&w, 1.0, 0.0).unwrap();
        let g = Mesh::from_parts(m.nodes().to_vec(), m.triangles().to_vec(), &w).unwrap();
        for p in [Point::new(0.3, 0.2), Point::new(5.2, 3.9), Point::new(2.5, 1.5)] {
            let a = projector(&m, &[p]).unwrap();
            let b = projector(&g, &[p]).unwrap();
            let v: Vec<f64> = (0..m.len()).map(|i| i as f64).collect();
            assert!((a.mul_vec(&v)[0] - b.mul_vec(&v)[0]).abs() < 1e-12);
        }
    }

    fn quad_log(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        // trapezoid in t = ln x of f(x) x
        let (la, lb) = (a.ln(), b.ln());
        let h = (lb - la) / n as f64;
        let g = |t: f64| f(t.exp()) * t.exp();
        let mut s = 0.5 * (g(la) + g(lb));
        for i in 1..n {
            s += g(la + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn prior_calibration() {
        let (lr, ls) = pc_range_sigma_rates();
        assert!((lr - 20_794.415_416_798_36).abs() < 1e-6);
        let rho_density = |r: f64| lr * r.powi(-2) * (-lr / r).exp();
        let p = quad_log(rho_density, 1.0, 30_000.0, 100_000);
        assert!((p - 0.5).abs() < 1e-6, "{p}");
        let sigma_density = |s: f64| ls * (-ls * s).exp();
        let p = quad_log(sigma_density, 1.0, 100.0, 100_000);
        assert!((p - 0.01).abs() < 1e-6, "{p}");
        let a = pc_log_prior_range_sigma(&MaternHyper { rho: 1000.0, sigma: 0.5 }).unwrap()
            - pc_log_prior_range_sigma(&MaternHyper { rho: 1000.0, sigma: 2.0 }).unwrap();
        let b = pc_log_prior_range_sigma(&MaternHyper { rho: 9e4, sigma: 0.5 }).unwrap()
            - pc_log_prior_range_sigma(&MaternHyper { rho: 9e4, sigma: 2.0 }).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn mesh_csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_mesh(&unit(), 0.5, 0.0).unwrap();
        m.write_csv(dir.path()).unwrap();
        let nodes = std::fs::read_to_string(dir.path().join("nodes.csv")).unwrap();
        assert_eq!(nodes.lines().count(), 10);
        let tris = std::fs::read_to_string(dir.path().join("triangles.csv")).unwrap();
        assert_eq!(tris.lines().count(), 9);
    }
}
