//! Ground-truth risk surfaces: flat, step (closed discs) and smooth
//! (maximum of Gaussian bumps), with parameters solved against a population.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Point, PopulationGrid};
use crate::error::{Error, Result};

/// Share of an isolated Gaussian excess that falls inside the disc of
/// radius `r`.
pub const DISC_MASS_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleSpec {
    pub centres: Vec<Point>,
    pub radius: f64,
}

impl CircleSpec {
    pub fn min_dist2(&self, p: &Point) -> f64 {
        self.centres
            .iter()
            .map(|c| c.dist2(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.min_dist2(p) <= self.radius * self.radius
    }

    fn validate(&self, pop: &PopulationGrid) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::config("circle radius must be positive"));
        }
        if self.centres.is_empty() {
            return Err(Error::config("at least one circle centre is required"));
        }
        if let Some(c) = self.centres.iter().find(|c| !pop.window().contains(c)) {
            return Err(Error::config(format!("circle centre {c:?} outside window")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurface {
    pub lambda0: f64,
    /// Excess fraction `c - 1`.
    pub alpha: f64,
    pub circles: CircleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSurface {
    pub lambda0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub circles: CircleSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Flat,
    Step,
    Smooth,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Flat => "flat",
            Shape::Step => "step",
            Shape::Smooth => "smooth",
        })
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Shape::Flat),
            "step" => Ok(Shape::Step),
            "smooth" => Ok(Shape::Smooth),
            other => Err(Error::config(format!("unknown shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RiskSurface {
    Flat { lambda0: f64 },
    Step(StepSurface),
    Smooth(SmoothSurface),
}

impl RiskSurface {
    pub fn shape(&self) -> Shape {
        match self {
            RiskSurface::Flat { .. } => Shape::Flat,
            RiskSurface::Step(_) => Shape::Step,
            RiskSurface::Smooth(_) => Shape::Smooth,
        }
    }

    pub fn lambda0(&self) -> f64 {
        match self {
            RiskSurface::Flat { lambda0 } => *lambda0,
            RiskSurface::Step(s) => s.lambda0,
            RiskSurface::Smooth(s) => s.lambda0,
        }
    }

    pub fn risk_at(&self, p: &Point) -> f64 {
        match self {
            RiskSurface::Flat { lambda0 } => *lambda0,
            RiskSurface::Step(s) => step_risk_at(s, p),
            RiskSurface::Smooth(s) => smooth_risk_at(s, p),
        }
    }
}

pub fn step_risk_at(surface: &StepSurface, p: &Point) -> f64 {
    let inside = f64::from(u8::from(surface.circles.contains(p)));
    surface.lambda0 * (1.0 + surface.alpha * inside)
}

pub fn smooth_risk_at(surface: &SmoothSurface, p: &Point) -> f64 {
    surface.lambda0 + surface.beta * gaussian_bump(&surface.circles, surface.gamma, p)
}

/// `max_l exp(-|p - x_l|^2 / (2 gamma^2))`; the max of the bumps equals
/// the bump of the nearest centre.
fn gaussian_bump(circles: &CircleSpec, gamma: f64, p: &Point) -> f64 {
    (-circles.min_dist2(p) / (2.0 * gamma * gamma)).exp()
}

/// Length-scale `gamma` such that a disc of radius `r` holds
/// [`DISC_MASS_FRACTION`] of an isotropic planar Gaussian, found by
/// bisection on `1 - exp(-r^2 / (2 gamma^2))`.
pub fn solve_gamma(r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::config(format!("radius must be positive, got {r}")));
    }
    let mass = |g: f64| 1.0 - (-(r * r) / (2.0 * g * g)).exp();
    // Disc mass decreases in gamma.
    let (mut lo, mut hi) = (r * 1e-3, r * 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > DISC_MASS_FRACTION {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scenario inputs for [`solve_surface_parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRequest<'a> {
    pub circles: &'a CircleSpec,
    pub shape: Shape,
    /// Risk ratio inside vs outside the circles.
    pub c: f64,
    /// Multiplier on the reference case count.
    pub k: f64,
    pub n_ref: f64,
}

/// Solves the surface parameters so that the expected number of cases over
/// the population equals `k * n_ref`; the smooth surface also matches the
/// step surface's expected excess.
pub fn solve_surface_parameters(pop: &PopulationGrid, req: &SurfaceRequest<'_>) -> Result<RiskSurface> {
    if !(req.k > 0.0) || !(req.n_ref > 0.0) {
        return Err(Error::config("k and n_ref must be positive"));
    }
    if pop.total() == 0 {
        return Err(Error::config("population is empty"));
    }
    let target = req.k * req.n_ref;
    let p_total = pop.total() as f64;

    let surface = match req.shape {
        Shape::Flat => RiskSurface::Flat {
            lambda0: target / p_total,
        },
        Shape::Step | Shape::Smooth => {
            if !(req.c > 1.0) {
                return Err(Error::config(format!("risk ratio c must exceed 1, got {}", req.c)));
            }
            req.circles.validate(pop)?;
            let p_in: f64 = pop
                .populated()
                .filter(|&i| req.circles.contains(&pop.centroid(i)))
                .map(|i| pop.count(i) as f64)
                .sum();
            let p_out = p_total - p_in;
            let lambda0 = target / (p_out + req.c * p_in);
            let excess = (req.c - 1.0) * lambda0 * p_in;
            if req.shape == Shape::Step {
                RiskSurface::Step(StepSurface {
                    lambda0,
                    alpha: req.c - 1.0,
                    circles: req.circles.clone(),
                })
            } else {
                let gamma = solve_gamma(req.circles.radius)?;
                let exposure: f64 = pop
                    .populated()
                    .map(|i| pop.count(i) as f64 * gaussian_bump(req.circles, gamma, &pop.centroid(i)))
                    .sum();
                let beta = if excess > 0.0 {
                    if exposure <= 0.0 {
                        return Err(Error::config("no population exposed to the smooth excess"));
                    }
                    excess / exposure
                } else {
                    0.0
                };
                // Equal total and equal excess leave the same background.
                let lambda0_smooth = (target - beta * exposure) / p_total;
                RiskSurface::Smooth(SmoothSurface {
                    lambda0: lambda0_smooth,
                    beta,
                    gamma,
                    circles: req.circles.clone(),
                })
            }
        }
    };

    let max_risk = pop
        .populated()
        .map(|i| surface.risk_at(&pop.centroid(i)))
        .fold(0.0, f64::max);
    if !(max_risk < 1.0) || !(surface.lambda0() > 0.0) {
        return Err(Error::config(format!(
            "solved risk {max_risk} leaves (0, 1) on populated cells"
        )));
    }
    Ok(surface)
}

/// `sum_cells count * risk(centroid)`.
pub fn expected_cases(surface: &RiskSurface, pop: &PopulationGrid) -> f64 {
    pop.populated()
        .map(|i| pop.count(i) as f64 * surface.risk_at(&pop.centroid(i)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_synthetic_population, PopulationCentre, SyntheticPopulationSpec, Window};

    fn circles(radius: f64) -> CircleSpec {
        CircleSpec {
            centres: vec![Point::new(0.0, 0.0), Point::new(10_000.0, 0.0)],
            radius,
        }
    }

    fn population() -> PopulationGrid {
        let w = Window::new(-10_000.0, -8_000.0, 20_000.0, 8_000.0).unwrap();
        let spec = SyntheticPopulationSpec::new(vec![
            PopulationCentre {
                point: Point::new(0.0, 0.0),
                weight: 2.0,
                spread: 3000.0,
            },
            PopulationCentre {
                point: Point::new(12_000.0, 3_000.0),
                weight: 1.0,
                spread: 4000.0,
            },
        ]);
        build_synthetic_population(w, 250.0, 206_532, &spec, 1).unwrap()
    }

    #[test]
    fn step_values() {
        let s = StepSurface {
            lambda0: 0.001,
            alpha: 4.0,
            circles: circles(1000.0),
        };
        assert!((step_risk_at(&s, &Point::new(0.0, 0.0)) - 0.005).abs() < 1e-15);
        assert_eq!(step_risk_at(&s, &Point::new(5000.0, 5000.0)), 0.001);
        // closed disc
        assert!((step_risk_at(&s, &Point::new(1000.0, 0.0)) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn smooth_values_use_max() {
        let s = SmoothSurface {
            lambda0: 0.001,
            beta: 0.002,
            gamma: 800.0,
            circles: circles(1000.0),
        };
        assert!((smooth_risk_at(&s, &Point::new(0.0, 0.0)) - 0.003).abs() < 1e-15);
        assert!((smooth_risk_at(&s, &Point::new(1e7, 1e7)) - 0.001).abs() < 1e-15);
        let mid = Point::new(5000.0, 0.0);
        let single = 0.001 + 0.002 * (-(5000.0f64).powi(2) / (2.0 * 800.0 * 800.0)).exp();
        assert!((smooth_risk_at(&s, &mid) - single).abs() < 1e-18);
    }

    /// Polar quadrature of the planar Gaussian mass inside the disc.
    fn disc_mass(r: f64, gamma: f64) -> f64 {
        // integral_0^r (t / gamma^2) exp(-t^2 / 2 gamma^2) dt by composite Simpson
        let n = 20_000;
        let h = r / n as f64;
        let f = |t: f64| t / (gamma * gamma) * (-(t * t) / (2.0 * gamma * gamma)).exp();
        let mut s = f(0.0) + f(r);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gamma_matches_disc_mass_oracle() {
        let g1 = solve_gamma(1000.0).unwrap();
        let closed = 1000.0 / (2.0 * 5f64.ln()).sqrt();
        assert!((g1 - closed).abs() < 1e-9, "gamma = {g1}");
        assert!((g1 - 557.4).abs() < 0.05);
        assert!((disc_mass(1000.0, g1) - 0.8).abs() < 1e-6);
        let g5 = solve_gamma(5000.0).unwrap();
        assert!((g5 - 2786.9).abs() < 0.05, "gamma = {g5}");
        assert!((disc_mass(5000.0, g5) - 0.8).abs() < 1e-6);
        let eq = 1.0 - (-(1000.0f64).powi(2) / (2.0 * g1 * g1)).exp();
        assert!((eq - 0.8).abs() < 1e-10);
        assert!((solve_gamma(10_000.0).unwrap() - 10.0 * g1).abs() < 1e-9 * g1);
        assert!(solve_gamma(0.0).is_err());
    }

    #[test]
    fn flat_baseline_matches_reference_ratio() {
        let pop = population();
        let cs = circles(1000.0);
        let s = solve_surface_parameters(
            &pop,
            &SurfaceRequest {
                circles: &cs,
                shape: Shape::Flat,
                c: 1.0,
                k: 1.0,
                n_ref: 334.0,
            },
        )
        .unwrap();
        assert!((s.lambda0() - 334.0 / 206_532.0).abs() < 1e-15);
        assert!((s.lambda0() - 0.0016172).abs() < 1e-7);
        assert!((expected_cases(&s, &pop) - s.lambda0() * 206_532.0).abs() < 1e-9);
    }

    #[test]
    fn closure_for_step_and_smooth() {
        let pop = population();
        for &r in &[1000.0, 5000.0, 10_000.0] {
            for &c in &[2.0, 5.0] {
                for &k in &[1.0, 5.0, 10.0] {
                    let cs = circles(r);
                    let req = |shape| SurfaceRequest {
                        circles: &cs,
                        shape,
                        c,
                        k,
                        n_ref: 334.0,
                    };
                    let step = solve_surface_parameters(&pop, &req(Shape::Step)).unwrap();
                    let smooth = solve_surface_parameters(&pop, &req(Shape::Smooth)).unwrap();
                    let target = k * 334.0;
                    // direct summation oracle
                    let direct = |s: &RiskSurface| -> f64 {
                        let mut acc = 0.0;
                        for i in 0..pop.len() {
                            acc += pop.count(i) as f64 * s.risk_at(&pop.centroid(i));
                        }
                        acc
                    };
                    assert!((direct(&step) - target).abs() <= 1e-6 * target);
                    assert!((direct(&smooth) - target).abs() <= 1e-6 * target);
                    let ex_step = direct(&step) - step.lambda0() * pop.total() as f64;
                    let ex_smooth = direct(&smooth) - smooth.lambda0() * pop.total() as f64;
                    assert!((ex_step - ex_smooth).abs() <= 1e-6 * ex_step.abs().max(1e-12));
                }
            }
        }
    }

    #[test]
    fn empty_circles_reduce_to_flat() {
        let pop = population();
        let cs = CircleSpec {
            centres: vec![Point::new(19_999.0, -7_999.0)],
            radius: 1.0,
        };
        let s = solve_surface_parameters(
            &pop,
            &SurfaceRequest {
                circles: &cs,
                shape: Shape::Step,
                c: 5.0,
                k: 1.0,
                n_ref: 334.0,
            },
        )
        .unwrap();
        assert!((s.lambda0() - 334.0 / pop.total() as f64).abs() < 1e-15);
    }

    #[test]
    fn risk_above_one_rejected() {
        let pop = population();
        let cs = circles(1000.0);
        let req = SurfaceRequest {
            circles: &cs,
            shape: Shape::Step,
            c: 5.0,
            k: 1000.0,
            n_ref: 334.0,
        };
        assert!(solve_surface_parameters(&pop, &req).is_err());
    }

    #[test]
    fn step_with_k5_gives_1670() {
        let pop = population();
        let cs = circles(5000.0);
        let req = SurfaceRequest {
            circles: &cs,
            shape: Shape::Step,
            c: 2.0,
            k: 5.0,
            n_ref: 334.0,
        };
        let s = solve_surface_parameters(&pop, &req).unwrap();
        assert!((expected_cases(&s, &pop) - 1670.0).abs() <= 1e-6 * 1670.0);
        let zero = PopulationGrid::from_counts(*pop.window(), pop.cell_size(), vec![0; pop.len()]).unwrap();
        assert_eq!(expected_cases(&s, &zero), 0.0);
    }
}
