//! Normal distribution helpers and the modified Bessel function K1.

use statrs::function::erf::{erfc, erfc_inv};

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn norm_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `K_1(x)` for `x > 0` from `K_1(x) = int_0^inf exp(-x cosh t) cosh t dt`.
/// The integrand is analytic and decays doubly exponentially, so the
/// trapezoidal rule converges geometrically in the step size.
pub fn bessel_k1(x: f64) -> f64 {
    if !(x > 0.0) {
        return if x == 0.0 { f64::INFINITY } else { f64::NAN };
    }
    // Truncate where x cosh t exceeds 745 + x (integrand below e^-745 relative).
    let t_max = ((745.0 + x) / x).acosh();
    let n = ((t_max / 0.01).ceil() as usize).max(200);
    let h = t_max / n as f64;
    let f = |t: f64| {
        let c = t.cosh();
        (-x * (c - 1.0)).exp() * c
    };
    let mut s = 0.5 * (f(0.0) + f(t_max));
    for i in 1..n {
        s += f(i as f64 * h);
    }
    s * h * (-x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Polynomial approximations of I1 and K1 (Abramowitz & Stegun 9.8.3,
    /// 9.8.7, 9.8.8); relative accuracy around 1e-7.
    fn k1_polynomial(x: f64) -> f64 {
        if x <= 2.0 {
            let t = (x / 3.75).powi(2);
            let i1 = x
                * (0.5
                    + t * (0.878_905_94
                        + t * (0.514_988_69
                            + t * (0.150_849_34 + t * (0.026_587_33 + t * (0.003_015_32 + t * 0.000_324_11))))));
            let y = x * x / 4.0;
            (x / 2.0).ln() * i1
                + (1.0 / x)
                    * (1.0
                        + y * (0.154_431_44
                            + y * (-0.672_785_79
                                + y * (-0.181_568_97 + y * (-0.019_194_02 + y * (-0.001_104_04 + y * (-0.000_046_86)))))))
        } else {
            let y = 2.0 / x;
            (-x).exp() / x.sqrt()
                * (1.253_314_14
                    + y * (0.234_986_19
                        + y * (-0.036_556_20
                            + y * (0.015_042_68 + y * (-0.007_803_53 + y * (0.003_256_14 + y * (-0.000_682_45)))))))
        }
    }

    #[test]
    fn k1_matches_polynomial() {
        for &x in &[0.01, 0.1, 0.5, 1.0, 1.9, 2.1, 3.0, 5.0, 10.0, 30.0] {
            let a = bessel_k1(x);
            let b = k1_polynomial(x);
            assert!((a - b).abs() <= 2e-6 * b, "x = {x}: {a} vs {b}");
        }
    }

    #[test]
    fn k1_small_argument_limit() {
        // x K1(x) -> 1
        assert!((1e-4 * bessel_k1(1e-4) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matern_correlation_at_range() {
        let x = 8f64.sqrt();
        assert!((x * bessel_k1(x) - 0.1396).abs() < 1e-4);
    }

    #[test]
    fn normal_helpers() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-9);
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((norm_sf(1.0) + norm_cdf(1.0) - 1.0).abs() < 1e-15);
    }
}
