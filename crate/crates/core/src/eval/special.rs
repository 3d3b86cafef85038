//! Special functions backing the statistical tests.
//!
//! Self-contained implementations (Lanczos log-gamma, regularized incomplete
//! beta via a modified-Lentz continued fraction, regularized incomplete gamma
//! via series/continued fraction) so the distribution math has no runtime
//! dependency. The test suite cross-checks every public function here against
//! an independent statistics crate to 1e-9.

use std::f64::consts::PI;

const EPS: f64 = 3.0e-16;
const FPMIN: f64 = 1.0e-300;
const MAX_ITER: usize = 300;

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula; sin(pi x) > 0 on (0, 0.5).
        PI.ln() - (PI * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + 7.5;
        let mut acc = COEFFS[0];
        for (i, &c) in COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Regularized incomplete beta function I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast only on one side of the mean;
    // use the symmetry relation on the other.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized lower incomplete gamma P(a, x).
pub fn inc_gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn inc_gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

/// Series representation of P(a, x), valid for x < a + 1.
fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Continued fraction for Q(a, x), valid for x >= a + 1 (modified Lentz).
fn gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Complementary error function via the incomplete gamma.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        inc_gamma_q(0.5, x * x)
    } else {
        2.0 - inc_gamma_q(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    debug_assert!(df > 0.0);
    if t == 0.0 {
        return 0.5;
    }
    // P(|T| > |t|) through the incomplete beta, then fold by sign.
    let tail = inc_beta(0.5 * df, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - 0.5 * tail
    } else {
        0.5 * tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        // Gamma(n) = (n-1)!
        let mut factorial = 1.0f64;
        for n in 1..=15u32 {
            assert!(
                (ln_gamma(n as f64) - factorial.ln()).abs() < 1e-10,
                "n = {n}"
            );
            factorial *= n as f64;
        }
        // Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn inc_beta_endpoints_and_symmetry() {
        assert_eq!(inc_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(inc_beta(2.0, 3.0, 1.0), 1.0);
        // I_x(a,b) = 1 - I_{1-x}(b,a)
        for &(a, b, x) in &[(2.0, 3.0, 0.3), (0.5, 0.5, 0.7), (10.0, 4.0, 0.62)] {
            let lhs = inc_beta(a, b, x);
            let rhs = 1.0 - inc_beta(b, a, 1.0 - x);
            assert!((lhs - rhs).abs() < 1e-13, "a={a} b={b} x={x}");
        }
        // I_x(1,1) is the identity.
        assert!((inc_beta(1.0, 1.0, 0.42) - 0.42).abs() < 1e-13);
    }

    #[test]
    fn incomplete_gammas_are_complementary() {
        for &(a, x) in &[(0.5, 0.2), (1.0, 1.0), (3.5, 2.0), (2.0, 9.0)] {
            let p = inc_gamma_p(a, x);
            let q = inc_gamma_q(a, x);
            assert!((p + q - 1.0).abs() < 1e-13, "a={a} x={x}");
        }
        // P(1, x) = 1 - exp(-x)
        assert!((inc_gamma_p(1.0, 2.0) - (1.0 - (-2.0f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn normal_cdf_key_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        // Phi(1.96) from standard tables.
        assert!((normal_cdf(1.96) - 0.975_002_104_851_78).abs() < 1e-9);
        assert!((normal_cdf(-1.96) - 0.024_997_895_148_22).abs() < 1e-9);
        assert!((normal_cdf(1.0) + normal_cdf(-1.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn student_t_cdf_key_points() {
        assert_eq!(student_t_cdf(0.0, 7.0), 0.5);
        // With df=1 the t distribution is Cauchy: CDF(1) = 3/4.
        assert!((student_t_cdf(1.0, 1.0) - 0.75).abs() < 1e-12);
        // Large df approaches the normal.
        assert!((student_t_cdf(1.96, 1e6) - normal_cdf(1.96)).abs() < 1e-5);
        // Symmetry.
        for &t in &[0.5, 1.3, 2.7] {
            let s = student_t_cdf(t, 9.0) + student_t_cdf(-t, 9.0);
            assert!((s - 1.0).abs() < 1e-13, "t={t}");
        }
    }
}
