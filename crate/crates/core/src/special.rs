//! Special functions for analytic critical values and p-values: the standard
//! normal distribution, the chi-square distribution (through the regularized
//! incomplete gamma function) and the binomial upper tail.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Iteration cap shared by every root finder here.
pub const MAX_ITER: usize = 200;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Absolute tolerance for quantile inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
}

impl Tolerance {
    pub fn new(abs_tol: f64) -> Result<Self> {
        if abs_tol > 0.0 {
            Ok(Tolerance { abs_tol })
        } else {
            Err(Error::param("abs_tol", format!("{abs_tol} is not positive")))
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs_tol: 1e-10 }
    }
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cdf.
///
/// A positive-term Taylor series around zero for |x| < 3 and a continued
/// fraction for the Mills ratio in the tails. The lower tail keeps full
/// relative precision down to the underflow point near x = -38.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax < 3.0 {
        // Phi(x) = 1/2 + phi(x) * (x + x^3/3 + x^5/(3*5) + ...)
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 1.0;
        while term.abs() > 1e-17 * sum.abs() {
            k += 2.0;
            term *= x2 / k;
            sum += term;
        }
        0.5 + normal_pdf(x) * sum
    } else {
        let tail = upper_tail_cf(ax);
        if x < 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }
}

/// `1 - Phi(x)` for x >= 3 via phi(x) / (x + 1/(x + 2/(x + 3/(x + ...)))).
fn upper_tail_cf(x: f64) -> f64 {
    if x > 40.0 {
        return 0.0;
    }
    let mut t = x;
    for k in (1..=60).rev() {
        t = x + k as f64 / t;
    }
    normal_pdf(x) / t
}

/// Inverse of [`normal_cdf`], with the default 1e-10 tolerance.
pub fn normal_quantile(q: f64) -> Result<f64> {
    normal_quantile_tol(q, Tolerance::default())
}

/// Inverse of [`normal_cdf`].
///
/// Newton iterations on `ln Phi(x) - ln q`, started from a rational
/// approximation and kept inside a shrinking bracket (falling back to
/// bisection whenever a step leaves it).
pub fn normal_quantile_tol(q: f64, tol: Tolerance) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("{q} is outside (0, 1)")));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    if q > 0.5 {
        return Ok(-lower_quantile(1.0 - q, tol)?);
    }
    lower_quantile(q, tol)
}

fn lower_quantile(q: f64, tol: Tolerance) -> Result<f64> {
    // Abramowitz & Stegun 26.2.23, |error| < 4.5e-4.
    let t = (-2.0 * q.ln()).sqrt();
    let mut x = -(t
        - (2.515517 + 0.802853 * t + 0.010328 * t * t)
            / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
    let (mut lo, mut hi) = (-40.0_f64, 0.0_f64);
    let ln_q = q.ln();
    for _ in 0..MAX_ITER {
        let cdf = normal_cdf(x);
        if cdf > q {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let step = (cdf.ln() - ln_q) * cdf / normal_pdf(x);
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let converged = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0);
        x = next;
        if converged {
            break;
        }
    }
    if (normal_cdf(x) - q).abs() <= tol.abs_tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence { routine: "normal_quantile", iterations: MAX_ITER })
    }
}

const LANCZOS: [f64; 9] = [
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

/// `ln Gamma(x)` for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::param("a", format!("{a} is not positive")));
    }
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("{x} is negative")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // P(a, x) = e^{-x} x^a / Gamma(a) * sum x^n / (a (a+1) ... (a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..10 * MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term < sum * 1e-17 {
                let p = (log_prefactor.exp() * sum).min(1.0);
                return Ok(1.0 - p);
            }
        }
        Err(Error::NoConvergence { routine: "gamma_q series", iterations: 10 * MAX_ITER })
    } else {
        // Modified Lentz on the continued fraction for Q.
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=10 * MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                return Ok(log_prefactor.exp() * h);
            }
        }
        Err(Error::NoConvergence { routine: "gamma_q continued fraction", iterations: 10 * MAX_ITER })
    }
}

fn check_df(df: u32) -> Result<()> {
    if df == 0 {
        Err(Error::param("df", "degrees of freedom must be at least 1"))
    } else {
        Ok(())
    }
}

/// `P(chi^2_df >= x)`.
pub fn chisq_sf(x: f64, df: u32) -> Result<f64> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("{x} is negative")));
    }
    gamma_q(0.5 * df as f64, 0.5 * x)
}

/// Inverse of the chi-square cdf, default tolerance.
pub fn chisq_quantile(q: f64, df: u32) -> Result<f64> {
    chisq_quantile_tol(q, df, Tolerance::default())
}

/// Inverse of the chi-square cdf by bracketing and bisection.
pub fn chisq_quantile_tol(q: f64, df: u32, tol: Tolerance) -> Result<f64> {
    check_df(df)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("{q} is outside (0, 1)")));
    }
    let cdf = |x: f64| chisq_sf(x, df).map(|s| 1.0 - s);
    let mut lo = 0.0;
    let mut hi = df as f64 + 10.0;
    while cdf(hi)? < q {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let c = cdf(mid)?;
        if c < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if (c - q).abs() <= 0.01 * tol.abs_tol || hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    if (cdf(x)? - q).abs() <= tol.abs_tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence { routine: "chisq_quantile", iterations: MAX_ITER })
    }
}

/// Binomial(m, prob) probability mass at `i`.
pub fn binom_pmf(i: u32, m: u32, prob: f64) -> f64 {
    if i > m {
        return 0.0;
    }
    if m <= 1000 {
        let j = i.min(m - i);
        let mut coef = 1.0;
        for t in 0..j {
            coef *= (m - t) as f64 / (t + 1) as f64;
        }
        coef * prob.powi(i as i32) * (1.0 - prob).powi((m - i) as i32)
    } else {
        if prob == 0.0 {
            return if i == 0 { 1.0 } else { 0.0 };
        }
        if prob == 1.0 {
            return if i == m { 1.0 } else { 0.0 };
        }
        // Summed log-ratios avoid the cancellation of ln_gamma differences.
        let ln_coef: f64 = (0..i.min(m - i)).map(|t| ((m - t) as f64 / (t + 1) as f64).ln()).sum();
        (ln_coef + i as f64 * prob.ln() + (m - i) as f64 * (1.0 - prob).ln()).exp()
    }
}

/// `P(X >= k)` for `X ~ Binomial(m, prob)`, summed over the lighter tail.
pub fn binom_sf(k: u32, m: u32, prob: f64) -> Result<f64> {
    if k > m {
        return Err(Error::param("k", format!("{k} exceeds the number of trials {m}")));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::param("prob", format!("{prob} is outside [0, 1]")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if k as f64 <= m as f64 * prob {
        // Upper tail holds most of the mass: subtract the short lower tail.
        let lower: f64 = (0..k).map(|i| binom_pmf(i, m, prob)).sum();
        return Ok((1.0 - lower).clamp(0.0, 1.0));
    }
    let sum: f64 = (k..=m).rev().map(|i| binom_pmf(i, m, prob)).sum();
    Ok(sum.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson quadrature of the normal density on [0, |x|].
    fn cdf_by_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = x.abs() / n as f64;
        let mut s = normal_pdf(0.0) + normal_pdf(x.abs());
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * normal_pdf(i as f64 * h);
        }
        let half = s * h / 3.0;
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    #[test]
    fn normal_cdf_against_quadrature() {
        let mut x = -7.0;
        while x <= 7.0 {
            let got = normal_cdf(x);
            let want = cdf_by_quadrature(x);
            assert!((got - want).abs() < 1e-12, "x={x}: {got} vs {want}");
            x += 0.173;
        }
    }

    #[test]
    fn normal_cdf_examples() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        let t = normal_cdf(-8.0);
        assert!(t < 1e-15 && t > 0.0);
        // Mills-ratio bounds: phi(x)/x (1 - 1/x^2) <= Q(x) <= phi(x)/x.
        for x in [8.0, 12.0, 20.0, 30.0] {
            let q = normal_cdf(-x);
            let upper = normal_pdf(x) / x;
            let lower = upper * (1.0 - 1.0 / (x * x));
            assert!(q <= upper && q >= lower, "x={x}");
        }
    }

    #[test]
    fn normal_quantile_examples() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.05).unwrap() + 1.6449).abs() < 1e-4);
        assert!((normal_quantile(0.975).unwrap() - 1.9600).abs() < 1e-4);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
        let x = normal_quantile(1e-300).unwrap();
        assert!(x < -37.0 && x > -37.1);
    }

    #[test]
    fn normal_round_trip() {
        let mut x = -6.0;
        while x <= 6.0 {
            let back = normal_quantile(normal_cdf(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "x={x} back={back}");
            x += 0.01;
        }
    }

    /// Closed form for even degrees of freedom: e^{-x/2} sum_{i<k} (x/2)^i / i!.
    fn chisq_sf_even(x: f64, df: u32) -> f64 {
        let y = x / 2.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..df / 2 {
            term *= y / i as f64;
            sum += term;
        }
        (-y).exp() * sum
    }

    #[test]
    fn chisq_sf_against_closed_form() {
        for df in (2..=200).step_by(2) {
            for x in [0.1, 1.0, 3.0, 7.5, 15.0, 40.0, 120.0, 250.0] {
                let got = chisq_sf(x, df).unwrap();
                let want = chisq_sf_even(x, df);
                assert!((got - want).abs() < 1e-12, "df={df} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn chisq_sf_odd_df_against_normal() {
        // One degree of freedom: P(Z^2 >= x) = 2 (1 - Phi(sqrt x)).
        for x in [0.01, 0.5, 2.0, 3.84, 9.0, 30.0] {
            let got = chisq_sf(x, 1).unwrap();
            let want = 2.0 * normal_cdf(-x.sqrt());
            assert!((got - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn chisq_examples() {
        assert_eq!(chisq_sf(0.0, 7).unwrap(), 1.0);
        assert!((chisq_sf(5.99146, 2).unwrap() - 0.05).abs() < 1e-6);
        assert!((chisq_sf(11.983, 4).unwrap() - 0.01747).abs() < 1e-5);
        assert!((chisq_quantile(0.95, 2).unwrap() - 5.99146).abs() < 1e-5);
        assert!((chisq_quantile(0.95, 2).unwrap() + 2.0 * 0.05_f64.ln()).abs() < 1e-8);
        assert!((chisq_quantile(0.95, 4).unwrap() - 9.4877).abs() < 1e-3);
        assert!(chisq_quantile(1e-12, 3).unwrap() < 1e-6);
        assert!(chisq_sf(-1.0, 2).is_err());
        assert!(chisq_sf(1.0, 0).is_err());
        assert!(chisq_quantile(1.0, 2).is_err());
    }

    #[test]
    fn chisq_monotone() {
        for df in [1, 2, 5, 30] {
            let mut prev = 1.0;
            let mut x = 0.05;
            while x < 80.0 {
                let s = chisq_sf(x, df).unwrap();
                // Deep in the lower tail the survival function rounds to 1.
                assert!(s < prev || s == 1.0, "df={df} x={x}");
                prev = s;
                x += 0.25;
            }
            let mut prev_q = 0.0;
            for i in 1..100 {
                let q = chisq_quantile(i as f64 / 100.0, df).unwrap();
                assert!(q > prev_q);
                prev_q = q;
            }
        }
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binom_sf(0, 10, 0.3).unwrap(), 1.0);
        assert!((binom_sf(3, 10, 0.05).unwrap() - 0.01150).abs() < 1e-5);
        assert!((binom_sf(5, 5, 0.5).unwrap() - 0.03125).abs() < 1e-15);
        assert!(binom_sf(6, 5, 0.5).is_err());
        assert_eq!(binom_sf(1, 1, 0.05).unwrap(), 0.05);
    }

    #[test]
    fn binomial_sf_difference_is_pmf() {
        for m in [1, 7, 40, 150, 1500] {
            for prob in [0.01, 0.05, 0.3, 0.77] {
                for k in (0..m).step_by(if m > 1000 { 23 } else { 1 }) {
                    let diff = binom_sf(k, m, prob).unwrap() - binom_sf(k + 1, m, prob).unwrap();
                    // Direct term by repeated multiplication, independent of binom_pmf.
                    let mut coef = 1.0_f64;
                    let mut ln_coef = 0.0;
                    for t in 0..k {
                        coef *= (m - t) as f64 / (t + 1) as f64;
                        ln_coef += ((m - t) as f64 / (t + 1) as f64).ln();
                    }
                    let pmf = if coef.is_finite() && m <= 1000 {
                        coef * prob.powi(k as i32) * (1.0 - prob).powi((m - k) as i32)
                    } else {
                        (ln_coef + k as f64 * prob.ln() + (m - k) as f64 * (1.0 - prob).ln()).exp()
                    };
                    assert!((diff - pmf).abs() < 1e-12, "m={m} p={prob} k={k}");
                }
            }
        }
    }

    #[test]
    fn ln_gamma_factorials() {
        let mut fact = 1.0_f64;
        for n in 1..30 {
            fact *= n as f64;
            assert!((ln_gamma(n as f64 + 1.0) - fact.ln()).abs() < 1e-12);
        }
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
    }
}
