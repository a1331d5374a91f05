//! Special functions, log-domain reductions and compensated summation.

use crate::math::{abs, exp, ln, ln1p, powf};

/// `ln Γ(x)` for `x > 0`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma `ψ(x)` for `x > 0`.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: 1/12, 1/120, 1/252, 1/240, 1/132
    let tail = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    acc + ln(x) - 0.5 * inv - tail
}

/// Trigamma `ψ₁(x)` for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + tail
}

/// `ln C(n, k)` through log-gamma; `-inf` outside `0 <= k <= n`.
pub fn ln_binomial(n: f64, k: f64) -> f64 {
    if k < 0.0 || k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0.0 || k == n {
        return 0.0;
    }
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

const GAMMA_INC_EPS: f64 = 1e-16;
const GAMMA_INC_MAX_ITER: usize = 10_000;

/// Series part: `ln Σ xⁿ / ((a+1)…(a+n))`, valid for `x < a + 1`.
fn ln_gamma_inc_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_INC_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if abs(term) < abs(sum) * GAMMA_INC_EPS {
            break;
        }
    }
    -x + a * ln(x) - ln_gamma(a) + ln(sum)
}

/// Continued fraction for `ln Q(a, x)`, valid for `x >= a + 1` (modified Lentz).
fn ln_gamma_inc_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_INC_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if abs(d) < TINY {
            d = TINY;
        }
        c = b + an / c;
        if abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if abs(del - 1.0) < GAMMA_INC_EPS {
            break;
        }
    }
    -x + a * ln(x) - ln_gamma(a) + ln(h)
}

/// `ln P(a, x)`, the log of the regularized lower incomplete gamma function.
pub fn ln_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < a + 1.0 {
        ln_gamma_inc_series(a, x)
    } else {
        ln1p(-exp(ln_gamma_inc_cf(a, x)))
    }
}

/// `ln Q(a, x)`, the log of the regularized upper incomplete gamma function.
pub fn ln_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        ln1p(-exp(ln_gamma_inc_series(a, x)))
    } else {
        ln_gamma_inc_cf(a, x)
    }
}

/// Hurwitz zeta `ζ(s, a) = Σ_{n≥0} (a + n)^{-s}` for `s > 1`, `a > 0` (Euler–Maclaurin).
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    // B_{2j} / (2j)!
    const B2J_OVER_FACT: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
        1.0 / 74_724_249_600.0,
        -3617.0 / 10_670_622_842_880_000.0,
    ];
    const N: usize = 12;
    let mut sum = 0.0;
    for n in 0..N {
        sum += powf(a + n as f64, -s);
    }
    let big = a + N as f64;
    sum += powf(big, 1.0 - s) / (s - 1.0);
    sum += 0.5 * powf(big, -s);
    // Σ_j B_{2j}/(2j)! · s(s+1)…(s+2j-2) · big^{-s-2j+1}
    let mut pw = powf(big, -s - 1.0);
    let inv_big2 = 1.0 / (big * big);
    for (idx, coeff) in B2J_OVER_FACT.iter().enumerate() {
        sum += coeff * rising_factorial(s, 2 * idx + 1) * pw;
        pw *= inv_big2;
    }
    sum
}

fn rising_factorial(s: f64, n: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..n {
        r *= s + i as f64;
    }
    r
}

/// Riemann zeta `ζ(s)` for `s > 1`.
pub fn zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

/// Max-shifted `ln Σ exp(xᵢ)`; `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let mut acc = 0.0;
    for &x in xs {
        acc += exp(x - max);
    }
    max + ln(acc)
}

/// `ln(eᵃ + eᵇ)`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + ln1p(exp(b - a))
    } else {
        b + ln1p(exp(a - b))
    }
}

/// Streaming log-sum-exp accumulator that rescales when a larger term arrives.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub const fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += exp(x - self.max);
        } else {
            self.scaled = self.scaled * exp(self.max - x) + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + ln(self.scaled)
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self {
            sum: 0.0,
            carry: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if abs(self.sum) >= abs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

impl core::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().total()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        abs(a - b) / abs(b)
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        assert!(rel(ln_gamma(5.0), ln(24.0)) < 1e-14);
        assert!(abs(ln_gamma(1.0)) < 1e-15);
        // Γ(1/2) = √π
        assert!(rel(ln_gamma(0.5), 0.5 * ln(core::f64::consts::PI)) < 1e-14);
    }

    #[test]
    fn digamma_and_trigamma_reference_values() {
        // ψ(1) = -γ, ψ₁(1) = π²/6
        let euler = 0.577_215_664_901_532_9;
        assert!(abs(digamma(1.0) + euler) < 1e-13);
        let pi2_6 = core::f64::consts::PI * core::f64::consts::PI / 6.0;
        assert!(rel(trigamma(1.0), pi2_6) < 1e-13);
        // ψ₁(0.6) = 3.63620967...
        assert!(rel(trigamma(0.6), 3.636_209_670_902_360) < 1e-12);
        assert!(rel(digamma(0.6), -1.540_619_213_893_190_6) < 1e-12);
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for &x in &[0.3, 0.6, 1.7, 6.5, 40.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!(rel(fd, trigamma(x)) < 1e-7, "x = {x}");
        }
    }

    #[test]
    fn incomplete_gamma_complements() {
        for &(a, x) in &[(0.6, 0.1), (0.6, 3.0), (6.0, 2.0), (30.0, 35.0), (1.0, 0.7)] {
            let p = exp(ln_gamma_p(a, x));
            let q = exp(ln_gamma_q(a, x));
            assert!(abs(p + q - 1.0) < 1e-13, "a={a} x={x}");
        }
        // P(1, x) = 1 - e^{-x}
        assert!(rel(exp(ln_gamma_p(1.0, 0.7)), 1.0 - exp(-0.7)) < 1e-14);
    }

    #[test]
    fn zeta_reference_values() {
        let pi = core::f64::consts::PI;
        assert!(rel(zeta(2.0), pi * pi / 6.0) < 1e-14);
        assert!(rel(zeta(4.0), pi.powi(4) / 90.0) < 1e-14);
        // ζ(s, 2) = ζ(s) - 1
        assert!(rel(hurwitz_zeta(3.0, 2.0), zeta(3.0) - 1.0) < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!(abs(v - (-1000.0 + ln(2.0))) < 1e-12);
        let mut acc = LogSumExp::new();
        for &x in &[1.0, 800.0, -5.0, 799.0] {
            acc.push(x);
        }
        assert!(abs(acc.value() - log_sum_exp(&[1.0, 800.0, -5.0, 799.0])) < 1e-12);
        assert!(abs(log_add(2.0, 3.0) - log_sum_exp(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(&xs), 2.0);
    }
}
