//! Packet-level inter-renewal models and their k-fold convolutions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::math::{erfc, exp, expm1, ln, ln1p, sqrt, LN_SQRT_2PI, SQRT_2};
use crate::matrix::Matrix;
use crate::quad::TanhSinh;
use crate::special::{ln_gamma, ln_gamma_p, ln_gamma_q, log_add, trigamma, LogSumExp};

/// Largest convolution order the quadrature oracle accepts.
pub const MAX_QUADRATURE_K: u64 = 16;

/// Parametric family of an inter-renewal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Family {
    Gamma,
    Exponential,
    #[cfg_attr(feature = "serde", serde(alias = "log-normal", alias = "log_normal"))]
    LogNormal,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gamma => "gamma",
            Family::Exponential => "exponential",
            Family::LogNormal => "lognormal",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Gamma => &["shape", "rate"],
            Family::Exponential => &["rate"],
            Family::LogNormal => &["mu", "sigma"],
        }
    }

    pub fn dim(self) -> usize {
        self.param_names().len()
    }

    /// Whether each parameter is constrained to be positive.
    pub fn positive_params(self) -> &'static [bool] {
        match self {
            Family::Gamma => &[true, true],
            Family::Exponential => &[true],
            Family::LogNormal => &[false, true],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(Family::Gamma),
            "exponential" | "exp" => Ok(Family::Exponential),
            "lognormal" | "log-normal" | "log_normal" => Ok(Family::LogNormal),
            other => Err(Error::config(format!("unknown model family `{other}`"))),
        }
    }
}

/// An inter-renewal distribution. Rates are in 1/seconds, Log-Normal
/// parameters are in log-seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "ModelSpec", into = "ModelSpec"))]
pub enum PacketModel {
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

/// Wire form of a model: `{"family": "gamma", "params": [0.6, 526.32]}`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub family: Family,
    pub params: Vec<f64>,
}

impl TryFrom<ModelSpec> for PacketModel {
    type Error = Error;
    fn try_from(spec: ModelSpec) -> Result<Self> {
        PacketModel::from_params(spec.family, &spec.params)
    }
}

impl From<PacketModel> for ModelSpec {
    fn from(m: PacketModel) -> Self {
        ModelSpec { family: m.family(), params: m.params() }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

impl PacketModel {
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Ok(PacketModel::Gamma { shape: positive("gamma shape", shape)?, rate: positive("gamma rate", rate)? })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(PacketModel::Exponential { rate: positive("exponential rate", rate)? })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("log-normal mu must be finite, got {mu}")));
        }
        Ok(PacketModel::LogNormal { mu, sigma: positive("log-normal sigma", sigma)? })
    }

    pub fn from_params(family: Family, params: &[f64]) -> Result<Self> {
        if params.len() != family.dim() {
            return Err(Error::config(format!(
                "{family} takes {} parameters, got {}",
                family.dim(),
                params.len()
            )));
        }
        match family {
            Family::Gamma => PacketModel::gamma(params[0], params[1]),
            Family::Exponential => PacketModel::exponential(params[0]),
            Family::LogNormal => PacketModel::lognormal(params[0], params[1]),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            PacketModel::Gamma { .. } => Family::Gamma,
            PacketModel::Exponential { .. } => Family::Exponential,
            PacketModel::LogNormal { .. } => Family::LogNormal,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            PacketModel::Gamma { shape, rate } => vec![shape, rate],
            PacketModel::Exponential { rate } => vec![rate],
            PacketModel::LogNormal { mu, sigma } => vec![mu, sigma],
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PacketModel::Gamma { shape, rate } => shape / rate,
            PacketModel::Exponential { rate } => 1.0 / rate,
            PacketModel::LogNormal { mu, sigma } => exp(mu + 0.5 * sigma * sigma),
        }
    }

    /// `ln g(x)` without argument checks; `x` must be positive.
    #[inline]
    pub(crate) fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            PacketModel::Gamma { shape, rate } => gamma_ln_pdf(shape, rate, x),
            PacketModel::Exponential { rate } => ln(rate) - rate * x,
            PacketModel::LogNormal { mu, sigma } => lognormal_ln_pdf(mu, sigma, x),
        }
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        check_positive_arg(x)?;
        Ok(self.ln_pdf(x))
    }

    /// `P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match *self {
            PacketModel::Gamma { shape, rate } => exp(ln_gamma_q(shape, rate * x)),
            PacketModel::Exponential { rate } => exp(-rate * x),
            PacketModel::LogNormal { mu, sigma } => 0.5 * erfc((ln(x) - mu) / (sigma * SQRT_2)),
        }
    }

    /// Draws one strictly positive inter-renewal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match *self {
                PacketModel::Gamma { shape, rate } => rand_distr::Gamma::new(shape, 1.0 / rate)
                    .expect("validated parameters")
                    .sample(rng),
                PacketModel::Exponential { rate } => {
                    rand_distr::Exp::new(rate).expect("validated parameters").sample(rng)
                }
                PacketModel::LogNormal { mu, sigma } => rand_distr::LogNormal::new(mu, sigma)
                    .expect("validated parameters")
                    .sample(rng),
            };
            if x > 0.0 && x.is_finite() {
                return x;
            }
        }
    }

    /// Per-observation Fisher information in the natural parameterisation.
    pub fn fisher_information(&self) -> Result<Matrix> {
        let h = match *self {
            PacketModel::Gamma { shape, rate } => Matrix::from_rows(&[
                &[trigamma(shape), -1.0 / rate],
                &[-1.0 / rate, shape / (rate * rate)],
            ]),
            PacketModel::Exponential { rate } => Matrix::diagonal(&[1.0 / (rate * rate)]),
            PacketModel::LogNormal { sigma, .. } => {
                let s2 = sigma * sigma;
                Matrix::diagonal(&[1.0 / s2, 2.0 / s2])
            }
        };
        if !h.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite Fisher information {:?} for {:?}",
                h.rows(),
                self
            )));
        }
        Ok(h)
    }
}

#[inline]
pub(crate) fn gamma_ln_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    shape * ln(rate) - ln_gamma(shape) + (shape - 1.0) * ln(x) - rate * x
}

#[inline]
pub(crate) fn lognormal_ln_pdf(mu: f64, sigma: f64, x: f64) -> f64 {
    let lx = ln(x);
    let z = (lx - mu) / sigma;
    -lx - ln(sigma) - LN_SQRT_2PI - 0.5 * z * z
}

fn check_positive_arg(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("density argument must be positive, got {x}")))
    }
}

/// How k-fold convolutions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ConvolutionMode {
    /// Exact closure under convolution (Gamma, Exponential).
    ClosedForm,
    /// Single Log-Normal matched to the first two moments of the sum.
    #[default]
    FentonWilkinson,
    /// Iterated numerical convolution; a test oracle only.
    NumericQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ConvolutionPolicy {
    /// Applies to Log-Normal models only, except `NumericQuadrature` which
    /// overrides every family.
    pub mode: ConvolutionMode,
    pub quadrature_points: usize,
    /// Durations below this are flagged as outside the Fenton–Wilkinson
    /// comfort zone. `None` means `k·exp(μ)`.
    pub fw_min_total: Option<f64>,
}

impl Default for ConvolutionPolicy {
    fn default() -> Self {
        ConvolutionPolicy {
            mode: ConvolutionMode::FentonWilkinson,
            quadrature_points: 128,
            fw_min_total: None,
        }
    }
}

impl ConvolutionPolicy {
    pub fn quadrature(points: usize) -> Self {
        ConvolutionPolicy {
            mode: ConvolutionMode::NumericQuadrature,
            quadrature_points: points.max(64),
            fw_min_total: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quadrature_points < 64 {
            return Err(Error::config("quadrature_points must be at least 64"));
        }
        if let Some(t) = self.fw_min_total {
            if !(t >= 0.0) {
                return Err(Error::config("fw_min_total must be non-negative"));
            }
        }
        Ok(())
    }

    /// Threshold below which a Fenton–Wilkinson evaluation is unreliable.
    pub fn fw_threshold(&self, k: u64, mu: f64) -> f64 {
        self.fw_min_total.unwrap_or_else(|| k as f64 * exp(mu))
    }
}

/// `ln g(x)`.
pub fn log_density(model: &PacketModel, x: f64) -> Result<f64> {
    model.log_density(x)
}

/// Fenton–Wilkinson parameters `(μ*, σ*)` of the Log-Normal matched to the
/// sum of `k` i.i.d. `LN(μ, σ)` variables. The mean `k·exp(μ + σ²/2)` is
/// preserved exactly in the exponent.
pub fn fenton_wilkinson_params(k: u64, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::domain("Fenton-Wilkinson needs k >= 1"));
    }
    if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::domain(format!("invalid log-normal parameters ({mu}, {sigma})")));
    }
    if k == 1 {
        return Ok((mu, sigma));
    }
    let s2 = sigma * sigma;
    let lk = ln(k as f64);
    let s2_star = if s2 <= 30.0 {
        ln1p(expm1(s2) / k as f64)
    } else {
        // ln(e^{σ²} - 1) - ln k, then ln(1 + e^L).
        let l = s2 + ln1p(-exp(-s2)) - lk;
        log_add(l, 0.0)
    };
    let mu_star = lk + mu + 0.5 * (s2 - s2_star);
    Ok((mu_star, sqrt(s2_star)))
}

/// `ln g^{*k}(x)` under `policy`.
pub fn kfold_log_density(model: &PacketModel, k: u64, x: f64, policy: &ConvolutionPolicy) -> Result<f64> {
    check_positive_arg(x)?;
    if k == 0 {
        return Err(Error::domain("convolution order must be at least 1"));
    }
    if k == 1 {
        return Ok(model.ln_pdf(x));
    }
    if policy.mode == ConvolutionMode::NumericQuadrature {
        return quadrature_kfold_ln(model, k, x, policy.quadrature_points);
    }
    match *model {
        PacketModel::Gamma { shape, rate } => Ok(gamma_ln_pdf(k as f64 * shape, rate, x)),
        PacketModel::Exponential { rate } => Ok(gamma_ln_pdf(k as f64, rate, x)),
        PacketModel::LogNormal { mu, sigma } => {
            if policy.mode == ConvolutionMode::ClosedForm {
                return Err(Error::Policy("no closed-form convolution for the log-normal family".into()));
            }
            let (ms, ss) = fenton_wilkinson_params(k, mu, sigma)?;
            let threshold = policy.fw_threshold(k, mu);
            if x < threshold {
                log::warn!("Fenton-Wilkinson evaluated at {x:e}s below its reliability threshold {threshold:e}s (k = {k})");
            }
            Ok(lognormal_ln_pdf(ms, ss, x))
        }
    }
}

/// Iterated numerical self-convolution by halving the order.
pub fn quadrature_kfold_ln(model: &PacketModel, k: u64, x: f64, points: usize) -> Result<f64> {
    if k > MAX_QUADRATURE_K {
        return Err(Error::Policy(format!(
            "numeric quadrature convolution capped at k <= {MAX_QUADRATURE_K}, requested {k}"
        )));
    }
    let rule = TanhSinh::new(points);
    let v = quadrature_kfold(model, &rule, k, x);
    if v > 0.0 && v.is_finite() {
        Ok(ln(v))
    } else {
        Err(Error::numerical(format!("quadrature convolution underflowed at k = {k}, x = {x:e}")))
    }
}

fn quadrature_kfold(model: &PacketModel, rule: &TanhSinh, k: u64, x: f64) -> f64 {
    if k == 1 {
        return exp(model.ln_pdf(x));
    }
    let left = k / 2;
    let right = k - left;
    if left == right {
        // Symmetric integrand: fold onto [0, x/2], where only y = 0 is singular.
        return 2.0
            * rule.integrate(0.0, 0.5 * x, |_, y, _| {
                if y <= 0.0 {
                    return 0.0;
                }
                let v = quadrature_kfold(model, rule, left, y);
                v * quadrature_kfold(model, rule, left, x - y)
            });
    }
    rule.integrate(0.0, x, |_, y, z| {
        if y <= 0.0 || z <= 0.0 {
            return 0.0;
        }
        quadrature_kfold(model, rule, left, y) * quadrature_kfold(model, rule, right, z)
    })
}

/// `ln (f * g^{*n})(s)` where `f` is the Exponential(`flow_rate`) flow-gap
/// density: the law of a flow's leading gap followed by `n` packet gaps.
pub fn flow_gap_log_density(
    flow_rate: f64,
    model: &PacketModel,
    n: u64,
    s: f64,
    policy: &ConvolutionPolicy,
) -> Result<f64> {
    check_positive_arg(s)?;
    positive("flow rate", flow_rate)?;
    if n == 0 {
        return Ok(ln(flow_rate) - flow_rate * s);
    }
    if policy.mode == ConvolutionMode::NumericQuadrature {
        return quadrature_flow_gap_ln(flow_rate, s, policy.quadrature_points, |y| {
            kfold_log_density(model, n, y, policy).unwrap_or(f64::NEG_INFINITY)
        });
    }
    match *model {
        PacketModel::Gamma { shape, rate } => Ok(exp_gamma_conv_ln(flow_rate, n as f64 * shape, rate, s)),
        PacketModel::Exponential { rate } => Ok(exp_gamma_conv_ln(flow_rate, n as f64, rate, s)),
        PacketModel::LogNormal { mu, sigma } => {
            if policy.mode == ConvolutionMode::ClosedForm {
                return Err(Error::Policy("no closed-form convolution for the log-normal family".into()));
            }
            let (ms, ss) = fenton_wilkinson_params(n, mu, sigma)?;
            quadrature_flow_gap_ln(flow_rate, s, policy.quadrature_points, |y| lognormal_ln_pdf(ms, ss, y))
        }
    }
}

/// `ln ∫₀ˢ λ e^{-λ(s-y)} h(y) dy` with `h` given in log form.
pub(crate) fn quadrature_flow_gap_ln<F>(flow_rate: f64, s: f64, points: usize, ln_h: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let rule = TanhSinh::new(points.max(64));
    // Work relative to the largest log-integrand seen on the nodes to avoid underflow.
    let mut peak = f64::NEG_INFINITY;
    let _ = rule.integrate(0.0, s, |_, y, z| {
        if y > 0.0 {
            peak = peak.max(ln_h(y) - flow_rate * z);
        }
        0.0
    });
    if !peak.is_finite() {
        return Err(Error::numerical(format!("flow-gap convolution vanished at s = {s:e}")));
    }
    let v = rule.integrate(0.0, s, |_, y, z| if y > 0.0 { exp(ln_h(y) - flow_rate * z - peak) } else { 0.0 });
    if v > 0.0 {
        Ok(ln(flow_rate) + peak + ln(v))
    } else {
        Err(Error::numerical(format!("flow-gap convolution vanished at s = {s:e}")))
    }
}

/// `ln (Exp(λ) * Gamma(a, β))(s)`.
pub(crate) fn exp_gamma_conv_ln(lambda: f64, a: f64, beta: f64, s: f64) -> f64 {
    let c = beta - lambda;
    if c > 0.0 {
        ln(lambda) + a * (ln(beta) - ln(c)) - lambda * s + ln_gamma_p(a, c * s)
    } else if c == 0.0 {
        ln(lambda) - lambda * s + a * ln(beta) + a * ln(s) - ln_gamma(a + 1.0)
    } else {
        // ∫₀ˢ y^{a-1} e^{dy} dy = s^a Σ (ds)^i / (i! (i + a)).
        let d = -c;
        let ds = d * s;
        let lds = ln(ds);
        let mut acc = LogSumExp::default();
        let mut best = f64::NEG_INFINITY;
        let mut i = 0u64;
        loop {
            let fi = i as f64;
            let term = fi * lds - ln_gamma(fi + 1.0) - ln(fi + a);
            acc.push(term);
            best = best.max(term);
            if fi > ds && term < best - 40.0 {
                break;
            }
            i += 1;
        }
        ln(lambda) - lambda * s + a * ln(beta) - ln_gamma(a) + a * ln(s) + acc.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::ExpSinh;

    #[test]
    fn exponential_identity() {
        let m = PacketModel::exponential(1.0).unwrap();
        assert_eq!(m.log_density(1.0).unwrap(), -1.0);
    }

    #[test]
    fn gamma_one_is_exponential() {
        let m = PacketModel::gamma(1.0, 2.0).unwrap();
        let v = m.log_density(0.5).unwrap();
        assert!((v - (ln(2.0) - 1.0)).abs() < 1e-15);
        assert!((v + 0.3069).abs() < 1e-4);
    }

    #[test]
    fn gamma_reference_value() {
        // Independent 50-digit evaluation of the Gamma(0.6, 526.32) log-density at 0.00114.
        let m = PacketModel::gamma(0.6, 526.32).unwrap();
        let v = m.log_density(0.00114).unwrap();
        let reference = 5.471_997_784_227_704_f64;
        assert!((v - reference).abs() < 1e-12 * reference.abs(), "{v}");
    }

    #[test]
    fn domain_errors() {
        let m = PacketModel::exponential(1.0).unwrap();
        assert!(m.log_density(0.0).is_err());
        assert!(kfold_log_density(&m, 2, -1.0, &ConvolutionPolicy::default()).is_err());
        assert!(PacketModel::gamma(-1.0, 1.0).is_err());
        assert!(PacketModel::from_params(Family::Gamma, &[1.0]).is_err());
    }

    #[test]
    fn two_fold_half_shape_is_exponential() {
        let m = PacketModel::gamma(0.5, 1.0).unwrap();
        let v = kfold_log_density(&m, 2, 1.0, &ConvolutionPolicy::default()).unwrap();
        assert!((v + 1.0).abs() < 1e-14);
    }

    #[test]
    fn kfold_one_is_density_for_every_family() {
        let pol = ConvolutionPolicy::default();
        for m in [
            PacketModel::gamma(0.6, 526.32).unwrap(),
            PacketModel::exponential(3.0).unwrap(),
            PacketModel::lognormal(-8.0, 2.0).unwrap(),
        ] {
            for x in [1e-6, 1e-3, 0.5, 7.0] {
                assert_eq!(kfold_log_density(&m, 1, x, &pol).unwrap(), m.log_density(x).unwrap());
            }
        }
    }

    #[test]
    fn quadrature_matches_closed_form_small_k() {
        let m = PacketModel::gamma(0.6, 526.32).unwrap();
        let pol = ConvolutionPolicy::quadrature(128);
        for k in [2u64, 3, 5] {
            let x = k as f64 * 0.6 / 526.32;
            let q = kfold_log_density(&m, k, x, &pol).unwrap();
            let c = kfold_log_density(&m, k, x, &ConvolutionPolicy::default()).unwrap();
            assert!(((q - c) / c).abs() < 1e-8 || (q - c).abs() < 1e-9, "k={k}: {q} vs {c}");
        }
        assert!(kfold_log_density(&m, 17, 0.01, &pol).is_err());
    }

    #[test]
    fn fenton_wilkinson_limits() {
        assert_eq!(fenton_wilkinson_params(1, -3.0, 2.0).unwrap(), (-3.0, 2.0));
        let (m, s) = fenton_wilkinson_params(4, 0.0, 1e-9).unwrap();
        assert!((m - ln(4.0)).abs() < 1e-12);
        assert!(s < 1e-9);
        let (m, s) = fenton_wilkinson_params(1000, -8.0987, 4.5046).unwrap();
        let lhs = m + 0.5 * s * s;
        let rhs = ln(1000.0) - 8.0987 + 0.5 * 4.5046 * 4.5046;
        assert!(((exp(lhs) - exp(rhs)) / exp(rhs)).abs() < 1e-12);
        // large σ goes through the log-space branch
        let (m, s) = fenton_wilkinson_params(10, 0.0, 40.0).unwrap();
        assert!(((m + 0.5 * s * s) - (ln(10.0) + 800.0)).abs() < 1e-9);
    }

    #[test]
    fn fisher_information_shapes() {
        let e = PacketModel::exponential(4.0).unwrap().fisher_information().unwrap();
        assert!((e[(0, 0)] - 1.0 / 16.0).abs() < 1e-15);
        let g = PacketModel::gamma(0.6, 526.32).unwrap().fisher_information().unwrap();
        assert!(g.is_positive_definite());
        assert_eq!(g[(0, 1)], g[(1, 0)]);
    }

    #[test]
    fn flow_gap_closed_form_agrees_with_quadrature() {
        let quad = ConvolutionPolicy::quadrature(256);
        let exact = ConvolutionPolicy::default();
        for (lambda, model, s) in [
            (1.0, PacketModel::gamma(0.6, 526.32).unwrap(), 0.7),
            (2.0, PacketModel::exponential(2.0).unwrap(), 1.3),
            (5.0, PacketModel::exponential(0.5).unwrap(), 2.0),
            (3.0, PacketModel::gamma(2.5, 1.0).unwrap(), 4.0),
        ] {
            for n in [1u64, 2, 4] {
                let a = flow_gap_log_density(lambda, &model, n, s, &exact).unwrap();
                let b = flow_gap_log_density(lambda, &model, n, s, &quad).unwrap();
                assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{model:?} n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let rule = ExpSinh::new(400);
        let pol = ConvolutionPolicy::default();
        for m in [PacketModel::gamma(0.6, 526.32).unwrap(), PacketModel::lognormal(-8.0, 1.5).unwrap()] {
            for k in [1u64, 2, 5, 10] {
                let scale = k as f64 * m.mean();
                let v = rule.integrate(scale, |x| exp(kfold_log_density(&m, k, x, &pol).unwrap()));
                assert!((v - 1.0).abs() < 1e-6, "{m:?} k={k}: {v}");
            }
        }
    }

    #[test]
    fn survival_consistent_with_density() {
        let rule = TanhSinh::new(200);
        for m in [
            PacketModel::gamma(2.0, 3.0).unwrap(),
            PacketModel::exponential(1.5).unwrap(),
            PacketModel::lognormal(0.1, 0.7).unwrap(),
        ] {
            let x = 0.8;
            let cdf = rule.integrate(0.0, x, |_, y, _| if y > 0.0 { exp(m.ln_pdf(y)) } else { 0.0 });
            assert!((1.0 - cdf - m.survival(x)).abs() < 1e-10, "{m:?}");
        }
    }
}
