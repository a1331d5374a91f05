//! Maximum-likelihood and method-of-moments estimators.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::likelihood::{LikelihoodConfig, NetflowObjective, SampledObjective};
use crate::math::{abs, exp, ln, sqrt};
use crate::model::{fenton_wilkinson_params, lognormal_ln_pdf, ConvolutionMode, ConvolutionPolicy, Family, PacketModel};
use crate::netflow::{NetFlow, SampledNetFlow, SessionNetFlow};
use crate::optimize::{default_steps, hessian, minimize, standard_errors, OptimizerConfig};
use crate::pmf::FlowSizePmf;
use crate::simulate::Flow;
use crate::special::{compensated_sum, digamma, ln_gamma, trigamma, CompensatedSum};

/// Bytes per stored inter-renewal.
pub const BYTES_PER_INTER_RENEWAL: u64 = 8;
/// Bytes per stored NetFlow triple.
pub const BYTES_PER_NETFLOW: u64 = 24;

/// Transformed coordinates beyond this magnitude count as divergence.
const DIVERGENCE_BOUND: f64 = 30.0;

/// Outcome of a likelihood fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub family: Family,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    /// Mean log-likelihood per observation at `params`.
    pub loglik: f64,
    /// From the inverse observed information, when it is positive-definite.
    pub stderr: Option<Vec<f64>>,
    pub n_obs: usize,
    pub n_evals: usize,
    pub converged: bool,
    /// Wall-clock seconds; zero when no clock is available.
    pub wall_time: f64,
    pub data_bytes: u64,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn model(&self) -> Result<PacketModel> {
        PacketModel::from_params(self.family, &self.params)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|n| n == name).map(|i| self.params[i])
    }
}

/// Moment estimates `(α, β, β*)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentEstimates {
    pub alpha: f64,
    /// Intensity-weighted rate.
    pub beta: f64,
    /// Naive rate `α / mean gap`.
    pub beta_star: f64,
    /// Flows contributing to the intensity average.
    pub n_flows: usize,
    pub excluded: usize,
    pub wall_time: f64,
    pub data_bytes: u64,
    pub warnings: Vec<String>,
}

struct Clock {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Clock {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}

fn to_unconstrained(family: Family, params: &[f64]) -> Vec<f64> {
    params
        .iter()
        .zip(family.positive_params())
        .map(|(p, pos)| if *pos { ln(*p) } else { *p })
        .collect()
}

fn from_unconstrained(family: Family, z: &[f64]) -> Vec<f64> {
    z.iter().zip(family.positive_params()).map(|(v, pos)| if *pos { exp(*v) } else { *v }).collect()
}

/// Shared driver: maximise `mean_loglik` over the family's parameters.
fn fit<F>(
    family: Family,
    init: &[f64],
    n_obs: usize,
    opt: &OptimizerConfig,
    clock: Clock,
    data_bytes: u64,
    mut mean_loglik: F,
) -> Result<FitResult>
where
    F: FnMut(&PacketModel) -> Result<f64>,
{
    let mut objective = |z: &[f64]| -> f64 {
        let p = from_unconstrained(family, z);
        match PacketModel::from_params(family, &p).and_then(|m| mean_loglik(&m)) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let z0 = to_unconstrained(family, init);
    let best = minimize(&mut objective, &z0, opt);
    let params = from_unconstrained(family, &best.x);
    let mut warnings = Vec::new();
    let diverged = best.x.iter().any(|v| abs(*v) > DIVERGENCE_BOUND) || params.iter().any(|p| !p.is_finite());
    if !best.value.is_finite() {
        return Err(Error::NonConvergence { best: params, objective: best.value, iterations: best.iterations });
    }
    if diverged {
        warnings.push(format!("estimates diverging ({params:?}); the likelihood appears unbounded for these data"));
    } else if !best.converged {
        return Err(Error::NonConvergence { best: params, objective: -best.value, iterations: best.iterations });
    }
    let stderr = if diverged {
        None
    } else {
        let n = n_obs as f64;
        let mut neg_total = |p: &[f64]| -> f64 {
            match PacketModel::from_params(family, p).and_then(|m| mean_loglik(&m)) {
                Ok(v) => -n * v,
                Err(_) => f64::NAN,
            }
        };
        let info = hessian(&mut neg_total, &params, &default_steps(&params, 1e-4));
        let se = if info.is_finite() { standard_errors(&info) } else { None };
        if se.is_none() {
            warnings.push("observed information is not positive-definite; no standard errors".to_string());
        }
        se
    };
    Ok(FitResult {
        family,
        param_names: family.param_names().iter().map(|s| s.to_string()).collect(),
        params,
        loglik: -best.value,
        stderr,
        n_obs,
        n_evals: best.evals,
        converged: best.converged && !diverged,
        wall_time: clock.seconds(),
        data_bytes,
        warnings,
    })
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = xs.clone().count();
    let mean = xs.clone().collect::<CompensatedSum>().total() / n as f64;
    let ss = xs.map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().total();
    let var = if n > 1 { ss / (n - 1) as f64 } else { f64::NAN };
    (mean, var, n)
}

fn check_positive_data(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        Some(i) => Err(Error::domain(format!("observation {i} is not a positive finite value: {}", x[i]))),
        None => Ok(()),
    }
}

/// Standard MLE on observed inter-renewals.
pub fn mle_standard(inter_renewals: &[f64], family: Family, opt: &OptimizerConfig) -> Result<FitResult> {
    let clock = Clock::start();
    if inter_renewals.len() < 2 {
        return Err(Error::domain("the standard estimator needs at least two inter-renewals"));
    }
    check_positive_data(inter_renewals)?;
    let n = inter_renewals.len();
    let bytes = n as u64 * BYTES_PER_INTER_RENEWAL;
    let nf = n as f64;
    let sum_x = compensated_sum(inter_renewals);
    let logs: Vec<f64> = inter_renewals.iter().map(|x| ln(*x)).collect();
    let sum_lx = compensated_sum(&logs);
    let closed = |params: Vec<f64>, loglik: f64, stderr: Vec<f64>| FitResult {
        family,
        param_names: family.param_names().iter().map(|s| s.to_string()).collect(),
        params,
        loglik,
        stderr: Some(stderr),
        n_obs: n,
        n_evals: 0,
        converged: true,
        wall_time: clock.seconds(),
        data_bytes: bytes,
        warnings: Vec::new(),
    };
    match family {
        Family::Exponential => {
            let rate = nf / sum_x;
            Ok(closed(vec![rate], ln(rate) - 1.0, vec![rate / sqrt(nf)]))
        }
        Family::LogNormal => {
            let mu = sum_lx / nf;
            let ss = logs.iter().map(|l| (l - mu) * (l - mu)).collect::<CompensatedSum>().total();
            let sigma = sqrt(ss / nf);
            if !(sigma > 0.0) {
                return Err(Error::domain("degenerate data: all inter-renewals equal, sigma estimate is zero"));
            }
            let ll = -mu - ln(sigma) - crate::math::LN_SQRT_2PI - 0.5;
            Ok(closed(vec![mu, sigma], ll, vec![sigma / sqrt(nf), sigma / sqrt(2.0 * nf)]))
        }
        Family::Gamma => {
            let mean_x = sum_x / nf;
            let mean_lx = sum_lx / nf;
            let (_, var, _) = mean_var(inter_renewals.iter().copied());
            if !(var > 0.0) {
                return Err(Error::domain("degenerate data: all inter-renewals equal"));
            }
            let a0 = mean_x * mean_x / var;
            let init = [a0, a0 / mean_x];
            let mut res = fit(family, &init, n, opt, clock, bytes, |m| match *m {
                PacketModel::Gamma { shape, rate } => {
                    Ok(shape * ln(rate) - ln_gamma(shape) + (shape - 1.0) * mean_lx - rate * mean_x)
                }
                _ => unreachable!(),
            })?;
            // The Gamma information is available analytically; prefer it.
            if let [a, b] = res.params[..] {
                let det = trigamma(a) * a / (b * b) - 1.0 / (b * b);
                if det > 0.0 {
                    res.stderr = Some(vec![sqrt(a / (b * b) / det / nf), sqrt(trigamma(a) / det / nf)]);
                }
                debug_assert!((digamma(a) - ln(b) - mean_lx).abs() < 1e-4 || !res.converged);
            }
            Ok(res)
        }
    }
}

/// Pooled subsidiary inter-renewals of a set of flows.
pub fn pooled_inter_renewals(flows: &[Flow]) -> Vec<f64> {
    flows.iter().flat_map(|f| f.gaps().iter().copied()).collect()
}

/// NetFlow MLE over complete (unthinned) NetFlows.
pub fn mle_netflow(
    netflows: &[NetFlow],
    family: Family,
    pmf: &FlowSizePmf,
    policy: &ConvolutionPolicy,
    opt: &OptimizerConfig,
) -> Result<FitResult> {
    let clock = Clock::start();
    if netflows.is_empty() {
        return Err(Error::domain("no NetFlows to fit"));
    }
    if let Some(i) = netflows.iter().position(|n| n.size < 2) {
        return Err(Error::domain(format!("NetFlow {i} has a single packet and carries no duration")));
    }
    let obj = NetflowObjective::new(netflows, 1.0, pmf)?;
    let init = netflow_init(family, netflows.iter().map(|n| (n.s_d, n.m() as f64)));
    let bytes = netflows.len() as u64 * BYTES_PER_NETFLOW;
    fit(family, &init, netflows.len(), opt, clock, bytes, |m| obj.mean(m, policy))
}

/// Starting point from NetFlow moments, falling back to unit shape.
fn netflow_init(family: Family, rows: impl Iterator<Item = (f64, f64)> + Clone) -> Vec<f64> {
    let y_mean = {
        let (s, c) = rows.clone().fold((0.0, 0usize), |(s, c), (sd, m)| (s + sd / m, c + 1));
        s / c as f64
    };
    match family {
        Family::Gamma => match netflow_moments(rows) {
            Some((a, _, b)) if a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0 => vec![a, b],
            _ => vec![1.0, 1.0 / y_mean],
        },
        Family::Exponential => vec![1.0 / y_mean],
        Family::LogNormal => vec![ln(y_mean) - 0.5, 1.0],
    }
}

/// `(α̌, β̌, β̌*)` from `(s_d, m)` rows with `m >= 1`.
fn netflow_moments(rows: impl Iterator<Item = (f64, f64)> + Clone) -> Option<(f64, f64, f64)> {
    let (y_mean, y_var, n) = mean_var(rows.clone().map(|(sd, m)| sd / m));
    if n < 2 || !(y_var > (1e-12 * y_mean) * (1e-12 * y_mean)) {
        return None;
    }
    let inv_m = rows.clone().map(|(_, m)| 1.0 / m).collect::<CompensatedSum>().total() / n as f64;
    let alpha = y_mean * y_mean / y_var * inv_m;
    let sum_m = rows.clone().map(|(_, m)| m).collect::<CompensatedSum>().total();
    let sum_sd = rows.clone().map(|(sd, _)| sd).collect::<CompensatedSum>().total();
    let intensity = rows.map(|(sd, m)| (m / sum_m) * (m / sd)).collect::<CompensatedSum>().total();
    Some((alpha, alpha * intensity, alpha / (sum_sd / sum_m)))
}

/// Sampled-NetFlow MLE with the duration-only likelihood.
pub fn mle_sampled_netflow(
    sampled: &[SampledNetFlow],
    family: Family,
    cfg: &LikelihoodConfig,
    opt: &OptimizerConfig,
) -> Result<FitResult> {
    let clock = Clock::start();
    if sampled.is_empty() {
        return Err(Error::domain("no sampled NetFlows to fit"));
    }
    let mut cfg = cfg.clone();
    cfg.restricted = true;
    let obj = SampledObjective::new(sampled, 1.0, &cfg)?;
    let q = cfg.q;
    let init = netflow_init(family, sampled.iter().map(|s| (s.s_d, (s.size - 1) as f64 / q)));
    let bytes = sampled.len() as u64 * BYTES_PER_NETFLOW;
    let mut flagged = 0usize;
    let mut res = fit(family, &init, sampled.len(), opt, clock, bytes, |m| {
        let (t, f) = obj.terms_with_flags(m)?;
        flagged = f;
        Ok(compensated_sum(&t) / t.len() as f64)
    })?;
    if flagged > 0 {
        res.warnings.push(format!(
            "{flagged} Fenton-Wilkinson evaluations at the last parameter point fell below the reliability threshold"
        ));
    }
    Ok(res)
}

/// Moments from complete flows: coefficient of variation of the pooled gaps
/// and an intensity-weighted rate.
pub fn mom_hohn(flows: &[Flow]) -> Result<MomentEstimates> {
    let clock = Clock::start();
    let pooled = pooled_inter_renewals(flows);
    if pooled.len() < 2 {
        return Err(Error::domain("moments need at least two pooled inter-renewals"));
    }
    let (x_mean, x_var, _) = mean_var(pooled.iter().copied());
    if !(x_var > (1e-12 * x_mean) * (1e-12 * x_mean)) {
        return Err(Error::domain("constant inter-renewals: the coefficient of variation is undefined"));
    }
    let alpha = x_mean * x_mean / x_var;
    let rows: Vec<(f64, f64)> = flows
        .iter()
        .filter(|f| f.size() >= 2)
        .map(|f| (f.duration(), (f.size() - 1) as f64))
        .filter(|(sd, _)| *sd > 0.0)
        .collect();
    let excluded = flows.len() - rows.len();
    let mut warnings = Vec::new();
    if excluded > 0 {
        warnings.push(format!("{excluded} flows with zero duration excluded from the intensity average"));
    }
    let sum_m: f64 = rows.iter().map(|r| r.1).collect::<CompensatedSum>().total();
    let intensity = rows.iter().map(|(sd, m)| (m / sum_m) * (m / sd)).collect::<CompensatedSum>().total();
    let bytes = flows.iter().map(|f| f.size() as u64).sum::<u64>() * BYTES_PER_INTER_RENEWAL;
    Ok(MomentEstimates {
        alpha,
        beta: alpha * intensity,
        beta_star: alpha / x_mean,
        n_flows: rows.len(),
        excluded,
        wall_time: clock.seconds(),
        data_bytes: bytes,
        warnings,
    })
}

/// Moments from NetFlows alone.
pub fn mom_netflow(netflows: &[NetFlow]) -> Result<MomentEstimates> {
    let clock = Clock::start();
    let rows: Vec<(f64, f64)> = netflows.iter().filter(|n| n.size >= 2).map(|n| (n.s_d, n.m() as f64)).collect();
    if rows.len() < 2 {
        return Err(Error::domain("NetFlow moments need at least two flows with two or more packets"));
    }
    let excluded = netflows.len() - rows.len();
    let (alpha, beta, beta_star) = netflow_moments(rows.iter().copied())
        .ok_or_else(|| Error::domain("per-flow mean gaps are all equal; the moment estimator is undefined"))?;
    Ok(MomentEstimates {
        alpha,
        beta,
        beta_star,
        n_flows: rows.len(),
        excluded,
        wall_time: clock.seconds(),
        data_bytes: netflows.len() as u64 * BYTES_PER_NETFLOW,
        warnings: Vec::new(),
    })
}

/// Data for the two-step Log-Normal procedure.
#[derive(Debug, Clone, Copy)]
pub enum TwoStepInput<'a> {
    /// One aggregated observation: total duration against total gap count.
    /// The two-parameter objective has a ridge and is unbounded as σ shrinks.
    Session(&'a SessionNetFlow),
    /// Fallback: per-flow Fenton–Wilkinson terms for flows whose duration
    /// clears the reliability threshold.
    PerFlow(&'a [NetFlow]),
    /// Thinned NetFlows with the duration-only likelihood.
    Sampled(&'a [SampledNetFlow]),
}

/// Log-Normal fit where the k-fold convolution is replaced by its
/// Fenton–Wilkinson approximation.
pub fn two_step_lognormal_mle(
    input: TwoStepInput<'_>,
    cfg: &LikelihoodConfig,
    init: Option<(f64, f64)>,
    opt: &OptimizerConfig,
) -> Result<FitResult> {
    let clock = Clock::start();
    let mut cfg = cfg.clone();
    if cfg.policy.mode == ConvolutionMode::ClosedForm {
        cfg.policy.mode = ConvolutionMode::FentonWilkinson;
    }
    let family = Family::LogNormal;
    match input {
        TwoStepInput::Session(s) => {
            let k = s.total_inter_renewals();
            if k < 1 || !(s.total_duration > 0.0) {
                return Err(Error::domain("the session needs at least one inter-renewal and a positive duration"));
            }
            let d = s.total_duration;
            let (mu0, s0) = init.unwrap_or((ln(d / k as f64) - 0.5, 1.0));
            let mut res = fit(family, &[mu0, s0], 1, opt, clock, BYTES_PER_NETFLOW, |m| match *m {
                PacketModel::LogNormal { mu, sigma } => {
                    let (ms, ss) = fenton_wilkinson_params(k, mu, sigma)?;
                    Ok(lognormal_ln_pdf(ms, ss, d))
                }
                _ => unreachable!(),
            })?;
            res.warnings.push(
                "single aggregated observation: the objective is flat along a ridge and unbounded as sigma -> 0"
                    .to_string(),
            );
            Ok(res)
        }
        TwoStepInput::PerFlow(flows) => {
            let usable: Vec<&NetFlow> = flows.iter().filter(|n| n.size >= 2).collect();
            if usable.is_empty() {
                return Err(Error::domain("no flows with two or more packets"));
            }
            let total_d: f64 = usable.iter().map(|n| n.s_d).sum();
            let total_m: f64 = usable.iter().map(|n| n.m() as f64).sum();
            let (mu0, s0) = init.unwrap_or((ln(total_d / total_m) - 0.5, 1.0));
            let kept: Vec<(u64, f64)> = usable
                .iter()
                .filter(|n| n.s_d >= cfg.policy.fw_threshold(n.m(), mu0))
                .map(|n| (n.m(), n.s_d))
                .collect();
            if kept.is_empty() {
                return Err(Error::domain("no flow duration clears the Fenton-Wilkinson reliability threshold"));
            }
            let dropped = usable.len() - kept.len();
            let bytes = kept.len() as u64 * BYTES_PER_NETFLOW;
            let mut res = fit(family, &[mu0, s0], kept.len(), opt, clock, bytes, |m| match *m {
                PacketModel::LogNormal { mu, sigma } => {
                    let mut acc = CompensatedSum::default();
                    for &(k, d) in &kept {
                        let (ms, ss) = fenton_wilkinson_params(k, mu, sigma)?;
                        acc.add(lognormal_ln_pdf(ms, ss, d));
                    }
                    Ok(acc.total() / kept.len() as f64)
                }
                _ => unreachable!(),
            })?;
            if dropped > 0 {
                res.warnings.push(format!("{dropped} flows below the reliability threshold were left out"));
            }
            Ok(res)
        }
        TwoStepInput::Sampled(sampled) => {
            if sampled.is_empty() {
                return Err(Error::domain("no sampled NetFlows to fit"));
            }
            let q = cfg.q;
            let total_d: f64 = sampled.iter().map(|s| s.s_d).sum();
            let total_k: f64 = sampled.iter().map(|s| (s.size - 1) as f64 / q).sum();
            let init = init.unwrap_or((ln(total_d / total_k) - 0.5, 1.0));
            cfg.restricted = true;
            let obj = SampledObjective::new(sampled, 1.0, &cfg)?;
            let mut flagged = 0usize;
            let bytes = sampled.len() as u64 * BYTES_PER_NETFLOW;
            let mut res = fit(family, &[init.0, init.1], sampled.len(), opt, clock, bytes, |m| {
                let (t, f) = obj.terms_with_flags(m)?;
                flagged = f;
                Ok(compensated_sum(&t) / t.len() as f64)
            })?;
            if flagged > 0 {
                res.warnings.push(format!(
                    "{flagged} Fenton-Wilkinson evaluations at the last parameter point fell below the reliability threshold"
                ));
            }
            Ok(res)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netflow::aggregate;
    use crate::rng::{domain, stream_rng};
    use crate::simulate::generate_flow;

    fn flows(model: &PacketModel, sizes: &[u64], seed: u64) -> Vec<Flow> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, s)| generate_flow(model, *s, Some(1.0), &mut stream_rng(seed, domain::FLOW, i as u64)).unwrap())
            .collect()
    }

    #[test]
    fn exponential_closed_form() {
        let r = mle_standard(&[0.5, 1.5, 1.0], Family::Exponential, &OptimizerConfig::default()).unwrap();
        assert!((r.params[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lognormal_closed_form_and_degeneracy() {
        let x = [exp(-1.0), exp(1.0)];
        let r = mle_standard(&x, Family::LogNormal, &OptimizerConfig::default()).unwrap();
        assert!(r.params[0].abs() < 1e-15 && (r.params[1] - 1.0).abs() < 1e-15);
        assert!(mle_standard(&[2.0, 2.0], Family::LogNormal, &OptimizerConfig::default()).is_err());
        assert!(mle_standard(&[2.0], Family::Gamma, &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn gamma_standard_solves_score_equation() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let x = pooled_inter_renewals(&flows(&model, &[2000], 3));
        let r = mle_standard(&x, Family::Gamma, &OptimizerConfig::default()).unwrap();
        let (a, b) = (r.params[0], r.params[1]);
        let mean_x = x.iter().sum::<f64>() / x.len() as f64;
        let mean_lx = x.iter().map(|v| v.ln()).sum::<f64>() / x.len() as f64;
        assert!((a / b - mean_x).abs() < 1e-7 * mean_x);
        assert!((digamma(a) - ln(b) - mean_lx).abs() < 1e-7);
    }

    #[test]
    fn exponential_netflow_equals_full_data() {
        let model = PacketModel::exponential(40.0).unwrap();
        let fl = flows(&model, &[5, 9, 2, 30, 4], 8);
        let nf: Vec<NetFlow> = fl.iter().map(aggregate).collect();
        let pmf = FlowSizePmf::from_masses(vec![2, 4, 5, 9, 30], vec![1.0; 5]).unwrap();
        let r = mle_netflow(&nf, Family::Exponential, &pmf, &ConvolutionPolicy::default(), &OptimizerConfig::default())
            .unwrap();
        let x = pooled_inter_renewals(&fl);
        let full = x.len() as f64 / x.iter().sum::<f64>();
        assert!(((r.params[0] - full) / full).abs() < 1e-10, "{} vs {full}", r.params[0]);
    }

    #[test]
    fn single_flow_diverges_with_warning() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let nf = vec![aggregate(&flows(&model, &[40], 5)[0])];
        let pmf = FlowSizePmf::point(40).unwrap();
        let r = mle_netflow(&nf, Family::Gamma, &pmf, &ConvolutionPolicy::default(), &OptimizerConfig::default())
            .unwrap();
        assert!(!r.converged);
        assert!(r.warnings.iter().any(|w| w.contains("diverging")));
    }

    #[test]
    fn netflow_moments_need_two_flows() {
        let nf = [NetFlow::new(0.1, 0.3, 4).unwrap()];
        assert!(mom_netflow(&nf).is_err());
        let constant = [Flow::new(0.1, vec![0.2, 0.2, 0.2]).unwrap()];
        assert!(mom_hohn(&constant).is_err());
    }

    #[test]
    fn netflow_mean_gap_matches_pooled() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let fl = flows(&model, &[3, 8, 20, 1, 2], 2);
        let nf: Vec<NetFlow> = fl.iter().map(aggregate).collect();
        let h = mom_hohn(&fl).unwrap();
        let c = mom_netflow(&nf).unwrap();
        // β̌* uses z̄ = Σ s_d / Σ m, which is the pooled mean gap.
        let x = pooled_inter_renewals(&fl);
        let x_mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((c.alpha / c.beta_star - x_mean).abs() < 1e-12 * x_mean);
        assert!((h.alpha / h.beta_star - x_mean).abs() < 1e-12 * x_mean);
        assert_eq!(h.excluded, 1);
    }
}
