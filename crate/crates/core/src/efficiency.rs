//! How many NetFlows match the precision of a packet-level fit.
//!
//! The comparison rests on two information matrices: `H` for one packet
//! inter-renewal and `I` for one flow duration. `I` is estimated by
//! Monte-Carlo over simulated durations with finite-difference Hessians of
//! the marginal duration log-density.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::likelihood::{LikelihoodConfig, MarginalDuration};
use crate::math::{abs, ceil, ln, powf};
use crate::matrix::Matrix;
use crate::model::PacketModel;
use crate::optimize::hessian_at;
use crate::pmf::FlowSizePmf;
use crate::rng::{domain, stream_rng};
use crate::special::{log_sum_exp, CompensatedSum};

/// Smallest accepted Monte-Carlo sample count.
pub const MIN_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EfficiencyRequest {
    /// Relative-efficiency slack.
    pub epsilon: f64,
    /// Failure probability.
    pub eta: f64,
    /// Number of flows behind the packet-level fit (one usually suffices).
    pub k_flows: u64,
    /// Parameter dimension; the packet family's when absent.
    pub dim: Option<usize>,
    pub mc_samples: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for EfficiencyRequest {
    fn default() -> Self {
        EfficiencyRequest {
            epsilon: 0.1,
            eta: 0.1,
            k_flows: 1,
            dim: None,
            mc_samples: MIN_MC_SAMPLES,
            fd_step: 1e-4,
            seed: 0,
        }
    }
}

impl EfficiencyRequest {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.epsilon) {
            return Err(Error::config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !unit(self.eta) {
            return Err(Error::config(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.k_flows == 0 {
            return Err(Error::config("k_flows must be at least 1"));
        }
        if self.dim == Some(0) {
            return Err(Error::config("dimension must be at least 1"));
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::config(format!(
                "mc_samples must be at least {MIN_MC_SAMPLES}, got {}",
                self.mc_samples
            )));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.1) {
            return Err(Error::config(format!("fd_step must lie in (0, 0.1), got {}", self.fd_step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InfoSummary {
    /// Packet-model information per inter-renewal.
    pub h: Matrix,
    /// Marginal duration information per NetFlow.
    pub i: Matrix,
    pub det_ratio: f64,
    /// `ln E[e^{M̄}]`.
    pub ln_mgf_plus: f64,
    /// `ln E[e^{-M̄}]`.
    pub ln_mgf_minus: f64,
}

impl InfoSummary {
    /// `E[e^{M̄}]`, possibly `inf` in floating point.
    pub fn mbar_mgf_plus(&self) -> f64 {
        crate::math::exp(self.ln_mgf_plus)
    }

    pub fn mbar_mgf_minus(&self) -> f64 {
        crate::math::exp(self.ln_mgf_minus)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EfficiencyBounds {
    /// Ceiling of the lower end of the interval.
    pub n_min: u64,
    pub lower: f64,
    pub upper: f64,
    /// Whether both one-sided events can hold together (reported only).
    pub joint_condition: bool,
    pub info: InfoSummary,
    pub warnings: Vec<String>,
}

/// One draw of a `k`-fold sum of packet inter-renewals.
pub fn sample_kfold<R: Rng + ?Sized>(model: &PacketModel, k: u64, rng: &mut R) -> f64 {
    match *model {
        PacketModel::Gamma { shape, rate } => Gamma::new(k as f64 * shape, 1.0 / rate)
            .expect("validated parameters")
            .sample(rng),
        PacketModel::Exponential { rate } => Gamma::new(k as f64, 1.0 / rate).expect("validated parameters").sample(rng),
        PacketModel::LogNormal { .. } => (0..k).map(|_| model.sample(rng)).collect::<CompensatedSum>().total(),
    }
}

/// Simulated durations of non-trivial (sampled) flows.
fn simulate_durations(law: &MarginalDuration, model: &PacketModel, n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let mut rng = stream_rng(seed, domain::MONTE_CARLO, i);
            let k = law.sample_span(&mut rng);
            sample_kfold(model, k, &mut rng)
        })
        .collect()
}

fn relative_gap(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let scale = abs(a[(r, c)]).max(abs(b[(r, c)])).max(f64::MIN_POSITIVE);
            worst = worst.max(abs(a[(r, c)] - b[(r, c)]) / scale);
        }
    }
    worst
}

/// `I = −E[∇² ln f_{S_d}]` in the packet model's natural parameters.
pub fn marginal_fisher_info(packet_model: &PacketModel, cfg: &LikelihoodConfig, req: &EfficiencyRequest) -> Result<Matrix> {
    req.validate()?;
    let law = MarginalDuration::new(cfg)?;
    let durations = simulate_durations(&law, packet_model, req.mc_samples, req.seed);
    let family = packet_model.family();
    let theta = packet_model.params();
    let steps: Vec<f64> = theta.iter().map(|t| req.fd_step * abs(*t).max(req.fd_step)).collect();
    let mut failure: Option<Error> = None;
    let mut buf = Vec::new();
    let mut mean_ll = |p: &[f64]| -> f64 {
        let kernel = PacketModel::from_params(family, p).and_then(|m| law.kernel(&m, &cfg.policy));
        match kernel {
            Ok(mut kernel) => {
                let mut acc = CompensatedSum::default();
                for x in &durations {
                    acc.add(law.ln_density_with(&mut kernel, *x, &mut buf));
                }
                acc.total() / durations.len() as f64
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let h1 = hessian_at(&mut mean_ll, &theta, &steps);
    let doubled: Vec<f64> = steps.iter().map(|s| 2.0 * s).collect();
    let h2 = hessian_at(&mut mean_ll, &theta, &doubled);
    if let Some(e) = failure {
        return Err(e);
    }
    let hess = if relative_gap(&h1, &h2) > 0.05 {
        let n = h1.dim();
        let mut out = Matrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] = (4.0 * h1[(r, c)] - h2[(r, c)]) / 3.0;
            }
        }
        out
    } else {
        h1
    };
    let info = hess.scale(-1.0).symmetrized();
    if !info.is_finite() || !info.is_positive_definite() {
        return Err(Error::numerical(format!(
            "estimated duration information {:?} is not positive-definite; increase mc_samples",
            info.rows()
        )));
    }
    Ok(info)
}

/// Monte-Carlo `(ln E[e^{M̄}], ln E[e^{-M̄}])` where `M̄` averages the
/// inter-renewal counts of `k` flows.
pub fn mbar_log_mgfs(pmf: &FlowSizePmf, k: u64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if !pmf.is_bounded() {
        return Err(Error::policy(format!(
            "E[exp(M)] is infinite for the unbounded {:?} flow-size law; use a bounded support",
            pmf.kind()
        )));
    }
    let max_m = (pmf.max_size() - 1) as f64;
    // Keep M̄ itself finite even if exponentiation would overflow.
    if !max_m.is_finite() {
        return Err(Error::policy(format!("support point {} overflows", pmf.max_size())));
    }
    let mut rng = stream_rng(seed, domain::MONTE_CARLO, u64::MAX);
    let mut plus = Vec::with_capacity(samples);
    let mut minus = Vec::with_capacity(samples);
    for _ in 0..samples {
        let total: u64 = (0..k).map(|_| pmf.sample(&mut rng) - 1).sum();
        let mbar = total as f64 / k as f64;
        plus.push(mbar);
        minus.push(-mbar);
    }
    let ln_n = ln(samples as f64);
    Ok((log_sum_exp(&plus) - ln_n, log_sum_exp(&minus) - ln_n))
}

/// `H`, `I` and the `M̄` transforms for a packet model and sampling setup.
pub fn info_summary(packet_model: &PacketModel, cfg: &LikelihoodConfig, req: &EfficiencyRequest) -> Result<InfoSummary> {
    req.validate()?;
    let h = packet_model.fisher_information()?;
    let i = marginal_fisher_info(packet_model, cfg, req)?;
    let det_i = i.determinant();
    let det_ratio = h.determinant() / det_i;
    if !(det_ratio > 0.0) || !det_ratio.is_finite() {
        return Err(Error::numerical(format!("determinant ratio {det_ratio} is not positive")));
    }
    let (ln_mgf_plus, ln_mgf_minus) = mbar_log_mgfs(&cfg.pmf, req.k_flows, req.mc_samples, req.seed)?;
    Ok(InfoSummary { h, i, det_ratio, ln_mgf_plus, ln_mgf_minus })
}

/// The interval of session sizes and its lower end.
pub fn efficiency_bounds(req: &EfficiencyRequest, info: &InfoSummary) -> Result<EfficiencyBounds> {
    req.validate()?;
    let d = req.dim.unwrap_or(info.h.dim()) as f64;
    let k = req.k_flows as f64;
    let (eps, eta) = (req.epsilon, req.eta);
    if !info.ln_mgf_plus.is_finite() || !info.ln_mgf_minus.is_finite() {
        return Err(Error::numerical("M̄ transforms are not finite"));
    }
    let ln_two_over_eta = ln(2.0 / eta);
    let lower = k * powf(info.det_ratio / ((1.0 + eps) * (1.0 + eps)), 1.0 / d) * (ln_two_over_eta + info.ln_mgf_plus);
    let upper =
        -k * powf(info.det_ratio / ((1.0 - eps) * (1.0 - eps)), 1.0 / d) * (ln_two_over_eta + info.ln_mgf_minus);
    let a = powf((1.0 + eps) / (1.0 - eps), 2.0 / d);
    let joint_condition = info.ln_mgf_plus + a * info.ln_mgf_minus < (a + 1.0) * ln(eta / 2.0);
    let mut warnings = Vec::new();
    if upper < lower {
        warnings.push(format!("the admissible interval is empty: lower {lower:.3} exceeds upper {upper:.3}"));
    }
    if !joint_condition {
        warnings.push(String::from("the joint two-sided condition does not hold for these settings"));
    }
    if !lower.is_finite() {
        return Err(Error::numerical(format!("lower bound {lower} is not finite")));
    }
    let n_min = if lower <= 1.0 { 1 } else { ceil(lower) as u64 };
    Ok(EfficiencyBounds { n_min, lower, upper, joint_condition, info: info.clone(), warnings })
}

/// Ceiling of the lower bound.
pub fn n_min(req: &EfficiencyRequest, info: &InfoSummary) -> Result<u64> {
    efficiency_bounds(req, info).map(|b| b.n_min)
}
