//! NetFlow and sampled-NetFlow likelihoods, evaluated in log domain.
//!
//! A sampled NetFlow with `m̃ >= 2` retained packets out of a latent flow of
//! `n = m + 1` packets mixes over the position `j` of the first retained
//! packet and the span `k` (in inter-renewals) between the first and last
//! retained packets. A retention pattern with first index `j` and span `k`
//! fixes both end points and leaves `m̃ - 2` interior picks among `k - 1`
//! slots, so each `(j, k)` cell carries `C(k-1, m̃-2)` of the `C(n, m̃)`
//! equally likely patterns.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln, ln1p, LN_SQRT_2PI};
use crate::model::{
    fenton_wilkinson_params, flow_gap_log_density, quadrature_kfold_ln, ConvolutionMode, ConvolutionPolicy,
    PacketModel,
};
use crate::netflow::{NetFlow, SampledNetFlow};
use crate::pmf::FlowSizePmf;
use crate::simulate::check_q;
use crate::special::{compensated_sum, ln_binomial, ln_gamma, log_sum_exp, LogSumExp};

/// Mixture cells lighter than this (relative to the heaviest, in log) are dropped.
const CELL_CUTOFF_LN: f64 = -69.0;

/// Settings shared by the sampled likelihoods.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LikelihoodConfig {
    pub pmf: FlowSizePmf,
    /// Packet retention probability.
    pub q: f64,
    /// Latent sizes whose `p_M·τ` share falls below this fraction of the
    /// total are ignored. Zero disables truncation.
    #[cfg_attr(feature = "serde", serde(default = "default_truncation"))]
    pub truncation: f64,
    /// Use the duration-only likelihood.
    #[cfg_attr(feature = "serde", serde(default = "default_restricted"))]
    pub restricted: bool,
    #[cfg_attr(feature = "serde", serde(default))]
    pub policy: ConvolutionPolicy,
}

#[cfg(feature = "serde")]
fn default_truncation() -> f64 {
    1e-10
}

#[cfg(feature = "serde")]
fn default_restricted() -> bool {
    true
}

impl LikelihoodConfig {
    pub fn new(pmf: FlowSizePmf, q: f64) -> Self {
        LikelihoodConfig { pmf, q, truncation: 1e-10, restricted: true, policy: ConvolutionPolicy::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_q(self.q)?;
        if !(self.truncation >= 0.0 && self.truncation < 1.0) {
            return Err(Error::config(format!("truncation must lie in [0, 1), got {}", self.truncation)));
        }
        self.policy.validate()
    }
}

// ---------------------------------------------------------------------------
// Convolution kernels with per-order constants.

#[derive(Debug, Clone, Copy)]
enum KernelShape {
    /// `c + (a - 1)·ln x - b·x`
    Gamma,
    /// `c - ln x - b·(ln x - a)²`
    LogNormal,
    Quadrature,
}

/// `ln g^{*k}` for a fixed model, with the order-dependent constants
/// computed once per order.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    model: PacketModel,
    shape: KernelShape,
    policy: ConvolutionPolicy,
    c: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    ready: Vec<bool>,
    /// Count of Fenton–Wilkinson evaluations below the reliability threshold.
    pub(crate) fw_flagged: usize,
    threshold: Vec<f64>,
}

impl Kernel {
    pub(crate) fn new(model: PacketModel, policy: &ConvolutionPolicy) -> Result<Self> {
        let shape = match (model, policy.mode) {
            (_, ConvolutionMode::NumericQuadrature) => KernelShape::Quadrature,
            (PacketModel::Gamma { .. } | PacketModel::Exponential { .. }, _) => KernelShape::Gamma,
            (PacketModel::LogNormal { .. }, ConvolutionMode::FentonWilkinson) => KernelShape::LogNormal,
            (PacketModel::LogNormal { .. }, ConvolutionMode::ClosedForm) => {
                return Err(Error::Policy("no closed-form convolution for the log-normal family".into()))
            }
        };
        Ok(Kernel {
            model,
            shape,
            policy: *policy,
            c: Vec::new(),
            a: Vec::new(),
            b: Vec::new(),
            ready: Vec::new(),
            fw_flagged: 0,
            threshold: Vec::new(),
        })
    }

    /// Prepares the constants for every order in `orders`.
    pub(crate) fn prepare(&mut self, orders: impl IntoIterator<Item = u64>) -> Result<()> {
        for k in orders {
            self.prepare_one(k)?;
        }
        Ok(())
    }

    fn prepare_one(&mut self, k: u64) -> Result<()> {
        let i = k as usize;
        if i >= self.ready.len() {
            let n = i + 1;
            self.c.resize(n, f64::NAN);
            self.a.resize(n, f64::NAN);
            self.b.resize(n, f64::NAN);
            self.threshold.resize(n, 0.0);
            self.ready.resize(n, false);
        }
        if self.ready[i] {
            return Ok(());
        }
        if k == 0 {
            return Err(Error::domain("convolution order must be at least 1"));
        }
        let kf = k as f64;
        match (self.shape, self.model) {
            (KernelShape::Gamma, PacketModel::Gamma { shape, rate }) => {
                let a = kf * shape;
                self.a[i] = a;
                self.b[i] = rate;
                self.c[i] = a * ln(rate) - ln_gamma(a);
            }
            (KernelShape::Gamma, PacketModel::Exponential { rate }) => {
                self.a[i] = kf;
                self.b[i] = rate;
                self.c[i] = kf * ln(rate) - ln_gamma(kf);
            }
            (KernelShape::LogNormal, PacketModel::LogNormal { mu, sigma }) => {
                let (ms, ss) = fenton_wilkinson_params(k, mu, sigma)?;
                self.a[i] = ms;
                self.b[i] = 0.5 / (ss * ss);
                self.c[i] = -ln(ss) - LN_SQRT_2PI;
                self.threshold[i] = if k == 1 { 0.0 } else { self.policy.fw_threshold(k, mu) };
            }
            (KernelShape::Quadrature, _) => {}
            _ => unreachable!("kernel shape chosen from the model"),
        }
        self.ready[i] = true;
        Ok(())
    }

    /// `ln g^{*k}(x)`; `k` must have been prepared.
    #[inline]
    pub(crate) fn eval(&mut self, k: u64, x: f64, lnx: f64) -> f64 {
        let i = k as usize;
        match self.shape {
            KernelShape::Gamma => self.c[i] + (self.a[i] - 1.0) * lnx - self.b[i] * x,
            KernelShape::LogNormal => {
                if x < self.threshold[i] {
                    self.fw_flagged += 1;
                }
                let d = lnx - self.a[i];
                self.c[i] - lnx - self.b[i] * d * d
            }
            KernelShape::Quadrature => {
                quadrature_kfold_ln(&self.model, k, x, self.policy.quadrature_points).unwrap_or(f64::NEG_INFINITY)
            }
        }
    }

    pub(crate) fn eval_checked(&mut self, k: u64, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("duration must be positive, got {x}")));
        }
        self.prepare_one(k)?;
        let v = self.eval(k, x, ln(x));
        if v.is_nan() {
            return Err(Error::numerical(format!("convolution density is NaN at k = {k}, x = {x:e}")));
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Complete-data NetFlow likelihood.

fn flow_gap_ln(flow_rate: f64, s_f: f64) -> f64 {
    ln(flow_rate) - flow_rate * s_f
}

fn check_flow_rate(flow_rate: f64) -> Result<()> {
    if flow_rate > 0.0 && flow_rate.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("flow rate must be positive, got {flow_rate}")))
    }
}

fn log_mass_checked(pmf: &FlowSizePmf, size: u64) -> Result<f64> {
    let lp = pmf.log_mass(size);
    if lp.is_finite() {
        Ok(lp)
    } else {
        Err(Error::domain(format!("flow size {size} has zero probability under the size law")))
    }
}

/// `ln f(s_f; λ) + ln g^{*m}(s_d) + ln p_M(m + 1)`; the duration term is
/// absent for single-packet flows.
pub fn netflow_loglik(
    s: &NetFlow,
    flow_rate: f64,
    packet_model: &PacketModel,
    pmf: &FlowSizePmf,
    policy: &ConvolutionPolicy,
) -> Result<f64> {
    let mut kernel = Kernel::new(*packet_model, policy)?;
    netflow_term(s, flow_rate, &mut kernel, pmf)
}

fn netflow_term(s: &NetFlow, flow_rate: f64, kernel: &mut Kernel, pmf: &FlowSizePmf) -> Result<f64> {
    check_flow_rate(flow_rate)?;
    if s.size == 0 || !(s.s_f >= 0.0) {
        return Err(Error::domain(format!("invalid NetFlow ({}, {}, {})", s.s_f, s.s_d, s.size)));
    }
    let lp = log_mass_checked(pmf, s.size)?;
    let lf = flow_gap_ln(flow_rate, s.s_f);
    if s.size == 1 {
        return Ok(lf + lp);
    }
    if !(s.s_d > 0.0) {
        return Err(Error::domain(format!("a flow of {} packets needs a positive duration, got {}", s.size, s.s_d)));
    }
    let lk = kernel.eval_checked(s.m(), s.s_d)?;
    Ok(lf + lk + lp)
}

// ---------------------------------------------------------------------------
// Mixture weights of the sampled likelihood.

/// Latent sizes `n >= m̃` with `ln(p_M(n)·τ_n(m̃; q))`, truncated by mass.
pub fn latent_sizes(m_tilde: u64, cfg: &LikelihoodConfig) -> Result<Vec<(u64, f64)>> {
    cfg.validate()?;
    if m_tilde < 1 {
        return Err(Error::domain("latent sizes need at least one retained packet"));
    }
    let q = cfg.q;
    let lq = ln(q);
    let l1q = if q < 1.0 { ln1p(-q) } else { f64::NEG_INFINITY };
    let mt = m_tilde as f64;
    let ln_tol = if cfg.truncation > 0.0 { ln(cfg.truncation) } else { f64::NEG_INFINITY };
    let mut out = Vec::new();
    let mut running = LogSumExp::default();
    for (n, lp) in cfg.pmf.iter_from(m_tilde) {
        if !lp.is_finite() {
            continue;
        }
        let extra = n - m_tilde;
        let tail = if extra == 0 { 0.0 } else { extra as f64 * l1q };
        if !tail.is_finite() {
            break;
        }
        let lt = lp + ln_binomial(n as f64, mt) + mt * lq + tail;
        running.push(lt);
        out.push((n, lt));
        if !cfg.pmf.is_bounded() && ln_tol.is_finite() && (n as f64) * q >= mt {
            // Past the mode of τ, terms shrink at least geometrically.
            let nf = n as f64;
            let r = (nf + 1.0) * (1.0 - q) / (nf + 1.0 - mt);
            if r < 1.0 && lt - ln(1.0 - r) < running.value() + ln_tol {
                break;
            }
        }
    }
    let total = log_sum_exp(&out.iter().map(|(_, l)| *l).collect::<Vec<_>>());
    if !total.is_finite() {
        return Err(Error::domain(format!("no latent flow size can produce {m_tilde} retained packets")));
    }
    out.retain(|(_, l)| *l >= total + ln_tol);
    Ok(out)
}

/// Posterior weights of the latent flow size given `m̃`, normalised.
pub fn latent_posterior(m_tilde: u64, cfg: &LikelihoodConfig) -> Result<Vec<(u64, f64)>> {
    let latent = latent_sizes(m_tilde, cfg)?;
    let total = log_sum_exp(&latent.iter().map(|(_, l)| *l).collect::<Vec<_>>());
    Ok(latent.into_iter().map(|(n, l)| (n, exp(l - total))).collect())
}

/// One mixture cell: first retained position `lead` (1-based, `0` when the
/// cell is marginalised over it) and span `span`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightEntry {
    pub lead: u64,
    pub span: u64,
    pub log_weight: f64,
}

/// Mixture weights for one retained count `m̃`, with latent sizes summed out.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureWeights {
    pub m_tilde: u64,
    pub q: f64,
    pub restricted: bool,
    pub entries: Vec<WeightEntry>,
    /// `ln p_M̃(m̃)` over the retained latent sizes; the entries sum to it.
    pub log_marginal: f64,
}

impl MixtureWeights {
    /// `Σ exp(log_weight) / p_M̃(m̃)`.
    pub fn normalized_total(&self) -> f64 {
        let terms: Vec<f64> = self.entries.iter().map(|e| exp(e.log_weight - self.log_marginal)).collect();
        compensated_sum(&terms)
    }

    fn max_span(&self) -> u64 {
        self.entries.iter().map(|e| e.span).max().unwrap_or(0)
    }
}

/// Weights `Σ_m p_M·τ·υ` (or `υ'` in restricted mode) per mixture cell.
pub fn mixture_weights(m_tilde: u64, cfg: &LikelihoodConfig) -> Result<MixtureWeights> {
    if m_tilde < 2 {
        return Err(Error::domain(format!("mixture weights need m̃ >= 2, got {m_tilde}")));
    }
    let latent = latent_sizes(m_tilde, cfg)?;
    if latent.is_empty() {
        return Err(Error::config("latent-size truncation left an empty support"));
    }
    let q = cfg.q;
    let mt = m_tilde as f64;
    let lq = ln(q);
    let l1q = if q < 1.0 { ln1p(-q) } else { f64::NEG_INFINITY };
    // a_n = ln p(n) + (n - m̃) ln(1 - q), so p·τ·υ = C(k-1, m̃-2)·q^{m̃}·e^{a_n}.
    let a: Vec<(u64, f64)> = latent
        .iter()
        .map(|&(n, _)| {
            let extra = n - m_tilde;
            let tail = if extra == 0 { 0.0 } else { extra as f64 * l1q };
            (n, cfg.pmf.log_mass(n) + tail)
        })
        .collect();
    let log_marginal = log_sum_exp(&latent.iter().map(|(_, l)| *l).collect::<Vec<_>>());
    let n_max = a.last().map(|(n, _)| *n).unwrap_or(0);
    let mut entries = Vec::new();
    let mut scratch = Vec::with_capacity(a.len());
    if cfg.restricted {
        for k in (m_tilde - 1)..n_max {
            scratch.clear();
            scratch.extend(a.iter().filter(|(n, _)| *n > k).map(|&(n, an)| ln((n - k) as f64) + an));
            let s = log_sum_exp(&scratch);
            if s.is_finite() {
                let lw = ln_binomial((k - 1) as f64, mt - 2.0) + mt * lq + s;
                entries.push(WeightEntry { lead: 0, span: k, log_weight: lw });
            }
        }
    } else {
        // suffix[t] = ln Σ_{n >= t} e^{a_n}
        let mut suffix = vec![f64::NEG_INFINITY; n_max as usize + 2];
        let mut idx = a.len();
        let mut acc = LogSumExp::default();
        for t in (1..=n_max as usize).rev() {
            while idx > 0 && a[idx - 1].0 as usize >= t {
                idx -= 1;
                acc.push(a[idx].1);
            }
            suffix[t] = acc.value();
        }
        for k in (m_tilde - 1)..n_max {
            let lc = ln_binomial((k - 1) as f64, mt - 2.0) + mt * lq;
            for j in 1..=(n_max - k) {
                let s = suffix[(j + k) as usize];
                if s.is_finite() {
                    entries.push(WeightEntry { lead: j, span: k, log_weight: lc + s });
                }
            }
        }
    }
    let top = entries.iter().map(|e| e.log_weight).fold(f64::NEG_INFINITY, f64::max);
    entries.retain(|e| e.log_weight >= top + CELL_CUTOFF_LN);
    Ok(MixtureWeights { m_tilde, q, restricted: cfg.restricted, entries, log_marginal })
}

// ---------------------------------------------------------------------------
// Sampled likelihoods.

fn check_sampled(s: &SampledNetFlow) -> Result<()> {
    if s.size < 2 {
        return Err(Error::domain(format!("sampled NetFlows need m̃ >= 2, got {}", s.size)));
    }
    if !(s.s_d > 0.0) || !s.s_d.is_finite() {
        return Err(Error::domain(format!("sampled duration must be positive, got {}", s.s_d)));
    }
    if !(s.s_f >= 0.0) || !s.s_f.is_finite() {
        return Err(Error::domain(format!("sampled leading gap must be non-negative, got {}", s.s_f)));
    }
    Ok(())
}

/// Full sampled likelihood: mixes over latent size, first retained position
/// and span, with the leading-gap term `(f * g^{*(j-1)})(s̃_f)`.
pub fn sampled_netflow_loglik(
    s: &SampledNetFlow,
    flow_rate: f64,
    packet_model: &PacketModel,
    cfg: &LikelihoodConfig,
) -> Result<f64> {
    check_sampled(s)?;
    check_flow_rate(flow_rate)?;
    let mut full = cfg.clone();
    full.restricted = false;
    let weights = mixture_weights(s.size, &full)?;
    let mut kernel = Kernel::new(*packet_model, &cfg.policy)?;
    full_mixture_term(s, flow_rate, packet_model, &cfg.policy, &weights, &mut kernel)
}

fn full_mixture_term(
    s: &SampledNetFlow,
    flow_rate: f64,
    packet_model: &PacketModel,
    policy: &ConvolutionPolicy,
    weights: &MixtureWeights,
    kernel: &mut Kernel,
) -> Result<f64> {
    let max_span = weights.max_span();
    let max_lead = weights.entries.iter().map(|e| e.lead).max().unwrap_or(0);
    let lnx = ln(s.s_d);
    let mut span_ln = vec![f64::NAN; max_span as usize + 1];
    let mut lead_ln = vec![f64::NAN; max_lead as usize + 1];
    let mut acc = Vec::with_capacity(weights.entries.len());
    for e in &weights.entries {
        let (j, k) = (e.lead as usize, e.span as usize);
        if lead_ln[j].is_nan() {
            lead_ln[j] = if s.s_f > 0.0 {
                flow_gap_log_density(flow_rate, packet_model, e.lead - 1, s.s_f, policy)?
            } else if e.lead == 1 {
                flow_gap_ln(flow_rate, 0.0)
            } else {
                f64::NEG_INFINITY
            };
        }
        if span_ln[k].is_nan() {
            kernel.prepare_one(e.span)?;
            span_ln[k] = kernel.eval(e.span, s.s_d, lnx);
        }
        acc.push((lead_ln[j] + span_ln[k]) + e.log_weight);
    }
    finite_or_error(log_sum_exp(&acc), s.s_d)
}

fn finite_or_error(v: f64, x: f64) -> Result<f64> {
    if v.is_nan() || v == f64::INFINITY {
        Err(Error::numerical(format!("likelihood is {v} at duration {x:e}")))
    } else {
        Ok(v)
    }
}

/// Duration-only sampled likelihood `ln Σ_{m,k} p_M·τ·υ'·g^{*k}(s̃_d)`.
pub fn restricted_sampled_loglik(
    s_d: f64,
    m_tilde: u64,
    packet_model: &PacketModel,
    cfg: &LikelihoodConfig,
) -> Result<f64> {
    if !(s_d > 0.0) || !s_d.is_finite() {
        return Err(Error::domain(format!("sampled duration must be positive, got {s_d}")));
    }
    let mut restricted = cfg.clone();
    restricted.restricted = true;
    let weights = mixture_weights(m_tilde, &restricted)?;
    let mut kernel = Kernel::new(*packet_model, &cfg.policy)?;
    kernel.prepare(weights.entries.iter().map(|e| e.span))?;
    let mut buf = Vec::new();
    Ok(restricted_term(s_d, ln(s_d), &weights, &mut kernel, &mut buf))
}

#[inline]
fn restricted_term(x: f64, lnx: f64, weights: &MixtureWeights, kernel: &mut Kernel, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(weights.entries.iter().map(|e| e.log_weight + kernel.eval(e.span, x, lnx)));
    log_sum_exp(buf)
}

// ---------------------------------------------------------------------------
// Session objectives.

/// Per-flow constants for the complete-data session likelihood.
#[derive(Debug, Clone)]
pub struct NetflowObjective {
    flow_rate: f64,
    /// `(m, s_d, ln s_d, ln f(s_f) + ln p_M(m+1))`
    rows: Vec<(u64, f64, f64, f64)>,
}

impl NetflowObjective {
    pub fn new(netflows: &[NetFlow], flow_rate: f64, pmf: &FlowSizePmf) -> Result<Self> {
        if netflows.is_empty() {
            return Err(Error::domain("a session needs at least one NetFlow"));
        }
        check_flow_rate(flow_rate)?;
        let rows = netflows
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let row = (|| {
                    if s.size == 0 || !(s.s_f >= 0.0) || (s.size >= 2 && !(s.s_d > 0.0)) {
                        return Err(Error::domain(format!("invalid NetFlow ({}, {}, {})", s.s_f, s.s_d, s.size)));
                    }
                    let fixed = flow_gap_ln(flow_rate, s.s_f);
                    let lp = log_mass_checked(pmf, s.size)?;
                    let lnx = if s.size >= 2 { ln(s.s_d) } else { 0.0 };
                    Ok((s.m(), s.s_d, lnx, fixed, lp))
                })();
                row.map_err(|e| e.at_flow(i))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .map(|(m, sd, lnx, lf, lp)| (m, sd, lnx, lf + lp))
            .collect();
        Ok(NetflowObjective { flow_rate, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn flow_rate(&self) -> f64 {
        self.flow_rate
    }

    /// Per-flow log-likelihood terms.
    pub fn terms(&self, model: &PacketModel, policy: &ConvolutionPolicy) -> Result<Vec<f64>> {
        let mut kernel = Kernel::new(*model, policy)?;
        kernel.prepare(self.rows.iter().filter(|r| r.0 >= 1).map(|r| r.0))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, &(m, sd, lnx, fixed))| {
                let lk = if m == 0 { 0.0 } else { kernel.eval(m, sd, lnx) };
                // Same association as `netflow_loglik`: (ln f + ln g) + ln p.
                let v = if m == 0 { fixed } else { lk + fixed };
                finite_or_error(v, sd).map_err(|e| e.at_flow(i))
            })
            .collect()
    }

    /// `(1/n) Σ ℓᵢ`.
    pub fn mean(&self, model: &PacketModel, policy: &ConvolutionPolicy) -> Result<f64> {
        let t = self.terms(model, policy)?;
        Ok(compensated_sum(&t) / t.len() as f64)
    }
}

/// Precomputed mixture weights for a collection of sampled NetFlows.
#[derive(Debug, Clone)]
pub struct SampledObjective {
    cfg: LikelihoodConfig,
    flow_rate: f64,
    weights: BTreeMap<u64, MixtureWeights>,
    flows: Vec<SampledNetFlow>,
    spans: Vec<u64>,
}

impl SampledObjective {
    pub fn new(sampled: &[SampledNetFlow], flow_rate: f64, cfg: &LikelihoodConfig) -> Result<Self> {
        if sampled.is_empty() {
            return Err(Error::domain("a session needs at least one sampled NetFlow"));
        }
        cfg.validate()?;
        check_flow_rate(flow_rate)?;
        for (i, s) in sampled.iter().enumerate() {
            check_sampled(s).map_err(|e| e.at_flow(i))?;
        }
        let mut weights = BTreeMap::new();
        for s in sampled {
            if let alloc::collections::btree_map::Entry::Vacant(v) = weights.entry(s.size) {
                v.insert(mixture_weights(s.size, cfg)?);
            }
        }
        let mut spans: Vec<u64> = weights.values().flat_map(|w| w.entries.iter().map(|e| e.span)).collect();
        spans.sort_unstable();
        spans.dedup();
        Ok(SampledObjective { cfg: cfg.clone(), flow_rate, weights, flows: sampled.to_vec(), spans })
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn config(&self) -> &LikelihoodConfig {
        &self.cfg
    }

    /// Weights for retained count `m̃`, if any flow has it.
    pub fn weights(&self, m_tilde: u64) -> Option<&MixtureWeights> {
        self.weights.get(&m_tilde)
    }

    /// Per-flow log-likelihood terms, plus the number of Fenton–Wilkinson
    /// evaluations that fell below the reliability threshold.
    pub fn terms_with_flags(&self, model: &PacketModel) -> Result<(Vec<f64>, usize)> {
        let mut kernel = Kernel::new(*model, &self.cfg.policy)?;
        kernel.prepare(self.spans.iter().copied())?;
        let mut buf = Vec::new();
        let terms = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let w = &self.weights[&s.size];
                let v = if self.cfg.restricted {
                    restricted_term(s.s_d, ln(s.s_d), w, &mut kernel, &mut buf)
                } else {
                    full_mixture_term(s, self.flow_rate, model, &self.cfg.policy, w, &mut kernel)
                        .map_err(|e| e.at_flow(i))?
                };
                finite_or_error(v, s.s_d).map_err(|e| e.at_flow(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((terms, kernel.fw_flagged))
    }

    pub fn terms(&self, model: &PacketModel) -> Result<Vec<f64>> {
        self.terms_with_flags(model).map(|(t, _)| t)
    }

    pub fn mean(&self, model: &PacketModel) -> Result<f64> {
        let t = self.terms(model)?;
        Ok(compensated_sum(&t) / t.len() as f64)
    }
}

/// Mean complete-data log-likelihood `ℓ_n` of a session.
pub fn session_loglik(
    netflows: &[NetFlow],
    flow_rate: f64,
    packet_model: &PacketModel,
    pmf: &FlowSizePmf,
    policy: &ConvolutionPolicy,
) -> Result<f64> {
    NetflowObjective::new(netflows, flow_rate, pmf)?.mean(packet_model, policy)
}

/// Mean sampled log-likelihood `ℓ̃_n`, restricted or full per `cfg`.
pub fn sampled_session_loglik(
    sampled: &[SampledNetFlow],
    flow_rate: f64,
    packet_model: &PacketModel,
    cfg: &LikelihoodConfig,
) -> Result<f64> {
    SampledObjective::new(sampled, flow_rate, cfg)?.mean(packet_model)
}

// ---------------------------------------------------------------------------
// Marginal duration law.

/// Law of the (sampled) duration of a non-trivial flow: a mixture of
/// `g^{*k}` over spans `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDuration {
    /// `(k, ln w_k)` with `Σ w_k = 1`.
    spans: Vec<(u64, f64)>,
    cdf: Vec<f64>,
}

impl MarginalDuration {
    /// Summing the restricted weights over `m̃ >= 2` gives, per latent size
    /// `n` and span `k`, `(n - k)·q²·(1 - q)^{n-1-k}`.
    pub fn new(cfg: &LikelihoodConfig) -> Result<Self> {
        cfg.validate()?;
        if !cfg.pmf.is_bounded() {
            return Err(Error::config("the marginal duration law needs a bounded flow-size law"));
        }
        let q = cfg.q;
        let l1q = if q < 1.0 { ln1p(-q) } else { f64::NEG_INFINITY };
        let latent: Vec<(u64, f64)> = cfg.pmf.iter_from(2).collect();
        let n_max = latent.last().map(|(n, _)| *n).ok_or_else(|| {
            Error::config("the flow-size law has no flows of two or more packets")
        })?;
        let mut raw = Vec::new();
        let mut buf = Vec::with_capacity(latent.len());
        for k in 1..n_max {
            buf.clear();
            for &(n, lp) in latent.iter().filter(|(n, _)| *n > k) {
                let gap = n - 1 - k;
                let tail = if gap == 0 { 0.0 } else { gap as f64 * l1q };
                buf.push(lp + ln((n - k) as f64) + tail);
            }
            let s = log_sum_exp(&buf);
            if s.is_finite() {
                raw.push((k, s));
            }
        }
        let top = raw.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        raw.retain(|r| r.1 >= top + CELL_CUTOFF_LN);
        let total = log_sum_exp(&raw.iter().map(|r| r.1).collect::<Vec<_>>());
        let spans: Vec<(u64, f64)> = raw.into_iter().map(|(k, s)| (k, s - total)).collect();
        let mut cdf = Vec::with_capacity(spans.len());
        let mut acc = crate::special::CompensatedSum::default();
        for (_, lw) in &spans {
            acc.add(exp(*lw));
            cdf.push(acc.total());
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(MarginalDuration { spans, cdf })
    }

    pub fn spans(&self) -> &[(u64, f64)] {
        &self.spans
    }

    pub(crate) fn ln_density_with(&self, kernel: &mut Kernel, x: f64, buf: &mut Vec<f64>) -> f64 {
        let lnx = ln(x);
        buf.clear();
        buf.extend(self.spans.iter().map(|&(k, lw)| lw + kernel.eval(k, x, lnx)));
        log_sum_exp(buf)
    }

    pub(crate) fn kernel(&self, model: &PacketModel, policy: &ConvolutionPolicy) -> Result<Kernel> {
        let mut kernel = Kernel::new(*model, policy)?;
        kernel.prepare(self.spans.iter().map(|s| s.0))?;
        Ok(kernel)
    }

    pub fn ln_density(&self, model: &PacketModel, policy: &ConvolutionPolicy, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("duration must be positive, got {x}")));
        }
        let mut kernel = self.kernel(model, policy)?;
        Ok(self.ln_density_with(&mut kernel, x, &mut Vec::new()))
    }

    /// Draws a span from the mixing law.
    pub fn sample_span<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|c| *c <= u).min(self.spans.len() - 1);
        self.spans[i].0
    }
}

/// `ln f_{S_d}(x)` (or `f_{S̃_d}` when `cfg.q < 1`), conditional on a
/// non-trivial flow.
pub fn marginal_duration_logdensity(duration: f64, packet_model: &PacketModel, cfg: &LikelihoodConfig) -> Result<f64> {
    MarginalDuration::new(cfg)?.ln_density(packet_model, &cfg.policy, duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::kfold_log_density;

    fn ex2() -> FlowSizePmf {
        FlowSizePmf::zipf(vec![11, 101, 1001], 1.0).unwrap()
    }

    #[test]
    fn three_packets_two_kept() {
        let mut cfg = LikelihoodConfig::new(FlowSizePmf::point(3).unwrap(), 0.5);
        cfg.restricted = false;
        let w = mixture_weights(2, &cfg).unwrap();
        // τ = 3·0.5³, split over three equally likely pairs.
        assert!((exp(w.log_marginal) - 0.375).abs() < 1e-15);
        assert_eq!(w.entries.len(), 3);
        for e in &w.entries {
            assert!((exp(e.log_weight) - 0.125).abs() < 1e-15, "{e:?}");
        }
    }

    #[test]
    fn full_retention_forces_single_cell() {
        let mut cfg = LikelihoodConfig::new(FlowSizePmf::point(5).unwrap(), 0.3);
        cfg.restricted = false;
        let w = mixture_weights(5, &cfg).unwrap();
        assert_eq!(w.entries.len(), 1);
        assert_eq!((w.entries[0].lead, w.entries[0].span), (1, 4));
        assert!((w.normalized_total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_normalise() {
        for restricted in [true, false] {
            for q in [0.1, 0.5, 0.9] {
                let mut cfg = LikelihoodConfig::new(FlowSizePmf::zipf(vec![3, 5, 8, 12], 1.3).unwrap(), q);
                cfg.restricted = restricted;
                cfg.truncation = 0.0;
                for mt in 2..=12 {
                    let w = mixture_weights(mt, &cfg).unwrap();
                    assert!((w.normalized_total() - 1.0).abs() < 1e-10, "q={q} m̃={mt}");
                }
            }
        }
    }

    #[test]
    fn latent_posterior_sums_to_one() {
        let cfg = LikelihoodConfig::new(ex2(), 0.1);
        let p = latent_posterior(3, &cfg).unwrap();
        let total: f64 = p.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_one_reduces_to_complete_data() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let pmf = ex2();
        let pol = ConvolutionPolicy::default();
        let mut cfg = LikelihoodConfig::new(pmf.clone(), 1.0);
        cfg.restricted = false;
        let s = NetFlow::new(0.3, 0.05, 11).unwrap();
        let a = netflow_loglik(&s, 1.0, &model, &pmf, &pol).unwrap();
        let b = sampled_netflow_loglik(&SampledNetFlow::from(s), 1.0, &model, &cfg).unwrap();
        assert_eq!(a, b);
        let r = restricted_sampled_loglik(0.05, 11, &model, &cfg).unwrap();
        let k = kfold_log_density(&model, 10, 0.05, &pol).unwrap();
        assert!((r - (k + pmf.log_mass(11))).abs() < 1e-12);
    }

    #[test]
    fn size_two_is_single_gap() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let pmf = FlowSizePmf::zipf(vec![1, 2, 3], 1.0).unwrap();
        let s = NetFlow::new(0.2, 0.001, 2).unwrap();
        let v = netflow_loglik(&s, 2.0, &model, &pmf, &ConvolutionPolicy::default()).unwrap();
        let expect = (ln(2.0) - 0.4) + model.log_density(0.001).unwrap() + pmf.log_mass(2);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn exponential_netflow_is_erlang() {
        let model = PacketModel::exponential(3.0).unwrap();
        let pmf = FlowSizePmf::point(6).unwrap();
        let s = NetFlow::new(0.5, 1.7, 6).unwrap();
        let v = netflow_loglik(&s, 1.0, &model, &pmf, &ConvolutionPolicy::default()).unwrap();
        let erlang = 5.0 * ln(3.0) + 4.0 * ln(1.7) - 3.0 * 1.7 - ln_gamma(5.0);
        assert!((v - (-0.5 + erlang)).abs() < 1e-12);
    }

    #[test]
    fn size_one_has_no_duration_term() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let pmf = FlowSizePmf::zipf(vec![1, 2], 1.0).unwrap();
        let s = NetFlow::new(0.5, 0.0, 1).unwrap();
        let v = netflow_loglik(&s, 1.0, &model, &pmf, &ConvolutionPolicy::default()).unwrap();
        assert!((v - (-0.5 + pmf.log_mass(1))).abs() < 1e-15);
        let bad = NetFlow { s_f: 0.5, s_d: 0.0, size: 3 };
        assert!(netflow_loglik(&bad, 1.0, &model, &FlowSizePmf::point(3).unwrap(), &ConvolutionPolicy::default()).is_err());
    }

    #[test]
    fn large_latent_sizes_negligible_for_small_counts() {
        let cfg = LikelihoodConfig { truncation: 0.0, ..LikelihoodConfig::new(ex2(), 0.1) };
        let latent = latent_sizes(3, &cfg).unwrap();
        let total = log_sum_exp(&latent.iter().map(|x| x.1).collect::<Vec<_>>());
        let big = latent.iter().find(|x| x.0 == 1001).unwrap().1;
        assert!(big - total < ln(1e-30));
        // with truncation the size is dropped altogether
        let trimmed = latent_sizes(3, &LikelihoodConfig::new(ex2(), 0.1)).unwrap();
        assert!(trimmed.iter().all(|x| x.0 != 1001));
    }

    #[test]
    fn degenerate_marginal_is_density() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let cfg = LikelihoodConfig::new(FlowSizePmf::point(2).unwrap(), 1.0);
        let v = marginal_duration_logdensity(0.002, &model, &cfg).unwrap();
        assert!((v - model.log_density(0.002).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn session_mean_and_permutation() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let pmf = ex2();
        let pol = ConvolutionPolicy::default();
        let flows = [
            NetFlow::new(0.3, 0.01, 11).unwrap(),
            NetFlow::new(0.1, 0.1, 101).unwrap(),
            NetFlow::new(2.0, 1.2, 1001).unwrap(),
        ];
        let one = session_loglik(&flows[..1], 1.0, &model, &pmf, &pol).unwrap();
        assert_eq!(one, netflow_loglik(&flows[0], 1.0, &model, &pmf, &pol).unwrap());
        let a = session_loglik(&flows, 1.0, &model, &pmf, &pol).unwrap();
        let rev: Vec<_> = flows.iter().rev().copied().collect();
        let b = session_loglik(&rev, 1.0, &model, &pmf, &pol).unwrap();
        assert!((a - b).abs() < 1e-12);
        let dup: Vec<_> = flows.iter().chain(flows.iter()).copied().collect();
        assert!((session_loglik(&dup, 1.0, &model, &pmf, &pol).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn session_errors_carry_flow_index() {
        let model = PacketModel::gamma(0.6, 526.32).unwrap();
        let pmf = FlowSizePmf::point(11).unwrap();
        let flows = [NetFlow::new(0.3, 0.01, 11).unwrap(), NetFlow::new(0.3, 0.01, 12).unwrap()];
        match session_loglik(&flows, 1.0, &model, &pmf, &ConvolutionPolicy::default()) {
            Err(Error::Flow { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected a flow error, got {other:?}"),
        }
    }
}
