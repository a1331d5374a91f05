//! Replicate studies: simulate many sessions, run estimators on each, and
//! summarise the estimates per (estimator, session size) cell.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Result};
use flowsum_core::empirical::{default_size_grid, empirical_flow_size_pmf};
use flowsum_core::estimate::{
    mle_netflow, mle_sampled_netflow, mle_standard, mom_hohn, mom_netflow, pooled_inter_renewals,
    two_step_lognormal_mle, FitResult, MomentEstimates, TwoStepInput,
};
use flowsum_core::netflow::{aggregate, aggregate_sampled, session_netflow};
use flowsum_core::optimize::OptimizerConfig;
use flowsum_core::rng::{derive_seed, domain};
use flowsum_core::{
    ConvolutionPolicy, Family, Flow, FlowSizePmf, LikelihoodConfig, NetFlow, SampledNetFlow, SessionConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{netflow_csv_bytes, netflow_rows, sampled_rows, trace_csv_bytes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Standard MLE on every packet inter-renewal.
    MleStandard,
    /// MLE on complete NetFlows.
    Mle,
    /// MLE on thinned NetFlows (duration-only likelihood).
    MleSampled,
    /// Moments from complete flows.
    Mom,
    /// Moments from NetFlows.
    MomNetflow,
    /// Log-Normal fit with the Fenton–Wilkinson stand-in for convolutions.
    LognormalTwoStep,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::MleStandard => "mle-standard",
            Estimator::Mle => "mle",
            Estimator::MleSampled => "mle-sampled",
            Estimator::Mom => "mom",
            Estimator::MomNetflow => "mom-netflow",
            Estimator::LognormalTwoStep => "lognormal-two-step",
        }
    }
}

fn default_replicates() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Generative setup; `n_flows` and `seed` are replaced per cell.
    pub session: SessionConfig,
    pub estimators: Vec<Estimator>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Family fitted by the likelihood estimators; the generating family by default.
    #[serde(default)]
    pub family: Option<Family>,
    /// Flow-size law assumed by the likelihoods; the generating law by default.
    #[serde(default)]
    pub fit_pmf: Option<FlowSizePmf>,
    /// Build the assumed law from each replicate's flow sizes on the size grid.
    #[serde(default)]
    pub empirical_grid: bool,
    #[serde(default)]
    pub policy: ConvolutionPolicy,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            bail!("n_grid must list positive session sizes");
        }
        if self.estimators.is_empty() {
            bail!("no estimators selected");
        }
        let mut probe = self.session.clone();
        probe.n_flows = 1;
        probe.validate()?;
        self.policy.validate()?;
        Ok(())
    }

    /// Session of replicate `r` with `n` flows. Smaller sessions are
    /// prefixes of larger ones for the same replicate.
    pub fn session_at(&self, r: usize, n: usize) -> SessionConfig {
        let mut s = self.session.clone();
        s.n_flows = n;
        s.seed = derive_seed(self.seed, domain::REPLICATE.wrapping_add(r as u64));
        s
    }
}

/// One estimator run on one replicate session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub estimator: Estimator,
    pub n: usize,
    pub replicate: usize,
    pub param_names: Vec<String>,
    /// `None` when the estimator failed.
    pub params: Option<Vec<f64>>,
    pub wall_time: f64,
    pub data_bytes: u64,
    pub error: Option<String>,
    pub warnings: Vec<String>,
}

/// Summary of one parameter in one (estimator, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub estimator: Estimator,
    pub n: usize,
    pub param: String,
    pub mean: f64,
    pub sd: f64,
    /// Standard error of the mean over replicates.
    pub se: f64,
    pub median: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub wall_time_mean: f64,
    pub data_bytes_mean: f64,
}

#[derive(Debug, Clone, Default)]
pub struct StudyResult {
    pub outcomes: Vec<ReplicateOutcome>,
    pub cells: Vec<CellSummary>,
}

impl StudyResult {
    /// Successful values of one parameter in one cell, by replicate.
    pub fn values(&self, estimator: Estimator, n: usize, param: &str) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter(|o| o.estimator == estimator && o.n == n)
            .filter_map(|o| {
                let i = o.param_names.iter().position(|p| p == param)?;
                o.params.as_ref().map(|p| p[i])
            })
            .collect()
    }

    pub fn cell(&self, estimator: Estimator, n: usize, param: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.estimator == estimator && c.n == n && c.param == param)
    }
}

struct Data {
    flows: Vec<Flow>,
    netflows: Vec<NetFlow>,
}

impl Data {
    fn nontrivial(&self) -> Vec<NetFlow> {
        self.netflows.iter().copied().filter(|n| n.size >= 2).collect()
    }
}

fn from_fit(r: flowsum_core::Result<FitResult>) -> (Vec<String>, flowsum_core::Result<(Vec<f64>, Vec<String>)>) {
    match r {
        Ok(f) => (f.param_names.clone(), Ok((f.params, f.warnings))),
        Err(e) => (Vec::new(), Err(e)),
    }
}

const MOMENT_NAMES: [&str; 3] = ["alpha", "beta", "beta_star"];

fn from_moments(r: flowsum_core::Result<MomentEstimates>) -> (Vec<String>, flowsum_core::Result<(Vec<f64>, Vec<String>)>) {
    let names = MOMENT_NAMES.iter().map(|s| s.to_string()).collect();
    (names, r.map(|m| (vec![m.alpha, m.beta, m.beta_star], m.warnings)))
}

fn run_one(cfg: &StudyConfig, session: &SessionConfig, data: &Data, est: Estimator, r: usize) -> ReplicateOutcome {
    let family = cfg.family.unwrap_or(session.packet_model.family());
    let pmf = if cfg.empirical_grid {
        let sizes: Vec<u64> = data.flows.iter().map(|f| f.size() as u64).collect();
        empirical_flow_size_pmf(&sizes, &default_size_grid())
    } else {
        Ok(cfg.fit_pmf.clone().unwrap_or_else(|| session.flow_size_pmf.clone()))
    };
    let q = session.thinning_q;
    let sampled = || -> Vec<SampledNetFlow> {
        data.flows
            .iter()
            .enumerate()
            .filter_map(|(i, f)| aggregate_sampled(&session.thin_at(i, f)).observed())
            .collect()
    };
    let lik_cfg = |pmf: FlowSizePmf| {
        let mut c = LikelihoodConfig::new(pmf, q);
        c.policy = cfg.policy.clone();
        c
    };
    let started = Instant::now();
    let (bytes, (names, result)) = match (est, pmf) {
        (_, Err(e)) => (0, (Vec::new(), Err(e))),
        (Estimator::MleStandard, _) => {
            let x = pooled_inter_renewals(&data.flows);
            (trace_csv_bytes(&data.flows), from_fit(mle_standard(&x, family, &cfg.optimizer)))
        }
        (Estimator::Mle, Ok(pmf)) => {
            let nf = data.nontrivial();
            let fit = mle_netflow(&nf, family, &pmf, &cfg.policy, &cfg.optimizer);
            (netflow_csv_bytes(netflow_rows(&data.netflows)), from_fit(fit))
        }
        (Estimator::MleSampled, Ok(pmf)) => {
            let s = sampled();
            let fit = mle_sampled_netflow(&s, family, &lik_cfg(pmf), &cfg.optimizer);
            (netflow_csv_bytes(sampled_rows(&s)), from_fit(fit))
        }
        (Estimator::Mom, _) => (trace_csv_bytes(&data.flows), from_moments(mom_hohn(&data.flows))),
        (Estimator::MomNetflow, _) => {
            (netflow_csv_bytes(netflow_rows(&data.netflows)), from_moments(mom_netflow(&data.netflows)))
        }
        (Estimator::LognormalTwoStep, Ok(pmf)) => {
            if q < 1.0 {
                let s = sampled();
                let fit = two_step_lognormal_mle(TwoStepInput::Sampled(&s), &lik_cfg(pmf), None, &cfg.optimizer);
                (netflow_csv_bytes(sampled_rows(&s)), from_fit(fit))
            } else {
                let fit = session_netflow(&data.netflows).and_then(|s| {
                    two_step_lognormal_mle(TwoStepInput::Session(&s), &lik_cfg(pmf), None, &cfg.optimizer)
                });
                (netflow_csv_bytes(netflow_rows(&data.netflows)), from_fit(fit))
            }
        }
    };
    let wall_time = started.elapsed().as_secs_f64();
    let (params, warnings, error) = match result {
        Ok((p, w)) => (Some(p), w, None),
        Err(e) => (None, Vec::new(), Some(e.to_string())),
    };
    let param_names = if names.is_empty() { family.param_names().iter().map(|s| s.to_string()).collect() } else { names };
    ReplicateOutcome { estimator: est, n: session.n_flows, replicate: r, param_names, params, wall_time, data_bytes: bytes, error, warnings }
}

fn summarise(outcomes: &[ReplicateOutcome], cfg: &StudyConfig) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &est in &cfg.estimators {
        for &n in &cfg.n_grid {
            let runs: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.estimator == est && o.n == n).collect();
            let Some(first) = runs.first() else { continue };
            let wall_time_mean = runs.iter().map(|o| o.wall_time).sum::<f64>() / runs.len() as f64;
            let data_bytes_mean = runs.iter().map(|o| o.data_bytes as f64).sum::<f64>() / runs.len() as f64;
            for (j, param) in first.param_names.iter().enumerate() {
                let mut v: Vec<f64> = runs
                    .iter()
                    .filter_map(|o| o.params.as_ref().map(|p| p[j]))
                    .filter(|x| x.is_finite())
                    .collect();
                let k = v.len();
                let mean = v.iter().sum::<f64>() / k as f64;
                let sd = if k > 1 {
                    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64).sqrt()
                } else {
                    f64::NAN
                };
                v.sort_by(f64::total_cmp);
                let median = match k {
                    0 => f64::NAN,
                    _ if k % 2 == 1 => v[k / 2],
                    _ => 0.5 * (v[k / 2 - 1] + v[k / 2]),
                };
                cells.push(CellSummary {
                    estimator: est,
                    n,
                    param: param.clone(),
                    mean,
                    sd,
                    se: sd / (k as f64).sqrt(),
                    median,
                    n_ok: k,
                    n_failed: runs.len() - k,
                    wall_time_mean,
                    data_bytes_mean,
                });
            }
        }
    }
    cells
}

/// Runs every (replicate, n, estimator) combination. Results do not depend
/// on the number of worker threads.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.replicates).flat_map(|r| cfg.n_grid.iter().map(move |&n| (r, n))).collect();
    let outcomes: Vec<ReplicateOutcome> = jobs
        .par_iter()
        .flat_map_iter(|&(r, n)| {
            let session = cfg.session_at(r, n);
            let flows: Vec<Flow> = (0..n).map(|i| session.flow_at(i)).collect();
            let netflows = flows.iter().map(aggregate).collect();
            let data = Data { flows, netflows };
            cfg.estimators.iter().map(|&e| run_one(cfg, &session, &data, e, r)).collect::<Vec<_>>()
        })
        .collect();
    let cells = summarise(&outcomes, cfg);
    Ok(StudyResult { outcomes, cells })
}

/// Writes the cell summaries as CSV. Every column except `wall_time_mean`
/// is reproducible under a fixed seed.
pub fn write_study_csv<W: Write>(w: W, cells: &[CellSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "estimator", "n", "param", "mean", "sd", "se", "median", "n_ok", "n_failed", "wall_time_mean",
        "data_bytes_mean",
    ])?;
    for c in cells {
        wtr.write_record([
            c.estimator.name().to_string(),
            c.n.to_string(),
            c.param.clone(),
            c.mean.to_string(),
            c.sd.to_string(),
            c.se.to_string(),
            c.median.to_string(),
            c.n_ok.to_string(),
            c.n_failed.to_string(),
            c.wall_time_mean.to_string(),
            c.data_bytes_mean.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
