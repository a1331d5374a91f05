//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flowsum_core::efficiency::{efficiency_bounds, info_summary, EfficiencyRequest};
use flowsum_core::empirical::{default_size_grid, empirical_flow_size_pmf, survival_curve, IngestConfig, Trace};
use flowsum_core::estimate::{
    mle_netflow, mle_sampled_netflow, mom_hohn, mom_netflow, pooled_inter_renewals, two_step_lognormal_mle,
    TwoStepInput,
};
use flowsum_core::likelihood::{NetflowObjective, SampledObjective};
use flowsum_core::netflow::{aggregate, aggregate_sampled, session_netflow};
use flowsum_core::optimize::OptimizerConfig;
use flowsum_core::rng::{domain, stream_rng};
use flowsum_core::simulate::{generate_session, thin_indices};
use flowsum_core::{Family, FlowSizePmf, LikelihoodConfig, NetFlow, PacketModel, SampledNetFlow, SessionConfig};
use serde::Serialize;

use crate::io::{
    create_output, detect_kind, group_trace, json_arg, netflow_rows, read_netflows, read_trace, read_trace_records,
    sampled_rows, session_to_trace, write_netflows, write_survival, write_trace_flows, CsvKind, TraceFlow,
};
use crate::study::{run_study, write_study_csv, StudyConfig};

#[derive(Debug, Parser)]
#[command(name = "flowsum", version, about = "Inference for packet renewal models from NetFlow summaries")]
pub struct Cli {
    /// Seed for every random stream (overrides seeds in config files).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Output file; standard output when absent or `-`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a session from a JSON session configuration.
    Simulate(SimulateArgs),
    /// Bernoulli-thin the packets of a trace CSV.
    Thin(ThinArgs),
    /// Aggregate a trace CSV into NetFlow records.
    Aggregate(AggregateArgs),
    /// Fit a packet model to a NetFlow or trace CSV.
    Fit(FitArgs),
    /// Number of NetFlows needed to match a packet-level fit.
    Bound(BoundArgs),
    /// Empirical survival curve of inter-renewals, with a model overlay.
    Survival(SurvivalArgs),
    /// Replicate study from a JSON study configuration.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimFormat {
    Trace,
    Netflow,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Session configuration (JSON file or inline JSON).
    #[arg(long)]
    pub config: String,
    /// Number of flows (overrides the configuration).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    #[arg(long, value_enum, default_value = "trace")]
    pub format: SimFormat,
}

#[derive(Debug, Args)]
pub struct ThinArgs {
    /// Trace CSV to thin.
    pub input: PathBuf,
    /// Retention probability.
    #[arg(long)]
    pub q: f64,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    pub input: PathBuf,
    /// Seconds substituted for zero inter-renewals.
    #[arg(long, default_value_t = 1e-7)]
    pub zero_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitEstimator {
    Mle,
    MleSampled,
    Mom,
    MomNetflow,
    LognormalTwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TwoStepMode {
    /// One aggregated observation for the whole session.
    Session,
    /// Per-flow terms for flows above the reliability threshold.
    PerFlow,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// NetFlow CSV (`s_f,s_d,size`) or trace CSV (`flow_id,timestamp_ns`).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "mle")]
    pub estimator: FitEstimator,
    /// Packet-model family.
    #[arg(long, default_value = "gamma")]
    pub model: Family,
    /// Flow-size law: JSON file or inline JSON, or `empirical` for the
    /// input's sizes rounded onto the size grid.
    #[arg(long)]
    pub pmf: Option<String>,
    /// Retention probability the data were thinned with.
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Likelihood settings (JSON); `--pmf` and `--q` take precedence.
    #[arg(long)]
    pub config: Option<String>,
    /// Optimizer settings (JSON).
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Flow arrival rate used by the complete-data likelihood.
    #[arg(long, default_value_t = 1.0)]
    pub flow_rate: f64,
    #[arg(long, value_enum, default_value = "session")]
    pub two_step: TwoStepMode,
    /// Write per-flow log-likelihood terms at the estimate to this CSV.
    #[arg(long)]
    pub trace_lik: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Flow-size law (JSON file or inline JSON); must have bounded support.
    #[arg(long)]
    pub pmf: String,
    /// Packet model (JSON file or inline JSON `{"family": ..., "params": [...]}`).
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    /// Flows behind the packet-level fit.
    #[arg(long, default_value_t = 1)]
    pub k_flows: u64,
}

#[derive(Debug, Args)]
pub struct SurvivalArgs {
    /// Trace CSV whose pooled inter-renewals are summarised.
    pub input: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Model to overlay (JSON file or inline JSON).
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study configuration (JSON file or inline JSON).
    #[arg(long)]
    pub config: String,
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 on a module error, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        // A pool may already exist when called repeatedly in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global();
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate(a) => simulate(a, cli.seed, out),
        Command::Thin(a) => thin(a, cli.seed.unwrap_or(0), out),
        Command::Aggregate(a) => aggregate_cmd(a, out),
        Command::Fit(a) => fit(a, cli.seed, out),
        Command::Bound(a) => bound(a, cli.seed.unwrap_or(0), out),
        Command::Survival(a) => survival(a, out),
        Command::Study(a) => study(a, cli.seed, out),
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = create_output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut cfg: SessionConfig = json_arg(&a.config)?;
    if let Some(n) = a.n {
        cfg.n_flows = n as usize;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    eprintln!("seed: {}", cfg.seed);
    let flows = generate_session(&cfg)?;
    let w = create_output(out)?;
    match a.format {
        SimFormat::Trace => write_trace_flows(w, &session_to_trace(&flows)),
        SimFormat::Netflow if cfg.thinning_q < 1.0 => {
            let sampled: Vec<SampledNetFlow> = flows
                .iter()
                .enumerate()
                .filter_map(|(i, f)| aggregate_sampled(&cfg.thin_at(i, f)).observed())
                .collect();
            eprintln!("trivial sampled flows dropped: {}", flows.len() - sampled.len());
            write_netflows(w, sampled_rows(&sampled))
        }
        SimFormat::Netflow => {
            let nf: Vec<NetFlow> = flows.iter().map(aggregate).collect();
            write_netflows(w, netflow_rows(&nf))
        }
    }
}

fn thin(a: ThinArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    if !(a.q > 0.0 && a.q <= 1.0) {
        bail!("q must lie in (0, 1], got {}", a.q);
    }
    let file = std::fs::File::open(&a.input).with_context(|| format!("cannot open {}", a.input.display()))?;
    let flows = group_trace(read_trace_records(std::io::BufReader::new(file))?);
    let mut kept = Vec::with_capacity(flows.len());
    for (i, f) in flows.into_iter().enumerate() {
        let mut rng = stream_rng(seed, domain::THINNING, i as u64);
        let idx = thin_indices(f.timestamps_ns.len(), a.q, &mut rng)?;
        if !idx.is_empty() {
            kept.push(TraceFlow { id: f.id, timestamps_ns: idx.into_iter().map(|j| f.timestamps_ns[j]).collect() });
        }
    }
    write_trace_flows(create_output(out)?, &kept)
}

fn netflows_of(trace: &Trace) -> Vec<NetFlow> {
    trace.flows.iter().map(aggregate).collect()
}

fn aggregate_cmd(a: AggregateArgs, out: Option<&Path>) -> Result<()> {
    let cfg = IngestConfig { zero_gap_replacement: a.zero_gap, min_flow_size: 1 };
    let trace = read_trace(&a.input, &cfg)?;
    eprintln!(
        "flows: {} (non-trivial {}), zero gaps replaced: {}",
        trace.flows.len(),
        trace.flows.iter().filter(|f| f.size() >= 2).count(),
        trace.clamped
    );
    write_netflows(create_output(out)?, netflow_rows(&netflows_of(&trace)))
}

/// Loaded fit input: NetFlows always, flows only from a trace.
struct FitInput {
    netflows: Vec<NetFlow>,
    trace: Option<Trace>,
}

fn load_fit_input(path: &Path) -> Result<FitInput> {
    match detect_kind(path)? {
        CsvKind::NetFlow => Ok(FitInput { netflows: read_netflows(path)?, trace: None }),
        CsvKind::Trace => {
            let trace = read_trace(path, &IngestConfig { min_flow_size: 1, ..Default::default() })?;
            Ok(FitInput { netflows: netflows_of(&trace), trace: Some(trace) })
        }
    }
}

fn resolve_pmf(arg: Option<&str>, base: Option<FlowSizePmf>, sizes: &[u64]) -> Result<FlowSizePmf> {
    match arg {
        Some("empirical") => Ok(empirical_flow_size_pmf(sizes, &default_size_grid())?),
        Some(s) => json_arg(s),
        None => match base {
            Some(p) => Ok(p),
            None => {
                // Observed sizes as they are; the law does not move the
                // complete-data estimate.
                let mut counts = std::collections::BTreeMap::<u64, f64>::new();
                for s in sizes {
                    *counts.entry(*s).or_default() += 1.0;
                }
                let (support, mass) = counts.into_iter().unzip();
                Ok(FlowSizePmf::from_masses(support, mass)?)
            }
        },
    }
}

#[derive(Serialize)]
struct TraceLikRow {
    index: usize,
    size: u64,
    s_d: f64,
    loglik: f64,
}

fn write_trace_lik(path: &Path, rows: Vec<TraceLikRow>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create_output(Some(path))?);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

fn fit(a: FitArgs, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let input = load_fit_input(&a.input)?;
    let mut opt: OptimizerConfig = match &a.optimizer {
        Some(s) => json_arg(s)?,
        None => OptimizerConfig::default(),
    };
    if let Some(s) = seed {
        opt.seed = s;
    }
    let base: Option<LikelihoodConfig> = a.config.as_deref().map(json_arg).transpose()?;
    let sizes: Vec<u64> = input.netflows.iter().map(|n| n.size).collect();
    let pmf = resolve_pmf(a.pmf.as_deref(), base.as_ref().map(|c| c.pmf.clone()), &sizes)?;
    let mut cfg = base.unwrap_or_else(|| LikelihoodConfig::new(pmf.clone(), a.q));
    cfg.pmf = pmf;
    cfg.q = a.q;
    let nontrivial: Vec<NetFlow> = input.netflows.iter().copied().filter(|n| n.size >= 2).collect();
    let sampled = || -> Result<Vec<SampledNetFlow>> {
        Ok(nontrivial.iter().map(|n| SampledNetFlow::new(n.s_f, n.s_d, n.size)).collect::<Result<_, _>>()?)
    };
    match a.estimator {
        FitEstimator::Mle => {
            if a.q < 1.0 {
                bail!("`mle` expects complete NetFlows; use `mle-sampled` for thinned data");
            }
            let res = mle_netflow(&nontrivial, a.model, &cfg.pmf, &cfg.policy, &opt)?;
            if let Some(p) = &a.trace_lik {
                let terms = NetflowObjective::new(&nontrivial, a.flow_rate, &cfg.pmf)?.terms(&res.model()?, &cfg.policy)?;
                write_trace_lik(p, lik_rows(nontrivial.iter().map(|n| (n.size, n.s_d)), terms))?;
            }
            write_json(out, &res)
        }
        FitEstimator::MleSampled => {
            if a.pmf.is_none() && a.config.is_none() {
                bail!("`mle-sampled` needs the flow-size law of the unthinned flows (--pmf)");
            }
            let s = sampled()?;
            let res = mle_sampled_netflow(&s, a.model, &cfg, &opt)?;
            if let Some(p) = &a.trace_lik {
                cfg.restricted = true;
                let terms = SampledObjective::new(&s, a.flow_rate, &cfg)?.terms(&res.model()?)?;
                write_trace_lik(p, lik_rows(s.iter().map(|n| (n.size, n.s_d)), terms))?;
            }
            write_json(out, &res)
        }
        FitEstimator::Mom => {
            let Some(trace) = &input.trace else {
                bail!("`mom` needs packet-level flows; pass a trace CSV");
            };
            write_json(out, &mom_hohn(&trace.flows)?)
        }
        FitEstimator::MomNetflow => write_json(out, &mom_netflow(&input.netflows)?),
        FitEstimator::LognormalTwoStep => {
            let res = if a.q < 1.0 {
                two_step_lognormal_mle(TwoStepInput::Sampled(&sampled()?), &cfg, None, &opt)?
            } else {
                match a.two_step {
                    TwoStepMode::Session => {
                        let s = session_netflow(&input.netflows)?;
                        two_step_lognormal_mle(TwoStepInput::Session(&s), &cfg, None, &opt)?
                    }
                    TwoStepMode::PerFlow => two_step_lognormal_mle(TwoStepInput::PerFlow(&nontrivial), &cfg, None, &opt)?,
                }
            };
            write_json(out, &res)
        }
    }
}

fn lik_rows(meta: impl Iterator<Item = (u64, f64)>, terms: Vec<f64>) -> Vec<TraceLikRow> {
    meta.zip(terms).enumerate().map(|(index, ((size, s_d), loglik))| TraceLikRow { index, size, s_d, loglik }).collect()
}

#[derive(Serialize)]
struct BoundReport {
    n_min: u64,
    lower: f64,
    upper: f64,
    joint_condition: bool,
    det_ratio: f64,
    h: Vec<Vec<f64>>,
    i: Vec<Vec<f64>>,
    ln_mgf_plus: f64,
    ln_mgf_minus: f64,
    warnings: Vec<String>,
}

fn bound(a: BoundArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let pmf: FlowSizePmf = json_arg(&a.pmf)?;
    let model: PacketModel = json_arg(&a.model)?;
    let cfg = LikelihoodConfig::new(pmf, a.q);
    let req = EfficiencyRequest {
        epsilon: a.epsilon,
        eta: a.eta,
        k_flows: a.k_flows,
        mc_samples: a.mc_samples,
        seed,
        ..Default::default()
    };
    let info = info_summary(&model, &cfg, &req)?;
    let b = efficiency_bounds(&req, &info)?;
    for w in &b.warnings {
        log::warn!("{w}");
    }
    write_json(
        out,
        &BoundReport {
            n_min: b.n_min,
            lower: b.lower,
            upper: b.upper,
            joint_condition: b.joint_condition,
            det_ratio: info.det_ratio,
            h: info.h.rows(),
            i: info.i.rows(),
            ln_mgf_plus: info.ln_mgf_plus,
            ln_mgf_minus: info.ln_mgf_minus,
            warnings: b.warnings.clone(),
        },
    )
}

fn survival(a: SurvivalArgs, out: Option<&Path>) -> Result<()> {
    let trace = read_trace(&a.input, &IngestConfig::default())?;
    let x = pooled_inter_renewals(&trace.flows);
    let model: Option<PacketModel> = a.model.as_deref().map(json_arg).transpose()?;
    let curve = survival_curve(&x, a.points, model.as_ref())?;
    write_survival(create_output(out)?, &curve)
}

fn study(a: StudyArgs, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut cfg: StudyConfig = json_arg(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    eprintln!("seed: {}", cfg.seed);
    let res = run_study(&cfg)?;
    for o in res.outcomes.iter().filter(|o| o.error.is_some()) {
        log::warn!("{} n={} replicate {}: {}", o.estimator.name(), o.n, o.replicate, o.error.as_deref().unwrap_or(""));
    }
    write_study_csv(create_output(out)?, &res.cells)
}

