//! Trace assembly, the restricted flow-size grid and empirical survival curves.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ceil, exp, ln, powi};
use crate::model::PacketModel;
use crate::pmf::FlowSizePmf;
use crate::simulate::Flow;

const NS_PER_SECOND: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct IngestConfig {
    /// Seconds substituted for zero inter-renewals.
    pub zero_gap_replacement: f64,
    /// Flows with fewer packets are counted but not kept.
    pub min_flow_size: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { zero_gap_replacement: 1e-7, min_flow_size: 2 }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zero_gap_replacement > 0.0) || !self.zero_gap_replacement.is_finite() {
            return Err(Error::config(format!(
                "zero_gap_replacement must be positive, got {}",
                self.zero_gap_replacement
            )));
        }
        if self.min_flow_size == 0 {
            return Err(Error::config("min_flow_size must be at least 1"));
        }
        Ok(())
    }
}

/// Flows assembled from a packet trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    /// Kept flows in order of first arrival.
    pub flows: Vec<Flow>,
    pub flow_ids: Vec<String>,
    /// Size of every flow, kept or not, in order of first arrival.
    pub all_sizes: Vec<u64>,
    /// Flows below `min_flow_size`.
    pub trivial: usize,
    /// Zero gaps that were replaced.
    pub clamped: usize,
}

/// Replaces zero gaps, returning how many were changed.
pub fn clamp_zero_gaps(gaps: &mut [f64], replacement: f64) -> usize {
    let mut n = 0;
    for g in gaps.iter_mut().filter(|g| **g == 0.0) {
        *g = replacement;
        n += 1;
    }
    n
}

/// Groups `(flow_id, timestamp_ns)` records into flows. Each flow's lead is
/// the time since the previous flow's first packet (zero for the first).
pub fn assemble_flows<I, S>(records: I, cfg: &IngestConfig) -> Result<Trace>
where
    I: IntoIterator<Item = (S, u64)>,
    S: Into<String>,
{
    cfg.validate()?;
    let mut groups: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (id, ts) in records {
        groups.entry(id.into()).or_default().push(ts);
    }
    let mut ordered: Vec<(String, Vec<u64>)> = groups
        .into_iter()
        .map(|(id, mut ts)| {
            ts.sort_unstable();
            (id, ts)
        })
        .collect();
    // Stable: ties in first arrival keep flow-id order.
    ordered.sort_by_key(|(_, ts)| ts[0]);
    let mut trace = Trace::default();
    let mut prev_start: Option<u64> = None;
    for (id, ts) in ordered {
        let start = ts[0];
        let lead = prev_start.map_or(0.0, |p| (start - p) as f64 / NS_PER_SECOND);
        prev_start = Some(start);
        trace.all_sizes.push(ts.len() as u64);
        if ts.len() < cfg.min_flow_size {
            trace.trivial += 1;
            continue;
        }
        let mut gaps: Vec<f64> = ts.windows(2).map(|w| (w[1] - w[0]) as f64 / NS_PER_SECOND).collect();
        trace.clamped += clamp_zero_gaps(&mut gaps, cfg.zero_gap_replacement);
        trace.flows.push(Flow::new(lead, gaps)?);
        trace.flow_ids.push(id);
    }
    Ok(trace)
}

/// `{⌈j·10^e⌉ : j ∈ {1, 2.5, 5}, e = 0..=max_exponent}`, ascending.
pub fn size_grid(max_exponent: u32) -> Vec<u64> {
    let mut grid: Vec<u64> = (0..=max_exponent as i32)
        .flat_map(|e| [1.0, 2.5, 5.0].map(|j| ceil(j * powi(10.0, e)) as u64))
        .collect();
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// The grid used for empirical flow-size laws.
pub fn default_size_grid() -> Vec<u64> {
    size_grid(5)
}

/// Nearest grid point; ties go to the smaller one. `grid` must be sorted.
pub fn round_to_grid(size: u64, grid: &[u64]) -> u64 {
    let i = grid.partition_point(|g| *g < size);
    match (i.checked_sub(1).map(|j| grid[j]), grid.get(i)) {
        (None, Some(hi)) => *hi,
        (Some(lo), None) => lo,
        (Some(lo), Some(hi)) => {
            if *hi == size || hi - size < size - lo {
                *hi
            } else {
                lo
            }
        }
        (None, None) => size,
    }
}

/// Flow-size law from observed sizes rounded onto `grid`.
pub fn empirical_flow_size_pmf(sizes: &[u64], grid: &[u64]) -> Result<FlowSizePmf> {
    if sizes.is_empty() {
        return Err(Error::domain("no flow sizes to build a law from"));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("the size grid must be non-empty and strictly increasing"));
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for s in sizes {
        *counts.entry(round_to_grid(*s, grid)).or_default() += 1;
    }
    let n = sizes.len() as f64;
    let (support, mass): (Vec<u64>, Vec<f64>) = counts.into_iter().map(|(s, c)| (s, c as f64 / n)).unzip();
    FlowSizePmf::from_masses(support, mass)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurvivalPoint {
    pub x: f64,
    pub s_empirical: f64,
    pub s_model: Option<f64>,
}

/// Fraction of `sorted` strictly above `x`.
pub fn empirical_survival(sorted: &[f64], x: f64) -> f64 {
    let above = sorted.len() - sorted.partition_point(|v| *v <= x);
    above as f64 / sorted.len() as f64
}

/// Empirical survival on `n_points` log-spaced abscissae spanning the data,
/// with an optional model curve alongside.
pub fn survival_curve(values: &[f64], n_points: usize, model: Option<&PacketModel>) -> Result<Vec<SurvivalPoint>> {
    if values.is_empty() {
        return Err(Error::domain("no values for a survival curve"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!("survival values must be positive, got {v}")));
    }
    if n_points == 0 {
        return Err(Error::config("at least one survival point is required"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let (lo, hi) = (ln(sorted[0]), ln(sorted[sorted.len() - 1]));
    let xs: Vec<f64> = if n_points == 1 || lo == hi {
        alloc::vec![sorted[sorted.len() - 1]]
    } else {
        (0..n_points).map(|i| exp(lo + (hi - lo) * i as f64 / (n_points - 1) as f64)).collect()
    };
    Ok(xs
        .into_iter()
        .map(|x| SurvivalPoint { x, s_empirical: empirical_survival(&sorted, x), s_model: model.map(|m| m.survival(x)) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values() {
        assert_eq!(
            default_size_grid(),
            [1, 3, 5, 10, 25, 50, 100, 250, 500, 1000, 2500, 5000, 10000, 25000, 50000, 100000, 250000, 500000]
        );
    }

    #[test]
    fn rounding_and_ties() {
        let g = default_size_grid();
        assert_eq!(round_to_grid(2, &g), 1);
        assert_eq!(round_to_grid(4, &g), 3);
        assert_eq!(round_to_grid(12, &g), 10);
        assert_eq!(round_to_grid(260, &g), 250);
        assert_eq!(round_to_grid(375, &g), 250);
        assert_eq!(round_to_grid(376, &g), 500);
        assert_eq!(round_to_grid(10_000_000, &g), 500_000);
        let pmf = empirical_flow_size_pmf(&[3, 12, 260], &g).unwrap();
        assert_eq!(pmf.support(), [3, 10, 250]);
        for m in pmf.masses() {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
        }
        let point = empirical_flow_size_pmf(&[25, 25], &g).unwrap();
        assert_eq!(point.support(), [25]);
        assert!(empirical_flow_size_pmf(&[], &g).is_err());
    }

    #[test]
    fn assembly_clamps_and_orders() {
        let recs = [("b", 1_000u64), ("a", 500), ("b", 1_000), ("a", 600), ("c", 2_000), ("b", 1_250)];
        let t = assemble_flows(recs, &IngestConfig::default()).unwrap();
        assert_eq!(t.flow_ids, ["a", "b"]);
        assert_eq!(t.trivial, 1);
        assert_eq!(t.clamped, 1);
        assert_eq!(t.all_sizes, [2, 3, 1]);
        assert_eq!(t.flows[0].gaps(), [1e-7]);
        assert_eq!(t.flows[1].gaps(), [1e-7, 2.5e-7]);
        assert_eq!(t.flows[1].lead(), 5e-7);
    }

    #[test]
    fn single_value_survival() {
        let c = survival_curve(&[2.0], 10, None).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].s_empirical, 0.0);
        assert_eq!(empirical_survival(&[2.0], 1.999), 1.0);
    }
}
