//! The NetFlow aggregation map and its thinned and sessional variants.

use alloc::format;

use crate::error::{Error, Result};
use crate::simulate::{Flow, ThinnedFlow};
use crate::special::CompensatedSum;

/// `(S_f, S_d, M + 1)`: leading gap, duration, packet count.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetFlow {
    pub s_f: f64,
    pub s_d: f64,
    pub size: u64,
}

impl NetFlow {
    pub fn new(s_f: f64, s_d: f64, size: u64) -> Result<Self> {
        let ok = size >= 1
            && s_f >= 0.0
            && s_f.is_finite()
            && s_d.is_finite()
            && if size == 1 { s_d == 0.0 } else { s_d > 0.0 };
        if ok {
            Ok(NetFlow { s_f, s_d, size })
        } else {
            Err(Error::domain(format!("invalid NetFlow ({s_f}, {s_d}, {size})")))
        }
    }

    /// Number of subsidiary inter-renewals `m`.
    pub fn m(&self) -> u64 {
        self.size - 1
    }
}

/// `(S̃_f, S̃_d, M̃)` computed from the retained packets of a flow.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampledNetFlow {
    pub s_f: f64,
    pub s_d: f64,
    pub size: u64,
}

impl SampledNetFlow {
    pub fn new(s_f: f64, s_d: f64, size: u64) -> Result<Self> {
        if size >= 2 && s_d > 0.0 && s_d.is_finite() && s_f >= 0.0 && s_f.is_finite() {
            Ok(SampledNetFlow { s_f, s_d, size })
        } else {
            Err(Error::domain(format!("invalid sampled NetFlow ({s_f}, {s_d}, {size})")))
        }
    }
}

impl From<NetFlow> for SampledNetFlow {
    fn from(n: NetFlow) -> Self {
        SampledNetFlow { s_f: n.s_f, s_d: n.s_d, size: n.size }
    }
}

/// Result of aggregating a thinned flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampledOutcome {
    /// At most one packet survived; the record carries no duration.
    Trivial { retained: u64 },
    Observed(SampledNetFlow),
}

impl SampledOutcome {
    pub fn observed(self) -> Option<SampledNetFlow> {
        match self {
            SampledOutcome::Observed(s) => Some(s),
            SampledOutcome::Trivial { .. } => None,
        }
    }
}

/// Element-wise sum of a collection of NetFlows.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionNetFlow {
    pub total_duration: f64,
    pub total_packets: u64,
    pub n_flows: u64,
}

impl SessionNetFlow {
    /// Total subsidiary inter-renewal count `Σ mᵢ`.
    pub fn total_inter_renewals(&self) -> u64 {
        self.total_packets - self.n_flows
    }

    pub fn merge(&self, other: &SessionNetFlow) -> SessionNetFlow {
        SessionNetFlow {
            total_duration: self.total_duration + other.total_duration,
            total_packets: self.total_packets + other.total_packets,
            n_flows: self.n_flows + other.n_flows,
        }
    }
}

/// `φ(X) = (x₁, Σ_{k≥2} x_k, M + 1)`.
pub fn aggregate(flow: &Flow) -> NetFlow {
    NetFlow { s_f: flow.lead(), s_d: flow.duration(), size: flow.size() as u64 }
}

/// `φ` applied to a raw inter-renewal vector.
pub fn aggregate_inter_renewals(x: &[f64]) -> Result<NetFlow> {
    Flow::from_inter_renewals(x).map(|f| aggregate(&f))
}

/// `φ` applied to the retained packets. The leading gap is measured from
/// the same anchor as the parent flow's.
pub fn aggregate_sampled(thinned: &ThinnedFlow) -> SampledOutcome {
    match thinned.flow() {
        Some(f) if f.size() >= 2 => {
            let n = aggregate(f);
            SampledOutcome::Observed(SampledNetFlow { s_f: n.s_f, s_d: n.s_d, size: n.size })
        }
        _ => SampledOutcome::Trivial { retained: thinned.len() as u64 },
    }
}

pub fn session_netflow(netflows: &[NetFlow]) -> Result<SessionNetFlow> {
    if netflows.is_empty() {
        return Err(Error::domain("a session needs at least one NetFlow"));
    }
    let total_duration = netflows.iter().map(|n| n.s_d).collect::<CompensatedSum>().total();
    let total_packets = netflows.iter().map(|n| n.size).sum();
    Ok(SessionNetFlow { total_duration, total_packets, n_flows: netflows.len() as u64 })
}
