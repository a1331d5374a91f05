//! Bartlett–Lewis session generation and Bernoulli packet thinning.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::model::PacketModel;
use crate::pmf::FlowSizePmf;
use crate::rng::{domain, stream_rng};
use crate::special::CompensatedSum;

/// One flow: a leading gap measured from the previous flow's start, then
/// the subsidiary inter-renewals between its packets.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    lead: f64,
    gaps: Vec<f64>,
}

impl Flow {
    pub fn new(lead: f64, gaps: Vec<f64>) -> Result<Self> {
        if !(lead >= 0.0) || !lead.is_finite() {
            return Err(Error::domain(format!("leading gap must be non-negative, got {lead}")));
        }
        if let Some((i, g)) = gaps.iter().enumerate().find(|(_, g)| !(**g > 0.0) || !g.is_finite()) {
            return Err(Error::domain(format!("inter-renewal {i} must be positive, got {g}")));
        }
        Ok(Flow { lead, gaps })
    }

    /// From the full inter-renewal vector `x₁, …, x_{M+1}`.
    pub fn from_inter_renewals(x: &[f64]) -> Result<Self> {
        match x.split_first() {
            None => Err(Error::domain("a flow needs at least one packet")),
            Some((lead, rest)) => Flow::new(*lead, rest.to_vec()),
        }
    }

    /// Packet count `M + 1`.
    pub fn size(&self) -> usize {
        self.gaps.len() + 1
    }

    pub fn lead(&self) -> f64 {
        self.lead
    }

    /// Subsidiary inter-renewals `x₂, …, x_{M+1}`.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn inter_renewals(&self) -> impl Iterator<Item = f64> + '_ {
        core::iter::once(self.lead).chain(self.gaps.iter().copied())
    }

    /// Arrival times relative to the previous flow's start.
    pub fn arrivals(&self) -> Vec<f64> {
        let mut acc = CompensatedSum::default();
        self.inter_renewals()
            .map(|x| {
                acc.add(x);
                acc.total()
            })
            .collect()
    }

    /// Time from first to last packet.
    pub fn duration(&self) -> f64 {
        self.gaps.iter().copied().collect::<CompensatedSum>().total()
    }

    /// The sub-flow made of the packets at `indices` (ascending, in range).
    fn subsequence(&self, indices: &[usize]) -> Option<Flow> {
        let (&first, rest) = indices.split_first()?;
        let lead = core::iter::once(self.lead).chain(self.gaps[..first].iter().copied()).collect::<CompensatedSum>().total();
        let mut prev = first;
        let gaps = rest
            .iter()
            .map(|&i| {
                let g = self.gaps[prev..i].iter().copied().collect::<CompensatedSum>().total();
                prev = i;
                g
            })
            .collect();
        Some(Flow { lead, gaps })
    }
}

/// The outcome of thinning a flow: which packets survived, and the
/// surviving flow when at least one did.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinnedFlow {
    parent_size: usize,
    retained: Vec<usize>,
    flow: Option<Flow>,
}

impl ThinnedFlow {
    fn from_indices(parent: &Flow, retained: Vec<usize>) -> Self {
        let flow = parent.subsequence(&retained);
        ThinnedFlow { parent_size: parent.size(), retained, flow }
    }

    pub fn parent_size(&self) -> usize {
        self.parent_size
    }

    /// Zero-based positions of the retained packets in the parent.
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    /// Number of retained packets `m̃`.
    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn flow(&self) -> Option<&Flow> {
        self.flow.as_ref()
    }
}

/// Draws a flow of `size` packets. The leading gap comes from an
/// Exponential(`flow_rate`) when given, and is zero otherwise (duration-only studies).
pub fn generate_flow<R: Rng + ?Sized>(model: &PacketModel, size: u64, flow_rate: Option<f64>, rng: &mut R) -> Result<Flow> {
    if size == 0 {
        return Err(Error::domain("flow size must be at least 1"));
    }
    let lead = match flow_rate {
        Some(rate) => rand_distr::Exp::new(rate)
            .map_err(|_| Error::domain(format!("invalid flow rate {rate}")))?
            .sample(rng),
        None => 0.0,
    };
    let gaps = (1..size).map(|_| model.sample(rng)).collect();
    Ok(Flow { lead, gaps })
}

/// Everything needed to simulate one session.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionConfig {
    /// Flow arrival rate λ (flows per second).
    #[cfg_attr(feature = "serde", serde(default = "default_flow_rate"))]
    pub flow_rate: f64,
    pub packet_model: PacketModel,
    pub flow_size_pmf: FlowSizePmf,
    pub n_flows: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_q"))]
    pub thinning_q: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

#[cfg(feature = "serde")]
fn default_flow_rate() -> f64 {
    1.0
}

#[cfg(feature = "serde")]
fn default_q() -> f64 {
    1.0
}

impl SessionConfig {
    pub fn new(packet_model: PacketModel, flow_size_pmf: FlowSizePmf, n_flows: usize, seed: u64) -> Self {
        SessionConfig { flow_rate: 1.0, packet_model, flow_size_pmf, n_flows, thinning_q: 1.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_flows == 0 {
            return Err(Error::config("n_flows must be at least 1"));
        }
        if !(self.flow_rate > 0.0) || !self.flow_rate.is_finite() {
            return Err(Error::config(format!("flow rate must be positive, got {}", self.flow_rate)));
        }
        check_q(self.thinning_q)
    }

    /// The `index`-th flow of the session, from its own derived stream.
    pub fn flow_at(&self, index: usize) -> Flow {
        let mut rng = stream_rng(self.seed, domain::FLOW, index as u64);
        let size = self.flow_size_pmf.sample(&mut rng);
        generate_flow(&self.packet_model, size, Some(self.flow_rate), &mut rng).expect("validated configuration")
    }

    /// Thins the `index`-th flow with the fast procedure on its own stream.
    pub fn thin_at(&self, index: usize, flow: &Flow) -> ThinnedFlow {
        let mut rng = stream_rng(self.seed, domain::THINNING, index as u64);
        thin_flow_fast(flow, self.thinning_q, &mut rng).expect("validated configuration")
    }
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("thinning probability must lie in (0, 1], got {q}")))
    }
}

/// All flows of a session. Flow `i` depends only on `(seed, i)`.
pub fn generate_session(cfg: &SessionConfig) -> Result<Vec<Flow>> {
    cfg.validate()?;
    Ok((0..cfg.n_flows).map(|i| cfg.flow_at(i)).collect())
}

/// Keeps each packet independently with probability `q`.
pub fn thin_flow<R: Rng + ?Sized>(flow: &Flow, q: f64, rng: &mut R) -> Result<ThinnedFlow> {
    check_q(q)?;
    if q == 1.0 {
        return Ok(ThinnedFlow::from_indices(flow, (0..flow.size()).collect()));
    }
    let retained = (0..flow.size()).filter(|_| rng.random::<f64>() < q).collect();
    Ok(ThinnedFlow::from_indices(flow, retained))
}

/// Same law as [`thin_flow`]: draw the retained count from a Binomial, then
/// choose that many positions uniformly without replacement.
pub fn thin_flow_fast<R: Rng + ?Sized>(flow: &Flow, q: f64, rng: &mut R) -> Result<ThinnedFlow> {
    let retained = thin_indices(flow.size(), q, rng)?;
    Ok(ThinnedFlow::from_indices(flow, retained))
}

/// Ascending positions kept when `n` packets are thinned with probability `q`.
pub fn thin_indices<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_q(q)?;
    if q == 1.0 {
        return Ok((0..n).collect());
    }
    let kept = rand_distr::Binomial::new(n as u64, q)
        .map_err(|e| Error::domain(format!("binomial({n}, {q}): {e}")))?
        .sample(rng) as usize;
    let mut retained = rand::seq::index::sample(rng, n, kept).into_vec();
    retained.sort_unstable();
    Ok(retained)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn flow(x: &[f64]) -> Flow {
        Flow::from_inter_renewals(x).unwrap()
    }

    #[test]
    fn single_packet_flow() {
        let m = PacketModel::gamma(0.6, 526.32).unwrap();
        let mut rng = stream_rng(1, domain::FLOW, 0);
        let f = generate_flow(&m, 1, Some(1.0), &mut rng).unwrap();
        assert_eq!(f.size(), 1);
        assert!(f.gaps().is_empty());
        assert!(generate_flow(&m, 0, None, &mut rng).is_err());
    }

    #[test]
    fn identity_thinning() {
        let f = flow(&[0.5, 0.1, 0.2, 0.3]);
        let mut rng = stream_rng(1, domain::THINNING, 0);
        for t in [thin_flow(&f, 1.0, &mut rng).unwrap(), thin_flow_fast(&f, 1.0, &mut rng).unwrap()] {
            assert_eq!(t.flow().unwrap(), &f);
        }
    }

    #[test]
    fn subsequence_gaps() {
        let f = flow(&[0.5, 0.1, 0.2, 0.3]);
        let t = ThinnedFlow::from_indices(&f, alloc::vec![1, 3]);
        let g = t.flow().unwrap();
        assert!((g.lead() - 0.6).abs() < 1e-15);
        assert_eq!(g.gaps().len(), 1);
        assert!((g.gaps()[0] - 0.5).abs() < 1e-15);
        assert!(ThinnedFlow::from_indices(&f, Vec::new()).flow().is_none());
    }

    #[test]
    fn invalid_flows_rejected() {
        assert!(Flow::from_inter_renewals(&[]).is_err());
        assert!(Flow::new(0.1, alloc::vec![0.0]).is_err());
        assert!(Flow::new(-0.1, alloc::vec![]).is_err());
        let mut rng = stream_rng(0, 0, 0);
        assert!(thin_flow(&flow(&[1.0]), 0.0, &mut rng).is_err());
        assert!(thin_flow_fast(&flow(&[1.0]), 1.5, &mut rng).is_err());
    }

    #[test]
    fn sessions_are_reproducible() {
        let cfg = SessionConfig::new(
            PacketModel::gamma(0.6, 526.32).unwrap(),
            FlowSizePmf::zipf(alloc::vec![11, 101, 1001], 1.0).unwrap(),
            20,
            42,
        );
        assert_eq!(generate_session(&cfg).unwrap(), generate_session(&cfg).unwrap());
        let mut other = cfg.clone();
        other.n_flows = 0;
        assert!(generate_session(&other).is_err());
    }
}
