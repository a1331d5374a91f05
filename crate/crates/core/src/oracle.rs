//! Pattern-enumeration reference for the sampled likelihoods.
//!
//! Every Bernoulli retention pattern of every latent flow size is visited
//! explicitly, so the combinatorial bookkeeping of [`crate::likelihood`] can
//! be checked against first principles. Leading-gap convolutions are done by
//! quadrature rather than in closed form.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodConfig;
use crate::math::{ln, ln1p};
use crate::model::{kfold_log_density, quadrature_flow_gap_ln, ConvolutionMode, ConvolutionPolicy, PacketModel};
use crate::netflow::SampledNetFlow;
use crate::special::log_sum_exp;

/// Largest latent flow size the enumeration accepts.
pub const MAX_ENUMERATED_SIZE: u64 = 12;

/// `ln` of the exact sampled likelihood by enumeration of all `2^{m+1}`
/// patterns of every latent size. With `restricted` the leading-gap factor is
/// dropped.
pub fn brute_force_sampled_loglik(
    s: &SampledNetFlow,
    flow_rate: f64,
    packet_model: &PacketModel,
    cfg: &LikelihoodConfig,
    restricted: bool,
) -> Result<f64> {
    cfg.validate()?;
    if cfg.pmf.max_size() > MAX_ENUMERATED_SIZE || !cfg.pmf.is_bounded() {
        return Err(Error::domain(format!(
            "enumeration is limited to flow sizes <= {MAX_ENUMERATED_SIZE}, law reaches {}",
            cfg.pmf.max_size()
        )));
    }
    if s.size < 2 {
        return Err(Error::domain("enumeration needs at least two retained packets"));
    }
    let closed = ConvolutionPolicy { mode: ConvolutionMode::FentonWilkinson, ..cfg.policy };
    let q = cfg.q;
    let mut terms = Vec::new();
    for (n, lp) in cfg.pmf.iter_from(s.size) {
        for pattern in 0u32..(1u32 << n) {
            if u64::from(pattern.count_ones()) != s.size {
                continue;
            }
            let first = pattern.trailing_zeros() as u64;
            let last = 31 - pattern.leading_zeros() as u64;
            let span = last - first;
            let kept = s.size as f64;
            let dropped = (n - s.size) as f64;
            let lq = kept * ln(q) + if dropped > 0.0 { dropped * ln1p(-q) } else { 0.0 };
            if !lq.is_finite() {
                continue;
            }
            let ld = kfold_log_density(packet_model, span, s.s_d, &closed)?;
            let lf = if restricted { 0.0 } else { lead_gap_ln(flow_rate, packet_model, first, s.s_f, &closed)? };
            terms.push(lp + lq + lf + ld);
        }
    }
    Ok(log_sum_exp(&terms))
}

/// `(f * g^{*n})(s)` by quadrature against the closed-form `g^{*n}`.
fn lead_gap_ln(flow_rate: f64, model: &PacketModel, n: u64, s: f64, policy: &ConvolutionPolicy) -> Result<f64> {
    if n == 0 {
        return Ok(ln(flow_rate) - flow_rate * s);
    }
    if s <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    quadrature_flow_gap_ln(flow_rate, s, 512, |y| kfold_log_density(model, n, y, policy).unwrap_or(f64::NEG_INFINITY))
}

/// Probability that a flow of `n` packets keeps at least two, summed over
/// explicit patterns.
pub fn enumerated_nontrivial_mass(n: u64, q: f64) -> Result<f64> {
    if n > MAX_ENUMERATED_SIZE {
        return Err(Error::domain(format!("enumeration is limited to flow sizes <= {MAX_ENUMERATED_SIZE}")));
    }
    let mut total = 0.0;
    for pattern in 0u32..(1u32 << n) {
        let k = pattern.count_ones();
        if k >= 2 {
            total += crate::math::powi(q, k as i32) * crate::math::powi(1.0 - q, (n as u32 - k) as i32);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{netflow_loglik, restricted_sampled_loglik, sampled_netflow_loglik};
    use crate::netflow::NetFlow;
    use crate::pmf::FlowSizePmf;

    #[test]
    fn binomial_tail_identity() {
        for n in [2u64, 5, 9] {
            for q in [0.1, 0.5, 0.9] {
                let e = enumerated_nontrivial_mass(n, q).unwrap();
                let nf = n as f64;
                let direct = 1.0 - (1.0 - q).powf(nf) - nf * q * (1.0 - q).powf(nf - 1.0);
                assert!((e - direct).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn q_one_matches_complete_data() {
        let model = PacketModel::gamma(1.7, 3.0).unwrap();
        let pmf = FlowSizePmf::point(5).unwrap();
        let cfg = LikelihoodConfig::new(pmf.clone(), 1.0);
        let s = NetFlow::new(0.4, 1.1, 5).unwrap();
        let a = brute_force_sampled_loglik(&s.into(), 2.0, &model, &cfg, false).unwrap();
        let b = netflow_loglik(&s, 2.0, &model, &pmf, &ConvolutionPolicy::default()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn matches_mixture_on_small_support() {
        let model = PacketModel::exponential(2.0).unwrap();
        let mut cfg = LikelihoodConfig::new(FlowSizePmf::zipf(alloc::vec![3, 4, 6], 1.0).unwrap(), 0.5);
        cfg.truncation = 0.0;
        let s = SampledNetFlow::new(0.9, 1.4, 3).unwrap();
        let e = brute_force_sampled_loglik(&s, 1.5, &model, &cfg, false).unwrap();
        let m = sampled_netflow_loglik(&s, 1.5, &model, &cfg).unwrap();
        assert!(((e - m) / m).abs() < 1e-10, "{e} vs {m}");
        let er = brute_force_sampled_loglik(&s, 1.5, &model, &cfg, true).unwrap();
        let mr = restricted_sampled_loglik(1.4, 3, &model, &cfg).unwrap();
        assert!(((er - mr) / mr).abs() < 1e-10, "{er} vs {mr}");
    }

    #[test]
    fn size_cap_enforced() {
        let cfg = LikelihoodConfig::new(FlowSizePmf::point(13).unwrap(), 0.5);
        let s = SampledNetFlow::new(0.1, 0.1, 2).unwrap();
        assert!(brute_force_sampled_loglik(&s, 1.0, &PacketModel::exponential(1.0).unwrap(), &cfg, true).is_err());
    }
}
