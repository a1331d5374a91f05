//! Flow-size distributions `p_M(m + 1)`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::math::{exp, floor, ln};
use crate::special::{compensated_sum, hurwitz_zeta};

/// Default retained mass for infinite-support laws.
pub const DEFAULT_TRUNCATION_MASS: f64 = 1.0 - 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum PmfKind {
    /// `p(s) ∝ s^{-shape}` on `min_size..=max_size`.
    Zeta { shape: f64 },
    /// `p ∝ rank^{-exponent}` over an explicit finite support.
    Zipf { exponent: f64 },
    Empirical,
}

/// A distribution over flow sizes (packet counts, `>= 1`).
///
/// Finite kinds keep an explicit table. The Zeta kind is evaluated
/// analytically and truncated at the smallest size that retains
/// `truncation_mass` of the (lower-truncated) law.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSizePmf {
    kind: PmfKind,
    support: Vec<u64>,
    mass: Vec<f64>,
    cdf: Vec<f64>,
    min_size: u64,
    max_size: u64,
    truncation_mass: f64,
    /// `ln` of the normaliser for the Zeta kind.
    ln_norm: f64,
}

impl FlowSizePmf {
    /// Zeta law on `1..` truncated at mass `1 - 1e-8`.
    pub fn zeta(shape: f64) -> Result<Self> {
        Self::zeta_truncated(shape, 1, DEFAULT_TRUNCATION_MASS)
    }

    /// Zeta law conditioned on `size >= min_size` and truncated above so
    /// that `truncation_mass` of that law is retained.
    pub fn zeta_truncated(shape: f64, min_size: u64, truncation_mass: f64) -> Result<Self> {
        if !(shape > 1.0) || !shape.is_finite() {
            return Err(Error::domain(format!("zeta shape must exceed 1, got {shape}")));
        }
        if min_size == 0 {
            return Err(Error::domain("flow sizes start at 1"));
        }
        if !(truncation_mass > 0.0 && truncation_mass <= 1.0) {
            return Err(Error::domain(format!("truncation mass must lie in (0, 1], got {truncation_mass}")));
        }
        let head = hurwitz_zeta(shape, min_size as f64);
        let tail_budget = (1.0 - truncation_mass) * head;
        // Smallest N with ζ(κ, N + 1) <= budget, by doubling then bisection.
        let max_size = if tail_budget <= 0.0 {
            u64::MAX / 4
        } else {
            let tail = |n: u64| hurwitz_zeta(shape, n as f64 + 1.0);
            let mut hi = min_size.max(1);
            while tail(hi) > tail_budget {
                if hi > (1u64 << 52) {
                    return Err(Error::domain("zeta truncation point exceeds 2^52; shape too close to 1"));
                }
                hi *= 2;
            }
            let mut lo = min_size.saturating_sub(1).max(hi / 2);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if tail(mid) > tail_budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi.max(min_size)
        };
        let retained = head - hurwitz_zeta(shape, max_size as f64 + 1.0);
        Ok(FlowSizePmf {
            kind: PmfKind::Zeta { shape },
            support: Vec::new(),
            mass: Vec::new(),
            cdf: Vec::new(),
            min_size,
            max_size,
            truncation_mass: retained / head,
            ln_norm: ln(retained),
        })
    }

    /// Masses proportional to `rank^{-exponent}` over `support` (ascending).
    pub fn zipf(support: Vec<u64>, exponent: f64) -> Result<Self> {
        if !exponent.is_finite() {
            return Err(Error::domain("zipf exponent must be finite"));
        }
        let weights: Vec<f64> = (1..=support.len()).map(|r| exp(-exponent * ln(r as f64))).collect();
        Self::table(PmfKind::Zipf { exponent }, support, weights)
    }

    /// An arbitrary finite law; masses are renormalised.
    pub fn from_masses(support: Vec<u64>, mass: Vec<f64>) -> Result<Self> {
        Self::table(PmfKind::Empirical, support, mass)
    }

    /// A point mass.
    pub fn point(size: u64) -> Result<Self> {
        Self::table(PmfKind::Empirical, alloc::vec![size], alloc::vec![1.0])
    }

    fn table(kind: PmfKind, support: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::domain("support and masses must be non-empty and of equal length"));
        }
        if support[0] == 0 {
            return Err(Error::domain("flow sizes start at 1"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("support must be strictly increasing"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::domain("masses must be positive and finite"));
        }
        let total = compensated_sum(&weights);
        let mass: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(mass.len());
        let mut acc = crate::special::CompensatedSum::default();
        for m in &mass {
            acc.add(*m);
            cdf.push(acc.total());
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;
        Ok(FlowSizePmf {
            kind,
            min_size: support[0],
            max_size: support[last],
            support,
            mass,
            cdf,
            truncation_mass: 1.0,
            ln_norm: 0.0,
        })
    }

    pub fn kind(&self) -> PmfKind {
        self.kind
    }

    /// Whether the law has an explicit finite table (as opposed to a
    /// truncated heavy tail).
    pub fn is_bounded(&self) -> bool {
        !matches!(self.kind, PmfKind::Zeta { .. })
    }

    pub fn min_size(&self) -> u64 {
        self.min_size
    }

    pub fn max_size(&self) -> u64 {
        self.max_size
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    /// Explicit support; empty for the Zeta kind.
    pub fn support(&self) -> &[u64] {
        &self.support
    }

    /// Explicit masses; empty for the Zeta kind.
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// `ln p(size)`, `-inf` outside the support.
    pub fn log_mass(&self, size: u64) -> f64 {
        match self.kind {
            PmfKind::Zeta { shape } => {
                if size < self.min_size || size > self.max_size {
                    f64::NEG_INFINITY
                } else {
                    -shape * ln(size as f64) - self.ln_norm
                }
            }
            _ => match self.support.binary_search(&size) {
                Ok(i) => ln(self.mass[i]),
                Err(_) => f64::NEG_INFINITY,
            },
        }
    }

    pub fn mass(&self, size: u64) -> f64 {
        exp(self.log_mass(size))
    }

    /// Mean of the (truncated) law.
    pub fn mean(&self) -> f64 {
        match self.kind {
            PmfKind::Zeta { shape } => {
                let t = shape - 1.0;
                let num = if t > 1.0 {
                    hurwitz_zeta(t, self.min_size as f64) - hurwitz_zeta(t, self.max_size as f64 + 1.0)
                } else {
                    power_sum(t, self.min_size, self.max_size)
                };
                num / exp(self.ln_norm)
            }
            _ => {
                let terms: Vec<f64> = self.support.iter().zip(&self.mass).map(|(s, m)| *s as f64 * m).collect();
                compensated_sum(&terms)
            }
        }
    }

    /// Mean of the untruncated law, when it exists.
    pub fn untruncated_mean(&self) -> Option<f64> {
        match self.kind {
            PmfKind::Zeta { shape } if shape > 2.0 => {
                let lo = self.min_size as f64;
                Some(hurwitz_zeta(shape - 1.0, lo) / hurwitz_zeta(shape, lo))
            }
            PmfKind::Zeta { .. } => None,
            _ => Some(self.mean()),
        }
    }

    /// `(size, ln p(size))` for sizes `>= from`, ascending.
    pub fn iter_from(&self, from: u64) -> impl Iterator<Item = (u64, f64)> + '_ {
        let (table, range) = match self.kind {
            PmfKind::Zeta { .. } => (None, from.max(self.min_size)..=self.max_size),
            _ => {
                let start = self.support.partition_point(|s| *s < from);
                (Some(start), 1..=0)
            }
        };
        let table_iter = table
            .into_iter()
            .flat_map(move |start| (start..self.support.len()).map(move |i| (self.support[i], ln(self.mass[i]))));
        let zeta_iter = range.map(move |s| (s, self.log_mass(s)));
        table_iter.chain(zeta_iter)
    }

    /// `P(size >= 2)`.
    pub fn prob_nontrivial(&self) -> f64 {
        1.0 - self.mass(1)
    }

    /// Draws one flow size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.kind {
            PmfKind::Zeta { shape } => {
                let law = rand_distr::Zeta::new(shape).expect("validated shape");
                loop {
                    let x: f64 = law.sample(rng);
                    if x >= self.min_size as f64 && x <= self.max_size as f64 {
                        return floor(x) as u64;
                    }
                }
            }
            _ => {
                let u: f64 = rng.random();
                let i = self.cdf.partition_point(|c| *c <= u).min(self.support.len() - 1);
                self.support[i]
            }
        }
    }
}

/// `Σ_{n=lo}^{hi} n^{-t}`: exact head, midpoint-integral tail (error far
/// below `1e-12` relative once the head covers the first ten thousand terms).
fn power_sum(t: f64, lo: u64, hi: u64) -> f64 {
    let head_end = hi.min(lo.saturating_add(10_000));
    let mut acc = crate::special::CompensatedSum::default();
    for n in lo..=head_end {
        acc.add(exp(-t * ln(n as f64)));
    }
    if head_end < hi {
        let a = head_end as f64 + 0.5;
        let b = hi as f64 + 0.5;
        let tail = if (t - 1.0).abs() < 1e-12 {
            ln(b / a)
        } else {
            (exp((1.0 - t) * ln(b)) - exp((1.0 - t) * ln(a))) / (1.0 - t)
        };
        acc.add(tail);
    }
    acc.total()
}

/// Serializable description of a flow-size law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum PmfSpec {
    Zeta {
        shape: f64,
        #[cfg_attr(feature = "serde", serde(default = "one"))]
        min_size: u64,
        #[cfg_attr(feature = "serde", serde(default = "default_truncation"))]
        truncation_mass: f64,
    },
    Zipf {
        support: Vec<u64>,
        exponent: f64,
    },
    Empirical {
        support: Vec<u64>,
        mass: Vec<f64>,
    },
    Point {
        size: u64,
    },
}

#[cfg(feature = "serde")]
fn one() -> u64 {
    1
}

#[cfg(feature = "serde")]
fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION_MASS
}

impl PmfSpec {
    pub fn build(&self) -> Result<FlowSizePmf> {
        match self {
            PmfSpec::Zeta { shape, min_size, truncation_mass } => {
                FlowSizePmf::zeta_truncated(*shape, *min_size, *truncation_mass)
            }
            PmfSpec::Zipf { support, exponent } => FlowSizePmf::zipf(support.clone(), *exponent),
            PmfSpec::Empirical { support, mass } => FlowSizePmf::from_masses(support.clone(), mass.clone()),
            PmfSpec::Point { size } => FlowSizePmf::point(*size),
        }
    }
}

impl From<&FlowSizePmf> for PmfSpec {
    fn from(p: &FlowSizePmf) -> Self {
        match p.kind {
            PmfKind::Zeta { shape } => PmfSpec::Zeta {
                shape,
                min_size: p.min_size,
                truncation_mass: 1.0 - (1.0 - p.truncation_mass).max(0.0),
            },
            PmfKind::Zipf { exponent } => PmfSpec::Zipf { support: p.support.clone(), exponent },
            PmfKind::Empirical => PmfSpec::Empirical { support: p.support.clone(), mass: p.mass.clone() },
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for FlowSizePmf {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        PmfSpec::from(self).serialize(s)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for FlowSizePmf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let spec = PmfSpec::deserialize(d)?;
        spec.build().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream_rng};
    use crate::special::zeta;

    #[test]
    fn zipf_example_two_masses() {
        let p = FlowSizePmf::zipf(alloc::vec![11, 101, 1001], 1.0).unwrap();
        assert!((p.mass(11) - 6.0 / 11.0).abs() < 1e-15);
        assert!((p.mass(101) - 3.0 / 11.0).abs() < 1e-15);
        assert!((p.mass(1001) - 2.0 / 11.0).abs() < 1e-15);
        assert!((compensated_sum(p.masses()) - 1.0).abs() < 1e-12);
        assert_eq!(p.log_mass(12), f64::NEG_INFINITY);
    }

    #[test]
    fn zeta_theoretical_mean_is_about_51() {
        let p = FlowSizePmf::zeta(2.012085).unwrap();
        let m = p.untruncated_mean().unwrap();
        assert!((m - 51.0).abs() < 0.5, "{m}");
        assert!((m - zeta(1.012085) / zeta(2.012085)).abs() < 1e-9);
        // truncation keeps at least 1 - 1e-8 of the mass
        assert!(p.truncation_mass() >= 1.0 - 1e-8 - 1e-15);
        assert!(p.max_size() > 1_000_000);
    }

    #[test]
    fn zeta_masses_normalised_on_prefix() {
        let p = FlowSizePmf::zeta_truncated(3.5, 1, 1.0 - 1e-12).unwrap();
        let total: f64 = p.iter_from(1).map(|(_, lm)| exp(lm)).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn zeta_lower_truncation() {
        let p = FlowSizePmf::zeta_truncated(2.012085, 3, DEFAULT_TRUNCATION_MASS).unwrap();
        assert_eq!(p.log_mass(2), f64::NEG_INFINITY);
        let mut rng = stream_rng(1, domain::FLOW, 0);
        assert!((0..1000).all(|_| p.sample(&mut rng) >= 3));
    }

    #[test]
    fn table_sampling_frequencies() {
        let p = FlowSizePmf::zipf(alloc::vec![11, 101, 1001], 1.0).unwrap();
        let mut rng = stream_rng(2, domain::FLOW, 0);
        let n = 200_000;
        let hits = (0..n).filter(|_| p.sample(&mut rng) == 11).count() as f64 / n as f64;
        let se = (6.0 / 11.0 * 5.0 / 11.0 / n as f64).sqrt();
        assert!((hits - 6.0 / 11.0).abs() < 4.0 * se);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(FlowSizePmf::from_masses(alloc::vec![3, 2], alloc::vec![0.5, 0.5]).is_err());
        assert!(FlowSizePmf::from_masses(alloc::vec![0], alloc::vec![1.0]).is_err());
        assert!(FlowSizePmf::from_masses(alloc::vec![1, 2], alloc::vec![1.0, 0.0]).is_err());
        assert!(FlowSizePmf::zeta(1.0).is_err());
    }
}
