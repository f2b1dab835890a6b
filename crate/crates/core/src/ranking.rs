//! Size normalization of abuse maps and conversion to integer rankings.
//!
//! Rank semantics: with `R` providers and `P` the providers with positive value, a
//! provider in `P` gets `R - |{q in P : value(q) > value(p)}|`; everybody else shares
//! `R - |P|`. The worst provider therefore holds rank `R` and ties share the highest
//! rank of their group.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result, Stage};
use crate::mapping::AbuseMap;
use crate::model::{Asn, ProviderUniverse};
use crate::rate::Rate;
use crate::size::{SizeEstimator, SizeMap};

/// Abuse units per size unit for every provider with a usable size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedMap {
    pub feed_id: String,
    pub estimator: SizeEstimator,
    pub values: BTreeMap<Asn, Rate>,
    /// Providers with abuse but size 0; they get no rank in this map.
    pub excluded: BTreeSet<Asn>,
}

pub fn normalize(abuse: &AbuseMap, sizes: &SizeMap) -> NormalizedMap {
    let mut values = BTreeMap::new();
    let mut excluded = BTreeSet::new();
    for (&asn, &size) in &sizes.sizes {
        let units = abuse.unit_count(asn) as u128;
        match Rate::new(units, size) {
            Some(v) => {
                values.insert(asn, v);
            }
            None if units == 0 => {
                values.insert(asn, Rate::ZERO);
            }
            None => {
                warn!(
                    feed = %abuse.feed_id,
                    estimator = %sizes.estimator,
                    asn = %asn,
                    units,
                    "provider has abuse but zero size; excluded from ranking"
                );
                excluded.insert(asn);
            }
        }
    }
    NormalizedMap {
        feed_id: abuse.feed_id.clone(),
        estimator: sizes.estimator,
        values,
        excluded,
    }
}

/// Integer ranks for one (feed, measure) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub feed_id: String,
    /// Size estimator name for occurrence rankings, statistic name for uptime rankings.
    pub measure: String,
    pub ranks: BTreeMap<Asn, u32>,
    /// Universe size.
    pub r: u32,
    /// Rank shared by every provider without positive value.
    pub zero_rank: u32,
}

impl Ranking {
    /// Rank used in aggregation: the stored rank, or the zero rank when the provider was excluded.
    pub fn effective_rank(&self, asn: Asn) -> u32 {
        self.ranks.get(&asn).copied().unwrap_or(self.zero_rank)
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.feed_id, self.measure)
    }
}

/// Apply the rank rule to arbitrary ordered values. Universe members missing from
/// `values` and not in `excluded` are treated as zero.
pub fn rank_values(
    values: &BTreeMap<Asn, Rate>,
    excluded: &BTreeSet<Asn>,
    universe: &ProviderUniverse,
) -> Result<(BTreeMap<Asn, u32>, u32)> {
    if universe.is_empty() {
        return Err(Error::data(Stage::Ranking, "empty provider universe"));
    }
    if let Some(a) = values.keys().chain(excluded).find(|a| !universe.contains(**a)) {
        return Err(Error::data(
            Stage::Ranking,
            format!("AS{a} is not in the provider universe"),
        ));
    }
    let r = universe.size();
    let mut positive: Vec<Rate> = values
        .iter()
        .filter(|(a, v)| !v.is_zero() && !excluded.contains(a))
        .map(|(_, v)| *v)
        .collect();
    positive.sort_unstable_by(|a, b| b.cmp(a));
    let zero_rank = r - positive.len() as u32;

    let mut ranks = BTreeMap::new();
    for asn in universe.iter().filter(|a| !excluded.contains(a)) {
        let rank = match values.get(&asn) {
            Some(v) if !v.is_zero() => {
                let worse = positive.partition_point(|q| q > v) as u32;
                r - worse
            }
            _ => zero_rank,
        };
        ranks.insert(asn, rank);
    }
    Ok((ranks, zero_rank))
}

/// Rank given to a provider with abuse but size 0 when rankings are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcludedRank {
    /// The ranking's zero-abuse rank.
    #[default]
    Zero,
    /// Rank `R`, as if the provider were the worst.
    Worst,
}

/// Give excluded providers rank `R` under [`ExcludedRank::Worst`]; no-op otherwise.
pub fn apply_excluded_rank(ranking: &mut Ranking, norm: &NormalizedMap, policy: ExcludedRank) {
    if policy == ExcludedRank::Worst {
        for &asn in &norm.excluded {
            ranking.ranks.insert(asn, ranking.r);
        }
    }
}

pub fn rank(norm: &NormalizedMap, universe: &ProviderUniverse) -> Result<Ranking> {
    let (ranks, zero_rank) = rank_values(&norm.values, &norm.excluded, universe)?;
    Ok(Ranking {
        feed_id: norm.feed_id.clone(),
        measure: norm.estimator.to_string(),
        ranks,
        r: universe.size(),
        zero_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AbuseUnit, UnitKind};
    use proptest::prelude::*;

    #[test]
    fn excluded_rank_policy() {
        let u = ProviderUniverse::new([Asn(1), Asn(2), Asn(3)]);
        let norm = NormalizedMap {
            feed_id: "f".into(),
            estimator: SizeEstimator::HostingIps,
            values: [(Asn(1), Rate::integer(2)), (Asn(2), Rate::ZERO)].into_iter().collect(),
            excluded: [Asn(3)].into_iter().collect(),
        };
        let mut rk = rank(&norm, &u).unwrap();
        assert_eq!(rk.effective_rank(Asn(3)), 2);
        apply_excluded_rank(&mut rk, &norm, ExcludedRank::Zero);
        assert!(!rk.ranks.contains_key(&Asn(3)));
        apply_excluded_rank(&mut rk, &norm, ExcludedRank::Worst);
        assert_eq!(rk.ranks[&Asn(3)], 3);
        assert_eq!(rk.ranks[&Asn(1)], 3);
    }

    fn abuse(counts: &[(u32, u32)]) -> AbuseMap {
        let mut by = BTreeMap::new();
        for &(asn, n) in counts {
            let set: BTreeSet<AbuseUnit> = (0..n)
                .map(|i| AbuseUnit::ip_only(std::net::IpAddr::V4((asn * 1000 + i).into())))
                .collect();
            by.insert(Asn(asn), set);
        }
        AbuseMap {
            feed_id: "f".into(),
            unit_kind: UnitKind::IpOnly,
            units_by_provider: by,
            dropped: BTreeMap::new(),
            attributed_events: 0,
        }
    }

    fn sizes(s: &[(u32, u128)]) -> SizeMap {
        SizeMap {
            estimator: SizeEstimator::AdvertisedIps,
            sizes: s.iter().map(|&(a, n)| (Asn(a), n)).collect(),
        }
    }

    #[test]
    fn normalization_cases() {
        let n = normalize(&abuse(&[(1, 10), (3, 3)]), &sizes(&[(1, 1000), (2, 50), (3, 0), (4, 0)]));
        assert_eq!(n.values[&Asn(1)].to_f64(), 0.01);
        assert!(n.values[&Asn(2)].is_zero());
        assert!(n.excluded.contains(&Asn(3)));
        assert!(!n.values.contains_key(&Asn(3)));
        assert!(n.values[&Asn(4)].is_zero());
    }

    fn uni(n: u32) -> ProviderUniverse {
        ProviderUniverse::new((1..=n).map(Asn))
    }

    fn vals(v: &[(u32, u128, u128)]) -> BTreeMap<Asn, Rate> {
        v.iter().map(|&(a, n, d)| (Asn(a), Rate::new(n, d).unwrap())).collect()
    }

    #[test]
    fn worked_example_with_ties_and_zeros() {
        let (ranks, zero) = rank_values(
            &vals(&[(1, 3, 10), (2, 1, 10), (3, 1, 10), (4, 0, 1)]),
            &BTreeSet::new(),
            &uni(5),
        )
        .unwrap();
        let got: Vec<u32> = ranks.values().copied().collect();
        assert_eq!(got, vec![5, 4, 4, 2, 2]);
        assert_eq!(zero, 2);
    }

    #[test]
    fn twenty_abusers_span_r_minus_20_to_r() {
        let r = 120;
        let v: Vec<(u32, u128, u128)> = (1..=20).map(|a| (a, a as u128, 7)).collect();
        let (ranks, zero) = rank_values(&vals(&v), &BTreeSet::new(), &uni(r)).unwrap();
        assert_eq!(zero, r - 20);
        assert_eq!(*ranks.values().max().unwrap(), r);
        assert_eq!(*ranks.values().min().unwrap(), r - 20);
        assert_eq!(ranks[&Asn(20)], r);
        assert_eq!(ranks[&Asn(1)], r - 19);
        assert!(ranks.iter().filter(|(a, _)| a.0 > 20).all(|(_, &k)| k == r - 20));
    }

    #[test]
    fn all_zero_map_is_degenerate() {
        let (ranks, zero) = rank_values(&BTreeMap::new(), &BTreeSet::new(), &uni(4)).unwrap();
        assert_eq!(zero, 4);
        assert!(ranks.values().all(|&k| k == 4));
    }

    #[test]
    fn excluded_get_no_rank_and_errors() {
        let excluded: BTreeSet<Asn> = [Asn(2)].into();
        let (ranks, _) = rank_values(&vals(&[(1, 1, 2)]), &excluded, &uni(3)).unwrap();
        assert!(!ranks.contains_key(&Asn(2)));
        assert_eq!(ranks.len(), 2);
        assert!(rank_values(&BTreeMap::new(), &BTreeSet::new(), &ProviderUniverse::default()).is_err());
        assert!(rank_values(&vals(&[(9, 1, 1)]), &BTreeSet::new(), &uni(3)).is_err());
    }

    proptest! {
        #[test]
        fn scaling_and_monotonicity(raw in proptest::collection::vec(0u128..6, 1..30), scale in 1u128..1000) {
            let u = uni(raw.len() as u32);
            let v: BTreeMap<Asn, Rate> = raw.iter().enumerate().map(|(i, &n)| (Asn(i as u32 + 1), Rate::new(n, 3).unwrap())).collect();
            let scaled: BTreeMap<Asn, Rate> = raw.iter().enumerate().map(|(i, &n)| (Asn(i as u32 + 1), Rate::new(n * scale, 3 * scale + 1).unwrap())).collect();
            let (a, _) = rank_values(&v, &BTreeSet::new(), &u).unwrap();
            let (b, _) = rank_values(&scaled, &BTreeSet::new(), &u).unwrap();
            // n*s/(3s+1) preserves the order of n/3 for n in 0..6
            prop_assert_eq!(&a, &b);
            for (x, vx) in &v {
                for (y, vy) in &v {
                    if vx > vy { prop_assert!(a[x] > a[y]); }
                    if vx == vy { prop_assert_eq!(a[x], a[y]); }
                }
            }
            if raw.iter().any(|&n| n > 0) {
                prop_assert_eq!(*a.values().max().unwrap(), u.size());
            }
        }
    }
}
