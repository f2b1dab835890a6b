//! Persistence indicator: how long abuse stays listed, per provider.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::{borda_aggregate, ScoreMap};
use crate::error::{Error, Result, Stage};
use crate::ingest::{PdnsStore, RoutingTable};
use crate::mapping::{attribute_units, resolve_event_units, DropReason};
use crate::model::{AbuseEvent, AbuseUnit, Asn, ProviderUniverse, Timestamp, UnitKind, Window};
use crate::ranking::{rank_values, Ranking};
use crate::rate::Rate;
use crate::suffix::SuffixRuleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Mean,
    #[default]
    Median,
}

impl StatKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::Mean => "mean",
            StatKind::Median => "median",
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mean" => Ok(StatKind::Mean),
            "median" => Ok(StatKind::Median),
            other => Err(format!("unknown statistic {other:?}")),
        }
    }
}

/// Observation-span envelope of each unit in one feed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnitUptimes {
    pub uptimes: BTreeMap<AbuseUnit, u64>,
    /// Units none of whose events carry a removal time.
    pub no_last_seen: u64,
    /// Events that could not be turned into units.
    pub unresolved: BTreeMap<DropReason, u64>,
    /// Units still listed at the end of the window (uptime is a lower bound).
    pub censored: u64,
}

/// Uptime per unit: latest `last_seen` minus earliest `first_seen` over the unit's events
/// that overlap the window.
pub fn unit_uptimes(
    events: &[AbuseEvent],
    kind: UnitKind,
    rules: &SuffixRuleSet,
    pdns: &PdnsStore,
    window: Window,
) -> UnitUptimes {
    let mut out = UnitUptimes::default();
    let mut spans: BTreeMap<AbuseUnit, (Timestamp, Option<Timestamp>)> = BTreeMap::new();
    for e in events.iter().filter(|e| window.overlaps(e.first_seen, e.span_end())) {
        match resolve_event_units(e, kind, pdns, rules) {
            Ok(units) => {
                for u in units {
                    let entry = spans.entry(u).or_insert((e.first_seen, None));
                    entry.0 = entry.0.min(e.first_seen);
                    entry.1 = match (entry.1, e.last_seen) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        (a, b) => a.or(b),
                    };
                }
            }
            Err(reason) => *out.unresolved.entry(reason).or_default() += 1,
        }
    }
    for (unit, (first, last)) in spans {
        match last {
            Some(last) => {
                if last >= window.end {
                    out.censored += 1;
                }
                out.uptimes.insert(unit, (last - first) as u64);
            }
            None => out.no_last_seen += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UptimeMap {
    pub feed_id: String,
    pub stat_kind: StatKind,
    /// Sorted unit uptimes per provider.
    pub durations: BTreeMap<Asn, Vec<u64>>,
    /// Central uptime, present only for providers with at least `min_samples` units.
    pub central: BTreeMap<Asn, Rate>,
}

/// Mean, or lower-middle median, of a sorted non-empty slice.
pub fn central_value(sorted: &[u64], stat: StatKind) -> Rate {
    match stat {
        StatKind::Median => Rate::integer(sorted[(sorted.len() - 1) / 2] as u128),
        StatKind::Mean => {
            let sum: u128 = sorted.iter().map(|&d| d as u128).sum();
            Rate::new(sum, sorted.len() as u128).expect("non-empty")
        }
    }
}

pub fn provider_uptime(
    feed_id: &str,
    uptimes: &BTreeMap<AbuseUnit, u64>,
    routing: &RoutingTable,
    universe: &ProviderUniverse,
    stat_kind: StatKind,
    min_samples: usize,
) -> Result<UptimeMap> {
    if min_samples == 0 {
        return Err(Error::config(Stage::Uptime, "min_samples must be at least 1"));
    }
    let mut durations: BTreeMap<Asn, Vec<u64>> = BTreeMap::new();
    for (unit, &secs) in uptimes {
        if let Ok(pairs) = attribute_units(vec![unit.clone()], routing, universe) {
            for (asn, _) in pairs {
                durations.entry(asn).or_default().push(secs);
            }
        }
    }
    let mut central = BTreeMap::new();
    for (asn, d) in durations.iter_mut() {
        d.sort_unstable();
        if d.len() >= min_samples {
            central.insert(*asn, central_value(d, stat_kind));
        }
    }
    Ok(UptimeMap {
        feed_id: feed_id.to_string(),
        stat_kind,
        durations,
        central,
    })
}

/// Rank providers by central uptime (longest = worst = `R`) and aggregate with unit weights.
pub fn uptime_ranking_and_score(
    maps: &[UptimeMap],
    universe: &ProviderUniverse,
) -> Result<(Vec<Ranking>, ScoreMap)> {
    if maps.is_empty() {
        return Err(Error::data(Stage::Uptime, "no uptime maps"));
    }
    let rankings = maps
        .iter()
        .map(|m| {
            let (ranks, zero_rank) = rank_values(&m.central, &BTreeSet::new(), universe)?;
            Ok(Ranking {
                feed_id: m.feed_id.clone(),
                measure: format!("{}_uptime", m.stat_kind),
                ranks,
                r: universe.size(),
                zero_rank,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = borda_aggregate(&rankings, None, universe)?;
    Ok((rankings, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AbuseType, Observable};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn ev(ip: &str, first: i64, last: Option<i64>) -> AbuseEvent {
        AbuseEvent::new(
            "up",
            Observable::Ip(ip.parse().unwrap()),
            None,
            first,
            last,
            AbuseType::Phishing,
        )
        .unwrap()
    }

    fn uptimes(events: &[AbuseEvent]) -> UnitUptimes {
        unit_uptimes(
            events,
            UnitKind::IpOnly,
            &SuffixRuleSet::new(),
            &PdnsStore::default(),
            Window::new(-1_000_000, 1_000_000).unwrap(),
        )
    }

    #[test]
    fn single_event_span() {
        let u = uptimes(&[ev("1.1.1.1", 1000, Some(4600))]);
        assert_eq!(u.uptimes.values().copied().collect::<Vec<_>>(), vec![3600]);
    }

    #[test]
    fn envelope_over_events() {
        let u = uptimes(&[ev("1.1.1.1", 0, Some(100)), ev("1.1.1.1", 50, Some(400))]);
        assert_eq!(u.uptimes.values().copied().collect::<Vec<_>>(), vec![400]);
    }

    #[test]
    fn missing_last_seen_dropped() {
        let u = uptimes(&[ev("1.1.1.1", 0, None)]);
        assert!(u.uptimes.is_empty());
        assert_eq!(u.no_last_seen, 1);
    }

    #[test]
    fn window_filter_and_censoring() {
        let w = Window::new(0, 1000).unwrap();
        let u = unit_uptimes(
            &[ev("1.1.1.1", -500, Some(-10)), ev("2.2.2.2", 10, Some(1000))],
            UnitKind::IpOnly,
            &SuffixRuleSet::new(),
            &PdnsStore::default(),
            w,
        );
        assert_eq!(u.uptimes.len(), 1);
        assert_eq!(u.censored, 1);
    }

    #[test]
    fn central_statistics() {
        assert_eq!(central_value(&[3600, 7200, 36000], StatKind::Median), Rate::integer(7200));
        assert_eq!(central_value(&[100, 300], StatKind::Median), Rate::integer(100));
        assert_eq!(central_value(&[100, 300], StatKind::Mean), Rate::integer(200));
        assert_eq!(central_value(&[1, 2], StatKind::Mean), Rate::new(3, 2).unwrap());
    }

    fn setup() -> (RoutingTable, ProviderUniverse) {
        let r = RoutingTable::new([
            ("10.0.0.0/24".parse().unwrap(), Asn(1)),
            ("10.0.1.0/24".parse().unwrap(), Asn(2)),
            ("10.0.2.0/24".parse().unwrap(), Asn(3)),
        ]);
        (r, ProviderUniverse::new([Asn(1), Asn(2), Asn(3)]))
    }

    fn unit(ip: &str) -> AbuseUnit {
        AbuseUnit::ip_only(ip.parse().unwrap())
    }

    #[test]
    fn sample_threshold() {
        let (r, u) = setup();
        let m: BTreeMap<AbuseUnit, u64> = [(unit("10.0.0.1"), 100), (unit("10.0.0.2"), 200)].into();
        let up = provider_uptime("up", &m, &r, &u, StatKind::Median, 5).unwrap();
        assert_eq!(up.durations[&Asn(1)], vec![100, 200]);
        assert!(up.central.is_empty());
        assert!(provider_uptime("up", &m, &r, &u, StatKind::Median, 0).is_err());
    }

    #[test]
    fn ranking_and_scores() {
        let (_, u) = setup();
        let m = UptimeMap {
            feed_id: "up".into(),
            stat_kind: StatKind::Median,
            durations: BTreeMap::new(),
            central: [(Asn(1), Rate::integer(10_000)), (Asn(2), Rate::integer(500))].into(),
        };
        let (rk, s) = uptime_ranking_and_score(std::slice::from_ref(&m), &u).unwrap();
        assert_eq!(rk[0].ranks.values().copied().collect::<Vec<_>>(), vec![3, 2, 1]);
        let third = |n| BigRational::new(BigInt::from(n), BigInt::from(3));
        assert_eq!(s.score(Asn(1)), Some(&third(3)));
        assert_eq!(s.score(Asn(2)), Some(&third(2)));
        assert_eq!(s.score(Asn(3)), Some(&third(1)));

        let (_, s2) = uptime_ranking_and_score(&[m.clone(), m], &u).unwrap();
        assert_eq!(s2.score_f64(Asn(1)), Some(1.0));

        let empty = UptimeMap {
            feed_id: "up".into(),
            stat_kind: StatKind::Median,
            durations: BTreeMap::new(),
            central: BTreeMap::new(),
        };
        let (rk, s) = uptime_ranking_and_score(&[empty], &u).unwrap();
        assert!(rk[0].ranks.values().all(|&k| k == 3));
        assert!(s.scores.iter().all(|(_, v)| *v == third(3)));
    }
}
