//! Attribution of abuse units to providers, purity filtering and feed overlap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;

use crate::error::{Error, Result, Stage};
use crate::ingest::{Allowlist, GeoTable, PdnsStore, RoutingTable};
use crate::model::{derive_abuse_unit_with_ip, AbuseEvent, AbuseUnit, Asn, ProviderUniverse, UnitKind};
use crate::suffix::SuffixRuleSet;

/// Origin AS of the most specific routed prefix covering `ip`.
pub fn ip_to_asn(ip: IpAddr, routing: &RoutingTable) -> Option<Asn> {
    routing.longest_match(ip)
}

/// Every AS with at least `min_ips` of its longest-match address space inside `country`.
pub fn jurisdiction_universe(
    routing: &RoutingTable,
    geo: &GeoTable,
    country: &str,
    min_ips: u128,
) -> Result<ProviderUniverse> {
    if min_ips == 0 {
        return Err(Error::config(Stage::AbuseMapping, "min_ips must be at least 1"));
    }
    let mut counts: BTreeMap<Asn, u128> = BTreeMap::new();
    for iv in routing.partition() {
        let n = geo.count_in(iv.v6, iv.start, iv.end, country);
        if n > 0 {
            let c = counts.entry(iv.asn).or_default();
            *c = c.saturating_add(n);
        }
    }
    let universe = ProviderUniverse::new(
        counts
            .into_iter()
            .filter(|&(_, n)| n >= min_ips)
            .map(|(a, _)| a),
    );
    if universe.is_empty() {
        return Err(Error::data(
            Stage::AbuseMapping,
            format!("no providers in jurisdiction {country}"),
        ));
    }
    Ok(universe)
}

/// Split events into (kept, removed); removed events sit on an allowlisted 2LD.
pub fn apply_purity_filter(
    events: Vec<AbuseEvent>,
    allowlist: &Allowlist,
    rules: &SuffixRuleSet,
) -> (Vec<AbuseEvent>, Vec<AbuseEvent>) {
    if allowlist.entries.is_empty() {
        return (events, Vec::new());
    }
    events.into_iter().partition(|e| {
        let listed = e
            .hostname()
            .ok()
            .flatten()
            .and_then(|h| rules.extract_2ld(&h).ok())
            .is_some_and(|d| allowlist.contains(&d));
        !listed
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoIpResolution,
    UnroutedIp,
    OutsideJurisdiction,
    Malformed,
    /// A pair unit was requested but the event names no host.
    MissingName,
}

impl DropReason {
    pub const ALL: [DropReason; 5] = [
        DropReason::NoIpResolution,
        DropReason::UnroutedIp,
        DropReason::OutsideJurisdiction,
        DropReason::Malformed,
        DropReason::MissingName,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::NoIpResolution => "no-ip-resolution",
            DropReason::UnroutedIp => "unrouted-ip",
            DropReason::OutsideJurisdiction => "outside-jurisdiction",
            DropReason::Malformed => "malformed",
            DropReason::MissingName => "missing-name",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Units an event stands for. Hostname-only events resolve through pDNS records observed
/// during the event span and yield one unit per resolved IP.
pub fn resolve_event_units(
    event: &AbuseEvent,
    kind: UnitKind,
    pdns: &PdnsStore,
    rules: &SuffixRuleSet,
) -> std::result::Result<Vec<AbuseUnit>, DropReason> {
    let hostname = event.hostname().map_err(|_| DropReason::Malformed)?;
    let ips: Vec<IpAddr> = match (event.direct_ip(), &hostname) {
        (Some(ip), _) => vec![ip],
        (None, Some(h)) => {
            let set: BTreeSet<IpAddr> = pdns
                .resolve(h, event.first_seen, event.span_end())
                .map(|r| r.ip)
                .collect();
            set.into_iter().collect()
        }
        (None, None) => Vec::new(),
    };
    if ips.is_empty() {
        return Err(DropReason::NoIpResolution);
    }
    ips.into_iter()
        .map(|ip| match derive_abuse_unit_with_ip(event, kind, rules, ip) {
            Ok(Some(u)) => Ok(u),
            Ok(None) => Err(DropReason::MissingName),
            Err(_) => Err(DropReason::Malformed),
        })
        .collect()
}

/// Attribute resolved units to universe providers. Returns the drop reason when none survive.
pub fn attribute_units(
    units: Vec<AbuseUnit>,
    routing: &RoutingTable,
    universe: &ProviderUniverse,
) -> std::result::Result<Vec<(Asn, AbuseUnit)>, DropReason> {
    let mut routed = false;
    let mut out = Vec::with_capacity(units.len());
    for u in units {
        match ip_to_asn(u.ip_part, routing) {
            Some(asn) if universe.contains(asn) => out.push((asn, u)),
            Some(_) => routed = true,
            None => {}
        }
    }
    if !out.is_empty() {
        Ok(out)
    } else if routed {
        Err(DropReason::OutsideJurisdiction)
    } else {
        Err(DropReason::UnroutedIp)
    }
}

/// One feed's deduplicated abuse units per provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbuseMap {
    pub feed_id: String,
    pub unit_kind: UnitKind,
    pub units_by_provider: BTreeMap<Asn, BTreeSet<AbuseUnit>>,
    pub dropped: BTreeMap<DropReason, u64>,
    /// Events that produced at least one attributed unit.
    pub attributed_events: u64,
}

impl AbuseMap {
    pub fn unit_count(&self, asn: Asn) -> u64 {
        self.units_by_provider.get(&asn).map_or(0, |s| s.len() as u64)
    }

    /// Distinct units across all providers.
    pub fn all_units(&self) -> BTreeSet<&AbuseUnit> {
        self.units_by_provider.values().flatten().collect()
    }

    pub fn total_dropped(&self) -> u64 {
        self.dropped.values().sum()
    }
}

pub fn build_abuse_map(
    events: &[AbuseEvent],
    feed_id: &str,
    unit_kind: UnitKind,
    routing: &RoutingTable,
    universe: &ProviderUniverse,
    pdns: &PdnsStore,
    rules: &SuffixRuleSet,
) -> AbuseMap {
    let mut map = AbuseMap {
        feed_id: feed_id.to_string(),
        unit_kind,
        units_by_provider: BTreeMap::new(),
        dropped: BTreeMap::new(),
        attributed_events: 0,
    };
    for event in events {
        let outcome = resolve_event_units(event, unit_kind, pdns, rules)
            .and_then(|units| attribute_units(units, routing, universe));
        match outcome {
            Ok(pairs) => {
                map.attributed_events += 1;
                for (asn, unit) in pairs {
                    map.units_by_provider.entry(asn).or_default().insert(unit);
                }
            }
            Err(reason) => *map.dropped.entry(reason).or_default() += 1,
        }
    }
    map
}

/// Pairwise intersections and exclusivity of feeds over their attributed units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    pub feeds: Vec<String>,
    pub pairwise: Vec<Vec<u64>>,
    pub exclusive: Vec<u64>,
    pub totals: Vec<u64>,
    pub union_size: u64,
}

impl OverlapMatrix {
    /// Share of all distinct units seen by exactly one feed; `None` when no units exist.
    pub fn exclusivity_fraction(&self) -> Option<f64> {
        (self.union_size > 0)
            .then(|| self.exclusive.iter().sum::<u64>() as f64 / self.union_size as f64)
    }

    /// Intersection of feeds `i` and `j` as a percentage of feed `i`.
    pub fn row_percent(&self, i: usize, j: usize) -> Option<f64> {
        (self.totals[i] > 0).then(|| 100.0 * self.pairwise[i][j] as f64 / self.totals[i] as f64)
    }
}

pub fn overlap_matrix(maps: &[AbuseMap]) -> Result<OverlapMatrix> {
    if let Some(first) = maps.first() {
        if let Some(bad) = maps.iter().find(|m| m.unit_kind != first.unit_kind) {
            return Err(Error::config(
                Stage::AbuseMapping,
                format!(
                    "mixed unit kinds in overlap: {} vs {}",
                    first.unit_kind, bad.unit_kind
                ),
            ));
        }
    }
    let sets: Vec<BTreeSet<&AbuseUnit>> = maps.iter().map(AbuseMap::all_units).collect();
    let mut seen_in: BTreeMap<&AbuseUnit, u32> = BTreeMap::new();
    for s in &sets {
        for u in s {
            *seen_in.entry(u).or_default() += 1;
        }
    }
    let n = sets.len();
    let mut pairwise = vec![vec![0u64; n]; n];
    for i in 0..n {
        pairwise[i][i] = sets[i].len() as u64;
        for j in i + 1..n {
            let c = sets[i].intersection(&sets[j]).count() as u64;
            pairwise[i][j] = c;
            pairwise[j][i] = c;
        }
    }
    let exclusive = sets
        .iter()
        .map(|s| s.iter().filter(|u| seen_in[*u] == 1).count() as u64)
        .collect();
    Ok(OverlapMatrix {
        feeds: maps.iter().map(|m| m.feed_id.clone()).collect(),
        totals: sets.iter().map(|s| s.len() as u64).collect(),
        pairwise,
        exclusive,
        union_size: seen_in.len() as u64,
    })
}

/// Popular domains found among one feed's units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopularHits {
    pub feed_id: String,
    /// Units whose 2LD is within the popularity cutoff.
    pub unit_hits: u64,
    pub total_units: u64,
    /// Distinct popular 2LDs with their popularity rank.
    pub domains: BTreeMap<String, u32>,
}

/// Count units whose 2LD sits in the top `cutoff` of the popularity list. Report only.
pub fn ranked_domain_report(
    maps: &[AbuseMap],
    allowlist: &Allowlist,
    rules: &SuffixRuleSet,
    cutoff: u32,
) -> Vec<PopularHits> {
    maps.iter()
        .map(|m| {
            let units = m.all_units();
            let mut hits = PopularHits {
                feed_id: m.feed_id.clone(),
                unit_hits: 0,
                total_units: units.len() as u64,
                domains: BTreeMap::new(),
            };
            for u in units {
                let Some(name) = &u.name_part else { continue };
                let domain = match u.kind {
                    UnitKind::Pair2ldIp => Some(name.clone()),
                    UnitKind::PairFqdnIp => rules.extract_2ld(name).ok(),
                    UnitKind::PairUrlIp => {
                        let host = name.split(['/', '?']).next().unwrap_or("");
                        rules.extract_2ld(host).ok()
                    }
                    UnitKind::IpOnly => None,
                };
                if let Some(d) = domain {
                    if let Some(rank) = allowlist.popularity_rank(&d, cutoff) {
                        hits.unit_hits += 1;
                        hits.domains.insert(d, rank);
                    }
                }
            }
            hits
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::GeoRange;
    use crate::model::{AbuseType, Observable};
    use proptest::prelude::*;

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    fn routing(rows: &[(&str, u32)]) -> RoutingTable {
        RoutingTable::new(rows.iter().map(|(p, a)| (p.parse().unwrap(), Asn(*a))))
    }

    fn geo(rows: &[(&str, &str, &str)]) -> GeoTable {
        GeoTable::new(rows.iter().map(|(s, e, c)| GeoRange {
            v6: false,
            start: crate::ingest::ip_to_u128(ip(s)),
            end: crate::ingest::ip_to_u128(ip(e)),
            country: c.to_string(),
        }))
        .unwrap()
    }

    fn rules() -> SuffixRuleSet {
        SuffixRuleSet::parse("com\nnet\ngl\nly\n")
    }

    fn ev(obs: &str, hint: Option<&str>) -> AbuseEvent {
        AbuseEvent::new(
            "f",
            Observable::classify(obs).unwrap(),
            hint.map(ip),
            100,
            None,
            AbuseType::Malware,
        )
        .unwrap()
    }

    #[test]
    fn longest_prefix_attribution() {
        let t = routing(&[("10.0.0.0/8", 64500), ("10.1.0.0/16", 64501)]);
        assert_eq!(ip_to_asn(ip("10.1.2.3"), &t), Some(Asn(64501)));
        assert_eq!(ip_to_asn(ip("11.0.0.1"), &t), None);
        assert_eq!(ip_to_asn(ip("10.255.0.1"), &t), Some(Asn(64500)));
    }

    #[test]
    fn universe_membership() {
        let t = routing(&[("10.0.0.0/24", 1), ("20.0.0.0/24", 2), ("30.0.0.0/16", 3)]);
        let g = geo(&[
            ("10.0.0.0", "10.0.0.255", "NL"),
            ("20.0.0.0", "20.0.0.255", "DE"),
            ("30.0.0.0", "30.0.0.255", "NL"),
        ]);
        let u = jurisdiction_universe(&t, &g, "NL", 1).unwrap();
        assert!(u.contains(Asn(1)));
        assert!(!u.contains(Asn(2)));
        assert!(u.contains(Asn(3)));
        let u = jurisdiction_universe(&t, &g, "NL", 512).unwrap_err();
        assert!(u.to_string().contains("no providers"));
        let u = jurisdiction_universe(&t, &g, "NL", 256).unwrap();
        assert_eq!(u.size(), 2);
        assert!(jurisdiction_universe(&t, &g, "NL", 0).is_err());
    }

    #[test]
    fn purity_filter() {
        let mut allow = Allowlist::new(["goo.gl".to_string()], []);
        let events = vec![ev("http://goo.gl/abc", Some("1.1.1.1")), ev("example-hosting.net", Some("1.1.1.1"))];
        let (kept, removed) = apply_purity_filter(events.clone(), &allow, &rules());
        assert_eq!(removed.len(), 1);
        assert_eq!(kept.len(), 1);
        allow = Allowlist::default();
        let (kept, removed) = apply_purity_filter(events, &allow, &rules());
        assert!(removed.is_empty());
        assert_eq!(kept.len(), 2);
    }

    fn setup() -> (RoutingTable, ProviderUniverse) {
        let t = routing(&[("10.0.0.0/16", 1), ("20.0.0.0/16", 2)]);
        (t, ProviderUniverse::new([Asn(1)]))
    }

    #[test]
    fn dedup_and_drop_reasons() {
        let (t, u) = setup();
        let pdns = PdnsStore::new([("c.example.com".to_string(), ip("10.0.0.9"), 50, 150)]);
        let events = vec![
            ev("a.example.com", Some("10.0.0.1")),
            ev("www.example.com", Some("10.0.0.1")),
            ev("x.example.com", Some("20.0.0.1")),
            ev("y.example.com", Some("30.0.0.1")),
            ev("z.example.com", None),
            ev("c.example.com", None),
            ev("10.0.0.5", None),
            ev("bad_host.com", Some("10.0.0.1")),
        ];
        let m = build_abuse_map(&events, "f", UnitKind::Pair2ldIp, &t, &u, &pdns, &rules());
        assert_eq!(m.unit_count(Asn(1)), 2);
        assert_eq!(m.dropped[&DropReason::OutsideJurisdiction], 1);
        assert_eq!(m.dropped[&DropReason::UnroutedIp], 1);
        assert_eq!(m.dropped[&DropReason::NoIpResolution], 1);
        assert_eq!(m.dropped[&DropReason::MissingName], 1);
        assert_eq!(m.dropped[&DropReason::Malformed], 1);
        assert_eq!(m.attributed_events + m.total_dropped(), events.len() as u64);

        let m = build_abuse_map(&events, "f", UnitKind::IpOnly, &t, &u, &pdns, &rules());
        // 10.0.0.1, 10.0.0.9 and 10.0.0.5
        assert_eq!(m.unit_count(Asn(1)), 3);
    }

    #[test]
    fn hostname_resolves_to_every_overlapping_ip() {
        let (t, u) = setup();
        let pdns = PdnsStore::new([
            ("a.example.com".to_string(), ip("10.0.0.1"), 0, 200),
            ("a.example.com".to_string(), ip("10.0.0.2"), 90, 95),
            ("a.example.com".to_string(), ip("10.0.0.3"), 300, 400),
        ]);
        let m = build_abuse_map(&[ev("a.example.com", None)], "f", UnitKind::Pair2ldIp, &t, &u, &pdns, &rules());
        let ips: Vec<IpAddr> = m.units_by_provider[&Asn(1)].iter().map(|u| u.ip_part).collect();
        assert_eq!(ips, vec![ip("10.0.0.1")]);
        let mut e = ev("a.example.com", None);
        e.first_seen = 80;
        e.last_seen = Some(100);
        let m = build_abuse_map(&[e], "f", UnitKind::Pair2ldIp, &t, &u, &pdns, &rules());
        assert_eq!(m.unit_count(Asn(1)), 2);
    }

    #[test]
    fn one_ip_two_feeds() {
        let (t, u) = setup();
        let pdns = PdnsStore::default();
        let f1 = [ev("a.com", Some("10.0.0.1"))];
        let f2 = [ev("b.com", Some("10.0.0.1"))];
        let r = rules();
        let m1 = build_abuse_map(&f1, "phish", UnitKind::Pair2ldIp, &t, &u, &pdns, &r);
        let m2 = build_abuse_map(&f2, "malware", UnitKind::Pair2ldIp, &t, &u, &pdns, &r);
        assert_eq!(m1.unit_count(Asn(1)), 1);
        assert_eq!(m2.unit_count(Asn(1)), 1);
        assert_eq!(overlap_matrix(&[m1, m2]).unwrap().pairwise[0][1], 0);
        let i1 = build_abuse_map(&f1, "phish", UnitKind::IpOnly, &t, &u, &pdns, &r);
        let i2 = build_abuse_map(&f2, "malware", UnitKind::IpOnly, &t, &u, &pdns, &r);
        assert_eq!(i1.units_by_provider, i2.units_by_provider);
        assert_eq!(overlap_matrix(&[i1, i2]).unwrap().pairwise[0][1], 1);
    }

    fn map_of(feed: &str, kind: UnitKind, units: &[u32]) -> AbuseMap {
        let mut by = BTreeMap::new();
        for &n in units {
            let asn = Asn(1 + n % 3);
            by.entry(asn).or_insert_with(BTreeSet::new).insert(AbuseUnit {
                kind,
                name_part: (kind != UnitKind::IpOnly).then(|| format!("d{n}.com")),
                ip_part: IpAddr::V4(std::net::Ipv4Addr::from(n)),
            });
        }
        AbuseMap {
            feed_id: feed.into(),
            unit_kind: kind,
            units_by_provider: by,
            dropped: BTreeMap::new(),
            attributed_events: units.len() as u64,
        }
    }

    #[test]
    fn overlap_small_example() {
        let m = overlap_matrix(&[
            map_of("F1", UnitKind::Pair2ldIp, &[1, 2, 3]),
            map_of("F2", UnitKind::Pair2ldIp, &[2, 4]),
        ])
        .unwrap();
        assert_eq!(m.pairwise[0][1], 1);
        assert_eq!(m.exclusive, vec![2, 1]);
        assert_eq!(m.exclusivity_fraction(), Some(0.75));
    }

    #[test]
    fn overlap_identical_and_single() {
        let a = map_of("A", UnitKind::IpOnly, &[1, 2, 3]);
        let mut b = a.clone();
        b.feed_id = "B".into();
        let m = overlap_matrix(&[a.clone(), b]).unwrap();
        assert_eq!(m.pairwise[0][1], 3);
        assert_eq!(m.exclusive, vec![0, 0]);
        let m = overlap_matrix(&[a]).unwrap();
        assert_eq!(m.exclusivity_fraction(), Some(1.0));
    }

    #[test]
    fn overlap_row_percentages() {
        // 124 shared units: 9% of one feed, 17% of the other
        let shared: Vec<u32> = (0..124).collect();
        let mut mlat: Vec<u32> = shared.clone();
        mlat.extend(10_000..10_000 + 1378 - 124);
        let mut meld = shared;
        meld.extend(20_000..20_000 + 729 - 124);
        let m = overlap_matrix(&[
            map_of("MLAT", UnitKind::Pair2ldIp, &mlat),
            map_of("MELD", UnitKind::Pair2ldIp, &meld),
        ])
        .unwrap();
        assert_eq!(m.pairwise[0][1], 124);
        assert_eq!(m.row_percent(0, 1).unwrap().round(), 9.0);
        assert_eq!(m.row_percent(1, 0).unwrap().round(), 17.0);
    }

    #[test]
    fn mixed_kinds_rejected() {
        let err = overlap_matrix(&[
            map_of("A", UnitKind::IpOnly, &[1]),
            map_of("B", UnitKind::Pair2ldIp, &[1]),
        ]);
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn popular_domain_report() {
        let allow = Allowlist::new([], [(30, "msn.com".to_string())]);
        let mut m = map_of("F", UnitKind::Pair2ldIp, &[]);
        for (d, n) in [("msn.com", 1u32), ("obscure.biz", 2)] {
            m.units_by_provider.entry(Asn(1)).or_default().insert(AbuseUnit {
                kind: UnitKind::Pair2ldIp,
                name_part: Some(d.into()),
                ip_part: IpAddr::V4(n.into()),
            });
        }
        let r = ranked_domain_report(&[m.clone()], &allow, &rules(), 25_000);
        assert_eq!(r[0].unit_hits, 1);
        assert_eq!(r[0].domains.get("msn.com"), Some(&30));
        let r = ranked_domain_report(&[m], &Allowlist::default(), &rules(), 25_000);
        assert_eq!(r[0].unit_hits, 0);
    }

    proptest! {
        #[test]
        fn abuse_map_ignores_event_order(seed in proptest::collection::vec((0u32..40, 0u8..3), 1..40)) {
            let (t, u) = setup();
            let pdns = PdnsStore::default();
            let events: Vec<AbuseEvent> = seed
                .iter()
                .map(|&(d, o)| ev(&format!("h{}.d{}.com", d % 3, d % 7), Some(&format!("{}.0.0.{}", [10, 20, 30][o as usize], d))))
                .collect();
            let mut rev = events.clone();
            rev.reverse();
            let a = build_abuse_map(&events, "f", UnitKind::Pair2ldIp, &t, &u, &pdns, &rules());
            let b = build_abuse_map(&rev, "f", UnitKind::Pair2ldIp, &t, &u, &pdns, &rules());
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.attributed_events + a.total_dropped(), events.len() as u64);
            let ip_map = build_abuse_map(&events, "f", UnitKind::IpOnly, &t, &u, &pdns, &rules());
            prop_assert!(ip_map.all_units().len() <= a.all_units().len() + a.total_dropped() as usize);
        }
    }
}
