//! Provider size estimators used to normalize abuse counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{PdnsStore, RoutingTable};
use crate::model::{Asn, ProviderUniverse, Window};
use crate::suffix::SuffixRuleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeEstimator {
    AdvertisedIps,
    HostingIps,
    #[serde(rename = "hosted_2lds")]
    Hosted2lds,
}

impl SizeEstimator {
    pub const ALL: [SizeEstimator; 3] = [
        SizeEstimator::AdvertisedIps,
        SizeEstimator::HostingIps,
        SizeEstimator::Hosted2lds,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SizeEstimator::AdvertisedIps => "advertised_ips",
            SizeEstimator::HostingIps => "hosting_ips",
            SizeEstimator::Hosted2lds => "hosted_2lds",
        }
    }
}

impl fmt::Display for SizeEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeEstimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SizeEstimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s.trim())
            .ok_or_else(|| format!("unknown size estimator {s:?}"))
    }
}

/// Size of every universe provider under one estimator (absent data means 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeMap {
    pub estimator: SizeEstimator,
    pub sizes: BTreeMap<Asn, u128>,
}

impl SizeMap {
    fn zeroed(estimator: SizeEstimator, universe: &ProviderUniverse) -> Self {
        SizeMap {
            estimator,
            sizes: universe.iter().map(|a| (a, 0)).collect(),
        }
    }

    pub fn size(&self, asn: Asn) -> u128 {
        self.sizes.get(&asn).copied().unwrap_or(0)
    }
}

/// Addresses for which the provider is the longest-prefix origin.
pub fn size_advertised_ips(universe: &ProviderUniverse, routing: &RoutingTable) -> SizeMap {
    let mut map = SizeMap::zeroed(SizeEstimator::AdvertisedIps, universe);
    for iv in routing.partition() {
        if let Some(s) = map.sizes.get_mut(&iv.asn) {
            *s = s.saturating_add(iv.len());
        }
    }
    map
}

/// Distinct pDNS resolution targets seen in the window, per longest-match origin.
pub fn size_hosting_ips(
    universe: &ProviderUniverse,
    routing: &RoutingTable,
    pdns: &PdnsStore,
    window: Window,
) -> SizeMap {
    let ips: BTreeSet<IpAddr> = pdns
        .records()
        .iter()
        .filter(|r| r.overlaps(window.start, window.end))
        .map(|r| r.ip)
        .collect();
    let mut map = SizeMap::zeroed(SizeEstimator::HostingIps, universe);
    for ip in ips {
        if let Some(s) = routing.longest_match(ip).and_then(|a| map.sizes.get_mut(&a)) {
            *s += 1;
        }
    }
    map
}

/// Distinct registrable domains with a resolution in the window into the provider's space.
/// A domain spread over several providers counts once for each of them.
pub fn size_hosted_2lds(
    universe: &ProviderUniverse,
    routing: &RoutingTable,
    pdns: &PdnsStore,
    rules: &SuffixRuleSet,
    window: Window,
) -> SizeMap {
    let mut pairs: BTreeSet<(Asn, String)> = BTreeSet::new();
    for r in pdns.records() {
        if !r.overlaps(window.start, window.end) {
            continue;
        }
        let Some(asn) = routing.longest_match(r.ip).filter(|a| universe.contains(*a)) else {
            continue;
        };
        if let Ok(d) = rules.extract_2ld(&r.fqdn) {
            pairs.insert((asn, d));
        }
    }
    let mut map = SizeMap::zeroed(SizeEstimator::Hosted2lds, universe);
    for (asn, _) in pairs {
        *map.sizes.get_mut(&asn).expect("universe asn") += 1;
    }
    map
}

pub fn compute_size(
    estimator: SizeEstimator,
    universe: &ProviderUniverse,
    routing: &RoutingTable,
    pdns: &PdnsStore,
    rules: &SuffixRuleSet,
    window: Window,
) -> SizeMap {
    match estimator {
        SizeEstimator::AdvertisedIps => size_advertised_ips(universe, routing),
        SizeEstimator::HostingIps => size_hosting_ips(universe, routing, pdns, window),
        SizeEstimator::Hosted2lds => size_hosted_2lds(universe, routing, pdns, rules, window),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn routing(rows: &[(&str, u32)]) -> RoutingTable {
        RoutingTable::new(rows.iter().map(|(p, a)| (p.parse().unwrap(), Asn(*a))))
    }

    fn pdns(rows: &[(&str, &str, i64, i64)]) -> PdnsStore {
        PdnsStore::new(rows.iter().map(|(f, i, a, b)| (f.to_string(), i.parse().unwrap(), *a, *b)))
    }

    fn uni(asns: &[u32]) -> ProviderUniverse {
        ProviderUniverse::new(asns.iter().map(|&a| Asn(a)))
    }

    #[test]
    fn advertised_counts() {
        let s = size_advertised_ips(&uni(&[1]), &routing(&[("10.0.0.0/24", 1)]));
        assert_eq!(s.size(Asn(1)), 256);
        let s = size_advertised_ips(&uni(&[1]), &routing(&[("10.0.0.0/24", 1), ("10.0.0.0/25", 1)]));
        assert_eq!(s.size(Asn(1)), 256);
        let s = size_advertised_ips(&uni(&[1, 2]), &routing(&[("10.0.0.0/8", 1), ("10.1.0.0/16", 2)]));
        assert_eq!(s.size(Asn(1)), (1 << 24) - (1 << 16));
        assert_eq!(s.size(Asn(2)), 1 << 16);
    }

    #[test]
    fn hosting_ips_counts_observed_only() {
        let r = routing(&[("1.2.3.0/24", 1), ("10.0.0.0/16", 2)]);
        let p = pdns(&[
            ("a.com", "1.2.3.4", 0, 10),
            ("b.com", "1.2.3.5", 0, 10),
            ("c.com", "1.2.3.5", 0, 10),
            ("old.com", "1.2.3.6", -100, -50),
        ]);
        let w = Window::new(0, 100).unwrap();
        let s = size_hosting_ips(&uni(&[1, 2]), &r, &p, w);
        assert_eq!(s.size(Asn(1)), 2);
        assert_eq!(s.size(Asn(2)), 0);
        let p: Vec<(String, IpAddr, i64, i64)> = (0..10u32)
            .map(|i| (format!("d{i}.com"), IpAddr::V4((0x0A00_0000 + i).into()), 0, 1))
            .collect();
        let s = size_hosting_ips(&uni(&[1, 2]), &r, &PdnsStore::new(p), w);
        assert_eq!(s.size(Asn(2)), 10);
        assert_eq!(size_advertised_ips(&uni(&[2]), &r).size(Asn(2)), 65_536);
    }

    #[test]
    fn hosted_2lds_collapse_and_split() {
        let rules = SuffixRuleSet::parse("com\n");
        let r = routing(&[("1.0.0.0/24", 1), ("2.0.0.0/24", 2)]);
        let w = Window::all();
        let p = pdns(&[("www.a.com", "1.0.0.1", 0, 1), ("mail.a.com", "1.0.0.2", 0, 1), ("b.com", "1.0.0.1", 0, 1)]);
        assert_eq!(size_hosted_2lds(&uni(&[1]), &r, &p, &rules, w).size(Asn(1)), 2);
        let p = pdns(&[("a.com", "1.0.0.1", 0, 1), ("a.com", "2.0.0.1", 0, 1)]);
        let s = size_hosted_2lds(&uni(&[1, 2]), &r, &p, &rules, w);
        assert_eq!((s.size(Asn(1)), s.size(Asn(2))), (1, 1));
        let s = size_hosted_2lds(&uni(&[1, 2]), &r, &PdnsStore::default(), &rules, w);
        assert!(s.sizes.values().all(|&v| v == 0));
        assert_eq!(s.sizes.len(), 2);
    }

    fn arb_records() -> impl Strategy<Value = Vec<(u8, u8, i64, i64)>> {
        proptest::collection::vec((0u8..6, 0u8..255, 0i64..100, 0i64..50), 0..40)
    }

    fn store(rows: &[(u8, u8, i64, i64)]) -> PdnsStore {
        PdnsStore::new(rows.iter().map(|&(d, h, s, l)| {
            (format!("h{h}.d{d}.com"), IpAddr::V4(std::net::Ipv4Addr::new(10, d % 3, 0, h)), s, s + l)
        }))
    }

    proptest! {
        #[test]
        fn estimator_invariants(rows in arb_records(), extra in arb_records(), ws in 0i64..100, wl in 1i64..100) {
            let rules = SuffixRuleSet::parse("com\n");
            let r = routing(&[("10.0.0.0/16", 1), ("10.1.0.0/24", 2), ("10.0.0.0/25", 3), ("10.2.0.0/30", 2)]);
            let u = uni(&[1, 2, 3]);
            let w = Window::new(ws, ws + wl).unwrap();
            let base = store(&rows);
            let mut all = rows.clone();
            all.extend(extra.iter().copied());
            let grown = store(&all);
            let adv = size_advertised_ips(&u, &r);
            let host = size_hosting_ips(&u, &r, &base, w);
            let host_grown = size_hosting_ips(&u, &r, &grown, w);
            let d = size_hosted_2lds(&u, &r, &base, &rules, w);
            let d_grown = size_hosted_2lds(&u, &r, &grown, &rules, w);
            let narrow = Window::new(ws, ws + (wl + 1) / 2).unwrap();
            let host_narrow = size_hosting_ips(&u, &r, &base, narrow);
            let d_narrow = size_hosted_2lds(&u, &r, &base, &rules, narrow);
            for a in u.iter() {
                prop_assert!(host.size(a) <= adv.size(a));
                prop_assert!(host_grown.size(a) >= host.size(a));
                prop_assert!(d_grown.size(a) >= d.size(a));
                prop_assert!(host_narrow.size(a) <= host.size(a));
                prop_assert!(d_narrow.size(a) <= d.size(a));
            }
        }
    }
}
