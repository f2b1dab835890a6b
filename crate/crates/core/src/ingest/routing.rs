use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::IpAddr;
use std::path::Path;

use ipnet::IpNet;

use super::{ip_to_u128, parse_err, read_rows};
use crate::error::Result;
use crate::model::{Asn, Timestamp};

/// A maximal address interval whose longest-prefix match is `asn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OwnedInterval {
    pub v6: bool,
    pub start: u128,
    pub end: u128,
    pub asn: Asn,
}

impl OwnedInterval {
    /// Address count, saturating for the whole IPv6 space.
    pub fn len(&self) -> u128 {
        (self.end - self.start).saturating_add(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Prefix-to-origin table from a single routing snapshot.
///
/// A prefix announced by several origins resolves to the lowest ASN.
#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: BTreeSet<(IpNet, Asn)>,
    pub snapshot_time: Option<Timestamp>,
    // per family: (prefix length, network -> asn), longest first
    v4: Vec<(u8, HashMap<u128, Asn>)>,
    v6: Vec<(u8, HashMap<u128, Asn>)>,
    partition_v4: Vec<OwnedInterval>,
    partition_v6: Vec<OwnedInterval>,
}

fn bounds(net: &IpNet) -> (bool, u128, u128) {
    match net {
        IpNet::V4(n) => (
            false,
            u32::from(n.network()) as u128,
            u32::from(n.broadcast()) as u128,
        ),
        IpNet::V6(n) => (true, u128::from(n.network()), u128::from(n.broadcast())),
    }
}

impl RoutingTable {
    pub fn new(entries: impl IntoIterator<Item = (IpNet, Asn)>) -> Self {
        let entries: BTreeSet<(IpNet, Asn)> =
            entries.into_iter().map(|(n, a)| (n.trunc(), a)).collect();

        // winning origin per distinct prefix
        let mut winners: BTreeMap<IpNet, Asn> = BTreeMap::new();
        for (net, asn) in &entries {
            winners
                .entry(*net)
                .and_modify(|a| *a = (*a).min(*asn))
                .or_insert(*asn);
        }

        let mut by_len: [BTreeMap<u8, HashMap<u128, Asn>>; 2] = Default::default();
        for (net, asn) in &winners {
            let (v6, start, _) = bounds(net);
            by_len[v6 as usize]
                .entry(net.prefix_len())
                .or_default()
                .insert(start, *asn);
        }
        let [l4, l6] = by_len;
        let v4 = l4.into_iter().rev().collect();
        let v6 = l6.into_iter().rev().collect();

        let (partition_v4, partition_v6) = build_partition(&winners);
        RoutingTable {
            entries,
            snapshot_time: None,
            v4,
            v6,
            partition_v4,
            partition_v6,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (IpNet, Asn)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn origins(&self) -> BTreeSet<Asn> {
        self.entries.iter().map(|(_, a)| *a).collect()
    }

    /// Origin of the most specific covering prefix.
    pub fn longest_match(&self, ip: IpAddr) -> Option<Asn> {
        let (levels, bits) = match ip {
            IpAddr::V4(_) => (&self.v4, 32u32),
            IpAddr::V6(_) => (&self.v6, 128u32),
        };
        let addr = ip_to_u128(ip);
        levels.iter().find_map(|(len, nets)| {
            let host_bits = bits - *len as u32;
            let net = if host_bits >= 128 {
                0
            } else {
                (addr >> host_bits) << host_bits
            };
            nets.get(&net).copied()
        })
    }

    /// Disjoint intervals covering all routed space, each labelled with its longest-match origin.
    pub fn partition(&self) -> impl Iterator<Item = &OwnedInterval> {
        self.partition_v4.iter().chain(self.partition_v6.iter())
    }

    /// Interval lookup over the partition; agrees with [`Self::longest_match`].
    pub fn partition_lookup(&self, ip: IpAddr) -> Option<Asn> {
        let (part, addr) = match ip {
            IpAddr::V4(_) => (&self.partition_v4, ip_to_u128(ip)),
            IpAddr::V6(_) => (&self.partition_v6, ip_to_u128(ip)),
        };
        let idx = part.partition_point(|iv| iv.start <= addr);
        idx.checked_sub(1)
            .map(|i| &part[i])
            .filter(|iv| iv.end >= addr)
            .map(|iv| iv.asn)
    }
}

/// Split every prefix into the parts not covered by a more specific prefix.
fn build_partition(winners: &BTreeMap<IpNet, Asn>) -> (Vec<OwnedInterval>, Vec<OwnedInterval>) {
    let mut out = (Vec::new(), Vec::new());
    for family_v6 in [false, true] {
        let mut nets: Vec<(u128, u128, u8, Asn)> = winners
            .iter()
            .filter_map(|(net, asn)| {
                let (v6, s, e) = bounds(net);
                (v6 == family_v6).then_some((s, e, net.prefix_len(), *asn))
            })
            .collect();
        nets.sort_by_key(|&(s, _, len, _)| (s, len));

        // direct children per prefix index
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); nets.len()];
        let mut stack: Vec<usize> = Vec::new();
        for i in 0..nets.len() {
            while let Some(&top) = stack.last() {
                if nets[top].1 >= nets[i].0 {
                    break;
                }
                stack.pop();
            }
            if let Some(&parent) = stack.last() {
                children[parent].push(i);
            }
            stack.push(i);
        }

        let target = if family_v6 { &mut out.1 } else { &mut out.0 };
        for (i, &(start, end, _, asn)) in nets.iter().enumerate() {
            let mut cursor = Some(start);
            for &c in &children[i] {
                let (cs, ce, _, _) = nets[c];
                if let Some(cur) = cursor {
                    if cs > cur {
                        target.push(OwnedInterval {
                            v6: family_v6,
                            start: cur,
                            end: cs - 1,
                            asn,
                        });
                    }
                }
                cursor = ce.checked_add(1);
            }
            if let Some(cur) = cursor {
                if cur <= end {
                    target.push(OwnedInterval {
                        v6: family_v6,
                        start: cur,
                        end,
                        asn,
                    });
                }
            }
        }
        target.sort();
    }
    out
}

/// Load a `prefix,asn` snapshot. Any malformed line is fatal.
pub fn load_routing_snapshot(path: &Path) -> Result<RoutingTable> {
    let (_, rows) = read_rows(path, "prefix")?;
    let mut entries = Vec::with_capacity(rows.len());
    for row in rows {
        if row.fields.len() < 2 {
            return Err(parse_err(path, row.line, "expected prefix,asn"));
        }
        let net: IpNet = row.fields[0]
            .parse()
            .map_err(|_| parse_err(path, row.line, format!("invalid prefix {:?}", row.fields[0])))?;
        let asn: Asn = row.fields[1]
            .parse()
            .map_err(|e: String| parse_err(path, row.line, e))?;
        entries.push((net, asn));
    }
    Ok(RoutingTable::new(entries))
}
