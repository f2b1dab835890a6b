use std::collections::{BTreeMap, HashMap};
use std::net::IpAddr;
use std::path::Path;

use super::{parse_err, parse_timestamp, read_rows};
use crate::error::Result;
use crate::model::Timestamp;
use crate::suffix::normalize_hostname;

/// All observations of one (fqdn, ip) resolution, as a union of disjoint closed spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdnsRecord {
    pub fqdn: String,
    pub ip: IpAddr,
    spans: Vec<(Timestamp, Timestamp)>,
}

impl PdnsRecord {
    pub fn first_seen(&self) -> Timestamp {
        self.spans[0].0
    }

    pub fn last_seen(&self) -> Timestamp {
        self.spans[self.spans.len() - 1].1
    }

    pub fn spans(&self) -> &[(Timestamp, Timestamp)] {
        &self.spans
    }

    /// True when some observed span intersects `[from, to]`.
    pub fn overlaps(&self, from: Timestamp, to: Timestamp) -> bool {
        self.spans.iter().any(|&(s, e)| s <= to && e >= from)
    }
}

/// Historical DNS resolutions, keyed by (fqdn, ip).
#[derive(Debug, Clone, Default)]
pub struct PdnsStore {
    records: Vec<PdnsRecord>,
    by_name: HashMap<String, Vec<usize>>,
}

fn union(mut spans: Vec<(Timestamp, Timestamp)>) -> Vec<(Timestamp, Timestamp)> {
    spans.sort_unstable();
    let mut out: Vec<(Timestamp, Timestamp)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

impl PdnsStore {
    /// Build from raw observations; names must already be normalized.
    pub fn new(observations: impl IntoIterator<Item = (String, IpAddr, Timestamp, Timestamp)>) -> Self {
        let mut grouped: BTreeMap<(String, IpAddr), Vec<(Timestamp, Timestamp)>> = BTreeMap::new();
        for (fqdn, ip, first, last) in observations {
            grouped.entry((fqdn, ip)).or_default().push((first, last));
        }
        let mut records = Vec::with_capacity(grouped.len());
        let mut by_name: HashMap<String, Vec<usize>> = HashMap::new();
        for ((fqdn, ip), spans) in grouped {
            by_name.entry(fqdn.clone()).or_default().push(records.len());
            records.push(PdnsRecord {
                fqdn,
                ip,
                spans: union(spans),
            });
        }
        PdnsStore { records, by_name }
    }

    pub fn records(&self) -> &[PdnsRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records for `fqdn` observed at some point in `[from, to]`, ordered by IP.
    pub fn resolve(&self, fqdn: &str, from: Timestamp, to: Timestamp) -> impl Iterator<Item = &PdnsRecord> {
        self.by_name
            .get(fqdn)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
            .filter(move |r| r.overlaps(from, to))
    }
}

/// Load `fqdn,ip,first_seen,last_seen` rows. Malformed rows are fatal.
pub fn load_pdns(path: &Path) -> Result<PdnsStore> {
    let (_, rows) = read_rows(path, "fqdn")?;
    let mut obs = Vec::with_capacity(rows.len());
    for row in rows {
        if row.fields.len() < 4 {
            return Err(parse_err(path, row.line, "expected fqdn,ip,first_seen,last_seen"));
        }
        let fqdn = normalize_hostname(&row.fields[0])
            .map_err(|e| parse_err(path, row.line, e.to_string()))?;
        let ip: IpAddr = row.fields[1]
            .parse()
            .map_err(|_| parse_err(path, row.line, format!("invalid ip {:?}", row.fields[1])))?;
        let first = parse_timestamp(&row.fields[2])
            .ok_or_else(|| parse_err(path, row.line, "bad timestamp"))?;
        let last = parse_timestamp(&row.fields[3])
            .ok_or_else(|| parse_err(path, row.line, "bad timestamp"))?;
        if first > last {
            return Err(parse_err(path, row.line, "first_seen after last_seen"));
        }
        obs.push((fqdn, ip, first, last));
    }
    Ok(PdnsStore::new(obs))
}
