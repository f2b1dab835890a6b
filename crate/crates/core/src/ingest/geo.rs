use std::net::IpAddr;
use std::path::Path;

use super::{ip_to_u128, parse_err, read_rows};
use crate::error::{Error, Result, Stage};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GeoRange {
    pub v6: bool,
    pub start: u128,
    pub end: u128,
    pub country: String,
}

/// Sorted, non-overlapping IP ranges with ISO-3166 alpha-2 country codes.
#[derive(Debug, Clone, Default)]
pub struct GeoTable {
    ranges: Vec<GeoRange>,
}

pub(crate) fn normalize_country(raw: &str) -> Option<String> {
    let c = raw.trim().to_ascii_uppercase();
    (c.len() == 2 && c.bytes().all(|b| b.is_ascii_uppercase())).then_some(c)
}

impl GeoTable {
    /// Exact duplicates collapse and touching same-country ranges merge; any remaining
    /// overlap is rejected.
    pub fn new(ranges: impl IntoIterator<Item = GeoRange>) -> Result<Self> {
        let mut ranges: Vec<GeoRange> = ranges.into_iter().collect();
        ranges.sort();
        ranges.dedup();
        let mut out: Vec<GeoRange> = Vec::with_capacity(ranges.len());
        for r in ranges {
            if r.start > r.end {
                return Err(Error::data(Stage::Ingestion, "geo range start after end"));
            }
            if let Some(last) = out.last_mut() {
                if last.v6 == r.v6 {
                    if r.start <= last.end {
                        return Err(Error::data(
                            Stage::Ingestion,
                            format!(
                                "overlapping ranges: {}-{} ({}) and {}-{} ({})",
                                last.start, last.end, last.country, r.start, r.end, r.country
                            ),
                        ));
                    }
                    if last.country == r.country && last.end.checked_add(1) == Some(r.start) {
                        last.end = r.end;
                        continue;
                    }
                }
            }
            out.push(r);
        }
        Ok(GeoTable { ranges: out })
    }

    pub fn ranges(&self) -> &[GeoRange] {
        &self.ranges
    }

    pub fn country(&self, ip: IpAddr) -> Option<&str> {
        let v6 = ip.is_ipv6();
        let a = ip_to_u128(ip);
        let idx = self
            .ranges
            .partition_point(|r| (r.v6, r.start) <= (v6, a));
        idx.checked_sub(1)
            .map(|i| &self.ranges[i])
            .filter(|r| r.v6 == v6 && r.end >= a)
            .map(|r| r.country.as_str())
    }

    /// Number of addresses in `[start, end]` that geolocate to `country`.
    pub fn count_in(&self, v6: bool, start: u128, end: u128, country: &str) -> u128 {
        let first = self
            .ranges
            .partition_point(|r| (r.v6, r.end) < (v6, start));
        let mut total: u128 = 0;
        for r in &self.ranges[first..] {
            if r.v6 != v6 || r.start > end {
                break;
            }
            if r.country != country {
                continue;
            }
            let lo = r.start.max(start);
            let hi = r.end.min(end);
            if lo <= hi {
                total = total.saturating_add((hi - lo).saturating_add(1));
            }
        }
        total
    }
}

/// Load `ip_start,ip_end,country` rows.
pub fn load_geoip(path: &Path) -> Result<GeoTable> {
    let (_, rows) = read_rows(path, "ip_start")?;
    let mut ranges = Vec::with_capacity(rows.len());
    for row in rows {
        if row.fields.len() < 3 {
            return Err(parse_err(path, row.line, "expected ip_start,ip_end,country"));
        }
        let start: IpAddr = row.fields[0]
            .parse()
            .map_err(|_| parse_err(path, row.line, format!("invalid ip {:?}", row.fields[0])))?;
        let end: IpAddr = row.fields[1]
            .parse()
            .map_err(|_| parse_err(path, row.line, format!("invalid ip {:?}", row.fields[1])))?;
        if start.is_ipv6() != end.is_ipv6() {
            return Err(parse_err(path, row.line, "mixed address families"));
        }
        let (s, e) = (ip_to_u128(start), ip_to_u128(end));
        if s > e {
            return Err(parse_err(path, row.line, "ip_start after ip_end"));
        }
        let country = normalize_country(&row.fields[2])
            .ok_or_else(|| parse_err(path, row.line, format!("invalid country {:?}", row.fields[2])))?;
        ranges.push(GeoRange {
            v6: start.is_ipv6(),
            start: s,
            end: e,
            country,
        });
    }
    GeoTable::new(ranges).map_err(|e| match e {
        Error::Data { message, .. } => parse_err(path, 0, message),
        other => other,
    })
}
