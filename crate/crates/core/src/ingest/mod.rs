//! Loading and validation of all external datasets.
//!
//! Every loader reads delimiter-separated text. CSV loaders accept the file with or
//! without its header row; a `.tsv` extension or a tab in the first line switches the
//! delimiter to tab.

mod feed;
mod geo;
mod lists;
mod pdns;
mod routing;

use std::fs;
use std::net::IpAddr;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::model::Timestamp;

pub use feed::{load_feed, ColumnMap, FeedDescriptor, FeedQuality, LoadedFeed, SkippedRow};
pub use geo::{load_geoip, GeoRange, GeoTable};
pub(crate) use geo::normalize_country;
pub use lists::{load_allowlist, load_suffix_rules, Allowlist};
pub use pdns::{load_pdns, PdnsRecord, PdnsStore};
pub use routing::{load_routing_snapshot, OwnedInterval, RoutingTable};

/// Parse epoch seconds or an ISO-8601 UTC timestamp.
pub fn parse_timestamp(raw: &str) -> Option<Timestamp> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(n) = s.parse::<i64>() {
        return Some(n);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%SZ"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

/// IP address as an integer within its family.
pub(crate) fn ip_to_u128(ip: IpAddr) -> u128 {
    match ip {
        IpAddr::V4(v4) => u32::from(v4) as u128,
        IpAddr::V6(v6) => u128::from(v6),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One data row with its 1-based line number in the source file.
pub(crate) struct Row {
    pub line: u64,
    pub fields: Vec<String>,
}

/// Split a delimited file into rows, dropping the header when its first field matches
/// `first_header` (case-insensitive). Blank and `#` comment lines are skipped.
pub(crate) fn read_rows(path: &Path, first_header: &str) -> Result<(Option<Vec<String>>, Vec<Row>)> {
    let text = read_text(path)?;
    let tab = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"))
        || text.lines().next().is_some_and(|l| l.contains('\t'));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .delimiter(if tab { b'\t' } else { b',' })
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0
            && header.is_none()
            && fields
                .first()
                .is_some_and(|f| f.eq_ignore_ascii_case(first_header))
        {
            header = Some(fields.iter().map(|f| f.to_ascii_lowercase()).collect());
            continue;
        }
        rows.push(Row { line, fields });
    }
    Ok((header, rows))
}

pub(crate) fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_accept_epoch_and_iso() {
        assert_eq!(parse_timestamp("1388534400"), Some(1_388_534_400));
        assert_eq!(parse_timestamp("2014-01-01T00:00:00Z"), Some(1_388_534_400));
        assert_eq!(
            parse_timestamp("2014-01-01T01:00:00+01:00"),
            Some(1_388_534_400)
        );
        assert_eq!(parse_timestamp("2014-01-01 00:00:00"), Some(1_388_534_400));
        assert_eq!(parse_timestamp("2014-01-01"), Some(1_388_534_400));
        assert_eq!(parse_timestamp("not-a-date"), None);
        assert_eq!(parse_timestamp(""), None);
    }
}
