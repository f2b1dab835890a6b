use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_timestamp, read_text};
use crate::error::{Error, Result, Stage};
use crate::model::{AbuseEvent, AbuseType, Observable};

/// Maps schema roles to column names in a feed file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub observable: String,
    pub first_seen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_seen: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abuse_type: Option<String>,
    /// Resolved IP supplied next to a hostname or URL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedDescriptor {
    pub id: String,
    pub path: PathBuf,
    pub columns: ColumnMap,
    /// Category applied when the feed has no abuse-type column.
    #[serde(default = "default_abuse_type")]
    pub abuse_type: AbuseType,
}

fn default_abuse_type() -> AbuseType {
    AbuseType::Other
}

impl FeedDescriptor {
    /// A feed carries removal times exactly when its `last_seen` column is mapped.
    pub fn has_uptime(&self) -> bool {
        self.columns.last_seen.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRow {
    pub line: u64,
    pub reason: String,
}

/// Per-feed row accounting: `accepted + skipped.len() == total_rows`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedQuality {
    pub feed_id: String,
    pub total_rows: u64,
    pub accepted: u64,
    pub skipped: Vec<SkippedRow>,
}

#[derive(Debug, Clone)]
pub struct LoadedFeed {
    pub events: Vec<AbuseEvent>,
    pub quality: FeedQuality,
}

fn column(headers: &csv::StringRecord, name: &str, feed: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            Error::config(
                Stage::Ingestion,
                format!("feed {feed}: column {name:?} not found in header"),
            )
        })
}

/// Read one feed into events. Invalid rows are skipped and recorded; a file whose data
/// rows are all invalid is a configuration error.
pub fn load_feed(descriptor: &FeedDescriptor) -> Result<LoadedFeed> {
    let feed = descriptor.id.as_str();
    let path: &Path = &descriptor.path;
    let text = read_text(path)?;
    let tab = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"))
        || text.lines().next().is_some_and(|l| l.contains('\t'));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .delimiter(if tab { b'\t' } else { b',' })
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::config(Stage::Ingestion, format!("feed {feed}: {e}")))?
        .clone();
    let cols = &descriptor.columns;
    let obs_i = column(&headers, &cols.observable, feed)?;
    let first_i = column(&headers, &cols.first_seen, feed)?;
    let last_i = cols.last_seen.as_deref().map(|c| column(&headers, c, feed)).transpose()?;
    let type_i = cols.abuse_type.as_deref().map(|c| column(&headers, c, feed)).transpose()?;
    let ip_i = cols.ip.as_deref().map(|c| column(&headers, c, feed)).transpose()?;

    let mut quality = FeedQuality {
        feed_id: feed.to_string(),
        ..Default::default()
    };
    let mut events = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line_fallback = i as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                quality.total_rows += 1;
                quality.skipped.push(SkippedRow {
                    line: e.position().map(|p| p.line()).unwrap_or(line_fallback),
                    reason: "unreadable row".into(),
                });
                continue;
            }
        };
        if rec.iter().all(str::is_empty) {
            continue;
        }
        quality.total_rows += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(line_fallback);
        match parse_row(&rec, feed, descriptor.abuse_type, obs_i, first_i, last_i, type_i, ip_i) {
            Ok(ev) => {
                quality.accepted += 1;
                events.push(ev);
            }
            Err(reason) => quality.skipped.push(SkippedRow {
                line,
                reason: reason.into(),
            }),
        }
    }
    if quality.total_rows > 0 && quality.accepted == 0 {
        return Err(Error::config(
            Stage::Ingestion,
            format!("feed {feed}: zero valid rows out of {}", quality.total_rows),
        ));
    }
    Ok(LoadedFeed { events, quality })
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    rec: &csv::StringRecord,
    feed: &str,
    default_type: AbuseType,
    obs_i: usize,
    first_i: usize,
    last_i: Option<usize>,
    type_i: Option<usize>,
    ip_i: Option<usize>,
) -> std::result::Result<AbuseEvent, &'static str> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let observable = Observable::classify(field(obs_i)).ok_or("empty observable")?;
    let first_seen = parse_timestamp(field(first_i)).ok_or("bad timestamp")?;
    let last_seen = match last_i {
        Some(i) if !field(i).is_empty() => Some(parse_timestamp(field(i)).ok_or("bad timestamp")?),
        _ => None,
    };
    let abuse_type = match type_i {
        Some(i) if !field(i).is_empty() => field(i).parse().map_err(|_| "bad abuse type")?,
        _ => default_type,
    };
    let ip_hint = match ip_i {
        Some(i) if !field(i).is_empty() => Some(field(i).parse::<IpAddr>().map_err(|_| "bad ip")?),
        _ => None,
    };
    AbuseEvent::new(feed, observable, ip_hint, first_seen, last_seen, abuse_type)
        .map_err(|_| "last_seen before first_seen")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor(dir: &Path, body: &str, last_seen: bool) -> FeedDescriptor {
        let p = dir.join("feed.csv");
        std::fs::write(&p, body).unwrap();
        FeedDescriptor {
            id: "f1".into(),
            path: p,
            columns: ColumnMap {
                observable: "url".into(),
                first_seen: "first_seen".into(),
                last_seen: last_seen.then(|| "last_seen".into()),
                abuse_type: Some("type".into()),
                ip: Some("ip".into()),
            },
            abuse_type: AbuseType::Other,
        }
    }

    const CLEAN: &str = "url,ip,first_seen,last_seen,type\n\
        http://a.example.com/x,1.2.3.4,2014-01-01T00:00:00Z,2014-01-02T00:00:00Z,phishing\n\
        b.example.net,,1388534400,,malware\n\
        5.6.7.8,,1388534400,1388538000,botnet-cc\n";

    #[test]
    fn clean_file_loads_every_row() {
        let dir = tempfile::tempdir().unwrap();
        let f = load_feed(&descriptor(dir.path(), CLEAN, true)).unwrap();
        assert_eq!(f.events.len(), 3);
        assert!(f.quality.skipped.is_empty());
        assert_eq!(f.quality.total_rows, 3);
        assert_eq!(f.events[0].last_seen, Some(1_388_620_800));
        assert_eq!(f.events[0].abuse_type, AbuseType::Phishing);
        assert_eq!(f.events[0].ip_hint, Some("1.2.3.4".parse().unwrap()));
    }

    #[test]
    fn bad_timestamp_row_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let body = CLEAN.replace("b.example.net,,1388534400", "b.example.net,,not-a-date");
        let f = load_feed(&descriptor(dir.path(), &body, true)).unwrap();
        assert_eq!(f.events.len(), 2);
        assert_eq!(
            f.quality.skipped,
            vec![SkippedRow {
                line: 3,
                reason: "bad timestamp".into()
            }]
        );
        assert_eq!(
            f.quality.accepted + f.quality.skipped.len() as u64,
            f.quality.total_rows
        );
    }

    #[test]
    fn feed_without_uptime_has_no_last_seen() {
        let dir = tempfile::tempdir().unwrap();
        let d = descriptor(dir.path(), CLEAN, false);
        assert!(!d.has_uptime());
        let f = load_feed(&d).unwrap();
        assert!(f.events.iter().all(|e| e.last_seen.is_none()));
    }

    #[test]
    fn fatal_cases() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = descriptor(dir.path(), CLEAN, true);
        d.columns.observable = "missing".into();
        assert!(matches!(load_feed(&d), Err(Error::Config { .. })));

        let d = descriptor(dir.path(), "url,ip,first_seen,last_seen,type\nx.com,,nope,,\n", true);
        assert!(matches!(load_feed(&d), Err(Error::Config { .. })));

        let mut d = descriptor(dir.path(), CLEAN, true);
        d.path = dir.path().join("absent.csv");
        assert!(load_feed(&d).is_err());
    }

    #[test]
    fn header_only_file_is_an_empty_feed() {
        let dir = tempfile::tempdir().unwrap();
        let f = load_feed(&descriptor(dir.path(), "url,ip,first_seen,last_seen,type\n", true)).unwrap();
        assert!(f.events.is_empty());
    }
}
