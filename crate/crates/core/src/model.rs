//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeSet;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::suffix::{normalize_hostname, SuffixRuleSet};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

/// Closed analysis period `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    /// `None` unless `start < end`.
    pub fn new(start: Timestamp, end: Timestamp) -> Option<Window> {
        (start < end).then_some(Window { start, end })
    }

    /// Unbounded window, for callers that do not restrict by time.
    pub fn all() -> Window {
        Window {
            start: Timestamp::MIN,
            end: Timestamp::MAX,
        }
    }

    pub fn overlaps(&self, first: Timestamp, last: Timestamp) -> bool {
        first <= self.end && last >= self.start
    }
}

/// Autonomous system number; the proxy for a hosting provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Asn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let t = t
            .strip_prefix("AS")
            .or_else(|| t.strip_prefix("as"))
            .unwrap_or(t);
        match t.parse::<u32>() {
            Ok(0) => Err("ASN must be positive".into()),
            Ok(n) => Ok(Asn(n)),
            Err(_) => Err(format!("invalid ASN {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbuseType {
    MaliciousHost,
    Malware,
    BotnetCc,
    Phishing,
    TakedownRequest,
    ChildAbuse,
    Other,
}

impl AbuseType {
    pub fn as_str(&self) -> &'static str {
        match self {
            AbuseType::MaliciousHost => "malicious-host",
            AbuseType::Malware => "malware",
            AbuseType::BotnetCc => "botnet-cc",
            AbuseType::Phishing => "phishing",
            AbuseType::TakedownRequest => "takedown-request",
            AbuseType::ChildAbuse => "child-abuse",
            AbuseType::Other => "other",
        }
    }
}

impl FromStr for AbuseType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match norm.as_str() {
            "malicious-host" => AbuseType::MaliciousHost,
            "malware" => AbuseType::Malware,
            "botnet-cc" | "c2" | "cc" => AbuseType::BotnetCc,
            "phishing" => AbuseType::Phishing,
            "takedown-request" => AbuseType::TakedownRequest,
            "child-abuse" => AbuseType::ChildAbuse,
            "other" => AbuseType::Other,
            _ => return Err(format!("unknown abuse type {s:?}")),
        })
    }
}

impl fmt::Display for AbuseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a blacklist row points at.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Observable {
    Url(String),
    Fqdn(String),
    Ip(IpAddr),
}

impl Observable {
    /// Classify a raw feed value: IP literal, URL (has a scheme or a path), or bare hostname.
    pub fn classify(raw: &str) -> Option<Observable> {
        let t = raw.trim();
        if t.is_empty() {
            return None;
        }
        if let Ok(ip) = t.parse::<IpAddr>() {
            return Some(Observable::Ip(ip));
        }
        if t.contains("://") || t.contains('/') || t.contains('?') {
            return Some(Observable::Url(t.to_string()));
        }
        Some(Observable::Fqdn(t.to_string()))
    }
}

/// One blacklist observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbuseEvent {
    pub feed_id: String,
    pub observable: Observable,
    pub ip_hint: Option<IpAddr>,
    pub first_seen: Timestamp,
    pub last_seen: Option<Timestamp>,
    pub abuse_type: AbuseType,
}

impl AbuseEvent {
    pub fn new(
        feed_id: impl Into<String>,
        observable: Observable,
        ip_hint: Option<IpAddr>,
        first_seen: Timestamp,
        last_seen: Option<Timestamp>,
        abuse_type: AbuseType,
    ) -> Result<Self> {
        if let Some(last) = last_seen {
            if last < first_seen {
                return Err(Error::data(
                    Stage::Ingestion,
                    format!("last_seen {last} precedes first_seen {first_seen}"),
                ));
            }
        }
        match &observable {
            Observable::Url(s) | Observable::Fqdn(s) if s.trim().is_empty() => {
                return Err(Error::data(Stage::Ingestion, "empty observable"));
            }
            _ => {}
        }
        Ok(AbuseEvent {
            feed_id: feed_id.into(),
            observable,
            ip_hint,
            first_seen,
            last_seen,
            abuse_type,
        })
    }

    /// End of the observation span; events without a removal time are instantaneous.
    pub fn span_end(&self) -> Timestamp {
        self.last_seen.unwrap_or(self.first_seen)
    }

    /// Hostname carried by the event, if any (IP-literal URL hosts excluded).
    pub fn hostname(&self) -> Result<Option<String>> {
        match &self.observable {
            Observable::Ip(_) => Ok(None),
            Observable::Fqdn(h) => normalize_hostname(h).map(Some),
            Observable::Url(u) => {
                let parts = UrlParts::parse(u)?;
                match parts.host {
                    UrlHost::Name(h) => Ok(Some(h)),
                    UrlHost::Ip(_) => Ok(None),
                }
            }
        }
    }

    /// IP supplied directly by the feed: an IP observable, an IP-literal URL host, or the hint column.
    pub fn direct_ip(&self) -> Option<IpAddr> {
        match &self.observable {
            Observable::Ip(ip) => Some(*ip),
            Observable::Url(u) => match UrlParts::parse(u) {
                Ok(UrlParts {
                    host: UrlHost::Ip(ip),
                    ..
                }) => Some(ip),
                _ => self.ip_hint,
            },
            Observable::Fqdn(_) => self.ip_hint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UrlHost {
    Name(String),
    Ip(IpAddr),
}

/// A URL split into host and the verbatim path+query remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlParts {
    pub host: UrlHost,
    pub rest: String,
}

impl UrlParts {
    /// Scheme, userinfo, port and fragment are dropped; the host is lowercased;
    /// path and query are kept byte for byte.
    pub fn parse(raw: &str) -> Result<UrlParts> {
        let t = raw.trim();
        let after_scheme = match t.find("://") {
            Some(i) => &t[i + 3..],
            None => t,
        };
        let split = after_scheme
            .find(['/', '?', '#'])
            .unwrap_or(after_scheme.len());
        let (authority, rest) = after_scheme.split_at(split);
        let rest = match rest.find('#') {
            Some(i) => &rest[..i],
            None => rest,
        };
        let authority = match authority.rfind('@') {
            Some(i) => &authority[i + 1..],
            None => authority,
        };
        let host_str = if let Some(stripped) = authority.strip_prefix('[') {
            stripped.split(']').next().unwrap_or("")
        } else {
            match authority.rfind(':') {
                Some(i) if authority[i + 1..].chars().all(|c| c.is_ascii_digit()) => {
                    &authority[..i]
                }
                _ => authority,
            }
        };
        let host = match host_str.parse::<IpAddr>() {
            Ok(ip) => UrlHost::Ip(ip),
            Err(_) => UrlHost::Name(normalize_hostname(host_str)?),
        };
        Ok(UrlParts {
            host,
            rest: rest.to_string(),
        })
    }

    pub fn normalized(&self) -> String {
        let host = match &self.host {
            UrlHost::Name(h) => h.clone(),
            UrlHost::Ip(ip) => ip.to_string(),
        };
        format!("{host}{}", self.rest)
    }
}

/// How abuse is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    #[serde(rename = "pair_2ld_ip")]
    Pair2ldIp,
    PairFqdnIp,
    PairUrlIp,
    IpOnly,
}

impl UnitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnitKind::Pair2ldIp => "pair_2ld_ip",
            UnitKind::PairFqdnIp => "pair_fqdn_ip",
            UnitKind::PairUrlIp => "pair_url_ip",
            UnitKind::IpOnly => "ip_only",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pair_2ld_ip" => Ok(UnitKind::Pair2ldIp),
            "pair_fqdn_ip" => Ok(UnitKind::PairFqdnIp),
            "pair_url_ip" => Ok(UnitKind::PairUrlIp),
            "ip_only" => Ok(UnitKind::IpOnly),
            other => Err(format!("unknown unit kind {other:?}")),
        }
    }
}

/// Deduplicated unit of abuse.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbuseUnit {
    pub kind: UnitKind,
    pub name_part: Option<String>,
    pub ip_part: IpAddr,
}

impl AbuseUnit {
    pub fn ip_only(ip: IpAddr) -> Self {
        AbuseUnit {
            kind: UnitKind::IpOnly,
            name_part: None,
            ip_part: ip,
        }
    }
}

/// Derive the counting unit of an event using only the IP the feed itself supplied.
///
/// Returns `Ok(None)` when a required component is missing (no IP, or no name under a pair kind).
pub fn derive_abuse_unit(
    event: &AbuseEvent,
    kind: UnitKind,
    rules: &SuffixRuleSet,
) -> Result<Option<AbuseUnit>> {
    match event.direct_ip() {
        Some(ip) => derive_abuse_unit_with_ip(event, kind, rules, ip),
        None => Ok(None),
    }
}

/// Same as [`derive_abuse_unit`] with the IP component supplied externally (e.g. resolved via pDNS).
pub fn derive_abuse_unit_with_ip(
    event: &AbuseEvent,
    kind: UnitKind,
    rules: &SuffixRuleSet,
    ip: IpAddr,
) -> Result<Option<AbuseUnit>> {
    let name_part = match kind {
        UnitKind::IpOnly => None,
        UnitKind::Pair2ldIp => match event.hostname()? {
            Some(h) => Some(rules.extract_2ld(&h)?),
            None => return Ok(None),
        },
        UnitKind::PairFqdnIp => match event.hostname()? {
            Some(h) => Some(h),
            None => return Ok(None),
        },
        UnitKind::PairUrlIp => match &event.observable {
            Observable::Url(u) => Some(UrlParts::parse(u)?.normalized()),
            Observable::Fqdn(h) => Some(normalize_hostname(h)?),
            Observable::Ip(_) => return Ok(None),
        },
    };
    Ok(Some(AbuseUnit {
        kind,
        name_part,
        ip_part: ip,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provider {
    pub asn: Asn,
    pub label: Option<String>,
}

/// The set of providers competing in one ranking run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProviderUniverse {
    asns: BTreeSet<Asn>,
}

impl ProviderUniverse {
    pub fn new(asns: impl IntoIterator<Item = Asn>) -> Self {
        ProviderUniverse {
            asns: asns.into_iter().collect(),
        }
    }

    /// Number of providers, the worst attainable rank.
    pub fn size(&self) -> u32 {
        self.asns.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.asns.is_empty()
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.asns.contains(&asn)
    }

    pub fn iter(&self) -> impl Iterator<Item = Asn> + '_ {
        self.asns.iter().copied()
    }

    pub fn providers(&self) -> impl Iterator<Item = Provider> + '_ {
        self.asns.iter().map(|&asn| Provider { asn, label: None })
    }
}
