//! Public-suffix matching and registrable-domain (2LD) extraction.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Public-suffix rules in the usual list syntax: plain rules, `*.` wildcards, `!` exceptions.
///
/// The implicit `*` rule always applies, so an unknown TLD behaves as a one-label suffix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuffixRuleSet {
    exact: HashSet<String>,
    wildcard: HashSet<String>,
    exception: HashSet<String>,
}

impl SuffixRuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse list text. Comments (`//`) and blank lines are ignored; only the first
    /// whitespace-separated token of a line is read.
    pub fn parse(text: &str) -> Self {
        let mut set = SuffixRuleSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            if let Some(rule) = line.split_whitespace().next() {
                set.insert(rule);
            }
        }
        set
    }

    pub fn insert(&mut self, rule: &str) {
        let rule = rule.trim().trim_end_matches('.').to_ascii_lowercase();
        if let Some(r) = rule.strip_prefix('!') {
            self.exception.insert(r.to_string());
        } else if let Some(r) = rule.strip_prefix("*.") {
            self.wildcard.insert(r.to_string());
        } else if rule == "*" || rule.is_empty() {
            // implicit default rule
        } else {
            self.exact.insert(rule);
        }
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.wildcard.len() + self.exception.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of labels of the public suffix of `labels`.
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        let mut best = 1;
        for k in 1..=n {
            let candidate = labels[n - k..].join(".");
            if self.exception.contains(&candidate) {
                return k - 1;
            }
            if self.exact.contains(&candidate) {
                best = best.max(k);
            }
            if k >= 2 && self.wildcard.contains(&labels[n - k + 1..].join(".")) {
                best = best.max(k);
            }
        }
        best
    }

    /// Registrable domain: the longest matching public suffix plus one label.
    pub fn extract_2ld(&self, fqdn: &str) -> Result<String> {
        let host = normalize_hostname(fqdn)?;
        let labels: Vec<&str> = host.split('.').collect();
        let suffix = self.suffix_len(&labels);
        if suffix >= labels.len() {
            return Err(Error::NoRegistrableDomain(host));
        }
        Ok(labels[labels.len() - suffix - 1..].join("."))
    }
}

/// Lowercase, strip a trailing dot and validate label syntax.
pub fn normalize_hostname(raw: &str) -> Result<String> {
    let host = raw.trim().trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() || host.len() > 253 {
        return Err(Error::Hostname {
            label: host.clone(),
            host,
        });
    }
    for label in host.split('.') {
        let ok = !label.is_empty()
            && label.len() <= 63
            && label
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if !ok {
            return Err(Error::Hostname {
                host: host.clone(),
                label: label.to_string(),
            });
        }
    }
    Ok(host)
}
