use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::{parse_err, read_rows, read_text};
use crate::error::Result;
use crate::suffix::{normalize_hostname, SuffixRuleSet};

/// Known false-positive domains plus a popularity ranking used for purity review.
#[derive(Debug, Clone, Default)]
pub struct Allowlist {
    pub entries: BTreeSet<String>,
    popularity: Vec<(u32, String)>,
    rank_of: HashMap<String, u32>,
}

impl Allowlist {
    pub fn new(entries: impl IntoIterator<Item = String>, popularity: impl IntoIterator<Item = (u32, String)>) -> Self {
        let entries = entries.into_iter().map(|e| e.to_ascii_lowercase()).collect();
        let mut popularity: Vec<(u32, String)> = popularity
            .into_iter()
            .map(|(r, d)| (r, d.to_ascii_lowercase()))
            .collect();
        popularity.sort();
        let mut rank_of = HashMap::with_capacity(popularity.len());
        for (r, d) in &popularity {
            rank_of.entry(d.clone()).or_insert(*r);
        }
        Allowlist {
            entries,
            popularity,
            rank_of,
        }
    }

    pub fn contains(&self, domain: &str) -> bool {
        self.entries.contains(domain)
    }

    pub fn popularity_list(&self) -> &[(u32, String)] {
        &self.popularity
    }

    /// Popularity rank of `domain` when it is within the top `cutoff`.
    pub fn popularity_rank(&self, domain: &str, cutoff: u32) -> Option<u32> {
        self.rank_of.get(domain).copied().filter(|&r| r <= cutoff)
    }
}

/// Allowlist: one 2LD per line. Popularity list: `rank,2ld`. Either may be absent.
pub fn load_allowlist(allowlist: Option<&Path>, popularity: Option<&Path>) -> Result<Allowlist> {
    let mut entries = Vec::new();
    if let Some(path) = allowlist {
        for (i, line) in read_text(path)?.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let d = normalize_hostname(t).map_err(|e| parse_err(path, i as u64 + 1, e.to_string()))?;
            entries.push(d);
        }
    }
    let mut ranked = Vec::new();
    if let Some(path) = popularity {
        let (_, rows) = read_rows(path, "rank")?;
        for row in rows {
            if row.fields.len() < 2 {
                return Err(parse_err(path, row.line, "expected rank,2ld"));
            }
            let rank: u32 = row.fields[0]
                .parse()
                .map_err(|_| parse_err(path, row.line, format!("invalid rank {:?}", row.fields[0])))?;
            let d = normalize_hostname(&row.fields[1]).map_err(|e| parse_err(path, row.line, e.to_string()))?;
            ranked.push((rank, d));
        }
    }
    Ok(Allowlist::new(entries, ranked))
}

pub fn load_suffix_rules(path: &Path) -> Result<SuffixRuleSet> {
    Ok(SuffixRuleSet::parse(&read_text(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_allowlist_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("allow.txt");
        std::fs::write(&p, "").unwrap();
        let a = load_allowlist(Some(&p), None).unwrap();
        assert!(a.entries.is_empty());
        assert!(a.popularity_list().is_empty());
    }

    #[test]
    fn popularity_ranks_and_cutoff() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("allow.txt");
        let p = dir.path().join("pop.csv");
        std::fs::write(&a, "# shorteners\nGoo.gl\nbit.ly\n").unwrap();
        std::fs::write(&p, "rank,2ld\n1,google.com\n30,msn.com\n30000,tail.com\n").unwrap();
        let al = load_allowlist(Some(&a), Some(&p)).unwrap();
        assert!(al.contains("goo.gl"));
        assert_eq!(al.popularity_rank("msn.com", 25_000), Some(30));
        assert_eq!(al.popularity_rank("tail.com", 25_000), None);
    }
}
