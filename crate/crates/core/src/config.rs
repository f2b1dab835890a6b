//! Run configuration, read from a TOML file.
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::ingest::{parse_timestamp, FeedDescriptor};
use crate::model::{Timestamp, UnitKind, Window};
use crate::ranking::ExcludedRank;
use crate::sensitivity::{default_variants, VariantSpec};
use crate::size::SizeEstimator;
use crate::uptime::StatKind;

/// How constituent rankings are weighted in the occurrence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    ExclusiveVolume,
}

impl Weighting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::ExclusiveVolume => "exclusive_volume",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeValue {
    Epoch(i64),
    Text(String),
}

impl TimeValue {
    fn resolve(&self) -> Option<Timestamp> {
        match self {
            TimeValue::Epoch(n) => Some(*n),
            TimeValue::Text(s) => parse_timestamp(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: TimeValue,
    pub end: TimeValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub routing: PathBuf,
    pub geoip: PathBuf,
    pub pdns: PathBuf,
    pub suffix_rules: PathBuf,
    #[serde(default)]
    pub allowlist: Option<PathBuf>,
    #[serde(default)]
    pub popularity: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Omitted: the default five-variant suite.
    #[serde(default)]
    pub variants: Option<Vec<VariantSpec>>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            top_n: default_top_n(),
            top_k: default_top_k(),
            variants: None,
        }
    }
}

fn default_top_n() -> usize {
    100
}
fn default_top_k() -> usize {
    20
}
fn default_country() -> String {
    "NL".into()
}
fn default_unit_kind() -> UnitKind {
    UnitKind::Pair2ldIp
}
fn default_estimators() -> Vec<SizeEstimator> {
    SizeEstimator::ALL.to_vec()
}
fn default_min_ips() -> u64 {
    1
}
fn default_min_samples() -> usize {
    5
}
fn default_popularity_cutoff() -> u32 {
    25_000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_country")]
    pub country: String,
    pub window: WindowConfig,
    #[serde(default = "default_unit_kind")]
    pub unit_kind: UnitKind,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<SizeEstimator>,
    #[serde(default)]
    pub weighting: Weighting,
    /// Rank used for providers with abuse but size 0.
    #[serde(default)]
    pub excluded_rank: ExcludedRank,
    #[serde(default = "default_min_ips")]
    pub min_ips: u64,
    #[serde(default = "default_min_samples")]
    pub min_samples: usize,
    #[serde(default)]
    pub stat_kind: StatKind,
    #[serde(default = "default_popularity_cutoff")]
    pub popularity_cutoff: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Evaluate independent stages on the rayon pool.
    #[serde(default = "default_true")]
    pub parallel: bool,
    pub inputs: Inputs,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default)]
    pub feeds: Vec<FeedDescriptor>,
    /// Directory relative paths resolve against; set by [`PipelineConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text)
            .map_err(|e| Error::config(Stage::Config, e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// Parse and validate a config file. Returns the config and its raw text.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let cfg = Self::from_toml(&text, &base)?;
        cfg.validate()?;
        Ok((cfg, text))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn window(&self) -> Result<Window> {
        let start = self
            .window
            .start
            .resolve()
            .ok_or_else(|| Error::config(Stage::Config, "window.start is not a timestamp"))?;
        let end = self
            .window
            .end
            .resolve()
            .ok_or_else(|| Error::config(Stage::Config, "window.end is not a timestamp"))?;
        Window::new(start, end)
            .ok_or_else(|| Error::config(Stage::Config, "window start must precede end"))
    }

    pub fn variants(&self) -> Vec<VariantSpec> {
        self.sensitivity
            .variants
            .clone()
            .unwrap_or_else(default_variants)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(Stage::Config, m));
        if self.feeds.is_empty() {
            return bad("at least one feed is required".into());
        }
        self.window()?;
        if self.estimators.is_empty() {
            return bad("at least one size estimator is required".into());
        }
        let uniq: BTreeSet<_> = self.estimators.iter().collect();
        if uniq.len() != self.estimators.len() {
            return bad("duplicate size estimator".into());
        }
        if crate::ingest::normalize_country(&self.country).as_deref() != Some(self.country.as_str()) {
            return bad(format!("country {:?} is not an upper-case ISO-3166 alpha-2 code", self.country));
        }
        if self.min_ips == 0 {
            return bad("min_ips must be at least 1".into());
        }
        if self.min_samples == 0 {
            return bad("min_samples must be at least 1".into());
        }
        let mut ids = BTreeSet::new();
        for f in &self.feeds {
            if f.id.is_empty() || !f.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return bad(format!("feed id {:?} must be [A-Za-z0-9_-]+", f.id));
            }
            if !ids.insert(&f.id) {
                return bad(format!("duplicate feed id {:?}", f.id));
            }
            if f.columns.observable.is_empty() || f.columns.first_seen.is_empty() {
                return bad(format!("feed {}: observable and first_seen columns are required", f.id));
            }
        }
        if self.sensitivity.top_n < 2 {
            return bad("sensitivity.top_n must be at least 2".into());
        }
        if self.sensitivity.top_k == 0 {
            return bad("sensitivity.top_k must be at least 1".into());
        }
        let mut names = BTreeSet::new();
        for v in self.variants() {
            v.validate()?;
            if !names.insert(v.name.clone()) {
                return bad(format!("duplicate variant name {:?}", v.name));
            }
        }
        Ok(())
    }

    /// Every input file the run reads, with a short role name.
    pub fn input_files(&self) -> Vec<(String, PathBuf)> {
        let mut out = vec![
            ("routing".to_string(), self.inputs.routing.clone()),
            ("geoip".to_string(), self.inputs.geoip.clone()),
            ("pdns".to_string(), self.inputs.pdns.clone()),
            ("suffix_rules".to_string(), self.inputs.suffix_rules.clone()),
        ];
        if let Some(p) = &self.inputs.allowlist {
            out.push(("allowlist".into(), p.clone()));
        }
        if let Some(p) = &self.inputs.popularity {
            out.push(("popularity".into(), p.clone()));
        }
        for f in &self.feeds {
            out.push((format!("feed:{}", f.id), f.path.clone()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[window]
start = "2014-01-01T00:00:00Z"
end = 1419984000

[inputs]
routing = "routing.csv"
geoip = "geoip.csv"
pdns = "pdns.csv"
suffix_rules = "suffix_rules.txt"

[[feeds]]
id = "shc"
path = "feeds/shc.csv"
abuse_type = "malicious-host"
[feeds.columns]
observable = "url"
first_seen = "first_seen"
"#;

    #[test]
    fn defaults() {
        let c = PipelineConfig::from_toml(MINIMAL, Path::new("/data")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.country, "NL");
        assert_eq!(c.unit_kind, UnitKind::Pair2ldIp);
        assert_eq!(c.estimators.len(), 3);
        assert_eq!(c.stat_kind, StatKind::Median);
        assert_eq!(c.min_samples, 5);
        assert_eq!(c.min_ips, 1);
        assert_eq!(c.weighting, Weighting::Uniform);
        assert_eq!(c.excluded_rank, ExcludedRank::Zero);
        assert_eq!(c.popularity_cutoff, 25_000);
        assert_eq!(c.variants().len(), 5);
        assert_eq!(c.window().unwrap().start, 1_388_534_400);
        assert_eq!(c.resolve(&c.feeds[0].path), PathBuf::from("/data/feeds/shc.csv"));
        assert!(!c.feeds[0].has_uptime());
    }

    #[test]
    fn zero_feeds_rejected() {
        let text = MINIMAL.split("[[feeds]]").next().unwrap();
        let c = PipelineConfig::from_toml(text, Path::new(".")).unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("at least one feed"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn bad_window_and_unknown_keys() {
        let text = MINIMAL.replace("end = 1419984000", "end = 1");
        let c = PipelineConfig::from_toml(&text, Path::new(".")).unwrap();
        assert!(c.validate().is_err());
        let text = format!("bogus = 1\n{MINIMAL}");
        assert!(PipelineConfig::from_toml(&text, Path::new(".")).is_err());
        let text = MINIMAL.replace("[window]", "estimators = []\n[window]");
        assert!(PipelineConfig::from_toml(&text, Path::new(".")).unwrap().validate().is_err());
    }
}
