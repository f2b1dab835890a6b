//! Alternate-specification runs compared against the benchmark ranking.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::aggregate::{rational_to_f64, ScoreMap};
use crate::config::Weighting;
use crate::error::{Error, Result, Stage};
use crate::model::{Asn, UnitKind};
use crate::pipeline::Context;
use crate::size::SizeEstimator;
use crate::stats::pearson;

/// One alternate specification. At most one dimension differs from the benchmark;
/// a variant overriding nothing reproduces the benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_kind: Option<UnitKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<SizeEstimator>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<Weighting>,
}

impl VariantSpec {
    pub fn identity(name: &str) -> Self {
        VariantSpec {
            name: name.into(),
            unit_kind: None,
            estimators: None,
            weighting: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(Stage::Config, m));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return bad(format!("variant name {:?} must be [A-Za-z0-9_-]+", self.name));
        }
        let varied = [
            self.unit_kind.is_some(),
            self.estimators.is_some(),
            self.weighting.is_some(),
        ]
        .into_iter()
        .filter(|&b| b)
        .count();
        if varied > 1 {
            return bad(format!("variant {} varies more than one dimension", self.name));
        }
        if let Some(e) = &self.estimators {
            let uniq: BTreeSet<_> = e.iter().collect();
            if e.is_empty() || uniq.len() != e.len() {
                return bad(format!("variant {}: estimator list empty or duplicated", self.name));
            }
        }
        Ok(())
    }
}

/// Unit-of-abuse, each single size estimator, and exclusive-volume weighting.
pub fn default_variants() -> Vec<VariantSpec> {
    let mut v = vec![VariantSpec {
        unit_kind: Some(UnitKind::IpOnly),
        ..VariantSpec::identity("ip_only_unit")
    }];
    for e in SizeEstimator::ALL {
        v.push(VariantSpec {
            estimators: Some(vec![e]),
            ..VariantSpec::identity(&format!("{e}_only"))
        });
    }
    v.push(VariantSpec {
        weighting: Some(Weighting::ExclusiveVolume),
        ..VariantSpec::identity("exclusive_volume_weighting")
    });
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub variant: String,
    pub pearson_top_n: f64,
    pub n: usize,
    pub top_k_common: usize,
    pub k: usize,
}

/// Pearson over the benchmark's `n` worst providers, plus shared membership of both top-`k` lists.
/// Ties in either ordering break by ascending ASN.
pub fn compare_to_benchmark(
    variant: &str,
    benchmark: &ScoreMap,
    alt: &ScoreMap,
    n: usize,
    k: usize,
) -> Result<ComparisonResult> {
    let r = benchmark.len();
    if n < 2 {
        return Err(Error::config(Stage::Sensitivity, "top-n must be at least 2"));
    }
    if n > r || k > r {
        return Err(Error::config(
            Stage::Sensitivity,
            format!("top-n {n} / top-k {k} exceed the {r} ranked providers"),
        ));
    }
    let bench_set: BTreeSet<Asn> = benchmark.order().collect();
    let alt_set: BTreeSet<Asn> = alt.order().collect();
    if bench_set != alt_set {
        return Err(Error::data(
            Stage::Sensitivity,
            "benchmark and variant rank different providers",
        ));
    }
    let top: Vec<Asn> = benchmark.order().take(n).collect();
    let x: Vec<f64> = top.iter().map(|&a| benchmark.score_f64(a).unwrap()).collect();
    let y: Vec<f64> = top.iter().map(|&a| alt.score_f64(a).unwrap()).collect();
    let r = pearson(&x, &y).map_err(|e| Error::data(Stage::Sensitivity, e.to_string()))?;
    let bk: BTreeSet<Asn> = benchmark.order().take(k).collect();
    let common = alt.order().take(k).filter(|a| bk.contains(a)).count();
    Ok(ComparisonResult {
        variant: variant.to_string(),
        pearson_top_n: r,
        n,
        top_k_common: common,
        k,
    })
}

/// Outcome of one variant; failures are recorded and do not stop the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub variant: String,
    pub n: usize,
    pub k: usize,
    pub outcome: std::result::Result<ComparisonResult, String>,
}

/// Run every variant through the occurrence pipeline and compare with `benchmark`.
/// Rows come back sorted by variant name.
pub fn run_variants(
    ctx: &Context,
    benchmark: &ScoreMap,
    variants: &[VariantSpec],
    top_n: usize,
    top_k: usize,
) -> Vec<SensitivityRow> {
    let r = benchmark.len();
    let n = top_n.min(r);
    let k = top_k.min(r);
    let mut rows: Vec<SensitivityRow> = ctx.map_cells(variants, |v| {
        let outcome = ctx
            .occurrence(
                v.unit_kind.unwrap_or(ctx.config.unit_kind),
                v.estimators.as_deref().unwrap_or(&ctx.config.estimators),
                v.weighting.unwrap_or(ctx.config.weighting),
            )
            .and_then(|occ| compare_to_benchmark(&v.name, benchmark, &occ.scores, n, k))
            .map_err(|e| e.to_string());
        SensitivityRow {
            variant: v.name.clone(),
            n,
            k,
            outcome,
        }
    });
    rows.sort_by(|a, b| a.variant.cmp(&b.variant));
    rows
}

/// Score vector restricted to the given providers, in order.
pub fn score_vector(scores: &ScoreMap, asns: &[Asn]) -> Vec<f64> {
    asns.iter()
        .map(|&a| scores.score(a).map(rational_to_f64).unwrap_or(f64::NAN))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use std::collections::BTreeMap;

    fn scores(v: &[(u32, i64)]) -> ScoreMap {
        let mut s: Vec<(Asn, BigRational)> = v
            .iter()
            .map(|&(a, x)| (Asn(a), BigRational::new(BigInt::from(x), BigInt::from(100))))
            .collect();
        s.sort_by(|(a1, s1), (a2, s2)| s2.cmp(s1).then(a1.cmp(a2)));
        ScoreMap {
            scores: s,
            constituent: vec![],
            ranks: BTreeMap::new(),
            substitutions: vec![],
        }
    }

    #[test]
    fn identity_and_reversal() {
        let b = scores(&[(1, 90), (2, 70), (3, 50), (4, 30), (5, 10)]);
        let c = compare_to_benchmark("id", &b, &b, 5, 3).unwrap();
        assert_eq!(c.pearson_top_n, 1.0);
        assert_eq!(c.top_k_common, 3);
        let rev = scores(&[(1, 10), (2, 30), (3, 50), (4, 70), (5, 90)]);
        let c = compare_to_benchmark("rev", &b, &rev, 5, 2).unwrap();
        assert_eq!(c.top_k_common, 0);
        assert!((c.pearson_top_n + 1.0).abs() < 1e-12);
    }

    #[test]
    fn five_provider_fixture() {
        // benchmark order 1,2,3,4,5; top-3 = {1,2,3}
        let b = scores(&[(1, 90), (2, 80), (3, 60), (4, 40), (5, 20)]);
        // alt order 2,4,1,3,5 with a tie between 1 and 3 broken by ASN
        let alt = scores(&[(1, 50), (2, 95), (3, 50), (4, 70), (5, 10)]);
        let c = compare_to_benchmark("v", &b, &alt, 4, 3).unwrap();
        // x = (.9,.8,.6,.4), y = (.5,.95,.5,.7): brute-force r below
        let (x, y) = ([0.9, 0.8, 0.6, 0.4], [0.5, 0.95, 0.5, 0.7]);
        let mx = x.iter().sum::<f64>() / 4.0;
        let my = y.iter().sum::<f64>() / 4.0;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        assert!((c.pearson_top_n - cov / (vx * vy).sqrt()).abs() < 1e-12);
        assert!((c.pearson_top_n - 0.008_797_351_340_286_745).abs() < 1e-12);
        // alt top-3 = {2, 4, 1}; shared with {1, 2, 3}: 2
        assert_eq!(c.top_k_common, 2);
    }

    #[test]
    fn errors() {
        let b = scores(&[(1, 90), (2, 70), (3, 50)]);
        assert!(compare_to_benchmark("x", &b, &b, 1, 1).is_err());
        assert!(compare_to_benchmark("x", &b, &b, 4, 1).is_err());
        let other = scores(&[(1, 90), (2, 70), (9, 50)]);
        assert!(compare_to_benchmark("x", &b, &other, 3, 1).is_err());
        let flat = scores(&[(1, 50), (2, 50), (3, 50)]);
        assert!(compare_to_benchmark("x", &b, &flat, 3, 1).is_err());
    }

    #[test]
    fn variant_validation() {
        assert!(default_variants().iter().all(|v| v.validate().is_ok()));
        let names: Vec<String> = default_variants().into_iter().map(|v| v.name).collect();
        assert_eq!(
            names,
            [
                "ip_only_unit",
                "advertised_ips_only",
                "hosting_ips_only",
                "hosted_2lds_only",
                "exclusive_volume_weighting"
            ]
        );
        let two = VariantSpec {
            unit_kind: Some(UnitKind::IpOnly),
            weighting: Some(Weighting::Uniform),
            ..VariantSpec::identity("two")
        };
        assert!(two.validate().is_err());
        assert!(VariantSpec::identity("bad name").validate().is_err());
    }
}
