//! End-to-end orchestration: ingestion, abuse mapping, size mapping, normalization,
//! ranking, aggregation, uptime and sensitivity.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::aggregate::{borda_aggregate, rational_to_f64, weights_by_exclusive_volume, ScoreMap};
use crate::config::{PipelineConfig, Weighting};
use crate::error::{Error, Result, Stage};
use crate::ingest::{
    load_allowlist, load_feed, load_geoip, load_pdns, load_routing_snapshot, load_suffix_rules,
    Allowlist, FeedDescriptor, FeedQuality, GeoTable, PdnsStore, RoutingTable,
};
use crate::mapping::{
    apply_purity_filter, build_abuse_map, jurisdiction_universe, overlap_matrix,
    ranked_domain_report, AbuseMap, OverlapMatrix, PopularHits,
};
use crate::model::{AbuseEvent, ProviderUniverse, UnitKind, Window};
use crate::ranking::{apply_excluded_rank, normalize, rank, NormalizedMap, Ranking};
use crate::sensitivity::{run_variants, SensitivityRow};
use crate::size::{compute_size, SizeEstimator, SizeMap};
use crate::stats::{pearson, spearman};
use crate::suffix::SuffixRuleSet;
use crate::uptime::{provider_uptime, unit_uptimes, uptime_ranking_and_score, UnitUptimes, UptimeMap};

/// Immutable lookup stores shared by every stage.
#[derive(Debug, Clone)]
pub struct Stores {
    pub routing: RoutingTable,
    pub geo: GeoTable,
    pub pdns: PdnsStore,
    pub rules: SuffixRuleSet,
    pub allowlist: Allowlist,
}

/// A loaded feed after purity and window filtering.
#[derive(Debug, Clone)]
pub struct PreparedFeed {
    pub descriptor: FeedDescriptor,
    pub events: Vec<AbuseEvent>,
    pub quality: FeedQuality,
    pub purity_removed: u64,
    pub outside_window: u64,
}

/// Everything a pipeline run (benchmark or variant) reads.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub window: Window,
    pub stores: Stores,
    pub universe: ProviderUniverse,
    pub feeds: Vec<PreparedFeed>,
    pub sizes: BTreeMap<SizeEstimator, SizeMap>,
}

/// Occurrence metric for one specification.
#[derive(Debug, Clone)]
pub struct Occurrence {
    pub unit_kind: UnitKind,
    pub weighting: Weighting,
    pub maps: Vec<AbuseMap>,
    pub overlap: OverlapMatrix,
    /// Feed-major grid of (feed, estimator) cells.
    pub normalized: Vec<NormalizedMap>,
    pub rankings: Vec<Ranking>,
    pub feed_weights: Vec<BigRational>,
    pub scores: ScoreMap,
}

#[derive(Debug, Clone)]
pub struct UptimeResult {
    pub units: Vec<(String, UnitUptimes)>,
    pub maps: Vec<UptimeMap>,
    pub rankings: Vec<Ranking>,
    pub scores: ScoreMap,
}

impl Context {
    /// Load every input and build the shared stores.
    pub fn prepare(config: &PipelineConfig) -> Result<Context> {
        config.validate()?;
        let window = config.window()?;
        let parallel = config.parallel;
        let routing_path = config.resolve(&config.inputs.routing);
        let geo_path = config.resolve(&config.inputs.geoip);
        let pdns_path = config.resolve(&config.inputs.pdns);

        let load_routing = || load_routing_snapshot(&routing_path);
        let load_geo = || load_geoip(&geo_path);
        let load_dns = || load_pdns(&pdns_path);
        let (routing, (geo, pdns)) = if parallel {
            rayon::join(load_routing, || rayon::join(load_geo, load_dns))
        } else {
            (load_routing(), (load_geo(), load_dns()))
        };
        let routing = routing.map_err(|e| e.at(Stage::Ingestion))?;
        let geo = geo.map_err(|e| e.at(Stage::Ingestion))?;
        let pdns = pdns.map_err(|e| e.at(Stage::Ingestion))?;
        let rules = load_suffix_rules(&config.resolve(&config.inputs.suffix_rules))
            .map_err(|e| e.at(Stage::Ingestion))?;
        let allowlist = load_allowlist(
            config.inputs.allowlist.as_ref().map(|p| config.resolve(p)).as_deref(),
            config.inputs.popularity.as_ref().map(|p| config.resolve(p)).as_deref(),
        )
        .map_err(|e| e.at(Stage::Ingestion))?;
        let stores = Stores {
            routing,
            geo,
            pdns,
            rules,
            allowlist,
        };

        let universe = jurisdiction_universe(
            &stores.routing,
            &stores.geo,
            &config.country,
            config.min_ips as u128,
        )?;
        info!(providers = universe.size(), country = %config.country, "provider universe");

        let mut ctx = Context {
            config: config.clone(),
            window,
            stores,
            universe,
            feeds: Vec::new(),
            sizes: BTreeMap::new(),
        };

        let loaded = ctx.map_cells(&config.feeds, |d| {
            let mut d = d.clone();
            d.path = config.resolve(&d.path);
            let feed = load_feed(&d).map_err(|e| e.at(Stage::Ingestion))?;
            let total = feed.events.len();
            let (in_window, outside): (Vec<AbuseEvent>, Vec<AbuseEvent>) = feed
                .events
                .into_iter()
                .partition(|e| window.overlaps(e.first_seen, e.span_end()));
            let (kept, removed) =
                apply_purity_filter(in_window, &ctx.stores.allowlist, &ctx.stores.rules);
            debug_assert_eq!(kept.len() + removed.len() + outside.len(), total);
            Ok(PreparedFeed {
                descriptor: d,
                events: kept,
                quality: feed.quality,
                purity_removed: removed.len() as u64,
                outside_window: outside.len() as u64,
            })
        });
        ctx.feeds = loaded.into_iter().collect::<Result<Vec<_>>>()?;

        let sizes = ctx.map_cells(&SizeEstimator::ALL, |&e| {
            (
                e,
                compute_size(
                    e,
                    &ctx.universe,
                    &ctx.stores.routing,
                    &ctx.stores.pdns,
                    &ctx.stores.rules,
                    window,
                ),
            )
        });
        ctx.sizes = sizes.into_iter().collect();
        Ok(ctx)
    }

    /// Map over independent items, on the rayon pool unless running single-threaded.
    /// Output order always matches input order.
    pub fn map_cells<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if self.config.parallel {
            items.par_iter().map(f).collect()
        } else {
            items.iter().map(f).collect()
        }
    }

    pub fn abuse_maps(&self, kind: UnitKind) -> Vec<AbuseMap> {
        self.map_cells(&self.feeds, |f| {
            build_abuse_map(
                &f.events,
                &f.descriptor.id,
                kind,
                &self.stores.routing,
                &self.universe,
                &self.stores.pdns,
                &self.stores.rules,
            )
        })
    }

    /// Occurrence scores for one (unit kind, estimator set, weighting) specification.
    pub fn occurrence(
        &self,
        kind: UnitKind,
        estimators: &[SizeEstimator],
        weighting: Weighting,
    ) -> Result<Occurrence> {
        let maps = self.abuse_maps(kind);
        let overlap = overlap_matrix(&maps)?;
        let feed_weights = match weighting {
            Weighting::Uniform => vec![BigRational::one(); maps.len()],
            Weighting::ExclusiveVolume => weights_by_exclusive_volume(&overlap)?,
        };

        let cells: Vec<(usize, SizeEstimator)> = (0..maps.len())
            .flat_map(|f| estimators.iter().map(move |&e| (f, e)))
            .collect();
        let graded = self.map_cells(&cells, |&(f, e)| {
            let norm = normalize(&maps[f], &self.sizes[&e]);
            let mut rk = rank(&norm, &self.universe)?;
            apply_excluded_rank(&mut rk, &norm, self.config.excluded_rank);
            Ok((norm, rk))
        });
        let (normalized, rankings): (Vec<_>, Vec<_>) =
            graded.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let weights: Vec<BigRational> = cells.iter().map(|&(f, _)| feed_weights[f].clone()).collect();
        let scores = borda_aggregate(&rankings, Some(&weights), &self.universe)?;
        Ok(Occurrence {
            unit_kind: kind,
            weighting,
            maps,
            overlap,
            normalized,
            rankings,
            feed_weights,
            scores,
        })
    }

    /// Persistence metric over feeds with removal times; `None` when no feed has them.
    pub fn uptime(&self) -> Result<Option<UptimeResult>> {
        let feeds: Vec<&PreparedFeed> = self.feeds.iter().filter(|f| f.descriptor.has_uptime()).collect();
        if feeds.is_empty() {
            return Ok(None);
        }
        let per_feed = self.map_cells(&feeds, |f| {
            let units = unit_uptimes(
                &f.events,
                self.config.unit_kind,
                &self.stores.rules,
                &self.stores.pdns,
                self.window,
            );
            let map = provider_uptime(
                &f.descriptor.id,
                &units.uptimes,
                &self.stores.routing,
                &self.universe,
                self.config.stat_kind,
                self.config.min_samples,
            )?;
            Ok(((f.descriptor.id.clone(), units), map))
        });
        let (units, maps): (Vec<_>, Vec<_>) =
            per_feed.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let (rankings, scores) = uptime_ranking_and_score(&maps, &self.universe)?;
        Ok(Some(UptimeResult {
            units,
            maps,
            rankings,
            scores,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub role: String,
    /// Path as written in the config.
    pub path: String,
    pub sha256: String,
}

/// Everything a run produces; the report writer turns it into CSV files.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub context: Context,
    pub occurrence: Occurrence,
    pub uptime: Option<UptimeResult>,
    pub purity: Vec<PopularHits>,
    pub sensitivity: Vec<SensitivityRow>,
    /// Pearson and Spearman between occurrence and uptime scores.
    pub correlation: Option<(Option<f64>, Option<f64>)>,
    pub provenance: Vec<Provenance>,
    pub config_echo: String,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn universe(&self) -> &ProviderUniverse {
        &self.context.universe
    }
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Run every stage for `config`. `config_text` is echoed verbatim into the report.
pub fn run_pipeline(config: &PipelineConfig, config_text: &str) -> Result<RunReport> {
    let provenance = config
        .input_files()
        .into_iter()
        .map(|(role, p)| {
            Ok(Provenance {
                role,
                path: p.to_string_lossy().replace('\\', "/"),
                sha256: digest_file(&config.resolve(&p)).map_err(|e| e.at(Stage::Ingestion))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ctx = Context::prepare(config)?;
    let occurrence = ctx
        .occurrence(config.unit_kind, &config.estimators, config.weighting)
        .map_err(|e| e.at(Stage::Aggregation))?;
    let uptime = ctx.uptime().map_err(|e| e.at(Stage::Uptime))?;
    let purity = ranked_domain_report(
        &occurrence.maps,
        &ctx.stores.allowlist,
        &ctx.stores.rules,
        config.popularity_cutoff,
    );
    let sensitivity = run_variants(
        &ctx,
        &occurrence.scores,
        &config.variants(),
        config.sensitivity.top_n,
        config.sensitivity.top_k,
    );

    let mut warnings = Vec::new();
    let correlation = uptime.as_ref().map(|u| {
        let asns: Vec<_> = ctx.universe.iter().collect();
        let x: Vec<f64> = asns.iter().map(|&a| occurrence.scores.score_f64(a).unwrap()).collect();
        let y: Vec<f64> = asns.iter().map(|&a| u.scores.score_f64(a).unwrap()).collect();
        let p = pearson(&x, &y);
        let s = spearman(&x, &y);
        if let Err(e) = &p {
            warnings.push(format!("occurrence/uptime correlation undefined: {e}"));
        }
        (p.ok(), s.ok())
    });
    collect_warnings(&ctx, &occurrence, uptime.as_ref(), &sensitivity, &mut warnings);
    for w in &warnings {
        warn!("{w}");
    }

    Ok(RunReport {
        context: ctx,
        occurrence,
        uptime,
        purity,
        sensitivity,
        correlation,
        provenance,
        config_echo: config_text.to_string(),
        warnings,
    })
}

fn collect_warnings(
    ctx: &Context,
    occ: &Occurrence,
    uptime: Option<&UptimeResult>,
    sensitivity: &[SensitivityRow],
    out: &mut Vec<String>,
) {
    for f in &ctx.feeds {
        if f.quality.total_rows == 0 {
            out.push(format!("feed {} is empty", f.descriptor.id));
        }
    }
    for n in &occ.normalized {
        for asn in &n.excluded {
            out.push(format!(
                "AS{asn} has abuse in feed {} but {} size 0; excluded from that ranking",
                n.feed_id, n.estimator
            ));
        }
    }
    for (feed, w) in occ.overlap.feeds.iter().zip(&occ.feed_weights) {
        if w.is_zero() {
            out.push(format!("feed {feed} has no exclusive units; weight 0"));
        }
    }
    match uptime {
        None => out.push("no feed carries removal times; uptime metric not computed".into()),
        Some(u) => {
            for (feed, units) in &u.units {
                if units.censored > 0 {
                    out.push(format!(
                        "feed {feed}: {} units still listed at window end; their uptime is a lower bound",
                        units.censored
                    ));
                }
            }
            for m in &u.maps {
                if m.central.is_empty() {
                    out.push(format!(
                        "feed {}: no provider reaches {} uptime samples",
                        m.feed_id, ctx.config.min_samples
                    ));
                }
            }
        }
    }
    for row in sensitivity {
        if let Err(e) = &row.outcome {
            out.push(format!("variant {} failed: {e}", row.variant));
        }
    }
}

/// Scores as plain floats, worst first.
pub fn score_rows(scores: &ScoreMap) -> Vec<(crate::model::Asn, f64)> {
    scores.scores.iter().map(|(a, s)| (*a, rational_to_f64(s))).collect()
}
