//! CSV report emission. Every file has a one-line header and `\n` line endings.

use std::fs;
use std::path::{Path, PathBuf};

use crate::aggregate::{rational_to_f64, ScoreMap};
use crate::error::{Error, Result, Stage};
use crate::mapping::DropReason;
use crate::pipeline::RunReport;
use crate::size::SizeEstimator;

const NOTES: &str = "\
Ranks are ordinal: a rank difference says nothing about the size of the difference in normalized abuse.
Providers with abuse but size 0 under an estimator are left out of that ranking and aggregated at its zero-abuse rank.
Occurrence and uptime scores are computed independently and never combined.
";

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn write_csv<I>(dir: &Path, name: &str, header: &[String], rows: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| Error::data(Stage::Report, format!("{}: {e}", path.display())))?;
    let werr = |e: csv::Error| Error::data(Stage::Report, format!("{}: {e}", path.display()));
    w.write_record(header).map_err(werr)?;
    for row in rows {
        w.write_record(&row).map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn score_table(dir: &Path, name: &str, scores: &ScoreMap) -> Result<PathBuf> {
    let mut header = strs(&["asn", "score"]);
    header.extend(
        scores
            .constituent
            .iter()
            .map(|c| format!("rank:{}:{}", c.feed_id, c.measure)),
    );
    let rows = scores.scores.iter().map(|(asn, s)| {
        let mut row = vec![asn.to_string(), fmt6(rational_to_f64(s))];
        row.extend(scores.ranks[asn].iter().map(u32::to_string));
        row
    });
    write_csv(dir, name, &header, rows)
}

/// Write every report file into `dir` (created if missing). Returns the paths written.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ctx = &report.context;
    let occ = &report.occurrence;
    let mut written = Vec::new();

    for m in &occ.maps {
        let rows = m.units_by_provider.iter().flat_map(|(asn, units)| {
            units.iter().map(move |u| {
                vec![
                    asn.to_string(),
                    u.kind.to_string(),
                    u.name_part.clone().unwrap_or_default(),
                    u.ip_part.to_string(),
                ]
            })
        });
        written.push(write_csv(
            dir,
            &format!("abuse_map_{}.csv", m.feed_id),
            &strs(&["asn", "unit_kind", "name_part", "ip_part"]),
            rows,
        )?);
    }

    let ov = &occ.overlap;
    let mut header = strs(&["feed", "total", "exclusive", "exclusive_pct"]);
    header.extend(ov.feeds.iter().map(|f| format!("count:{f}")));
    header.extend(ov.feeds.iter().map(|f| format!("pct:{f}")));
    let mut rows: Vec<Vec<String>> = (0..ov.feeds.len())
        .map(|i| {
            let pct = |n: u64| {
                if ov.totals[i] == 0 {
                    String::new()
                } else {
                    format!("{:.2}", 100.0 * n as f64 / ov.totals[i] as f64)
                }
            };
            let mut row = vec![
                ov.feeds[i].clone(),
                ov.totals[i].to_string(),
                ov.exclusive[i].to_string(),
                pct(ov.exclusive[i]),
            ];
            row.extend(ov.pairwise[i].iter().map(u64::to_string));
            row.extend((0..ov.feeds.len()).map(|j| {
                ov.row_percent(i, j)
                    .map(|p| format!("{p:.2}"))
                    .unwrap_or_default()
            }));
            row
        })
        .collect();
    let mut all = vec![
        "*all*".to_string(),
        ov.union_size.to_string(),
        ov.exclusive.iter().sum::<u64>().to_string(),
        ov.exclusivity_fraction()
            .map(|f| format!("{:.2}", 100.0 * f))
            .unwrap_or_default(),
    ];
    all.resize(header.len(), String::new());
    rows.push(all);
    written.push(write_csv(dir, "overlap_matrix.csv", &header, rows)?);

    for (est, sizes) in &ctx.sizes {
        written.push(write_csv(
            dir,
            &format!("size_{est}.csv"),
            &strs(&["asn", "size"]),
            sizes.sizes.iter().map(|(a, s)| vec![a.to_string(), s.to_string()]),
        )?);
    }

    for (norm, rk) in occ.normalized.iter().zip(&occ.rankings) {
        let map = occ.maps.iter().find(|m| m.feed_id == norm.feed_id).expect("feed map");
        let sizes = &ctx.sizes[&norm.estimator];
        let rows = ctx.universe.iter().map(|asn| {
            let (value, status) = match norm.values.get(&asn) {
                Some(v) => (format!("{:.12e}", v.to_f64()), "ok"),
                None => (String::new(), "excluded"),
            };
            vec![
                asn.to_string(),
                map.unit_count(asn).to_string(),
                sizes.size(asn).to_string(),
                value,
                status.to_string(),
            ]
        });
        written.push(write_csv(
            dir,
            &format!("normalized_{}_{}.csv", norm.feed_id, norm.estimator),
            &strs(&["asn", "units", "size", "value", "status"]),
            rows,
        )?);
        written.push(write_csv(
            dir,
            &format!("ranking_{}_{}.csv", rk.feed_id, rk.measure),
            &strs(&["asn", "rank"]),
            rk.ranks.iter().map(|(a, k)| vec![a.to_string(), k.to_string()]),
        )?);
    }

    written.push(score_table(dir, "scores_occurrence.csv", &occ.scores)?);

    if let Some(up) = &report.uptime {
        for m in &up.maps {
            let rows = m.durations.iter().map(|(asn, d)| {
                vec![
                    asn.to_string(),
                    d.len().to_string(),
                    m.central
                        .get(asn)
                        .map(|c| format!("{:.1}", c.to_f64()))
                        .unwrap_or_default(),
                ]
            });
            written.push(write_csv(
                dir,
                &format!("uptime_{}.csv", m.feed_id),
                &strs(&["asn", "n_units", "central_seconds"]),
                rows,
            )?);
        }
        written.push(score_table(dir, "scores_uptime.csv", &up.scores)?);
    }

    let rows = report.sensitivity.iter().map(|row| match &row.outcome {
        Ok(c) => vec![
            c.variant.clone(),
            fmt6(c.pearson_top_n),
            c.n.to_string(),
            c.top_k_common.to_string(),
            c.k.to_string(),
        ],
        Err(_) => vec![
            row.variant.clone(),
            "NA".into(),
            row.n.to_string(),
            "NA".into(),
            row.k.to_string(),
        ],
    });
    written.push(write_csv(
        dir,
        "sensitivity.csv",
        &strs(&["variant", "pearson_top_n", "n", "top_k_common", "k"]),
        rows,
    )?);

    let mut quality = Vec::new();
    let mut drops = Vec::new();
    for (f, m) in ctx.feeds.iter().zip(&occ.maps) {
        let id = &f.descriptor.id;
        for s in &f.quality.skipped {
            quality.push(vec![id.clone(), s.line.to_string(), s.reason.clone()]);
        }
        drops.push(vec![id.clone(), "ingestion".into(), "invalid-row".into(), f.quality.skipped.len().to_string()]);
        drops.push(vec![id.clone(), "window".into(), "outside-window".into(), f.outside_window.to_string()]);
        drops.push(vec![id.clone(), "purity".into(), "allowlisted".into(), f.purity_removed.to_string()]);
        for r in DropReason::ALL {
            drops.push(vec![
                id.clone(),
                "abuse-mapping".into(),
                r.to_string(),
                m.dropped.get(&r).copied().unwrap_or(0).to_string(),
            ]);
        }
    }
    if let Some(up) = &report.uptime {
        for (id, u) in &up.units {
            drops.push(vec![id.clone(), "uptime".into(), "no-last-seen".into(), u.no_last_seen.to_string()]);
            for r in DropReason::ALL {
                drops.push(vec![
                    id.clone(),
                    "uptime".into(),
                    r.to_string(),
                    u.unresolved.get(&r).copied().unwrap_or(0).to_string(),
                ]);
            }
        }
    }
    written.push(write_csv(dir, "quality.csv", &strs(&["feed", "line", "reason"]), quality)?);
    written.push(write_csv(dir, "drops.csv", &strs(&["feed", "stage", "reason", "count"]), drops)?);

    written.push(write_csv(
        dir,
        "purity_summary.csv",
        &strs(&["feed", "popular_units", "total_units"]),
        report
            .purity
            .iter()
            .map(|p| vec![p.feed_id.clone(), p.unit_hits.to_string(), p.total_units.to_string()]),
    )?);
    written.push(write_csv(
        dir,
        "purity_report.csv",
        &strs(&["feed", "domain", "popularity_rank"]),
        report.purity.iter().flat_map(|p| {
            p.domains
                .iter()
                .map(move |(d, r)| vec![p.feed_id.clone(), d.clone(), r.to_string()])
        }),
    )?);

    if let Some((p, s)) = report.correlation {
        let f = |v: Option<f64>| v.map(fmt6).unwrap_or_else(|| "NA".into());
        written.push(write_csv(
            dir,
            "occurrence_uptime_correlation.csv",
            &strs(&["statistic", "value"]),
            [vec!["pearson".into(), f(p)], vec!["spearman".into(), f(s)]],
        )?);
    }

    written.push(write_csv(
        dir,
        "provenance.csv",
        &strs(&["role", "path", "sha256"]),
        report
            .provenance
            .iter()
            .map(|p| vec![p.role.clone(), p.path.clone(), p.sha256.clone()]),
    )?);
    written.push(write_text(dir, "config_echo.toml", &report.config_echo)?);
    let mut warn_text = report.warnings.join("\n");
    if !warn_text.is_empty() {
        warn_text.push('\n');
    }
    written.push(write_text(dir, "warnings.txt", &warn_text)?);
    written.push(write_text(dir, "notes.txt", NOTES)?);

    written.extend(emit_plot_data(report, dir)?);
    Ok(written)
}

/// Plot-ready data: the 20 worst providers with their sizes, and occurrence vs uptime scores.
pub fn emit_plot_data(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ctx = &report.context;
    let occ = &report.occurrence.scores;
    let mut header = vec!["asn".to_string()];
    header.extend(SizeEstimator::ALL.iter().map(|e| format!("size_{e}")));
    header.push("score".into());
    let rows = occ.scores.iter().take(20).map(|(asn, s)| {
        let mut row = vec![asn.to_string()];
        row.extend(SizeEstimator::ALL.iter().map(|e| ctx.sizes[e].size(*asn).to_string()));
        row.push(fmt6(rational_to_f64(s)));
        row
    });
    let mut written = vec![write_csv(dir, "worst20.csv", &header, rows)?];

    let vs = dir.join("occurrence_vs_uptime.csv");
    match &report.uptime {
        Some(up) => {
            let rows = occ.scores.iter().map(|(asn, s)| {
                vec![
                    asn.to_string(),
                    fmt6(rational_to_f64(s)),
                    fmt6(up.scores.score_f64(*asn).unwrap_or(f64::NAN)),
                ]
            });
            written.push(write_csv(
                dir,
                "occurrence_vs_uptime.csv",
                &strs(&["asn", "occurrence_score", "uptime_score"]),
                rows,
            )?);
        }
        None => {
            tracing::warn!("no uptime metric; occurrence_vs_uptime.csv not written");
            if vs.exists() {
                fs::remove_file(&vs).map_err(|e| Error::io(&vs, e))?;
            }
        }
    }
    Ok(written)
}
