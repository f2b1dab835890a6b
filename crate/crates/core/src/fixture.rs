//! Deterministic synthetic datasets with a known worst provider.
//!
//! Layout: provider `i` owns a block at `16.0.0.0 + i * 65536`, announced as a /20 to /24.
//! The designated worst provider announces a /24, runs 3 hosting IPs and 5 domains that
//! each resolve to all 3 IPs, and every one of those 15 pairs is reported by every feed.
//! Other providers have 10 to 60 single-IP domains on at least 5 hosting IPs and at most
//! 14 abuse units per feed, so the worst provider is strictly worst under all three size
//! estimators in every feed.

use std::fmt::Write as _;
use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use chrono::DateTime;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result, Stage};

const WINDOW_START: i64 = 1_388_534_400; // 2014-01-01
const WINDOW_END: i64 = 1_420_070_400; // 2015-01-01
const BEFORE_WINDOW: i64 = 1_370_044_800; // 2013-06-01
const DAY: i64 = 86_400;
const FIRST_ASN: u32 = 64_600;
const FOREIGN_ASNS: [u32; 3] = [65_101, 65_102, 65_103];
const MAX_UNITS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub seed: u64,
    pub n_providers: usize,
    pub n_feeds: usize,
    /// Probability that a given non-worst domain is reported by a feed.
    pub abuse_rate: f64,
    /// How many of the last feeds carry removal times.
    pub uptime_feeds: usize,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            seed: 42,
            n_providers: 20,
            n_feeds: 3,
            abuse_rate: 0.5,
            uptime_feeds: 1,
        }
    }
}

impl FixtureParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(Stage::Fixture, m));
        if !(2..=2000).contains(&self.n_providers) {
            return bad("providers must be between 2 and 2000");
        }
        if !(1..=26).contains(&self.n_feeds) {
            return bad("feeds must be between 1 and 26");
        }
        if !(0.0..=1.0).contains(&self.abuse_rate) {
            return bad("abuse rate must be within [0, 1]");
        }
        if self.uptime_feeds > self.n_feeds {
            return bad("uptime feeds cannot exceed feeds");
        }
        Ok(())
    }
}

/// Ground truth written next to the dataset as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureManifest {
    pub seed: u64,
    pub n_providers: usize,
    pub n_feeds: usize,
    pub abuse_rate: f64,
    pub uptime_feeds: usize,
    pub worst_asn: u32,
    pub providers: Vec<u32>,
    pub feeds: Vec<String>,
}

struct Domain {
    name: String,
    ips: Vec<Ipv4Addr>,
}

struct Provider {
    asn: u32,
    base: u32,
    prefix_len: u8,
    domains: Vec<Domain>,
}

#[derive(Clone, Copy, PartialEq)]
enum Form {
    UrlWithIp,
    FqdnViaPdns,
    FqdnWithIp,
}

impl Form {
    fn of(feed: usize) -> Form {
        [Form::UrlWithIp, Form::FqdnViaPdns, Form::FqdnWithIp][feed % 3]
    }
}

const TLDS: [&str; 3] = ["nl", "co.uk", "com"];
const SUFFIX_RULES: &str = "\
// synthetic public-suffix rules
nl
com
uk
co.uk
*.ck
!www.ck
gl
ly
";

fn ip(n: u32) -> Ipv4Addr {
    Ipv4Addr::from(n)
}

fn iso(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

fn naive(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%d %H:%M:%S")
        .to_string()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn build_providers(rng: &mut ChaCha8Rng, n: usize, worst: usize) -> Vec<Provider> {
    (0..n)
        .map(|i| {
            let asn = FIRST_ASN + i as u32;
            let base = u32::from(Ipv4Addr::new(16, 0, 0, 0)) + (i as u32) * 65_536;
            let host = |k: u32| ip(base + 10 + k);
            if i == worst {
                let ips: Vec<_> = (0..3).map(host).collect();
                let domains = (0..5)
                    .map(|j| Domain {
                        name: format!("bad{j}-as{asn}.{}", TLDS[j % TLDS.len()]),
                        ips: ips.clone(),
                    })
                    .collect();
                return Provider { asn, base, prefix_len: 24, domains };
            }
            let prefix_len = rng.gen_range(20..=24);
            let n_domains = rng.gen_range(10..=60);
            let n_hosts = rng.gen_range(5..=n_domains.min(20)) as u32;
            let domains = (0..n_domains)
                .map(|j| Domain {
                    name: format!("site{j}-as{asn}.{}", TLDS[(j + i) % TLDS.len()]),
                    ips: vec![host(j as u32 % n_hosts)],
                })
                .collect();
            Provider { asn, base, prefix_len, domains }
        })
        .collect()
}

struct Event {
    name: String,
    ip: Ipv4Addr,
    first: i64,
    last: i64,
}

fn feed_text(form: Form, uptime: bool, events: &[Event], abuse_type: &str, bad_row: bool, rng: &mut ChaCha8Rng) -> String {
    let obs = if form == Form::UrlWithIp { "url" } else { "hostname" };
    let mut header = vec![obs, "first_seen"];
    if uptime {
        header.push("last_seen");
    }
    if form != Form::FqdnViaPdns {
        header.push("ip");
    }
    header.push("category");
    let stamp = |t: i64| match form {
        Form::UrlWithIp => iso(t),
        Form::FqdnViaPdns => t.to_string(),
        Form::FqdnWithIp => naive(t),
    };
    let mut rows: Vec<String> = events
        .iter()
        .map(|e| {
            let observable = match form {
                Form::UrlWithIp => format!("http://www.{}/p/{}.html?id={}", e.name, rng.gen_range(0..1000), rng.gen_range(0..100)),
                _ => format!("www.{}", e.name),
            };
            let mut row = vec![observable, stamp(e.first)];
            if uptime {
                row.push(stamp(e.last));
            }
            if form != Form::FqdnViaPdns {
                row.push(e.ip.to_string());
            }
            row.push(abuse_type.to_string());
            row.join(",")
        })
        .collect();
    if bad_row {
        let mut row = vec!["www.broken-row.nl".to_string(), "not-a-date".to_string()];
        if uptime {
            row.push("not-a-date".into());
        }
        if form != Form::FqdnViaPdns {
            row.push("16.0.0.10".into());
        }
        row.push(abuse_type.to_string());
        rows.push(row.join(","));
    }
    rows.shuffle(rng);
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Write a dataset, `config.toml` and `manifest.toml` into `out_dir`.
pub fn generate_fixture(params: &FixtureParams, out_dir: &Path) -> Result<FixtureManifest> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n_providers;
    let worst = rng.gen_range(0..n);
    let providers = build_providers(&mut rng, n, worst);

    let mut routing = Vec::new();
    let mut geo = Vec::new();
    let mut pdns = Vec::new();
    for (i, p) in providers.iter().enumerate() {
        routing.push(format!("{}/{},{}", ip(p.base), p.prefix_len, p.asn));
        geo.push(format!("{},{},NL", ip(p.base), ip(p.base + 65_535)));
        let neighbour = (i + 1) % n;
        if i != worst && neighbour != worst && p.prefix_len <= 22 && rng.gen_bool(0.3) {
            routing.push(format!("{}/26,{}", ip(p.base + 768), providers[neighbour].asn));
        }
        for d in &p.domains {
            for a in &d.ips {
                pdns.push(format!("www.{},{},{},{}", d.name, a, WINDOW_START - 30 * DAY, WINDOW_END + 30 * DAY));
            }
        }
        // resolution history that ended before the window and must not count toward size
        if i != worst {
            pdns.push(format!("old.retired-as{}.nl,{},{},{}", p.asn, ip(p.base + 200), BEFORE_WINDOW - 90 * DAY, BEFORE_WINDOW));
        }
    }
    let foreign_base = u32::from(Ipv4Addr::new(48, 0, 0, 0));
    for (k, asn) in FOREIGN_ASNS.iter().enumerate() {
        let base = foreign_base + k as u32 * 65_536;
        routing.push(format!("{}/16,{}", ip(base), asn));
        geo.push(format!("{},{},DE", ip(base), ip(base + 65_535)));
        pdns.push(format!("www.foreign{k}.com,{},{},{}", ip(base + 5), WINDOW_START, WINDOW_END));
    }
    routing.push(format!("2001:db8::/32,{}", FOREIGN_ASNS[0]));
    geo.push("2001:db8::,2001:db8:ffff:ffff:ffff:ffff:ffff:ffff,DE".to_string());
    geo.push("64.0.0.0,64.0.255.255,NL".to_string());
    let shortener_ip = ip(foreign_base + 7);
    pdns.push(format!("goo.gl,{shortener_ip},{WINDOW_START},{WINDOW_END}"));
    routing.shuffle(&mut rng);
    pdns.shuffle(&mut rng);

    let feeds_dir = out_dir.join("feeds");
    fs::create_dir_all(&feeds_dir).map_err(|e| Error::io(&feeds_dir, e))?;
    let abuse_types = ["phishing", "malware", "malicious-host", "botnet-cc"];
    let mut feed_ids = Vec::new();
    let mut feed_cfg = String::new();
    for f in 0..params.n_feeds {
        let id = format!("feed{}", (b'a' + f as u8) as char);
        let form = Form::of(f);
        let uptime = f >= params.n_feeds - params.uptime_feeds;
        let span = |rng: &mut ChaCha8Rng| {
            let first = rng.gen_range(WINDOW_START..WINDOW_END - DAY);
            (first, first + rng.gen_range(3_600..60 * DAY))
        };
        let mut events = Vec::new();
        if params.abuse_rate > 0.0 {
            for (i, p) in providers.iter().enumerate() {
                if i == worst {
                    for d in &p.domains {
                        let ips: &[Ipv4Addr] = if form == Form::FqdnViaPdns { &d.ips[..1] } else { &d.ips };
                        for a in ips {
                            let (first, last) = span(&mut rng);
                            events.push(Event { name: d.name.clone(), ip: *a, first, last });
                        }
                    }
                    continue;
                }
                let mut chosen: Vec<&Domain> = p.domains.iter().filter(|_| rng.gen_bool(params.abuse_rate)).collect();
                chosen.truncate(MAX_UNITS);
                for d in chosen {
                    let (first, last) = span(&mut rng);
                    events.push(Event { name: d.name.clone(), ip: d.ips[0], first, last });
                    // repeated sighting of the same unit
                    if rng.gen_bool(0.2) {
                        let (f2, l2) = span(&mut rng);
                        events.push(Event { name: d.name.clone(), ip: d.ips[0], first: f2, last: l2 });
                    }
                }
            }
            let (first, last) = span(&mut rng);
            let fb = foreign_base + rng.gen_range(0..3u32) * 65_536 + 5;
            events.push(Event { name: format!("foreign{}.com", (fb - foreign_base) / 65_536), ip: ip(fb), first, last });
            events.push(Event { name: "gone-dark.nl".into(), ip: ip(u32::from(Ipv4Addr::new(64, 0, 3, 3))), first, last });
            events.push(Event { name: "goo.gl".into(), ip: shortener_ip, first, last });
            let old = &providers[(worst + 1) % n].domains[0];
            events.push(Event { name: old.name.clone(), ip: old.ips[0], first: BEFORE_WINDOW, last: BEFORE_WINDOW + DAY });
        }
        let kind = abuse_types[f % abuse_types.len()];
        let text = feed_text(form, uptime, &events, kind, params.abuse_rate > 0.0, &mut rng);
        let text = text.replace("www.goo.gl", "goo.gl");
        write(&feeds_dir.join(format!("{id}.csv")), &text)?;

        let obs = if form == Form::UrlWithIp { "url" } else { "hostname" };
        let _ = write!(
            feed_cfg,
            "\n[[feeds]]\nid = \"{id}\"\npath = \"feeds/{id}.csv\"\n[feeds.columns]\nobservable = \"{obs}\"\nfirst_seen = \"first_seen\"\nabuse_type = \"category\"\n"
        );
        if uptime {
            feed_cfg.push_str("last_seen = \"last_seen\"\n");
        }
        if form != Form::FqdnViaPdns {
            feed_cfg.push_str("ip = \"ip\"\n");
        }
        feed_ids.push(id);
    }

    let lines = |header: &str, rows: &[String]| {
        let mut s = format!("{header}\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    };
    write(&out_dir.join("routing.csv"), &lines("prefix,asn", &routing))?;
    write(&out_dir.join("geoip.csv"), &lines("ip_start,ip_end,country", &geo))?;
    write(&out_dir.join("pdns.csv"), &lines("fqdn,ip,first_seen,last_seen", &pdns))?;
    write(&out_dir.join("suffix_rules.txt"), SUFFIX_RULES)?;
    write(&out_dir.join("allowlist.txt"), "goo.gl\nbit.ly\n")?;
    let popular = &providers[(worst + 2) % n].domains[0].name;
    write(
        &out_dir.join("popularity.csv"),
        &format!("rank,domain\n1,goo.gl\n2,bit.ly\n3,foreign0.com\n117,{popular}\n"),
    )?;

    let config = format!(
        "country = \"NL\"\noutput_dir = \"out\"\n\n[window]\nstart = \"{}\"\nend = \"{}\"\n\n[inputs]\nrouting = \"routing.csv\"\ngeoip = \"geoip.csv\"\npdns = \"pdns.csv\"\nsuffix_rules = \"suffix_rules.txt\"\nallowlist = \"allowlist.txt\"\npopularity = \"popularity.csv\"\n\n[sensitivity]\ntop_n = 100\ntop_k = 20\n{feed_cfg}",
        iso(WINDOW_START),
        iso(WINDOW_END)
    );
    write(&out_dir.join("config.toml"), &config)?;

    let manifest = FixtureManifest {
        seed: params.seed,
        n_providers: n,
        n_feeds: params.n_feeds,
        abuse_rate: params.abuse_rate,
        uptime_feeds: params.uptime_feeds,
        worst_asn: providers[worst].asn,
        providers: providers.iter().map(|p| p.asn).collect(),
        feeds: feed_ids,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::data(Stage::Fixture, e.to_string()))?;
    write(&out_dir.join("manifest.toml"), &text)?;
    Ok(manifest)
}

/// Path of the config written by [`generate_fixture`].
pub fn fixture_config(out_dir: &Path) -> PathBuf {
    out_dir.join("config.toml")
}
