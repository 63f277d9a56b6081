use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rarecause_core::config::KeyValues;
use rarecause_core::experiment::{append_curves, read_curves, ExperimentSpec, Method, Scenario};
use rarecause_core::hypothesis::DEFAULT_NULL_REPLICATIONS;
use rarecause_core::ingest::{
    build_daily_trajectories, generate_fixture, parse_time, read_detector_csv, read_incident_csv,
    read_trajectory_csv, write_detector_csv, write_incident_csv, write_trajectories, FixtureSpec,
    IngestConfig, MissingBinPolicy,
};
use rarecause_core::simulate::{
    simulate_multi_link, simulate_single_link, Hypothesis, MultiLinkParams, SingleLinkParams,
};
use rarecause_core::{
    baseline_cdfs_at, baseline_sup_gap, estimate_cdf_pair, run_test, Decision, Error,
    ThresholdMethod, TrajectoryDataset,
};

mod failure;

use failure::{usage, Failure};

/// Tests whether a system's state drives the first occurrence of a rare event.
#[derive(Debug, Parser)]
#[command(name = "rarecause", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent, where that makes sense).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Threshold method (default mc, 500 null replications).
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Flat `key = value` file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, e.g. simulation parameters.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Dkw,
    Mc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a trajectory dataset.
    Simulate {
        /// single-link-H0, single-link-H1, multi-link-H0 or multi-link-H1.
        #[arg(long)]
        scenario: Option<String>,
        /// Number of trajectories.
        #[arg(long)]
        n: Option<usize>,
        /// Link count for the multi-link scenarios.
        #[arg(long)]
        links: Option<usize>,
    },
    /// Run the reorganized-CDF test on a trajectory CSV.
    Test {
        /// Trajectory CSV.
        input: PathBuf,
        /// Null replications for `--method mc`.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Fixed-time baseline test.
    Baseline {
        /// Trajectory CSV.
        input: PathBuf,
        /// Event time to condition on (default 1).
        #[arg(long)]
        t: Option<usize>,
    },
    /// Sweep statistics over N and seeds into a curves CSV.
    Curves {
        /// Comma-separated scenarios.
        #[arg(long)]
        scenario: Option<String>,
        /// Comma-separated N values.
        #[arg(long)]
        n: Option<String>,
        /// Seeds: comma-separated values or ranges such as `1-20`.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated: ours, baseline.
        #[arg(long)]
        methods: Option<String>,
        /// Link count for the multi-link scenarios.
        #[arg(long)]
        links: Option<usize>,
        /// Trajectory CSV for the `from-csv` scenario.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Event time used by the baseline method.
        #[arg(long)]
        baseline_t: Option<usize>,
    },
    /// Dump b1 and b2 over the evaluation grid.
    Cdf {
        /// Trajectory CSV.
        input: PathBuf,
        /// Add the fixed-time baseline CDFs.
        #[arg(long)]
        baseline: bool,
        /// Event time for the baseline CDFs (default 1).
        #[arg(long)]
        t: Option<usize>,
    },
    /// Build daily trajectories from detector and incident CSVs.
    Ingest {
        /// Detector CSV (`date,time,detector_id,flow`).
        #[arg(long)]
        detectors: Option<PathBuf>,
        /// Incident CSV (`date,time,link_id`).
        #[arg(long)]
        incidents: Option<PathBuf>,
        /// Daily window, `HH:MM-HH:MM`.
        #[arg(long)]
        window: Option<String>,
        /// Bin width such as `5m`.
        #[arg(long)]
        bin: Option<String>,
        /// Link whose incidents define the events.
        #[arg(long)]
        link: Option<String>,
        /// Comma-separated detector ids of the link (default: all in the file).
        #[arg(long)]
        link_detectors: Option<String>,
        /// Keep days without incidents.
        #[arg(long)]
        keep_no_event: bool,
        /// drop or interpolate.
        #[arg(long)]
        missing: Option<String>,
    },
    /// Write synthetic detector and incident CSVs into a directory.
    Fixture {
        /// Output directory.
        dir: PathBuf,
        /// Number of days to generate.
        #[arg(long)]
        days: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Merges the config file with every flag that was given; flags win.
fn settings(cli: &Cli) -> Result<KeyValues, Failure> {
    let g = &cli.global;
    let mut kv = match &g.config {
        Some(path) => {
            KeyValues::read(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => KeyValues::new(),
    };
    let mut flags = KeyValues::new();
    for pair in &g.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        flags.set(k.trim(), v.trim());
    }
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.set(k, v);
        }
    };
    put("seed", g.seed.map(|v| v.to_string()));
    put("out", g.out.as_ref().map(|p| p.display().to_string()));
    put("alpha", g.alpha.map(|v| v.to_string()));
    put(
        "method",
        g.method.map(|m| match m {
            MethodArg::Dkw => "dkw".to_string(),
            MethodArg::Mc => "mc".to_string(),
        }),
    );
    match &cli.command {
        Command::Simulate { scenario, n, links } => {
            put("scenario", scenario.clone());
            put("n", n.map(|v| v.to_string()));
            put("links", links.map(|v| v.to_string()));
        }
        Command::Test { replications, .. } => {
            put("replications", replications.map(|v| v.to_string()))
        }
        Command::Baseline { t, .. } | Command::Cdf { t, .. } => put("t", t.map(|v| v.to_string())),
        Command::Curves {
            scenario,
            n,
            seeds,
            methods,
            links,
            input,
            baseline_t,
        } => {
            put("scenario", scenario.clone());
            put("n", n.clone());
            put("seeds", seeds.clone());
            put("methods", methods.clone());
            put("links", links.map(|v| v.to_string()));
            put("input", input.as_ref().map(|p| p.display().to_string()));
            put("baseline_t", baseline_t.map(|v| v.to_string()));
        }
        Command::Ingest {
            detectors,
            incidents,
            window,
            bin,
            link,
            link_detectors,
            keep_no_event,
            missing,
        } => {
            put(
                "detectors",
                detectors.as_ref().map(|p| p.display().to_string()),
            );
            put(
                "incidents",
                incidents.as_ref().map(|p| p.display().to_string()),
            );
            put("window", window.clone());
            put("bin", bin.clone());
            put("link", link.clone());
            put("link_detectors", link_detectors.clone());
            put("keep_no_event", keep_no_event.then(|| "true".to_string()));
            put("missing", missing.clone());
        }
        Command::Fixture { days, .. } => put("days", days.map(|v| v.to_string())),
    }
    kv.merge(&flags);
    Ok(kv)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let kv = settings(&cli)?;
    match &cli.command {
        Command::Simulate { .. } => cmd_simulate(&kv),
        Command::Test { input, .. } => cmd_test(&kv, input),
        Command::Baseline { input, .. } => cmd_baseline(&kv, input),
        Command::Curves { .. } => cmd_curves(&kv),
        Command::Cdf {
            input, baseline, ..
        } => cmd_cdf(&kv, input, *baseline),
        Command::Ingest { .. } => cmd_ingest(&kv),
        Command::Fixture { dir, .. } => cmd_fixture(&kv, dir),
    }
}

fn get<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<Option<T>, Failure> {
    kv.get_parsed(key).map_err(|e| usage(e.to_string()))
}

fn seed(kv: &KeyValues) -> Result<u64, Failure> {
    Ok(get(kv, "seed")?.unwrap_or(0))
}

fn alpha(kv: &KeyValues) -> Result<f64, Failure> {
    let alpha = get(kv, "alpha")?.unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(alpha)
}

fn out_path(kv: &KeyValues) -> Option<PathBuf> {
    kv.get("out").map(PathBuf::from)
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(kv: &KeyValues, body: &[u8]) -> Result<(), Failure> {
    match out_path(kv) {
        Some(path) => {
            fs::write(&path, body).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
        }
        None => to_stdout(body),
    }
}

/// A closed pipe (`| head`) is not an error.
fn to_stdout(body: &[u8]) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(body).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::data(e.to_string())),
        _ => Ok(()),
    }
}

fn load(path: &Path) -> Result<TrajectoryDataset, Failure> {
    read_trajectory_csv(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn scenario(name: &str) -> Result<(bool, Hypothesis), Failure> {
    match Scenario::parse(name, None).map_err(|e| usage(e.to_string()))? {
        Scenario::SingleLink(h) => Ok((false, h)),
        Scenario::MultiLink(h) => Ok((true, h)),
        Scenario::FromCsv(_) => Err(usage("simulate needs a simulated scenario")),
    }
}

fn cmd_simulate(kv: &KeyValues) -> Result<(), Failure> {
    let name = kv.get("scenario").unwrap_or("single-link-H0");
    let (multi, hypothesis) = scenario(name)?;
    let n: usize = get(kv, "n")?.ok_or_else(|| usage("simulate needs --n"))?;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let seed = seed(kv)?;
    let ds = if multi {
        let links = get(kv, "links")?.unwrap_or(2);
        let mut p = MultiLinkParams::defaults(links, hypothesis);
        p.apply_config(kv).map_err(|e| usage(e.to_string()))?;
        simulate_multi_link(&p, n, seed)
    } else {
        let mut p = SingleLinkParams::defaults(hypothesis);
        p.apply_config(kv).map_err(|e| usage(e.to_string()))?;
        simulate_single_link(&p, n, seed)
    }
    .map_err(Failure::from)?;
    let mut buf = Vec::new();
    write_trajectories(&ds, &mut buf).map_err(Failure::from)?;
    emit(kv, &buf)
}

fn threshold_method(kv: &KeyValues) -> Result<ThresholdMethod, Failure> {
    match kv.get("method").unwrap_or("mc") {
        "dkw" => Ok(ThresholdMethod::DkwConservative),
        "mc" => Ok(ThresholdMethod::MonteCarloNull {
            replications: get(kv, "replications")?.unwrap_or(DEFAULT_NULL_REPLICATIONS),
        }),
        other => Err(usage(format!("unknown method `{other}` (dkw or mc)"))),
    }
}

fn cmd_test(kv: &KeyValues, input: &Path) -> Result<(), Failure> {
    let method = threshold_method(kv)?;
    let alpha = alpha(kv)?;
    let seed = seed(kv)?;
    let ds = load(input)?;
    let report = run_test(&ds, method, alpha, seed).map_err(Failure::from)?;
    let line = report.to_key_values();
    let verdict = match report.decision {
        Decision::RejectH0 => "exceeds",
        Decision::FailToReject => "does not exceed",
    };
    let summary = format!(
        "{}: sup-gap {:.6} at x = ({}) {verdict} the {} threshold {:.6} at alpha = {} over {} trajectories",
        report.decision,
        report.statistic,
        report.argmax_point,
        report.threshold_method.name(),
        report.threshold,
        report.alpha,
        report.n_trajectories
    );
    if let Some(path) = out_path(kv) {
        fs::write(&path, format!("{line}\n"))
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    }
    to_stdout(format!("{line}\n{summary}\n").as_bytes())
}

fn cmd_baseline(kv: &KeyValues, input: &Path) -> Result<(), Failure> {
    let t = get(kv, "t")?.unwrap_or(1);
    let ds = load(input)?;
    let report = baseline_sup_gap(&ds, t).map_err(Failure::from)?;
    emit(kv, format!("{}\n", report.to_key_values()).as_bytes())
}

fn list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, Failure> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| usage(format!("invalid {what} `{s}`")))
        })
        .collect()
}

fn seed_list(raw: &str) -> Result<Vec<u64>, Failure> {
    let mut seeds = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a
                    .trim()
                    .parse()
                    .map_err(|_| usage(format!("invalid seed range `{part}`")))?;
                let b: u64 = b
                    .trim()
                    .parse()
                    .map_err(|_| usage(format!("invalid seed range `{part}`")))?;
                if a > b {
                    return Err(usage(format!("empty seed range `{part}`")));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(
                part.parse()
                    .map_err(|_| usage(format!("invalid seed `{part}`")))?,
            ),
        }
    }
    Ok(seeds)
}

fn cmd_curves(kv: &KeyValues) -> Result<(), Failure> {
    let out = out_path(kv).ok_or_else(|| usage("curves needs --out"))?;
    let input = kv.get("input").map(PathBuf::from);
    let scenarios = kv
        .get("scenario")
        .ok_or_else(|| usage("curves needs --scenario"))?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Scenario::parse(s, input.as_deref()).map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let ns: Vec<usize> = list(kv.get("n").ok_or_else(|| usage("curves needs --n"))?, "N")?;
    let seeds = match kv.get("seeds") {
        Some(raw) => seed_list(raw)?,
        None => vec![seed(kv)?],
    };
    let mut spec = ExperimentSpec::new(scenarios, ns, seeds);
    if let Some(raw) = kv.get("methods") {
        spec.methods = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Method::parse(s).map_err(|e| usage(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    if let Some(links) = get(kv, "links")? {
        spec.links = links;
    }
    if let Some(t) = get(kv, "baseline_t")? {
        spec.baseline_t = t;
    }
    spec.params = kv.clone();
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let added = append_curves(&spec, &out).map_err(Failure::from)?;
    let total = fs::File::open(&out)
        .map_err(Error::from)
        .and_then(read_curves)
        .map_err(Failure::from)?
        .len();
    eprintln!("{added} new rows, {total} total in {}", out.display());
    Ok(())
}

fn cmd_cdf(kv: &KeyValues, input: &Path, with_baseline: bool) -> Result<(), Failure> {
    let ds = load(input)?;
    let pair = estimate_cdf_pair(&ds).map_err(Failure::from)?;
    let baseline = if with_baseline {
        let t = get(kv, "t")?.unwrap_or(1);
        Some(baseline_cdfs_at(&ds, t, pair.b1.grid()).map_err(Failure::from)?)
    } else {
        None
    };
    let mut text = String::new();
    for i in 1..=ds.dim() {
        text.push_str(&format!("x_{i},"));
    }
    text.push_str("b1,b2");
    if baseline.is_some() {
        text.push_str(",baseline_conditional,baseline_unconditional");
    }
    text.push('\n');
    for (k, x) in pair.b1.grid().iter().enumerate() {
        for c in x.coords() {
            text.push_str(&format!("{c},"));
        }
        text.push_str(&format!("{},{}", pair.b1.values()[k], pair.b2.values()[k]));
        if let Some((cond, uncond)) = &baseline {
            text.push_str(&format!(",{},{}", cond[k], uncond[k]));
        }
        text.push('\n');
    }
    emit(kv, text.as_bytes())
}

fn parse_bin(raw: &str) -> Result<u32, Failure> {
    let digits = raw.strip_suffix('m').unwrap_or(raw);
    match digits.parse::<u32>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(usage(format!("bin must look like 5m, got `{raw}`"))),
    }
}

fn cmd_ingest(kv: &KeyValues) -> Result<(), Failure> {
    let detectors_path = kv
        .get("detectors")
        .ok_or_else(|| usage("ingest needs --detectors"))?;
    let incidents_path = kv
        .get("incidents")
        .ok_or_else(|| usage("ingest needs --incidents"))?;
    let mut cfg = IngestConfig::default();
    if let Some(raw) = kv.get("window") {
        let (a, b) = raw
            .split_once('-')
            .ok_or_else(|| usage(format!("window must look like 06:00-14:00, got `{raw}`")))?;
        cfg.window_start =
            parse_time(a.trim()).ok_or_else(|| usage(format!("invalid window start `{a}`")))?;
        cfg.window_end =
            parse_time(b.trim()).ok_or_else(|| usage(format!("invalid window end `{b}`")))?;
    }
    if let Some(b) = kv.get("bin") {
        cfg.bin_minutes = parse_bin(b)?;
    }
    cfg.bin_count().map_err(|e| usage(e.to_string()))?;
    cfg.drop_no_event = !matches!(kv.get("keep_no_event"), Some("true" | "1" | "yes"));
    cfg.missing_bins = match kv.get("missing").unwrap_or("drop") {
        "drop" => MissingBinPolicy::DropDay,
        "interpolate" => MissingBinPolicy::Interpolate,
        other => {
            return Err(usage(format!(
                "unknown missing-bin policy `{other}` (drop or interpolate)"
            )))
        }
    };

    let detectors = read_detector_csv(detectors_path)
        .map_err(|e| Failure::data(format!("{detectors_path}: {e}")))?;
    let incidents = read_incident_csv(incidents_path)
        .map_err(|e| Failure::data(format!("{incidents_path}: {e}")))?;

    let link = match kv.get("link") {
        Some(l) => l.to_string(),
        None => {
            let mut links: Vec<&str> = incidents.iter().map(|i| i.link_id.as_str()).collect();
            links.sort_unstable();
            links.dedup();
            match links.as_slice() {
                [one] => one.to_string(),
                _ => {
                    return Err(usage(
                        "incidents name several links (or none); pick one with --link",
                    ))
                }
            }
        }
    };
    let members: Vec<String> = match kv.get("link_detectors") {
        Some(raw) => list(raw, "detector id")?,
        None => {
            let mut ids: Vec<String> = detectors.iter().map(|d| d.detector_id.clone()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        }
    };
    let cfg = cfg.with_link(link.clone(), members);
    let daily =
        build_daily_trajectories(&detectors, &incidents, &cfg, &link).map_err(Failure::from)?;
    let mut buf = Vec::new();
    write_trajectories(&daily.dataset, &mut buf).map_err(Failure::from)?;
    emit(kv, &buf)?;
    eprintln!(
        "{} days kept, {} dropped for missing bins, {} dropped without incidents",
        daily.days.len(),
        daily.dropped_missing.len(),
        daily.dropped_no_event.len()
    );
    Ok(())
}

fn cmd_fixture(kv: &KeyValues, dir: &Path) -> Result<(), Failure> {
    let mut spec = FixtureSpec::default();
    if let Some(seed) = get(kv, "seed")? {
        spec.seed = seed;
    }
    if let Some(days) = get(kv, "days")? {
        spec.days = days;
    }
    let fixture = generate_fixture(&spec).map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    write_detector_csv(&fixture.detectors, dir.join("detectors.csv")).map_err(Failure::from)?;
    write_incident_csv(&fixture.incidents, dir.join("incidents.csv")).map_err(Failure::from)?;
    eprintln!(
        "{} detector rows, {} incidents on link {} ({})",
        fixture.detectors.len(),
        fixture.incidents.len(),
        spec.link,
        spec.detector_ids().join(",")
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(seed_list("1-3,7").unwrap(), vec![1, 2, 3, 7]);
        assert!(seed_list("3-1").is_err());
        assert!(seed_list("x").is_err());
    }

    #[test]
    fn bin_widths() {
        assert_eq!(parse_bin("5m").unwrap(), 5);
        assert_eq!(parse_bin("15").unwrap(), 15);
        assert!(parse_bin("0m").is_err());
        assert!(parse_bin("5s").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.cfg");
        std::fs::write(&cfg, "alpha = 0.1\nseed = 4\n").unwrap();
        let cli = Cli::try_parse_from([
            "rarecause",
            "--config",
            cfg.to_str().unwrap(),
            "--alpha",
            "0.01",
            "test",
            "x.csv",
        ])
        .unwrap();
        let kv = settings(&cli).unwrap();
        assert_eq!(kv.get("alpha"), Some("0.01"));
        assert_eq!(kv.get("seed"), Some("4"));
    }
}
