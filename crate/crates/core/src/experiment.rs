//! Curve sweeps: one statistic per `(scenario, N, seed, method)` cell.
//!
//! Simulated cells draw `N` trajectories with the given seed and drop the
//! event-free ones before testing. Cells from a CSV file test a seeded
//! subsample of `N` trajectories. A method that fails on a cell (typically the
//! baseline with an empty conditional sample) is recorded as missing and
//! written as `NA`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::estimators::sup_gap;
use crate::hypothesis::baseline_sup_gap;
use crate::ingest::read_trajectory_csv;
use crate::model::TrajectoryDataset;
use crate::par;
use crate::simulate::{
    simulate_multi_link, simulate_single_link, Hypothesis, MultiLinkParams, SingleLinkParams,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scenario {
    SingleLink(Hypothesis),
    /// Link count comes from `ExperimentSpec::links`.
    MultiLink(Hypothesis),
    FromCsv(PathBuf),
}

impl Scenario {
    /// Accepts `single-link-H0`, `single-link-H1`, `multi-link-H0`,
    /// `multi-link-H1` and `from-csv` (with `path`).
    pub fn parse(name: &str, path: Option<&Path>) -> Result<Self> {
        match name {
            "single-link-H0" => Ok(Scenario::SingleLink(Hypothesis::Null)),
            "single-link-H1" => Ok(Scenario::SingleLink(Hypothesis::Alternative)),
            "multi-link-H0" => Ok(Scenario::MultiLink(Hypothesis::Null)),
            "multi-link-H1" => Ok(Scenario::MultiLink(Hypothesis::Alternative)),
            "from-csv" => path
                .map(|p| Scenario::FromCsv(p.to_path_buf()))
                .ok_or_else(|| Error::param("scenario from-csv needs an input file")),
            other => Err(Error::param(format!("unknown scenario `{other}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Scenario::SingleLink(Hypothesis::Null) => "single-link-H0",
            Scenario::SingleLink(Hypothesis::Alternative) => "single-link-H1",
            Scenario::MultiLink(Hypothesis::Null) => "multi-link-H0",
            Scenario::MultiLink(Hypothesis::Alternative) => "multi-link-H1",
            Scenario::FromCsv(_) => "from-csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ours,
    Baseline,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Method::Ours),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::param(format!("unknown method `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenarios: Vec<Scenario>,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub links: usize,
    /// Time index of the fixed-time baseline.
    pub baseline_t: usize,
    /// Parameter overrides applied on top of each scenario's defaults.
    pub params: KeyValues,
}

impl ExperimentSpec {
    pub fn new(scenarios: Vec<Scenario>, ns: Vec<usize>, seeds: Vec<u64>) -> Self {
        Self {
            scenarios,
            ns,
            seeds,
            methods: vec![Method::Ours, Method::Baseline],
            links: 2,
            baseline_t: 1,
            params: KeyValues::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty()
            || self.ns.is_empty()
            || self.seeds.is_empty()
            || self.methods.is_empty()
        {
            return Err(Error::param(
                "scenarios, N values, seeds and methods must be non-empty",
            ));
        }
        if self.ns.contains(&0) {
            return Err(Error::param("N values must be positive"));
        }
        for s in &self.scenarios {
            match s {
                Scenario::SingleLink(h) => {
                    SingleLinkParams::defaults(*h).apply_config(&self.params)?;
                }
                Scenario::MultiLink(h) => {
                    MultiLinkParams::defaults(self.links, *h).apply_config(&self.params)?;
                }
                Scenario::FromCsv(_) => {}
            }
        }
        Ok(())
    }
}

/// Identifies one output row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub key: CellKey,
    /// `None` when the method failed on the cell.
    pub statistic: Option<f64>,
}

pub const CURVES_HEADER: &str = "scenario,N,seed,method,statistic";

impl fmt::Display for CurveRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},",
            self.key.scenario, self.key.n, self.key.seed, self.key.method
        )?;
        match self.statistic {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("NA"),
        }
    }
}

/// Seeded subsample of `n` trajectories, kept in file order.
fn subsample(ds: &TrajectoryDataset, n: usize, seed: u64) -> Result<TrajectoryDataset> {
    if n > ds.len() {
        return Err(Error::param(format!(
            "asked for {n} trajectories, file has {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, ds.len(), n).into_vec();
    idx.sort_unstable();
    let trajs = idx
        .into_iter()
        .map(|i| ds.trajectories()[i].clone())
        .collect();
    TrajectoryDataset::new(ds.dim(), trajs)
}

fn cell_dataset(
    scenario: &Scenario,
    spec: &ExperimentSpec,
    loaded: Option<&TrajectoryDataset>,
    n: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    let ds = match scenario {
        Scenario::SingleLink(h) => {
            let mut p = SingleLinkParams::defaults(*h);
            p.apply_config(&spec.params)?;
            simulate_single_link(&p, n, seed)?
        }
        Scenario::MultiLink(h) => {
            let mut p = MultiLinkParams::defaults(spec.links, *h);
            p.apply_config(&spec.params)?;
            simulate_multi_link(&p, n, seed)?
        }
        Scenario::FromCsv(_) => subsample(loaded.expect("loaded dataset"), n, seed)?,
    };
    Ok(ds.retain_event_bearing())
}

fn statistic(ds: &TrajectoryDataset, method: Method, baseline_t: usize) -> Option<f64> {
    match method {
        Method::Ours => sup_gap(ds).ok().map(|s| s.value),
        Method::Baseline => baseline_sup_gap(ds, baseline_t).ok().map(|r| r.statistic),
    }
}

/// Computes every cell of `spec` not listed in `skip`, in canonical order.
/// Cells run in parallel; each simulates its dataset once for all methods.
pub fn run_curves(spec: &ExperimentSpec, skip: &BTreeSet<CellKey>) -> Result<Vec<CurveRow>> {
    spec.validate()?;
    let mut methods = spec.methods.clone();
    methods.sort_unstable();
    methods.dedup();

    let mut jobs = Vec::new();
    for (si, scenario) in spec.scenarios.iter().enumerate() {
        for &n in &spec.ns {
            for &seed in &spec.seeds {
                let todo: Vec<Method> = methods
                    .iter()
                    .copied()
                    .filter(|&method| {
                        !skip.contains(&CellKey {
                            scenario: scenario.label().to_string(),
                            n,
                            seed,
                            method,
                        })
                    })
                    .collect();
                if !todo.is_empty() {
                    jobs.push((si, n, seed, todo));
                }
            }
        }
    }

    let loaded: Vec<Option<TrajectoryDataset>> = spec
        .scenarios
        .iter()
        .map(|s| match s {
            Scenario::FromCsv(path) => read_trajectory_csv(path).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;

    let results = par::map_slice(&jobs, |(si, n, seed, todo)| {
        let scenario = &spec.scenarios[*si];
        let ds = cell_dataset(scenario, spec, loaded[*si].as_ref(), *n, *seed);
        todo.iter()
            .map(|&method| CurveRow {
                key: CellKey {
                    scenario: scenario.label().to_string(),
                    n: *n,
                    seed: *seed,
                    method,
                },
                statistic: ds
                    .as_ref()
                    .ok()
                    .and_then(|ds| statistic(ds, method, spec.baseline_t)),
            })
            .collect::<Vec<_>>()
    });
    let mut rows: Vec<CurveRow> = results.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    rows.dedup_by(|a, b| a.key == b.key);
    Ok(rows)
}

pub fn read_curves<R: Read>(reader: R) -> Result<Vec<CurveRow>> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVES_HEADER => {}
        Some(_) => {
            return Err(Error::parse(
                1,
                format!("expected header `{CURVES_HEADER}`"),
            ))
        }
        None => return Ok(Vec::new()),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i as u64 + 1;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::parse(
                    line,
                    format!("expected 5 fields, found {}", f.len()),
                ));
            }
            let bad = |what: &str| Error::parse(line, format!("invalid {what}"));
            Ok(CurveRow {
                key: CellKey {
                    scenario: f[0].to_string(),
                    n: f[1].parse().map_err(|_| bad("N"))?,
                    seed: f[2].parse().map_err(|_| bad("seed"))?,
                    method: Method::parse(f[3]).map_err(|_| bad("method"))?,
                },
                statistic: match f[4] {
                    "NA" => None,
                    v => Some(v.parse().map_err(|_| bad("statistic"))?),
                },
            })
        })
        .collect()
}

/// Runs the cells of `spec` missing from `path` and appends them. Existing
/// rows are never rewritten. Returns the number of rows added.
pub fn append_curves(spec: &ExperimentSpec, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let existing = match File::open(path) {
        Ok(f) => Some(read_curves(f)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let skip: BTreeSet<CellKey> = existing.iter().flatten().map(|r| r.key.clone()).collect();
    let rows = run_curves(spec, &skip)?;
    let needs_header = existing.is_none() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    if needs_header {
        writeln!(w, "{CURVES_HEADER}")?;
    }
    for row in &rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(rows.len())
}

/// Mean of the present statistics of the rows matching `scenario`, `n` and
/// `method`, with the count of missing ones.
pub fn cell_mean(
    rows: &[CurveRow],
    scenario: &str,
    n: usize,
    method: Method,
) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut missing = 0usize;
    for r in rows
        .iter()
        .filter(|r| r.key.scenario == scenario && r.key.n == n && r.key.method == method)
    {
        match r.statistic {
            Some(v) => {
                sum += v;
                count += 1;
            }
            None => missing += 1,
        }
    }
    ((count > 0).then(|| sum / count as f64), missing)
}
