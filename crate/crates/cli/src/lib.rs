//! Command-line front end: scenario loading, region search, experiment-cache
//! persistence and CSV/JSON export.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use vregion_core::constraints::{ConstraintError, ExperimentCache, Verdict};
use vregion_core::decision::{predict, run_pipeline, DecisionError, ModelKind};
use vregion_core::domain::{DecisionPair, StatePoint};
use vregion_core::scenario::{CaseStudy, ModelPair, ScenarioError};
use vregion_core::search::{
    fresh_caches, grid_oracle, search_with_caches, ProbeSource, ProbeStats, RegionProblem,
    SearchConfig, SearchError, SearchRun,
};
use vregion_core::vehicle::Trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "vregion",
    version,
    about = "Validity-region discovery for a lane-change surrogate model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search the validity region of every surrounding car and write
    /// region.csv, boundary.csv and summary.json.
    Search(SearchArgs),
    /// Probe a single state of one car.
    CheckPoint(CheckPointArgs),
    /// Dump both models' traces as CSV.
    Simulate(SimulateArgs),
    /// Exhaustive grid evaluation of one car, for comparison with `search`.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    ConstantAcceleration,
    HighValidity,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::ConstantAcceleration => ModelKind::ConstantAcceleration,
            ModelArg::HighValidity => ModelKind::HighValidity,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario file; the bundled three-lane scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Override the surrogate model.
    #[arg(long, value_enum)]
    pub surrogate: Option<ModelArg>,
    /// Override the reference model.
    #[arg(long, value_enum)]
    pub reference: Option<ModelArg>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Grid step for relative position, m.
    #[arg(long)]
    pub step_p: Option<f64>,
    /// Grid step for velocity, m/s.
    #[arg(long)]
    pub step_v: Option<f64>,
    /// Grid step for acceleration, m/s^2.
    #[arg(long)]
    pub step_a: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Bisection tolerance as a fraction of each axis step.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Experiment cache (newline-delimited JSON), read if present and
    /// rewritten after the run.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Probe budget per car.
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Disable monotone inference.
    #[arg(long)]
    pub no_inference: bool,
    /// Reserved; every algorithm is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    /// Surrounding car, by index or name.
    #[arg(long)]
    pub car: String,
    /// Position relative to the ego, m.
    #[arg(long, allow_hyphen_values = true)]
    pub p: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub v: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CheckPointArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub no_inference: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Perturb one car before simulating (needs --p, --v and --a).
    #[arg(long, requires_all = ["p", "v", "a"])]
    pub car: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Output directory for traces.csv; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub car: String,
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Output directory for oracle.csv; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cache {path}, line {line}: {message}")]
    Cache {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Search(SearchError::Budget { .. } | SearchError::PartialResult { .. }) => {
                EXIT_BUDGET
            }
            CliError::Decision(DecisionError::Model(
                vregion_core::vehicle::ModelError::Divergence { .. },
            )) => EXIT_DIVERGENCE,
            _ => EXIT_CONFIG,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Runs a parsed command, writing human-readable output to `out`, and
/// returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Search(args) => run_search(&args, out),
        Command::CheckPoint(args) => check_point(&args, out),
        Command::Simulate(args) => simulate(&args, out),
        Command::Oracle(args) => oracle(&args, out),
    }
}

pub fn load_case(args: &ScenarioArgs) -> Result<CaseStudy, CliError> {
    let case = match &args.scenario {
        Some(path) => CaseStudy::load(path)?,
        None => CaseStudy::bundled(),
    };
    let models = ModelPair {
        surrogate: args
            .surrogate
            .map(Into::into)
            .unwrap_or(case.models.surrogate),
        reference: args
            .reference
            .map(Into::into)
            .unwrap_or(case.models.reference),
    };
    Ok(case.with_models(models))
}

fn steps(case: &CaseStudy, grid: &GridArgs) -> [f64; 3] {
    let s = case.search.step;
    [
        grid.step_p.unwrap_or(s.position_m),
        grid.step_v.unwrap_or(s.velocity_mps),
        grid.step_a.unwrap_or(s.acceleration_mps2),
    ]
}

pub fn search_config(case: &CaseStudy, args: &SearchArgs) -> Result<SearchConfig, CliError> {
    let step = steps(case, &args.grid);
    let tolerance = match args.tolerance {
        Some(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(CliError::Config(format!(
                "--tolerance must lie in (0, 1], got {f}"
            )));
        }
        Some(f) => step.iter().map(|s| s * f).collect(),
        None => {
            let t = case.search.tolerance;
            vec![t.position_m, t.velocity_mps, t.acceleration_mps2]
        }
    };
    if args.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let config = SearchConfig::new(
        tolerance,
        step.to_vec(),
        args.max_evals.unwrap_or(case.search.max_evals),
    )
    .with_inference(!args.no_inference)
    .with_workers(args.workers);
    for t in case.targets() {
        config.validate(&t.space)?;
    }
    Ok(config)
}

pub fn resolve_car(case: &CaseStudy, car: &str) -> Result<usize, CliError> {
    let targets = case.targets();
    if let Ok(i) = car.parse::<usize>() {
        if i < targets.len() {
            return Ok(i);
        }
        return Err(CliError::Config(format!(
            "car index {i} out of range (0..{})",
            targets.len()
        )));
    }
    targets
        .iter()
        .position(|t| t.label == car)
        .ok_or_else(|| CliError::Config(format!("no surrounding car named {car:?}")))
}

fn car_point(case: &CaseStudy, car: usize, p: f64, v: f64, a: f64) -> Result<StatePoint, CliError> {
    let space = &case.targets()[car].space;
    let point = space
        .point(vec![p, v, a])
        .map_err(|e| CliError::Config(e.to_string()))?;
    for d in space.dimensions() {
        let x = point.value(&d.name).expect("label of its own space");
        if !d.contains(x) {
            return Err(CliError::Config(format!(
                "{} = {x} outside [{}, {}]",
                d.name, d.lower, d.upper
            )));
        }
    }
    Ok(point)
}

/// One line of the experiment cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheLine {
    pub car: usize,
    pub position_m: f64,
    pub velocity_mps: f64,
    pub acceleration_mps2: f64,
    pub verdict: Verdict,
    pub source: vregion_core::constraints::RecordSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<DecisionPair>,
}

/// Reads a cache file into fresh caches; a missing file yields empty caches.
pub fn load_cache(
    path: &Path,
    case: &CaseStudy,
    mut caches: Vec<ExperimentCache>,
) -> Result<Vec<ExperimentCache>, CliError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(caches),
        Err(e) => return Err(io_err(path)(e)),
    };
    let bad = |line: usize, message: String| CliError::Cache {
        path: path.display().to_string(),
        line,
        message,
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheLine = serde_json::from_str(&line).map_err(|e| bad(n + 1, e.to_string()))?;
        let target = case
            .targets()
            .get(rec.car)
            .ok_or_else(|| bad(n + 1, format!("car {} does not exist", rec.car)))?;
        let point = target
            .space
            .point(vec![
                rec.position_m,
                rec.velocity_mps,
                rec.acceleration_mps2,
            ])
            .map_err(|e| bad(n + 1, e.to_string()))?;
        caches[rec.car]
            .record(point, rec.verdict, rec.decisions)
            .map_err(|e: ConstraintError| bad(n + 1, e.to_string()))?;
    }
    Ok(caches)
}

pub fn write_cache(path: &Path, caches: &[ExperimentCache]) -> Result<(), CliError> {
    let mut text = String::new();
    for (car, cache) in caches.iter().enumerate() {
        for r in cache.records() {
            let line = CacheLine {
                car,
                position_m: r.point.get(0),
                velocity_mps: r.point.get(1),
                acceleration_mps2: r.point.get(2),
                verdict: r.verdict,
                source: r.source,
                decisions: r.detail.clone(),
            };
            text.push_str(&serde_json::to_string(&line).expect("cache lines serialize"));
            text.push('\n');
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

fn fmt6(x: f64) -> String {
    // avoid "-0.000000"
    let s = format!("{x:.6}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn region_csv(run: &SearchRun) -> String {
    let mut s = String::from(
        "car_index,position_m,velocity_mps,acceleration_mps2,decision_surrogate,decision_reference,agree,provenance\n",
    );
    for (car, point, entry) in run.region.entries() {
        let (ds, dr) = match &entry.detail {
            Some(pair) => (pair.surrogate.to_string(), pair.reference.to_string()),
            None => (String::new(), String::new()),
        };
        let provenance = match entry.provenance {
            vregion_core::search::Provenance::Direct => "direct",
            vregion_core::search::Provenance::Inferred => "inferred",
        };
        let _ = writeln!(
            s,
            "{car},{},{},{},{ds},{dr},{},{provenance}",
            fmt6(point.get(0)),
            fmt6(point.get(1)),
            fmt6(point.get(2)),
            entry.verdict.is_valid()
        );
    }
    s
}

const AXES: [&str; 3] = ["position_m", "velocity_mps", "acceleration_mps2"];

pub fn boundary_csv(run: &SearchRun) -> String {
    let mut s =
        String::from("car_index,axis,position_m,velocity_mps,acceleration_mps2,bracket_width\n");
    for b in run.region.boundary() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            b.target,
            AXES[b.axis],
            fmt6(b.point.get(0)),
            fmt6(b.point.get(1)),
            fmt6(b.point.get(2)),
            fmt6(b.bracket_width)
        );
    }
    s
}

#[derive(Debug, Serialize)]
pub struct CarSummary {
    pub car_index: usize,
    pub name: String,
    pub grid_points: usize,
    pub agree_points: usize,
    pub stats: ProbeStats,
    pub boundaries: Vec<BoundarySummary>,
}

#[derive(Debug, Serialize)]
pub struct BoundarySummary {
    pub axis: &'static str,
    pub position_m: f64,
    pub velocity_mps: f64,
    pub acceleration_mps2: f64,
    pub bracket_width: f64,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub status: &'static str,
    pub partial: bool,
    pub exit_code: i32,
    pub surrogate: ModelKind,
    pub reference: ModelKind,
    pub inference: bool,
    pub workers: usize,
    pub total_probes: usize,
    pub direct_evaluations: usize,
    pub cache_hits: usize,
    pub inferred: usize,
    pub infeasible_probes: usize,
    pub divergences: usize,
    pub region_points: usize,
    pub agree_points: usize,
    pub overrides: usize,
    pub cars: Vec<CarSummary>,
    pub wall_time_s: f64,
}

fn summarize(
    case: &CaseStudy,
    config: &SearchConfig,
    run: &SearchRun,
    partial: bool,
    exit_code: i32,
    wall: f64,
) -> Summary {
    let total = run.region.stats_total();
    let cars = case
        .targets()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let entries: Vec<_> = run.region.entries().filter(|(c, _, _)| *c == i).collect();
            CarSummary {
                car_index: i,
                name: t.label.clone(),
                grid_points: entries.len(),
                agree_points: entries
                    .iter()
                    .filter(|(_, _, e)| e.verdict.is_valid())
                    .count(),
                stats: run.region.stats().get(i).copied().unwrap_or_default(),
                boundaries: run
                    .region
                    .boundary()
                    .iter()
                    .filter(|b| b.target == i)
                    .map(|b| BoundarySummary {
                        axis: AXES[b.axis],
                        position_m: b.point.get(0),
                        velocity_mps: b.point.get(1),
                        acceleration_mps2: b.point.get(2),
                        bracket_width: b.bracket_width,
                    })
                    .collect(),
            }
        })
        .collect();
    Summary {
        status: if partial { "partial" } else { "complete" },
        partial,
        exit_code,
        surrogate: case.models.surrogate,
        reference: case.models.reference,
        inference: config.inference,
        workers: config.workers,
        total_probes: total.answered(),
        direct_evaluations: total.direct,
        cache_hits: total.cached,
        inferred: total.inferred,
        infeasible_probes: total.infeasible,
        divergences: total.divergences,
        region_points: run.region.len(),
        agree_points: run
            .region
            .entries()
            .filter(|(_, _, e)| e.verdict.is_valid())
            .count(),
        overrides: run.region.overrides(),
        cars,
        wall_time_s: wall,
    }
}

pub fn run_search(args: &SearchArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let start = Instant::now();
    let case = load_case(&args.scenario)?;
    let config = search_config(&case, args)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let _ = writeln!(out, "constraints: {}", case.constraints.names().join(", "));

    let mut caches = fresh_caches(&case, &config);
    if let Some(path) = &args.cache {
        caches = load_cache(path, &case, caches)?;
    }
    let (run, partial) = match search_with_caches(&case, &config, caches) {
        Ok(run) => (run, false),
        Err(SearchError::PartialResult { partial }) => (*partial, true),
        Err(e) => return Err(e.into()),
    };
    let divergences = run.region.stats_total().divergences;
    let code = if partial {
        EXIT_BUDGET
    } else if divergences > 0 {
        EXIT_DIVERGENCE
    } else {
        EXIT_OK
    };

    let region_path = args.out.join("region.csv");
    fs::write(&region_path, region_csv(&run)).map_err(io_err(&region_path))?;
    let boundary_path = args.out.join("boundary.csv");
    fs::write(&boundary_path, boundary_csv(&run)).map_err(io_err(&boundary_path))?;
    if let Some(path) = &args.cache {
        write_cache(path, &run.caches)?;
    }
    let summary = summarize(
        &case,
        &config,
        &run,
        partial,
        code,
        start.elapsed().as_secs_f64(),
    );
    let summary_path = args.out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, json + "\n").map_err(io_err(&summary_path))?;

    let _ = writeln!(
        out,
        "{}: {} grid points, {} agree; probes {} (direct {}, cached {}, inferred {})",
        summary.status,
        summary.region_points,
        summary.agree_points,
        summary.total_probes,
        summary.direct_evaluations,
        summary.cache_hits,
        summary.inferred
    );
    if partial {
        let _ = writeln!(
            out,
            "probe budget of {} per car exhausted; artifacts are partial",
            config.max_evals
        );
    }
    if divergences > 0 {
        let _ = writeln!(
            out,
            "reference model diverged at {divergences} points (classified invalid)"
        );
    }
    Ok(code)
}

pub fn check_point(args: &CheckPointArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let case = load_case(&args.scenario)?;
    let car = resolve_car(&case, &args.point.car)?;
    let raw = case.targets()[car]
        .space
        .point(vec![args.point.p, args.point.v, args.point.a])
        .map_err(|e| CliError::Config(e.to_string()))?;
    let _ = writeln!(out, "car: {car} ({})", case.targets()[car].label);
    let _ = writeln!(out, "point: {raw}");
    // infeasibility is informational, so it is reported before the bounds check
    let violations = case.violations(car, &raw).map_err(ScenarioError::from)?;
    if !violations.is_empty() {
        let _ = writeln!(out, "infeasible: {}", violations.join(", "));
        return Ok(EXIT_OK);
    }
    let point = car_point(&case, car, args.point.p, args.point.v, args.point.a)?;
    let _ = writeln!(out, "feasible: true");

    let config =
        SearchConfig::new(vec![1.0; 3], vec![1.0; 3], 1).with_inference(!args.no_inference);
    let mut caches = fresh_caches(&case, &config);
    if let Some(path) = &args.cache {
        caches = load_cache(path, &case, caches)?;
    }
    let outcome = case.decision_probe(car, &point, &mut caches[car], !args.no_inference)?;
    let (ds, dr) = match &outcome.detail {
        Some(pair) => (pair.surrogate.to_string(), pair.reference.to_string()),
        None => ("unknown".to_string(), "unknown".to_string()),
    };
    let source = match outcome.source {
        ProbeSource::Direct => "direct",
        ProbeSource::Cached => "cached",
        ProbeSource::Inferred => "inferred",
        ProbeSource::Infeasible => "infeasible",
    };
    let _ = writeln!(out, "decision_surrogate: {ds}");
    let _ = writeln!(out, "decision_reference: {dr}");
    let _ = writeln!(out, "agree: {}", outcome.verdict.is_valid());
    let _ = writeln!(out, "source: {source}");
    if let Some(path) = &args.cache {
        write_cache(path, &caches)?;
    }
    let diverged = outcome.detail.as_ref().is_some_and(|d| d.diverged);
    if diverged {
        let _ = writeln!(out, "diverged: reference model hit its iteration cap");
    }
    Ok(if diverged { EXIT_DIVERGENCE } else { EXIT_OK })
}

fn trace_rows(s: &mut String, model: &str, trace: &Trace, names: &[String]) {
    for (v, states) in trace.states.iter().enumerate() {
        for (k, st) in states.iter().enumerate() {
            let _ = writeln!(
                s,
                "{model},{},{},{},{},{},{}",
                fmt6(trace.times[k]),
                names[v],
                st.lane,
                fmt6(st.position_m),
                fmt6(st.velocity_mps),
                fmt6(st.acceleration_mps2)
            );
        }
    }
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let case = load_case(&args.scenario)?;
    let scenario = match &args.car {
        Some(car) => {
            let i = resolve_car(&case, car)?;
            let (p, v, a) = (
                args.p.unwrap_or_default(),
                args.v.unwrap_or_default(),
                args.a.unwrap_or_default(),
            );
            let point = car_point(&case, i, p, v, a)?;
            case.perturbed(i, &point)
        }
        None => case.scenario.clone(),
    };
    let names: Vec<String> = scenario.vehicles().iter().map(|v| v.name.clone()).collect();
    let mut csv =
        String::from("model,time_s,vehicle,lane,position_m,velocity_mps,acceleration_mps2\n");
    let mut report = String::new();
    let mut code = EXIT_OK;
    for (label, kind) in [
        ("surrogate", case.models.surrogate),
        ("reference", case.models.reference),
    ] {
        let (trace, converged) = predict(kind, &scenario).map_err(DecisionError::from)?;
        trace_rows(&mut csv, label, &trace, &names);
        let outcome = run_pipeline(kind, &scenario, &case.decision)?;
        if !converged {
            code = EXIT_DIVERGENCE;
        }
        let _ = writeln!(
            report,
            "{label}: {} (min front gap {:.3} m{})",
            outcome.decision.label(),
            outcome.quantities.min_front_gap_m,
            if converged { "" } else { ", not converged" }
        );
    }
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("traces.csv");
            fs::write(&path, csv).map_err(io_err(&path))?;
            let _ = out.write_all(report.as_bytes());
        }
        None => {
            let _ = out.write_all(csv.as_bytes());
            eprint!("{report}");
        }
    }
    Ok(code)
}

pub fn oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let case = load_case(&args.scenario)?;
    let car = resolve_car(&case, &args.car)?;
    let step = steps(&case, &args.grid);
    let target = &case.targets()[car];
    let mut rows = String::from(
        "car_index,position_m,velocity_mps,acceleration_mps2,feasible,decision_surrogate,decision_reference,agree\n",
    );
    let mut failure = None;
    let mut probe = |p: &StatePoint| -> bool {
        let violations = match case.violations(car, p) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(ScenarioError::from(e));
                return false;
            }
        };
        let feasible = violations.is_empty();
        let (ds, dr, agree) = if feasible {
            let e = case.evaluate(car, p);
            match e.detail {
                Some(pair) => (
                    pair.surrogate.to_string(),
                    pair.reference.to_string(),
                    e.agree,
                ),
                None => (String::new(), String::new(), e.agree),
            }
        } else {
            (String::new(), String::new(), false)
        };
        let _ = writeln!(
            rows,
            "{car},{},{},{},{feasible},{ds},{dr},{}",
            fmt6(p.get(0)),
            fmt6(p.get(1)),
            fmt6(p.get(2)),
            if feasible {
                agree.to_string()
            } else {
                String::new()
            }
        );
        feasible && agree
    };
    let budget = args.max_evals.unwrap_or(case.search.max_evals);
    let grid = grid_oracle(target.space.dimensions(), &step, &mut probe, budget)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("oracle.csv");
            fs::write(&path, rows).map_err(io_err(&path))?;
            let agree = grid.iter().filter(|(_, m)| *m).count();
            let _ = writeln!(
                out,
                "{} grid points, {agree} feasible and agreeing",
                grid.len()
            );
        }
        None => {
            let _ = out.write_all(rows.as_bytes());
        }
    }
    Ok(EXIT_OK)
}
