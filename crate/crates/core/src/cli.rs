//! The `gravcat` command line.
//!
//! One subcommand per analysis. Every output file gets a `<file>.meta.json`
//! sidecar recording the tool version, the resolved configuration and the
//! SHA-256 of every input read. The thread count is deliberately left out of
//! the sidecar: outputs are byte-identical for any `--threads`.
//!
//! Exit codes: 0 success, 2 usage, 3 unreadable or malformed input,
//! 4 computation error. Failures print one JSON object on one line to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::access::{self, AccessibilityResult, Intrazonal};
use crate::efficiency::{self, ModalSpeedLimit};
use crate::equity::{self, Direction, Factor, SediConfig, Weighting};
use crate::error::Error;
use crate::impedance::{self, ImpedanceParams, ParamsRecord, ParamsRegistry};
use crate::io::{self, fmt_f64, json_number, ParseError};
use crate::model::{population_weights, Basis, CostMatrix, Mode, Region, ZoneSet};
use crate::netgen::{self, CityConfig, Layout, Sprawl};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "GRAVCAT_THREADS";

const SWEEP_TAUS: &str = "15,30,45,60,90";

#[derive(Debug, Parser)]
#[command(name = "gravcat", version, about = "Gravity accessibility, efficiency and equity analyses")]
struct Cli {
    /// Worker threads; defaults to GRAVCAT_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON object whose keys mirror the long flags; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
enum Command {
    /// Fit impedance parameters per (purpose, mode) from trip records.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Zonal accessibility at one threshold.
    #[command(args_override_self = true)]
    Access(AccessArgs),
    /// Population-weighted regional accessibility from a results file.
    #[command(args_override_self = true)]
    Aggregate(AggregateArgs),
    /// Zonal accessibility at several thresholds.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Contour versus gravity accessibility and the percent overestimation.
    #[command(args_override_self = true)]
    ContourCompare(ContourArgs),
    /// Observed over straight-line ideal accessibility.
    #[command(args_override_self = true)]
    Efficiency(EfficiencyArgs),
    /// Composite disadvantage index from demographic factors.
    #[command(args_override_self = true)]
    Sedi(SediArgs),
    /// Opportunity improvement potential per zone.
    #[command(args_override_self = true)]
    Improve(ImproveArgs),
    /// Rank change between two improvement-potential files.
    #[command(args_override_self = true)]
    RankShift(RankShiftArgs),
    /// Generate a synthetic city and its travel-time matrices.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Access(_) => "access",
            Command::Aggregate(_) => "aggregate",
            Command::Sweep(_) => "sweep",
            Command::ContourCompare(_) => "contour-compare",
            Command::Efficiency(_) => "efficiency",
            Command::Sedi(_) => "sedi",
            Command::Improve(_) => "improve",
            Command::RankShift(_) => "rank-shift",
            Command::Synth(_) => "synth",
        }
    }
}

const SUBCOMMANDS: [&str; 10] =
    ["fit", "access", "aggregate", "sweep", "contour-compare", "efficiency", "sedi", "improve", "rank-shift", "synth"];

#[derive(Debug, Args, Serialize)]
struct Network {
    #[arg(long, default_value = "zones.csv")]
    zones: PathBuf,
    /// Travel-time matrix, CSV or GCAT01 binary; defaults to matrix_<mode>.csv.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Pairs slower than this are dropped when reading a CSV matrix;
    /// defaults to the largest threshold requested.
    #[arg(long)]
    max_threshold: Option<f64>,
    /// Single-column `zone_id` file; defaults to every zone.
    #[arg(long)]
    region: Option<PathBuf>,
    /// `zone_id,minutes` overrides for intrazonal travel time.
    #[arg(long)]
    intrazonal: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct Impedance {
    /// Fitted parameters, looked up by (kind, mode).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Use a unit weight inside the threshold instead of fitted parameters.
    #[arg(long)]
    contour: bool,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long, default_value = "trips.csv")]
    trips: PathBuf,
    /// Survival-curve bin width, minutes.
    #[arg(long, default_value_t = impedance::DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    #[arg(long, default_value = "params.json")]
    out: PathBuf,
    /// Also write smoothed duration CDFs (`purpose,mode,minutes,cumulative`).
    #[arg(long)]
    cdf_out: Option<PathBuf>,
    /// CDF smoothing window, minutes; 0 gives the exact empirical steps.
    #[arg(long, default_value_t = 5.0)]
    smoothing: f64,
}

#[derive(Debug, Args, Serialize)]
struct AccessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    network: Network,
    #[arg(long, default_value = "opportunities.csv")]
    opportunities: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    impedance: Impedance,
    #[arg(long)]
    kind: String,
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    tau: f64,
    /// Results CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    geojson: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    network: Network,
    #[arg(long, default_value = "opportunities.csv")]
    opportunities: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    impedance: Impedance,
    #[arg(long)]
    kind: String,
    #[arg(long)]
    mode: Mode,
    #[arg(long, value_delimiter = ',', default_value = SWEEP_TAUS)]
    taus: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    geojson: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AggregateArgs {
    #[arg(long, default_value = "zones.csv")]
    zones: PathBuf,
    #[arg(long, default_value = "results.csv")]
    results: PathBuf,
    #[arg(long)]
    region: Option<PathBuf>,
    #[arg(long, default_value = "population")]
    basis: Basis,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ContourArgs {
    #[command(flatten)]
    #[serde(flatten)]
    network: Network,
    #[arg(long, default_value = "opportunities.csv")]
    opportunities: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    kind: String,
    #[arg(long)]
    mode: Mode,
    #[arg(long, value_delimiter = ',', default_value = SWEEP_TAUS)]
    taus: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-threshold mean overestimation table.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EfficiencyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    network: Network,
    #[arg(long, default_value = "opportunities.csv")]
    opportunities: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    impedance: Impedance,
    #[arg(long)]
    kind: String,
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    tau: f64,
    /// Maximum modal speed, mi/h; defaults to 60, 4 and 16 for drive, walk and bike.
    #[arg(long)]
    vmax: Option<f64>,
    #[arg(long, default_value = "population")]
    basis: Basis,
    /// Per-zone efficiency CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregate table keyed by (region, kind, mode, tau).
    #[arg(long)]
    aggregate_out: Option<PathBuf>,
    #[arg(long)]
    geojson: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SediArgs {
    #[arg(long, default_value = "demographics.csv")]
    demographics: PathBuf,
    #[arg(long)]
    region: Option<PathBuf>,
    /// Factors where a larger value means less disadvantage.
    #[arg(long, value_delimiter = ',')]
    invert: Vec<String>,
    /// Six factor weights in column order.
    #[arg(long, value_delimiter = ',')]
    factor_weights: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Needs `--zones` for centroids.
    #[arg(long)]
    geojson: Option<PathBuf>,
    #[arg(long)]
    zones: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ImproveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    network: Network,
    #[command(flatten)]
    #[serde(flatten)]
    impedance: Impedance,
    /// Opportunity kind whose parameters apply.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value = "population")]
    basis: Basis,
    /// Disadvantage index (`zone_id,sedi`); enables weighting by `1 + λ·SEDI`.
    #[arg(long)]
    sedi: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    geojson: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RankShiftArgs {
    #[arg(long)]
    unweighted: PathBuf,
    #[arg(long)]
    weighted: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Lattice of ROWSxCOLS zones (default 10x10).
    #[arg(long, conflicts_with = "radial")]
    grid: Option<String>,
    /// RINGSxSPOKES around a center zone.
    #[arg(long)]
    radial: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge-removal fraction and edge speed decay, e.g. `0.3,1.0`.
    #[arg(long, value_delimiter = ',')]
    sprawl: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "drive,walk,bike")]
    modes: Vec<Mode>,
    #[arg(long, default_value_t = 90.0)]
    max_threshold: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write GCAT01 binary matrices.
    #[arg(long)]
    binary: bool,
}

/// Why a run stopped.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Parse { file: PathBuf, error: ParseError },
    Compute(Error),
    Output { file: PathBuf, message: String },
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Parse { .. } => EXIT_PARSE,
            Failure::Compute(_) | Failure::Output { .. } => EXIT_COMPUTE,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Failure::Usage(message) => json!({ "error": "usage", "code": EXIT_USAGE, "message": message }),
            Failure::Parse { file, error } => json!({
                "error": "parse",
                "code": EXIT_PARSE,
                "file": file.display().to_string(),
                "line": error.line(),
                "message": error.to_string(),
            }),
            Failure::Compute(e) => json!({ "error": "computation", "code": EXIT_COMPUTE, "message": e.to_string() }),
            Failure::Output { file, message } => json!({
                "error": "output",
                "code": EXIT_COMPUTE,
                "file": file.display().to_string(),
                "message": message,
            }),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Runs one command line (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match execute(args) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            failure.code()
        }
    }
}

fn execute(args: Vec<OsString>) -> Outcome<()> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(Failure::Usage(e.to_string().trim().lines().next().unwrap_or_default().to_string()));
        }
    };
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {threads} threads: {e}")))?;
    let mut session = Session::new(&cli.command)?;
    pool.install(|| dispatch(&cli.command, &mut session))
}

fn resolve_threads(flag: Option<usize>) -> Outcome<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map_err(|_| Failure::Usage(format!("{THREADS_ENV}={v} is not a thread count")))
        }
        _ => Ok(0),
    }
}

/// Splices `--config file.json` into the argument list right after the
/// subcommand, so flags given explicitly later on override it.
fn expand_config(args: Vec<OsString>) -> Outcome<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            config = Some(PathBuf::from(iter.next().ok_or_else(|| Failure::Usage("--config needs a path".into()))?));
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let bytes = fs::read(&path).map_err(|e| Failure::Parse { file: path.clone(), error: e.into() })?;
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::Parse { file: path.clone(), error: ParseError::Json(e.to_string()) })?;
    let Value::Object(map) = value else {
        return Err(Failure::Parse { file: path, error: ParseError::Json("config must be a JSON object".into()) });
    };
    let mut flags = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match value {
            Value::Bool(true) => {
                flags.push(OsString::from(flag));
                continue;
            }
            Value::Bool(false) | Value::Null => continue,
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            Value::Object(_) => return Err(Failure::Usage(format!("config key '{key}' cannot be an object"))),
        };
        flags.push(OsString::from(flag));
        flags.push(OsString::from(text));
    }
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or_else(|| Failure::Usage("no subcommand given".into()))?;
    rest.splice(at + 1..at + 1, flags);
    Ok(rest)
}

/// Inputs read and outputs written during one run.
struct Session {
    subcommand: &'static str,
    config: Value,
    inputs: Vec<(String, String)>,
}

impl Session {
    fn new(command: &Command) -> Outcome<Self> {
        let mut config = serde_json::to_value(command).map_err(|e| Failure::Usage(e.to_string()))?;
        if let Value::Object(map) = &mut config {
            map.remove("subcommand");
        }
        Ok(Session { subcommand: command.name(), config, inputs: Vec::new() })
    }

    fn read(&mut self, path: &Path) -> Outcome<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Failure::Parse { file: path.to_path_buf(), error: e.into() })?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push((path.display().to_string(), hex));
        Ok(bytes)
    }

    fn parse<T>(&mut self, path: &Path, parser: impl FnOnce(Cursor<Vec<u8>>) -> Result<T, ParseError>) -> Outcome<T> {
        let bytes = self.read(path)?;
        parser(Cursor::new(bytes)).map_err(|error| Failure::Parse { file: path.to_path_buf(), error })
    }

    fn metadata(&self, extra: &BTreeMap<String, Value>) -> Value {
        let inputs: Vec<Value> =
            self.inputs.iter().map(|(path, sha)| json!({ "path": path, "sha256": sha })).collect();
        let mut meta = json!({
            "tool": "gravcat",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": inputs,
        });
        for (k, v) in extra {
            meta[k.as_str()] = v.clone();
        }
        meta
    }

    /// Writes `bytes` to `path` (stdout when `None`) plus the metadata sidecar.
    fn emit(&self, path: Option<&Path>, bytes: &[u8], extra: &BTreeMap<String, Value>) -> Outcome<()> {
        let Some(path) = path else {
            let mut stdout = std::io::stdout().lock();
            return stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Output { file: "<stdout>".into(), message: e.to_string() });
        };
        let fail = |file: &Path, e: std::io::Error| Failure::Output { file: file.to_path_buf(), message: e.to_string() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| fail(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| fail(path, e))?;
        let sidecar = sidecar_path(path);
        let mut meta = serde_json::to_vec_pretty(&self.metadata(extra)).expect("metadata serializes");
        meta.push(b'\n');
        fs::write(&sidecar, meta).map_err(|e| fail(&sidecar, e))
    }
}

/// `<file>.meta.json` next to an output file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn buffer(write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Vec<u8> {
    let mut out = Vec::new();
    write(&mut out).expect("writing to memory cannot fail");
    out
}

fn no_extra() -> BTreeMap<String, Value> {
    BTreeMap::new()
}

fn dispatch(command: &Command, s: &mut Session) -> Outcome<()> {
    match command {
        Command::Fit(a) => fit(a, s),
        Command::Access(a) => access_cmd(a, s),
        Command::Aggregate(a) => aggregate_cmd(a, s),
        Command::Sweep(a) => sweep(a, s),
        Command::ContourCompare(a) => contour_compare(a, s),
        Command::Efficiency(a) => efficiency_cmd(a, s),
        Command::Sedi(a) => sedi_cmd(a, s),
        Command::Improve(a) => improve(a, s),
        Command::RankShift(a) => rank_shift(a, s),
        Command::Synth(a) => synth(a, s),
    }
}

fn check_positive(flag: &str, v: f64) -> Outcome<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{flag} must be a positive number, got {v}")))
    }
}

fn fit(a: &FitArgs, s: &mut Session) -> Outcome<()> {
    check_positive("bin-width", a.bin_width)?;
    if !(a.smoothing.is_finite() && a.smoothing >= 0.0) {
        return Err(Failure::Usage(format!("--smoothing must be nonnegative, got {}", a.smoothing)));
    }
    let trips = s.parse(&a.trips, io::parse_trips)?;
    let mut registry = ParamsRegistry::new();
    let mut skipped = BTreeMap::new();
    let fits = impedance::fit_all(&trips, a.bin_width);
    for ((purpose, mode), outcome) in &fits {
        match outcome {
            Ok(outcome) => registry.insert(ParamsRecord::from(outcome))?,
            Err(e) => {
                skipped.insert(format!("{purpose}/{mode}"), Value::String(e.to_string()));
            }
        }
    }
    if registry.is_empty() {
        let first = fits.into_iter().find_map(|(_, r)| r.err());
        return Err(first.unwrap_or_else(|| Error::InsufficientData("no trips".into())).into());
    }
    let mut extra = no_extra();
    extra.insert("skipped".into(), Value::Object(skipped.into_iter().collect()));
    let mut bytes = Vec::new();
    io::write_params(&mut bytes, &registry).expect("writing to memory cannot fail");
    s.emit(Some(&a.out), &bytes, &extra)?;

    if let Some(path) = &a.cdf_out {
        let mut rows = Vec::new();
        for ((purpose, mode), _) in &fits {
            for (t, p) in impedance::duration_cdf(&trips, purpose, *mode, a.smoothing)? {
                rows.push(vec![purpose.clone(), mode.to_string(), fmt_f64(t), fmt_f64(p)]);
            }
        }
        let bytes = buffer(|w| io::write_table(w, &["purpose", "mode", "minutes", "cumulative"], &rows));
        s.emit(Some(path), &bytes, &extra)?;
    }
    Ok(())
}

/// Zones, region, matrix and intrazonal overrides shared by the matrix-based commands.
struct Loaded {
    zones: ZoneSet,
    region: Region,
    matrix: CostMatrix,
    intrazonal: Intrazonal,
}

fn load_network(n: &Network, mode: Mode, largest_tau: f64, s: &mut Session) -> Outcome<Loaded> {
    let zones = s.parse(&n.zones, io::parse_zones)?;
    let region = load_region(n.region.as_deref(), &zones, s)?;
    let max_threshold = n.max_threshold.unwrap_or(largest_tau);
    check_positive("max-threshold", max_threshold)?;
    let default_matrix = PathBuf::from(format!("matrix_{mode}.csv"));
    let path = n.matrix.as_deref().unwrap_or(&default_matrix);
    let bytes = s.read(path)?;
    let parsed = if bytes.starts_with(io::MATRIX_MAGIC) {
        io::parse_matrix_binary(bytes.as_slice())
    } else {
        io::parse_matrix(bytes.as_slice(), mode, max_threshold, &zones.ids())
    };
    let matrix = parsed.map_err(|error| Failure::Parse { file: path.to_path_buf(), error })?;
    if matrix.mode() != mode {
        return Err(Failure::Usage(format!("{} holds a {} matrix, not {mode}", path.display(), matrix.mode())));
    }
    let intrazonal = match &n.intrazonal {
        Some(path) => Intrazonal::overrides(s.parse(path, io::parse_intrazonal)?)?,
        None => Intrazonal::Matrix,
    };
    Ok(Loaded { zones, region, matrix, intrazonal })
}

fn load_region(path: Option<&Path>, zones: &ZoneSet, s: &mut Session) -> Outcome<Region> {
    match path {
        Some(path) => Ok(Region::validated(s.parse(path, io::parse_region_ids)?, zones)?),
        None => Ok(Region::all(zones)),
    }
}

fn load_impedance(imp: &Impedance, kind: &str, mode: Mode, s: &mut Session) -> Outcome<ImpedanceParams> {
    match (&imp.params, imp.contour) {
        (Some(_), true) => Err(Failure::Usage("--params and --contour are mutually exclusive".into())),
        (None, false) => Err(Failure::Usage("gravity runs need --params (or --contour for a unit weight)".into())),
        (None, true) => Ok(ImpedanceParams::contour(kind, mode)),
        (Some(path), false) => Ok(s.parse(path, io::parse_params)?.get(kind, mode)?),
    }
}

fn results_geojson(zones: &ZoneSet, results: &[AccessibilityResult], meta: Value) -> Vec<u8> {
    let mut features = Vec::new();
    for r in results {
        for (zone, value) in r.iter() {
            let props = BTreeMap::from([
                ("kind".to_string(), json!(r.kind)),
                ("mode".to_string(), json!(r.mode)),
                ("tau".to_string(), json_number(Some(r.tau))),
                ("value".to_string(), json_number(Some(value))),
            ]);
            features.push((zone.to_string(), props));
        }
    }
    geojson(zones, &features, meta)
}

fn geojson(zones: &ZoneSet, features: &[(String, BTreeMap<String, Value>)], meta: Value) -> Vec<u8> {
    let mut out = Vec::new();
    io::write_geojson(&mut out, zones, features, Some(meta)).expect("features come from known zones");
    out
}

fn access_cmd(a: &AccessArgs, s: &mut Session) -> Outcome<()> {
    let net = load_network(&a.network, a.mode, a.tau, s)?;
    let opps = s.parse(&a.opportunities, io::parse_opportunities)?;
    let params = load_impedance(&a.impedance, &a.kind, a.mode, s)?;
    let result = access::zonal_accessibility(&net.region, &net.matrix, &opps, &a.kind, &params, a.tau, &net.intrazonal)?;
    let results = [result];
    s.emit(a.out.as_deref(), &buffer(|w| io::write_results(w, &results)), &no_extra())?;
    if let Some(path) = &a.geojson {
        let bytes = results_geojson(&net.zones, &results, s.metadata(&no_extra()));
        s.emit(Some(path), &bytes, &no_extra())?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs, s: &mut Session) -> Outcome<()> {
    let largest = a.taus.iter().copied().fold(f64::NAN, f64::max);
    if a.taus.is_empty() {
        return Err(Failure::Usage("--taus needs at least one threshold".into()));
    }
    let net = load_network(&a.network, a.mode, largest, s)?;
    let opps = s.parse(&a.opportunities, io::parse_opportunities)?;
    let params = load_impedance(&a.impedance, &a.kind, a.mode, s)?;
    let results = access::threshold_sweep(&net.region, &net.matrix, &opps, &a.kind, &params, &a.taus, &net.intrazonal)?;
    s.emit(a.out.as_deref(), &buffer(|w| io::write_results(w, &results)), &no_extra())?;
    if let Some(path) = &a.geojson {
        let bytes = results_geojson(&net.zones, &results, s.metadata(&no_extra()));
        s.emit(Some(path), &bytes, &no_extra())?;
    }
    Ok(())
}

fn aggregate_cmd(a: &AggregateArgs, s: &mut Session) -> Outcome<()> {
    let zones = s.parse(&a.zones, io::parse_zones)?;
    let results = s.parse(&a.results, io::parse_results)?;
    let region_ids = match &a.region {
        Some(path) => Some(s.parse(path, io::parse_region_ids)?),
        None => None,
    };
    let mut rows = Vec::new();
    for r in &results {
        let region = match &region_ids {
            Some(ids) => Region::validated(ids.clone(), &zones)?,
            None => Region::validated(r.zone_ids().to_vec(), &zones)?,
        };
        let values: Vec<f64> = region
            .zone_ids()
            .iter()
            .map(|z| r.get(z).ok_or_else(|| Error::UnknownZone(format!("{z} has no {} result", r.kind))))
            .collect::<Result<_, _>>()?;
        let aligned = AccessibilityResult::new(r.kind.clone(), r.mode, r.tau, region.zone_ids().to_vec(), values)?;
        let weights = population_weights(&region, &zones, a.basis)?;
        let chi = access::aggregate(&region, &aligned, &weights)?;
        rows.push(vec![
            r.kind.clone(),
            r.mode.to_string(),
            fmt_f64(r.tau),
            a.basis.as_str().to_string(),
            region.len().to_string(),
            fmt_f64(chi),
        ]);
    }
    let header = ["kind", "mode", "tau", "basis", "zones", "aggregate"];
    s.emit(a.out.as_deref(), &buffer(|w| io::write_table(w, &header, &rows)), &no_extra())
}

fn contour_compare(a: &ContourArgs, s: &mut Session) -> Outcome<()> {
    if a.taus.is_empty() {
        return Err(Failure::Usage("--taus needs at least one threshold".into()));
    }
    let largest = a.taus.iter().copied().fold(f64::NAN, f64::max);
    let net = load_network(&a.network, a.mode, largest, s)?;
    let opps = s.parse(&a.opportunities, io::parse_opportunities)?;
    let params = s.parse(&a.params, io::parse_params)?.get(&a.kind, a.mode)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &tau in &a.taus {
        let o = access::contour_overestimation(&net.region, &net.matrix, &opps, &a.kind, &params, tau, &net.intrazonal)?;
        for (k, zone) in net.region.zone_ids().iter().enumerate() {
            rows.push(vec![
                zone.clone(),
                a.kind.clone(),
                a.mode.to_string(),
                fmt_f64(tau),
                fmt_f64(o.gravity.values()[k]),
                fmt_f64(o.contour.values()[k]),
                o.percent[k].map(fmt_f64).unwrap_or_default(),
            ]);
        }
        summary.push(vec![
            a.kind.clone(),
            a.mode.to_string(),
            fmt_f64(tau),
            o.mean_percent().map(fmt_f64).unwrap_or_default(),
            o.undefined().len().to_string(),
        ]);
    }
    let header = ["zone_id", "kind", "mode", "tau", "gravity", "contour", "overestimation_pct"];
    s.emit(a.out.as_deref(), &buffer(|w| io::write_table(w, &header, &rows)), &no_extra())?;
    if let Some(path) = &a.summary_out {
        let header = ["kind", "mode", "tau", "mean_overestimation_pct", "undefined_zones"];
        s.emit(Some(path), &buffer(|w| io::write_table(w, &header, &summary)), &no_extra())?;
    }
    Ok(())
}

fn efficiency_cmd(a: &EfficiencyArgs, s: &mut Session) -> Outcome<()> {
    let speed = match a.vmax {
        Some(mph) => ModalSpeedLimit::new(a.mode, mph)?,
        None => ModalSpeedLimit::default_for(a.mode),
    };
    let net = load_network(&a.network, a.mode, a.tau, s)?;
    let opps = s.parse(&a.opportunities, io::parse_opportunities)?;
    let params = load_impedance(&a.impedance, &a.kind, a.mode, s)?;
    let observed = access::zonal_accessibility(&net.region, &net.matrix, &opps, &a.kind, &params, a.tau, &net.intrazonal)?;
    let ideal = efficiency::ideal_accessibility(&net.region, &net.zones, &opps, &a.kind, &params, &speed, a.tau)?;
    let weights = population_weights(&net.region, &net.zones, a.basis)?;
    let eff = efficiency::efficiency(&net.region, &observed, &ideal, &weights)?;

    let mut rows = Vec::new();
    let mut features = Vec::new();
    for (k, zone) in eff.zone_ids.iter().enumerate() {
        let flagged = eff.zonal[k].is_some_and(|e| e > 1.0);
        rows.push(vec![
            zone.clone(),
            a.kind.clone(),
            a.mode.to_string(),
            fmt_f64(a.tau),
            fmt_f64(observed.values()[k]),
            fmt_f64(ideal.values()[k]),
            eff.zonal[k].map(fmt_f64).unwrap_or_default(),
            flagged.to_string(),
        ]);
        let props = BTreeMap::from([
            ("observed".to_string(), json_number(Some(observed.values()[k]))),
            ("ideal".to_string(), json_number(Some(ideal.values()[k]))),
            ("efficiency".to_string(), json_number(eff.zonal[k])),
            ("flagged".to_string(), Value::Bool(flagged)),
        ]);
        features.push((zone.clone(), props));
    }
    let mut extra = no_extra();
    extra.insert("vmax_mph".into(), json_number(Some(speed.mph())));
    let header = ["zone_id", "kind", "mode", "tau", "observed", "ideal", "efficiency", "flagged"];
    s.emit(a.out.as_deref(), &buffer(|w| io::write_table(w, &header, &rows)), &extra)?;

    if let Some(path) = &a.aggregate_out {
        let region = a.network.region.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "all".into());
        let row = vec![
            region,
            a.kind.clone(),
            a.mode.to_string(),
            fmt_f64(a.tau),
            fmt_f64(speed.mph()),
            fmt_f64(eff.observed_aggregate),
            fmt_f64(eff.ideal_aggregate),
            eff.aggregate.map(fmt_f64).unwrap_or_default(),
            eff.flagged.len().to_string(),
        ];
        let header =
            ["region", "kind", "mode", "tau", "vmax_mph", "observed", "ideal", "efficiency", "flagged_zones"];
        s.emit(Some(path), &buffer(|w| io::write_table(w, &header, &[row])), &extra)?;
    }
    if let Some(path) = &a.geojson {
        let bytes = geojson(&net.zones, &features, s.metadata(&extra));
        s.emit(Some(path), &bytes, &extra)?;
    }
    Ok(())
}

fn sedi_cmd(a: &SediArgs, s: &mut Session) -> Outcome<()> {
    let mut config = SediConfig::default();
    for name in &a.invert {
        let factor: Factor = name.parse().map_err(Failure::Usage)?;
        config = config.with_direction(factor, Direction::HigherIsBetter);
    }
    if let Some(w) = &a.factor_weights {
        config.weights = w
            .as_slice()
            .try_into()
            .map_err(|_| Failure::Usage(format!("--factor-weights needs 6 values, got {}", w.len())))?;
    }
    let factors = s.parse(&a.demographics, io::parse_demographics)?;
    let zones = match &a.zones {
        Some(path) => Some(s.parse(path, io::parse_zones)?),
        None => None,
    };
    let region = match (&a.region, &zones) {
        (Some(path), Some(zones)) => Region::validated(s.parse(path, io::parse_region_ids)?, zones)?,
        (Some(path), None) => Region::new(s.parse(path, io::parse_region_ids)?)?,
        (None, _) => Region::new(factors.iter().map(|(z, _)| z.to_string()).collect())?,
    };
    let table = equity::sedi(&factors, &region, &config)?;
    let mut extra = no_extra();
    extra.insert("excluded".into(), json!(table.excluded));
    s.emit(a.out.as_deref(), &buffer(|w| io::write_sedi(w, &table)), &extra)?;
    if let Some(path) = &a.geojson {
        let zones = zones.as_ref().ok_or_else(|| Failure::Usage("--geojson needs --zones".into()))?;
        let features: Vec<_> = table
            .zone_ids
            .iter()
            .zip(&table.values)
            .map(|(z, v)| (z.clone(), BTreeMap::from([("sedi".to_string(), json_number(Some(*v)))])))
            .collect();
        for (z, _) in &features {
            if zones.get(z).is_none() {
                return Err(Error::MissingGeometry(z.clone()).into());
            }
        }
        let bytes = geojson(zones, &features, s.metadata(&extra));
        s.emit(Some(path), &bytes, &extra)?;
    }
    Ok(())
}

fn improve(a: &ImproveArgs, s: &mut Session) -> Outcome<()> {
    let net = load_network(&a.network, a.mode, a.tau, s)?;
    let params = load_impedance(&a.impedance, &a.kind, a.mode, s)?;
    let (weights, weighting) = match (&a.sedi, a.lambda) {
        (None, None) => (population_weights(&net.region, &net.zones, a.basis)?, Weighting::Unweighted),
        (None, Some(_)) => return Err(Failure::Usage("--lambda needs --sedi".into())),
        (Some(_), None) => return Err(Failure::Usage("--sedi needs --lambda".into())),
        (Some(path), Some(lambda)) => {
            let table = s.parse(path, io::parse_sedi)?;
            let w = equity::sedi_weighted_population(&net.zones, &table, &net.region, a.basis, lambda)?;
            (w, Weighting::Sedi { lambda })
        }
    };
    let potential =
        equity::improvement_potential(&net.region, &net.matrix, &params, a.tau, &weights, &net.intrazonal, weighting)?;
    s.emit(a.out.as_deref(), &buffer(|w| io::write_improvement(w, &potential)), &no_extra())?;
    if let Some(path) = &a.geojson {
        let features: Vec<_> = potential
            .zone_ids
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let props = BTreeMap::from([
                    ("gradient".to_string(), json_number(Some(potential.gradient[k]))),
                    ("rank".to_string(), json!(potential.rank[k])),
                    ("weighting".to_string(), json!(weighting.label())),
                ]);
                (z.clone(), props)
            })
            .collect();
        let bytes = geojson(&net.zones, &features, s.metadata(&no_extra()));
        s.emit(Some(path), &bytes, &no_extra())?;
    }
    Ok(())
}

fn rank_shift(a: &RankShiftArgs, s: &mut Session) -> Outcome<()> {
    let unweighted = s.parse(&a.unweighted, io::parse_improvement)?;
    let weighted = s.parse(&a.weighted, io::parse_improvement)?;
    let shifts = equity::rank_shift(&unweighted, &weighted)?;
    s.emit(a.out.as_deref(), &buffer(|w| io::write_rank_shift(w, &shifts)), &no_extra())
}

fn dims(flag: &str, text: &str) -> Outcome<(usize, usize)> {
    let parsed = text.split_once(['x', 'X']).and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed.ok_or_else(|| Failure::Usage(format!("--{flag} expects AxB, got '{text}'")))
}

fn synth(a: &SynthArgs, s: &mut Session) -> Outcome<()> {
    let layout = match (&a.grid, &a.radial) {
        (_, Some(r)) => {
            let (rings, spokes) = dims("radial", r)?;
            Layout::Radial { rings, spokes }
        }
        (Some(g), None) => {
            let (rows, cols) = dims("grid", g)?;
            Layout::Grid { rows, cols }
        }
        (None, None) => Layout::Grid { rows: 10, cols: 10 },
    };
    let sprawl = match a.sprawl.as_deref() {
        None => None,
        Some([edge_removal, speed_decay]) => Some(Sprawl { edge_removal: *edge_removal, speed_decay: *speed_decay }),
        Some(other) => return Err(Failure::Usage(format!("--sprawl expects two values, got {}", other.len()))),
    };
    check_positive("max-threshold", a.max_threshold)?;
    let config = CityConfig { layout, spacing_km: a.spacing, sprawl, seed: a.seed, ..CityConfig::default() };
    let city = netgen::generate(&config)?;
    let mut extra = no_extra();
    extra.insert("connected".into(), Value::Bool(city.graph.is_connected()));
    let dir = &a.out_dir;
    s.emit(Some(&dir.join("zones.csv")), &buffer(|w| io::write_zones(w, &city.zones)), &extra)?;
    s.emit(Some(&dir.join("opportunities.csv")), &buffer(|w| io::write_opportunities(w, &city.opportunities)), &extra)?;
    s.emit(Some(&dir.join("demographics.csv")), &buffer(|w| io::write_demographics(w, &city.factors)), &extra)?;
    let mut modes = a.modes.clone();
    modes.sort();
    modes.dedup();
    for mode in modes {
        let matrix = city.travel_time_matrix(mode, a.max_threshold)?;
        let csv = buffer(|w| io::write_matrix(w, &matrix));
        s.emit(Some(&dir.join(format!("matrix_{mode}.csv"))), &csv, &extra)?;
        if a.binary {
            let mut bin = Vec::new();
            io::write_matrix_binary(&mut bin, &matrix).expect("writing to memory cannot fail");
            s.emit(Some(&dir.join(format!("matrix_{mode}.gcat"))), &bin, &extra)?;
        }
    }
    Ok(())
}
