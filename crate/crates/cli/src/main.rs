//! `varcausal` command-line interface.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use varcausal::bounds::{
    condition_number, cor2_bound, prop1_bound, schur_tight_bound, thm1_bound, BlockScheme, Thm1Options,
};
use varcausal::companion::DISTINCT_TOL;
use varcausal::estimators::{build_design, fit_cv, fit_regularized, CvConfig};
use varcausal::harness::{self, ExperimentConfig};
use varcausal::intervention::InterventionSpec;
use varcausal::process::{simulate_unchecked, simulate_with, NoiseDist};
use varcausal::risk::{causal_risk, risk_report, ModelPair};
use varcausal::{BoundReport, Error, Estimator, SamplePath, VarModel};

#[derive(Parser)]
#[command(name = "varcausal", version, about = "Statistical versus interventional risk of VAR forecasts")]
struct Cli {
    /// Master seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat key-value TOML file with subcommand options; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (directory for `experiment`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sample path from a model JSON file and write it as CSV.
    Simulate(SimulateOpts),
    /// Fit a VAR(p) to a CSV sample path and print the fit as JSON.
    Fit(FitOpts),
    /// Print the analytic risk report of a truth/fitted model pair as JSON.
    Risk(RiskOpts),
    /// Evaluate every applicable bound on a truth/fitted model pair.
    Bounds(BoundsOpts),
    /// Run the simulation study and write records, summaries and metadata.
    Experiment(ExperimentOpts),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct SimulateOpts {
    /// Model JSON file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of observations.
    #[arg(long)]
    n: Option<usize>,
    /// Discarded warm-up steps (default from the spectral radius).
    #[arg(long)]
    burn_in: Option<usize>,
    /// gaussian or uniform innovations.
    #[arg(long)]
    noise: Option<NoiseDist>,
    /// Simulate even when the model is not stable.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    allow_unstable: bool,
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct FitOpts {
    /// Sample path CSV as written by `simulate`.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Model order.
    #[arg(long)]
    p: Option<usize>,
    /// ols, ridge, lasso or elastic_net.
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Penalty; cross-validated over the default grid when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// Elastic-net mixing weight (fixed-penalty fits).
    #[arg(long)]
    mu_mix: Option<f64>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Shuffle rows before splitting folds.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    shuffle: bool,
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct RiskOpts {
    /// True model JSON file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Fitted model JSON file.
    #[arg(long)]
    fitted: Option<PathBuf>,
    #[arg(long)]
    omega: Option<usize>,
    /// Zero-based output component.
    #[arg(long)]
    component: Option<usize>,
    /// Intervention JSON; default is the averaged intervention on `component`.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct BoundsOpts {
    /// True model JSON file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Fitted model JSON file.
    #[arg(long)]
    fitted: Option<PathBuf>,
    /// Forecast horizon.
    #[arg(long)]
    omega: Option<usize>,
    /// Zero-based output component.
    #[arg(long)]
    component: Option<usize>,
    /// Training path CSV; enables the generalization bound.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Mixing rate for the generalization bound (default: truth spectral radius).
    #[arg(long)]
    rho: Option<f64>,
    /// Loss truncation level (default: 99.9th percentile of training losses).
    #[arg(long)]
    m_trunc: Option<f64>,
    /// Confidence parameter of the generalization bound.
    #[arg(long)]
    conf: Option<f64>,
    /// Rademacher sign draws.
    #[arg(long)]
    draws: Option<usize>,
    /// Override of the order-based constant.
    #[arg(long)]
    k_cor2: Option<f64>,
    /// Override of the Schur-bound constant.
    #[arg(long)]
    k_schur: Option<f64>,
    /// Print JSON instead of a CSV table.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    json: bool,
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
struct ExperimentOpts {
    /// standard, sample_sweep, omega_sweep or confounded.
    #[arg(long)]
    mode: Option<harness::Mode>,
    /// Total number of sampled processes.
    #[arg(long)]
    n_processes: Option<usize>,
    /// Records per condition-number bucket.
    #[arg(long)]
    bucket_size: Option<usize>,
    /// Forecast horizon.
    #[arg(long)]
    omega: Option<usize>,
    /// Comma-separated process orders.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    orders: Option<Vec<usize>>,
    /// Comma-separated estimators: ols, ridge, lasso, elastic_net.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    estimators: Option<Vec<Estimator>>,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
enum Failure {
    BadInput(String),
    Numerical(String),
    Config(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::BadInput(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Config(_) => 4,
        }
    }

    fn line(&self) -> String {
        let (tag, msg) = match self {
            Failure::BadInput(m) => ("bad-input", m),
            Failure::Numerical(m) => ("numerical", m),
            Failure::Config(m) => ("config", m),
        };
        format!("error[{tag}]: {}", msg.split_whitespace().collect::<Vec<_>>().join(" "))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else if matches!(e, Error::Config(_)) {
            Failure::Config(e.to_string())
        } else {
            Failure::BadInput(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::BadInput(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            eprintln!("{}", Failure::BadInput(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}

/// Global settings after merging flags with the config file.
struct Globals {
    seed: u64,
    out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let mut file = match &cli.config {
        Some(p) => load_config(p)?,
        None => Map::new(),
    };
    let take_u64 = |file: &mut Map<String, Value>, key: &str| -> CliResult<Option<u64>> {
        match file.remove(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| Failure::Config(format!("`{key}` must be a non-negative integer"))),
        }
    };
    let seed = cli.seed.or(take_u64(&mut file, "seed")?).unwrap_or(0);
    let threads = cli.threads.or(take_u64(&mut file, "threads")?.map(|t| t as usize));
    let out = match (cli.out, file.remove("out")) {
        (Some(o), _) => Some(o),
        (None, Some(Value::String(s))) => Some(PathBuf::from(s)),
        (None, Some(_)) => return Err(Failure::Config("`out` must be a string".into())),
        (None, None) => None,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        // A second initialisation only happens in-process and is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let g = Globals { seed, out };
    match cli.command {
        Command::Simulate(o) => simulate(merge(&o, file)?, &g),
        Command::Fit(o) => fit(merge(&o, file)?, &g),
        Command::Risk(o) => risk(merge(&o, file)?, &g),
        Command::Bounds(o) => bounds(merge(&o, file)?, &g),
        Command::Experiment(o) => experiment(&o, file, threads, &g),
    }
}

fn load_config(path: &Path) -> CliResult<Map<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Failure::Config(format!("{}: {e}", path.display())))?;
    match serde_json::to_value(table) {
        Ok(Value::Object(m)) => {
            if let Some((k, _)) = m.iter().find(|(_, v)| v.is_object()) {
                return Err(Failure::Config(format!("config must be flat; `{k}` is a table")));
            }
            Ok(m)
        }
        _ => Err(Failure::Config("config must be a key-value table".into())),
    }
}

/// Overlays the explicitly given flags on the config-file values.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, mut file: Map<String, Value>) -> CliResult<T> {
    if let Ok(Value::Object(f)) = serde_json::to_value(flags) {
        for (k, v) in f {
            if !v.is_null() {
                file.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(file)).map_err(|e| Failure::Config(e.to_string()))
}

fn required<T>(v: Option<T>, name: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::BadInput(format!("missing required option --{}", name.replace('_', "-"))))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::BadInput(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> CliResult<VarModel> {
    VarModel::from_json(&read(path)?).map_err(|e| Failure::BadInput(format!("{}: {e}", path.display())))
}

fn read_path(path: &Path) -> CliResult<SamplePath> {
    let f = fs::File::open(path).map_err(|e| Failure::BadInput(format!("{}: {e}", path.display())))?;
    Ok(SamplePath::read_csv(f)?)
}

/// Writes `bytes` to `--out` or stdout.
fn emit(g: &Globals, bytes: &[u8]) -> CliResult<()> {
    match &g.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, bytes)?;
        }
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn json_with_config<T: Serialize>(body: &T, config: Value, seed: u64) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_value(body).map_err(|e| Failure::BadInput(e.to_string()))?;
    if let Value::Object(m) = &mut v {
        let mut c = match config {
            Value::Object(c) => c,
            _ => Map::new(),
        };
        c.insert("seed".into(), seed.into());
        m.insert("config".into(), Value::Object(c));
    }
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Failure::BadInput(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn simulate(o: SimulateOpts, g: &Globals) -> CliResult<()> {
    let model = read_model(&required(o.model.clone(), "model")?)?;
    let n = required(o.n, "n")?;
    let noise = o.noise.unwrap_or_default();
    let path = if o.allow_unstable {
        simulate_unchecked(&model, n, g.seed, o.burn_in.unwrap_or(0), noise)?
    } else {
        simulate_with(&model, n, g.seed, o.burn_in, noise)?
    };
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    emit(g, &buf)?;
    if let Some(out) = &g.out {
        let meta = serde_json::json!({ "n": n, "burn_in": path.burn_in, "d": path.d() });
        let mut side = out.clone().into_os_string();
        side.push(".json");
        let cfg = serde_json::to_value(&o).unwrap_or(Value::Null);
        fs::write(side, json_with_config(&meta, cfg, g.seed)?)?;
    }
    Ok(())
}

fn fit(o: FitOpts, g: &Globals) -> CliResult<()> {
    let path = read_path(&required(o.path.clone(), "path")?)?;
    let p = required(o.p, "p")?;
    let est = o.estimator.unwrap_or(Estimator::Ols);
    let fit = match (est, o.lambda) {
        (Estimator::Ols, _) | (_, Some(_)) => {
            fit_regularized(&build_design(&path, p)?, est, o.lambda.unwrap_or(0.0), o.mu_mix.unwrap_or(0.5))?
        }
        (_, None) => {
            let cv = CvConfig { folds: o.folds.unwrap_or(5), shuffle: o.shuffle, seed: g.seed, ..CvConfig::default() };
            fit_cv(&path, p, est, &cv)?
        }
    };
    let cfg = serde_json::to_value(&o).unwrap_or(Value::Null);
    emit(g, &json_with_config(&fit.to_json_value(), cfg, g.seed)?)
}

fn load_pair(truth: Option<PathBuf>, fitted: Option<PathBuf>) -> CliResult<ModelPair> {
    let truth = read_model(&required(truth, "truth")?)?;
    let fitted = read_model(&required(fitted, "fitted")?)?;
    Ok(ModelPair::new(truth, fitted)?)
}

fn risk(o: RiskOpts, g: &Globals) -> CliResult<()> {
    let pair = load_pair(o.truth.clone(), o.fitted.clone())?;
    let i = o.component.unwrap_or(0);
    let spec = match &o.spec {
        Some(p) => InterventionSpec::from_json(&read(p)?).map_err(|e| Failure::BadInput(format!("{}: {e}", p.display())))?,
        None => InterventionSpec::averaged(o.omega.unwrap_or(1), vec![i]),
    };
    if let (Some(w), Some(_)) = (o.omega, &o.spec) {
        if w != spec.omega {
            return Err(Failure::BadInput(format!("--omega {w} conflicts with spec omega {}", spec.omega)));
        }
    }
    let report = risk_report(&pair, &spec, i)?;
    let cfg = serde_json::to_value(&o).unwrap_or(Value::Null);
    emit(g, &json_with_config(&report, cfg, g.seed)?)
}

fn bounds(o: BoundsOpts, g: &Globals) -> CliResult<()> {
    let pair = load_pair(o.truth.clone(), o.fitted.clone())?;
    let omega = o.omega.unwrap_or(1);
    let i = o.component.unwrap_or(0);
    let mut reports: Vec<BoundReport> = vec![prop1_bound(&pair, omega, i)?];
    if pair.d() == 1 {
        reports.push(cor2_bound(&pair, omega, o.k_cor2)?);
        reports.push(schur_tight_bound(&pair, omega, o.k_schur)?);
    }
    if let Some(p) = &o.path {
        let path = read_path(p)?;
        let delta = pair.truth().companion().spectrum(DISTINCT_TOL)?.max_modulus;
        let rho = o.rho.unwrap_or(delta);
        let conf = o.conf.unwrap_or(0.05);
        let targets = (path.len() + 1).saturating_sub(pair.fitted().p() + omega);
        let scheme = BlockScheme::mixing_aware(targets, rho, conf)?;
        let opts = Thm1Options {
            m_trunc: o.m_trunc,
            rho,
            delta_conf: conf,
            radius: None,
            seed: g.seed,
            draws: o.draws.unwrap_or(1000),
        };
        let kappa = condition_number(pair.sigma().dense());
        let g_avg = causal_risk(&pair, &InterventionSpec::averaged(omega, vec![i]))?[i];
        reports.push(thm1_bound(pair.fitted(), &path, scheme, omega, i, kappa, opts)?.with_lhs(g_avg));
    }
    let cfg = serde_json::to_value(&o).unwrap_or(Value::Null);
    if o.json {
        let body: BTreeMap<&str, &Vec<BoundReport>> = [("bounds", &reports)].into_iter().collect();
        return emit(g, &json_with_config(&body, cfg, g.seed)?);
    }
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("name,lhs,rhs,holds,slack\n");
    for r in &reports {
        let holds = r.holds.map(|h| h.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{}\n", r.name.as_str(), fmt(r.lhs), r.value, holds, fmt(r.slack)));
    }
    emit(g, s.as_bytes())
}

fn experiment(o: &ExperimentOpts, mut file: Map<String, Value>, threads: Option<usize>, g: &Globals) -> CliResult<()> {
    if let Ok(Value::Object(f)) = serde_json::to_value(o) {
        for (k, v) in f {
            if !v.is_null() {
                file.insert(k, v);
            }
        }
    }
    file.insert("master_seed".into(), g.seed.into());
    if let Some(t) = threads {
        file.insert("threads".into(), t.into());
    }
    let cfg: ExperimentConfig = serde_json::from_value(Value::Object(file)).map_err(|e| Failure::Config(e.to_string()))?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("experiment-output"));
    let start = Instant::now();
    let out = harness::run(&cfg)?;
    for t in &out.summaries {
        for (k, r) in t.rows.iter().enumerate() {
            eprintln!(
                "{} bucket {k}: kappa {:.4} max_diff {:.6} bound {:.6}",
                t.name, r.kappa_mid, r.max_diff, r.bound
            );
        }
    }
    let files = out.write(&dir)?;
    eprintln!(
        "{} records, {} prop1 violations, wall time {:.2}s",
        out.records.len(),
        out.metadata.prop1_violations,
        start.elapsed().as_secs_f64()
    );
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
