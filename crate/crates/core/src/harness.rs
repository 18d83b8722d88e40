//! Simulation study: sample stable processes, fit estimators, compute risks
//! and bounds, and bucket the results by condition number.
//!
//! Every stochastic stage draws from a seed derived from the master seed and
//! the process index, so results do not depend on thread count or order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{condition_number, cor2_bound, prop1_bound, quantile, thm1_bound, BlockScheme, Thm1Options};
use crate::companion::DISTINCT_TOL;
use crate::error::{Error, Result};
use crate::estimators::{build_design, fit_cv, fit_ols, CvConfig, Estimator, FitResult};
use crate::intervention::InterventionSpec;
use crate::process::{
    empirical_autocov, is_stationary, rejection_sample_stable, simulate_with, NoiseDist, SamplePath, VarModel,
};
use crate::risk::{causal_risk, empirical_causal_risk, empirical_stat_risk, stat_risk, ModelPair};
use crate::seed::{derive_seed, stage};

/// Absolute slack allowed when checking `|G − S| ≤ bound`, relative to `S`.
pub const DOMINATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Standard,
    #[serde(alias = "sampleSweep")]
    SampleSweep,
    #[serde(alias = "omegaSweep")]
    OmegaSweep,
    Confounded,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(Mode::Standard),
            "sample_sweep" | "samplesweep" => Ok(Mode::SampleSweep),
            "omega_sweep" | "omegasweep" => Ok(Mode::OmegaSweep),
            "confounded" => Ok(Mode::Confounded),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

/// Which record column feeds the `bound` column of the bucket summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundColumn {
    #[default]
    Prop1,
    Thm1,
}

/// Intervention regime: the single most recent index, or every index of the
/// conditioning window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Single,
    AllWindow,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Single => "single",
            Regime::AllWindow => "all_window",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(alias = "nProcesses")]
    pub n_processes: usize,
    /// Model orders, cycled over process indices. Empty means the mode default.
    pub orders: Vec<usize>,
    /// Extra `(p_fit, q_true)` pairs with a misspecified fitted order.
    pub misspecified: Vec<(usize, usize)>,
    #[serde(alias = "coeffRange")]
    pub coeff_range: (f64, f64),
    #[serde(alias = "nTrain")]
    pub n_train: usize,
    #[serde(alias = "nTest")]
    pub n_test: usize,
    pub omega: usize,
    /// Empty means the mode default (ridge for the sample sweep, OLS otherwise).
    pub estimators: Vec<Estimator>,
    #[serde(alias = "bucketSize")]
    pub bucket_size: usize,
    #[serde(alias = "masterSeed", alias = "seed")]
    pub master_seed: u64,
    pub mode: Mode,
    pub sweep_n_train: Vec<usize>,
    pub sweep_omegas: Vec<usize>,
    pub noise: NoiseDist,
    pub threads: Option<usize>,
    pub bound_column: BoundColumn,
    /// Draws for the Monte-Carlo interventional risk; defaults to `n_test`.
    pub mc_draws: Option<usize>,
    pub max_tries: usize,
    pub cv_folds: usize,
    pub cv_shuffle: bool,
    pub include_thm1: bool,
    /// Mixing rate for the generalization bound; defaults to the truth's
    /// spectral radius.
    pub thm1_rho: Option<f64>,
    pub thm1_delta: f64,
    pub rademacher_draws: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_processes: 10_000,
            orders: Vec::new(),
            misspecified: Vec::new(),
            coeff_range: (-2.0, 2.0),
            n_train: 100,
            n_test: 1000,
            omega: 1,
            estimators: Vec::new(),
            bucket_size: 500,
            master_seed: 0,
            mode: Mode::Standard,
            sweep_n_train: vec![10, 100, 1000],
            sweep_omegas: vec![1, 5, 7],
            noise: NoiseDist::Gaussian,
            threads: None,
            bound_column: BoundColumn::Prop1,
            mc_draws: None,
            max_tries: 10_000_000,
            cv_folds: 5,
            cv_shuffle: false,
            include_thm1: true,
            thm1_rho: None,
            thm1_delta: 0.05,
            rademacher_draws: 200,
        }
    }
}

impl ExperimentConfig {
    /// Fills mode-dependent defaults and checks ranges.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        if c.orders.is_empty() && c.misspecified.is_empty() {
            c.orders = match c.mode {
                Mode::SampleSweep | Mode::OmegaSweep => vec![5],
                _ => vec![3, 5, 7],
            };
        }
        if c.estimators.is_empty() {
            c.estimators = vec![if c.mode == Mode::SampleSweep { Estimator::Ridge } else { Estimator::Ols }];
        }
        let bad = |m: String| Err(Error::Config(m));
        if c.n_processes == 0 {
            return bad("n_processes must be positive".into());
        }
        if c.bucket_size == 0 {
            return bad("bucket_size must be positive".into());
        }
        if c.omega == 0 || c.sweep_omegas.contains(&0) {
            return bad("omega must be at least 1".into());
        }
        if !(c.coeff_range.0 < c.coeff_range.1) {
            return bad(format!("empty coefficient range {:?}", c.coeff_range));
        }
        if c.orders.contains(&0) || c.misspecified.iter().any(|&(a, b)| a == 0 || b == 0) {
            return bad("orders must be at least 1".into());
        }
        if c.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if c.mc_draws == Some(0) || c.rademacher_draws == 0 || c.max_tries == 0 {
            return bad("draw counts must be positive".into());
        }
        if c.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if let Some(rho) = c.thm1_rho {
            if !(0.0..1.0).contains(&rho) {
                return bad(format!("thm1_rho must lie in [0, 1), got {rho}"));
            }
        }
        let max_p = c.order_pairs().iter().map(|&(p, q)| p.max(q)).max().unwrap_or(1);
        let max_omega = c.sweep_omegas.iter().copied().chain([c.omega]).max().unwrap_or(1);
        let mut train_sizes = vec![c.n_train];
        if c.mode == Mode::SampleSweep {
            train_sizes = c.sweep_n_train.clone();
            if train_sizes.is_empty() {
                return bad("sweep_n_train is empty".into());
            }
        }
        for &n in &train_sizes {
            if n < max_p + c.cv_folds {
                return bad(format!("n_train = {n} is too short for order {max_p} with {} folds", c.cv_folds));
            }
        }
        if c.n_test < max_p + max_omega + 1 || (c.mode == Mode::Confounded && c.n_train < max_p + 10) {
            return bad("sample lengths are too short for the requested orders".into());
        }
        if c.mode == Mode::OmegaSweep && c.sweep_omegas.is_empty() {
            return bad("sweep_omegas is empty".into());
        }
        Ok(c)
    }

    /// `(p_fit, q_true)` pairs cycled over process indices.
    pub fn order_pairs(&self) -> Vec<(usize, usize)> {
        self.orders.iter().map(|&p| (p, p)).chain(self.misspecified.iter().copied()).collect()
    }
}

/// One fitted model evaluated at one horizon and regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub process_id: usize,
    pub p_fit: usize,
    pub q_true: usize,
    /// Coefficients joined by spaces (row-major blocks, lag order).
    pub truth_coeffs: String,
    pub truth_delta: f64,
    /// Condition number of the autocorrelation matrix used for bucketing.
    pub kappa: f64,
    pub estimator: Estimator,
    pub lambda: f64,
    pub fitted_coeffs: String,
    pub fit_stable: bool,
    pub s_analytic: f64,
    pub s_empirical: f64,
    pub g_analytic: f64,
    pub g_monte_carlo: f64,
    pub g_monte_carlo_se: f64,
    /// `|G − S|` from the analytic risks.
    pub diff: f64,
    pub prop1: f64,
    pub cor2: f64,
    pub thm1: f64,
    pub omega: usize,
    pub n_train: usize,
    pub regime: Regime,
}

impl ExperimentRecord {
    pub fn bound(&self, col: BoundColumn) -> f64 {
        match col {
            BoundColumn::Prop1 => self.prop1,
            BoundColumn::Thm1 => self.thm1,
        }
    }

    /// `|G − S|` exceeds the condition-number bound.
    pub fn violates_prop1(&self) -> bool {
        self.diff > self.prop1 + DOMINATION_TOL * self.s_analytic.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    /// Median `κ` of the bucket.
    pub kappa_mid: f64,
    pub max_diff: f64,
    pub mean_diff: f64,
    pub q90_diff: f64,
    /// Largest bound value over the bucket.
    pub bound: f64,
    pub count: usize,
}

/// Sorts by `κ` and summarises consecutive buckets of `bucket_size`. The
/// trailing partial bucket is dropped; its size is returned.
pub fn bucket_by_kappa(
    records: &[ExperimentRecord],
    bucket_size: usize,
    column: BoundColumn,
) -> Result<(Vec<BucketSummary>, usize)> {
    if bucket_size == 0 {
        return Err(Error::InvalidArgument("bucket size must be positive".into()));
    }
    let mut sorted: Vec<&ExperimentRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.kappa.total_cmp(&b.kappa).then(a.process_id.cmp(&b.process_id)));
    let summaries = sorted
        .chunks_exact(bucket_size)
        .map(|b| {
            let diffs: Vec<f64> = b.iter().map(|r| r.diff).collect();
            let kappas: Vec<f64> = b.iter().map(|r| r.kappa).collect();
            BucketSummary {
                kappa_mid: quantile(&kappas, 0.5),
                max_diff: diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_diff: diffs.iter().sum::<f64>() / diffs.len() as f64,
                q90_diff: quantile(&diffs, 0.9),
                bound: b.iter().map(|r| r.bound(column)).fold(f64::NEG_INFINITY, f64::max),
                count: b.len(),
            }
        })
        .collect();
    Ok((summaries, records.len() % bucket_size))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut e = k;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
                e += 1;
            }
            for &i in &idx[k..=e] {
                r[i] = (k + e) as f64 / 2.0;
            }
            k = e + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Quantiles, mean and standard deviation of `|G − S|` at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n_train: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl DistributionSummary {
    pub fn from_values(n_train: usize, v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self {
            n_train,
            min: quantile(v, 0.0),
            q25: quantile(v, 0.25),
            median: quantile(v, 0.5),
            q75: quantile(v, 0.75),
            max: quantile(v, 1.0),
            mean,
            std: var.sqrt(),
            count: v.len(),
        }
    }
}

/// Processes skipped, by cause.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub rejection_exhausted: usize,
    pub numerical: usize,
    pub unstable_fit: usize,
}

/// A named bucketed summary and the size of its dropped partial bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub name: String,
    pub omega: usize,
    pub n_train: usize,
    pub estimator: Estimator,
    pub regime: Regime,
    pub rows: Vec<BucketSummary>,
    pub dropped: usize,
    /// Spearman correlation of bucket `κ` against bucket max `|G − S|`.
    pub spearman_kappa_max_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config: ExperimentConfig,
    pub records: usize,
    pub skipped: SkipCounts,
    pub prop1_violations: usize,
    pub thm1_violations: usize,
    pub thm1_infinite: usize,
    pub fraction_g_over_2s: f64,
    pub summaries: Vec<SummaryMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMeta {
    pub name: String,
    pub buckets: usize,
    pub dropped: usize,
    pub spearman_kappa_max_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub summaries: Vec<SummaryTable>,
    pub distribution: Vec<DistributionSummary>,
    pub metadata: RunMetadata,
}

impl ExperimentOutput {
    /// Writes `records.csv`, one `summaries*.csv` per table, `sweep.csv` for
    /// sample sweeps, and `metadata.json` into `dir`. Returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let path = dir.join("records.csv");
        write_csv(&path, &self.records)?;
        out.push(path);
        for t in &self.summaries {
            let path = dir.join(format!("{}.csv", t.name));
            write_csv(&path, &t.rows)?;
            out.push(path);
        }
        if !self.distribution.is_empty() {
            let path = dir.join("sweep.csv");
            write_csv(&path, &self.distribution)?;
            out.push(path);
        }
        let path = dir.join("metadata.json");
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &self.metadata)?;
        writeln!(f)?;
        f.flush()?;
        out.push(path);
        Ok(out)
    }
}

/// Fixed CSV header of a row type, used when a table has no rows.
pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

impl CsvRow for ExperimentRecord {
    const HEADER: &'static [&'static str] = &[
        "process_id",
        "p_fit",
        "q_true",
        "truth_coeffs",
        "truth_delta",
        "kappa",
        "estimator",
        "lambda",
        "fitted_coeffs",
        "fit_stable",
        "s_analytic",
        "s_empirical",
        "g_analytic",
        "g_monte_carlo",
        "g_monte_carlo_se",
        "diff",
        "prop1",
        "cor2",
        "thm1",
        "omega",
        "n_train",
        "regime",
    ];
}

impl CsvRow for BucketSummary {
    const HEADER: &'static [&'static str] = &["kappa_mid", "max_diff", "mean_diff", "q90_diff", "bound", "count"];
}

impl CsvRow for DistributionSummary {
    const HEADER: &'static [&'static str] = &["n_train", "min", "q25", "median", "q75", "max", "mean", "std", "count"];
}

fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(T::HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn join(m: &VarModel) -> String {
    m.coeffs()
        .iter()
        .flat_map(|b| {
            let (r, c) = b.shape();
            (0..r).flat_map(move |i| (0..c).map(move |j| b[(i, j)]))
        })
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Truth and samples of one process.
struct Process {
    id: usize,
    p_fit: usize,
    truth: VarModel,
    delta: f64,
    train: SamplePath,
    test: SamplePath,
}

enum Skip {
    Rejection,
    Numerical,
    UnstableFit,
}

fn classify(e: Error) -> Result<Skip> {
    match e {
        Error::RejectionExhausted { .. } => Ok(Skip::Rejection),
        e if e.is_numerical() || matches!(e, Error::NonStationary { .. }) => Ok(Skip::Numerical),
        e => Err(e),
    }
}

fn sample_process(cfg: &ExperimentConfig, id: usize, d: usize, train_len: usize) -> Result<Process> {
    let pairs = cfg.order_pairs();
    let (p_fit, q_true) = pairs[id % pairs.len()];
    let (lo, hi) = cfg.coeff_range;
    let m = cfg.master_seed;
    let q = if d == 1 { q_true } else { 1 };
    let truth = rejection_sample_stable(q, d, lo, hi, derive_seed(m, &[id as u64, stage::MODEL]), cfg.max_tries)?;
    let delta = truth.companion().spectrum(DISTINCT_TOL)?.max_modulus;
    let train = simulate_with(&truth, train_len, derive_seed(m, &[id as u64, stage::TRAIN]), None, cfg.noise)?;
    let test = simulate_with(&truth, cfg.n_test, derive_seed(m, &[id as u64, stage::TEST]), None, cfg.noise)?;
    Ok(Process { id, p_fit, truth, delta, train, test })
}

fn fit(cfg: &ExperimentConfig, id: usize, train: &SamplePath, p: usize, est: Estimator) -> Result<FitResult> {
    match est {
        Estimator::Ols => fit_ols(&build_design(train, p)?),
        _ => {
            let cv = CvConfig {
                folds: cfg.cv_folds,
                shuffle: cfg.cv_shuffle,
                seed: derive_seed(cfg.master_seed, &[id as u64, stage::CROSS_VALIDATION]),
                ..CvConfig::default()
            };
            fit_cv(train, p, est, &cv)
        }
    }
}

fn thm1_value(
    cfg: &ExperimentConfig,
    id: usize,
    fitted: &VarModel,
    train: &SamplePath,
    omega: usize,
    kappa: f64,
    rho: f64,
) -> f64 {
    if !cfg.include_thm1 {
        return f64::NAN;
    }
    let rho = cfg.thm1_rho.unwrap_or(rho);
    let targets = (train.len() + 1).saturating_sub(fitted.p() + omega);
    let opts = Thm1Options {
        rho,
        delta_conf: cfg.thm1_delta,
        seed: derive_seed(cfg.master_seed, &[id as u64, stage::RADEMACHER, omega as u64]),
        draws: cfg.rademacher_draws,
        ..Thm1Options::default()
    };
    BlockScheme::mixing_aware(targets, rho, cfg.thm1_delta)
        .and_then(|s| thm1_bound(fitted, train, s, omega, 0, kappa, opts))
        .map(|r| r.value)
        .unwrap_or(f64::INFINITY)
}

/// Risks and bounds of one scalar fit at one horizon and regime.
fn evaluate(
    cfg: &ExperimentConfig,
    proc_: &Process,
    fit: &FitResult,
    train: &SamplePath,
    omega: usize,
    regime: Regime,
) -> Result<ExperimentRecord> {
    let pair = ModelPair::new(proc_.truth.clone(), fit.model.clone())?;
    let kappa = condition_number(&pair.sigma().autocorrelation());
    let kappa_sigma = condition_number(pair.sigma().dense());
    let mut spec = InterventionSpec::averaged(omega, vec![0]);
    if regime == Regime::AllWindow {
        spec = spec.with_steps(pair.nu());
    }
    let s = stat_risk(&pair, omega)?[0];
    let g = causal_risk(&pair, &spec)?[0];
    let s_emp = empirical_stat_risk(&fit.model, &proc_.test, omega)?[0];
    let mc_seed = derive_seed(cfg.master_seed, &[proc_.id as u64, stage::MONTE_CARLO, omega as u64, regime as u64]);
    let draws = cfg.mc_draws.unwrap_or(cfg.n_test);
    let g_mc = empirical_causal_risk(&proc_.truth, &fit.model, &proc_.test, &spec, 0, draws, mc_seed)?;
    let prop1 = prop1_bound(&pair, omega, 0)?.value;
    let cor2 = cor2_bound(&pair, omega, None)?.value;
    let thm1 = thm1_value(cfg, proc_.id, &fit.model, train, omega, kappa_sigma, proc_.delta);
    Ok(ExperimentRecord {
        process_id: proc_.id,
        p_fit: proc_.p_fit,
        q_true: proc_.truth.p(),
        truth_coeffs: join(&proc_.truth),
        truth_delta: proc_.delta,
        kappa,
        estimator: fit.estimator,
        lambda: fit.lambda,
        fitted_coeffs: join(&fit.model),
        fit_stable: is_stationary(&fit.model, 0.0).map(|r| r.0).unwrap_or(false),
        s_analytic: s,
        s_empirical: s_emp,
        g_analytic: g,
        g_monte_carlo: g_mc.mean,
        g_monte_carlo_se: g_mc.std_err,
        diff: (g - s).abs(),
        prop1,
        cor2,
        thm1,
        omega,
        n_train: train.len(),
        regime,
    })
}

type ProcessResult = std::result::Result<Vec<ExperimentRecord>, Skip>;

fn run_processes<F>(cfg: &ExperimentConfig, f: F) -> Result<(Vec<ExperimentRecord>, SkipCounts)>
where
    F: Fn(usize) -> Result<ProcessResult> + Sync + Send,
{
    let results: Vec<Result<ProcessResult>> = (0..cfg.n_processes).into_par_iter().map(&f).collect();
    let mut records = Vec::new();
    let mut skipped = SkipCounts::default();
    for r in results {
        match r? {
            Ok(v) => records.extend(v),
            Err(Skip::Rejection) => skipped.rejection_exhausted += 1,
            Err(Skip::Numerical) => skipped.numerical += 1,
            Err(Skip::UnstableFit) => skipped.unstable_fit += 1,
        }
    }
    Ok((records, skipped))
}

/// Turns recoverable per-process failures into skips.
fn guarded(r: Result<Vec<ExperimentRecord>>) -> Result<ProcessResult> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e) => classify(e).map(Err),
    }
}

/// Records of the standard protocol: one per process and estimator, with
/// the averaged intervention on the single component at horizon `ω`.
pub fn run_standard(cfg: &ExperimentConfig) -> Result<(Vec<ExperimentRecord>, SkipCounts)> {
    let cfg = cfg.resolved()?;
    run_processes(&cfg, |id| {
        guarded((|| {
            let proc_ = sample_process(&cfg, id, 1, cfg.n_train)?;
            cfg.estimators
                .iter()
                .map(|&e| {
                    let f = fit(&cfg, id, &proc_.train, proc_.p_fit, e)?;
                    evaluate(&cfg, &proc_, &f, &proc_.train, cfg.omega, Regime::Single)
                })
                .collect()
        })())
    })
}

/// Records for every training length in `sweep_n_train`. Each process is
/// simulated once at the longest length and shorter samples are prefixes.
pub fn run_sample_sweep(cfg: &ExperimentConfig) -> Result<(Vec<ExperimentRecord>, SkipCounts)> {
    let cfg = cfg.resolved()?;
    let longest = cfg.sweep_n_train.iter().copied().max().unwrap_or(cfg.n_train);
    run_processes(&cfg, |id| {
        guarded((|| {
            let proc_ = sample_process(&cfg, id, 1, longest)?;
            let mut out = Vec::new();
            for &n in &cfg.sweep_n_train {
                let train = proc_.train.slice(0, n)?;
                for &e in &cfg.estimators {
                    let f = fit(&cfg, id, &train, proc_.p_fit, e)?;
                    out.push(evaluate(&cfg, &proc_, &f, &train, cfg.omega, Regime::Single)?);
                }
            }
            Ok(out)
        })())
    })
}

/// Records for every horizon in `sweep_omegas` under both regimes. Processes
/// whose fit is unstable are skipped so all horizons share the same set.
pub fn run_omega_sweep(cfg: &ExperimentConfig) -> Result<(Vec<ExperimentRecord>, SkipCounts)> {
    let cfg = cfg.resolved()?;
    run_processes(&cfg, |id| {
        let proc_ = match sample_process(&cfg, id, 1, cfg.n_train) {
            Ok(p) => p,
            Err(e) => return classify(e).map(Err),
        };
        let mut fits = Vec::new();
        for &e in &cfg.estimators {
            let f = match fit(&cfg, id, &proc_.train, proc_.p_fit, e) {
                Ok(f) => f,
                Err(e) => return classify(e).map(Err),
            };
            if !is_stationary(&f.model, 0.0).map(|r| r.0).unwrap_or(false) {
                return Ok(Err(Skip::UnstableFit));
            }
            fits.push(f);
        }
        guarded((|| {
            let mut out = Vec::new();
            for f in &fits {
                for &w in &cfg.sweep_omegas {
                    for regime in [Regime::Single, Regime::AllWindow] {
                        out.push(evaluate(&cfg, &proc_, f, &proc_.train, w, regime)?);
                    }
                }
            }
            Ok(out)
        })())
    })
}

/// Embeds a scalar AR(p) fit of component 0 into a `d`-dimensional VAR(p)
/// whose other coefficients are zero.
fn embed_scalar(model: &VarModel, d: usize) -> Result<VarModel> {
    let blocks = model
        .coeffs()
        .iter()
        .map(|b| {
            let mut m = DMatrix::zeros(d, d);
            m[(0, 0)] = b[(0, 0)];
            m
        })
        .collect();
    VarModel::new(blocks, model.noise_variance())
}

/// Hidden-confounder study: a bivariate VAR(1) truth of which only component
/// 0 is observed. A scalar AR(p) is fitted to the observed series and scored
/// against the full truth. `κ` and the noise level in the bounds are those
/// an analyst would estimate from the observed sample.
pub fn run_confounded(cfg: &ExperimentConfig) -> Result<(Vec<ExperimentRecord>, SkipCounts)> {
    let cfg = cfg.resolved()?;
    run_processes(&cfg, |id| {
        guarded((|| {
            let proc_ = sample_process(&cfg, id, 2, cfg.n_train)?;
            let observed = proc_.train.component(0)?;
            let p = proc_.p_fit;
            let kappa = condition_number(&empirical_autocov(&observed, p)?.autocorrelation());
            cfg.estimators
                .iter()
                .map(|&e| confounded_record(&cfg, &proc_, &observed, p, e, kappa))
                .collect()
        })())
    })
}

/// Evaluates a scalar fit of the observed component of a bivariate truth.
fn confounded_record(
    cfg: &ExperimentConfig,
    proc_: &Process,
    observed: &SamplePath,
    p: usize,
    est: Estimator,
    kappa: f64,
) -> Result<ExperimentRecord> {
    let omega = cfg.omega;
    let fitted = fit(cfg, proc_.id, observed, p, est)?;
    let embedded = embed_scalar(&fitted.model, proc_.truth.d())?;
    let pair = ModelPair::new(proc_.truth.clone(), embedded.clone())?;
    let spec = InterventionSpec::averaged(omega, vec![0]);
    let s = stat_risk(&pair, omega)?[0];
    let g = causal_risk(&pair, &spec)?[0];
    let s_emp = empirical_stat_risk(&embedded, &proc_.test, omega)?[0];
    let mc_seed = derive_seed(cfg.master_seed, &[proc_.id as u64, stage::MONTE_CARLO, omega as u64]);
    let draws = cfg.mc_draws.unwrap_or(cfg.n_test);
    let g_mc = empirical_causal_risk(&proc_.truth, &embedded, &proc_.test, &spec, 0, draws, mc_seed)?;
    let sigma2 = fitted.model.noise_variance();
    let excess = (s - sigma2).max(0.0);
    let prop1 = if excess == 0.0 { 0.0 } else { (2.0 * kappa - 1.0) * excess };
    let (stable, spectrum) = is_stationary(&fitted.model, 0.0)?;
    let nu = p as f64;
    let cor2 = if stable {
        let dh = spectrum.max_modulus;
        4.0 * nu.powf(nu) * s * nu * (1.0 + dh).powf(2.0 * nu) / (1.0 - dh * dh)
    } else {
        f64::INFINITY
    };
    let rho = if stable { spectrum.max_modulus } else { 0.9 };
    let thm1 = thm1_value(cfg, proc_.id, &fitted.model, observed, omega, kappa, rho);
    Ok(ExperimentRecord {
        process_id: proc_.id,
        p_fit: p,
        q_true: 1,
        truth_coeffs: join(&proc_.truth),
        truth_delta: proc_.delta,
        kappa,
        estimator: fitted.estimator,
        lambda: fitted.lambda,
        fitted_coeffs: join(&fitted.model),
        fit_stable: stable,
        s_analytic: s,
        s_empirical: s_emp,
        g_analytic: g,
        g_monte_carlo: g_mc.mean,
        g_monte_carlo_se: g_mc.std_err,
        diff: (g - s).abs(),
        prop1,
        cor2,
        thm1,
        omega,
        n_train: observed.len(),
        regime: Regime::Single,
    })
}

fn table(
    cfg: &ExperimentConfig,
    name: String,
    records: &[ExperimentRecord],
    key: (usize, usize, Estimator, Regime),
) -> Result<SummaryTable> {
    let subset: Vec<ExperimentRecord> = records
        .iter()
        .filter(|r| (r.omega, r.n_train, r.estimator, r.regime) == key)
        .cloned()
        .collect();
    let (rows, dropped) = bucket_by_kappa(&subset, cfg.bucket_size, cfg.bound_column)?;
    let rho = (rows.len() >= 2).then(|| {
        let k: Vec<f64> = rows.iter().map(|r| r.kappa_mid).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.max_diff).collect();
        spearman(&k, &m)
    });
    Ok(SummaryTable {
        name,
        omega: key.0,
        n_train: key.1,
        estimator: key.2,
        regime: key.3,
        rows,
        dropped,
        spearman_kappa_max_diff: rho,
    })
}

/// Runs the configured mode end to end.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = cfg.resolved()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| run_resolved(&cfg)),
        None => run_resolved(&cfg),
    }
}

fn run_resolved(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (records, skipped) = match cfg.mode {
        Mode::Standard => run_standard(cfg)?,
        Mode::SampleSweep => run_sample_sweep(cfg)?,
        Mode::OmegaSweep => run_omega_sweep(cfg)?,
        Mode::Confounded => run_confounded(cfg)?,
    };
    let multi = cfg.estimators.len() > 1;
    let suffix = |e: Estimator| if multi { format!("_{e}") } else { String::new() };
    let mut summaries = Vec::new();
    let mut distribution = Vec::new();
    for &e in &cfg.estimators {
        match cfg.mode {
            Mode::Standard | Mode::Confounded => {
                let key = (cfg.omega, cfg.n_train, e, Regime::Single);
                summaries.push(table(cfg, format!("summaries{}", suffix(e)), &records, key)?);
            }
            Mode::SampleSweep => {
                for &n in &cfg.sweep_n_train {
                    summaries.push(table(cfg, format!("summaries_n{n}{}", suffix(e)), &records, (cfg.omega, n, e, Regime::Single))?);
                    if !multi || e == cfg.estimators[0] {
                        let v: Vec<f64> =
                            records.iter().filter(|r| r.n_train == n && r.estimator == e).map(|r| r.diff).collect();
                        if !v.is_empty() {
                            distribution.push(DistributionSummary::from_values(n, &v));
                        }
                    }
                }
            }
            Mode::OmegaSweep => {
                for &w in &cfg.sweep_omegas {
                    for regime in [Regime::Single, Regime::AllWindow] {
                        let name = format!("summaries_omega{w}_{}{}", regime.as_str(), suffix(e));
                        summaries.push(table(cfg, name, &records, (w, cfg.n_train, e, regime))?);
                    }
                }
            }
        }
    }
    let g_over = records.iter().filter(|r| r.g_analytic > 2.0 * r.s_analytic).count();
    let metadata = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        records: records.len(),
        skipped,
        prop1_violations: records.iter().filter(|r| r.violates_prop1()).count(),
        thm1_violations: records.iter().filter(|r| r.diff > r.thm1).count(),
        thm1_infinite: records.iter().filter(|r| r.thm1.is_infinite()).count(),
        fraction_g_over_2s: if records.is_empty() { 0.0 } else { g_over as f64 / records.len() as f64 },
        summaries: summaries
            .iter()
            .map(|t| SummaryMeta {
                name: t.name.clone(),
                buckets: t.rows.len(),
                dropped: t.dropped,
                spearman_kappa_max_diff: t.spearman_kappa_max_diff,
            })
            .collect(),
    };
    Ok(ExperimentOutput { records, summaries, distribution, metadata })
}
