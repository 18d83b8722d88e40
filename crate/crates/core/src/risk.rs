//! Statistical risk `S_ω`, interventional risk `G`, and their gap.
//!
//! Both models of a pair are lifted to the common order `ν = max{p, q}`.
//! With `Δ_i` the `i`-th row of `A^ω − Â^ω` and `y` the most-recent-first
//! window ending at `x_{t−ω}`, the ω-step error on component `i` is
//! `Δ_i^T y + ζ_i`, so `S_i = Δ_i^T Σ^ν Δ_i + E[ζ_i²]` and `G_i` replaces
//! `Σ^ν` by the interventional covariance.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::companion::CompanionMatrix;
use crate::error::{Error, Result};
use crate::intervention::{interventional_cov, InterventionKind, InterventionSampler, InterventionSpec};
use crate::linalg::quad_form;
use crate::process::{exact_autocov, AutocovMatrix, SamplePath, VarModel, WindowSampler};
use crate::seed::{derive_seed, rng_from_seed};

/// Draws per parallel work item in Monte-Carlo loops.
const MC_CHUNK: usize = 8192;

/// A true model and a fitted model lifted to a common order.
#[derive(Debug, Clone)]
pub struct ModelPair {
    truth: VarModel,
    fitted: VarModel,
    nu: usize,
    a: CompanionMatrix,
    a_hat: CompanionMatrix,
    sigma: AutocovMatrix,
}

impl ModelPair {
    pub fn new(truth: VarModel, fitted: VarModel) -> Result<Self> {
        if truth.d() != fitted.d() {
            return Err(Error::DimensionMismatch(format!(
                "truth has d = {}, fitted has d = {}",
                truth.d(),
                fitted.d()
            )));
        }
        let nu = truth.p().max(fitted.p());
        let sigma = exact_autocov(&truth, nu)?;
        let a = CompanionMatrix::padded(&truth, nu)?;
        let a_hat = CompanionMatrix::padded(&fitted, nu)?;
        Ok(Self { truth, fitted, nu, a, a_hat, sigma })
    }

    pub fn truth(&self) -> &VarModel {
        &self.truth
    }

    pub fn fitted(&self) -> &VarModel {
        &self.fitted
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn d(&self) -> usize {
        self.truth.d()
    }

    /// `Σ^ν` of the truth.
    pub fn sigma(&self) -> &AutocovMatrix {
        &self.sigma
    }

    pub fn truth_companion(&self) -> &CompanionMatrix {
        &self.a
    }

    pub fn fitted_companion(&self) -> &CompanionMatrix {
        &self.a_hat
    }

    /// Top `d` rows of `A^ω − Â^ω`, a `d × νd` matrix.
    pub fn power_diff(&self, omega: usize) -> DMatrix<f64> {
        let d = self.d();
        let diff = self.a.power(omega as u32) - self.a_hat.power(omega as u32);
        diff.rows(0, d).into_owned()
    }
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// `E[ζ_i²] = σ² Σ_{j<ω} Σ_k (A^j)_{ik}²`, the irreducible ω-step variance.
pub fn noise_floor(truth: &VarModel, omega: usize, i: usize) -> Result<f64> {
    Ok(noise_floors(truth, omega)?[i])
}

pub fn noise_floors(truth: &VarModel, omega: usize) -> Result<Vec<f64>> {
    if omega == 0 {
        return Err(Error::InvalidArgument("omega must be at least 1".into()));
    }
    let d = truth.d();
    let a = truth.companion().dense().clone();
    let n = a.nrows();
    let mut pw = DMatrix::<f64>::identity(n, n);
    let mut acc = vec![0.0; d];
    for j in 0..omega {
        if j > 0 {
            pw = &a * &pw;
        }
        for (i, v) in acc.iter_mut().enumerate() {
            *v += (0..d).map(|k| pw[(i, k)].powi(2)).sum::<f64>();
        }
    }
    Ok(acc.into_iter().map(|v| v * truth.noise_variance()).collect())
}

/// Analytic `S_ω` per output component.
pub fn stat_risk(pair: &ModelPair, omega: usize) -> Result<Vec<f64>> {
    let floors = noise_floors(&pair.truth, omega)?;
    let delta = pair.power_diff(omega);
    Ok((0..pair.d())
        .map(|i| quad_form(pair.sigma.dense(), &row(&delta, i)) + floors[i])
        .collect())
}

/// Analytic interventional risk per output component: `G_do` for fixed
/// values, the averaged `G_{ω,i}` for marginal draws.
pub fn causal_risk(pair: &ModelPair, spec: &InterventionSpec) -> Result<Vec<f64>> {
    let gamma = interventional_cov(&pair.sigma, spec)?;
    let floors = noise_floors(&pair.truth, spec.omega)?;
    let delta = pair.power_diff(spec.omega);
    Ok((0..pair.d())
        .map(|i| quad_form(&gamma.dense, &row(&delta, i)) + floors[i])
        .collect())
}

/// `G − S` evaluated several ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskDifference {
    /// `Δ_i^T (Γ − Σ^ν) Δ_i` per component (signed).
    pub quadratic: Vec<f64>,
    /// The same quantity from an explicit sum over the changed entries.
    pub expansion: Vec<f64>,
    /// `2|Δ_{ii} Σ_{k≠i} Δ_{ik} Σ^ν_{ik}|` for the intervened component `i`,
    /// defined for a single averaged intervention on one component.
    pub row_formula: Option<f64>,
    /// `2|ΔA_{11} Σ_{k=2}^ν ΔA_{1k} γ_{k−1}|` for scalar models.
    pub scalar_formula: Option<f64>,
}

pub fn risk_difference(pair: &ModelPair, spec: &InterventionSpec) -> Result<RiskDifference> {
    let gamma = interventional_cov(&pair.sigma, spec)?;
    let sigma = pair.sigma.dense();
    let delta = pair.power_diff(spec.omega);
    let d = pair.d();
    let size = sigma.nrows();
    let diff_mat = &gamma.dense - sigma;
    let quadratic: Vec<f64> = (0..d).map(|i| quad_form(&diff_mat, &row(&delta, i))).collect();

    let touched = spec.window_indices(d);
    let is_touched = |k: usize| touched.contains(&k);
    let expansion = (0..d)
        .map(|i| {
            let r = row(&delta, i);
            let mut acc = 0.0;
            for k in 0..size {
                for l in k + 1..size {
                    if is_touched(k) || is_touched(l) {
                        acc -= 2.0 * r[k] * r[l] * sigma[(k, l)];
                    }
                }
            }
            if spec.kind == InterventionKind::AtomicFixed {
                let values = spec.values.as_ref().expect("validated");
                for (n, &k) in touched.iter().enumerate() {
                    acc += r[k] * r[k] * (values[n % values.len()].powi(2) - sigma[(k, k)]);
                }
            }
            acc
        })
        .collect();

    let single = spec.kind == InterventionKind::AtomicAveraged && spec.components.len() == 1 && spec.steps == 1;
    let row_formula = single.then(|| {
        let i = spec.components[0];
        let r = row(&delta, i);
        let cross: f64 = (0..size).filter(|&k| k != i).map(|k| r[k] * sigma[(i, k)]).sum();
        2.0 * (r[i] * cross).abs()
    });
    let scalar_formula = (single && d == 1).then(|| {
        let r = row(&delta, 0);
        let cross: f64 = (2..=pair.nu).map(|k| r[k - 1] * pair.sigma.lag(k - 1)[(0, 0)]).sum();
        2.0 * (r[0] * cross).abs()
    });
    Ok(RiskDifference { quadratic, expansion, row_formula, scalar_formula })
}

/// `G / S` for a scalar model at `ω = 1` when every lag in the window is
/// intervened on, written in unit-variance form
/// `(Δ^TΔ + σ̃²) / (Δ^T R Δ + σ̃²)` with `R` the autocorrelation matrix and
/// `σ̃² = σ² / γ_0`.
pub fn risk_quotient(pair: &ModelPair) -> Result<f64> {
    if pair.d() != 1 {
        return Err(Error::InvalidArgument("the quotient is defined for scalar models".into()));
    }
    let r = pair.sigma.autocorrelation();
    let delta = row(&pair.power_diff(1), 0);
    let s2 = pair.truth.noise_variance() / pair.sigma.gamma0();
    let num: f64 = delta.iter().map(|x| x * x).sum::<f64>() + s2;
    Ok(num / (quad_form(&r, &delta) + s2))
}

/// Exact `G − S` on component `i` under a relative shift: `(Δ_i · v)²` with
/// `v` the window shift.
pub fn shift_gap(pair: &ModelPair, spec: &InterventionSpec, i: usize) -> Result<f64> {
    spec.validate(pair.d())?;
    if spec.kind != InterventionKind::RelativeShift {
        return Err(Error::InvalidArgument("shift_gap needs a relative_shift spec".into()));
    }
    if i >= pair.d() {
        return Err(Error::IndexOutOfRange { index: i, limit: pair.d() });
    }
    let size = pair.nu * pair.d();
    let indices = spec.window_indices(pair.d());
    if let Some(&bad) = indices.iter().find(|&&k| k >= size) {
        return Err(Error::IndexOutOfRange { index: bad, limit: size });
    }
    let r = row(&pair.power_diff(spec.omega), i);
    let alpha = spec.alpha.expect("validated");
    Ok(indices.iter().map(|&k| r[k] * alpha).sum::<f64>().powi(2))
}

/// `(A^ω_{11} − Â^ω_{11})² α²` for scalar pairs.
pub fn relative_shift_gap(pair: &ModelPair, omega: usize, alpha: f64) -> Result<f64> {
    if pair.d() != 1 {
        return Err(Error::InvalidArgument("relative_shift_gap expects a scalar pair".into()));
    }
    shift_gap(pair, &InterventionSpec::shift(omega, vec![0], alpha), 0)
}

/// Top `d` rows of `Â^ω` for the fitted model at its own order: the
/// coefficients of the iterated zero-noise ω-step forecast.
pub fn forecast_rows(model: &VarModel, omega: usize) -> DMatrix<f64> {
    let c = model.companion();
    c.power(omega as u32).rows(0, model.d()).into_owned()
}

/// Squared ω-step forecast errors on component `i` over every window of a
/// path. Entry `k` is the error for target `x_{p+ω−1+k}`.
pub fn squared_errors(fitted: &VarModel, path: &SamplePath, omega: usize, i: usize) -> Result<Vec<f64>> {
    let (d, p) = (fitted.d(), fitted.p());
    if path.d() != d {
        return Err(Error::DimensionMismatch(format!("path has d = {}, model has d = {d}", path.d())));
    }
    if i >= d {
        return Err(Error::IndexOutOfRange { index: i, limit: d });
    }
    if omega == 0 {
        return Err(Error::InvalidArgument("omega must be at least 1".into()));
    }
    let first = p + omega - 1;
    if path.len() <= first {
        return Err(Error::PathTooShort { needed: first + 1, got: path.len() });
    }
    let b = forecast_rows(fitted, omega);
    Ok((first..path.len())
        .map(|t| {
            let mut pred = 0.0;
            for k in 0..p {
                let x = path.get(t - omega - k);
                pred += (0..d).map(|j| b[(i, k * d + j)] * x[j]).sum::<f64>();
            }
            (path.get(t)[i] - pred).powi(2)
        })
        .collect())
}

/// Empirical `S_ω` per component: mean squared ω-step error over a path.
pub fn empirical_stat_risk(fitted: &VarModel, path: &SamplePath, omega: usize) -> Result<Vec<f64>> {
    (0..fitted.d())
        .map(|i| {
            let e = squared_errors(fitted, path, omega, i)?;
            Ok(e.iter().sum::<f64>() / e.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRisk {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl MonteCarloRisk {
    /// `|value − mean| ≤ k · std_err`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (value - self.mean).abs() <= k * self.std_err
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(self, o: Moments) -> Moments {
        Moments { n: self.n + o.n, sum: self.sum + o.sum, sum_sq: self.sum_sq + o.sum_sq }
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn iid(&self) -> MonteCarloRisk {
        let mean = self.mean();
        let var = if self.n > 1 {
            ((self.sum_sq - self.n as f64 * mean * mean) / (self.n - 1) as f64).max(0.0)
        } else {
            0.0
        };
        MonteCarloRisk { mean, std_err: (var / self.n as f64).sqrt(), samples: self.n }
    }
}

/// Standard error from the spread of batch means, robust to correlation
/// between neighbouring draws.
fn batch_means(batches: &[Moments]) -> MonteCarloRisk {
    let total = batches.iter().copied().fold(Moments::default(), Moments::merge);
    let mean = total.mean();
    let k = batches.len();
    let std_err = if k > 1 {
        let var = batches.iter().map(|b| (b.mean() - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    MonteCarloRisk { mean, std_err, samples: total.n }
}

/// Paired Monte-Carlo estimates on component `i`, using common random
/// numbers for the observational and intervened errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedMonteCarlo {
    pub stat: MonteCarloRisk,
    pub causal: MonteCarloRisk,
    /// Per-draw `e_G² − e_S²`.
    pub diff: MonteCarloRisk,
}

/// Monte-Carlo `S` and `G` from exact stationary windows `y ~ N(0, Σ^ν)`.
/// Each draw intervenes on a copy of the window, rolls the truth forward
/// `ω` steps with shared innovations, and scores the fitted forecast made
/// from the observed and from the intervened window.
pub fn monte_carlo_risks(
    pair: &ModelPair,
    spec: &InterventionSpec,
    i: usize,
    draws: usize,
    seed: u64,
) -> Result<PairedMonteCarlo> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    let d = pair.d();
    if i >= d {
        return Err(Error::IndexOutOfRange { index: i, limit: d });
    }
    if spec.steps > pair.nu {
        return Err(Error::IndexOutOfRange { index: spec.steps, limit: pair.nu });
    }
    let sampler = InterventionSampler::new(&pair.truth, spec)?;
    let windows = WindowSampler::new(pair.sigma.dense());
    let b = forecast_rows(&pair.fitted, spec.omega);
    let (nu, p_hat) = (pair.nu, pair.fitted.p());
    let chunks = draws.div_ceil(MC_CHUNK);
    let parts: Vec<(Moments, Moments, Moments)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
            let len = MC_CHUNK.min(draws - c * MC_CHUNK);
            let (mut z, mut y) = (vec![0.0; nu * d], vec![0.0; nu * d]);
            let mut noise = vec![0.0; spec.omega * d];
            let sd = pair.truth.noise_variance().sqrt();
            let (mut ms, mut mg, mut md) = (Moments::default(), Moments::default(), Moments::default());
            for _ in 0..len {
                windows.sample_into(&mut rng, &mut z, &mut y);
                let hist: Vec<f64> = y.chunks(d).rev().flatten().copied().collect();
                let mut hist_do = hist.clone();
                sampler.apply(&mut hist_do, &mut rng);
                for v in noise.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v = e * sd;
                }
                let es = forecast_error(&pair.truth, &b, p_hat, &hist, spec.omega, &noise, i);
                let eg = forecast_error(&pair.truth, &b, p_hat, &hist_do, spec.omega, &noise, i);
                ms.push(es * es);
                mg.push(eg * eg);
                md.push(eg * eg - es * es);
            }
            (ms, mg, md)
        })
        .collect();
    let fold = |f: fn(&(Moments, Moments, Moments)) -> Moments| {
        parts.iter().map(f).fold(Moments::default(), Moments::merge).iid()
    };
    Ok(PairedMonteCarlo { stat: fold(|t| t.0), causal: fold(|t| t.1), diff: fold(|t| t.2) })
}

/// Error on component `i` of the fitted forecast against the truth rolled
/// forward from `hist` (chronological) with the given innovations.
fn forecast_error(
    truth: &VarModel,
    b: &DMatrix<f64>,
    p_hat: usize,
    hist: &[f64],
    omega: usize,
    noise: &[f64],
    i: usize,
) -> f64 {
    let target = roll_with_noise(truth, hist, omega, noise)[i];
    let d = truth.d();
    let len = hist.len() / d;
    let mut pred = 0.0;
    for k in 0..p_hat {
        let x = &hist[(len - 1 - k) * d..(len - k) * d];
        pred += (0..d).map(|j| b[(i, k * d + j)] * x[j]).sum::<f64>();
    }
    target - pred
}

/// Deterministic counterpart of
/// [`roll_forward`](crate::intervention::roll_forward) with the innovations
/// supplied as `ω·d` values in time order.
pub fn roll_with_noise(model: &VarModel, hist: &[f64], omega: usize, noise: &[f64]) -> Vec<f64> {
    let (d, p) = (model.d(), model.p());
    let mut buf = hist[hist.len() - p * d..].to_vec();
    for s in 0..omega {
        let t = buf.len() / d;
        for i in 0..d {
            let mut v = noise[s * d + i];
            for (l, a) in model.coeffs().iter().enumerate() {
                let lagged = &buf[(t - 1 - l) * d..(t - l) * d];
                v += (0..d).map(|j| a[(i, j)] * lagged[j]).sum::<f64>();
            }
            buf.push(v);
        }
    }
    buf[buf.len() - d..].to_vec()
}

/// Empirical causal risk on component `i` from an observed path: windows of
/// the path are visited cyclically, each visit intervenes on the window,
/// regenerates the truth forward and scores the fitted forecast made from
/// the intervened window. Standard errors use batch means.
pub fn empirical_causal_risk(
    truth: &VarModel,
    fitted: &VarModel,
    path: &SamplePath,
    spec: &InterventionSpec,
    i: usize,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloRisk> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    if spec.kind == InterventionKind::AtomicFixed {
        return Err(Error::InvalidArgument("empirical causal risk expects averaged or shift interventions".into()));
    }
    let d = truth.d();
    if fitted.d() != d || path.d() != d {
        return Err(Error::DimensionMismatch("truth, fitted and path must share d".into()));
    }
    if i >= d {
        return Err(Error::IndexOutOfRange { index: i, limit: d });
    }
    let window = truth.p().max(fitted.p()).max(spec.steps);
    if path.len() < window {
        return Err(Error::PathTooShort { needed: window, got: path.len() });
    }
    let sampler = InterventionSampler::new(truth, spec)?;
    let b = forecast_rows(fitted, spec.omega);
    let n_windows = path.len() - window + 1;
    let batches = draws.min(64);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|c| {
            let start = c * draws / batches;
            let end = (c + 1) * draws / batches;
            let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
            let mut noise = vec![0.0; spec.omega * d];
            let sd = truth.noise_variance().sqrt();
            let mut m = Moments::default();
            for k in start..end {
                let s = k % n_windows;
                let mut hist = path.values()[s * d..(s + window) * d].to_vec();
                sampler.apply(&mut hist, &mut rng);
                for v in noise.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v = e * sd;
                }
                let e = forecast_error(truth, &b, fitted.p(), &hist, spec.omega, &noise, i);
                m.push(e * e);
            }
            m
        })
        .collect();
    Ok(batch_means(&parts))
}

/// Monte-Carlo observational risk on component `i` along a path, the
/// path-based counterpart of [`empirical_causal_risk`] with batch-means
/// standard errors.
pub fn empirical_stat_risk_mc(fitted: &VarModel, path: &SamplePath, omega: usize, i: usize) -> Result<MonteCarloRisk> {
    let e = squared_errors(fitted, path, omega, i)?;
    let batches = e.len().min(64);
    let parts: Vec<Moments> = (0..batches)
        .map(|c| {
            let mut m = Moments::default();
            for &x in &e[c * e.len() / batches..(c + 1) * e.len() / batches] {
                m.push(x);
            }
            m
        })
        .collect();
    Ok(batch_means(&parts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    Analytic,
    MonteCarlo,
    EmpiricalSample,
}

/// Summary of `S`, `G` and their gap on one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub s_omega: f64,
    /// Risk under the fixed-value intervention, when the spec carries values.
    pub g_do: Option<f64>,
    pub g_avg: f64,
    /// `|G_avg − S|`.
    pub diff: f64,
    /// `|G − S|` from the explicit entrywise expansion.
    pub diff_expansion: f64,
    /// Single-row closed form, when defined.
    pub diff_row_formula: Option<f64>,
    /// Exact `G − S` under the spec when it is a relative shift.
    pub shift_gap: Option<f64>,
    pub noise_floor: f64,
    /// `G_avg / S`.
    pub quotient: f64,
    /// Unit-variance quotient with the whole window intervened (scalar, ω = 1).
    pub quotient_full_window: Option<f64>,
    pub method: RiskMethod,
    pub omega: usize,
    pub component: usize,
    pub spec: InterventionSpec,
}

/// Analytic risk report for component `i`. Fixed-value and shift specs also
/// produce the averaged risk on the same indices.
pub fn risk_report(pair: &ModelPair, spec: &InterventionSpec, i: usize) -> Result<RiskReport> {
    spec.validate(pair.d())?;
    if i >= pair.d() {
        return Err(Error::IndexOutOfRange { index: i, limit: pair.d() });
    }
    let omega = spec.omega;
    let averaged = InterventionSpec { kind: InterventionKind::AtomicAveraged, values: None, alpha: None, ..spec.clone() };
    let s = stat_risk(pair, omega)?[i];
    let g_avg = causal_risk(pair, &averaged)?[i];
    let g_do = match spec.kind {
        InterventionKind::AtomicFixed => Some(causal_risk(pair, spec)?[i]),
        _ => None,
    };
    let shift = match spec.kind {
        InterventionKind::RelativeShift => Some(shift_gap(pair, spec, i)?),
        _ => None,
    };
    let diff = risk_difference(pair, &averaged)?;
    let quotient_full_window = if pair.d() == 1 && omega == 1 { Some(risk_quotient(pair)?) } else { None };
    Ok(RiskReport {
        s_omega: s,
        g_do,
        g_avg,
        diff: (g_avg - s).abs(),
        diff_expansion: diff.expansion[i].abs(),
        diff_row_formula: if spec.components == [i] { diff.row_formula } else { None },
        shift_gap: shift,
        noise_floor: noise_floor(&pair.truth, omega, i)?,
        quotient: g_avg / s,
        quotient_full_window,
        method: RiskMethod::Analytic,
        omega,
        component: i,
        spec: spec.clone(),
    })
}

/// Uniform helper for tests and the harness: random draws on a seeded
/// stream, exposed so callers can perturb coefficient vectors reproducibly.
pub fn perturb<R: Rng + ?Sized>(model: &VarModel, scale: f64, rng: &mut R) -> Result<VarModel> {
    let blocks = model
        .coeffs()
        .iter()
        .map(|b| b.map(|x| x + scale * rng.random_range(-1.0..1.0)))
        .collect();
    VarModel::new(blocks, model.noise_variance())
}
