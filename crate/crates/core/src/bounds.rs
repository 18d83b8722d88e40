//! Bounds on the gap between interventional and statistical risk.
//!
//! * `prop1`: `|G − S| ≤ (2κ(Σ^ν) − 1)(S − σ²)`.
//! * `cor2`: `|G − S| ≤ K S ν (1+δ)^{2ν} / (1−δ²)` for scalar models.
//! * `schur_tight`: `K max{δ, δ̂}^ω Σ_{k≥2} |S^λ_{ωk} − S^λ̂_{ωk}| |γ_{k−1}|`.
//! * `thm1`: a finite-sample bound on `G` from one observed path using
//!   independent blocks and an empirical Rademacher term.
//!
//! Spectral helper bounds for scalar AR(p) processes are included as plain
//! functions.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::companion::{schur_power_row, DISTINCT_TOL};
use crate::error::{Error, Result};
use crate::intervention::InterventionSpec;
use crate::linalg::{binomial, extreme_eigenvalues, min_eigenvector};
use crate::process::{exact_autocov, SamplePath, VarModel};
use crate::risk::{causal_risk, forecast_rows, squared_errors, stat_risk, ModelPair};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    Prop1,
    Cor2,
    SchurTight,
    Thm1,
}

impl BoundName {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundName::Prop1 => "prop1",
            BoundName::Cor2 => "cor2",
            BoundName::SchurTight => "schur_tight",
            BoundName::Thm1 => "thm1",
        }
    }
}

/// A bound value together with the quantity it bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: BoundName,
    pub value: f64,
    pub lhs: Option<f64>,
    pub holds: Option<bool>,
    pub slack: Option<f64>,
    pub inputs: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(name: BoundName, value: f64, inputs: BTreeMap<String, f64>) -> Self {
        Self { name, value, lhs: None, holds: None, slack: None, inputs }
    }

    /// Attaches the bounded quantity and evaluates `holds` with a relative
    /// tolerance of `1e−9`.
    pub fn with_lhs(mut self, lhs: f64) -> Self {
        self.lhs = Some(lhs);
        self.holds = Some(lhs <= self.value + 1e-9 * (1.0 + self.value.abs()));
        self.slack = Some(self.value - lhs);
        self
    }
}

fn inputs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// `λ_max / λ_min`, or `+∞` when `λ_min < 1e−12 λ_max`.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = extreme_eigenvalues(m);
    if hi <= 0.0 || lo < 1e-12 * hi {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Independent-block scheme with `2 μ m = n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub n: usize,
    pub mu: usize,
    pub m: usize,
}

impl BlockScheme {
    pub fn new(n: usize, mu: usize, m: usize) -> Result<Self> {
        if mu == 0 || m == 0 || 2 * mu * m != n {
            return Err(Error::InvalidBlockScheme(format!("need 2·μ·m = n, got μ={mu}, m={m}, n={n}")));
        }
        Ok(Self { n, mu, m })
    }

    /// `m = ⌈ln n⌉`, `μ = ⌊n / 2m⌋`, with `n` shrunk to `2μm`.
    pub fn default_for(n: usize) -> Result<Self> {
        let m = ((n as f64).ln().ceil() as usize).max(1);
        let mu = n / (2 * m);
        Self::new(2 * mu * m, mu, m)
    }

    /// Smallest block length `m` whose mixing correction `2(μ−1)ρ^m` uses at
    /// most half of the confidence budget. Falls back to a single block pair.
    pub fn mixing_aware(n: usize, rho: f64, delta_conf: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidBlockScheme(format!("sample of size {n} cannot be blocked")));
        }
        for m in 1..=n / 2 {
            let mu = n / (2 * m);
            if mu == 0 {
                break;
            }
            if 2.0 * (mu as f64 - 1.0) * rho.powi(m as i32) <= delta_conf / 2.0 {
                return Self::new(2 * mu * m, mu, m);
            }
        }
        Self::new(2 * (n / 2), 1, n / 2)
    }

    /// `δ′ = δ − 2(μ−1)ρ^m`.
    pub fn effective_confidence(&self, rho: f64, delta_conf: f64) -> f64 {
        delta_conf - 2.0 * (self.mu as f64 - 1.0) * rho.powi(self.m as i32)
    }
}

fn averaged_gap(pair: &ModelPair, omega: usize, i: usize) -> Result<(f64, f64, f64)> {
    let s = stat_risk(pair, omega)?[i];
    let g = causal_risk(pair, &InterventionSpec::averaged(omega, vec![i]))?[i];
    Ok((s, g, (g - s).abs()))
}

/// `(2κ(Σ^ν) − 1)(S_ω − σ²)` against `|G_{ω,i} − S_ω|` on component `i`.
pub fn prop1_bound(pair: &ModelPair, omega: usize, i: usize) -> Result<BoundReport> {
    if i >= pair.d() {
        return Err(Error::IndexOutOfRange { index: i, limit: pair.d() });
    }
    let kappa = condition_number(pair.sigma().dense());
    let sigma2 = pair.truth().noise_variance();
    let (s, g, gap) = averaged_gap(pair, omega, i)?;
    let excess = (s - sigma2).max(0.0);
    let value = if excess == 0.0 { 0.0 } else { (2.0 * kappa - 1.0) * excess };
    Ok(BoundReport::new(
        BoundName::Prop1,
        value,
        inputs(&[("kappa", kappa), ("nu", pair.nu() as f64), ("sigma2", sigma2), ("s", s), ("g", g)]),
    )
    .with_lhs(gap))
}

/// Default constant for [`cor2_bound`]: `4 q^q` with `q` the true order.
pub fn cor2_default_constant(q: usize) -> f64 {
    4.0 * (q as f64).powi(q as i32)
}

/// `K S_ω ν (1+δ)^{2ν} / (1−δ²)` for scalar pairs, `δ` the truth's spectral
/// radius. `k` defaults to [`cor2_default_constant`].
pub fn cor2_bound(pair: &ModelPair, omega: usize, k: Option<f64>) -> Result<BoundReport> {
    if pair.d() != 1 {
        return Err(Error::InvalidArgument("cor2 is stated for scalar models".into()));
    }
    let delta = pair.truth().companion().spectrum(DISTINCT_TOL)?.max_modulus;
    if delta >= 1.0 {
        return Err(Error::NonStationary { max_modulus: delta, limit: 1.0 });
    }
    let k = k.unwrap_or_else(|| cor2_default_constant(pair.truth().p()));
    let nu = pair.nu() as f64;
    let (s, _, gap) = averaged_gap(pair, omega, 0)?;
    let value = k * s * nu * (1.0 + delta).powf(2.0 * nu) / (1.0 - delta * delta);
    Ok(BoundReport::new(BoundName::Cor2, value, inputs(&[("delta", delta), ("nu", nu), ("k", k), ("s", s)]))
        .with_lhs(gap))
}

/// Default constant for [`schur_tight_bound`]: `4 C(ω+ν−1, ν−1)`.
///
/// `|A^ω_{11} − Â^ω_{11}| = |h_ω(λ) − h_ω(λ̂)|` and the complete homogeneous
/// polynomial `h_ω` in `ν` variables has `C(ω+ν−1, ν−1)` monomials, each at
/// most `max{δ, δ̂}^ω` in modulus. Together with the factor 2 of the exact
/// gap this makes the bound rigorous.
pub fn schur_tight_default_constant(omega: usize, nu: usize) -> f64 {
    4.0 * binomial((omega + nu - 1) as u64, (nu - 1) as u64)
}

/// `K max{δ, δ̂}^ω Σ_{k=2}^ν |S^λ_{ωk} − S^λ̂_{ωk}| |γ_{k−1}|` for scalar
/// pairs. Schur values come from the bialternant when both padded spectra
/// are distinct and from direct powers otherwise (recorded as
/// `inputs["fallback"] = 1`).
pub fn schur_tight_bound(pair: &ModelPair, omega: usize, k: Option<f64>) -> Result<BoundReport> {
    if pair.d() != 1 {
        return Err(Error::InvalidArgument("the Schur bound is stated for scalar models".into()));
    }
    let nu = pair.nu();
    let spec_t = pair.truth_companion().spectrum(DISTINCT_TOL)?;
    let spec_f = pair.fitted_companion().spectrum(DISTINCT_TOL)?;
    let via_schur = match (schur_power_row(&spec_t, omega), schur_power_row(&spec_f, omega)) {
        (Ok(a), Ok(b)) => Some((a, b)),
        _ => None,
    };
    let (row_t, row_f, fallback) = match via_schur {
        Some((a, b)) => (a, b, 0.0),
        None => {
            let a = pair.truth_companion().power(omega as u32);
            let b = pair.fitted_companion().power(omega as u32);
            let signed = |m: &DMatrix<f64>| -> Vec<f64> {
                (0..nu).map(|c| if c % 2 == 0 { m[(0, c)] } else { -m[(0, c)] }).collect()
            };
            (signed(&a), signed(&b), 1.0)
        }
    };
    let k = k.unwrap_or_else(|| schur_tight_default_constant(omega, nu));
    let dmax = spec_t.max_modulus.max(spec_f.max_modulus);
    let sum: f64 = (2..=nu)
        .map(|c| (row_t[c - 1] - row_f[c - 1]).abs() * pair.sigma().lag(c - 1)[(0, 0)].abs())
        .sum();
    let value = k * dmax.powi(omega as i32) * sum;
    let (_, _, gap) = averaged_gap(pair, omega, 0)?;
    Ok(BoundReport::new(
        BoundName::SchurTight,
        value,
        inputs(&[
            ("delta", spec_t.max_modulus),
            ("delta_hat", spec_f.max_modulus),
            ("nu", nu as f64),
            ("k", k),
            ("fallback", fallback),
        ]),
    )
    .with_lhs(gap))
}

/// `(4√M B / μ) E_σ ‖Σ_j σ_j z_j‖` with the expectation over `draws` random
/// sign vectors.
pub fn rademacher_estimate(z: &[Vec<f64>], radius: f64, m_trunc: f64, seed: u64, draws: usize) -> Result<f64> {
    let mu = z.len();
    if mu == 0 {
        return Err(Error::InvalidArgument("need at least one block".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    let dim = z[0].len();
    if z.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch("block regressors differ in length".into()));
    }
    const CHUNK: usize = 256;
    let chunks = draws.div_ceil(CHUNK);
    let total: f64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
            let mut acc = 0.0;
            let mut v = vec![0.0; dim];
            for _ in 0..CHUNK.min(draws - c * CHUNK) {
                v.iter_mut().for_each(|x| *x = 0.0);
                for zj in z {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    v.iter_mut().zip(zj).for_each(|(a, b)| *a += s * b);
                }
                acc += v.iter().map(|x| x * x).sum::<f64>().sqrt();
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(4.0 * m_trunc.sqrt() * radius / mu as f64 * (total / draws as f64))
}

/// Options for [`thm1_bound`]. `None` fields take data-driven defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm1Options {
    /// Loss truncation; default the 99.9th percentile of squared errors.
    pub m_trunc: Option<f64>,
    /// Mixing rate `ρ ∈ [0, 1)`.
    pub rho: f64,
    pub delta_conf: f64,
    /// Radius of the linear predictor class; default the norm of the
    /// fitted forecast row.
    pub radius: Option<f64>,
    pub seed: u64,
    pub draws: usize,
}

impl Default for Thm1Options {
    fn default() -> Self {
        Self { m_trunc: None, rho: 0.9, delta_conf: 0.05, radius: None, seed: 0, draws: 1000 }
    }
}

/// Empirical quantile with linear interpolation.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// `ζ Ŝ_ω + ζ R̂_μ + 3 ζ M √(log(4/δ′) / 2μ)` with `ζ = 2κ`.
///
/// The `n = 2μm` targets used are the first `n` forecastable points of the
/// path. The Rademacher term uses one regressor per block, taken at the last
/// target of each of the `μ` even-indexed blocks.
pub fn thm1_bound(
    fitted: &VarModel,
    path: &SamplePath,
    scheme: BlockScheme,
    omega: usize,
    i: usize,
    kappa: f64,
    opts: Thm1Options,
) -> Result<BoundReport> {
    if !(0.0..1.0).contains(&opts.rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {}", opts.rho)));
    }
    let delta_prime = scheme.effective_confidence(opts.rho, opts.delta_conf);
    if delta_prime <= 0.0 {
        return Err(Error::InvalidBlockScheme(format!(
            "δ′ = {delta_prime:.3e} ≤ 0 for μ={}, m={}, ρ={}",
            scheme.mu, scheme.m, opts.rho
        )));
    }
    let errors = squared_errors(fitted, path, omega, i)?;
    if errors.len() < scheme.n {
        return Err(Error::PathTooShort { needed: scheme.n + fitted.p() + omega - 1, got: path.len() });
    }
    let errors = &errors[..scheme.n];
    let m_trunc = opts.m_trunc.unwrap_or_else(|| quantile(errors, 0.999));
    let s_hat = errors.iter().map(|e| e.min(m_trunc)).sum::<f64>() / scheme.n as f64;

    let (d, p) = (fitted.d(), fitted.p());
    let first = p + omega - 1;
    let z: Vec<Vec<f64>> = (0..scheme.mu)
        .map(|j| {
            let t = first + 2 * j * scheme.m + scheme.m - 1;
            (0..p).flat_map(|k| path.get(t - omega - k).to_vec()).collect()
        })
        .collect();
    let radius = opts.radius.unwrap_or_else(|| {
        let b = forecast_rows(fitted, omega);
        b.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    });
    debug_assert_eq!(z[0].len(), d * p);
    let rad = rademacher_estimate(&z, radius, m_trunc, opts.seed, opts.draws)?;
    let zeta = 2.0 * kappa;
    let conf = 3.0 * zeta * m_trunc * ((4.0 / delta_prime).ln() / (2.0 * scheme.mu as f64)).sqrt();
    let value = zeta * s_hat + zeta * rad + conf;
    Ok(BoundReport::new(
        BoundName::Thm1,
        value,
        inputs(&[
            ("kappa", kappa),
            ("zeta", zeta),
            ("s_hat", s_hat),
            ("rademacher", rad),
            ("m_trunc", m_trunc),
            ("radius", radius),
            ("rho", opts.rho),
            ("mu", scheme.mu as f64),
            ("m", scheme.m as f64),
            ("n", scheme.n as f64),
            ("delta_conf", opts.delta_conf),
            ("delta_prime", delta_prime),
        ]),
    ))
}

/// `σ² / (1+δ)^{2p}`, the lower bound on `λ_min(Σ_n)` for scalar AR(p).
pub fn lambda_min_lower(sigma2: f64, delta: f64, p: usize) -> f64 {
    sigma2 / (1.0 + delta).powi(2 * p as i32)
}

/// `2 p^p n σ² / (1−δ²)`, the upper bound on `λ_max(Σ_n)` for scalar AR(p).
pub fn lambda_max_upper(sigma2: f64, delta: f64, p: usize, n: usize) -> f64 {
    2.0 * (p as f64).powi(p as i32) * n as f64 * sigma2 / (1.0 - delta * delta)
}

/// `p^p σ² δ^k / (1−δ²)`, the stated bound on `|γ_k|` for scalar AR(p).
pub fn gamma_upper(sigma2: f64, delta: f64, p: usize, k: usize) -> f64 {
    (p as f64).powi(p as i32) * sigma2 * delta.powi(k as i32) / (1.0 - delta * delta)
}

/// Scalar AR(2) truth with the fitted model displaced by `scale · u_min`,
/// the unit eigenvector of the smallest eigenvalue of `Σ_2`. This attains
/// `(G − S)/(S − σ²) = (κ − 1)/2` at `ω = 1`.
pub fn tightness_pair(a1: f64, a2: f64, scale: f64) -> Result<ModelPair> {
    let truth = VarModel::scalar(&[a1, a2], 1.0)?;
    let sigma = exact_autocov(&truth, 2)?;
    let (_, u) = min_eigenvector(sigma.dense());
    let fitted = VarModel::scalar(&[a1 + scale * u[0], a2 + scale * u[1]], 1.0)?;
    ModelPair::new(truth, fitted)
}
