//! The do-operator on VAR processes.
//!
//! An intervention acts on the window `(x_{t−ω}, x_{t−ω−1}, …)`, so the
//! intervened indices live in the leading block(s) of the most-recent-first
//! autocovariance ordering. Simultaneous interventions use independent
//! marginal draws per intervened index.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{exact_autocov, AutocovMatrix, NoiseDist, VarModel};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    /// `do(x = x*)` with given values.
    #[serde(alias = "atomicFixed")]
    AtomicFixed,
    /// `do(x = x*)` with `x*` drawn from the stationary marginal.
    #[serde(alias = "atomicAveraged")]
    AtomicAveraged,
    /// `do(x = x + α)`, keeping incoming dependencies.
    #[serde(alias = "relativeShift")]
    RelativeShift,
}

/// An intervention `ω` steps before the forecast target.
///
/// `components` are zero-based. `steps > 1` intervenes on the same
/// components of `x_{t−ω}, …, x_{t−ω−steps+1}` simultaneously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub kind: InterventionKind,
    pub omega: usize,
    pub components: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub steps: usize,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

impl InterventionSpec {
    pub fn averaged(omega: usize, components: Vec<usize>) -> Self {
        Self { kind: InterventionKind::AtomicAveraged, omega, components, values: None, alpha: None, steps: 1 }
    }

    pub fn fixed(omega: usize, components: Vec<usize>, values: Vec<f64>) -> Self {
        Self { kind: InterventionKind::AtomicFixed, omega, components, values: Some(values), alpha: None, steps: 1 }
    }

    pub fn shift(omega: usize, components: Vec<usize>, alpha: f64) -> Self {
        Self { kind: InterventionKind::RelativeShift, omega, components, values: None, alpha: Some(alpha), steps: 1 }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    /// Checks internal consistency and that components index a `d`-vector.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.omega == 0 {
            return Err(Error::InvalidArgument("omega must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.components.is_empty() {
            return Err(Error::InvalidArgument("intervention needs at least one component".into()));
        }
        for (n, &c) in self.components.iter().enumerate() {
            if c >= d {
                return Err(Error::IndexOutOfRange { index: c, limit: d });
            }
            if self.components[..n].contains(&c) {
                return Err(Error::InvalidArgument(format!("component {c} listed twice")));
            }
        }
        match self.kind {
            InterventionKind::AtomicFixed => match &self.values {
                Some(v) if v.len() == self.components.len() && v.iter().all(|x| x.is_finite()) => {}
                _ => {
                    return Err(Error::InvalidArgument(
                        "atomic_fixed needs one finite value per component".into(),
                    ))
                }
            },
            InterventionKind::AtomicAveraged => {
                if self.values.is_some() || self.alpha.is_some() {
                    return Err(Error::InvalidArgument("atomic_averaged carries no values".into()));
                }
            }
            InterventionKind::RelativeShift => {
                if !self.alpha.is_some_and(f64::is_finite) {
                    return Err(Error::InvalidArgument("relative_shift needs a finite alpha".into()));
                }
            }
        }
        Ok(())
    }

    /// Flat indices into a most-recent-first window of `d`-vectors.
    pub fn window_indices(&self, d: usize) -> Vec<usize> {
        (0..self.steps)
            .flat_map(|b| self.components.iter().map(move |&c| b * d + c))
            .collect()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Γ (averaged) or Γ′ (fixed values) built from an autocovariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionalCov {
    pub base: AutocovMatrix,
    pub spec: InterventionSpec,
    pub dense: DMatrix<f64>,
}

/// Zeroes the off-diagonal entries in the rows and columns of the
/// intervened indices. The averaged kind keeps the marginal variance on the
/// diagonal; the fixed kind puts `x*²` there.
pub fn interventional_cov(sigma: &AutocovMatrix, spec: &InterventionSpec) -> Result<InterventionalCov> {
    spec.validate(sigma.d())?;
    if spec.kind == InterventionKind::RelativeShift {
        return Err(Error::InvalidArgument(
            "relative shifts do not have an interventional covariance of this form".into(),
        ));
    }
    let size = sigma.n() * sigma.d();
    let indices = spec.window_indices(sigma.d());
    if let Some(&bad) = indices.iter().find(|&&k| k >= size) {
        return Err(Error::IndexOutOfRange { index: bad, limit: size });
    }
    let mut dense = sigma.dense().clone();
    for (n, &k) in indices.iter().enumerate() {
        let diag = dense[(k, k)];
        dense.row_mut(k).fill(0.0);
        dense.column_mut(k).fill(0.0);
        dense[(k, k)] = match (&spec.kind, &spec.values) {
            (InterventionKind::AtomicFixed, Some(v)) => v[n % spec.components.len()].powi(2),
            _ => diag,
        };
    }
    Ok(InterventionalCov { base: sigma.clone(), spec: spec.clone(), dense })
}

/// Applies an intervention to a chronological history and rolls the truth
/// forward `ω` steps. Random draws come from one seeded stream: first the
/// averaged `x*` values (if any), then the innovations.
#[derive(Debug, Clone)]
pub struct InterventionSampler {
    model: VarModel,
    spec: InterventionSpec,
    marginal_sd: Vec<f64>,
    noise: NoiseDist,
}

impl InterventionSampler {
    pub fn new(model: &VarModel, spec: &InterventionSpec) -> Result<Self> {
        spec.validate(model.d())?;
        let marginal_sd = if spec.kind == InterventionKind::AtomicAveraged {
            let s = exact_autocov(model, 1)?;
            spec.components.iter().map(|&c| s.lag(0)[(c, c)].sqrt()).collect()
        } else {
            Vec::new()
        };
        Ok(Self { model: model.clone(), spec: spec.clone(), marginal_sd, noise: NoiseDist::Gaussian })
    }

    pub fn with_noise(mut self, noise: NoiseDist) -> Self {
        self.noise = noise;
        self
    }

    pub fn spec(&self) -> &InterventionSpec {
        &self.spec
    }

    /// Overwrites or shifts the intervened entries of `history` in place.
    /// `history` is chronological, flat, and ends at `x_{t−ω}`.
    pub fn apply<R: Rng + ?Sized>(&self, history: &mut [f64], rng: &mut R) {
        let d = self.model.d();
        let len = history.len() / d;
        for b in 0..self.spec.steps.min(len) {
            let row = &mut history[(len - 1 - b) * d..(len - b) * d];
            for (n, &c) in self.spec.components.iter().enumerate() {
                row[c] = match self.spec.kind {
                    InterventionKind::AtomicFixed => self.spec.values.as_ref().expect("validated")[n],
                    InterventionKind::AtomicAveraged => {
                        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                        z * self.marginal_sd[n]
                    }
                    InterventionKind::RelativeShift => row[c] + self.spec.alpha.expect("validated"),
                };
            }
        }
    }

    /// `(intervened history, x_t)` for a chronological history ending at
    /// `x_{t−ω}`.
    pub fn sample(&self, history: &[f64], seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        check_history(&self.model, history)?;
        let mut rng = rng_from_seed(seed);
        let mut h = history.to_vec();
        self.apply(&mut h, &mut rng);
        let target = roll_forward(&self.model, &h, self.spec.omega, &mut rng, self.noise);
        Ok((h, target))
    }
}

fn check_history(model: &VarModel, history: &[f64]) -> Result<()> {
    let d = model.d();
    if !history.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch(format!(
            "history of {} values is not a sequence of {d}-vectors",
            history.len()
        )));
    }
    if history.len() / d < model.p() {
        return Err(Error::PathTooShort { needed: model.p(), got: history.len() / d });
    }
    Ok(())
}

/// Generates `x_{s+1}, …, x_{s+ω}` from a chronological history ending at
/// `x_s` and returns the last one.
pub fn roll_forward<R: Rng + ?Sized>(
    model: &VarModel,
    history: &[f64],
    omega: usize,
    rng: &mut R,
    noise: NoiseDist,
) -> Vec<f64> {
    let (d, p) = (model.d(), model.p());
    let sd = model.noise_variance().sqrt();
    let mut buf = history[history.len() - p * d..].to_vec();
    for _ in 0..omega {
        let t = buf.len() / d;
        let mut next = vec![0.0; d];
        for (i, v) in next.iter_mut().enumerate() {
            *v = noise.sample(rng, sd);
            for (l, a) in model.coeffs().iter().enumerate() {
                let lagged = &buf[(t - 1 - l) * d..(t - l) * d];
                *v += (0..d).map(|j| a[(i, j)] * lagged[j]).sum::<f64>();
            }
        }
        buf.extend_from_slice(&next);
    }
    buf[buf.len() - d..].to_vec()
}

/// Observational counterpart of [`simulate_intervened`]: the same seeded
/// innovations without surgery.
pub fn simulate_forward(model: &VarModel, history: &[f64], omega: usize, seed: u64) -> Result<Vec<f64>> {
    check_history(model, history)?;
    let mut rng = rng_from_seed(seed);
    Ok(roll_forward(model, history, omega, &mut rng, NoiseDist::Gaussian))
}

/// Applies `spec` to a chronological history ending at `x_{t−ω}` and
/// regenerates `x_{t−ω+1}, …, x_t` with fresh seeded noise.
pub fn simulate_intervened(
    model: &VarModel,
    spec: &InterventionSpec,
    history: &[f64],
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    InterventionSampler::new(model, spec)?.sample(history, seed)
}
