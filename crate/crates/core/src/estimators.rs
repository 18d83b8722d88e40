//! Least-squares estimators for VAR(p) coefficients.
//!
//! Regularised fits minimise, separately for each output component,
//!
//! ```text
//! (1 / 2T) ‖y − Xθ‖² + λ (μ ‖θ‖₁ + (1 − μ)/2 ‖θ‖²)
//! ```
//!
//! so ridge is `μ = 0`, lasso is `μ = 1` and the elastic net lies between.
//! There is no intercept: the processes are mean-zero.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{SamplePath, VarModel};
use crate::seed::rng_from_seed;

/// Convergence thresholds for coordinate descent.
pub const CD_MAX_SWEEPS: usize = 100_000;
pub const CD_COEF_TOL: f64 = 1e-10;
pub const CD_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ols,
    Ridge,
    Lasso,
    #[serde(alias = "elasticnet", alias = "elasticNet")]
    ElasticNet,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Ols, Estimator::Ridge, Estimator::Lasso, Estimator::ElasticNet];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::Ridge => "ridge",
            Estimator::Lasso => "lasso",
            Estimator::ElasticNet => "elastic_net",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ols" => Ok(Estimator::Ols),
            "ridge" => Ok(Estimator::Ridge),
            "lasso" => Ok(Estimator::Lasso),
            "elastic_net" | "elasticnet" => Ok(Estimator::ElasticNet),
            _ => Err(Error::InvalidArgument(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Regression lift of a path: row `r` of `x` is `(x_{t−1}, …, x_{t−p})` and
/// row `r` of `y` is `x_t`, with `t = p + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub p: usize,
    pub d: usize,
}

impl LaggedDesign {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    fn select(&self, rows: &[usize]) -> LaggedDesign {
        LaggedDesign { x: self.x.select_rows(rows), y: self.y.select_rows(rows), p: self.p, d: self.d }
    }
}

pub fn build_design(path: &SamplePath, p: usize) -> Result<LaggedDesign> {
    if p == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    let n = path.len();
    if n <= p {
        return Err(Error::PathTooShort { needed: p + 1, got: n });
    }
    let d = path.d();
    let rows = n - p;
    let x = DMatrix::from_fn(rows, d * p, |r, c| path.get(p + r - 1 - c / d)[c % d]);
    let y = DMatrix::from_fn(rows, d, |r, c| path.get(p + r)[c]);
    Ok(LaggedDesign { x, y, p, d })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: VarModel,
    pub estimator: Estimator,
    pub lambda: f64,
    pub mu_mix: f64,
    pub cv_score: Option<f64>,
    pub rank_deficient: bool,
    pub converged: bool,
    /// Worst normalised duality gap over output components (0 for closed forms).
    pub duality_gap: f64,
}

impl FitResult {
    pub fn to_json_value(&self) -> serde_json::Value {
        let model: serde_json::Value = serde_json::to_value(&self.model).expect("model serializes");
        serde_json::json!({
            "estimator": self.estimator,
            "coeffs": model["coeffs"],
            "noise_variance": self.model.noise_variance(),
            "lambda": self.lambda,
            "mu_mix": self.mu_mix,
            "cv_score": self.cv_score,
            "rank_flag": self.rank_deficient,
        })
    }
}

/// Column `i` of `theta` (length `dp`) holds the regression of component `i`.
fn to_model(design: &LaggedDesign, theta: &DMatrix<f64>) -> Result<VarModel> {
    let (d, p) = (design.d, design.p);
    let blocks = (0..p)
        .map(|l| DMatrix::from_fn(d, d, |i, j| theta[(l * d + j, i)]))
        .collect();
    let resid = &design.y - &design.x * theta;
    let rms = resid.norm_squared() / (resid.len() as f64);
    // Exact fits have zero residual; the model type needs a positive variance.
    VarModel::new(blocks, rms.max(f64::MIN_POSITIVE))
}

fn ols_theta(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * x.nrows().max(x.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let theta = svd.solve(y, tol).expect("SVD computed with both factors");
    (theta, rank < x.ncols())
}

/// Least squares via SVD; minimum-norm when rank-deficient.
pub fn fit_ols(design: &LaggedDesign) -> Result<FitResult> {
    let (theta, rank_deficient) = ols_theta(&design.x, &design.y);
    Ok(FitResult {
        model: to_model(design, &theta)?,
        estimator: Estimator::Ols,
        lambda: 0.0,
        mu_mix: 0.0,
        cv_score: None,
        rank_deficient,
        converged: true,
        duality_gap: 0.0,
    })
}

/// `(X^T X + T λ I) θ = X^T y`.
fn ridge_theta(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let t = x.nrows() as f64;
    let mut gram = x.transpose() * x;
    for k in 0..gram.nrows() {
        gram[(k, k)] += t * lambda;
    }
    let rhs = x.transpose() * y;
    match Cholesky::new(gram) {
        Some(c) => c.solve(&rhs),
        None => {
            // Augmented least squares `[X; √(Tλ) I] θ ≈ [y; 0]`.
            let n = x.ncols();
            let mut xa = DMatrix::zeros(x.nrows() + n, n);
            xa.rows_mut(0, x.nrows()).copy_from(x);
            for k in 0..n {
                xa[(x.nrows() + k, k)] = (t * lambda).sqrt();
            }
            let mut ya = DMatrix::zeros(x.nrows() + n, y.ncols());
            ya.rows_mut(0, x.nrows()).copy_from(y);
            ols_theta(&xa, &ya).0
        }
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Outcome of coordinate descent on one response column.
#[derive(Debug, Clone, PartialEq)]
pub struct CdOutcome {
    pub theta: DVector<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Duality gap of the `1/T`-normalised objective.
    pub gap: f64,
}

/// Normalised objective `(1/2T)‖y − Xθ‖² + l1 ‖θ‖₁ + (l2/2) ‖θ‖²`.
pub fn enet_objective(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, l1: f64, l2: f64) -> f64 {
    let t = x.nrows() as f64;
    let r = y - x * theta;
    r.norm_squared() / (2.0 * t) + l1 * theta.lp_norm(1) + 0.5 * l2 * theta.norm_squared()
}

/// Cyclic coordinate descent with soft-thresholding. `trace` receives the
/// objective after every sweep when given.
pub fn coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    l1: f64,
    l2: f64,
    max_sweeps: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> CdOutcome {
    let (t, n) = (x.nrows(), x.ncols());
    let tf = t as f64;
    // Unnormalised penalties, matching `½‖r‖² + L1 ‖θ‖₁ + ½ L2 ‖θ‖²`.
    let (big_l1, big_l2) = (l1 * tf, l2 * tf);
    let col_sq: Vec<f64> = (0..n).map(|j| x.column(j).norm_squared()).collect();
    let mut theta = DVector::zeros(n);
    let mut r = y.clone();
    let y_sq = y.norm_squared();
    let gap_tol = CD_GAP_TOL * (y_sq / (2.0 * tf)).max(f64::MIN_POSITIVE);
    let mut gap = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let mut max_change: f64 = 0.0;
        let mut max_coef: f64 = 0.0;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = theta[j];
            let xj = x.column(j);
            let rho = xj.dot(&r) + old * col_sq[j];
            let new = soft_threshold(rho, big_l1) / (col_sq[j] + big_l2);
            if new != old {
                r.axpy(old - new, &xj, 1.0);
                theta[j] = new;
            }
            max_change = max_change.max((new - old).abs());
            max_coef = max_coef.max(new.abs());
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(enet_objective(x, y, &theta, l1, l2));
        }
        gap = duality_gap(x, y, &theta, &r, big_l1, big_l2) / tf;
        if max_change <= CD_COEF_TOL * max_coef.max(1.0) || gap <= gap_tol {
            return CdOutcome { theta, sweeps: sweep, converged: true, gap };
        }
    }
    CdOutcome { theta, sweeps: max_sweeps, converged: false, gap }
}

/// Elastic-net duality gap of the unnormalised objective.
fn duality_gap(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, r: &DVector<f64>, l1: f64, l2: f64) -> f64 {
    let xta = x.transpose() * r - w * l2;
    let dual_norm = xta.amax();
    let r_sq = r.norm_squared();
    let (c, mut gap) = if dual_norm > l1 {
        let c = l1 / dual_norm;
        (c, 0.5 * (r_sq + r_sq * c * c))
    } else {
        (1.0, r_sq)
    };
    gap += l1 * w.lp_norm(1) - c * r.dot(y) + 0.5 * l2 * (1.0 + c * c) * w.norm_squared();
    gap.max(0.0)
}

/// Fits at a fixed penalty. `λ = 0` reduces every estimator to OLS.
pub fn fit_regularized(design: &LaggedDesign, estimator: Estimator, lambda: f64, mu_mix: f64) -> Result<FitResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&mu_mix) {
        return Err(Error::InvalidArgument(format!("mixing weight must lie in [0, 1], got {mu_mix}")));
    }
    let mu = match estimator {
        Estimator::Ols | Estimator::Ridge => 0.0,
        Estimator::Lasso => 1.0,
        Estimator::ElasticNet => mu_mix,
    };
    if estimator == Estimator::Ols || lambda == 0.0 {
        let mut fit = fit_ols(design)?;
        fit.estimator = estimator;
        fit.mu_mix = mu;
        return Ok(fit);
    }
    let (theta, converged, gap) = if mu == 0.0 {
        (ridge_theta(&design.x, &design.y, lambda), true, 0.0)
    } else {
        let mut theta = DMatrix::zeros(design.x.ncols(), design.d);
        let (mut ok, mut worst) = (true, 0.0f64);
        for i in 0..design.d {
            let col = design.y.column(i).into_owned();
            let out = coordinate_descent(&design.x, &col, lambda * mu, lambda * (1.0 - mu), CD_MAX_SWEEPS, None);
            theta.set_column(i, &out.theta);
            ok &= out.converged;
            worst = worst.max(out.gap);
        }
        (theta, ok, worst)
    };
    Ok(FitResult {
        model: to_model(design, &theta)?,
        estimator,
        lambda,
        mu_mix: mu,
        cv_score: None,
        rank_deficient: false,
        converged,
        duality_gap: gap,
    })
}

/// `n` log-spaced values in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub lambda_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub folds: usize,
    /// Shuffle rows before splitting (seeded); contiguous blocks otherwise.
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            lambda_grid: log_grid(1e-4, 1e1, 20),
            mu_grid: (1..=9).map(|k| k as f64 / 10.0).collect(),
            folds: 5,
            shuffle: false,
            seed: 0,
        }
    }
}

/// Row indices of each validation fold.
pub fn fold_indices(rows: usize, folds: usize, shuffle: bool, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows).collect();
    if shuffle {
        order.shuffle(&mut rng_from_seed(seed));
    }
    (0..folds)
        .map(|f| order[f * rows / folds..(f + 1) * rows / folds].to_vec())
        .collect()
}

/// Grid search over `(λ, μ)` with `k`-fold validation MSE, ties broken
/// toward larger `λ`, then a refit on all rows. OLS has no grid and is fitted
/// directly.
pub fn fit_cv(path: &SamplePath, p: usize, estimator: Estimator, cfg: &CvConfig) -> Result<FitResult> {
    let design = build_design(path, p)?;
    if estimator == Estimator::Ols {
        return fit_ols(&design);
    }
    if cfg.lambda_grid.is_empty() || (estimator == Estimator::ElasticNet && cfg.mu_grid.is_empty()) {
        return Err(Error::InvalidArgument("empty regularisation grid".into()));
    }
    if cfg.folds < 2 || design.rows() < cfg.folds {
        return Err(Error::InvalidArgument(format!(
            "{} design rows cannot be split into {} folds",
            design.rows(),
            cfg.folds
        )));
    }
    let mut lambdas = cfg.lambda_grid.clone();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let mus: Vec<f64> = if estimator == Estimator::ElasticNet { cfg.mu_grid.clone() } else { vec![0.0] };
    let grid: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| mus.iter().map(move |&m| (l, m))).collect();

    let folds = fold_indices(design.rows(), cfg.folds, cfg.shuffle, cfg.seed);
    let splits: Vec<(LaggedDesign, LaggedDesign)> = folds
        .iter()
        .map(|val| {
            let train: Vec<usize> = (0..design.rows()).filter(|r| !val.contains(r)).collect();
            (design.select(&train), design.select(val))
        })
        .collect();
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&(l, m)| -> Result<f64> {
            let mut total = 0.0;
            for (train, val) in &splits {
                let fit = fit_regularized(train, estimator, l, m)?;
                total += validation_mse(&fit.model, val);
            }
            Ok(total / splits.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    // Grid is ordered by decreasing λ, so the first minimum wins ties.
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = k;
        }
    }
    let (l, m) = grid[best];
    let mut fit = fit_regularized(&design, estimator, l, m)?;
    fit.cv_score = Some(scores[best]);
    Ok(fit)
}

/// Mean squared one-step error of `model` on a design (averaged over outputs).
pub fn validation_mse(model: &VarModel, design: &LaggedDesign) -> f64 {
    let top = model.top_row();
    let pred = &design.x * top.transpose();
    (&design.y - pred).norm_squared() / design.y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{simulate, simulate_unchecked, NoiseDist};
    use crate::seed::derive_seed;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::Rng;

    fn ar(c: &[f64]) -> VarModel {
        VarModel::scalar(c, 1.0).unwrap()
    }

    /// Noise-free AR path started from a non-zero state.
    fn exact_path(coeffs: &[f64], n: usize) -> SamplePath {
        let mut v: Vec<f64> = (0..coeffs.len()).map(|k| 1.0 + k as f64 * 0.5).collect();
        while v.len() < n {
            let t = v.len();
            v.push(coeffs.iter().enumerate().map(|(k, a)| a * v[t - 1 - k]).sum());
        }
        SamplePath::new(1, v, 0, 0).unwrap()
    }

    #[test]
    fn design_alignment() {
        let path = SamplePath::new(2, (0..10).map(|v| v as f64).collect(), 0, 0).unwrap();
        let d = build_design(&path, 2).unwrap();
        assert_eq!(d.rows(), 3);
        assert_eq!(d.x.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 0.0, 1.0]);
        assert_eq!(d.y.row(0).iter().copied().collect::<Vec<_>>(), vec![4.0, 5.0]);
        assert!(build_design(&path, 5).is_err());
    }

    #[test]
    fn ols_recovers_exact_coefficients() {
        let d = build_design(&exact_path(&[0.5, 0.3], 50), 2).unwrap();
        let fit = fit_ols(&d).unwrap();
        let c = fit.model.scalar_coeffs().unwrap();
        assert!((c[0] - 0.5).abs() < 1e-10 && (c[1] - 0.3).abs() < 1e-10);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn ols_on_white_noise() {
        let path = simulate(&ar(&[0.0]), 100_000, 4, None).unwrap();
        let fit = fit_ols(&build_design(&path, 3).unwrap()).unwrap();
        let se = 1.0 / (100_000f64).sqrt();
        assert!(fit.model.scalar_coeffs().unwrap().iter().all(|a| a.abs() < 3.0 * se + 1e-3));
    }

    #[test]
    fn ols_residuals_are_orthogonal() {
        let m = VarModel::new(vec![DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4])], 1.0).unwrap();
        let path = simulate(&m, 500, 1, None).unwrap();
        let d = build_design(&path, 2).unwrap();
        let fit = fit_ols(&d).unwrap();
        let resid = &d.y - &d.x * fit.model.top_row().transpose();
        let xtr = d.x.transpose() * resid;
        assert!(xtr.amax() <= 1e-8 * d.x.norm() * d.y.norm());
    }

    #[test]
    fn ols_finite_sample_bias_toward_zero() {
        let m = ar(&[0.9]);
        let mean: f64 = (0..1000)
            .map(|k| {
                let path = simulate(&m, 100, derive_seed(5, &[k]), None).unwrap();
                fit_ols(&build_design(&path, 1).unwrap()).unwrap().model.scalar_coeffs().unwrap()[0]
            })
            .sum::<f64>()
            / 1000.0;
        assert!(mean < 0.9, "{mean}");
    }

    #[test]
    fn underdetermined_ols_is_min_norm() {
        let path = SamplePath::new(1, vec![1.0, 2.0, 3.0, 4.0, 5.0], 0, 0).unwrap();
        let d = build_design(&path, 3).unwrap();
        let fit = fit_ols(&d).unwrap();
        assert!(fit.rank_deficient);
        let theta = DVector::from_vec(fit.model.scalar_coeffs().unwrap());
        let pinv = d.x.clone().pseudo_inverse(1e-12).unwrap() * d.y.column(0);
        assert!((theta - pinv).amax() < 1e-10);
    }

    #[test]
    fn lambda_zero_is_ols() {
        let path = simulate(&ar(&[0.5, 0.3]), 300, 2, None).unwrap();
        let d = build_design(&path, 3).unwrap();
        let ols = fit_ols(&d).unwrap().model.top_row();
        for e in Estimator::ALL {
            let fit = fit_regularized(&d, e, 0.0, 0.5).unwrap();
            assert!((fit.model.top_row() - &ols).amax() < 1e-8);
            assert_eq!(fit.estimator, e);
        }
        assert!(fit_regularized(&d, Estimator::Lasso, -1.0, 0.5).is_err());
        assert!(fit_regularized(&d, Estimator::ElasticNet, 1.0, 1.5).is_err());
    }

    #[test]
    fn ridge_shrinks_to_zero() {
        let path = simulate(&ar(&[0.5, 0.3]), 300, 2, None).unwrap();
        let d = build_design(&path, 2).unwrap();
        let fit = fit_regularized(&d, Estimator::Ridge, 1e8, 0.0).unwrap();
        assert!(fit.model.top_row().amax() < 1e-6);
        let small = fit_regularized(&d, Estimator::Ridge, 1e-3, 0.0).unwrap().model.top_row();
        let smaller = fit_regularized(&d, Estimator::Ridge, 1e-3 + 1e-9, 0.0).unwrap().model.top_row();
        assert!((small - smaller).amax() < 1e-8);
    }

    #[test]
    fn lasso_one_dimensional_brute_force() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
        let y = DVector::from_column_slice(&[0.7, -1.1, 0.4, 2.2]);
        for lambda in [0.01, 0.3, 1.0, 5.0] {
            let out = coordinate_descent(&x, &y, lambda, 0.0, 1000, None);
            let obj = |t: f64| enet_objective(&x, &y, &DVector::from_element(1, t), lambda, 0.0);
            let mut best = (0.0, obj(0.0));
            let mut t = -2.0;
            while t <= 2.0 {
                if obj(t) < best.1 {
                    best = (t, obj(t));
                }
                t += 1e-6;
            }
            assert!((out.theta[0] - best.0).abs() < 2e-6, "{} vs {}", out.theta[0], best.0);
            // Closed form: soft-threshold of the OLS solution scaled by the column norm.
            let tn = x.nrows() as f64;
            let cs = x.column(0).norm_squared();
            let ols = x.column(0).dot(&y) / cs;
            assert!((out.theta[0] - soft_threshold(ols, lambda * tn / cs)).abs() < 1e-10);
        }
    }

    #[test]
    fn cd_objective_decreases() {
        let path = simulate(&ar(&[0.6, -0.2, 0.1]), 200, 7, None).unwrap();
        let d = build_design(&path, 5).unwrap();
        let y = d.y.column(0).into_owned();
        for (l1, l2) in [(0.05, 0.0), (0.02, 0.03)] {
            let mut trace = Vec::new();
            let out = coordinate_descent(&d.x, &y, l1, l2, CD_MAX_SWEEPS, Some(&mut trace));
            assert!(out.converged);
            assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        }
    }

    #[test]
    fn lasso_path_l1_norm_is_monotone() {
        let path = simulate(&ar(&[0.6, -0.2, 0.1]), 200, 9, None).unwrap();
        let d = build_design(&path, 5).unwrap();
        let mut prev = -1.0;
        for lambda in [1.0, 0.3, 0.1, 0.03, 0.01, 0.003] {
            let fit = fit_regularized(&d, Estimator::Lasso, lambda, 1.0).unwrap();
            let l1 = fit.model.top_row().iter().map(|v| v.abs()).sum::<f64>();
            assert!(l1 >= prev - 1e-9);
            prev = l1;
        }
    }

    #[test]
    fn cv_single_point_grid_equals_direct_fit() {
        let path = simulate(&ar(&[0.5, 0.3]), 200, 3, None).unwrap();
        let cfg = CvConfig { lambda_grid: vec![0.05], mu_grid: vec![0.4], ..Default::default() };
        for e in [Estimator::Ridge, Estimator::Lasso, Estimator::ElasticNet] {
            let cv = fit_cv(&path, 2, e, &cfg).unwrap();
            let direct = fit_regularized(&build_design(&path, 2).unwrap(), e, 0.05, 0.4).unwrap();
            assert_eq!(cv.model, direct.model);
            assert!(cv.cv_score.is_some());
        }
        let empty = CvConfig { lambda_grid: vec![], ..Default::default() };
        assert!(fit_cv(&path, 2, Estimator::Ridge, &empty).is_err());
    }

    #[test]
    fn cv_prefers_shrinkage_on_noise() {
        let cfg = CvConfig::default();
        let top = cfg.lambda_grid.iter().copied().fold(0.0, f64::max);
        let hits = (0..100)
            .filter(|&k| {
                let path = simulate(&ar(&[0.0]), 100, derive_seed(21, &[k]), None).unwrap();
                fit_cv(&path, 3, Estimator::Ridge, &cfg).unwrap().lambda >= top / 10.0
            })
            .count();
        assert!(hits >= 80, "{hits}");
    }

    #[test]
    fn cv_ridge_matches_ols_on_strong_signal() {
        let m = ar(&[0.95]);
        let mut ratios = Vec::new();
        for k in 0..20 {
            let path = simulate(&m, 1000, derive_seed(8, &[k]), None).unwrap();
            let test = simulate(&m, 5000, derive_seed(9, &[k]), None).unwrap();
            let td = build_design(&test, 1).unwrap();
            let ridge = fit_cv(&path, 1, Estimator::Ridge, &CvConfig::default()).unwrap();
            let ols = fit_ols(&build_design(&path, 1).unwrap()).unwrap();
            ratios.push(validation_mse(&ridge.model, &td) / validation_mse(&ols.model, &td));
        }
        assert!(ratios.iter().all(|r| *r < 1.05), "{ratios:?}");
    }

    #[test]
    fn ols_error_shrinks_with_sample_size() {
        let m = ar(&[0.5, -0.3, 0.2]);
        let wins = (0..200)
            .filter(|&k| {
                let err = |n| {
                    let path = simulate(&m, n, derive_seed(13, &[k, n as u64]), None).unwrap();
                    let c = fit_ols(&build_design(&path, 3).unwrap()).unwrap().model.scalar_coeffs().unwrap();
                    c.iter().zip([0.5, -0.3, 0.2]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                };
                err(10_000) < err(100)
            })
            .count();
        assert!(wins >= 190, "{wins}");
    }

    #[test]
    fn folds_partition_rows() {
        let f = fold_indices(11, 5, false, 0);
        assert_eq!(f.concat(), (0..11).collect::<Vec<_>>());
        assert!(f.iter().all(|v| v.windows(2).all(|w| w[1] == w[0] + 1)));
        let s = fold_indices(11, 5, true, 3);
        let mut all = s.concat();
        all.sort();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn fit_json_shape() {
        let d = build_design(&exact_path(&[0.5], 20), 1).unwrap();
        let v = fit_ols(&d).unwrap().to_json_value();
        for key in ["estimator", "coeffs", "noise_variance", "lambda", "mu_mix", "cv_score", "rank_flag"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["estimator"], "ols");
    }

    #[test]
    fn uniform_noise_paths_fit() {
        let path = simulate_unchecked(&ar(&[0.5]), 2000, 1, 100, NoiseDist::Uniform).unwrap();
        let c = fit_ols(&build_design(&path, 1).unwrap()).unwrap().model.scalar_coeffs().unwrap();
        assert!((c[0] - 0.5).abs() < 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ridge_is_continuous_in_lambda(seed in any::<u64>(), lambda in 1e-4f64..10.0) {
            let mut rng = rng_from_seed(seed);
            let v: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = build_design(&SamplePath::new(1, v, 0, 0).unwrap(), 3).unwrap();
            let a = fit_regularized(&d, Estimator::Ridge, lambda, 0.0).unwrap().model.top_row();
            let b = fit_regularized(&d, Estimator::Ridge, lambda * (1.0 + 1e-7), 0.0).unwrap().model.top_row();
            prop_assert!((a - b).amax() < 1e-5);
        }
    }
}
