//! VAR(p) models: stationarity, simulation and autocovariance.
//!
//! Windows of consecutive observations are ordered most-recent-first. For a
//! window `(x_s, x_{s-1}, …, x_{s-n+1})` the block `(i, j)` of the
//! autocovariance matrix is `Γ(j − i)` when `j ≥ i` and `Γ(i − j)^T`
//! otherwise, with `Γ(h) = E[x_t x_{t−h}^T]`.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::companion::{CompanionMatrix, Spectrum, DISTINCT_TOL};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Largest companion dimension for which the Lyapunov equation is solved by
/// a Kronecker linear system.
pub const KRONECKER_LIMIT: usize = 40;

/// Minimum number of lagged products required per autocovariance estimate.
pub const MIN_WINDOWS: usize = 10;

/// A VAR(p) model `x_t = A_1 x_{t−1} + … + A_p x_{t−p} + ε_t` with isotropic
/// noise `Σ_ε = σ² I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VarModelJson", into = "VarModelJson")]
pub struct VarModel {
    d: usize,
    p: usize,
    coeffs: Vec<DMatrix<f64>>,
    noise_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct VarModelJson {
    d: usize,
    p: usize,
    /// One row-major `d*d` array per lag.
    coeffs: Vec<Vec<f64>>,
    noise_variance: f64,
}

impl TryFrom<VarModelJson> for VarModel {
    type Error = Error;

    fn try_from(j: VarModelJson) -> Result<Self> {
        if j.coeffs.len() != j.p {
            return Err(Error::DimensionMismatch(format!(
                "p = {} but {} coefficient blocks given",
                j.p,
                j.coeffs.len()
            )));
        }
        let blocks = j
            .coeffs
            .iter()
            .enumerate()
            .map(|(l, v)| {
                if v.len() != j.d * j.d {
                    Err(Error::DimensionMismatch(format!(
                        "block {} has {} entries, expected {}",
                        l + 1,
                        v.len(),
                        j.d * j.d
                    )))
                } else {
                    Ok(DMatrix::from_row_slice(j.d, j.d, v))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        VarModel::new(blocks, j.noise_variance)
    }
}

impl From<VarModel> for VarModelJson {
    fn from(m: VarModel) -> Self {
        let coeffs = m
            .coeffs
            .iter()
            .map(|b| b.transpose().iter().copied().collect())
            .collect();
        Self { d: m.d, p: m.p, coeffs, noise_variance: m.noise_variance }
    }
}

impl VarModel {
    pub fn new(coeffs: Vec<DMatrix<f64>>, noise_variance: f64) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::InvalidArgument("model needs p >= 1".into()))?;
        let d = first.nrows();
        if d == 0 {
            return Err(Error::InvalidArgument("model needs d >= 1".into()));
        }
        for (l, b) in coeffs.iter().enumerate() {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "block {} is {}x{}, expected {d}x{d}",
                    l + 1,
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("block {} has non-finite entries", l + 1)));
            }
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self { d, p: coeffs.len(), coeffs, noise_variance })
    }

    /// Scalar AR(p) model with coefficients `a_1..a_p`.
    pub fn scalar(coeffs: &[f64], noise_variance: f64) -> Result<Self> {
        Self::new(coeffs.iter().map(|&a| DMatrix::from_element(1, 1, a)).collect(), noise_variance)
    }

    pub fn white_noise(d: usize, p: usize, noise_variance: f64) -> Result<Self> {
        Self::new(vec![DMatrix::zeros(d, d); p.max(1)], noise_variance)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn with_noise_variance(mut self, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        self.noise_variance = noise_variance;
        Ok(self)
    }

    /// `a_1..a_p` of a scalar model.
    pub fn scalar_coeffs(&self) -> Option<Vec<f64>> {
        (self.d == 1).then(|| self.coeffs.iter().map(|b| b[(0, 0)]).collect())
    }

    /// The same model written with `order >= p` lags, the extra ones zero.
    pub fn padded(&self, order: usize) -> Result<Self> {
        if order < self.p {
            return Err(Error::InvalidArgument(format!(
                "padding order {order} is below model order {}",
                self.p
            )));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order, DMatrix::zeros(self.d, self.d));
        Self::new(coeffs, self.noise_variance)
    }

    pub fn companion(&self) -> CompanionMatrix {
        CompanionMatrix::from_model(self)
    }

    /// Coefficients as a `d × dp` matrix `[A_1 | … | A_p]`.
    pub fn top_row(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d * self.p);
        for (l, b) in self.coeffs.iter().enumerate() {
            m.view_mut((0, l * self.d), (self.d, self.d)).copy_from(b);
        }
        m
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }
}

/// Innovation distribution; both have mean zero and variance `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDist {
    #[default]
    Gaussian,
    Uniform,
}

impl NoiseDist {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R, std_dev: f64) -> f64 {
        match self {
            NoiseDist::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z * std_dev
            }
            NoiseDist::Uniform => {
                let h = std_dev * 3f64.sqrt();
                rng.random_range(-h..h)
            }
        }
    }
}

impl std::str::FromStr for NoiseDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseDist::Gaussian),
            "uniform" => Ok(NoiseDist::Uniform),
            _ => Err(Error::InvalidArgument(format!("unknown noise distribution {s:?}"))),
        }
    }
}

/// Stability test: true iff the companion spectral radius is `<= 1 − margin`
/// (strictly below 1 when `margin == 0`).
pub fn is_stationary(model: &VarModel, margin: f64) -> Result<(bool, Spectrum)> {
    let spectrum = model.companion().spectrum(DISTINCT_TOL)?;
    let ok = if margin > 0.0 {
        spectrum.max_modulus <= 1.0 - margin
    } else {
        spectrum.max_modulus < 1.0
    };
    Ok((ok, spectrum))
}

fn require_stationary(model: &VarModel) -> Result<Spectrum> {
    let (ok, spectrum) = is_stationary(model, 0.0)?;
    if ok {
        Ok(spectrum)
    } else {
        Err(Error::NonStationary { max_modulus: spectrum.max_modulus, limit: 1.0 })
    }
}

/// Step-down (Schur–Cohn) stability test for a scalar AR polynomial. Cheap
/// prefilter used by rejection sampling; the spectrum stays authoritative.
pub fn scalar_step_down_stable(coeffs: &[f64]) -> bool {
    let mut a = coeffs.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return false;
        }
        let m = a.len();
        if m == 1 {
            break;
        }
        let den = 1.0 - k * k;
        a = (0..m - 1).map(|j| (a[j] + k * a[m - 2 - j]) / den).collect();
    }
    true
}

/// Burn-in long enough for a zero start to decay below `1e−9` relative.
pub fn default_burn_in(max_modulus: f64) -> usize {
    if max_modulus <= 0.0 {
        return 1000;
    }
    let steps = (1e-9f64.ln() / max_modulus.ln()).ceil();
    if steps.is_finite() {
        (steps as usize).max(1000)
    } else {
        1000
    }
}

/// An observed trajectory, stored row-major (`n × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    d: usize,
    values: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
}

impl SamplePath {
    pub fn new(d: usize, values: Vec<f64>, seed: u64, burn_in: usize) -> Result<Self> {
        if d == 0 || values.is_empty() || !values.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form a non-empty path of dimension {d}",
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("path contains non-finite values".into()));
        }
        Ok(Self { d, values, seed, burn_in })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Single coordinate as a scalar path.
    pub fn component(&self, i: usize) -> Result<SamplePath> {
        if i >= self.d {
            return Err(Error::IndexOutOfRange { index: i, limit: self.d });
        }
        let v = self.values.iter().skip(i).step_by(self.d).copied().collect();
        SamplePath::new(1, v, self.seed, self.burn_in)
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<SamplePath> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} out of path of length {}",
                self.len()
            )));
        }
        SamplePath::new(self.d, self.values[start * self.d..end * self.d].to_vec(), self.seed, self.burn_in)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.d).map(|i| format!("x_{i}")));
        wr.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            row.extend(self.get(t).iter().map(|x| x.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let d = rd.headers()?.len().saturating_sub(1);
        if d == 0 {
            return Err(Error::InvalidArgument("path CSV needs columns t,x_1,...".into()));
        }
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad number {field:?} in path CSV")))?;
                values.push(v);
            }
        }
        SamplePath::new(d, values, 0, 0)
    }
}

/// Simulates `n` observations after `burn_in` discarded steps from the zero
/// state, with Gaussian noise. Refuses non-stationary models.
pub fn simulate(model: &VarModel, n: usize, seed: u64, burn_in: Option<usize>) -> Result<SamplePath> {
    simulate_with(model, n, seed, burn_in, NoiseDist::Gaussian)
}

pub fn simulate_with(
    model: &VarModel,
    n: usize,
    seed: u64,
    burn_in: Option<usize>,
    noise: NoiseDist,
) -> Result<SamplePath> {
    let spectrum = require_stationary(model)?;
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(spectrum.max_modulus));
    simulate_unchecked(model, n, seed, burn_in, noise)
}

/// Simulation without the stability check; values may diverge.
pub fn simulate_unchecked(
    model: &VarModel,
    n: usize,
    seed: u64,
    burn_in: usize,
    noise: NoiseDist,
) -> Result<SamplePath> {
    if n == 0 {
        return Err(Error::InvalidArgument("path length must be positive".into()));
    }
    let (d, p) = (model.d, model.p);
    let total = burn_in + n;
    // `p` zero rows of history precede the first generated observation.
    let mut buf = vec![0.0; (p + total) * d];
    let mut rng = rng_from_seed(seed);
    let sd = model.noise_variance.sqrt();
    for t in p..p + total {
        let (past, rest) = buf.split_at_mut(t * d);
        let cur = &mut rest[..d];
        for (i, c) in cur.iter_mut().enumerate() {
            *c = noise.sample(&mut rng, sd);
            for (l, a) in model.coeffs.iter().enumerate() {
                let lagged = &past[(t - 1 - l) * d..(t - l) * d];
                *c += (0..d).map(|j| a[(i, j)] * lagged[j]).sum::<f64>();
            }
        }
    }
    let values = buf.split_off((p + burn_in) * d);
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("simulated path diverged to non-finite values".into()));
    }
    SamplePath::new(d, values, seed, burn_in)
}

/// Block-Toeplitz autocovariance of `n` stacked observations.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovMatrix {
    n: usize,
    d: usize,
    lags: Vec<DMatrix<f64>>,
    dense: DMatrix<f64>,
}

impl AutocovMatrix {
    /// Assembles the matrix from `Γ(0), …, Γ(n−1)`.
    pub fn from_lags(lags: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = lags.len();
        let d = lags.first().map(|g| g.nrows()).unwrap_or(0);
        if n == 0 || d == 0 || lags.iter().any(|g| g.nrows() != d || g.ncols() != d) {
            return Err(Error::DimensionMismatch("autocovariance lags must be non-empty d×d blocks".into()));
        }
        let mut dense = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                let block = if j >= i { lags[j - i].clone() } else { lags[i - j].transpose() };
                dense.view_mut((i * d, j * d), (d, d)).copy_from(&block);
            }
        }
        Ok(Self { n, d, lags, dense })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `Γ(h)` for `h < n`.
    pub fn lag(&self, h: usize) -> &DMatrix<f64> {
        &self.lags[h]
    }

    pub fn lags(&self) -> &[DMatrix<f64>] {
        &self.lags
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// Largest marginal variance, `γ_0` for scalar processes.
    pub fn gamma0(&self) -> f64 {
        self.lags[0].diagonal().max()
    }

    /// The leading `m` blocks.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.n {
            return Err(Error::InvalidArgument(format!("cannot truncate {} blocks to {m}", self.n)));
        }
        Self::from_lags(self.lags[..m].to_vec())
    }

    /// Unit-diagonal rescaling `D^{−1/2} Σ D^{−1/2}`.
    pub fn autocorrelation(&self) -> DMatrix<f64> {
        let s: Vec<f64> = self.dense.diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
        DMatrix::from_fn(self.dense.nrows(), self.dense.ncols(), |i, j| self.dense[(i, j)] * s[i] * s[j])
    }
}

/// Stationary covariance `Σ_Y` of the companion state, solving
/// `Σ_Y = A Σ_Y A^T + Σ_e` with `Σ_e = diag(σ² I_d, 0)`.
pub fn stationary_state_cov(model: &VarModel) -> Result<DMatrix<f64>> {
    require_stationary(model)?;
    let a = model.companion().dense().clone();
    let n = a.nrows();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..model.d {
        q[(i, i)] = model.noise_variance;
    }
    let sigma = if n <= KRONECKER_LIMIT { lyapunov_kronecker(&a, &q)? } else { lyapunov_doubling(&a, &q)? };
    Ok((&sigma + sigma.transpose()) * 0.5)
}

fn lyapunov_kronecker(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let lhs = DMatrix::identity(n * n, n * n) - a.kronecker(a);
    let rhs = DVector::from_column_slice(q.as_slice());
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LyapunovFailure("singular Kronecker system".into()))?;
    Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Doubling iteration `Σ ← Σ + A_k Σ A_k^T`, `A_k ← A_k²`, which sums the
/// series `Σ_j A^j Q (A^j)^T` in logarithmically many steps.
fn lyapunov_doubling(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut sigma = q.clone();
    let mut ak = a.clone();
    for _ in 0..200 {
        let inc = &ak * &sigma * ak.transpose();
        sigma += &inc;
        if inc.amax() <= 1e-12 * sigma.amax() {
            return Ok(sigma);
        }
        ak = &ak * &ak;
    }
    Err(Error::LyapunovFailure("doubling iteration did not converge".into()))
}

/// Exact autocovariance of `n` stacked observations of a stationary model.
pub fn exact_autocov(model: &VarModel, n: usize) -> Result<AutocovMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one block".into()));
    }
    let sigma = stationary_state_cov(model)?;
    let (d, p) = (model.d, model.p);
    let mut lags: Vec<DMatrix<f64>> = (0..p.min(n))
        .map(|h| sigma.view((0, h * d), (d, d)).into_owned())
        .collect();
    for h in p..n {
        let mut g = DMatrix::zeros(d, d);
        for (k, a) in model.coeffs.iter().enumerate() {
            g += a * &lags[h - k - 1];
        }
        lags.push(g);
    }
    AutocovMatrix::from_lags(lags)
}

/// `max |Σ − A Σ A^T − Σ_e|` for a candidate state covariance.
pub fn lyapunov_residual(model: &VarModel, sigma: &DMatrix<f64>) -> f64 {
    let a = model.companion().dense().clone();
    let mut r = sigma - &a * sigma * a.transpose();
    for i in 0..model.d {
        r[(i, i)] -= model.noise_variance;
    }
    r.amax()
}

/// Biased (`1/T`) sample autocovariance assembled block-Toeplitz. The path is
/// not re-centred: the processes are mean-zero by construction.
pub fn empirical_autocov(path: &SamplePath, n: usize) -> Result<AutocovMatrix> {
    let len = path.len();
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one block".into()));
    }
    if len < n + MIN_WINDOWS {
        return Err(Error::PathTooShort { needed: n + MIN_WINDOWS, got: len });
    }
    let d = path.d();
    let lags = (0..n)
        .map(|h| {
            let mut g = DMatrix::zeros(d, d);
            for t in h..len {
                let (x, y) = (path.get(t), path.get(t - h));
                for i in 0..d {
                    for j in 0..d {
                        g[(i, j)] += x[i] * y[j];
                    }
                }
            }
            g / len as f64
        })
        .collect();
    AutocovMatrix::from_lags(lags)
}

/// Draws i.i.d. uniform coefficients on `[lo, hi]` until the model is stable.
/// The returned model has unit noise variance.
pub fn rejection_sample_stable(
    p: usize,
    d: usize,
    lo: f64,
    hi: f64,
    seed: u64,
    max_tries: usize,
) -> Result<VarModel> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty coefficient range [{lo}, {hi}]")));
    }
    if p == 0 || d == 0 {
        return Err(Error::InvalidArgument("need p >= 1 and d >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut draw = vec![0.0; p * d * d];
    for _ in 0..max_tries {
        for v in draw.iter_mut() {
            *v = rng.random_range(lo..hi);
        }
        if d == 1 && !scalar_step_down_stable(&draw) {
            continue;
        }
        let blocks = draw.chunks(d * d).map(|c| DMatrix::from_row_slice(d, d, c)).collect();
        let model = VarModel::new(blocks, 1.0)?;
        if is_stationary(&model, 0.0)?.0 {
            return Ok(model);
        }
    }
    Err(Error::RejectionExhausted { tries: max_tries })
}

/// Exact sampler for stationary windows `(x_s, …, x_{s−n+1})` drawn from
/// `N(0, Σ^n)`.
#[derive(Debug, Clone)]
pub struct WindowSampler {
    factor: DMatrix<f64>,
}

impl WindowSampler {
    pub fn new(cov: &DMatrix<f64>) -> Self {
        let factor = match Cholesky::new(cov.clone()) {
            Some(c) => c.l(),
            None => {
                // Semidefinite fallback: symmetric square root with clamped eigenvalues.
                let eig = SymmetricEigen::new(cov.clone());
                let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
            }
        };
        Self { factor }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n).map(|j| self.factor[(i, j)] * z[j]).sum::<f64>();
        }
    }
}
