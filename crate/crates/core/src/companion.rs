//! Multi-companion matrices, their powers and spectra, and the Schur
//! polynomial representation of power entries.
//!
//! For a scalar AR(p) companion matrix with distinct eigenvalues `λ`, the
//! first-row entries of `A^ω` satisfy `|A^ω_{1k}| = s_μ(λ)` where
//! `μ = (ω, 1, …, 1, 0, …)` carries `k - 1` ones. [`CompanionMatrix::power`]
//! is the ground truth; the Schur route is a cross-checked secondary
//! representation and refuses nearly repeated spectra.
//!
//! Note: a frequently quoted shortcut for AR(2),
//! `A^ω_{12} = Σ_{i=1}^{ω-1} λ1^{ω-i} λ2^i`, is wrong already at `ω = 1`
//! (where `A_{12} = a_2`). The hook-partition form used here agrees with
//! direct powers; see the `ar2_inline_shortcut_disagrees` test.

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};
use crate::linalg::{binomial, complex_det, C64};
use crate::process::VarModel;

/// Minimum pairwise eigenvalue gap below which the Schur route is refused.
pub const DISTINCT_TOL: f64 = 1e-7;

/// The `(dp)×(dp)` companion lift of a VAR(p) model.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix {
    d: usize,
    p: usize,
    blocks: Vec<DMatrix<f64>>,
    dense: DMatrix<f64>,
}

impl CompanionMatrix {
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("companion needs at least one block".into()))?;
        let d = first.nrows();
        if d == 0 {
            return Err(Error::InvalidArgument("blocks must be non-empty".into()));
        }
        for (l, b) in blocks.iter().enumerate() {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "block {} is {}x{}, expected {d}x{d}",
                    l + 1,
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        let p = blocks.len();
        let n = d * p;
        let mut dense = DMatrix::zeros(n, n);
        for (l, b) in blocks.iter().enumerate() {
            dense.view_mut((0, l * d), (d, d)).copy_from(b);
        }
        for i in d..n {
            dense[(i, i - d)] = 1.0;
        }
        Ok(Self { d, p, blocks, dense })
    }

    pub fn from_model(model: &VarModel) -> Self {
        Self::from_blocks(model.coeffs().to_vec()).expect("VarModel blocks are validated")
    }

    /// Companion of `model` lifted to `order >= model.p()`, padding with zero
    /// coefficient blocks.
    pub fn padded(model: &VarModel, order: usize) -> Result<Self> {
        if order < model.p() {
            return Err(Error::InvalidArgument(format!(
                "padding order {order} is below model order {}",
                model.p()
            )));
        }
        let mut blocks = model.coeffs().to_vec();
        blocks.resize(order, DMatrix::zeros(model.d(), model.d()));
        Self::from_blocks(blocks)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.d * self.p
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// `A^ω` by repeated squaring.
    pub fn power(&self, omega: u32) -> DMatrix<f64> {
        let n = self.dim();
        let mut result = DMatrix::identity(n, n);
        let mut base = self.dense.clone();
        let mut e = omega;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    pub fn spectrum(&self, distinct_tol: f64) -> Result<Spectrum> {
        // Trailing zero blocks only contribute zero eigenvalues; deflating
        // them keeps the QR iteration away from large nilpotent parts.
        let effective = self
            .blocks
            .iter()
            .rposition(|b| b.iter().any(|&x| x != 0.0))
            .map_or(0, |l| l + 1);
        let mut eigenvalues: Vec<C64> = vec![C64::new(0.0, 0.0); self.d * (self.p - effective)];
        if effective > 0 {
            let reduced = CompanionMatrix::from_blocks(self.blocks[..effective].to_vec())?;
            let n = reduced.dim();
            let schur = Schur::try_new(reduced.dense, f64::EPSILON, 10_000 * n)
                .ok_or(Error::EigenFailure)?;
            eigenvalues.extend(schur.complex_eigenvalues().iter().copied());
        }
        if eigenvalues.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::EigenFailure);
        }
        eigenvalues.sort_by(|a, b| {
            b.norm()
                .total_cmp(&a.norm())
                .then(b.re.total_cmp(&a.re))
                .then(b.im.total_cmp(&a.im))
        });
        let max_modulus = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let min_gap = min_pairwise_gap(&eigenvalues);
        let char_poly_residual = eigenvalues
            .iter()
            .map(|&z| self.char_poly_residual(z))
            .fold(0.0, f64::max);
        Ok(Spectrum {
            eigenvalues,
            max_modulus,
            distinct: min_gap > distinct_tol,
            min_gap,
            char_poly_residual,
        })
    }

    /// `|det(I λ^p − A_1 λ^{p−1} − … − A_p)|` relative to Hadamard's bound
    /// built from the term magnitudes, so the value lies in `[0, 1]`.
    fn char_poly_residual(&self, lambda: C64) -> f64 {
        let d = self.d;
        let mut m = DMatrix::<C64>::zeros(d, d);
        let mut pow = C64::new(1.0, 0.0);
        for k in (1..=self.p).rev() {
            let b = &self.blocks[k - 1];
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] -= pow * b[(i, j)];
                }
            }
            pow *= lambda;
        }
        for i in 0..d {
            m[(i, i)] += pow;
        }
        // Hadamard bound on the magnitudes of the individual terms.
        let r = lambda.norm();
        let hadamard: f64 = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut t = if i == j { r.powi(self.p as i32) } else { 0.0 };
                        for (k, b) in self.blocks.iter().enumerate() {
                            t += b[(i, j)].abs() * r.powi((self.p - k - 1) as i32);
                        }
                        t * t
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .product();
        if hadamard == 0.0 {
            return 0.0;
        }
        complex_det(m).norm() / hadamard
    }
}

fn min_pairwise_gap(values: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in 0..i {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    gap
}

/// Eigenvalues of a companion matrix plus derived stability data.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Sorted by decreasing modulus.
    pub eigenvalues: Vec<C64>,
    /// The stability parameter δ.
    pub max_modulus: f64,
    pub distinct: bool,
    pub min_gap: f64,
    /// Worst normalised characteristic-polynomial residual over the eigenvalues.
    pub char_poly_residual: f64,
}

/// A weakly decreasing sequence of non-negative integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition(Vec<usize>);

impl Partition {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(format!(
                "partition {parts:?} is not weakly decreasing"
            )));
        }
        Ok(Self(parts))
    }

    /// `(ω, 1, …, 1)` with `k − 1` ones: the partition whose Schur polynomial
    /// gives `|A^ω_{1k}|`.
    pub fn hook(omega: usize, k: usize) -> Result<Self> {
        if omega == 0 || k == 0 {
            return Err(Error::InvalidArgument("hook partition needs ω ≥ 1 and k ≥ 1".into()));
        }
        let mut parts = vec![omega];
        parts.extend(std::iter::repeat_n(1, k - 1));
        Self::new(parts)
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }
}

/// `∏_{i<j} (λ_i − λ_j)`.
pub fn vandermonde_det_product(lambda: &[C64]) -> C64 {
    let mut acc = C64::new(1.0, 0.0);
    for i in 0..lambda.len() {
        for j in i + 1..lambda.len() {
            acc *= lambda[i] - lambda[j];
        }
    }
    acc
}

/// The (generalised) Vandermonde matrix with rows `λ_j^{n−1−r+μ_r}`.
pub fn generalized_vandermonde(parts: &[usize], lambda: &[C64]) -> DMatrix<C64> {
    let n = lambda.len();
    DMatrix::from_fn(n, n, |r, c| {
        let e = n - 1 - r + parts.get(r).copied().unwrap_or(0);
        lambda[c].powu(e as u32)
    })
}

/// Schur polynomial `s_μ(λ)` via the bialternant `det V_{μ,λ} / det V_λ`.
pub fn schur_polynomial(partition: &Partition, lambda: &[C64]) -> Result<C64> {
    let n = lambda.len();
    if partition.parts().iter().filter(|&&x| x > 0).count() > n {
        return Err(Error::InvalidArgument(format!(
            "partition {:?} has more than {n} non-zero parts",
            partition.parts()
        )));
    }
    if n == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let gap = min_pairwise_gap(lambda);
    if gap <= DISTINCT_TOL {
        return Err(Error::DegenerateSpectrum(format!(
            "minimum eigenvalue gap {gap:.3e} is below {DISTINCT_TOL:e}"
        )));
    }
    let den = complex_det(generalized_vandermonde(&[], lambda));
    if den.norm() < f64::MIN_POSITIVE.sqrt() {
        return Err(Error::DegenerateSpectrum(format!(
            "Vandermonde determinant {:.3e} is numerically zero",
            den.norm()
        )));
    }
    let num = complex_det(generalized_vandermonde(partition.parts(), lambda));
    Ok(num / den)
}

/// `e_k(λ)`: the sum of all products of `k` distinct variables.
pub fn elementary_symmetric(k: usize, lambda: &[C64]) -> C64 {
    if k > lambda.len() {
        return C64::new(0.0, 0.0);
    }
    let mut e = vec![C64::new(0.0, 0.0); k + 1];
    e[0] = C64::new(1.0, 0.0);
    for (n, &x) in lambda.iter().enumerate() {
        for j in (1..=k.min(n + 1)).rev() {
            let prev = e[j - 1];
            e[j] += prev * x;
        }
    }
    e[k]
}

fn accept_real(z: C64) -> Result<f64> {
    if z.im.abs() < 1e-8 * (1.0 + z.re.abs()) {
        Ok(z.re)
    } else {
        Err(Error::DegenerateSpectrum(format!(
            "Schur value {z} has a non-negligible imaginary part"
        )))
    }
}

/// Real Schur values `s_{(ω,1^{k−1})}(λ)` for `k = 1..=p`. Their magnitudes
/// are `|A^ω_{1k}|`; the sign relation is `A^ω_{1k} = (−1)^{k−1} s`.
pub fn schur_power_row(spectrum: &Spectrum, omega: usize) -> Result<Vec<f64>> {
    if !spectrum.distinct {
        return Err(Error::DegenerateSpectrum(format!(
            "eigenvalues are not distinct (gap {:.3e})",
            spectrum.min_gap
        )));
    }
    let p = spectrum.eigenvalues.len();
    (1..=p)
        .map(|k| accept_real(schur_polynomial(&Partition::hook(omega, k)?, &spectrum.eigenvalues)?))
        .collect()
}

/// `|A^ω_{1,col+1}|` of a scalar companion matrix through the Schur route.
/// `col` is a zero-based column index.
pub fn power_entry_via_schur(c: &CompanionMatrix, omega: usize, col: usize) -> Result<f64> {
    if c.d() != 1 {
        return Err(Error::InvalidArgument("the Schur route needs a scalar (d = 1) model".into()));
    }
    if col >= c.order() {
        return Err(Error::IndexOutOfRange { index: col, limit: c.order() });
    }
    let spectrum = c.spectrum(DISTINCT_TOL)?;
    if !spectrum.distinct {
        return Err(Error::DegenerateSpectrum(format!(
            "eigenvalues are not distinct (gap {:.3e})",
            spectrum.min_gap
        )));
    }
    let s = schur_polynomial(&Partition::hook(omega, col + 1)?, &spectrum.eigenvalues)?;
    accept_real(s).map(f64::abs)
}

/// `C(p, k) δ^k`, the bound on `|a_k|` for a spectrum inside the δ-disc.
pub fn coefficient_bound(p: usize, k: usize, delta: f64) -> f64 {
    binomial(p as u64, k as u64) * delta.powi(k as i32)
}
