//! q-calculus on geometric lattices.
//!
//! Every function lives on a [`QGrid`] `{x0, x0·q, x0·q², …, x0·q^N}` and is
//! sampled once. Evaluating at `qx` is an index shift, so the q-derivative is
//! exact in this representation and Jackson sums are plain finite sums.
//!
//! The bottom point `x0·q^N` stands in for the origin. Cumulative integrals
//! ("from 0 to x") and the products built from them run over the indices
//! `[i, N)`, which makes every value at index `N` the value "at 0".

use std::fmt;
use std::ops::{Index, Range};
use std::sync::Arc;

use crate::error::{Error, Result};

pub const DEFAULT_DEPTH: usize = 256;
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Smallest lattice step `(1-q)|x|` at which a difference quotient is still
/// resolved: rounding in the sampled values is amplified by `ε / step`.
pub const RESOLVED_STEP: f64 = 1e-6;

/// Smallest step at which a second difference quotient is resolved; rounding
/// is amplified by `ε / step²` there.
pub const RESOLVED_STEP_SECOND: f64 = 1e-3;

/// A truncated geometric lattice `base·qⁱ`, `i = 0..=depth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGrid {
    base: f64,
    q: f64,
    depth: usize,
    tail_tol: f64,
}

impl QGrid {
    pub fn new(base: f64, q: f64, depth: usize) -> Result<Self> {
        if !q.is_finite() || q <= 0.0 || q >= 1.0 {
            return Err(Error::InvalidGrid(format!(
                "q must satisfy 0 < q < 1, got {q}"
            )));
        }
        if !base.is_finite() || base == 0.0 {
            return Err(Error::InvalidGrid(format!(
                "base point must be finite and nonzero, got {base}"
            )));
        }
        if depth == 0 {
            return Err(Error::InvalidGrid("depth must be positive".into()));
        }
        Ok(Self {
            base,
            q,
            depth,
            tail_tol: DEFAULT_TAIL_TOLERANCE,
        })
    }

    /// Grid with the smallest depth whose bottom point satisfies `|x_N| ≤ floor`.
    pub fn reaching(base: f64, q: f64, floor: f64) -> Result<Self> {
        // validate q and base before using them in the logarithm
        Self::new(base, q, 1)?;
        if !(floor > 0.0) || floor >= base.abs() {
            return Err(Error::InvalidGrid(format!(
                "floor must lie in (0, |base|), got {floor}"
            )));
        }
        let depth = ((floor / base.abs()).ln() / q.ln()).ceil() as usize;
        Self::new(base, q, depth.max(1))
    }

    pub fn with_tail_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "tail tolerance must be positive, got {tol}"
            )));
        }
        self.tail_tol = tol;
        Ok(self)
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tol
    }

    /// Number of lattice points, `depth + 1`.
    pub fn len(&self) -> usize {
        self.depth + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        self.base * self.q.powi(i as i32)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// The Jackson weight `(1-q)·x_i`.
    pub fn step(&self, i: usize) -> f64 {
        (1.0 - self.q) * self.point(i)
    }

    /// Same lattice cut at a smaller depth.
    pub fn truncate(&self, depth: usize) -> Result<Self> {
        if depth > self.depth {
            return Err(Error::OutOfRange {
                index: depth,
                depth: self.depth,
            });
        }
        let mut g = Self::new(self.base, self.q, depth)?;
        g.tail_tol = self.tail_tol;
        Ok(g)
    }

    /// Indices with a successor whose step is at least [`RESOLVED_STEP`].
    /// Residual checks that difference sampled values are meaningful there.
    pub fn resolved_interior(&self) -> Range<usize> {
        let end = (0..self.depth)
            .take_while(|&i| self.step(i).abs() >= RESOLVED_STEP)
            .count();
        0..end
    }

    /// Indices with two successors whose steps are at least
    /// [`RESOLVED_STEP_SECOND`], where second differences are meaningful.
    pub fn resolved_interior_second(&self) -> Range<usize> {
        let end = (0..self.depth.saturating_sub(1))
            .take_while(|&i| self.step(i + 1).abs() >= RESOLVED_STEP_SECOND)
            .count();
        0..end
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i > self.depth {
            Err(Error::OutOfRange {
                index: i,
                depth: self.depth,
            })
        } else {
            Ok(())
        }
    }

    /// Index must have a successor sample.
    pub(crate) fn check_interior(&self, i: usize) -> Result<()> {
        if i >= self.depth {
            Err(Error::OutOfRange {
                index: i,
                depth: self.depth,
            })
        } else {
            Ok(())
        }
    }
}

/// A real function sampled on a [`QGrid`]: `values[i] = f(base·qⁱ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFn {
    grid: QGrid,
    values: Vec<f64>,
}

impl LatticeFn {
    pub fn new(grid: QGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: QGrid, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    /// Builds from a per-index closure; the closure sees `(index, point)`.
    pub fn try_from_indexed(
        grid: QGrid,
        mut f: impl FnMut(usize, f64) -> Result<f64>,
    ) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| f(i, grid.point(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: QGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: QGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &QGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Result<f64> {
        self.values.get(i).copied().ok_or(Error::OutOfRange {
            index: i,
            depth: self.grid.depth,
        })
    }

    /// `x ↦ f(qx)`, living on the lattice one level shallower.
    pub fn shift(&self) -> Result<Self> {
        let grid = self.grid.truncate(self.grid.depth - 1)?;
        Ok(Self {
            grid,
            values: self.values[1..].to_vec(),
        })
    }

    pub fn truncate(&self, depth: usize) -> Result<Self> {
        let grid = self.grid.truncate(depth)?;
        Ok(Self {
            grid,
            values: self.values[..=depth].to_vec(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `(f(x) - f(qx)) / ((1-q)x)` at index `i`.
    pub fn q_derivative(&self, i: usize) -> Result<f64> {
        self.grid.check_interior(i)?;
        Ok((self.values[i] - self.values[i + 1]) / self.grid.step(i))
    }

    /// The q-derivative at every index that has a successor.
    pub fn q_derivatives(&self) -> Self {
        let grid = self
            .grid
            .truncate(self.grid.depth - 1)
            .expect("depth is positive");
        let values = (0..self.grid.depth)
            .map(|i| (self.values[i] - self.values[i + 1]) / self.grid.step(i))
            .collect();
        Self { grid, values }
    }

    /// `F(x_i) = ∫ f d_q t` from the origin proxy `x_N` up to `x_i`, i.e.
    /// `Σ_{n=i}^{N-1} (1-q)x_n f(x_n)`. `F(x_N) = 0` and `∂_q F = f` exactly.
    pub fn cumulative_q_integral(&self) -> Result<Self> {
        let n = self.grid.depth;
        let last = self.grid.step(n - 1) * self.values[n - 1];
        if !(last.abs() < self.grid.tail_tol) {
            return Err(Error::NonConverged {
                what: "Jackson integral",
                magnitude: last.abs(),
            });
        }
        Ok(self.cumulative_unchecked())
    }

    pub(crate) fn cumulative_unchecked(&self) -> Self {
        let n = self.grid.depth;
        let mut values = vec![0.0; n + 1];
        for i in (0..n).rev() {
            values[i] = values[i + 1] + self.grid.step(i) * self.values[i];
        }
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Largest `|f - g|` over the given index range (both functions must
    /// cover it; grids must share base and ratio).
    pub fn sup_distance(&self, other: &Self, range: Range<usize>) -> Result<f64> {
        if self.grid.base != other.grid.base || self.grid.q != other.grid.q {
            return Err(Error::GridMismatch);
        }
        let end = range.end;
        if end > self.len() || end > other.len() {
            return Err(Error::OutOfRange {
                index: end.saturating_sub(1),
                depth: self.grid.depth.min(other.grid.depth),
            });
        }
        Ok(range
            .map(|i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max))
    }
}

impl Index<usize> for LatticeFn {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// `(f(x_i) - f(x_{i+1})) / ((1-q)x_i)`.
pub fn q_derivative(f: &LatticeFn, i: usize) -> Result<f64> {
    f.q_derivative(i)
}

/// Jackson integral `∫₀^base f d_q t ≈ Σ_{n=0}^{N} (1-q)qⁿ·base·f(qⁿ·base)`.
pub fn q_integral(f: &LatticeFn) -> Result<f64> {
    let grid = f.grid();
    let n = grid.depth();
    let last = grid.step(n) * f[n];
    if !(last.abs() < grid.tail_tolerance()) {
        return Err(Error::NonConverged {
            what: "Jackson integral",
            magnitude: last.abs(),
        });
    }
    // summed from the small end
    Ok((0..=n).rev().map(|i| grid.step(i) * f[i]).sum())
}

/// `Πₙ₌₀..N (1 - (1-q)xₙ f(xₙ))`.
pub fn q_product(f: &LatticeFn) -> Result<f64> {
    let grid = f.grid();
    let mut prod = 1.0;
    let mut last = 1.0;
    for i in 0..grid.len() {
        let factor = 1.0 - grid.step(i) * f[i];
        if !(factor > 0.0) {
            return Err(Error::Domain {
                index: i,
                what: format!("product factor {factor} is not positive"),
            });
        }
        prod *= factor;
        last = factor;
    }
    if !((last - 1.0).abs() < grid.tail_tolerance()) {
        return Err(Error::NonConverged {
            what: "infinite product",
            magnitude: (last - 1.0).abs(),
        });
    }
    Ok(prod)
}

/// Lattice function `P(x_i) = exp((1/(1-q))·∫ ln(factor(t))/t d_q t)` with the
/// integral taken from the origin proxy, which equals `Π_{n=i}^{N-1} factor(x_n)`.
///
/// Every factor at `n < N` must be strictly positive; the sample at `N` is not
/// used. The last used factor must be within the tail tolerance of 1.
pub fn exp_q_log_integral(factors: &LatticeFn) -> Result<LatticeFn> {
    let grid = *factors.grid();
    let n = grid.depth();
    for i in 0..n {
        let f = factors[i];
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Domain {
                index: i,
                what: format!("logarithm argument {f} is not positive"),
            });
        }
    }
    let tail = (factors[n - 1] - 1.0).abs();
    if !(tail < grid.tail_tolerance()) {
        return Err(Error::NonConverged {
            what: "infinite product",
            magnitude: tail,
        });
    }
    let integrand = LatticeFn::try_from_indexed(grid, |i, x| {
        Ok(if i < n { factors[i].ln() / x } else { 0.0 })
    })?;
    let scale = 1.0 / (1.0 - grid.q());
    Ok(integrand
        .cumulative_unchecked()
        .map(|v| (scale * v).exp()))
}

type Rule = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficient rule and truncation for the generalized exponential
/// `exp_R(x) = Σ xⁿ / (R(q)·R(q²)···R(qⁿ))`.
#[derive(Clone)]
pub struct RSeries {
    q: f64,
    rule: Rule,
    terms: usize,
    tail_tol: f64,
}

impl fmt::Debug for RSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RSeries")
            .field("q", &self.q)
            .field("terms", &self.terms)
            .field("tail_tol", &self.tail_tol)
            .finish_non_exhaustive()
    }
}

impl RSeries {
    pub fn new(q: f64, rule: impl Fn(f64) -> f64 + Send + Sync + 'static, terms: usize) -> Result<Self> {
        QGrid::new(1.0, q, 1)?;
        if terms == 0 {
            return Err(Error::Precondition("series needs at least one term".into()));
        }
        Ok(Self {
            q,
            rule: Arc::new(rule),
            terms,
            tail_tol: DEFAULT_TAIL_TOLERANCE,
        })
    }

    /// `R(x) = (1 - x^{α+1}) / ((1-q) x^{α+1})`, the rule attached to the
    /// power-law seed `a·x^α`. With `α = 0` this is the standard q-exponential.
    pub fn power_law(q: f64, alpha: f64) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(Error::Precondition(format!("alpha must exceed -1, got {alpha}")));
        }
        Self::new(
            q,
            move |x| {
                let p = x.powf(alpha + 1.0);
                (1.0 - p) / ((1.0 - q) * p)
            },
            DEFAULT_DEPTH,
        )
    }

    pub fn with_terms(mut self, terms: usize) -> Self {
        self.terms = terms.max(1);
        self
    }

    pub fn with_tail_tolerance(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn coefficient(&self, x: f64) -> f64 {
        (self.rule)(x)
    }
}

/// Generalized exponential `Σₙ₌₀..M xⁿ / (R(q)···R(qⁿ))`.
pub fn exp_r(x: f64, series: &RSeries) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut qk = 1.0;
    for k in 1..=series.terms {
        qk *= series.q;
        let r = series.coefficient(qk);
        if r == 0.0 || r.is_nan() {
            return Err(Error::Domain {
                index: k,
                what: format!("R(q^{k}) = {r} in the denominator chain"),
            });
        }
        term *= x / r;
        if !term.is_finite() {
            return Err(Error::Overflow { index: k });
        }
        sum += term;
    }
    if !(term.abs() < series.tail_tol) {
        return Err(Error::NonConverged {
            what: "generalized exponential",
            magnitude: term.abs(),
        });
    }
    Ok(sum)
}
