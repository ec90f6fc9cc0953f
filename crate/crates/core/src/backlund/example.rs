//! The power-law seed `u₀ = a·xᵅ` for `R = T = 0`, `S = 1`, and the closed
//! forms of its once-deformed solution and potential.
//!
//! With `Q = q^{α+1}` the generalized exponential of the power-law rule is
//! `exp_R(z) = Π_{k≥1} (1 + (1-q)·z·Qᵏ)`. Writing
//!
//! * `E(x) = exp_R(a·q^{-α-1}·x^{α+1}) / exp_R(-a·q^{-1}·x^{α+1})`,
//! * `g(y) = exp_R(a·y^{α+1}) / exp_R(-a·q^{-1}·y^{α+1})`, `G(x) = ∫₀ˣ g d_q y`,
//!
//! the deformed solution is `u(t, x) = a·xᵅ - t·E(x)/(1 + t·G(x))`.

use crate::error::{Error, Result};
use crate::linsys::PotentialQuad;
use crate::qlattice::{exp_r, LatticeFn, QGrid, RSeries};

use super::SeedSolution;

/// Term cap for the pointwise Jackson sums of the closed forms.
const MAX_JACKSON_TERMS: usize = 1_000_000;

/// `V₀(x) = a(1-qᵅ)/(1-q)·x^{α-1} + a²qᵅx^{2α}`, solved by `a·xᵅ`.
pub fn power_law_potential(a: f64, alpha: f64, q: f64, x: f64) -> f64 {
    let qa = q.powf(alpha);
    a * (1.0 - qa) / (1.0 - q) * x.powf(alpha - 1.0) + a * a * qa * x.powf(2.0 * alpha)
}

fn check_family(alpha: f64, grid: &QGrid) -> Result<()> {
    if !(alpha > -1.0) {
        return Err(Error::Precondition(format!("alpha must exceed -1, got {alpha}")));
    }
    if !(grid.base() > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "power-law seed needs a positive base point, got {}",
            grid.base()
        )));
    }
    Ok(())
}

/// The validated seed `u₀ = a·xᵅ` with its Schrödinger potential.
pub fn power_law_family(a: f64, alpha: f64, grid: QGrid) -> Result<SeedSolution> {
    check_family(alpha, &grid)?;
    let q = grid.q();
    let u0 = LatticeFn::from_fn(grid, |x| a * x.powf(alpha));
    let v0 = LatticeFn::from_fn(grid, |x| power_law_potential(a, alpha, q, x));
    SeedSolution::new(u0, PotentialQuad::schrodinger(v0))
}

struct ClosedForm {
    a: f64,
    alpha: f64,
    q: f64,
    series: RSeries,
}

impl ClosedForm {
    fn new(a: f64, alpha: f64, grid: &QGrid) -> Result<Self> {
        check_family(alpha, grid)?;
        Ok(Self {
            a,
            alpha,
            q: grid.q(),
            series: RSeries::power_law(grid.q(), alpha)?,
        })
    }

    fn exp(&self, z: f64, index: usize) -> Result<f64> {
        exp_r(z, &self.series).map_err(|e| match e {
            Error::Overflow { .. } => Error::Overflow { index },
            other => other,
        })
    }

    fn ratio(&self, num: f64, den: f64, index: usize) -> Result<f64> {
        let r = self.exp(num, index)? / self.exp(den, index)?;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::Overflow { index })
        }
    }

    fn e(&self, x: f64, index: usize) -> Result<f64> {
        let p = x.powf(self.alpha + 1.0);
        self.ratio(
            self.a * self.q.powf(-self.alpha - 1.0) * p,
            -self.a / self.q * p,
            index,
        )
    }

    fn g(&self, y: f64, index: usize) -> Result<f64> {
        let p = y.powf(self.alpha + 1.0);
        self.ratio(self.a * p, -self.a / self.q * p, index)
    }

    /// Jackson integral `Σₙ (1-q)xqⁿ·g(xqⁿ)`, summed until terms stop mattering.
    fn big_g(&self, x: f64, index: usize) -> Result<f64> {
        let mut terms = Vec::new();
        let mut y = x;
        for _ in 0..MAX_JACKSON_TERMS {
            let term = (1.0 - self.q) * y * self.g(y, index)?;
            terms.push(term);
            if term.abs() <= 1e-18 * terms[0].abs() || term == 0.0 {
                // small terms first
                return Ok(terms.iter().rev().sum());
            }
            y *= self.q;
        }
        Err(Error::NonConverged {
            what: "Jackson integral",
            magnitude: terms.last().copied().unwrap_or(f64::NAN).abs(),
        })
    }
}

/// Closed form of `B⁻ₜ(a·xᵅ)` at every grid point.
pub fn power_law_deformed_solution(a: f64, alpha: f64, t: f64, grid: QGrid) -> Result<LatticeFn> {
    let cf = ClosedForm::new(a, alpha, &grid)?;
    LatticeFn::try_from_indexed(grid, |i, x| {
        let den = 1.0 + t * cf.big_g(x, i)?;
        if den == 0.0 {
            return Err(Error::MovablePole { index: i });
        }
        Ok(a * x.powf(alpha) - t * cf.e(x, i)? / den)
    })
}

/// Closed form of the once-deformed potential at every grid point:
///
/// `V(t,x) = V₀(x) - 2t·g(x)·[(1+qᵅ)·a·xᵅ·(1+tG(qx)) - t·E(qx)] / ((1+tG(x))(1+tG(qx)))`.
pub fn power_law_deformed_potential(a: f64, alpha: f64, t: f64, grid: QGrid) -> Result<LatticeFn> {
    let cf = ClosedForm::new(a, alpha, &grid)?;
    let q = grid.q();
    LatticeFn::try_from_indexed(grid, |i, x| {
        let d0 = 1.0 + t * cf.big_g(x, i)?;
        let d1 = 1.0 + t * cf.big_g(q * x, i)?;
        if d0 == 0.0 || d1 == 0.0 {
            return Err(Error::MovablePole { index: i });
        }
        let bracket = (1.0 + q.powf(alpha)) * a * x.powf(alpha) * d1 - t * cf.e(q * x, i)?;
        Ok(power_law_potential(a, alpha, q, x) - 2.0 * t * cf.g(x, i)? * bracket / (d0 * d1))
    })
}
