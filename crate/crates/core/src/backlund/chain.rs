//! Deformations of the Schrödinger-type pair `R₊u = V`, `R₋u = W` built from
//! alternating `B⁺` maps and sign flips.

use crate::darboux::{riccati_minus, riccati_plus};
use crate::error::{Error, Result};
use crate::linsys::PotentialQuad;
use crate::qlattice::LatticeFn;

use super::{minus_transform, plus_transform, SeedSolution};

/// A seed with the ordered deformation parameters `t₁…tₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationChain {
    pub seed: SeedSolution,
    pub params: Vec<f64>,
}

impl DeformationChain {
    pub fn new(seed: SeedSolution, params: Vec<f64>) -> Self {
        Self { seed, params }
    }
}

/// `I∘B⁺ₜ₁∘I∘B⁺ₜ₂∘…∘I∘B⁺ₜₙ∘I` applied to `u`. The innermost map is applied
/// first; with no parameters the operator is the bare sign flip `I`.
///
/// Composition rules: `apply(t₁..tₙ)∘apply(s₁..sₘ) = apply(t₁..tₙ₋₁, tₙ+s₁, s₂..sₘ)`
/// and `apply(t)∘apply(-t)` is the identity.
pub fn apply_chain(u: &LatticeFn, p: &PotentialQuad, params: &[f64]) -> Result<LatticeFn> {
    let mut v = u.neg();
    for (k, &t) in params.iter().enumerate().rev() {
        v = plus_transform(&v, p, t)
            .map_err(|e| Error::Stage {
                stage: k + 1,
                source: Box::new(e),
            })?
            .neg();
    }
    Ok(v)
}

/// `(u(t₁…tₙ), V(t₁…tₙ))` with `V = R₊u` on the grid one level shallower.
/// The empty chain returns the seed and its potential unchanged.
pub fn deform_chain(chain: &DeformationChain) -> Result<(LatticeFn, LatticeFn)> {
    let seed = &chain.seed;
    if chain.params.is_empty() {
        return Ok((seed.u0().clone(), seed.potentials().v.clone()));
    }
    let u = apply_chain(seed.u0(), seed.potentials(), &chain.params)?;
    let v = riccati_plus(&u, seed.potentials())?;
    Ok((u, v))
}

/// The potential `V(t₂…tₙ)` paired with `u(t₁…tₙ)` through `R₋u = V(t₂…tₙ)`.
/// For a single parameter it is `R₋u₀`.
pub fn companion_potential(chain: &DeformationChain) -> Result<LatticeFn> {
    let seed = &chain.seed;
    match chain.params.len() {
        0 => Err(Error::Precondition(
            "the empty chain has no companion potential".into(),
        )),
        1 => riccati_minus(seed.u0(), seed.potentials()),
        _ => {
            let tail = apply_chain(seed.u0(), seed.potentials(), &chain.params[1..])?;
            riccati_plus(&tail, seed.potentials())
        }
    }
}

/// `V(t, x) = V₀(x) - 2∂_q(u₀ - u(t))(x)` with `u(t) = B⁻ₜu₀`, for the
/// Schrödinger coefficients `R = T = 0`, `S = 1`. Lives on the grid one
/// level shallower.
pub fn deformed_potential_once(seed: &SeedSolution, t: f64) -> Result<LatticeFn> {
    let p = seed.potentials();
    if !p.is_schrodinger() {
        return Err(Error::Precondition(
            "deformed potential needs R = T = 0 and S = 1".into(),
        ));
    }
    let ut = minus_transform(seed.u0(), p, t)?;
    let gap = seed.u0().sub(&ut)?.q_derivatives();
    let v0 = p.v.truncate(gap.grid().depth())?;
    v0.zip_with(&gap, |v, d| v - 2.0 * d)
}

/// Both roots of `u² - ((1-q)x·ΔV/2)·u - (V(t) + W)/2 = 0` at index `i`, where
/// `W = R₋u₀` and `ΔV = V(t) - W`. They are `u(t, x)` and `-u(t, qx)`;
/// the `+` root comes first.
pub fn quadratic_reconstruct(v_t: &LatticeFn, w: &LatticeFn, i: usize) -> Result<(f64, f64)> {
    v_t.same_grid(w)?;
    let (vt, wi) = (v_t.get(i)?, w.get(i)?);
    let half = 0.5 * v_t.grid().step(i) * (vt - wi);
    let disc = half * half + 2.0 * (vt + wi);
    if !(disc >= 0.0) {
        return Err(Error::Domain {
            index: i,
            what: format!("negative discriminant {disc}"),
        });
    }
    let root = disc.sqrt();
    Ok((0.5 * (half + root), 0.5 * (half - root)))
}
