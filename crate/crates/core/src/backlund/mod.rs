//! Solution generators for the Riccati equation `R₊u = V` and its linear system.
//!
//! Given a seed `u₀`, every other solution is `B⁺ₜu₀ = u₀ + t·E/(1 + t·G)` with
//!
//! * `A(x) = 1 - (1-q)x·[R(x) + u₀(x)S(x)]`, `C(x) = 1 - (1-q)x·[T(x) - u₀(qx)S(x)]`,
//! * `P_A, P_C` the exp-of-q-integral products of `A`, `C` from the origin,
//! * `E = P_A / P_C` and `G = ∫₀ˣ S·E/A d_q t`.
//!
//! `B⁺ₜ` never reads `V`, and `B⁺ₜ₁∘B⁺ₜ₂ = B⁺ₜ₁₊ₜ₂`.

mod chain;
mod example;

pub use chain::{
    apply_chain, companion_potential, deform_chain, deformed_potential_once,
    quadratic_reconstruct, DeformationChain,
};
pub use example::{
    power_law_deformed_potential, power_law_deformed_solution, power_law_family,
    power_law_potential,
};

use crate::darboux::{involution, riccati_apply_plus};
use crate::error::{Error, Result};
use crate::linsys::{PotentialQuad, SolutionPair};
use crate::qlattice::{exp_q_log_integral, LatticeFn, QGrid};

/// Pointwise tolerance of seed validation, relative to `max(1, |V|)`.
pub const SEED_TOLERANCE: f64 = 1e-9;

/// A Riccati solution `u₀` together with the potentials it solves.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSolution {
    u0: LatticeFn,
    potentials: PotentialQuad,
}

impl SeedSolution {
    /// Validates `|R₊u₀ - V| ≤ 1e-9·max(1, |V|)` on the resolved interior.
    pub fn new(u0: LatticeFn, potentials: PotentialQuad) -> Result<Self> {
        potentials.r.same_grid(&u0)?;
        for i in u0.grid().resolved_interior() {
            let v = potentials.v[i];
            let residual = (riccati_apply_plus(&u0, &potentials, i)? - v).abs();
            if !(residual <= SEED_TOLERANCE * v.abs().max(1.0)) {
                return Err(Error::InvalidSeed { index: i, residual });
            }
        }
        Ok(Self { u0, potentials })
    }

    pub fn u0(&self) -> &LatticeFn {
        &self.u0
    }

    pub fn potentials(&self) -> &PotentialQuad {
        &self.potentials
    }

    pub fn grid(&self) -> &QGrid {
        self.u0.grid()
    }
}

/// A point `B⁺ₜu₀` on the orbit of a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklundOrbit {
    pub seed: SeedSolution,
    pub t: f64,
}

impl BacklundOrbit {
    pub fn new(seed: SeedSolution, t: f64) -> Self {
        Self { seed, t }
    }

    pub fn solution(&self) -> Result<LatticeFn> {
        backlund_plus(&self.seed, self.t)
    }

    /// The orbit member `B⁺ₛ` applied to this one, i.e. the orbit at `t + s`.
    pub fn advance(&self, s: f64) -> Self {
        Self::new(self.seed.clone(), self.t + s)
    }
}

/// Lattice building blocks shared by the general solution and `B⁺ₜ`.
struct Kernel {
    /// `P_A`, `P_C` at every index; 1 at the origin proxy.
    pa: LatticeFn,
    pc: LatticeFn,
    /// `G = ∫₀ˣ S·P_A/(A·P_C) d_q t`.
    g: LatticeFn,
}

impl Kernel {
    fn new(u0: &LatticeFn, p: &PotentialQuad) -> Result<Self> {
        p.r.same_grid(u0)?;
        let grid = *u0.grid();
        let n = grid.depth();
        // the sample at N is never read by the products; 1 keeps it inert
        let a = LatticeFn::try_from_indexed(grid, |i, _| {
            Ok(if i < n {
                1.0 - grid.step(i) * (p.r[i] + u0[i] * p.s[i])
            } else {
                1.0
            })
        })?;
        let c = LatticeFn::try_from_indexed(grid, |i, _| {
            Ok(if i < n {
                1.0 - grid.step(i) * (p.t[i] - u0[i + 1] * p.s[i])
            } else {
                1.0
            })
        })?;
        let pa = exp_q_log_integral(&a)?;
        let pc = exp_q_log_integral(&c)?;
        let integrand = LatticeFn::try_from_indexed(grid, |i, _| {
            Ok(p.s[i] * pa[i] / (a[i] * pc[i]))
        })?;
        let g = integrand.cumulative_q_integral()?;
        Ok(Self { pa, pc, g })
    }
}

/// Indices `i < N` such that `d` vanishes at `x_i` or changes sign between
/// `x_i` and `x_{i+1}`.
fn sign_changes(d: &LatticeFn) -> Vec<usize> {
    let v = d.values();
    (0..v.len() - 1)
        .filter(|&i| v[i] == 0.0 || (v[i] > 0.0) != (v[i + 1] > 0.0))
        .collect()
}

/// `(ψ, φ)` from the exp-of-q-integral formulas with constants `D`, `F`:
///
/// `ψ = (D + F·G)/P_A`, `φ = F/P_C + u₀·ψ`, so `(ψ, φ)(0) = (D, F + D·u₀(0))`.
pub fn general_solution(seed: &SeedSolution, d: f64, f: f64) -> Result<SolutionPair> {
    let grid = *seed.grid();
    let u0 = seed.u0();
    let k = Kernel::new(u0, seed.potentials())?;
    let numerator = k.g.map(|g| d + f * g);
    if d != 0.0 {
        if let Some(&index) = sign_changes(&numerator).first() {
            return Err(Error::MovablePole { index });
        }
    }
    let psi = LatticeFn::try_from_indexed(grid, |i, _| Ok(numerator[i] / k.pa[i]))?;
    let phi = LatticeFn::try_from_indexed(grid, |i, _| Ok(f / k.pc[i] + u0[i] * psi[i]))?;
    SolutionPair::new(psi, phi)
}

/// `B⁺ₜu₀` with its denominator `1 + t·G` and the located poles.
#[derive(Debug, Clone, PartialEq)]
pub struct PlusProfile {
    pub u: LatticeFn,
    pub denominator: LatticeFn,
    /// Indices `i` with a zero of the denominator in `[x_{i+1}, x_i]`.
    pub poles: Vec<usize>,
}

/// `B⁺ₜ` applied to any `u₀` for the coefficients `R, S, T` of `p`
/// (`V` is not read). Poles are reported, not raised.
pub fn plus_profile(u0: &LatticeFn, p: &PotentialQuad, t: f64) -> Result<PlusProfile> {
    let grid = *u0.grid();
    if t == 0.0 {
        p.r.same_grid(u0)?;
        return Ok(PlusProfile {
            u: u0.clone(),
            denominator: LatticeFn::constant(grid, 1.0),
            poles: Vec::new(),
        });
    }
    let k = Kernel::new(u0, p)?;
    let denominator = k.g.map(|g| 1.0 + t * g);
    let u = LatticeFn::try_from_indexed(grid, |i, _| {
        Ok(u0[i] + t * (k.pa[i] / k.pc[i]) / denominator[i])
    })?;
    let poles = sign_changes(&denominator);
    Ok(PlusProfile {
        u,
        denominator,
        poles,
    })
}

/// `B⁺ₜ` applied to any `u₀`; a denominator zero is a movable-pole error.
pub fn plus_transform(u0: &LatticeFn, p: &PotentialQuad, t: f64) -> Result<LatticeFn> {
    let profile = plus_profile(u0, p, t)?;
    match profile.poles.first() {
        Some(&index) => Err(Error::MovablePole { index }),
        None => Ok(profile.u),
    }
}

/// `uᵗ = B⁺ₜu₀`, a solution of the seed's own Riccati equation.
pub fn backlund_plus(seed: &SeedSolution, t: f64) -> Result<LatticeFn> {
    plus_transform(seed.u0(), seed.potentials(), t)
}

/// `B⁻ₜu₀ = I(B⁺ₜ(I(u₀)))`: preserves `R₋u = R₋u₀`.
pub fn backlund_minus(seed: &SeedSolution, t: f64) -> Result<LatticeFn> {
    minus_transform(seed.u0(), seed.potentials(), t)
}

/// `B⁻ₜ` applied to any `u₀`.
pub fn minus_transform(u0: &LatticeFn, p: &PotentialQuad, t: f64) -> Result<LatticeFn> {
    Ok(involution(&plus_transform(&involution(u0), p, t)?))
}

fn ratio4(v: [f64; 4]) -> Option<f64> {
    for a in 0..4 {
        for b in a + 1..4 {
            if v[a] == v[b] {
                return None;
            }
        }
    }
    let [u1, u2, u3, u4] = v;
    Some(((u4 - u3) * (u1 - u2)) / ((u3 - u1) * (u2 - u4)))
}

/// `((u⁴-u³)(u¹-u²)) / ((u³-u¹)(u²-u⁴))` for four orbit values at one index.
pub fn cross_ratio(values: [f64; 4], index: usize) -> Result<f64> {
    ratio4(values).ok_or(Error::DegenerateRatio { index })
}

/// The same ratio evaluated on the group parameters `t¹…t⁴`.
pub fn parameter_cross_ratio(t: [f64; 4]) -> Result<f64> {
    ratio4(t).ok_or_else(|| Error::Precondition(format!("coincident parameters in {t:?}")))
}

/// `t ↦ (a·t + b)/(c·t + d)`.
pub fn mobius(t: f64, [a, b, c, d]: [f64; 4]) -> f64 {
    (a * t + b) / (c * t + d)
}
