//! Lower-triangular gauge transforms of the linear system and the Riccati
//! operators they induce.
//!
//! A gauge `D(x) = [[1, 0], [-c(x), 1]]` maps the transfer matrix to
//! `Λ'(x) = D(qx)⁻¹·Λ(x)·D(x)`. Choosing `c = -u` makes `Λ'` upper triangular
//! exactly when `u` solves the Riccati equation `R₊u = V`.

use crate::error::{Error, Result};
use crate::linsys::{lambda_at, Mat2, PotentialQuad};
use crate::qlattice::{LatticeFn, QGrid};

/// The gauge `D(x) = [[1, 0], [-c(x), 1]]`; `det D = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DarbouxMatrix {
    pub c: LatticeFn,
}

impl DarbouxMatrix {
    pub fn new(c: LatticeFn) -> Self {
        Self { c }
    }

    pub fn identity(grid: QGrid) -> Self {
        Self::new(LatticeFn::zeros(grid))
    }

    /// The gauge that triangularizes `Λ` when `u` solves `R₊u = V`: `c = -u`.
    pub fn from_riccati(u: &LatticeFn) -> Self {
        Self::new(u.neg())
    }

    pub fn grid(&self) -> &QGrid {
        self.c.grid()
    }

    pub fn at(&self, i: usize) -> Mat2 {
        Mat2::new(1.0, 0.0, -self.c[i], 1.0)
    }

    pub fn inverse_at(&self, i: usize) -> Mat2 {
        Mat2::new(1.0, 0.0, self.c[i], 1.0)
    }
}

/// `D(qx)⁻¹·Λ(x)·D(x)` at index `i`; `lam[i]` is `Λ(x_i)`.
pub fn gauge_transform(lam: &[Mat2], d: &DarbouxMatrix, i: usize) -> Result<Mat2> {
    if lam.len() != d.c.len() {
        return Err(Error::GridMismatch);
    }
    d.grid().check_interior(i)?;
    Ok(d.inverse_at(i + 1) * lam[i] * d.at(i))
}

/// Coefficients `[[R', S'], [V', T']]` of the gauge-transformed system, on the
/// grid one level shallower (the gauge at `x_i` needs `c(qx_i)`):
///
/// `R' = R - Sc`, `S' = S`, `T' = T + S·c(qx)`,
/// `V' = V + ∂_q c - Tc + R·c(qx) - S·c·c(qx)`.
pub fn gauged_potentials(p: &PotentialQuad, d: &DarbouxMatrix) -> Result<PotentialQuad> {
    p.r.same_grid(&d.c)?;
    let grid = *p.grid();
    let inner = grid.truncate(grid.depth() - 1)?;
    let c = &d.c;
    let build = |f: &dyn Fn(usize) -> f64| LatticeFn::try_from_indexed(inner, |i, _| Ok(f(i)));
    PotentialQuad::new(
        build(&|i| p.r[i] - p.s[i] * c[i])?,
        p.s.truncate(inner.depth())?,
        build(&|i| p.t[i] + p.s[i] * c[i + 1])?,
        build(&|i| {
            let dc = (c[i] - c[i + 1]) / grid.step(i);
            p.v[i] + dc - p.t[i] * c[i] + p.r[i] * c[i + 1] - p.s[i] * c[i] * c[i + 1]
        })?,
    )
}

/// Lower-left entry of `Λ'` under the gauge `c = -u`. It equals
/// `(1-q)x·(R₊u(x) - V(x))`, so it vanishes exactly when `u` solves the
/// Riccati equation at `x_i`. With `u ≡ 0` it is `-(1-q)x·V(x)`.
pub fn triangular_defect(p: &PotentialQuad, u: &LatticeFn, i: usize) -> Result<f64> {
    p.r.same_grid(u)?;
    p.grid().check_interior(i)?;
    let d = DarbouxMatrix::from_riccati(u);
    Ok((d.inverse_at(i + 1) * lambda_at(p, i)? * d.at(i)).c)
}

fn riccati_parts(u: &LatticeFn, p: &PotentialQuad, i: usize) -> Result<(f64, f64, f64, f64)> {
    p.r.same_grid(u)?;
    let du = u.q_derivative(i)?;
    let (ui, uq) = (u[i], u[i + 1]);
    Ok((du, p.t[i] * ui, p.r[i] * uq, p.s[i] * ui * uq))
}

/// `R₊u(x) = ∂_q u(x) - T(x)u(x) + R(x)u(qx) + S(x)u(x)u(qx)` at index `i`.
pub fn riccati_apply_plus(u: &LatticeFn, p: &PotentialQuad, i: usize) -> Result<f64> {
    let (du, tu, ru, suu) = riccati_parts(u, p, i)?;
    Ok(du - tu + ru + suu)
}

/// `R₋u(x) = -∂_q u(x) + T(x)u(x) - R(x)u(qx) + S(x)u(x)u(qx)` at index `i`.
///
/// Evaluated in the same operation order as [`riccati_apply_plus`], so
/// `R₊(-u) == R₋u` holds bit for bit.
pub fn riccati_apply_minus(u: &LatticeFn, p: &PotentialQuad, i: usize) -> Result<f64> {
    let (du, tu, ru, suu) = riccati_parts(u, p, i)?;
    Ok(-du + tu - ru + suu)
}

fn over_interior(
    u: &LatticeFn,
    p: &PotentialQuad,
    op: fn(&LatticeFn, &PotentialQuad, usize) -> Result<f64>,
) -> Result<LatticeFn> {
    let grid = *u.grid();
    let inner = grid.truncate(grid.depth() - 1)?;
    LatticeFn::try_from_indexed(inner, |i, _| op(u, p, i))
}

/// `R₊u` at every index with a successor (grid one level shallower).
pub fn riccati_plus(u: &LatticeFn, p: &PotentialQuad) -> Result<LatticeFn> {
    over_interior(u, p, riccati_apply_plus)
}

/// `R₋u` at every index with a successor (grid one level shallower).
pub fn riccati_minus(u: &LatticeFn, p: &PotentialQuad) -> Result<LatticeFn> {
    over_interior(u, p, riccati_apply_minus)
}

/// `I(u) = -u`.
pub fn involution(u: &LatticeFn) -> LatticeFn {
    u.neg()
}

/// `-∂_q²ψ(x) + V(x)ψ(x)` at index `i ≤ N-2`.
pub fn schrodinger_residual(psi: &LatticeFn, v: &LatticeFn, i: usize) -> Result<f64> {
    psi.same_grid(v)?;
    let grid = psi.grid();
    if i + 2 > grid.depth() {
        return Err(Error::OutOfRange {
            index: i,
            depth: grid.depth(),
        });
    }
    let d0 = psi.q_derivative(i)?;
    let d1 = psi.q_derivative(i + 1)?;
    let dd = (d0 - d1) / grid.step(i);
    Ok(-dd + v[i] * psi[i])
}

/// `(∂_q + u(qx))(-∂_q + u(x))ψ` at index `i ≤ N-2`. Equals the Schrödinger
/// residual with `V = R₊u` for `R = T = 0`, `S = 1`.
pub fn factored_schrodinger(psi: &LatticeFn, u: &LatticeFn, i: usize) -> Result<f64> {
    psi.same_grid(u)?;
    let grid = psi.grid();
    if i + 2 > grid.depth() {
        return Err(Error::OutOfRange {
            index: i,
            depth: grid.depth(),
        });
    }
    let inner = |k: usize| -> Result<f64> { Ok(-psi.q_derivative(k)? + u[k] * psi[k]) };
    let (w0, w1) = (inner(i)?, inner(i + 1)?);
    Ok((w0 - w1) / grid.step(i) + u[i + 1] * w0)
}

/// `ψ` with `ψ(x_0) = 1` and `ψ(qx) = (1 - (1-q)x·u(x))·ψ(x)`, the function
/// annihilated by `-∂_q + u`.
pub fn ground_state_from_riccati(u: &LatticeFn) -> LatticeFn {
    let grid = *u.grid();
    let mut values = Vec::with_capacity(grid.len());
    let mut psi = 1.0;
    for i in 0..grid.len() {
        values.push(psi);
        psi *= 1.0 - grid.step(i) * u[i];
    }
    LatticeFn::new(grid, values).expect("one value per lattice point")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprdsl::{parse, sample, Params};
    use crate::linsys::{propagate, resolvent_infinite, transfer_matrices};

    fn f(grid: QGrid, src: &str) -> LatticeFn {
        sample(&parse(src).unwrap(), grid, &Params::new()).unwrap()
    }

    fn quad(grid: QGrid, r: &str, s: &str, t: &str, v: &str) -> PotentialQuad {
        PotentialQuad::new(f(grid, r), f(grid, s), f(grid, t), f(grid, v)).unwrap()
    }

    /// `u = a·x^α` with its potential for `R = T = 0`, `S = 1`.
    fn power_seed(grid: QGrid, a: f64, alpha: f64) -> (LatticeFn, PotentialQuad) {
        let q = grid.q();
        let u = LatticeFn::from_fn(grid, |x| a * x.powf(alpha));
        let v = LatticeFn::from_fn(grid, |x| {
            a * (1.0 - q.powf(alpha)) / (1.0 - q) * x.powf(alpha - 1.0)
                + a * a * q.powf(alpha) * x.powf(2.0 * alpha)
        });
        (u, PotentialQuad::schrodinger(v))
    }

    #[test]
    fn identity_gauge_leaves_lambda_unchanged() {
        let g = QGrid::new(1.0, 0.5, 20).unwrap();
        let p = quad(g, "x", "1+x", "2", "x^2");
        let lam = transfer_matrices(&p);
        let d = DarbouxMatrix::identity(g);
        for i in 0..20 {
            assert_eq!(gauge_transform(&lam, &d, i).unwrap(), lam[i]);
        }
        assert!(gauge_transform(&lam, &d, 20).is_err());
    }

    #[test]
    fn gauge_preserves_determinant() {
        let g = QGrid::new(1.0, 0.5, 20).unwrap();
        let p = quad(g, "x", "1+x", "2", "x^2");
        let lam = transfer_matrices(&p);
        let d = DarbouxMatrix::new(f(g, "3*x - 1"));
        for i in 0..20 {
            let m = gauge_transform(&lam, &d, i).unwrap();
            assert!((m.det() - lam[i].det()).abs() < 1e-14);
        }
    }

    #[test]
    fn gauged_potentials_reproduce_transformed_lambda() {
        let g = QGrid::new(1.0, 0.6, 30).unwrap();
        let p = quad(g, "x", "1+x", "2", "x^2");
        let d = DarbouxMatrix::new(f(g, "0.4 - x"));
        let lam = transfer_matrices(&p);
        let gp = gauged_potentials(&p, &d).unwrap();
        for i in 0..30 {
            let direct = gauge_transform(&lam, &d, i).unwrap();
            let built = lambda_at(&gp, i).unwrap();
            assert!(direct.max_abs_diff(&built) < 1e-14);
        }
    }

    #[test]
    fn gauge_covariance_of_solutions() {
        let g = QGrid::new(1.0, 0.6, 60).unwrap();
        let p = quad(g, "x", "1+x", "2", "x^2");
        let d = DarbouxMatrix::new(f(g, "0.4 - x"));
        let sol = propagate(&p, (1.0, 0.5)).unwrap();
        let gp = gauged_potentials(&p, &d).unwrap();
        let start = d.inverse_at(0).apply(sol.at(0));
        let gauged = propagate(&gp, start).unwrap();
        for i in 0..60 {
            let expect = d.inverse_at(i).apply(sol.at(i));
            assert!((gauged.psi[i] - expect.0).abs() < 1e-10);
            assert!((gauged.phi[i] - expect.1).abs() < 1e-10);
        }
    }

    #[test]
    fn resolvent_covariance() {
        let g = QGrid::new(1.0, 0.5, 120).unwrap();
        let p = quad(g, "x", "1+x", "2", "x^2");
        let d = DarbouxMatrix::new(f(g, "0.4 - x"));
        let gp = gauged_potentials(&p, &d).unwrap();
        let n = 119;
        for i in [0, 3, 30] {
            let lhs = resolvent_infinite(&gp, i).unwrap().inverse().unwrap();
            // gauged grid bottoms out at x_{N-1}, so D(0) is taken there
            let orig = crate::linsys::resolvent_product(&p, i, n - i).unwrap();
            let rhs = d.inverse_at(i) * orig.inverse().unwrap() * d.at(n);
            assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }
    }

    #[test]
    fn defect_vanishes_on_riccati_solution() {
        let g = QGrid::new(1.0, 0.5, 60).unwrap();
        let (u, p) = power_seed(g, 1.0, 1.0);
        for i in 0..60 {
            assert!(triangular_defect(&p, &u, i).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn defect_with_zero_gauge_is_minus_step_times_v() {
        let g = QGrid::new(1.0, 0.5, 20).unwrap();
        let p = quad(g, "x", "1+x", "2", "3 - x^2");
        let z = LatticeFn::zeros(g);
        for i in 0..20 {
            let expect = -g.step(i) * p.v[i];
            assert!((triangular_defect(&p, &z, i).unwrap() - expect).abs() < 1e-15);
        }
        let p0 = quad(g, "x", "1+x", "2", "0");
        assert_eq!(triangular_defect(&p0, &z, 4).unwrap(), 0.0);
    }

    #[test]
    fn defect_golden_prefactor() {
        // lower-left entry is +(1-q)x·(R₊u - V) for an arbitrary u
        let g = QGrid::new(1.3, 0.7, 40).unwrap();
        let p = quad(g, "0.2 + x", "1 - x", "x^2", "0.5");
        let u = f(g, "exp(x) - 2");
        for i in 0..40 {
            let expect = g.step(i) * (riccati_apply_plus(&u, &p, i).unwrap() - p.v[i]);
            let got = triangular_defect(&p, &u, i).unwrap();
            assert!((got - expect).abs() < 1e-14, "{i}: {got} vs {expect}");
        }
    }

    #[test]
    fn riccati_of_zero_is_zero() {
        let g = QGrid::new(1.0, 0.5, 10).unwrap();
        let p = quad(g, "x", "1", "2", "0");
        let z = LatticeFn::zeros(g);
        assert_eq!(riccati_apply_plus(&z, &p, 3).unwrap(), 0.0);
        assert_eq!(riccati_apply_minus(&z, &p, 3).unwrap(), 0.0);
    }

    #[test]
    fn power_law_images() {
        let q = 0.5;
        let g = QGrid::new(1.0, q, 40).unwrap();
        let (u, p) = power_seed(g, 1.0, 2.0);
        for i in 0..40 {
            let x = g.point(i);
            let rm = -(1.0 - q * q) / (1.0 - q) * x + q * q * x.powi(4);
            assert!((riccati_apply_plus(&u, &p, i).unwrap() - p.v[i]).abs() < 1e-13);
            assert!((riccati_apply_minus(&u, &p, i).unwrap() - rm).abs() < 1e-13);
        }
    }

    #[test]
    fn plus_of_negation_is_minus_bitwise() {
        let g = QGrid::new(1.1, 0.8, 50).unwrap();
        let p = quad(g, "0.3 - x", "1 + x^2", "exp(x)", "0");
        let u = f(g, "x^3 - 0.7*x + 0.1");
        let neg = involution(&u);
        for i in 0..50 {
            assert_eq!(
                riccati_apply_plus(&neg, &p, i).unwrap().to_bits(),
                riccati_apply_minus(&u, &p, i).unwrap().to_bits()
            );
        }
        assert_eq!(involution(&neg), u);
    }

    #[test]
    fn ratio_of_propagated_solution_solves_riccati() {
        let g = QGrid::new(1.0, 0.5, 256).unwrap();
        let p = quad(g, "x", "1 + x", "-0.5", "2 - x");
        let sol = propagate(&p, (1.0, 0.3)).unwrap();
        let u = sol.ratio().unwrap();
        for i in g.resolved_interior() {
            assert!((riccati_apply_plus(&u, &p, i).unwrap() - p.v[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn schrodinger_trivial_cases() {
        let g = QGrid::new(1.0, 0.5, 20).unwrap();
        let z = LatticeFn::zeros(g);
        assert_eq!(schrodinger_residual(&LatticeFn::constant(g, 1.0), &z, 3).unwrap(), 0.0);
        assert!(schrodinger_residual(&f(g, "x"), &z, 3).unwrap().abs() < 1e-12);
        assert!(schrodinger_residual(&z, &z, 19).is_err());
    }

    #[test]
    fn factorization_agrees_with_schrodinger_form() {
        let g = QGrid::new(1.0, 0.5, 80).unwrap();
        let (u, p) = power_seed(g, 0.8, 1.0);
        let psi = f(g, "exp(-x) + x^2");
        for i in g.resolved_interior_second() {
            let lhs = factored_schrodinger(&psi, &u, i).unwrap();
            let rhs = schrodinger_residual(&psi, &p.v, i).unwrap();
            assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn ground_state_is_annihilated() {
        let g = QGrid::new(1.0, 0.5, 256).unwrap();
        let (u, p) = power_seed(g, 1.0, 1.0);
        let psi = ground_state_from_riccati(&u);
        for i in g.resolved_interior_second() {
            assert!(factored_schrodinger(&psi, &u, i).unwrap().abs() < 1e-8);
            assert!(schrodinger_residual(&psi, &p.v, i).unwrap().abs() < 1e-8);
        }
    }
}
