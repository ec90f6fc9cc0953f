//! Differential (`q → 1`) counterparts of the lattice formulas, evaluated by
//! fixed-step composite trapezoid quadrature.
//!
//! System: `ψ' = Rψ + Sφ`, `φ' = Vψ + Tφ`. Riccati: `u' = V + Tu - Ru - Su²`.
//! Quadrature nodes are aligned so that the evaluation point is an exact node:
//! a single-point evaluation at `x` uses the step `x / ⌈x/h⌉`.

use crate::error::{Error, Result};
use crate::exprdsl::{parse, Expr, Params};

/// The four coefficient expressions with their bindings and quadrature setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPotentials {
    pub r: Expr,
    pub s: Expr,
    pub t: Expr,
    pub v: Expr,
    pub params: Params,
    /// Nominal quadrature step `h`.
    pub step: f64,
    /// Right end of the quadrature span `[0, x_max]`.
    pub x_max: f64,
}

impl ClassicalPotentials {
    pub fn new(
        [r, s, t, v]: [Expr; 4],
        params: Params,
        step: f64,
        x_max: f64,
    ) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Precondition(format!(
                "quadrature step must be positive, got {step}"
            )));
        }
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::Precondition(format!(
                "quadrature span must be positive, got {x_max}"
            )));
        }
        Ok(Self {
            r,
            s,
            t,
            v,
            params,
            step,
            x_max,
        })
    }

    /// Parses the four coefficient sources.
    pub fn parse(
        [r, s, t, v]: [&str; 4],
        params: Params,
        step: f64,
        x_max: f64,
    ) -> Result<Self> {
        Self::new([parse(r)?, parse(s)?, parse(t)?, parse(v)?], params, step, x_max)
    }

    /// `R = T = 0`, `S = 1` with the given potential.
    pub fn schrodinger(v: Expr, params: Params, step: f64, x_max: f64) -> Result<Self> {
        Self::new(
            [Expr::num(0.0), Expr::num(1.0), Expr::num(0.0), v],
            params,
            step,
            x_max,
        )
    }

    pub fn with_step(&self, step: f64) -> Result<Self> {
        Self::new(
            [self.r.clone(), self.s.clone(), self.t.clone(), self.v.clone()],
            self.params.clone(),
            step,
            self.x_max,
        )
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if !(0.0..=self.x_max).contains(&x) {
            return Err(Error::Precondition(format!(
                "x = {x} lies outside the quadrature span [0, {}]",
                self.x_max
            )));
        }
        Ok(())
    }
}

/// Values on quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalProfile {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// Denominator `1 + t·∫…` of the transform at each node.
    pub denominator: Vec<f64>,
    /// Node indices `k` with a denominator zero in `[x_k, x_{k+1}]`.
    pub poles: Vec<usize>,
}

fn eval_nodes(e: &Expr, nodes: &[f64], params: &Params) -> Result<Vec<f64>> {
    nodes
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            e.eval(x, params)
                .map_err(|source| Error::Sample { index, source })
        })
        .collect()
}

/// `∫₀^{x_k} f` by the trapezoid rule on arbitrary increasing nodes from 0.
fn cumulative_trapezoid(nodes: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..nodes.len() {
        acc += 0.5 * (nodes[k] - nodes[k - 1]) * (f[k] + f[k - 1]);
        out.push(acc);
    }
    out
}

/// Uniform nodes `0, h', …, (m + extra)·h'` with `h' = x/m`, `m = ⌈x/h⌉`;
/// returns the nodes and the index of `x`.
fn aligned_nodes(x: f64, h: f64, extra: usize) -> (Vec<f64>, usize) {
    let m = (x / h).ceil().max(if x > 0.0 { 1.0 } else { 0.0 }) as usize;
    let hh = if m == 0 { h } else { x / m as f64 };
    let nodes = (0..=m + extra)
        .map(|k| if k == m { x } else { k as f64 * hh })
        .collect();
    (nodes, m)
}

/// Nodes `0, h, 2h, …` up to `x_end`, closing with a partial panel.
fn batch_nodes(x_end: f64, h: f64) -> Vec<f64> {
    let full = (x_end / h).floor() as usize;
    let mut nodes: Vec<f64> = (0..=full).map(|k| k as f64 * h).collect();
    if x_end - full as f64 * h > 1e-12 * h {
        nodes.push(x_end);
    }
    nodes
}

fn finite_or_overflow(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::Overflow { index }),
        None => Ok(()),
    }
}

fn sign_changes(d: &[f64]) -> Vec<usize> {
    (0..d.len().saturating_sub(1))
        .filter(|&k| d[k] == 0.0 || (d[k] > 0.0) != (d[k + 1] > 0.0))
        .collect()
}

struct Pair {
    psi: Vec<f64>,
    phi: Vec<f64>,
}

fn pair_on(p: &ClassicalPotentials, u0: &Expr, d: f64, f: f64, nodes: &[f64]) -> Result<Pair> {
    let r = eval_nodes(&p.r, nodes, &p.params)?;
    let s = eval_nodes(&p.s, nodes, &p.params)?;
    let t = eval_nodes(&p.t, nodes, &p.params)?;
    let u = eval_nodes(u0, nodes, &p.params)?;
    let ia_f: Vec<f64> = (0..nodes.len()).map(|k| r[k] + u[k] * s[k]).collect();
    let ic_f: Vec<f64> = (0..nodes.len()).map(|k| t[k] - u[k] * s[k]).collect();
    let ia = cumulative_trapezoid(nodes, &ia_f);
    let ic = cumulative_trapezoid(nodes, &ic_f);
    let ge: Vec<f64> = (0..nodes.len()).map(|k| s[k] * (ic[k] - ia[k]).exp()).collect();
    let g = cumulative_trapezoid(nodes, &ge);
    let psi: Vec<f64> = (0..nodes.len()).map(|k| (d + f * g[k]) * ia[k].exp()).collect();
    let phi: Vec<f64> = (0..nodes.len())
        .map(|k| f * ic[k].exp() + u[k] * psi[k])
        .collect();
    finite_or_overflow(&psi)?;
    finite_or_overflow(&phi)?;
    Ok(Pair { psi, phi })
}

/// `(ψ, φ)(x)` with `ψ = (D + F·∫₀ˣ S·e^K)·e^{∫(R+u₀S)}`,
/// `φ = F·e^{∫(T-u₀S)} + u₀ψ`, `K = ∫₀ˣ (T - R - 2u₀S)`.
pub fn classical_solution_pair(
    p: &ClassicalPotentials,
    u0: &Expr,
    d: f64,
    f: f64,
    x: f64,
) -> Result<(f64, f64)> {
    p.check_point(x)?;
    let (nodes, k) = aligned_nodes(x, p.step, 0);
    let pair = pair_on(p, u0, d, f, &nodes)?;
    Ok((pair.psi[k], pair.phi[k]))
}

fn backlund_on(
    u0: &Expr,
    p: &ClassicalPotentials,
    t: f64,
    nodes: Vec<f64>,
) -> Result<ClassicalProfile> {
    let r = eval_nodes(&p.r, &nodes, &p.params)?;
    let s = eval_nodes(&p.s, &nodes, &p.params)?;
    let tt = eval_nodes(&p.t, &nodes, &p.params)?;
    let u = eval_nodes(u0, &nodes, &p.params)?;
    if t == 0.0 {
        return Ok(ClassicalProfile {
            denominator: vec![1.0; nodes.len()],
            x: nodes,
            values: u,
            poles: Vec::new(),
        });
    }
    let kf: Vec<f64> = (0..nodes.len())
        .map(|k| tt[k] - r[k] - 2.0 * u[k] * s[k])
        .collect();
    let big_k = cumulative_trapezoid(&nodes, &kf);
    let ek: Vec<f64> = big_k.iter().map(|v| v.exp()).collect();
    finite_or_overflow(&ek)?;
    let se: Vec<f64> = (0..nodes.len()).map(|k| s[k] * ek[k]).collect();
    let g = cumulative_trapezoid(&nodes, &se);
    let denominator: Vec<f64> = g.iter().map(|g| 1.0 + t * g).collect();
    let values: Vec<f64> = (0..nodes.len())
        .map(|k| u[k] + t * ek[k] / denominator[k])
        .collect();
    let poles = sign_changes(&denominator);
    Ok(ClassicalProfile {
        x: nodes,
        values,
        denominator,
        poles,
    })
}

fn first_pole(profile: &ClassicalProfile, upto: usize) -> Result<()> {
    match profile.poles.iter().find(|&&k| k < upto) {
        Some(&index) => Err(Error::MovablePole { index }),
        None => Ok(()),
    }
}

/// `uᵗ(x) = u₀ + t·e^K/(1 + t·∫₀ˣ S·e^K)`, `K = ∫₀ˣ (T - R - 2u₀S)`.
pub fn classical_backlund(u0: &Expr, p: &ClassicalPotentials, t: f64, x: f64) -> Result<f64> {
    p.check_point(x)?;
    let (nodes, k) = aligned_nodes(x, p.step, 0);
    let profile = backlund_on(u0, p, t, nodes)?;
    first_pole(&profile, k.max(1))?;
    Ok(profile.values[k])
}

/// `uᵗ` on the nodes `0, h, …` up to `x_end`; poles are reported, not raised.
pub fn classical_backlund_profile(
    u0: &Expr,
    p: &ClassicalPotentials,
    t: f64,
    x_end: f64,
) -> Result<ClassicalProfile> {
    p.check_point(x_end)?;
    backlund_on(u0, p, t, batch_nodes(x_end, p.step))
}

/// `B⁻ₜu₀ = -B⁺ₜ(-u₀)`; for `R = T = 0`, `S = 1` this is
/// `u₀ - d/dx ln(1 + t·∫₀ˣ e^{2∫u₀})`.
pub fn classical_backlund_minus(u0: &Expr, p: &ClassicalPotentials, t: f64, x: f64) -> Result<f64> {
    let neg = Expr::Neg(Box::new(u0.clone()));
    Ok(-classical_backlund(&neg, p, t, x)?)
}

/// `V(t,x) = V₀(x) - 2·d²/dx² ln(1 + t·∫₀ˣ e^{2∫₀^y u₀})`, with `V₀ = p.v`.
/// The second derivative is a central difference on the quadrature nodes.
pub fn classical_deformed_potential(
    p: &ClassicalPotentials,
    u0: &Expr,
    t: f64,
    x: f64,
) -> Result<f64> {
    p.check_point(x)?;
    let v0 = p.v.eval(x, &p.params)?;
    if t == 0.0 {
        return Ok(v0);
    }
    let (nodes, k) = aligned_nodes(x, p.step, 1);
    if k == 0 {
        return Err(Error::Precondition(
            "second difference needs x > 0".into(),
        ));
    }
    let u = eval_nodes(u0, &nodes, &p.params)?;
    let twice: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
    let inner = cumulative_trapezoid(&nodes, &twice);
    let e: Vec<f64> = inner.iter().map(|v| v.exp()).collect();
    finite_or_overflow(&e)?;
    let outer = cumulative_trapezoid(&nodes, &e);
    let arg: Vec<f64> = outer.iter().map(|g| 1.0 + t * g).collect();
    if let Some(&index) = sign_changes(&arg).iter().find(|&&j| j <= k) {
        return Err(Error::MovablePole { index });
    }
    let hh = nodes[1] - nodes[0];
    let l = |j: usize| arg[j].ln();
    let second = (l(k + 1) - 2.0 * l(k) + l(k - 1)) / (hh * hh);
    Ok(v0 - 2.0 * second)
}

/// Central-difference residual of the system at `x` (`x` must be an interior
/// node): `(ψ' - Rψ - Sφ, φ' - Vψ - Tφ)`.
pub fn system_residual_at(
    p: &ClassicalPotentials,
    u0: &Expr,
    d: f64,
    f: f64,
    x: f64,
) -> Result<(f64, f64)> {
    p.check_point(x)?;
    let (nodes, k) = aligned_nodes(x, p.step, 1);
    if k == 0 {
        return Err(Error::Precondition("central difference needs x > 0".into()));
    }
    let pair = pair_on(p, u0, d, f, &nodes)?;
    let hh = nodes[1] - nodes[0];
    let coef = |e: &Expr| e.eval(x, &p.params);
    let (r, s, t, v) = (coef(&p.r)?, coef(&p.s)?, coef(&p.t)?, coef(&p.v)?);
    let dpsi = (pair.psi[k + 1] - pair.psi[k - 1]) / (2.0 * hh);
    let dphi = (pair.phi[k + 1] - pair.phi[k - 1]) / (2.0 * hh);
    let (psi, phi) = (pair.psi[k], pair.phi[k]);
    Ok((dpsi - r * psi - s * phi, dphi - v * psi - t * phi))
}

/// Central-difference residual `u' - (V + Tu - Ru - Su²)` of `uᵗ` at `x`.
pub fn riccati_residual_at(u0: &Expr, p: &ClassicalPotentials, t: f64, x: f64) -> Result<f64> {
    p.check_point(x)?;
    let (nodes, k) = aligned_nodes(x, p.step, 1);
    if k == 0 {
        return Err(Error::Precondition("central difference needs x > 0".into()));
    }
    let hh = nodes[1] - nodes[0];
    let profile = backlund_on(u0, p, t, nodes)?;
    first_pole(&profile, k + 1)?;
    let u = &profile.values;
    let coef = |e: &Expr| e.eval(x, &p.params);
    let (r, s, tt, v) = (coef(&p.r)?, coef(&p.s)?, coef(&p.t)?, coef(&p.v)?);
    let du = (u[k + 1] - u[k - 1]) / (2.0 * hh);
    let uk = u[k];
    Ok(du - (v + tt * uk - r * uk - s * uk * uk))
}

/// `a²(e^{-2ax} - 6 + e^{2ax}) / (e^{-ax} + e^{ax})²`.
pub fn rosen_morse(a: f64, x: f64) -> f64 {
    let (em, ep) = ((-a * x).exp(), (a * x).exp());
    a * a * (em * em - 6.0 + ep * ep) / ((em + ep) * (em + ep))
}
