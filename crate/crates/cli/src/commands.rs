//! The three subcommands. Each returns its output plus an optional failure
//! message; the output is written even when a check fails.

use std::ops::Range;

use qdarboux::backlund::{
    apply_chain, companion_potential, cross_ratio, general_solution, parameter_cross_ratio,
    plus_profile, plus_transform, DeformationChain, SeedSolution, SEED_TOLERANCE,
};
use qdarboux::classic::{classical_backlund_profile, ClassicalPotentials};
use qdarboux::darboux::{riccati_apply_plus, riccati_minus, riccati_plus};
use qdarboux::exprdsl::{sample, Expr, Params};
use qdarboux::linsys::{closed_form_v0_all, propagate, PotentialQuad};
use qdarboux::{LatticeFn, QGrid};
use serde_json::{json, Value};

use crate::config::{Command, Job, Transform};
use crate::error::CliError;
use crate::table::{finite_json, Cell, Table};

/// Residual tolerance of the verification checks other than seed validation.
pub const CHECK_TOLERANCE: f64 = 1e-8;

/// Orbit parameters used by `verify` when the job supplies fewer than four.
const DEFAULT_ORBIT: [f64; 4] = [0.1, 0.2, 0.4, 0.8];

pub enum Output {
    Table(Table),
    Report(Value),
}

pub struct Outcome {
    pub output: Output,
    /// Set when a tolerance or verification check failed.
    pub failure: Option<String>,
}

pub fn run(job: &Job) -> Result<Outcome, CliError> {
    match job.command {
        Command::SolveLinear => solve_linear(job),
        Command::Backlund if job.classic.is_some() => classic_backlund(job),
        Command::Backlund => backlund(job),
        Command::Verify => verify(job),
    }
}

fn lattice(job: &Job) -> Result<QGrid, CliError> {
    job.grid.ok_or_else(|| {
        CliError::Config("classic mode only supports the backlund command".into())
    })
}

fn quad(job: &Job, grid: QGrid) -> Result<PotentialQuad, CliError> {
    let p = &job.potentials;
    let s = |e: &Expr| sample(e, grid, &job.params);
    Ok(PotentialQuad::new(s(&p.r)?, s(&p.s)?, s(&p.t)?, s(&p.v)?)?)
}

fn seed_expr(job: &Job) -> Result<&Expr, CliError> {
    job.seed
        .as_ref()
        .ok_or_else(|| CliError::Config("a seed expression is required".into()))
}

fn grid_json(grid: &QGrid) -> Value {
    json!({ "base": grid.base(), "q": grid.q(), "depth": grid.depth() })
}

fn max_over(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

/// Applies the job tolerance to the reported worst residual.
fn tolerance_failure(job: &Job, what: &str, worst: f64) -> Option<String> {
    job.tolerance
        .filter(|&tol| !(worst <= tol))
        .map(|tol| format!("{what} {worst:e} exceeds tolerance {tol:e}"))
}

fn solve_linear(job: &Job) -> Result<Outcome, CliError> {
    let grid = lattice(job)?;
    let p = quad(job, grid)?;
    let [psi0, phi0] = job.initial.unwrap_or([1.0, 0.0]);
    let sol = propagate(&p, (psi0, phi0))?;
    let n = grid.depth();
    // the closed form is an oracle; when its tail does not converge the
    // table is still emitted and the reason is reported in the summary
    let mut oracle_note = None;
    let closed = if p.v.values().iter().all(|&v| v == 0.0) {
        match closed_form_v0_all(&p) {
            Ok(m) => Some(m),
            Err(e) => {
                eprintln!("qdarboux: closed form unavailable: {e}");
                oracle_note = Some(e.to_string());
                None
            }
        }
    } else {
        None
    };

    let mut columns = vec!["index", "x", "psi", "phi", "u", "res_psi", "res_phi", "resolved"];
    if closed.is_some() {
        columns.push("closed_form_gap");
    }
    let mut table = Table::new(columns.into_iter().map(String::from).collect());
    // Λ(x_i; q)∞ carries the state at x_i to the origin proxy
    let bottom = sol.at(n);
    let mut worst_gap = 0.0f64;
    let resolved = grid.resolved_interior();
    for i in 0..=n {
        let (psi, phi) = sol.at(i);
        let u = (psi != 0.0).then(|| phi / psi);
        let res = if i < n { Some(sol.residual(&p, i)?) } else { None };
        let mut row = vec![
            Cell::Int(i),
            Cell::Num(grid.point(i)),
            Cell::Num(psi),
            Cell::Num(phi),
            Cell::opt(u),
            Cell::opt(res.map(|r| r.0)),
            Cell::opt(res.map(|r| r.1)),
            Cell::Flag(resolved.contains(&i)),
        ];
        if let Some(m) = &closed {
            let (a, b) = m[i].apply((psi, phi));
            let gap = (a - bottom.0).abs().max((b - bottom.1).abs());
            worst_gap = worst_gap.max(gap);
            row.push(Cell::Num(gap));
        }
        table.push(row);
    }

    let worst = sol.max_residual(&p, grid.resolved_interior())?;
    table.note("command", json!("solve-linear"));
    table.note("grid", grid_json(&grid));
    table.note("initial", json!([psi0, phi0]));
    table.note("max_residual", finite_json(worst));
    if closed.is_some() {
        table.note("max_closed_form_gap", finite_json(worst_gap));
    }
    if let Some(note) = oracle_note {
        table.note("closed_form_unavailable", json!(note));
    }
    table.thin(job.stride);
    let failure = tolerance_failure(job, "max residual", worst);
    Ok(Outcome {
        output: Output::Table(table),
        failure,
    })
}

/// One transformed solution on the output nodes.
struct Member {
    u: Vec<f64>,
    v_after: Vec<Option<f64>>,
    residual: Vec<Option<f64>>,
    poles: Vec<usize>,
}

/// Seed data and transformed solutions sharing the same nodes.
struct Orbit {
    x: Vec<f64>,
    u0: Vec<f64>,
    v_before: Vec<f64>,
    members: Vec<Member>,
    /// Rows whose residuals are above the rounding floor; only these enter
    /// the summary maximum.
    summary_rows: Range<usize>,
}

impl Member {
    fn near_pole(&self, i: usize) -> bool {
        self.poles
            .iter()
            .any(|&p| i == p || i == p + 1 || i + 1 == p)
    }
}

fn padded(f: &LatticeFn, len: usize) -> Vec<Option<f64>> {
    (0..len).map(|i| f.values().get(i).copied()).collect()
}

fn lattice_member(
    seed: &SeedSolution,
    transform: Transform,
    ts: &[f64],
) -> Result<Member, CliError> {
    let (u0, p) = (seed.u0(), seed.potentials());
    let len = u0.len();
    let (u, poles) = match transform {
        Transform::Plus => {
            let pr = plus_profile(u0, p, ts[0])?;
            (pr.u, pr.poles)
        }
        Transform::Minus => {
            let pr = plus_profile(&u0.neg(), p, ts[0])?;
            (pr.u.neg(), pr.poles)
        }
        Transform::Chain => (apply_chain(u0, p, ts)?, Vec::new()),
    };
    let v_after = riccati_plus(&u, p)?;
    let residual = match transform {
        Transform::Plus => v_after.zip_with(&p.v.truncate(v_after.grid().depth())?, |a, v| a - v)?,
        Transform::Minus => riccati_minus(&u, p)?.sub(&riccati_minus(u0, p)?)?,
        Transform::Chain => {
            let chain = DeformationChain::new(seed.clone(), ts.to_vec());
            riccati_minus(&u, p)?.sub(&companion_potential(&chain)?)?
        }
    };
    Ok(Member {
        u: u.into_values(),
        v_after: padded(&v_after, len),
        residual: padded(&residual, len),
        poles,
    })
}

fn backlund(job: &Job) -> Result<Outcome, CliError> {
    let grid = lattice(job)?;
    let p = quad(job, grid)?;
    let u0 = sample(seed_expr(job)?, grid, &job.params)?;
    if job.ts.is_empty() {
        return Err(CliError::Config("backlund needs at least one t".into()));
    }
    let seed = SeedSolution::new(u0, p)?;
    let members = match job.transform {
        Transform::Chain => vec![lattice_member(&seed, Transform::Chain, &job.ts)?],
        tr => job
            .ts
            .iter()
            .map(|&t| lattice_member(&seed, tr, &[t]))
            .collect::<Result<_, _>>()?,
    };
    let orbit = Orbit {
        x: grid.points(),
        u0: seed.u0().values().to_vec(),
        v_before: seed.potentials().v.values().to_vec(),
        members,
        summary_rows: grid.resolved_interior(),
    };
    let mut table = orbit_table(job, &orbit)?;
    table.note("grid", grid_json(&grid));
    finish_orbit(job, table)
}

fn classic_backlund(job: &Job) -> Result<Outcome, CliError> {
    let (step, x_max) = job.classic.expect("classic mode");
    if job.transform != Transform::Plus {
        return Err(CliError::Config(
            "classic mode supports only the plus transform".into(),
        ));
    }
    if job.ts.is_empty() {
        return Err(CliError::Config("backlund needs at least one t".into()));
    }
    let e = &job.potentials;
    let cp = ClassicalPotentials::new(
        [e.r.clone(), e.s.clone(), e.t.clone(), e.v.clone()],
        job.params.clone(),
        step,
        x_max,
    )?;
    let u0_expr = seed_expr(job)?;
    let mut x = Vec::new();
    let mut members = Vec::new();
    for &t in &job.ts {
        let profile = classical_backlund_profile(u0_expr, &cp, t, x_max)?;
        let residual = classical_residuals(&cp, &profile.x, &profile.values)?;
        x = profile.x;
        members.push(Member {
            v_after: vec![None; x.len()],
            u: profile.values,
            residual,
            poles: profile.poles,
        });
    }
    let eval = |e: &Expr| eval_nodes(e, &x, &cp.params);
    let orbit = Orbit {
        u0: eval(u0_expr)?,
        v_before: eval(&cp.v)?,
        summary_rows: 0..x.len(),
        x,
        members,
    };
    let mut table = orbit_table(job, &orbit)?;
    table.note("classic", json!({ "step": step, "x_max": x_max }));
    finish_orbit(job, table)
}

fn eval_nodes(e: &Expr, x: &[f64], params: &Params) -> Result<Vec<f64>, CliError> {
    x.iter()
        .enumerate()
        .map(|(index, &x)| {
            e.eval(x, params)
                .map_err(|source| CliError::Numerical(qdarboux::Error::Sample { index, source }))
        })
        .collect()
}

/// Central-difference residual `u' - (V + Tu - Ru - Su²)` at nodes with two
/// equally spaced neighbours.
fn classical_residuals(
    cp: &ClassicalPotentials,
    x: &[f64],
    u: &[f64],
) -> Result<Vec<Option<f64>>, CliError> {
    let coef = |e: &Expr| eval_nodes(e, x, &cp.params);
    let (r, s, t, v) = (coef(&cp.r)?, coef(&cp.s)?, coef(&cp.t)?, coef(&cp.v)?);
    Ok((0..x.len())
        .map(|k| {
            if k == 0 || k + 1 >= x.len() {
                return None;
            }
            let (hl, hr) = (x[k] - x[k - 1], x[k + 1] - x[k]);
            if (hl - hr).abs() > 1e-9 * hl {
                return None;
            }
            let du = (u[k + 1] - u[k - 1]) / (hl + hr);
            Some(du - (v[k] + t[k] * u[k] - r[k] * u[k] - s[k] * u[k] * u[k]))
        })
        .collect())
}

fn orbit_table(job: &Job, orbit: &Orbit) -> Result<Table, CliError> {
    let single = orbit.members.len() == 1;
    let quartet = job.transform != Transform::Chain && orbit.members.len() == 4;
    let target = if quartet {
        let ts: [f64; 4] = job.ts[..4].try_into().expect("four parameters");
        Some(parameter_cross_ratio(ts).map_err(|e| CliError::Config(e.to_string()))?)
    } else {
        None
    };

    let mut columns: Vec<String> = vec!["index".into(), "x".into(), "u0".into()];
    if single {
        columns.extend(["u", "v_before", "v_after", "residual", "resolved", "pole"].map(String::from));
    } else {
        columns.extend((1..=orbit.members.len()).map(|k| format!("u_{k}")));
        columns.extend(["v_before", "max_residual", "resolved", "pole"].map(String::from));
    }
    if quartet {
        columns.extend(["cross_ratio", "target"].map(String::from));
    }

    let mut table = Table::new(columns);
    let mut worst = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for i in 0..orbit.x.len() {
        let pole = orbit.members.iter().any(|m| m.poles.contains(&i));
        let near = orbit.members.iter().any(|m| m.near_pole(i));
        let res = orbit
            .members
            .iter()
            .map(|m| m.residual[i])
            .collect::<Option<Vec<f64>>>();
        let res_abs = res.as_ref().map(|r| max_over(r.iter().copied()));
        if let Some(r) = res_abs {
            if orbit.summary_rows.contains(&i) && !near {
                worst = worst.max(r);
            }
        }

        let resolved = Cell::Flag(orbit.summary_rows.contains(&i));
        let mut row = vec![Cell::Int(i), Cell::Num(orbit.x[i]), Cell::Num(orbit.u0[i])];
        if single {
            let m = &orbit.members[0];
            row.extend([
                Cell::Num(m.u[i]),
                Cell::Num(orbit.v_before[i]),
                Cell::opt(m.v_after[i]),
                Cell::opt(m.residual[i]),
                resolved,
                Cell::Flag(pole),
            ]);
        } else {
            row.extend(orbit.members.iter().map(|m| Cell::Num(m.u[i])));
            row.extend([
                Cell::Num(orbit.v_before[i]),
                Cell::opt(res_abs),
                resolved,
                Cell::Flag(pole),
            ]);
        }
        if let Some(target) = target {
            let values = [0, 1, 2, 3].map(|k| orbit.members[k].u[i]);
            let ratio = cross_ratio(values, i).ok();
            if let Some(r) = ratio {
                if !near {
                    worst_ratio = worst_ratio.max((r - target).abs());
                }
            }
            row.extend([Cell::opt(ratio), Cell::Num(target)]);
        }
        table.push(row);
    }

    let poles: Vec<Value> = orbit
        .members
        .iter()
        .map(|m| json!(m.poles))
        .collect();
    table.note("command", json!("backlund"));
    table.note("transform", json!(format!("{:?}", job.transform).to_lowercase()));
    table.note("t", json!(job.ts));
    table.note("poles", Value::Array(poles));
    table.note("max_residual", finite_json(worst));
    if let Some(target) = target {
        table.note("cross_ratio_target", finite_json(target));
        table.note("max_cross_ratio_gap", finite_json(worst_ratio));
    }
    Ok(table)
}

fn finish_orbit(job: &Job, mut table: Table) -> Result<Outcome, CliError> {
    let worst = table.summary["max_residual"].as_f64().unwrap_or(f64::INFINITY);
    table.thin(job.stride);
    let failure = tolerance_failure(job, "max residual", worst);
    Ok(Outcome {
        output: Output::Table(table),
        failure,
    })
}

/// Result of one verification check.
struct Check {
    name: &'static str,
    tolerance: f64,
    result: Option<Result<f64, String>>,
}

impl Check {
    fn run(name: &'static str, tolerance: f64, f: impl FnOnce() -> Result<f64, qdarboux::Error>) -> Self {
        Self {
            name,
            tolerance,
            result: Some(f().map_err(|e| e.to_string())),
        }
    }

    fn skipped(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            result: None,
        }
    }

    fn passed(&self) -> bool {
        matches!(self.result, Some(Ok(r)) if r <= self.tolerance)
    }

    fn to_json(&self) -> Value {
        let (status, max_residual, detail) = match &self.result {
            None => ("skipped", Value::Null, Some("seed validation failed".to_string())),
            Some(Ok(r)) => (
                if self.passed() { "pass" } else { "fail" },
                finite_json(*r),
                None,
            ),
            Some(Err(e)) => ("fail", Value::Null, Some(e.clone())),
        };
        let mut v = json!({
            "name": self.name,
            "status": status,
            "passed": self.passed(),
            "max_residual": max_residual,
            "tolerance": self.tolerance,
        });
        if let Some(d) = detail {
            v["detail"] = json!(d);
        }
        v
    }
}

fn sup_gap(a: &LatticeFn, b: &LatticeFn, range: Range<usize>) -> Result<f64, qdarboux::Error> {
    a.same_grid(b)?;
    Ok(range.map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))
}

fn verify(job: &Job) -> Result<Outcome, CliError> {
    let grid = lattice(job)?;
    let p = quad(job, grid)?;
    let u0 = sample(seed_expr(job)?, grid, &job.params)?;
    let seed_tol = job.tolerance.unwrap_or(SEED_TOLERANCE);
    let tol = job.tolerance.unwrap_or(CHECK_TOLERANCE);
    let interior = grid.resolved_interior();
    let ts: Vec<f64> = if job.ts.is_empty() {
        DEFAULT_ORBIT.to_vec()
    } else {
        job.ts.clone()
    };

    let seed_check = Check::run("seed_validation", seed_tol, || {
        let mut worst = 0.0f64;
        for i in interior.clone() {
            let v = p.v[i];
            let r = (riccati_apply_plus(&u0, &p, i)? - v).abs() / v.abs().max(1.0);
            worst = worst.max(r);
        }
        Ok(worst)
    });
    let names = [
        "auto_backlund",
        "group_law",
        "cross_ratio",
        "minus_consistency",
        "general_solution",
    ];
    let mut checks = vec![];
    let seed_ok = seed_check.passed();
    checks.push(seed_check);
    if !seed_ok {
        checks.extend(names.map(|n| Check::skipped(n, tol)));
    } else {
        let seed = SeedSolution::new(u0, p.clone())?;
        let (u0, p) = (seed.u0(), seed.potentials());
        checks.push(Check::run(names[0], tol, || {
            let mut worst = 0.0f64;
            for &t in &ts {
                let u = plus_transform(u0, p, t)?;
                for i in interior.clone() {
                    worst = worst.max((riccati_apply_plus(&u, p, i)? - p.v[i]).abs());
                }
            }
            Ok(worst)
        }));
        checks.push(Check::run(names[1], tol, || {
            let (t1, t2) = (ts[0], *ts.get(1).unwrap_or(&ts[0]));
            let composed = plus_transform(&plus_transform(u0, p, t2)?, p, t1)?;
            let direct = plus_transform(u0, p, t1 + t2)?;
            sup_gap(&composed, &direct, 0..grid.len())
        }));
        checks.push(Check::run(names[2], tol, || {
            let four: [f64; 4] = if ts.len() >= 4 {
                ts[..4].try_into().expect("four parameters")
            } else {
                DEFAULT_ORBIT
            };
            let target = parameter_cross_ratio(four)?;
            let orbit = four
                .iter()
                .map(|&t| plus_transform(u0, p, t))
                .collect::<Result<Vec<_>, _>>()?;
            let mut worst = 0.0f64;
            for i in 0..grid.len() {
                let values = [0, 1, 2, 3].map(|k| orbit[k][i]);
                worst = worst.max((cross_ratio(values, i)? - target).abs());
            }
            Ok(worst)
        }));
        checks.push(Check::run(names[3], tol, || {
            let w = riccati_minus(u0, p)?;
            let mut worst = 0.0f64;
            for &t in &ts {
                let u = plus_transform(&u0.neg(), p, t)?.neg();
                let gap = riccati_minus(&u, p)?;
                worst = worst.max(sup_gap(&gap, &w, interior.clone())?);
            }
            Ok(worst)
        }));
        checks.push(Check::run(names[4], tol, || {
            let sol = general_solution(&seed, 1.0, 0.5)?;
            sol.max_residual(p, interior.clone())
        }));
    }

    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.result.is_some() && !c.passed())
        .map(|c| c.name)
        .collect();
    let all_passed = checks.iter().all(Check::passed);
    let report = json!({
        "command": "verify",
        "grid": grid_json(&grid),
        "t": ts,
        "checks": checks.iter().map(Check::to_json).collect::<Vec<_>>(),
        "passed": all_passed,
    });
    Ok(Outcome {
        output: Output::Report(report),
        failure: (!all_passed).then(|| format!("failed checks: {}", failed.join(", "))),
    })
}
