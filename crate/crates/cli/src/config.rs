//! Job description: a JSON file merged with command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use qdarboux::exprdsl::{parse, Expr, Params};
use qdarboux::QGrid;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveLinear,
    Backlund,
    Verify,
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Command::SolveLinear => "solve-linear",
            Command::Backlund => "backlund",
            Command::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Plus,
    Minus,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_base")]
    pub base: f64,
    pub q: Option<f64>,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_base() -> f64 {
    1.0
}

fn default_depth() -> usize {
    qdarboux::qlattice::DEFAULT_DEPTH
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(rename = "R", alias = "r", default = "zero")]
    pub r: String,
    #[serde(rename = "S", alias = "s", default = "one")]
    pub s: String,
    #[serde(rename = "T", alias = "t", default = "zero")]
    pub t: String,
    #[serde(rename = "V", alias = "v", default = "zero")]
    pub v: String,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            r: zero(),
            s: one(),
            t: zero(),
            v: zero(),
        }
    }
}

fn zero() -> String {
    "0".into()
}

fn one() -> String {
    "1".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TSpec {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicSpec {
    #[serde(default = "default_step")]
    pub step: f64,
    pub x_max: Option<f64>,
}

fn default_step() -> f64 {
    1e-3
}

/// The file format, every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    pub command: Option<Command>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub potentials: PotentialSpec,
    pub seed: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub initial: Option<[f64; 2]>,
    pub t: Option<TSpec>,
    #[serde(default)]
    pub transform: Transform,
    pub format: Option<Format>,
    pub tolerance: Option<f64>,
    pub classic: Option<ClassicSpec>,
    /// Emit every `stride`-th lattice row (the last row is always kept).
    pub stride: Option<usize>,
}

impl JobFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub grid_base: Option<f64>,
    pub grid_q: Option<f64>,
    pub grid_depth: Option<usize>,
    pub t: Vec<f64>,
    pub format: Option<Format>,
    pub tolerance: Option<f64>,
    pub classic: bool,
    pub stride: Option<usize>,
}

/// Parsed coefficient expressions in the order R, S, T, V.
#[derive(Debug, Clone)]
pub struct Potentials {
    pub r: Expr,
    pub s: Expr,
    pub t: Expr,
    pub v: Expr,
}

/// A fully resolved, validated job.
#[derive(Debug, Clone)]
pub struct Job {
    pub command: Command,
    /// `None` in classic mode.
    pub grid: Option<QGrid>,
    pub potentials: Potentials,
    pub seed: Option<Expr>,
    pub params: Params,
    pub initial: Option<[f64; 2]>,
    pub ts: Vec<f64>,
    pub transform: Transform,
    pub format: Format,
    pub tolerance: Option<f64>,
    /// Quadrature step and span when running the differential formulas.
    pub classic: Option<(f64, f64)>,
    pub stride: usize,
}

fn parse_named(name: &str, src: &str) -> Result<Expr, CliError> {
    parse(src).map_err(|e| CliError::Config(format!("{name}: {e} in `{src}`")))
}

impl Job {
    pub fn resolve(file: JobFile, over: Overrides) -> Result<Self, CliError> {
        let command = match (over.command, file.command) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Config(format!(
                    "command `{a}` on the command line conflicts with `{b}` in the config"
                )))
            }
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => {
                return Err(CliError::Config(
                    "no command given (solve-linear, backlund or verify)".into(),
                ))
            }
        };

        let spec = file.grid.clone();
        let base = over
            .grid_base
            .or(spec.as_ref().map(|g| g.base))
            .unwrap_or_else(default_base);
        let q = over.grid_q.or(spec.as_ref().and_then(|g| g.q));
        let depth = over
            .grid_depth
            .or(spec.as_ref().map(|g| g.depth))
            .unwrap_or_else(default_depth);

        let classic_mode = over.classic || file.classic.is_some();
        let grid = if classic_mode {
            None
        } else {
            let q = q.ok_or_else(|| CliError::Config("grid.q is required".into()))?;
            if q == 1.0 {
                return Err(CliError::Config(
                    "q = 1 is the differential limit; rerun with --classic to use the quadrature formulas"
                        .into(),
                ));
            }
            Some(QGrid::new(base, q, depth).map_err(|e| CliError::Config(e.to_string()))?)
        };
        let classic = classic_mode.then(|| {
            let spec = file.classic.unwrap_or(ClassicSpec {
                step: default_step(),
                x_max: None,
            });
            (spec.step, spec.x_max.unwrap_or(base))
        });

        let mut params: Params = file.params.clone();
        if let Some(q) = q {
            params.entry("q".into()).or_insert(q);
        }

        let p = &file.potentials;
        let potentials = Potentials {
            r: parse_named("R", &p.r)?,
            s: parse_named("S", &p.s)?,
            t: parse_named("T", &p.t)?,
            v: parse_named("V", &p.v)?,
        };
        let seed = file
            .seed
            .as_deref()
            .map(|src| parse_named("seed", src))
            .transpose()?;

        let mut exprs = vec![
            ("R", &potentials.r),
            ("S", &potentials.s),
            ("T", &potentials.t),
            ("V", &potentials.v),
        ];
        if let Some(s) = &seed {
            exprs.push(("seed", s));
        }
        for (name, e) in exprs {
            let missing: Vec<String> = e
                .free_params()
                .into_iter()
                .filter(|k| !params.contains_key(k))
                .collect();
            if !missing.is_empty() {
                return Err(CliError::Config(format!(
                    "{name}: unbound parameter(s) {}",
                    missing.join(", ")
                )));
            }
        }

        let ts = if !over.t.is_empty() {
            over.t
        } else {
            match file.t {
                Some(TSpec::One(t)) => vec![t],
                Some(TSpec::Many(ts)) => ts,
                None => Vec::new(),
            }
        };
        if let Some(bad) = ts.iter().find(|t| !t.is_finite()) {
            return Err(CliError::Config(format!("t = {bad} is not finite")));
        }
        let tolerance = over.tolerance.or(file.tolerance);
        if let Some(tol) = tolerance {
            if !(tol > 0.0) {
                return Err(CliError::Config(format!("tolerance must be positive, got {tol}")));
            }
        }

        let stride = over.stride.or(file.stride).unwrap_or(1);
        if stride == 0 {
            return Err(CliError::Config("stride must be at least 1".into()));
        }

        Ok(Self {
            command,
            grid,
            potentials,
            seed,
            params,
            initial: file.initial,
            ts,
            transform: file.transform,
            format: over.format.or(file.format).unwrap_or_default(),
            tolerance,
            classic,
            stride,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(json: &str) -> JobFile {
        serde_json::from_str(json).unwrap()
    }

    fn resolve(json: &str, over: Overrides) -> Result<Job, CliError> {
        Job::resolve(file(json), over)
    }

    fn with_command(command: Command) -> Overrides {
        Overrides {
            command: Some(command),
            ..Overrides::default()
        }
    }

    #[test]
    fn q_is_bound_unless_given() {
        let job = resolve(r#"{"grid": {"q": 0.3}}"#, with_command(Command::Verify)).unwrap();
        assert_eq!(job.params["q"], 0.3);
        let job = resolve(
            r#"{"grid": {"q": 0.3}, "params": {"q": 7}}"#,
            with_command(Command::Verify),
        )
        .unwrap();
        assert_eq!(job.params["q"], 7.0);
    }

    #[test]
    fn t_accepts_number_or_list_and_flags_win() {
        let job = resolve(r#"{"grid": {"q": 0.5}, "t": 2}"#, with_command(Command::Backlund));
        assert_eq!(job.unwrap().ts, [2.0]);
        let job = resolve(r#"{"grid": {"q": 0.5}, "t": [1, -2]}"#, with_command(Command::Backlund));
        assert_eq!(job.unwrap().ts, [1.0, -2.0]);
        let over = Overrides {
            t: vec![5.0],
            ..with_command(Command::Backlund)
        };
        assert_eq!(resolve(r#"{"grid": {"q": 0.5}, "t": [1]}"#, over).unwrap().ts, [5.0]);
    }

    #[test]
    fn grid_flags_override_file() {
        let over = Overrides {
            grid_depth: Some(12),
            grid_base: Some(2.0),
            ..with_command(Command::SolveLinear)
        };
        let job = resolve(r#"{"grid": {"q": 0.5, "depth": 40}}"#, over).unwrap();
        let g = job.grid.unwrap();
        assert_eq!((g.base(), g.q(), g.depth()), (2.0, 0.5, 12));
    }

    #[test]
    fn missing_q_and_unknown_fields_are_rejected() {
        assert!(matches!(
            resolve("{}", with_command(Command::SolveLinear)),
            Err(CliError::Config(_))
        ));
        assert!(serde_json::from_str::<JobFile>(r#"{"grdi": {}}"#).is_err());
    }

    #[test]
    fn classic_mode_needs_no_q() {
        let over = Overrides {
            classic: true,
            ..with_command(Command::Backlund)
        };
        let job = resolve(r#"{"classic": {"step": 0.01, "x_max": 2}}"#, over).unwrap();
        assert!(job.grid.is_none());
        assert_eq!(job.classic, Some((0.01, 2.0)));
    }
}
