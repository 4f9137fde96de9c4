//! Run configuration: a small line-based `key = value` format with
//! `[section]` headers, blank lines, and `#` comments.
//!
//! Every key has a typed slot; unknown sections or keys are hard errors
//! that report the offending line number. Viscosity lists accept either
//! a comma-separated list or the range form `first:last:count@log`
//! (or `@linear`).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::evolution::Scheme;
use crate::expr::{parse as parse_expr, Expr};
use crate::geometry::FlowVariant;
use crate::tracker::DEFAULT_AXIS_TAU;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key '{key}' in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: bad value for '{key}': {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("missing required setting '{0}'")]
    Missing(&'static str),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Eigenvalue output ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigOrdering {
    MagnitudePhase,
    RealPartThreshold,
}

/// Which convergence study a `convergence` run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceKind {
    Time,
    Space,
    Eig,
}

#[derive(Debug, Clone)]
pub struct EvolutionSettings {
    pub dt: f64,
    pub t_final: Option<f64>,
    pub scheme: Scheme,
    pub forcing: Option<Expr>,
    pub snapshot_times: Vec<f64>,
    pub red_s_list: Vec<f64>,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        EvolutionSettings {
            dt: 0.1,
            t_final: None,
            scheme: Scheme::Etdrk4,
            forcing: None,
            snapshot_times: Vec::new(),
            red_s_list: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigSettings {
    pub m: Option<usize>,
    pub nu_list: Vec<f64>,
    pub ordering: EigOrdering,
    pub tau: f64,
    pub tol: f64,
}

impl Default for EigSettings {
    fn default() -> Self {
        EigSettings {
            m: None,
            nu_list: Vec::new(),
            ordering: EigOrdering::MagnitudePhase,
            tau: DEFAULT_AXIS_TAU,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowSettings {
    pub variant: FlowVariant,
    pub initial: Option<[f64; 4]>,
    pub dt: f64,
    pub t_final: Option<f64>,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            variant: FlowVariant::Hamiltonian,
            initial: None,
            dt: 1e-3,
            t_final: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    pub n: Option<usize>,
    pub r: Option<f64>,
    pub beta: Option<Expr>,
    pub omega0: f64,
    pub nu: f64,
    pub evolution: EvolutionSettings,
    pub eig: EigSettings,
    pub flow: FlowSettings,
    pub convergence: Option<ConvergenceKind>,
    pub manifold_resolution: usize,
    pub output_dir: Option<PathBuf>,
    pub emit_plots_script: bool,
}

impl Config {
    pub fn new() -> Self {
        Config {
            manifold_resolution: 256,
            ..Default::default()
        }
    }

    pub fn require_n(&self) -> Result<usize, ConfigError> {
        self.n.ok_or(ConfigError::Missing("grid.N"))
    }

    pub fn require_r(&self) -> Result<f64, ConfigError> {
        self.r.ok_or(ConfigError::Missing("operator.r"))
    }

    pub fn require_beta(&self) -> Result<&Expr, ConfigError> {
        self.beta.as_ref().ok_or(ConfigError::Missing("operator.beta"))
    }

    pub fn require_forcing(&self) -> Result<&Expr, ConfigError> {
        self.evolution
            .forcing
            .as_ref()
            .ok_or(ConfigError::Missing("evolution.forcing"))
    }

    /// Full effective configuration, defaults included, in the same
    /// format `parse` accepts — written next to outputs for
    /// reproducibility.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[grid]");
        if let Some(n) = self.n {
            let _ = writeln!(out, "N = {n}");
        }
        let _ = writeln!(out, "\n[operator]");
        if let Some(r) = self.r {
            let _ = writeln!(out, "r = {r:.16e}");
        }
        if let Some(beta) = &self.beta {
            let _ = writeln!(out, "beta = {beta}");
        }
        let _ = writeln!(out, "omega0 = {:.16e}", self.omega0);
        let _ = writeln!(out, "nu = {:.16e}", self.nu);

        let _ = writeln!(out, "\n[evolution]");
        let _ = writeln!(out, "dt = {:.16e}", self.evolution.dt);
        if let Some(t) = self.evolution.t_final {
            let _ = writeln!(out, "T = {t:.16e}");
        }
        let scheme = match self.evolution.scheme {
            Scheme::Rk4 => "rk4",
            Scheme::Etdrk4 => "etdrk4",
        };
        let _ = writeln!(out, "scheme = {scheme}");
        if let Some(f) = &self.evolution.forcing {
            let _ = writeln!(out, "forcing = {f}");
        }
        if !self.evolution.snapshot_times.is_empty() {
            let _ = writeln!(out, "snapshot_times = {}", join_floats(&self.evolution.snapshot_times));
        }
        if !self.evolution.red_s_list.is_empty() {
            let _ = writeln!(out, "red_s_list = {}", join_floats(&self.evolution.red_s_list));
        }

        let _ = writeln!(out, "\n[eig]");
        if let Some(m) = self.eig.m {
            let _ = writeln!(out, "m = {m}");
        }
        if !self.eig.nu_list.is_empty() {
            let _ = writeln!(out, "nu_list = {}", join_floats(&self.eig.nu_list));
        }
        let ordering = match self.eig.ordering {
            EigOrdering::MagnitudePhase => "magnitude_phase",
            EigOrdering::RealPartThreshold => "realpart_threshold",
        };
        let _ = writeln!(out, "ordering = {ordering}");
        let _ = writeln!(out, "tau = {:.16e}", self.eig.tau);
        let _ = writeln!(out, "tol = {:.16e}", self.eig.tol);

        let _ = writeln!(out, "\n[flow]");
        let variant = match self.flow.variant {
            FlowVariant::PrintedSystem => "printed_system",
            FlowVariant::Hamiltonian => "hamiltonian",
        };
        let _ = writeln!(out, "variant = {variant}");
        if let Some(p) = self.flow.initial {
            let _ = writeln!(out, "initial = {}", join_floats(&p));
        }
        let _ = writeln!(out, "dt = {:.16e}", self.flow.dt);
        if let Some(t) = self.flow.t_final {
            let _ = writeln!(out, "T = {t:.16e}");
        }

        if let Some(kind) = self.convergence {
            let name = match kind {
                ConvergenceKind::Time => "time",
                ConvergenceKind::Space => "space",
                ConvergenceKind::Eig => "eig",
            };
            let _ = writeln!(out, "\n[convergence]");
            let _ = writeln!(out, "kind = {name}");
        }

        let _ = writeln!(out, "\n[manifold]");
        let _ = writeln!(out, "resolution = {}", self.manifold_resolution);

        let _ = writeln!(out, "\n[output]");
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(out, "directory = {}", dir.display());
        }
        let _ = writeln!(out, "emit_plots_script = {}", self.emit_plots_script);
        out
    }
}

fn join_floats(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn bad(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let t = value.trim();
    // Allow simple multiples of pi, which appear in snapshot times.
    if let Some(rest) = t.strip_suffix("pi") {
        let factor = rest.trim_end_matches('*').trim();
        let f = if factor.is_empty() {
            1.0
        } else {
            factor
                .parse::<f64>()
                .map_err(|e| bad(line, key, format!("{e} in '{t}'")))?
        };
        return Ok(f * PI);
    }
    t.parse::<f64>()
        .map_err(|e| bad(line, key, format!("{e} in '{t}'")))
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|e| bad(line, key, format!("{e} in '{}'", value.trim())))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(bad(line, key, format!("expected true/false, got '{other}'"))),
    }
}

fn parse_float_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|p| parse_f64(line, key, p))
        .collect()
}

/// Viscosity lists: either comma-separated values or
/// `first:last:count@log|linear` (count values, endpoints included).
pub fn parse_value_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    let t = value.trim();
    if !t.contains(':') {
        return parse_float_list(line, key, t);
    }
    let (range, spacing) = match t.split_once('@') {
        Some((r, s)) => (r, s.trim()),
        None => (t, "linear"),
    };
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad(line, key, format!("expected first:last:count, got '{range}'")));
    }
    let first = parse_f64(line, key, parts[0])?;
    let last = parse_f64(line, key, parts[1])?;
    let count = parse_usize(line, key, parts[2])?;
    if count < 2 {
        return Err(bad(line, key, "range form needs count >= 2"));
    }
    let step = |i: usize| i as f64 / (count - 1) as f64;
    match spacing {
        "linear" => Ok((0..count).map(|i| first + (last - first) * step(i)).collect()),
        "log" => {
            if first <= 0.0 || last <= 0.0 {
                return Err(bad(line, key, "log spacing needs positive endpoints"));
            }
            let (lf, ll) = (first.ln(), last.ln());
            Ok((0..count).map(|i| (lf + (ll - lf) * step(i)).exp()).collect())
        }
        other => Err(bad(line, key, format!("unknown spacing '{other}' (use log or linear)"))),
    }
}

fn parse_expr_value(line: usize, key: &str, value: &str) -> Result<Expr, ConfigError> {
    parse_expr(value.trim()).map_err(|e| bad(line, key, e.to_string()))
}

/// Parses a configuration document. Unknown sections/keys are errors.
pub fn parse(text: &str) -> Result<Config, ConfigError> {
    let mut cfg = Config::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("unterminated section header '{line}'"),
            })?;
            let name = name.trim();
            match name {
                "grid" | "operator" | "evolution" | "eig" | "flow" | "convergence"
                | "manifold" | "output" => section = name.to_string(),
                other => {
                    return Err(ConfigError::UnknownSection {
                        line: line_no,
                        name: other.to_string(),
                    })
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let unknown = || ConfigError::UnknownKey {
            line: line_no,
            section: section.clone(),
            key: key.to_string(),
        };
        match (section.as_str(), key) {
            ("grid", "N") => cfg.n = Some(parse_usize(line_no, key, value)?),
            ("operator", "r") => cfg.r = Some(parse_f64(line_no, key, value)?),
            ("operator", "beta") => cfg.beta = Some(parse_expr_value(line_no, key, value)?),
            ("operator", "omega0") => cfg.omega0 = parse_f64(line_no, key, value)?,
            ("operator", "nu") => cfg.nu = parse_f64(line_no, key, value)?,
            ("evolution", "dt") => cfg.evolution.dt = parse_f64(line_no, key, value)?,
            ("evolution", "T") => cfg.evolution.t_final = Some(parse_f64(line_no, key, value)?),
            ("evolution", "scheme") => {
                cfg.evolution.scheme = match value {
                    "rk4" => Scheme::Rk4,
                    "etdrk4" => Scheme::Etdrk4,
                    other => {
                        return Err(bad(line_no, key, format!("unknown scheme '{other}'")))
                    }
                }
            }
            ("evolution", "forcing") => {
                cfg.evolution.forcing = Some(parse_expr_value(line_no, key, value)?)
            }
            ("evolution", "snapshot_times") => {
                cfg.evolution.snapshot_times = parse_float_list(line_no, key, value)?
            }
            ("evolution", "red_s_list") => {
                cfg.evolution.red_s_list = parse_float_list(line_no, key, value)?
            }
            ("eig", "m") => cfg.eig.m = Some(parse_usize(line_no, key, value)?),
            ("eig", "nu_list") => cfg.eig.nu_list = parse_value_list(line_no, key, value)?,
            ("eig", "ordering") => {
                cfg.eig.ordering = match value {
                    "magnitude_phase" => EigOrdering::MagnitudePhase,
                    "realpart_threshold" => EigOrdering::RealPartThreshold,
                    other => {
                        return Err(bad(line_no, key, format!("unknown ordering '{other}'")))
                    }
                }
            }
            ("eig", "tau") => cfg.eig.tau = parse_f64(line_no, key, value)?,
            ("eig", "tol") => cfg.eig.tol = parse_f64(line_no, key, value)?,
            ("flow", "variant") => {
                cfg.flow.variant = match value {
                    "printed_system" => FlowVariant::PrintedSystem,
                    "hamiltonian" => FlowVariant::Hamiltonian,
                    other => {
                        return Err(bad(line_no, key, format!("unknown variant '{other}'")))
                    }
                }
            }
            ("flow", "initial") => {
                let vals = parse_float_list(line_no, key, value)?;
                if vals.len() != 4 {
                    return Err(bad(
                        line_no,
                        key,
                        format!("expected x1, x2, xi1, xi2 (4 values), got {}", vals.len()),
                    ));
                }
                cfg.flow.initial = Some([vals[0], vals[1], vals[2], vals[3]]);
            }
            ("flow", "dt") => cfg.flow.dt = parse_f64(line_no, key, value)?,
            ("flow", "T") => cfg.flow.t_final = Some(parse_f64(line_no, key, value)?),
            ("convergence", "kind") => {
                cfg.convergence = Some(match value {
                    "time" => ConvergenceKind::Time,
                    "space" => ConvergenceKind::Space,
                    "eig" => ConvergenceKind::Eig,
                    other => return Err(bad(line_no, key, format!("unknown kind '{other}'"))),
                })
            }
            ("manifold", "resolution") => {
                cfg.manifold_resolution = parse_usize(line_no, key, value)?
            }
            ("output", "directory") => cfg.output_dir = Some(PathBuf::from(value)),
            ("output", "emit_plots_script") => {
                cfg.emit_plots_script = parse_bool(line_no, key, value)?
            }
            ("", _) => {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("key '{key}' appears before any [section] header"),
                })
            }
            _ => return Err(unknown()),
        }
    }
    Ok(cfg)
}

pub fn load(path: &std::path::Path) -> Result<Config, ConfigError> {
    parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# reference run
[grid]
N = 64

[operator]
r = 0.5
beta = cos(x1)
omega0 = 0.573
nu = 0.005

[evolution]
dt = 0.05
T = 100
scheme = rk4
forcing = 0.5*exp(-2*(x1^2+x2^2))
snapshot_times = 50, 100
red_s_list = -0.5, -1, -2

[eig]
m = 8
nu_list = 1e-2:3e-4:20@log
ordering = realpart_threshold
tau = 1e-3
tol = 1e-9

[flow]
variant = hamiltonian
initial = 1.0, 0.0, -0.96, 0.27
dt = 0.001
T = 50

[convergence]
kind = time

[manifold]
resolution = 512

[output]
directory = out/run1
emit_plots_script = true
";

    #[test]
    fn full_document_parses() {
        let cfg = parse(FULL).unwrap();
        assert_eq!(cfg.n, Some(64));
        assert_eq!(cfg.r, Some(0.5));
        assert_eq!(cfg.beta.as_ref().unwrap().to_string(), parse_expr("cos(x1)").unwrap().to_string());
        assert_eq!(cfg.omega0, 0.573);
        assert_eq!(cfg.nu, 0.005);
        assert_eq!(cfg.evolution.dt, 0.05);
        assert_eq!(cfg.evolution.t_final, Some(100.0));
        assert_eq!(cfg.evolution.scheme, Scheme::Rk4);
        assert_eq!(cfg.evolution.snapshot_times, vec![50.0, 100.0]);
        assert_eq!(cfg.evolution.red_s_list, vec![-0.5, -1.0, -2.0]);
        assert_eq!(cfg.eig.m, Some(8));
        assert_eq!(cfg.eig.nu_list.len(), 20);
        assert_eq!(cfg.eig.ordering, EigOrdering::RealPartThreshold);
        assert_eq!(cfg.eig.tau, 1e-3);
        assert_eq!(cfg.eig.tol, 1e-9);
        assert_eq!(cfg.flow.variant, FlowVariant::Hamiltonian);
        assert_eq!(cfg.flow.initial, Some([1.0, 0.0, -0.96, 0.27]));
        assert_eq!(cfg.convergence, Some(ConvergenceKind::Time));
        assert_eq!(cfg.manifold_resolution, 512);
        assert_eq!(cfg.output_dir, Some(PathBuf::from("out/run1")));
        assert!(cfg.emit_plots_script);
    }

    #[test]
    fn defaults_apply() {
        let cfg = parse("[grid]\nN = 32\n").unwrap();
        assert_eq!(cfg.evolution.dt, 0.1);
        assert_eq!(cfg.evolution.scheme, Scheme::Etdrk4);
        assert_eq!(cfg.eig.tau, DEFAULT_AXIS_TAU);
        assert_eq!(cfg.eig.tol, 1e-10);
        assert_eq!(cfg.eig.ordering, EigOrdering::MagnitudePhase);
        assert_eq!(cfg.flow.variant, FlowVariant::Hamiltonian);
        assert_eq!(cfg.manifold_resolution, 256);
        assert!(!cfg.emit_plots_script);
    }

    #[test]
    fn log_spaced_lists_hit_both_endpoints() {
        let vals = parse_value_list(1, "nu_list", "1e-2:3e-4:20@log").unwrap();
        assert_eq!(vals.len(), 20);
        assert!((vals[0] - 1e-2).abs() < 1e-15);
        assert!((vals[19] - 3e-4).abs() < 1e-15);
        // Constant ratio between neighbors.
        let ratio = vals[1] / vals[0];
        for w in vals.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        // Decreasing, as the sweep requires.
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn linear_spaced_lists() {
        let vals = parse_value_list(1, "nu_list", "0:1:5@linear").unwrap();
        assert_eq!(vals, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let vals = parse_value_list(1, "nu_list", "1e-2, 5e-3, 1e-3").unwrap();
        assert_eq!(vals, vec![1e-2, 5e-3, 1e-3]);
    }

    #[test]
    fn pi_shorthand_in_floats() {
        let cfg = parse("[evolution]\nsnapshot_times = pi, 2*pi, 0.5\n").unwrap();
        assert_eq!(cfg.evolution.snapshot_times, vec![PI, 2.0 * PI, 0.5]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("[grid]\nN = 32\nM = 3\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, section, key } => {
                assert_eq!((line, section.as_str(), key.as_str()), (3, "grid", "M"));
            }
            other => panic!("unexpected error {other}"),
        }
        let err = parse("[gird]\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { line: 1, .. }));
        let err = parse("[grid]\nN 32\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
        let err = parse("[grid]\nN = x\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }));
        let err = parse("N = 32\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = parse(FULL).unwrap();
        let text = cfg.resolved_text();
        let again = parse(&text).unwrap();
        assert_eq!(again.n, cfg.n);
        assert_eq!(again.r, cfg.r);
        assert_eq!(again.omega0, cfg.omega0);
        assert_eq!(again.evolution.dt, cfg.evolution.dt);
        assert_eq!(again.evolution.scheme, cfg.evolution.scheme);
        assert_eq!(again.eig.nu_list, cfg.eig.nu_list);
        assert_eq!(again.eig.tau, cfg.eig.tau);
        assert_eq!(again.flow.initial, cfg.flow.initial);
        assert_eq!(again.convergence, cfg.convergence);
        assert_eq!(again.manifold_resolution, cfg.manifold_resolution);
        assert_eq!(
            again.beta.as_ref().unwrap().to_string(),
            cfg.beta.as_ref().unwrap().to_string()
        );
    }

    #[test]
    fn missing_required_keys_are_reported() {
        let cfg = parse("[grid]\nN = 16\n").unwrap();
        assert!(matches!(cfg.require_r(), Err(ConfigError::Missing("operator.r"))));
        assert!(cfg.require_n().is_ok());
    }
}
