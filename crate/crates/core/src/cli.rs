//! Configuration files, subcommands and report emission.
//!
//! A run is described by a flat `key = value` file with sections
//! `[problem]`, `[grid]`, `[quad]`, `[picard]`, `[check]`, `[verify]`,
//! `[ergodic]` and `[output]`. Reports are `key=value` lines in a fixed
//! order; numbers carry full precision.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ini::{Ini, ParseOption};

use crate::expr::{Expression, ParseError};
use crate::funcspace::{fmt_full, Grid, GridFunction};
use crate::measure::{check_hypotheses, ergodic_mean, ErgodicVerdict, ErgodicityReport, Observable};
use crate::operator::{ProblemBuilder, ProblemSpec};
use crate::quadrature::{p1_p2_sup, QuadratureConfig};
use crate::solver::{
    check_thm1, check_thm2, estimate_lipschitz, picard_solve, ContractionReport, LipschitzFunction, PicardOptions,
    SampleBox, Theorem,
};
use crate::verify::{manufacture, paa_diagnostics, residual};
use crate::Error;

/// The worked example shipped with the crate.
pub const WORKED_EXAMPLE: &str = include_str!("../examples/worked_example.cfg");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONDITION: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;

const REQUIRED: [(&str, &str); 4] = [("problem", "a"), ("problem", "b"), ("problem", "f"), ("problem", "h")];

const KEYS: &[(&str, &[&str])] = &[
    ("problem", &["a", "b", "f", "h", "K", "K_decay", "beta", "rho", "p", "no_reflection"]),
    ("grid", &["T", "h"]),
    ("quad", &["abs_tol", "max_refinements", "initial_panels", "tail_decay_rate", "truncation_cap"]),
    ("picard", &["tol", "max_iter", "x0"]),
    (
        "check",
        &[
            "theorem",
            "p",
            "Lf",
            "Lh",
            "Lf_envelope",
            "Lh_envelope",
            "Lf_const",
            "Lh_const",
            "lipschitz_samples",
            "lipschitz_x",
            "seed",
            "z_grid",
            "radii",
        ],
    ),
    ("verify", &["eps", "window", "pre_tol", "recovery_tol", "residual_tol"]),
    ("ergodic", &["phi", "input"]),
    ("output", &["csv_path", "report_path", "residual_path"]),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("key {0} given more than once")]
    Duplicate(String),
    #[error("{field}: {source}")]
    Expression { field: String, source: ParseError },
    #[error("{field}: {msg}")]
    Value { field: String, msg: String },
    /// A well-formed value that violates a hypothesis.
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Invalid { .. } => EXIT_CONDITION,
            _ => EXIT_IO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremChoice {
    Auto,
    Thm1,
    Thm2,
}

#[derive(Debug, Clone)]
pub struct CheckSettings {
    pub theorem: TheoremChoice,
    pub p: f64,
    pub lf: Option<LipschitzFunction>,
    pub lh: Option<LipschitzFunction>,
    pub lf_const: Option<f64>,
    pub lh_const: Option<f64>,
    pub lipschitz_samples: usize,
    /// Half-width of the `x` range sampled when estimating Lipschitz constants.
    pub lipschitz_x: f64,
    pub seed: u64,
    pub z_grid: Vec<f64>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub eps: f64,
    pub window: (f64, f64),
    pub pre_tol: f64,
    pub recovery_tol: f64,
    pub residual_tol: f64,
}

#[derive(Debug, Clone)]
pub struct OutputSettings {
    pub csv_path: PathBuf,
    pub report_path: PathBuf,
    pub residual_path: PathBuf,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: Grid,
    pub quad: QuadratureConfig,
    pub picard: PicardOptions,
    pub x0: Expression,
    pub check: CheckSettings,
    pub verify: VerifySettings,
    pub phi: Option<Expression>,
    pub ergodic_input: Option<PathBuf>,
    pub output: OutputSettings,
}

struct Fields {
    ini: Ini,
}

impl Fields {
    fn raw(&mut self, section: &str, key: &str) -> Option<String> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(|s| s.trim().to_string())
    }

    fn expr(&mut self, section: &str, key: &str, allowed: &[&str]) -> Result<Option<Expression>, ConfigError> {
        let field = format!("{section}.{key}");
        let Some(src) = self.raw(section, key) else {
            return Ok(None);
        };
        let e = Expression::parse(&src).map_err(|source| ConfigError::Expression {
            field: field.clone(),
            source,
        })?;
        if let Some(bad) = e.free_vars().iter().find(|v| !allowed.contains(&v.as_str())) {
            return Err(ConfigError::Invalid {
                field,
                msg: format!("variable `{bad}` is not allowed here (allowed: {})", allowed.join(", ")),
            });
        }
        Ok(Some(e))
    }

    fn number(&mut self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        let field = format!("{section}.{key}");
        let Some(src) = self.raw(section, key) else {
            return Ok(None);
        };
        let e = Expression::parse(&src).map_err(|source| ConfigError::Expression {
            field: field.clone(),
            source,
        })?;
        if !e.free_vars().is_empty() {
            return Err(ConfigError::Value { field, msg: format!("`{src}` is not a constant") });
        }
        let v = e.eval_constant().map_err(|err| ConfigError::Value {
            field: field.clone(),
            msg: err.to_string(),
        })?;
        if v.is_finite() {
            Ok(Some(v))
        } else {
            Err(ConfigError::Value { field, msg: format!("not a finite number: {v}") })
        }
    }

    fn number_or(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.number(section, key)?.unwrap_or(default))
    }

    fn count(&mut self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| ConfigError::Value {
                field: format!("{section}.{key}"),
                msg: format!("expected a nonnegative integer, got `{s}`"),
            }),
        }
    }

    fn list(&mut self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let field = format!("{section}.{key}");
        let Some(src) = self.raw(section, key) else {
            return Ok(None);
        };
        src.split(',')
            .map(|item| {
                Expression::parse(item.trim())
                    .ok()
                    .filter(|e| e.free_vars().is_empty())
                    .and_then(|e| e.eval_constant().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ConfigError::Value {
                        field: field.clone(),
                        msg: format!("`{}` is not a number", item.trim()),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()
            .map(Some)
    }

    fn flag(&mut self, section: &str, key: &str) -> Result<bool, ConfigError> {
        match self.raw(section, key).as_deref() {
            None | Some("false") | Some("no") | Some("0") => Ok(false),
            Some("true") | Some("yes") | Some("1") => Ok(true),
            Some(other) => Err(ConfigError::Value {
                field: format!("{section}.{key}"),
                msg: format!("expected true or false, got `{other}`"),
            }),
        }
    }

    fn envelope(&mut self, key: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        match self.list("check", key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 && v[1] > 0.0 => Ok(Some((v[0], v[1]))),
            Some(_) => Err(ConfigError::Value {
                field: format!("check.{key}"),
                msg: "expected `bound, decay` with decay > 0".into(),
            }),
        }
    }
}

fn invalid(field: &str) -> impl Fn(Error) -> ConfigError + '_ {
    move |e| ConfigError::Invalid {
        field: field.to_string(),
        msg: e.to_string(),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let opt = ParseOption {
        enabled_quote: true,
        enabled_escape: false,
        ..ParseOption::default()
    };
    let ini = Ini::load_from_str_opt(text, opt).map_err(|e| ConfigError::Syntax {
        line: e.line + 1,
        col: e.col + 1,
        msg: e.msg.to_string(),
    })?;

    for (section, props) in ini.iter() {
        let Some(name) = section else {
            if let Some((k, _)) = props.iter().next() {
                return Err(ConfigError::UnknownKey(format!("{k} (outside any section)")));
            }
            continue;
        };
        let Some((_, allowed)) = KEYS.iter().find(|(s, _)| *s == name) else {
            return Err(ConfigError::UnknownSection(name.to_string()));
        };
        for (k, _) in props.iter() {
            if !allowed.contains(&k) {
                return Err(ConfigError::UnknownKey(format!("{name}.{k}")));
            }
            if props.get_all(k).count() > 1 {
                return Err(ConfigError::Duplicate(format!("{name}.{k}")));
            }
        }
    }
    let missing: Vec<String> = REQUIRED
        .iter()
        .filter(|(s, k)| ini.section(Some(*s)).and_then(|p| p.get(*k)).is_none())
        .map(|(s, k)| format!("{s}.{k}"))
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }

    let mut f = Fields { ini };
    const TXP: &[&str] = &["t", "x1", "x2", "p"];
    const TP: &[&str] = &["t", "p"];

    let a = f.number("problem", "a")?.expect("required");
    let b = f.number("problem", "b")?.expect("required");
    let p_delay = f.number_or("problem", "p", 0.0)?;
    let mut builder = ProblemBuilder::new(a, b);
    builder.f = f.expr("problem", "f", TXP)?.expect("required");
    builder.h = f.expr("problem", "h", TXP)?.expect("required");
    if let Some(k) = f.expr("problem", "K", &["s", "p"])? {
        builder.kernel = k;
    }
    builder.kernel_decay = f.number_or("problem", "K_decay", 1.0)?;
    if let Some(beta) = f.expr("problem", "beta", TP)? {
        builder.beta = beta;
    }
    if let Some(rho) = f.expr("problem", "rho", TP)? {
        builder.rho = rho;
    }
    builder.p_delay = p_delay;
    builder.allow_no_reflection = f.flag("problem", "no_reflection")?;
    let problem = builder.build().map_err(invalid("problem"))?;

    let grid = Grid::new(f.number_or("grid", "T", 40.0)?, f.number_or("grid", "h", 0.02)?).map_err(|e| {
        ConfigError::Invalid {
            field: "grid".into(),
            msg: e.to_string(),
        }
    })?;

    let d = QuadratureConfig::default();
    let quad = QuadratureConfig {
        abs_tol: f.number_or("quad", "abs_tol", d.abs_tol)?,
        max_refinements: f.count("quad", "max_refinements", d.max_refinements as usize)? as u32,
        initial_panels: f.count("quad", "initial_panels", d.initial_panels)?,
        tail_decay_rate: f.number_or("quad", "tail_decay_rate", d.tail_decay_rate)?,
        truncation_cap: f.number_or("quad", "truncation_cap", d.truncation_cap)?,
    };
    quad.validate().map_err(|e| ConfigError::Invalid {
        field: "quad".into(),
        msg: e.to_string(),
    })?;

    let pd = PicardOptions::default();
    let picard = PicardOptions {
        tol: f.number_or("picard", "tol", pd.tol)?,
        max_iter: f.count("picard", "max_iter", pd.max_iter)?,
        ..pd
    };
    if !(picard.tol > 0.0) || picard.max_iter == 0 {
        return Err(ConfigError::Invalid {
            field: "picard".into(),
            msg: "tol must be positive and max_iter at least 1".into(),
        });
    }
    let x0 = f.expr("picard", "x0", &["t"])?.unwrap_or_else(|| Expression::constant(0.0));

    let theorem = match f.raw("check", "theorem").as_deref() {
        None | Some("auto") => TheoremChoice::Auto,
        Some("thm1") => TheoremChoice::Thm1,
        Some("thm2") => TheoremChoice::Thm2,
        Some(other) => {
            return Err(ConfigError::Value {
                field: "check.theorem".into(),
                msg: format!("expected auto, thm1 or thm2, got `{other}`"),
            })
        }
    };
    let lf_env = f.envelope("Lf_envelope")?;
    let lh_env = f.envelope("Lh_envelope")?;
    let check = CheckSettings {
        theorem,
        p: f.number_or("check", "p", 2.0)?,
        lf: f.expr("check", "Lf", TP)?.map(|e| LipschitzFunction::new(e, lf_env)),
        lh: f.expr("check", "Lh", TP)?.map(|e| LipschitzFunction::new(e, lh_env)),
        lf_const: f.number("check", "Lf_const")?,
        lh_const: f.number("check", "Lh_const")?,
        lipschitz_samples: f.count("check", "lipschitz_samples", 2000)?,
        lipschitz_x: f.number_or("check", "lipschitz_x", 10.0)?,
        seed: f.count("check", "seed", 1)? as u64,
        z_grid: f.list("check", "z_grid")?.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0, 32.0]),
        radii: f.list("check", "radii")?.unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0]),
    };
    if check.lipschitz_samples < 1000 {
        return Err(ConfigError::Invalid {
            field: "check.lipschitz_samples".into(),
            msg: "at least 1000 samples are required".into(),
        });
    }
    if !(check.p > 1.0) {
        return Err(ConfigError::Invalid {
            field: "check.p".into(),
            msg: format!("p must exceed 1, got {}", check.p),
        });
    }

    let window = match f.list("verify", "window")? {
        None => (-10.0, 10.0),
        Some(v) if v.len() == 2 && v[0] < v[1] => (v[0], v[1]),
        Some(_) => {
            return Err(ConfigError::Value {
                field: "verify.window".into(),
                msg: "expected `lo, hi` with lo < hi".into(),
            })
        }
    };
    let verify = VerifySettings {
        eps: f.number_or("verify", "eps", 0.05)?,
        window,
        pre_tol: f.number_or("verify", "pre_tol", 1e-6)?,
        recovery_tol: f.number_or("verify", "recovery_tol", 1e-4)?,
        residual_tol: f.number_or("verify", "residual_tol", 1e-4)?,
    };

    let phi = f.expr("ergodic", "phi", &["t"])?;
    let ergodic_input = f.raw("ergodic", "input").map(PathBuf::from);
    let output = OutputSettings {
        csv_path: f.raw("output", "csv_path").unwrap_or_else(|| "solution.csv".into()).into(),
        report_path: f.raw("output", "report_path").unwrap_or_else(|| "report.txt".into()).into(),
        residual_path: f.raw("output", "residual_path").unwrap_or_else(|| "residual.csv".into()).into(),
    };

    Ok(RunConfig {
        problem,
        grid,
        quad,
        picard,
        x0,
        check,
        verify,
        phi,
        ergodic_input,
        output,
    })
}

/// Ordered `key=value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn put(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) {
        self.put(key, fmt_full(value));
    }

    pub fn nums(&mut self, key: impl Into<String>, values: &[f64]) {
        let joined: Vec<String> = values.iter().map(|v| fmt_full(*v)).collect();
        self.put(key, joined.join(","));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// Outcome of a subcommand: exit code plus the report written for it.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: Report,
}

/// Everything a subcommand needs besides the configuration.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub force: bool,
}

impl Context {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(c) => c.exit_code(),
            CliError::Run(Error::Io(_)) | CliError::Run(Error::Parse(_)) | CliError::Usage(_) => EXIT_IO,
            CliError::Run(Error::Grid(g)) if matches!(g, crate::GridError::Io(_) | crate::GridError::Csv { .. }) => EXIT_IO,
            CliError::Run(_) => EXIT_CONDITION,
        }
    }
}

fn put_contraction(r: &mut Report, prefix: &str, c: &ContractionReport) {
    match c.theorem {
        Theorem::ConstantLipschitz => {
            r.num(format!("{prefix}.lf"), c.lf);
            r.num(format!("{prefix}.lh"), c.lh);
            r.num(format!("{prefix}.c"), c.kernel_constant);
        }
        Theorem::LpLipschitz => {
            r.num(format!("{prefix}.p"), c.p.unwrap_or(f64::NAN));
            r.num(format!("{prefix}.q"), c.q.unwrap_or(f64::NAN));
            r.num(format!("{prefix}.lf_norm"), c.lf);
            r.num(format!("{prefix}.lh_norm"), c.lh);
            r.num(format!("{prefix}.lf_mu_norm"), c.lf_mu_norm.unwrap_or(f64::NAN));
            r.num(format!("{prefix}.k_qnorm"), c.kernel_constant);
        }
    }
    r.num(format!("{prefix}.lhs"), c.lhs);
    r.num(format!("{prefix}.rhs"), c.rhs);
    r.num(format!("{prefix}.factor"), c.factor);
    r.put(format!("{prefix}.verdict"), c.verdict);
}

/// Contraction reports for both theorems where the data allows, and the
/// one selected to gate the solver.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub thm1: ContractionReport,
    pub thm1_estimated: bool,
    pub thm2: Option<ContractionReport>,
    pub selected: ContractionReport,
}

pub fn run_contraction_checks(cfg: &RunConfig) -> Result<CheckResult, CliError> {
    let ps = &cfg.problem;
    let region = SampleBox {
        t: (-cfg.grid.half_width(), cfg.grid.half_width()),
        x: (-cfg.check.lipschitz_x, cfg.check.lipschitz_x),
        p: ps.p_delay(),
    };
    let estimate = |g: &Expression, seed: u64| -> Result<f64, Error> {
        if g.is_zero_literal() {
            Ok(0.0)
        } else {
            estimate_lipschitz(g, region, cfg.check.lipschitz_samples, seed)
        }
    };
    let kernel_active = !ps.kernel().is_zero() && !ps.h().is_zero();
    let mut estimated = false;
    let lf = match cfg.check.lf_const {
        Some(v) => v,
        None => {
            estimated = true;
            estimate(ps.f().expression(), cfg.check.seed)?
        }
    };
    let lh = match (cfg.check.lh_const, kernel_active) {
        (Some(v), _) => v,
        (None, false) => 0.0,
        (None, true) => {
            estimated = true;
            estimate(ps.h().expression(), cfg.check.seed + 1)?
        }
    };
    let thm1 = check_thm1(ps, lf, lh, &cfg.quad)?;

    let zero = || LipschitzFunction::new(Expression::constant(0.0), None);
    let lf_fn = match (&cfg.check.lf, ps.f().is_zero()) {
        (Some(l), _) => Some(l.clone()),
        (None, true) => Some(zero()),
        (None, false) => None,
    };
    let lh_fn = match (&cfg.check.lh, kernel_active) {
        (Some(l), _) => Some(l.clone()),
        (None, false) => Some(zero()),
        (None, true) => None,
    };
    let thm2 = match (lf_fn, lh_fn) {
        (Some(lf), Some(lh)) if cfg.check.lf.is_some() || cfg.check.lh.is_some() || cfg.check.theorem == TheoremChoice::Thm2 => {
            Some(check_thm2(ps, &lf, &lh, cfg.check.p, &cfg.quad)?)
        }
        _ => None,
    };
    let selected = match cfg.check.theorem {
        TheoremChoice::Thm1 => thm1.clone(),
        TheoremChoice::Thm2 => thm2
            .clone()
            .ok_or_else(|| CliError::Usage("check.theorem = thm2 needs check.Lf and check.Lh".into()))?,
        TheoremChoice::Auto => match &thm2 {
            Some(t2) if t2.verdict && (!thm1.verdict || t2.factor < thm1.factor) => t2.clone(),
            Some(t2) if !thm1.verdict => t2.clone(),
            _ => thm1.clone(),
        },
    };
    Ok(CheckResult {
        thm1,
        thm1_estimated: estimated,
        thm2,
        selected,
    })
}

fn put_problem(r: &mut Report, ps: &ProblemSpec, grid: &Grid) {
    r.num("problem.a", ps.a());
    r.num("problem.b", ps.b());
    r.put("problem.f", ps.f().expression());
    r.put("problem.h", ps.h().expression());
    match ps.kernel().expression() {
        Some(k) => r.put("problem.K", k),
        None => r.put("problem.K", "0"),
    }
    r.put("problem.beta", ps.beta().expression());
    r.put("problem.rho", ps.mu().rho());
    r.num("problem.p", ps.p_delay());
    r.num("problem.lambda", ps.lambda());
    r.num("problem.geom", ps.geometry_constant());
    r.put("problem.a_exceeds_b", ps.a_exceeds_b());
    r.num("grid.T", grid.half_width());
    r.num("grid.h", grid.step());
}

fn put_checks(r: &mut Report, c: &CheckResult) {
    put_contraction(r, "thm1", &c.thm1);
    r.put(
        "thm1.lipschitz_source",
        if c.thm1_estimated { "sampled lower bound" } else { "given" },
    );
    if let Some(t2) = &c.thm2 {
        put_contraction(r, "thm2", t2);
    }
    r.put("selected.theorem", c.selected.theorem);
    r.num("selected.factor", c.selected.factor);
    r.put("contraction", c.selected.describe());
}

pub fn cmd_check(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let ps = &cfg.problem;
    let mut r = Report::default();
    r.put("command", "check");
    put_problem(&mut r, ps, &cfg.grid);
    let checks = run_contraction_checks(cfg)?;
    put_checks(&mut r, &checks);

    let hyp = check_hypotheses(ps.mu(), ps.beta(), &cfg.check.radii, &cfg.quad)?;
    r.num("m1.ratio", hyp.m1_ratio);
    r.put("m1.verdict", hyp.m1_verdict);
    match hyp.m2_pair {
        Some((m, n)) => {
            r.num("m2.m", m);
            r.num("m2.n", n);
        }
        None => r.put("m2.pair", "none"),
    }
    r.put("m2.verdict", hyp.m2_verdict);
    match hyp.h0_translation {
        Some(c) => r.num("h0.translation", c),
        None => r.put("h0.translation", "none"),
    }
    r.num("h0.lambda_bound", hyp.h0_lambda_bound);
    r.nums("h0.radii", &hyp.h0_radii);
    r.nums("h0.limsup_estimate", &hyp.h0_limsup_estimate);
    r.put("h0.verdict", hyp.h0_verdict);
    let h1 = p1_p2_sup(ps.mu(), ps.lambda(), &cfg.check.z_grid, &cfg.quad)?;
    r.nums("h1.z_grid", &h1.z_grid);
    r.num("h1.p1", h1.p1);
    r.num("h1.p2", h1.p2);
    r.put("h1.p1_saturated", h1.p1_saturated);
    r.put("h1.p2_saturated", h1.p2_saturated);

    let code = if checks.selected.verdict { EXIT_OK } else { EXIT_CONDITION };
    write_report(ctx, &cfg.output, &r)?;
    Ok(Outcome { code, report: r })
}

fn sample_x0(cfg: &RunConfig) -> Result<GridFunction, Error> {
    let c = cfg.x0.compile(&["t"])?;
    GridFunction::try_from_fn(cfg.grid, |t| Ok::<f64, Error>(c.eval(&[t])?))
}

fn write_report(ctx: &Context, out: &OutputSettings, r: &Report) -> Result<(), Error> {
    let path = ctx.path(&out.report_path);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, r.render())?;
    Ok(())
}

fn write_solution(ctx: &Context, out: &OutputSettings, u: &GridFunction) -> Result<(), Error> {
    let path = ctx.path(&out.csv_path);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    u.write_csv(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn put_ergodic(r: &mut Report, prefix: &str, e: &ErgodicityReport) {
    r.nums(format!("{prefix}.radii"), &e.radii);
    r.nums(format!("{prefix}.means"), &e.means);
    match e.trend_slope {
        Some(s) => r.num(format!("{prefix}.trend_slope"), s),
        None => r.put(format!("{prefix}.trend_slope"), "none"),
    }
    r.put(format!("{prefix}.verdict"), e.verdict);
}

/// Solves after the contraction gate; returns the report and the solution.
fn solve_inner(cfg: &RunConfig, ctx: &Context, r: &mut Report) -> Result<(i32, Option<GridFunction>), CliError> {
    let checks = run_contraction_checks(cfg)?;
    put_checks(r, &checks);
    if !checks.selected.verdict && !ctx.force {
        r.put("solve.status", "refused: contraction condition violated (use --force)");
        return Ok((EXIT_CONDITION, None));
    }
    let gate = checks.selected.verdict.then_some(&checks.selected);
    r.put("solve.forced", gate.is_none());
    let x0 = sample_x0(cfg)?;
    let trace = picard_solve(&cfg.problem, x0, &cfg.picard, &cfg.quad, gate)?;
    r.num("picard.tol", cfg.picard.tol);
    r.put("solve.iterations", trace.iterations.len());
    r.put("solve.converged", trace.converged);
    r.nums("solve.d", &trace.iterations);
    let ratios = trace.ratios();
    r.num("solve.max_ratio", ratios.iter().skip(1).cloned().fold(0.0, f64::max));
    if let Some(res) = &trace.final_residual {
        r.nums("solve.residual_window", &[res.window.0, res.window.1]);
        r.num("solve.residual_sup", res.sup_residual);
        r.num("solve.residual_l2", res.l2_residual);
        let path = ctx.path(&cfg.output.residual_path);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(Error::from)?;
        }
        res.write_csv(BufWriter::new(File::create(path).map_err(Error::from)?)).map_err(Error::from)?;
    }
    write_solution(ctx, &cfg.output, &trace.solution)?;
    let code = if trace.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok((code, Some(trace.solution)))
}

pub fn cmd_solve(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let mut r = Report::default();
    r.put("command", "solve");
    put_problem(&mut r, &cfg.problem, &cfg.grid);
    let (code, _) = solve_inner(cfg, ctx, &mut r)?;
    write_report(ctx, &cfg.output, &r)?;
    Ok(Outcome { code, report: r })
}

pub enum VerifyMode {
    Manufactured(String),
    Residual(PathBuf),
}

pub fn cmd_verify(cfg: &RunConfig, ctx: &Context, mode: VerifyMode) -> Result<Outcome, CliError> {
    let v = &cfg.verify;
    let mut r = Report::default();
    r.put("command", "verify");
    put_problem(&mut r, &cfg.problem, &cfg.grid);
    let pass = match mode {
        VerifyMode::Manufactured(src) => {
            let u_star = Expression::parse(&src).map_err(Error::from)?;
            if let Some(bad) = u_star.free_vars().iter().find(|n| n.as_str() != "t") {
                return Err(CliError::Usage(format!("--mms: variable `{bad}` is not allowed (only t)")));
            }
            let m = manufacture(&u_star, &cfg.problem, cfg.grid, v.eps, &cfg.quad)?;
            r.put("mms.u_star", &u_star);
            r.num("mms.eps", v.eps);
            put_contraction(&mut r, "mms.gate", &m.gate);
            let pre = residual(&m.problem, &m.exact, v.window, &cfg.quad)?;
            r.num("mms.pre_residual_sup", pre.sup_residual);
            let trace = picard_solve(
                &m.problem,
                GridFunction::constant(cfg.grid, 0.0),
                &cfg.picard,
                &cfg.quad,
                Some(&m.gate),
            )?;
            let err = trace.solution.sup_distance_on(&m.exact, v.window.0, v.window.1).map_err(Error::from)?;
            r.put("mms.iterations", trace.iterations.len());
            r.put("mms.converged", trace.converged);
            r.num("mms.recovery_error", err);
            write_solution(ctx, &cfg.output, &trace.solution)?;
            let pass = pre.sup_residual < v.pre_tol && trace.converged && err < v.recovery_tol;
            if !trace.converged {
                r.put("verify.pass", false);
                write_report(ctx, &cfg.output, &r)?;
                return Ok(Outcome { code: EXIT_NOT_CONVERGED, report: r });
            }
            pass
        }
        VerifyMode::Residual(path) => {
            let file = File::open(&path).map_err(Error::from)?;
            let u = GridFunction::read_csv(BufReader::new(file)).map_err(Error::from)?;
            let res = residual(&cfg.problem, &u, v.window, &cfg.quad)?;
            r.put("residual.input", path.display());
            r.nums("residual.window", &[res.window.0, res.window.1]);
            r.num("residual.sup", res.sup_residual);
            r.num("residual.l2", res.l2_residual);
            let out = ctx.path(&cfg.output.residual_path);
            if let Some(dir) = out.parent() {
                fs::create_dir_all(dir).map_err(Error::from)?;
            }
            res.write_csv(BufWriter::new(File::create(out).map_err(Error::from)?)).map_err(Error::from)?;
            res.sup_residual < v.residual_tol
        }
    };
    r.put("verify.pass", pass);
    write_report(ctx, &cfg.output, &r)?;
    Ok(Outcome {
        code: if pass { EXIT_OK } else { EXIT_CONDITION },
        report: r,
    })
}

pub fn cmd_ergodic(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let mu = cfg.problem.mu();
    let mut r = Report::default();
    r.put("command", "ergodic");
    r.put("measure.rho", mu.rho());
    let report = match &cfg.phi {
        Some(phi) => {
            r.put("ergodic.observable", phi);
            ergodic_mean(Observable::Expr(phi), mu, &cfg.check.radii, &cfg.quad)?
        }
        None => {
            let input = cfg.ergodic_input.clone().unwrap_or_else(|| cfg.output.csv_path.clone());
            let path = ctx.path(&input);
            let file = File::open(&path).map_err(|e| {
                CliError::Usage(format!(
                    "no ergodic.phi configured and no solution at {} ({e}); run solve first",
                    path.display()
                ))
            })?;
            let u = GridFunction::read_csv(BufReader::new(file)).map_err(Error::from)?;
            r.put("ergodic.observable", format!("remainder of {}", path.display()));
            let paa = paa_diagnostics(&u, mu, &cfg.check.radii, &cfg.quad)?;
            r.nums("paa.frequencies", &paa.frequencies);
            r.nums("paa.coefficients", &paa.coefficients);
            r.num("paa.fit_residual", paa.fit_residual);
            r.put("paa.note", paa.note);
            paa.ergodic
        }
    };
    put_ergodic(&mut r, "ergodic", &report);
    write_report(ctx, &cfg.output, &r)?;
    let code = if report.verdict == ErgodicVerdict::Decaying { EXIT_OK } else { EXIT_CONDITION };
    Ok(Outcome { code, report: r })
}

/// Reference grid step at which the residual target is `1e-4`.
const REFERENCE_STEP: f64 = 0.02;

pub fn cmd_reproduce_paper(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let mut r = Report::default();
    r.put("command", "reproduce-paper");
    put_problem(&mut r, &cfg.problem, &cfg.grid);
    let checks = run_contraction_checks(cfg)?;
    let Some(t2) = checks.thm2.clone() else {
        return Err(CliError::Usage("reproduce-paper needs check.Lf and check.Lh".into()));
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    let (lhs_expected, rhs_expected) = ((sqrt2 + 1.0) / 9.0, 1.0 / (sqrt2 + 2.0));
    let constants_ok =
        (t2.lhs - lhs_expected).abs() < 1e-6 && (t2.rhs - rhs_expected).abs() < 1e-6 && t2.verdict;
    r.num("reproduce.lhs_expected", lhs_expected);
    r.num("reproduce.rhs_expected", rhs_expected);
    r.put("reproduce.constants_ok", constants_ok);

    let mut solve = Report::default();
    let (code, _) = solve_inner(cfg, ctx, &mut solve)?;
    for (k, v) in solve.entries() {
        r.put(k.clone(), v);
    }
    let tol = if cfg.grid.step() <= REFERENCE_STEP * (1.0 + 1e-12) { 1e-4 } else { 1e-3 };
    let residual_ok = r
        .get("solve.residual_sup")
        .and_then(|s| s.parse::<f64>().ok())
        .is_some_and(|v| v < tol);
    r.num("reproduce.residual_tol", tol);
    r.put("reproduce.residual_ok", residual_ok);
    let pass = constants_ok && residual_ok && code == EXIT_OK;
    r.put("reproduce.pass", pass);
    write_report(ctx, &cfg.output, &r)?;
    let code = match code {
        EXIT_OK if pass => EXIT_OK,
        EXIT_OK => EXIT_CONDITION,
        other => other,
    };
    Ok(Outcome { code, report: r })
}

#[derive(Debug, Parser)]
#[command(name = "refide", version, about = "Bounded solutions of integro-differential equations with reflection")]
pub struct Cli {
    /// Run configuration (key = value sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Solve even when the contraction condition fails.
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for reports and CSV files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Contraction conditions and measure hypotheses.
    Check,
    /// Picard iteration after the contraction gate.
    Solve,
    /// Manufactured-solution round trip or residual of a solution CSV.
    Verify {
        /// Target solution u*(t) for the manufactured problem.
        #[arg(long, conflicts_with = "residual")]
        mms: Option<String>,
        /// Solution CSV (`t,u`) whose residual is measured.
        #[arg(long)]
        residual: Option<PathBuf>,
    },
    /// Ergodic means of the configured observable or of a solution's remainder.
    Ergodic,
    /// The shipped worked example end to end.
    ReproducePaper,
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let ctx = Context {
        out_dir: cli.out.clone(),
        force: cli.force,
    };
    let cfg = match (&cli.config, &cli.command) {
        (Some(path), _) => load_config(path)?,
        (None, Command::ReproducePaper) => parse_config(WORKED_EXAMPLE)?,
        (None, _) => return Err(CliError::Usage("--config <path> is required".into())),
    };
    match &cli.command {
        Command::Check => cmd_check(&cfg, &ctx),
        Command::Solve => cmd_solve(&cfg, &ctx),
        Command::Verify { mms, residual } => {
            let mode = match (mms, residual) {
                (Some(m), None) => VerifyMode::Manufactured(m.clone()),
                (None, Some(p)) => VerifyMode::Residual(p.clone()),
                _ => return Err(CliError::Usage("verify needs --mms <u_star> or --residual <csv>".into())),
            };
            cmd_verify(&cfg, &ctx, mode)
        }
        Command::Ergodic => cmd_ergodic(&cfg, &ctx),
        Command::ReproducePaper => cmd_reproduce_paper(&cfg, &ctx),
    }
}

/// Parses arguments, runs the subcommand, prints its report and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_IO;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(outcome) => {
            print!("{}", outcome.report.render());
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
