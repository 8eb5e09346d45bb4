//! Experiment configuration files (TOML). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tableaux::ButcherTableau;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    TableauCheck,
    FeTest,
    Identity,
    Conservation,
    Multisymplectic,
    Convergence,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TableauCheck => "tableau-check",
            Self::FeTest => "fe-test",
            Self::Identity => "identity",
            Self::Conservation => "conservation",
            Self::Multisymplectic => "multisymplectic",
            Self::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Residual names whose assertions are expected to fail.
    #[serde(default)]
    pub expected_fail: Vec<String>,
    /// Share of `(residual, step)` groups of an expected-fail residual that
    /// must actually fail.
    #[serde(default = "one")]
    pub expected_fail_fraction: f64,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub solver: SolverOverrides,
    /// Fixed thresholds by residual name, replacing the state-scaled default.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub report: ReportConfig,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    All,
    QuadraticPreserving,
    /// Quadratic-preserving with nonnegative weights.
    BStable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    Partitioned,
    Additive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Full,
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    LieTrotter,
    Strang,
    AromaticEuler,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Builtin tableau names.
    #[serde(default)]
    pub tableaux: Vec<String>,
    /// A builtin family instead of explicit names.
    pub select: Option<Selection>,
    /// Tableau files, relative to the config file.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Two tableaux (builtin names or `file:` paths) forming a pair.
    pub pair: Option<[String; 2]>,
    pub mode: Option<PairMode>,
    pub condition: Option<Condition>,
    pub scheme: Option<SchemeName>,
    pub eps_div: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Gaussian,
    PlaneWave,
    Random,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Explicit initial state.
    pub initial: Option<Vec<f64>>,
    pub preset: Option<Preset>,
    pub nodes: Option<usize>,
    pub observable: Option<String>,
    pub identity: Option<String>,
    pub law: Option<String>,
    /// The observable is an invariant of the field: report its drift too.
    #[serde(default)]
    pub invariant: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub trials: Option<usize>,
    #[serde(default)]
    pub dt_ladder: Vec<f64>,
    pub final_time: Option<f64>,
    pub contract_trials: Option<usize>,
    /// Lower bound on the order measured over `dt_ladder`.
    pub min_order: Option<f64>,
    /// Closed-form value of a reported quantity, with `reference_quantity`.
    pub reference_value: Option<f64>,
    pub reference_quantity: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    Newton,
    FixedPoint,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub strategy: Option<StrategyName>,
    pub jac_eps: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub dir: Option<PathBuf>,
}

/// Config plus the directory relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub path: PathBuf,
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let config = parse(&text).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(LoadedConfig {
        config,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        path: path.to_path_buf(),
    })
}

fn bad(field: &str, why: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{field}: {why}"))
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.id.is_empty() || !cfg.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
        return Err(bad("id", "must be non-empty and use [A-Za-z0-9-_.]"));
    }
    if !(0.0..=1.0).contains(&cfg.expected_fail_fraction) {
        return Err(bad("expected_fail_fraction", "must lie in [0, 1]"));
    }
    let r = &cfg.run;
    if let Some(dt) = r.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(bad("run.dt", "must be positive"));
        }
    }
    if r.steps == Some(0) {
        return Err(bad("run.steps", "must be at least 1"));
    }
    if r.trials == Some(0) {
        return Err(bad("run.trials", "must be at least 1"));
    }
    if r.dt_ladder.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(bad("run.dt_ladder", "entries must be positive"));
    }
    if cfg.kind == Kind::Convergence && r.dt_ladder.len() < 3 {
        return Err(bad("run.dt_ladder", "a convergence study needs at least 3 step sizes"));
    }
    if let Some(t) = r.final_time {
        if !(t > 0.0 && t.is_finite()) {
            return Err(bad("run.final_time", "must be positive"));
        }
    }
    if r.reference_value.is_some() != r.reference_quantity.is_some() {
        return Err(bad("run.reference_value", "needs reference_quantity and vice versa"));
    }
    let s = &cfg.solver;
    if let Some(tol) = s.tol {
        if !(tol > 0.0) {
            return Err(bad("solver.tol", "must be positive"));
        }
    }
    if s.max_iters == Some(0) {
        return Err(bad("solver.max_iters", "must be at least 1"));
    }
    for (name, v) in &cfg.thresholds {
        if v.is_nan() {
            return Err(bad(&format!("thresholds.{name}"), "must be a number"));
        }
    }
    let m = &cfg.method;
    if m.pair.is_some() && m.mode.is_none() && cfg.kind != Kind::TableauCheck {
        return Err(bad("method.mode", "a pair needs mode = partitioned | additive"));
    }
    Ok(())
}

/// On-disk tableau description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableauFile {
    pub name: String,
    pub s: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub order: u32,
    #[serde(default)]
    pub nonstandard_c: bool,
}

pub fn load_tableau(path: &Path) -> Result<ButcherTableau<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_tableau(&text)
}

pub fn parse_tableau(text: &str) -> Result<ButcherTableau<f64>> {
    let f: TableauFile = toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    if f.a.len() != f.s {
        return Err(bad("s", format!("{} stages declared, A has {} rows", f.s, f.a.len())));
    }
    ButcherTableau::new(f.name, f.a, f.b, f.c, f.order, f.nonstandard_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("id = \"x\"\nkind = \"fe-test\"\n[run]\nstpes = 3\n").unwrap_err();
        assert!(err.to_string().contains("stpes"), "{err}");
    }

    #[test]
    fn minimal_config_parses() {
        let c = parse("id = \"gauss2-check\"\nkind = \"tableau-check\"\n[method]\ntableaux = [\"gauss2\"]\n").unwrap();
        assert_eq!(c.kind, Kind::TableauCheck);
        assert_eq!(c.expected_fail_fraction, 1.0);
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = parse("id = \"x\"\nkind = \"fe-test\"\n[run]\ndt = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("run.dt"));
        let err = parse("id = \"x\"\nkind = \"convergence\"\n[run]\ndt_ladder = [0.1, 0.05]\n").unwrap_err();
        assert!(err.to_string().contains("dt_ladder"));
    }

    #[test]
    fn tableau_file_roundtrip() {
        let t = parse_tableau(
            "name = \"explicit-midpoint\"\ns = 2\nA = [[0.0, 0.0], [0.5, 0.0]]\nb = [0.0, 1.0]\nc = [0.0, 0.5]\norder = 2\n",
        )
        .unwrap();
        assert_eq!(t.stages(), 2);
        assert!(parse_tableau("name = \"bad\"\ns = 1\nA = [[0.0]]\nb = [0.5]\nc = [0.0]\norder = 1\n").is_err());
    }
}
