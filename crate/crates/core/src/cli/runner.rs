//! Executes one experiment configuration and produces its report.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{
    Condition, ExperimentConfig, Kind, LoadedConfig, PairMode, Preset, SchemeName, Selection, StrategyName,
};
use super::convergence;
use super::report::{Report, ReportBuilder, REPORT_VERSION};
use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_inf};
use crate::multisym::{DdwWaveSystem, MsPairState};
use crate::observables::{
    bracket_identity_residual, contractivity_check, fe_residual, max_relative_increase,
    strong_equivariance_counterexample, ForcedMechanical, Observable, ObservableClass, QuadraticForm,
};
use crate::pde::{
    discrete_cl_residual, initial_state, kdv_energy_candidate, kdv_system, nls_system, wave_system, Grid1D,
    InitialPreset, LocalConservationLaw, ScalarMap, SemidiscreteSystem,
};
use crate::problems;
use crate::stepper::{rk_step, ExactFlow, Integrator, SolverConfig, Strategy, VectorField};
use crate::tableaux::{
    ark_quadratic_defect, b_nonnegative, builtin_tableau, preserves_quadratic, quadratic_defect, AdditiveTableau,
    ButcherTableau, ConditionMode, PartitionedTableau, SplittingScheme, BUILTIN_TABLEAUX,
};
use crate::tolerances;
use crate::variational::{symplectic_residual, tangent_step, BilinearForm};

/// Builtin ODE problems with their parameters and defaults.
pub const ODE_PROBLEMS: &[(&str, &[(&str, f64)])] = &[
    ("harmonic-oscillator", &[]),
    ("pendulum", &[("omega2", 1.0), ("c", 0.0)]),
    ("damped-oscillator", &[("c", 0.3)]),
    ("linear-decay", &[]),
    ("cubic-decay", &[]),
    ("rigid-body", &[("i1", 1.0), ("i2", 2.0), ("i3", 3.0)]),
    ("gradient-flow", &[]),
    ("shear-decay", &[]),
    ("random-smooth", &[("dim_min", 2.0), ("dim_max", 6.0)]),
    ("random-cubic", &[("dim_min", 2.0), ("dim_max", 4.0)]),
    ("random-invariant", &[("dim_min", 2.0), ("dim_max", 6.0)]),
    ("counterexample", &[]),
];

/// Builtin semidiscrete systems with their parameters and defaults.
pub const PDE_PROBLEMS: &[(&str, &[(&str, f64)])] = &[
    ("wave-fd", &[("length", std::f64::consts::TAU)]),
    ("nls-fd", &[("length", std::f64::consts::TAU), ("lambda", 1.0)]),
    (
        "kdv-theta",
        &[
            ("length", std::f64::consts::TAU),
            ("alpha", 1.0),
            ("nu", 1.0),
            ("theta", 2.0 / 3.0),
        ],
    ),
];

pub const OBSERVABLES: &[&str] = &[
    "sum",
    "square",
    "half-square",
    "cube",
    "casimir",
    "energy",
    "potential",
    "nonlinear",
    "random-affine",
    "random-quadratic",
];

pub const IDENTITIES: &[&str] = &["bracket", "dissipation", "symplectic", "closure", "b-stability"];

/// Runs a loaded configuration; failures are folded into the report.
pub fn run_loaded(loaded: &LoadedConfig) -> Report {
    let cfg = &loaded.config;
    let mut ctx = match Ctx::new(cfg, &loaded.base_dir) {
        Ok(c) => c,
        Err(e) => {
            return ReportBuilder::new(&cfg.id).finish(
                cfg.kind.as_str(),
                &cfg.expected_fail,
                cfg.expected_fail_fraction,
                Some(&e),
                metadata(cfg, None),
            )
        }
    };
    let result = match cfg.kind {
        Kind::TableauCheck => ctx.tableau_check(),
        Kind::FeTest => ctx.fe_test(),
        Kind::Identity => ctx.identity(),
        Kind::Conservation => ctx.conservation(),
        Kind::Multisymplectic => ctx.multisymplectic(),
        Kind::Convergence => ctx.convergence(),
    };
    let meta = metadata(cfg, Some(&ctx.solver));
    ctx.b.finish(
        cfg.kind.as_str(),
        &cfg.expected_fail,
        cfg.expected_fail_fraction,
        result.err().as_ref(),
        meta,
    )
}

/// Report for a configuration that could not be loaded.
pub fn config_error_report(id: &str, err: &Error) -> Report {
    ReportBuilder::new(id).finish("unknown", &[], 1.0, Some(err), BTreeMap::new())
}

fn metadata(cfg: &ExperimentConfig, solver: Option<&SolverConfig<f64>>) -> BTreeMap<String, serde_json::Value> {
    use serde_json::json;
    let mut m = BTreeMap::new();
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("report_version".into(), json!(REPORT_VERSION));
    m.insert(
        "tolerances".into(),
        json!({
            "solver_exact": tolerances::SOLVER_EXACT,
            "algebraic": tolerances::ALGEBRAIC,
            "consistency": tolerances::CONSISTENCY,
            "contract": tolerances::CONTRACT,
            "discrete_law": tolerances::DISCRETE_LAW,
            "order_slack": tolerances::ORDER_SLACK,
        }),
    );
    if let Some(s) = solver {
        m.insert(
            "solver".into(),
            json!({
                "tol": s.tol,
                "max_iters": s.max_iters,
                "strategy": match s.strategy { Strategy::Newton => "newton", Strategy::FixedPoint => "fixed-point" },
                "jac_eps": s.jac_eps,
            }),
        );
    }
    m.insert("thresholds".into(), json!(cfg.thresholds));
    m
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Independent generator per trial.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    problems::rng(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

enum MethodShape {
    Rk(ButcherTableau<f64>),
    Pair(ButcherTableau<f64>, ButcherTableau<f64>, PairMode),
    Split(SplittingScheme<f64>),
    Aromatic(f64),
}

struct Labeled {
    label: String,
    shape: MethodShape,
}

/// One instance of an ODE problem.
struct Ode {
    name: String,
    field: VectorField<f64>,
    parts: Option<Vec<VectorField<f64>>>,
    flows: Option<Vec<ExactFlow<f64>>>,
    initial: Vec<f64>,
    params: BTreeMap<String, f64>,
    /// Quadratic invariant the field was constructed around.
    invariant: Option<Observable<f64>>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    base_dir: &'a Path,
    solver: SolverConfig<f64>,
    b: ReportBuilder,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ExperimentConfig, base_dir: &'a Path) -> Result<Self> {
        let mut solver = SolverConfig::<f64>::default();
        if let Some(t) = cfg.solver.tol {
            solver.tol = t;
        }
        if let Some(m) = cfg.solver.max_iters {
            solver.max_iters = m;
        }
        if let Some(s) = cfg.solver.strategy {
            solver.strategy = match s {
                StrategyName::Newton => Strategy::Newton,
                StrategyName::FixedPoint => Strategy::FixedPoint,
            };
        }
        solver.jac_eps = cfg.solver.jac_eps;
        Ok(Self {
            cfg,
            base_dir,
            solver,
            b: ReportBuilder::new(&cfg.id),
        })
    }

    // ---- shared helpers -------------------------------------------------

    /// State-scaled solver-exact bound unless overridden by name.
    fn thr(&self, name: &str, state_norm: f64) -> f64 {
        self.cfg
            .thresholds
            .get(name)
            .copied()
            .unwrap_or_else(|| tolerances::solver_exact_bound(state_norm))
    }

    fn thr_fixed(&self, name: &str, default: f64) -> f64 {
        self.cfg.thresholds.get(name).copied().unwrap_or(default)
    }

    fn dt(&self) -> Result<f64> {
        self.cfg
            .run
            .dt
            .ok_or_else(|| cfg_err("run.dt: required for this experiment"))
    }

    fn params(&self, defaults: &[(&str, f64)]) -> Result<BTreeMap<String, f64>> {
        let name = &self.cfg.problem.name;
        for key in self.cfg.problem.params.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                return Err(cfg_err(format!("problem.params.{key}: unknown parameter for {name}")));
            }
        }
        Ok(defaults
            .iter()
            .map(|&(k, v)| (k.to_string(), self.cfg.problem.params.get(k).copied().unwrap_or(v)))
            .collect())
    }

    fn resolve_tableau(&self, name: &str) -> Result<ButcherTableau<f64>> {
        match name.strip_prefix("file:") {
            Some(path) => super::config::load_tableau(&self.base_dir.join(path)),
            None => builtin_tableau(name),
        }
    }

    fn tableaux(&self) -> Result<Vec<ButcherTableau<f64>>> {
        let m = &self.cfg.method;
        let mut out = Vec::new();
        if let Some(sel) = m.select {
            for name in BUILTIN_TABLEAUX {
                let t = builtin_tableau::<f64>(name)?;
                let keep = match sel {
                    Selection::All => true,
                    Selection::QuadraticPreserving => preserves_quadratic(&t, tolerances::CONSISTENCY),
                    Selection::BStable => preserves_quadratic(&t, tolerances::CONSISTENCY) && b_nonnegative(&t),
                };
                if keep {
                    out.push(t);
                }
            }
        }
        for name in &m.tableaux {
            out.push(builtin_tableau(name).map_err(|e| cfg_err(format!("method.tableaux: {e}")))?);
        }
        for f in &m.files {
            out.push(super::config::load_tableau(&self.base_dir.join(f))?);
        }
        Ok(out)
    }

    fn methods(&self) -> Result<Vec<Labeled>> {
        let m = &self.cfg.method;
        let mut out: Vec<Labeled> = self
            .tableaux()?
            .into_iter()
            .map(|t| Labeled {
                label: t.name().to_string(),
                shape: MethodShape::Rk(t),
            })
            .collect();
        if let Some([a, b]) = &m.pair {
            let mode = m.mode.ok_or_else(|| cfg_err("method.mode: required with a pair"))?;
            let (ta, tb) = (self.resolve_tableau(a)?, self.resolve_tableau(b)?);
            let kind = match mode {
                PairMode::Partitioned => "prk",
                PairMode::Additive => "ark",
            };
            out.push(Labeled {
                label: format!("{kind}:{}+{}", ta.name(), tb.name()),
                shape: MethodShape::Pair(ta, tb, mode),
            });
        }
        if let Some(s) = m.scheme {
            let (label, shape) = match s {
                SchemeName::LieTrotter => ("lie-trotter", MethodShape::Split(SplittingScheme::lie_trotter())),
                SchemeName::Strang => ("strang", MethodShape::Split(SplittingScheme::strang())),
                SchemeName::AromaticEuler => ("aromatic-euler", MethodShape::Aromatic(m.eps_div.unwrap_or(1e-4))),
            };
            out.push(Labeled {
                label: label.to_string(),
                shape,
            });
        }
        if out.is_empty() {
            return Err(cfg_err("method: no tableau, pair or scheme given"));
        }
        Ok(out)
    }

    fn rk_only(&self) -> Result<Vec<ButcherTableau<f64>>> {
        let m = &self.cfg.method;
        if m.pair.is_some() || m.scheme.is_some() {
            return Err(cfg_err("method: this experiment takes Runge-Kutta tableaux only"));
        }
        let t = self.tableaux()?;
        if t.is_empty() {
            return Err(cfg_err("method: no tableau given"));
        }
        Ok(t)
    }

    fn integrator(&self, shape: &MethodShape, ode: &Ode) -> Result<Integrator<f64>> {
        Ok(match shape {
            MethodShape::Rk(t) => Integrator::rk(t.clone(), ode.field.clone()),
            MethodShape::Pair(a, b, PairMode::Partitioned) => {
                let n = ode.field.dim();
                Integrator::Prk {
                    tableau: PartitionedTableau::pair(a.clone(), b.clone(), n, n / 2)?,
                    field: ode.field.clone(),
                }
            }
            MethodShape::Pair(a, b, PairMode::Additive) => Integrator::Ark {
                tableau: AdditiveTableau::new(vec![a.clone(), b.clone()])?,
                parts: ode
                    .parts
                    .clone()
                    .ok_or_else(|| cfg_err(format!("problem.name: {} has no additive splitting", ode.name)))?,
            },
            MethodShape::Split(s) => Integrator::Splitting {
                scheme: s.clone(),
                flows: ode
                    .flows
                    .clone()
                    .ok_or_else(|| cfg_err(format!("problem.name: {} has no exact split flows", ode.name)))?,
            },
            MethodShape::Aromatic(eps) => Integrator::AromaticEuler {
                field: ode.field.clone(),
                eps_div: *eps,
            },
        })
    }

    fn ode(&self, rng: &mut ChaCha8Rng) -> Result<Ode> {
        let name = self.cfg.problem.name.as_str();
        let defaults = ODE_PROBLEMS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| cfg_err(format!("problem.name: unknown ODE problem '{name}'")))?
            .1;
        let p = self.params(defaults)?;
        let dim = |rng: &mut ChaCha8Rng| -> Result<usize> {
            let (lo, hi) = (p["dim_min"] as usize, p["dim_max"] as usize);
            if lo == 0 || hi < lo {
                return Err(cfg_err("problem.params: need 1 <= dim_min <= dim_max"));
            }
            Ok(rng.gen_range(lo..=hi))
        };
        let mut parts = None;
        let mut flows = None;
        let mut invariant = None;
        let (field, initial) = match name {
            "harmonic-oscillator" => {
                flows = Some(problems::oscillator_flows());
                (problems::harmonic_oscillator(), vec![1.0, 0.0])
            }
            "pendulum" => {
                let (w2, c) = (p["omega2"], p["c"]);
                let f = if c == 0.0 {
                    problems::pendulum(w2)
                } else {
                    VectorField::new("pendulum", 2, move |y: &[f64]| vec![y[1], -w2 * y[0].sin() - c * y[1]])
                        .with_jacobian(move |y, w| vec![w[1], -w2 * y[0].cos() * w[0] - c * w[1]])
                };
                (f, vec![1.0, 0.0])
            }
            "damped-oscillator" => (problems::damped_oscillator(p["c"]), vec![1.0, 0.0]),
            "linear-decay" => (problems::linear_decay(), vec![1.0]),
            "cubic-decay" => (problems::cubic_decay(), vec![1.0]),
            "rigid-body" => (problems::rigid_body([p["i1"], p["i2"], p["i3"]]), vec![0.6, -0.8, 0.5]),
            "gradient-flow" => (
                problems::gradient_flow(problems::default_convex_matrix()),
                vec![1.0, -1.0, 0.5],
            ),
            "shear-decay" => {
                parts = Some(problems::shear_decay_parts());
                flows = Some(problems::shear_decay_flows());
                (problems::shear_decay(), vec![0.0, 1.0])
            }
            "random-smooth" => {
                let n = dim(rng)?;
                let f = problems::random_smooth_field(rng, n);
                (f, problems::random_state(rng, n))
            }
            "random-cubic" => {
                let n = dim(rng)?;
                let f = problems::random_cubic_field(rng, n);
                (f, problems::random_state(rng, n))
            }
            "random-invariant" => {
                // the form is drawn first so the field can be built around it
                let n = dim(rng)?;
                let form = problems::random_quadratic_form(rng, n);
                let f = problems::random_invariant_field(rng, &form);
                invariant = Some(Observable::quadratic("random-quadratic", form));
                (f, problems::random_state(rng, n))
            }
            _ => return Err(cfg_err(format!("problem.name: '{name}' is not usable here"))),
        };
        let initial = match &self.cfg.problem.initial {
            Some(v) => {
                if v.len() != field.dim() {
                    return Err(cfg_err(format!(
                        "problem.initial: {} has dimension {}, got {} values",
                        name,
                        field.dim(),
                        v.len()
                    )));
                }
                v.clone()
            }
            None => initial,
        };
        Ok(Ode {
            name: name.into(),
            field,
            parts,
            flows,
            initial,
            params: p,
            invariant,
        })
    }

    fn observable(&self, ode: &Ode, rng: &mut ChaCha8Rng, default: &str) -> Result<Observable<f64>> {
        let name = self.cfg.problem.observable.as_deref().unwrap_or(default);
        let n = ode.field.dim();
        if let (Some(o), "random-quadratic") = (&ode.invariant, name) {
            return Ok(o.clone());
        }
        Ok(match name {
            "sum" => Observable::affine("sum", vec![1.0; n], vec![0.0])?,
            "square" => Observable::quadratic("square", QuadraticForm::new(diagonal(n, 1.0), vec![0.0; n], 0.0)?),
            "half-square" => {
                Observable::quadratic("half-square", QuadraticForm::new(diagonal(n, 0.5), vec![0.0; n], 0.0)?)
            }
            "casimir" => Observable::quadratic("casimir", QuadraticForm::new(diagonal(n, 1.0), vec![0.0; n], 0.0)?),
            "cube" => Observable::scalar(
                "cube",
                n,
                ObservableClass::General,
                |y| y.iter().map(|v| v * v * v).sum(),
                |y| y.iter().map(|v| 3.0 * v * v).collect(),
            ),
            "nonlinear" => Observable::scalar(
                "nonlinear",
                n,
                ObservableClass::General,
                |y| cyclic_product(y).sin() + y.iter().map(|v| v.powi(5)).sum::<f64>(),
                |y| {
                    let c = cyclic_product(y).cos();
                    let m = y.len();
                    (0..m)
                        .map(|i| c * (y[(i + 1) % m] + y[(i + m - 1) % m]) + 5.0 * y[i].powi(4))
                        .collect()
                },
            ),
            "energy" => self.energy(ode)?,
            "potential" => {
                if ode.name != "gradient-flow" {
                    return Err(cfg_err("problem.observable: 'potential' belongs to gradient-flow"));
                }
                let k = problems::default_convex_matrix::<f64>();
                let half: Vec<f64> = k.iter().map(|v| 0.5 * v).collect();
                Observable::quadratic("potential", QuadraticForm::new(half, vec![0.0; n], 0.0)?)
            }
            "random-affine" => problems::random_affine_observable(rng, n),
            "random-quadratic" => problems::random_quadratic_observable(rng, n),
            other => return Err(cfg_err(format!("problem.observable: unknown observable '{other}'"))),
        })
    }

    fn energy(&self, ode: &Ode) -> Result<Observable<f64>> {
        Ok(match ode.name.as_str() {
            "harmonic-oscillator" | "damped-oscillator" => {
                Observable::quadratic("energy", QuadraticForm::new(diagonal(2, 0.5), vec![0.0; 2], 0.0)?)
            }
            "pendulum" => {
                let w2 = ode.params["omega2"];
                Observable::scalar(
                    "energy",
                    2,
                    ObservableClass::General,
                    move |y: &[f64]| 0.5 * y[1] * y[1] - w2 * y[0].cos(),
                    move |y: &[f64]| vec![w2 * y[0].sin(), y[1]],
                )
            }
            "rigid-body" => problems::rigid_body_energy([ode.params["i1"], ode.params["i2"], ode.params["i3"]]),
            other => return Err(cfg_err(format!("problem.observable: no energy for '{other}'"))),
        })
    }

    fn reference_row(&mut self, label: &str, step: usize, fe_res: f64, obs_end: f64) -> Result<()> {
        let (Some(v), Some(q)) = (self.cfg.run.reference_value, self.cfg.run.reference_quantity.as_deref()) else {
            return Ok(());
        };
        let got = match q {
            "fe-residual" => fe_res,
            "observable" => obs_end,
            other => return Err(cfg_err(format!("run.reference_quantity: unknown quantity '{other}'"))),
        };
        let thr = self.thr_fixed("reference-gap", tolerances::ALGEBRAIC);
        self.b
            .row(step, None, format!("reference-gap[{label}]"), (got - v).abs(), thr);
        Ok(())
    }

    // ---- experiment kinds ----------------------------------------------

    fn tableau_check(&mut self) -> Result<()> {
        let tabs = self.tableaux()?;
        let single = tabs.len() == 1 && self.cfg.method.pair.is_none();
        for (i, t) in tabs.iter().enumerate() {
            let n = t.name().to_string();
            let cons = self.thr_fixed("consistency", tolerances::CONSISTENCY);
            let rs = if t.nonstandard_c() { 0.0 } else { t.row_sum_defect() };
            self.b.row(i, None, format!("row-sum-defect[{n}]"), rs, cons);
            self.b
                .row(i, None, format!("weight-sum-defect[{n}]"), t.weight_sum_defect(), cons);
            let qthr = self.thr_fixed("quadratic-defect", tolerances::CONSISTENCY);
            let q = quadratic_defect(t);
            self.b.row(i, None, format!("quadratic-defect[{n}]"), q, qthr);
            let verdict = if q <= qthr { "pass" } else { "fail" };
            let bnn = if b_nonnegative(t) { "pass" } else { "fail" };
            if single {
                self.b.line(format!("quadratic-condition: {verdict}"));
                self.b.line(format!("b-nonnegative: {bnn}"));
            } else {
                self.b.line(format!("quadratic-condition[{n}]: {verdict}"));
                self.b.line(format!("b-nonnegative[{n}]: {bnn}"));
            }
        }
        if let Some([a, b]) = &self.cfg.method.pair {
            let atab = AdditiveTableau::new(vec![self.resolve_tableau(a)?, self.resolve_tableau(b)?])?;
            let (mode, label) = match self.cfg.method.condition.unwrap_or(Condition::Full) {
                Condition::Full => (ConditionMode::Full, "full"),
                Condition::Bilinear => (ConditionMode::Bilinear, "bilinear"),
            };
            let d = ark_quadratic_defect(&atab, mode);
            let thr = self.thr_fixed("ark-condition-defect", tolerances::CONSISTENCY);
            self.b.row(
                tabs.len(),
                None,
                format!("ark-condition-defect[{}:{label}]", atab.name()),
                d,
                thr,
            );
            let verdict = if d <= thr { "pass" } else { "fail" };
            self.b
                .line(format!("ark-condition[{}:{label}]: {verdict}", atab.name()));
        }
        Ok(())
    }

    fn fe_test(&mut self) -> Result<()> {
        if self.cfg.problem.name == "counterexample" {
            return self.counterexample();
        }
        let dt = self.dt()?;
        let trials = self.cfg.run.trials.unwrap_or(1);
        let steps = self.cfg.run.steps.unwrap_or(1);
        let methods = self.methods()?;
        let invariant = self.cfg.problem.invariant;
        for t in 0..trials {
            let mut rng = trial_rng(self.cfg.seed, t);
            let ode = self.ode(&mut rng)?;
            let obs = self.observable(&ode, &mut rng, "sum")?;
            for m in &methods {
                let method = self.integrator(&m.shape, &ode)?;
                let mut y = ode.initial.clone();
                for k in 0..steps {
                    let step = t * steps + k;
                    let fy0 = obs.eval(&y);
                    let fe = fe_residual(&method, &obs, &y, dt, &self.solver)?;
                    let mut aug = y.clone();
                    aug.extend(&fy0);
                    let nrm = norm2(&aug);
                    let thr = self.thr("fe-residual", nrm);
                    self.b
                        .row(step, None, format!("fe-residual[{}]", m.label), fe.max_abs(), thr);
                    let thr = self.thr("projection-gap", nrm);
                    self.b.row(
                        step,
                        None,
                        format!("projection-gap[{}]", m.label),
                        fe.projection_gap,
                        thr,
                    );
                    let f1 = obs.eval(&fe.y1);
                    if invariant {
                        let drift = f1.iter().zip(&fy0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        let thr = self.thr("invariant-drift", nrm);
                        self.b
                            .row(step, None, format!("invariant-drift[{}]", m.label), drift, thr);
                    }
                    self.reference_row(&m.label, step, fe.residual[0], f1[0])?;
                    y = fe.y1;
                }
            }
        }
        Ok(())
    }

    fn counterexample(&mut self) -> Result<()> {
        let c = strong_equivariance_counterexample()?;
        let exact = self.thr_fixed("counterexample", 1e-15);
        self.b.row(0, None, "y1-error", (c.y1 - 1.0 / 3.0).abs(), exact);
        self.b.row(0, None, "u1-error", c.u1.abs(), exact);
        self.b.row(0, None, "z1-error", (c.z1 - 1.0 / 9.0).abs(), exact);
        self.b.row(
            0,
            None,
            "fe-residual",
            c.fe_residual.abs(),
            self.thr_fixed("fe-residual", 1e-14),
        );
        self.b.row(
            0,
            None,
            "strong-equivariance-gap",
            (c.u1 - c.y1_squared).abs(),
            self.thr_fixed("strong-equivariance-gap", 1e-14),
        );
        self.b.line(format!(
            "y1 = {}, u1 = {}, z1 = {}, y1^2 = {}",
            c.y1, c.u1, c.z1, c.y1_squared
        ));
        Ok(())
    }

    fn identity(&mut self) -> Result<()> {
        let which = self
            .cfg
            .problem
            .identity
            .clone()
            .ok_or_else(|| cfg_err("problem.identity: required for identity experiments"))?;
        match which.as_str() {
            "bracket" => self.bracket(),
            "dissipation" => self.dissipation(),
            "symplectic" => self.symplectic(),
            "closure" => self.closure(),
            "b-stability" => self.b_stability(),
            other => Err(cfg_err(format!("problem.identity: unknown identity '{other}'"))),
        }
    }

    fn bracket(&mut self) -> Result<()> {
        let dt = self.dt()?;
        let steps = self.cfg.run.steps.unwrap_or(1);
        let mut rng = trial_rng(self.cfg.seed, 0);
        let ode = self.ode(&mut rng)?;
        let ham = self.energy(&ode)?;
        let default = if ode.name == "rigid-body" { "casimir" } else { "energy" };
        let obs = self.observable(&ode, &mut rng, default)?;
        let rigid = ode.name == "rigid-body";
        let n = ode.field.dim();
        let grad = move |o: &Observable<f64>, y: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|k| {
                    let mut e = vec![0.0; n];
                    e[k] = 1.0;
                    o.deriv(y, &e)[0]
                })
                .collect()
        };
        let (o2, h2) = (obs.clone(), ham.clone());
        let bracket = move |y: &[f64]| {
            let (gf, gh) = (grad(&o2, y), grad(&h2, y));
            if rigid {
                problems::rigid_body_bracket(&gf, &gh, y)
            } else {
                problems::canonical_bracket(&gf, &gh)
            }
        };
        for tab in self.rk_only()? {
            let mut y = ode.initial.clone();
            for k in 0..steps {
                let r = bracket_identity_residual(&tab, &ode.field, &obs, &bracket, &y, dt, &self.solver)?;
                let y1 = rk_step(&tab, &ode.field, &y, dt, &self.solver)?.y1;
                let nrm = norm2(&y);
                let thr = self.thr("bracket-residual", nrm);
                self.b.row(k, None, format!("bracket-residual[{}]", tab.name()), r, thr);
                if self.cfg.problem.invariant {
                    let thr = self.thr("invariant-drift", nrm);
                    let d = (obs.value(&y1) - obs.value(&ode.initial)).abs();
                    self.b.row(k, None, format!("invariant-drift[{}]", tab.name()), d, thr);
                }
                y = y1;
            }
        }
        Ok(())
    }

    fn mechanical(&self, ode: &Ode) -> Result<ForcedMechanical<f64>> {
        match ode.name.as_str() {
            "damped-oscillator" | "harmonic-oscillator" => {
                let c = ode.params.get("c").copied().unwrap_or(0.0);
                let v = Observable::quadratic("V", QuadraticForm::new(vec![0.5], vec![0.0], 0.0)?);
                ForcedMechanical::damped(&[1.0], v, c)
            }
            "pendulum" => {
                let (w2, c) = (ode.params["omega2"], ode.params["c"]);
                let v = Observable::scalar(
                    "V",
                    1,
                    ObservableClass::General,
                    move |q: &[f64]| -w2 * q[0].cos(),
                    move |q: &[f64]| vec![w2 * q[0].sin()],
                );
                ForcedMechanical::damped(&[1.0], v, c)
            }
            other => Err(cfg_err(format!(
                "problem.name: '{other}' is not a forced mechanical system"
            ))),
        }
    }

    fn dissipation(&mut self) -> Result<()> {
        let dt = self.dt()?;
        let steps = self.cfg.run.steps.unwrap_or(1);
        let ode = self.ode(&mut trial_rng(self.cfg.seed, 0))?;
        let sys = self.mechanical(&ode)?;
        let field = sys.field();
        for tab in self.rk_only()? {
            let mut y = ode.initial.clone();
            for k in 0..steps {
                let nrm = norm2(&y);
                let e = sys.dissipation_identity_residual(&tab, &y, dt, &self.solver)?;
                let kin = sys.kinetic_work_identity_residual(&tab, &y, dt, &self.solver)?;
                let t1 = self.thr("energy-balance", nrm);
                self.b.row(k, None, format!("energy-balance[{}]", tab.name()), e, t1);
                let t2 = self.thr("kinetic-balance", nrm);
                self.b.row(k, None, format!("kinetic-balance[{}]", tab.name()), kin, t2);
                y = rk_step(&tab, &field, &y, dt, &self.solver)?.y1;
            }
        }
        Ok(())
    }

    fn symplectic(&mut self) -> Result<()> {
        let dt = self.dt()?;
        let steps = self.cfg.run.steps.unwrap_or(1);
        let ode = self.ode(&mut trial_rng(self.cfg.seed, 0))?;
        let n = ode.field.dim();
        if n % 2 != 0 {
            return Err(cfg_err(
                "problem.name: symplectic checks need an even-dimensional (q, p) state",
            ));
        }
        let omega = BilinearForm::canonical(n / 2);
        let mut xi0 = vec![0.0; n];
        let mut eta0 = vec![0.0; n];
        xi0[0] = 1.0;
        eta0[n / 2] = 1.0;
        for tab in self.rk_only()? {
            let (mut y, mut xi, mut eta) = (ode.initial.clone(), xi0.clone(), eta0.clone());
            let w0 = omega.eval(&xi0, &eta0);
            for k in 0..steps {
                let r = symplectic_residual(&tab, &ode.field, &omega, &y, &xi, &eta, dt, &self.solver)?;
                let mut all = y.clone();
                all.extend(&xi);
                all.extend(&eta);
                let nrm = norm2(&all);
                let thr = self.thr("symplectic-residual", nrm);
                self.b
                    .row(k, None, format!("symplectic-residual[{}]", tab.name()), r.residual, thr);
                if self.cfg.problem.invariant {
                    let thr = self.thr("omega-drift", nrm);
                    self.b.row(
                        k,
                        None,
                        format!("omega-drift[{}]", tab.name()),
                        (r.omega1 - w0).abs(),
                        thr,
                    );
                }
                (y, xi, eta) = (r.y1, r.xi1, r.eta1);
            }
        }
        Ok(())
    }

    fn closure(&mut self) -> Result<()> {
        let dt = self.dt()?;
        let trials = self.cfg.run.trials.unwrap_or(1);
        let (e1, e2) = (1e-3, 1e-4);
        let tabs = self.rk_only()?;
        for t in 0..trials {
            let mut rng = trial_rng(self.cfg.seed, t);
            let ode = self.ode(&mut rng)?;
            let n = ode.field.dim();
            let eta: Vec<f64> = (0..n)
                .map(|_| {
                    let v: f64 = rng.gen_range(0.5..=1.0);
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect();
            for tab in &tabs {
                let method = Integrator::rk(tab.clone(), ode.field.clone());
                let y0 = &ode.initial;
                let ts = tangent_step(&method, y0, std::slice::from_ref(&eta), dt, &self.solver)?;
                let err = |eps: f64| -> Result<f64> {
                    let p: Vec<f64> = y0.iter().zip(&eta).map(|(a, b)| a + eps * b).collect();
                    let m: Vec<f64> = y0.iter().zip(&eta).map(|(a, b)| a - eps * b).collect();
                    let yp = rk_step(tab, &ode.field, &p, dt, &self.solver)?.y1;
                    let ym = rk_step(tab, &ode.field, &m, dt, &self.solver)?.y1;
                    let d: Vec<f64> = (0..n).map(|i| (yp[i] - ym[i]) / (2.0 * eps) - ts.etas1[0][i]).collect();
                    Ok(norm_inf(&d))
                };
                let (a, b) = (err(e1)?, err(e2)?);
                let ratio = a / b;
                let name = tab.name();
                self.b.row(t, None, format!("closure-error[{name}]"), b, f64::INFINITY);
                let thr = self.thr_fixed("closure-order-deviation", 2f64.log10());
                self.b.row(
                    t,
                    None,
                    format!("closure-order-deviation[{name}]"),
                    (ratio / 100.0).log10().abs(),
                    thr,
                );
            }
        }
        Ok(())
    }

    fn b_stability(&mut self) -> Result<()> {
        let dt = self.dt()?;
        let trials = self.cfg.run.trials.unwrap_or(1);
        let steps = self.cfg.run.steps.unwrap_or(20);
        let tabs = self.rk_only()?;
        for t in 0..trials {
            let mut rng = trial_rng(self.cfg.seed, t);
            let ode = self.ode(&mut rng)?;
            let default = if ode.name == "gradient-flow" {
                "potential"
            } else {
                "half-square"
            };
            let obs = self.observable(&ode, &mut rng, default)?;
            let n = ode.field.dim();
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
            let y0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
            for tab in &tabs {
                let (d1, d0) = contractivity_check(tab, &ode.field, &x0, &y0, dt, &self.solver)?;
                let thr = self.thr_fixed("contraction", tolerances::ALGEBRAIC);
                self.b
                    .row(t, None, format!("contraction[{}]", tab.name()), d1 - d0, thr);
                let inc = max_relative_increase(tab, &ode.field, &obs, &x0, steps, dt, &self.solver)?;
                let thr = self.thr_fixed("monotone", tolerances::ALGEBRAIC);
                self.b.row(t, None, format!("monotone[{}]", tab.name()), inc, thr);
            }
        }
        Ok(())
    }

    fn pde(&self) -> Result<(SemidiscreteSystem<f64>, BTreeMap<String, f64>)> {
        let name = self.cfg.problem.name.as_str();
        let defaults = PDE_PROBLEMS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| cfg_err(format!("problem.name: unknown semidiscrete system '{name}'")))?
            .1;
        let p = self.params(defaults)?;
        let nodes = self.cfg.problem.nodes.unwrap_or(16);
        let grid = Grid1D::periodic(nodes, p["length"])?;
        let sys = match name {
            "wave-fd" => wave_system(grid)?,
            "nls-fd" => nls_system(grid, ScalarMap::cubic(p["lambda"]))?,
            _ => kdv_system(grid, p["alpha"], p["nu"], p["theta"])?,
        };
        Ok((sys, p))
    }

    fn laws(&self, sys: &SemidiscreteSystem<f64>, p: &BTreeMap<String, f64>) -> Result<Vec<LocalConservationLaw<f64>>> {
        match self.cfg.problem.law.as_deref() {
            None => Ok(sys.laws.clone()),
            Some(name) => match sys.law(name) {
                Some(i) => Ok(vec![sys.laws[i].clone()]),
                None if sys.name == "kdv-theta" && name == "energy" => {
                    Ok(vec![kdv_energy_candidate(sys.grid, p["alpha"], p["nu"])])
                }
                None => Err(cfg_err(format!("problem.law: {} has no law '{name}'", sys.name))),
            },
        }
    }

    fn initial_pde(&self, sys: &SemidiscreteSystem<f64>, seed: u64) -> Result<Vec<f64>> {
        if let Some(v) = &self.cfg.problem.initial {
            if v.len() != sys.dim() {
                return Err(cfg_err(format!("problem.initial: expected {} values", sys.dim())));
            }
            return Ok(v.clone());
        }
        Ok(initial_state(
            sys,
            match self.cfg.problem.preset.unwrap_or(Preset::Random) {
                Preset::Gaussian => InitialPreset::Gaussian,
                Preset::PlaneWave => InitialPreset::PlaneWave { mode: 1 },
                Preset::Random => InitialPreset::Random { seed, amplitude: 1.0 },
            },
        ))
    }

    fn conservation(&mut self) -> Result<()> {
        let (sys, p) = self.pde()?;
        let laws = self.laws(&sys, &p)?;
        if let Some(trials) = self.cfg.run.contract_trials {
            for t in 0..trials {
                let y = initial_state(
                    &sys,
                    InitialPreset::Random {
                        seed: self.cfg.seed.wrapping_add(t as u64),
                        amplitude: 1.0,
                    },
                );
                let scale = 1.0 + norm2(&y).powi(2);
                for law in &laws {
                    let r = sys.contract_residual_with(law, &y);
                    let thr = self.thr_fixed("contract", tolerances::CONTRACT * scale);
                    self.b
                        .row(t, None, format!("contract[{}]", law.name()), norm_inf(&r), thr);
                }
            }
        }
        let tabs = if self.cfg.run.steps.is_some() || !self.cfg.run.dt_ladder.is_empty() {
            self.rk_only()?
        } else {
            Vec::new()
        };
        let y0 = self.initial_pde(&sys, self.cfg.seed)?;
        let mut probe = sys.clone();
        probe.laws = laws.clone();
        if let Some(steps) = self.cfg.run.steps {
            let dt = self.dt()?;
            for tab in &tabs {
                let mut y = y0.clone();
                let totals0: Vec<f64> = (0..laws.len()).map(|l| probe.total(l, &y0)).collect::<Result<_>>()?;
                for k in 0..steps {
                    let nrm = norm2(&y);
                    let mut next = None;
                    for (l, law) in laws.iter().enumerate() {
                        let st = discrete_cl_residual(tab, &probe, l, &y, dt, &self.solver)?;
                        let thr = self.thr("local-law", nrm);
                        for (node, r) in st.residuals.iter().enumerate() {
                            self.b.row(
                                k,
                                Some(node),
                                format!("local-law[{}/{}]", law.name(), tab.name()),
                                r.abs(),
                                thr,
                            );
                        }
                        let drift = (probe.total(l, &st.y1)? - totals0[l]).abs();
                        let thr = self.thr("global-law", nrm);
                        self.b.row(
                            k,
                            None,
                            format!("global-law[{}/{}]", law.name(), tab.name()),
                            drift,
                            thr,
                        );
                        next = Some(st.y1);
                    }
                    y = next.expect("at least one law");
                }
            }
        }
        if !self.cfg.run.dt_ladder.is_empty() {
            let min_order = self
                .cfg
                .run
                .min_order
                .ok_or_else(|| cfg_err("run.min_order: required with dt_ladder here"))?;
            for tab in &tabs {
                for (l, law) in laws.iter().enumerate() {
                    let mut vals = Vec::new();
                    for (i, &dt) in self.cfg.run.dt_ladder.iter().enumerate() {
                        let st = discrete_cl_residual(tab, &probe, l, &y0, dt, &self.solver)?;
                        let v = norm_inf(&st.residuals);
                        self.b.row(
                            i,
                            None,
                            format!("ladder-residual[{}/{}]", law.name(), tab.name()),
                            v,
                            f64::INFINITY,
                        );
                        vals.push(v);
                    }
                    let order = convergence::fit_order(&self.cfg.run.dt_ladder, &vals);
                    let key = format!("{}/{}", law.name(), tab.name());
                    self.b.measured_orders.insert(key.clone(), order);
                    self.b
                        .line(format!("order[{key}]: {order:.3} (required >= {min_order})"));
                    let thr = self.thr_fixed("order-shortfall", 0.0);
                    self.b
                        .row(0, None, format!("order-shortfall[{key}]"), min_order - order, thr);
                }
            }
        }
        Ok(())
    }

    fn multisymplectic(&mut self) -> Result<()> {
        let dt = self.dt()?;
        let steps = self.cfg.run.steps.unwrap_or(1);
        let (sys, _) = self.pde()?;
        if sys.name != "wave-fd" {
            return Err(cfg_err("problem.name: multisymplectic experiments use wave-fd"));
        }
        let ms = DdwWaveSystem::new(sys.grid)?;
        let seed = self.cfg.seed;
        let draw = |s: u64| {
            initial_state(
                &sys,
                InitialPreset::Random {
                    seed: s,
                    amplitude: 1.0,
                },
            )
        };
        let y0 = self.initial_pde(&sys, seed)?;
        let s0 = MsPairState::new(y0, draw(seed.wrapping_add(1)), draw(seed.wrapping_add(2)))?;
        let omega0 = ms.total_density(&s0.xi, &s0.eta);
        for tab in self.rk_only()? {
            let mut s = s0.clone();
            for k in 0..steps {
                let mut all = s.y.clone();
                all.extend(&s.xi);
                all.extend(&s.eta);
                let nrm = norm2(&all);
                let st = ms.discrete_mscl_residual(&tab, &s, dt, &self.solver)?;
                let thr = self.thr("mscl", nrm);
                for (node, r) in st.residuals.iter().enumerate() {
                    self.b.row(k, Some(node), format!("mscl[{}]", tab.name()), r.abs(), thr);
                }
                let drift = (ms.total_density(&st.state.xi, &st.state.eta) - omega0).abs();
                let thr = self.thr("global-omega", nrm);
                self.b.row(k, None, format!("global-omega[{}]", tab.name()), drift, thr);
                s = st.state;
            }
        }
        Ok(())
    }

    fn convergence(&mut self) -> Result<()> {
        let ode = self.ode(&mut trial_rng(self.cfg.seed, 0))?;
        let t_end = self
            .cfg
            .run
            .final_time
            .ok_or_else(|| cfg_err("run.final_time: required for convergence studies"))?;
        let ladder = self.cfg.run.dt_ladder.clone();
        let finest = ladder.iter().copied().fold(f64::INFINITY, f64::min);
        let ref_dt = finest / 64.0;
        let ref_cfg = SolverConfig {
            tol: 1e-15,
            ..self.solver
        };
        let gauss3 = builtin_tableau::<f64>("gauss3")?;
        let reference = convergence::integrate(
            &gauss3,
            &ode.field,
            &ode.initial,
            ref_dt,
            convergence::steps_to(t_end, ref_dt)?,
            &ref_cfg,
        )?;
        for tab in self.rk_only()? {
            let res = convergence::ladder(&tab, &ode.field, &ode.initial, t_end, &ladder, &reference, &self.solver)?;
            let name = tab.name().to_string();
            for (i, e) in res.errors.iter().enumerate() {
                self.b.row(i, None, format!("error[{name}]"), *e, f64::INFINITY);
            }
            let dev = (res.order - tab.order() as f64).abs();
            let thr = self.thr_fixed("order-deviation", tolerances::ORDER_SLACK);
            self.b.row(0, None, format!("order-deviation[{name}]"), dev, thr);
            self.b.measured_orders.insert(name.clone(), res.order);
            self.b
                .line(format!("order[{name}]: {:.3} (declared {})", res.order, tab.order()));
        }
        Ok(())
    }
}

fn diagonal(n: usize, diag: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = diag;
    }
    m
}

fn cyclic_product(y: &[f64]) -> f64 {
    let m = y.len();
    (0..m).map(|i| y[i] * y[(i + 1) % m]).sum()
}
