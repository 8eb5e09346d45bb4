//! One step of a method applied to a vector field, keeping every internal
//! stage state and stage derivative so residual formulas can be evaluated
//! against exactly what the method computed.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, norm2, norm_inf, Lu};
use crate::scalar::{lit, Real};
use crate::tableaux::{AdditiveTableau, ButcherTableau, PartitionedTableau, SplittingScheme};

pub type EvalFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
pub type JacFn<T> = Arc<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>;
pub type FlowFn<T> = Arc<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync>;
pub type FlowTangentFn<T> = Arc<dyn Fn(T, &[T], &[T]) -> Vec<T> + Send + Sync>;

/// Autonomous vector field `f: R^n -> R^n` with an optional exact Jacobian
/// action `(y, w) -> f'(y) w`. Evaluation must be a pure function.
#[derive(Clone)]
pub struct VectorField<T> {
    name: String,
    dim: usize,
    eval: EvalFn<T>,
    jac: Option<JacFn<T>>,
}

impl<T> fmt::Debug for VectorField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("exact_jacobian", &self.jac.is_some())
            .finish()
    }
}

/// Central-difference directional derivative of `g` at `y` along `w`, with a
/// perturbation scaled as `sqrt(eps) (1 + |y|) / (1 + |w|)` unless given.
pub fn central_difference<T: Real>(g: &dyn Fn(&[T]) -> Vec<T>, y: &[T], w: &[T], eps: Option<T>) -> Vec<T> {
    let wn = norm2(w);
    if wn == T::zero() {
        return vec![T::zero(); g(y).len()];
    }
    let eps = eps.unwrap_or_else(|| T::epsilon().sqrt() * (T::one() + norm2(y)) / (T::one() + wn));
    let plus: Vec<T> = y.iter().zip(w).map(|(&a, &b)| a + eps * b).collect();
    let minus: Vec<T> = y.iter().zip(w).map(|(&a, &b)| a - eps * b).collect();
    let two_eps = eps + eps;
    g(&plus)
        .into_iter()
        .zip(g(&minus))
        .map(|(p, m)| (p - m) / two_eps)
        .collect()
}

impl<T: Real> VectorField<T> {
    pub fn new(name: impl Into<String>, dim: usize, eval: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            jac: None,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[T], &[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn without_jacobian(mut self) -> Self {
        self.jac = None;
        self
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, move |_| vec![T::zero(); dim]).with_jacobian(move |_, _| vec![T::zero(); dim])
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn has_exact_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn eval(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.dim, "state dimension of {}", self.name);
        let out = (self.eval)(y);
        debug_assert_eq!(out.len(), self.dim, "output dimension of {}", self.name);
        out
    }

    /// `f'(y) w`, exact when available, central differences otherwise.
    pub fn jac_action(&self, y: &[T], w: &[T]) -> Vec<T> {
        self.jac_action_with(y, w, None)
    }

    pub fn jac_action_with(&self, y: &[T], w: &[T], eps: Option<T>) -> Vec<T> {
        match &self.jac {
            Some(j) => j(y, w),
            None => central_difference(&|x: &[T]| (self.eval)(x), y, w, eps),
        }
    }

    /// Row-major `n x n` Jacobian assembled column by column.
    pub fn jacobian(&self, y: &[T], eps: Option<T>) -> Vec<T> {
        let n = self.dim;
        let mut jac = vec![T::zero(); n * n];
        let mut e = vec![T::zero(); n];
        for k in 0..n {
            e[k] = T::one();
            let col = self.jac_action_with(y, &e, eps);
            for i in 0..n {
                jac[i * n + k] = col[i];
            }
            e[k] = T::zero();
        }
        jac
    }

    /// Field with components outside `keep` set to zero: the projection of
    /// `f` onto one block of a partitioned state.
    pub fn restricted(&self, keep: Vec<bool>) -> Self {
        assert_eq!(keep.len(), self.dim);
        let keep = Arc::new(keep);
        let base = self.clone();
        let k1 = Arc::clone(&keep);
        let mut out = Self::new(format!("{}|part", self.name), self.dim, move |y| {
            let mut v = base.eval(y);
            for (vi, &kk) in v.iter_mut().zip(k1.iter()) {
                if !kk {
                    *vi = T::zero();
                }
            }
            v
        });
        if self.jac.is_some() {
            let base = self.clone();
            out = out.with_jacobian(move |y, w| {
                let mut v = base.jac_action(y, w);
                for (vi, &kk) in v.iter_mut().zip(keep.iter()) {
                    if !kk {
                        *vi = T::zero();
                    }
                }
                v
            });
        }
        out
    }

    /// Pointwise sum of fields of equal dimension.
    pub fn sum(name: impl Into<String>, parts: &[VectorField<T>]) -> Result<Self> {
        let dim = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("sum of no fields".into()))?
            .dim;
        for p in parts {
            check_dim(dim, p.dim, "summed field")?;
        }
        let ps: Arc<Vec<VectorField<T>>> = Arc::new(parts.to_vec());
        let pe = Arc::clone(&ps);
        let mut out = Self::new(name, dim, move |y| {
            let mut acc = vec![T::zero(); dim];
            for p in pe.iter() {
                axpy(T::one(), &p.eval(y), &mut acc);
            }
            acc
        });
        if parts.iter().all(|p| p.jac.is_some()) {
            out = out.with_jacobian(move |y, w| {
                let mut acc = vec![T::zero(); dim];
                for p in ps.iter() {
                    axpy(T::one(), &p.jac_action(y, w), &mut acc);
                }
                acc
            });
        }
        Ok(out)
    }
}

/// Exact time-`t` flow of one splitting component, optionally with its
/// linearisation `(t, y, w) -> D phi_t(y) w`.
#[derive(Clone)]
pub struct ExactFlow<T> {
    name: String,
    dim: usize,
    flow: FlowFn<T>,
    tangent: Option<FlowTangentFn<T>>,
}

impl<T> fmt::Debug for ExactFlow<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactFlow")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl<T: Real> ExactFlow<T> {
    pub fn new(name: impl Into<String>, dim: usize, flow: impl Fn(T, &[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            dim,
            flow: Arc::new(flow),
            tangent: None,
        }
    }

    pub fn with_tangent(mut self, tangent: impl Fn(T, &[T], &[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.tangent = Some(Arc::new(tangent));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn apply(&self, t: T, y: &[T]) -> Vec<T> {
        (self.flow)(t, y)
    }
    pub fn tangent(&self) -> Option<&FlowTangentFn<T>> {
        self.tangent.as_ref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Newton,
    FixedPoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Stage residual tolerance, relative to `1 + |y0|_inf`.
    pub tol: T,
    pub max_iters: usize,
    pub strategy: Strategy,
    /// Finite-difference perturbation for Jacobians; scaled with the state
    /// when `None`.
    pub jac_eps: Option<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::default_solver_tol(),
            max_iters: 100,
            strategy: Strategy::Newton,
            jac_eps: None,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// End state plus the internal stage data of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub y1: Vec<T>,
    /// Stage states `Y_i`.
    pub stages: Vec<Vec<T>>,
    /// `stage_derivs[nu][i] = f^[nu](Y_i)`; a single component for plain
    /// Runge–Kutta steps.
    pub stage_derivs: Vec<Vec<Vec<T>>>,
    pub solver_iters: usize,
    pub solver_residual: T,
}

impl<T: Real> StepResult<T> {
    fn state_only(y1: Vec<T>) -> Self {
        Self {
            y1,
            stages: Vec::new(),
            stage_derivs: Vec::new(),
            solver_iters: 0,
            solver_residual: T::zero(),
        }
    }

    /// Total stage derivatives `f(Y_i)`, summed over components.
    pub fn total_derivs(&self) -> Vec<Vec<T>> {
        let Some(first) = self.stage_derivs.first() else {
            return Vec::new();
        };
        let mut out = first.clone();
        for comp in &self.stage_derivs[1..] {
            for (acc, d) in out.iter_mut().zip(comp) {
                axpy(T::one(), d, acc);
            }
        }
        out
    }
}

/// A method bound to the data it needs to advance a state.
#[derive(Clone, Debug)]
pub enum Integrator<T> {
    Rk {
        tableau: ButcherTableau<T>,
        field: VectorField<T>,
    },
    Prk {
        tableau: PartitionedTableau<T>,
        field: VectorField<T>,
    },
    Ark {
        tableau: AdditiveTableau<T>,
        parts: Vec<VectorField<T>>,
    },
    Splitting {
        scheme: SplittingScheme<T>,
        flows: Vec<ExactFlow<T>>,
    },
    AromaticEuler {
        field: VectorField<T>,
        eps_div: T,
    },
}

impl<T: Real> Integrator<T> {
    pub fn rk(tableau: ButcherTableau<T>, field: VectorField<T>) -> Self {
        Self::Rk { tableau, field }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Rk { field, .. } | Self::Prk { field, .. } | Self::AromaticEuler { field, .. } => field.dim(),
            Self::Ark { parts, .. } => parts.first().map_or(0, VectorField::dim),
            Self::Splitting { flows, .. } => flows.first().map_or(0, ExactFlow::dim),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Rk { tableau, .. } => tableau.name().to_string(),
            Self::Prk { tableau, .. } => format!("prk[{}]", tableau.name()),
            Self::Ark { tableau, .. } => format!("ark[{}]", tableau.name()),
            Self::Splitting { .. } => "splitting".to_string(),
            Self::AromaticEuler { .. } => "aromatic-euler".to_string(),
        }
    }

    pub fn step(&self, y0: &[T], dt: T, cfg: &SolverConfig<T>) -> Result<StepResult<T>> {
        match self {
            Self::Rk { tableau, field } => rk_step(tableau, field, y0, dt, cfg),
            Self::Prk { tableau, field } => prk_step(tableau, field, y0, dt, cfg),
            Self::Ark { tableau, parts } => ark_step(tableau, parts, y0, dt, cfg),
            Self::Splitting { scheme, flows } => splitting_step(scheme, flows, y0, dt).map(StepResult::state_only),
            Self::AromaticEuler { field, eps_div } => {
                aromatic_euler_step(field, y0, dt, *eps_div).map(StepResult::state_only)
            }
        }
    }
}

pub fn rk_step<T: Real>(
    tab: &ButcherTableau<T>,
    f: &VectorField<T>,
    y0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<StepResult<T>> {
    check_dim(f.dim(), y0.len(), "rk_step initial state")?;
    stage_solve(std::slice::from_ref(tab), std::slice::from_ref(f), y0, dt, cfg)
}

/// Partitioned step: the additive step with `f^[nu]` the projection of `f`
/// onto the coordinates assigned to part `nu`.
pub fn prk_step<T: Real>(
    ptab: &PartitionedTableau<T>,
    f: &VectorField<T>,
    y0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<StepResult<T>> {
    check_dim(f.dim(), y0.len(), "prk_step initial state")?;
    check_dim(f.dim(), ptab.partition().len(), "partition")?;
    let parts = partition_fields(ptab, f);
    stage_solve(ptab.parts(), &parts, y0, dt, cfg)
}

pub(crate) fn partition_fields<T: Real>(ptab: &PartitionedTableau<T>, f: &VectorField<T>) -> Vec<VectorField<T>> {
    (0..ptab.parts().len())
        .map(|nu| f.restricted(ptab.partition().iter().map(|&p| p == nu).collect()))
        .collect()
}

pub fn ark_step<T: Real>(
    atab: &AdditiveTableau<T>,
    fs: &[VectorField<T>],
    y0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<StepResult<T>> {
    check_dim(atab.components(), fs.len(), "additive components")?;
    for f in fs {
        check_dim(f.dim(), y0.len(), "ark_step initial state")?;
    }
    stage_solve(atab.parts(), fs, y0, dt, cfg)
}

/// Applies the component flows in scheme order.
pub fn splitting_step<T: Real>(scheme: &SplittingScheme<T>, flows: &[ExactFlow<T>], y0: &[T], dt: T) -> Result<Vec<T>> {
    check_dim(scheme.components(), flows.len(), "splitting flows")?;
    for fl in flows {
        check_dim(fl.dim(), y0.len(), "splitting flow dimension")?;
    }
    let mut y = y0.to_vec();
    for &(nu, tau) in scheme.stages() {
        y = flows[nu].apply(tau * dt, &y);
    }
    Ok(y)
}

/// Divergence of `f` at `y`: the Jacobian trace when an exact action is
/// available, central differences with step `eps_div` otherwise.
pub fn divergence<T: Real>(f: &VectorField<T>, y: &[T], eps_div: T) -> T {
    let n = f.dim();
    let mut e = vec![T::zero(); n];
    let mut acc = T::zero();
    for k in 0..n {
        if f.has_exact_jacobian() {
            e[k] = T::one();
            acc = acc + f.jac_action(y, &e)[k];
            e[k] = T::zero();
        } else {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[k] = yp[k] + eps_div;
            ym[k] = ym[k] - eps_div;
            acc = acc + (f.eval(&yp)[k] - f.eval(&ym)[k]) / (eps_div + eps_div);
        }
    }
    acc
}

/// `y1 = y0 + dt^2 (f div f)(y0)`.
pub fn aromatic_euler_step<T: Real>(f: &VectorField<T>, y0: &[T], dt: T, eps_div: T) -> Result<Vec<T>> {
    check_dim(f.dim(), y0.len(), "aromatic step initial state")?;
    if !(eps_div > T::zero()) {
        return Err(Error::InvalidArgument("divergence step must be positive".into()));
    }
    let div = divergence(f, y0, eps_div);
    let fy = f.eval(y0);
    let mut y1 = y0.to_vec();
    axpy(dt * dt * div, &fy, &mut y1);
    Ok(y1)
}

struct StageSystem<'a, T> {
    parts: &'a [ButcherTableau<T>],
    fields: &'a [VectorField<T>],
    y0: &'a [T],
    dt: T,
    n: usize,
    s: usize,
}

impl<T: Real> StageSystem<'_, T> {
    fn stage_states(&self, z: &[Vec<T>]) -> Vec<Vec<T>> {
        z.iter()
            .map(|zi| self.y0.iter().zip(zi).map(|(&a, &b)| a + b).collect())
            .collect()
    }

    fn derivs(&self, stages: &[Vec<T>]) -> Vec<Vec<Vec<T>>> {
        self.fields
            .iter()
            .map(|f| stages.iter().map(|y| f.eval(y)).collect())
            .collect()
    }

    /// `dt sum_nu sum_j a^[nu]_ij f^[nu](Y_j)` for stage `i`.
    fn increment(&self, i: usize, derivs: &[Vec<Vec<T>>]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.n];
        for (tab, d) in self.parts.iter().zip(derivs) {
            for j in 0..self.s {
                let a = tab.a()[i][j];
                if a != T::zero() {
                    axpy(self.dt * a, &d[j], &mut acc);
                }
            }
        }
        acc
    }

    /// Scale of the terms summed in a stage residual, for the round-off floor.
    fn magnitude(&self, z: &[Vec<T>], derivs: &[Vec<Vec<T>>]) -> T {
        let mut m = T::zero();
        for i in 0..self.s {
            let mut term = norm_inf(&z[i]);
            for (tab, d) in self.parts.iter().zip(derivs) {
                for j in 0..self.s {
                    term = term + (self.dt * tab.a()[i][j]).abs() * norm_inf(&d[j]);
                }
            }
            m = m.max(term);
        }
        m
    }

    fn finish(&self, stages: Vec<Vec<T>>, derivs: Vec<Vec<Vec<T>>>, iters: usize, residual: T) -> StepResult<T> {
        let mut inc = vec![T::zero(); self.n];
        for (tab, d) in self.parts.iter().zip(&derivs) {
            for i in 0..self.s {
                axpy(self.dt * tab.b()[i], &d[i], &mut inc);
            }
        }
        let y1 = self.y0.iter().zip(&inc).map(|(&a, &b)| a + b).collect();
        StepResult {
            y1,
            stages,
            stage_derivs: derivs,
            solver_iters: iters,
            solver_residual: residual,
        }
    }

    fn newton_matrix(&self, jacs: &[Vec<Vec<T>>]) -> Result<Lu<T>> {
        // block (i, j) = delta_ij I - dt sum_nu a^[nu]_ij J^[nu](Y_j)
        let (n, s) = (self.n, self.s);
        let size = n * s;
        let mut m = vec![T::zero(); size * size];
        for i in 0..s {
            for j in 0..s {
                for (nu, tab) in self.parts.iter().enumerate() {
                    let a = tab.a()[i][j];
                    if a == T::zero() {
                        continue;
                    }
                    let jac = &jacs[j][nu];
                    for r in 0..n {
                        for c in 0..n {
                            let idx = (i * n + r) * size + j * n + c;
                            m[idx] = m[idx] - self.dt * a * jac[r * n + c];
                        }
                    }
                }
            }
            for r in 0..n {
                let idx = (i * n + r) * size + i * n + r;
                m[idx] = m[idx] + T::one();
            }
        }
        Lu::factor(m, size)
    }
}

fn stage_solve<T: Real>(
    parts: &[ButcherTableau<T>],
    fields: &[VectorField<T>],
    y0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<StepResult<T>> {
    cfg.validate()?;
    let sys = StageSystem {
        parts,
        fields,
        y0,
        dt,
        n: y0.len(),
        s: parts[0].stages(),
    };

    if parts.iter().all(ButcherTableau::is_explicit) {
        let mut stages: Vec<Vec<T>> = Vec::with_capacity(sys.s);
        let mut derivs: Vec<Vec<Vec<T>>> = vec![Vec::with_capacity(sys.s); fields.len()];
        for i in 0..sys.s {
            let inc = sys.increment(i, &derivs);
            let yi: Vec<T> = y0.iter().zip(&inc).map(|(&a, &b)| a + b).collect();
            for (d, f) in derivs.iter_mut().zip(fields) {
                d.push(f.eval(&yi));
            }
            stages.push(yi);
        }
        return Ok(sys.finish(stages, derivs, 0, T::zero()));
    }

    // start from z_i = dt sum_nu (sum_j a_ij^[nu]) f^[nu](y0)
    let f0: Vec<Vec<T>> = fields.iter().map(|f| f.eval(y0)).collect();
    let mut z: Vec<Vec<T>> = (0..sys.s)
        .map(|i| {
            let mut zi = vec![T::zero(); sys.n];
            for (tab, fv) in parts.iter().zip(&f0) {
                let row: T = tab.a()[i].iter().copied().sum();
                axpy(dt * row, fv, &mut zi);
            }
            zi
        })
        .collect();

    let scale = T::one() + norm_inf(y0);
    let floor = T::epsilon() * lit(64.0);
    let mut lu = None;
    if cfg.strategy == Strategy::Newton {
        let j0: Vec<Vec<T>> = fields.iter().map(|f| f.jacobian(y0, cfg.jac_eps)).collect();
        lu = Some(sys.newton_matrix(&vec![j0; sys.s])?);
    }
    let mut prev = T::infinity();
    let mut last = T::infinity();
    for iter in 0..=cfg.max_iters {
        let stages = sys.stage_states(&z);
        let derivs = sys.derivs(&stages);
        let mut res = Vec::with_capacity(sys.n * sys.s);
        for (i, zi) in z.iter().enumerate() {
            let inc = sys.increment(i, &derivs);
            res.extend(zi.iter().zip(&inc).map(|(&a, &b)| a - b));
        }
        let r = norm_inf(&res);
        last = r;
        if !r.is_finite() {
            break;
        }
        let stalled = r >= prev * lit(0.5);
        if r <= cfg.tol * scale || (stalled && r <= floor * (scale + sys.magnitude(&z, &derivs))) {
            return Ok(sys.finish(stages, derivs, iter, r / scale));
        }
        if iter == cfg.max_iters {
            break;
        }
        match cfg.strategy {
            Strategy::Newton => {
                if stalled {
                    let jacs: Vec<Vec<Vec<T>>> = stages
                        .iter()
                        .map(|y| fields.iter().map(|f| f.jacobian(y, cfg.jac_eps)).collect())
                        .collect();
                    lu = Some(sys.newton_matrix(&jacs)?);
                }
                let rhs: Vec<T> = res.iter().map(|&v| -v).collect();
                let delta = lu.as_ref().expect("newton matrix").solve(&rhs);
                for (i, zi) in z.iter_mut().enumerate() {
                    axpy(T::one(), &delta[i * sys.n..(i + 1) * sys.n], zi);
                }
            }
            Strategy::FixedPoint => {
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi = sys.increment(i, &derivs);
                }
            }
        }
        prev = r;
    }
    Err(Error::NonConvergence {
        iters: cfg.max_iters,
        residual: (last / scale).to_f64_lossy(),
    })
}
