//! Observables `F: R^n -> R^m`, the augmented system `y' = f, z' = F'(y) f(y)`,
//! functional-equivariance residuals and the discrete identities that follow
//! from them (brackets, forced energy balances, contractivity, monotonicity).

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, matvec, norm2};
use crate::scalar::{lit, Real};
use crate::stepper::{
    central_difference, partition_fields, rk_step, ExactFlow, Integrator, SolverConfig, StepResult, VectorField,
};
use crate::tableaux::ButcherTableau;

type MapFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
type DerivFn<T> = Arc<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableClass {
    Affine,
    Quadratic,
    BilinearPartitioned,
    General,
}

/// Scalar quadratic `F(y) = y^T C y + d^T y + e`, `C` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm<T> {
    pub c: Vec<T>,
    pub d: Vec<T>,
    pub e: T,
}

impl<T: Real> QuadraticForm<T> {
    pub fn new(c: Vec<T>, d: Vec<T>, e: T) -> Result<Self> {
        check_dim(d.len() * d.len(), c.len(), "quadratic form matrix")?;
        Ok(Self { c, d, e })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn eval(&self, y: &[T]) -> T {
        dot(y, &matvec(&self.c, self.dim(), y)) + dot(&self.d, y) + self.e
    }

    /// `(C + C^T) y + d`.
    pub fn gradient(&self, y: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut g = self.d.clone();
        for i in 0..n {
            for j in 0..n {
                g[i] = g[i] + (self.c[i * n + j] + self.c[j * n + i]) * y[j];
            }
        }
        g
    }

    /// Symmetric Hessian `C + C^T`, row-major.
    pub fn hessian(&self) -> Vec<T> {
        let n = self.dim();
        let mut h = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = self.c[i * n + j] + self.c[j * n + i];
            }
        }
        h
    }
}

/// A smooth map of the state together with its derivative action.
#[derive(Clone)]
pub struct Observable<T> {
    name: String,
    n: usize,
    m: usize,
    eval: MapFn<T>,
    deriv: DerivFn<T>,
    class: ObservableClass,
    quadratic: Option<QuadraticForm<T>>,
}

impl<T> fmt::Debug for Observable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("class", &self.class)
            .finish()
    }
}

impl<T: Real> Observable<T> {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        class: ObservableClass,
        eval: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
        deriv: impl Fn(&[T], &[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            m,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            class,
            quadratic: None,
        }
    }

    /// Scalar observable with derivative given as a gradient.
    pub fn scalar(
        name: impl Into<String>,
        n: usize,
        class: ObservableClass,
        value: impl Fn(&[T]) -> T + Send + Sync + 'static,
        gradient: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            name,
            n,
            1,
            class,
            move |y| vec![value(y)],
            move |y, w| vec![dot(&gradient(y), w)],
        )
    }

    /// `F(y) = C y + e` with `C` an `m x n` row-major matrix.
    pub fn affine(name: impl Into<String>, c: Vec<T>, e: Vec<T>) -> Result<Self> {
        let m = e.len();
        if m == 0 || !c.len().is_multiple_of(m) {
            return Err(Error::InvalidArgument("affine observable shape".into()));
        }
        let n = c.len() / m;
        let c = Arc::new(c);
        let c2 = Arc::clone(&c);
        Ok(Self::new(
            name,
            n,
            m,
            ObservableClass::Affine,
            move |y| {
                let mut v = matvec(&c, m, y);
                axpy(T::one(), &e, &mut v);
                v
            },
            move |_, w| matvec(&c2, m, w),
        ))
    }

    pub fn quadratic(name: impl Into<String>, form: QuadraticForm<T>) -> Self {
        let n = form.dim();
        let f1 = form.clone();
        let f2 = form.clone();
        let mut obs = Self::new(
            name,
            n,
            1,
            ObservableClass::Quadratic,
            move |y| vec![f1.eval(y)],
            move |y, w| vec![dot(&f2.gradient(y), w)],
        );
        obs.quadratic = Some(form);
        obs
    }

    /// Constant map, `F' = 0`.
    pub fn constant(n: usize, value: Vec<T>) -> Self {
        let m = value.len();
        Self::new(
            "constant",
            n,
            m,
            ObservableClass::Affine,
            move |_| value.clone(),
            move |_, _| vec![T::zero(); m],
        )
    }

    pub fn with_class(mut self, class: ObservableClass) -> Self {
        self.class = class;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn class(&self) -> ObservableClass {
        self.class
    }
    pub fn quadratic_form(&self) -> Option<&QuadraticForm<T>> {
        self.quadratic.as_ref()
    }

    pub fn eval(&self, y: &[T]) -> Vec<T> {
        (self.eval)(y)
    }

    /// First component of `F(y)`; the usual case of a scalar functional.
    pub fn value(&self, y: &[T]) -> T {
        self.eval(y)[0]
    }

    pub fn deriv(&self, y: &[T], w: &[T]) -> Vec<T> {
        (self.deriv)(y, w)
    }

    /// `F''(y)[a, w]`: exact for affine and quadratic observables, central
    /// differences of `F'` otherwise.
    pub fn second_deriv(&self, y: &[T], a: &[T], w: &[T], eps: Option<T>) -> Vec<T> {
        match (self.class, &self.quadratic) {
            (ObservableClass::Affine, _) => vec![T::zero(); self.m],
            (_, Some(q)) => vec![dot(a, &matvec(&q.hessian(), self.n, w))],
            _ => central_difference(&|x: &[T]| self.deriv(x, a), y, w, eps),
        }
    }
}

/// `g(y, z) = (f(y), F'(y) f(y))` on `R^(n+m)`.
#[derive(Clone, Debug)]
pub struct AugmentedSystem<T> {
    pub base: VectorField<T>,
    pub obs: Observable<T>,
    pub combined: VectorField<T>,
}

pub fn augment<T: Real>(f: &VectorField<T>, obs: &Observable<T>) -> Result<AugmentedSystem<T>> {
    augment_with(f, obs, None)
}

pub fn augment_with<T: Real>(
    f: &VectorField<T>,
    obs: &Observable<T>,
    jac_eps: Option<T>,
) -> Result<AugmentedSystem<T>> {
    check_dim(f.dim(), obs.n(), "observable input")?;
    let (n, m) = (f.dim(), obs.m());
    let (fe, oe) = (f.clone(), obs.clone());
    let eval = move |x: &[T]| {
        let y = &x[..n];
        let fy = fe.eval(y);
        let mut out = fy.clone();
        out.extend(oe.deriv(y, &fy));
        out
    };
    let (fj, oj) = (f.clone(), obs.clone());
    let jac = move |x: &[T], w: &[T]| {
        let (y, wy) = (&x[..n], &w[..n]);
        let dy = fj.jac_action_with(y, wy, jac_eps);
        let fy = fj.eval(y);
        let mut dz = oj.deriv(y, &dy);
        axpy(T::one(), &oj.second_deriv(y, &fy, wy, jac_eps), &mut dz);
        let mut out = dy;
        out.extend(dz);
        out
    };
    let combined = VectorField::new(format!("{}+{}", f.name(), obs.name()), n + m, eval).with_jacobian(jac);
    Ok(AugmentedSystem {
        base: f.clone(),
        obs: obs.clone(),
        combined,
    })
}

/// Chain-rule augmentation of an exact flow:
/// `(y, z) -> (phi_t(y), z + F(phi_t(y)) - F(y))`.
pub fn augment_flow<T: Real>(flow: &ExactFlow<T>, obs: &Observable<T>) -> Result<ExactFlow<T>> {
    check_dim(flow.dim(), obs.n(), "observable input")?;
    let (n, m) = (flow.dim(), obs.m());
    let (fl, ob) = (flow.clone(), obs.clone());
    Ok(ExactFlow::new(
        format!("{}+{}", flow.name(), obs.name()),
        n + m,
        move |t, x: &[T]| {
            let (y, z) = x.split_at(n);
            let y1 = fl.apply(t, y);
            let before = ob.eval(y);
            let after = ob.eval(&y1);
            let mut out = y1;
            out.extend((0..m).map(|i| z[i] + after[i] - before[i]));
            out
        },
    ))
}

/// The same method applied to the augmented system.
pub fn augment_integrator<T: Real>(method: &Integrator<T>, obs: &Observable<T>) -> Result<Integrator<T>> {
    Ok(match method {
        Integrator::Rk { tableau, field } => Integrator::Rk {
            tableau: tableau.clone(),
            field: augment(field, obs)?.combined,
        },
        // Partitioned steps are the additive steps with projected fields; the
        // observable picks up F' P_nu f in each part.
        Integrator::Prk { tableau, field } => Integrator::Ark {
            tableau: tableau.as_additive().clone(),
            parts: partition_fields(tableau, field)
                .iter()
                .map(|p| augment(p, obs).map(|a| a.combined))
                .collect::<Result<_>>()?,
        },
        Integrator::Ark { tableau, parts } => Integrator::Ark {
            tableau: tableau.clone(),
            parts: parts
                .iter()
                .map(|p| augment(p, obs).map(|a| a.combined))
                .collect::<Result<_>>()?,
        },
        Integrator::Splitting { scheme, flows } => Integrator::Splitting {
            scheme: scheme.clone(),
            flows: flows.iter().map(|fl| augment_flow(fl, obs)).collect::<Result<_>>()?,
        },
        Integrator::AromaticEuler { field, eps_div } => Integrator::AromaticEuler {
            field: augment(field, obs)?.combined,
            eps_div: *eps_div,
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeResidual<T> {
    /// `z1 - F(y1)`, unscaled.
    pub residual: Vec<T>,
    pub z1: Vec<T>,
    pub f_y1: Vec<T>,
    /// End state of the plain (unaugmented) step.
    pub y1: Vec<T>,
    /// `|y1' - y1|` between the augmented and plain runs.
    pub projection_gap: T,
}

impl<T: Real> FeResidual<T> {
    pub fn max_abs(&self) -> T {
        self.residual.iter().fold(T::zero(), |a, r| a.max(r.abs()))
    }
}

/// Runs `method` on `(y0, F(y0))` in the augmented space and reports how far
/// `z1` is from `F(y1)`.
pub fn fe_residual<T: Real>(
    method: &Integrator<T>,
    obs: &Observable<T>,
    y0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<FeResidual<T>> {
    check_dim(method.dim(), y0.len(), "fe_residual initial state")?;
    let n = y0.len();
    let plain = method.step(y0, dt, cfg)?;
    let aug = augment_integrator(method, obs)?;
    let mut x0 = y0.to_vec();
    x0.extend(obs.eval(y0));
    let out = aug.step(&x0, dt, cfg)?;
    let (y1_aug, z1) = out.y1.split_at(n);
    let f_y1 = obs.eval(y1_aug);
    let residual = z1.iter().zip(&f_y1).map(|(&z, &f)| z - f).collect();
    let gap: Vec<T> = y1_aug.iter().zip(&plain.y1).map(|(&a, &b)| a - b).collect();
    Ok(FeResidual {
        residual,
        z1: z1.to_vec(),
        f_y1,
        y1: plain.y1,
        projection_gap: norm2(&gap),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub y1: f64,
    pub u1: f64,
    pub y1_squared: f64,
    pub z1: f64,
    pub fe_residual: f64,
}

/// Midpoint on `y' = -y` and on the related `u' = -2u` (`u = y^2`), one step
/// of size 1 from `y0 = u0 = 1`: the map does not commute with `y -> y^2`,
/// yet the augmented path tracks `y^2` exactly.
pub fn strong_equivariance_counterexample() -> Result<Counterexample> {
    let cfg = SolverConfig::<f64>::default();
    let mid = crate::tableaux::builtin_tableau::<f64>("midpoint")?;
    let f = VectorField::new("decay", 1, |y: &[f64]| vec![-y[0]]).with_jacobian(|_, w| vec![-w[0]]);
    let g = VectorField::new("related", 1, |u: &[f64]| vec![-2.0 * u[0]]).with_jacobian(|_, w| vec![-2.0 * w[0]]);
    let square = Observable::quadratic("square", QuadraticForm::new(vec![1.0], vec![0.0], 0.0)?);
    let y1 = rk_step(&mid, &f, &[1.0], 1.0, &cfg)?.y1[0];
    let u1 = rk_step(&mid, &g, &[1.0], 1.0, &cfg)?.y1[0];
    let fe = fe_residual(&Integrator::rk(mid, f), &square, &[1.0], 1.0, &cfg)?;
    Ok(Counterexample {
        y1,
        u1,
        y1_squared: y1 * y1,
        z1: fe.z1[0],
        fe_residual: fe.residual[0],
    })
}

/// `|F(y1) - F(y0) - dt sum_i b_i {F,H}(Y_i)|` for one step of `tab` on the
/// Hamiltonian field `f`.
pub fn bracket_identity_residual<T: Real>(
    tab: &ButcherTableau<T>,
    f: &VectorField<T>,
    obs: &Observable<T>,
    bracket: &dyn Fn(&[T]) -> T,
    y0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    let step = rk_step(tab, f, y0, dt, cfg)?;
    let mut rhs = obs.value(y0);
    for (bi, yi) in tab.b().iter().zip(&step.stages) {
        rhs = rhs + dt * *bi * bracket(yi);
    }
    Ok((obs.value(&step.y1) - rhs).abs())
}

type ForcingFn<T> = Arc<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>;

/// `q' = M^{-1} p`, `p' = -grad V(q) + phi(q, p)` on `y = (q, p)`.
#[derive(Clone)]
pub struct ForcedMechanical<T> {
    dof: usize,
    mass_inv: Vec<T>,
    potential: Observable<T>,
    forcing: ForcingFn<T>,
}

impl<T> fmt::Debug for ForcedMechanical<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForcedMechanical")
            .field("dof", &self.dof)
            .field("potential", &self.potential)
            .finish()
    }
}

impl<T: Real> ForcedMechanical<T> {
    pub fn new(
        mass: &[T],
        potential: Observable<T>,
        forcing: impl Fn(&[T], &[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Result<Self> {
        let dof = potential.n();
        check_dim(dof * dof, mass.len(), "mass matrix")?;
        Ok(Self {
            dof,
            mass_inv: crate::linalg::inverse(mass, dof)?,
            potential,
            forcing: Arc::new(forcing),
        })
    }

    /// Linear damping `phi = -c p`.
    pub fn damped(mass: &[T], potential: Observable<T>, c: T) -> Result<Self> {
        Self::new(mass, potential, move |_, p| p.iter().map(|&v| -c * v).collect())
    }

    pub fn dim(&self) -> usize {
        2 * self.dof
    }

    fn grad_v(&self, q: &[T]) -> Vec<T> {
        let mut e = vec![T::zero(); self.dof];
        (0..self.dof)
            .map(|k| {
                e[k] = T::one();
                let g = self.potential.deriv(q, &e)[0];
                e[k] = T::zero();
                g
            })
            .collect()
    }

    pub fn field(&self) -> VectorField<T> {
        let sys = self.clone();
        VectorField::new("forced-mechanical", self.dim(), move |y| {
            let (q, p) = y.split_at(sys.dof);
            let mut out = matvec(&sys.mass_inv, sys.dof, p);
            let mut pdot = sys.forcing.as_ref()(q, p);
            axpy(-T::one(), &sys.grad_v(q), &mut pdot);
            out.extend(pdot);
            out
        })
    }

    pub fn kinetic(&self, y: &[T]) -> T {
        let p = &y[self.dof..];
        lit::<T>(0.5) * dot(p, &matvec(&self.mass_inv, self.dof, p))
    }

    pub fn hamiltonian(&self, y: &[T]) -> T {
        self.kinetic(y) + self.potential.value(&y[..self.dof])
    }

    /// `|H(y1) - H(y0) - dt sum_i b_i P_i^T M^{-1} phi(Q_i, P_i)|`.
    pub fn dissipation_identity_residual(
        &self,
        tab: &ButcherTableau<T>,
        y0: &[T],
        dt: T,
        cfg: &SolverConfig<T>,
    ) -> Result<T> {
        let step = rk_step(tab, &self.field(), y0, dt, cfg)?;
        let work = self.weighted_power(tab, &step, false);
        Ok((self.hamiltonian(&step.y1) - self.hamiltonian(y0) - dt * work).abs())
    }

    /// `|K(y1) - K(y0) - dt sum_i b_i P_i^T M^{-1} (-grad V(Q_i) + phi(Q_i, P_i))|`
    /// with `K` the kinetic energy; holds for any potential.
    pub fn kinetic_work_identity_residual(
        &self,
        tab: &ButcherTableau<T>,
        y0: &[T],
        dt: T,
        cfg: &SolverConfig<T>,
    ) -> Result<T> {
        let step = rk_step(tab, &self.field(), y0, dt, cfg)?;
        let work = self.weighted_power(tab, &step, true);
        Ok((self.kinetic(&step.y1) - self.kinetic(y0) - dt * work).abs())
    }

    fn weighted_power(&self, tab: &ButcherTableau<T>, step: &StepResult<T>, with_potential: bool) -> T {
        let mut acc = T::zero();
        for (bi, yi) in tab.b().iter().zip(&step.stages) {
            let (q, p) = yi.split_at(self.dof);
            let mut force = self.forcing.as_ref()(q, p);
            if with_potential {
                axpy(-T::one(), &self.grad_v(q), &mut force);
            }
            let v = matvec(&self.mass_inv, self.dof, p);
            acc = acc + *bi * dot(&v, &force);
        }
        acc
    }
}

/// `(|x1 - y1|, |x0 - y0|)` after one step from each of two initial states.
pub fn contractivity_check<T: Real>(
    tab: &ButcherTableau<T>,
    f: &VectorField<T>,
    x0: &[T],
    y0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<(T, T)> {
    let x1 = rk_step(tab, f, x0, dt, cfg)?.y1;
    let y1 = rk_step(tab, f, y0, dt, cfg)?.y1;
    let d1: Vec<T> = x1.iter().zip(&y1).map(|(&a, &b)| a - b).collect();
    let d0: Vec<T> = x0.iter().zip(y0).map(|(&a, &b)| a - b).collect();
    Ok((norm2(&d1), norm2(&d0)))
}

/// Whether `F(y_k)` is nonincreasing, to `1e-12 (1 + |F|)`, over `steps`
/// steps of `tab`.
pub fn monotone_decrease_check<T: Real>(
    tab: &ButcherTableau<T>,
    f: &VectorField<T>,
    obs: &Observable<T>,
    y0: &[T],
    steps: usize,
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<bool> {
    let tol: T = lit(crate::tolerances::ALGEBRAIC);
    let mut y = y0.to_vec();
    let mut prev = obs.value(&y);
    for _ in 0..steps {
        y = rk_step(tab, f, &y, dt, cfg)?.y1;
        let next = obs.value(&y);
        if next > prev + tol * (T::one() + prev.abs()) {
            return Ok(false);
        }
        prev = next;
    }
    Ok(true)
}

/// Largest relative step-to-step increase `(F(y_{k+1}) - F(y_k)) / (1 + |F(y_k)|)`
/// over `steps` steps of `tab`; nonpositive when `F` never grows.
pub fn max_relative_increase<T: Real>(
    tab: &ButcherTableau<T>,
    f: &VectorField<T>,
    obs: &Observable<T>,
    y0: &[T],
    steps: usize,
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    let mut y = y0.to_vec();
    let mut prev = obs.value(&y);
    let mut worst = T::neg_infinity();
    for _ in 0..steps {
        y = rk_step(tab, f, &y, dt, cfg)?.y1;
        let next = obs.value(&y);
        worst = worst.max((next - prev) / (T::one() + prev.abs()));
        prev = next;
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableaux::{builtin_tableau, SplittingScheme};

    fn decay() -> VectorField<f64> {
        VectorField::new("decay", 1, |y: &[f64]| vec![-y[0]]).with_jacobian(|_, w| vec![-w[0]])
    }

    fn square() -> Observable<f64> {
        Observable::quadratic("sq", QuadraticForm::new(vec![1.0], vec![0.0], 0.0).unwrap())
    }

    fn cube() -> Observable<f64> {
        Observable::scalar(
            "cube",
            1,
            ObservableClass::General,
            |y: &[f64]| y[0].powi(3),
            |y: &[f64]| vec![3.0 * y[0] * y[0]],
        )
    }

    fn mid() -> ButcherTableau<f64> {
        builtin_tableau("midpoint").unwrap()
    }

    #[test]
    fn augmented_field_examples() {
        let g = augment(&decay(), &square()).unwrap().combined;
        assert_eq!(g.eval(&[3.0, 7.0]), vec![-3.0, -18.0]);
        let aff = Observable::affine("lin", vec![2.0], vec![1.0]).unwrap();
        assert_eq!(
            augment(&decay(), &aff).unwrap().combined.eval(&[3.0, 0.0]),
            vec![-3.0, -6.0]
        );
        let c = Observable::constant(1, vec![4.0]);
        assert_eq!(
            augment(&decay(), &c).unwrap().combined.eval(&[3.0, 9.0]),
            vec![-3.0, 0.0]
        );
    }

    #[test]
    fn augment_rejects_dimension_mismatch() {
        let f = VectorField::<f64>::zero(2);
        assert!(matches!(augment(&f, &square()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn augmented_jacobian_matches_differences() {
        let f = VectorField::new("nl", 2, |y: &[f64]| vec![y[1], -y[0].sin()])
            .with_jacobian(|y, w| vec![w[1], -y[0].cos() * w[0]]);
        let g = augment(&f, &cube().with_class(ObservableClass::General));
        assert!(g.is_err());
        let obs = Observable::scalar(
            "qp",
            2,
            ObservableClass::General,
            |y: &[f64]| y[0] * y[1].powi(2),
            |y: &[f64]| vec![y[1] * y[1], 2.0 * y[0] * y[1]],
        );
        let g = augment(&f, &obs).unwrap().combined;
        let x = [0.3, -0.8, 2.0];
        let w = [0.5, 1.0, -3.0];
        let exact = g.jac_action(&x, &w);
        let fd = central_difference(&|v: &[f64]| g.eval(v), &x, &w, Some(1e-5));
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn midpoint_square_is_equivariant() {
        let r = fe_residual(
            &Integrator::rk(mid(), decay()),
            &square(),
            &[1.0],
            1.0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.residual[0].abs() < 1e-14);
        assert!((r.z1[0] - 1.0 / 9.0).abs() < 1e-15);
        assert!(r.projection_gap < 1e-15);
    }

    #[test]
    fn midpoint_cube_misses_by_two_27ths() {
        let r = fe_residual(
            &Integrator::rk(mid(), decay()),
            &cube(),
            &[1.0],
            1.0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((r.residual[0] - 2.0 / 27.0).abs() < 1e-12);
        assert!((r.z1[0] - 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn rk4_affine_on_oscillator() {
        let f = VectorField::new("osc", 2, |y: &[f64]| vec![y[1], -y[0]]);
        let obs = Observable::affine("q+p", vec![1.0, 1.0], vec![0.0]).unwrap();
        let rk4 = builtin_tableau("rk4").unwrap();
        let r = fe_residual(
            &Integrator::rk(rk4, f),
            &obs,
            &[1.0, 0.0],
            0.1,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.max_abs() <= 1e-13);
    }

    #[test]
    fn counterexample_numbers() {
        let c = strong_equivariance_counterexample().unwrap();
        assert!((c.y1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.u1, 0.0);
        assert!((c.z1 - 1.0 / 9.0).abs() < 1e-15);
        assert!((c.u1 - c.y1_squared).abs() > 0.1);
        assert!(c.fe_residual.abs() < 1e-14);
    }

    #[test]
    fn splitting_augmentation_is_exact_for_any_observable() {
        let flows = vec![
            ExactFlow::new("drift", 2, |t, y: &[f64]| vec![y[0] + t * y[1], y[1]]),
            ExactFlow::new("decay", 2, |t: f64, y: &[f64]| vec![y[0], y[1] * (-t).exp()]),
        ];
        let obs = Observable::scalar(
            "nl",
            2,
            ObservableClass::General,
            |y: &[f64]| (y[0] * y[1]).sin() + y[0].powi(5),
            |y: &[f64]| {
                let c = (y[0] * y[1]).cos();
                vec![c * y[1] + 5.0 * y[0].powi(4), c * y[0]]
            },
        );
        let m = Integrator::Splitting {
            scheme: SplittingScheme::strang(),
            flows,
        };
        let r = fe_residual(&m, &obs, &[0.3, 1.1], 0.7, &SolverConfig::default()).unwrap();
        assert!(r.max_abs() <= 1e-14);
    }

    #[test]
    fn bracket_identity_for_noninvariant_quadratic() {
        let f = VectorField::new("osc", 2, |y: &[f64]| vec![y[1], -y[0]]);
        let q2 = Observable::scalar(
            "q^2",
            2,
            ObservableClass::Quadratic,
            |y| y[0] * y[0],
            |y| vec![2.0 * y[0], 0.0],
        );
        // {q^2, H} = 2 q p for H = (q^2 + p^2) / 2
        let br = |y: &[f64]| 2.0 * y[0] * y[1];
        let r = bracket_identity_residual(&mid(), &f, &q2, &br, &[0.6, 0.9], 0.3, &SolverConfig::default()).unwrap();
        assert!(r <= 1e-12);
        let y1 = rk_step(&mid(), &f, &[0.6, 0.9], 0.3, &SolverConfig::default())
            .unwrap()
            .y1;
        assert!((y1[0] * y1[0] - 0.36).abs() > 1e-3);
    }

    fn oscillator_potential() -> Observable<f64> {
        Observable::quadratic("V", QuadraticForm::new(vec![0.5], vec![0.0], 0.0).unwrap())
    }

    #[test]
    fn damped_energy_balance() {
        let sys = ForcedMechanical::damped(&[1.0], oscillator_potential(), 0.3).unwrap();
        let cfg = SolverConfig::default();
        let r = sys
            .dissipation_identity_residual(&mid(), &[1.0, 0.5], 0.1, &cfg)
            .unwrap();
        assert!(r <= 1e-12);
        let cons = ForcedMechanical::damped(&[1.0], oscillator_potential(), 0.0).unwrap();
        let y1 = rk_step(&mid(), &cons.field(), &[1.0, 0.5], 0.1, &cfg).unwrap().y1;
        assert!((cons.hamiltonian(&y1) - cons.hamiltonian(&[1.0, 0.5])).abs() <= 1e-14);
    }

    #[test]
    fn pendulum_only_kinetic_balance_holds() {
        let v = Observable::scalar(
            "cos",
            1,
            ObservableClass::General,
            |q: &[f64]| -q[0].cos(),
            |q: &[f64]| vec![q[0].sin()],
        );
        let sys = ForcedMechanical::damped(&[1.0], v, 0.0).unwrap();
        let cfg = SolverConfig::default();
        assert!(
            sys.kinetic_work_identity_residual(&mid(), &[2.0, 1.0], 0.2, &cfg)
                .unwrap()
                <= 1e-12
        );
        let full = sys
            .dissipation_identity_residual(&mid(), &[2.0, 1.0], 0.2, &cfg)
            .unwrap();
        assert!(full > 1e-6, "{full}");
    }

    #[test]
    fn contraction_and_monotonicity() {
        let cubic = VectorField::new("cubic", 1, |y: &[f64]| vec![-y[0].powi(3)])
            .with_jacobian(|y, w| vec![-3.0 * y[0] * y[0] * w[0]]);
        let cfg = SolverConfig::default();
        let (d1, d0) = contractivity_check(&mid(), &cubic, &[2.0], &[-1.0], 0.5, &cfg).unwrap();
        assert!(d1 <= d0 + 1e-12);
        let (d1, d0) = contractivity_check(&mid(), &VectorField::zero(1), &[2.0], &[-1.0], 0.5, &cfg).unwrap();
        assert_eq!(d1, d0);
        let half_sq = Observable::quadratic("half", QuadraticForm::new(vec![0.5], vec![0.0], 0.0).unwrap());
        assert!(monotone_decrease_check(&mid(), &decay(), &half_sq, &[1.0], 50, 0.2, &cfg).unwrap());
        assert!(monotone_decrease_check(&mid(), &VectorField::zero(1), &half_sq, &[1.0], 5, 0.2, &cfg).unwrap());
        let growth = VectorField::new("growth", 1, |y: &[f64]| vec![y[0]]);
        assert!(!monotone_decrease_check(&mid(), &growth, &half_sq, &[1.0], 5, 0.2, &cfg).unwrap());
    }
}
