//! Built-in test problems: model ODEs with exact Jacobians, brackets and
//! split flows, and seeded random fields and observables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dot, matvec};
use crate::observables::{Observable, ObservableClass, QuadraticForm};
use crate::scalar::{lit, Real};
use crate::stepper::{ExactFlow, VectorField};

/// Names accepted by [`ode_problem`].
pub const BUILTIN_ODES: [&str; 8] = [
    "harmonic-oscillator",
    "pendulum",
    "damped-oscillator",
    "linear-decay",
    "cubic-decay",
    "rigid-body",
    "gradient-flow",
    "shear-decay",
];

/// `q' = p, p' = -q`.
pub fn harmonic_oscillator<T: Real>() -> VectorField<T> {
    VectorField::new("harmonic-oscillator", 2, |y: &[T]| vec![y[1], -y[0]])
        .with_jacobian(|_, w: &[T]| vec![w[1], -w[0]])
}

/// `q' = p, p' = -omega2 sin q`.
pub fn pendulum<T: Real>(omega2: T) -> VectorField<T> {
    VectorField::new("pendulum", 2, move |y: &[T]| vec![y[1], -omega2 * y[0].sin()])
        .with_jacobian(move |y, w| vec![w[1], -omega2 * y[0].cos() * w[0]])
}

/// `q' = p, p' = -q - c p`.
pub fn damped_oscillator<T: Real>(c: T) -> VectorField<T> {
    VectorField::new("damped-oscillator", 2, move |y: &[T]| vec![y[1], -y[0] - c * y[1]])
        .with_jacobian(move |_, w: &[T]| vec![w[1], -w[0] - c * w[1]])
}

/// `y' = -y` in one dimension.
pub fn linear_decay<T: Real>() -> VectorField<T> {
    VectorField::new("linear-decay", 1, |y: &[T]| vec![-y[0]]).with_jacobian(|_, w: &[T]| vec![-w[0]])
}

/// `y' = -y^3` in one dimension, a monotone field.
pub fn cubic_decay<T: Real>() -> VectorField<T> {
    VectorField::new("cubic-decay", 1, |y: &[T]| vec![-y[0] * y[0] * y[0]])
        .with_jacobian(|y, w| vec![-lit::<T>(3.0) * y[0] * y[0] * w[0]])
}

/// Free rigid body `y' = y x (y / I)`.
pub fn rigid_body<T: Real>(inertia: [T; 3]) -> VectorField<T> {
    let cross = |a: &[T], b: &[T]| {
        vec![
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let omega = move |y: &[T]| vec![y[0] / inertia[0], y[1] / inertia[1], y[2] / inertia[2]];
    VectorField::new("rigid-body", 3, move |y: &[T]| cross(y, &omega(y))).with_jacobian(move |y, w| {
        let mut a = cross(w, &omega(y));
        let b = cross(y, &omega(w));
        for i in 0..3 {
            a[i] = a[i] + b[i];
        }
        a
    })
}

/// Rigid-body energy `sum y_i^2 / (2 I_i)`.
pub fn rigid_body_energy<T: Real>(inertia: [T; 3]) -> Observable<T> {
    let half = lit::<T>(0.5);
    Observable::scalar(
        "rigid-body-energy",
        3,
        ObservableClass::Quadratic,
        move |y| (0..3).map(|i| half * y[i] * y[i] / inertia[i]).sum(),
        move |y| (0..3).map(|i| y[i] / inertia[i]).collect(),
    )
}

/// Lie–Poisson bracket of the rigid body, `{F, H}(y) = y . (grad H x grad F)`.
pub fn rigid_body_bracket<T: Real>(grad_f: &[T], grad_h: &[T], y: &[T]) -> T {
    let c = [
        grad_h[1] * grad_f[2] - grad_h[2] * grad_f[1],
        grad_h[2] * grad_f[0] - grad_h[0] * grad_f[2],
        grad_h[0] * grad_f[1] - grad_h[1] * grad_f[0],
    ];
    dot(y, &c)
}

/// Canonical bracket `{F, H} = F_q . H_p - F_p . H_q` on `(q, p)`.
pub fn canonical_bracket<T: Real>(grad_f: &[T], grad_h: &[T]) -> T {
    let dof = grad_f.len() / 2;
    (0..dof)
        .map(|i| grad_f[i] * grad_h[dof + i] - grad_f[dof + i] * grad_h[i])
        .sum()
}

/// `y' = -K y` with `K` symmetric positive definite (row-major), the gradient
/// flow of the convex quadratic `y^T K y / 2`.
pub fn gradient_flow<T: Real>(k: Vec<T>) -> VectorField<T> {
    let n = (k.len() as f64).sqrt() as usize;
    let k2 = k.clone();
    VectorField::new("gradient-flow", n, move |y: &[T]| {
        matvec(&k, n, y).into_iter().map(|v| -v).collect()
    })
    .with_jacobian(move |_, w| matvec(&k2, n, w).into_iter().map(|v| -v).collect())
}

/// A fixed convex quadratic for gradient-flow experiments.
pub fn default_convex_matrix<T: Real>() -> Vec<T> {
    [2.0, 0.5, 0.0, 0.5, 1.0, 0.25, 0.0, 0.25, 0.75]
        .iter()
        .map(|&v| lit(v))
        .collect()
}

/// `q' = p, p' = -p`: the affine invariant `q + p` is preserved by the exact
/// flow and the field splits as `(p, 0) + (0, -p)`.
pub fn shear_decay<T: Real>() -> VectorField<T> {
    VectorField::new("shear-decay", 2, |y: &[T]| vec![y[1], -y[1]]).with_jacobian(|_, w: &[T]| vec![w[1], -w[1]])
}

pub fn shear_decay_parts<T: Real>() -> Vec<VectorField<T>> {
    vec![
        VectorField::new("shear", 2, |y: &[T]| vec![y[1], T::zero()]).with_jacobian(|_, w: &[T]| vec![w[1], T::zero()]),
        VectorField::new("decay", 2, |y: &[T]| vec![T::zero(), -y[1]])
            .with_jacobian(|_, w: &[T]| vec![T::zero(), -w[1]]),
    ]
}

/// Exact flows of the two [`shear_decay_parts`].
pub fn shear_decay_flows<T: Real>() -> Vec<ExactFlow<T>> {
    vec![
        ExactFlow::new("shear", 2, |t: T, y: &[T]| vec![y[0] + t * y[1], y[1]])
            .with_tangent(|t: T, _: &[T], w: &[T]| vec![w[0] + t * w[1], w[1]]),
        ExactFlow::new("decay", 2, |t: T, y: &[T]| vec![y[0], y[1] * (-t).exp()])
            .with_tangent(|t: T, _: &[T], w: &[T]| vec![w[0], w[1] * (-t).exp()]),
    ]
}

/// Kinetic and potential flows of the harmonic oscillator.
pub fn oscillator_flows<T: Real>() -> Vec<ExactFlow<T>> {
    vec![
        ExactFlow::new("kinetic", 2, |t: T, y: &[T]| vec![y[0] + t * y[1], y[1]])
            .with_tangent(|t: T, _: &[T], w: &[T]| vec![w[0] + t * w[1], w[1]]),
        ExactFlow::new("potential", 2, |t: T, y: &[T]| vec![y[0], y[1] - t * y[0]])
            .with_tangent(|t: T, _: &[T], w: &[T]| vec![w[0], w[1] - t * w[0]]),
    ]
}

/// Seeded generator used by every random construction in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<T> {
    (0..len).map(|_| lit(rng.gen_range(-scale..=scale))).collect()
}

pub fn random_state<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    uniform(rng, n, 1.0)
}

/// `f(y) = d + A y + beta * sin(C y)` with unit-scale coefficients.
pub fn random_smooth_field<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> VectorField<T> {
    let s = 1.0 / (n as f64).sqrt();
    let d: Vec<T> = uniform(rng, n, 1.0);
    let a: Vec<T> = uniform(rng, n * n, s);
    let beta: Vec<T> = uniform(rng, n, 1.0);
    let c: Vec<T> = uniform(rng, n * n, s);
    let (a2, beta2, c2) = (a.clone(), beta.clone(), c.clone());
    VectorField::new("random-smooth", n, move |y: &[T]| {
        let ay = matvec(&a, n, y);
        let cy = matvec(&c, n, y);
        (0..n).map(|i| d[i] + ay[i] + beta[i] * cy[i].sin()).collect()
    })
    .with_jacobian(move |y, w| {
        let aw = matvec(&a2, n, w);
        let cy = matvec(&c2, n, y);
        let cw = matvec(&c2, n, w);
        (0..n).map(|i| aw[i] + beta2[i] * cy[i].cos() * cw[i]).collect()
    })
}

/// `f(y) = d + A y + beta * (C y)^3`, a polynomial field.
pub fn random_cubic_field<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> VectorField<T> {
    let s = 1.0 / (n as f64).sqrt();
    let d: Vec<T> = uniform(rng, n, 1.0);
    let a: Vec<T> = uniform(rng, n * n, s);
    let beta: Vec<T> = uniform(rng, n, 0.5);
    let c: Vec<T> = uniform(rng, n * n, s);
    let (a2, beta2, c2) = (a.clone(), beta.clone(), c.clone());
    let three = lit::<T>(3.0);
    VectorField::new("random-cubic", n, move |y: &[T]| {
        let ay = matvec(&a, n, y);
        let cy = matvec(&c, n, y);
        (0..n).map(|i| d[i] + ay[i] + beta[i] * cy[i] * cy[i] * cy[i]).collect()
    })
    .with_jacobian(move |y, w| {
        let aw = matvec(&a2, n, w);
        let cy = matvec(&c2, n, y);
        let cw = matvec(&c2, n, w);
        (0..n)
            .map(|i| aw[i] + three * beta2[i] * cy[i] * cy[i] * cw[i])
            .collect()
    })
}

/// `F(y) = c . y + e`.
pub fn random_affine_observable<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Observable<T> {
    let c = uniform(rng, n, 1.0);
    let e = uniform(rng, 1, 1.0);
    Observable::affine("random-affine", c, e).expect("shape")
}

/// `F(y) = y^T C y + d . y + e` with a general (nonsymmetric) `C`.
pub fn random_quadratic_form<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> QuadraticForm<T> {
    let c = uniform(rng, n * n, 1.0);
    let d = uniform(rng, n, 1.0);
    let e = uniform(rng, 1, 1.0)[0];
    QuadraticForm::new(c, d, e).expect("shape")
}

pub fn random_quadratic_observable<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Observable<T> {
    Observable::quadratic("random-quadratic", random_quadratic_form(rng, n))
}

/// Linear field `f(y) = S grad F(y)` with `S` antisymmetric, so that
/// `F'(y) f(y) = grad F^T S grad F = 0` identically.
pub fn random_invariant_field<T: Real>(rng: &mut ChaCha8Rng, form: &QuadraticForm<T>) -> VectorField<T> {
    let n = form.dim();
    let mut s = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: T = lit(rng.gen_range(-1.0..=1.0));
            s[i * n + j] = v;
            s[j * n + i] = -v;
        }
    }
    let hess = form.hessian();
    let (f1, s2, h2) = (form.clone(), s.clone(), hess);
    VectorField::new("random-invariant", n, move |y: &[T]| matvec(&s, n, &f1.gradient(y)))
        .with_jacobian(move |_, w| matvec(&s2, n, &matvec(&h2, n, w)))
}
