//! Variational equations `eta' = f'(y) eta` integrated in the same stage solve
//! as the state, and residuals of bilinear forms along the propagated
//! variations.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, matvec};
use crate::scalar::Real;
use crate::stepper::{central_difference, ExactFlow, Integrator, SolverConfig, StepResult, VectorField};
use crate::tableaux::{ButcherTableau, PartitionedTableau};

/// `(f(y), f'(y) eta_1, ..., f'(y) eta_k)` on `R^(n (1 + k))`.
#[derive(Clone, Debug)]
pub struct VariationalSystem<T> {
    pub base: VectorField<T>,
    pub k: usize,
    pub combined: VectorField<T>,
}

impl<T: Real> VariationalSystem<T> {
    pub fn new(base: &VectorField<T>, k: usize) -> Self {
        let n = base.dim();
        let f = base.clone();
        let eval = move |x: &[T]| {
            let y = &x[..n];
            let mut out = f.eval(y);
            for j in 0..k {
                out.extend(f.jac_action(y, &x[n * (1 + j)..n * (2 + j)]));
            }
            out
        };
        let f = base.clone();
        // d/dy (f'(y) eta) is taken by central differences of the action.
        let jac = move |x: &[T], w: &[T]| {
            let (y, wy) = (&x[..n], &w[..n]);
            let mut out = f.jac_action(y, wy);
            for j in 0..k {
                let eta = &x[n * (1 + j)..n * (2 + j)];
                let mut blk = f.jac_action(y, &w[n * (1 + j)..n * (2 + j)]);
                let second = central_difference(&|v: &[T]| f.jac_action(v, eta), y, wy, None);
                axpy(T::one(), &second, &mut blk);
                out.extend(blk);
            }
            out
        };
        let combined = VectorField::new(format!("{}+var{k}", base.name()), n * (1 + k), eval).with_jacobian(jac);
        Self {
            base: base.clone(),
            k,
            combined,
        }
    }

    pub fn pack(y: &[T], etas: &[Vec<T>]) -> Vec<T> {
        let mut x = y.to_vec();
        for e in etas {
            x.extend_from_slice(e);
        }
        x
    }
}

/// Exact flow of a splitting component lifted to its linearisation.
fn lift_flow<T: Real>(flow: &ExactFlow<T>, k: usize) -> Result<ExactFlow<T>> {
    let tangent = flow
        .tangent()
        .cloned()
        .ok_or_else(|| Error::Unsupported(format!("flow {} has no linearisation", flow.name())))?;
    let n = flow.dim();
    let fl = flow.clone();
    Ok(ExactFlow::new(
        format!("{}+var{k}", flow.name()),
        n * (1 + k),
        move |t, x: &[T]| {
            let y = &x[..n];
            let mut out = fl.apply(t, y);
            for j in 0..k {
                out.extend(tangent(t, y, &x[n * (1 + j)..n * (2 + j)]));
            }
            out
        },
    ))
}

/// The method applied to the variational system with `k` variations.
pub fn lift_integrator<T: Real>(method: &Integrator<T>, k: usize) -> Result<Integrator<T>> {
    Ok(match method {
        Integrator::Rk { tableau, field } => Integrator::Rk {
            tableau: tableau.clone(),
            field: VariationalSystem::new(field, k).combined,
        },
        Integrator::Prk { tableau, field } => {
            let base = tableau.partition();
            let mut partition = Vec::with_capacity(base.len() * (1 + k));
            for _ in 0..=k {
                partition.extend_from_slice(base);
            }
            Integrator::Prk {
                tableau: PartitionedTableau::new(tableau.parts().to_vec(), partition)?,
                field: VariationalSystem::new(field, k).combined,
            }
        }
        Integrator::Ark { tableau, parts } => Integrator::Ark {
            tableau: tableau.clone(),
            parts: parts.iter().map(|p| VariationalSystem::new(p, k).combined).collect(),
        },
        Integrator::Splitting { scheme, flows } => Integrator::Splitting {
            scheme: scheme.clone(),
            flows: flows.iter().map(|f| lift_flow(f, k)).collect::<Result<_>>()?,
        },
        Integrator::AromaticEuler { .. } => {
            return Err(Error::Unsupported(
                "the aromatic Euler map has no variational lift here".into(),
            ))
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentStep<T> {
    pub y1: Vec<T>,
    pub etas1: Vec<Vec<T>>,
    /// Stage data of the combined system.
    pub step: StepResult<T>,
}

pub fn tangent_step<T: Real>(
    method: &Integrator<T>,
    y0: &[T],
    etas: &[Vec<T>],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<TangentStep<T>> {
    let n = method.dim();
    check_dim(n, y0.len(), "tangent_step state")?;
    for e in etas {
        check_dim(n, e.len(), "tangent_step variation")?;
    }
    let lifted = lift_integrator(method, etas.len())?;
    let step = lifted.step(&VariationalSystem::pack(y0, etas), dt, cfg)?;
    let y1 = step.y1[..n].to_vec();
    let etas1 = (0..etas.len())
        .map(|j| step.y1[n * (1 + j)..n * (2 + j)].to_vec())
        .collect();
    Ok(TangentStep { y1, etas1, step })
}

/// `omega(xi, eta) = xi^T Omega eta`, `Omega` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearForm<T> {
    n: usize,
    omega: Vec<T>,
    antisymmetric: bool,
}

impl<T: Real> BilinearForm<T> {
    pub fn new(n: usize, omega: Vec<T>, antisymmetric: bool) -> Result<Self> {
        check_dim(n * n, omega.len(), "bilinear form matrix")?;
        if antisymmetric {
            for i in 0..n {
                for j in 0..n {
                    if omega[i * n + j] != -omega[j * n + i] {
                        return Err(Error::InvalidArgument(format!(
                            "form flagged antisymmetric but entries ({i},{j}) and ({j},{i}) disagree"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n,
            omega,
            antisymmetric,
        })
    }

    /// `sum_i xi_q,i eta_p,i - xi_p,i eta_q,i` on `(q, p)` with `dof` entries each.
    pub fn canonical(dof: usize) -> Self {
        let n = 2 * dof;
        let mut omega = vec![T::zero(); n * n];
        for i in 0..dof {
            omega[i * n + dof + i] = T::one();
            omega[(dof + i) * n + i] = -T::one();
        }
        Self {
            n,
            omega,
            antisymmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn is_antisymmetric(&self) -> bool {
        self.antisymmetric
    }
    pub fn matrix(&self) -> &[T] {
        &self.omega
    }

    pub fn eval(&self, xi: &[T], eta: &[T]) -> T {
        dot(xi, &matvec(&self.omega, self.n, eta))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticResidual<T> {
    /// `|omega(xi1, eta1) - omega(xi0, eta0) - dt sum_i b_i (L_f omega)(Xi_i, H_i)|`.
    pub residual: T,
    pub omega0: T,
    pub omega1: T,
    pub y1: Vec<T>,
    pub xi1: Vec<T>,
    pub eta1: Vec<T>,
}

/// One step of `tab` on `f` with two variations, checked against the
/// stage-weighted Lie derivative of `omega`.
#[allow(clippy::too_many_arguments)]
pub fn symplectic_residual<T: Real>(
    tab: &ButcherTableau<T>,
    f: &VectorField<T>,
    omega: &BilinearForm<T>,
    y0: &[T],
    xi0: &[T],
    eta0: &[T],
    dt: T,
    cfg: &SolverConfig<T>,
) -> Result<SymplecticResidual<T>> {
    let n = f.dim();
    check_dim(n, omega.dim(), "bilinear form")?;
    let method = Integrator::rk(tab.clone(), f.clone());
    let ts = tangent_step(&method, y0, &[xi0.to_vec(), eta0.to_vec()], dt, cfg)?;
    let derivs = &ts.step.stage_derivs[0];
    let mut drift = T::zero();
    for (i, (x, d)) in ts.step.stages.iter().zip(derivs).enumerate() {
        let (xi, eta) = (&x[n..2 * n], &x[2 * n..3 * n]);
        let (dxi, deta) = (&d[n..2 * n], &d[2 * n..3 * n]);
        drift = drift + tab.b()[i] * (omega.eval(dxi, eta) + omega.eval(xi, deta));
    }
    let omega0 = omega.eval(xi0, eta0);
    let omega1 = omega.eval(&ts.etas1[0], &ts.etas1[1]);
    Ok(SymplecticResidual {
        residual: (omega1 - omega0 - dt * drift).abs(),
        omega0,
        omega1,
        y1: ts.y1,
        xi1: ts.etas1[0].clone(),
        eta1: ts.etas1[1].clone(),
    })
}
