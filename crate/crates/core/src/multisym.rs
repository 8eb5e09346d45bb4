//! Multisymplectic structure of the finite-difference wave equation with the
//! spatial momentum eliminated: the density `omega0_k = v_k r'_k - v'_k r_k`
//! for a pair of variations `xi = (v, r)`, `eta = (v', r')`, and the interface
//! flux `W_{k+1/2} = (v_k v'_{k+1} - v'_k v_{k+1}) / h`, which satisfy
//! `d/dt omega0_k = (W_{k+1/2} - W_{k-1/2}) / h`.

use crate::error::{check_dim, Result};
use crate::pde::{wave_system, Grid1D, SemidiscreteSystem};
use crate::scalar::Real;
use crate::stepper::{Integrator, SolverConfig};
use crate::tableaux::ButcherTableau;
use crate::variational::tangent_step;

#[derive(Clone, Debug)]
pub struct DdwWaveSystem<T> {
    pub grid: Grid1D<T>,
    pub base: SemidiscreteSystem<T>,
}

/// A wave state with two variations, each laid out as `(v_0.., r_0..)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MsPairState<T> {
    pub y: Vec<T>,
    pub xi: Vec<T>,
    pub eta: Vec<T>,
}

impl<T: Real> MsPairState<T> {
    pub fn new(y: Vec<T>, xi: Vec<T>, eta: Vec<T>) -> Result<Self> {
        check_dim(y.len(), xi.len(), "first variation")?;
        check_dim(y.len(), eta.len(), "second variation")?;
        Ok(Self { y, xi, eta })
    }

    pub fn swapped(&self) -> Self {
        Self {
            y: self.y.clone(),
            xi: self.eta.clone(),
            eta: self.xi.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsclStep<T> {
    pub residuals: Vec<T>,
    pub state: MsPairState<T>,
}

impl<T: Real> MsclStep<T> {
    pub fn max_abs(&self) -> T {
        self.residuals.iter().fold(T::zero(), |a, r| a.max(r.abs()))
    }
}

impl<T: Real> DdwWaveSystem<T> {
    pub fn new(grid: Grid1D<T>) -> Result<Self> {
        Ok(Self {
            grid,
            base: wave_system(grid)?,
        })
    }

    pub fn nodes(&self) -> usize {
        self.grid.nodes()
    }

    fn check(&self, s: &MsPairState<T>) -> Result<()> {
        let d = 2 * self.nodes();
        check_dim(d, s.y.len(), "wave state")?;
        check_dim(d, s.xi.len(), "first variation")?;
        check_dim(d, s.eta.len(), "second variation")
    }

    /// `omega0_k(xi, eta)`.
    pub fn density(&self, xi: &[T], eta: &[T], k: usize) -> T {
        let n = self.nodes();
        xi[k] * eta[n + k] - eta[k] * xi[n + k]
    }

    /// `W_{k+1/2}(xi, eta)`.
    pub fn flux(&self, xi: &[T], eta: &[T], k: usize) -> T {
        let j = self.grid.wrap(k, 1);
        (xi[k] * eta[j] - eta[k] * xi[j]) / self.grid.h()
    }

    pub fn ms_density(&self, s: &MsPairState<T>, k: usize) -> T {
        self.density(&s.xi, &s.eta, k)
    }

    pub fn ms_flux(&self, s: &MsPairState<T>, k: usize) -> T {
        self.flux(&s.xi, &s.eta, k)
    }

    fn divergence(&self, xi: &[T], eta: &[T], k: usize) -> T {
        (self.flux(xi, eta, k) - self.flux(xi, eta, self.grid.wrap(k, -1))) / self.grid.h()
    }

    /// `d/dt omega0_k - (W_{k+1/2} - W_{k-1/2}) / h` with the time derivatives
    /// taken from the linearised semidiscrete equations.
    pub fn contract_residual(&self, s: &MsPairState<T>) -> Result<Vec<T>> {
        self.check(s)?;
        let dxi = self.base.field.jac_action(&s.y, &s.xi);
        let deta = self.base.field.jac_action(&s.y, &s.eta);
        Ok((0..self.nodes())
            .map(|k| {
                let rate = self.density(&dxi, &s.eta, k) + self.density(&s.xi, &deta, k);
                rate - self.divergence(&s.xi, &s.eta, k)
            })
            .collect())
    }

    /// `h sum_k omega0_k`.
    pub fn total_density(&self, xi: &[T], eta: &[T]) -> T {
        (0..self.nodes()).map(|k| self.density(xi, eta, k)).sum::<T>() * self.grid.h()
    }

    /// Propagates `(y, xi, eta)` one step and returns
    /// `r_k = omega0_k(1) - omega0_k(0) - dt sum_i b_i (W_{k+1/2} - W_{k-1/2})(Xi_i, H_i) / h`.
    pub fn discrete_mscl_residual(
        &self,
        tab: &ButcherTableau<T>,
        s0: &MsPairState<T>,
        dt: T,
        cfg: &SolverConfig<T>,
    ) -> Result<MsclStep<T>> {
        self.check(s0)?;
        let d = 2 * self.nodes();
        let method = Integrator::rk(tab.clone(), self.base.field.clone());
        let ts = tangent_step(&method, &s0.y, &[s0.xi.clone(), s0.eta.clone()], dt, cfg)?;
        let state = MsPairState {
            y: ts.y1,
            xi: ts.etas1[0].clone(),
            eta: ts.etas1[1].clone(),
        };
        let residuals = (0..self.nodes())
            .map(|k| {
                let mut flux = T::zero();
                for (bi, x) in tab.b().iter().zip(&ts.step.stages) {
                    flux = flux + *bi * self.divergence(&x[d..2 * d], &x[2 * d..3 * d], k);
                }
                self.density(&state.xi, &state.eta, k) - self.density(&s0.xi, &s0.eta, k) - dt * flux
            })
            .collect();
        Ok(MsclStep { residuals, state })
    }

    /// `|h sum_k omega0_k(1) - h sum_k omega0_k(0)|` after one step.
    pub fn global_symplectic_residual(
        &self,
        tab: &ButcherTableau<T>,
        s0: &MsPairState<T>,
        dt: T,
        cfg: &SolverConfig<T>,
    ) -> Result<T> {
        let step = self.discrete_mscl_residual(tab, s0, dt, cfg)?;
        Ok((self.total_density(&step.state.xi, &step.state.eta) - self.total_density(&s0.xi, &s0.eta)).abs())
    }
}
