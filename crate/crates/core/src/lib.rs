//! One-step integrators (Runge–Kutta, partitioned, additive, splitting and an
//! aromatic Euler map) together with the machinery to check, step by step,
//! the discrete identities that functionally equivariant methods satisfy:
//! observable balances, local conservation laws on periodic grids,
//! symplectic and multisymplectic residuals, and contractivity.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`). The aliases below fix the scalar to
//! `f64`, which is what the experiment runner and the acceptance suite use.

pub mod cli;
pub mod error;
pub mod linalg;
pub mod multisym;
pub mod observables;
pub mod pde;
pub mod problems;
pub mod scalar;
pub mod stepper;
pub mod tableaux;
pub mod tolerances;
pub mod variational;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tableau = tableaux::ButcherTableau<f64>;
pub type Partitioned = tableaux::PartitionedTableau<f64>;
pub type Additive = tableaux::AdditiveTableau<f64>;
pub type Splitting = tableaux::SplittingScheme<f64>;
pub type Field = stepper::VectorField<f64>;
pub type Flow = stepper::ExactFlow<f64>;
pub type Step = stepper::StepResult<f64>;
pub type Solver = stepper::SolverConfig<f64>;
pub type Method = stepper::Integrator<f64>;
pub type Obs = observables::Observable<f64>;
pub type Grid = pde::Grid1D<f64>;
pub type System = pde::SemidiscreteSystem<f64>;
pub type Law = pde::LocalConservationLaw<f64>;
pub type Form = variational::BilinearForm<f64>;
pub type Wave = multisym::DdwWaveSystem<f64>;
