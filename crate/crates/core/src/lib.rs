//! Spectral-Galerkin discretisation and proximal Euler–Maruyama schemes for
//! stochastic gradient flows `dX = −∂φ(X) dt + B(X) dW` on `(0, 1)` with
//! homogeneous Dirichlet conditions.
pub mod error;
pub mod estimators;
pub mod integrator;
pub mod io;
pub mod noise;
pub mod potentials;
pub mod projections;
pub mod rng;
pub(crate) mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use estimators::{Estimate, EstimatorReport, Experiment, Rung, Verdict};
pub use integrator::{InitialProjection, PathSolution, Scheme, SchemeConfig};
pub use noise::{NoiseKind, NoiseOperator, PreparedNoise, ProjectionMode};
pub use potentials::{Family, FamilyParams, Potential, ScalarLaw};
pub use rng::BrownianPath;
pub use spectral::{Field, SpaceTag, SpectralBasis};
