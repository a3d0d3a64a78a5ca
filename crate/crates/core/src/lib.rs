//! Forward simulation and kernel identification for a one-dimensional heat
//! equation with thermal memory and a hysteretic thermostat acting through
//! the boundary.
//!
//! The model couples three ingredients:
//!
//! * a parabolic equation `D_t u = Au + h * Au + f` whose flux remembers the
//!   past through the time-convolution kernel `h`;
//! * a boundary condition of the third type fed by a thermostat,
//!   `Bu + h * Bu + q = u_e - u`, with `u_e = phi u_A + u_B` and
//!   `eps phi' + phi = W(M(u)) + u_C` for a rate-independent memory operator
//!   `W` (play, Preisach);
//! * a scalar measurement `Phi(u) = g` from which both the temperature and
//!   the kernel are reconstructed.
//!
//! Identification works on the time-differentiated system in `v = D_t u`,
//! where the kernel satisfies a second-kind equation solvable node by node;
//! see [`inverse`] for the marching scheme and [`forward`] for the data
//! generator. [`presets`] holds ready-made experiment configurations and
//! [`verify`] a deterministic invariant battery.

// negated comparisons reject NaN parameters; convolution kernels read
// clearest with explicit index arithmetic
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod convolution;
pub mod error;
pub mod feedback;
pub mod forward;
pub mod grid;
pub mod hysteresis;
pub mod inverse;
pub mod io;
mod linsolve;
pub mod pde_ops;
pub mod presets;
pub mod verify;

pub use error::{Error, Result};
pub use feedback::ThermostatParams;
pub use forward::{ForwardProblem, ForwardReport, PicardControls};
pub use grid::{BoundaryPair, SpaceField, SpaceGrid, SpaceTimeField, TimeGrid, TimeSeries};
pub use hysteresis::{MemoryOperator, MemoryOperatorSpec, RelaySpec};
pub use inverse::{
    InverseCoefficients, InverseControls, InverseProblem, MarchReport, ResidualReport,
};
pub use pde_ops::{Coefficients, MeasurementWeights};
pub use presets::Preset;
