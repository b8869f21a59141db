//! Numerical laboratory for conservation-law limits on quantum measurements
//! and CNOT gate implementations.
//!
//! The crate is layered bottom-up:
//!
//! * [`operator`], [`state`], [`space`], [`spectral`]: dense complex operator
//!   algebra on tensor-product spaces.
//! * [`measurement`]: indirect measurement models, error and disturbance
//!   operators and their root-mean-square values.
//! * [`conservation`]: additive conservation laws and the commutant of the
//!   total conserved quantity, used to parameterize conserving unitaries.
//! * [`bounds`]: the operator identities and WAY-type inequalities, each
//!   evaluated into an auditable [`bounds::BoundReport`].
//! * [`cnot`]: CNOT implementations as channels, worst-case gate fidelity and
//!   the link between noise and fidelity.
//! * [`scenarios`]: spin-ancilla and coherent-field settings, fidelity
//!   ceilings, and the search for good conserving implementations.

pub mod bounds;
pub mod cnot;
pub mod conservation;
pub mod error;
pub mod gates;
pub mod measurement;
pub mod operator;
pub mod optim;
pub mod sampling;
pub mod scenarios;
pub mod space;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use operator::{commutator, expectation, std_dev, tensor, Operator, C64};
pub use space::{partial_trace, HilbertSpec, Roles};
pub use spectral::{eig_hermitian, expm_skew, operator_norm, Spectrum};
pub use state::StateVector;
