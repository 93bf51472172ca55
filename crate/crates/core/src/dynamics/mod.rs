//! Open-system dynamics: master-equation integration, quantum trajectories,
//! displaced frames and one-period propagators.

pub mod floquet;
pub mod frame;
pub mod integrator;
pub mod lindblad;
pub mod mcwf;

pub use floquet::{floquet_propagator, floquet_propagator_block, fold_quasienergy, unitary_eigen, FloquetResult};
pub use frame::{displace_frame, displace_full, displacement, ModelRef};
pub use integrator::{IntegratorOptions, Method, StepStats};
pub use lindblad::{
    integrate_master, integrate_master_observed, integrate_master_with, Dissipator, EvolutionResult, Hamiltonian,
    LindbladProblem, MasterOptions, RunSummary,
};
pub use mcwf::{mcwf, mcwf_mixture, mcwf_observed, McwfOptions, TrajectoryEnsemble};
