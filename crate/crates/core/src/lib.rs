pub mod controllability;
pub mod error;
pub mod jet;
pub mod linalg;
pub mod matfun;
pub mod ode;
pub mod quad;
pub mod riccati;
pub mod scalar;
pub mod sim;
pub mod steering;
pub mod system;
pub mod tolerances;
pub mod transition;

pub use controllability::{
    canonical_transform, classify, construct_feasible_steering, construct_feasible_steering_with,
    scalar_steering_u, theta_matrices, CanonicalForm, ControllabilityReport, FeasibleSteering,
};
pub use error::{Error, Result};
pub use matfun::{kron, unvec, vec, MatrixPoly, Poly};
pub use riccati::{existence_check, integrate_general, maximal_interval, pi_bounds, solve_closed_form};
pub use scalar::Scalar;
pub use steering::{
    feedback_gain, jacobian_f, map_f, optimal_cost, propagate_covariance, solve_boundary, special_case_pi0,
    SteeringSolution,
};
pub use system::{validate_system, BoundaryData, GeneralChannel, SystemSpec, ValidationReport};
pub use tolerances::Tolerances;
pub use transition::{gramian_identity, symplectic_residuals, transition_blocks, TransitionBlocks};
pub use sim::{
    derive_intensities, empirical_moments, estimate_cost, simulate_paths, GainSchedule, NoiseKind, NoiseModel,
    SimulationConfig, SimulationResult,
};

pub type SystemSpecF64 = SystemSpec<f64>;
pub type SystemSpecF32 = SystemSpec<f32>;
pub type BoundaryDataF64 = BoundaryData<f64>;
pub type BoundaryDataF32 = BoundaryData<f32>;
pub type TolerancesF64 = Tolerances<f64>;
pub type TolerancesF32 = Tolerances<f32>;
pub type SteeringSolutionF64 = SteeringSolution<f64>;
pub type SteeringSolutionF32 = SteeringSolution<f32>;
pub type FeasibleSteeringF64 = FeasibleSteering<f64>;
pub type SimulationResultF64 = SimulationResult<f64>;
pub type MatrixPolyF64 = MatrixPoly<f64>;
pub type MatrixPolyF32 = MatrixPoly<f32>;
