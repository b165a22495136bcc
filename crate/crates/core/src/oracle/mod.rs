//! Exact propagation of the spin with a small discretized bath, used to
//! check the averaged equations.

pub mod bath;
pub mod compare;
pub mod krylov;
pub mod propagate;

pub use bath::{
    discrete_gamma_perp, discrete_lambda0, discretize_bath, occupation_probability, pure_dephasing_reference,
    sample_occupations, thermal_initial_state, BathDiscretization, FockSpace, Grid, ThermalEnsemble, DIMENSION_LIMIT,
};
pub use compare::{compare_with_langevin, ComparisonContext, ComparisonReport};
pub use propagate::{
    closed_cycle_phase, eigen_superposition, eigen_up, product_state, propagate_ensemble, propagate_exact, Frame,
    OracleDiagnostics, OracleResult, PropagationSettings, Stepper,
};
