//! Positive-P stochastic integration of the scaled nondegenerate OPO.

mod integrate;
mod noise;
mod state;

pub use integrate::{
    integrate_trajectory, integrate_with_noise, map_ensemble, run_ensemble, trajectory_seed,
    EnsembleConfig, EnsembleOutput, Mode, Scheme, Trajectory, DIVERGENCE_BOUND, MAX_DIVERGED_FRACTION,
    MAX_DT,
};
pub use noise::{noise_amplitudes, NoiseCoefficients, NoiseIncrement};
pub use state::{drift, drift_jacobian, PhaseSpaceState, COMPONENT_NAMES};
