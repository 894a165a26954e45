//! Lyapunov drift, minorization, regeneration and law-comparison tools for
//! the period-`T` skeleton chain.

mod diagnostics;
mod kernel;
mod lyapunov;
mod minorization;
mod regeneration;

pub use diagnostics::{
    energy_distance, multi_start_diagnostic, periodic_invariance_check, pooled_scales, EmpiricalMeasure,
    InvarianceConfig, MultiStartConfig, MultiStartReport, PeriodicInvariance,
};
pub use kernel::{HhSkeleton, OuSkeleton, SkeletonKernel};
pub use lyapunov::*;
pub use minorization::{
    find_minorization, ou_minorization, unit_ball_volume, MinorizationBall, MinorizationConfig,
    TransitionPair,
};
pub use regeneration::{
    regeneration_invariant_estimate, regeneration_times, run_split_chain, run_split_chains,
    transition_pairs, EstimatorConfig, InvariantEstimate, RegenerationRecord, SplitChain,
};
