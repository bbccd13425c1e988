//! Synchronization of linearly coupled Stratonovich SODEs with linear
//! multiplicative noise, studied through the conjugate pathwise RODEs.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` aliases below fix the usual double-precision instantiation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod scalar;
pub mod sim;
pub mod spectral;

pub use dynamics::{
    averaged_rode_rhs, averaged_to_sode, conjugate_rhs, coupled_rode_rhs, coupled_sode_drift, frame_convert,
    verify_one_sided_lipschitz, DriftKind, DriftSpec, Frame, LipschitzCheck, StateVector, SystemSpec,
};
pub use error::{Result, SyncError};
pub use noise::{
    build_ou_paths, ergodic_average, estimate_t_omega, sample_wiener, shift_path, NoiseGrid, OUPathSet, OmegaTime,
    OuInit, TimeGrid,
};
pub use scalar::Real;
pub use sim::*;
pub use spectral::{
    alpha_threshold, circulant_laplacian_eigenvalues, circulant_quadratic_form, comparison_bound,
    comparison_bound_at, cyclic_coupling_matrix, sharp_alpha_threshold, tridiag_eigenvalues, CouplingMatrixSeries,
    CouplingVariant, TridiagSpec,
};

pub type TimeGridF64 = TimeGrid<f64>;
pub type NoiseGridF64 = NoiseGrid<f64>;
pub type OUPathSetF64 = OUPathSet<f64>;
pub type DriftSpecF64 = DriftSpec<f64>;
pub type SystemSpecF64 = SystemSpec<f64>;
pub type StateVectorF64 = StateVector<f64>;
pub type TrajectoryBundleF64 = TrajectoryBundle<f64>;
pub type AttractorEstimateF64 = AttractorEstimate<f64>;
pub type TridiagSpecF64 = TridiagSpec<f64>;

pub type TimeGridF32 = TimeGrid<f32>;
pub type OUPathSetF32 = OUPathSet<f32>;
pub type SystemSpecF32 = SystemSpec<f32>;
pub type TrajectoryBundleF32 = TrajectoryBundle<f32>;
