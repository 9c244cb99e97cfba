//! Critical dynamics of a driven-dissipative Kerr resonator.
//!
//! The crate builds the Liouvillian superoperator of a single Kerr mode with
//! coherent drive and single-photon loss in a truncated Fock basis, solves
//! for steady states and the spectral gap, evaluates the semiclassical
//! (mean-field) limit and closed-form steady-state moments, computes Wigner
//! functions, and runs the finite-size-scaling analysis that exhibits the
//! first-order dissipative phase transition: exponential closing of the gap
//! with the size parameter N, power-law growth of the relaxation time above
//! the critical drive, and loss of Wigner bimodality.
//!
//! Everything is expressed in units of the dissipation rate γ. The size
//! parameter N enters through U = Ũ/N and F = √N·F̃, so the rescaled drive
//! F̃ and nonlinearity Ũ are the natural control knobs at every N.

pub mod analytic;
pub mod banded;
pub mod bh;
pub mod criticality;
pub mod cutoff;
pub mod density;
pub mod eig;
pub mod error;
pub mod fit;
pub mod fock;
pub mod liouvillian;
pub mod params;
pub mod semiclassical;
pub mod sparse;
pub mod spectral;
pub mod steady;
pub mod wigner;

pub use analytic::{moment, observables_analytic};
pub use bh::{k0_reduce, BoseHubbardParams};
pub use criticality::{
    critical_analysis, find_fc, sweep_csv, sweep_gap, CriticalAnalysis, CriticalFit,
    CriticalPoint, CriticalScan, SizeFit, SweepPlan, SweepRecord, SWEEP_CSV_HEADER,
};
pub use cutoff::{auto_cutoff, CutoffSpec};
pub use density::{observables_numeric, DensityMatrix, ObservableSource, Observables};
pub use error::{CoreError, Result};
pub use fit::{
    extrapolate_1overn, fit_exponential_tau, fit_power_law, golden_minimize, linear_fit,
    ExponentialFit, Extrapolation, FitWindow, LinearFit, PowerLawFit,
};
pub use fock::{annihilation_op, hamiltonian, number_op, FockOperator};
pub use liouvillian::{build_liouvillian, time_evolve, Superoperator, Trajectory, VectorizationConvention};
pub use params::ModelParams;
pub use semiclassical::{
    bistability_edges, integrate_meanfield, steady_roots, BistabilityEdges, SemiclassicalRoot,
};
pub use spectral::{
    full_spectrum, gap_dense, gap_krylov, gap_krylov_prefactored, liouvillian_gap, GapMethod,
    GapResult, KrylovOpts,
};
pub use steady::{steady_state_numeric, BorderedSolver};
pub use wigner::{count_peaks, default_grid, wigner, GridSpec, Peak, WignerField};
