//! Measurement-conditioned quantum trajectories from collision models of
//! structured environments.
//!
//! A system couples to a chain of environment qubits. Each time step evolves the
//! combined state, measures and resets the site that has just left the
//! interaction region, and shifts the chain by one site. Feedback loops and
//! exponential memory kernels both arise from the choice of coupling profile.

pub mod basis;
pub mod collision;
pub mod dense;
pub mod engine;
pub mod error;
mod ode;
pub mod model;
pub mod oracles;
pub mod propagator;
pub mod scalar;
pub mod sparse;
pub mod state;
pub mod stats;

pub use basis::{enumerate_basis, BasisEnumeration, Mode, ModeLayout, OccupationState};
pub use collision::{
    homodyne_eigensystem, homodyne_probabilities, homodyne_project, photodetection_probabilities, MeasurementOutcome,
    MeasurementScheme,
};
pub use dense::DenseMatrix;
pub use engine::{
    integrated_record, run_ensemble, CountingWindow, EnsembleOptions, EnsembleStats, InitialState, Observable,
    RecordSettings, StepRecord, Trajectory, TrajectoryConfig, TrajectorySource,
};
pub use error::{Error, Result};
pub use model::{CouplingProfile, CouplingVariant, SystemHamiltonianSpec};
pub use propagator::{evolve, Method, Propagator, PropagatorConfig};
pub use scalar::{Cx, Real};
pub use sparse::SparseOperator;
pub use state::{partial_trace_system, DensityMatrix, PureState};
pub use stats::{histogram, Histogram};

pub type Complex64 = num_complex::Complex<f64>;
pub type State = PureState<f64>;
pub type State32 = PureState<f32>;
pub type Operator = SparseOperator<f64>;
pub type Operator32 = SparseOperator<f32>;
pub type Density = DensityMatrix<f64>;
pub type Density32 = DensityMatrix<f32>;
pub type Simulator = engine::Simulator<f64>;
pub type Simulator32 = engine::Simulator<f32>;
