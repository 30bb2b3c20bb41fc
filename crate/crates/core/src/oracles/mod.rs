//! Independent reference implementations used to validate the collision engine.

pub mod dde;
pub mod lindblad;
pub mod mcwf;
pub mod single_excitation;

pub use dde::{calibrate_feedback, calibrated_feedback_dde, feedback_dde, Calibration, DdeCoefficients, DdeSpec};
pub use lindblad::{jc_pseudomode, lindblad_solve, markovian_spec, two_port_spec, LindbladSpec};
pub use mcwf::{mcwf_homodyne, mcwf_photodetection, Mcwf, McwfConfig, McwfDetection};
pub use single_excitation::{single_excitation_schrodinger, AmplitudeSeries};
