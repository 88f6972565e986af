//! Quantum steering ellipsoids of two-qubit states, volume monogamy of
//! three-qubit states, and a simulated steering-tomography pipeline with
//! least-squares quadric fitting of the reconstructed point clouds.
//!
//! Qubit ordering follows the ket notation: qubit 0 is the leftmost symbol
//! (Alice) and the most significant bit of a computational-basis index, so
//! `|100⟩` is amplitude 4 of a three-qubit state.

pub mod config;
pub mod fitquad;
pub mod monogamy;
pub mod pipeline;
pub mod qstate;
pub mod random;
pub mod steer;
pub mod tomosim;

pub use fitquad::{FitError, PointCloud, QuadricFit};
pub use monogamy::MonogamyReport;
pub use qstate::{DensityMatrix, PauliDecomposition, PureState, StateError};
pub use steer::{SteerError, SteeringEllipsoid};
