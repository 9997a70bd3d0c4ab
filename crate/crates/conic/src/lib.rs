//! Primal-dual interior-point solver for linear, second-order and
//! semidefinite cone programs.
//!
//! [`ipm::solve`] runs a homogeneous self-dual method against any
//! [`ipm::ConeProgram`]; [`dense::DenseProgram`] and [`sdp::solve_sdp`] are the
//! two bundled problem classes.

pub mod cone;
pub mod dense;
pub mod ipm;
pub mod sdp;

pub use cone::{Cones, Scaling};
pub use dense::DenseProgram;
pub use ipm::{solve, ConeProgram, IpmSettings, IpmSolution, Status};
pub use sdp::{solve_sdp, Coef, Row, SdpProblem, SdpSolution};

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
