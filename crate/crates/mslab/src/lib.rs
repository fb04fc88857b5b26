//! Solvers for 2D multiscale elliptic problems `-div(a(x) grad u) = f` on the
//! unit square with highly oscillatory or high-contrast coefficients.
//!
//! Four discretizations are provided and compared against a fine reference
//! solve: plain P1 FEM on a fine grid, standard MsFEM, a mixed-basis MsFEM
//! (oversampling bases away from the boundary, standard bases near it), and a
//! combined FE-MsFEM that runs linear FEM on a fine mesh in a frame region
//! near the boundary and oversampling MsFEM in the interior, glued across the
//! interface with Nitsche-type penalty terms. A periodic-homogenization
//! module supplies an independent validation oracle.

pub mod cli;
pub mod coeff;
pub mod coupling;
pub mod error;
pub mod fem;
pub mod homog;
pub mod linalg;
pub mod mesh;
pub mod msbasis;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum MsError {
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("coefficient error: {0}")]
    Coefficient(String),
    #[error("linear algebra error: {0}")]
    Linalg(String),
    #[error("solver did not converge: {context} ({iterations} iterations, residual {residual:.3e})")]
    NonConverged {
        context: String,
        iterations: usize,
        residual: f64,
    },
    #[error("parse error in {file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MsError>;
