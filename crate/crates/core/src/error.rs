use std::path::PathBuf;

use crate::assembly::NewtonReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-manifold edge ({a}, {b}) shared by {count} elements")]
    NonManifoldEdge { a: usize, b: usize, count: usize },

    #[error("degenerate element {element}: area {area:e}")]
    DegenerateElement { element: usize, area: f64 },

    #[error("quadrature degree {requested} exceeds the supported maximum {max}")]
    UnsupportedQuadratureDegree { requested: usize, max: usize },

    #[error("singular matrix in {0}")]
    SingularMatrix(String),

    #[error("singular element block in the Newton system of element {element}")]
    SingularElementBlock { element: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton iteration did not converge after {} iterations (last residual {:e})", .report.iterations, .report.final_residual())]
    NewtonDiverged { report: Box<NewtonReport> },

    #[error("unknown case `{0}` (expected one of nondeg-flux, nondeg-potential, nondeg-couple, degenerate)")]
    UnknownCase(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
