use thiserror::Error;

pub type Result<T> = std::result::Result<T, CalabiError>;

/// Errors surfaced by field construction, tensor operations and solvers.
#[derive(Debug, Error)]
pub enum CalabiError {
    #[error("operation requires a real-tagged field, got a complex one ({context})")]
    NonRealInput { context: String },

    #[error("fields live on different charts ({context})")]
    ChartMismatch { context: String },

    #[error(
        "resolution too low along periodic axis {axis}: relative spectral tail energy {tail:.3e} exceeds {threshold:.1e}"
    )]
    ResolutionTooLow {
        axis: usize,
        tail: f64,
        threshold: f64,
    },

    #[error(
        "metric degenerate: minimum eigenvalue {value:.6e} at node {node:?} is below {threshold:.1e}"
    )]
    DegenerateMetric {
        node: Vec<usize>,
        value: f64,
        threshold: f64,
    },

    #[error("determinant underflow in log det at node {node:?}: det = {value:.6e}")]
    DeterminantUnderflow { node: Vec<usize>, value: f64 },

    #[error("perturbed form lost positivity: minimum margin {margin:.6e} at node {node:?}")]
    PositivityLoss {
        node: Vec<usize>,
        margin: f64,
        /// Per-node minimum eigenvalue of the offending form.
        margin_field: Vec<f64>,
    },

    #[error(
        "model form positive only up to radius {max_positive_radius:.6e}; margin {margin:.3e} at radius {failing_radius:.6e}"
    )]
    ModelPositivityWindow {
        max_positive_radius: f64,
        failing_radius: f64,
        margin: f64,
    },

    #[error("linear solve stagnated: relative residual {residual:.3e} after {iterations} iterations (target {target:.1e})")]
    LinearSolveStagnation {
        residual: f64,
        iterations: usize,
        target: f64,
    },

    #[error("Newton step failed after {halvings} damping halvings at s = {s}: residual {residual:.6e}")]
    NewtonStagnation {
        s: f64,
        halvings: usize,
        residual: f64,
    },

    #[error("continuity path failed at s = {s}: {source}")]
    PathFailure {
        s: f64,
        #[source]
        source: Box<CalabiError>,
    },

    #[error("the two model-form evaluations disagree: max deviation {deviation:.3e} exceeds {tolerance:.1e} (differentiation resolution problem)")]
    FormIdentityMismatch { deviation: f64, tolerance: f64 },

    #[error("inputs are not solutions: residual {residual:.3e} above 10x tolerance {tolerance:.1e}")]
    NotASolution { residual: f64, tolerance: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl CalabiError {
    pub fn chart_mismatch(context: &str) -> Self {
        CalabiError::ChartMismatch {
            context: context.to_string(),
        }
    }
}
