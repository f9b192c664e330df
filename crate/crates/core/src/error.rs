use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not hermitian: defect {defect:.3e} at entry ({row}, {col})")]
    NotHermitian { row: usize, col: usize, defect: f64 },

    #[error("matrix is not positive definite: Cholesky pivot {pivot} is {value:.3e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("curvature is not positive at node {node} (density {density:.3e})")]
    CurvaturePositivity { node: usize, density: f64 },

    #[error("curvature volume has mass {mass:.12} but the class forces {expected}; refine the quadrature")]
    MassDefect { mass: f64, expected: f64 },

    #[error("target outside the admissible region: {0}")]
    Margin(String),

    #[error("matrix too ill-conditioned (cond {cond:.3e} > {limit:.1e})")]
    Conditioning { cond: f64, limit: f64 },

    #[error("{solver} did not converge: {reason} (residuals: {})", fmt_history(.history))]
    Convergence {
        solver: &'static str,
        reason: String,
        history: Vec<f64>,
    },

    #[error("continuation stalled at t = {t:.6} with step {step:.3e}")]
    Continuation {
        t: f64,
        step: f64,
        trace: Box<crate::pushforward::ContinuationTrace>,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn at_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }

    pub fn at_iteration(iteration: usize) -> impl FnOnce(Error) -> Error {
        move |e| Error::AtIteration {
            iteration,
            source: Box::new(e),
        }
    }

    /// Outermost stage name, if the error was raised inside a pipeline.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Validation errors are the caller's fault; everything else is numerical.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Dimension(_)
            | Error::NotHermitian { .. }
            | Error::Config(_)
            | Error::Domain(_)
            | Error::Margin(_) => true,
            Error::Stage { source, .. } | Error::AtIteration { source, .. } | Error::AtRow { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

fn fmt_history(h: &[f64]) -> String {
    let tail = h.len().saturating_sub(4);
    let parts: Vec<String> = h[tail..].iter().map(|r| format!("{r:.3e}")).collect();
    if tail > 0 {
        format!("... {}", parts.join(", "))
    } else {
        parts.join(", ")
    }
}
