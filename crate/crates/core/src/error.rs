use thiserror::Error;

/// Errors produced anywhere in the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid subsystem {keep:?} for a {num_qubits}-qubit register")]
    InvalidSubsystem { keep: Vec<usize>, num_qubits: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),

    #[error("invalid gate {kind}: {reason}")]
    InvalidGate { kind: String, reason: String },

    #[error("unknown state id: {0}")]
    UnknownState(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid calibration matrix: {0}")]
    InvalidCalibration(String),

    #[error("measured RDM purity {purity} is not attainable with survival probability {p_dep} (attainable range [{min}, {max}])")]
    OutOfModel {
        purity: f64,
        p_dep: f64,
        min: f64,
        max: f64,
    },

    #[error("non-local magic {nonlocal} exceeds total magic {total}")]
    Inconsistent { nonlocal: f64, total: f64 },

    #[error("undersampled data: {0}")]
    Undersampled(String),

    #[error("solver did not converge after {iterations} iterations (objective {objective:e}, last step {last_step:e})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        last_step: f64,
    },

    #[error("decay fit failed: {0}")]
    FitFailure(String),

    #[error("unidentifiable decay: survival data is constant")]
    Unidentifiable,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("scenario {scenario}: {source}")]
    InScenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}
