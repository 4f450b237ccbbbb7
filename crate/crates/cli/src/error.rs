use chaos_core::ChaosError;
use serde_json::{json, Value};

#[derive(Debug)]
pub enum CliError {
    Core(ChaosError),
    Invalid(String),
    Io { path: String, message: String },
    Usage(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Machine-readable record written to stderr.
    pub fn record(&self) -> Value {
        match self {
            CliError::Core(e) => {
                let mut rec = json!({"error": e.kind(), "message": e.to_string()});
                match e {
                    ChaosError::Schema { path, message } => {
                        rec["path"] = json!(path);
                        rec["message"] = json!(message);
                    }
                    ChaosError::NotSymmetric { index, partner, violation } => {
                        rec["symmetry"] = json!({"index": index, "partner": partner, "violation": violation});
                    }
                    ChaosError::AsymmetricKernel { path, index, partner, violation } => {
                        rec["path"] = json!(path);
                        rec["symmetry"] = json!({"index": index, "partner": partner, "violation": violation});
                    }
                    _ => {}
                }
                rec
            }
            CliError::Invalid(m) => json!({"error": "invalid_parameter", "message": m}),
            CliError::Io { path, message } => json!({"error": "io", "path": path, "message": message}),
            CliError::Usage(m) => json!({"error": "usage", "message": m}),
        }
    }
}

impl From<ChaosError> for CliError {
    fn from(e: ChaosError) -> Self {
        CliError::Core(e)
    }
}
