use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot write {path}: {reason}")]
    Output { path: String, reason: String },

    #[error(transparent)]
    Core(#[from] fracpk::Error),
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for configuration and I/O problems, 3 for numerical failures,
    /// 4 for an infeasible dosing program.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Core(e) => match e {
                fracpk::Error::InvalidArgument(_) | fracpk::Error::Io(_) => 2,
                fracpk::Error::Infeasible(_) => 4,
                _ => 3,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Output { .. } => "output",
            CliError::Core(e) => match e {
                fracpk::Error::InvalidArgument(_) => "invalid-argument",
                fracpk::Error::Io(_) => "io",
                fracpk::Error::NonConvergence { .. } => "non-convergence",
                fracpk::Error::Singular(_) => "singular",
                fracpk::Error::NonFinite { .. } => "non-finite",
                fracpk::Error::Refused(_) => "refused",
                fracpk::Error::Inversion { .. } => "inversion",
                fracpk::Error::Infeasible(_) => "infeasible",
                fracpk::Error::MaxIterations { .. } => "max-iterations",
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorJson {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("error serializes")
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::from(fracpk::Error::InvalidArgument("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(fracpk::Error::Infeasible("x".into())).exit_code(), 4);
        let e = fracpk::Error::MaxIterations {
            iterations: 1,
            primal: 1.0,
            dual: 1.0,
        };
        assert_eq!(CliError::from(e).exit_code(), 3);
    }

    #[test]
    fn json_is_machine_readable() {
        let v: serde_json::Value = serde_json::from_str(&CliError::from(fracpk::Error::Infeasible("empty".into())).to_json()).unwrap();
        assert_eq!(v["error"], "infeasible");
        assert_eq!(v["exit_code"], 4);
    }
}
