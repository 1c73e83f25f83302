use std::fmt;
use std::process::ExitCode;

use fact_core::Error as CoreError;

/// Everything that ends a run early. Each variant maps to a one-line
/// `error[kind]: message` on stderr and an exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations.
    Usage(String),
    /// Unreadable or malformed input; `line` is 1-based when known.
    Input { line: Option<u64>, message: String },
    Core(CoreError),
    Output(std::io::Error),
    /// FACT and the brute-force closure disagree.
    Mismatch(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn input(line: Option<u64>, message: impl Into<String>) -> Self {
        CliError::Input { line, message: message.into() }
    }

    /// Machine-readable prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input { .. } => "input",
            CliError::Core(e) => core_kind(e),
            CliError::Output(_) => "io",
            CliError::Mismatch(_) => "mismatch",
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        let validation = match self {
            CliError::Usage(_) | CliError::Input { .. } => true,
            CliError::Core(e) => matches!(core_kind(e), "validation"),
            CliError::Output(_) | CliError::Mismatch(_) => false,
        };
        ExitCode::from(if validation { 2 } else { 1 })
    }
}

fn core_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::InvalidPValue { .. }
        | CoreError::DuplicateId(_)
        | CoreError::LengthMismatch { .. }
        | CoreError::Empty
        | CoreError::InvalidAlpha(_)
        | CoreError::InvalidParameter { .. }
        | CoreError::OutOfRange { .. }
        | CoreError::TooLarge { .. }
        | CoreError::NotMonotoneCombination(_) => "validation",
        CoreError::CalibrationMissing { .. } | CoreError::AlphaMismatch { .. } | CoreError::Cache { .. } => {
            "calibration"
        }
        CoreError::Stage { source, .. } | CoreError::Trial { source, .. } => core_kind(source),
        CoreError::Io(_) => "io",
        _ => "internal",
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            CliError::Usage(m) | CliError::Mismatch(m) => m.clone(),
            CliError::Input { line: Some(l), message } => format!("line {l}: {message}"),
            CliError::Input { line: None, message } => message.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::Output(e) => format!("writing output: {e}"),
        };
        // Keep the report on one line whatever the source error looks like.
        write!(f, "error[{}]: {}", self.kind(), text.replace('\n', " "))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_and_prefixes() {
        let e = CliError::input(Some(3), "bad");
        assert_eq!(e.to_string(), "error[input]: line 3: bad");
        assert_eq!(e.exit_code(), ExitCode::from(2));
        let e = CliError::from(CoreError::TooLarge { n: 25, cap: 20 });
        assert_eq!(e.kind(), "validation");
        assert_eq!(e.exit_code(), ExitCode::from(2));
        let nested = CoreError::Stage {
            stage: 2,
            source: Box::new(CoreError::CalibrationMissing { test: "hc".into(), size: 4 }),
        };
        assert_eq!(CliError::from(nested).kind(), "calibration");
        assert_eq!(CliError::Mismatch("x".into()).exit_code(), ExitCode::from(1));
    }
}
