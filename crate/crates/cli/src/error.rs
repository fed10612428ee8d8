use std::fmt;
use std::path::PathBuf;

use miri_core::MiriError;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input paths.
    Usage(String),
    Core(MiriError),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
        }
    }

    /// 2 for usage and configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_usage() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    /// `error[kind]: message` on a single line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::Io { path, source } => format!("{}: {source}", path.display()),
        };
        let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error[{}]: {flat}", self.kind())
    }
}

impl From<MiriError> for CliError {
    fn from(e: MiriError) -> Self {
        CliError::Core(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(MiriError::Config("bad".into())).exit_code(), 2);
        assert_eq!(CliError::Core(MiriError::Solver { step: 3 }).exit_code(), 1);
        let nested = MiriError::Iteration {
            iteration: 2,
            source: Box::new(MiriError::Config("b".into())),
        };
        assert_eq!(CliError::Core(nested).exit_code(), 2);
    }

    #[test]
    fn display_is_one_line() {
        let e = CliError::Usage("first\nsecond  line".into());
        assert_eq!(e.to_string(), "error[usage]: first second line");
        let e = CliError::Core(MiriError::Solver { step: 7 });
        assert!(e.to_string().starts_with("error[solver]: "));
    }
}
