use serde::Serialize;
use serde_json::Value;

use stepwork_core::build::{BuildError, RunError};
use stepwork_core::codegen::CodegenError;
use stepwork_core::component::{PackDirError, PackError};
use stepwork_core::persistence::{PersistError, ReplayError};
use stepwork_core::steps::StepsError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_GENERATION: i32 = 3;
pub const EXIT_TOOLCHAIN: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;
pub const EXIT_USAGE: i32 = 64;

#[derive(Clone, Debug, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub exit_code: i32,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(exit_code: i32, code: &str, message: impl Into<String>) -> Self {
        CliError {
            exit_code,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn usage(code: &str, message: impl Into<String>) -> Self {
        CliError::new(EXIT_USAGE, code, message)
    }

    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        CliError::new(EXIT_VALIDATION, code, message)
    }

    pub fn toolchain(code: &str, message: impl Into<String>) -> Self {
        CliError::new(EXIT_TOOLCHAIN, code, message)
    }

    pub fn runtime(code: &str, message: impl Into<String>) -> Self {
        CliError::new(EXIT_RUNTIME, code, message)
    }
}

/// Debug name of an enum variant, used as the machine code.
fn variant<T: std::fmt::Debug>(e: &T) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_string()
}

fn pack_code(e: &PackError) -> String {
    match e {
        PackError::Invalid(f) => f.code.to_string(),
        other => variant(other),
    }
}

impl From<PackError> for CliError {
    fn from(e: PackError) -> Self {
        CliError::validation(&pack_code(&e), e.to_string())
    }
}

impl From<PackDirError> for CliError {
    fn from(e: PackDirError) -> Self {
        let message = e.to_string();
        match e {
            PackDirError::Io { .. } => CliError::usage("InputUnreadable", message),
            PackDirError::Pack { source, .. } => CliError::validation(&pack_code(&source), message),
            PackDirError::Registry { source, .. } => CliError::validation(&variant(&source), message),
        }
    }
}

impl From<StepsError> for CliError {
    fn from(e: StepsError) -> Self {
        CliError::validation(&variant(&e), e.to_string())
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::validation(&variant(&e), e.to_string())
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        let code = match &e {
            ReplayError::Project(s) | ReplayError::Action { source: s, .. } => variant(s),
            ReplayError::Malformed(_) => "MalformedSession".into(),
            ReplayError::UnsupportedFormat(_) => "UnsupportedFormatVersion".into(),
        };
        CliError::validation(&code, e.to_string())
    }
}

impl From<CodegenError> for CliError {
    fn from(e: CodegenError) -> Self {
        CliError::new(EXIT_GENERATION, &variant(&e), e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        CliError::toolchain(&variant(&e), e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Timeout { .. } => CliError::runtime("Timeout", e.to_string()),
            RunError::NotBuilt => CliError::toolchain("NotBuilt", e.to_string()),
            RunError::SpawnFailure { .. } => CliError::toolchain("SpawnFailure", e.to_string()),
        }
    }
}

/// Result of one command. Keys are the same for every command.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub args: Vec<String>,
    /// `ok` or `failed`.
    pub outcome: &'static str,
    pub exit_code: i32,
    pub items: Vec<Value>,
    pub summary: Value,
    pub error: Option<CliError>,
}

/// What a command produced, before it is rendered.
#[derive(Debug, Default)]
pub struct Output {
    pub items: Vec<Value>,
    pub summary: Value,
    /// Human-readable rendering for stdout.
    pub stdout: Vec<u8>,
    /// Extra text for stderr in human mode.
    pub stderr: Vec<u8>,
    /// Set when the command ran to the end but did not succeed.
    pub failure: Option<CliError>,
}

impl Output {
    pub fn line(&mut self, s: impl AsRef<str>) {
        self.stdout.extend_from_slice(s.as_ref().as_bytes());
        self.stdout.push(b'\n');
    }
}
