use std::fmt::Display;

use thiserror::Error;

/// Exit code for bad arguments, unreadable or inconsistent inputs.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for a failure inside a pipeline stage.
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Stage { .. } => EXIT_STAGE,
        }
    }
}

/// For `map_err`: an input error carrying `e`'s message.
pub fn input<E: Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

/// For `map_err`: a failure tagged with the stage it came from.
pub fn at<E: Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Stage {
        stage,
        message: e.to_string(),
    }
}
