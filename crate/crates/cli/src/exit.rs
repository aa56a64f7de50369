use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_OTHER: i32 = 1;

/// An error tagged with the exit code it maps to.
#[derive(Debug)]
pub struct Tagged {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Tagged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Tagged {}

pub type CliResult<T> = anyhow::Result<T>;

pub fn config_err(msg: impl fmt::Display) -> anyhow::Error {
    Tagged { code: EXIT_CONFIG, message: msg.to_string() }.into()
}

pub fn data_err(msg: impl fmt::Display) -> anyhow::Error {
    Tagged { code: EXIT_DATA, message: msg.to_string() }.into()
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Tagged>())
        .map_or(EXIT_OTHER, |t| t.code)
}
