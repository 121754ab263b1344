use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use tbt_core::export::round_sig;
use tbt_core::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, or unwritable output.
    Input(String),
    Validation(String),
    Numerical(String),
    /// A required equilibrium does not exist.
    NotFound(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NotFound(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Validation(m) | CliError::Numerical(m) | CliError::NotFound(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Degenerate(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

/// Round every floating-point number in a JSON tree to 12 significant digits.
fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x))) {
                *n = x;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(report: &T) -> Result<String, CliError> {
    let mut v = serde_json::to_value(report).map_err(|e| CliError::Numerical(e.to_string()))?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Destination of a command's main output.
pub struct Output {
    path: Option<PathBuf>,
}

impl Output {
    pub fn new(path: Option<PathBuf>) -> Self {
        Output { path }
    }

    pub fn write(&self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.path {
            Some(p) => write_file(p, bytes),
            None => {
                let mut out = io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_are_rounded_integers_kept() {
        let s = to_json(&serde_json::json!({"x": 0.1 + 0.2, "n": 7, "v": [1.0 / 3.0]})).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["x"], 0.3);
        assert_eq!(v["n"], 7);
        assert_eq!(v["v"][0], 0.333333333333);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::InvalidParameter("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::MaxReturnsExceeded(3)).exit_code(), 3);
        assert_eq!(CliError::NotFound("e1".into()).exit_code(), 4);
    }
}
