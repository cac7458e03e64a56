//! Pieces shared by the subcommands: failure kinds with their exit codes,
//! config loading and setting lists.

use std::path::Path;

use ivct_core::config::RunConfig;
use ivct_core::sampling::Setting;
use ivct_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonFinite(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::NonFinite(_) => 4,
            CliError::Mismatch(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Invalid(_) | Error::Config(_) => CliError::Usage(msg),
            Error::Io { .. } | Error::Format { .. } => CliError::Io(msg),
            Error::NonFinite(_) => CliError::NonFinite(msg),
            Error::Checkpoint(_) | Error::Version { .. } | Error::Geometry(_) | Error::Shape(_) => CliError::Mismatch(msg),
            Error::Tensor(_) => CliError::Other(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Unreadable files are I/O failures; unparsable contents are bad input.
pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Comma-separated settings. An item `KIND:LO..HI:STEP` expands to a range,
/// e.g. `svct:18..144:18` or `lact:60..180:30`.
pub fn parse_settings(text: &str) -> CliResult<Vec<Setting>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            None => out.push(item.parse::<Setting>()?),
            Some((head, tail)) => {
                let bad = || CliError::Usage(format!("bad setting range {item:?}"));
                let (kind, lo) = head.split_once(':').ok_or_else(bad)?;
                let (hi, step) = tail.split_once(':').ok_or_else(bad)?;
                let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
                let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
                if !(step > 0.0) || hi < lo {
                    return Err(bad());
                }
                let mut x = lo;
                while x <= hi + 1e-9 {
                    out.push(format!("{kind}:{x}").parse::<Setting>()?);
                    x += step;
                }
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no settings given".into()));
    }
    Ok(out)
}

/// Caps rayon workers from `IVCT_THREADS`.
pub fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("IVCT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("IVCT_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_lists_and_ranges() {
        let s = parse_settings("svct:18..72:18, lact:90").unwrap();
        let labels: Vec<String> = s.iter().map(|s| s.to_string()).collect();
        assert_eq!(labels, ["svct:18", "svct:36", "svct:54", "svct:72", "lact:90"]);
        assert_eq!(parse_settings("").unwrap_err().exit_code(), 2);
        assert_eq!(parse_settings("svct:10..5:1").unwrap_err().exit_code(), 2);
        assert_eq!(parse_settings("bogus").unwrap_err().exit_code(), 2);
    }
}
