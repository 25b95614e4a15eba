//! Artifact writing: CSV tables, JSON documents and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

/// Number rounded to 12 significant digits, printed as a plain decimal.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Optional value; empty field when absent.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

#[derive(Debug, Default)]
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut c = Self::default();
        c.body.push_str(&header.join(","));
        c.body.push('\n');
        c
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.body.push(',');
            }
            first = false;
            let _ = write!(self.body, "{}", f.as_ref());
        }
        self.body.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.body
    }
}

/// Output directory plus the list of files written so far.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
    started_unix: u64,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, csv: &Csv) -> Result<(), CliError> {
        self.write(name, csv.as_str())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes `manifest.json`; the only artifact carrying timestamps.
    pub fn finish(mut self, command: &str, inputs: Value, seed: Option<u64>) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "command": command,
            "inputs": inputs,
            "seed": seed,
            "versions": {
                "sshchain": sshchain::VERSION,
                "sshchain-cli": env!("CARGO_PKG_VERSION"),
            },
            "artifacts": self.written,
            "started_unix": self.started_unix,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
        });
        self.json("manifest.json", &manifest)?;
        Ok(self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.8090169943749475), "0.809016994375");
        assert_eq!(fmt_num(-0.30901699437494745), "-0.309016994375");
        assert_eq!(fmt_num(1003.3812345678912), "1003.38123457");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-1.0), "-1");
        assert_eq!(fmt_num(1e-5), "0.00001");
    }

    #[test]
    fn csv_rows() {
        let mut c = Csv::new(&["a", "b"]);
        c.row([fmt_num(1.5), fmt_opt(None)]);
        assert_eq!(c.as_str(), "a,b\n1.5,\n");
    }
}
