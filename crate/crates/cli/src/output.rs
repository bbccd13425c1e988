//! CSV artifacts and the JSON run summary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sodesync::noise::fmt12;

/// Formats a value for CSV output; non-finite values and `None` become `nan`.
pub fn num(v: impl Into<Option<f64>>) -> String {
    match v.into() {
        Some(x) if x.is_finite() => fmt12(x),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.to_string(),
        _ => "nan".to_string(),
    }
}

/// Writes the files of one run into a directory, each under a `#` header line
/// carrying the config hash, experiment name and column schema.
pub struct Artifacts {
    dir: PathBuf,
    tag: String,
    files: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, config_hash: &str, experiment: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            tag: format!("config={config_hash} experiment={experiment}"),
            files: Vec::new(),
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Creates `name` and hands a buffered writer to `body`.
    pub fn write_with(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut out)?;
        out.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let header = format!("# {} columns={}", self.tag, columns.join(","));
        self.write_with(name, |out| {
            writeln!(out, "{header}")?;
            writeln!(out, "{}", columns.join(","))?;
            for row in rows {
                debug_assert_eq!(row.len(), columns.len());
                writeln!(out, "{}", row.join(","))?;
            }
            Ok(())
        })
    }

    pub fn summary(&self, summary: &RunSummary) -> io::Result<()> {
        let text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
        fs::write(self.dir.join("summary.json"), text + "\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
        }
    }
}

/// One pass/fail check, with what it was measured on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub experiment: String,
    /// Seeds that entered the check; flagged seeds are excluded.
    pub seeds: Vec<u64>,
    pub comparison: String,
    pub threshold: f64,
    pub observed: Option<f64>,
    pub passed: bool,
    /// CSV file holding the per-seed values behind `observed`.
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub status: Status,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub flagged_seeds: Vec<u64>,
    pub assertions: Vec<Assertion>,
    pub scalars: BTreeMap<String, Option<f64>>,
    pub artifacts: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(num(None), "nan");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_has_tagged_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path(), "abc", "nu-sweep").unwrap();
        a.csv("x.csv", &["nu", "gap"], &[vec![num(1.0), num(0.5)]]).unwrap();
        let text = fs::read_to_string(dir.path().join("x.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config=abc experiment=nu-sweep columns=nu,gap");
        assert_eq!(lines[1], "nu,gap");
        assert_eq!(lines[2], "1.00000000000e0,5.00000000000e-1");
        assert_eq!(a.files(), ["x.csv"]);
    }
}
