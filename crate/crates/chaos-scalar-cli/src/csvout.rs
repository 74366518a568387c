//! CSV emission with a byte-stable numeric format.
//!
//! Every float is written as `{:.16e}` — 17 significant digits, enough to
//! round-trip an f64 exactly — so regression diffs are byte-exact whenever the
//! computed values are. Files open through a [`CsvFile`] which buffers writes
//! and records its own name for the manifest's output list.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::CliError;

/// 17-significant-digit scientific notation; the one float format used in
/// every output file.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvFile {
    name: String,
    w: BufWriter<File>,
}

impl CsvFile {
    pub fn create(dir: &Path, name: &str) -> Result<Self, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| {
            CliError::Failure(format!("cannot create output file {}: {e}", path.display()))
        })?;
        Ok(CsvFile { name: name.to_string(), w: BufWriter::new(file) })
    }

    fn io(&self, e: std::io::Error) -> CliError {
        CliError::Failure(format!("write to {} failed: {e}", self.name))
    }

    /// `# key = value` metadata line; comments precede the header.
    pub fn comment(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        writeln!(self.w, "# {key} = {value}").map_err(|e| self.io(e))
    }

    pub fn header(&mut self, columns: &[&str]) -> Result<(), CliError> {
        writeln!(self.w, "{}", columns.join(",")).map_err(|e| self.io(e))
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        writeln!(self.w, "{}", fields.join(",")).map_err(|e| self.io(e))
    }

    /// Flushes and returns the file name for the manifest's output list.
    pub fn finish(mut self) -> Result<String, CliError> {
        self.w.flush().map_err(|e| CliError::Failure(format!("flush of {} failed: {e}", self.name)))?;
        Ok(self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_round_trips_f64() {
        for v in [0.0, 1.0, -1.0 / 3.0, 24.674011002723395, 1e-300, std::f64::consts::PI] {
            let s = sci(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "format must round-trip {v}: got {s}");
        }
    }

    #[test]
    fn file_layout_is_comments_header_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = CsvFile::create(dir.path(), "x.csv").unwrap();
        f.comment("nu", "1.0").unwrap();
        f.header(&["t", "value"]).unwrap();
        f.row(&[sci(0.5), sci(2.0)]).unwrap();
        let name = f.finish().unwrap();
        assert_eq!(name, "x.csv");
        let text = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# nu = 1.0");
        assert_eq!(lines[1], "t,value");
        assert!(lines[2].starts_with("5.0000000000000000e-1,"));
    }
}
