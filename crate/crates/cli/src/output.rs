//! CSV artifacts. Every file starts with a header row.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "MKDV_OUTPUT_DIR";

pub fn resolve_output_dir(configured: &Path) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| configured.to_path_buf())
}

pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes numeric rows under `header`.
    pub fn write_table<I>(
        &self,
        name: &str,
        header: &[String],
        rows: I,
    ) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        self.write_records(
            name,
            header,
            rows.into_iter()
                .map(|r| r.iter().map(|v| number(*v)).collect()),
        )
    }

    pub fn write_records<I>(
        &self,
        name: &str,
        header: &[String],
        rows: I,
    ) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut buf = Vec::new();
        write_csv(&mut buf, header, rows).map_err(|e| CliError::io(&path, e))?;
        fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn write_csv<W, I>(out: W, header: &[String], rows: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}

/// Shortest round-trip representation, in exponent form outside `[1e-4, 1e15)`.
pub fn number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn header<const N: usize>(fixed: [&str; N]) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).collect()
}

/// `snapshot_0012.csv`-style names.
pub fn numbered(stem: &str, index: usize) -> String {
    format!("{stem}_{index:04}.csv")
}
