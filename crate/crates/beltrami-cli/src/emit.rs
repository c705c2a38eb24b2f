//! Deterministic file emission: atomic writes, JSON, and CSV with
//! round-trip-exact doubles.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::report::{OutputRecord, RunReport};

/// 17-significant-digit scientific form: parses back to the identical double
/// and is independent of any locale.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes bytes atomically: a dot-prefixed temp file in the target directory,
/// then a rename over the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
    }
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("output path has no file name")?;
    let tmp = match dir {
        Some(dir) => dir.join(format!(".{file_name}.tmp")),
        None => PathBuf::from(format!(".{file_name}.tmp")),
    };
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

/// Serializes `value` as pretty JSON, writes it atomically, and records the
/// artifact in the report's output manifest.
pub fn write_json<T: Serialize>(
    report: &mut RunReport,
    path: &Path,
    name: &str,
    value: &T,
) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    report.outputs.push(OutputRecord {
        name: name.to_string(),
        file: path.display().to_string(),
        bytes: text.len() as u64,
    });
    Ok(())
}

/// A CSV table in memory; all rows share the header's width.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    fn to_bytes(&self) -> anyhow::Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        Ok(writer.into_inner().context("flushing CSV")?)
    }

    /// Writes the table atomically and records it in the output manifest.
    pub fn write(
        &self,
        report: &mut RunReport,
        path: &Path,
        name: &str,
    ) -> anyhow::Result<()> {
        let bytes = self.to_bytes()?;
        write_atomic(path, &bytes)?;
        report.outputs.push(OutputRecord {
            name: name.to_string(),
            file: path.display().to_string(),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}
