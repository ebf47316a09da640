use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cellscreen::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Where each artifact of a campaign lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }
    pub fn pack_logs(&self, pack_id: &str) -> PathBuf {
        self.logs().join(pack_id)
    }
    pub fn packs(&self) -> PathBuf {
        self.root.join("packs.json")
    }
    pub fn fleet_manifest(&self) -> PathBuf {
        self.root.join("fleet_manifest.json")
    }
    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }
    pub fn fit_dir(&self) -> PathBuf {
        self.root.join("fit")
    }
    pub fn fit(&self) -> PathBuf {
        self.fit_dir().join("fit.json")
    }
    pub fn screen(&self) -> PathBuf {
        self.root.join("screen")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            line,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

/// Writes `header` then one serialized record per row. The header is
/// written even when there are no rows.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Numeric(format!("serializing {}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| crate::config::json_format(path, e))
}

/// Every `.csv` below `path` (or `path` itself), in sorted order.
pub fn csv_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}
