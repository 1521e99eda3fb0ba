//! File formats: OBJ meshes, PNG images, dataset manifests, checkpoints and
//! training logs.

mod checkpoint;
mod manifest;
mod obj;
mod png;

use std::io::Write;
use std::path::Path;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};
pub use manifest::{load_dataset, load_manifest, save_dataset, CameraRecord, DatasetManifest, RigRecord};
pub use obj::{format_obj, load_mesh, parse_obj, write_mesh};
pub use png::{decode_png, encode_png, read_png, write_alpha_map, write_png, BitDepth};

use crate::error::{Error, Result};
use crate::train::LogRow;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })
}

fn unwritable(path: &Path, source: std::io::Error) -> Error {
    Error::Unwritable {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| unwritable(path, e))?;
    tmp.write_all(bytes).map_err(|e| unwritable(path, e))?;
    tmp.as_file().sync_all().map_err(|e| unwritable(path, e))?;
    tmp.persist(path).map_err(|e| unwritable(path, e.error))?;
    Ok(())
}

pub const LOG_HEADER: [&str; 12] = [
    "iteration", "frame", "total", "color", "l1", "dssim", "structure", "alpha", "invisible", "scale", "gaussians", "events",
];

/// CSV training log. Appends to an existing file, writing the header only
/// for a new one.
pub struct LogWriter {
    inner: csv::Writer<std::fs::File>,
}

impl LogWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| unwritable(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        if fresh {
            inner.write_record(LOG_HEADER).map_err(|e| csv_err(path, e))?;
        }
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &LogRow) -> Result<()> {
        let l = &row.loss;
        let events: Vec<String> = row.events.iter().map(|e| e.to_string()).collect();
        let record = [
            row.iteration.to_string(),
            row.frame.to_string(),
            l.total.to_string(),
            l.color.to_string(),
            l.l1.to_string(),
            l.dssim.to_string(),
            l.st.to_string(),
            l.alpha.to_string(),
            l.invis.to_string(),
            l.scale.to_string(),
            row.count.to_string(),
            events.join(";"),
        ];
        self.inner.write_record(&record).map_err(|e| csv_err(Path::new("training log"), e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| unwritable(Path::new("training log"), e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    unwritable(path, std::io::Error::other(e.to_string()))
}
