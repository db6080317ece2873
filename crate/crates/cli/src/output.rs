//! Atomic CSV writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::run::Table;

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn csv_bytes(t: &Table) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Manifest text: run description, status, and output checksums.
pub struct Manifest {
    pub header: Vec<(String, String)>,
    pub config: String,
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn render(&self, status: &str, wall_clock: Option<f64>) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("status = {status}\n"));
        if let Some(t) = wall_clock {
            s.push_str(&format!("wall_clock_s = {t:.3}\n"));
        }
        s.push_str("\n[config]\n");
        s.push_str(&self.config);
        s.push_str("\n[outputs]\n");
        for (name, sum) in &self.outputs {
            s.push_str(&format!("{sum}  {name}\n"));
        }
        s
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join("manifest.txt")
    }
}
