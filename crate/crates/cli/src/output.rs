//! CSV/JSON writers and the run manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chaosjump::noise::SeedSpec;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const STUDY_HEADER: &str = "n,replications,path_err_sq,path_err_se,w2_err_sq,w2_err_se";
pub const TRAJECTORY_HEADER: &str = "replication,particle,time,coord_index,value,is_jump";
pub const REGIME_HEADER: &str = "replication,time,regime_state";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Buffered CSV body kept in memory so its digest is known when it is written.
pub struct Csv {
    buf: Vec<u8>,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut buf = Vec::with_capacity(1 << 16);
        buf.extend_from_slice(header.as_bytes());
        buf.push(b'\n');
        Csv { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.extend_from_slice(fields.join(",").as_bytes());
        self.buf.push(b'\n');
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seeds: SeedSpec,
    pub threads: Option<usize>,
    pub exit_code: i32,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileDigest>,
}

/// Collects output files, writes them and records their digests.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let mut f = fs::File::create(self.dir.join(name))?;
        f.write_all(bytes)?;
        f.flush()?;
        self.files.push(FileDigest { name: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn files(&self) -> &[FileDigest] {
        &self.files
    }

    /// Written last; not listed in itself.
    pub fn write_manifest(&self, manifest: &RunManifest) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(manifest).map_err(io::Error::other)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)
    }
}
