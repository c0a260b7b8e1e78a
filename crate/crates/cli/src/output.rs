//! Atomic artifact writing and run manifests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lingsim::digest::{digest_reader, DigestWriter};
use lingsim::Digest;
use serde::Serialize;
use serde_json::Value;

/// Passes writes through while digesting them.
struct Tee<W: Write> {
    inner: W,
    digest: DigestWriter,
}

impl<W: Write> Write for Tee<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.digest.write_all(&buf[..n])?;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Writes `path` through a temporary file in the same directory and renames
/// it into place once `fill` succeeds. Returns the digest of the bytes written.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<Digest>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    let mut tee = Tee {
        inner: BufWriter::new(tmp.as_file()),
        digest: DigestWriter::new(),
    };
    fill(&mut tee)?;
    tee.flush()?;
    let digest = tee.digest.digest();
    drop(tee);
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot move output into {}", path.display()))?;
    Ok(digest)
}

pub fn digest_file(path: &Path) -> Result<Digest> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(digest_reader(BufReader::new(f))?)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub inputs: BTreeMap<String, Digest>,
    pub outputs: BTreeMap<String, Digest>,
    pub seeds: BTreeMap<String, u64>,
    pub params: BTreeMap<String, Value>,
    pub wall_time_ms: u64,
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            tool: "lingsim",
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            params: BTreeMap::new(),
            wall_time_ms: 0,
        }
    }

    /// Digests an input file and records it.
    pub fn input(&mut self, path: &Path) -> Result<Digest> {
        let d = digest_file(path)?;
        self.inputs.insert(path.display().to_string(), d);
        Ok(d)
    }

    pub fn output(&mut self, path: &Path, digest: Digest) {
        self.outputs.insert(path.display().to_string(), digest);
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.params.insert(key.to_string(), value.into());
    }

    pub fn seed(&mut self, key: &str, seed: u64) {
        self.seeds.insert(key.to_string(), seed);
    }

    /// Writes this manifest beside every recorded output.
    pub fn write_siblings(&self) -> Result<()> {
        let body = serde_json::to_vec_pretty(self)?;
        for out in self.outputs.keys() {
            write_atomic(&manifest_path(Path::new(out)), |w| {
                w.write_all(&body)?;
                w.write_all(b"\n")?;
                Ok(())
            })?;
        }
        Ok(())
    }
}

/// Writes a CSV file atomically and records it in the manifest.
pub fn write_csv<F>(path: &Path, manifest: &mut RunManifest, fill: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut dyn Write>) -> Result<()>,
{
    let digest = write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        fill(&mut csv)?;
        csv.flush()?;
        Ok(())
    })?;
    manifest.output(path, digest);
    Ok(())
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
