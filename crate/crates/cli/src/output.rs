use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};
use tempfile::NamedTempFile;

/// Output files written to temporaries and renamed into place together by
/// [`Staged::commit`]. Dropping without committing removes the temporaries.
pub struct Staged {
    dir: PathBuf,
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let mut tmp = NamedTempFile::new_in(&self.dir).with_context(|| format!("creating temporary in {}", self.dir.display()))?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            body(&mut w)?;
            w.flush()?;
        }
        self.files.push((tmp, self.dir.join(name)));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (tmp, path) in self.files {
            tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Machine and invocation metadata recorded in every JSON sidecar.
pub fn metadata() -> Value {
    json!({
        "generated_at": chrono::Utc::now().to_rfc3339(),
        "cpu_model": klucb::bench::cpu_model(),
        "threads": std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        "version": env!("CARGO_PKG_VERSION"),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
    })
}

/// Policy name usable in a file name.
pub fn file_tag(name: &str) -> String {
    name.replace('+', "_")
}
