//! Result files. Every CSV opens with a `# config_digest=<hex>` comment and
//! every JSON document carries a `config_digest` field, so a result can be
//! traced to the exact configuration that produced it.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

pub struct Output {
    dir: PathBuf,
    digest: String,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path, digest: String) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), digest, written: Vec::new() })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn csv<F>(&mut self, name: &str, body: F) -> io::Result<()>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# config_digest={}", self.digest)?;
        body(&mut w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn json(&mut self, name: &str, mut value: Value) -> io::Result<()> {
        if let Value::Object(map) = &mut value {
            map.insert("config_digest".into(), Value::String(self.digest.clone()));
        }
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(&value).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.written.push(path);
        Ok(())
    }
}
