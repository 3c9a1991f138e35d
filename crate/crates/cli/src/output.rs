//! Artifact writers. Every file starts with the run metadata: a `# {json}`
//! line for CSV and maps, a `metadata` field for JSON, the header for
//! spectrum files, comments for PLY and a `.json` sidecar for `.hspc`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hamspec::eigen::write_spectrum;
use hamspec::matching::Correspondence;
use hamspec::mesh::io::{to_ply, PlyEncoding};
use hamspec::{Spectrum, TriMesh};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Cli, GlobalArgs};

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub global: GlobalArgs,
    pub args: Value,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let all = serde_json::to_value(&cli.command)?;
        // Externally tagged enum: {"eig": {...}}.
        let args = all.as_object().and_then(|o| o.values().next().cloned()).unwrap_or(Value::Null);
        Ok(Self { tool: "hamspec", version: env!("CARGO_PKG_VERSION"), command: cli.command.name().into(), global: cli.global.clone(), args })
    }
}

pub struct Output {
    dir: PathBuf,
    meta: Value,
}

impl Output {
    pub fn new(dir: &Path, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), meta: serde_json::to_value(config)? })
    }

    /// Writer for a subdirectory with extra metadata fields (used by `repro`).
    pub fn child(&self, name: &str, extra: Value) -> Result<Self> {
        let dir = self.dir.join(name);
        std::fs::create_dir_all(&dir)?;
        let mut meta = self.meta.clone();
        if let (Some(m), Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        Ok(Self { dir, meta })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        Ok(path)
    }

    fn comment_line(&self) -> String {
        format!("# {}\n", self.meta)
    }

    pub fn csv(&self, name: &str, body: &[u8]) -> Result<PathBuf> {
        let mut bytes = self.comment_line().into_bytes();
        bytes.extend_from_slice(body);
        self.write(name, &bytes)
    }

    /// `{"metadata": ..., "result": ...}`.
    pub fn json(&self, name: &str, result: &impl Serialize) -> Result<PathBuf> {
        let doc = json!({ "metadata": self.meta, "result": result });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn spectrum(&self, name: &str, s: &Spectrum) -> Result<PathBuf> {
        let mut buf = Vec::new();
        write_spectrum(&mut buf, s, self.meta.clone())?;
        self.write(name, &buf)
    }

    pub fn ply(&self, name: &str, mesh: &TriMesh) -> Result<PathBuf> {
        self.write(name, &to_ply(mesh, PlyEncoding::Ascii, &[format!("hamspec {}", self.meta)]))
    }

    pub fn hspc(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.write(name, bytes)?;
        self.json(&format!("{name}.json"), &json!({ "stream": name, "bytes": bytes.len() }))?;
        Ok(path)
    }

    pub fn map(&self, name: &str, corr: &Correspondence) -> Result<PathBuf> {
        let mut bytes = self.comment_line().into_bytes();
        corr.write(&mut bytes)?;
        self.write(name, &bytes)
    }
}

/// Vertex table `vertex,<name0>,<name1>...`.
pub fn columns_csv(names: &[String], cols: &[Vec<f64>]) -> Vec<u8> {
    let mut s = String::from("vertex");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    let rows = cols.first().map_or(0, Vec::len);
    for r in 0..rows {
        s.push_str(&r.to_string());
        for c in cols {
            s.push_str(&format!(",{:?}", c[r]));
        }
        s.push('\n');
    }
    s.into_bytes()
}

/// Writes a line to stdout; a closed pipe (`| head`) is not an error.
pub fn say(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

/// Prints the result to stdout as one JSON document.
pub fn report(result: &impl Serialize) -> Result<()> {
    say(&serde_json::to_string_pretty(result)?)
}
