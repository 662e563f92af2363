//! Output files. Each one carries the resolved config and the version:
//! JSON inline, CSV as a leading `#` comment, JSON lines as a `{"meta": ...}`
//! first line, binary parameter files through a `.json` sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use amiguard_core::{CoreError, VERSION};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub fn meta(cfg: &ExperimentConfig, kind: &str) -> Value {
    json!({ "kind": kind, "version": VERSION, "config": cfg.echo() })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

pub fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(CoreError::Io { path: path.to_path_buf(), source })
}

/// `{"kind", "version", "config", "result"}`, pretty-printed.
pub fn write_json<T: Serialize>(path: &Path, cfg: &ExperimentConfig, kind: &str, result: &T) -> Result<()> {
    let mut doc = meta(cfg, kind);
    doc["result"] = serde_json::to_value(result)?;
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes a CSV produced by `body` after a `# {meta}` comment line.
pub fn write_csv(path: &Path, cfg: &ExperimentConfig, kind: &str, body: impl FnOnce(&mut Vec<u8>) -> amiguard_core::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    let mut w = create(path)?;
    writeln!(w, "# {}", meta(cfg, kind)).map_err(|e| io_err(path, e))?;
    w.write_all(&buf).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_jsonl(path: &Path, cfg: &ExperimentConfig, kind: &str, body: impl FnOnce(&mut Vec<u8>) -> amiguard_core::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &json!({ "meta": meta(cfg, kind) }))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.write_all(&buf).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a JSON artifact, returning its `kind` and `result`.
pub fn read_json(path: &Path) -> Result<(String, Value)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let kind = doc["kind"].as_str().unwrap_or_default().to_string();
    Ok((kind, doc["result"].take()))
}
