use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Writes the fixed-name output files of one command under `cfg.out`.
/// Every file carries the effective configuration and the command
/// arguments: JSON files under a `run` key, CSV files as one leading
/// `# ` comment line.
pub struct Writer {
    dir: PathBuf,
    run: Value,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(cfg: &RunConfig, command: Value) -> anyhow::Result<Self> {
        let dir = cfg.out.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            run: json!({ "config": cfg, "command": command }),
            written: Vec::new(),
        })
    }

    pub fn run(&self) -> &Value {
        &self.run
    }

    pub fn csv(&mut self, name: &str, body: &str) -> anyhow::Result<()> {
        let mut text = format!("# {}\n", serde_json::to_string(&json!({ "run": self.run }))?);
        text.push_str(body);
        self.put(name, text)
    }

    /// `value` must be a JSON object; the `run` key is added to it.
    pub fn json(&mut self, name: &str, mut value: Value) -> anyhow::Result<()> {
        value
            .as_object_mut()
            .context("output documents are JSON objects")?
            .insert("run".into(), self.run.clone());
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.put(name, text)
    }

    fn put(&mut self, name: &str, text: String) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Lists the written files on stderr.
pub fn announce(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}
