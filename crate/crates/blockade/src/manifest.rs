//! Run manifests: a flat `key = value` record written next to every
//! command's outputs, stating what ran, with which parameters, and how to
//! reproduce it. Parameters are recorded in the MHz config domain, so
//! replaying the `rerun` line reproduces the run bit for bit (the manifest
//! itself carries a wall-clock duration and is not byte-stable).

use crate::config::Config;
use crate::error::Result;
use std::fmt::Display;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub status: String,
    pub seed: u64,
    pub duration_s: f64,
    entries: Vec<(String, String)>,
}

fn shell_quote(arg: &str) -> String {
    if !arg.is_empty()
        && arg
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_./=,:".contains(c))
    {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

impl RunManifest {
    #[must_use]
    pub fn new(command: &str, argv: &[String], seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: "ok".to_string(),
            seed,
            duration_s: 0.0,
            entries: Vec::new(),
        }
    }

    pub fn fail(&mut self, err: impl Display) {
        self.status = format!("error: {err}");
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Record the full parameter set under `param.*` keys.
    pub fn push_config(&mut self, cfg: &Config) {
        for (key, value) in cfg.entries() {
            self.push(&format!("param.{key}"), value);
        }
    }

    #[must_use]
    pub fn render(&self) -> String {
        let mut s = String::from("# run manifest\n");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "status = {}", self.status);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "duration_s = {:.3}", self.duration_s);
        let rerun: Vec<String> = self.argv.iter().map(|a| shell_quote(a)).collect();
        let _ = writeln!(s, "rerun = {}", rerun.join(" "));
        for (key, value) in &self.entries {
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}
