use std::fs;
use std::path::Path;

use serde::Serialize;

/// Resolved configuration of one run. Contains no wall-clock data so that
/// identical runs write identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub inputs: Vec<(&'a str, String)>,
    pub config: C,
    pub outputs: Vec<String>,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, config: C) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: Vec::new(),
            config,
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, role: &'a str, path: &Path) -> Self {
        self.inputs.push((role, path.display().to_string()));
        self
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json)
    }
}
