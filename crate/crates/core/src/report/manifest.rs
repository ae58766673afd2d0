use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Inputs and output digests of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub registry_hash: String,
    #[serde(default)]
    pub registry_version: Option<String>,
    pub sources: Vec<String>,
    pub waves: Vec<String>,
    pub config: serde_json::Value,
    /// Digest of every field above.
    pub run_hash: String,
    /// File name to sha256 of its bytes.
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        registry_hash: &str,
        registry_version: Option<&str>,
        sources: Vec<String>,
        waves: Vec<String>,
        config: serde_json::Value,
    ) -> RunManifest {
        let mut m = RunManifest {
            tool: "uniweb".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            registry_hash: registry_hash.into(),
            registry_version: registry_version.map(str::to_string),
            sources,
            waves,
            config,
            run_hash: String::new(),
            files: BTreeMap::new(),
        };
        m.run_hash = m.input_hash();
        m
    }

    fn input_hash(&self) -> String {
        let inputs = serde_json::json!({
            "tool": self.tool,
            "tool_version": self.tool_version,
            "command": self.command,
            "registry_hash": self.registry_hash,
            "registry_version": self.registry_version,
            "sources": self.sources,
            "waves": self.waves,
            "config": self.config,
        });
        sha256_hex(inputs.to_string().as_bytes())
    }

    /// Comment line prefixed to every export.
    pub fn header_line(&self) -> String {
        format!("# uniweb {} run={}", self.command, self.run_hash)
    }

    pub fn record_file(&mut self, name: &str, bytes: &[u8]) {
        self.files.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join("manifest.json"), text)
    }

    pub fn read(path: &Path) -> std::io::Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_hash_tracks_inputs() {
        let a = RunManifest::new(
            "report",
            "h",
            None,
            vec!["s".into()],
            vec!["2010-03".into()],
            serde_json::json!({"k": 1}),
        );
        let b = RunManifest::new(
            "report",
            "h",
            None,
            vec!["s".into()],
            vec!["2010-03".into()],
            serde_json::json!({"k": 1}),
        );
        let c = RunManifest::new(
            "report",
            "h",
            None,
            vec!["s".into()],
            vec!["2010-03".into()],
            serde_json::json!({"k": 2}),
        );
        assert_eq!(a.run_hash, b.run_hash);
        assert_ne!(a.run_hash, c.run_hash);
        assert!(a.header_line().ends_with(&a.run_hash));
    }
}
