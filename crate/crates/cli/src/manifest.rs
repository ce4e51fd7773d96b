//! Run manifests: what a command ran with and which files it wrote.
//!
//! Timestamps make the manifest the one non-reproducible output of a run;
//! every other artifact is byte-identical given (config, seed).

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: u64,
    pub out_dir: String,
    /// Hash of the canonicalized config; stable under key reordering.
    pub config_sha256: String,
    pub started_at: String,
    pub finished_at: String,
    /// Every file the command wrote, relative to `out_dir`.
    pub outputs: Vec<String>,
}

/// Serialize a TOML document with all table keys sorted, recursively, so
/// the hash ignores key order in the source file.
fn canonicalize(value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            let mut keys: Vec<&String> = t.keys().collect();
            keys.sort();
            out.push('{');
            for k in keys {
                out.push_str(k);
                out.push('=');
                canonicalize(&t[k], out);
                out.push(';');
            }
            out.push('}');
        }
        toml::Value::Array(a) => {
            out.push('[');
            for v in a {
                canonicalize(v, out);
                out.push(',');
            }
            out.push(']');
        }
        toml::Value::String(s) => out.push_str(&format!("{s:?}")),
        toml::Value::Integer(i) => out.push_str(&i.to_string()),
        toml::Value::Float(f) => out.push_str(&format!("{f:e}")),
        toml::Value::Boolean(b) => out.push_str(&b.to_string()),
        toml::Value::Datetime(d) => out.push_str(&d.to_string()),
    }
}

/// SHA-256 of a canonicalized TOML config string.
pub fn config_hash(config_text: &str) -> Result<String> {
    let value: toml::Value = toml::from_str(config_text)?;
    let mut canon = String::new();
    canonicalize(&value, &mut canon);
    let digest = Sha256::digest(canon.as_bytes());
    Ok(format!("{digest:x}"))
}

pub struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start(
        command: &str,
        config_path: Option<&Path>,
        config_text: &str,
        seed: u64,
        out_dir: &Path,
    ) -> Result<Self> {
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                config_path: config_path.map(|p| p.display().to_string()),
                seed,
                out_dir: out_dir.display().to_string(),
                config_sha256: config_hash(config_text)?,
                started_at: chrono::Utc::now().to_rfc3339(),
                finished_at: String::new(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn record(&mut self, relative_path: &str) {
        self.manifest.outputs.push(relative_path.to_string());
    }

    /// Write the manifest itself into `out_dir/manifest.json`.
    pub fn finish(mut self, out_dir: &Path) -> Result<RunManifest> {
        self.manifest.finished_at = chrono::Utc::now().to_rfc3339();
        self.manifest.outputs.push("manifest.json".to_string());
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(out_dir.join("manifest.json"), json)?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_stable_under_key_reordering() {
        let a = "x = 1\ny = 2\n[s]\np = true\nq = \"v\"\n";
        let b = "y = 2\nx = 1\n[s]\nq = \"v\"\np = true\n";
        assert_eq!(config_hash(a).unwrap(), config_hash(b).unwrap());
        let c = "x = 3\ny = 2\n[s]\np = true\nq = \"v\"\n";
        assert_ne!(config_hash(a).unwrap(), config_hash(c).unwrap());
    }
}
