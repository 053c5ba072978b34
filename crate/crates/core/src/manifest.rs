//! Reproducibility manifests.
//!
//! Every CLI run emits a manifest tying the output to the exact command
//! line, input digests, seeds, and configuration. Equal manifests imply
//! byte-identical stdout; nothing time- or host-dependent is recorded.

use crate::config::Config;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command_line: Vec<String>,
    /// Input source name (path or `<stdin>`) to SHA-256 of its bytes.
    pub input_digests: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub configuration: Config,
    pub artifact_version: String,
    /// The process exit code: 0 pass, 1 checked-and-failed, 2 malformed
    /// input, 3 scale refusal.
    pub outcome: i32,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>, configuration: Config) -> Self {
        RunManifest {
            command_line,
            input_digests: BTreeMap::new(),
            seeds: Vec::new(),
            configuration,
            artifact_version: env!("CARGO_PKG_VERSION").to_owned(),
            outcome: 0,
        }
    }

    pub fn record_input(&mut self, name: &str, bytes: &[u8]) {
        self.input_digests.insert(name.to_owned(), digest(bytes));
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_serialization_is_stable() {
        let mut m = RunManifest::new(vec!["prop-t".into(), "certify".into()], Config::default());
        m.record_input("family.json", b"[]");
        m.seeds.push(7);
        let a = serde_json::to_string(&m).unwrap();
        let b = serde_json::to_string(&m).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("commandLine"));
    }
}
