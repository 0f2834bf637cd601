use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Written next to every command's outputs; together with the same build it
/// is enough to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    /// Effective configuration after overrides, paths absolute.
    pub effective_config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputFile>,
    pub seeds: BTreeMap<String, u64>,
    pub versions: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        let versions = BTreeMap::from([
            ("cqns".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("report_format".to_string(), "1".to_string()),
        ]);
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            config_path: None,
            config_sha256: None,
            effective_config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            versions,
        }
    }

    pub fn with_config(mut self, path: &Path, effective: &BTreeMap<String, String>) -> Result<Self> {
        let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
        self.config_sha256 = Some(hash_file(path)?);
        self.config_path = Some(abs.display().to_string());
        self.effective_config = effective.clone();
        Ok(self)
    }

    pub fn with_input(mut self, name: &str, path: &Path) -> Result<Self> {
        let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
        self.inputs.insert(name.to_string(), InputFile { path: abs.display().to_string(), sha256: hash_file(path)? });
        Ok(self)
    }

    pub fn with_seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path.display(), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::domain("MalformedManifest", "cli", e))
    }

    /// Checks that every recorded input still has the recorded hash.
    pub fn check_inputs(&self) -> Result<()> {
        for (name, f) in &self.inputs {
            let now = hash_file(Path::new(&f.path))?;
            if now != f.sha256 {
                return Err(CliError::domain(
                    "InputChanged",
                    "cli",
                    format!("{name} file {} changed since the run", f.path),
                ));
            }
        }
        Ok(())
    }
}
