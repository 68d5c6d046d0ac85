//! Instruction texts for the oracle signatures. The defaults are embedded
//! from `assets/default_prompts.json`; a user-supplied prompts file overrides
//! entries by signature name, falling back to the defaults for the rest.

use std::collections::BTreeMap;
use std::path::Path;

use super::OracleError;

const DEFAULT_PROMPTS: &str = include_str!("../../assets/default_prompts.json");

#[derive(Debug, Clone)]
pub struct Prompts {
    instructions: BTreeMap<String, String>,
}

impl Default for Prompts {
    fn default() -> Self {
        let instructions: BTreeMap<String, String> =
            serde_json::from_str(DEFAULT_PROMPTS).expect("embedded prompts parse");
        Prompts { instructions }
    }
}

impl Prompts {
    pub fn from_file(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Config(format!("cannot read prompts file: {e}")))?;
        let overrides: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| OracleError::Config(format!("prompts file is not a string map: {e}")))?;
        let mut prompts = Prompts::default();
        prompts.instructions.extend(overrides);
        Ok(prompts)
    }

    pub fn instruction(&self, signature_name: &str) -> &str {
        self.instructions
            .get(signature_name)
            .map(String::as_str)
            .unwrap_or("")
    }
}
