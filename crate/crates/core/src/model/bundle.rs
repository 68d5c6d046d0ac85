//! A spec bundle is the directory layout the pipelines consume: the OpenAPI
//! document, the state definitions, the signal registry, and optionally the
//! generator's ground-truth mapping used for scoring.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    normalize_label, parse_openapi, parse_signal_registry, parse_states, serialize_openapi,
    serialize_signal_registry, serialize_states, ModelError, PropertyDef, PropertyKind,
    SignalDef, SignalDirection, StateDef, StateShape, BOOLEAN_LABELS,
};

pub const OPENAPI_FILE: &str = "openapi.json";
pub const STATES_FILE: &str = "states.txt";
pub const SIGNALS_FILE: &str = "signals.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// The intended wiring for one property, keyed by property name in the
/// enclosing map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub state: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
}

pub type GroundTruth = BTreeMap<String, GroundTruthEntry>;

#[derive(Debug, Clone)]
pub struct SpecBundle {
    pub properties: Vec<PropertyDef>,
    pub states: Vec<StateDef>,
    pub signals: Vec<SignalDef>,
    pub ground_truth: Option<GroundTruth>,
}

impl SpecBundle {
    pub fn new(
        properties: Vec<PropertyDef>,
        states: Vec<StateDef>,
        signals: Vec<SignalDef>,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Self, ModelError> {
        let bundle = SpecBundle {
            properties,
            states,
            signals,
            ground_truth,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyDef> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn state(&self, name: &str) -> Option<&StateDef> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn signal(&self, name: &str) -> Option<&SignalDef> {
        self.signals.iter().find(|s| s.name == name)
    }

    /// Cross-checks between the three artifacts plus, when ground truth is
    /// present, that every referenced name resolves and each property can
    /// actually be mapped onto its intended state.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = std::collections::BTreeSet::new();
        let mut paths = std::collections::BTreeSet::new();
        for prop in &self.properties {
            prop.validate()?;
            if !names.insert(&prop.name) {
                return Err(ModelError::Validation(format!(
                    "duplicate property name '{}'",
                    prop.name
                )));
            }
            if !paths.insert(&prop.endpoint_path) {
                return Err(ModelError::Validation(format!(
                    "duplicate endpoint path '{}'",
                    prop.endpoint_path
                )));
            }
        }
        let mut state_names = std::collections::BTreeSet::new();
        for state in &self.states {
            if !state_names.insert(&state.name) {
                return Err(ModelError::Validation(format!(
                    "duplicate state name '{}'",
                    state.name
                )));
            }
        }
        let mut signal_names = std::collections::BTreeSet::new();
        for signal in &self.signals {
            if !signal_names.insert(&signal.name) {
                return Err(ModelError::Validation(format!(
                    "duplicate signal name '{}'",
                    signal.name
                )));
            }
        }
        if let Some(gt) = &self.ground_truth {
            for (prop_name, entry) in gt {
                let prop = self.property(prop_name).ok_or_else(|| {
                    ModelError::Validation(format!(
                        "ground truth references unknown property '{prop_name}'"
                    ))
                })?;
                let state = self.state(&entry.state).ok_or_else(|| {
                    ModelError::Validation(format!(
                        "ground truth for '{prop_name}' references unknown state '{}'",
                        entry.state
                    ))
                })?;
                let status = self.signal(&entry.status).ok_or_else(|| {
                    ModelError::Validation(format!(
                        "ground truth for '{prop_name}' references unknown signal '{}'",
                        entry.status
                    ))
                })?;
                if status.direction != SignalDirection::Status {
                    return Err(ModelError::Validation(format!(
                        "ground-truth status signal '{}' for '{prop_name}' has direction request",
                        status.name
                    )));
                }
                if let Some(req_name) = &entry.request {
                    let request = self.signal(req_name).ok_or_else(|| {
                        ModelError::Validation(format!(
                            "ground truth for '{prop_name}' references unknown signal '{req_name}'"
                        ))
                    })?;
                    if request.direction != SignalDirection::Request {
                        return Err(ModelError::Validation(format!(
                            "ground-truth request signal '{}' for '{prop_name}' has direction status",
                            request.name
                        )));
                    }
                }
                check_matchable(prop, state)?;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical serialization of the three pipeline
    /// inputs. Ground truth is scoring metadata and deliberately excluded,
    /// so adding it to a bundle does not invalidate generated suites.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"openapi\0");
        hasher.update(serialize_openapi(&self.properties).as_bytes());
        hasher.update(b"states\0");
        hasher.update(serialize_states(&self.states).as_bytes());
        hasher.update(b"signals\0");
        hasher.update(serialize_signal_registry(&self.signals).as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn load_dir(dir: &Path) -> Result<Self, ModelError> {
        let read = |file: &str| std::fs::read_to_string(dir.join(file));
        let properties = parse_openapi(&read(OPENAPI_FILE)?)?;
        let states = parse_states(&read(STATES_FILE)?)?;
        let signals = parse_signal_registry(&read(SIGNALS_FILE)?)?;
        let gt_path = dir.join(GROUND_TRUTH_FILE);
        let ground_truth = if gt_path.exists() {
            let text = std::fs::read_to_string(&gt_path)?;
            Some(serde_json::from_str(&text).map_err(|e| ModelError::Parse {
                line: e.line(),
                msg: format!("{GROUND_TRUTH_FILE}: {e}"),
            })?)
        } else {
            None
        };
        SpecBundle::new(properties, states, signals, ground_truth)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(OPENAPI_FILE), serialize_openapi(&self.properties))?;
        std::fs::write(dir.join(STATES_FILE), serialize_states(&self.states))?;
        std::fs::write(
            dir.join(SIGNALS_FILE),
            serialize_signal_registry(&self.signals),
        )?;
        if let Some(gt) = &self.ground_truth {
            let mut text = serde_json::to_string_pretty(gt).expect("ground truth serializes");
            text.push('\n');
            std::fs::write(dir.join(GROUND_TRUTH_FILE), text)?;
        }
        Ok(())
    }
}

/// A property fits a state when every label it can take exists on the state
/// (after normalization) for coded states, or when both sides are numeric.
fn check_matchable(prop: &PropertyDef, state: &StateDef) -> Result<(), ModelError> {
    match (&prop.kind, &state.shape) {
        (PropertyKind::Enum { labels }, StateShape::Coded { entries }) => {
            let state_labels: Vec<String> =
                entries.iter().map(|e| normalize_label(&e.label)).collect();
            for label in labels {
                if !state_labels.contains(label) {
                    return Err(ModelError::Validation(format!(
                        "label '{label}' of property '{}' has no counterpart in state '{}'",
                        prop.name, state.name
                    )));
                }
            }
            Ok(())
        }
        (PropertyKind::Boolean, StateShape::Coded { entries }) => {
            let state_labels: Vec<String> =
                entries.iter().map(|e| normalize_label(&e.label)).collect();
            for label in BOOLEAN_LABELS {
                if !state_labels.iter().any(|l| l == label) {
                    return Err(ModelError::Validation(format!(
                        "boolean property '{}' needs label '{label}' on state '{}'",
                        prop.name, state.name
                    )));
                }
            }
            Ok(())
        }
        (PropertyKind::Number { .. }, StateShape::Scalar { .. }) => Ok(()),
        _ => Err(ModelError::Validation(format!(
            "property '{}' and state '{}' have incompatible shapes",
            prop.name, state.name
        ))),
    }
}
