//! Domain types and parsers for the three input artifacts: OpenAPI-subset
//! documents, state-definition source text, and the signal registry.
//!
//! Parsing is pure; all parsed values are immutable after construction and
//! safe to share across threads.

mod bundle;
mod openapi;
mod signals;
mod state_dsl;

pub use bundle::{GroundTruth, GroundTruthEntry, SpecBundle};
pub use bundle::{GROUND_TRUTH_FILE, OPENAPI_FILE, SIGNALS_FILE, STATES_FILE};
pub use openapi::{parse_openapi, serialize_openapi};
pub use signals::{parse_signal_registry, serialize_signal_registry};
pub use state_dsl::{parse_states, serialize_states};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    pub fn validation(msg: impl Into<String>) -> Self {
        ModelError::Validation(msg.into())
    }
}

/// How API clients may access a property, derived from its declared methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    ReadOnly,
    ReadWrite,
}

/// The value shape of a property.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    /// A closed set of uppercase labels.
    Enum { labels: Vec<String> },
    /// A physical quantity with unit and declared range.
    Number { unit: String, min: f64, max: f64 },
    Boolean,
}

/// A named field of a REST endpoint's schema, the unit of user intent.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyDef {
    pub name: String,
    pub kind: PropertyKind,
    pub access: Access,
    pub description: String,
    pub endpoint_path: String,
}

impl PropertyDef {
    /// Labels the property can take: declared labels for enums, the implicit
    /// OFF/ON pair for booleans, none for numbers.
    pub fn labels(&self) -> Vec<String> {
        match &self.kind {
            PropertyKind::Enum { labels } => labels.clone(),
            PropertyKind::Boolean => BOOLEAN_LABELS.iter().map(|s| s.to_string()).collect(),
            PropertyKind::Number { .. } => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !is_camel_ident(&self.name) {
            return Err(ModelError::Validation(format!(
                "property name '{}' is not a camelCase identifier",
                self.name
            )));
        }
        if !self.endpoint_path.starts_with('/') {
            return Err(ModelError::Validation(format!(
                "endpoint path '{}' for property '{}' must begin with '/'",
                self.endpoint_path, self.name
            )));
        }
        if let PropertyKind::Enum { labels } = &self.kind {
            if labels.is_empty() {
                return Err(ModelError::Validation(format!(
                    "enum property '{}' declares no values",
                    self.name
                )));
            }
            let mut seen = std::collections::BTreeSet::new();
            for label in labels {
                if label.is_empty() {
                    return Err(ModelError::Validation(format!(
                        "enum property '{}' has an empty label",
                        self.name
                    )));
                }
                if *label != normalize_label(label) {
                    return Err(ModelError::Validation(format!(
                        "enum label '{label}' of property '{}' is not normalized",
                        self.name
                    )));
                }
                if !seen.insert(label.clone()) {
                    return Err(ModelError::Validation(format!(
                        "duplicate enum label '{label}' in property '{}'",
                        self.name
                    )));
                }
            }
        }
        if let PropertyKind::Number { min, max, .. } = self.kind {
            if !(min.is_finite() && max.is_finite()) {
                return Err(ModelError::Validation(format!(
                    "property '{}' has a non-finite range",
                    self.name
                )));
            }
            if min > max {
                return Err(ModelError::Validation(format!(
                    "property '{}' declares min {min} > max {max}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Implicit label set used when a boolean property is mapped onto a coded
/// state: OFF carries JSON `false`, ON carries JSON `true`.
pub const BOOLEAN_LABELS: [&str; 2] = ["OFF", "ON"];

/// One label/code pair of a coded state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedEntry {
    pub label: String,
    pub code: u64,
}

/// The value shape of a vehicle state.
#[derive(Debug, Clone, PartialEq)]
pub enum StateShape {
    Coded { entries: Vec<CodedEntry> },
    Scalar { unit: String, scale: f64, offset: f64 },
}

/// An internal variable of a vehicle control application that a property
/// semantically mirrors.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDef {
    pub name: String,
    pub shape: StateShape,
    /// The verbatim declaration this state was parsed from.
    pub source_text: String,
}

/// Whether a CAN signal reports state or commands state changes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum SignalDirection {
    Status,
    Request,
}

impl SignalDirection {
    pub fn keyword(self) -> &'static str {
        match self {
            SignalDirection::Status => "status",
            SignalDirection::Request => "request",
        }
    }
}

/// How raw integer codes on the wire relate to state values.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalEncoding {
    RawCode,
    Linear { scale: f64, offset: f64 },
}

/// A named value carried on the CAN bus, the search-space element.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDef {
    pub name: String,
    pub direction: SignalDirection,
    pub width_bits: u8,
    pub encoding: SignalEncoding,
    pub description: String,
    /// Stable unique id; equals `name` for registry-parsed signals.
    pub doc_id: String,
}

impl SignalDef {
    /// Largest raw value representable in this signal's width.
    pub fn max_raw(&self) -> u64 {
        max_raw_for_width(self.width_bits)
    }
}

pub fn max_raw_for_width(width_bits: u8) -> u64 {
    if width_bits >= 64 {
        u64::MAX
    } else {
        (1u64 << width_bits) - 1
    }
}

/// Uppercase a label and strip non-alphanumeric characters. This is the one
/// normalization rule used everywhere labels are compared.
pub fn normalize_label(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_uppercase)
        .collect()
}

pub(crate) fn is_camel_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_alphanumeric()),
        _ => false,
    }
}

pub(crate) fn is_pascal_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => chars.all(|c| c.is_ascii_alphanumeric()),
        _ => false,
    }
}
