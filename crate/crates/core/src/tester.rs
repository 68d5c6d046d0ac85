//! Regression-test pipeline: map each REST property to the vehicle state
//! that backs it, fuzz (value, code) test objects from the mapping, and emit
//! an executable suite. Mapping and fuzzing go through oracle signatures, so
//! the same pipeline runs offline on rules or online against a model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{normalize_label, Access, PropertyDef, PropertyKind, SpecBundle, StateDef, StateShape};
use crate::oracle::{
    fuzzer_signature, invoke_with, mapper_signature, OracleBackend, OracleError, Prompts,
    TranscriptSink,
};
use crate::retrieval::tokenize;

/// Candidate states offered to the mapper per property.
pub const SHORTLIST_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum TesterError {
    #[error("no candidate state shares a token with property '{property}'")]
    MappingNotFound { property: String },
    #[error("mapping for property '{property}' rejected: {reason}")]
    MappingInvalid { property: String, reason: String },
    #[error("no test objects for property '{property}': {reason}")]
    NoTestObjects { property: String, reason: String },
    #[error("test pairs for property '{property}' rejected: {reason}")]
    InconsistentPairs { property: String, reason: String },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("suite document rejected: {0}")]
    Format(String),
}

/// How property values translate to state codes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValueBinding {
    /// Enum and boolean properties: label to raw code, injective.
    Table { value_map: BTreeMap<String, u64> },
    /// Number properties: physical = raw * scale + offset, with the
    /// property's declared physical range carried along for fuzzing.
    Linear {
        scale: f64,
        offset: f64,
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyStateMapping {
    pub property_name: String,
    pub state_name: String,
    pub binding: ValueBinding,
    pub confidence_note: String,
}

/// A value as it crosses the REST surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestValue {
    Bool(bool),
    Number(f64),
    Label(String),
}

impl std::fmt::Display for TestValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestValue::Bool(b) => write!(f, "{b}"),
            TestValue::Number(n) => write!(f, "{n}"),
            TestValue::Label(s) => write!(f, "{s}"),
        }
    }
}

/// One fuzzed test object: the value a client would send or expect, and the
/// raw state code it corresponds to.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    pub value: TestValue,
    pub code: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "PUT")]
    Put,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Get => write!(f, "GET"),
            Method::Put => write!(f, "PUT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedState {
    pub state_name: String,
    pub expected_code: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetState {
    pub state_name: String,
    pub code: u64,
}

/// PUT cases carry input_value + expected_state; GET cases carry
/// preset_state + expected_value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub endpoint_path: String,
    pub method: Method,
    pub property_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_value: Option<TestValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_state: Option<ExpectedState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset_state: Option<PresetState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_value: Option<TestValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub suite_id: String,
    /// Fingerprint of the bundle the suite was generated from; the runner
    /// refuses mismatched inputs unless forced.
    pub fingerprint: String,
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    pub fn validate(&self) -> Result<(), TesterError> {
        let mut ids = BTreeSet::new();
        for case in &self.cases {
            if !ids.insert(&case.id) {
                return Err(TesterError::Format(format!(
                    "duplicate case id '{}'",
                    case.id
                )));
            }
            let (want_put, want_get) = match case.method {
                Method::Put => (true, false),
                Method::Get => (false, true),
            };
            let put_shaped = case.input_value.is_some() && case.expected_state.is_some();
            let get_shaped = case.preset_state.is_some() && case.expected_value.is_some();
            if put_shaped != want_put || get_shaped != want_get {
                return Err(TesterError::Format(format!(
                    "case '{}' carries the wrong fields for {}",
                    case.id, case.method
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("suite serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, TesterError> {
        let suite: TestSuite =
            serde_json::from_str(text).map_err(|e| TesterError::Format(e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyFailure {
    pub property_name: String,
    pub reason: String,
}

/// emit_suite's aggregate: the suite for the properties that succeeded plus
/// the per-property failures. Partial success is explicit, never silent.
#[derive(Debug)]
pub struct SuiteBuild {
    pub suite: TestSuite,
    pub failures: Vec<PropertyFailure>,
}

/// Top states by token overlap between the property name and the state
/// name; zero-overlap states are never candidates. Ties keep declaration
/// order, which the mapper relies on as its own tie-break.
pub fn shortlist_states<'a>(property: &PropertyDef, states: &'a [StateDef]) -> Vec<&'a StateDef> {
    let property_tokens: BTreeSet<String> = tokenize(&property.name).into_iter().collect();
    let mut scored: Vec<(usize, usize)> = Vec::new();
    for (idx, state) in states.iter().enumerate() {
        let state_tokens: BTreeSet<String> = tokenize(&state.name).into_iter().collect();
        let overlap = property_tokens.intersection(&state_tokens).count();
        if overlap > 0 {
            scored.push((overlap, idx));
        }
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(SHORTLIST_LEN)
        .map(|(_, idx)| &states[idx])
        .collect()
}

fn property_json(property: &PropertyDef) -> Value {
    let (kind, unit) = match &property.kind {
        PropertyKind::Enum { .. } => ("enum", String::new()),
        PropertyKind::Number { unit, .. } => ("number", unit.clone()),
        PropertyKind::Boolean => ("boolean", String::new()),
    };
    json!({
        "name": property.name,
        "kind": kind,
        "labels": property.labels(),
        "unit": unit,
        "description": property.description,
    })
}

fn candidate_json(state: &StateDef) -> Value {
    match &state.shape {
        StateShape::Coded { entries } => json!({
            "name": state.name,
            "shape": "coded",
            "labels": entries.iter().map(|e| json!([e.label, e.code])).collect::<Vec<_>>(),
            "unit": "",
            "scale": 1.0,
            "offset": 0.0,
            "source_text": state.source_text,
        }),
        StateShape::Scalar {
            unit,
            scale,
            offset,
        } => json!({
            "name": state.name,
            "shape": "scalar",
            "labels": [],
            "unit": unit,
            "scale": scale,
            "offset": offset,
            "source_text": state.source_text,
        }),
    }
}

/// Ask the mapper oracle to choose the governing state and translation for
/// one property, then verify the answer against the property and candidate
/// definitions before trusting it.
pub fn map_property_to_state(
    property: &PropertyDef,
    candidates: &[&StateDef],
    backend: &OracleBackend,
    prompts: &Prompts,
) -> Result<PropertyStateMapping, TesterError> {
    map_property_to_state_with(property, candidates, backend, prompts, &mut |_| {})
}

/// `map_property_to_state`, forwarding the oracle transcript to `sink`.
pub fn map_property_to_state_with(
    property: &PropertyDef,
    candidates: &[&StateDef],
    backend: &OracleBackend,
    prompts: &Prompts,
    sink: TranscriptSink,
) -> Result<PropertyStateMapping, TesterError> {
    if candidates.is_empty() {
        return Err(TesterError::MappingNotFound {
            property: property.name.clone(),
        });
    }
    let input = json!({
        "property": property_json(property),
        "candidates": candidates.iter().map(|s| candidate_json(s)).collect::<Vec<_>>(),
    });
    let signature = mapper_signature(prompts);
    let output = invoke_with(&signature, &input, backend, sink)?;
    mapping_from_output(property, candidates, &output)
}

fn mapping_from_output(
    property: &PropertyDef,
    candidates: &[&StateDef],
    output: &Value,
) -> Result<PropertyStateMapping, TesterError> {
    let reject = |reason: String| TesterError::MappingInvalid {
        property: property.name.clone(),
        reason,
    };
    let state_name = output["state_name"].as_str().unwrap_or("");
    let state = candidates
        .iter()
        .find(|s| s.name == state_name)
        .ok_or_else(|| reject(format!("state '{state_name}' is not among the candidates")))?;

    if let PropertyKind::Number { min, max, .. } = &property.kind {
        if !matches!(state.shape, StateShape::Scalar { .. }) {
            return Err(reject(format!(
                "number property mapped to coded state '{state_name}'"
            )));
        }
        let scale = output["scale"].as_f64().unwrap_or(0.0);
        let offset = output["offset"].as_f64().unwrap_or(0.0);
        if scale == 0.0 || !scale.is_finite() || !offset.is_finite() {
            return Err(reject("linear scale must be finite and non-zero".into()));
        }
        return Ok(PropertyStateMapping {
            property_name: property.name.clone(),
            state_name: state.name.clone(),
            binding: ValueBinding::Linear {
                scale,
                offset,
                min: *min,
                max: *max,
            },
            confidence_note: format!("linear transform via {state_name}"),
        });
    }

    let StateShape::Coded { entries } = &state.shape else {
        return Err(reject(format!(
            "labeled property mapped to scalar state '{state_name}'"
        )));
    };
    let labels = property.labels();
    let value_map_json = output["value_map"]
        .as_object()
        .ok_or_else(|| reject("value_map is not an object".into()))?;
    let mut value_map = BTreeMap::new();
    for (label, code) in value_map_json {
        let code = code.as_u64().ok_or_else(|| {
            reject(format!(
                "code for label '{label}' is not a non-negative integer"
            ))
        })?;
        if !labels.iter().any(|l| l == label) {
            return Err(reject(format!("'{label}' is not a property label")));
        }
        if !entries.iter().any(|e| e.code == code) {
            return Err(reject(format!(
                "code {code} is not declared by state '{state_name}'"
            )));
        }
        value_map.insert(label.clone(), code);
    }
    let mut seen_codes = BTreeSet::new();
    for code in value_map.values() {
        if !seen_codes.insert(code) {
            return Err(reject(format!(
                "value_map is not injective: code {code} repeats"
            )));
        }
    }
    for label in &labels {
        let matchable = entries
            .iter()
            .any(|e| normalize_label(&e.label) == normalize_label(label));
        if matchable && !value_map.contains_key(label) {
            return Err(reject(format!(
                "label '{label}' matches a state label but is unmapped"
            )));
        }
    }
    let unmatched: Vec<&String> = labels.iter().filter(|l| !value_map.contains_key(*l)).collect();
    let confidence_note = if unmatched.is_empty() {
        "all labels matched".to_string()
    } else {
        let listed: Vec<&str> = unmatched.iter().map(|s| s.as_str()).collect();
        format!("unmatched labels: {}", listed.join(", "))
    };
    Ok(PropertyStateMapping {
        property_name: property.name.clone(),
        state_name: state.name.clone(),
        binding: ValueBinding::Table { value_map },
        confidence_note,
    })
}

/// Ask the fuzzer oracle for up to n_cases (value, code) pairs consistent
/// with the mapping, verifying every pair before trusting it.
pub fn generate_test_objects(
    mapping: &PropertyStateMapping,
    n_cases: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
) -> Result<Vec<TestPair>, TesterError> {
    generate_test_objects_with(mapping, n_cases, backend, prompts, &mut |_| {})
}

/// `generate_test_objects`, forwarding the oracle transcript to `sink`.
pub fn generate_test_objects_with(
    mapping: &PropertyStateMapping,
    n_cases: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
    sink: TranscriptSink,
) -> Result<Vec<TestPair>, TesterError> {
    let property = &mapping.property_name;
    let inconsistent = |reason: String| TesterError::InconsistentPairs {
        property: property.clone(),
        reason,
    };
    let input = match &mapping.binding {
        ValueBinding::Table { value_map } => {
            if value_map.is_empty() {
                return Err(TesterError::NoTestObjects {
                    property: property.clone(),
                    reason: "the value map is empty".into(),
                });
            }
            json!({
                "property_name": property, "kind": "table",
                "value_map": value_map, "scale": 1.0, "offset": 0.0,
                "min": 0.0, "max": 0.0, "n_cases": n_cases as u64,
            })
        }
        ValueBinding::Linear {
            scale,
            offset,
            min,
            max,
        } => json!({
            "property_name": property, "kind": "linear",
            "value_map": {}, "scale": scale, "offset": offset,
            "min": min, "max": max, "n_cases": n_cases as u64,
        }),
    };
    let signature = fuzzer_signature(prompts);
    let output = invoke_with(&signature, &input, backend, sink)?;

    let mut pairs = Vec::new();
    let mut seen_codes = BTreeSet::new();
    for pair in output["pairs"].as_array().expect("schema-checked array") {
        let code = pair["code"]
            .as_u64()
            .ok_or_else(|| inconsistent("a pair's code is negative".into()))?;
        let value = match &mapping.binding {
            ValueBinding::Table { value_map } => {
                let label = pair["label"].as_str().expect("schema-checked string");
                match value_map.get(label) {
                    Some(expected) if *expected == code => {}
                    Some(expected) => {
                        return Err(inconsistent(format!(
                            "pair ({label}, {code}) disagrees with the mapping ({label} -> {expected})"
                        )))
                    }
                    None => {
                        return Err(inconsistent(format!(
                            "label '{label}' is not in the value map"
                        )))
                    }
                }
                TestValue::Label(label.to_string())
            }
            ValueBinding::Linear {
                scale,
                offset,
                min,
                max,
            } => {
                let value = pair["value"].as_f64().expect("schema-checked number");
                if value < *min || value > *max {
                    return Err(inconsistent(format!(
                        "value {value} is outside [{min}, {max}]"
                    )));
                }
                let decoded = code as f64 * scale + offset;
                if (value - decoded).abs() > scale.abs() / 2.0 {
                    return Err(inconsistent(format!(
                        "value {value} does not decode from code {code}"
                    )));
                }
                TestValue::Number(value)
            }
        };
        if !seen_codes.insert(code) {
            return Err(inconsistent(format!("code {code} appears twice")));
        }
        pairs.push(TestPair { value, code });
    }
    pairs.truncate(n_cases);
    if pairs.is_empty() {
        return Err(TesterError::NoTestObjects {
            property: property.clone(),
            reason: "the fuzzer produced no pairs".into(),
        });
    }
    Ok(pairs)
}

/// Booleans travel the REST surface as true/false, not as their internal
/// OFF/ON labels.
fn surface_value(kind: &PropertyKind, value: &TestValue) -> TestValue {
    match (kind, value) {
        (PropertyKind::Boolean, TestValue::Label(label)) => TestValue::Bool(label == "ON"),
        _ => value.clone(),
    }
}

fn property_cases(
    property: &PropertyDef,
    bundle: &SpecBundle,
    pairs_per_property: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
    sink: TranscriptSink,
) -> Result<Vec<TestCase>, TesterError> {
    let shortlist = shortlist_states(property, &bundle.states);
    let mapping = map_property_to_state_with(property, &shortlist, backend, prompts, &mut *sink)?;
    let pairs =
        generate_test_objects_with(&mapping, pairs_per_property, backend, prompts, &mut *sink)?;
    let mut cases = Vec::new();
    if property.access == Access::ReadWrite {
        for (i, pair) in pairs.iter().enumerate() {
            cases.push(TestCase {
                id: format!("{}-put-{i}", property.name),
                endpoint_path: property.endpoint_path.clone(),
                method: Method::Put,
                property_name: property.name.clone(),
                input_value: Some(surface_value(&property.kind, &pair.value)),
                expected_state: Some(ExpectedState {
                    state_name: mapping.state_name.clone(),
                    expected_code: pair.code,
                }),
                preset_state: None,
                expected_value: None,
            });
        }
    }
    for (i, pair) in pairs.iter().enumerate() {
        cases.push(TestCase {
            id: format!("{}-get-{i}", property.name),
            endpoint_path: property.endpoint_path.clone(),
            method: Method::Get,
            property_name: property.name.clone(),
            input_value: None,
            expected_state: None,
            preset_state: Some(PresetState {
                state_name: mapping.state_name.clone(),
                code: pair.code,
            }),
            expected_value: Some(surface_value(&property.kind, &pair.value)),
        });
    }
    Ok(cases)
}

/// Build the regression suite for a whole bundle: PUT-then-GET cases per
/// pair for read-write properties, GET-only for read-only, in property
/// order. Per-property failures do not abort the rest.
pub fn emit_suite(
    bundle: &SpecBundle,
    pairs_per_property: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
) -> SuiteBuild {
    emit_suite_with(bundle, pairs_per_property, backend, prompts, &mut |_| {})
}

/// `emit_suite`, forwarding every oracle transcript to `sink`.
pub fn emit_suite_with(
    bundle: &SpecBundle,
    pairs_per_property: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
    sink: TranscriptSink,
) -> SuiteBuild {
    let fingerprint = bundle.fingerprint();
    let mut cases = Vec::new();
    let mut failures = Vec::new();
    for property in &bundle.properties {
        match property_cases(property, bundle, pairs_per_property, backend, prompts, &mut *sink) {
            Ok(mut emitted) => cases.append(&mut emitted),
            Err(e) => failures.push(PropertyFailure {
                property_name: property.name.clone(),
                reason: e.to_string(),
            }),
        }
    }
    SuiteBuild {
        suite: TestSuite {
            suite_id: format!("suite-{}", &fingerprint[..12]),
            fingerprint,
            cases,
        },
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, CorpusConfig};
    use crate::model::CodedEntry;

    fn det() -> OracleBackend {
        OracleBackend::deterministic()
    }

    fn prompts() -> Prompts {
        Prompts::default()
    }

    fn coded_state(name: &str, entries: &[(&str, u64)]) -> StateDef {
        let listed: Vec<String> = entries
            .iter()
            .map(|(label, code)| format!("{label}={code}"))
            .collect();
        StateDef {
            name: name.to_string(),
            shape: StateShape::Coded {
                entries: entries
                    .iter()
                    .map(|(label, code)| CodedEntry {
                        label: label.to_string(),
                        code: *code,
                    })
                    .collect(),
            },
            source_text: format!("enum {name} {{ {} }}", listed.join(", ")),
        }
    }

    fn scalar_state(name: &str, unit: &str, scale: f64, offset: f64) -> StateDef {
        StateDef {
            name: name.to_string(),
            shape: StateShape::Scalar {
                unit: unit.to_string(),
                scale,
                offset,
            },
            source_text: format!("scalar {name} unit={unit} scale={scale} offset={offset}"),
        }
    }

    fn ac_mode() -> PropertyDef {
        PropertyDef {
            name: "acMode".to_string(),
            kind: PropertyKind::Enum {
                labels: vec!["OFF".into(), "STANDARD".into(), "ECO".into()],
            },
            access: Access::ReadWrite,
            description: "Cabin air conditioning operating mode.".to_string(),
            endpoint_path: "/climate".to_string(),
        }
    }

    fn ac_state() -> StateDef {
        coded_state("ACState", &[("OFF", 0), ("STANDARD", 1), ("ECO", 2)])
    }

    #[test]
    fn shortlist_keeps_overlapping_states_in_overlap_order() {
        let property = PropertyDef {
            name: "coolRangerMode".to_string(),
            kind: PropertyKind::Enum {
                labels: vec!["OFF".into(), "ON".into()],
            },
            access: Access::ReadWrite,
            description: String::new(),
            endpoint_path: "/cool-ranger".to_string(),
        };
        let states = vec![
            coded_state("RangerGustState", &[("OFF", 0), ("ON", 1)]),
            coded_state("CoolBreezeState", &[("OFF", 0), ("ON", 1)]),
            coded_state("CoolRangerState", &[("OFF", 0), ("ON", 1)]),
            coded_state("DoorState", &[("OPEN", 0), ("CLOSED", 1)]),
        ];
        let shortlist = shortlist_states(&property, &states);
        let names: Vec<&str> = shortlist.iter().map(|s| s.name.as_str()).collect();
        // CoolRanger overlaps twice; the two single-overlap states keep
        // declaration order; DoorState shares no token and is excluded.
        assert_eq!(names, ["CoolRangerState", "RangerGustState", "CoolBreezeState"]);
    }

    #[test]
    fn shortlist_is_capped() {
        let property = ac_mode();
        let states: Vec<StateDef> = (0..5)
            .map(|i| coded_state(&format!("AcExtra{i}State"), &[("OFF", 0)]))
            .collect();
        assert_eq!(shortlist_states(&property, &states).len(), SHORTLIST_LEN);
    }

    #[test]
    fn maps_ac_mode_to_ac_state() {
        let states = [ac_state(), coded_state("DoorState", &[("OPEN", 0), ("CLOSED", 1)])];
        let candidates: Vec<&StateDef> = states.iter().collect();
        let mapping =
            map_property_to_state(&ac_mode(), &candidates, &det(), &prompts()).unwrap();
        assert_eq!(mapping.state_name, "ACState");
        let ValueBinding::Table { value_map } = &mapping.binding else {
            panic!("expected a table binding");
        };
        assert_eq!(value_map.get("STANDARD"), Some(&1));
        assert_eq!(value_map.get("OFF"), Some(&0));
        assert_eq!(value_map.get("ECO"), Some(&2));
        assert_eq!(mapping.confidence_note, "all labels matched");
    }

    #[test]
    fn partial_state_leaves_labels_unmatched() {
        let states = [coded_state("ACState", &[("OFF", 0), ("STANDARD", 1)])];
        let candidates: Vec<&StateDef> = states.iter().collect();
        let mapping =
            map_property_to_state(&ac_mode(), &candidates, &det(), &prompts()).unwrap();
        let ValueBinding::Table { value_map } = &mapping.binding else {
            panic!("expected a table binding");
        };
        assert_eq!(value_map.len(), 2);
        assert!(!value_map.contains_key("ECO"));
        assert!(mapping.confidence_note.contains("ECO"));
    }

    #[test]
    fn empty_candidate_list_is_mapping_not_found() {
        let err = map_property_to_state(&ac_mode(), &[], &det(), &prompts()).unwrap_err();
        assert!(matches!(err, TesterError::MappingNotFound { .. }));
    }

    #[test]
    fn number_property_gets_a_linear_binding() {
        let property = PropertyDef {
            name: "speed".to_string(),
            kind: PropertyKind::Number {
                unit: "kmh".to_string(),
                min: 0.0,
                max: 300.0,
            },
            access: Access::ReadOnly,
            description: String::new(),
            endpoint_path: "/speed".to_string(),
        };
        let states = [scalar_state("SpeedState", "kmh", 0.01, 0.0)];
        let candidates: Vec<&StateDef> = states.iter().collect();
        let mapping = map_property_to_state(&property, &candidates, &det(), &prompts()).unwrap();
        assert_eq!(
            mapping.binding,
            ValueBinding::Linear {
                scale: 0.01,
                offset: 0.0,
                min: 0.0,
                max: 300.0
            }
        );
    }

    #[test]
    fn fuzzer_pair_for_ac_mode_is_standard_one() {
        let mapping = PropertyStateMapping {
            property_name: "acMode".to_string(),
            state_name: "ACState".to_string(),
            binding: ValueBinding::Table {
                value_map: [("OFF".to_string(), 0), ("STANDARD".to_string(), 1), ("ECO".to_string(), 2)]
                    .into_iter()
                    .collect(),
            },
            confidence_note: String::new(),
        };
        let pairs = generate_test_objects(&mapping, 1, &det(), &prompts()).unwrap();
        assert_eq!(
            pairs,
            vec![TestPair {
                value: TestValue::Label("STANDARD".to_string()),
                code: 1
            }]
        );

        let all = generate_test_objects(&mapping, 10, &det(), &prompts()).unwrap();
        assert_eq!(all.len(), 3, "n_cases beyond the map exhausts it once");
    }

    #[test]
    fn fuzzer_midpoint_for_speed_is_code_5000() {
        let mapping = PropertyStateMapping {
            property_name: "speed".to_string(),
            state_name: "SpeedState".to_string(),
            binding: ValueBinding::Linear {
                scale: 0.01,
                offset: 0.0,
                min: 0.0,
                max: 100.0,
            },
            confidence_note: String::new(),
        };
        let pairs = generate_test_objects(&mapping, 1, &det(), &prompts()).unwrap();
        assert_eq!(
            pairs,
            vec![TestPair {
                value: TestValue::Number(50.0),
                code: 5000
            }]
        );
    }

    #[test]
    fn empty_value_map_yields_no_test_objects() {
        let mapping = PropertyStateMapping {
            property_name: "x".to_string(),
            state_name: "XState".to_string(),
            binding: ValueBinding::Table {
                value_map: BTreeMap::new(),
            },
            confidence_note: String::new(),
        };
        let err = generate_test_objects(&mapping, 2, &det(), &prompts()).unwrap_err();
        assert!(matches!(err, TesterError::NoTestObjects { .. }));
    }

    #[test]
    fn canonical_suite_contains_the_standard_round_trip() {
        let bundle = generate(&CorpusConfig {
            seed: 7,
            n_endpoints: 1,
            distractors_per_endpoint: 0,
            noise_level: 0.0,
            ..CorpusConfig::default()
        })
        .unwrap();
        let build = emit_suite(&bundle, 1, &det(), &prompts());
        assert!(build.failures.is_empty(), "{:?}", build.failures);
        let suite = &build.suite;
        suite.validate().unwrap();
        assert_eq!(suite.suite_id, format!("suite-{}", &bundle.fingerprint()[..12]));
        assert_eq!(suite.cases.len(), 2);

        let put = &suite.cases[0];
        assert_eq!(put.method, Method::Put);
        assert_eq!(put.endpoint_path, "/climate");
        assert_eq!(put.input_value, Some(TestValue::Label("STANDARD".into())));
        let expected = put.expected_state.as_ref().unwrap();
        assert_eq!(expected.state_name, "ACState");
        assert_eq!(expected.expected_code, 1);

        let get = &suite.cases[1];
        assert_eq!(get.method, Method::Get);
        let preset = get.preset_state.as_ref().unwrap();
        assert_eq!((preset.state_name.as_str(), preset.code), ("ACState", 1));
        assert_eq!(get.expected_value, Some(TestValue::Label("STANDARD".into())));
    }

    #[test]
    fn suite_emission_is_deterministic_and_consistent() {
        let config = CorpusConfig {
            seed: 11,
            n_endpoints: 10,
            distractors_per_endpoint: 2,
            noise_level: 0.0,
            ..CorpusConfig::default()
        };
        let bundle = generate(&config).unwrap();
        let first = emit_suite(&bundle, 2, &det(), &prompts());
        let second = emit_suite(&bundle, 2, &det(), &prompts());
        assert!(first.failures.is_empty(), "{:?}", first.failures);
        assert_eq!(first.suite.to_json(), second.suite.to_json());

        let ground_truth = bundle.ground_truth.as_ref().unwrap();
        for case in &first.suite.cases {
            let truth = &ground_truth[&case.property_name];
            if let Some(expected) = &case.expected_state {
                assert_eq!(expected.state_name, truth.state, "{}", case.id);
            }
            if let Some(preset) = &case.preset_state {
                assert_eq!(preset.state_name, truth.state, "{}", case.id);
            }
        }
        for property in &bundle.properties {
            let has_case = first
                .suite
                .cases
                .iter()
                .any(|c| c.property_name == property.name);
            assert!(has_case, "property {} has no case", property.name);
            let put_count = first
                .suite
                .cases
                .iter()
                .filter(|c| c.property_name == property.name && c.method == Method::Put)
                .count();
            assert_eq!(put_count > 0, property.access == Access::ReadWrite);
        }
    }

    #[test]
    fn unrelated_property_fails_without_sinking_the_suite() {
        let good = ac_mode();
        let stranded = PropertyDef {
            name: "zebraThing".to_string(),
            kind: PropertyKind::Boolean,
            access: Access::ReadWrite,
            description: String::new(),
            endpoint_path: "/zebra-thing".to_string(),
        };
        let bundle = SpecBundle::new(
            vec![good, stranded],
            vec![
                ac_state(),
                coded_state("UnrelatedState", &[("OFF", 0), ("ON", 1)]),
            ],
            Vec::new(),
            None,
        )
        .unwrap();
        let build = emit_suite(&bundle, 1, &det(), &prompts());
        assert_eq!(build.failures.len(), 1);
        assert_eq!(build.failures[0].property_name, "zebraThing");
        assert!(build.failures[0].reason.contains("no candidate state"));
        assert!(build.suite.cases.iter().all(|c| c.property_name == "acMode"));
        assert!(!build.suite.cases.is_empty());
    }

    #[test]
    fn empty_bundle_yields_an_empty_valid_suite() {
        let bundle = SpecBundle::new(Vec::new(), Vec::new(), Vec::new(), None).unwrap();
        let build = emit_suite(&bundle, 2, &det(), &prompts());
        assert!(build.failures.is_empty());
        assert!(build.suite.cases.is_empty());
        let round = TestSuite::from_json(&build.suite.to_json()).unwrap();
        assert_eq!(round, build.suite);
    }

    #[test]
    fn boolean_properties_cross_the_surface_as_booleans() {
        let property = PropertyDef {
            name: "ecoAssist".to_string(),
            kind: PropertyKind::Boolean,
            access: Access::ReadWrite,
            description: String::new(),
            endpoint_path: "/eco-assist".to_string(),
        };
        let bundle = SpecBundle::new(
            vec![property],
            vec![coded_state("EcoAssistState", &[("OFF", 0), ("ON", 1)])],
            Vec::new(),
            None,
        )
        .unwrap();
        let build = emit_suite(&bundle, 1, &det(), &prompts());
        assert!(build.failures.is_empty(), "{:?}", build.failures);
        let put = &build.suite.cases[0];
        assert_eq!(put.input_value, Some(TestValue::Bool(true)));
        assert_eq!(put.expected_state.as_ref().unwrap().expected_code, 1);
    }

    #[test]
    fn mapping_soundness_against_ground_truth() {
        let bundle = generate(&CorpusConfig {
            seed: 3,
            n_endpoints: 12,
            distractors_per_endpoint: 3,
            noise_level: 0.0,
            ..CorpusConfig::default()
        })
        .unwrap();
        let ground_truth = bundle.ground_truth.as_ref().unwrap();
        for property in &bundle.properties {
            let shortlist = shortlist_states(property, &bundle.states);
            let mapping =
                map_property_to_state(property, &shortlist, &det(), &prompts()).unwrap();
            assert_eq!(
                mapping.state_name, ground_truth[&property.name].state,
                "property {}",
                property.name
            );
        }
    }

    #[test]
    fn suite_parse_rejects_duplicate_ids_and_wrong_fields() {
        let case = TestCase {
            id: "a-get-0".to_string(),
            endpoint_path: "/a".to_string(),
            method: Method::Get,
            property_name: "a".to_string(),
            input_value: None,
            expected_state: None,
            preset_state: Some(PresetState {
                state_name: "AState".to_string(),
                code: 0,
            }),
            expected_value: Some(TestValue::Label("OFF".to_string())),
        };
        let duplicated = TestSuite {
            suite_id: "suite-x".to_string(),
            fingerprint: "x".to_string(),
            cases: vec![case.clone(), case.clone()],
        };
        assert!(TestSuite::from_json(&duplicated.to_json())
            .unwrap_err()
            .to_string()
            .contains("duplicate case id"));

        let mut wrong = case;
        wrong.method = Method::Put;
        let bad_fields = TestSuite {
            suite_id: "suite-x".to_string(),
            fingerprint: "x".to_string(),
            cases: vec![wrong],
        };
        assert!(TestSuite::from_json(&bad_fields.to_json())
            .unwrap_err()
            .to_string()
            .contains("wrong fields"));
    }

    #[test]
    fn sink_sees_mapper_then_fuzzer_per_property() {
        let bundle = generate(&CorpusConfig {
            seed: 7,
            n_endpoints: 1,
            distractors_per_endpoint: 0,
            noise_level: 0.0,
            ..CorpusConfig::default()
        })
        .unwrap();
        let mut names = Vec::new();
        let build = emit_suite_with(&bundle, 1, &det(), &prompts(), &mut |t| {
            names.push(t.signature_name);
        });
        assert!(build.failures.is_empty());
        assert_eq!(names, ["property_to_state_mapper", "test_object_fuzzer"]);
    }

    #[test]
    fn test_values_serialize_bare() {
        assert_eq!(
            serde_json::to_string(&TestValue::Label("STANDARD".into())).unwrap(),
            "\"STANDARD\""
        );
        assert_eq!(serde_json::to_string(&TestValue::Number(42.5)).unwrap(), "42.5");
        assert_eq!(serde_json::to_string(&TestValue::Bool(true)).unwrap(), "true");
        let parsed: TestValue = serde_json::from_str("true").unwrap();
        assert_eq!(parsed, TestValue::Bool(true));
        let parsed: TestValue = serde_json::from_str("3.5").unwrap();
        assert_eq!(parsed, TestValue::Number(3.5));
    }
}
