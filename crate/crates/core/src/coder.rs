//! Endpoint synthesis pipeline: resolve the governing state for each
//! property, retrieve candidate signals for that state, and have the
//! synthesizer oracle bind status/request signals with decode/encode specs.
//! The result is an executable intermediate representation, verified against
//! the retrieval slate and the property-state mapping before acceptance;
//! source text is only a rendering of that IR.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{
    normalize_label, Access, PropertyDef, PropertyKind, SignalDef, SignalDirection, SpecBundle,
    StateDef, BOOLEAN_LABELS,
};
use crate::oracle::{
    invoke_with, synthesizer_signature, OracleBackend, OracleError, Prompts, TranscriptSink,
};
use crate::retrieval::{
    build_index, query, signal_doc, state_query_text, RetrievalConfig, RetrievalError, VectorIndex,
};
use crate::tester::{
    map_property_to_state_with, shortlist_states, PropertyStateMapping, TesterError, ValueBinding,
};

#[derive(Debug, Error)]
pub enum CoderError {
    #[error(transparent)]
    Mapping(#[from] TesterError),
    #[error("no {role}-direction signal retrieved for state '{state}'")]
    SignalNotFound { state: String, role: String },
    #[error("synthesis for property '{property}' is inconsistent: {reason}")]
    SynthesisInconsistent { property: String, reason: String },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("impl document rejected: {0}")]
    Format(String),
}

/// How property values cross the REST surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Enum,
    Number,
    Boolean,
}

impl ValueKind {
    pub fn of(kind: &PropertyKind) -> Self {
        match kind {
            PropertyKind::Enum { .. } => ValueKind::Enum,
            PropertyKind::Number { .. } => ValueKind::Number,
            PropertyKind::Boolean => ValueKind::Boolean,
        }
    }
}

/// Decode/encode specification shared by both bindings of an impl. Tables
/// are stored in decode direction (code as decimal string -> label); encode
/// is its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Codec {
    Table { decode_table: BTreeMap<String, String> },
    Linear { scale: f64, offset: f64 },
}

impl Codec {
    /// Raw bus code to surface value. None when the code has no table entry
    /// or the codec does not fit the value kind.
    pub fn decode(&self, raw: u64, kind: ValueKind) -> Option<Value> {
        match (self, kind) {
            (Codec::Table { decode_table }, ValueKind::Enum) => {
                decode_table.get(&raw.to_string()).map(|l| json!(l))
            }
            (Codec::Table { decode_table }, ValueKind::Boolean) => {
                decode_table.get(&raw.to_string()).map(|l| json!(l == "ON"))
            }
            (Codec::Linear { scale, offset }, ValueKind::Number) => {
                Some(json!(raw as f64 * scale + offset))
            }
            _ => None,
        }
    }

    /// Surface value to raw bus code. None when the value cannot be mapped:
    /// an unknown label, a wrong JSON type, or a number outside the raw
    /// domain of the linear transform.
    pub fn encode(&self, value: &Value) -> Option<u64> {
        match self {
            Codec::Table { decode_table } => {
                let label = match value {
                    Value::Bool(b) => BOOLEAN_LABELS[usize::from(*b)].to_string(),
                    Value::String(s) => normalize_label(s),
                    _ => return None,
                };
                decode_table
                    .iter()
                    .find(|(_, l)| **l == label)
                    .and_then(|(code, _)| code.parse().ok())
            }
            Codec::Linear { scale, offset } => {
                let physical = value.as_f64()?;
                let raw = ((physical - offset) / scale).round();
                if raw.is_finite() && raw >= 0.0 && raw <= u64::MAX as f64 {
                    Some(raw as u64)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalBinding {
    pub role: SignalDirection,
    pub signal_name: String,
    pub codec: Codec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PutSpec {
    pub request: SignalBinding,
    /// Status signal read to confirm the write took effect.
    pub confirm_via: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlateEntry {
    pub doc_id: String,
    pub direction: SignalDirection,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub slate: Vec<SlateEntry>,
    pub transcript_id: String,
}

/// Executable endpoint representation: everything the runner needs to serve
/// GET/PUT for one property against the signal bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointImpl {
    pub endpoint_path: String,
    pub property_name: String,
    pub state_name: String,
    pub value_kind: ValueKind,
    pub get: SignalBinding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub put: Option<PutSpec>,
    pub provenance: Provenance,
}

impl EndpointImpl {
    /// Structural invariants, checkable without the bundle: roles, codec
    /// well-formedness, encode/decode inversion, and slate confinement (an
    /// impl may only name signals its retrieval slate produced).
    pub fn validate(&self) -> Result<(), CoderError> {
        let reject = |reason: String| {
            Err(CoderError::Format(format!(
                "impl '{}': {reason}",
                self.property_name
            )))
        };
        if self.get.role != SignalDirection::Status {
            return reject("get binding must have the status role".into());
        }
        let in_slate = |name: &str, direction: SignalDirection| {
            self.provenance
                .slate
                .iter()
                .any(|e| e.doc_id == name && e.direction == direction)
        };
        if !in_slate(&self.get.signal_name, SignalDirection::Status) {
            return reject(format!(
                "get signal '{}' is not a status entry of the slate",
                self.get.signal_name
            ));
        }
        match (&self.value_kind, &self.get.codec) {
            (ValueKind::Number, Codec::Linear { scale, offset }) => {
                if *scale == 0.0 || !scale.is_finite() || !offset.is_finite() {
                    return reject("linear codec needs a finite non-zero scale".into());
                }
            }
            (ValueKind::Number, Codec::Table { .. }) => {
                return reject("number properties need a linear codec".into());
            }
            (_, Codec::Linear { .. }) => {
                return reject("labeled properties need a table codec".into());
            }
            (kind, Codec::Table { decode_table }) => {
                if decode_table.is_empty() {
                    return reject("decode table is empty".into());
                }
                let mut labels = std::collections::BTreeSet::new();
                for (code, label) in decode_table {
                    if code.parse::<u64>().is_err() {
                        return reject(format!("table code '{code}' is not an integer"));
                    }
                    if label.is_empty() || !labels.insert(label) {
                        return reject(format!("table is not bijective at label '{label}'"));
                    }
                    if *kind == ValueKind::Boolean && label != "OFF" && label != "ON" {
                        return reject(format!("boolean table has foreign label '{label}'"));
                    }
                }
            }
        }
        if let Some(put) = &self.put {
            if put.request.role != SignalDirection::Request {
                return reject("put binding must have the request role".into());
            }
            if !in_slate(&put.request.signal_name, SignalDirection::Request) {
                return reject(format!(
                    "put signal '{}' is not a request entry of the slate",
                    put.request.signal_name
                ));
            }
            if !in_slate(&put.confirm_via, SignalDirection::Status) {
                return reject(format!(
                    "confirm signal '{}' is not a status entry of the slate",
                    put.confirm_via
                ));
            }
            if put.request.codec != self.get.codec {
                return reject("put codec is not the inverse of the get codec".into());
            }
        }
        Ok(())
    }
}

/// Per-property synthesis outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Synthesized,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTotals {
    pub properties: usize,
    pub synthesized: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub outcomes: BTreeMap<String, Outcome>,
    pub totals: SynthesisTotals,
    /// Null until a runner executes a suite against these impls.
    pub pass_rate: Option<f64>,
}

/// The impls.json document: synthesized impls plus the covering report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOutput {
    pub impls: Vec<EndpointImpl>,
    pub report: SynthesisReport,
}

impl SynthesisOutput {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("impls serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, CoderError> {
        let output: SynthesisOutput =
            serde_json::from_str(text).map_err(|e| CoderError::Format(e.to_string()))?;
        for endpoint in &output.impls {
            endpoint.validate()?;
        }
        let totals = &output.report.totals;
        if totals.synthesized + totals.failed != totals.properties
            || totals.synthesized != output.impls.len()
        {
            return Err(CoderError::Format(
                "report totals disagree with the impl list".into(),
            ));
        }
        Ok(output)
    }
}

/// The signals retrieved for one state: best status, best request (if any),
/// and the full slate for provenance.
#[derive(Debug, Clone)]
pub struct StateSignals {
    pub status: String,
    pub request: Option<String>,
    pub slate: Vec<SlateEntry>,
}

/// Query the index with the state's name and source declaration; pick the
/// best-scoring signal per direction out of the top-k slate.
pub fn synthesize_signal(
    state: &StateDef,
    index: &VectorIndex,
    config: &RetrievalConfig,
    signals: &[SignalDef],
) -> Result<StateSignals, CoderError> {
    let hits = query(index, &state_query_text(state), config);
    let mut slate = Vec::with_capacity(hits.len());
    for (doc_id, score) in hits {
        let direction = signals
            .iter()
            .find(|s| s.doc_id == doc_id)
            .map(|s| s.direction)
            .ok_or_else(|| {
                CoderError::Format(format!("slate doc '{doc_id}' is not in the signal registry"))
            })?;
        slate.push(SlateEntry {
            doc_id,
            direction,
            score,
        });
    }
    // Hits come back score-descending, so the first of each direction wins.
    let pick = |direction: SignalDirection| {
        slate
            .iter()
            .find(|e| e.direction == direction)
            .map(|e| e.doc_id.clone())
    };
    let status = pick(SignalDirection::Status).ok_or_else(|| CoderError::SignalNotFound {
        state: state.name.clone(),
        role: "status".into(),
    })?;
    Ok(StateSignals {
        status,
        request: pick(SignalDirection::Request),
        slate,
    })
}

/// Synthesize the full endpoint IR for one property: state discovery through
/// the mapper, signal retrieval, oracle binding, then post-hoc validation.
pub fn synthesize_property(
    property: &PropertyDef,
    bundle: &SpecBundle,
    index: &VectorIndex,
    config: &RetrievalConfig,
    backend: &OracleBackend,
    prompts: &Prompts,
) -> Result<EndpointImpl, CoderError> {
    synthesize_property_with(property, bundle, index, config, backend, prompts, &mut |_| {})
}

/// `synthesize_property`, forwarding every oracle transcript to `sink`.
pub fn synthesize_property_with(
    property: &PropertyDef,
    bundle: &SpecBundle,
    index: &VectorIndex,
    config: &RetrievalConfig,
    backend: &OracleBackend,
    prompts: &Prompts,
    sink: TranscriptSink,
) -> Result<EndpointImpl, CoderError> {
    let shortlist = shortlist_states(property, &bundle.states);
    let mapping =
        map_property_to_state_with(property, &shortlist, backend, prompts, &mut *sink)?;
    let state = bundle
        .state(&mapping.state_name)
        .expect("mapping states come from the bundle");
    let retrieved = synthesize_signal(state, index, config, &bundle.signals)?;
    if property.access == Access::ReadWrite && retrieved.request.is_none() {
        return Err(CoderError::SignalNotFound {
            state: state.name.clone(),
            role: "request".into(),
        });
    }

    let access = match property.access {
        Access::ReadOnly => "read-only",
        Access::ReadWrite => "read-write",
    };
    let (kind, value_map, scale, offset) = match &mapping.binding {
        ValueBinding::Table { value_map } => ("table", json!(value_map), 1.0, 0.0),
        ValueBinding::Linear { scale, offset, .. } => ("linear", json!({}), *scale, *offset),
    };
    let input = json!({
        "property_name": property.name,
        "state_name": mapping.state_name,
        "access": access,
        "kind": kind,
        "value_map": value_map,
        "scale": scale,
        "offset": offset,
        "slate": retrieved.slate.iter().map(|e| json!({
            "doc_id": e.doc_id,
            "direction": e.direction.keyword(),
            "score": e.score,
        })).collect::<Vec<_>>(),
    });
    let signature = synthesizer_signature(prompts);
    let output = invoke_with(&signature, &input, backend, sink)?;
    let endpoint = impl_from_output(
        property,
        &mapping,
        retrieved.slate,
        format!("{}:{}", signature.name, property.name),
        &output,
    )?;
    endpoint.validate()?;
    Ok(endpoint)
}

fn impl_from_output(
    property: &PropertyDef,
    mapping: &PropertyStateMapping,
    slate: Vec<SlateEntry>,
    transcript_id: String,
    output: &Value,
) -> Result<EndpointImpl, CoderError> {
    let reject = |reason: String| CoderError::SynthesisInconsistent {
        property: property.name.clone(),
        reason,
    };
    let in_slate = |name: &str, direction: SignalDirection| {
        slate
            .iter()
            .any(|e| e.doc_id == name && e.direction == direction)
    };

    let status_signal = output["status_signal"].as_str().unwrap_or("");
    if !in_slate(status_signal, SignalDirection::Status) {
        return Err(reject(format!(
            "status signal '{status_signal}' is not a status entry of the slate"
        )));
    }

    let codec = match &mapping.binding {
        ValueBinding::Table { value_map } => {
            let expected: BTreeMap<String, String> = value_map
                .iter()
                .map(|(label, code)| (code.to_string(), label.clone()))
                .collect();
            let got: BTreeMap<String, String> = output["decode_table"]
                .as_object()
                .map(|table| {
                    table
                        .iter()
                        .map(|(code, label)| {
                            (code.clone(), label.as_str().unwrap_or("").to_string())
                        })
                        .collect()
                })
                .unwrap_or_default();
            if got != expected {
                return Err(reject(
                    "decode table disagrees with the property-state mapping".into(),
                ));
            }
            Codec::Table {
                decode_table: expected,
            }
        }
        ValueBinding::Linear { scale, offset, .. } => {
            let got_scale = output["scale"].as_f64().unwrap_or(0.0);
            let got_offset = output["offset"].as_f64().unwrap_or(0.0);
            if got_scale != *scale || got_offset != *offset {
                return Err(reject(
                    "linear transform disagrees with the property-state mapping".into(),
                ));
            }
            Codec::Linear {
                scale: *scale,
                offset: *offset,
            }
        }
    };

    let request_signal = output["request_signal"].as_str().unwrap_or("");
    let put = match property.access {
        Access::ReadWrite => {
            if !in_slate(request_signal, SignalDirection::Request) {
                return Err(reject(format!(
                    "request signal '{request_signal}' is not a request entry of the slate"
                )));
            }
            Some(PutSpec {
                request: SignalBinding {
                    role: SignalDirection::Request,
                    signal_name: request_signal.to_string(),
                    codec: codec.clone(),
                },
                confirm_via: status_signal.to_string(),
            })
        }
        Access::ReadOnly => {
            if !request_signal.is_empty() {
                return Err(reject(
                    "read-only property must not bind a request signal".into(),
                ));
            }
            None
        }
    };

    Ok(EndpointImpl {
        endpoint_path: property.endpoint_path.clone(),
        property_name: property.name.clone(),
        state_name: mapping.state_name.clone(),
        value_kind: ValueKind::of(&property.kind),
        get: SignalBinding {
            role: SignalDirection::Status,
            signal_name: status_signal.to_string(),
            codec,
        },
        put,
        provenance: Provenance {
            slate,
            transcript_id,
        },
    })
}

/// Synthesize the whole bundle in property order. Per-property failures go
/// into the report; the impl list holds the successes.
pub fn synthesize_bundle(
    bundle: &SpecBundle,
    k: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
) -> Result<SynthesisOutput, CoderError> {
    synthesize_bundle_with(bundle, k, backend, prompts, &mut |_| {})
}

/// `synthesize_bundle`, forwarding every oracle transcript to `sink`.
pub fn synthesize_bundle_with(
    bundle: &SpecBundle,
    k: usize,
    backend: &OracleBackend,
    prompts: &Prompts,
    sink: TranscriptSink,
) -> Result<SynthesisOutput, CoderError> {
    let docs: Vec<_> = bundle.signals.iter().map(signal_doc).collect();
    let index = build_index(&docs)?;
    let config = RetrievalConfig { k, min_score: 0.0 };
    let mut impls = Vec::new();
    let mut outcomes = BTreeMap::new();
    for property in &bundle.properties {
        match synthesize_property_with(
            property, bundle, &index, &config, backend, prompts, &mut *sink,
        ) {
            Ok(endpoint) => {
                impls.push(endpoint);
                outcomes.insert(property.name.clone(), Outcome::Synthesized);
            }
            Err(e) => {
                outcomes.insert(
                    property.name.clone(),
                    Outcome::Failed {
                        reason: e.to_string(),
                    },
                );
            }
        }
    }
    let totals = SynthesisTotals {
        properties: bundle.properties.len(),
        synthesized: impls.len(),
        failed: bundle.properties.len() - impls.len(),
    };
    Ok(SynthesisOutput {
        impls,
        report: SynthesisReport {
            outcomes,
            totals,
            pass_rate: None,
        },
    })
}

fn render_table(table: &BTreeMap<String, String>, inverted: bool) -> String {
    let mut pairs: Vec<String> = if inverted {
        let encode: BTreeMap<&String, &String> = table.iter().map(|(c, l)| (l, c)).collect();
        encode.iter().map(|(l, c)| format!("{l} -> {c}")).collect()
    } else {
        table.iter().map(|(c, l)| format!("{c} -> {l}")).collect()
    };
    if pairs.is_empty() {
        pairs.push(String::new());
    }
    format!("{{{}}}", pairs.join(", "))
}

/// Render the IR as a handler stub. The rendering is a viewing convenience;
/// the IR stays authoritative. Byte-deterministic for a given impl.
pub fn emit_source(endpoint: &EndpointImpl) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "// {} <- property {} via state {}\n",
        endpoint.endpoint_path, endpoint.property_name, endpoint.state_name
    ));
    out.push_str(&format!("get {}:\n", endpoint.endpoint_path));
    out.push_str(&format!(
        "    raw = read_signal(\"{}\")\n",
        endpoint.get.signal_name
    ));
    match &endpoint.get.codec {
        Codec::Table { decode_table } => out.push_str(&format!(
            "    value = decode[raw] where decode = {}\n",
            render_table(decode_table, false)
        )),
        Codec::Linear { scale, offset } => {
            out.push_str(&format!("    value = raw * {scale} + {offset}\n"));
        }
    }
    out.push_str(&format!(
        "    respond 200 {{\"{}\": value}}\n",
        endpoint.property_name
    ));
    if let Some(put) = &endpoint.put {
        out.push_str(&format!("put {}:\n", endpoint.endpoint_path));
        match &put.request.codec {
            Codec::Table { decode_table } => out.push_str(&format!(
                "    raw = encode[value] where encode = {}\n",
                render_table(decode_table, true)
            )),
            Codec::Linear { scale, offset } => {
                out.push_str(&format!("    raw = round((value - {offset}) / {scale})\n"));
            }
        }
        out.push_str(&format!(
            "    write_signal(\"{}\", raw)\n",
            put.request.signal_name
        ));
        out.push_str(&format!(
            "    confirm read_signal(\"{}\") == raw else respond 409\n",
            put.confirm_via
        ));
        out.push_str("    respond 204\n");
    }
    out
}
