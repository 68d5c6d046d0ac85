//! Typed oracle calls: declarative signatures with closed output schemas,
//! served either by deterministic rules (offline, reproducible) or by a
//! remote chat-completions endpoint. Every answer is schema-validated before
//! any pipeline sees it.

mod prompts;
mod remote;
mod rules;
mod schema;

pub use prompts::Prompts;
pub use remote::RemoteBackend;
pub use schema::Schema;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub const SIG_MAPPER: &str = "property_to_state_mapper";
pub const SIG_FUZZER: &str = "test_object_fuzzer";
pub const SIG_SYNTHESIZER: &str = "property_synthesizer";
pub const SIG_ECHO: &str = "echo_schema";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("invalid signature '{signature}': {reason}")]
    Signature { signature: String, reason: String },
    #[error("input for signature '{signature}' rejected: {reason}")]
    Input { signature: String, reason: String },
    #[error("deterministic backend has no rule for signature '{0}'")]
    UnsupportedSignature(String),
    #[error("oracle output failed validation after {} attempt(s): {reason}", transcript.attempt_count)]
    Validation {
        reason: String,
        transcript: Box<OracleTranscript>,
    },
    #[error("oracle transport failure: {0}")]
    Transport(String),
}

/// A declarative oracle call shape: what to do, what comes in, what must
/// come out, and demonstrations.
#[derive(Debug, Clone)]
pub struct OracleSignature {
    pub name: String,
    pub instruction: String,
    /// (field name, human description); inputs must carry exactly these keys.
    pub input_fields: Vec<(String, String)>,
    /// Closed: unknown keys in a response are validation failures.
    pub output_schema: Schema,
    pub few_shot: Vec<(Value, Value)>,
}

impl OracleSignature {
    pub fn new(
        name: &str,
        instruction: &str,
        input_fields: &[(&str, &str)],
        output_schema: Schema,
        few_shot: Vec<(Value, Value)>,
    ) -> Result<Self, OracleError> {
        for (i, (_, output)) in few_shot.iter().enumerate() {
            output_schema
                .validate(output)
                .map_err(|e| OracleError::Signature {
                    signature: name.to_string(),
                    reason: format!("few-shot output {i} violates the output schema: {e}"),
                })?;
        }
        Ok(OracleSignature {
            name: name.to_string(),
            instruction: instruction.to_string(),
            input_fields: input_fields
                .iter()
                .map(|(n, d)| (n.to_string(), d.to_string()))
                .collect(),
            output_schema,
            few_shot,
        })
    }

    fn check_input(&self, input: &Value) -> Result<(), OracleError> {
        let reject = |reason: String| OracleError::Input {
            signature: self.name.clone(),
            reason,
        };
        let obj = input
            .as_object()
            .ok_or_else(|| reject("input must be an object".into()))?;
        for (field, _) in &self.input_fields {
            if !obj.contains_key(field) {
                return Err(reject(format!("missing input field \"{field}\"")));
            }
        }
        for key in obj.keys() {
            if !self.input_fields.iter().any(|(f, _)| f == key) {
                return Err(reject(format!("unexpected input field \"{key}\"")));
            }
        }
        Ok(())
    }
}

/// Execution configuration for the remote backend. The API key comes from
/// the environment and never travels through serialized artifacts.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_retries: u32,
    pub in_flight_limit: usize,
    pub timeout: std::time::Duration,
}

impl RemoteConfig {
    pub fn new(endpoint_url: &str, model_name: &str) -> Self {
        RemoteConfig {
            endpoint_url: endpoint_url.to_string(),
            model_name: model_name.to_string(),
            api_key: None,
            temperature: 0.0,
            max_retries: 2,
            in_flight_limit: 4,
            timeout: std::time::Duration::from_secs(30),
        }
    }

    /// Reads FORGE_LLM_URL, FORGE_LLM_MODEL, and FORGE_LLM_KEY.
    pub fn from_env() -> Result<Self, OracleError> {
        let url = std::env::var("FORGE_LLM_URL")
            .map_err(|_| OracleError::Config("FORGE_LLM_URL is not set".into()))?;
        let model = std::env::var("FORGE_LLM_MODEL")
            .map_err(|_| OracleError::Config("FORGE_LLM_MODEL is not set".into()))?;
        let mut config = RemoteConfig::new(&url, &model);
        config.api_key = std::env::var("FORGE_LLM_KEY").ok();
        Ok(config)
    }
}

pub enum OracleBackend {
    Deterministic,
    Remote(RemoteBackend),
}

impl OracleBackend {
    pub fn deterministic() -> Self {
        OracleBackend::Deterministic
    }

    pub fn remote(config: RemoteConfig) -> Self {
        OracleBackend::Remote(RemoteBackend::new(config))
    }
}

/// Everything observable about one oracle call.
#[derive(Debug, Clone, Serialize)]
pub struct OracleTranscript {
    pub signature_name: String,
    pub rendered_prompt: String,
    pub raw_response: String,
    /// Present exactly when validation succeeded on some attempt.
    pub parsed_output: Option<Value>,
    pub failure_reason: Option<String>,
    pub attempt_count: u32,
}

/// Receives transcripts as a pipeline produces them; trace files are written
/// by wiring one of these in.
pub type TranscriptSink<'a> = &'a mut dyn FnMut(OracleTranscript);

/// Deterministic prompt assembly: instruction, then few-shot pairs in order,
/// then the input, then the output shape.
pub fn render_prompt(signature: &OracleSignature, input: &Value) -> String {
    let mut prompt = String::new();
    prompt.push_str(&signature.instruction);
    prompt.push('\n');
    for (i, (example_in, example_out)) in signature.few_shot.iter().enumerate() {
        prompt.push_str(&format!(
            "\nExample {n} input:\n{input}\nExample {n} output:\n{output}\n",
            n = i + 1,
            input = example_in,
            output = example_out,
        ));
    }
    prompt.push_str("\nTask input fields:\n");
    for (name, description) in &signature.input_fields {
        prompt.push_str(&format!("- {name}: {description}\n"));
    }
    prompt.push_str(&format!("\nTask input:\n{input}\n"));
    prompt.push_str(&format!(
        "\nRespond with exactly one JSON object of this shape:\n{}\n",
        signature.output_schema.describe()
    ));
    prompt
}

/// Run one oracle call. The returned value always validates against the
/// signature's output schema.
pub fn invoke(
    signature: &OracleSignature,
    input: &Value,
    backend: &OracleBackend,
) -> Result<(Value, OracleTranscript), OracleError> {
    signature.check_input(input)?;
    let rendered_prompt = render_prompt(signature, input);
    match backend {
        OracleBackend::Deterministic => {
            let output = rules::apply(signature, input)?;
            let raw_response = output.to_string();
            if let Err(reason) = signature.output_schema.validate(&output) {
                // A rule emitting an invalid value is a bug in the rule; the
                // deterministic backend never retries.
                return Err(OracleError::Validation {
                    reason: reason.clone(),
                    transcript: Box::new(OracleTranscript {
                        signature_name: signature.name.clone(),
                        rendered_prompt,
                        raw_response,
                        parsed_output: None,
                        failure_reason: Some(reason),
                        attempt_count: 1,
                    }),
                });
            }
            let transcript = OracleTranscript {
                signature_name: signature.name.clone(),
                rendered_prompt,
                raw_response,
                parsed_output: Some(output.clone()),
                failure_reason: None,
                attempt_count: 1,
            };
            Ok((output, transcript))
        }
        OracleBackend::Remote(remote) => remote.invoke(signature, &rendered_prompt),
    }
}

/// `invoke`, handing the transcript to `sink` instead of returning it. A
/// validation failure's transcript is sunk too, so traces keep the evidence
/// of a misbehaving backend.
pub fn invoke_with(
    signature: &OracleSignature,
    input: &Value,
    backend: &OracleBackend,
    sink: TranscriptSink,
) -> Result<Value, OracleError> {
    match invoke(signature, input, backend) {
        Ok((value, transcript)) => {
            sink(transcript);
            Ok(value)
        }
        Err(error) => {
            if let OracleError::Validation { transcript, .. } = &error {
                sink((**transcript).clone());
            }
            Err(error)
        }
    }
}

fn mapper_output_schema() -> Schema {
    Schema::object([
        ("state_name", Schema::Str),
        ("value_map", Schema::map(Schema::Int)),
        ("scale", Schema::Num),
        ("offset", Schema::Num),
        ("unmatched", Schema::array(Schema::Str)),
    ])
}

fn fuzzer_output_schema() -> Schema {
    Schema::object([(
        "pairs",
        Schema::array(Schema::object([
            ("label", Schema::Str),
            ("value", Schema::Num),
            ("code", Schema::Int),
        ])),
    )])
}

fn synthesizer_output_schema() -> Schema {
    Schema::object([
        ("status_signal", Schema::Str),
        ("request_signal", Schema::Str),
        ("decode_table", Schema::map(Schema::Str)),
        ("scale", Schema::Num),
        ("offset", Schema::Num),
    ])
}

pub fn mapper_signature(prompts: &Prompts) -> OracleSignature {
    let few_shot = vec![(
        json!({
            "property": {
                "name": "acMode",
                "kind": "enum",
                "labels": ["OFF", "STANDARD", "ECO"],
                "unit": "",
                "description": "Cabin air conditioning operating mode."
            },
            "candidates": [{
                "name": "ACState",
                "shape": "coded",
                "labels": [["OFF", 0], ["STANDARD", 1], ["ECO", 2]],
                "unit": "",
                "scale": 1.0,
                "offset": 0.0,
                "source_text": "enum ACState { OFF=0, STANDARD=1, ECO=2 }"
            }]
        }),
        json!({
            "state_name": "ACState",
            "value_map": {"OFF": 0, "STANDARD": 1, "ECO": 2},
            "scale": 1.0,
            "offset": 0.0,
            "unmatched": []
        }),
    )];
    OracleSignature::new(
        SIG_MAPPER,
        prompts.instruction(SIG_MAPPER),
        &[
            ("property", "the REST property definition"),
            ("candidates", "shortlisted state definitions, best overlap first"),
        ],
        mapper_output_schema(),
        few_shot,
    )
    .expect("mapper signature is well-formed")
}

pub fn fuzzer_signature(prompts: &Prompts) -> OracleSignature {
    let few_shot = vec![(
        json!({
            "property_name": "acMode",
            "kind": "table",
            "value_map": {"OFF": 0, "STANDARD": 1, "ECO": 2},
            "scale": 1.0,
            "offset": 0.0,
            "min": 0.0,
            "max": 0.0,
            "n_cases": 1
        }),
        json!({"pairs": [{"label": "STANDARD", "value": 0.0, "code": 1}]}),
    )];
    OracleSignature::new(
        SIG_FUZZER,
        prompts.instruction(SIG_FUZZER),
        &[
            ("property_name", "property under test"),
            ("kind", "\"table\" or \"linear\""),
            ("value_map", "label to code map (table kind)"),
            ("scale", "linear transform scale"),
            ("offset", "linear transform offset"),
            ("min", "lowest allowed physical value"),
            ("max", "highest allowed physical value"),
            ("n_cases", "number of pairs wanted"),
        ],
        fuzzer_output_schema(),
        few_shot,
    )
    .expect("fuzzer signature is well-formed")
}

pub fn synthesizer_signature(prompts: &Prompts) -> OracleSignature {
    let few_shot = vec![(
        json!({
            "property_name": "acMode",
            "state_name": "ACState",
            "access": "read-write",
            "kind": "table",
            "value_map": {"OFF": 0, "STANDARD": 1, "ECO": 2},
            "scale": 1.0,
            "offset": 0.0,
            "slate": [
                {"doc_id": "APIACModeStatus", "direction": "status", "score": 0.82},
                {"doc_id": "APIACModeRqst", "direction": "request", "score": 0.80}
            ]
        }),
        json!({
            "status_signal": "APIACModeStatus",
            "request_signal": "APIACModeRqst",
            "decode_table": {"0": "OFF", "1": "STANDARD", "2": "ECO"},
            "scale": 1.0,
            "offset": 0.0
        }),
    )];
    OracleSignature::new(
        SIG_SYNTHESIZER,
        prompts.instruction(SIG_SYNTHESIZER),
        &[
            ("property_name", "property being bound"),
            ("state_name", "governing state"),
            ("access", "\"read-only\" or \"read-write\""),
            ("kind", "\"table\" or \"linear\""),
            ("value_map", "label to code map (table kind)"),
            ("scale", "linear transform scale"),
            ("offset", "linear transform offset"),
            ("slate", "retrieval slate entries (doc_id, direction, score)"),
        ],
        synthesizer_output_schema(),
        few_shot,
    )
    .expect("synthesizer signature is well-formed")
}

/// Signature whose only job is to produce a value of the given schema; the
/// deterministic rule answers with the schema's default instance. Used to
/// fuzz schema safety.
pub fn echo_signature(output_schema: Schema) -> OracleSignature {
    OracleSignature::new(
        SIG_ECHO,
        "Return one JSON object matching the requested shape.",
        &[("seed", "opaque")],
        output_schema,
        Vec::new(),
    )
    .expect("echo signature is well-formed")
}
