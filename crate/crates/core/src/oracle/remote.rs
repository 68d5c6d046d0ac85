//! Remote chat-completions backend. POSTs a messages array, reads the first
//! choice's content as a JSON object, and re-prompts with the validation
//! error when the model's answer fails the output schema.

use std::sync::{Condvar, Mutex};

use serde_json::{json, Value};

use super::{OracleError, OracleSignature, OracleTranscript, RemoteConfig};

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build();
        RemoteBackend {
            gate: Gate::new(config.in_flight_limit),
            agent: agent_config.into(),
            config,
        }
    }

    pub(super) fn invoke(
        &self,
        signature: &OracleSignature,
        rendered_prompt: &str,
    ) -> Result<(Value, OracleTranscript), OracleError> {
        let _slot = self.gate.acquire();
        let mut messages = vec![
            json!({
                "role": "system",
                "content": "You translate structured inputs into structured outputs. \
                            Reply with exactly one JSON object and nothing else."
            }),
            json!({"role": "user", "content": rendered_prompt}),
        ];
        let attempts = 1 + self.config.max_retries;
        let mut raw_response = String::new();
        let mut failure = String::new();
        for attempt in 1..=attempts {
            raw_response = self.post_chat(&messages)?;
            match parse_object(&raw_response).and_then(|value| {
                signature
                    .output_schema
                    .validate(&value)
                    .map(|()| value)
                    .map_err(|e| format!("schema violation: {e}"))
            }) {
                Ok(value) => {
                    let transcript = OracleTranscript {
                        signature_name: signature.name.clone(),
                        rendered_prompt: rendered_prompt.to_string(),
                        raw_response,
                        parsed_output: Some(value.clone()),
                        failure_reason: None,
                        attempt_count: attempt,
                    };
                    return Ok((value, transcript));
                }
                Err(reason) => {
                    failure = reason;
                    messages.push(json!({"role": "assistant", "content": raw_response}));
                    messages.push(json!({
                        "role": "user",
                        "content": format!(
                            "Your previous reply was rejected: {failure}. \
                             Reply again with exactly one JSON object of this shape:\n{}",
                            signature.output_schema.describe()
                        )
                    }));
                }
            }
        }
        Err(OracleError::Validation {
            reason: failure.clone(),
            transcript: Box::new(OracleTranscript {
                signature_name: signature.name.clone(),
                rendered_prompt: rendered_prompt.to_string(),
                raw_response,
                parsed_output: None,
                failure_reason: Some(failure),
                attempt_count: attempts,
            }),
        })
    }

    fn post_chat(&self, messages: &[Value]) -> Result<String, OracleError> {
        let body = json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "response_format": {"type": "json_object"},
            "messages": messages,
        });
        let mut request = self
            .agent
            .post(&self.config.endpoint_url)
            .header("content-type", "application/json");
        if let Some(key) = &self.config.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        let payload: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Transport(format!("unreadable response body: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                OracleError::Transport(
                    "response has no choices[0].message.content string".to_string(),
                )
            })
    }
}

/// Parse a response as one JSON object, tolerating a Markdown code fence.
fn parse_object(raw: &str) -> Result<Value, String> {
    let trimmed = raw.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|rest| rest.strip_suffix("```"))
        .unwrap_or(trimmed);
    let value: Value =
        serde_json::from_str(unfenced.trim()).map_err(|e| format!("not valid JSON: {e}"))?;
    if value.is_object() {
        Ok(value)
    } else {
        Err("top-level value is not an object".to_string())
    }
}

/// Counting gate bounding concurrent remote calls.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn new(limit: usize) -> Self {
        Gate {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            limit: limit.max(1),
        }
    }

    fn acquire(&self) -> GateSlot<'_> {
        let mut count = self.in_flight.lock().unwrap();
        while *count >= self.limit {
            count = self.freed.wait(count).unwrap();
        }
        *count += 1;
        GateSlot { gate: self }
    }
}

struct GateSlot<'a> {
    gate: &'a Gate,
}

impl Drop for GateSlot<'_> {
    fn drop(&mut self) {
        let mut count = self.gate.in_flight.lock().unwrap();
        *count -= 1;
        self.gate.freed.notify_one();
    }
}
