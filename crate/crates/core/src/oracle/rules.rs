//! The deterministic backend: rule implementations of the shipped
//! signatures. Each rule does literally what the corresponding instruction
//! asks a model to do, which is what makes ground truth recoverable on
//! noise-free corpora.

use serde_json::{json, Map, Value};

use crate::model::normalize_label;

use super::{OracleError, OracleSignature, SIG_ECHO, SIG_FUZZER, SIG_MAPPER, SIG_SYNTHESIZER};

pub(super) fn apply(signature: &OracleSignature, input: &Value) -> Result<Value, OracleError> {
    match signature.name.as_str() {
        SIG_MAPPER => Ok(mapper(input)),
        SIG_FUZZER => Ok(fuzzer(input)),
        SIG_SYNTHESIZER => Ok(synthesizer(input)),
        SIG_ECHO => Ok(signature.output_schema.default_instance()),
        other => Err(OracleError::UnsupportedSignature(other.to_string())),
    }
}

fn str_of<'v>(value: &'v Value, key: &str) -> &'v str {
    value.get(key).and_then(Value::as_str).unwrap_or("")
}

fn num_of(value: &Value, key: &str) -> f64 {
    value.get(key).and_then(Value::as_f64).unwrap_or(0.0)
}

/// Pick the candidate state whose labels match the most property labels
/// (shape match counts for scalars); ties go to the earlier candidate, which
/// callers order by token overlap.
fn mapper(input: &Value) -> Value {
    let property = &input["property"];
    let kind = str_of(property, "kind");
    let labels: Vec<String> = property["labels"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let empty = Vec::new();
    let candidates = input["candidates"].as_array().unwrap_or(&empty);

    let mut best: Option<(usize, usize)> = None; // (score, candidate index)
    for (idx, candidate) in candidates.iter().enumerate() {
        let shape = str_of(candidate, "shape");
        let score = if kind == "number" {
            usize::from(shape == "scalar")
        } else if shape == "coded" {
            let state_labels = coded_labels(candidate);
            labels
                .iter()
                .filter(|l| state_labels.iter().any(|(s, _)| s == *l))
                .count()
        } else {
            0
        };
        let better = match best {
            None => true,
            Some((best_score, _)) => score > best_score,
        };
        if better {
            best = Some((score, idx));
        }
    }

    let Some((_, idx)) = best else {
        return json!({
            "state_name": "", "value_map": {}, "scale": 1.0, "offset": 0.0,
            "unmatched": labels
        });
    };
    let chosen = &candidates[idx];

    if kind == "number" {
        return json!({
            "state_name": str_of(chosen, "name"),
            "value_map": {},
            "scale": num_of(chosen, "scale"),
            "offset": num_of(chosen, "offset"),
            "unmatched": []
        });
    }

    let state_labels = coded_labels(chosen);
    let mut value_map = Map::new();
    let mut unmatched = Vec::new();
    for label in &labels {
        let normalized = normalize_label(label);
        match state_labels
            .iter()
            .find(|(s, _)| normalize_label(s) == normalized)
        {
            Some((_, code)) => {
                value_map.insert(label.clone(), Value::from(*code));
            }
            None => unmatched.push(Value::String(label.clone())),
        }
    }
    json!({
        "state_name": str_of(chosen, "name"),
        "value_map": value_map,
        "scale": 1.0,
        "offset": 0.0,
        "unmatched": unmatched
    })
}

fn coded_labels(candidate: &Value) -> Vec<(String, u64)> {
    candidate["labels"]
        .as_array()
        .map(|pairs| {
            pairs
                .iter()
                .filter_map(|pair| {
                    let label = pair.get(0)?.as_str()?;
                    let code = pair.get(1)?.as_u64()?;
                    Some((label.to_string(), code))
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Table kind: the pair with the smallest non-zero code first (a zero write
/// usually means "off" and would be indistinguishable from the initial
/// state), then remaining pairs in ascending label order. Linear kind: an
/// evenly spaced grid over [min, max], snapped onto the raw-code lattice.
fn fuzzer(input: &Value) -> Value {
    let n_cases = input["n_cases"].as_u64().unwrap_or(0) as usize;
    if str_of(input, "kind") == "table" {
        let empty = Map::new();
        let value_map = input["value_map"].as_object().unwrap_or(&empty);
        let mut entries: Vec<(String, u64)> = value_map
            .iter()
            .filter_map(|(label, code)| Some((label.clone(), code.as_u64()?)))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let first = entries
            .iter()
            .filter(|(_, code)| *code != 0)
            .min_by_key(|(_, code)| *code)
            .or_else(|| entries.first())
            .cloned();
        let mut pairs = Vec::new();
        if let Some(first) = first {
            pairs.push(first.clone());
            for entry in entries {
                if entry != first {
                    pairs.push(entry);
                }
            }
        }
        pairs.truncate(n_cases);
        let rendered: Vec<Value> = pairs
            .into_iter()
            .map(|(label, code)| json!({"label": label, "value": 0.0, "code": code}))
            .collect();
        return json!({ "pairs": rendered });
    }

    let scale = num_of(input, "scale");
    let offset = num_of(input, "offset");
    let min = num_of(input, "min");
    let max = num_of(input, "max");
    let mut pairs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    if scale != 0.0 && n_cases > 0 {
        let raw_lo = ((min - offset) / scale).ceil().max(0.0) as i64;
        let raw_hi = ((max - offset) / scale).floor() as i64;
        for i in 1..=n_cases as i64 {
            let phys = min + (max - min) * i as f64 / (n_cases as f64 + 1.0);
            let raw = (((phys - offset) / scale).round() as i64).clamp(raw_lo, raw_hi.max(raw_lo));
            if raw < 0 || !seen.insert(raw) {
                continue;
            }
            // Recomputing the physical value from the snapped raw keeps the
            // pair exact under the decode arithmetic.
            let value = raw as f64 * scale + offset;
            pairs.push(json!({"label": "", "value": value, "code": raw}));
        }
    }
    json!({ "pairs": pairs })
}

/// Bind the best-scoring slate signal per direction; empty string marks an
/// absent role. Tables are the inverse of the mapping's value_map.
fn synthesizer(input: &Value) -> Value {
    let empty = Vec::new();
    let slate = input["slate"].as_array().unwrap_or(&empty);
    let pick = |direction: &str| -> String {
        slate
            .iter()
            .find(|entry| str_of(entry, "direction") == direction)
            .map(|entry| str_of(entry, "doc_id").to_string())
            .unwrap_or_default()
    };
    let status_signal = pick("status");
    let request_signal = if str_of(input, "access") == "read-write" {
        pick("request")
    } else {
        String::new()
    };

    let mut decode_table = Map::new();
    if str_of(input, "kind") == "table" {
        if let Some(value_map) = input["value_map"].as_object() {
            for (label, code) in value_map {
                if let Some(code) = code.as_u64() {
                    decode_table.insert(code.to_string(), Value::String(label.clone()));
                }
            }
        }
    }
    json!({
        "status_signal": status_signal,
        "request_signal": request_signal,
        "decode_table": decode_table,
        "scale": num_of(input, "scale"),
        "offset": num_of(input, "offset"),
    })
}
