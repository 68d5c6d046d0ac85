//! Signal registry handling. The registry is JSON Lines, one signal per
//! line; blank lines are ignored.

use serde::{Deserialize, Serialize};

use super::{ModelError, SignalDef, SignalDirection, SignalEncoding};

#[derive(Serialize, Deserialize)]
struct SignalRecord {
    name: String,
    direction: String,
    width_bits: u8,
    encoding: EncodingRecord,
    description: String,
}

#[derive(Serialize, Deserialize)]
struct EncodingRecord {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
}

pub fn parse_signal_registry(text: &str) -> Result<Vec<SignalDef>, ModelError> {
    let mut signals = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let record: SignalRecord = serde_json::from_str(raw_line).map_err(|e| {
            ModelError::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let signal = from_record(record, line)?;
        if !seen.insert(signal.name.clone()) {
            return Err(ModelError::Validation(format!(
                "duplicate signal name '{}'",
                signal.name
            )));
        }
        signals.push(signal);
    }
    Ok(signals)
}

fn from_record(record: SignalRecord, line: usize) -> Result<SignalDef, ModelError> {
    let direction = match record.direction.as_str() {
        "status" => SignalDirection::Status,
        "request" => SignalDirection::Request,
        other => {
            return Err(ModelError::Parse {
                line,
                msg: format!("unknown direction '{other}' (expected status or request)"),
            })
        }
    };
    let encoding = match record.encoding.kind.as_str() {
        "raw" => SignalEncoding::RawCode,
        "linear" => {
            let scale = record.encoding.scale.ok_or_else(|| ModelError::Parse {
                line,
                msg: format!("linear encoding of '{}' requires scale", record.name),
            })?;
            if scale == 0.0 || !scale.is_finite() {
                return Err(ModelError::Parse {
                    line,
                    msg: format!("signal '{}' has invalid scale {scale}", record.name),
                });
            }
            let offset = record.encoding.offset.unwrap_or(0.0);
            if !offset.is_finite() {
                return Err(ModelError::Parse {
                    line,
                    msg: format!("signal '{}' has non-finite offset", record.name),
                });
            }
            SignalEncoding::Linear { scale, offset }
        }
        other => {
            return Err(ModelError::Parse {
                line,
                msg: format!("unknown encoding kind '{other}' (expected raw or linear)"),
            })
        }
    };
    if record.width_bits == 0 || record.width_bits > 64 {
        return Err(ModelError::Parse {
            line,
            msg: format!(
                "signal '{}' has width {} outside 1..=64",
                record.name, record.width_bits
            ),
        });
    }
    if record.name.is_empty() {
        return Err(ModelError::Parse {
            line,
            msg: "signal name must be non-empty".to_string(),
        });
    }
    Ok(SignalDef {
        doc_id: record.name.clone(),
        name: record.name,
        direction,
        width_bits: record.width_bits,
        encoding,
        description: record.description,
    })
}

pub fn serialize_signal_registry(signals: &[SignalDef]) -> String {
    let mut out = String::new();
    for signal in signals {
        let (kind, scale, offset) = match signal.encoding {
            SignalEncoding::RawCode => ("raw", None, None),
            SignalEncoding::Linear { scale, offset } => ("linear", Some(scale), Some(offset)),
        };
        let record = SignalRecord {
            name: signal.name.clone(),
            direction: signal.direction.keyword().to_string(),
            width_bits: signal.width_bits,
            encoding: EncodingRecord {
                kind: kind.to_string(),
                scale,
                offset,
            },
            description: signal.description.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    out
}
