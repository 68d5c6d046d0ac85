//! Minimal structured-output schema: closed objects, uniform maps, arrays,
//! and four leaf types. Closed means objects accept exactly their declared
//! keys, nothing more, nothing missing.

use std::collections::BTreeMap;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    /// Closed object: exactly these keys.
    Object(BTreeMap<String, Schema>),
    /// Arbitrary string keys, uniform value schema.
    Map(Box<Schema>),
    Array(Box<Schema>),
    Str,
    Int,
    Num,
    Bool,
}

impl Schema {
    pub fn object<const N: usize>(fields: [(&str, Schema); N]) -> Schema {
        Schema::Object(
            fields
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }

    pub fn map(values: Schema) -> Schema {
        Schema::Map(Box::new(values))
    }

    pub fn array(items: Schema) -> Schema {
        Schema::Array(Box::new(items))
    }

    pub fn validate(&self, value: &Value) -> Result<(), String> {
        self.validate_at(value, "$")
    }

    fn validate_at(&self, value: &Value, path: &str) -> Result<(), String> {
        match self {
            Schema::Object(fields) => {
                let obj = value
                    .as_object()
                    .ok_or_else(|| format!("{path}: expected object"))?;
                for key in obj.keys() {
                    if !fields.contains_key(key) {
                        return Err(format!("{path}: unknown key \"{key}\""));
                    }
                }
                for (key, schema) in fields {
                    let child = obj
                        .get(key)
                        .ok_or_else(|| format!("{path}: missing key \"{key}\""))?;
                    schema.validate_at(child, &format!("{path}.{key}"))?;
                }
                Ok(())
            }
            Schema::Map(values) => {
                let obj = value
                    .as_object()
                    .ok_or_else(|| format!("{path}: expected object"))?;
                for (key, child) in obj {
                    values.validate_at(child, &format!("{path}.{key}"))?;
                }
                Ok(())
            }
            Schema::Array(items) => {
                let arr = value
                    .as_array()
                    .ok_or_else(|| format!("{path}: expected array"))?;
                for (i, child) in arr.iter().enumerate() {
                    items.validate_at(child, &format!("{path}[{i}]"))?;
                }
                Ok(())
            }
            Schema::Str => value
                .is_string()
                .then_some(())
                .ok_or_else(|| format!("{path}: expected string")),
            Schema::Int => (value.is_i64() || value.is_u64())
                .then_some(())
                .ok_or_else(|| format!("{path}: expected integer")),
            Schema::Num => value
                .is_number()
                .then_some(())
                .ok_or_else(|| format!("{path}: expected number")),
            Schema::Bool => value
                .is_boolean()
                .then_some(())
                .ok_or_else(|| format!("{path}: expected boolean")),
        }
    }

    /// One-line shape description for prompts.
    pub fn describe(&self) -> String {
        match self {
            Schema::Object(fields) => {
                let inner: Vec<String> = fields
                    .iter()
                    .map(|(k, v)| format!("\"{k}\": {}", v.describe()))
                    .collect();
                format!("{{{}}}", inner.join(", "))
            }
            Schema::Map(values) => format!("{{\"<key>\": {}, ...}}", values.describe()),
            Schema::Array(items) => format!("[{}, ...]", items.describe()),
            Schema::Str => "<string>".to_string(),
            Schema::Int => "<integer>".to_string(),
            Schema::Num => "<number>".to_string(),
            Schema::Bool => "<boolean>".to_string(),
        }
    }

    /// The canonical trivially-valid instance.
    pub fn default_instance(&self) -> Value {
        match self {
            Schema::Object(fields) => Value::Object(
                fields
                    .iter()
                    .map(|(k, v)| (k.clone(), v.default_instance()))
                    .collect(),
            ),
            Schema::Map(_) => Value::Object(serde_json::Map::new()),
            Schema::Array(_) => Value::Array(Vec::new()),
            Schema::Str => Value::String(String::new()),
            Schema::Int => Value::from(0),
            Schema::Num => Value::from(0.0),
            Schema::Bool => Value::Bool(false),
        }
    }
}
