//! OpenAPI-subset document handling. The subset keeps exactly what the
//! pipelines consume: one property object per path plus which of get/put the
//! path declares.

use serde_json::{Map, Value};

use super::{is_camel_ident, normalize_label, Access, ModelError, PropertyDef, PropertyKind};

/// Parse a document into property definitions in document order.
///
/// Access is derived from the declared methods: get only is read-only, get
/// plus put is read-write. Put without get is rejected because a write-only
/// property cannot be confirmed through its own endpoint.
pub fn parse_openapi(document_text: &str) -> Result<Vec<PropertyDef>, ModelError> {
    let root: Value = serde_json::from_str(document_text).map_err(|e| ModelError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let root = root
        .as_object()
        .ok_or_else(|| ModelError::validation("document root must be a JSON object"))?;
    let paths = root
        .get("paths")
        .ok_or_else(|| ModelError::validation("document has no \"paths\" object"))?
        .as_object()
        .ok_or_else(|| ModelError::validation("\"paths\" must be a JSON object"))?;

    let mut defs = Vec::with_capacity(paths.len());
    let mut seen_names = std::collections::BTreeSet::new();
    for (path, item) in paths {
        let item = item.as_object().ok_or_else(|| {
            ModelError::Validation(format!("path '{path}' must map to a JSON object"))
        })?;
        let def = parse_path_item(path, item)?;
        if !seen_names.insert(def.name.clone()) {
            return Err(ModelError::Validation(format!(
                "duplicate property name '{}'",
                def.name
            )));
        }
        def.validate()?;
        defs.push(def);
    }
    Ok(defs)
}

fn parse_path_item(path: &str, item: &Map<String, Value>) -> Result<PropertyDef, ModelError> {
    let has_get = item.contains_key("get");
    let has_put = item.contains_key("put");
    let prop = item
        .get("property")
        .ok_or_else(|| ModelError::Validation(format!("path '{path}' has no property object")))?
        .as_object()
        .ok_or_else(|| {
            ModelError::Validation(format!("property of path '{path}' must be a JSON object"))
        })?;

    let name = require_str(prop, "name", path)?;
    if !is_camel_ident(&name) {
        return Err(ModelError::Validation(format!(
            "property name '{name}' is not a camelCase identifier"
        )));
    }

    let access = match (has_get, has_put) {
        (true, false) => Access::ReadOnly,
        (true, true) => Access::ReadWrite,
        (false, true) => {
            return Err(ModelError::Validation(format!(
                "write-only property '{name}' is unsupported: put requires get"
            )))
        }
        (false, false) => {
            return Err(ModelError::Validation(format!(
                "property '{name}' declares neither get nor put"
            )))
        }
    };

    let kind = match require_str(prop, "type", path)?.as_str() {
        "enum" => {
            let values = prop
                .get("values")
                .ok_or_else(|| {
                    ModelError::Validation(format!("enum property '{name}' has no values array"))
                })?
                .as_array()
                .ok_or_else(|| {
                    ModelError::Validation(format!("values of property '{name}' must be an array"))
                })?;
            let mut labels = Vec::with_capacity(values.len());
            for v in values {
                let raw = v.as_str().ok_or_else(|| {
                    ModelError::Validation(format!(
                        "values of property '{name}' must be strings"
                    ))
                })?;
                labels.push(normalize_label(raw));
            }
            PropertyKind::Enum { labels }
        }
        "number" => PropertyKind::Number {
            unit: optional_str(prop, "unit", path)?.unwrap_or_default(),
            min: require_num(prop, "min", &name)?,
            max: require_num(prop, "max", &name)?,
        },
        "boolean" => PropertyKind::Boolean,
        other => {
            return Err(ModelError::Validation(format!(
                "property '{name}' has unknown type '{other}'"
            )))
        }
    };

    Ok(PropertyDef {
        name,
        kind,
        access,
        description: optional_str(prop, "description", path)?.unwrap_or_default(),
        endpoint_path: path.to_string(),
    })
}

fn require_str(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String, ModelError> {
    optional_str(obj, key, path)?
        .ok_or_else(|| ModelError::Validation(format!("path '{path}' is missing \"{key}\"")))
}

fn optional_str(
    obj: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Option<String>, ModelError> {
    match obj.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ModelError::Validation(format!(
            "\"{key}\" of path '{path}' must be a string"
        ))),
    }
}

fn require_num(obj: &Map<String, Value>, key: &str, name: &str) -> Result<f64, ModelError> {
    obj.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| {
            ModelError::Validation(format!(
                "number property '{name}' is missing numeric \"{key}\""
            ))
        })
}

/// Render property definitions back to document text. Paths appear in slice
/// order, so parse followed by serialize is identity on the subset.
pub fn serialize_openapi(properties: &[PropertyDef]) -> String {
    let mut paths = Map::new();
    for def in properties {
        let mut prop = Map::new();
        prop.insert("name".into(), Value::String(def.name.clone()));
        match &def.kind {
            PropertyKind::Enum { labels } => {
                prop.insert("type".into(), Value::String("enum".into()));
                prop.insert(
                    "values".into(),
                    Value::Array(labels.iter().map(|l| Value::String(l.clone())).collect()),
                );
            }
            PropertyKind::Number { unit, min, max } => {
                prop.insert("type".into(), Value::String("number".into()));
                prop.insert("unit".into(), Value::String(unit.clone()));
                prop.insert("min".into(), json_num(*min));
                prop.insert("max".into(), json_num(*max));
            }
            PropertyKind::Boolean => {
                prop.insert("type".into(), Value::String("boolean".into()));
            }
        }
        prop.insert(
            "description".into(),
            Value::String(def.description.clone()),
        );

        let mut item = Map::new();
        item.insert("get".into(), Value::Object(Map::new()));
        if def.access == Access::ReadWrite {
            item.insert("put".into(), Value::Object(Map::new()));
        }
        item.insert("property".into(), Value::Object(prop));
        paths.insert(def.endpoint_path.clone(), Value::Object(item));
    }
    let mut root = Map::new();
    root.insert("paths".into(), Value::Object(paths));
    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("maps serialize");
    text.push('\n');
    text
}

fn json_num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).expect("finite numbers only")
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLIMATE_DOC: &str = r#"{
      "paths": {
        "/climate": {
          "get": {},
          "put": {},
          "property": {
            "name": "acMode",
            "type": "enum",
            "values": ["OFF", "STANDARD", "ECO"],
            "description": "Cabin air conditioning operating mode."
          }
        },
        "/speed": {
          "get": {},
          "property": {
            "name": "speed",
            "type": "number",
            "unit": "km/h",
            "min": 0,
            "max": 300,
            "description": "Current vehicle speed."
          }
        }
      }
    }"#;

    #[test]
    fn parses_access_from_methods() {
        let defs = parse_openapi(CLIMATE_DOC).unwrap();
        assert_eq!(defs.len(), 2);
        assert_eq!(defs[0].name, "acMode");
        assert_eq!(defs[0].access, Access::ReadWrite);
        assert_eq!(defs[0].endpoint_path, "/climate");
        assert_eq!(
            defs[0].kind,
            PropertyKind::Enum {
                labels: vec!["OFF".into(), "STANDARD".into(), "ECO".into()]
            }
        );
        assert_eq!(defs[1].name, "speed");
        assert_eq!(defs[1].access, Access::ReadOnly);
        match &defs[1].kind {
            PropertyKind::Number { unit, min, max } => {
                assert_eq!(unit, "km/h");
                assert_eq!(*min, 0.0);
                assert_eq!(*max, 300.0);
            }
            other => panic!("expected number kind, got {other:?}"),
        }
    }

    #[test]
    fn empty_paths_is_empty_list() {
        let defs = parse_openapi(r#"{"paths": {}}"#).unwrap();
        assert!(defs.is_empty());
    }

    #[test]
    fn values_are_normalized() {
        let doc = r#"{"paths":{"/x":{"get":{},"property":{
            "name":"x","type":"enum","values":["eco-mode","Standard"]}}}}"#;
        let defs = parse_openapi(doc).unwrap();
        assert_eq!(
            defs[0].kind,
            PropertyKind::Enum {
                labels: vec!["ECOMODE".into(), "STANDARD".into()]
            }
        );
    }

    #[test]
    fn write_only_is_rejected() {
        let doc = r#"{"paths":{"/x":{"put":{},"property":{
            "name":"x","type":"boolean"}}}}"#;
        let err = parse_openapi(doc).unwrap_err();
        assert!(err.to_string().contains("write-only"), "{err}");
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let doc = r#"{"paths":{
            "/a":{"get":{},"property":{"name":"x","type":"boolean"}},
            "/b":{"get":{},"property":{"name":"x","type":"boolean"}}}}"#;
        assert!(parse_openapi(doc).is_err());
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_openapi("{\n  \"paths\": {\n").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert!(line >= 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn round_trip_preserves_document_order_and_content() {
        let defs = parse_openapi(CLIMATE_DOC).unwrap();
        let text = serialize_openapi(&defs);
        let again = parse_openapi(&text).unwrap();
        assert_eq!(defs, again);
        let first = text.find("/climate").unwrap();
        let second = text.find("/speed").unwrap();
        assert!(first < second, "document order must be preserved");
    }
}
