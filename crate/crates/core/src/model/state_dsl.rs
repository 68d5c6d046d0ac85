//! Parser for the state-definition DSL.
//!
//! Grammar, one declaration per entry, `//` comments run to end of line:
//!
//! ```text
//! enum <Name> { LABEL[=<int>], ... }
//! scalar <Name> unit=<token> scale=<float> offset=<float>
//! ```
//!
//! Omitted enum codes auto-increment from the previous entry, starting at 0.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{is_pascal_ident, normalize_label, CodedEntry, ModelError, StateDef, StateShape};

pub fn parse_states(source_text: &str) -> Result<Vec<StateDef>, ModelError> {
    let mut cur = Cursor::new(source_text);
    let mut states: Vec<StateDef> = Vec::new();
    let mut seen = BTreeSet::new();
    loop {
        cur.skip_trivia();
        if cur.at_end() {
            break;
        }
        let start = cur.pos;
        let keyword = cur.ident("declaration keyword")?;
        let state = match keyword.as_str() {
            "enum" => parse_enum(&mut cur, source_text, start)?,
            "scalar" => parse_scalar(&mut cur, source_text, start)?,
            other => {
                return Err(cur.error(format!("expected 'enum' or 'scalar', found '{other}'")))
            }
        };
        if !seen.insert(state.name.clone()) {
            return Err(cur.error(format!("duplicate state name '{}'", state.name)));
        }
        states.push(state);
    }
    Ok(states)
}

fn parse_enum(cur: &mut Cursor, src: &str, start: usize) -> Result<StateDef, ModelError> {
    let name = state_name(cur)?;
    cur.skip_trivia();
    cur.expect('{')?;
    let mut entries: Vec<CodedEntry> = Vec::new();
    let mut labels = BTreeSet::new();
    let mut codes = BTreeSet::new();
    loop {
        cur.skip_trivia();
        if cur.eat('}') {
            break;
        }
        let label = cur.ident("enum label")?;
        cur.skip_trivia();
        let code = if cur.eat('=') {
            cur.skip_trivia();
            cur.integer()?
        } else {
            match entries.last() {
                Some(prev) => prev.code.checked_add(1).ok_or_else(|| {
                    cur.error(format!("code overflow after label '{}'", label))
                })?,
                None => 0,
            }
        };
        if !labels.insert(normalize_label(&label)) {
            return Err(cur.error(format!("duplicate label '{label}' in enum '{name}'")));
        }
        if !codes.insert(code) {
            return Err(cur.error(format!("duplicate code {code} in enum '{name}'")));
        }
        entries.push(CodedEntry { label, code });
        cur.skip_trivia();
        if cur.eat(',') {
            continue;
        }
        cur.expect('}')?;
        break;
    }
    if entries.is_empty() {
        return Err(cur.error(format!("enum '{name}' declares no labels")));
    }
    Ok(StateDef {
        name,
        shape: StateShape::Coded { entries },
        source_text: src[start..cur.pos].to_string(),
    })
}

fn parse_scalar(cur: &mut Cursor, src: &str, start: usize) -> Result<StateDef, ModelError> {
    let name = state_name(cur)?;
    let unit = cur.key_value("unit")?;
    let scale_token = cur.key_value("scale")?;
    let scale = parse_float(cur, "scale", &scale_token)?;
    let offset_token = cur.key_value("offset")?;
    let offset = parse_float(cur, "offset", &offset_token)?;
    if scale == 0.0 {
        return Err(cur.error(format!("scalar '{name}' declares scale=0")));
    }
    Ok(StateDef {
        name,
        shape: StateShape::Scalar { unit, scale, offset },
        source_text: src[start..cur.pos].to_string(),
    })
}

fn parse_float(cur: &Cursor, key: &str, token: &str) -> Result<f64, ModelError> {
    let v: f64 = token
        .parse()
        .map_err(|_| cur.error(format!("{key}= expects a number, found '{token}'")))?;
    if !v.is_finite() {
        return Err(cur.error(format!("{key}= must be finite, found '{token}'")));
    }
    Ok(v)
}

fn state_name(cur: &mut Cursor) -> Result<String, ModelError> {
    let name = cur.ident("state name")?;
    if !is_pascal_ident(&name) {
        return Err(cur.error(format!("state name '{name}' is not a PascalCase identifier")));
    }
    Ok(name)
}

/// Render states in the canonical one-line-per-declaration form. Parsing the
/// result reproduces every name and shape; comments and spacing from the
/// original source are not kept.
pub fn serialize_states(states: &[StateDef]) -> String {
    let mut out = String::new();
    for state in states {
        match &state.shape {
            StateShape::Coded { entries } => {
                let body: Vec<String> = entries
                    .iter()
                    .map(|e| format!("{}={}", e.label, e.code))
                    .collect();
                let _ = writeln!(out, "enum {} {{ {} }}", state.name, body.join(", "));
            }
            StateShape::Scalar { unit, scale, offset } => {
                let _ = writeln!(
                    out,
                    "scalar {} unit={} scale={} offset={}",
                    state.name, unit, scale, offset
                );
            }
        }
    }
    out
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn line(&self) -> usize {
        self.src[..self.pos].bytes().filter(|b| *b == b'\n').count() + 1
    }

    fn error(&self, msg: impl Into<String>) -> ModelError {
        ModelError::Parse {
            line: self.line(),
            msg: msg.into(),
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => self.pos += c.len_utf8(),
                Some('/') if self.rest().starts_with("//") => {
                    match self.rest().find('\n') {
                        Some(nl) => self.pos += nl + 1,
                        None => self.pos = self.src.len(),
                    }
                }
                _ => return,
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ModelError> {
        if self.eat(c) {
            Ok(())
        } else {
            let found = self
                .peek()
                .map(|f| format!("'{f}'"))
                .unwrap_or_else(|| "end of input".to_string());
            Err(self.error(format!("expected '{c}', found {found}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ModelError> {
        self.skip_trivia();
        let rest = self.rest();
        let mut len = 0;
        for c in rest.chars() {
            let ok = if len == 0 {
                c.is_ascii_alphabetic()
            } else {
                c.is_ascii_alphanumeric() || c == '_'
            };
            if !ok {
                break;
            }
            len += c.len_utf8();
        }
        if len == 0 {
            return Err(self.error(format!("expected {what}")));
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn integer(&mut self) -> Result<u64, ModelError> {
        let rest = self.rest();
        let len = rest.bytes().take_while(u8::is_ascii_digit).count();
        if len == 0 {
            return Err(self.error("expected an unsigned integer code"));
        }
        let token = &rest[..len];
        self.pos += len;
        token
            .parse()
            .map_err(|_| self.error(format!("code '{token}' does not fit in 64 bits")))
    }

    /// Read `key=<token>` where the token runs to the next whitespace.
    fn key_value(&mut self, key: &str) -> Result<String, ModelError> {
        self.skip_trivia();
        let found = self.ident("key")?;
        if found != key {
            return Err(self.error(format!("expected '{key}=', found '{found}'")));
        }
        self.expect('=')?;
        let rest = self.rest();
        let len = rest
            .char_indices()
            .take_while(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| i + c.len_utf8())
            .last()
            .unwrap_or(0);
        if len == 0 {
            return Err(self.error(format!("'{key}=' has no value")));
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }
}
