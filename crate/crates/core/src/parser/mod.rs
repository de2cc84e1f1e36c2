//! Trigger detection and strict validation of generated tool calls.

mod lenient;
mod schema;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use lenient::read_literal;
pub use schema::{DomainTools, ToolSchema, ToolSpec};

pub const OPEN_TAG: &str = "<functioncall>";
pub const CLOSE_TAG: &str = "</functioncall>";

/// Stop tokens removed from the end of a generation before segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub stop_tokens: Vec<String>,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            stop_tokens: ["<|im_end|>", "<|endoftext|>", "<|eot_id|>", "</s>"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedCall {
    pub name: Option<String>,
    pub arguments: Option<Map<String, Value>>,
    pub format_valid: bool,
    pub schema_valid: bool,
    pub args_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub triggered: bool,
    pub calls: Vec<ParsedCall>,
    pub stripped_text: String,
}

/// Case-sensitive literal search for the opening tag.
pub fn detect_trigger(text: &str) -> bool {
    text.contains(OPEN_TAG)
}

/// Removes trailing whitespace and stop tokens until neither remains.
pub fn strip_stop_tokens<'a>(text: &'a str, cfg: &ParserConfig) -> &'a str {
    let mut t = text.trim_end();
    loop {
        let before = t.len();
        for tok in cfg.stop_tokens.iter().filter(|s| !s.is_empty()) {
            if let Some(rest) = t.strip_suffix(tok.as_str()) {
                t = rest.trim_end();
            }
        }
        if t.len() == before {
            return t;
        }
    }
}

/// Splits the text into call payloads. A call runs from an opening tag to
/// the next closing tag; an unclosed call ends at the next opening tag or at
/// the end of the text.
pub fn segment_calls(stripped: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = stripped;
    while let Some(start) = rest.find(OPEN_TAG) {
        let body = &rest[start + OPEN_TAG.len()..];
        let close = body.find(CLOSE_TAG);
        let next_open = body.find(OPEN_TAG);
        let (end, skip) = match (close, next_open) {
            (Some(c), Some(o)) if o < c => (o, 0),
            (Some(c), _) => (c, CLOSE_TAG.len()),
            (None, Some(o)) => (o, 0),
            (None, None) => (body.len(), 0),
        };
        out.push(body[..end].trim());
        rest = &body[end + skip..];
    }
    out
}

/// Parses and validates every call in `text`. Never fails: malformed input
/// shows up as invalid flags.
pub fn parse_calls(text: &str, schema: &ToolSchema, expected_domain: &str) -> ParseOutcome {
    parse_calls_with(text, schema, expected_domain, &ParserConfig::default())
}

pub fn parse_calls_with(
    text: &str,
    schema: &ToolSchema,
    expected_domain: &str,
    cfg: &ParserConfig,
) -> ParseOutcome {
    let triggered = detect_trigger(text);
    let stripped = strip_stop_tokens(text, cfg);
    let calls = if triggered {
        segment_calls(stripped)
            .into_iter()
            .map(|p| validate_call(p, schema, expected_domain))
            .collect()
    } else {
        Vec::new()
    };
    ParseOutcome { triggered, calls, stripped_text: stripped.to_string() }
}

/// Lossy UTF-8 entry point for raw model bytes.
pub fn parse_bytes(bytes: &[u8], schema: &ToolSchema, expected_domain: &str) -> ParseOutcome {
    parse_calls(&String::from_utf8_lossy(bytes), schema, expected_domain)
}

fn parse_payload(payload: &str) -> Option<Value> {
    serde_json::from_str(payload).ok().or_else(|| read_literal(payload))
}

fn validate_call(payload: &str, schema: &ToolSchema, expected_domain: &str) -> ParsedCall {
    let mut call = ParsedCall {
        name: None,
        arguments: None,
        format_valid: false,
        schema_valid: false,
        args_valid: false,
    };
    let Some(Value::Object(obj)) = parse_payload(payload) else {
        return call;
    };
    let Some(Value::String(name)) = obj.get("name") else {
        return call;
    };
    call.format_valid = !name.trim().is_empty();
    call.name = Some(name.clone());
    call.arguments = match obj.get("arguments") {
        Some(Value::Object(m)) => Some(m.clone()),
        // some chat templates encode arguments as a JSON string
        Some(Value::String(s)) => match parse_payload(s) {
            Some(Value::Object(m)) => Some(m),
            _ => None,
        },
        _ => None,
    };
    if !call.format_valid {
        return call;
    }
    call.schema_valid = schema.allows(expected_domain, name);
    call.args_valid = match &call.arguments {
        Some(args) if !args.is_empty() => schema
            .required_args(name)
            .unwrap_or_default()
            .iter()
            .all(|k| args.get(k).is_some_and(non_empty)),
        _ => false,
    };
    call
}

fn non_empty(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::String(s) => !s.trim().is_empty(),
        Value::Array(a) => !a.is_empty(),
        Value::Object(o) => !o.is_empty(),
        Value::Bool(_) | Value::Number(_) => true,
    }
}

/// Sample-level validity flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFlags {
    pub triggered: bool,
    /// Every call parsed into a name-bearing object.
    pub format_ok: bool,
    /// First call names the reference tool; `None` when no reference exists.
    pub tool_ok: Option<bool>,
    /// Every call carries complete arguments.
    pub args_ok: bool,
    pub success: bool,
}

pub fn score_sample(outcome: &ParseOutcome, reference_tool: Option<&str>) -> SampleFlags {
    if !outcome.triggered || outcome.calls.is_empty() {
        return SampleFlags {
            triggered: outcome.triggered,
            format_ok: false,
            tool_ok: reference_tool.map(|_| false),
            args_ok: false,
            success: false,
        };
    }
    let format_ok = outcome.calls.iter().all(|c| c.format_valid);
    let args_ok = outcome.calls.iter().all(|c| c.args_valid);
    let tool_ok = reference_tool.map(|r| outcome.calls[0].name.as_deref() == Some(r));
    SampleFlags {
        triggered: true,
        format_ok,
        tool_ok,
        args_ok,
        success: format_ok && tool_ok == Some(true),
    }
}
