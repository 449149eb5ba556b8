//! Structured-output helpers: pulling a JSON object out of model prose and
//! validating it against a lightweight schema descriptor.

use serde_json::Value;

/// Expected kind of a JSON field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Bool,
    Int,
    Number,
    Str,
    StrArray,
}

impl FieldKind {
    fn matches(&self, value: &Value) -> bool {
        match self {
            FieldKind::Bool => value.is_boolean(),
            FieldKind::Int => value.is_i64() || value.is_u64(),
            FieldKind::Number => value.is_number(),
            FieldKind::Str => value.is_string(),
            FieldKind::StrArray => value
                .as_array()
                .map(|items| items.iter().all(Value::is_string))
                .unwrap_or(false),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            FieldKind::Bool => "bool",
            FieldKind::Int => "int",
            FieldKind::Number => "number",
            FieldKind::Str => "string",
            FieldKind::StrArray => "array of strings",
        }
    }
}

/// Required keys and their kinds for a structured reply.
#[derive(Debug, Clone)]
pub struct SchemaDescriptor {
    fields: Vec<(String, FieldKind)>,
}

impl SchemaDescriptor {
    pub fn new(fields: &[(&str, FieldKind)]) -> Self {
        Self {
            fields: fields
                .iter()
                .map(|(key, kind)| (key.to_string(), *kind))
                .collect(),
        }
    }

    pub fn describe(&self) -> String {
        self.fields
            .iter()
            .map(|(key, kind)| format!("{key} ({})", kind.name()))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn validate(&self, value: &Value) -> Result<(), String> {
        let object = value
            .as_object()
            .ok_or_else(|| "top-level value is not an object".to_string())?;
        for (key, kind) in &self.fields {
            match object.get(key) {
                None => return Err(format!("missing required key '{key}'")),
                Some(v) if !kind.matches(v) => {
                    return Err(format!("key '{key}' is not a {}", kind.name()))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Scan text for the first balanced `{...}` region that parses as JSON.
/// Handles strings and escapes, so braces inside string values do not
/// confuse the balance count.
pub fn extract_first_json_object(text: &str) -> Option<Value> {
    let bytes = text.as_bytes();
    let mut search_from = 0usize;
    while let Some(rel) = text[search_from..].find('{') {
        let start = search_from + rel;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_string {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == b'"' {
                    in_string = false;
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        if let Some(end) = end {
            if let Ok(value) = serde_json::from_str::<Value>(&text[start..=end]) {
                return Some(value);
            }
        }
        // balanced region was not valid JSON; retry from the next opener
        search_from = start + 1;
    }
    None
}
