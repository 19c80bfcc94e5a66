//! Locating JSON objects embedded in free-form model output (prose, code
//! fences, trailing commentary).

use serde_json::{Map, Value};

/// Every balanced `{...}` substring, in order of its opening brace. Braces
/// inside string literals are ignored. Unbalanced openings are skipped.
pub fn balanced_objects(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    for (start, _) in text.match_indices('{') {
        if let Some(end) = matching_close(&bytes[start..]) {
            found.push(&text[start..start + end + 1]);
        }
    }
    found
}

fn matching_close(bytes: &[u8]) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extracted {
    /// First parseable object carrying the key.
    Found(Map<String, Value>),
    /// Objects parsed, but none had the key.
    MissingKey,
    /// No balanced, parseable object at all.
    Nothing,
}

pub fn first_object_with_key(text: &str, key: &str) -> Extracted {
    let mut parsed_any = false;
    for candidate in balanced_objects(text) {
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(candidate) {
            if map.contains_key(key) {
                return Extracted::Found(map);
            }
            parsed_any = true;
        }
    }
    if parsed_any {
        Extracted::MissingKey
    } else {
        Extracted::Nothing
    }
}
