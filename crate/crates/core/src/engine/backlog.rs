//! Sprint backlog read from the PRD's requirement pool.

use serde_json::Value;

use crate::agents::StructuredDoc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BacklogItem {
    /// 0 for P0 (highest) through 2 for P2.
    pub priority: u8,
    pub text: String,
}

impl std::fmt::Display for BacklogItem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[P{}] {}", self.priority, self.text)
    }
}

fn priority_of(s: &str) -> Option<u8> {
    let t = s.trim().trim_matches(|c: char| c == '\'' || c == '"' || c == '(' || c == ')' || c == '[' || c == ']');
    match t.to_ascii_uppercase().as_str() {
        "P0" => Some(0),
        "P1" => Some(1),
        "P2" => Some(2),
        _ => None,
    }
}

fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Object(map) => ["requirement", "Requirement", "description", "Description", "name", "title", "feature"]
            .iter()
            .find_map(|k| map.get(*k).and_then(text_of)),
        _ => None,
    }
}

fn item(v: &Value) -> Option<BacklogItem> {
    match v {
        Value::Object(map) => {
            let priority = ["priority", "Priority"]
                .iter()
                .find_map(|k| map.get(*k).and_then(Value::as_str).and_then(priority_of))
                .unwrap_or(2);
            Some(BacklogItem { priority, text: text_of(v)? })
        }
        Value::Array(parts) => {
            let priority = parts.iter().filter_map(Value::as_str).find_map(priority_of);
            let text = parts.iter().filter_map(Value::as_str).find(|s| priority_of(s).is_none())?;
            Some(BacklogItem { priority: priority.unwrap_or(2), text: text.trim().to_string() })
        }
        Value::String(s) => {
            // "P0: text", "text (P0)", or bare text.
            if let Some((head, rest)) = s.split_once(':') {
                if let Some(p) = priority_of(head) {
                    return Some(BacklogItem { priority: p, text: rest.trim().to_string() });
                }
            }
            if let Some(open) = s.rfind('(') {
                if let Some(p) = priority_of(&s[open..]) {
                    return Some(BacklogItem { priority: p, text: s[..open].trim().to_string() });
                }
            }
            text_of(v).map(|text| BacklogItem { priority: 2, text })
        }
        _ => None,
    }
}

fn normalize(key: &str) -> String {
    key.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

/// Backlog items in priority order (P0 first), stable within a priority.
pub fn backlog_from_prd(prd: &StructuredDoc) -> Vec<BacklogItem> {
    let Value::Object(map) = &prd.0 else { return Vec::new() };
    let pool = map.iter().find(|(k, _)| normalize(k) == "requirementpool").map(|(_, v)| v);
    let mut items: Vec<BacklogItem> = match pool {
        Some(Value::Array(entries)) => entries.iter().filter_map(item).collect(),
        Some(Value::Object(by_priority)) => by_priority
            .iter()
            .flat_map(|(k, v)| {
                let p = priority_of(k);
                let list = v.as_array().cloned().unwrap_or_else(|| vec![v.clone()]);
                list.into_iter().filter_map(move |e| {
                    let mut it = item(&e)?;
                    if let Some(p) = p {
                        it.priority = p;
                    }
                    Some(it)
                })
            })
            .collect(),
        _ => Vec::new(),
    };
    items.sort_by_key(|i| i.priority);
    items
}
