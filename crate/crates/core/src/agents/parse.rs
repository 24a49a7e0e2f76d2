//! Parsers for model output: JSON documents, fenced code bundles and tester
//! verdict lists.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::failure_ratio;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed document at line {line}, column {column}: {message}")]
    MalformedDoc { line: usize, column: usize, message: String },
    #[error("no fenced code blocks in output")]
    NoCodeBlocks,
    #[error("test report contains no test cases")]
    EmptyReport,
}

/// A JSON object or array returned by a document-producing role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StructuredDoc(pub Value);

impl StructuredDoc {
    pub fn get(&self, field: &str) -> Option<&Value> {
        self.0.get(field)
    }

    pub fn field_names(&self) -> Vec<&str> {
        match &self.0 {
            Value::Object(map) => map.keys().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    pub fn to_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.0).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Fence<'a> {
    info: &'a str,
    body: String,
}

/// Returns the opening fence length and info string for a fence line.
fn fence_open(line: &str) -> Option<(usize, &str)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let ticks = rest.len() - rest.trim_start_matches('`').len();
    if ticks < 3 {
        return None;
    }
    let info = rest[ticks..].trim();
    if info.contains('`') {
        return None;
    }
    Some((ticks, info))
}

fn fence_close(line: &str, open: usize) -> bool {
    let t = line.trim();
    t.len() >= open && t.bytes().all(|b| b == b'`')
}

/// Extracts fenced blocks. An unterminated fence runs to end of input.
fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let Some((ticks, info)) = fence_open(line) else { continue };
        let mut body = String::new();
        for inner in lines.by_ref() {
            if fence_close(inner, ticks) {
                break;
            }
            body.push_str(inner);
            body.push('\n');
        }
        out.push(Fence { info, body });
    }
    out
}

fn malformed(e: &serde_json::Error) -> ParseError {
    ParseError::MalformedDoc { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Parses a JSON document, tolerating code-fence wrappers and stray prose
/// around a single top-level object.
pub fn parse_structured_doc(text: &str) -> Result<StructuredDoc, ParseError> {
    let trimmed = text.trim();
    let first_err = match serde_json::from_str::<Value>(trimmed) {
        Ok(v) => return doc(v),
        Err(e) => e,
    };
    for f in fences(trimmed) {
        if let Ok(v) = serde_json::from_str::<Value>(f.body.trim()) {
            return doc(v);
        }
    }
    if let (Some(start), Some(end)) = (trimmed.find('{'), trimmed.rfind('}')) {
        if start < end {
            if let Ok(v) = serde_json::from_str::<Value>(&trimmed[start..=end]) {
                return doc(v);
            }
        }
    }
    // Report the position relative to the fence body when the payload was fenced.
    if let Some(f) = fences(trimmed).into_iter().next() {
        if let Err(e) = serde_json::from_str::<Value>(f.body.trim()) {
            return Err(malformed(&e));
        }
    }
    Err(malformed(&first_err))
}

fn doc(v: Value) -> Result<StructuredDoc, ParseError> {
    match v {
        Value::Object(_) | Value::Array(_) => Ok(StructuredDoc(v)),
        other => Err(ParseError::MalformedDoc {
            line: 1,
            column: 1,
            message: format!("expected an object or array, got {other}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFile {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBundle {
    pub files: Vec<CodeFile>,
    /// Blocks that overwrote an earlier block with the same path.
    pub replaced: usize,
}

impl CodeBundle {
    pub fn paths(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.path.as_str()).collect()
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.files.iter().find(|f| f.path == path).map(|f| f.content.as_str())
    }

    /// Inserts or replaces by path, keeping first-seen order.
    pub fn upsert(&mut self, path: String, content: String) {
        match self.files.iter_mut().find(|f| f.path == path) {
            Some(f) => {
                f.content = content;
                self.replaced += 1;
            }
            None => self.files.push(CodeFile { path, content }),
        }
    }

    /// Renders the bundle back into headed fences that `parse_code_bundle` reads.
    pub fn to_fenced(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            let longest = longest_backtick_run(&f.content);
            let fence = "`".repeat(longest.max(2) + 1);
            let lang = language_for(&f.path);
            let _ = writeln!(out, "{fence}{lang}");
            let _ = writeln!(out, "{}", header_for(&f.path));
            out.push_str(&f.content);
            if !f.content.is_empty() && !f.content.ends_with('\n') {
                out.push('\n');
            }
            let _ = writeln!(out, "{fence}\n");
        }
        out
    }
}

fn longest_backtick_run(s: &str) -> usize {
    s.split(|c| c != '`').map(str::len).max().unwrap_or(0)
}

fn extension(path: &str) -> &str {
    path.rsplit_once('.').map(|(_, e)| e).unwrap_or("")
}

fn language_for(path: &str) -> &'static str {
    match extension(path) {
        "html" | "htm" => "html",
        "css" => "css",
        "js" | "mjs" => "javascript",
        "py" => "python",
        "json" => "json",
        "md" => "markdown",
        _ => "text",
    }
}

fn header_for(path: &str) -> String {
    match extension(path) {
        "html" | "htm" | "xml" | "md" | "svg" => format!("<!-- {path} -->"),
        "py" | "sh" | "rb" | "toml" | "yaml" | "yml" | "txt" | "cfg" | "ini" => format!("# {path}"),
        "css" => format!("/* {path} */"),
        _ => format!("// {path}"),
    }
}

/// Default file name for an unheaded fence with this language tag.
pub fn default_name(lang: &str) -> Option<&'static str> {
    match lang.to_ascii_lowercase().as_str() {
        "html" | "htm" => Some("index.html"),
        "css" => Some("style.css"),
        "js" | "javascript" => Some("script.js"),
        "python" | "py" => Some("main.py"),
        _ => None,
    }
}

fn looks_like_path(s: &str) -> bool {
    !s.is_empty()
        && s.contains('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '/' | '\\' | '_' | '-' | ':'))
}

/// Reads a file path from a header comment on the first line of a block.
fn header_path(line: &str) -> Option<&str> {
    let t = line.trim();
    let inner = if let Some(r) = t.strip_prefix("<!--") {
        r.strip_suffix("-->")?
    } else if let Some(r) = t.strip_prefix("/*") {
        r.strip_suffix("*/")?
    } else if let Some(r) = t.strip_prefix("//") {
        r
    } else if let Some(r) = t.strip_prefix('#') {
        if r.starts_with('!') {
            return None;
        }
        r
    } else {
        return None;
    };
    let inner = inner.trim();
    let inner = inner.strip_prefix("File:").or_else(|| inner.strip_prefix("file:")).map(str::trim).unwrap_or(inner);
    looks_like_path(inner).then_some(inner)
}

/// Normalizes a candidate path to a relative path with no `.`/`..` segments.
/// Returns `None` when nothing usable remains.
pub fn sanitize_path(raw: &str) -> Option<String> {
    let unified = raw.replace('\\', "/");
    // Drop a Windows drive prefix such as `C:`.
    let unified = match unified.split_once(':') {
        Some((drive, rest)) if drive.len() == 1 => rest.to_string(),
        _ => unified,
    };
    let parts: Vec<&str> = unified
        .split('/')
        .filter(|seg| !seg.is_empty() && *seg != "." && *seg != ".." && !seg.contains(':'))
        .collect();
    (!parts.is_empty()).then(|| parts.join("/"))
}

/// Splits model output into files. Paths come from a first-line header
/// comment, else the fence language, else `file_N.txt`.
pub fn parse_code_bundle(text: &str) -> Result<CodeBundle, ParseError> {
    let blocks = fences(text);
    if blocks.is_empty() {
        return Err(ParseError::NoCodeBlocks);
    }
    let mut bundle = CodeBundle::default();
    for (i, block) in blocks.into_iter().enumerate() {
        let lang = block.info.split_whitespace().next().unwrap_or("");
        let (first, rest) = match block.body.split_once('\n') {
            Some((a, b)) => (a, b),
            None => (block.body.as_str(), ""),
        };
        let (path, content) = match header_path(first).and_then(sanitize_path) {
            Some(p) => (p, rest.to_string()),
            None => {
                let p = default_name(lang).map(str::to_string).unwrap_or_else(|| format!("file_{}.txt", i + 1));
                (p, block.body.clone())
            }
        };
        bundle.upsert(path, content);
    }
    Ok(bundle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    #[serde(alias = "pass", alias = "Pass")]
    Pass,
    #[serde(alias = "fail", alias = "Fail")]
    Fail,
}

impl Verdict {
    fn parse(s: &str) -> Option<Verdict> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pass" | "passed" | "ok" | "success" | "true" => Some(Verdict::Pass),
            "fail" | "failed" | "failure" | "error" | "false" => Some(Verdict::Fail),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub cases: Vec<TestCase>,
}

impl TestReport {
    pub fn failed(&self) -> impl Iterator<Item = &TestCase> {
        self.cases.iter().filter(|c| c.verdict == Verdict::Fail)
    }

    pub fn failed_count(&self) -> u64 {
        self.failed().count() as u64
    }

    pub fn total(&self) -> u64 {
        self.cases.len() as u64
    }

    pub fn all_pass(&self) -> bool {
        self.failed_count() == 0
    }

    pub fn failure_rate(&self) -> Option<f64> {
        failure_ratio(self.failed_count(), self.total()).map(crate::domain::ratio_to_f64)
    }
}

const CASE_LISTS: [&str; 5] = ["cases", "test_results", "results", "test_cases", "tests"];
const NAME_KEYS: [&str; 5] = ["name", "test", "title", "id", "description"];
const VERDICT_KEYS: [&str; 4] = ["verdict", "status", "result", "outcome"];

fn case_from_json(v: &Value) -> Option<TestCase> {
    let obj = v.as_object()?;
    let name = NAME_KEYS.iter().find_map(|k| obj.get(*k)).and_then(|n| match n {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })?;
    let verdict = VERDICT_KEYS.iter().find_map(|k| obj.get(*k)).and_then(|v| match v {
        Value::String(s) => Verdict::parse(s),
        Value::Bool(b) => Some(if *b { Verdict::Pass } else { Verdict::Fail }),
        _ => None,
    })?;
    Some(TestCase { name, verdict })
}

fn cases_from_json(v: &Value) -> Vec<TestCase> {
    let list = match v {
        Value::Array(items) => Some(items),
        Value::Object(map) => CASE_LISTS
            .iter()
            .filter_map(|k| map.get(*k).and_then(Value::as_array))
            .find(|items| items.iter().any(|i| case_from_json(i).is_some())),
        _ => None,
    };
    list.map(|items| items.iter().filter_map(case_from_json).collect()).unwrap_or_default()
}

/// `PASS: name`, `[FAIL] name`, `- FAIL - name`.
fn case_from_line(line: &str) -> Option<TestCase> {
    let t = line.trim().trim_start_matches(['-', '*', ' ']);
    let (word, rest) = if let Some(r) = t.strip_prefix('[') {
        r.split_once(']')?
    } else {
        let end = t.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(t.len());
        (&t[..end], &t[end..])
    };
    let verdict = match word.to_ascii_uppercase().as_str() {
        "PASS" | "PASSED" => Verdict::Pass,
        "FAIL" | "FAILED" => Verdict::Fail,
        _ => return None,
    };
    let name = rest.trim_start_matches([':', '-', ' ', '\t']).trim();
    (!name.is_empty()).then(|| TestCase { name: name.to_string(), verdict })
}

pub fn parse_test_report(text: &str) -> Result<TestReport, ParseError> {
    let trimmed = text.trim();
    let fenced_json = fences(trimmed).first().map(|f| f.body.trim_start().starts_with(['{', '['])).unwrap_or(false);
    if trimmed.starts_with(['{', '[']) || fenced_json {
        let doc = parse_structured_doc(trimmed)?;
        let cases = cases_from_json(&doc.0);
        return if cases.is_empty() { Err(ParseError::EmptyReport) } else { Ok(TestReport { cases }) };
    }
    let cases: Vec<_> = trimmed.lines().filter_map(case_from_line).collect();
    if cases.is_empty() {
        // A JSON payload buried in prose.
        if let Ok(doc) = parse_structured_doc(trimmed) {
            let cases = cases_from_json(&doc.0);
            if !cases.is_empty() {
                return Ok(TestReport { cases });
            }
        }
        return Err(ParseError::EmptyReport);
    }
    Ok(TestReport { cases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bare_and_fenced_docs_match() {
        let bare = r#"{"Project Name": "Expense Tracker"}"#;
        let a = parse_structured_doc(bare).unwrap();
        assert_eq!(a.get("Project Name").unwrap(), "Expense Tracker");
        let fenced = format!("```json\n{bare}\n```");
        assert_eq!(parse_structured_doc(&fenced).unwrap(), a);
        let chatty = format!("Here is the PRD:\n{bare}\nLet me know!");
        assert_eq!(parse_structured_doc(&chatty).unwrap(), a);
    }

    #[test]
    fn truncated_doc_is_malformed() {
        assert!(matches!(parse_structured_doc(r#"{"a": "#), Err(ParseError::MalformedDoc { .. })));
        assert!(matches!(parse_structured_doc("42"), Err(ParseError::MalformedDoc { .. })));
    }

    #[test]
    fn headed_fence() {
        let text = "```html\n<!-- index.html -->\n<html></html>\n```\n";
        let b = parse_code_bundle(text).unwrap();
        assert_eq!(b.files, vec![CodeFile { path: "index.html".into(), content: "<html></html>\n".into() }]);
    }

    #[test]
    fn unheaded_fences_use_default_names() {
        let text = "```html\n<p>\n```\ntext\n```css\nbody{}\n```\n```js\nlet a;\n```\n";
        let b = parse_code_bundle(text).unwrap();
        assert_eq!(b.paths(), ["index.html", "style.css", "script.js"]);
        assert_eq!(b.get("style.css"), Some("body{}\n"));
    }

    #[test]
    fn unknown_language_gets_ordinal_name() {
        let b = parse_code_bundle("```\na\n```\n```rust\nfn x(){}\n```\n").unwrap();
        assert_eq!(b.paths(), ["file_1.txt", "file_2.txt"]);
    }

    #[test]
    fn duplicates_replace_and_are_counted() {
        let text = "```js\n// app.js\nv1\n```\n```js\n// app.js\nv2\n```\n";
        let b = parse_code_bundle(text).unwrap();
        assert_eq!(b.files.len(), 1);
        assert_eq!(b.get("app.js"), Some("v2\n"));
        assert_eq!(b.replaced, 1);
    }

    #[test]
    fn no_fences() {
        assert_eq!(parse_code_bundle("just prose"), Err(ParseError::NoCodeBlocks));
    }

    #[test]
    fn adversarial_headers_are_contained() {
        for header in ["<!-- ../../etc/passwd.txt -->", "// /etc/shadow.x", "# ..\\..\\win.ini", "// C:/x/y.js"] {
            let text = format!("```js\n{header}\nx\n```\n");
            let b = parse_code_bundle(&text).unwrap();
            for p in b.paths() {
                assert!(!p.starts_with('/') && !p.split('/').any(|s| s == ".." || s == "."), "{p}");
                assert!(!p.contains(':') && !p.contains('\\'), "{p}");
            }
        }
    }

    #[test]
    fn shebang_and_prose_comments_are_not_headers() {
        let b = parse_code_bundle("```python\n#!/usr/bin/env python3\nprint(1)\n```\n").unwrap();
        assert_eq!(b.paths(), ["main.py"]);
        let b = parse_code_bundle("```python\n# Snake game entry point\nprint(1)\n```\n").unwrap();
        assert_eq!(b.paths(), ["main.py"]);
        assert!(b.get("main.py").unwrap().starts_with("# Snake"));
    }

    #[test]
    fn nested_fences_need_longer_outer_fence() {
        let text = "````markdown\n<!-- README.md -->\n```js\nx\n```\n````\n";
        let b = parse_code_bundle(text).unwrap();
        assert_eq!(b.get("README.md"), Some("```js\nx\n```\n"));
    }

    #[test]
    fn report_ratios() {
        let json = r#"{"cases":[{"name":"a","verdict":"PASS"},{"name":"b","verdict":"FAIL"},{"name":"c","verdict":"PASS"}]}"#;
        let r = parse_test_report(json).unwrap();
        assert_eq!(r.failed_count(), 1);
        assert_eq!(r.total(), 3);
        assert_eq!(r.failure_rate(), Some(1.0 / 3.0));

        let r = parse_test_report("PASS: loads\n- [PASS] moves\n").unwrap();
        assert_eq!(r.failure_rate(), Some(0.0));
        assert!(r.all_pass());
    }

    #[test]
    fn report_line_and_fenced_forms() {
        let r = parse_test_report("Results:\nFAIL - score resets\nPASS: board renders\n").unwrap();
        assert_eq!(r.cases[0], TestCase { name: "score resets".into(), verdict: Verdict::Fail });
        let fenced = "```json\n{\"test_results\":[{\"test\":\"x\",\"status\":\"failed\"}]}\n```";
        assert_eq!(parse_test_report(fenced).unwrap().failed_count(), 1);
    }

    #[test]
    fn empty_and_malformed_reports() {
        assert_eq!(parse_test_report(r#"{"cases": []}"#), Err(ParseError::EmptyReport));
        assert_eq!(parse_test_report("everything looks fine"), Err(ParseError::EmptyReport));
        assert!(matches!(parse_test_report(r#"{"cases": ["#), Err(ParseError::MalformedDoc { .. })));
    }

    fn path_strategy() -> impl Strategy<Value = String> {
        prop::collection::vec("[a-z][a-z0-9_]{0,6}", 1..3)
            .prop_flat_map(|dirs| ("(js|css|html|py|txt)", Just(dirs)))
            .prop_map(|(ext, dirs)| format!("{}.{ext}", dirs.join("/")))
    }

    fn content_strategy() -> impl Strategy<Value = String> {
        prop::collection::vec("[ -~&&[^`]]{0,30}|```[a-z]{0,4}", 0..6).prop_map(|lines| {
            lines.iter().map(|l| format!("{l}\n")).collect::<String>()
        })
    }

    proptest! {
        #[test]
        fn fenced_round_trip(files in prop::collection::btree_map(path_strategy(), content_strategy(), 1..5)) {
            let mut bundle = CodeBundle::default();
            for (p, c) in files {
                bundle.upsert(p, c);
            }
            let back = parse_code_bundle(&bundle.to_fenced()).unwrap();
            prop_assert_eq!(back.files, bundle.files);
        }

        #[test]
        fn headers_never_escape(header in "[./\\\\a-z:]{1,24}\\.[a-z]{1,3}", style in 0usize..4) {
            let line = match style {
                0 => format!("<!-- {header} -->"),
                1 => format!("// {header}"),
                2 => format!("# {header}"),
                _ => format!("/* {header} */"),
            };
            let b = parse_code_bundle(&format!("```\n{line}\nbody\n```\n")).unwrap();
            for p in b.paths() {
                prop_assert!(!p.is_empty());
                prop_assert!(!p.starts_with('/'));
                prop_assert!(!p.split('/').any(|s| s == ".." || s == "." || s.is_empty()));
                prop_assert!(!p.contains('\\') && !p.contains(':'));
            }
        }
    }
}
