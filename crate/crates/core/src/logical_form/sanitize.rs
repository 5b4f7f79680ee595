use std::sync::OnceLock;

use regex::Regex;

fn fence() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_-]*[ \t]*\r?\n?(.*?)```").unwrap())
}

fn query_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(PREFIX|SELECT)\b").unwrap())
}

fn modifier_tail() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?is)^\s*(?:ORDER\s+BY\s+(?:(?:ASC|DESC)\s*\((?:[^()]|\([^()]*\))*\)|\?\w+|[A-Za-z:]+\(\?\w+\)))?\s*(?:LIMIT\s+\d+)?\s*(?:OFFSET\s+\d+)?",
        )
        .unwrap()
    })
}

/// Cleans an LLM response down to the query text: takes the first fenced
/// block if any, drops everything before the first `PREFIX`/`SELECT`
/// (which removes `SPARQL:` labels), and drops prose after the last `}`
/// except an `ORDER BY`/`LIMIT`/`OFFSET` tail.
pub fn sanitize_llm_sparql(raw: &str) -> String {
    let mut text = raw;
    if let Some(c) = fence().captures(text) {
        text = c.get(1).map(|m| m.as_str()).unwrap_or("");
    } else if let Some(i) = text.find("```") {
        // Unterminated fence: keep what follows it.
        text = &text[i + 3..];
        text = text.trim_start_matches(|c: char| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    }
    if let Some(m) = query_start().find(text) {
        text = &text[m.start()..];
    }
    if let Some(close) = text.rfind('}') {
        let (body, rest) = text.split_at(close + 1);
        let tail = modifier_tail()
            .find(rest)
            .map(|m| m.as_str().trim_end())
            .unwrap_or("");
        return format!("{body}{tail}").trim().to_string();
    }
    text.trim().to_string()
}
