use std::sync::OnceLock;

use regex::Regex;

use super::ProtocolError;
use crate::preferences::{Confidence, PreferenceAnswer, Verdict};

fn declaration() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\bI\s+prefer\s*[*_]*\s*:\s*[*_\[\s]*(current|candidate|indifferent)([a-z0-9]*)(\s*/)?")
            .expect("static pattern")
    })
}

fn confidence() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\bconfidence\s*[*_]*\s*:\s*[*_\[\s]*(low|medium|high)([a-z0-9]*)(\s*/)?").expect("static pattern")
    })
}

/// Extracts the final `I prefer: ...` declaration and an optional confidence.
///
/// The last declaration wins. Option lists such as
/// `I prefer: [CURRENT / CANDIDATE / INDIFFERENT]` are skipped.
pub fn parse_declaration(raw: &str) -> Result<PreferenceAnswer, ProtocolError> {
    let decl = declaration()
        .captures_iter(raw)
        .filter(|c| c[2].is_empty() && c.get(3).is_none())
        .last()
        .ok_or_else(|| {
            let head: String = raw.chars().take(60).collect();
            ProtocolError::ParseFailure(format!("{head:?}"))
        })?;
    let verdict = Verdict::from_wire(&decl[1]).expect("pattern only matches verdict words");
    let tail = &raw[decl.get(0).expect("whole match").end()..];
    let confidence = confidence()
        .captures_iter(tail)
        .find(|c| c[2].is_empty() && c.get(3).is_none())
        .and_then(|c| Confidence::from_wire(&c[1]));
    Ok(PreferenceAnswer { verdict, confidence })
}
