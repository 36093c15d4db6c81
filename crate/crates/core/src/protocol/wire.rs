use serde::{Deserialize, Serialize};

use super::{parse_declaration, ProtocolError};
use crate::preferences::{Confidence, PreferenceAnswer, Verdict};

pub const WIRE_VERSION: u32 = 1;

fn wire_version() -> u32 {
    WIRE_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireQuery {
    #[serde(default = "wire_version")]
    pub v: u32,
    pub query_id: u64,
    pub prompt: String,
    pub agent: usize,
    pub current: Vec<usize>,
    pub candidate: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireAnswer {
    #[serde(default = "wire_version")]
    pub v: u32,
    pub query_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<String>,
    #[serde(default)]
    pub raw: String,
}

impl WireAnswer {
    /// Uses the structured verdict when present, otherwise parses `raw`.
    pub fn to_preference(&self) -> Result<PreferenceAnswer, ProtocolError> {
        if self.v != WIRE_VERSION {
            return Err(ProtocolError::Version(self.v));
        }
        match &self.verdict {
            Some(v) => {
                let verdict = Verdict::from_wire(v)
                    .ok_or_else(|| ProtocolError::Malformed(format!("unknown verdict {v:?}")))?;
                let confidence = self.confidence.as_deref().and_then(Confidence::from_wire);
                Ok(PreferenceAnswer { verdict, confidence })
            }
            None => parse_declaration(&self.raw),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_and_raw_answers() {
        let a: WireAnswer =
            serde_json::from_str(r#"{"query_id":3,"verdict":"candidate","confidence":"HIGH","raw":""}"#).unwrap();
        assert_eq!(
            a.to_preference().unwrap(),
            PreferenceAnswer { verdict: Verdict::PreferCandidate, confidence: Some(Confidence::High) }
        );
        let raw: WireAnswer = serde_json::from_str(r#"{"v":1,"query_id":3,"raw":"I prefer: CURRENT"}"#).unwrap();
        assert_eq!(raw.to_preference().unwrap().verdict, Verdict::PreferCurrent);
        let bad: WireAnswer = serde_json::from_str(r#"{"query_id":3,"verdict":"MAYBE"}"#).unwrap();
        assert!(matches!(bad.to_preference(), Err(ProtocolError::Malformed(_))));
        let future: WireAnswer = serde_json::from_str(r#"{"v":2,"query_id":3,"verdict":"CURRENT"}"#).unwrap();
        assert_eq!(future.to_preference(), Err(ProtocolError::Version(2)));
    }

    #[test]
    fn query_serializes_with_version() {
        let q = WireQuery { v: 1, query_id: 9, prompt: "p".into(), agent: 0, current: vec![0, 1], candidate: vec![] };
        let text = serde_json::to_string(&q).unwrap();
        assert!(text.starts_with(r#"{"v":1,"query_id":9"#));
    }
}
