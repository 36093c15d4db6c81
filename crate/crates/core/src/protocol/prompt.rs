use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::coalition::Coalition;
use crate::game::GameSpec;
use crate::preferences::PreferenceQuery;

pub const DEFAULT_TASK_DIMS: [&str; 3] = ["math", "facts", "logic"];

/// Section headers of the structured protocol, in order.
pub const COALT_SECTIONS: [&str; 5] = [
    "## Step 1: Capability Analysis",
    "## Step 2: Complementarity Assessment",
    "## Step 3: Value Estimation",
    "## Step 4: Coordination Cost Analysis",
    "## Step 5: Final Preference",
];

const PROFILE_BLOCK: &str = "You are agent {agent_id} with capabilities:
- Mathematical reasoning: {math_score}
- Factual knowledge: {factual_score}
- Logical analysis: {logic_score}
";

const COALITION_BLOCK: &str = "CURRENT COALITION: {current_members}
Capabilities (max per dim):
  Math: {cur_math}, Facts: {cur_fact}, Logic: {cur_logic}

CANDIDATE COALITION (if you join): {cand_members}
Capabilities (max per dim):
  Math: {cand_math}, Facts: {cand_fact}, Logic: {cand_logic}

TASK: Answer questions requiring [{task_dims}]
";

const DECLARATION: &str = "I prefer: [CURRENT / CANDIDATE / INDIFFERENT]
Confidence: [low/medium/high]
Reason: [one sentence]
";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptProtocol {
    Standard,
    Cot,
    Coalt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub protocol: PromptProtocol,
    pub text: String,
}

impl PromptTemplate {
    pub fn builtin(protocol: PromptProtocol) -> Self {
        let text = match protocol {
            PromptProtocol::Standard => format!(
                "{PROFILE_BLOCK}\nDecide whether to stay in your current coalition\nor switch to a different one.\n\n{COALITION_BLOCK}\nRespond with:\n{DECLARATION}"
            ),
            PromptProtocol::Cot => format!(
                "{PROFILE_BLOCK}\nDecide whether to stay in your current coalition\nor switch to a different one.\n\n{COALITION_BLOCK}\nThink step by step about capabilities and coordination costs, then respond with:\n{DECLARATION}"
            ),
            PromptProtocol::Coalt => {
                let steps = [
                    "List what each member contributes.",
                    "Identify strengths (>0.8) and gaps (<0.7).",
                    "Estimate task performance (0-1) for each coalition.",
                    "Assess communication overhead per coalition size.",
                ];
                let mut body = format!(
                    "{PROFILE_BLOCK}\nEvaluate whether to stay in your current coalition\nor switch to a different one.\n\n{COALITION_BLOCK}"
                );
                for (header, step) in COALT_SECTIONS.iter().zip(steps) {
                    let _ = write!(body, "\n{header}\n{step}\n");
                }
                let _ = write!(body, "\n{}\n{DECLARATION}", COALT_SECTIONS[4]);
                body
            }
        };
        PromptTemplate { protocol, text }
    }
}

fn members(c: Coalition) -> String {
    let names: Vec<String> = c.members().map(|m| format!("a{m}")).collect();
    format!("{{{}}}", names.join(", "))
}

fn score(x: f64) -> String {
    format!("{x:.2}")
}

/// Fills every `{placeholder}` of the template for one query.
///
/// The candidate block describes the coalition the agent would end up in, so
/// a solo candidate renders the agent alone. Scores use two decimals.
pub fn render_prompt(
    t: &PromptTemplate,
    game: &GameSpec,
    q: &PreferenceQuery,
    task_dims: &[&str],
) -> Result<String, ProtocolError> {
    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    values.insert("agent_id", format!("a{}", q.agent));
    values.insert("current_members", members(q.current));
    values.insert("cand_members", members(q.joined()));
    if !task_dims.is_empty() {
        values.insert("task_dims", task_dims.join(", "));
    }
    let own = game.profile(q.agent).values();
    let cur = game.joint_profile(q.current);
    let cand = game.joint_profile(q.joined());
    let dims = [
        ("math_score", "cur_math", "cand_math"),
        ("factual_score", "cur_fact", "cand_fact"),
        ("logic_score", "cur_logic", "cand_logic"),
    ];
    for (j, (own_key, cur_key, cand_key)) in dims.into_iter().enumerate().take(game.d()) {
        values.insert(own_key, score(own[j]));
        values.insert(cur_key, score(cur[j]));
        values.insert(cand_key, score(cand[j]));
    }

    let text = &t.text;
    let mut out = String::with_capacity(text.len() + 64);
    let mut rest = text.as_str();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]).filter(|n| is_placeholder(n));
        match name {
            Some(name) => {
                let v = values.get(name).ok_or_else(|| ProtocolError::MissingPlaceholder(name.to_string()))?;
                out.push_str(v);
                rest = &after[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_placeholder(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    fn c(v: &[usize]) -> Coalition {
        Coalition::from_members(v.iter().copied()).unwrap()
    }

    #[test]
    fn current_maxima_for_worked_example() {
        let g = reference::worked_example_game();
        let q = PreferenceQuery::new(&g, 0, c(&[0, 1]), c(&[2])).unwrap();
        let text = render_prompt(&PromptTemplate::builtin(PromptProtocol::Coalt), &g, &q, &DEFAULT_TASK_DIMS).unwrap();
        assert!(text.contains("CURRENT COALITION: {a0, a1}"));
        assert!(text.contains("Math: 0.68, Facts: 0.65, Logic: 0.40"));
        assert!(text.contains("CANDIDATE COALITION (if you join): {a0, a2}"));
        assert!(text.contains("Math: 0.68, Facts: 0.40, Logic: 0.76"));
        assert!(text.contains("TASK: Answer questions requiring [math, facts, logic]"));
        assert!(!text.contains("{agent_id}"));
    }

    #[test]
    fn solo_candidate_shows_agent_alone() {
        let g = reference::worked_example_game();
        let q = PreferenceQuery::new(&g, 2, c(&[1, 2]), Coalition::EMPTY).unwrap();
        let text = render_prompt(&PromptTemplate::builtin(PromptProtocol::Standard), &g, &q, &["logic"]).unwrap();
        assert!(text.contains("CANDIDATE COALITION (if you join): {a2}"));
        assert!(text.contains("Math: 0.30, Facts: 0.40, Logic: 0.76"));
    }

    #[test]
    fn coalt_sections_in_order() {
        let t = PromptTemplate::builtin(PromptProtocol::Coalt);
        let mut at = 0;
        for header in COALT_SECTIONS {
            let pos = t.text[at..].find(header).unwrap_or_else(|| panic!("missing {header}")) + at;
            at = pos + header.len();
        }
        for p in ["{agent_id}", "{math_score}", "{cur_math}", "{cand_logic}", "{task_dims}"] {
            assert!(t.text.contains(p));
        }
    }

    #[test]
    fn missing_data_is_an_error() {
        let g = reference::one_dimensional_cycle_game();
        let q = PreferenceQuery::new(&g, 1, c(&[1]), c(&[0])).unwrap();
        let t = PromptTemplate::builtin(PromptProtocol::Coalt);
        assert_eq!(
            render_prompt(&t, &g, &q, &DEFAULT_TASK_DIMS),
            Err(ProtocolError::MissingPlaceholder("factual_score".into()))
        );
        let g3 = reference::worked_example_game();
        let q3 = PreferenceQuery::new(&g3, 0, c(&[0]), c(&[1])).unwrap();
        assert_eq!(render_prompt(&t, &g3, &q3, &[]), Err(ProtocolError::MissingPlaceholder("task_dims".into())));
    }

    #[test]
    fn rendering_is_deterministic() {
        let g = reference::six_agent_game();
        let q = PreferenceQuery::new(&g, 3, c(&[3, 4]), c(&[0, 1])).unwrap();
        for p in [PromptProtocol::Standard, PromptProtocol::Cot, PromptProtocol::Coalt] {
            let t = PromptTemplate::builtin(p);
            assert_eq!(
                render_prompt(&t, &g, &q, &DEFAULT_TASK_DIMS).unwrap(),
                render_prompt(&t, &g, &q, &DEFAULT_TASK_DIMS).unwrap()
            );
        }
    }
}
