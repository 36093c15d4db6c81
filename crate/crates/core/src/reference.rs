//! Bundled reference instances and condition presets.

use serde::Deserialize;

use crate::experiments::Condition;
use crate::game::GameSpec;

pub const SIX_AGENT_JSON: &str = include_str!("../data/six_agent.json");
pub const WORKED_EXAMPLE_JSON: &str = include_str!("../data/worked_example.json");
pub const ONE_DIMENSIONAL_CYCLE_JSON: &str = include_str!("../data/one_dimensional_cycle.json");
pub const CONDITIONS_JSON: &str = include_str!("../data/conditions.json");

/// Six agents over math, facts and logic.
pub fn six_agent_game() -> GameSpec {
    GameSpec::from_json(SIX_AGENT_JSON).expect("bundled game is valid")
}

/// Three agents with complementary strengths.
pub fn worked_example_game() -> GameSpec {
    GameSpec::from_json(WORKED_EXAMPLE_JSON).expect("bundled game is valid")
}

/// Two one-dimensional agents, strong `H` and weak `L`, with no Nash-stable partition.
pub fn one_dimensional_cycle_game() -> GameSpec {
    GameSpec::from_json(ONE_DIMENSIONAL_CYCLE_JSON).expect("bundled game is valid")
}

#[derive(Clone, Debug, Deserialize)]
pub struct ArchitectureEpsilon {
    pub label: String,
    pub epsilon: f64,
    pub ci: (f64, f64),
}

#[derive(Clone, Debug, Deserialize)]
pub struct TemperaturePoint {
    pub tau: f64,
    pub epsilon: f64,
    pub consistency: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ConditionTable {
    pub conditions: Vec<Condition>,
    pub epsilon_by_architecture: Vec<ArchitectureEpsilon>,
    pub temperature: Vec<TemperaturePoint>,
}

pub fn condition_table() -> ConditionTable {
    serde_json::from_str(CONDITIONS_JSON).expect("bundled condition table is valid")
}

pub fn condition(name: &str) -> Option<Condition> {
    condition_table().conditions.into_iter().find(|c| c.name == name)
}

/// Measured consistency against Nash rate for the five dynamic prompting regimes.
pub const CONSISTENCY_RATE_POINTS: [(&str, f64, f64); 5] = [
    ("greedy", 0.71, 0.521),
    ("standard", 0.64, 0.418),
    ("cot", 0.74, 0.584),
    ("self_consistency", 0.79, 0.627),
    ("coalt", 0.86, 0.732),
];
