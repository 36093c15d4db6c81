//! Test oracle speaking the line-delimited JSON plugin protocol.
//!
//! Usage: `lcfg-oracle-stub [MODE]` where MODE is one of
//! `candidate` (default), `current`, `indifferent`, `raw`, `garbled`,
//! `sleep=<ms>`, `malformed` or `wrong-id`.

use std::io::{self, BufRead, Write};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "candidate".to_string());
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let id = serde_json::from_str::<Value>(&line)
            .ok()
            .and_then(|v| v.get("query_id").and_then(Value::as_u64))
            .unwrap_or(0);
        let reply = match mode.as_str() {
            "current" => structured(id, "CURRENT"),
            "indifferent" => structured(id, "INDIFFERENT"),
            "raw" => json!({
                "v": 1,
                "query_id": id,
                "raw": "## Step 5: Final Preference\nI prefer: CANDIDATE\nConfidence: medium\nReason: better coverage.",
            })
            .to_string(),
            "garbled" => json!({ "v": 1, "query_id": id, "raw": "I would rather not say." }).to_string(),
            "malformed" => "this is not json".to_string(),
            "wrong-id" => structured(id + 1, "CANDIDATE"),
            m if m.starts_with("sleep=") => {
                let ms = m["sleep=".len()..].parse().unwrap_or(1000);
                thread::sleep(Duration::from_millis(ms));
                structured(id, "CANDIDATE")
            }
            _ => structured(id, "CANDIDATE"),
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}

fn structured(id: u64, verdict: &str) -> String {
    json!({
        "v": 1,
        "query_id": id,
        "verdict": verdict,
        "confidence": "high",
        "raw": format!("I prefer: {verdict}\nConfidence: high"),
    })
    .to_string()
}
