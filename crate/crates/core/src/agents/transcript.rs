use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::{self, digest_json};
use crate::types::Timestamp;

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub seq: u64,
    pub round: u32,
    pub actor: String,
    pub action: String,
    pub payload: Value,
    pub payload_digest: String,
    pub timestamp: Timestamp,
}

/// Append-only event log, emitted as JSON lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    events: Vec<AgentEvent>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, round: u32, actor: &str, action: &str, payload: Value, timestamp: Timestamp) -> &AgentEvent {
        let digest = digest_json(&payload).expect("json value serializes");
        self.events.push(AgentEvent {
            seq: self.events.len() as u64 + 1,
            round,
            actor: actor.to_owned(),
            action: action.to_owned(),
            payload,
            payload_digest: canonical::to_0x_hex(&digest),
            timestamp,
        });
        self.events.last().expect("just pushed")
    }

    pub fn events(&self) -> &[AgentEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Canonical JSON, one event per line, trailing newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&canonical::to_canonical_json(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<AgentEvent>, _>>()?;
        Ok(Self { events })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn jsonl_roundtrip_and_digest() {
        let mut t = Transcript::new();
        t.record(1, "buyer", "pay", json!({"b": 1, "a": 2}), 10);
        t.record(1, "seller", "update_order", json!({}), 10);
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains(r#""payload":{"a":2,"b":1}"#));
        let back = Transcript::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.events()[1].seq, 2);
        assert!(t.events()[0].payload_digest.starts_with("0x"));
    }
}
