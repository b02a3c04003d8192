//! Append-only run trace, one JSON record per line.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub actor: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
    /// Hex digest standing in for any sealed payload. Plaintext is never traced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_digest: Option<String>,
}

impl TraceEvent {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn record<K, V>(&mut self, tick: u64, actor: &str, kind: &str, detail: impl IntoIterator<Item = (K, V)>)
    where
        K: Into<String>,
        V: ToString,
    {
        self.push(TraceEvent {
            tick,
            actor: actor.to_string(),
            kind: kind.to_string(),
            detail: detail.into_iter().map(|(k, v)| (k.into(), v.to_string())).collect(),
            payload_digest: None,
        });
    }

    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {source_msg}")]
    Parse { line: usize, source_msg: String },
    #[error("line {line}: trace invariant {rule} violated: {detail}")]
    TraceInvariantViolation {
        rule: &'static str,
        line: usize,
        detail: String,
    },
    #[error("{0}")]
    Io(String),
}

pub const RULE_MONOTONE: &str = "monotone-ticks";
pub const RULE_PLAINTEXT: &str = "no-plaintext";
pub const RULE_ENDORSEMENTS: &str = "endorsement-completeness";

/// Detail keys a bus event may carry. Anything else could be payload.
const BUS_DETAIL_KEYS: &[&str] = &["from", "to", "seq", "kind", "deliver_at", "reason", "len"];

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TraceError::Parse {
                line: i + 1,
                source_msg: e.to_string(),
            })
        })
        .collect()
}

/// Checks tick monotonicity, that bus events carry only routing metadata and
/// digests, and that every ledger commit names exactly its required endorsers.
pub fn verify_events(events: &[TraceEvent]) -> Result<(), TraceError> {
    let mut last = 0u64;
    for (i, e) in events.iter().enumerate() {
        let line = i + 1;
        if e.tick < last {
            return Err(TraceError::TraceInvariantViolation {
                rule: RULE_MONOTONE,
                line,
                detail: format!("tick {} after {}", e.tick, last),
            });
        }
        last = e.tick;

        if e.kind.starts_with("bus.") {
            if let Some(k) = e.detail.keys().find(|k| !BUS_DETAIL_KEYS.contains(&k.as_str())) {
                return Err(TraceError::TraceInvariantViolation {
                    rule: RULE_PLAINTEXT,
                    line,
                    detail: format!("unexpected detail key {k:?} on {}", e.kind),
                });
            }
            if let Some(d) = &e.payload_digest {
                if d.len() != 64 || !d.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(TraceError::TraceInvariantViolation {
                        rule: RULE_PLAINTEXT,
                        line,
                        detail: "payload field is not a digest".into(),
                    });
                }
            }
        }

        if e.kind == "ledger.commit" {
            let set = |key: &str| -> std::collections::BTreeSet<String> {
                e.get(key)
                    .unwrap_or_default()
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            };
            let required = set("required");
            let endorsers = set("endorsers");
            if required.is_empty() || required != endorsers {
                return Err(TraceError::TraceInvariantViolation {
                    rule: RULE_ENDORSEMENTS,
                    line,
                    detail: format!("required {required:?}, endorsed by {endorsers:?}"),
                });
            }
        }
    }
    Ok(())
}

pub fn verify_trace(path: &Path) -> Result<usize, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io(e.to_string()))?;
    let events = parse_jsonl(&text)?;
    verify_events(&events)?;
    Ok(events.len())
}
