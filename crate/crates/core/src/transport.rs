//! Deterministic discrete-event message bus.
//!
//! Envelopes are sealed to the recipient's DID key (ephemeral X25519 against
//! the Montgomery form of the Ed25519 key, then ChaCha20-Poly1305) and signed
//! by the sender. Delivery order is the total order on `(deliver_time, seq)`.
//! All randomness (latency, drops, ephemeral keys) comes from one seeded RNG,
//! so equal seeds and fault scripts give equal traces.

use crate::codec::{self, hex_bytes, tags};
use crate::crypto::{sha256, verify_record, Digest, KeyPair, PublicKey, Signature};
use crate::trace::{Trace, TraceEvent};
use chacha20poly1305::aead::Aead;
use chacha20poly1305::{ChaCha20Poly1305, KeyInit, Nonce};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("unknown endpoint {0:?}")]
    UnknownEndpoint(String),
    #[error("recipient key cannot be used for key agreement")]
    NotSealable,
    #[error("envelope signature does not verify")]
    BadSignature,
    #[error("payload failed to decrypt")]
    Decrypt,
    #[error("tick ceiling {ceiling} exceeded with events still pending")]
    TickCeilingExceeded { ceiling: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedPayload {
    #[serde(with = "hex_bytes")]
    pub ephemeral_public: [u8; 32],
    #[serde(with = "codec::byte_string")]
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub from: String,
    pub to: String,
    pub seq: u64,
    /// Message kind, visible to the bus for fault matching.
    pub kind: String,
    pub payload: SealedPayload,
    pub sender_signature: Signature,
}

#[derive(Serialize)]
struct EnvelopeSigned<'a> {
    from: &'a str,
    to: &'a str,
    seq: u64,
    kind: &'a str,
    payload: &'a SealedPayload,
}

impl Envelope {
    fn signed_part(&self) -> EnvelopeSigned<'_> {
        EnvelopeSigned {
            from: &self.from,
            to: &self.to,
            seq: self.seq,
            kind: &self.kind,
            payload: &self.payload,
        }
    }

    pub fn payload_digest(&self) -> Digest {
        sha256(&[&codec::encode(&self.payload)])
    }
}

fn seal_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> ChaCha20Poly1305 {
    let key = sha256(&[&[tags::SEAL_KEY], shared, ephemeral, recipient]);
    ChaCha20Poly1305::new(key.as_bytes().into())
}

fn seal_nonce(seq: u64) -> Nonce {
    let mut n = [0u8; 12];
    n[4..].copy_from_slice(&seq.to_be_bytes());
    n.into()
}

pub fn seal(
    rng: &mut impl RngCore,
    recipient: &PublicKey,
    seq: u64,
    plaintext: &[u8],
) -> Result<SealedPayload, TransportError> {
    let recipient_x = recipient.to_x25519().ok_or(TransportError::NotSealable)?;
    let mut eph = [0u8; 32];
    rng.fill_bytes(&mut eph);
    let eph = x25519_dalek::StaticSecret::from(eph);
    let ephemeral_public = x25519_dalek::PublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&x25519_dalek::PublicKey::from(recipient_x));
    let ciphertext = seal_key(shared.as_bytes(), &ephemeral_public, &recipient.0)
        .encrypt(&seal_nonce(seq), plaintext)
        .map_err(|_| TransportError::NotSealable)?;
    Ok(SealedPayload { ephemeral_public, ciphertext })
}

pub fn unseal(recipient: &KeyPair, seq: u64, sealed: &SealedPayload) -> Result<Vec<u8>, TransportError> {
    let secret = x25519_dalek::StaticSecret::from(recipient.x25519_secret());
    let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(sealed.ephemeral_public));
    seal_key(shared.as_bytes(), &sealed.ephemeral_public, &recipient.public_key.0)
        .decrypt(&seal_nonce(seq), sealed.ciphertext.as_slice())
        .map_err(|_| TransportError::Decrypt)
}

/// Checks the sender signature, then decrypts.
pub fn open(envelope: &Envelope, sender: &PublicKey, recipient: &KeyPair) -> Result<Vec<u8>, TransportError> {
    if !verify_record(sender, tags::ENVELOPE, &envelope.signed_part(), &envelope.sender_signature) {
        return Err(TransportError::BadSignature);
    }
    unseal(recipient, envelope.seq, &envelope.payload)
}

/// Matches envelopes by endpoint and kind; `occurrence` (1-based) restricts
/// the rule to the n-th envelope it matches.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRule {
    #[serde(default)]
    pub from: Option<String>,
    #[serde(default)]
    pub to: Option<String>,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub occurrence: Option<u32>,
}

impl MatchRule {
    fn matches(&self, from: &str, to: &str, kind: &str) -> bool {
        self.from.as_deref().is_none_or(|f| f == from)
            && self.to.as_deref().is_none_or(|t| t == to)
            && self.kind.as_deref().is_none_or(|k| k == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultAction {
    Drop,
    Tamper,
    Duplicate,
    Delay(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRule {
    pub rule: MatchRule,
    pub action: FaultAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusConfig {
    pub seed: u64,
    pub latency: (u64, u64),
    pub drop_rate: f64,
    pub faults: Vec<FaultRule>,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig {
            seed: 0,
            latency: (1, 3),
            drop_rate: 0.0,
            faults: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
enum Scheduled<T> {
    Deliver(Envelope),
    Timer(T),
}

#[derive(Debug, Clone)]
struct Pending<T> {
    event: Scheduled<T>,
    background: bool,
}

/// Receivers of bus events.
pub trait Actors<T> {
    fn keys_for(&self, address: &str) -> Option<&KeyPair>;
    fn on_message(&mut self, bus: &mut Bus<T>, trace: &mut Trace, from: &str, to: &str, plaintext: Vec<u8>);
    fn on_timer(&mut self, bus: &mut Bus<T>, trace: &mut Trace, timer: T);
}

#[derive(Debug, Clone)]
pub struct Bus<T> {
    config: BusConfig,
    rng: ChaCha20Rng,
    now: u64,
    next_seq: u64,
    queue: BTreeMap<(u64, u64, u32), Pending<T>>,
    foreground: usize,
    endpoints: BTreeMap<String, PublicKey>,
    match_counts: Vec<u32>,
}

impl<T> Bus<T> {
    pub fn new(config: BusConfig) -> Self {
        assert!(config.latency.0 <= config.latency.1, "latency bounds reversed");
        Bus {
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            match_counts: vec![0; config.faults.len()],
            config,
            now: 0,
            next_seq: 0,
            queue: BTreeMap::new(),
            foreground: 0,
            endpoints: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &BusConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn reseed(&mut self, seed: u64) {
        self.config.seed = seed;
        self.rng = ChaCha20Rng::seed_from_u64(seed);
    }

    pub fn register(&mut self, address: &str, key: PublicKey) {
        self.endpoints.insert(address.to_string(), key);
    }

    pub fn endpoint_key(&self, address: &str) -> Option<&PublicKey> {
        self.endpoints.get(address)
    }

    pub fn add_fault(&mut self, fault: FaultRule) {
        self.config.faults.push(fault);
        self.match_counts.push(0);
    }

    pub fn clear_faults(&mut self) {
        self.config.faults.clear();
        self.match_counts.clear();
    }

    /// True while non-background events are queued.
    pub fn has_foreground(&self) -> bool {
        self.foreground > 0
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    fn schedule(&mut self, at: u64, seq: u64, copy: u32, event: Scheduled<T>, background: bool) {
        if !background {
            self.foreground += 1;
        }
        self.queue.insert((at, seq, copy), Pending { event, background });
    }

    pub fn schedule_timer(&mut self, delay: u64, timer: T, background: bool) {
        let seq = self.take_seq();
        self.schedule(self.now + delay, seq, 0, Scheduled::Timer(timer), background);
    }

    fn fault_for(&mut self, from: &str, to: &str, kind: &str) -> Option<FaultAction> {
        let mut fired = None;
        for (i, f) in self.config.faults.iter().enumerate() {
            if f.rule.matches(from, to, kind) {
                self.match_counts[i] += 1;
                let hit = f.rule.occurrence.is_none_or(|n| n == self.match_counts[i]);
                if hit && fired.is_none() {
                    fired = Some(f.action);
                }
            }
        }
        fired
    }

    /// Seals, signs and schedules one message. Returns the envelope sequence number.
    pub fn send(
        &mut self,
        sender: &KeyPair,
        from: &str,
        to: &str,
        kind: &str,
        plaintext: &[u8],
        trace: &mut Trace,
    ) -> Result<u64, TransportError> {
        if !self.endpoints.contains_key(from) {
            return Err(TransportError::UnknownEndpoint(from.to_string()));
        }
        let recipient = *self
            .endpoints
            .get(to)
            .ok_or_else(|| TransportError::UnknownEndpoint(to.to_string()))?;
        let seq = self.take_seq();
        let payload = seal(&mut self.rng, &recipient, seq, plaintext)?;
        let mut envelope = Envelope {
            from: from.to_string(),
            to: to.to_string(),
            seq,
            kind: kind.to_string(),
            payload,
            sender_signature: Signature { bytes: vec![], scheme_id: String::new() },
        };
        envelope.sender_signature = sender.sign_record(tags::ENVELOPE, &envelope.signed_part());

        let fault = self.fault_for(from, to, kind);
        let latency = self.rng.gen_range(self.config.latency.0..=self.config.latency.1);
        let random_drop = self.config.drop_rate > 0.0 && self.rng.gen_bool(self.config.drop_rate.min(1.0));
        let deliver_at = self.now + latency + if let Some(FaultAction::Delay(d)) = fault { d } else { 0 };

        let digest = envelope.payload_digest().to_hex();
        let bus_event = |kind: &str, extra: &[(&str, String)]| {
            let mut detail: BTreeMap<String, String> = [
                ("from", from.to_string()),
                ("to", to.to_string()),
                ("seq", seq.to_string()),
                ("kind", envelope.kind.clone()),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            detail.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
            TraceEvent {
                tick: self.now,
                actor: "bus".into(),
                kind: kind.into(),
                detail,
                payload_digest: Some(digest.clone()),
            }
        };
        trace.push(bus_event(
            "bus.send",
            &[("deliver_at", deliver_at.to_string()), ("len", envelope.payload.ciphertext.len().to_string())],
        ));

        match fault {
            Some(FaultAction::Drop) => {
                trace.push(bus_event("bus.drop", &[("reason", "fault".into())]));
                return Ok(seq);
            }
            _ if random_drop => {
                trace.push(bus_event("bus.drop", &[("reason", "random".into())]));
                return Ok(seq);
            }
            Some(FaultAction::Tamper) => {
                let last = envelope.payload.ciphertext.len() - 1;
                envelope.payload.ciphertext[last] ^= 0x01;
                trace.push(bus_event("bus.tamper", &[]));
            }
            Some(FaultAction::Duplicate) => {
                trace.push(bus_event("bus.duplicate", &[]));
                self.schedule(deliver_at + 1, seq, 1, Scheduled::Deliver(envelope.clone()), false);
            }
            Some(FaultAction::Delay(_)) => trace.push(bus_event("bus.delay", &[])),
            None => {}
        }
        self.schedule(deliver_at, seq, 0, Scheduled::Deliver(envelope), false);
        Ok(seq)
    }

    fn pop(&mut self) -> Option<(u64, Pending<T>)> {
        let (&key, _) = self.queue.iter().next()?;
        let pending = self.queue.remove(&key)?;
        if !pending.background {
            self.foreground -= 1;
        }
        Some((key.0, pending))
    }

    fn next_time(&self) -> Option<u64> {
        self.queue.keys().next().map(|k| k.0)
    }

    /// Moves the clock forward without processing events. Used for scripted
    /// clock jumps while the queue is empty.
    pub fn set_now(&mut self, now: u64) {
        self.now = self.now.max(now);
    }
}

fn dispatch<T, A: Actors<T>>(bus: &mut Bus<T>, actors: &mut A, trace: &mut Trace, pending: Pending<T>) {
    match pending.event {
        Scheduled::Timer(t) => actors.on_timer(bus, trace, t),
        Scheduled::Deliver(envelope) => {
            let digest = envelope.payload_digest().to_hex();
            let mut event = |kind: &str, reason: Option<&str>| {
                let mut detail = BTreeMap::from([
                    ("from".to_string(), envelope.from.clone()),
                    ("to".to_string(), envelope.to.clone()),
                    ("seq".to_string(), envelope.seq.to_string()),
                    ("kind".to_string(), envelope.kind.clone()),
                ]);
                if let Some(r) = reason {
                    detail.insert("reason".into(), r.into());
                }
                trace.push(TraceEvent {
                    tick: bus.now,
                    actor: "bus".into(),
                    kind: kind.into(),
                    detail,
                    payload_digest: Some(digest.clone()),
                });
            };
            let (Some(sender), Some(keys)) = (bus.endpoints.get(&envelope.from), actors.keys_for(&envelope.to)) else {
                event("bus.discard", Some("unknown-endpoint"));
                return;
            };
            match open(&envelope, sender, keys) {
                Ok(plaintext) => {
                    event("bus.deliver", None);
                    actors.on_message(bus, trace, &envelope.from, &envelope.to, plaintext);
                }
                Err(TransportError::BadSignature) => event("bus.discard", Some("bad-signature")),
                Err(_) => event("bus.discard", Some("decrypt")),
            }
        }
    }
}

/// Processes events in `(time, seq)` order until no foreground event is
/// left. Background timers due before the last foreground event run too.
/// Returns the number of ticks that elapsed.
pub fn run_until_quiescent<T, A: Actors<T>>(
    bus: &mut Bus<T>,
    actors: &mut A,
    trace: &mut Trace,
    ceiling: u64,
) -> Result<u64, TransportError> {
    let start = bus.now;
    while bus.has_foreground() {
        let at = bus.next_time().expect("foreground event queued");
        if at > ceiling {
            return Err(TransportError::TickCeilingExceeded { ceiling });
        }
        let (at, pending) = bus.pop().expect("queue nonempty");
        bus.now = bus.now.max(at);
        dispatch(bus, actors, trace, pending);
    }
    Ok(bus.now - start)
}

/// Processes every event due at or before `until`, then sets the clock to `until`.
pub fn run_until<T, A: Actors<T>>(
    bus: &mut Bus<T>,
    actors: &mut A,
    trace: &mut Trace,
    until: u64,
) {
    while let Some(at) = bus.next_time() {
        if at > until {
            break;
        }
        let (at, pending) = bus.pop().expect("queue nonempty");
        bus.now = bus.now.max(at);
        dispatch(bus, actors, trace, pending);
    }
    bus.set_now(until);
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Echo actors: every message is recorded; "ping" is answered with "pong".
    struct Echo {
        keys: BTreeMap<String, KeyPair>,
        got: Vec<(u64, String, Vec<u8>)>,
        timers: Vec<u32>,
    }

    impl Actors<u32> for Echo {
        fn keys_for(&self, address: &str) -> Option<&KeyPair> {
            self.keys.get(address)
        }
        fn on_message(&mut self, bus: &mut Bus<u32>, trace: &mut Trace, from: &str, to: &str, plaintext: Vec<u8>) {
            self.got.push((bus.now(), to.to_string(), plaintext.clone()));
            if plaintext == b"ping" {
                let k = self.keys[to].clone();
                bus.send(&k, to, from, "pong", b"pong", trace).unwrap();
            }
        }
        fn on_timer(&mut self, _bus: &mut Bus<u32>, _trace: &mut Trace, timer: u32) {
            self.timers.push(timer);
        }
    }

    fn setup(config: BusConfig) -> (Bus<u32>, Echo) {
        let mut bus = Bus::new(config);
        let mut keys = BTreeMap::new();
        for name in ["a", "b"] {
            let k = KeyPair::derive(name);
            bus.register(name, k.public_key);
            keys.insert(name.to_string(), k);
        }
        (bus, Echo { keys, got: vec![], timers: vec![] })
    }

    fn ping(bus: &mut Bus<u32>, echo: &Echo, trace: &mut Trace) {
        bus.send(&echo.keys["a"], "a", "b", "ping", b"ping", trace).unwrap();
    }

    #[test]
    fn seal_roundtrip_only_recipient_opens() {
        let b = KeyPair::derive("b");
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let sealed = seal(&mut rng, &b.public_key, 7, b"secret").unwrap();
        assert_eq!(unseal(&b, 7, &sealed).unwrap(), b"secret");
        assert_eq!(unseal(&KeyPair::derive("c"), 7, &sealed), Err(TransportError::Decrypt));
        assert_eq!(unseal(&b, 8, &sealed), Err(TransportError::Decrypt));
        assert!(!sealed.ciphertext.windows(6).any(|w| w == b"secret"));
    }

    #[test]
    fn delivery_within_latency_bounds() {
        let (mut bus, mut echo) = setup(BusConfig { latency: (2, 5), ..Default::default() });
        let mut trace = Trace::new();
        ping(&mut bus, &echo, &mut trace);
        run_until_quiescent(&mut bus, &mut echo, &mut trace, 1000).unwrap();
        assert_eq!(echo.got.len(), 2);
        let t = echo.got[0].0;
        assert!((2..=5).contains(&t));
        assert!((t + 2..=t + 5).contains(&echo.got[1].0));
    }

    #[test]
    fn no_pending_events_takes_zero_ticks() {
        let (mut bus, mut echo) = setup(BusConfig::default());
        assert_eq!(run_until_quiescent(&mut bus, &mut echo, &mut Trace::new(), 10), Ok(0));
    }

    #[test]
    fn full_drop_rate_delivers_nothing() {
        let (mut bus, mut echo) = setup(BusConfig { drop_rate: 1.0, ..Default::default() });
        let mut trace = Trace::new();
        ping(&mut bus, &echo, &mut trace);
        run_until_quiescent(&mut bus, &mut echo, &mut trace, 1000).unwrap();
        assert!(echo.got.is_empty());
        assert_eq!(trace.of_kind("bus.drop").count(), 1);
    }

    #[test]
    fn tampered_envelope_is_discarded() {
        let (mut bus, mut echo) = setup(BusConfig::default());
        bus.add_fault(FaultRule {
            rule: MatchRule { kind: Some("ping".into()), ..Default::default() },
            action: FaultAction::Tamper,
        });
        let mut trace = Trace::new();
        ping(&mut bus, &echo, &mut trace);
        run_until_quiescent(&mut bus, &mut echo, &mut trace, 1000).unwrap();
        assert!(echo.got.is_empty());
        let discard = trace.of_kind("bus.discard").next().unwrap();
        assert_eq!(discard.get("reason"), Some("bad-signature"));
    }

    #[test]
    fn occurrence_selects_nth_match_and_duplicate_delivers_twice() {
        let (mut bus, mut echo) = setup(BusConfig::default());
        bus.add_fault(FaultRule {
            rule: MatchRule { kind: Some("ping".into()), occurrence: Some(2), ..Default::default() },
            action: FaultAction::Duplicate,
        });
        let mut trace = Trace::new();
        ping(&mut bus, &echo, &mut trace);
        ping(&mut bus, &echo, &mut trace);
        run_until_quiescent(&mut bus, &mut echo, &mut trace, 1000).unwrap();
        let pings = echo.got.iter().filter(|g| g.2 == b"ping").count();
        assert_eq!(pings, 3);
    }

    #[test]
    fn unknown_endpoint_rejected() {
        let (mut bus, echo) = setup(BusConfig::default());
        assert_eq!(
            bus.send(&echo.keys["a"], "a", "zz", "ping", b"x", &mut Trace::new()),
            Err(TransportError::UnknownEndpoint("zz".into()))
        );
    }

    #[test]
    fn ceiling_detects_livelock() {
        struct Forever(KeyPair);
        impl Actors<u32> for Forever {
            fn keys_for(&self, _: &str) -> Option<&KeyPair> {
                Some(&self.0)
            }
            fn on_message(&mut self, bus: &mut Bus<u32>, trace: &mut Trace, from: &str, to: &str, p: Vec<u8>) {
                bus.send(&self.0.clone(), to, from, "loop", &p, trace).unwrap();
            }
            fn on_timer(&mut self, _: &mut Bus<u32>, _: &mut Trace, _: u32) {}
        }
        let k = KeyPair::derive("x");
        let mut bus = Bus::new(BusConfig::default());
        bus.register("x", k.public_key);
        let mut trace = Trace::new();
        bus.send(&k, "x", "x", "loop", b"", &mut trace).unwrap();
        assert_eq!(
            run_until_quiescent(&mut bus, &mut Forever(k), &mut trace, 50),
            Err(TransportError::TickCeilingExceeded { ceiling: 50 })
        );
    }

    #[test]
    fn background_timers_do_not_hold_quiescence() {
        let (mut bus, mut echo) = setup(BusConfig::default());
        let mut trace = Trace::new();
        bus.schedule_timer(100, 1, true);
        bus.schedule_timer(2, 2, false);
        run_until_quiescent(&mut bus, &mut echo, &mut trace, 1000).unwrap();
        assert_eq!(echo.timers, vec![2]);
        run_until(&mut bus, &mut echo, &mut trace, 150);
        assert_eq!(echo.timers, vec![2, 1]);
        assert_eq!(bus.now(), 150);
    }

    #[test]
    fn same_seed_same_trace() {
        let run = |seed| {
            let (mut bus, mut echo) = setup(BusConfig { seed, latency: (1, 9), ..Default::default() });
            let mut trace = Trace::new();
            for _ in 0..5 {
                ping(&mut bus, &echo, &mut trace);
            }
            run_until_quiescent(&mut bus, &mut echo, &mut trace, 1000).unwrap();
            trace.to_jsonl()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn trace_never_contains_plaintext() {
        let (mut bus, mut echo) = setup(BusConfig::default());
        let mut trace = Trace::new();
        let secret = b"CONFIDENTIAL-B/L";
        bus.send(&echo.keys["a"], "a", "b", "note", secret, &mut trace).unwrap();
        run_until_quiescent(&mut bus, &mut echo, &mut trace, 1000).unwrap();
        assert_eq!(echo.got[0].2, secret);
        let text = trace.to_jsonl();
        assert!(!text.contains("CONFIDENTIAL"));
        assert!(!text.contains(&hex::encode(secret)));
        assert_eq!(crate::trace::verify_events(trace.events()), Ok(()));
    }
}
