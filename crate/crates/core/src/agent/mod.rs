//! Interoperation agent: one per organization.
//!
//! An agent obtains its verinym and membership credentials (configuration),
//! and keeps its networks' records of foreign organizations in sync. A sync
//! session for one foreign organization runs through three phases:
//!
//! * `B` challenge the organization for a membership presentation,
//! * `C` fetch its self-signed identity bundle,
//! * `D` collect a countersignature from every other local organization and
//!   commit the record through the ledger's update contract.
//!
//! A countersigner repeats `B` itself and compares bundle digests before
//! signing. A digest mismatch sends the initiator back to `B` with the attempt
//! counter bumped, up to the retry limit.
//!
//! Agents are driven by the harness: each handler receives an [`AgentCtx`]
//! with read access to the registries, write access to the local ledgers, and
//! collects outgoing messages, timers and trace events.

pub mod messages;

use crate::credentials::{
    build_membership_vp, build_self_signed_vp, verify_membership_vp, verify_memberlist_vc,
    verify_self_signed_vp, MembershipVC, MemberlistVC, Nonce, VerifiablePresentation,
};
use crate::codec::{self, tags};
use crate::crypto::{verify_certificate_chain, AccumulatorWitness, CertificateChain, Digest, KeyPair};
use crate::network::{IdentityAction, LocalLedger, Network, RecordStatus};
use crate::registry::{Did, DidDocument, IinPool, IinSet, RegistryReader};
use messages::{CountersignReply, IdentityBundle, Msg, SessionRef, SignatureCollectionRequest};
use rand::RngCore;
use std::collections::{BTreeMap, BTreeSet};

pub const DEFAULT_RETRY_LIMIT: u32 = 3;
pub const DEFAULT_REQUEST_TIMEOUT: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentConfig {
    pub org_id: String,
    pub iin_id: String,
    pub home_networks: Vec<String>,
    /// Anchor that registers this organization's verinym.
    pub oiv: Did,
    /// Anchor issuing membership credentials, per home network.
    pub pmvs: BTreeMap<String, Did>,
    pub retry_limit: u32,
    pub request_timeout: u64,
    pub resync_interval: Option<u64>,
    /// Overrides the default `org:<org_id>` key derivation label.
    pub key_label: Option<String>,
}

impl AgentConfig {
    pub fn new(org_id: &str, iin_id: &str, oiv: Did) -> Self {
        AgentConfig {
            org_id: org_id.to_string(),
            iin_id: iin_id.to_string(),
            home_networks: Vec::new(),
            oiv,
            pmvs: BTreeMap::new(),
            retry_limit: DEFAULT_RETRY_LIMIT,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            resync_interval: None,
            key_label: None,
        }
    }

    pub fn home(mut self, network_id: &str, pmv: Did) -> Self {
        self.home_networks.push(network_id.to_string());
        self.pmvs.insert(network_id.to_string(), pmv);
        self
    }
}

pub fn org_key_label(org_id: &str) -> String {
    format!("org:{org_id}")
}

pub fn agent_address(org_id: &str) -> String {
    format!("agent:{org_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    B,
    C,
    D,
    Done,
    Failed,
}

impl Phase {
    /// Phases only move forward, except that a failed attempt restarts at `B`.
    pub fn can_move_to(self, next: Phase) -> bool {
        match (self, next) {
            (Phase::Failed, Phase::B) => true,
            (Phase::Done | Phase::Failed, _) => false,
            (_, Phase::Failed) => true,
            (a, b) => b > a,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::B => "B",
            Phase::C => "C",
            Phase::D => "D",
            Phase::Done => "DONE",
            Phase::Failed => "FAILED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("no trusted PMV for network {0:?}")]
    NoTrustedPmv(String),
    #[error("memberlist: {0}")]
    Memberlist(String),
    #[error("membership check {check} failed: {reason}")]
    Membership { check: u8, reason: String },
    #[error("identity bundle: {0}")]
    Identity(String),
    #[error("retries exhausted after {0} attempts")]
    RetriesExhausted(u32),
    #[error("missing countersignature from {0}")]
    MissingCountersignature(String),
    #[error("ledger rejected the update: {0}")]
    Ledger(String),
    #[error("registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgentTimer {
    Timeout { session: u64, round: u32 },
    Retry { session: u64 },
    Resync,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentEvent {
    pub actor: String,
    pub kind: String,
    pub detail: Vec<(String, String)>,
}

/// Environment handed to every agent handler.
pub struct AgentCtx<'a> {
    pub now: u64,
    pub registries: &'a BTreeMap<String, IinPool>,
    pub networks: &'a mut BTreeMap<String, Network>,
    pub rng: &'a mut dyn RngCore,
    pub sends: Vec<(String, Msg)>,
    pub timers: Vec<(u64, AgentTimer, bool)>,
    pub events: Vec<AgentEvent>,
}

impl<'a> AgentCtx<'a> {
    pub fn new(
        now: u64,
        registries: &'a BTreeMap<String, IinPool>,
        networks: &'a mut BTreeMap<String, Network>,
        rng: &'a mut dyn RngCore,
    ) -> Self {
        AgentCtx { now, registries, networks, rng, sends: Vec::new(), timers: Vec::new(), events: Vec::new() }
    }

    fn registry(&self) -> IinSet<'_> {
        IinSet(self.registries)
    }

    fn ledger(&self, network_id: &str) -> Option<&LocalLedger> {
        self.networks.get(network_id).map(|n| &n.ledger)
    }

    fn nonce(&mut self) -> Nonce {
        Nonce::random(&mut self.rng)
    }

    fn emit<V: ToString>(&mut self, actor: &str, kind: &str, detail: &[(&str, V)]) {
        self.events.push(AgentEvent {
            actor: actor.to_string(),
            kind: kind.to_string(),
            detail: detail.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigureStatus {
    NotStarted,
    Running,
    Done,
    Failed(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentStats {
    /// Mismatch replies received while initiating.
    pub digest_mismatches: u32,
    /// Mismatch replies sent while countersigning.
    pub mismatches_reported: u32,
    pub max_attempt: u32,
    pub commits: u32,
}

/// One initiator-side sync of a foreign organization into a local ledger.
#[derive(Debug, Clone)]
pub struct SyncSession {
    pub id: u64,
    pub local_network: String,
    pub foreign_network: String,
    pub target_did: Did,
    pub target_org: Option<String>,
    pub action: IdentityAction,
    pub phase: Phase,
    pub history: Vec<Phase>,
    pub attempt: u32,
    pub failure: Option<SyncError>,
    pub outcome: Option<String>,
    pub trigger: String,
    round: u32,
    endpoint: String,
    nonce: Nonce,
    bundle: Option<(CertificateChain, Digest)>,
    scr: Option<SignatureCollectionRequest>,
    awaiting: BTreeMap<String, String>,
}

impl SyncSession {
    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Done) || (self.phase == Phase::Failed && self.failure.is_some())
    }

    fn enter(&mut self, next: Phase) {
        debug_assert!(self.phase.can_move_to(next), "{:?} -> {:?}", self.phase, next);
        self.phase = next;
        self.history.push(next);
    }
}

#[derive(Debug, Clone)]
struct ConfigureSession {
    round: u32,
    awaiting_verinym: bool,
    pending: BTreeSet<String>,
}

#[derive(Debug, Clone)]
struct MemberlistSession {
    round: u32,
    local: String,
    foreign: String,
    pmv: Did,
    endpoint: String,
    nonce: Nonce,
    trigger: String,
}

#[derive(Debug, Clone)]
struct CountersignSession {
    round: u32,
    requester: String,
    reply_to: SessionRef,
    scr: SignatureCollectionRequest,
    endpoint: String,
    nonce: Nonce,
    phase: Phase,
}

#[derive(Debug, Clone)]
struct HolderSession {
    round: u32,
    requester: String,
    reply_to: SessionRef,
    network_id: String,
    nonce: Nonce,
    endpoint: String,
}

#[derive(Debug, Clone)]
enum Session {
    Configure(ConfigureSession),
    Memberlist(MemberlistSession),
    Countersign(CountersignSession),
    Holder(HolderSession),
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    keys: KeyPair,
    pub did: Did,
    pub address: String,
    pub credentials: BTreeMap<String, (MembershipVC, AccumulatorWitness)>,
    bundle_cache: BTreeMap<(String, Did), (CertificateChain, Digest)>,
    sessions: BTreeMap<u64, Session>,
    pub syncs: BTreeMap<u64, SyncSession>,
    pub configure_status: ConfigureStatus,
    pub stats: AgentStats,
    next_id: u64,
}

impl Agent {
    pub fn new(config: AgentConfig) -> Self {
        let label = config.key_label.clone().unwrap_or_else(|| org_key_label(&config.org_id));
        let keys = KeyPair::derive(&label);
        let did = Did::for_key(&config.iin_id, &keys.public_key);
        let address = agent_address(&config.org_id);
        Agent {
            config,
            keys,
            did,
            address,
            credentials: BTreeMap::new(),
            bundle_cache: BTreeMap::new(),
            sessions: BTreeMap::new(),
            syncs: BTreeMap::new(),
            configure_status: ConfigureStatus::NotStarted,
            stats: AgentStats::default(),
            next_id: 1,
        }
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn org_id(&self) -> &str {
        &self.config.org_id
    }

    pub fn document(&self) -> DidDocument {
        DidDocument::new(&self.config.iin_id, &self.config.org_id, self.keys.public_key, &self.address)
    }

    pub fn cached_bundle(&self, network_id: &str, org_did: &Did) -> Option<&Digest> {
        self.bundle_cache.get(&(network_id.to_string(), org_did.clone())).map(|(_, d)| d)
    }

    /// True when no session is waiting on a reply.
    pub fn idle(&self) -> bool {
        self.sessions.is_empty() && self.syncs.values().all(SyncSession::is_finished)
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Starts a new request round for session `id` and arms its timeout.
    fn begin_round(&self, ctx: &mut AgentCtx, id: u64, round: &mut u32) -> SessionRef {
        *round += 1;
        ctx.timers.push((
            self.config.request_timeout,
            AgentTimer::Timeout { session: id, round: *round },
            false,
        ));
        SessionRef { id, round: *round }
    }

    fn endpoint_of(&self, ctx: &AgentCtx, did: &Did) -> Result<(String, String), String> {
        let r = ctx.registry().resolve_did(did).map_err(|e| e.to_string())?;
        Ok((r.document.service_endpoint, r.document.alias))
    }

    fn emit<V: ToString>(&self, ctx: &mut AgentCtx, kind: &str, detail: &[(&str, V)]) {
        ctx.emit(&self.address, kind, detail);
    }

    // ---- configuration ---------------------------------------------------

    /// Obtains a verinym and one membership credential per home network.
    /// Re-running after success sends nothing.
    pub fn start_configure(&mut self, ctx: &mut AgentCtx) {
        let id = self.fresh_id();
        let mut s = ConfigureSession { round: 0, awaiting_verinym: false, pending: BTreeSet::new() };
        self.configure_status = ConfigureStatus::Running;
        match ctx.registry().resolve_did(&self.did) {
            Ok(r) if r.verinym => self.request_memberships(ctx, id, &mut s),
            _ => match self.endpoint_of(ctx, &self.config.oiv.clone()) {
                Ok((endpoint, _)) => {
                    s.awaiting_verinym = true;
                    let session = self.begin_round(ctx, id, &mut s.round);
                    ctx.sends.push((
                        endpoint,
                        Msg::VerinymRequest {
                            session,
                            org_name: self.config.org_id.clone(),
                            document: self.document(),
                        },
                    ));
                }
                Err(e) => return self.configure_failed(ctx, format!("OIV unresolvable: {e}")),
            },
        }
        if s.awaiting_verinym || !s.pending.is_empty() {
            self.sessions.insert(id, Session::Configure(s));
        }
    }

    fn request_memberships(&mut self, ctx: &mut AgentCtx, id: u64, s: &mut ConfigureSession) {
        s.awaiting_verinym = false;
        let wanted: Vec<String> = self
            .config
            .home_networks
            .iter()
            .filter(|n| !self.credentials.contains_key(*n))
            .cloned()
            .collect();
        if wanted.is_empty() {
            self.configure_status = ConfigureStatus::Done;
            self.emit(ctx, "agent.configured", &[("did", self.did.to_string())]);
            return;
        }
        let session = self.begin_round(ctx, id, &mut s.round);
        for net in wanted {
            let Some(pmv) = self.config.pmvs.get(&net).cloned() else {
                return self.configure_failed(ctx, format!("no PMV configured for {net}"));
            };
            match self.endpoint_of(ctx, &pmv) {
                Ok((endpoint, _)) => {
                    s.pending.insert(net.clone());
                    ctx.sends.push((endpoint, Msg::MembershipRequest { session, holder: self.did.clone(), network_id: net }));
                }
                Err(e) => return self.configure_failed(ctx, format!("PMV unresolvable: {e}")),
            }
        }
    }

    fn configure_failed(&mut self, ctx: &mut AgentCtx, reason: String) {
        self.emit(ctx, "agent.configure_failed", &[("reason", &reason)]);
        self.configure_status = ConfigureStatus::Failed(reason);
    }

    fn on_configure_reply(&mut self, ctx: &mut AgentCtx, id: u64, mut s: ConfigureSession, msg: Msg) {
        match msg {
            Msg::VerinymReply { result, .. } if s.awaiting_verinym => match result {
                Ok(()) => {
                    self.emit(ctx, "agent.verinym", &[("did", self.did.to_string())]);
                    self.request_memberships(ctx, id, &mut s);
                }
                Err(e) => return self.configure_failed(ctx, e),
            },
            Msg::MembershipReply { network_id, result, .. } if s.pending.contains(&network_id) => match result {
                Ok((vc, witness)) => {
                    s.pending.remove(&network_id);
                    self.emit(ctx, "agent.credential", &[("network", &network_id)]);
                    self.credentials.insert(network_id, (vc, witness));
                    if s.pending.is_empty() {
                        self.configure_status = ConfigureStatus::Done;
                        self.emit(ctx, "agent.configured", &[("did", self.did.to_string())]);
                    }
                }
                Err(e) => return self.configure_failed(ctx, e),
            },
            _ => {}
        }
        if matches!(self.configure_status, ConfigureStatus::Running) {
            self.sessions.insert(id, Session::Configure(s));
        }
    }

    // ---- sync initiation -------------------------------------------------

    /// Fetches the foreign network's memberlist from the trusted PMV, then
    /// syncs every listed or recorded organization.
    pub fn start_sync(
        &mut self,
        ctx: &mut AgentCtx,
        local: &str,
        foreign: &str,
        trigger: &str,
    ) -> Result<(), SyncError> {
        let ledger = ctx.ledger(local).ok_or_else(|| SyncError::NoTrustedPmv(foreign.to_string()))?;
        if !self.config.home_networks.iter().any(|n| n == local) || !ledger.is_interop(foreign) {
            self.emit(ctx, "agent.sync_refused", &[("local", local), ("foreign", foreign), ("reason", "NoTrustedPMV")]);
            return Err(SyncError::NoTrustedPmv(foreign.to_string()));
        }
        let Some(entry) = ledger.pmv_for(foreign).cloned() else {
            self.emit(ctx, "agent.sync_refused", &[("local", local), ("foreign", foreign), ("reason", "NoTrustedPMV")]);
            return Err(SyncError::NoTrustedPmv(foreign.to_string()));
        };
        let busy = self.sessions.values().any(|s| matches!(s, Session::Memberlist(m) if m.local == local && m.foreign == foreign));
        if busy {
            return Ok(());
        }
        let (endpoint, _) = self.endpoint_of(ctx, &entry.anchor_did).map_err(SyncError::Registry)?;
        let id = self.fresh_id();
        let nonce = ctx.nonce();
        let mut s = MemberlistSession {
            round: 0,
            local: local.to_string(),
            foreign: foreign.to_string(),
            pmv: entry.anchor_did,
            endpoint: endpoint.clone(),
            nonce,
            trigger: trigger.to_string(),
        };
        let session = self.begin_round(ctx, id, &mut s.round);
        self.emit(ctx, "agent.sync_start", &[("local", local), ("foreign", foreign), ("trigger", trigger)]);
        ctx.sends.push((endpoint, Msg::MemberlistRequest { session, network_id: foreign.to_string(), nonce }));
        self.sessions.insert(id, Session::Memberlist(s));
        Ok(())
    }

    fn on_memberlist(&mut self, ctx: &mut AgentCtx, s: MemberlistSession, result: Result<VerifiablePresentation, String>) {
        let checked = result.and_then(|vp| {
            if vp.presenter_did != s.pmv {
                return Err("memberlist presented by another DID".to_string());
            }
            let payload = verify_self_signed_vp(&vp, &ctx.registry(), &s.nonce).map_err(|e| e.to_string())?;
            let vc: MemberlistVC = codec::decode_tagged(tags::MEMBERLIST_VC, payload).map_err(|e| e.to_string())?;
            verify_memberlist_vc(&vc, &s.foreign, &s.pmv, &ctx.registry()).map_err(|e| e.to_string())?;
            Ok(vc)
        });
        let vc = match checked {
            Ok(vc) => vc,
            Err(e) => {
                self.emit(ctx, "agent.sync_failed", &[("foreign", &s.foreign), ("reason", &format!("memberlist: {e}"))]);
                return;
            }
        };
        self.emit(
            ctx,
            "agent.memberlist",
            &[
                ("network", s.foreign.clone()),
                ("version", vc.roster_version.to_string()),
                ("members", vc.member_dids.len().to_string()),
            ],
        );
        let mut targets: BTreeSet<Did> = vc.member_dids.into_iter().collect();
        if let Some(ledger) = ctx.ledger(&s.local) {
            targets.extend(
                ledger
                    .records_for(&s.foreign)
                    .filter(|r| r.status == RecordStatus::Active)
                    .map(|r| r.org_did.clone()),
            );
        }
        for target in targets {
            let busy = self.syncs.values().any(|x| {
                !x.is_finished() && x.local_network == s.local && x.foreign_network == s.foreign && x.target_did == target
            });
            if busy {
                continue;
            }
            let id = self.fresh_id();
            let mut sync = SyncSession {
                id,
                local_network: s.local.clone(),
                foreign_network: s.foreign.clone(),
                target_did: target,
                target_org: None,
                action: IdentityAction::Update,
                phase: Phase::B,
                history: vec![Phase::B],
                attempt: 1,
                failure: None,
                outcome: None,
                trigger: s.trigger.clone(),
                round: 0,
                endpoint: String::new(),
                nonce: Nonce([0; 16]),
                bundle: None,
                scr: None,
                awaiting: BTreeMap::new(),
            };
            self.stats.max_attempt = self.stats.max_attempt.max(1);
            self.sync_phase_b(ctx, &mut sync);
            self.syncs.insert(id, sync);
        }
    }

    fn sync_phase_b(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession) {
        match self.endpoint_of(ctx, &s.target_did) {
            Ok((endpoint, alias)) => {
                s.endpoint = endpoint;
                s.target_org = Some(alias);
            }
            Err(e) => return self.sync_fail(ctx, s, SyncError::Registry(e)),
        }
        s.nonce = ctx.nonce();
        let session = self.begin_round(ctx, s.id, &mut s.round);
        ctx.sends.push((
            s.endpoint.clone(),
            Msg::Challenge { session, network_id: s.foreign_network.clone(), nonce: s.nonce },
        ));
    }

    fn sync_phase_c(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession) {
        s.enter(Phase::C);
        s.nonce = ctx.nonce();
        let session = self.begin_round(ctx, s.id, &mut s.round);
        ctx.sends.push((
            s.endpoint.clone(),
            Msg::IdentityRequest { session, network_id: s.foreign_network.clone(), nonce: s.nonce },
        ));
    }

    fn sync_phase_d(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession) {
        s.enter(Phase::D);
        let (bundle, digest) = s.bundle.clone().expect("bundle known before D");
        let Some(ledger) = ctx.ledger(&s.local_network) else {
            return self.sync_fail(ctx, s, SyncError::Ledger("no such network".into()));
        };
        let others: Vec<(String, Did)> = ledger
            .orgs
            .values()
            .filter(|o| o.org_id != self.config.org_id)
            .map(|o| (o.org_id.clone(), o.did.clone()))
            .collect();
        let mut scr = SignatureCollectionRequest {
            local_network: s.local_network.clone(),
            foreign_network: s.foreign_network.clone(),
            foreign_org: s.target_org.clone().unwrap_or_default(),
            foreign_org_did: s.target_did.clone(),
            bundle_digest: digest,
            bundle,
            action: s.action,
            nonce: ctx.nonce(),
            initiator: self.config.org_id.clone(),
            responses: Vec::new(),
        };
        scr.add_response(scr.endorse(&self.config.org_id, &self.keys));
        s.awaiting.clear();
        for (org, did) in &others {
            match self.endpoint_of(ctx, did) {
                Ok((endpoint, _)) => {
                    s.awaiting.insert(org.clone(), endpoint);
                }
                Err(e) => return self.sync_fail(ctx, s, SyncError::Registry(e)),
            }
        }
        self.emit(
            ctx,
            "agent.collect",
            &[
                ("foreign", s.foreign_network.clone()),
                ("org", scr.foreign_org.clone()),
                ("action", s.action.as_str().to_string()),
                ("attempt", s.attempt.to_string()),
                ("digest", digest.to_hex()),
            ],
        );
        if s.awaiting.is_empty() {
            s.scr = Some(scr);
            return self.sync_commit(ctx, s);
        }
        let session = self.begin_round(ctx, s.id, &mut s.round);
        for endpoint in s.awaiting.values() {
            ctx.sends.push((endpoint.clone(), Msg::CountersignRequest { session, scr: scr.clone() }));
        }
        s.scr = Some(scr);
    }

    fn sync_commit(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession) {
        let scr = s.scr.take().expect("collection in progress");
        let now = ctx.now;
        let Some(net) = ctx.networks.get_mut(&s.local_network) else {
            return self.sync_fail(ctx, s, SyncError::Ledger("no such network".into()));
        };
        let required: Vec<String> = net.ledger.orgs.keys().cloned().collect();
        let mut endorsers: Vec<String> = scr.responses.iter().map(|e| e.org_id.clone()).collect();
        endorsers.sort();
        match net.ledger.cmdac_update_foreign_identity(scr.payload(), scr.nonce, scr.responses.clone(), now) {
            Ok(receipt) => {
                let outcome = format!("{:?}", receipt.outcome).to_lowercase();
                ctx.emit(
                    &format!("ledger:{}", s.local_network),
                    "ledger.commit",
                    &[
                        ("network", s.local_network.clone()),
                        ("foreign", scr.foreign_network.clone()),
                        ("org", scr.foreign_org.clone()),
                        ("action", scr.action.as_str().to_string()),
                        ("outcome", outcome.clone()),
                        ("height", receipt.height.to_string()),
                        ("digest", scr.bundle_digest.to_hex()),
                        ("initiator", scr.initiator.clone()),
                        ("attempt", s.attempt.to_string()),
                        ("required", required.join(",")),
                        ("endorsers", endorsers.join(",")),
                    ],
                );
                self.stats.commits += 1;
                s.outcome = Some(outcome);
                s.enter(Phase::Done);
                self.emit(ctx, "agent.sync_done", &[("org", scr.foreign_org.as_str()), ("foreign", scr.foreign_network.as_str())]);
            }
            Err(e) => {
                ctx.emit(
                    &format!("ledger:{}", s.local_network),
                    "ledger.reject",
                    &[("org", scr.foreign_org.clone()), ("reason", e.to_string())],
                );
                self.sync_fail(ctx, s, SyncError::Ledger(e.to_string()));
            }
        }
    }

    fn sync_fail(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession, err: SyncError) {
        self.emit(
            ctx,
            "agent.sync_failed",
            &[
                ("org", s.target_org.clone().unwrap_or_else(|| s.target_did.to_string())),
                ("foreign", s.foreign_network.clone()),
                ("phase", s.phase.as_str().to_string()),
                ("attempt", s.attempt.to_string()),
                ("reason", err.to_string()),
            ],
        );
        if s.phase != Phase::Failed {
            s.enter(Phase::Failed);
        }
        s.failure = Some(err);
    }

    /// Ends the attempt; schedules a restart at `B` unless the limit is hit.
    fn sync_retry(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession, exhausted: SyncError) {
        if s.attempt >= self.config.retry_limit {
            return self.sync_fail(ctx, s, exhausted);
        }
        s.enter(Phase::Failed);
        s.attempt += 1;
        s.round += 1;
        s.scr = None;
        s.awaiting.clear();
        self.stats.max_attempt = self.stats.max_attempt.max(s.attempt);
        self.emit(ctx, "agent.retry", &[("org", s.target_org.clone().unwrap_or_default()), ("attempt", s.attempt.to_string())]);
        ctx.timers.push((1, AgentTimer::Retry { session: s.id }, false));
    }

    fn sync_on_membership(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession, vp: Option<VerifiablePresentation>) {
        if s.phase != Phase::B {
            return;
        }
        match self.check_membership(ctx, &s.local_network, &s.foreign_network, &s.target_did, &s.nonce, vp) {
            Ok(()) => {
                self.emit(ctx, "agent.membership_verified", &[("org", s.target_org.clone().unwrap_or_default()), ("network", s.foreign_network.clone())]);
                self.sync_phase_c(ctx, s);
            }
            Err(err) => {
                let check = match &err {
                    SyncError::Membership { check, .. } => *check,
                    _ => 0,
                };
                self.emit(
                    ctx,
                    "agent.membership_rejected",
                    &[
                        ("org", s.target_org.clone().unwrap_or_default()),
                        ("network", s.foreign_network.clone()),
                        ("check", check.to_string()),
                        ("reason", err.to_string()),
                    ],
                );
                let active = s.target_org.as_ref().and_then(|org| {
                    ctx.ledger(&s.local_network)?
                        .record(&s.foreign_network, org)
                        .filter(|r| r.status == RecordStatus::Active && r.org_did == s.target_did)
                        .cloned()
                });
                match active {
                    Some(record) => {
                        s.action = IdentityAction::Revoke;
                        s.bundle = Some((record.bundle, record.bundle_digest));
                        self.sync_phase_d(ctx, s);
                    }
                    None => self.sync_fail(ctx, s, err),
                }
            }
        }
    }

    fn sync_on_identity(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession, vp: Option<VerifiablePresentation>) {
        if s.phase != Phase::C {
            return;
        }
        let org = s.target_org.clone().unwrap_or_default();
        let (chain, digest) = match self.check_identity(ctx, &s.foreign_network, &s.target_did, &org, &s.nonce, vp) {
            Ok(v) => v,
            Err(e) => return self.sync_fail(ctx, s, e),
        };
        self.bundle_cache.insert((s.foreign_network.clone(), s.target_did.clone()), (chain.clone(), digest));
        self.emit(ctx, "agent.bundle", &[("org", org.clone()), ("digest", digest.to_hex()), ("attempt", s.attempt.to_string())]);
        let current = ctx
            .ledger(&s.local_network)
            .and_then(|l| l.record(&s.foreign_network, &org))
            .is_some_and(|r| r.status == RecordStatus::Active && r.bundle_digest == digest && r.org_did == s.target_did);
        s.action = IdentityAction::Update;
        s.bundle = Some((chain, digest));
        if current {
            s.outcome = Some("up_to_date".into());
            s.enter(Phase::Done);
            self.emit(ctx, "agent.sync_done", &[("org", org.as_str()), ("foreign", s.foreign_network.as_str()), ("outcome", "up_to_date")]);
        } else {
            self.sync_phase_d(ctx, s);
        }
    }

    fn sync_on_countersign(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession, from: &str, reply: CountersignReply) {
        if s.phase != Phase::D {
            return;
        }
        let Some(org) = s.awaiting.iter().find(|(_, e)| e.as_str() == from).map(|(o, _)| o.clone()) else {
            return;
        };
        match reply {
            CountersignReply::Signed(e) => {
                let scr = s.scr.as_mut().expect("collection in progress");
                let valid = e.org_id == org
                    && ctx
                        .ledger(&s.local_network)
                        .and_then(|l| l.orgs.get(&org))
                        .is_some_and(|o| {
                            crate::network::endorsement_valid(
                                &o.admin_key,
                                &scr.foreign_network,
                                &scr.foreign_org,
                                &scr.bundle_digest,
                                &scr.nonce,
                                scr.action,
                                &e.signature,
                            )
                        });
                if !valid {
                    return;
                }
                scr.add_response(e);
                s.awaiting.remove(&org);
                if s.awaiting.is_empty() {
                    self.sync_commit(ctx, s);
                }
            }
            CountersignReply::DigestMismatch(theirs) => {
                self.stats.digest_mismatches += 1;
                let ours = s.bundle.as_ref().map(|(_, d)| d.to_hex()).unwrap_or_default();
                self.emit(
                    ctx,
                    "agent.digest_mismatch",
                    &[
                        ("org", s.target_org.clone().unwrap_or_default()),
                        ("countersigner", org),
                        ("ours", ours),
                        ("theirs", theirs.to_hex()),
                        ("attempt", s.attempt.to_string()),
                    ],
                );
                self.sync_retry(ctx, s, SyncError::RetriesExhausted(s.attempt));
            }
            CountersignReply::ValidationFailed(reason) => {
                self.emit(ctx, "agent.countersign_refused", &[("countersigner", org), ("reason", reason)]);
                self.sync_retry(ctx, s, SyncError::RetriesExhausted(s.attempt));
            }
        }
    }

    fn sync_on_timeout(&mut self, ctx: &mut AgentCtx, s: &mut SyncSession) {
        match s.phase {
            Phase::D => {
                let missing: Vec<String> = s.awaiting.keys().cloned().collect();
                self.sync_retry(ctx, s, SyncError::MissingCountersignature(missing.join(",")));
            }
            Phase::B | Phase::C => self.sync_retry(ctx, s, SyncError::RetriesExhausted(s.attempt)),
            _ => {}
        }
    }

    // ---- shared checks ---------------------------------------------------

    fn check_membership(
        &self,
        ctx: &AgentCtx,
        local: &str,
        foreign: &str,
        target: &Did,
        nonce: &Nonce,
        vp: Option<VerifiablePresentation>,
    ) -> Result<(), SyncError> {
        let vp = vp.ok_or(SyncError::Membership { check: 0, reason: "no presentation".into() })?;
        let trusted = ctx.ledger(local).map(|l| l.trusted_issuers(foreign)).unwrap_or_default();
        let claim = verify_membership_vp(&vp, foreign, nonce, &ctx.registry(), &trusted)
            .map_err(|e| SyncError::Membership { check: e.check_index(), reason: e.to_string() })?;
        if claim.holder_did != *target {
            return Err(SyncError::Membership { check: 2, reason: "presenter is not the challenged DID".into() });
        }
        Ok(())
    }

    fn check_identity(
        &self,
        ctx: &AgentCtx,
        foreign: &str,
        target: &Did,
        org: &str,
        nonce: &Nonce,
        vp: Option<VerifiablePresentation>,
    ) -> Result<(CertificateChain, Digest), SyncError> {
        let vp = vp.ok_or_else(|| SyncError::Identity("no identity presentation".into()))?;
        if vp.presenter_did != *target {
            return Err(SyncError::Identity("presented by another DID".into()));
        }
        let payload = verify_self_signed_vp(&vp, &ctx.registry(), nonce).map_err(|e| SyncError::Identity(e.to_string()))?;
        let bundle = IdentityBundle::from_bytes(payload).map_err(|_| SyncError::Identity("MalformedBundle".into()))?;
        if bundle.org_id != org || bundle.network_id != foreign {
            return Err(SyncError::Identity(format!(
                "bundle names {}/{}, expected {org}/{foreign}",
                bundle.network_id, bundle.org_id
            )));
        }
        let root = bundle.chain.root().ok_or_else(|| SyncError::Identity("MalformedBundle".into()))?;
        verify_certificate_chain(&bundle.chain, root, ctx.now).map_err(|e| SyncError::Identity(e.to_string()))?;
        let digest = bundle.chain.digest();
        Ok((bundle.chain, digest))
    }

    // ---- countersigning --------------------------------------------------

    fn on_countersign_request(&mut self, ctx: &mut AgentCtx, from: &str, reply_to: SessionRef, scr: SignatureCollectionRequest) {
        let reject = |ctx: &mut AgentCtx, reason: &str| {
            ctx.sends.push((
                from.to_string(),
                Msg::CountersignResponse { session: reply_to, reply: CountersignReply::ValidationFailed(reason.to_string()) },
            ));
        };
        if !self.config.home_networks.contains(&scr.local_network) {
            return reject(ctx, "not a member of the local network");
        }
        let initiator_ok = ctx.ledger(&scr.local_network).and_then(|l| l.orgs.get(&scr.initiator)).is_some_and(|o| {
            scr.responses.iter().any(|e| {
                e.org_id == scr.initiator
                    && crate::network::endorsement_valid(
                        &o.admin_key,
                        &scr.foreign_network,
                        &scr.foreign_org,
                        &scr.bundle_digest,
                        &scr.nonce,
                        scr.action,
                        &e.signature,
                    )
            })
        });
        if !initiator_ok {
            return reject(ctx, "initiator endorsement invalid");
        }
        if scr.bundle.digest() != scr.bundle_digest {
            return reject(ctx, "bundle does not match its digest");
        }
        let endpoint = match self.endpoint_of(ctx, &scr.foreign_org_did) {
            Ok((e, alias)) if alias == scr.foreign_org => e,
            Ok(_) => return reject(ctx, "org DID alias mismatch"),
            Err(e) => return reject(ctx, &e),
        };
        let id = self.fresh_id();
        let nonce = ctx.nonce();
        let mut s = CountersignSession {
            round: 0,
            requester: from.to_string(),
            reply_to,
            scr,
            endpoint,
            nonce,
            phase: Phase::B,
        };
        let session = self.begin_round(ctx, id, &mut s.round);
        ctx.sends.push((
            s.endpoint.clone(),
            Msg::Challenge { session, network_id: s.scr.foreign_network.clone(), nonce },
        ));
        self.sessions.insert(id, Session::Countersign(s));
    }

    fn countersign_reply(&mut self, ctx: &mut AgentCtx, s: &CountersignSession, reply: CountersignReply) {
        let kind = match &reply {
            CountersignReply::Signed(_) => "agent.countersigned",
            CountersignReply::DigestMismatch(_) => "agent.countersign_mismatch",
            CountersignReply::ValidationFailed(_) => "agent.countersign_declined",
        };
        self.emit(
            ctx,
            kind,
            &[
                ("org", s.scr.foreign_org.as_str()),
                ("initiator", s.scr.initiator.as_str()),
                ("action", s.scr.action.as_str()),
            ],
        );
        ctx.sends.push((s.requester.clone(), Msg::CountersignResponse { session: s.reply_to, reply }));
    }

    /// Returns the session back if it is still waiting.
    fn countersign_on_membership(
        &mut self,
        ctx: &mut AgentCtx,
        id: u64,
        mut s: CountersignSession,
        vp: Option<VerifiablePresentation>,
    ) -> Option<CountersignSession> {
        if s.phase != Phase::B {
            return Some(s);
        }
        let local = s.scr.local_network.clone();
        let checked = self.check_membership(ctx, &local, &s.scr.foreign_network, &s.scr.foreign_org_did, &s.nonce, vp);
        match (s.scr.action, checked) {
            (IdentityAction::Update, Err(e)) => {
                self.countersign_reply(ctx, &s, CountersignReply::ValidationFailed(e.to_string()));
                None
            }
            (IdentityAction::Update, Ok(())) => {
                let key = (s.scr.foreign_network.clone(), s.scr.foreign_org_did.clone());
                let cached = self
                    .bundle_cache
                    .get(&key)
                    .filter(|(chain, _)| chain.root().is_some_and(|r| verify_certificate_chain(chain, r, ctx.now).is_ok()))
                    .map(|(_, d)| *d);
                match cached {
                    Some(digest) => {
                        self.countersign_compare(ctx, &s, digest);
                        None
                    }
                    None => {
                        s.phase = Phase::C;
                        s.nonce = ctx.nonce();
                        let session = self.begin_round(ctx, id, &mut s.round);
                        ctx.sends.push((
                            s.endpoint.clone(),
                            Msg::IdentityRequest { session, network_id: s.scr.foreign_network.clone(), nonce: s.nonce },
                        ));
                        Some(s)
                    }
                }
            }
            (IdentityAction::Revoke, Err(_)) => {
                let matches = ctx
                    .ledger(&local)
                    .and_then(|l| l.record(&s.scr.foreign_network, &s.scr.foreign_org))
                    .is_some_and(|r| r.bundle_digest == s.scr.bundle_digest);
                let reply = if matches {
                    CountersignReply::Signed(s.scr.endorse(&self.config.org_id, &self.keys))
                } else {
                    CountersignReply::ValidationFailed("revocation does not match the recorded bundle".into())
                };
                self.countersign_reply(ctx, &s, reply);
                None
            }
            (IdentityAction::Revoke, Ok(())) => {
                self.countersign_reply(ctx, &s, CountersignReply::ValidationFailed("member still valid".into()));
                None
            }
        }
    }

    fn countersign_on_identity(&mut self, ctx: &mut AgentCtx, s: CountersignSession, vp: Option<VerifiablePresentation>) -> Option<CountersignSession> {
        if s.phase != Phase::C {
            return Some(s);
        }
        match self.check_identity(ctx, &s.scr.foreign_network, &s.scr.foreign_org_did, &s.scr.foreign_org, &s.nonce, vp) {
            Ok((chain, digest)) => {
                self.bundle_cache.insert((s.scr.foreign_network.clone(), s.scr.foreign_org_did.clone()), (chain, digest));
                self.countersign_compare(ctx, &s, digest);
            }
            Err(e) => self.countersign_reply(ctx, &s, CountersignReply::ValidationFailed(e.to_string())),
        }
        None
    }

    fn countersign_compare(&mut self, ctx: &mut AgentCtx, s: &CountersignSession, own: Digest) {
        if own == s.scr.bundle_digest {
            let e = s.scr.endorse(&self.config.org_id, &self.keys);
            self.countersign_reply(ctx, s, CountersignReply::Signed(e));
        } else {
            self.stats.mismatches_reported += 1;
            self.bundle_cache.remove(&(s.scr.foreign_network.clone(), s.scr.foreign_org_did.clone()));
            self.countersign_reply(ctx, s, CountersignReply::DigestMismatch(own));
        }
    }

    // ---- holder side -----------------------------------------------------

    fn membership_vp(&self, network_id: &str, nonce: Nonce) -> Option<VerifiablePresentation> {
        let (vc, witness) = self.credentials.get(network_id)?;
        build_membership_vp(&self.keys, vc, witness, nonce).ok()
    }

    fn on_challenge(&mut self, ctx: &mut AgentCtx, from: &str, reply_to: SessionRef, network_id: String, nonce: Nonce) {
        let stale = self.credentials.get(&network_id).and_then(|(vc, w)| {
            let state = ctx.registry().read_revocation(&vc.issuer_did).ok()?;
            (state.epoch != w.epoch).then(|| vc.issuer_did.clone())
        });
        let refresh_from = stale.and_then(|issuer| self.endpoint_of(ctx, &issuer).ok());
        match refresh_from {
            Some((endpoint, _)) => {
                let credential_id = self.credentials[&network_id].0.credential_id;
                let id = self.fresh_id();
                let mut s = HolderSession { round: 0, requester: from.to_string(), reply_to, network_id, nonce, endpoint };
                let session = self.begin_round(ctx, id, &mut s.round);
                ctx.sends.push((s.endpoint.clone(), Msg::WitnessRequest { session, credential_id }));
                self.sessions.insert(id, Session::Holder(s));
            }
            None => {
                let vp = self.membership_vp(&network_id, nonce);
                ctx.sends.push((from.to_string(), Msg::MembershipVp { session: reply_to, vp }));
            }
        }
    }

    fn holder_answer(&mut self, ctx: &mut AgentCtx, s: HolderSession, witness: Option<AccumulatorWitness>) {
        if let (Some(w), Some(entry)) = (witness, self.credentials.get_mut(&s.network_id)) {
            entry.1 = w;
        }
        let vp = self.membership_vp(&s.network_id, s.nonce);
        ctx.sends.push((s.requester, Msg::MembershipVp { session: s.reply_to, vp }));
    }

    fn on_identity_request(&mut self, ctx: &mut AgentCtx, from: &str, reply_to: SessionRef, network_id: String, nonce: Nonce) {
        let vp = self
            .config
            .home_networks
            .contains(&network_id)
            .then(|| ctx.networks.get(&network_id).and_then(|n| n.orgs.get(&self.config.org_id)))
            .flatten()
            .map(|org| {
                let bundle = IdentityBundle { org_id: self.config.org_id.clone(), network_id: network_id.clone(), chain: org.msp_bundle() };
                build_self_signed_vp(&self.keys, &self.did, bundle.to_bytes(), nonce)
            });
        ctx.sends.push((from.to_string(), Msg::IdentityVp { session: reply_to, vp }));
    }

    // ---- dispatch --------------------------------------------------------

    pub fn on_message(&mut self, ctx: &mut AgentCtx, from: &str, msg: Msg) {
        let sref = msg.session();
        match msg {
            Msg::Challenge { network_id, nonce, .. } => return self.on_challenge(ctx, from, sref, network_id, nonce),
            Msg::IdentityRequest { network_id, nonce, .. } => {
                return self.on_identity_request(ctx, from, sref, network_id, nonce)
            }
            Msg::CountersignRequest { scr, .. } => return self.on_countersign_request(ctx, from, sref, scr),
            _ => {}
        }

        if let Some(mut s) = self.syncs.remove(&sref.id) {
            if s.round == sref.round && (from == s.endpoint || matches!(msg, Msg::CountersignResponse { .. })) {
                match msg {
                    Msg::MembershipVp { vp, .. } => self.sync_on_membership(ctx, &mut s, vp),
                    Msg::IdentityVp { vp, .. } => self.sync_on_identity(ctx, &mut s, vp),
                    Msg::CountersignResponse { reply, .. } => self.sync_on_countersign(ctx, &mut s, from, reply),
                    _ => {}
                }
            }
            self.syncs.insert(sref.id, s);
            return;
        }

        let Some(session) = self.sessions.remove(&sref.id) else { return };
        let id = sref.id;
        let current = match &session {
            Session::Configure(s) => s.round,
            Session::Memberlist(s) => s.round,
            Session::Countersign(s) => s.round,
            Session::Holder(s) => s.round,
        };
        if current != sref.round {
            self.sessions.insert(id, session);
            return;
        }
        match (session, msg) {
            (Session::Configure(s), m @ (Msg::VerinymReply { .. } | Msg::MembershipReply { .. })) => {
                self.on_configure_reply(ctx, id, s, m)
            }
            (Session::Memberlist(s), Msg::MemberlistReply { result, .. }) if from == s.endpoint => {
                self.on_memberlist(ctx, s, result)
            }
            (Session::Holder(s), Msg::WitnessReply { witness, .. }) if from == s.endpoint => {
                self.holder_answer(ctx, s, witness)
            }
            (Session::Countersign(s), Msg::MembershipVp { vp, .. }) if from == s.endpoint => {
                if let Some(s) = self.countersign_on_membership(ctx, id, s, vp) {
                    self.sessions.insert(id, Session::Countersign(s));
                }
            }
            (Session::Countersign(s), Msg::IdentityVp { vp, .. }) if from == s.endpoint => {
                if let Some(s) = self.countersign_on_identity(ctx, s, vp) {
                    self.sessions.insert(id, Session::Countersign(s));
                }
            }
            (session, _) => {
                self.sessions.insert(id, session);
            }
        }
    }

    pub fn on_timer(&mut self, ctx: &mut AgentCtx, timer: AgentTimer) {
        match timer {
            AgentTimer::Resync => {
                self.resync_all(ctx, "periodic");
                if let Some(every) = self.config.resync_interval {
                    ctx.timers.push((every, AgentTimer::Resync, true));
                }
            }
            AgentTimer::Retry { session } => {
                if let Some(mut s) = self.syncs.remove(&session) {
                    if s.phase == Phase::Failed && s.failure.is_none() {
                        s.enter(Phase::B);
                        self.sync_phase_b(ctx, &mut s);
                    }
                    self.syncs.insert(session, s);
                }
            }
            AgentTimer::Timeout { session, round } => {
                if let Some(mut s) = self.syncs.remove(&session) {
                    if s.round == round && !s.is_finished() {
                        self.sync_on_timeout(ctx, &mut s);
                    }
                    self.syncs.insert(session, s);
                    return;
                }
                let Some(sess) = self.sessions.remove(&session) else { return };
                match sess {
                    Session::Configure(s) if s.round == round => {
                        self.configure_failed(ctx, "timeout".into());
                    }
                    Session::Memberlist(s) if s.round == round => {
                        self.emit(ctx, "agent.sync_failed", &[("foreign", s.foreign.as_str()), ("reason", "memberlist timeout")]);
                    }
                    Session::Countersign(s) if s.round == round => {
                        self.countersign_reply(ctx, &s, CountersignReply::ValidationFailed("timeout".into()));
                    }
                    Session::Holder(s) if s.round == round => self.holder_answer(ctx, s, None),
                    other => {
                        self.sessions.insert(session, other);
                    }
                }
            }
        }
    }

    /// Re-runs B through D for every interoperating network of every home network.
    pub fn resync_all(&mut self, ctx: &mut AgentCtx, trigger: &str) {
        self.emit(ctx, "agent.resync", &[("trigger", trigger)]);
        for local in self.config.home_networks.clone() {
            let foreign: Vec<String> = ctx.ledger(&local).map(|l| l.interop_networks.clone()).unwrap_or_default();
            for f in foreign {
                let _ = self.start_sync(ctx, &local, &f, trigger);
            }
        }
    }

    /// Arms the periodic resync timer if configured.
    pub fn arm_resync(&self, ctx: &mut AgentCtx) {
        if let Some(every) = self.config.resync_interval {
            ctx.timers.push((every, AgentTimer::Resync, true));
        }
    }

    /// A data proof from `foreign` failed verification on `local`.
    pub fn on_proof_failure(&mut self, ctx: &mut AgentCtx, local: &str, foreign: &str) -> Result<(), SyncError> {
        self.emit(ctx, "agent.resync", &[("trigger", "proof_failure"), ("local", local), ("foreign", foreign)]);
        self.start_sync(ctx, local, foreign, "proof_failure")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phase_transitions() {
        assert!(Phase::B.can_move_to(Phase::C));
        assert!(Phase::B.can_move_to(Phase::D));
        assert!(Phase::D.can_move_to(Phase::Done));
        assert!(Phase::C.can_move_to(Phase::Failed));
        assert!(Phase::Failed.can_move_to(Phase::B));
        assert!(!Phase::C.can_move_to(Phase::B));
        assert!(!Phase::Done.can_move_to(Phase::B));
        assert!(!Phase::Failed.can_move_to(Phase::C));
    }

    fn phase() -> impl Strategy<Value = Phase> {
        prop_oneof![Just(Phase::B), Just(Phase::C), Just(Phase::D), Just(Phase::Done), Just(Phase::Failed)]
    }

    proptest! {
        // Any accepted path never revisits an earlier phase except by way of FAILED.
        #[test]
        fn accepted_paths_are_monotone(steps in proptest::collection::vec(phase(), 0..20)) {
            let mut cur = Phase::B;
            let mut since_restart = vec![Phase::B];
            for next in steps {
                if cur.can_move_to(next) {
                    if next == Phase::B {
                        prop_assert_eq!(cur, Phase::Failed);
                        since_restart.clear();
                    } else {
                        prop_assert!(since_restart.iter().all(|p| *p < next || next == Phase::Failed));
                    }
                    since_restart.push(next);
                    cur = next;
                }
            }
        }
    }

    #[test]
    fn agent_identity_derivation() {
        let oiv = Did::new("iin1", "x");
        let a = Agent::new(AgentConfig::new("Seller", "iin1", oiv.clone()));
        let b = Agent::new(AgentConfig::new("Seller", "iin1", oiv));
        assert_eq!(a.did, b.did);
        assert_eq!(a.address, "agent:Seller");
        assert_eq!(a.document().alias, "Seller");
        assert!(a.did.matches_key(&KeyPair::derive("org:Seller").public_key));
    }
}
