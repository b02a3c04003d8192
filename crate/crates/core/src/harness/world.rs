//! Everything a scenario wires together, and the bus actor that routes to it.

use super::config::ScenarioConfig;
use crate::agent::messages::Msg;
use crate::agent::{agent_address, org_key_label, Agent, AgentConfig, AgentCtx, AgentTimer};
use crate::anchors::{Anchor, AnchorError, Steward};
use crate::codec::{self, tags};
use crate::credentials::build_self_signed_vp;
use crate::crypto::{KeyPair, Validity};
use crate::network::{LedgerTx, LocalOrg, Network, Organization, TrustEntry};
use crate::registry::{Genesis, IinPool, RegistryReader};
use crate::trace::Trace;
use crate::transport::{run_until, run_until_quiescent, Actors, Bus, BusConfig, TransportError};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    Agent { org: String, timer: AgentTimer },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("bootstrap: {0}")]
    Bootstrap(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl From<AnchorError> for WorldError {
    fn from(e: AnchorError) -> Self {
        WorldError::Bootstrap(e.to_string())
    }
}

/// The actors: IIN pools, anchors, networks and agents.
#[derive(Debug, Clone)]
pub struct Sim {
    pub iins: BTreeMap<String, IinPool>,
    pub anchors: BTreeMap<String, Anchor>,
    pub networks: BTreeMap<String, Network>,
    pub agents: BTreeMap<String, Agent>,
    rng: ChaCha20Rng,
    anchor_at: BTreeMap<String, String>,
    agent_at: BTreeMap<String, String>,
}

fn nonce_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ 0x6e6f_6e63_6573)
}

impl Sim {
    fn drain_registry(&mut self, trace: &mut Trace, tick: u64) {
        for (id, pool) in self.iins.iter_mut() {
            for e in pool.drain_events() {
                trace.record(
                    tick,
                    &format!("iin:{id}"),
                    "iin.commit",
                    [
                        ("seq", e.sequence.to_string()),
                        ("kind", e.kind.as_str().to_string()),
                        ("submitter", e.submitter.to_string()),
                        ("outcome", e.outcome.to_string()),
                    ],
                );
            }
        }
    }

    /// Runs one agent handler and applies its effects to the bus and trace.
    pub fn drive(&mut self, bus: &mut Bus<Timer>, trace: &mut Trace, org: &str, f: impl FnOnce(&mut Agent, &mut AgentCtx)) {
        let Some(agent) = self.agents.get_mut(org) else { return };
        let now = bus.now();
        let mut ctx = AgentCtx::new(now, &self.iins, &mut self.networks, &mut self.rng);
        f(agent, &mut ctx);
        let AgentCtx { sends, timers, events, .. } = ctx;
        for e in events {
            trace.record(now, &e.actor, &e.kind, e.detail);
        }
        for (to, msg) in sends {
            if let Err(e) = bus.send(agent.keys(), &agent.address, &to, msg.kind(), &msg.to_bytes(), trace) {
                trace.record(now, &agent.address, "agent.send_error", [("to", to), ("reason", e.to_string())]);
            }
        }
        for (delay, timer, background) in timers {
            bus.schedule_timer(delay, Timer::Agent { org: org.to_string(), timer }, background);
        }
    }

    fn on_anchor_message(&mut self, bus: &mut Bus<Timer>, trace: &mut Trace, name: &str, from: &str, msg: Msg) {
        let Some(anchor) = self.anchors.get_mut(name) else { return };
        let Some(pool) = self.iins.get_mut(anchor.did().iin_id()) else { return };
        let reply = match msg {
            Msg::VerinymRequest { session, org_name, document } => Msg::VerinymReply {
                session,
                result: anchor.register_verinym(pool, &org_name, &document).map(|_| ()).map_err(|e| format!("{e:?}")),
            },
            Msg::MembershipRequest { session, holder, network_id } => {
                let from_holder = pool.resolve_did(&holder).is_ok_and(|r| r.document.service_endpoint == from);
                let result = if from_holder {
                    anchor
                        .issue_membership_vc(pool, &holder, &network_id)
                        .map(|i| (i.credential, i.witness))
                        .map_err(|e| format!("{e:?}"))
                } else {
                    Err("RequesterNotHolder".to_string())
                };
                Msg::MembershipReply { session, network_id, result }
            }
            Msg::MemberlistRequest { session, network_id, nonce } => Msg::MemberlistReply {
                session,
                result: anchor
                    .issue_memberlist_vc(&network_id)
                    .map(|vc| {
                        build_self_signed_vp(anchor.keys(), anchor.did(), codec::encode_tagged(tags::MEMBERLIST_VC, &vc), nonce)
                    })
                    .map_err(|e| format!("{e:?}")),
            },
            Msg::WitnessRequest { session, credential_id } => {
                Msg::WitnessReply { session, witness: anchor.refresh_witness(&credential_id) }
            }
            _ => return,
        };
        let (keys, address) = (anchor.keys().clone(), anchor.address());
        self.drain_registry(trace, bus.now());
        if let Err(e) = bus.send(&keys, &address, from, reply.kind(), &reply.to_bytes(), trace) {
            trace.record(bus.now(), &address, "anchor.send_error", [("reason", e.to_string())]);
        }
    }

    pub fn agent(&self, org: &str) -> Option<&Agent> {
        self.agents.get(org)
    }
}

impl Actors<Timer> for Sim {
    fn keys_for(&self, address: &str) -> Option<&KeyPair> {
        if let Some(org) = self.agent_at.get(address) {
            return self.agents.get(org).map(Agent::keys);
        }
        self.anchor_at.get(address).and_then(|a| self.anchors.get(a)).map(Anchor::keys)
    }

    fn on_message(&mut self, bus: &mut Bus<Timer>, trace: &mut Trace, from: &str, to: &str, plaintext: Vec<u8>) {
        let msg = match Msg::from_bytes(&plaintext) {
            Ok(m) => m,
            Err(e) => {
                trace.record(bus.now(), to, "actor.decode_error", [("reason", e.to_string())]);
                return;
            }
        };
        if let Some(org) = self.agent_at.get(to).cloned() {
            self.drive(bus, trace, &org, |agent, ctx| agent.on_message(ctx, from, msg));
        } else if let Some(name) = self.anchor_at.get(to).cloned() {
            self.on_anchor_message(bus, trace, &name, from, msg);
        }
    }

    fn on_timer(&mut self, bus: &mut Bus<Timer>, trace: &mut Trace, timer: Timer) {
        let Timer::Agent { org, timer } = timer;
        self.drive(bus, trace, &org, |agent, ctx| agent.on_timer(ctx, timer));
    }
}

/// A bootstrapped scenario: bus, trace and actors.
#[derive(Debug, Clone)]
pub struct World {
    pub config: ScenarioConfig,
    pub bus: Bus<Timer>,
    pub trace: Trace,
    pub sim: Sim,
    pub tick_ceiling: u64,
}

impl World {
    /// Builds registries, anchors, networks and agents from a validated config.
    pub fn build(config: &ScenarioConfig, seed: u64) -> Result<World, WorldError> {
        let mut trace = Trace::new();
        let mut bus = Bus::new(BusConfig {
            seed,
            latency: config.bus.latency,
            drop_rate: config.bus.drop_rate,
            faults: Vec::new(),
        });
        trace.record(0, "harness", "world.bootstrap", [("scenario", config.name.clone()), ("seed", seed.to_string())]);

        let mut iins = BTreeMap::new();
        let mut stewards = BTreeMap::new();
        for spec in &config.iins {
            let s: Vec<Steward> = (0..spec.nodes).map(|i| Steward::new(&spec.id, &format!("Steward{i}"))).collect();
            let genesis = Genesis {
                iin_id: spec.id.clone(),
                verinym_threshold: spec.verinym_threshold,
                stewards: s.iter().map(Steward::genesis_document).collect(),
                node_keys: vec![],
            };
            let node_keys = (0..spec.nodes).map(|i| KeyPair::derive(&format!("node:{}:{i}", spec.id))).collect();
            let mut pool = IinPool::new(genesis, node_keys);
            s[0].publish_schemas(&mut pool)?;
            iins.insert(spec.id.clone(), pool);
            stewards.insert(spec.id.clone(), s);
        }

        let mut anchors = BTreeMap::new();
        let mut anchor_at = BTreeMap::new();
        for spec in &config.anchors {
            let eligible = spec
                .roster
                .iter()
                .map(|(n, m)| (n.clone(), m.iter().cloned().collect::<BTreeSet<_>>()))
                .collect();
            let whitelist = spec
                .whitelist
                .iter()
                .map(|o| (o.clone(), KeyPair::derive(&org_key_label(o)).public_key))
                .collect();
            let mut anchor = Anchor::new(&spec.name, &spec.iin, spec.roles.iter().copied(), eligible, whitelist);
            let pool = iins.get_mut(&spec.iin).expect("validated");
            stewards[&spec.iin][0].enroll_anchor(pool, &anchor)?;
            if anchor.has_role(crate::registry::Role::Pmv) {
                anchor.publish(pool)?;
            }
            bus.register(&anchor.address(), anchor.keys().public_key);
            anchor_at.insert(anchor.address(), spec.name.clone());
            anchors.insert(spec.name.clone(), anchor);
        }

        let mut agents = BTreeMap::new();
        let mut agent_at = BTreeMap::new();
        for spec in &config.orgs {
            let mut ac = AgentConfig::new(&spec.name, &spec.iin, anchors[&spec.oiv].did().clone());
            for (net, pmv) in &spec.pmv {
                ac = ac.home(net, anchors[pmv].did().clone());
            }
            ac.retry_limit = spec.retry_limit;
            ac.request_timeout = spec.request_timeout;
            ac.resync_interval = spec.resync_interval;
            ac.key_label = spec.key_label.clone();
            let agent = Agent::new(ac);
            bus.register(&agent.address, agent.keys().public_key);
            agent_at.insert(agent.address.clone(), spec.name.clone());
            agents.insert(spec.name.clone(), agent);
        }

        let mut networks = BTreeMap::new();
        for spec in &config.networks {
            let mut net = Network::new(&spec.id);
            for seat in &spec.orgs {
                let (from, to) = seat.validity.unwrap_or(spec.msp_validity);
                net.add_org(Organization::new(&spec.id, &seat.name, seat.peers, Validity::new(from, to), &agent_address(&seat.name)));
                let agent: &Agent = &agents[&seat.name];
                let org = LocalOrg { org_id: seat.name.clone(), did: agent.did.clone(), admin_key: agent.keys().public_key };
                net.ledger.submit(LedgerTx::RegisterOrg(org), 0).map_err(|e| WorldError::Bootstrap(e.to_string()))?;
            }
            for f in &spec.interop {
                net.ledger.submit(LedgerTx::AddInteropNetwork(f.clone()), 0).map_err(|e| WorldError::Bootstrap(e.to_string()))?;
            }
            for t in &spec.trust {
                let anchor = &anchors[&t.anchor];
                let entry = TrustEntry {
                    iin_id: anchor.did().iin_id().to_string(),
                    anchor_did: anchor.did().clone(),
                    network_id: t.network.clone(),
                };
                net.ledger.submit(LedgerTx::AddTrustEntry(entry), 0).map_err(|e| WorldError::Bootstrap(e.to_string()))?;
            }
            networks.insert(spec.id.clone(), net);
        }

        let mut sim = Sim { iins, anchors, networks, agents, rng: nonce_rng(seed), anchor_at, agent_at };
        sim.drain_registry(&mut trace, 0);
        let orgs: Vec<String> = sim.agents.keys().cloned().collect();
        for org in orgs {
            sim.drive(&mut bus, &mut trace, &org, |a, ctx| a.arm_resync(ctx));
        }
        Ok(World { config: config.clone(), bus, trace, sim, tick_ceiling: config.tick_ceiling })
    }

    /// Re-seeds the bus and nonce generator; used to replay one bootstrapped
    /// state under many interleavings.
    pub fn reseed(&mut self, seed: u64) {
        self.bus.reseed(seed);
        self.sim.rng = nonce_rng(seed);
    }

    pub fn now(&self) -> u64 {
        self.bus.now()
    }

    /// Runs until no foreground event is pending.
    pub fn settle(&mut self) -> Result<u64, TransportError> {
        run_until_quiescent(&mut self.bus, &mut self.sim, &mut self.trace, self.tick_ceiling)
    }

    /// Advances the clock, firing anything due, then settles.
    pub fn advance(&mut self, ticks: u64) -> Result<u64, TransportError> {
        let until = self.bus.now() + ticks;
        if until > self.tick_ceiling {
            return Err(TransportError::TickCeilingExceeded { ceiling: self.tick_ceiling });
        }
        run_until(&mut self.bus, &mut self.sim, &mut self.trace, until);
        self.settle()
    }

    pub fn drive(&mut self, org: &str, f: impl FnOnce(&mut Agent, &mut AgentCtx)) {
        self.sim.drive(&mut self.bus, &mut self.trace, org, f);
    }

    pub fn record_registry_events(&mut self) {
        let now = self.bus.now();
        self.sim.drain_registry(&mut self.trace, now);
    }

    pub fn ledger_hashes(&self) -> BTreeMap<String, String> {
        self.sim.networks.iter().map(|(id, n)| (id.clone(), n.ledger.state_hash().to_hex())).collect()
    }

    pub fn registry_hashes(&self) -> BTreeMap<String, String> {
        self.sim
            .iins
            .iter()
            .map(|(id, p)| (id.clone(), p.sequencer_state().state_hash().to_hex()))
            .collect()
    }
}
