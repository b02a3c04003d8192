//! Executes a scenario script against a [`World`] and collects a report.

use super::config::{Check, ScenarioConfig, Step};
use super::world::{World, WorldError};
use crate::agent::{ConfigureStatus, Phase};
use crate::credentials::{build_membership_vp, verify_membership_vp, Nonce, VerifiablePresentation};
use crate::crypto::{KeyPair, Validity};
use crate::network::{
    generate_data_proof, verify_data_proof, ForeignIdentityPayload, IdentityAction, RecordStatus, VerificationPolicy,
};
use crate::registry::IinSet;
use crate::trace::verify_events;
use crate::transport::{FaultRule, MatchRule};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    /// 1-based script step.
    pub step: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Trace length when the assertion was evaluated.
    pub trace_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub ticks: u64,
    pub assertions: Vec<AssertionResult>,
    pub errors: Vec<String>,
    pub ledger_hashes: BTreeMap<String, String>,
    pub registry_hashes: BTreeMap<String, String>,
    pub trace_events: usize,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "scenario {} seed {}: {} ticks, {} trace events\n",
            self.scenario, self.seed, self.ticks, self.trace_events
        );
        for a in &self.assertions {
            out.push_str(&format!(
                "  [{}] step {} {} ({}) @{}\n",
                if a.passed { "pass" } else { "FAIL" },
                a.step,
                a.name,
                a.detail,
                a.trace_offset
            ));
        }
        for e in &self.errors {
            out.push_str(&format!("  [error] {e}\n"));
        }
        out
    }
}

/// Fixed challenge used by harness-side presentation checks.
const HARNESS_NONCE: Nonce = Nonce([0x5a; 16]);

pub struct Runner {
    pub world: World,
    step_spans: Vec<(usize, usize)>,
    assertions: Vec<AssertionResult>,
    errors: Vec<String>,
}

/// Builds the world and runs every step. Only bootstrap failures are `Err`;
/// runtime failures end up in the report.
pub fn run_scenario(config: &ScenarioConfig, seed: Option<u64>, ceiling: Option<u64>) -> Result<(RunReport, World), WorldError> {
    let seed = seed.unwrap_or(config.seed);
    let mut world = World::build(config, seed)?;
    if let Some(c) = ceiling {
        world.tick_ceiling = c;
    }
    let mut runner = Runner::new(world);
    runner.run_steps(&config.steps);
    Ok(runner.finish(seed))
}

impl Runner {
    pub fn new(world: World) -> Self {
        Runner { world, step_spans: Vec::new(), assertions: Vec::new(), errors: Vec::new() }
    }

    /// Runs steps in order, stopping at the first runtime error.
    pub fn run_steps(&mut self, steps: &[Step]) {
        for step in steps {
            let start = self.world.trace.len();
            let index = self.step_spans.len() + 1;
            let result = self.step(index, step);
            self.step_spans.push((start, self.world.trace.len()));
            if let Err(e) = result {
                self.errors.push(format!("step {index}: {e}"));
                break;
            }
        }
    }

    pub fn finish(self, seed: u64) -> (RunReport, World) {
        let w = self.world;
        let report = RunReport {
            scenario: w.config.name.clone(),
            seed,
            ticks: w.now(),
            assertions: self.assertions,
            errors: self.errors,
            ledger_hashes: w.ledger_hashes(),
            registry_hashes: w.registry_hashes(),
            trace_events: w.trace.len(),
        };
        (report, w)
    }

    fn assert(&mut self, step: usize, name: String, passed: bool, detail: String) {
        let trace_offset = self.world.trace.len();
        self.world.trace.record(
            self.world.now(),
            "harness",
            "harness.assert",
            [("name", name.clone()), ("passed", passed.to_string())],
        );
        self.assertions.push(AssertionResult { step, name, passed, detail, trace_offset });
    }

    fn settle(&mut self) -> Result<(), String> {
        self.world.settle().map(|_| ()).map_err(|e| e.to_string())
    }

    fn step(&mut self, index: usize, step: &Step) -> Result<(), String> {
        let now = self.world.now();
        match step {
            Step::ConfigureIdentity { orgs } => {
                let orgs: Vec<String> =
                    if orgs.is_empty() { self.world.sim.agents.keys().cloned().collect() } else { orgs.clone() };
                for org in orgs {
                    self.world.drive(&org, |a, ctx| a.start_configure(ctx));
                }
                self.settle()
            }
            Step::Sync { network, foreign, initiators, concurrent } => {
                for org in initiators {
                    self.world.drive(org, |a, ctx| {
                        let _ = a.start_sync(ctx, network, foreign, "scripted");
                    });
                    if !concurrent {
                        self.settle()?;
                    }
                }
                self.settle()
            }
            Step::Revoke { anchor, org, network } => {
                let holder = self.world.sim.agents.get(org).ok_or("unknown org")?.did.clone();
                let sim = &mut self.world.sim;
                let a = sim.anchors.get_mut(anchor).ok_or("unknown anchor")?;
                let pool = sim.iins.get_mut(a.did().iin_id()).ok_or("anchor iin missing")?;
                a.revoke_membership(pool, &holder, network).map_err(|e| e.to_string())?;
                self.world.trace.record(now, &format!("anchor:{anchor}"), "anchor.revoke", [("org", org), ("network", network)]);
                self.world.record_registry_events();
                Ok(())
            }
            Step::RotateCert { network, org, validity } => {
                let o = self
                    .world
                    .sim
                    .networks
                    .get_mut(network)
                    .and_then(|n| n.orgs.get_mut(org))
                    .ok_or("unknown org seat")?;
                o.rotate(Validity::new(validity.0, validity.1));
                let generation = o.generation();
                self.world.trace.record(
                    now,
                    &format!("network:{network}"),
                    "network.rotate",
                    [("org", org.clone()), ("generation", generation.to_string())],
                );
                Ok(())
            }
            Step::DataProof { source, destination, data, policy, expect, resync_on_failure } => {
                let sim = &self.world.sim;
                let src = sim.networks.get(source).ok_or("unknown source")?;
                let policy = if policy.is_empty() {
                    VerificationPolicy::new(source, src.orgs.keys().cloned())
                } else {
                    VerificationPolicy::new(source, policy.iter().cloned())
                };
                let ledger = &sim.networks.get(destination).ok_or("unknown destination")?.ledger;
                let outcome = generate_data_proof(src, data.as_bytes(), &policy)
                    .and_then(|p| verify_data_proof(ledger, &p, &policy, now));
                let (name, detail) = match &outcome {
                    Ok(()) => ("ok".to_string(), "verified".to_string()),
                    Err(e) => (e.name().to_string(), e.to_string()),
                };
                self.world.trace.record(
                    now,
                    &format!("network:{destination}"),
                    "data_proof",
                    [("source", source.clone()), ("outcome", name.clone()), ("detail", detail.clone())],
                );
                if let Some(expected) = expect {
                    self.assert(
                        index,
                        format!("data_proof {source}->{destination} is {expected}"),
                        &name == expected,
                        format!("got {name}: {detail}"),
                    );
                }
                if let (Err(_), Some(org)) = (outcome, resync_on_failure) {
                    self.world.drive(org, |a, ctx| {
                        let _ = a.on_proof_failure(ctx, destination, source);
                    });
                    self.settle()?;
                }
                Ok(())
            }
            Step::Resync { org } => {
                self.world.drive(org, |a, ctx| a.resync_all(ctx, "periodic"));
                self.settle()
            }
            Step::Fault { from, to, kind, occurrence, fault } => {
                let rule = MatchRule { from: from.clone(), to: to.clone(), kind: kind.clone(), occurrence: *occurrence };
                self.world.trace.record(now, "harness", "harness.fault", [("action", format!("{fault:?}"))]);
                self.world.bus.add_fault(FaultRule { rule, action: *fault });
                Ok(())
            }
            Step::ClearFaults => {
                self.world.bus.clear_faults();
                Ok(())
            }
            Step::IinFault { iin, node, fault } => {
                self.world.sim.iins.get_mut(iin).ok_or("unknown iin")?.set_fault(*node, *fault);
                self.world.trace.record(now, "harness", "harness.iin_fault", [("iin", iin.clone()), ("node", node.to_string())]);
                Ok(())
            }
            Step::Advance { ticks } => self.world.advance(*ticks).map(|_| ()).map_err(|e| e.to_string()),
            Step::Assert(check) => {
                let (name, passed, detail) = self.check(check);
                self.assert(index, name, passed, detail);
                Ok(())
            }
        }
    }

    fn presentation(&self, holder: &str, network: &str) -> Option<VerifiablePresentation> {
        let agent = self.world.sim.agents.get(holder)?;
        let (vc, witness) = agent.credentials.get(network)?;
        build_membership_vp(agent.keys(), vc, witness, HARNESS_NONCE).ok()
    }

    fn check(&self, check: &Check) -> (String, bool, String) {
        let sim = &self.world.sim;
        match check {
            Check::RecordStatus { network, foreign, org, status } => {
                let got = sim.networks[network].ledger.record(foreign, org).map_or("ABSENT", |r| match r.status {
                    RecordStatus::Active => "ACTIVE",
                    RecordStatus::Revoked => "REVOKED",
                });
                (format!("{network} records {foreign}/{org} as {status}"), got == status, format!("got {got}"))
            }
            Check::RecordsMatchSource { network } => {
                let ledger = &sim.networks[network].ledger;
                let mut bad = Vec::new();
                let mut seen = 0;
                for f in &ledger.interop_networks {
                    for (org_id, org) in &sim.networks[f].orgs {
                        seen += 1;
                        let bundle = org.msp_bundle();
                        match ledger.record(f, org_id) {
                            Some(r) if r.status == RecordStatus::Active && r.bundle == bundle && r.bundle_digest == bundle.digest() => {}
                            Some(r) => bad.push(format!("{f}/{org_id} differs ({:?})", r.status)),
                            None => bad.push(format!("{f}/{org_id} absent")),
                        }
                    }
                }
                (
                    format!("{network} holds source bundles of all foreign orgs"),
                    bad.is_empty() && seen > 0,
                    if bad.is_empty() { format!("{seen} records match") } else { bad.join("; ") },
                )
            }
            Check::MembershipVp { verifier, holder, network, expect_check } => {
                let name = format!("{holder}'s {network} presentation to {verifier} yields check {expect_check}");
                let Some(vp) = self.presentation(holder, network) else {
                    return (name, false, "holder has no credential".into());
                };
                let trusted = sim.networks[verifier].ledger.trusted_issuers(network);
                let got = match verify_membership_vp(&vp, network, &HARNESS_NONCE, &IinSet(&sim.iins), &trusted) {
                    Ok(_) => 0,
                    Err(e) => e.check_index(),
                };
                (name, got == *expect_check, format!("got check {got}"))
            }
            Check::DigestMismatches { org, equals } => {
                let got = sim.agents[org].stats.digest_mismatches;
                (format!("{org} saw {equals} digest mismatches"), got == *equals, format!("got {got}"))
            }
            Check::MaxAttempts { org, at_most } => {
                let a = &sim.agents[org];
                let got = a.syncs.values().map(|s| s.attempt).max().unwrap_or(0);
                (format!("{org} used at most {at_most} attempts"), got <= *at_most, format!("max attempt {got}"))
            }
            Check::SessionsDone { org } => {
                let a = &sim.agents[org];
                let bad: Vec<String> = a
                    .syncs
                    .values()
                    .filter(|s| s.phase != Phase::Done)
                    .map(|s| {
                        format!(
                            "{}: {} {}",
                            s.target_org.clone().unwrap_or_default(),
                            s.phase.as_str(),
                            s.failure.as_ref().map(|f| f.to_string()).unwrap_or_default()
                        )
                    })
                    .collect();
                (
                    format!("every sync session of {org} is DONE"),
                    bad.is_empty() && !a.syncs.is_empty(),
                    if bad.is_empty() { format!("{} sessions", a.syncs.len()) } else { bad.join("; ") },
                )
            }
            Check::ConfigureStatus { org, expect } => {
                let status = &sim.agents[org].configure_status;
                let passed = match (expect.as_str(), status) {
                    ("done", ConfigureStatus::Done) => true,
                    ("failed", ConfigureStatus::Failed(_)) => true,
                    (e, ConfigureStatus::Failed(reason)) => {
                        e.strip_prefix("failed:").is_some_and(|want| reason.contains(want))
                    }
                    _ => false,
                };
                (format!("{org} configuration is {expect}"), passed, format!("{status:?}"))
            }
            Check::UnilateralWrite { network } => self.unilateral_write(network),
            Check::TraceSequence { sequence } => {
                let mut want = sequence.iter().peekable();
                for e in self.world.trace.events() {
                    let Some(m) = want.peek() else { break };
                    let hit = m.iter().all(|(k, v)| if k == "kind" { &e.kind == v } else { e.get(k) == Some(v.as_str()) });
                    if hit {
                        want.next();
                    }
                }
                let missing = want.next().map(|m| format!("{m:?}"));
                (
                    format!("trace contains a {}-event sequence", sequence.len()),
                    missing.is_none(),
                    missing.map_or("all matched in order".into(), |m| format!("unmatched from {m}")),
                )
            }
            Check::Privacy { holder, network, forbidden } => {
                let name = format!("{holder}'s {network} presentation omits {}", forbidden.join(","));
                let Some(vp) = self.presentation(holder, network) else {
                    return (name, false, "holder has no credential".into());
                };
                let mut blobs = vec![vp.to_bytes()];
                blobs.push(serde_json::to_vec(&vp).unwrap_or_default());
                let leaks: Vec<&String> = forbidden
                    .iter()
                    .filter(|f| blobs.iter().any(|b| b.windows(f.len()).any(|w| w == f.as_bytes())))
                    .collect();
                (name, leaks.is_empty(), if leaks.is_empty() { "no leak".into() } else { format!("found {leaks:?}") })
            }
            Check::ReplicasConverged { iin } => {
                let hashes = sim.iins[iin].state_hashes();
                let distinct: BTreeSet<_> = hashes.iter().collect();
                (format!("{iin} replicas converged"), distinct.len() == 1, format!("{} distinct hashes", distinct.len()))
            }
            Check::TrustGating => self.trust_gating(),
            Check::TraceValid => match verify_events(self.world.trace.events()) {
                Ok(()) => ("trace invariants hold".into(), true, "ok".into()),
                Err(e) => ("trace invariants hold".into(), false, e.to_string()),
            },
            Check::NoTraffic { step } => {
                let (s, e) = self.step_spans.get(step - 1).copied().unwrap_or((0, 0));
                let sent = self.world.trace.events()[s..e].iter().filter(|e| e.kind == "bus.send").count();
                (format!("step {step} sent no messages"), sent == 0, format!("{sent} sends"))
            }
        }
    }

    /// Every proper subset of local endorsers is rejected; the full set commits.
    fn unilateral_write(&self, network: &str) -> (String, bool, String) {
        let sim = &self.world.sim;
        let ledger = &sim.networks[network].ledger;
        let name = format!("{network} rejects every proper endorsement subset");
        let Some((foreign, org)) = ledger
            .interop_networks
            .iter()
            .find_map(|f| sim.networks[f].orgs.values().next().map(|o| (f.clone(), o)))
        else {
            return (name, false, "no foreign org to write".into());
        };
        let payload = ForeignIdentityPayload {
            network_id: foreign,
            org_id: org.org_id.clone(),
            org_did: sim.agents[&org.org_id].did.clone(),
            bundle: org.msp_bundle(),
            action: IdentityAction::Update,
        };
        let digest = payload.bundle_digest();
        let nonce = Nonce([0x77; 16]);
        let orgs: Vec<(&String, &KeyPair)> = ledger.orgs.keys().map(|o| (o, sim.agents[o].keys())).collect();
        let n = orgs.len();
        let mut failures = Vec::new();
        for mask in 0u32..(1 << n) {
            let endorsements = orgs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, (o, k))| crate::network::Endorsement {
                    org_id: (*o).clone(),
                    signature: crate::network::endorse(k, &payload.network_id, &payload.org_id, &digest, &nonce, payload.action),
                })
                .collect();
            let mut l = ledger.clone();
            let ok = l.cmdac_update_foreign_identity(payload.clone(), nonce, endorsements, self.world.now()).is_ok();
            let full = mask == (1 << n) - 1;
            if ok != full {
                failures.push(format!("subset {mask:#b} {}", if ok { "committed" } else { "rejected" }));
            }
        }
        (
            name,
            failures.is_empty(),
            if failures.is_empty() { format!("{} subsets checked", 1u32 << n) } else { failures.join("; ") },
        )
    }

    /// Agents only contact their own anchors, trusted anchors, and orgs of
    /// home or interoperating networks.
    fn trust_gating(&self) -> (String, bool, String) {
        let sim = &self.world.sim;
        let mut violations = Vec::new();
        for e in self.world.trace.of_kind("bus.send") {
            let (Some(from), Some(to)) = (e.get("from"), e.get("to")) else { continue };
            let Some(org) = from.strip_prefix("agent:") else { continue };
            let Some(agent) = sim.agents.get(org) else { continue };
            let homes = &agent.config.home_networks;
            let mut anchors: BTreeSet<_> = agent.config.pmvs.values().cloned().collect();
            anchors.insert(agent.config.oiv.clone());
            let mut orgs = BTreeSet::new();
            for h in homes {
                let l = &sim.networks[h].ledger;
                anchors.extend(l.trust_list.iter().map(|t| t.anchor_did.clone()));
                for net in std::iter::once(h).chain(l.interop_networks.iter()) {
                    orgs.extend(sim.networks[net].orgs.keys().map(|o| format!("agent:{o}")));
                }
            }
            let allowed = orgs.contains(to)
                || sim.anchors.values().any(|a| a.address() == to && anchors.contains(a.did()));
            if !allowed {
                violations.push(format!("{from}->{to}"));
            }
        }
        (
            "agents only contact trusted anchors and interoperating orgs".into(),
            violations.is_empty(),
            if violations.is_empty() { "ok".into() } else { violations.join(", ") },
        )
    }
}
