//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.

use iin_core::codec;
use iin_core::credentials::{build_membership_vp, verify_membership_vp, Nonce, VerifiablePresentation};
use iin_core::crypto::{accumulator_init, accumulator_revoke, witness_for, witness_verify, Digest, KeyPair, Validity};
use iin_core::harness::{bundled, parse_scenario, run_scenario, Check, RunReport, Runner, ScenarioConfig, Step, World};
use iin_core::network::{
    endorse, Endorsement, ForeignIdentityPayload, IdentityAction, LedgerTx, LocalLedger, LocalOrg, Organization,
};
use iin_core::registry::{Did, IinSet, RegistryState};
use std::process::ExitCode;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn scenario(name: &str) -> ScenarioConfig {
    parse_scenario(bundled(name).expect("bundled scenario")).expect("bundled scenario parses")
}

fn report_ok(report: &RunReport) -> Result<(), String> {
    if report.passed() {
        return Ok(());
    }
    let mut why: Vec<String> = report.failures().map(|a| format!("{} ({})", a.name, a.detail)).collect();
    why.extend(report.errors.iter().cloned());
    Err(why.join("; "))
}

/// Two-network world with every org configured and nothing synced yet.
fn configured_world(seed: u64) -> World {
    let mut config = scenario("two-network");
    config.steps.truncate(1);
    let mut runner = Runner::new(World::build(&config, seed).expect("bootstrap"));
    runner.run_steps(&config.steps);
    let (report, world) = runner.finish(seed);
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    world
}

fn sync_step(network: &str, foreign: &str, initiators: &[&str], concurrent: bool) -> Step {
    Step::Sync {
        network: network.into(),
        foreign: foreign.into(),
        initiators: initiators.iter().map(|s| s.to_string()).collect(),
        concurrent,
    }
}

/// Holder presentation with a witness refreshed from the issuing anchor, as an agent does before answering.
fn presentation(world: &World, holder: &str, network: &str, nonce: Nonce) -> VerifiablePresentation {
    let agent = world.sim.agent(holder).expect("agent");
    let (vc, witness) = &agent.credentials[network];
    let witness = world
        .sim
        .anchors
        .values()
        .find(|a| a.did() == &vc.issuer_did)
        .and_then(|a| a.refresh_witness(&vc.credential_id))
        .unwrap_or_else(|| witness.clone());
    build_membership_vp(agent.keys(), vc, &witness, nonce).expect("holder owns credential")
}

fn c1_two_network() -> Outcome {
    let started = Instant::now();
    let (report, world) = run_scenario(&scenario("two-network"), None, None).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    report_ok(&report)?;
    for (local, foreign, orgs) in [("STL", "SWT", ["Seller", "Buyer"]), ("SWT", "STL", ["Seller", "Carrier"])] {
        let ledger = &world.sim.networks[local].ledger;
        for org in orgs {
            let record = ledger.record(foreign, org).ok_or(format!("{local} lacks {foreign}/{org}"))?;
            let source = world.sim.networks[foreign].orgs[org].msp_bundle();
            ensure(codec::encode(&record.bundle) == codec::encode(&source), format!("{local}: {foreign}/{org} bundle differs"))?;
            ensure(record.bundle_digest == source.digest(), format!("{local}: {foreign}/{org} digest differs"))?;
        }
    }
    ensure(world.sim.iins["iin1"].state_hashes().len() == 4, "expected 4 registry nodes")?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("4 records byte-equal to source, {elapsed:.2?}"))
}

fn c2_data_plane_gate() -> Outcome {
    let mut runner = Runner::new(configured_world(2));
    let proof = |expect: &str| Step::DataProof {
        source: "STL".into(),
        destination: "SWT".into(),
        data: "invoice 31".into(),
        policy: vec!["Seller".into(), "Carrier".into()],
        expect: Some(expect.into()),
        resync_on_failure: None,
    };
    runner.run_steps(&[proof("NoIdentityRecord"), sync_step("SWT", "STL", &["Buyer"], false), proof("ok")]);
    let (report, _) = runner.finish(2);
    report_ok(&report)?;
    Ok("NoIdentityRecord before sync, verified after".into())
}

fn c3_revocation() -> Outcome {
    let (report, _) = run_scenario(&scenario("revoke-carrier"), None, None).map_err(|e| e.to_string())?;
    report_ok(&report)?;
    for want in ["yields check 6", "as REVOKED", "is RevokedMember"] {
        ensure(report.assertions.iter().any(|a| a.passed && a.name.contains(want)), format!("no passing {want:?}"))?;
    }
    Ok("check 6 failure, REVOKED record, RevokedMember proof".into())
}

fn c4_unilateral_write() -> Outcome {
    let orgs = ["Alpha", "Beta", "Gamma"];
    let keys: Vec<KeyPair> = orgs.iter().map(|o| KeyPair::derive(&format!("org:{o}"))).collect();
    let mut ledger = LocalLedger::new("N3");
    for (o, k) in orgs.iter().zip(&keys) {
        let did = Did::for_key("iin1", &k.public_key);
        ledger
            .submit(LedgerTx::RegisterOrg(LocalOrg { org_id: o.to_string(), did, admin_key: k.public_key }), 0)
            .map_err(|e| e.to_string())?;
    }
    ledger.submit(LedgerTx::AddInteropNetwork("F".into()), 0).map_err(|e| e.to_string())?;
    let foreign = Organization::new("F", "Remote", 1, Validity::new(0, 1_000), "agent:Remote");
    let payload = ForeignIdentityPayload {
        network_id: "F".into(),
        org_id: "Remote".into(),
        org_did: Did::for_key("iin1", &KeyPair::derive("org:Remote").public_key),
        bundle: foreign.msp_bundle(),
        action: IdentityAction::Update,
    };
    let digest = payload.bundle_digest();
    let nonce = Nonce([3; 16]);
    let mut rejected = 0;
    for mask in 1u32..8 {
        let endorsements: Vec<Endorsement> = (0..3)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| Endorsement {
                org_id: orgs[i].into(),
                signature: endorse(&keys[i], "F", "Remote", &digest, &nonce, IdentityAction::Update),
            })
            .collect();
        let mut l = ledger.clone();
        let result = l.cmdac_update_foreign_identity(payload.clone(), nonce, endorsements, 1);
        if mask == 7 {
            result.map_err(|e| format!("full set rejected: {e}"))?;
            ensure(l.record("F", "Remote").is_some(), "full set committed nothing")?;
        } else {
            ensure(result.is_err(), format!("subset {mask:03b} committed"))?;
            ensure(l.state_hash() == ledger.state_hash(), format!("subset {mask:03b} changed state"))?;
            rejected += 1;
        }
    }
    // the empty set as well
    let mut l = ledger.clone();
    ensure(l.cmdac_update_foreign_identity(payload, nonce, vec![], 1).is_err(), "empty set committed")?;
    Ok(format!("{rejected} proper non-empty subsets and the empty set rejected, full set commits"))
}

fn c5_concurrent_commit() -> Outcome {
    let base = configured_world(5);
    let swt_hash = |w: &World| w.sim.networks["SWT"].ledger.state_hash();

    let mut serial = Runner::new(base.clone());
    serial.run_steps(&[sync_step("SWT", "STL", &["Seller", "Buyer"], false)]);
    let (report, oracle_world) = serial.finish(5);
    report_ok(&report)?;
    let oracle = swt_hash(&oracle_world);

    let check = [
        Step::Assert(Check::RecordsMatchSource { network: "SWT".into() }),
        Step::Assert(Check::TraceValid),
    ];
    for seed in 0..100u64 {
        let mut world = base.clone();
        world.reseed(seed);
        let mut runner = Runner::new(world);
        runner.run_steps(&[sync_step("SWT", "STL", &["Seller", "Buyer"], true)]);
        runner.run_steps(&check);
        let (report, world) = runner.finish(seed);
        report_ok(&report).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(swt_hash(&world) == oracle, format!("seed {seed}: state hash differs from serial run"))?;
    }
    Ok(format!("100 seeds match serial state hash {}", &oracle.to_string()[..12]))
}

fn c6_retry() -> Outcome {
    let (report, world) = run_scenario(&scenario("retry-divergence"), None, None).map_err(|e| e.to_string())?;
    report_ok(&report)?;
    let events = world.trace.events();
    let mismatches: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == "agent.digest_mismatch" && e.actor == "agent:Buyer")
        .map(|(i, _)| i)
        .collect();
    ensure(mismatches.len() == 1, format!("{} digest mismatches", mismatches.len()))?;
    let commit = events.iter().enumerate().find(|(_, e)| {
        e.kind == "ledger.commit" && e.get("initiator") == Some("Buyer") && e.get("org") == Some("Carrier")
    });
    let (at, commit) = commit.ok_or("no commit for Carrier by Buyer")?;
    ensure(at > mismatches[0], "commit precedes the mismatch")?;
    ensure(commit.get("attempt") == Some("2"), format!("committed on attempt {:?}", commit.get("attempt")))?;
    let max = world.sim.agent("Buyer").unwrap().syncs.values().map(|s| s.attempt).max().unwrap_or(0);
    ensure(max <= 3, format!("{max} attempts"))?;
    Ok("one DIGEST_MISMATCH, committed on attempt 2".into())
}

fn c7_accumulator() -> Outcome {
    let started = Instant::now();
    let issuer = Did::new("iin1", "issuer");
    let universe: Vec<Digest> = (0..6u8).map(|i| Digest([i + 1; 32])).collect();
    let mut checks = 0;
    for mask in 0u32..64 {
        let members: Vec<Digest> = (0..6).filter(|i| mask & (1 << i) != 0).map(|i| universe[i]).collect();
        let (state, set) = accumulator_init(issuer.clone(), members.clone());
        // reference witnesses for non-members come from the full universe, re-stamped to this epoch
        let (full, full_set) = accumulator_init(issuer.clone(), universe.clone());
        for (i, c) in universe.iter().enumerate() {
            let member = mask & (1 << i) != 0;
            let witness = match witness_for(&state, &set, c) {
                Ok(w) => w,
                Err(_) => {
                    let mut w = witness_for(&full, &full_set, c).unwrap();
                    w.epoch = state.epoch;
                    w
                }
            };
            ensure(witness_verify(&state, &witness) == member, format!("mask {mask:06b}, element {i}"))?;
            checks += 1;
        }
        for revoked in &members {
            let (after, _) = accumulator_revoke(&state, &set, revoked).map_err(|e| e.to_string())?;
            for m in &members {
                let w = witness_for(&state, &set, m).unwrap();
                ensure(!witness_verify(&after, &w), format!("pre-revocation witness survived, mask {mask:06b}"))?;
                checks += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("{checks} witness checks agree with set membership, {elapsed:.2?}"))
}

fn c8_sabotage_matrix() -> Outcome {
    let world = configured_world(8);
    let nonce = Nonce([8; 16]);
    let other = Nonce([9; 16]);
    let state: &RegistryState = world.sim.iins["iin1"].sequencer_state();
    let trusted = world.sim.networks["SWT"].ledger.trusted_issuers("STL");
    let carrier = world.sim.agent("Carrier").unwrap();
    let carrier_did = carrier.did.clone();
    let honest = presentation(&world, "Carrier", "STL", nonce);
    let iin_core::credentials::PresentationBody::Membership { credential: vc, witness } = honest.body.clone() else {
        unreachable!()
    };
    verify_membership_vp(&honest, "STL", &nonce, state, &trusted).map_err(|e| format!("honest VP rejected: {e}"))?;

    let check = |vp: &VerifiablePresentation, net: &str, n: &Nonce, s: &RegistryState, t: &[Did]| {
        verify_membership_vp(vp, net, n, s, t).err().map_or(0, |e| e.check_index())
    };
    let mut cases: Vec<(&str, u8, u8)> = Vec::new();

    cases.push(("wrong challenge", 1, check(&honest, "STL", &other, state, &trusted)));

    let mut replayed = honest.clone();
    replayed.challenge_nonce = other;
    cases.push(("nonce rewritten after signing", 2, check(&replayed, "STL", &other, state, &trusted)));

    let mut no_verinym = state.clone();
    no_verinym.docs.get_mut(&carrier_did).unwrap().verinym_attestations.clear();
    cases.push(("presenter lost verinym", 3, check(&honest, "STL", &nonce, &no_verinym, &trusted)));

    let mut extra = vc.clone();
    extra.attributes.push(("extra".into(), "x".into()));
    let vp = build_membership_vp(carrier.keys(), &extra, &witness, nonce).unwrap();
    cases.push(("attribute outside schema", 4, check(&vp, "STL", &nonce, state, &trusted)));

    cases.push(("issuer not trusted", 5, check(&honest, "STL", &nonce, state, &[])));

    let mut revoked = world.clone();
    {
        let sim = &mut revoked.sim;
        let anchor = sim.anchors.get_mut("AnchorSTL").unwrap();
        anchor.revoke_membership(sim.iins.get_mut("iin1").unwrap(), &carrier_did, "STL").map_err(|e| e.to_string())?;
    }
    let after = revoked.sim.iins["iin1"].sequencer_state();
    cases.push(("credential revoked", 6, check(&honest, "STL", &nonce, after, &trusted)));

    cases.push(("credential for another network", 7, check(&honest, "SWT", &nonce, state, &trusted)));

    let wrong: Vec<String> = cases
        .iter()
        .filter(|(_, want, got)| want != got)
        .map(|(name, want, got)| format!("{name}: want {want}, got {got}"))
        .collect();
    ensure(wrong.is_empty(), wrong.join("; "))?;
    ensure(
        verify_membership_vp(&honest, "STL", &nonce, &IinSet(&world.sim.iins), &trusted).is_ok(),
        "multi-iin reader disagrees",
    )?;
    Ok(format!("{} sabotage cases fail at their intended check", cases.len()))
}

fn c9_privacy() -> Outcome {
    let world = configured_world(9);
    let seller = world.sim.agent("Seller").unwrap();
    ensure(seller.credentials.contains_key("STL"), "Seller lacks its STL membership")?;
    let vp = presentation(&world, "Seller", "SWT", Nonce([1; 16]));
    let bytes = vp.to_bytes();
    let json = serde_json::to_vec(&vp).unwrap();
    for blob in [&bytes, &json] {
        ensure(!blob.windows(3).any(|w| w == b"STL"), "presentation contains STL")?;
    }
    ensure(bytes.windows(3).any(|w| w == b"SWT"), "scan is blind: SWT not found either")?;
    Ok(format!("{} bytes scanned, no STL", bytes.len() + json.len()))
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (name, _) in iin_core::harness::BUNDLED {
        let config = scenario(name);
        let mut files = Vec::new();
        for run in 0..2 {
            let (_, world) = run_scenario(&config, None, None).map_err(|e| e.to_string())?;
            let path = dir.path().join(format!("{name}-{run}.jsonl"));
            world.trace.write(&path).map_err(|e| e.to_string())?;
            files.push(std::fs::read(path).map_err(|e| e.to_string())?);
        }
        ensure(files[0] == files[1], format!("{name}: traces differ"))?;
        ensure(!files[0].is_empty(), format!("{name}: empty trace"))?;
    }
    Ok(format!("{} scenarios replay byte-identically", iin_core::harness::BUNDLED.len()))
}

fn c11_rotation() -> Outcome {
    let (report, _) = run_scenario(&scenario("cert-rotation"), None, None).map_err(|e| e.to_string())?;
    report_ok(&report)?;
    ensure(report.assertions.iter().any(|a| a.name.contains("5-event sequence")), "sequence not asserted")?;
    Ok("ExpiredCertificate, proof_failure resync, commit, verified proof".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("two-network end to end", c1_two_network),
        ("data-plane gate", c2_data_plane_gate),
        ("revocation exclusion", c3_revocation),
        ("unilateral write impossible", c4_unilateral_write),
        ("concurrent idempotent commit", c5_concurrent_commit),
        ("retry on divergence", c6_retry),
        ("accumulator oracle equivalence", c7_accumulator),
        ("membership check sabotage matrix", c8_sabotage_matrix),
        ("presentation privacy", c9_privacy),
        ("trace determinism", c10_determinism),
        ("certificate rotation resync", c11_rotation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
