//! Membership presentations: a holder proves membership to a verifier; replay,
//! another network, and revocation are each caught by a specific check.

use iin_core::credentials::{build_membership_vp, verify_membership_vp, Nonce};
use iin_core::harness::{bundled, parse_scenario, Runner, World};

fn main() {
    let mut config = parse_scenario(bundled("two-network").unwrap()).unwrap();
    config.steps.truncate(1);
    let mut runner = Runner::new(World::build(&config, 1).unwrap());
    runner.run_steps(&config.steps);
    let (_, mut world) = runner.finish(1);

    let carrier = world.sim.agent("Carrier").unwrap().clone();
    let anchor_did = world.sim.anchors["AnchorSTL"].did().clone();
    let (vc, _) = &carrier.credentials["STL"];
    let witness = world.sim.anchors["AnchorSTL"].refresh_witness(&vc.credential_id).unwrap();
    let nonce = Nonce([7; 16]);
    let vp = build_membership_vp(carrier.keys(), vc, &witness, nonce).unwrap();
    let registry = world.sim.iins["iin1"].sequencer_state();
    let trusted = [anchor_did];

    let show = |label: &str, r: Result<_, iin_core::credentials::MembershipCheckError>| match r {
        Ok(claim) => println!("{label}: accepted {claim:?}"),
        Err(e) => println!("{label}: rejected at check {} ({e})", e.check_index()),
    };
    show("honest", verify_membership_vp(&vp, "STL", &nonce, registry, &trusted));
    show("replayed", verify_membership_vp(&vp, "STL", &Nonce([8; 16]), registry, &trusted));
    show("other network", verify_membership_vp(&vp, "SWT", &nonce, registry, &trusted));
    show("untrusted issuer", verify_membership_vp(&vp, "STL", &nonce, registry, &[]));

    let sim = &mut world.sim;
    let anchor = sim.anchors.get_mut("AnchorSTL").unwrap();
    anchor.revoke_membership(sim.iins.get_mut("iin1").unwrap(), &carrier.did, "STL").unwrap();
    show("after revocation", verify_membership_vp(&vp, "STL", &nonce, sim.iins["iin1"].sequencer_state(), &trusted));
}
