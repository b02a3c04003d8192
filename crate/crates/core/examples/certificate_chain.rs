//! MSP certificate chains: issue, verify, expire, and rotate an intermediate.

use iin_core::crypto::{verify_certificate_chain, Validity};
use iin_core::network::Organization;

fn main() {
    let mut carrier = Organization::new("STL", "Carrier", 2, Validity::new(0, 1_000), "agent:Carrier");
    let root = carrier.msp_root.clone();
    let bundle = carrier.msp_bundle();
    println!("bundle of {} certificates, digest {}", bundle.len(), bundle.digest());

    let peer = carrier.peer_chain(0);
    for now in [10, 999, 1_000, 5_000] {
        println!("peer chain at t={now}: {:?}", verify_certificate_chain(&peer, &root, now));
    }

    carrier.rotate(Validity::new(900, 100_000));
    let rotated = carrier.peer_chain(0);
    println!("generation {} bundle digest {}", carrier.generation(), carrier.msp_bundle().digest());
    println!("rotated peer chain at t=5000: {:?}", verify_certificate_chain(&rotated, &root, 5_000));
    println!("bundle changed: {}", bundle.digest() != carrier.msp_bundle().digest());
}
