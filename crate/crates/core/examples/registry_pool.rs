//! A four-node identity registry: anchors enroll, a verinym is registered, and
//! reads survive a faulty node but not three.

use iin_core::anchors::{Anchor, Steward};
use iin_core::crypto::KeyPair;
use iin_core::registry::{Genesis, IinPool, NodeFault, RegistryReader, Role};
use iin_core::registry::DidDocument;
use std::collections::BTreeMap;

fn main() {
    let stewards: Vec<Steward> = (0..4).map(|i| Steward::new("iin1", &format!("Steward{i}"))).collect();
    let genesis = Genesis {
        iin_id: "iin1".into(),
        verinym_threshold: 1,
        stewards: stewards.iter().map(Steward::genesis_document).collect(),
        node_keys: vec![],
    };
    let node_keys = (0..4).map(|i| KeyPair::derive(&format!("node:iin1:{i}"))).collect();
    let mut pool = IinPool::new(genesis, node_keys);
    stewards[0].publish_schemas(&mut pool).unwrap();

    let org_keys = KeyPair::derive("org:Seller");
    let whitelist = BTreeMap::from([("Seller".to_string(), org_keys.public_key)]);
    let anchor = Anchor::new("AnchorSTL", "iin1", [Role::Oiv], BTreeMap::new(), whitelist);
    stewards[0].enroll_anchor(&mut pool, &anchor).unwrap();

    let doc = DidDocument::new("iin1", "Seller", org_keys.public_key, "agent:Seller");
    let receipt = anchor.register_verinym(&mut pool, "Seller", &doc).unwrap();
    println!("verinym committed at sequence {} with {} acks", receipt.sequence, receipt.acks.len());

    for e in pool.drain_events() {
        println!("  commit #{} {} -> {}", e.sequence, e.kind.as_str(), e.outcome);
    }

    pool.set_fault(3, NodeFault::CorruptReplies);
    println!("one corrupt node: verinym = {:?}", pool.resolve_did(&doc.did).map(|r| r.verinym));
    pool.set_fault(2, NodeFault::Unreachable);
    pool.set_fault(1, NodeFault::Unreachable);
    println!("three faulty nodes: {:?}", pool.resolve_did(&doc.did).map(|r| r.verinym));
    let distinct: std::collections::BTreeSet<_> = pool.state_hashes().into_iter().collect();
    println!("replica state hashes agree: {}", distinct.len() == 1);
}
