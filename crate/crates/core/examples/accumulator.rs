//! Revocation accumulator: issue, prove membership, revoke, and watch old witnesses die.

use iin_core::crypto::{accumulator_init, accumulator_insert, accumulator_revoke, witness_for, witness_verify, Digest};
use iin_core::registry::Did;

fn main() {
    let issuer = Did::new("iin1", "pmv-demo");
    let ids: Vec<Digest> = (1..=5u8).map(|i| Digest([i; 32])).collect();

    let (state, set) = accumulator_init(issuer.clone(), ids[..4].iter().copied());
    println!("epoch {} root {}", state.epoch, state.root);
    let w = witness_for(&state, &set, &ids[2]).unwrap();
    println!("witness for #3: {} path nodes, verifies = {}", w.path.len(), witness_verify(&state, &w));

    let (state, set) = accumulator_insert(&state, &set, ids[4]).unwrap();
    println!("after insert, epoch {}: old witness verifies = {}", state.epoch, witness_verify(&state, &w));
    let w = witness_for(&state, &set, &ids[2]).unwrap();
    println!("refreshed witness verifies = {}", witness_verify(&state, &w));

    let (revoked, _) = accumulator_revoke(&state, &set, &ids[2]).unwrap();
    println!("after revoking #3, epoch {}: witness verifies = {}", revoked.epoch, witness_verify(&revoked, &w));
}
