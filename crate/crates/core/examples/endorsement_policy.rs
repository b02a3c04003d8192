//! Foreign identity writes need every local org's endorsement.

use iin_core::credentials::Nonce;
use iin_core::crypto::{KeyPair, Validity};
use iin_core::network::{endorse, Endorsement, ForeignIdentityPayload, IdentityAction, LedgerTx, LocalLedger, LocalOrg, Organization};
use iin_core::registry::Did;

fn main() {
    let orgs = ["Seller", "Buyer", "Bank"];
    let keys: Vec<KeyPair> = orgs.iter().map(|o| KeyPair::derive(&format!("org:{o}"))).collect();
    let mut ledger = LocalLedger::new("SWT");
    for (o, k) in orgs.iter().zip(&keys) {
        let org = LocalOrg { org_id: o.to_string(), did: Did::for_key("iin1", &k.public_key), admin_key: k.public_key };
        ledger.submit(LedgerTx::RegisterOrg(org), 0).unwrap();
    }
    ledger.submit(LedgerTx::AddInteropNetwork("STL".into()), 0).unwrap();

    let carrier = Organization::new("STL", "Carrier", 1, Validity::new(0, 10_000), "agent:Carrier");
    let payload = ForeignIdentityPayload {
        network_id: "STL".into(),
        org_id: "Carrier".into(),
        org_did: Did::for_key("iin1", &KeyPair::derive("org:Carrier").public_key),
        bundle: carrier.msp_bundle(),
        action: IdentityAction::Update,
    };
    let digest = payload.bundle_digest();
    let nonce = Nonce([1; 16]);

    for mask in 0u32..8 {
        let signers: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let endorsements = signers
            .iter()
            .map(|&i| Endorsement {
                org_id: orgs[i].into(),
                signature: endorse(&keys[i], "STL", "Carrier", &digest, &nonce, IdentityAction::Update),
            })
            .collect();
        let names: Vec<&str> = signers.iter().map(|&i| orgs[i]).collect();
        let result = ledger.clone().cmdac_update_foreign_identity(payload.clone(), nonce, endorsements, 1);
        match result {
            Ok(r) => println!("{names:?}: committed at height {}", r.height),
            Err(e) => println!("{names:?}: rejected, {e}"),
        }
    }
}
