//! Trust-anchor services. An OIV vets organizations against a static
//! evidence whitelist and registers their verinyms; a PMV issues and revokes
//! membership credentials, keeps the revocation accumulator, and serves
//! memberlists on demand. One anchor may hold both roles.

use crate::credentials::{
    credential_id, memberlist_schema, membership_schema, CredentialDefinition, MemberlistVC,
    MembershipVC, MEMBERLIST_SCHEMA_ID, MEMBERSHIP_SCHEMA_ID,
};
use crate::crypto::{
    accumulator_init, accumulator_insert, accumulator_revoke, witness_for, AccumulatorError,
    AccumulatorWitness, Digest, KeyPair, LeafSet, PublicKey, RevocationRegistryState,
};
use crate::registry::{
    CommitReceipt, Did, DidDocument, IinPool, RegistryError, RegistryReader, RegistryTransaction,
    Rejection, Role, TxOutcome, TxPayload,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnchorError {
    #[error("evidence for {0:?} does not match the whitelist")]
    EvidenceMismatch(String),
    #[error("anchor does not hold the {0} role")]
    MissingRole(Role),
    #[error("network {0:?} is not represented by this anchor")]
    NotRepresented(String),
    #[error("{0} has no verinym")]
    NoVerinym(Did),
    #[error("{holder} is not on the {network} roster")]
    NotEligible { holder: Did, network: String },
    #[error("{0} is not a member")]
    NotAMember(Did),
    #[error("registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("registry rejected the transaction: {0:?}")]
    Rejected(Rejection),
    #[error("accumulator: {0}")]
    Accumulator(#[from] AccumulatorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustAnchorProfile {
    pub did: Did,
    pub roles: BTreeSet<Role>,
    pub represented_networks: Vec<String>,
    pub evidence_whitelist: BTreeMap<String, PublicKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipRoster {
    pub network_id: String,
    pub members: BTreeMap<Did, Digest>,
    pub version: u64,
}

/// Result of a membership issuance request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issued {
    pub credential: MembershipVC,
    pub witness: AccumulatorWitness,
    pub already_member: bool,
}

fn submit(pool: &mut IinPool, tx: RegistryTransaction) -> Result<CommitReceipt, AnchorError> {
    let receipt = pool.submit(tx)?;
    match &receipt.outcome {
        TxOutcome::Applied => Ok(receipt),
        TxOutcome::Rejected(r) => Err(AnchorError::Rejected(*r)),
    }
}

/// A genesis steward of an IIN.
#[derive(Debug, Clone)]
pub struct Steward {
    pub name: String,
    pub keys: KeyPair,
    pub did: Did,
}

impl Steward {
    pub fn new(iin_id: &str, name: &str) -> Self {
        let keys = KeyPair::derive(&format!("steward:{iin_id}:{name}"));
        Steward {
            name: name.to_string(),
            did: Did::for_key(iin_id, &keys.public_key),
            keys,
        }
    }

    pub fn genesis_document(&self) -> DidDocument {
        DidDocument::new(self.did.iin_id(), &self.name, self.keys.public_key, &format!("steward:{}", self.name))
    }

    /// Registers the anchor's attested DID and grants it its roles.
    pub fn enroll_anchor(&self, pool: &mut IinPool, anchor: &Anchor) -> Result<(), AnchorError> {
        let mut doc = anchor.document();
        doc.verinym_attestations.push(doc.attest(&self.did, &self.keys));
        submit(pool, RegistryTransaction::new(TxPayload::Nym(doc), self.did.clone(), &self.keys))?;
        for role in &anchor.profile.roles {
            let grant = TxPayload::AnchorGrant { did: anchor.did().clone(), role: *role };
            submit(pool, RegistryTransaction::new(grant, self.did.clone(), &self.keys))?;
        }
        Ok(())
    }

    /// Publishes the membership and memberlist schemas.
    pub fn publish_schemas(&self, pool: &mut IinPool) -> Result<(), AnchorError> {
        for schema in [membership_schema(), memberlist_schema()] {
            submit(pool, RegistryTransaction::new(TxPayload::Schema(schema), self.did.clone(), &self.keys))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Anchor {
    pub name: String,
    keys: KeyPair,
    pub profile: TrustAnchorProfile,
    /// Organizations each represented network admits, by vetted name.
    eligible: BTreeMap<String, BTreeSet<String>>,
    rosters: BTreeMap<String, MembershipRoster>,
    credentials: BTreeMap<Digest, MembershipVC>,
    revocation: Option<(RevocationRegistryState, LeafSet)>,
    issued: u64,
}

impl Anchor {
    pub fn new(
        name: &str,
        iin_id: &str,
        roles: impl IntoIterator<Item = Role>,
        eligible: BTreeMap<String, BTreeSet<String>>,
        evidence_whitelist: BTreeMap<String, PublicKey>,
    ) -> Self {
        let keys = KeyPair::derive(&format!("anchor:{iin_id}:{name}"));
        let profile = TrustAnchorProfile {
            did: Did::for_key(iin_id, &keys.public_key),
            roles: roles.into_iter().collect(),
            represented_networks: eligible.keys().cloned().collect(),
            evidence_whitelist,
        };
        let rosters = eligible
            .keys()
            .map(|n| {
                (
                    n.clone(),
                    MembershipRoster { network_id: n.clone(), members: BTreeMap::new(), version: 0 },
                )
            })
            .collect();
        Anchor {
            name: name.to_string(),
            keys,
            profile,
            eligible,
            rosters,
            credentials: BTreeMap::new(),
            revocation: None,
            issued: 0,
        }
    }

    pub fn did(&self) -> &Did {
        &self.profile.did
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn address(&self) -> String {
        format!("anchor:{}", self.name)
    }

    pub fn document(&self) -> DidDocument {
        DidDocument::new(self.did().iin_id(), &self.name, self.keys.public_key, &self.address())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.profile.roles.contains(&role)
    }

    fn require(&self, role: Role) -> Result<(), AnchorError> {
        if self.has_role(role) {
            Ok(())
        } else {
            Err(AnchorError::MissingRole(role))
        }
    }

    fn require_network(&self, network_id: &str) -> Result<(), AnchorError> {
        self.require(Role::Pmv)?;
        if self.profile.represented_networks.iter().any(|n| n == network_id) {
            Ok(())
        } else {
            Err(AnchorError::NotRepresented(network_id.to_string()))
        }
    }

    pub fn membership_cred_def_id(&self) -> String {
        format!("creddef:{}:membership", self.did().suffix())
    }

    pub fn memberlist_cred_def_id(&self) -> String {
        format!("creddef:{}:memberlist", self.did().suffix())
    }

    pub fn roster(&self, network_id: &str) -> Option<&MembershipRoster> {
        self.rosters.get(network_id)
    }

    pub fn revocation_state(&self) -> Option<&RevocationRegistryState> {
        self.revocation.as_ref().map(|(s, _)| s)
    }

    /// Issuer-side coherence: accumulator leaves are exactly the roster credentials.
    pub fn roster_coherent(&self) -> bool {
        let roster: BTreeSet<&Digest> = self.rosters.values().flat_map(|r| r.members.values()).collect();
        match &self.revocation {
            Some((_, leaves)) => leaves.iter().collect::<BTreeSet<_>>() == roster,
            None => roster.is_empty(),
        }
    }

    /// PMV setup: credential definitions and an empty revocation registry.
    pub fn publish(&mut self, pool: &mut IinPool) -> Result<(), AnchorError> {
        self.require(Role::Pmv)?;
        for (id, schema_id) in [
            (self.membership_cred_def_id(), MEMBERSHIP_SCHEMA_ID),
            (self.memberlist_cred_def_id(), MEMBERLIST_SCHEMA_ID),
        ] {
            let def = CredentialDefinition {
                cred_def_id: id,
                schema_id: schema_id.to_string(),
                issuer_did: self.did().clone(),
                authentication_public_key: self.keys.public_key,
            };
            submit(pool, RegistryTransaction::new(TxPayload::CredDef(def), self.did().clone(), &self.keys))?;
        }
        let (state, leaves) = accumulator_init(self.did().clone(), []);
        submit(
            pool,
            RegistryTransaction::new(TxPayload::RevocInit(state.clone()), self.did().clone(), &self.keys),
        )?;
        self.revocation = Some((state, leaves));
        Ok(())
    }

    /// Attests and registers `document` as the verinym of `org_name`.
    pub fn register_verinym(
        &self,
        pool: &mut IinPool,
        org_name: &str,
        document: &DidDocument,
    ) -> Result<CommitReceipt, AnchorError> {
        self.require(Role::Oiv)?;
        let expected = self.profile.evidence_whitelist.get(org_name);
        if expected.is_none() || expected != document.primary_key() || document.alias != org_name {
            return Err(AnchorError::EvidenceMismatch(org_name.to_string()));
        }
        let mut doc = document.clone();
        doc.verinym_attestations = vec![doc.attest(self.did(), &self.keys)];
        submit(pool, RegistryTransaction::new(TxPayload::Nym(doc), self.did().clone(), &self.keys))
    }

    fn publish_revocation(&mut self, pool: &mut IinPool, next: (RevocationRegistryState, LeafSet)) -> Result<CommitReceipt, AnchorError> {
        let tx = RegistryTransaction::new(TxPayload::RevocUpdate(next.0.clone()), self.did().clone(), &self.keys);
        let receipt = submit(pool, tx)?;
        self.revocation = Some(next);
        Ok(receipt)
    }

    fn accumulator(&self) -> Result<&(RevocationRegistryState, LeafSet), AnchorError> {
        self.revocation.as_ref().ok_or(AnchorError::MissingRole(Role::Pmv))
    }

    /// Issues a membership credential, or re-serves the existing one with a
    /// fresh witness if `holder` is already a member.
    pub fn issue_membership_vc(
        &mut self,
        pool: &mut IinPool,
        holder: &Did,
        network_id: &str,
    ) -> Result<Issued, AnchorError> {
        self.require_network(network_id)?;
        let resolved = match pool.resolve_did(holder) {
            Ok(r) if r.verinym => r,
            Ok(_) | Err(RegistryError::NotFound) => return Err(AnchorError::NoVerinym(holder.clone())),
            Err(e) => return Err(e.into()),
        };
        if !self.eligible[network_id].contains(&resolved.document.alias) {
            return Err(AnchorError::NotEligible { holder: holder.clone(), network: network_id.to_string() });
        }

        if let Some(id) = self.rosters[network_id].members.get(holder) {
            let (state, leaves) = self.accumulator()?;
            return Ok(Issued {
                credential: self.credentials[id].clone(),
                witness: witness_for(state, leaves, id)?,
                already_member: true,
            });
        }

        let id = credential_id(holder, network_id, self.issued);
        let (state, leaves) = self.accumulator()?;
        let next = accumulator_insert(state, leaves, id)?;
        self.publish_revocation(pool, next)?;
        self.issued += 1;

        let roster = self.rosters.get_mut(network_id).expect("represented");
        roster.members.insert(holder.clone(), id);
        roster.version += 1;
        let credential = MembershipVC::issue_membership(
            &self.keys,
            self.did(),
            &self.membership_cred_def_id(),
            id,
            holder,
            network_id,
        );
        self.credentials.insert(id, credential.clone());
        let (state, leaves) = self.accumulator()?;
        Ok(Issued {
            credential,
            witness: witness_for(state, leaves, &id)?,
            already_member: false,
        })
    }

    pub fn revoke_membership(
        &mut self,
        pool: &mut IinPool,
        holder: &Did,
        network_id: &str,
    ) -> Result<CommitReceipt, AnchorError> {
        self.require_network(network_id)?;
        let id = *self.rosters[network_id]
            .members
            .get(holder)
            .ok_or_else(|| AnchorError::NotAMember(holder.clone()))?;
        let (state, leaves) = self.accumulator()?;
        let next = accumulator_revoke(state, leaves, &id)?;
        let receipt = self.publish_revocation(pool, next)?;
        let roster = self.rosters.get_mut(network_id).expect("represented");
        roster.members.remove(holder);
        roster.version += 1;
        Ok(receipt)
    }

    /// Current roster as a signed memberlist credential.
    pub fn issue_memberlist_vc(&self, network_id: &str) -> Result<MemberlistVC, AnchorError> {
        self.require_network(network_id)?;
        let roster = &self.rosters[network_id];
        Ok(MemberlistVC::issue(
            &self.keys,
            self.did(),
            &self.memberlist_cred_def_id(),
            network_id,
            roster.members.keys().cloned().collect(),
            roster.version,
        ))
    }

    /// Witness against the current epoch, if the credential is still valid.
    pub fn refresh_witness(&self, credential_id: &Digest) -> Option<AccumulatorWitness> {
        let (state, leaves) = self.revocation.as_ref()?;
        witness_for(state, leaves, credential_id).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::{build_membership_vp, verify_memberlist_vc, verify_membership_vp, Nonce};
    use crate::crypto::witness_verify;
    use crate::registry::Genesis;

    const IIN: &str = "iin1";

    struct Fx {
        pool: IinPool,
        anchor: Anchor,
    }

    fn org_keys(name: &str) -> KeyPair {
        KeyPair::derive(&format!("org:{name}"))
    }

    fn fixture() -> Fx {
        let stewards: Vec<Steward> = (0..4).map(|i| Steward::new(IIN, &format!("Steward{i}"))).collect();
        let genesis = Genesis {
            iin_id: IIN.into(),
            verinym_threshold: 1,
            stewards: stewards.iter().map(Steward::genesis_document).collect(),
            node_keys: vec![],
        };
        let mut pool = IinPool::new(genesis, (0..4).map(|i| KeyPair::derive(&format!("node{i}"))).collect());
        let whitelist = ["Seller", "Carrier"].iter().map(|o| (o.to_string(), org_keys(o).public_key)).collect();
        let eligible = BTreeMap::from([
            ("STL".to_string(), BTreeSet::from(["Seller".to_string(), "Carrier".to_string()])),
            ("XYZ".to_string(), BTreeSet::new()),
        ]);
        let mut anchor = Anchor::new("AnchorSTL", IIN, [Role::Oiv, Role::Pmv], eligible, whitelist);
        stewards[0].publish_schemas(&mut pool).unwrap();
        stewards[0].enroll_anchor(&mut pool, &anchor).unwrap();
        anchor.publish(&mut pool).unwrap();
        Fx { pool, anchor }
    }

    fn doc(name: &str) -> DidDocument {
        DidDocument::new(IIN, name, org_keys(name).public_key, &format!("agent:{name}"))
    }

    fn verinym(fx: &mut Fx, name: &str) -> Did {
        let d = doc(name);
        fx.anchor.register_verinym(&mut fx.pool, name, &d).unwrap();
        d.did
    }

    #[test]
    fn whitelisted_org_becomes_verinym() {
        let mut fx = fixture();
        let did = verinym(&mut fx, "Seller");
        assert!(fx.pool.resolve_did(&did).unwrap().verinym);
        // same document again: the registry sees a duplicate
        let again = fx.anchor.register_verinym(&mut fx.pool, "Seller", &doc("Seller"));
        assert_eq!(again, Err(AnchorError::Rejected(Rejection::Duplicate)));
    }

    #[test]
    fn evidence_mismatch_submits_nothing() {
        let mut fx = fixture();
        let before = fx.pool.sequencer_state().state_hash();
        let impostor = DidDocument::new(IIN, "Carrier", KeyPair::derive("mallory").public_key, "agent:m");
        assert_eq!(
            fx.anchor.register_verinym(&mut fx.pool, "Carrier", &impostor),
            Err(AnchorError::EvidenceMismatch("Carrier".into()))
        );
        assert_eq!(
            fx.anchor.register_verinym(&mut fx.pool, "Buyer", &doc("Buyer")),
            Err(AnchorError::EvidenceMismatch("Buyer".into()))
        );
        assert_eq!(fx.pool.sequencer_state().state_hash(), before);
    }

    #[test]
    fn issuance_bumps_epoch_and_is_idempotent() {
        let mut fx = fixture();
        let carrier = verinym(&mut fx, "Carrier");
        let issued = fx.anchor.issue_membership_vc(&mut fx.pool, &carrier, "STL").unwrap();
        assert!(!issued.already_member);
        assert_eq!(issued.credential.network_id(), Some("STL"));
        let rev = fx.pool.read_revocation(fx.anchor.did()).unwrap();
        assert_eq!(rev.epoch, 1);
        assert!(witness_verify(&rev, &issued.witness));

        let again = fx.anchor.issue_membership_vc(&mut fx.pool, &carrier, "STL").unwrap();
        assert!(again.already_member);
        assert_eq!(again.credential.credential_id, issued.credential.credential_id);
        assert_eq!(fx.pool.read_revocation(fx.anchor.did()).unwrap().epoch, 1);
        assert_eq!(fx.anchor.roster("STL").unwrap().version, 1);
        assert!(fx.anchor.roster_coherent());

        let vp = build_membership_vp(&org_keys("Carrier"), &again.credential, &again.witness, Nonce([3; 16])).unwrap();
        let claim = verify_membership_vp(&vp, "STL", &Nonce([3; 16]), &fx.pool, &[fx.anchor.did().clone()]).unwrap();
        assert_eq!(claim.holder_did, carrier);
    }

    #[test]
    fn issuance_preconditions() {
        let mut fx = fixture();
        let pseudonym = doc("Carrier").did;
        assert_eq!(
            fx.anchor.issue_membership_vc(&mut fx.pool, &pseudonym, "STL"),
            Err(AnchorError::NoVerinym(pseudonym.clone()))
        );
        let carrier = verinym(&mut fx, "Carrier");
        assert_eq!(
            fx.anchor.issue_membership_vc(&mut fx.pool, &carrier, "SWT"),
            Err(AnchorError::NotRepresented("SWT".into()))
        );
        assert!(matches!(
            fx.anchor.issue_membership_vc(&mut fx.pool, &carrier, "XYZ"),
            Err(AnchorError::NotEligible { .. })
        ));
    }

    #[test]
    fn revocation_invalidates_witnesses_and_reissue_gets_new_id() {
        let mut fx = fixture();
        let seller = verinym(&mut fx, "Seller");
        let carrier = verinym(&mut fx, "Carrier");
        fx.anchor.issue_membership_vc(&mut fx.pool, &seller, "STL").unwrap();
        let old = fx.anchor.issue_membership_vc(&mut fx.pool, &carrier, "STL").unwrap();
        fx.anchor.revoke_membership(&mut fx.pool, &carrier, "STL").unwrap();
        assert!(fx.anchor.roster_coherent());

        let vp = build_membership_vp(&org_keys("Carrier"), &old.credential, &old.witness, Nonce([1; 16])).unwrap();
        let err = verify_membership_vp(&vp, "STL", &Nonce([1; 16]), &fx.pool, &[fx.anchor.did().clone()]).unwrap_err();
        assert_eq!(err.check_index(), 6);
        assert_eq!(fx.anchor.refresh_witness(&old.credential.credential_id), None);

        assert_eq!(
            fx.anchor.revoke_membership(&mut fx.pool, &carrier, "STL"),
            Err(AnchorError::NotAMember(carrier.clone()))
        );
        let new = fx.anchor.issue_membership_vc(&mut fx.pool, &carrier, "STL").unwrap();
        assert_ne!(new.credential.credential_id, old.credential.credential_id);
        assert_eq!(fx.anchor.roster("STL").unwrap().version, 4);
    }

    #[test]
    fn memberlist_tracks_roster() {
        let mut fx = fixture();
        let empty = fx.anchor.issue_memberlist_vc("STL").unwrap();
        assert!(empty.member_dids.is_empty());
        assert_eq!(verify_memberlist_vc(&empty, "STL", fx.anchor.did(), &fx.pool), Ok(()));

        for org in ["Seller", "Carrier"] {
            let did = verinym(&mut fx, org);
            fx.anchor.issue_membership_vc(&mut fx.pool, &did, "STL").unwrap();
        }
        let list = fx.anchor.issue_memberlist_vc("STL").unwrap();
        assert_eq!(list.member_dids.len(), 2);
        assert_eq!(list.roster_version, fx.anchor.roster("STL").unwrap().version);
        assert_eq!(verify_memberlist_vc(&list, "STL", fx.anchor.did(), &fx.pool), Ok(()));
        assert_eq!(fx.anchor.issue_memberlist_vc("SWT"), Err(AnchorError::NotRepresented("SWT".into())));
    }

    #[test]
    fn cred_def_ids_carry_no_network_names() {
        let fx = fixture();
        for id in [fx.anchor.membership_cred_def_id(), fx.anchor.memberlist_cred_def_id()] {
            assert!(!id.contains("STL"));
        }
    }
}
