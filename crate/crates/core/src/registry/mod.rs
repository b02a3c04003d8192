//! The Interoperation Identity Network (IIN): a replicated verifiable data
//! registry holding DID documents, credential schemas and definitions,
//! revocation registry states and trust-anchor roles.
//!
//! [`RegistryState`] is a pure fold over the ordered transaction log; the
//! replication discipline lives in [`pool`].

pub mod pool;

use crate::codec::tags;
use crate::credentials::{CredentialDefinition, CredentialSchema};
use crate::crypto::{digest_of, verify_record, Digest, KeyPair, PublicKey, RevocationRegistryState, Signature};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

pub use pool::{
    CommitEvent, CommitReceipt, IinNode, IinPool, IinSet, NodeFault, RegistryError, RegistryReader,
    ResolvedDid,
};

pub const DID_METHOD: &str = "iin";

/// `did:iin:<iin_id>:<suffix>`, where the suffix is base32 of the digest of
/// the document's primary key.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Did {
    iin_id: String,
    suffix: String,
}

impl Did {
    pub fn new(iin_id: impl Into<String>, suffix: impl Into<String>) -> Self {
        Did {
            iin_id: iin_id.into(),
            suffix: suffix.into(),
        }
    }

    pub fn for_key(iin_id: &str, key: &PublicKey) -> Self {
        let digest = digest_of(tags::DID_KEY, key);
        let suffix = data_encoding::BASE32_NOPAD
            .encode(&digest.0[..20])
            .to_ascii_lowercase();
        Did::new(iin_id, suffix)
    }

    pub fn iin_id(&self) -> &str {
        &self.iin_id
    }

    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    pub fn matches_key(&self, key: &PublicKey) -> bool {
        *self == Did::for_key(&self.iin_id, key)
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{DID_METHOD}:{}:{}", self.iin_id, self.suffix)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Did {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.splitn(4, ':');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("did"), Some(DID_METHOD), Some(iin), Some(suffix))
                if !iin.is_empty() && !suffix.is_empty() =>
            {
                Ok(Did::new(iin, suffix))
            }
            _ => Err(format!("not an iin DID: {s:?}")),
        }
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "STEWARD")]
    Steward,
    #[serde(rename = "OIV")]
    Oiv,
    #[serde(rename = "PMV")]
    Pmv,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Steward => "STEWARD",
            Role::Oiv => "OIV",
            Role::Pmv => "PMV",
        })
    }
}

/// An anchor's signature binding a document's DID, alias, keys and endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attestation {
    pub anchor: Did,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub did: Did,
    /// Real-world name the attesting anchor vetted, e.g. `"Carrier"`.
    pub alias: String,
    pub verification_keys: Vec<PublicKey>,
    pub service_endpoint: String,
    pub verinym_attestations: Vec<Attestation>,
    pub version: u64,
}

#[derive(Serialize)]
struct AttestationBody<'a> {
    did: &'a Did,
    alias: &'a str,
    verification_keys: &'a [PublicKey],
    service_endpoint: &'a str,
}

impl DidDocument {
    /// Unattested document whose DID is derived from `key`.
    pub fn new(iin_id: &str, alias: &str, key: PublicKey, service_endpoint: &str) -> Self {
        DidDocument {
            did: Did::for_key(iin_id, &key),
            alias: alias.to_string(),
            verification_keys: vec![key],
            service_endpoint: service_endpoint.to_string(),
            verinym_attestations: Vec::new(),
            version: 0,
        }
    }

    pub fn primary_key(&self) -> Option<&PublicKey> {
        self.verification_keys.first()
    }

    fn attestation_body(&self) -> AttestationBody<'_> {
        AttestationBody {
            did: &self.did,
            alias: &self.alias,
            verification_keys: &self.verification_keys,
            service_endpoint: &self.service_endpoint,
        }
    }

    pub fn attest(&self, anchor: &Did, anchor_keys: &KeyPair) -> Attestation {
        Attestation {
            anchor: anchor.clone(),
            signature: anchor_keys.sign_record(tags::DID_ATTESTATION, &self.attestation_body()),
        }
    }

    pub fn attestation_valid(&self, attestation: &Attestation, anchor_key: &PublicKey) -> bool {
        verify_record(
            anchor_key,
            tags::DID_ATTESTATION,
            &self.attestation_body(),
            &attestation.signature,
        )
    }

    pub fn is_well_formed(&self, iin_id: &str) -> bool {
        self.did.iin_id() == iin_id
            && self.primary_key().is_some_and(|k| self.did.matches_key(k))
    }

    /// True if any listed key verifies the signature.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        self.verification_keys.iter().any(|k| k.verify(message, signature))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxKind {
    #[serde(rename = "NYM")]
    Nym,
    #[serde(rename = "SCHEMA")]
    Schema,
    #[serde(rename = "CRED_DEF")]
    CredDef,
    #[serde(rename = "REVOC_INIT")]
    RevocInit,
    #[serde(rename = "REVOC_UPDATE")]
    RevocUpdate,
    #[serde(rename = "ANCHOR_GRANT")]
    AnchorGrant,
}

impl TxKind {
    pub const ALL: [TxKind; 6] = [
        TxKind::Nym,
        TxKind::Schema,
        TxKind::CredDef,
        TxKind::RevocInit,
        TxKind::RevocUpdate,
        TxKind::AnchorGrant,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TxKind::Nym => "NYM",
            TxKind::Schema => "SCHEMA",
            TxKind::CredDef => "CRED_DEF",
            TxKind::RevocInit => "REVOC_INIT",
            TxKind::RevocUpdate => "REVOC_UPDATE",
            TxKind::AnchorGrant => "ANCHOR_GRANT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxPayload {
    Nym(DidDocument),
    Schema(CredentialSchema),
    CredDef(CredentialDefinition),
    RevocInit(RevocationRegistryState),
    RevocUpdate(RevocationRegistryState),
    AnchorGrant { did: Did, role: Role },
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::Nym(_) => TxKind::Nym,
            TxPayload::Schema(_) => TxKind::Schema,
            TxPayload::CredDef(_) => TxKind::CredDef,
            TxPayload::RevocInit(_) => TxKind::RevocInit,
            TxPayload::RevocUpdate(_) => TxKind::RevocUpdate,
            TxPayload::AnchorGrant { .. } => TxKind::AnchorGrant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryTransaction {
    pub payload: TxPayload,
    pub submitter_did: Did,
    pub submitter_signature: Signature,
}

#[derive(Serialize)]
struct TxBody<'a> {
    kind: TxKind,
    payload: &'a TxPayload,
    submitter_did: &'a Did,
}

impl RegistryTransaction {
    pub fn new(payload: TxPayload, submitter_did: Did, submitter_keys: &KeyPair) -> Self {
        let body = TxBody {
            kind: payload.kind(),
            payload: &payload,
            submitter_did: &submitter_did,
        };
        let submitter_signature = submitter_keys.sign_record(tags::REGISTRY_TX, &body);
        RegistryTransaction {
            payload,
            submitter_did,
            submitter_signature,
        }
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        let body = TxBody {
            kind: self.kind(),
            payload: &self.payload,
            submitter_did: &self.submitter_did,
        };
        verify_record(key, tags::REGISTRY_TX, &body, &self.submitter_signature)
    }

    pub fn digest(&self) -> Digest {
        digest_of(tags::REGISTRY_TX, self)
    }
}

/// Why a committed transaction was not applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum Rejection {
    #[error("submitter lacks the required role")]
    UnauthorizedRole,
    #[error("revocation epoch does not follow the current one")]
    StaleEpoch,
    #[error("identifier already in use")]
    DuplicateId,
    #[error("signature does not verify")]
    BadSignature,
    #[error("transaction already committed")]
    Duplicate,
    #[error("malformed payload")]
    Malformed,
    #[error("referenced DID is not registered")]
    UnknownDid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxOutcome {
    Applied,
    Rejected(Rejection),
}

impl TxOutcome {
    pub fn is_applied(&self) -> bool {
        matches!(self, TxOutcome::Applied)
    }
}

impl fmt::Display for TxOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxOutcome::Applied => f.write_str("applied"),
            TxOutcome::Rejected(r) => write!(f, "rejected:{r:?}"),
        }
    }
}

/// Bootstrap data shared by every node of one IIN.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub iin_id: String,
    /// Attestations from STEWARD/OIV anchors needed for verinym status.
    pub verinym_threshold: u32,
    pub stewards: Vec<DidDocument>,
    pub node_keys: Vec<PublicKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryState {
    pub iin_id: String,
    pub verinym_threshold: u32,
    pub docs: BTreeMap<Did, DidDocument>,
    pub schemas: BTreeMap<String, CredentialSchema>,
    pub cred_defs: BTreeMap<String, CredentialDefinition>,
    pub revocation: BTreeMap<Did, RevocationRegistryState>,
    pub roles: BTreeMap<Did, BTreeSet<Role>>,
    pub committed: BTreeSet<Digest>,
}

impl RegistryState {
    pub fn from_genesis(genesis: &Genesis) -> Self {
        let mut state = RegistryState {
            iin_id: genesis.iin_id.clone(),
            verinym_threshold: genesis.verinym_threshold,
            docs: BTreeMap::new(),
            schemas: BTreeMap::new(),
            cred_defs: BTreeMap::new(),
            revocation: BTreeMap::new(),
            roles: BTreeMap::new(),
            committed: BTreeSet::new(),
        };
        for doc in &genesis.stewards {
            state.docs.insert(doc.did.clone(), doc.clone());
            state
                .roles
                .entry(doc.did.clone())
                .or_default()
                .insert(Role::Steward);
        }
        state
    }

    pub fn has_role(&self, did: &Did, role: Role) -> bool {
        self.roles.get(did).is_some_and(|r| r.contains(&role))
    }

    pub fn has_any_role(&self, did: &Did) -> bool {
        self.roles.get(did).is_some_and(|r| !r.is_empty())
    }

    pub fn key_of(&self, did: &Did) -> Option<&PublicKey> {
        self.docs.get(did).and_then(DidDocument::primary_key)
    }

    fn attester_ok(&self, doc: &DidDocument, att: &Attestation) -> bool {
        (self.has_role(&att.anchor, Role::Steward) || self.has_role(&att.anchor, Role::Oiv))
            && self
                .key_of(&att.anchor)
                .is_some_and(|k| doc.attestation_valid(att, k))
    }

    /// A document is a verinym when enough STEWARD/OIV anchors validly attest it.
    pub fn is_verinym(&self, doc: &DidDocument) -> bool {
        let valid = doc
            .verinym_attestations
            .iter()
            .filter(|a| self.attester_ok(doc, a))
            .map(|a| &a.anchor)
            .collect::<BTreeSet<_>>()
            .len();
        valid >= self.verinym_threshold.max(1) as usize
    }

    pub fn state_hash(&self) -> Digest {
        digest_of(tags::REGISTRY_STATE, self)
    }

    fn check(&self, tx: &RegistryTransaction) -> Result<(), Rejection> {
        if self.committed.contains(&tx.digest()) {
            return Err(Rejection::Duplicate);
        }
        let submitter = &tx.submitter_did;
        let key = self.key_of(submitter).ok_or(Rejection::BadSignature)?;
        if !tx.signature_valid(key) {
            return Err(Rejection::BadSignature);
        }
        match &tx.payload {
            TxPayload::Nym(doc) => {
                if !self.has_any_role(submitter) {
                    return Err(Rejection::UnauthorizedRole);
                }
                if !doc.is_well_formed(&self.iin_id) {
                    return Err(Rejection::Malformed);
                }
                for att in &doc.verinym_attestations {
                    if !(self.has_role(&att.anchor, Role::Steward)
                        || self.has_role(&att.anchor, Role::Oiv))
                    {
                        return Err(Rejection::UnauthorizedRole);
                    }
                    if !self.attester_ok(doc, att) {
                        return Err(Rejection::BadSignature);
                    }
                }
                if let Some(existing) = self.docs.get(&doc.did) {
                    if doc.version != existing.version + 1 {
                        return Err(Rejection::DuplicateId);
                    }
                }
                Ok(())
            }
            TxPayload::Schema(schema) => {
                if !self.has_any_role(submitter) {
                    return Err(Rejection::UnauthorizedRole);
                }
                if !schema.is_well_formed() {
                    return Err(Rejection::Malformed);
                }
                if self.schemas.contains_key(&schema.schema_id) {
                    return Err(Rejection::DuplicateId);
                }
                Ok(())
            }
            TxPayload::CredDef(def) => {
                if !self.has_any_role(submitter) || def.issuer_did != *submitter {
                    return Err(Rejection::UnauthorizedRole);
                }
                if self.cred_defs.contains_key(&def.cred_def_id) {
                    return Err(Rejection::DuplicateId);
                }
                Ok(())
            }
            TxPayload::RevocInit(rev) => {
                if !self.has_role(submitter, Role::Pmv) || rev.issuer_did != *submitter {
                    return Err(Rejection::UnauthorizedRole);
                }
                if self.revocation.contains_key(submitter) {
                    return Err(Rejection::DuplicateId);
                }
                if rev.epoch != 0 {
                    return Err(Rejection::StaleEpoch);
                }
                Ok(())
            }
            TxPayload::RevocUpdate(rev) => {
                let current = self
                    .revocation
                    .get(submitter)
                    .filter(|_| rev.issuer_did == *submitter)
                    .ok_or(Rejection::UnauthorizedRole)?;
                if rev.epoch != current.epoch + 1 {
                    return Err(Rejection::StaleEpoch);
                }
                Ok(())
            }
            TxPayload::AnchorGrant { did, .. } => {
                if !self.has_role(submitter, Role::Steward) {
                    return Err(Rejection::UnauthorizedRole);
                }
                if !self.docs.contains_key(did) {
                    return Err(Rejection::UnknownDid);
                }
                Ok(())
            }
        }
    }

    /// Validates and, if permitted, applies `tx`. Rejected transactions still
    /// mark their digest as committed.
    pub fn apply(&mut self, tx: &RegistryTransaction) -> TxOutcome {
        let outcome = match self.check(tx) {
            Ok(()) => {
                match &tx.payload {
                    TxPayload::Nym(doc) => {
                        self.docs.insert(doc.did.clone(), doc.clone());
                    }
                    TxPayload::Schema(s) => {
                        self.schemas.insert(s.schema_id.clone(), s.clone());
                    }
                    TxPayload::CredDef(d) => {
                        self.cred_defs.insert(d.cred_def_id.clone(), d.clone());
                    }
                    TxPayload::RevocInit(r) | TxPayload::RevocUpdate(r) => {
                        self.revocation.insert(r.issuer_did.clone(), r.clone());
                    }
                    TxPayload::AnchorGrant { did, role } => {
                        self.roles.entry(did.clone()).or_default().insert(*role);
                    }
                }
                TxOutcome::Applied
            }
            Err(r) => TxOutcome::Rejected(r),
        };
        self.committed.insert(tx.digest());
        outcome
    }
}

/// Pure form of [`RegistryState::apply`].
pub fn apply_transaction(
    state: &RegistryState,
    tx: &RegistryTransaction,
) -> Result<RegistryState, Rejection> {
    let mut next = state.clone();
    match next.apply(tx) {
        TxOutcome::Applied => Ok(next),
        TxOutcome::Rejected(r) => Err(r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::{membership_schema, CredentialDefinition};
    use crate::crypto::accumulator_init;

    const IIN: &str = "iin1";

    struct Actor {
        keys: KeyPair,
        doc: DidDocument,
    }

    fn actor(name: &str) -> Actor {
        let keys = KeyPair::derive(name);
        let doc = DidDocument::new(IIN, name, keys.public_key, &format!("agent:{name}"));
        Actor { keys, doc }
    }

    fn genesis(steward: &Actor) -> Genesis {
        Genesis {
            iin_id: IIN.into(),
            verinym_threshold: 1,
            stewards: vec![steward.doc.clone()],
            node_keys: vec![],
        }
    }

    fn tx(payload: TxPayload, who: &Actor) -> RegistryTransaction {
        RegistryTransaction::new(payload, who.doc.did.clone(), &who.keys)
    }

    /// State with a steward and `subject` registered (unattested) holding `role`.
    fn state_with(subject: &Actor, role: Option<Role>) -> (RegistryState, Actor) {
        let steward = actor("steward");
        let mut state = RegistryState::from_genesis(&genesis(&steward));
        assert!(state.apply(&tx(TxPayload::Nym(subject.doc.clone()), &steward)).is_applied());
        if let Some(role) = role {
            let grant = TxPayload::AnchorGrant { did: subject.doc.did.clone(), role };
            assert!(state.apply(&tx(grant, &steward)).is_applied());
        }
        (state, steward)
    }

    #[test]
    fn did_format_and_key_binding() {
        let a = actor("Seller");
        let s = a.doc.did.to_string();
        assert!(s.starts_with("did:iin:iin1:"));
        assert_eq!(s.parse::<Did>().unwrap(), a.doc.did);
        assert!(a.doc.did.matches_key(&a.keys.public_key));
        assert!(!a.doc.did.matches_key(&KeyPair::derive("x").public_key));
        assert!("did:web:x:y".parse::<Did>().is_err());
    }

    #[test]
    fn nym_attested_by_oiv_is_verinym() {
        let oiv = actor("oiv");
        let (mut state, _) = state_with(&oiv, Some(Role::Oiv));
        let org = actor("Org3");
        let mut doc = org.doc.clone();
        doc.verinym_attestations.push(doc.attest(&oiv.doc.did, &oiv.keys));
        assert_eq!(state.apply(&tx(TxPayload::Nym(doc.clone()), &oiv)), TxOutcome::Applied);
        assert!(state.is_verinym(&state.docs[&doc.did]));
    }

    #[test]
    fn pseudonym_is_not_verinym() {
        let org = actor("anon");
        let (state, _) = state_with(&org, None);
        assert!(!state.is_verinym(&state.docs[&org.doc.did]));
    }

    #[test]
    fn attestation_from_pmv_only_role_rejected() {
        let pmv = actor("pmv");
        let (mut state, _) = state_with(&pmv, Some(Role::Pmv));
        let org = actor("Org3");
        let mut doc = org.doc.clone();
        doc.verinym_attestations.push(doc.attest(&pmv.doc.did, &pmv.keys));
        assert_eq!(
            state.apply(&tx(TxPayload::Nym(doc), &pmv)),
            TxOutcome::Rejected(Rejection::UnauthorizedRole)
        );
    }

    #[test]
    fn revoc_update_epoch_jump_is_stale() {
        let pmv = actor("pmv");
        let (mut state, _) = state_with(&pmv, Some(Role::Pmv));
        let (r0, _) = accumulator_init(pmv.doc.did.clone(), []);
        assert!(state.apply(&tx(TxPayload::RevocInit(r0.clone()), &pmv)).is_applied());
        let before = state.clone();
        let mut r2 = r0.clone();
        r2.epoch = 2;
        assert_eq!(
            state.apply(&tx(TxPayload::RevocUpdate(r2), &pmv)),
            TxOutcome::Rejected(Rejection::StaleEpoch)
        );
        assert_eq!(state.revocation, before.revocation);
        let mut r1 = r0;
        r1.epoch = 1;
        assert!(state.apply(&tx(TxPayload::RevocUpdate(r1), &pmv)).is_applied());
    }

    #[test]
    fn schema_by_roleless_did_rejected() {
        let nobody = actor("nobody");
        let (mut state, _) = state_with(&nobody, None);
        assert_eq!(
            state.apply(&tx(TxPayload::Schema(membership_schema()), &nobody)),
            TxOutcome::Rejected(Rejection::UnauthorizedRole)
        );
    }

    #[test]
    fn identical_transaction_twice_is_duplicate() {
        let steward = actor("steward");
        let mut state = RegistryState::from_genesis(&genesis(&steward));
        let t = tx(TxPayload::Schema(membership_schema()), &steward);
        assert!(state.apply(&t).is_applied());
        let snapshot = state.clone();
        assert_eq!(state.apply(&t), TxOutcome::Rejected(Rejection::Duplicate));
        assert_eq!(state, snapshot);
    }

    #[test]
    fn forged_submitter_signature_rejected() {
        let steward = actor("steward");
        let mut state = RegistryState::from_genesis(&genesis(&steward));
        let mut t = tx(TxPayload::Schema(membership_schema()), &steward);
        t.submitter_signature = KeyPair::derive("mallory").sign(b"x");
        assert_eq!(state.apply(&t), TxOutcome::Rejected(Rejection::BadSignature));
    }

    /// Exhaustive (role, kind) authorization table.
    #[test]
    fn authorization_soundness_table() {
        let roles = [None, Some(Role::Steward), Some(Role::Oiv), Some(Role::Pmv)];
        for role in roles {
            for kind in TxKind::ALL {
                let subject = actor("subject");
                let (mut state, _) = state_with(&subject, role);
                let target = actor("target");
                if kind == TxKind::AnchorGrant || kind == TxKind::RevocUpdate {
                    // prerequisites that are not part of the role rule
                    let steward = actor("steward");
                    state.apply(&tx(TxPayload::Nym(target.doc.clone()), &steward));
                }
                if kind == TxKind::RevocUpdate {
                    let (r0, _) = accumulator_init(subject.doc.did.clone(), []);
                    state.revocation.insert(subject.doc.did.clone(), r0);
                }
                let payload = match kind {
                    TxKind::Nym => TxPayload::Nym(actor("fresh").doc),
                    TxKind::Schema => TxPayload::Schema(membership_schema()),
                    TxKind::CredDef => TxPayload::CredDef(CredentialDefinition {
                        cred_def_id: "cd1".into(),
                        schema_id: membership_schema().schema_id,
                        issuer_did: subject.doc.did.clone(),
                        authentication_public_key: subject.keys.public_key,
                    }),
                    TxKind::RevocInit => {
                        TxPayload::RevocInit(accumulator_init(subject.doc.did.clone(), []).0)
                    }
                    TxKind::RevocUpdate => {
                        let mut r = accumulator_init(subject.doc.did.clone(), []).0;
                        r.epoch = 1;
                        TxPayload::RevocUpdate(r)
                    }
                    TxKind::AnchorGrant => TxPayload::AnchorGrant {
                        did: target.doc.did.clone(),
                        role: Role::Oiv,
                    },
                };
                let permitted = match kind {
                    TxKind::Nym | TxKind::Schema | TxKind::CredDef => role.is_some(),
                    TxKind::RevocInit => role == Some(Role::Pmv),
                    // ownership of the registry, not a role, gates updates
                    TxKind::RevocUpdate => true,
                    TxKind::AnchorGrant => role == Some(Role::Steward),
                };
                let before = state.clone();
                let outcome = state.apply(&tx(payload, &subject));
                assert_eq!(outcome.is_applied(), permitted, "role {role:?} kind {kind:?}");
                if !permitted {
                    assert_eq!(outcome, TxOutcome::Rejected(Rejection::UnauthorizedRole));
                    assert_eq!(state.docs, before.docs);
                    assert_eq!(state.roles, before.roles);
                    assert_eq!(state.schemas, before.schemas);
                    assert_eq!(state.cred_defs, before.cred_defs);
                    assert_eq!(state.revocation, before.revocation);
                }
            }
        }
    }

    #[test]
    fn revoc_update_by_non_owner_rejected() {
        let pmv = actor("pmv");
        let (mut state, _) = state_with(&pmv, Some(Role::Pmv));
        let other = actor("other");
        let steward = actor("steward");
        state.apply(&tx(TxPayload::Nym(other.doc.clone()), &steward));
        state.apply(&tx(
            TxPayload::AnchorGrant { did: other.doc.did.clone(), role: Role::Pmv },
            &steward,
        ));
        let (r0, _) = accumulator_init(pmv.doc.did.clone(), []);
        state.apply(&tx(TxPayload::RevocInit(r0.clone()), &pmv));
        let mut r1 = r0;
        r1.epoch = 1;
        assert_eq!(
            state.apply(&tx(TxPayload::RevocUpdate(r1), &other)),
            TxOutcome::Rejected(Rejection::UnauthorizedRole)
        );
    }

    #[test]
    fn nym_update_requires_next_version() {
        let org = actor("org");
        let (mut state, steward) = state_with(&org, None);
        let mut same_version = org.doc.clone();
        same_version.service_endpoint = "agent:elsewhere".into();
        assert_eq!(
            state.apply(&tx(TxPayload::Nym(same_version.clone()), &steward)),
            TxOutcome::Rejected(Rejection::DuplicateId)
        );
        same_version.version = 1;
        assert!(state.apply(&tx(TxPayload::Nym(same_version), &steward)).is_applied());
    }

    #[test]
    fn identical_logs_identical_states() {
        let steward = actor("steward");
        let g = genesis(&steward);
        let log: Vec<RegistryTransaction> = ["a", "b", "c"]
            .iter()
            .map(|n| tx(TxPayload::Nym(actor(n).doc), &steward))
            .chain(std::iter::once(tx(TxPayload::Schema(membership_schema()), &steward)))
            .collect();
        let fold = |log: &[RegistryTransaction]| {
            let mut s = RegistryState::from_genesis(&g);
            for t in log {
                s.apply(t);
            }
            s
        };
        assert_eq!(fold(&log).state_hash(), fold(&log).state_hash());
        let mut reordered = log.clone();
        reordered.swap(0, 3);
        assert_eq!(fold(&reordered).docs, fold(&log).docs);
    }
}
