//! Simulated permissioned networks: organizations with MSP certificate
//! hierarchies, the shared local ledger, the foreign-identity contract and
//! the data-plane proof hook.

use crate::codec::{self, tags};
use crate::credentials::Nonce;
use crate::crypto::{
    digest_of, issue_certificate, verify_certificate_chain, verify_record, CertSpec, Certificate,
    CertificateChain, ChainError, Digest, KeyPair, LogicalTime, PublicKey, Signature, Validity,
};
use crate::registry::Did;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Peer {
    pub name: String,
    pub keypair: KeyPair,
    pub certificate: Certificate,
}

/// One organization's MSP within one network.
#[derive(Debug, Clone)]
pub struct Organization {
    pub org_id: String,
    pub network_id: String,
    root_keys: KeyPair,
    pub msp_root: Certificate,
    intermediate_keys: KeyPair,
    /// Every intermediate ever issued; the last one is current.
    pub intermediates: Vec<Certificate>,
    pub peers: Vec<Peer>,
    pub agent_address: String,
}

impl Organization {
    pub fn new(
        network_id: &str,
        org_id: &str,
        peer_count: usize,
        validity: Validity,
        agent_address: &str,
    ) -> Self {
        let root_keys = KeyPair::derive(&format!("msp:{network_id}:{org_id}:root"));
        let root_spec = CertSpec::new(Self::root_name(network_id, org_id), root_keys.clone(), Validity::new(0, u64::MAX));
        let msp_root = issue_certificate(&root_keys, &root_spec.subject_name, &root_spec)
            .expect("root validity is nonempty");
        let mut org = Organization {
            org_id: org_id.to_string(),
            network_id: network_id.to_string(),
            intermediate_keys: root_keys.clone(),
            root_keys,
            msp_root,
            intermediates: Vec::new(),
            peers: Vec::new(),
            agent_address: agent_address.to_string(),
        };
        org.issue_generation(peer_count, validity);
        org
    }

    fn root_name(network_id: &str, org_id: &str) -> String {
        format!("ca.{org_id}.{network_id}")
    }

    fn intermediate_name(&self) -> String {
        format!("ica.{}.{}", self.org_id, self.network_id)
    }

    fn issue_generation(&mut self, peer_count: usize, validity: Validity) {
        let generation = self.intermediates.len();
        let (net, org) = (&self.network_id, &self.org_id);
        self.intermediate_keys = KeyPair::derive(&format!("msp:{net}:{org}:ica:{generation}"));
        let ica_spec = CertSpec::new(self.intermediate_name(), self.intermediate_keys.clone(), validity);
        let ica = issue_certificate(&self.root_keys, &self.msp_root.subject_name, &ica_spec)
            .expect("intermediate validity checked by caller");
        self.peers = (0..peer_count)
            .map(|i| {
                let name = format!("peer{i}.{org}.{net}");
                let keypair = KeyPair::derive(&format!("msp:{net}:{org}:peer{i}:{generation}"));
                let spec = CertSpec::new(name.clone(), keypair.clone(), validity);
                let certificate = issue_certificate(&self.intermediate_keys, &ica.subject_name, &spec)
                    .expect("leaf validity checked by caller");
                Peer { name, keypair, certificate }
            })
            .collect();
        self.intermediates.push(ica);
    }

    pub fn current_intermediate(&self) -> &Certificate {
        self.intermediates.last().expect("at least one generation")
    }

    /// The bundle a foreign network records: root then current intermediate.
    pub fn msp_bundle(&self) -> CertificateChain {
        CertificateChain {
            certificates: vec![self.msp_root.clone(), self.current_intermediate().clone()],
        }
    }

    pub fn peer_chain(&self, peer: usize) -> CertificateChain {
        self.msp_bundle().extended(self.peers[peer].certificate.clone())
    }

    /// Issues a new intermediate and re-enrolls every peer under it.
    pub fn rotate(&mut self, validity: Validity) {
        assert!(validity.from < validity.to, "empty rotation window");
        let peers = self.peers.len();
        self.issue_generation(peers, validity);
    }

    pub fn generation(&self) -> usize {
        self.intermediates.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordStatus {
    #[serde(rename = "ACTIVE")]
    Active,
    #[serde(rename = "REVOKED")]
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignIdentityRecord {
    pub network_id: String,
    pub org_id: String,
    pub org_did: Did,
    pub bundle: CertificateChain,
    pub bundle_digest: Digest,
    pub status: RecordStatus,
    pub synced_at: LogicalTime,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrustEntry {
    pub iin_id: String,
    pub anchor_did: Did,
    pub network_id: String,
}

/// A local organization and the admin key its endorsements are checked against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalOrg {
    pub org_id: String,
    pub did: Did,
    pub admin_key: PublicKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdentityAction {
    Update,
    Revoke,
}

impl IdentityAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            IdentityAction::Update => "update",
            IdentityAction::Revoke => "revoke",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignIdentityPayload {
    pub network_id: String,
    pub org_id: String,
    pub org_did: Did,
    pub bundle: CertificateChain,
    pub action: IdentityAction,
}

impl ForeignIdentityPayload {
    pub fn bundle_digest(&self) -> Digest {
        self.bundle.digest()
    }
}

#[derive(Serialize)]
struct EndorsementBody<'a> {
    network_id: &'a str,
    org_id: &'a str,
    bundle_digest: &'a Digest,
    nonce: &'a Nonce,
    action: IdentityAction,
}

/// Signature an organization contributes to a foreign-identity update.
pub fn endorse(
    admin_keys: &KeyPair,
    network_id: &str,
    org_id: &str,
    bundle_digest: &Digest,
    nonce: &Nonce,
    action: IdentityAction,
) -> Signature {
    admin_keys.sign_record(
        tags::ENDORSEMENT,
        &EndorsementBody { network_id, org_id, bundle_digest, nonce, action },
    )
}

pub fn endorsement_valid(
    admin_key: &PublicKey,
    network_id: &str,
    org_id: &str,
    bundle_digest: &Digest,
    nonce: &Nonce,
    action: IdentityAction,
    signature: &Signature,
) -> bool {
    verify_record(
        admin_key,
        tags::ENDORSEMENT,
        &EndorsementBody { network_id, org_id, bundle_digest, nonce, action },
        signature,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub org_id: String,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmdacTx {
    pub payload: ForeignIdentityPayload,
    pub nonce: Nonce,
    pub endorsements: Vec<Endorsement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerTx {
    RegisterOrg(LocalOrg),
    AddInteropNetwork(String),
    AddTrustEntry(TrustEntry),
    Cmdac(CmdacTx),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockOutcome {
    Applied,
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub time: LogicalTime,
    pub tx: LedgerTx,
    pub outcome: BlockOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CmdacError {
    #[error("missing endorsement from {0}")]
    MissingEndorsement(String),
    #[error("endorsement from {0} does not verify")]
    BadEndorsementSignature(String),
    #[error("endorsement from {0}, which is not a local organization")]
    UnknownEndorser(String),
    #[error("more than one endorsement from {0}")]
    DuplicateEndorsement(String),
    #[error("no active record matching the revocation")]
    NoRecordToRevoke,
    #[error("network has no local organizations")]
    NoLocalOrgs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerReceipt {
    pub height: u64,
    pub outcome: BlockOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalLedger {
    pub network_id: String,
    pub interop_networks: Vec<String>,
    pub trust_list: Vec<TrustEntry>,
    pub orgs: BTreeMap<String, LocalOrg>,
    pub foreign_identities: BTreeMap<(String, String), ForeignIdentityRecord>,
    pub block_log: Vec<Block>,
}

/// Hashed view of a record: synced_at is commit timing, not content.
#[derive(Serialize)]
struct RecordView<'a> {
    network_id: &'a str,
    org_id: &'a str,
    org_did: &'a Did,
    bundle_digest: &'a Digest,
    status: RecordStatus,
}

#[derive(Serialize)]
struct LedgerView<'a> {
    network_id: &'a str,
    interop_networks: &'a [String],
    trust_list: &'a [TrustEntry],
    orgs: &'a BTreeMap<String, LocalOrg>,
    records: Vec<RecordView<'a>>,
}

impl LocalLedger {
    pub fn new(network_id: &str) -> Self {
        LocalLedger {
            network_id: network_id.to_string(),
            interop_networks: Vec::new(),
            trust_list: Vec::new(),
            orgs: BTreeMap::new(),
            foreign_identities: BTreeMap::new(),
            block_log: Vec::new(),
        }
    }

    pub fn is_interop(&self, network_id: &str) -> bool {
        self.interop_networks.iter().any(|n| n == network_id)
    }

    pub fn trust_entries_for<'a>(&'a self, network_id: &'a str) -> impl Iterator<Item = &'a TrustEntry> + 'a {
        self.trust_list.iter().filter(move |t| t.network_id == network_id)
    }

    /// The anchor trusted to vouch for `network_id`'s membership.
    pub fn pmv_for(&self, network_id: &str) -> Option<&TrustEntry> {
        self.trust_list.iter().find(|t| t.network_id == network_id)
    }

    pub fn trusted_issuers(&self, network_id: &str) -> Vec<Did> {
        self.trust_entries_for(network_id).map(|t| t.anchor_did.clone()).collect()
    }

    pub fn record(&self, network_id: &str, org_id: &str) -> Option<&ForeignIdentityRecord> {
        self.foreign_identities.get(&(network_id.to_string(), org_id.to_string()))
    }

    pub fn records_for<'a>(&'a self, network_id: &'a str) -> impl Iterator<Item = &'a ForeignIdentityRecord> + 'a {
        self.foreign_identities.values().filter(move |r| r.network_id == network_id)
    }

    /// Content hash: configuration and records, without the block log or sync times.
    pub fn state_hash(&self) -> Digest {
        let view = LedgerView {
            network_id: &self.network_id,
            interop_networks: &self.interop_networks,
            trust_list: &self.trust_list,
            orgs: &self.orgs,
            records: self
                .foreign_identities
                .values()
                .map(|r| RecordView {
                    network_id: &r.network_id,
                    org_id: &r.org_id,
                    org_did: &r.org_did,
                    bundle_digest: &r.bundle_digest,
                    status: r.status,
                })
                .collect(),
        };
        digest_of(tags::LEDGER_STATE, &view)
    }

    /// Hash of the full state including sync times, for replay checks.
    pub fn full_hash(&self) -> Digest {
        digest_of(tags::LEDGER_STATE, &(&self.state_hash(), &self.foreign_identities))
    }

    fn append(&mut self, time: LogicalTime, tx: LedgerTx, outcome: BlockOutcome) -> LedgerReceipt {
        let height = self.block_log.len() as u64;
        self.block_log.push(Block { height, time, tx, outcome });
        LedgerReceipt { height, outcome }
    }

    /// Applies a configuration or contract transaction. Rejected contract
    /// calls leave the ledger untouched.
    pub fn submit(&mut self, tx: LedgerTx, now: LogicalTime) -> Result<LedgerReceipt, CmdacError> {
        let outcome = match &tx {
            LedgerTx::RegisterOrg(org) => {
                if self.orgs.get(&org.org_id) == Some(org) {
                    BlockOutcome::NoOp
                } else {
                    self.orgs.insert(org.org_id.clone(), org.clone());
                    BlockOutcome::Applied
                }
            }
            LedgerTx::AddInteropNetwork(n) => {
                if self.is_interop(n) {
                    BlockOutcome::NoOp
                } else {
                    self.interop_networks.push(n.clone());
                    BlockOutcome::Applied
                }
            }
            LedgerTx::AddTrustEntry(t) => {
                if self.trust_list.contains(t) {
                    BlockOutcome::NoOp
                } else {
                    self.trust_list.push(t.clone());
                    BlockOutcome::Applied
                }
            }
            LedgerTx::Cmdac(c) => self.check_and_apply(c, now)?,
        };
        Ok(self.append(now, tx, outcome))
    }

    pub fn cmdac_update_foreign_identity(
        &mut self,
        payload: ForeignIdentityPayload,
        nonce: Nonce,
        endorsements: Vec<Endorsement>,
        now: LogicalTime,
    ) -> Result<LedgerReceipt, CmdacError> {
        self.submit(LedgerTx::Cmdac(CmdacTx { payload, nonce, endorsements }), now)
    }

    /// Unanimity check: one valid endorsement from every local org, no others.
    pub fn check_endorsements(&self, tx: &CmdacTx) -> Result<(), CmdacError> {
        if self.orgs.is_empty() {
            return Err(CmdacError::NoLocalOrgs);
        }
        let mut seen = BTreeSet::new();
        for e in &tx.endorsements {
            if !self.orgs.contains_key(&e.org_id) {
                return Err(CmdacError::UnknownEndorser(e.org_id.clone()));
            }
            if !seen.insert(e.org_id.as_str()) {
                return Err(CmdacError::DuplicateEndorsement(e.org_id.clone()));
            }
        }
        let p = &tx.payload;
        let digest = p.bundle_digest();
        for (org_id, org) in &self.orgs {
            let e = tx
                .endorsements
                .iter()
                .find(|e| &e.org_id == org_id)
                .ok_or_else(|| CmdacError::MissingEndorsement(org_id.clone()))?;
            if !endorsement_valid(&org.admin_key, &p.network_id, &p.org_id, &digest, &tx.nonce, p.action, &e.signature) {
                return Err(CmdacError::BadEndorsementSignature(org_id.clone()));
            }
        }
        Ok(())
    }

    fn check_and_apply(&mut self, tx: &CmdacTx, now: LogicalTime) -> Result<BlockOutcome, CmdacError> {
        self.check_endorsements(tx)?;
        let p = &tx.payload;
        let key = (p.network_id.clone(), p.org_id.clone());
        let digest = p.bundle_digest();
        let existing = self.foreign_identities.get_mut(&key);
        match (p.action, existing) {
            (IdentityAction::Update, Some(r))
                if r.bundle_digest == digest && r.status == RecordStatus::Active && r.org_did == p.org_did =>
            {
                Ok(BlockOutcome::NoOp)
            }
            (IdentityAction::Update, _) => {
                self.foreign_identities.insert(
                    key,
                    ForeignIdentityRecord {
                        network_id: p.network_id.clone(),
                        org_id: p.org_id.clone(),
                        org_did: p.org_did.clone(),
                        bundle: p.bundle.clone(),
                        bundle_digest: digest,
                        status: RecordStatus::Active,
                        synced_at: now,
                    },
                );
                Ok(BlockOutcome::Applied)
            }
            (IdentityAction::Revoke, Some(r)) if r.bundle_digest == digest => {
                if r.status == RecordStatus::Revoked {
                    Ok(BlockOutcome::NoOp)
                } else {
                    r.status = RecordStatus::Revoked;
                    r.synced_at = now;
                    Ok(BlockOutcome::Applied)
                }
            }
            (IdentityAction::Revoke, _) => Err(CmdacError::NoRecordToRevoke),
        }
    }

    /// Rebuilds a ledger by re-applying a block log.
    pub fn replay(network_id: &str, blocks: &[Block]) -> Result<LocalLedger, CmdacError> {
        let mut ledger = LocalLedger::new(network_id);
        for b in blocks {
            ledger.submit(b.tx.clone(), b.time)?;
        }
        Ok(ledger)
    }

    pub fn dump_log(&self) -> Vec<u8> {
        codec::encode_tagged(tags::LEDGER_LOG, &self.block_log)
    }

    pub fn load_log(bytes: &[u8]) -> Result<Vec<Block>, codec::CodecError> {
        codec::decode_tagged(tags::LEDGER_LOG, bytes)
    }
}

/// A permissioned network: its organizations and shared ledger.
#[derive(Debug, Clone)]
pub struct Network {
    pub network_id: String,
    pub orgs: BTreeMap<String, Organization>,
    pub ledger: LocalLedger,
}

impl Network {
    pub fn new(network_id: &str) -> Self {
        Network {
            network_id: network_id.to_string(),
            orgs: BTreeMap::new(),
            ledger: LocalLedger::new(network_id),
        }
    }

    pub fn add_org(&mut self, org: Organization) {
        self.orgs.insert(org.org_id.clone(), org);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationPolicy {
    pub source_network: String,
    pub required_orgs: BTreeSet<String>,
}

impl VerificationPolicy {
    pub fn new(source_network: &str, orgs: impl IntoIterator<Item = impl Into<String>>) -> Self {
        VerificationPolicy {
            source_network: source_network.to_string(),
            required_orgs: orgs.into_iter().map(Into::into).collect(),
        }
    }

    /// Every ACTIVE organization of the source network as currently recorded.
    pub fn all_active(ledger: &LocalLedger, source_network: &str) -> Self {
        Self::new(
            source_network,
            ledger
                .records_for(source_network)
                .filter(|r| r.status == RecordStatus::Active)
                .map(|r| r.org_id.clone()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerSignature {
    pub org_id: String,
    pub peer_certificate: Certificate,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataProof {
    pub source_network: String,
    #[serde(with = "codec::byte_string")]
    pub data: Vec<u8>,
    pub signatures: Vec<PeerSignature>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataProofError {
    #[error("organization {0} is not part of the source network")]
    UnknownOrg(String),
    #[error("verification policy names no organizations")]
    EmptyPolicy,
    #[error("no identity record for {0}")]
    NoIdentityRecord(String),
    #[error("{0} is a revoked member")]
    RevokedMember(String),
    #[error("certificate of {0} is expired")]
    ExpiredCertificate(String),
    #[error("proof signature of {0} does not verify")]
    BadProofSignature(String),
}

impl DataProofError {
    pub fn name(&self) -> &'static str {
        match self {
            DataProofError::UnknownOrg(_) => "UnknownOrg",
            DataProofError::EmptyPolicy => "EmptyPolicy",
            DataProofError::NoIdentityRecord(_) => "NoIdentityRecord",
            DataProofError::RevokedMember(_) => "RevokedMember",
            DataProofError::ExpiredCertificate(_) => "ExpiredCertificate",
            DataProofError::BadProofSignature(_) => "BadProofSignature",
        }
    }
}

#[derive(Serialize)]
struct DataBytes<'a>(#[serde(with = "codec::byte_string")] &'a [u8]);

pub fn data_digest(data: &[u8]) -> Digest {
    digest_of(tags::DATA, &DataBytes(data))
}

/// One first-peer signature per required organization over `Digest(data)`.
pub fn generate_data_proof(
    network: &Network,
    data: &[u8],
    policy: &VerificationPolicy,
) -> Result<DataProof, DataProofError> {
    if policy.required_orgs.is_empty() {
        return Err(DataProofError::EmptyPolicy);
    }
    let digest = data_digest(data);
    let signatures = policy
        .required_orgs
        .iter()
        .map(|org_id| {
            let org = network
                .orgs
                .get(org_id)
                .filter(|o| !o.peers.is_empty())
                .ok_or_else(|| DataProofError::UnknownOrg(org_id.clone()))?;
            let peer = &org.peers[0];
            Ok(PeerSignature {
                org_id: org_id.clone(),
                peer_certificate: peer.certificate.clone(),
                signature: peer.keypair.sign(digest.as_bytes()),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(DataProof {
        source_network: network.network_id.clone(),
        data: data.to_vec(),
        signatures,
    })
}

/// Accepts only if every required org has an ACTIVE record, its peer
/// certificate chains to the recorded bundle at `now`, and its signature
/// verifies. Checks orgs in policy order and reports the first failure.
pub fn verify_data_proof(
    ledger: &LocalLedger,
    proof: &DataProof,
    policy: &VerificationPolicy,
    now: LogicalTime,
) -> Result<(), DataProofError> {
    if policy.required_orgs.is_empty() {
        return Err(DataProofError::EmptyPolicy);
    }
    let digest = data_digest(&proof.data);
    for org_id in &policy.required_orgs {
        let record = ledger
            .record(&policy.source_network, org_id)
            .ok_or_else(|| DataProofError::NoIdentityRecord(org_id.clone()))?;
        if record.status == RecordStatus::Revoked {
            return Err(DataProofError::RevokedMember(org_id.clone()));
        }
        let sig = proof
            .signatures
            .iter()
            .find(|s| &s.org_id == org_id)
            .ok_or_else(|| DataProofError::BadProofSignature(org_id.clone()))?;
        let chain = record.bundle.extended(sig.peer_certificate.clone());
        let root = record
            .bundle
            .root()
            .ok_or_else(|| DataProofError::BadProofSignature(org_id.clone()))?;
        match verify_certificate_chain(&chain, root, now) {
            Ok(()) => {}
            Err(ChainError::Expired(_)) => return Err(DataProofError::ExpiredCertificate(org_id.clone())),
            Err(_) => return Err(DataProofError::BadProofSignature(org_id.clone())),
        }
        if !sig.peer_certificate.subject_public_key.verify(digest.as_bytes(), &sig.signature) {
            return Err(DataProofError::BadProofSignature(org_id.clone()));
        }
    }
    Ok(())
}
