//! Wire messages between agents and anchors. Every message names the
//! requester's session and round; replies echo both so late or duplicated
//! replies are ignored.

use crate::codec::{self, tags, CodecError};
use crate::credentials::{MembershipVC, Nonce, VerifiablePresentation};
use crate::crypto::{AccumulatorWitness, CertificateChain, Digest, KeyPair};
use crate::network::{endorse, Endorsement, ForeignIdentityPayload, IdentityAction};
use crate::registry::{Did, DidDocument};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRef {
    pub id: u64,
    pub round: u32,
}

/// An organization's network-issued identity, carried in a self-signed presentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityBundle {
    pub org_id: String,
    pub network_id: String,
    pub chain: CertificateChain,
}

impl IdentityBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode_tagged(tags::IDENTITY_BUNDLE, self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        codec::decode_tagged(tags::IDENTITY_BUNDLE, bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureCollectionRequest {
    /// Network whose ledger the record is written to.
    pub local_network: String,
    pub foreign_network: String,
    pub foreign_org: String,
    pub foreign_org_did: Did,
    pub bundle_digest: Digest,
    pub bundle: CertificateChain,
    pub action: IdentityAction,
    pub nonce: Nonce,
    pub initiator: String,
    pub responses: Vec<Endorsement>,
}

impl SignatureCollectionRequest {
    pub fn payload(&self) -> ForeignIdentityPayload {
        ForeignIdentityPayload {
            network_id: self.foreign_network.clone(),
            org_id: self.foreign_org.clone(),
            org_did: self.foreign_org_did.clone(),
            bundle: self.bundle.clone(),
            action: self.action,
        }
    }

    pub fn endorse(&self, org_id: &str, admin_keys: &KeyPair) -> Endorsement {
        Endorsement {
            org_id: org_id.to_string(),
            signature: endorse(
                admin_keys,
                &self.foreign_network,
                &self.foreign_org,
                &self.bundle_digest,
                &self.nonce,
                self.action,
            ),
        }
    }

    /// Adds a response; a second one from the same org is ignored.
    pub fn add_response(&mut self, endorsement: Endorsement) -> bool {
        if self.responses.iter().any(|r| r.org_id == endorsement.org_id) {
            return false;
        }
        self.responses.push(endorsement);
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountersignReply {
    Signed(Endorsement),
    /// The countersigner's own digest of the target bundle.
    DigestMismatch(Digest),
    ValidationFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Msg {
    VerinymRequest { session: SessionRef, org_name: String, document: DidDocument },
    VerinymReply { session: SessionRef, result: Result<(), String> },
    MembershipRequest { session: SessionRef, holder: Did, network_id: String },
    MembershipReply {
        session: SessionRef,
        network_id: String,
        result: Result<(MembershipVC, AccumulatorWitness), String>,
    },
    MemberlistRequest { session: SessionRef, network_id: String, nonce: Nonce },
    MemberlistReply { session: SessionRef, result: Result<VerifiablePresentation, String> },
    WitnessRequest { session: SessionRef, credential_id: Digest },
    WitnessReply { session: SessionRef, witness: Option<AccumulatorWitness> },
    Challenge { session: SessionRef, network_id: String, nonce: Nonce },
    MembershipVp { session: SessionRef, vp: Option<VerifiablePresentation> },
    IdentityRequest { session: SessionRef, network_id: String, nonce: Nonce },
    IdentityVp { session: SessionRef, vp: Option<VerifiablePresentation> },
    CountersignRequest { session: SessionRef, scr: SignatureCollectionRequest },
    CountersignResponse { session: SessionRef, reply: CountersignReply },
}

impl Msg {
    pub fn kind(&self) -> &'static str {
        match self {
            Msg::VerinymRequest { .. } => "verinym_request",
            Msg::VerinymReply { .. } => "verinym_reply",
            Msg::MembershipRequest { .. } => "membership_request",
            Msg::MembershipReply { .. } => "membership_reply",
            Msg::MemberlistRequest { .. } => "memberlist_request",
            Msg::MemberlistReply { .. } => "memberlist_reply",
            Msg::WitnessRequest { .. } => "witness_request",
            Msg::WitnessReply { .. } => "witness_reply",
            Msg::Challenge { .. } => "challenge",
            Msg::MembershipVp { .. } => "membership_vp",
            Msg::IdentityRequest { .. } => "identity_request",
            Msg::IdentityVp { .. } => "identity_vp",
            Msg::CountersignRequest { .. } => "countersign_request",
            Msg::CountersignResponse { .. } => "countersign_response",
        }
    }

    pub fn session(&self) -> SessionRef {
        match self {
            Msg::VerinymRequest { session, .. }
            | Msg::VerinymReply { session, .. }
            | Msg::MembershipRequest { session, .. }
            | Msg::MembershipReply { session, .. }
            | Msg::MemberlistRequest { session, .. }
            | Msg::MemberlistReply { session, .. }
            | Msg::WitnessRequest { session, .. }
            | Msg::WitnessReply { session, .. }
            | Msg::Challenge { session, .. }
            | Msg::MembershipVp { session, .. }
            | Msg::IdentityRequest { session, .. }
            | Msg::IdentityVp { session, .. }
            | Msg::CountersignRequest { session, .. }
            | Msg::CountersignResponse { session, .. } => *session,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode_tagged(tags::MESSAGE, self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        codec::decode_tagged(tags::MESSAGE, bytes)
    }
}
