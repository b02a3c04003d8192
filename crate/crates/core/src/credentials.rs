//! Membership and memberlist credentials, and the presentations that carry
//! them across network boundaries.
//!
//! Credentials and presentations are plain signatures over canonical
//! encodings. A membership presentation discloses exactly one credential, so
//! an organization's other memberships never appear in it.

use crate::codec::{self, hex_bytes, tags};
use crate::crypto::{
    digest_of, verify_record, witness_verify, AccumulatorWitness, Digest, KeyPair, PublicKey,
    Signature,
};
use crate::registry::{Did, RegistryError, RegistryReader};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

pub const MEMBERSHIP_SCHEMA_ID: &str = "schema:membership:1.0";
pub const MEMBERLIST_SCHEMA_ID: &str = "schema:memberlist:1.0";
pub const ATTR_HOLDER_DID: &str = "holder_did";
pub const ATTR_NETWORK_ID: &str = "network_id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialSchema {
    pub schema_id: String,
    pub name: String,
    pub version: String,
    pub attribute_names: Vec<String>,
}

impl CredentialSchema {
    pub fn is_well_formed(&self) -> bool {
        let unique: BTreeSet<&String> = self.attribute_names.iter().collect();
        unique.len() == self.attribute_names.len()
    }
}

pub fn membership_schema() -> CredentialSchema {
    CredentialSchema {
        schema_id: MEMBERSHIP_SCHEMA_ID.into(),
        name: "membership".into(),
        version: "1.0".into(),
        attribute_names: vec![ATTR_HOLDER_DID.into(), ATTR_NETWORK_ID.into()],
    }
}

pub fn memberlist_schema() -> CredentialSchema {
    CredentialSchema {
        schema_id: MEMBERLIST_SCHEMA_ID.into(),
        name: "memberlist".into(),
        version: "1.0".into(),
        attribute_names: vec!["network_id".into(), "member_dids".into(), "roster_version".into()],
    }
}

/// Public key an issuer uses for one schema, as recorded on the registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialDefinition {
    pub cred_def_id: String,
    pub schema_id: String,
    pub issuer_did: Did,
    pub authentication_public_key: PublicKey,
}

/// Verifier-generated challenge, single use.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Nonce(#[serde(with = "hex_bytes")] pub [u8; 16]);

impl Nonce {
    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Nonce(b)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", hex::encode(&self.0[..4]))
    }
}

/// Credential id: `Digest(holder ‖ network ‖ issuance counter)`.
pub fn credential_id(holder: &Did, network_id: &str, counter: u64) -> Digest {
    digest_of(tags::CREDENTIAL_ID, &(holder, network_id, counter))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipVC {
    pub credential_id: Digest,
    /// Claims as `(attribute name, value)`, in schema order.
    pub attributes: Vec<(String, String)>,
    pub issuer_did: Did,
    pub cred_def_id: String,
    pub issuer_signature: Signature,
}

#[derive(Serialize)]
struct MembershipBody<'a> {
    credential_id: &'a Digest,
    attributes: &'a [(String, String)],
    issuer_did: &'a Did,
    cred_def_id: &'a str,
}

impl MembershipVC {
    pub fn issue(
        issuer_keys: &KeyPair,
        issuer_did: &Did,
        cred_def_id: &str,
        credential_id: Digest,
        attributes: Vec<(String, String)>,
    ) -> Self {
        let body = MembershipBody {
            credential_id: &credential_id,
            attributes: &attributes,
            issuer_did,
            cred_def_id,
        };
        let issuer_signature = issuer_keys.sign_record(tags::MEMBERSHIP_VC, &body);
        MembershipVC {
            credential_id,
            attributes,
            issuer_did: issuer_did.clone(),
            cred_def_id: cred_def_id.to_string(),
            issuer_signature,
        }
    }

    /// Conforming membership credential for `holder` in `network_id`.
    pub fn issue_membership(
        issuer_keys: &KeyPair,
        issuer_did: &Did,
        cred_def_id: &str,
        credential_id: Digest,
        holder: &Did,
        network_id: &str,
    ) -> Self {
        Self::issue(
            issuer_keys,
            issuer_did,
            cred_def_id,
            credential_id,
            vec![
                (ATTR_HOLDER_DID.into(), holder.to_string()),
                (ATTR_NETWORK_ID.into(), network_id.to_string()),
            ],
        )
    }

    fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn holder_did(&self) -> Option<Did> {
        self.attribute(ATTR_HOLDER_DID).and_then(|s| s.parse().ok())
    }

    pub fn network_id(&self) -> Option<&str> {
        self.attribute(ATTR_NETWORK_ID)
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        let body = MembershipBody {
            credential_id: &self.credential_id,
            attributes: &self.attributes,
            issuer_did: &self.issuer_did,
            cred_def_id: &self.cred_def_id,
        };
        verify_record(key, tags::MEMBERSHIP_VC, &body, &self.issuer_signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberlistVC {
    pub network_id: String,
    pub member_dids: Vec<Did>,
    pub roster_version: u64,
    pub issuer_did: Did,
    pub cred_def_id: String,
    pub issuer_signature: Signature,
}

#[derive(Serialize)]
struct MemberlistBody<'a> {
    network_id: &'a str,
    member_dids: &'a [Did],
    roster_version: u64,
    issuer_did: &'a Did,
    cred_def_id: &'a str,
}

impl MemberlistVC {
    pub fn issue(
        issuer_keys: &KeyPair,
        issuer_did: &Did,
        cred_def_id: &str,
        network_id: &str,
        member_dids: Vec<Did>,
        roster_version: u64,
    ) -> Self {
        let body = MemberlistBody {
            network_id,
            member_dids: &member_dids,
            roster_version,
            issuer_did,
            cred_def_id,
        };
        MemberlistVC {
            network_id: network_id.to_string(),
            issuer_signature: issuer_keys.sign_record(tags::MEMBERLIST_VC, &body),
            member_dids,
            roster_version,
            issuer_did: issuer_did.clone(),
            cred_def_id: cred_def_id.to_string(),
        }
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        let body = MemberlistBody {
            network_id: &self.network_id,
            member_dids: &self.member_dids,
            roster_version: self.roster_version,
            issuer_did: &self.issuer_did,
            cred_def_id: &self.cred_def_id,
        };
        verify_record(key, tags::MEMBERLIST_VC, &body, &self.issuer_signature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresentationKind {
    Membership,
    SelfSigned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresentationBody {
    Membership {
        credential: MembershipVC,
        witness: AccumulatorWitness,
    },
    SelfSigned(#[serde(with = "codec::byte_string")] Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiablePresentation {
    pub body: PresentationBody,
    pub presenter_did: Did,
    pub challenge_nonce: Nonce,
    pub presenter_signature: Signature,
}

#[derive(Serialize)]
struct PresentationSigned<'a> {
    kind: PresentationKind,
    body: &'a PresentationBody,
    presenter_did: &'a Did,
    challenge_nonce: &'a Nonce,
}

impl VerifiablePresentation {
    fn sign(keys: &KeyPair, body: PresentationBody, presenter_did: Did, nonce: Nonce) -> Self {
        let kind = match body {
            PresentationBody::Membership { .. } => PresentationKind::Membership,
            PresentationBody::SelfSigned(_) => PresentationKind::SelfSigned,
        };
        let signed = PresentationSigned {
            kind,
            body: &body,
            presenter_did: &presenter_did,
            challenge_nonce: &nonce,
        };
        let presenter_signature = keys.sign_record(tags::PRESENTATION, &signed);
        VerifiablePresentation {
            body,
            presenter_did,
            challenge_nonce: nonce,
            presenter_signature,
        }
    }

    pub fn kind(&self) -> PresentationKind {
        match self.body {
            PresentationBody::Membership { .. } => PresentationKind::Membership,
            PresentationBody::SelfSigned(_) => PresentationKind::SelfSigned,
        }
    }

    fn signed_part(&self) -> PresentationSigned<'_> {
        PresentationSigned {
            kind: self.kind(),
            body: &self.body,
            presenter_did: &self.presenter_did,
            challenge_nonce: &self.challenge_nonce,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode_tagged(tags::PRESENTATION, self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("presentation keys do not belong to the credential holder")]
    HolderKeyMismatch,
}

pub fn build_membership_vp(
    holder_keys: &KeyPair,
    credential: &MembershipVC,
    witness: &AccumulatorWitness,
    nonce: Nonce,
) -> Result<VerifiablePresentation, CredentialError> {
    let holder = credential
        .holder_did()
        .filter(|d| d.matches_key(&holder_keys.public_key))
        .ok_or(CredentialError::HolderKeyMismatch)?;
    Ok(VerifiablePresentation::sign(
        holder_keys,
        PresentationBody::Membership {
            credential: credential.clone(),
            witness: witness.clone(),
        },
        holder,
        nonce,
    ))
}

pub fn build_self_signed_vp(
    signer_keys: &KeyPair,
    signer_did: &Did,
    payload: Vec<u8>,
    nonce: Nonce,
) -> VerifiablePresentation {
    VerifiablePresentation::sign(
        signer_keys,
        PresentationBody::SelfSigned(payload),
        signer_did.clone(),
        nonce,
    )
}

/// A verified network membership.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipClaim {
    pub holder_did: Did,
    pub network_id: String,
}

/// Failure of one of the seven ordered membership checks.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MembershipCheckError {
    #[error("check 1: challenge nonce mismatch")]
    NonceMismatch,
    #[error("check 2: presenter signature: {0}")]
    PresenterSignature(String),
    #[error("check 3: presenter has no verinym")]
    NoVerinym,
    #[error("check 4: credential does not conform to its schema: {0}")]
    SchemaNonConformance(String),
    #[error("check 5: issuer not trusted or issuer signature invalid: {0}")]
    Issuer(String),
    #[error("check 6: credential revoked or witness stale")]
    Revoked,
    #[error("check 7: credential is for network {found:?}, expected {expected:?}")]
    NetworkMismatch { expected: String, found: String },
}

impl MembershipCheckError {
    pub fn check_index(&self) -> u8 {
        match self {
            MembershipCheckError::NonceMismatch => 1,
            MembershipCheckError::PresenterSignature(_) => 2,
            MembershipCheckError::NoVerinym => 3,
            MembershipCheckError::SchemaNonConformance(_) => 4,
            MembershipCheckError::Issuer(_) => 5,
            MembershipCheckError::Revoked => 6,
            MembershipCheckError::NetworkMismatch { .. } => 7,
        }
    }
}

/// Runs the seven membership checks in order and returns the claim.
pub fn verify_membership_vp(
    vp: &VerifiablePresentation,
    expected_network: &str,
    expected_nonce: &Nonce,
    registry: &impl RegistryReader,
    trusted_issuers: &[Did],
) -> Result<MembershipClaim, MembershipCheckError> {
    use MembershipCheckError as E;

    let PresentationBody::Membership { credential, witness } = &vp.body else {
        return Err(E::SchemaNonConformance("not a membership presentation".into()));
    };

    // 1
    if vp.challenge_nonce != *expected_nonce {
        return Err(E::NonceMismatch);
    }

    // 2
    let resolved = registry
        .resolve_did(&vp.presenter_did)
        .map_err(|e| E::PresenterSignature(format!("resolve: {e}")))?;
    let signed = codec::encode_tagged(tags::PRESENTATION, &vp.signed_part());
    if !resolved.document.verify(&signed, &vp.presenter_signature) {
        return Err(E::PresenterSignature("signature does not verify".into()));
    }
    if credential.holder_did().as_ref() != Some(&vp.presenter_did) {
        return Err(E::PresenterSignature("presenter is not the credential holder".into()));
    }

    // 3
    if !resolved.verinym {
        return Err(E::NoVerinym);
    }

    // 4
    let cred_def = registry
        .read_cred_def(&credential.cred_def_id)
        .map_err(|e| E::SchemaNonConformance(format!("credential definition: {e}")))?;
    let schema = registry
        .read_schema(&cred_def.schema_id)
        .map_err(|e| E::SchemaNonConformance(format!("schema: {e}")))?;
    let names: Vec<&str> = credential.attributes.iter().map(|(n, _)| n.as_str()).collect();
    if schema.schema_id != MEMBERSHIP_SCHEMA_ID || names != schema.attribute_names {
        return Err(E::SchemaNonConformance(format!(
            "attributes {names:?} vs schema {:?}",
            schema.attribute_names
        )));
    }

    // 5
    if !trusted_issuers.contains(&credential.issuer_did) {
        return Err(E::Issuer(format!("{} is not on the trust list", credential.issuer_did)));
    }
    if cred_def.issuer_did != credential.issuer_did
        || !credential.signature_valid(&cred_def.authentication_public_key)
    {
        return Err(E::Issuer("issuer signature does not verify".into()));
    }

    // 6
    let revocation = registry
        .read_revocation(&credential.issuer_did)
        .map_err(|_| E::Revoked)?;
    if witness.element != credential.credential_id || !witness_verify(&revocation, witness) {
        return Err(E::Revoked);
    }

    // 7
    let network = credential.network_id().unwrap_or_default();
    if network != expected_network {
        return Err(E::NetworkMismatch {
            expected: expected_network.to_string(),
            found: network.to_string(),
        });
    }

    Ok(MembershipClaim {
        holder_did: vp.presenter_did.clone(),
        network_id: network.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelfSignedError {
    #[error("presenter DID not found")]
    NotFound,
    #[error("presenter DID is not a verinym")]
    NoVerinym,
    #[error("challenge nonce mismatch")]
    NonceMismatch,
    #[error("presenter signature does not verify")]
    BadSignature,
    #[error("not a self-signed presentation")]
    WrongKind,
    #[error("registry: {0}")]
    Registry(RegistryError),
}

/// Checks a self-signed presentation against the presenter's registered
/// verinym and returns the payload bytes.
pub fn verify_self_signed_vp<'a>(
    vp: &'a VerifiablePresentation,
    registry: &impl RegistryReader,
    expected_nonce: &Nonce,
) -> Result<&'a [u8], SelfSignedError> {
    let PresentationBody::SelfSigned(payload) = &vp.body else {
        return Err(SelfSignedError::WrongKind);
    };
    let resolved = registry.resolve_did(&vp.presenter_did).map_err(|e| match e {
        RegistryError::NotFound => SelfSignedError::NotFound,
        other => SelfSignedError::Registry(other),
    })?;
    if !resolved.verinym {
        return Err(SelfSignedError::NoVerinym);
    }
    if vp.challenge_nonce != *expected_nonce {
        return Err(SelfSignedError::NonceMismatch);
    }
    let signed = codec::encode_tagged(tags::PRESENTATION, &vp.signed_part());
    if !resolved.document.verify(&signed, &vp.presenter_signature) {
        return Err(SelfSignedError::BadSignature);
    }
    Ok(payload)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MemberlistError {
    #[error("memberlist issuer {0} is not the trusted anchor")]
    UntrustedIssuer(Did),
    #[error("memberlist is for network {0:?}")]
    WrongNetwork(String),
    #[error("memberlist credential definition or schema invalid: {0}")]
    Schema(String),
    #[error("memberlist signature does not verify")]
    BadSignature,
}

/// Verifies a memberlist credential issued by `trusted_issuer` for `network_id`.
pub fn verify_memberlist_vc(
    vc: &MemberlistVC,
    network_id: &str,
    trusted_issuer: &Did,
    registry: &impl RegistryReader,
) -> Result<(), MemberlistError> {
    if vc.issuer_did != *trusted_issuer {
        return Err(MemberlistError::UntrustedIssuer(vc.issuer_did.clone()));
    }
    if vc.network_id != network_id {
        return Err(MemberlistError::WrongNetwork(vc.network_id.clone()));
    }
    let def = registry
        .read_cred_def(&vc.cred_def_id)
        .map_err(|e| MemberlistError::Schema(e.to_string()))?;
    let schema = registry
        .read_schema(&def.schema_id)
        .map_err(|e| MemberlistError::Schema(e.to_string()))?;
    if schema.attribute_names != memberlist_schema().attribute_names || def.issuer_did != vc.issuer_did
    {
        return Err(MemberlistError::Schema(format!("schema {}", schema.schema_id)));
    }
    if !vc.signature_valid(&def.authentication_public_key) {
        return Err(MemberlistError::BadSignature);
    }
    Ok(())
}
