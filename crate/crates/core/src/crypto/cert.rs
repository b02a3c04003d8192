//! MSP-style certificates and chains. Not X.509: a certificate is a signed
//! canonical record binding a subject name to a key over a logical-time window.

use super::{digest_of, verify_record, Digest, KeyPair, PublicKey, Signature};
use crate::codec::tags;
use serde::{Deserialize, Serialize};

/// Scenario clock ticks.
pub type LogicalTime = u64;

/// Half-open validity window `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub from: LogicalTime,
    pub to: LogicalTime,
}

impl Validity {
    pub fn new(from: LogicalTime, to: LogicalTime) -> Self {
        Validity { from, to }
    }

    pub fn contains(&self, now: LogicalTime) -> bool {
        self.from <= now && now < self.to
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub subject_name: String,
    pub subject_public_key: PublicKey,
    pub issuer_name: String,
    pub valid_from: LogicalTime,
    pub valid_to: LogicalTime,
    pub issuer_signature: Signature,
}

#[derive(Serialize)]
struct ToBeSigned<'a> {
    subject_name: &'a str,
    subject_public_key: &'a PublicKey,
    issuer_name: &'a str,
    valid_from: LogicalTime,
    valid_to: LogicalTime,
}

impl Certificate {
    fn tbs(&self) -> ToBeSigned<'_> {
        ToBeSigned {
            subject_name: &self.subject_name,
            subject_public_key: &self.subject_public_key,
            issuer_name: &self.issuer_name,
            valid_from: self.valid_from,
            valid_to: self.valid_to,
        }
    }

    pub fn validity(&self) -> Validity {
        Validity::new(self.valid_from, self.valid_to)
    }

    pub fn is_signed_by(&self, issuer_key: &PublicKey) -> bool {
        verify_record(issuer_key, tags::CERTIFICATE, &self.tbs(), &self.issuer_signature)
    }
}

/// Subject of a certificate about to be issued.
#[derive(Debug, Clone)]
pub struct CertSpec {
    pub subject_name: String,
    pub keypair: KeyPair,
    pub validity: Validity,
}

impl CertSpec {
    pub fn new(subject_name: impl Into<String>, keypair: KeyPair, validity: Validity) -> Self {
        CertSpec {
            subject_name: subject_name.into(),
            keypair,
            validity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertError {
    #[error("no certificate specs given")]
    EmptySpec,
    #[error("validity window of {0:?} is empty")]
    InvalidValidity(String),
}

pub fn issue_certificate(
    issuer: &KeyPair,
    issuer_name: &str,
    subject: &CertSpec,
) -> Result<Certificate, CertError> {
    if subject.validity.from >= subject.validity.to {
        return Err(CertError::InvalidValidity(subject.subject_name.clone()));
    }
    let tbs = ToBeSigned {
        subject_name: &subject.subject_name,
        subject_public_key: &subject.keypair.public_key,
        issuer_name,
        valid_from: subject.validity.from,
        valid_to: subject.validity.to,
    };
    let issuer_signature = issuer.sign_record(tags::CERTIFICATE, &tbs);
    Ok(Certificate {
        subject_name: subject.subject_name.clone(),
        subject_public_key: subject.keypair.public_key,
        issuer_name: issuer_name.to_string(),
        valid_from: subject.validity.from,
        valid_to: subject.validity.to,
        issuer_signature,
    })
}

/// Ordered chain, root first and leaf last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateChain {
    pub certificates: Vec<Certificate>,
}

impl CertificateChain {
    pub fn root(&self) -> Option<&Certificate> {
        self.certificates.first()
    }

    pub fn leaf(&self) -> Option<&Certificate> {
        self.certificates.last()
    }

    pub fn len(&self) -> usize {
        self.certificates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.certificates.is_empty()
    }

    /// Chain with `leaf` appended.
    pub fn extended(&self, leaf: Certificate) -> CertificateChain {
        let mut certificates = self.certificates.clone();
        certificates.push(leaf);
        CertificateChain { certificates }
    }

    pub fn digest(&self) -> Digest {
        digest_of(tags::CERT_BUNDLE, self)
    }
}

/// `specs[0]` is the self-signed root; each following spec is signed by its predecessor.
pub fn issue_certificate_chain(specs: &[CertSpec]) -> Result<CertificateChain, CertError> {
    let root = specs.first().ok_or(CertError::EmptySpec)?;
    let mut certificates = vec![issue_certificate(&root.keypair, &root.subject_name, root)?];
    for pair in specs.windows(2) {
        certificates.push(issue_certificate(
            &pair[0].keypair,
            &pair[0].subject_name,
            &pair[1],
        )?);
    }
    Ok(CertificateChain { certificates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("chain is empty")]
    Empty,
    #[error("certificate {0} is not the trusted root")]
    UntrustedRoot(usize),
    #[error("certificate {0} is not signed by its predecessor")]
    BrokenLink(usize),
    #[error("certificate {0} is outside its validity window")]
    Expired(usize),
}

impl ChainError {
    pub fn index(&self) -> Option<usize> {
        match self {
            ChainError::Empty => None,
            ChainError::UntrustedRoot(i) | ChainError::BrokenLink(i) | ChainError::Expired(i) => {
                Some(*i)
            }
        }
    }
}

/// Checks root identity, then each link and validity window in order; the
/// error names the first failing index.
pub fn verify_certificate_chain(
    chain: &CertificateChain,
    trusted_root: &Certificate,
    now: LogicalTime,
) -> Result<(), ChainError> {
    let root = chain.root().ok_or(ChainError::Empty)?;
    if root != trusted_root {
        return Err(ChainError::UntrustedRoot(0));
    }
    let mut issuer = root;
    for (i, cert) in chain.certificates.iter().enumerate() {
        if cert.issuer_name != issuer.subject_name || !cert.is_signed_by(&issuer.subject_public_key)
        {
            return Err(ChainError::BrokenLink(i));
        }
        if !cert.validity().contains(now) {
            return Err(ChainError::Expired(i));
        }
        issuer = cert;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, from: u64, to: u64) -> CertSpec {
        CertSpec::new(name, KeyPair::derive(name), Validity::new(from, to))
    }

    fn depth3() -> CertificateChain {
        issue_certificate_chain(&[spec("root", 0, 100), spec("ica", 0, 100), spec("peer0", 10, 50)])
            .unwrap()
    }

    #[test]
    fn root_only_chain_is_self_signed() {
        let chain = issue_certificate_chain(&[spec("root", 0, 10)]).unwrap();
        assert_eq!(chain.len(), 1);
        let root = chain.root().unwrap();
        assert_eq!(root.issuer_name, root.subject_name);
        assert_eq!(verify_certificate_chain(&chain, root, 5), Ok(()));
    }

    #[test]
    fn depth_three_verifies_and_truncation_fails() {
        let chain = depth3();
        let root = chain.root().unwrap().clone();
        assert_eq!(verify_certificate_chain(&chain, &root, 20), Ok(()));
        let truncated = CertificateChain { certificates: chain.certificates[1..].to_vec() };
        assert_eq!(
            verify_certificate_chain(&truncated, &root, 20),
            Err(ChainError::UntrustedRoot(0))
        );
        // even when trusting the new head, it is not self-signed
        let head = truncated.root().unwrap().clone();
        assert_eq!(
            verify_certificate_chain(&truncated, &head, 20),
            Err(ChainError::BrokenLink(0))
        );
    }

    #[test]
    fn leaf_outside_window_is_expired() {
        let chain = depth3();
        let root = chain.root().unwrap().clone();
        assert_eq!(verify_certificate_chain(&chain, &root, 60), Err(ChainError::Expired(2)));
        assert_eq!(verify_certificate_chain(&chain, &root, 5), Err(ChainError::Expired(2)));
        assert_eq!(verify_certificate_chain(&chain, &root, 100), Err(ChainError::Expired(0)));
    }

    #[test]
    fn different_trusted_root_rejected() {
        let chain = depth3();
        let other = issue_certificate_chain(&[spec("root", 0, 100)]).unwrap();
        let other_root = issue_certificate_chain(&[CertSpec::new(
            "root",
            KeyPair::derive("imposter"),
            Validity::new(0, 100),
        )])
        .unwrap();
        assert_eq!(verify_certificate_chain(&chain, other.root().unwrap(), 20), Ok(()));
        assert_eq!(
            verify_certificate_chain(&chain, other_root.root().unwrap(), 20),
            Err(ChainError::UntrustedRoot(0))
        );
    }

    #[test]
    fn middle_cert_resigned_with_wrong_key_breaks_link_one() {
        let mut chain = depth3();
        let forged = issue_certificate(&KeyPair::derive("mallory"), "root", &spec("ica", 0, 100))
            .unwrap();
        chain.certificates[1] = forged;
        let root = chain.root().unwrap().clone();
        assert_eq!(verify_certificate_chain(&chain, &root, 20), Err(ChainError::BrokenLink(1)));
    }

    #[test]
    fn spec_errors() {
        assert_eq!(issue_certificate_chain(&[]), Err(CertError::EmptySpec));
        assert_eq!(
            issue_certificate_chain(&[spec("root", 5, 5)]),
            Err(CertError::InvalidValidity("root".into()))
        );
    }

    #[test]
    fn tampered_field_invalidates_signature() {
        let chain = depth3();
        let root = chain.root().unwrap().clone();
        let mut c = chain.clone();
        c.certificates[2].valid_to = 99;
        assert_eq!(verify_certificate_chain(&c, &root, 20), Err(ChainError::BrokenLink(2)));
        let mut c = chain.clone();
        c.certificates[2].subject_name = "peer1".into();
        assert_eq!(verify_certificate_chain(&c, &root, 20), Err(ChainError::BrokenLink(2)));
    }
}
