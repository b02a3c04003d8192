//! Signatures, digests, certificate chains and the Merkle revocation accumulator.

pub mod accumulator;
pub mod cert;

use crate::codec::{self, hex_bytes};
use ed25519_dalek::Signer;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::fmt;

pub use accumulator::{
    accumulator_init, accumulator_insert, accumulator_revoke, witness_for, witness_verify,
    AccumulatorError, AccumulatorWitness, LeafSet, RevocationRegistryState, Side,
};
pub use cert::{
    issue_certificate, issue_certificate_chain, verify_certificate_chain, CertError, CertSpec,
    Certificate, CertificateChain, ChainError, LogicalTime, Validity,
};

pub const SCHEME_ED25519: &str = "ed25519";

/// 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(#[serde(with = "hex_bytes")] pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Hash of raw bytes with no framing. Callers are responsible for domain separation.
pub fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// `H(tag ‖ canonical(value))`.
pub fn digest_of<T: Serialize + ?Sized>(tag: u8, value: &T) -> Digest {
    sha256(&[&codec::encode_tagged(tag, value)])
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex_bytes")] pub [u8; 32]);

impl PublicKey {
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        if signature.scheme_id != SCHEME_ED25519 {
            return false;
        }
        let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let Ok(sig_bytes) = <[u8; 64]>::try_from(signature.bytes.as_slice()) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig_bytes);
        key.verify_strict(message, &sig).is_ok()
    }

    /// Montgomery form of the key, used for key agreement when sealing to a DID key.
    pub fn to_x25519(&self) -> Option<[u8; 32]> {
        ed25519_dalek::VerifyingKey::from_bytes(&self.0)
            .ok()
            .map(|k| k.to_montgomery().to_bytes())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..6]))
    }
}

/// A detached signature tagged with the scheme that produced it.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    #[serde(with = "codec::byte_string")]
    pub bytes: Vec<u8>,
    pub scheme_id: String,
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}:{})", self.scheme_id, hex::encode(&self.bytes[..self.bytes.len().min(6)]))
    }
}

/// Ed25519 key pair with deterministic generation from a 32-byte seed.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub public_key: PublicKey,
    #[serde(with = "hex_bytes")]
    secret_key: [u8; 32],
}

impl KeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        let signing = ed25519_dalek::SigningKey::from_bytes(&seed);
        KeyPair {
            public_key: PublicKey(signing.verifying_key().to_bytes()),
            secret_key: seed,
        }
    }

    /// Key pair derived from a label, e.g. `"org:Seller"`. Scenario fixtures use this.
    pub fn derive(label: &str) -> Self {
        Self::from_seed(sha256(&[b"iin-keygen\0", label.as_bytes()]).0)
    }

    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret_key
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        let signing = ed25519_dalek::SigningKey::from_bytes(&self.secret_key);
        Signature {
            bytes: signing.sign(message).to_bytes().to_vec(),
            scheme_id: SCHEME_ED25519.to_string(),
        }
    }

    /// Signs the domain-tagged canonical encoding of `value`.
    pub fn sign_record<T: Serialize + ?Sized>(&self, tag: u8, value: &T) -> Signature {
        self.sign(&codec::encode_tagged(tag, value))
    }

    /// X25519 scalar matching [`PublicKey::to_x25519`].
    pub fn x25519_secret(&self) -> [u8; 32] {
        ed25519_dalek::SigningKey::from_bytes(&self.secret_key).to_scalar_bytes()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &self.public_key)
            .finish_non_exhaustive()
    }
}

pub fn verify_record<T: Serialize + ?Sized>(
    key: &PublicKey,
    tag: u8,
    value: &T,
    signature: &Signature,
) -> bool {
    key.verify(&codec::encode_tagged(tag, value), signature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_keygen() {
        assert_eq!(KeyPair::derive("a").public_key, KeyPair::derive("a").public_key);
        assert_ne!(KeyPair::derive("a").public_key, KeyPair::derive("b").public_key);
    }

    #[test]
    fn sign_verify_roundtrip_and_single_bit_mutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let other = KeyPair::derive("other");
        for i in 0..1000 {
            let kp = KeyPair::from_seed(rng.gen());
            let len = rng.gen_range(0..64);
            let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let sig = kp.sign(&msg);
            assert!(kp.public_key.verify(&msg, &sig), "roundtrip {i}");
            assert!(!other.public_key.verify(&msg, &sig));

            if !msg.is_empty() {
                let mut m = msg.clone();
                let bit = rng.gen_range(0..m.len() * 8);
                m[bit / 8] ^= 1 << (bit % 8);
                assert!(!kp.public_key.verify(&m, &sig), "message bit {bit}");
            }
            let mut s = sig.clone();
            let bit = rng.gen_range(0..512);
            s.bytes[bit / 8] ^= 1 << (bit % 8);
            assert!(!kp.public_key.verify(&msg, &s), "signature bit {bit}");

            let mut pk = kp.public_key;
            let bit = rng.gen_range(0..256);
            pk.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!pk.verify(&msg, &sig), "key bit {bit}");
        }
    }

    #[test]
    fn scheme_mismatch_rejected() {
        let kp = KeyPair::derive("x");
        let mut sig = kp.sign(b"m");
        sig.scheme_id = "rsa".into();
        assert!(!kp.public_key.verify(b"m", &sig));
    }

    #[test]
    fn x25519_agreement_matches_both_sides() {
        let a = KeyPair::derive("alice");
        let eph = x25519_dalek::StaticSecret::from([7u8; 32]);
        let eph_pub = x25519_dalek::PublicKey::from(&eph);
        let sender =
            eph.diffie_hellman(&x25519_dalek::PublicKey::from(a.public_key.to_x25519().unwrap()));
        let receiver = x25519_dalek::x25519(a.x25519_secret(), eph_pub.to_bytes());
        assert_eq!(sender.to_bytes(), receiver);
    }

    #[test]
    fn digest_is_domain_separated() {
        assert_ne!(digest_of(1, "abc"), digest_of(2, "abc"));
        assert_eq!(digest_of(1, "abc"), digest_of(1, "abc"));
    }
}
