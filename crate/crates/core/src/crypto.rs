//! Node keys and signatures (Ed25519).
//!
//! Keys are derived from the run seed so that a whole run, signatures
//! included, is reproducible. Signatures are made over the SHA-256 digest of
//! the payload; the digest travels with the signature so verifiers can check
//! they are talking about the same payload.

use std::collections::BTreeMap;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{self, label};
use crate::types::{hash, Digest, NodeId};

/// Encoded signature length: node tag (5) + payload digest (32) + raw (64).
pub const SIGNATURE_LEN: usize = 5 + 32 + 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer: NodeId,
    pub payload_digest: Digest,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

impl Signature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SIGNATURE_LEN);
        out.extend_from_slice(&self.signer.tag());
        out.extend_from_slice(self.payload_digest.as_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone)]
pub struct KeyPair {
    node: NodeId,
    signing: SigningKey,
}

impl KeyPair {
    /// Deterministic key for `node` under run seed `seed`.
    pub fn derive(seed: u64, node: NodeId) -> Self {
        let tag = node.tag();
        let mut rng = seed::stream(
            seed,
            &[label::KEYS, tag[0] as u64, u32::from_le_bytes(tag[1..].try_into().unwrap()) as u64],
        );
        Self {
            node,
            signing: SigningKey::from_bytes(&rng.gen()),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key())
    }

    pub fn sign(&self, payload: &[u8]) -> Signature {
        let payload_digest = hash(payload);
        let sig = self.signing.sign(payload_digest.as_bytes());
        Signature {
            signer: self.node,
            payload_digest,
            bytes: sig.to_bytes().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    /// Malformed signature bytes verify as `false`, never panic.
    pub fn verify(&self, payload: &[u8], sig: &Signature) -> bool {
        if hash(payload) != sig.payload_digest {
            return false;
        }
        let Ok(raw) = <[u8; 64]>::try_from(sig.bytes.as_slice()) else {
            return false;
        };
        let raw = ed25519_dalek::Signature::from_bytes(&raw);
        self.0
            .verify_strict(sig.payload_digest.as_bytes(), &raw)
            .is_ok()
    }
}

pub fn sign(key: &KeyPair, payload: &[u8]) -> Signature {
    key.sign(payload)
}

pub fn verify(key: &PublicKey, payload: &[u8], sig: &Signature) -> bool {
    key.verify(payload, sig)
}

/// All key pairs of a run, indexed by node.
#[derive(Clone)]
pub struct Keyring {
    keys: BTreeMap<NodeId, KeyPair>,
}

impl Keyring {
    pub fn generate(seed: u64, workers: u32, miners: u32) -> Self {
        let keys = (0..workers)
            .map(NodeId::Worker)
            .chain((0..miners).map(NodeId::Miner))
            .map(|n| (n, KeyPair::derive(seed, n)))
            .collect();
        Self { keys }
    }

    pub fn key(&self, node: NodeId) -> Option<&KeyPair> {
        self.keys.get(&node)
    }

    pub fn public(&self, node: NodeId) -> Option<PublicKey> {
        self.keys.get(&node).map(KeyPair::public)
    }

    /// Verify `sig` against the key registered for its claimed signer.
    pub fn verify(&self, payload: &[u8], sig: &Signature) -> bool {
        self.public(sig.signer)
            .is_some_and(|pk| pk.verify(payload, sig))
    }
}
