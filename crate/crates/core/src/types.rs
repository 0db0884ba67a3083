//! Shared domain vocabulary: node identifiers, rounds, model parameters and
//! 256-bit digests.
//!
//! # Canonical encodings
//!
//! Everything that gets hashed or signed goes through an explicit byte
//! layout so digests are reproducible bit-for-bit:
//!
//! * [`ModelParams`]: `u32` dimension (little-endian) followed by each weight
//!   as a little-endian IEEE-754 `f64`, in index order.
//! * [`Digest`]: the raw 32 bytes.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

/// Training iteration counter. Round 0 is the genesis round.
pub type Round = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkerId(pub u32);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

/// Which pool a miner belongs to. The two pools never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MinerRole {
    /// Aggregation and consensus.
    Fl,
    /// Root registration and auditing.
    Mon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MinerId {
    pub id: u32,
    pub role: MinerRole,
}

impl fmt::Display for MinerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.role {
            MinerRole::Fl => "fl",
            MinerRole::Mon => "mon",
        };
        write!(f, "m{}-{}", self.id, tag)
    }
}

/// Any node that can hold a key. Workers order before miners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Worker(u32),
    Miner(u32),
}

impl NodeId {
    pub(crate) fn tag(self) -> [u8; 5] {
        let (kind, id) = match self {
            NodeId::Worker(i) => (0u8, i),
            NodeId::Miner(i) => (1u8, i),
        };
        let mut out = [0u8; 5];
        out[0] = kind;
        out[1..].copy_from_slice(&id.to_le_bytes());
        out
    }

    pub(crate) fn from_tag(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 5 {
            return Err(Error::Decode("node tag length".into()));
        }
        let id = u32::from_le_bytes(bytes[1..5].try_into().unwrap());
        match bytes[0] {
            0 => Ok(NodeId::Worker(id)),
            1 => Ok(NodeId::Miner(id)),
            t => Err(Error::Decode(format!("unknown node kind {t}"))),
        }
    }
}

impl From<WorkerId> for NodeId {
    fn from(w: WorkerId) -> Self {
        NodeId::Worker(w.0)
    }
}

impl From<MinerId> for NodeId {
    fn from(m: MinerId) -> Self {
        NodeId::Miner(m.id)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Worker(i) => write!(f, "w{i}"),
            NodeId::Miner(i) => write!(f, "m{i}"),
        }
    }
}

/// 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Decode(e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Decode("digest must be 32 bytes".into()))?;
        Ok(Digest(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 over `bytes`.
pub fn hash(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// SHA-256 over the concatenation of `parts`, without materializing it.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Flat weight vector of the shared classifier (bias included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// Canonical byte layout: `u32` LE dimension, then `f64` LE weights.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.weights.len());
        self.write_bytes(&mut out);
        out
    }

    pub(crate) fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, rest) = Self::read_bytes(bytes)?;
        if !rest.is_empty() {
            return Err(Error::Decode("trailing bytes after model params".into()));
        }
        Ok(params)
    }

    pub(crate) fn read_bytes(bytes: &[u8]) -> Result<(Self, &[u8])> {
        if bytes.len() < 4 {
            return Err(Error::Decode("model params header".into()));
        }
        let dim = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let body = &bytes[4..];
        let need = dim
            .checked_mul(8)
            .ok_or_else(|| Error::Decode("model dimension overflow".into()))?;
        if body.len() < need {
            return Err(Error::Decode("model params truncated".into()));
        }
        let weights = body[..need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((Self { weights }, &body[need..]))
    }

    pub fn digest(&self) -> Digest {
        hash(&self.to_bytes())
    }

    /// Euclidean distance to `other`. Panics on dimension mismatch.
    pub fn l2_distance(&self, other: &ModelParams) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}
