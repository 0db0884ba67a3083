//! Append-only Merkle tree over a worker's chronological update history.
//!
//! Hashing rules (these fix roots bit-for-bit):
//!
//! * leaf digest: `SHA-256(0x00 || record bytes)`
//! * internal node: `SHA-256(0x01 || left || right)`
//! * odd node count at a level: the last node is promoted to the next level
//!   unchanged. It is never duplicated.
//!
//! A single-leaf tree therefore has the leaf digest as its root.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{hash_parts, Digest, ModelParams, Round, WorkerId};

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;

/// One round of a worker's history: the local model it submitted and the
/// digest of the global model it trained from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub worker: WorkerId,
    pub round: Round,
    pub local_model: ModelParams,
    pub global_model_digest: Digest,
}

impl UpdateRecord {
    /// `u32` LE worker, `u64` LE round, canonical model params, 32-byte GM
    /// digest.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 + 8 * self.local_model.dim() + 32);
        out.extend_from_slice(&self.worker.0.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        self.local_model.write_bytes(&mut out);
        out.extend_from_slice(self.global_model_digest.as_bytes());
        out
    }

    pub fn leaf_digest(&self) -> Digest {
        leaf_digest(&self.to_bytes())
    }
}

pub fn leaf_digest(record_bytes: &[u8]) -> Digest {
    hash_parts(&[&[LEAF_TAG], record_bytes])
}

pub fn node_digest(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[NODE_TAG], left.as_bytes(), right.as_bytes()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Membership proof for one leaf.
///
/// `siblings` lists, bottom-up, the sibling digest at every level where the
/// node on the path has one, tagged with the side the sibling sits on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MerklePath {
    pub index: usize,
    pub leaf_count: usize,
    pub siblings: Vec<(Digest, Side)>,
}

impl MerklePath {
    pub fn byte_len(&self) -> usize {
        self.siblings.len() * Digest::LEN
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MerkleTree {
    leaves: Vec<Digest>,
    root: Option<Digest>,
}

impl MerkleTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_leaves(leaves: Vec<Digest>) -> Self {
        let root = root_of(&leaves);
        Self { leaves, root }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.leaves
    }

    /// Appends `record`, whose round must equal the current leaf count.
    pub fn append_leaf(&mut self, record: &UpdateRecord) -> Result<()> {
        let expected = self.leaves.len() as Round;
        if record.round != expected {
            return Err(Error::NonConsecutiveRound {
                expected,
                got: record.round,
            });
        }
        self.leaves.push(record.leaf_digest());
        self.root = root_of(&self.leaves);
        Ok(())
    }

    pub fn root(&self) -> Result<Digest> {
        self.root.ok_or(Error::EmptyTree)
    }

    /// The tree as it was after its first `len` leaves.
    pub fn prefix(&self, len: usize) -> Result<MerkleTree> {
        if len > self.leaves.len() {
            return Err(Error::IndexOutOfRange {
                index: len,
                len: self.leaves.len(),
            });
        }
        Ok(MerkleTree::from_leaves(self.leaves[..len].to_vec()))
    }

    pub fn prove(&self, index: usize) -> Result<MerklePath> {
        self.prove_many(&[index]).map(|mut v| v.remove(0))
    }

    /// Proofs for several leaves, building the tree levels once.
    pub fn prove_many(&self, indices: &[usize]) -> Result<Vec<MerklePath>> {
        let n = self.leaves.len();
        if let Some(&index) = indices.iter().find(|i| **i >= n) {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
        let mut levels = vec![self.leaves.clone()];
        while levels.last().expect("non-empty").len() > 1 {
            let next = next_level(levels.last().expect("non-empty"));
            levels.push(next);
        }
        Ok(indices
            .iter()
            .map(|&index| {
                let mut siblings = Vec::new();
                let mut pos = index;
                for level in &levels[..levels.len() - 1] {
                    let sib = pos ^ 1;
                    if sib < level.len() {
                        let side = if pos % 2 == 0 { Side::Right } else { Side::Left };
                        siblings.push((level[sib], side));
                    }
                    pos /= 2;
                }
                MerklePath {
                    index,
                    leaf_count: n,
                    siblings,
                }
            })
            .collect())
    }
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => node_digest(l, r),
            [single] => *single,
            _ => unreachable!(),
        })
        .collect()
}

fn root_of(leaves: &[Digest]) -> Option<Digest> {
    if leaves.is_empty() {
        return None;
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Some(level[0])
}

/// True iff folding `leaf` along `path` reproduces `root`. The sibling
/// layout is re-derived from `(index, leaf_count)` and must match exactly.
pub fn verify(root: &Digest, leaf: &Digest, path: &MerklePath) -> bool {
    if path.leaf_count == 0 || path.index >= path.leaf_count {
        return false;
    }
    let mut acc = *leaf;
    let mut pos = path.index;
    let mut n = path.leaf_count;
    let mut sibs = path.siblings.iter();
    while n > 1 {
        if pos ^ 1 < n {
            let expected_side = if pos.is_multiple_of(2) { Side::Right } else { Side::Left };
            let Some((digest, side)) = sibs.next() else {
                return false;
            };
            if *side != expected_side {
                return false;
            }
            acc = match side {
                Side::Right => node_digest(&acc, digest),
                Side::Left => node_digest(digest, &acc),
            };
        }
        pos /= 2;
        n = n.div_ceil(2);
    }
    sibs.next().is_none() && acc == *root
}

/// [`verify`] for a verifier that knows which position and tree size the
/// proof must be for. The root does not commit to the leaf count, so a path
/// whose claimed `leaf_count` differs but has the same layout would
/// otherwise still fold to the root.
pub fn verify_at(root: &Digest, leaf: &Digest, path: &MerklePath, index: usize, leaf_count: usize) -> bool {
    path.index == index && path.leaf_count == leaf_count && verify(root, leaf, path)
}

/// Inclusive range of rounds selected for an audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Round,
    pub end: Round,
}

impl Window {
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rounds(&self) -> impl Iterator<Item = Round> {
        self.start..=self.end
    }

    /// Window of `size` consecutive rounds within a history of `history`
    /// records. The start is uniform over the admissible starts, restricted
    /// to the last `lookback + 1` of them when `lookback` is given. With a
    /// history shorter than `size` the whole history is returned.
    pub fn random<R: Rng + ?Sized>(
        history: usize,
        size: usize,
        lookback: Option<usize>,
        rng: &mut R,
    ) -> Option<Window> {
        if history == 0 || size == 0 {
            return None;
        }
        if history <= size {
            return Some(Window {
                start: 0,
                end: history as Round - 1,
            });
        }
        let last_start = history - size;
        let first_start = match lookback {
            Some(lb) => last_start.saturating_sub(lb),
            None => 0,
        };
        let start = rng.gen_range(first_start..=last_start) as Round;
        Some(Window {
            start,
            end: start + size as Round - 1,
        })
    }
}

/// Reveal every record in `window` with a proof against `tree`'s root.
pub fn open_window(
    tree: &MerkleTree,
    records: &[UpdateRecord],
    window: Window,
) -> Result<Vec<(UpdateRecord, MerklePath)>> {
    let history = tree.len().min(records.len());
    if window.start > window.end || window.end as usize >= history {
        return Err(Error::WindowOutOfRange {
            start: window.start,
            end: window.end,
            history,
        });
    }
    let indices: Vec<usize> = window.rounds().map(|r| r as usize).collect();
    let paths = tree.prove_many(&indices)?;
    Ok(indices.into_iter().zip(paths).map(|(i, p)| (records[i].clone(), p)).collect())
}

/// Byte accounting for the commitment designs that were weighed against each
/// other: per-update hashes on the ledger, one hash of the concatenated
/// history, and a Merkle root.
pub mod cost {
    use crate::types::Digest;

    /// Merkle design: one root per round regardless of history length.
    pub fn merkle_ledger_bytes_per_round(_history: usize) -> usize {
        Digest::LEN
    }

    /// Storing every previous update hash each round grows linearly.
    pub fn linear_hash_ledger_bytes_per_round(history: usize) -> usize {
        Digest::LEN * history
    }

    /// Hash-of-concatenation also stores a single digest.
    pub fn concat_ledger_bytes_per_round(_history: usize) -> usize {
        Digest::LEN
    }

    pub fn merkle_path_len(history: usize) -> usize {
        if history <= 1 {
            0
        } else {
            (usize::BITS - (history - 1).leading_zeros()) as usize
        }
    }

    /// Bytes revealed to open one record out of `history`.
    pub fn merkle_reveal_bytes(history: usize, record_size: usize) -> usize {
        Digest::LEN * merkle_path_len(history) + record_size
    }

    /// Opening one record under hash-of-concatenation needs the whole history.
    pub fn concat_reveal_bytes(history: usize, record_size: usize) -> usize {
        history * record_size
    }
}
