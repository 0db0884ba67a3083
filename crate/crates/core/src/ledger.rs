//! Quorum-signed chain of global-model commitments.
//!
//! Each block stores the digest of the global model for its height, the
//! signed Merkle roots registered by the monitoring miners since the previous
//! block, and miner signatures over the block header. Model payloads live in
//! a content-addressed [`ModelStore`] off-chain unless the ledger is built
//! with `on_chain_model`, in which case blocks embed them.
//!
//! # Block encoding
//!
//! All integers little-endian.
//!
//! ```text
//! header := height:u64 prev:[32] gm:[32] timestamp_ms:f64
//!           has_model:u8 [model params]
//!           n_roots:u32 { worker:u32 round:u64 root:[32] sig }*
//! block  := header n_sigs:u32 { sig }*
//! sig    := node_kind:u8 node_id:u32 payload_digest:[32] ed25519:[64]
//! ```
//!
//! Miners sign `header`; the next block links to `SHA-256(block)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crypto::{Keyring, Signature};
use crate::error::{Error, Result};
use crate::types::{hash, Digest, ModelParams, NodeId, Round, WorkerId};

/// Strict majority of `miners`.
pub fn quorum(miners: usize) -> usize {
    miners / 2 + 1
}

/// Bytes a worker signs when submitting a root.
pub fn root_payload(worker: WorkerId, round: Round, root: &Digest) -> Vec<u8> {
    let mut out = Vec::with_capacity(44);
    out.extend_from_slice(&worker.0.to_le_bytes());
    out.extend_from_slice(&round.to_le_bytes());
    out.extend_from_slice(root.as_bytes());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootEntry {
    pub worker: WorkerId,
    pub round: Round,
    pub root: Digest,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_digest: Digest,
    pub global_model_digest: Digest,
    pub timestamp_ms: f64,
    pub model: Option<ModelParams>,
    /// Sorted by `(worker, round)`.
    pub merkle_roots: Vec<RootEntry>,
    pub signatures: Vec<Signature>,
}

impl Block {
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(self.prev_digest.as_bytes());
        out.extend_from_slice(self.global_model_digest.as_bytes());
        out.extend_from_slice(&self.timestamp_ms.to_le_bytes());
        match &self.model {
            Some(m) => {
                out.push(1);
                m.write_bytes(&mut out);
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(self.merkle_roots.len() as u32).to_le_bytes());
        for e in &self.merkle_roots {
            out.extend_from_slice(&e.worker.0.to_le_bytes());
            out.extend_from_slice(&e.round.to_le_bytes());
            out.extend_from_slice(e.root.as_bytes());
            out.extend_from_slice(&e.signature.to_bytes());
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.extend_from_slice(&(self.signatures.len() as u32).to_le_bytes());
        for s in &self.signatures {
            out.extend_from_slice(&s.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Block> {
        let mut r = Reader(bytes);
        let height = r.u64()?;
        let prev_digest = r.digest()?;
        let global_model_digest = r.digest()?;
        let timestamp_ms = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let model = match r.u8()? {
            0 => None,
            1 => {
                let (m, rest) = ModelParams::read_bytes(r.0)?;
                r.0 = rest;
                Some(m)
            }
            t => return Err(Error::Decode(format!("model flag {t}"))),
        };
        let n_roots = r.u32()?;
        let mut merkle_roots = Vec::new();
        for _ in 0..n_roots {
            let worker = WorkerId(r.u32()?);
            let round = r.u64()?;
            let root = r.digest()?;
            let signature = r.signature()?;
            merkle_roots.push(RootEntry {
                worker,
                round,
                root,
                signature,
            });
        }
        let n_sigs = r.u32()?;
        let mut signatures = Vec::new();
        for _ in 0..n_sigs {
            signatures.push(r.signature()?);
        }
        if !r.0.is_empty() {
            return Err(Error::Decode("trailing bytes after block".into()));
        }
        Ok(Block {
            height,
            prev_digest,
            global_model_digest,
            timestamp_ms,
            model,
            merkle_roots,
            signatures,
        })
    }

    pub fn digest(&self) -> Digest {
        hash(&self.to_bytes())
    }

    pub fn encoded_len(&self) -> usize {
        self.to_bytes().len()
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Decode("block truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn digest(&mut self) -> Result<Digest> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }
    fn signature(&mut self) -> Result<Signature> {
        let signer = NodeId::from_tag(self.take(5)?)?;
        let payload_digest = self.digest()?;
        let bytes = self.take(64)?.to_vec();
        Ok(Signature {
            signer,
            payload_digest,
            bytes,
        })
    }
}

/// Content-addressed off-chain storage for model payloads.
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    models: BTreeMap<Digest, ModelParams>,
}

impl ModelStore {
    pub fn put(&mut self, params: &ModelParams) -> Digest {
        let d = params.digest();
        self.models.entry(d).or_insert_with(|| params.clone());
        d
    }

    /// Returns the payload only if it still hashes to `digest`.
    pub fn get(&self, digest: &Digest) -> Option<&ModelParams> {
        self.models.get(digest).filter(|m| m.digest() == *digest)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Digest, &ModelParams)> {
        self.models.iter()
    }
}

/// Roots accepted for inclusion in the next block.
#[derive(Debug, Clone, Default)]
pub struct PendingBlock {
    pub roots: Vec<RootEntry>,
    pub global_model_digest: Option<Digest>,
    pub model: Option<ModelParams>,
}

impl PendingBlock {
    /// Register a signed root after checking the worker's identity.
    pub fn record_root(
        &mut self,
        keyring: &Keyring,
        registered: &mut BTreeSet<(WorkerId, Round)>,
        worker: WorkerId,
        round: Round,
        root: Digest,
        signature: Signature,
    ) -> Result<()> {
        if signature.signer != NodeId::from(worker)
            || !keyring.verify(&root_payload(worker, round, &root), &signature)
        {
            return Err(Error::BadSignature(worker.to_string()));
        }
        if !registered.insert((worker, round)) {
            return Err(Error::DuplicateRoot { worker, round });
        }
        self.roots.push(RootEntry {
            worker,
            round,
            root,
            signature,
        });
        Ok(())
    }
}

pub struct Ledger {
    keyring: Keyring,
    miners: u32,
    on_chain_model: bool,
    chain: Vec<Block>,
    store: ModelStore,
    pending: PendingBlock,
    registered: BTreeSet<(WorkerId, Round)>,
    latest_roots: BTreeMap<WorkerId, (Round, Digest)>,
    rejected_roots: usize,
}

impl Ledger {
    /// New chain whose genesis block carries `init_model`, signed by every
    /// miner.
    pub fn genesis(keyring: Keyring, miners: u32, init_model: &ModelParams, on_chain_model: bool) -> Self {
        let mut store = ModelStore::default();
        let gm = store.put(init_model);
        let mut block = Block {
            height: 0,
            prev_digest: Digest::default(),
            global_model_digest: gm,
            timestamp_ms: 0.0,
            model: on_chain_model.then(|| init_model.clone()),
            merkle_roots: Vec::new(),
            signatures: Vec::new(),
        };
        let header = block.header_bytes();
        block.signatures = (0..miners)
            .map(|m| keyring.key(NodeId::Miner(m)).expect("miner key").sign(&header))
            .collect();
        Self {
            keyring,
            miners,
            on_chain_model,
            chain: vec![block],
            store,
            pending: PendingBlock::default(),
            registered: BTreeSet::new(),
            latest_roots: BTreeMap::new(),
            rejected_roots: 0,
        }
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn tip(&self) -> &Block {
        self.chain.last().expect("genesis always present")
    }

    pub fn store(&self) -> &ModelStore {
        &self.store
    }

    pub fn keyring(&self) -> &Keyring {
        &self.keyring
    }

    pub fn rejected_roots(&self) -> usize {
        self.rejected_roots
    }

    /// Latest registered root per worker, as seen by the monitoring miners.
    pub fn latest_root(&self, worker: WorkerId) -> Option<(Round, Digest)> {
        self.latest_roots.get(&worker).copied()
    }

    pub fn record_root(&mut self, worker: WorkerId, round: Round, root: Digest, sig: Signature) -> Result<()> {
        let res = self
            .pending
            .record_root(&self.keyring, &mut self.registered, worker, round, root, sig);
        match res {
            Ok(()) => {
                let e = self.latest_roots.entry(worker).or_insert((round, root));
                if round >= e.0 {
                    *e = (round, root);
                }
                Ok(())
            }
            Err(err) => {
                self.rejected_roots += 1;
                Err(err)
            }
        }
    }

    /// Stage the aggregated model for the next block.
    pub fn set_global_model(&mut self, params: &ModelParams) -> Result<Digest> {
        if !params.is_finite() {
            return Err(Error::NonFinite);
        }
        let d = self.store.put(params);
        self.pending.global_model_digest = Some(d);
        self.pending.model = self.on_chain_model.then(|| params.clone());
        Ok(d)
    }

    /// Collect signatures from the online miners and append the block once a
    /// strict majority has signed. On failure the pending state is kept.
    pub fn propose_and_commit(&mut self, online_miners: &[u32], timestamp_ms: f64) -> Result<&Block> {
        let gm = self
            .pending
            .global_model_digest
            .ok_or_else(|| Error::InvalidChain {
                height: self.tip().height + 1,
                reason: "no global model staged".into(),
            })?;
        let mut roots = self.pending.roots.clone();
        roots.sort_by_key(|e| (e.worker, e.round));
        let mut block = Block {
            height: self.tip().height + 1,
            prev_digest: self.tip().digest(),
            global_model_digest: gm,
            timestamp_ms,
            model: self.pending.model.clone(),
            merkle_roots: roots,
            signatures: Vec::new(),
        };
        let header = block.header_bytes();
        let signers: BTreeSet<u32> = online_miners.iter().copied().filter(|m| *m < self.miners).collect();
        let needed = quorum(self.miners as usize);
        if signers.len() < needed {
            return Err(Error::QuorumUnreachable {
                got: signers.len(),
                needed,
            });
        }
        block.signatures = signers
            .iter()
            .map(|m| self.keyring.key(NodeId::Miner(*m)).expect("miner key").sign(&header))
            .collect();
        self.pending = PendingBlock::default();
        self.chain.push(block);
        Ok(self.tip())
    }

    pub fn get_global_model(&self, height: u64) -> Result<Digest> {
        self.chain
            .get(height as usize)
            .map(|b| b.global_model_digest)
            .ok_or(Error::UnknownHeight(height))
    }

    /// Resolve the committed model payload at `height` from the store.
    pub fn fetch_global_model(&self, height: u64) -> Result<&ModelParams> {
        let d = self.get_global_model(height)?;
        self.store.get(&d).ok_or(Error::UnknownHeight(height))
    }

    pub fn validate(&self) -> Result<()> {
        validate_chain(&self.chain, &self.keyring, self.miners)
    }

    /// One JSON object per block.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for b in &self.chain {
            let line = serde_json::to_string(&BlockSummary::from(b)).expect("serializable");
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlockSummary {
    pub height: u64,
    pub digest: Digest,
    pub prev_digest: Digest,
    pub global_model_digest: Digest,
    pub timestamp_ms: f64,
    pub roots: Vec<(u32, Round, Digest)>,
    pub signers: Vec<String>,
    pub bytes: usize,
}

impl From<&Block> for BlockSummary {
    fn from(b: &Block) -> Self {
        Self {
            height: b.height,
            digest: b.digest(),
            prev_digest: b.prev_digest,
            global_model_digest: b.global_model_digest,
            timestamp_ms: b.timestamp_ms,
            roots: b.merkle_roots.iter().map(|e| (e.worker.0, e.round, e.root)).collect(),
            signers: b.signatures.iter().map(|s| s.signer.to_string()).collect(),
            bytes: b.encoded_len(),
        }
    }
}

/// Full chain check: heights, hash links, miner quorum over each header,
/// worker signatures on every root, on-chain payload digests, and timestamp
/// order.
pub fn validate_chain(chain: &[Block], keyring: &Keyring, miners: u32) -> Result<()> {
    let needed = quorum(miners as usize);
    let mut prev: Option<&Block> = None;
    for (i, b) in chain.iter().enumerate() {
        let fail = |reason: &str| Error::InvalidChain {
            height: i as u64,
            reason: reason.to_string(),
        };
        if b.height != i as u64 {
            return Err(fail("height out of sequence"));
        }
        match prev {
            None if b.prev_digest != Digest::default() => return Err(fail("genesis prev digest")),
            Some(p) if b.prev_digest != p.digest() => return Err(fail("broken hash link")),
            Some(p) if !(b.timestamp_ms >= p.timestamp_ms) => return Err(fail("timestamp regression")),
            _ => {}
        }
        if let Some(m) = &b.model {
            if m.digest() != b.global_model_digest {
                return Err(fail("on-chain model does not match digest"));
            }
        }
        for e in &b.merkle_roots {
            if e.signature.signer != NodeId::from(e.worker)
                || !keyring.verify(&root_payload(e.worker, e.round, &e.root), &e.signature)
            {
                return Err(fail("bad worker root signature"));
            }
        }
        let header = b.header_bytes();
        let mut signers = BTreeSet::new();
        for s in &b.signatures {
            match s.signer {
                NodeId::Miner(m) if m < miners && keyring.verify(&header, s) => {
                    if !signers.insert(m) {
                        return Err(fail("duplicate miner signature"));
                    }
                }
                _ => return Err(fail("bad miner signature")),
            }
        }
        if signers.len() < needed {
            return Err(fail("below quorum"));
        }
        prev = Some(b);
    }
    Ok(())
}

/// Decode every block from its encoding and validate. Decoding failures
/// count as invalid.
pub fn validate_encoded(blocks: &[Vec<u8>], keyring: &Keyring, miners: u32) -> Result<()> {
    let chain = blocks
        .iter()
        .map(|b| Block::from_bytes(b))
        .collect::<Result<Vec<_>>>()?;
    validate_chain(&chain, keyring, miners)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger(miners: u32) -> Ledger {
        let keys = Keyring::generate(3, 4, miners);
        Ledger::genesis(keys, miners, &ModelParams::new(vec![0.01, -0.02, 0.03, 0.0]), false)
    }

    fn sign_root(l: &Ledger, w: u32, round: Round, root: Digest) -> Signature {
        l.keyring()
            .key(NodeId::Worker(w))
            .unwrap()
            .sign(&root_payload(WorkerId(w), round, &root))
    }

    #[test]
    fn genesis_only_chain_validates() {
        let l = ledger(4);
        l.validate().unwrap();
        assert_eq!(l.tip().height, 0);
        assert!(l.fetch_global_model(0).is_ok());
    }

    #[test]
    fn quorum_three_of_four_commits() {
        let mut l = ledger(4);
        l.set_global_model(&ModelParams::new(vec![1.0; 4])).unwrap();
        l.propose_and_commit(&[0, 1, 2], 10.0).unwrap();
        l.validate().unwrap();
        assert_eq!(l.tip().signatures.len(), 3);
    }

    #[test]
    fn quorum_two_of_four_does_not_commit() {
        let mut l = ledger(4);
        l.set_global_model(&ModelParams::new(vec![1.0; 4])).unwrap();
        let err = l.propose_and_commit(&[0, 3], 10.0).unwrap_err();
        assert!(matches!(err, Error::QuorumUnreachable { got: 2, needed: 3 }));
        assert_eq!(l.chain().len(), 1);
    }

    #[test]
    fn quorum_is_strict_majority() {
        assert_eq!(quorum(4), 3);
        assert_eq!(quorum(3), 2);
        assert_eq!(quorum(1), 1);
        assert_eq!(quorum(6), 4);
    }

    #[test]
    fn record_root_checks_identity_and_duplicates() {
        let mut l = ledger(4);
        let root = hash(b"r");
        let sig = sign_root(&l, 1, 0, root);
        l.record_root(WorkerId(1), 0, root, sig.clone()).unwrap();
        assert!(matches!(
            l.record_root(WorkerId(1), 0, root, sig),
            Err(Error::DuplicateRoot { .. })
        ));
        // signed by worker 2 but claimed for worker 3
        let forged = sign_root(&l, 2, 0, root);
        assert!(matches!(
            l.record_root(WorkerId(3), 0, root, forged),
            Err(Error::BadSignature(_))
        ));
        // right signer, wrong root
        let sig = sign_root(&l, 2, 0, root);
        assert!(l.record_root(WorkerId(2), 0, hash(b"other"), sig).is_err());
        assert_eq!(l.rejected_roots(), 3);
        assert_eq!(l.latest_root(WorkerId(1)), Some((0, root)));
    }

    #[test]
    fn unknown_height_errors() {
        let l = ledger(4);
        assert!(matches!(l.get_global_model(5), Err(Error::UnknownHeight(5))));
    }

    #[test]
    fn encoding_roundtrip() {
        let mut l = ledger(4);
        let root = hash(b"r");
        let sig = sign_root(&l, 0, 0, root);
        l.record_root(WorkerId(0), 0, root, sig).unwrap();
        l.set_global_model(&ModelParams::new(vec![2.0; 4])).unwrap();
        l.propose_and_commit(&[0, 1, 2, 3], 5.0).unwrap();
        for b in l.chain() {
            assert_eq!(&Block::from_bytes(&b.to_bytes()).unwrap(), b);
        }
    }

    #[test]
    fn root_growth_is_independent_of_model_dimension() {
        let grow = |dim: usize, on_chain: bool| {
            let keys = Keyring::generate(3, 2, 4);
            let mut l = Ledger::genesis(keys, 4, &ModelParams::zeros(dim), on_chain);
            let root = hash(b"r");
            let sig = l.keyring().key(NodeId::Worker(0)).unwrap().sign(&root_payload(WorkerId(0), 0, &root));
            l.record_root(WorkerId(0), 0, root, sig).unwrap();
            l.set_global_model(&ModelParams::new(vec![1.0; dim])).unwrap();
            l.propose_and_commit(&[0, 1, 2], 1.0).unwrap();
            (l.chain()[1].encoded_len(), l.chain()[0].encoded_len())
        };
        let (small, g_small) = grow(4, false);
        let (big, g_big) = grow(1000, false);
        assert_eq!(small, big);
        assert_eq!(g_small, g_big);
        let (small_on, _) = grow(4, true);
        let (big_on, _) = grow(1000, true);
        assert_eq!(big_on - small_on, 8 * (1000 - 4));
    }
}
