//! Append-only, hash-chained log of signed marketplace events.
//!
//! Each block commits to its index, the hash of its predecessor and the
//! canonical encoding of its transactions, so rewriting any block breaks the
//! link held by its successor. Every transaction carries a detached
//! signature by its author, checked against the registry stored in the
//! ledger header.
//!
//! Binary file layout (all integers big-endian, `lp` = `u32` length + bytes):
//!
//! ```text
//! header := "M2XL" | version:u16 | lp(digest tag) | key_count:u32 | (lp(agent id) | pubkey[32])*
//! file   := header | (block_len:u32 | block)*
//! block  := index:u64 | prev_hash[32] | tx_count:u32 | tx* | block_hash[32]
//! tx     := lp(author) | lp(payload) | timestamp:u64 | lp(signature[64])
//! ```
//!
//! `block_hash = SHA-256(index | prev_hash | tx_count | tx*)`.

use std::ops::Range;

use ed25519_dalek::VerifyingKey;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{hex_bytes, put_lp, Reader, Truncated};
use crate::events::SimEvent;
use crate::identity::{AgentId, AgentIdentity, KeyRegistry, SignatureBytes, PUBLIC_KEY_LEN};

pub const MAGIC: &[u8; 4] = b"M2XL";
pub const FORMAT_VERSION: u16 = 1;
pub const DIGEST_TAG: &str = "sha-256";

hex_bytes!(
    /// 256-bit SHA-256 digest.
    HashDigest,
    32
);

impl HashDigest {
    pub const ZERO: HashDigest = HashDigest([0u8; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        HashDigest(Sha256::digest(bytes).into())
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("transaction {position} by {author} has an invalid signature")]
    InvalidSignature { position: usize, author: AgentId },
    #[error("refusing to append an empty block")]
    EmptyBlock,
    #[error("transaction {position} has an empty payload")]
    EmptyPayload { position: usize },
    #[error("agent {0} has no registered key pair")]
    UnknownAgent(AgentId),
    #[error("malformed ledger file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<Truncated> for LedgerError {
    fn from(t: Truncated) -> Self {
        LedgerError::Format(t.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignedTransaction {
    pub author: AgentId,
    #[serde(serialize_with = "hex_vec")]
    pub payload: Vec<u8>,
    /// Simulation tick (minutes).
    pub timestamp: u64,
    pub signature: SignatureBytes,
}

fn hex_vec<S: serde::Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(v))
}

impl SignedTransaction {
    /// Bytes covered by the signature: `lp(author) | lp(payload) | timestamp`.
    pub fn signing_message(author: &AgentId, payload: &[u8], timestamp: u64) -> Vec<u8> {
        let mut m = Vec::with_capacity(author.as_str().len() + payload.len() + 16);
        put_lp(&mut m, author.as_str().as_bytes());
        put_lp(&mut m, payload);
        m.extend_from_slice(&timestamp.to_be_bytes());
        m
    }

    pub fn sign(author: &AgentIdentity, payload: Vec<u8>, timestamp: u64) -> Self {
        let msg = Self::signing_message(author.id(), &payload, timestamp);
        SignedTransaction {
            author: author.id().clone(),
            signature: author.sign(&msg),
            payload,
            timestamp,
        }
    }

    pub fn verify(&self, registry: &KeyRegistry) -> bool {
        let msg = Self::signing_message(&self.author, &self.payload, self.timestamp);
        registry.verify(&self.author, &msg, &self.signature.0)
    }

    /// Decodes the payload as a simulation event.
    pub fn event(&self) -> Option<SimEvent> {
        SimEvent::decode(&self.payload)
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        put_lp(out, self.author.as_str().as_bytes());
        put_lp(out, &self.payload);
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        put_lp(out, &self.signature.0);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let author = std::str::from_utf8(r.lp()?)
            .map_err(|e| LedgerError::Format(format!("author is not UTF-8: {e}")))?;
        let payload = r.lp()?.to_vec();
        let timestamp = r.u64()?;
        let sig = r.lp()?;
        let signature = SignatureBytes(
            sig.try_into()
                .map_err(|_| LedgerError::Format(format!("signature of {} bytes", sig.len())))?,
        );
        Ok(SignedTransaction {
            author: AgentId::new(author),
            payload,
            timestamp,
            signature,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerBlock {
    pub index: u64,
    pub prev_hash: HashDigest,
    pub transactions: Vec<SignedTransaction>,
    pub block_hash: HashDigest,
}

impl LedgerBlock {
    /// Builds a block with a freshly computed hash. No signature checks.
    pub fn seal(index: u64, prev_hash: HashDigest, transactions: Vec<SignedTransaction>) -> Self {
        let block_hash = Self::compute_hash(index, &prev_hash, &transactions);
        LedgerBlock {
            index,
            prev_hash,
            transactions,
            block_hash,
        }
    }

    pub fn compute_hash(index: u64, prev_hash: &HashDigest, txs: &[SignedTransaction]) -> HashDigest {
        let mut body = Vec::new();
        Self::encode_body(index, prev_hash, txs, &mut body);
        HashDigest::of(&body)
    }

    fn encode_body(index: u64, prev_hash: &HashDigest, txs: &[SignedTransaction], out: &mut Vec<u8>) {
        out.extend_from_slice(&index.to_be_bytes());
        out.extend_from_slice(&prev_hash.0);
        out.extend_from_slice(&(txs.len() as u32).to_be_bytes());
        for tx in txs {
            tx.encode_into(out);
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        Self::encode_body(self.index, &self.prev_hash, &self.transactions, &mut out);
        out.extend_from_slice(&self.block_hash.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        let index = r.u64()?;
        let prev_hash = HashDigest(r.array()?);
        let count = r.u32()? as usize;
        // each transaction needs at least 4 + 4 + 8 + 4 bytes
        if count > r.remaining() / 20 {
            return Err(LedgerError::Format(format!("transaction count {count} exceeds block size")));
        }
        let mut transactions = Vec::with_capacity(count);
        for _ in 0..count {
            transactions.push(SignedTransaction::decode(&mut r)?);
        }
        let block_hash = HashDigest(r.array()?);
        if !r.is_empty() {
            return Err(LedgerError::Format(format!("{} trailing bytes in block", r.remaining())));
        }
        Ok(LedgerBlock {
            index,
            prev_hash,
            transactions,
            block_hash,
        })
    }
}

/// Why a block failed verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockFault {
    Malformed(String),
    IndexMismatch { found: u64 },
    PrevHashMismatch,
    HashMismatch,
    EmptyBlock,
    EmptyPayload { tx: usize },
    BadSignature { tx: usize },
}

/// First block (smallest index) that violates a chain invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ledger invalid at block {index}: {reason:?}")]
pub struct InvalidBlock {
    pub index: u64,
    pub reason: BlockFault,
}

/// Failure of [`Ledger::verify_bytes`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FileFault {
    #[error("bad ledger header: {0}")]
    Header(String),
    #[error(transparent)]
    Block(#[from] InvalidBlock),
}

/// Single-writer hash-chained ledger.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ledger {
    registry: KeyRegistry,
    blocks: Vec<LedgerBlock>,
}

impl Ledger {
    pub fn new(registry: KeyRegistry) -> Self {
        Ledger {
            registry,
            blocks: Vec::new(),
        }
    }

    /// Assembles a ledger from already-stored blocks without verifying them,
    /// e.g. after loading from disk. Call [`Ledger::verify_chain`] before
    /// trusting the contents.
    pub fn from_parts(registry: KeyRegistry, blocks: Vec<LedgerBlock>) -> Self {
        Ledger { registry, blocks }
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn register(&mut self, identity: &AgentIdentity) {
        self.registry.register(identity);
    }

    pub fn blocks(&self) -> &[LedgerBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip_hash(&self) -> HashDigest {
        self.blocks.last().map_or(HashDigest::ZERO, |b| b.block_hash)
    }

    pub fn transactions(&self) -> impl Iterator<Item = &SignedTransaction> {
        self.blocks.iter().flat_map(|b| b.transactions.iter())
    }

    /// Decoded events in ledger order. Undecodable payloads are skipped.
    pub fn events(&self) -> impl Iterator<Item = SimEvent> + '_ {
        self.transactions().filter_map(|tx| tx.event())
    }

    /// Signs `event` as `author` at `tick`. Fails unless `author` is
    /// registered with its own key.
    pub fn record_event(
        &self,
        event: &SimEvent,
        author: &AgentIdentity,
        tick: u64,
    ) -> Result<SignedTransaction, LedgerError> {
        if !self.registry.is_registered(author) {
            return Err(LedgerError::UnknownAgent(author.id().clone()));
        }
        Ok(SignedTransaction::sign(author, event.encode(), tick))
    }

    /// Appends a block holding `txs`. On error the chain is unchanged.
    pub fn append_block(&mut self, txs: Vec<SignedTransaction>) -> Result<&LedgerBlock, LedgerError> {
        if txs.is_empty() {
            return Err(LedgerError::EmptyBlock);
        }
        for (position, tx) in txs.iter().enumerate() {
            if tx.payload.is_empty() {
                return Err(LedgerError::EmptyPayload { position });
            }
            if !tx.verify(&self.registry) {
                return Err(LedgerError::InvalidSignature {
                    position,
                    author: tx.author.clone(),
                });
            }
        }
        let block = LedgerBlock::seal(self.blocks.len() as u64, self.tip_hash(), txs);
        self.blocks.push(block);
        Ok(self.blocks.last().expect("just pushed"))
    }

    pub fn verify_chain(&self) -> Result<(), InvalidBlock> {
        let mut prev = HashDigest::ZERO;
        for (i, block) in self.blocks.iter().enumerate() {
            check_block(&self.registry, i as u64, &prev, block)?;
            prev = block.block_hash;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.encode_with_spans().0
    }

    /// Byte ranges of each block's body inside [`Ledger::to_bytes`] output,
    /// excluding the block length prefixes.
    pub fn block_spans(&self) -> Vec<Range<usize>> {
        self.encode_with_spans().1
    }

    fn encode_with_spans(&self) -> (Vec<u8>, Vec<Range<usize>>) {
        let mut out = Vec::new();
        encode_header(&self.registry, &mut out);
        let mut spans = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let body = block.encode();
            out.extend_from_slice(&(body.len() as u32).to_be_bytes());
            let start = out.len();
            out.extend_from_slice(&body);
            spans.push(start..out.len());
        }
        (out, spans)
    }

    /// Parses a ledger file. Framing must be intact; contents are not
    /// verified.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        let registry = decode_header(&mut r).map_err(LedgerError::Format)?;
        let mut blocks = Vec::new();
        while !r.is_empty() {
            blocks.push(LedgerBlock::decode(r.lp()?)?);
        }
        Ok(Ledger { registry, blocks })
    }

    /// Verifies a ledger file directly from bytes. A block whose framing or
    /// encoding is damaged is reported at its own index.
    pub fn verify_bytes(bytes: &[u8]) -> Result<(), FileFault> {
        let mut r = Reader::new(bytes);
        let registry = decode_header(&mut r).map_err(FileFault::Header)?;
        let mut prev = HashDigest::ZERO;
        let mut index = 0u64;
        while !r.is_empty() {
            let block = r
                .lp()
                .map_err(|e| e.to_string())
                .and_then(|body| LedgerBlock::decode(body).map_err(|e| e.to_string()))
                .map_err(|e| InvalidBlock {
                    index,
                    reason: BlockFault::Malformed(e),
                })?;
            check_block(&registry, index, &prev, &block)?;
            prev = block.block_hash;
            index += 1;
        }
        Ok(())
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<(), LedgerError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self, LedgerError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// JSON array of blocks with hex-encoded hashes and payloads, plus the
    /// decoded event of each transaction.
    pub fn to_json(&self) -> serde_json::Value {
        let blocks: Vec<serde_json::Value> = self
            .blocks
            .iter()
            .map(|b| {
                let txs: Vec<serde_json::Value> = b
                    .transactions
                    .iter()
                    .map(|tx| {
                        let mut v = serde_json::to_value(tx).expect("serializable");
                        v["event"] = serde_json::to_value(tx.event()).expect("serializable");
                        v
                    })
                    .collect();
                serde_json::json!({
                    "index": b.index,
                    "prev_hash": b.prev_hash,
                    "block_hash": b.block_hash,
                    "transactions": txs,
                })
            })
            .collect();
        serde_json::Value::Array(blocks)
    }
}

fn check_block(
    registry: &KeyRegistry,
    expected_index: u64,
    prev: &HashDigest,
    block: &LedgerBlock,
) -> Result<(), InvalidBlock> {
    let fail = |reason| {
        Err(InvalidBlock {
            index: expected_index,
            reason,
        })
    };
    if block.index != expected_index {
        return fail(BlockFault::IndexMismatch { found: block.index });
    }
    if block.prev_hash != *prev {
        return fail(BlockFault::PrevHashMismatch);
    }
    if LedgerBlock::compute_hash(block.index, &block.prev_hash, &block.transactions) != block.block_hash {
        return fail(BlockFault::HashMismatch);
    }
    if block.transactions.is_empty() {
        return fail(BlockFault::EmptyBlock);
    }
    for (tx, t) in block.transactions.iter().enumerate() {
        if t.payload.is_empty() {
            return fail(BlockFault::EmptyPayload { tx });
        }
        if !t.verify(registry) {
            return fail(BlockFault::BadSignature { tx });
        }
    }
    Ok(())
}

fn encode_header(registry: &KeyRegistry, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_be_bytes());
    put_lp(out, DIGEST_TAG.as_bytes());
    out.extend_from_slice(&(registry.len() as u32).to_be_bytes());
    for (id, key) in registry.iter() {
        put_lp(out, id.as_str().as_bytes());
        out.extend_from_slice(key.as_bytes());
    }
}

fn decode_header(r: &mut Reader<'_>) -> Result<KeyRegistry, String> {
    let magic = r.take(4).map_err(|e| e.to_string())?;
    if magic != MAGIC {
        return Err(format!("bad magic {magic:?}"));
    }
    let version = r.u16().map_err(|e| e.to_string())?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let tag = r.lp().map_err(|e| e.to_string())?;
    if tag != DIGEST_TAG.as_bytes() {
        return Err(format!("unsupported digest {:?}", String::from_utf8_lossy(tag)));
    }
    let count = r.u32().map_err(|e| e.to_string())?;
    let mut registry = KeyRegistry::new();
    for _ in 0..count {
        let id = r.lp().map_err(|e| e.to_string())?;
        let id = std::str::from_utf8(id).map_err(|e| e.to_string())?;
        let key: [u8; PUBLIC_KEY_LEN] = r.array().map_err(|e| e.to_string())?;
        let key = VerifyingKey::from_bytes(&key).map_err(|e| format!("bad key for {id}: {e}"))?;
        registry.insert_key(AgentId::new(id), key);
    }
    Ok(registry)
}

/// Collects the signed events of one simulation tick and cuts them into a
/// single block. Ticks without events produce no block.
pub struct Recorder<'a> {
    ledger: &'a mut Ledger,
    tick: u64,
    pending: Vec<SignedTransaction>,
}

impl<'a> Recorder<'a> {
    pub fn new(ledger: &'a mut Ledger, tick: u64) -> Self {
        Recorder {
            ledger,
            tick,
            pending: Vec::new(),
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn registry(&self) -> &KeyRegistry {
        self.ledger.registry()
    }

    pub fn record(&mut self, author: &AgentIdentity, event: SimEvent) -> Result<(), LedgerError> {
        let tx = self.ledger.record_event(&event, author, self.tick)?;
        self.pending.push(tx);
        Ok(())
    }

    pub fn pending(&self) -> &[SignedTransaction] {
        &self.pending
    }

    /// Appends the pending events as one block; returns its index.
    pub fn seal(self) -> Result<Option<u64>, LedgerError> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let block = self.ledger.append_block(self.pending)?;
        Ok(Some(block.index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::SimEvent;
    use crate::mobility::NodeId;

    fn setup() -> (Ledger, AgentIdentity, AgentIdentity) {
        let a = AgentIdentity::derive("alice", 1);
        let b = AgentIdentity::derive("bob", 1);
        let mut reg = KeyRegistry::new();
        reg.register(&a);
        reg.register(&b);
        (Ledger::new(reg), a, b)
    }

    fn note(n: u64) -> SimEvent {
        SimEvent::Note { text: format!("event {n}") }
    }

    fn chain(blocks: u64) -> Ledger {
        let (mut l, a, b) = setup();
        for i in 0..blocks {
            let t1 = l.record_event(&note(i), &a, i).unwrap();
            let t2 = l.record_event(&note(i + 100), &b, i).unwrap();
            l.append_block(vec![t1, t2]).unwrap();
        }
        l
    }

    #[test]
    fn genesis_and_chaining() {
        let l = chain(2);
        assert_eq!(l.blocks()[0].index, 0);
        assert_eq!(l.blocks()[0].prev_hash, HashDigest::ZERO);
        assert_eq!(l.blocks()[1].prev_hash, l.blocks()[0].block_hash);
    }

    #[test]
    fn forged_signature_rejected_and_chain_unchanged() {
        let (mut l, a, _) = setup();
        let good = l.record_event(&note(0), &a, 0).unwrap();
        let mut forged = l.record_event(&note(1), &a, 0).unwrap();
        forged.signature.0[5] ^= 1;
        let err = l.append_block(vec![good, forged]).unwrap_err();
        assert!(matches!(err, LedgerError::InvalidSignature { position: 1, .. }));
        assert!(l.is_empty());
    }

    #[test]
    fn empty_block_rejected() {
        let (mut l, _, _) = setup();
        assert!(matches!(l.append_block(vec![]), Err(LedgerError::EmptyBlock)));
    }

    #[test]
    fn unknown_agent_cannot_record() {
        let (l, _, _) = setup();
        let stranger = AgentIdentity::derive("mallory", 1);
        assert!(matches!(
            l.record_event(&note(0), &stranger, 0),
            Err(LedgerError::UnknownAgent(_))
        ));
        // same id, different key
        let impostor = AgentIdentity::derive("alice", 2);
        assert!(l.record_event(&note(0), &impostor, 0).is_err());
    }

    #[test]
    fn record_event_is_deterministic_and_verifies() {
        let (l, a, b) = setup();
        let ev = SimEvent::Departed {
            ev: AgentId::from("alice"),
            from: NodeId::from("A"),
            to: NodeId::from("C"),
        };
        let t1 = l.record_event(&ev, &a, 5).unwrap();
        let t2 = l.record_event(&ev, &a, 5).unwrap();
        assert_eq!(t1, t2);
        assert!(t1.verify(l.registry()));
        let mut swapped = t1.clone();
        swapped.author = b.id().clone();
        assert!(!swapped.verify(l.registry()));
        assert_eq!(t1.event(), Some(ev));
    }

    #[test]
    fn untampered_chain_verifies() {
        let l = chain(10);
        assert_eq!(l.verify_chain(), Ok(()));
        assert_eq!(Ledger::verify_bytes(&l.to_bytes()), Ok(()));
    }

    #[test]
    fn payload_flip_detected_at_block() {
        let l = chain(10);
        let mut blocks = l.blocks().to_vec();
        blocks[4].transactions[0].payload[0] ^= 0x01;
        let t = Ledger::from_parts(l.registry().clone(), blocks);
        assert_eq!(t.verify_chain().unwrap_err().index, 4);
    }

    #[test]
    fn rewritten_block_detected_at_successor() {
        let l = chain(10);
        let (_, a, _) = setup();
        let mut blocks = l.blocks().to_vec();
        let replacement = l.record_event(&note(999), &a, 4).unwrap();
        blocks[4] = LedgerBlock::seal(4, blocks[4].prev_hash, vec![replacement]);
        let t = Ledger::from_parts(l.registry().clone(), blocks);
        let err = t.verify_chain().unwrap_err();
        assert_eq!(err.index, 5);
        assert_eq!(err.reason, BlockFault::PrevHashMismatch);
    }

    #[test]
    fn file_round_trip() {
        let l = chain(3);
        let back = Ledger::from_bytes(&l.to_bytes()).unwrap();
        assert_eq!(back, l);
        assert_eq!(&l.to_bytes()[..4], MAGIC);
    }

    #[test]
    fn header_damage_is_reported_as_header() {
        let l = chain(2);
        let mut bytes = l.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Ledger::verify_bytes(&bytes), Err(FileFault::Header(_))));
    }

    #[test]
    fn recorder_skips_empty_ticks() {
        let (mut l, a, _) = setup();
        assert_eq!(Recorder::new(&mut l, 0).seal().unwrap(), None);
        let mut r = Recorder::new(&mut l, 1);
        r.record(&a, note(1)).unwrap();
        r.record(&a, note(2)).unwrap();
        assert_eq!(r.seal().unwrap(), Some(0));
        assert_eq!(l.blocks()[0].transactions.len(), 2);
    }

    #[test]
    fn json_export_has_hex_hashes() {
        let l = chain(1);
        let j = l.to_json();
        assert_eq!(j[0]["prev_hash"].as_str().unwrap(), "0".repeat(64));
        assert!(j[0]["transactions"][0]["event"]["Note"].is_object());
    }
}
