//! Agent identities and the in-simulation key registry.
//!
//! Every EV, station, owner, platoon leader and escrow service is an agent
//! with an Ed25519 key pair. Keys are derived from the scenario seed and the
//! agent id, so a replayed scenario signs with identical keys and the
//! resulting ledger is byte-identical.

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Stable identifier of an agent. Ordering is plain byte-wise string
/// ordering and is used for every deterministic tie-break.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_owned())
    }
}

impl From<String> for AgentId {
    fn from(s: String) -> Self {
        AgentId(s)
    }
}

pub const PUBLIC_KEY_LEN: usize = 32;

crate::encoding::hex_bytes!(
    /// Detached Ed25519 signature.
    SignatureBytes,
    64
);

/// Key pair plus stable id.
#[derive(Clone)]
pub struct AgentIdentity {
    id: AgentId,
    key: SigningKey,
}

impl fmt::Debug for AgentIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentIdentity")
            .field("id", &self.id)
            .field("public_key", &hex::encode(self.public_key().as_bytes()))
            .finish()
    }
}

impl AgentIdentity {
    /// Derives the agent's key pair from `(seed, id)`.
    pub fn derive(id: impl Into<AgentId>, seed: u64) -> Self {
        let id = id.into();
        let mut h = Sha256::new();
        h.update(b"m2x/agent-key/v1");
        h.update(seed.to_be_bytes());
        h.update((id.as_str().len() as u32).to_be_bytes());
        h.update(id.as_str().as_bytes());
        let secret: [u8; 32] = h.finalize().into();
        AgentIdentity {
            id,
            key: SigningKey::from_bytes(&secret),
        }
    }

    pub fn id(&self) -> &AgentId {
        &self.id
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    /// Ed25519 signatures are deterministic: same key and message, same bytes.
    pub fn sign(&self, message: &[u8]) -> SignatureBytes {
        SignatureBytes(self.key.sign(message).to_bytes())
    }
}

/// Public keys of all registered agents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyRegistry {
    keys: BTreeMap<AgentId, VerifyingKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, identity: &AgentIdentity) {
        self.keys.insert(identity.id().clone(), identity.public_key());
    }

    pub fn insert_key(&mut self, id: AgentId, key: VerifyingKey) {
        self.keys.insert(id, key);
    }

    pub fn get(&self, id: &AgentId) -> Option<&VerifyingKey> {
        self.keys.get(id)
    }

    pub fn contains(&self, id: &AgentId) -> bool {
        self.keys.contains_key(id)
    }

    /// True iff `identity` is registered under its id with its own public key.
    pub fn is_registered(&self, identity: &AgentIdentity) -> bool {
        self.keys.get(identity.id()) == Some(&identity.public_key())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgentId, &VerifyingKey)> {
        self.keys.iter()
    }

    /// Verifies a detached signature by `author`. Unknown authors never verify.
    pub fn verify(&self, author: &AgentId, message: &[u8], signature: &[u8]) -> bool {
        let Some(key) = self.keys.get(author) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        key.verify(message, &sig).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_deterministic_and_seed_dependent() {
        let a = AgentIdentity::derive("ev-1", 7);
        let b = AgentIdentity::derive("ev-1", 7);
        let c = AgentIdentity::derive("ev-1", 8);
        assert_eq!(a.public_key(), b.public_key());
        assert_ne!(a.public_key(), c.public_key());
        assert_eq!(a.sign(b"x"), b.sign(b"x"));
    }

    #[test]
    fn verify_against_other_key_fails() {
        let a = AgentIdentity::derive("a", 1);
        let b = AgentIdentity::derive("b", 1);
        let mut reg = KeyRegistry::new();
        reg.register(&a);
        reg.register(&b);
        let sig = a.sign(b"msg");
        assert!(reg.verify(a.id(), b"msg", &sig.0));
        assert!(!reg.verify(b.id(), b"msg", &sig.0));
        assert!(!reg.verify(&AgentId::from("nobody"), b"msg", &sig.0));
    }
}
