//! Addresses for the two kinds of ledger participant.
//!
//! A user account signs transactions and holds assets; a contract node is a
//! token-tree member. The kind is part of the address so that misuse (a node
//! where an account is required, or vice versa) is detectable instead of
//! silently accepted. Rendering is `user:<64 hex>` / `node:<64 hex>`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AddressKind {
    User,
    Node,
}

impl AddressKind {
    fn prefix(self) -> &'static str {
        match self {
            AddressKind::User => "user",
            AddressKind::Node => "node",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    kind: AddressKind,
    id: [u8; 32],
}

impl Address {
    pub fn new(kind: AddressKind, id: [u8; 32]) -> Self {
        Address { kind, id }
    }

    pub fn kind(&self) -> AddressKind {
        self.kind
    }

    pub fn is_user(&self) -> bool {
        self.kind == AddressKind::User
    }

    pub fn is_node(&self) -> bool {
        self.kind == AddressKind::Node
    }

    pub fn id(&self) -> &[u8; 32] {
        &self.id
    }

    /// Deterministic address from a short label; handy for hand-built
    /// snapshots in tests. The label is padded into the 32-byte id.
    pub fn from_label(kind: AddressKind, label: &str) -> Self {
        let mut id = [0u8; 32];
        let bytes = label.as_bytes();
        let n = bytes.len().min(32);
        id[..n].copy_from_slice(&bytes[..n]);
        Address { kind, id }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.prefix(), hex::encode(self.id))
    }
}

// Debug delegates to Display: the prefixed hex form is what log files and
// failing assertions show, and two spellings of one address would only confuse.
impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (prefix, hex_part) = s
            .split_once(':')
            .ok_or_else(|| format!("address {s:?} missing kind prefix"))?;
        let kind = match prefix {
            "user" => AddressKind::User,
            "node" => AddressKind::Node,
            other => return Err(format!("unknown address kind {other:?}")),
        };
        let bytes = hex::decode(hex_part).map_err(|e| format!("bad address hex: {e}"))?;
        let id: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "address id must be 32 bytes".to_string())?;
        Ok(Address { kind, id })
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
