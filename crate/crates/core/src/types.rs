//! Shared domain types: party identifiers, nonces and message payloads.

use serde::{Deserialize, Serialize};

/// A party in the network, indexed 1..=N.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartyId(pub u32);

impl PartyId {
    /// Zero-based index for vector addressing.
    pub fn index0(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index0(i: usize) -> Self {
        PartyId(i as u32 + 1)
    }
}

impl std::fmt::Debug for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 64-bit routing nonce. The all-zero value is reserved as the empty
/// nonce; empty nonces never participate in merging or checkpoint tallies,
/// and PRF/tree nonce sampling rejects it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Nonce(pub u64);

impl Nonce {
    pub const EMPTY: Nonce = Nonce(0);

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl std::fmt::Debug for Nonce {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            write!(f, "Nonce(EMPTY)")
        } else {
            write!(f, "Nonce({:#x})", self.0)
        }
    }
}

/// Onion payload. `Empty` is the dummy payload carried by checkpoint
/// onions; `Abort` is the reserved payload of abort messages; `Data`
/// carries a simple-I/O message token.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Message {
    Empty,
    Abort,
    Data(u64),
}

impl Message {
    pub fn is_data(self) -> bool {
        matches!(self, Message::Data(_))
    }
}
