//! Party key material, pairwise shared keys and the keyed PRF.
//!
//! Key setup is modeled as already done: every unordered pair of parties
//! (including a party with itself) deterministically derives a shared key
//! from the global key seed, so `shared_key(i, j) == shared_key(j, i)` by
//! construction. The PRF has two interchangeable backends: a hash-based
//! keyed function (`Normal`) and a per-(key, input) sampled value standing
//! in for a truly random function (`IdealTable`). Both are pure functions
//! of (N, seed).

use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::rng::seeded_rng;
use crate::types::{Nonce, PartyId};
use rand::RngCore;

/// Pairwise shared key, identified by an opaque 128-bit value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct SharedKey {
    pub key_id: u128,
}

/// PRF realization. `IdealTable` draws each output independently from the
/// key/input pair, matching the random-function analysis model; `Normal`
/// is a conventional keyed hash. Both are deterministic.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum PrfMode {
    #[default]
    Normal,
    IdealTable,
}

/// All key material for one run: per-party key records plus the pairwise
/// shared-key derivation.
#[derive(Clone, Debug)]
pub struct KeyMaterial {
    n_parties: u32,
    seed: u64,
    mode: PrfMode,
}

impl KeyMaterial {
    pub fn generate(n_parties: u32, seed: u64) -> Result<Self> {
        Self::generate_with_mode(n_parties, seed, PrfMode::Normal)
    }

    pub fn generate_with_mode(n_parties: u32, seed: u64, mode: PrfMode) -> Result<Self> {
        if n_parties < 2 {
            return Err(SimError::config(format!(
                "need at least 2 parties, got {n_parties}"
            )));
        }
        Ok(KeyMaterial {
            n_parties,
            seed,
            mode,
        })
    }

    pub fn n_parties(&self) -> u32 {
        self.n_parties
    }

    /// Number of distinct unordered pairs {i, j}, i != j.
    pub fn pair_count(&self) -> usize {
        let n = self.n_parties as usize;
        n * (n - 1) / 2
    }

    /// Per-party long-term key record.
    pub fn party_key(&self, i: PartyId) -> u128 {
        debug_assert!(i.0 >= 1 && i.0 <= self.n_parties);
        let mut h = Sha256::new();
        h.update(b"party-key");
        h.update(self.seed.to_le_bytes());
        h.update(i.0.to_le_bytes());
        truncate128(&h.finalize())
    }

    /// Shared key for the unordered pair {i, j}.
    pub fn shared_key(&self, i: PartyId, j: PartyId) -> SharedKey {
        let (lo, hi) = if i.0 <= j.0 { (i.0, j.0) } else { (j.0, i.0) };
        let mut h = Sha256::new();
        h.update(b"shared-key");
        h.update(self.seed.to_le_bytes());
        h.update(lo.to_le_bytes());
        h.update(hi.to_le_bytes());
        SharedKey {
            key_id: truncate128(&h.finalize()),
        }
    }

    /// Keyed PRF with 64-bit output.
    pub fn prf(&self, key: SharedKey, input: &[u8]) -> u64 {
        match self.mode {
            PrfMode::Normal => {
                let mut h = Sha256::new();
                h.update(b"prf");
                h.update(key.key_id.to_le_bytes());
                h.update(input);
                truncate64(&h.finalize())
            }
            PrfMode::IdealTable => {
                // Lazily sampled random-function value: the sample for each
                // (key, input) cell is drawn from its own stream, so lookup
                // order does not matter.
                let mut h = Sha256::new();
                h.update(b"ideal-cell");
                h.update(key.key_id.to_le_bytes());
                h.update(input);
                let cell_seed = truncate64(&h.finalize());
                seeded_rng(cell_seed).next_u64()
            }
        }
    }

    /// PRF output mapped into the non-empty nonce range by rejection.
    pub fn prf_nonce(&self, key: SharedKey, input: &[u8]) -> Nonce {
        let mut value = self.prf(key, input);
        let mut salt = 0u8;
        while value == 0 {
            let mut extended = input.to_vec();
            salt += 1;
            extended.push(salt);
            value = self.prf(key, &extended);
        }
        Nonce(value)
    }
}

fn truncate128(digest: &[u8]) -> u128 {
    u128::from_le_bytes(digest[..16].try_into().unwrap())
}

fn truncate64(digest: &[u8]) -> u64 {
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
