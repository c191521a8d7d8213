//! Simple-I/O inputs: every party sends exactly one message to exactly one
//! recipient, and the recipient map is a permutation of the party set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::seeded_rng;
use crate::types::{Message, PartyId};

/// Per-party (message, recipient) assignment with a permutation recipient
/// map. Message tokens are distinct by construction: party i sends
/// `Message::Data(i)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpleInput {
    /// recipients[i.index0()] = r(i).
    recipients: Vec<PartyId>,
}

impl SimpleInput {
    pub fn new(recipients: Vec<PartyId>) -> Result<Self> {
        let n = recipients.len();
        let mut seen = vec![false; n];
        for r in &recipients {
            if r.0 < 1 || r.0 as usize > n {
                return Err(SimError::config(format!("recipient {r} out of range 1..={n}")));
            }
            if seen[r.index0()] {
                return Err(SimError::config(format!(
                    "recipient map is not a permutation: {r} appears twice"
                )));
            }
            seen[r.index0()] = true;
        }
        Ok(SimpleInput { recipients })
    }

    /// Uniformly random permutation input on N parties.
    pub fn random(n: u32, seed: u64) -> Self {
        let mut recipients: Vec<PartyId> = (1..=n).map(PartyId).collect();
        recipients.shuffle(&mut seeded_rng(seed));
        SimpleInput { recipients }
    }

    pub fn n_parties(&self) -> u32 {
        self.recipients.len() as u32
    }

    pub fn recipient(&self, i: PartyId) -> PartyId {
        self.recipients[i.index0()]
    }

    /// The distinct message token party i sends.
    pub fn message(&self, i: PartyId) -> Message {
        Message::Data(i.0 as u64)
    }

    /// Exchange the (message, recipient) pairs of i and j. Since messages
    /// are identified with their senders, this swaps the recipients.
    pub fn swap(&self, i: PartyId, j: PartyId) -> Result<SimpleInput> {
        if i == j {
            return Err(SimError::config("swap requires two distinct parties"));
        }
        let mut recipients = self.recipients.clone();
        recipients.swap(i.index0(), j.index0());
        Ok(SimpleInput { recipients })
    }

    pub fn is_permutation(&self) -> bool {
        let n = self.recipients.len();
        let mut seen = vec![false; n];
        for r in &self.recipients {
            let idx = r.index0();
            if idx >= n || seen[idx] {
                return false;
            }
            seen[idx] = true;
        }
        true
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        (1..=self.n_parties()).map(PartyId)
    }
}
