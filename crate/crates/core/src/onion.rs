//! Ideal onion functionality backed by a ground-truth registry.
//!
//! Instead of layered ciphertexts, an onion lives in a registry keyed by an
//! opaque 128-bit handle. Peeling consumes the record and re-registers it
//! under a fresh, independently drawn handle, so successive layers of the
//! same onion are unlinkable on the wire and nobody — including the
//! adversary — can alter an onion in flight. Ground-truth fields (origin,
//! remaining path) are only exposed through analytics-side accessors, never
//! through adversary views.

use std::collections::HashMap;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::seeded_rng;
use crate::types::{Message, Nonce, PartyId};

/// Opaque per-layer onion identifier; fresh for every layer.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct OnionHandle(pub u128);

/// Stable identifier for one onion across all of its layers. Analytics
/// only; never visible to adversary strategies.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct EvolutionId(pub u64);

/// Everything needed to form one onion: payload, routing path
/// (intermediaries then final recipient) and the per-hop nonces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingPlan {
    pub message: Message,
    pub path: Vec<PartyId>,
    pub nonces: Vec<Nonce>,
    /// Recorded for analytics only; never exposed to adversary views.
    pub origin: PartyId,
}

impl RoutingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.path.is_empty() {
            return Err(SimError::config("routing plan has an empty path"));
        }
        if self.nonces.len() + 1 != self.path.len() {
            return Err(SimError::config(format!(
                "plan needs |path| - 1 = {} nonces, got {}",
                self.path.len() - 1,
                self.nonces.len()
            )));
        }
        Ok(())
    }

    pub fn recipient(&self) -> PartyId {
        *self.path.last().expect("path is non-empty")
    }
}

/// Outcome of one processing step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeelResult {
    /// More hops remain: the revealed nonce, the next destination and the
    /// fresh handle to transmit.
    Relay {
        next: PartyId,
        nonce: Nonce,
        handle: OnionHandle,
    },
    /// The holder is the final recipient.
    Deliver(Message),
    /// The holder is not the intended processor; the onion is unchanged.
    NotIntended,
}

#[derive(Clone, Debug)]
struct OnionRecord {
    evolution: EvolutionId,
    origin: PartyId,
    message: Message,
    path: Vec<PartyId>,
    nonces: Vec<Nonce>,
    hop_index: usize,
}

/// Ground-truth snapshot of a live onion, for oracle views and audits.
#[derive(Clone, Copy, Debug)]
pub struct LiveOnion {
    pub handle: OnionHandle,
    pub evolution: EvolutionId,
    pub origin: PartyId,
    /// Nonce that will be revealed by the next processing step, if the next
    /// step is a relay.
    pub next_nonce: Option<Nonce>,
    pub next_holder: PartyId,
    pub hop_index: usize,
}

/// Registry of all live onion records for one run.
pub struct OnionRegistry {
    records: HashMap<u128, OnionRecord>,
    rng: ChaCha8Rng,
    next_evolution: u64,
    formed_per_party: HashMap<PartyId, u32>,
    evolution_of_handle: HashMap<u128, EvolutionId>,
}

impl OnionRegistry {
    pub fn new(seed: u64) -> Self {
        OnionRegistry {
            records: HashMap::new(),
            rng: seeded_rng(seed),
            next_evolution: 0,
            formed_per_party: HashMap::new(),
            evolution_of_handle: HashMap::new(),
        }
    }

    fn fresh_handle(&mut self) -> OnionHandle {
        loop {
            let mut bytes = [0u8; 16];
            self.rng.fill_bytes(&mut bytes);
            let id = u128::from_le_bytes(bytes);
            if !self.evolution_of_handle.contains_key(&id) {
                return OnionHandle(id);
            }
        }
    }

    /// Register a new onion; returns the outermost handle.
    pub fn form_onion(&mut self, plan: RoutingPlan) -> Result<OnionHandle> {
        plan.validate()?;
        let evolution = EvolutionId(self.next_evolution);
        self.next_evolution += 1;
        *self.formed_per_party.entry(plan.origin).or_insert(0) += 1;
        let handle = self.fresh_handle();
        self.evolution_of_handle.insert(handle.0, evolution);
        self.records.insert(
            handle.0,
            OnionRecord {
                evolution,
                origin: plan.origin,
                message: plan.message,
                path: plan.path,
                nonces: plan.nonces,
                hop_index: 0,
            },
        );
        Ok(handle)
    }

    /// Process one layer. Double processing of a handle is an error.
    pub fn proc_onion(&mut self, holder: PartyId, handle: OnionHandle) -> Result<PeelResult> {
        let record = self
            .records
            .remove(&handle.0)
            .ok_or_else(|| SimError::runtime(format!("unknown or consumed handle {:?}", handle)))?;
        if record.path[record.hop_index] != holder {
            self.records.insert(handle.0, record);
            return Ok(PeelResult::NotIntended);
        }
        if record.hop_index + 1 == record.path.len() {
            return Ok(PeelResult::Deliver(record.message));
        }
        let nonce = record.nonces[record.hop_index];
        let next = record.path[record.hop_index + 1];
        let fresh = self.fresh_handle();
        self.evolution_of_handle.insert(fresh.0, record.evolution);
        self.records.insert(
            fresh.0,
            OnionRecord {
                hop_index: record.hop_index + 1,
                ..record
            },
        );
        Ok(PeelResult::Relay {
            next,
            nonce,
            handle: fresh,
        })
    }

    /// Drop a live onion without processing it (adversary drop, merge loss,
    /// stranding). The record is consumed.
    pub fn discard(&mut self, handle: OnionHandle) {
        self.records.remove(&handle.0);
    }

    pub fn evolution_of(&self, handle: OnionHandle) -> Option<EvolutionId> {
        self.evolution_of_handle.get(&handle.0).copied()
    }

    pub fn formed_by(&self, party: PartyId) -> u32 {
        self.formed_per_party.get(&party).copied().unwrap_or(0)
    }

    /// Ground-truth view of all live onions, sorted by handle for
    /// deterministic iteration.
    pub fn live_onions(&self) -> Vec<LiveOnion> {
        let mut live: Vec<LiveOnion> = self
            .records
            .iter()
            .map(|(id, r)| LiveOnion {
                handle: OnionHandle(*id),
                evolution: r.evolution,
                origin: r.origin,
                next_nonce: if r.hop_index + 1 < r.path.len() {
                    Some(r.nonces[r.hop_index])
                } else {
                    None
                },
                next_holder: r.path[r.hop_index],
                hop_index: r.hop_index,
            })
            .collect();
        live.sort_by_key(|o| o.handle);
        live
    }

    pub fn final_recipient(&self, handle: OnionHandle) -> Option<PartyId> {
        self.records.get(&handle.0).map(|r| *r.path.last().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(origin: u32, path: &[u32], nonces: &[u64], message: Message) -> RoutingPlan {
        RoutingPlan {
            message,
            path: path.iter().map(|&p| PartyId(p)).collect(),
            nonces: nonces.iter().map(|&n| Nonce(n)).collect(),
            origin: PartyId(origin),
        }
    }

    #[test]
    fn forming_registers_remaining_hops() {
        let mut reg = OnionRegistry::new(1);
        let h = reg
            .form_onion(plan(1, &[2, 3, 4, 5], &[10, 20, 30], Message::Data(7)))
            .unwrap();
        let live = reg.live_onions();
        assert_eq!(live.len(), 1);
        assert_eq!(live[0].handle, h);
        assert_eq!(live[0].next_holder, PartyId(2));
        assert_eq!(live[0].hop_index, 0);
        assert_eq!(reg.formed_by(PartyId(1)), 1);
    }

    #[test]
    fn identical_plans_get_distinct_handles() {
        let mut reg = OnionRegistry::new(1);
        let p = plan(1, &[2, 3], &[10], Message::Data(7));
        let h1 = reg.form_onion(p.clone()).unwrap();
        let h2 = reg.form_onion(p).unwrap();
        assert_ne!(h1, h2);
    }

    #[test]
    fn direct_delivery_plan_is_valid() {
        // Single-entry path: the abort-message shape.
        let mut reg = OnionRegistry::new(1);
        let h = reg.form_onion(plan(1, &[3], &[], Message::Abort)).unwrap();
        assert_eq!(
            reg.proc_onion(PartyId(3), h).unwrap(),
            PeelResult::Deliver(Message::Abort)
        );
    }

    #[test]
    fn empty_path_is_an_error() {
        let mut reg = OnionRegistry::new(1);
        assert!(reg.form_onion(plan(1, &[], &[], Message::Empty)).is_err());
    }

    #[test]
    fn two_hop_onion_relays_then_delivers() {
        let mut reg = OnionRegistry::new(1);
        let h = reg
            .form_onion(plan(1, &[2, 3], &[42], Message::Data(9)))
            .unwrap();
        match reg.proc_onion(PartyId(2), h).unwrap() {
            PeelResult::Relay {
                next,
                nonce,
                handle,
            } => {
                assert_eq!(next, PartyId(3));
                assert_eq!(nonce, Nonce(42));
                assert_ne!(handle, h);
                assert_eq!(
                    reg.proc_onion(PartyId(3), handle).unwrap(),
                    PeelResult::Deliver(Message::Data(9))
                );
            }
            other => panic!("expected relay, got {other:?}"),
        }
    }

    #[test]
    fn wrong_holder_leaves_record_unchanged() {
        let mut reg = OnionRegistry::new(1);
        let h = reg
            .form_onion(plan(1, &[2, 3], &[42], Message::Data(9)))
            .unwrap();
        assert_eq!(reg.proc_onion(PartyId(9), h).unwrap(), PeelResult::NotIntended);
        // Still processable by the intended holder.
        assert!(matches!(
            reg.proc_onion(PartyId(2), h).unwrap(),
            PeelResult::Relay { .. }
        ));
    }

    #[test]
    fn double_processing_is_rejected() {
        let mut reg = OnionRegistry::new(1);
        let h = reg
            .form_onion(plan(1, &[2, 3], &[42], Message::Data(9)))
            .unwrap();
        reg.proc_onion(PartyId(2), h).unwrap();
        assert!(reg.proc_onion(PartyId(2), h).is_err());
    }

    #[test]
    fn peel_chain_reveals_plan_nonces_in_order() {
        let mut reg = OnionRegistry::new(5);
        let nonces = [11u64, 22, 33, 44];
        let path = [4u32, 1, 3, 2, 5];
        let h = reg
            .form_onion(plan(1, &path, &nonces, Message::Data(1)))
            .unwrap();
        let mut handle = h;
        let mut revealed = Vec::new();
        for &holder in &path[..path.len() - 1] {
            match reg.proc_onion(PartyId(holder), handle).unwrap() {
                PeelResult::Relay {
                    next,
                    nonce,
                    handle: fresh,
                } => {
                    revealed.push(nonce.0);
                    assert_ne!(fresh, handle);
                    handle = fresh;
                    let _ = next;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(revealed, nonces);
        assert_eq!(
            reg.proc_onion(PartyId(5), handle).unwrap(),
            PeelResult::Deliver(Message::Data(1))
        );
        assert!(reg.live_onions().is_empty());
    }

    #[test]
    fn registry_is_deterministic() {
        let run = |seed: u64| {
            let mut reg = OnionRegistry::new(seed);
            let mut handles = Vec::new();
            for i in 0..10 {
                handles.push(
                    reg.form_onion(plan(1, &[2, 3], &[i + 1], Message::Empty))
                        .unwrap(),
                );
            }
            handles
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }
}
