//! Full per-round event log of one execution, plus sealed ground truth.
//!
//! The event list is the wire-level record (what an observer of all links
//! could write down). Ground-truth evolution records — origins, full
//! planned routes, terminal fates — live alongside it for analytics and
//! audits but are never handed to adversary strategies.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adversary::StrategySummary;
use crate::error::Result;
use crate::onion::{EvolutionId, OnionHandle};
use crate::types::{Message, Nonce, PartyId};

/// One transcript event. Serialized one-per-line in the JSONL log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Transmission {
        round: u32,
        sender: PartyId,
        receiver: PartyId,
        handle: OnionHandle,
    },
    AdversaryDrop {
        round: u32,
        receiver: PartyId,
        handle: OnionHandle,
    },
    Merge {
        round: u32,
        party: PartyId,
        surviving: OnionHandle,
        dropped: OnionHandle,
        nonce: Nonce,
    },
    Diagnostic {
        round: u32,
        party: PartyId,
        epoch: u32,
        missing: u32,
        abort: bool,
    },
    PartyAbort {
        round: u32,
        party: PartyId,
    },
    Delivery {
        round: u32,
        recipient: PartyId,
        message: Message,
    },
}

impl Event {
    pub fn round(&self) -> u32 {
        match *self {
            Event::Transmission { round, .. }
            | Event::AdversaryDrop { round, .. }
            | Event::Merge { round, .. }
            | Event::Diagnostic { round, .. }
            | Event::PartyAbort { round, .. }
            | Event::Delivery { round, .. } => round,
        }
    }
}

/// What a formed onion was for.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum OnionKind {
    Merging,
    Checkpoint,
    AbortMsg,
    Strawman,
}

/// How an onion's life ended.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Terminal {
    Delivered,
    MergedAway,
    AdversaryDropped,
    /// Stranded at an aborted party that stopped relaying.
    Stranded,
}

/// Ground-truth record of one onion evolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub id: EvolutionId,
    pub origin: PartyId,
    pub kind: OnionKind,
    pub path: Vec<PartyId>,
    pub nonces: Vec<Nonce>,
    pub terminal: Option<Terminal>,
    pub terminal_round: u32,
}

impl EvolutionRecord {
    pub fn recipient(&self) -> PartyId {
        *self.path.last().unwrap()
    }

    /// Was this evolution still live after the given round finished?
    pub fn live_after(&self, round: u32) -> bool {
        self.terminal.is_none() || self.terminal_round > round
    }

    /// Was the 1-based path position actually received by its party?
    /// In-transit drops mean position `terminal_round` was never received.
    pub fn position_received(&self, pos: usize) -> bool {
        match self.terminal {
            None => false,
            Some(Terminal::Delivered) => pos <= self.path.len(),
            Some(Terminal::MergedAway) => pos as u32 <= self.terminal_round,
            Some(Terminal::AdversaryDropped) | Some(Terminal::Stranded) => {
                (pos as u32) < self.terminal_round
            }
        }
    }
}

/// Complete record of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunTranscript {
    pub n_parties: u32,
    pub rounds: u32,
    pub oracle_mode: bool,
    pub events: Vec<Event>,
    pub evolutions: Vec<EvolutionRecord>,
    pub handle_evolution: HashMap<OnionHandle, EvolutionId>,
    pub corrupted: Vec<PartyId>,
    pub aborted: Vec<PartyId>,
    /// Data messages received per party (the v statistic), index0-ordered.
    pub received_data: Vec<u32>,
    pub strategy: StrategySummary,
}

impl RunTranscript {
    pub fn evolution(&self, id: EvolutionId) -> &EvolutionRecord {
        &self.evolutions[id.0 as usize]
    }

    pub fn evolution_of(&self, handle: OnionHandle) -> Option<&EvolutionRecord> {
        self.handle_evolution.get(&handle).map(|id| self.evolution(*id))
    }

    pub fn data_delivery_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::Delivery { message, .. } if message.is_data()))
            .count()
    }

    pub fn abort_count(&self) -> usize {
        self.aborted.len()
    }

    pub fn transmission_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::Transmission { .. }))
            .count()
    }

    /// Conservation audit: every evolution ended in exactly one terminal.
    pub fn audit_conservation(&self) -> Result<()> {
        for ev in &self.evolutions {
            if ev.terminal.is_none() {
                return Err(crate::error::SimError::runtime(format!(
                    "evolution {:?} has no terminal event",
                    ev.id
                )));
            }
        }
        Ok(())
    }

    /// Power-boundary audit: every adversary drop happened at a corrupted
    /// receiver.
    pub fn audit_honest_links(&self) -> Result<()> {
        for e in &self.events {
            if let Event::AdversaryDrop { receiver, .. } = e {
                if !self.corrupted.contains(receiver) {
                    return Err(crate::error::SimError::runtime(format!(
                        "drop at honest receiver {receiver}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Serialize the event log as JSON lines, one event per line, in
    /// transcript order.
    pub fn write_events_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)
                .map_err(|err| crate::error::SimError::runtime(err.to_string()))?;
            writeln!(w)?;
        }
        Ok(())
    }
}
