//! Synchronous round-based execution.
//!
//! All onions are formed up front and released simultaneously in round 1.
//! Each round: parties transmit, the adversary drops what its powers
//! allow, receivers peel, equal-nonce onions merge, diagnostic rounds
//! tally checkpoints and may abort parties, and aborted parties flood
//! abort messages. Every onion of a protocol run has the same path length,
//! so the whole population marches in lockstep and the run takes exactly
//! path-length rounds.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{Adversary, AdversaryConfig, Mode, OracleClass, OracleInfo, RoundInfo, TransmissionView};
use crate::butterfly::{convert_plan, PibflyParams};
use crate::error::{Result, SimError};
use crate::input::SimpleInput;
use crate::keys::KeyMaterial;
use crate::onion::{EvolutionId, OnionHandle, OnionRegistry, PeelResult, RoutingPlan};
use crate::rng::{seeded_rng, split_seed, stream};
use crate::transcript::{Event, EvolutionRecord, OnionKind, RunTranscript, Terminal};
use crate::tree::{form_checkpoint_plan, form_merging_plans, gen_ckpt_data, CheckpointDatum, PitreeParams};
use crate::types::{Message, PartyId};

/// Which protocol a run executes.
#[derive(Clone, Copy, Debug)]
pub enum Protocol {
    Pitree(PitreeParams),
    Pibfly(PibflyParams),
    /// One onion per message through `alpha_hops` uniform intermediaries;
    /// no checkpoints, no merging, no aborts.
    Strawman { n_parties: u32, alpha_hops: u32 },
}

impl Protocol {
    pub fn n_parties(&self) -> u32 {
        match self {
            Protocol::Pitree(p) => p.n_parties,
            Protocol::Pibfly(p) => p.tree.n_parties,
            Protocol::Strawman { n_parties, .. } => *n_parties,
        }
    }

    /// Rounds per epoch; 1 for the epoch-less strawman.
    pub fn d(&self) -> u32 {
        match self {
            Protocol::Pitree(p) => p.d,
            Protocol::Pibfly(p) => p.tree.d,
            Protocol::Strawman { .. } => 1,
        }
    }

    pub fn total_epochs(&self) -> u32 {
        match self {
            Protocol::Pitree(p) => p.h(),
            Protocol::Pibfly(p) => p.total_epochs(),
            Protocol::Strawman { .. } => 0,
        }
    }

    /// Uniform protocol-onion path length, which is also the round count.
    pub fn path_len(&self) -> u32 {
        match self {
            Protocol::Pitree(p) => p.h() * p.d + 1,
            Protocol::Pibfly(p) => p.total_epochs() * p.tree.d + 1,
            Protocol::Strawman { alpha_hops, .. } => alpha_hops + 1,
        }
    }

    /// First epoch at which merging onions can collide.
    pub fn first_merging_epoch(&self) -> u32 {
        match self {
            Protocol::Pitree(_) => 1,
            Protocol::Pibfly(p) => p.butterfly.mixing_epochs() + 1,
            Protocol::Strawman { .. } => u32::MAX,
        }
    }

    fn has_diagnostics(&self) -> bool {
        !matches!(self, Protocol::Strawman { .. })
    }

    fn chi(&self) -> u32 {
        match self {
            Protocol::Pitree(p) => p.chi,
            Protocol::Pibfly(p) => p.tree.chi,
            Protocol::Strawman { .. } => 0,
        }
    }

    fn diagnostic_aborts(&self, missing: usize) -> bool {
        match self {
            Protocol::Pitree(p) => missing as f64 > p.threshold_t,
            Protocol::Pibfly(p) => p.diagnostic_aborts(missing),
            Protocol::Strawman { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Protocol::Pitree(p) => p.validate(),
            Protocol::Pibfly(p) => p.tree.validate(),
            Protocol::Strawman { n_parties, .. } => {
                if *n_parties < 2 {
                    Err(SimError::config("strawman needs at least 2 parties"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Engine knobs that do not belong to the protocol.
#[derive(Clone, Copy, Debug, Default)]
pub struct EngineOptions {
    /// Invert the merge tie-break (highest handle survives instead of
    /// lowest). Exists to demonstrate the tie-break is observationally
    /// irrelevant for honest merges.
    pub tie_break_highest: bool,
}

struct Forming {
    plans: Vec<(RoutingPlan, OnionKind)>,
    /// Verifier of each checkpoint plan, index-aligned with the checkpoint
    /// entries in `plans` (keyed after forming by evolution id).
    verifiers: HashMap<usize, PartyId>,
    /// expected[party.index0()][epoch] = checkpoint nonces due.
    expected: Vec<HashMap<u32, HashSet<u64>>>,
}

fn random_party(n: u32, rng: &mut ChaCha8Rng) -> PartyId {
    PartyId(rng.random_range(1..=n))
}

fn form_all(
    protocol: &Protocol,
    input: &SimpleInput,
    keys: Option<&KeyMaterial>,
    rng: &mut ChaCha8Rng,
) -> Result<Forming> {
    let n = protocol.n_parties();
    let mut forming = Forming {
        plans: Vec::new(),
        verifiers: HashMap::new(),
        expected: vec![HashMap::new(); n as usize],
    };
    match protocol {
        Protocol::Strawman { alpha_hops, .. } => {
            for i in input.parties() {
                let mut path: Vec<PartyId> =
                    (0..*alpha_hops).map(|_| random_party(n, rng)).collect();
                path.push(input.recipient(i));
                let nonces = (0..*alpha_hops)
                    .map(|_| crate::types::Nonce(rng.random_range(1..=u64::MAX)))
                    .collect();
                forming.plans.push((
                    RoutingPlan {
                        message: input.message(i),
                        path,
                        nonces,
                        origin: i,
                    },
                    OnionKind::Strawman,
                ));
            }
        }
        Protocol::Pitree(p) => {
            let keys = keys.expect("tree protocol needs key material");
            for i in input.parties() {
                let (_, plans) =
                    form_merging_plans(i, input.message(i), input.recipient(i), p, rng)?;
                for plan in plans {
                    forming.plans.push((plan, OnionKind::Merging));
                }
                for datum in gen_ckpt_data(keys, i, p.h(), p.ckpt_freq) {
                    let plan =
                        form_checkpoint_plan(i, Some(datum), p.h(), p.d, p.n_parties, rng)?;
                    forming.verifiers.insert(forming.plans.len(), datum.verifier);
                    forming.plans.push((plan, OnionKind::Checkpoint));
                    forming.expected[i.index0()]
                        .entry(datum.epoch)
                        .or_default()
                        .insert(datum.checkpoint.0);
                }
            }
        }
        Protocol::Pibfly(p) => {
            let keys = keys.expect("butterfly protocol needs key material");
            let (h, d, l) = (p.tree.h(), p.tree.d, p.butterfly.mixing_epochs());
            for i in input.parties() {
                let (_, bases) =
                    form_merging_plans(i, input.message(i), input.recipient(i), &p.tree, rng)?;
                for base in bases {
                    let plan = convert_plan(&base, None, &p.butterfly, h, d, rng)?;
                    forming.plans.push((plan, OnionKind::Merging));
                }
                for datum in gen_ckpt_data(keys, i, p.total_epochs(), p.tree.ckpt_freq) {
                    let plan = if datum.epoch <= l {
                        // Mixing-phase checkpoint: pin the walk through the
                        // verifier and embed the nonce during conversion.
                        let base =
                            form_checkpoint_plan(i, None, h, d, p.tree.n_parties, rng)?;
                        convert_plan(&base, Some(datum), &p.butterfly, h, d, rng)?
                    } else {
                        // Merging-phase checkpoint: embed in the base plan
                        // at the position that survives conversion.
                        let base_datum = CheckpointDatum {
                            epoch: datum.epoch - l + 1,
                            ..datum
                        };
                        let base = form_checkpoint_plan(
                            i,
                            Some(base_datum),
                            h,
                            d,
                            p.tree.n_parties,
                            rng,
                        )?;
                        convert_plan(&base, None, &p.butterfly, h, d, rng)?
                    };
                    forming.verifiers.insert(forming.plans.len(), datum.verifier);
                    forming.plans.push((plan, OnionKind::Checkpoint));
                    forming.expected[i.index0()]
                        .entry(datum.epoch)
                        .or_default()
                        .insert(datum.checkpoint.0);
                }
            }
        }
    }
    Ok(forming)
}

/// Execute one run with default engine options.
pub fn run(
    protocol: &Protocol,
    input: &SimpleInput,
    adversary_cfg: &AdversaryConfig,
    seed: u64,
) -> Result<RunTranscript> {
    run_with_options(protocol, input, adversary_cfg, seed, EngineOptions::default())
}

/// Execute one run.
pub fn run_with_options(
    protocol: &Protocol,
    input: &SimpleInput,
    adversary_cfg: &AdversaryConfig,
    seed: u64,
    options: EngineOptions,
) -> Result<RunTranscript> {
    protocol.validate()?;
    let n = protocol.n_parties();
    if input.n_parties() != n {
        return Err(SimError::config(format!(
            "input has {} parties, protocol expects {n}",
            input.n_parties()
        )));
    }
    let keys = if matches!(protocol, Protocol::Strawman { .. }) {
        None
    } else {
        Some(KeyMaterial::generate(n, split_seed(seed, stream::KEYS))?)
    };
    let mut adversary = Adversary::new(adversary_cfg, n, protocol.total_epochs())?;
    let mut registry = OnionRegistry::new(split_seed(seed, stream::HANDLES));
    let mut forming_rng = seeded_rng(split_seed(seed, stream::FORMING));
    let mut abort_rng = seeded_rng(split_seed(seed, stream::ABORT));

    let forming = form_all(protocol, input, keys.as_ref(), &mut forming_rng)?;
    let mut evolutions: Vec<EvolutionRecord> = Vec::with_capacity(forming.plans.len());
    let mut handle_evolution: HashMap<OnionHandle, EvolutionId> = HashMap::new();
    let mut verifier_of: HashMap<u64, PartyId> = HashMap::new();
    // outbox[p] holds (receiver, handle) pairs to transmit next round.
    let mut outbox: Vec<Vec<(PartyId, OnionHandle)>> = vec![Vec::new(); n as usize];
    for (idx, (plan, kind)) in forming.plans.iter().enumerate() {
        let handle = registry.form_onion(plan.clone())?;
        let id = registry.evolution_of(handle).unwrap();
        debug_assert_eq!(id.0 as usize, evolutions.len());
        if let Some(v) = forming.verifiers.get(&idx) {
            verifier_of.insert(id.0, *v);
        }
        evolutions.push(EvolutionRecord {
            id,
            origin: plan.origin,
            kind: *kind,
            path: plan.path.clone(),
            nonces: plan.nonces.clone(),
            terminal: None,
            terminal_round: 0,
        });
        handle_evolution.insert(handle, id);
        outbox[plan.origin.index0()].push((plan.path[0], handle));
    }

    let rounds = protocol.path_len();
    let d = protocol.d();
    let chi = protocol.chi();
    let total_epochs = protocol.total_epochs();
    let mut events: Vec<Event> = Vec::new();
    let mut aborted = vec![false; n as usize];
    let mut received_data = vec![0u32; n as usize];

    let seal = |evolutions: &mut Vec<EvolutionRecord>,
                    id: EvolutionId,
                    terminal: Terminal,
                    round: u32| {
        let ev = &mut evolutions[id.0 as usize];
        debug_assert!(ev.terminal.is_none());
        ev.terminal = Some(terminal);
        ev.terminal_round = round;
    };

    for t in 1..=rounds {
        // 1. Transmit. Aborted honest parties strand everything except
        //    their own abort messages.
        let mut txs: Vec<TransmissionView> = Vec::new();
        for p in 0..n as usize {
            let party = PartyId::from_index0(p);
            let entries = std::mem::take(&mut outbox[p]);
            for (receiver, handle) in entries {
                let id = handle_evolution[&handle];
                if aborted[p] && evolutions[id.0 as usize].kind != OnionKind::AbortMsg {
                    registry.discard(handle);
                    seal(&mut evolutions, id, Terminal::Stranded, t);
                    continue;
                }
                txs.push(TransmissionView {
                    sender: party,
                    receiver,
                    handle,
                });
                events.push(Event::Transmission {
                    round: t,
                    sender: party,
                    receiver,
                    handle,
                });
            }
        }

        // 2. Adversary decision (oracle view first when the mode needs it).
        let epoch = if d > 0 && (t + d - 1) / d <= total_epochs {
            (t + d - 1) / d
        } else {
            0
        };
        let info = RoundInfo {
            round: t,
            epoch,
            is_epoch_first_round: (t - 1) % d == 0,
            first_merging_epoch: protocol.first_merging_epoch(),
        };
        let oracle = if adversary.mode == Mode::Oracle {
            Some(build_oracle_info(
                &registry,
                &evolutions,
                &verifier_of,
                &adversary.corrupted,
            ))
        } else {
            None
        };
        let drops = adversary.decide(info, &txs, oracle.as_ref());
        let tx_receiver: HashMap<OnionHandle, PartyId> =
            txs.iter().map(|t| (t.handle, t.receiver)).collect();
        let mut dropped: HashSet<OnionHandle> = HashSet::new();
        for handle in drops {
            let receiver = *tx_receiver.get(&handle).ok_or_else(|| {
                SimError::runtime("adversary tried to drop an onion not in transit")
            })?;
            if !adversary.is_corrupted(receiver) {
                return Err(SimError::runtime(format!(
                    "adversary power violation: drop at honest receiver {receiver}"
                )));
            }
            if !dropped.insert(handle) {
                continue;
            }
            registry.discard(handle);
            seal(&mut evolutions, handle_evolution[&handle], Terminal::AdversaryDropped, t);
            events.push(Event::AdversaryDrop {
                round: t,
                receiver,
                handle,
            });
        }

        // 3. Receivers process; relays queue for merging.
        let is_diagnostic = protocol.has_diagnostics() && d > 0 && t % d == 0 && epoch >= 1;
        // relays[p] = (nonce, next, fresh handle) in processing order.
        let mut relays: Vec<Vec<(crate::types::Nonce, PartyId, OnionHandle)>> =
            vec![Vec::new(); n as usize];
        let mut observed: Vec<HashSet<u64>> = vec![HashSet::new(); n as usize];
        for tx in &txs {
            if dropped.contains(&tx.handle) {
                continue;
            }
            let receiver = tx.receiver;
            let id = handle_evolution[&tx.handle];
            match registry.proc_onion(receiver, tx.handle)? {
                PeelResult::Deliver(message) => {
                    seal(&mut evolutions, id, Terminal::Delivered, t);
                    events.push(Event::Delivery {
                        round: t,
                        recipient: receiver,
                        message,
                    });
                    if message.is_data() {
                        received_data[receiver.index0()] += 1;
                    }
                    if message == Message::Abort
                        && !adversary.is_corrupted(receiver)
                        && !aborted[receiver.index0()]
                    {
                        aborted[receiver.index0()] = true;
                        events.push(Event::PartyAbort {
                            round: t,
                            party: receiver,
                        });
                    }
                }
                PeelResult::Relay { next, nonce, handle } => {
                    handle_evolution.insert(handle, id);
                    if aborted[receiver.index0()] && !adversary.is_corrupted(receiver) {
                        registry.discard(handle);
                        seal(&mut evolutions, id, Terminal::Stranded, t);
                        continue;
                    }
                    if is_diagnostic && !nonce.is_empty() {
                        observed[receiver.index0()].insert(nonce.0);
                    }
                    relays[receiver.index0()].push((nonce, next, handle));
                }
                PeelResult::NotIntended => {
                    return Err(SimError::runtime("onion routed to an unintended holder"));
                }
            }
        }

        // 4. Merge equal non-empty nonces per receiver.
        for p in 0..n as usize {
            if relays[p].is_empty() {
                continue;
            }
            let party = PartyId::from_index0(p);
            let mut groups: BTreeMap<u64, Vec<OnionHandle>> = BTreeMap::new();
            for (nonce, _, handle) in &relays[p] {
                if !nonce.is_empty() {
                    groups.entry(nonce.0).or_default().push(*handle);
                }
            }
            let mut merged_away: HashSet<OnionHandle> = HashSet::new();
            for (nonce, handles) in groups {
                if handles.len() < 2 {
                    continue;
                }
                let survivor = if options.tie_break_highest {
                    *handles.iter().max().unwrap()
                } else {
                    *handles.iter().min().unwrap()
                };
                for h in handles {
                    if h == survivor {
                        continue;
                    }
                    merged_away.insert(h);
                    registry.discard(h);
                    seal(&mut evolutions, handle_evolution[&h], Terminal::MergedAway, t);
                    events.push(Event::Merge {
                        round: t,
                        party,
                        surviving: survivor,
                        dropped: h,
                        nonce: crate::types::Nonce(nonce),
                    });
                }
            }
            for (_, next, handle) in relays[p].drain(..) {
                if !merged_away.contains(&handle) {
                    outbox[p].push((next, handle));
                }
            }
        }

        // 5. Diagnostics for honest, unaborted parties.
        if is_diagnostic {
            for p in 0..n as usize {
                let party = PartyId::from_index0(p);
                if adversary.is_corrupted(party) || aborted[p] {
                    continue;
                }
                let expected = forming.expected[p].get(&epoch);
                let missing = expected
                    .map(|e| e.difference(&observed[p]).count())
                    .unwrap_or(0);
                let abort = protocol.diagnostic_aborts(missing);
                events.push(Event::Diagnostic {
                    round: t,
                    party,
                    epoch,
                    missing: missing as u32,
                    abort,
                });
                if abort {
                    aborted[p] = true;
                    events.push(Event::PartyAbort { round: t, party });
                }
            }
        }

        // 6. Aborted honest parties flood χ abort messages per round.
        if protocol.has_diagnostics() && t < rounds {
            for p in 0..n as usize {
                let party = PartyId::from_index0(p);
                if !aborted[p] || adversary.is_corrupted(party) {
                    continue;
                }
                for _ in 0..chi {
                    let recipient = random_party(n, &mut abort_rng);
                    let plan = RoutingPlan {
                        message: Message::Abort,
                        path: vec![recipient],
                        nonces: vec![],
                        origin: party,
                    };
                    let handle = registry.form_onion(plan.clone())?;
                    let id = registry.evolution_of(handle).unwrap();
                    evolutions.push(EvolutionRecord {
                        id,
                        origin: party,
                        kind: OnionKind::AbortMsg,
                        path: plan.path,
                        nonces: plan.nonces,
                        terminal: None,
                        terminal_round: 0,
                    });
                    handle_evolution.insert(handle, id);
                    outbox[p].push((recipient, handle));
                }
            }
        }
    }

    let aborted_parties: Vec<PartyId> = (0..n as usize)
        .filter(|&p| aborted[p])
        .map(PartyId::from_index0)
        .collect();
    let mut corrupted: Vec<PartyId> = adversary.corrupted.iter().copied().collect();
    corrupted.sort();
    Ok(RunTranscript {
        n_parties: n,
        rounds,
        oracle_mode: adversary.mode == Mode::Oracle,
        events,
        evolutions,
        handle_evolution,
        corrupted,
        aborted: aborted_parties,
        received_data,
        strategy: adversary.summary(),
    })
}

/// Ground-truth oracle view: classify live indistinguishable onions as
/// singletons or mergeable-pair members. Indistinguishable onions are
/// honest-origin merging onions and honest-origin checkpoint onions with
/// honest verifiers. Two live merging onions about to reveal the same
/// non-empty nonce form a mergeable pair; everything else is a singleton.
fn build_oracle_info(
    registry: &OnionRegistry,
    evolutions: &[EvolutionRecord],
    verifier_of: &HashMap<u64, PartyId>,
    corrupted: &HashSet<PartyId>,
) -> OracleInfo {
    let mut info = OracleInfo::default();
    let live = registry.live_onions();
    let mut merging_by_nonce: HashMap<u64, Vec<OnionHandle>> = HashMap::new();
    let mut indistinguishable: Vec<(OnionHandle, bool)> = Vec::new(); // (handle, is_merging)
    for onion in &live {
        let record = &evolutions[onion.evolution.0 as usize];
        if corrupted.contains(&record.origin) {
            continue;
        }
        match record.kind {
            OnionKind::Merging => {
                indistinguishable.push((onion.handle, true));
                if let Some(nonce) = onion.next_nonce {
                    if !nonce.is_empty() {
                        merging_by_nonce.entry(nonce.0).or_default().push(onion.handle);
                    }
                }
            }
            OnionKind::Checkpoint => {
                let honest_verifier = verifier_of
                    .get(&onion.evolution.0)
                    .map(|v| !corrupted.contains(v))
                    .unwrap_or(false);
                if honest_verifier {
                    indistinguishable.push((onion.handle, false));
                }
            }
            _ => {}
        }
    }
    let mut paired: HashMap<OnionHandle, u64> = HashMap::new();
    for (nonce, handles) in merging_by_nonce {
        if handles.len() == 2 {
            for h in handles {
                paired.insert(h, nonce);
            }
        }
    }
    for (handle, is_merging) in indistinguishable {
        let class = if is_merging {
            match paired.get(&handle) {
                Some(pair) => OracleClass::PairMember(*pair),
                None => OracleClass::Singleton,
            }
        } else {
            OracleClass::Singleton
        };
        if class == OracleClass::Singleton {
            info.live_singletons += 1;
        }
        info.class_of.insert(handle, class);
    }
    info
}

/// Standalone abort-flood process: starting from one aborted party, every
/// aborted honest party sends `chi` abort messages to uniform random
/// parties (with replacement) each round; honest recipients abort on
/// receipt. Returns the number of rounds until every honest party has
/// aborted, or None if `max_rounds` was not enough.
pub fn abort_flood_rounds(
    n: u32,
    corrupted: &HashSet<PartyId>,
    chi: u32,
    first: PartyId,
    seed: u64,
    max_rounds: u32,
) -> Option<u32> {
    let mut rng = seeded_rng(seed);
    let mut aborted: HashSet<PartyId> = HashSet::new();
    aborted.insert(first);
    let honest_total = (1..=n)
        .map(PartyId)
        .filter(|p| !corrupted.contains(p))
        .count();
    for round in 1..=max_rounds {
        if aborted.len() >= honest_total {
            return Some(round - 1);
        }
        let mut senders: Vec<PartyId> = aborted.iter().copied().collect();
        senders.sort();
        let mut newly: Vec<PartyId> = Vec::new();
        for _ in &senders {
            for _ in 0..chi {
                let r = random_party(n, &mut rng);
                if !corrupted.contains(&r) && !aborted.contains(&r) {
                    newly.push(r);
                }
            }
        }
        aborted.extend(newly);
    }
    if aborted.len() >= honest_total {
        Some(max_rounds)
    } else {
        None
    }
}
