//! Adversary views and attack strategies.
//!
//! The adversary corrupts a fixed uniformly drawn set of parties at seed
//! time and, each round, sees all link metadata (sender, receiver, opaque
//! handle). It may drop onions only at corrupted receivers — the engine
//! rejects any decision outside that power. Oracle-mode strategies
//! additionally see the ground-truth singleton / mergeable-pair
//! classification of in-flight indistinguishable onions, which a real
//! adversary cannot compute; transcripts record which mode ran.

use std::collections::{HashMap, HashSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::onion::OnionHandle;
use crate::rng::{seeded_rng, split_seed, stream};
use crate::types::PartyId;

/// Whether a strategy runs on the realistic view or the ground-truth
/// oracle view.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Mode {
    Realistic,
    Oracle,
}

/// One link the adversary observes this round.
#[derive(Clone, Copy, Debug)]
pub struct TransmissionView {
    pub sender: PartyId,
    pub receiver: PartyId,
    pub handle: OnionHandle,
}

/// Ground-truth classification of an in-flight indistinguishable onion.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleClass {
    Singleton,
    /// Member of a mergeable pair; both members carry the same pair id.
    PairMember(u64),
}

/// Oracle-mode extras: classification of this round's indistinguishable
/// transmissions plus the total live singleton count (the denominator of
/// schedule fractions).
#[derive(Clone, Debug, Default)]
pub struct OracleInfo {
    pub class_of: HashMap<OnionHandle, OracleClass>,
    pub live_singletons: usize,
}

/// Timing context the engine passes to `decide`.
#[derive(Clone, Copy, Debug)]
pub struct RoundInfo {
    pub round: u32,
    /// 1-based epoch this round belongs to, 0 for epoch-less protocols.
    pub epoch: u32,
    pub is_epoch_first_round: bool,
    /// First merging-phase epoch (tree: 1; butterfly: L+1).
    pub first_merging_epoch: u32,
}

/// Strategy selection, as named in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AdversarySpec {
    Passive,
    Isolating { target: PartyId },
    UniformIsolating,
    SenderTargeting { target: PartyId },
    SingletonDropping { alpha_schedule: Vec<f64> },
    PairDropping,
}

impl AdversarySpec {
    pub fn mode(&self) -> Mode {
        match self {
            AdversarySpec::SingletonDropping { .. } | AdversarySpec::PairDropping => Mode::Oracle,
            _ => Mode::Realistic,
        }
    }
}

/// Full adversary configuration for one run.
#[derive(Clone, Debug)]
pub struct AdversaryConfig {
    pub spec: AdversarySpec,
    pub kappa: f64,
    pub seed: u64,
}

/// End-of-run strategy facts surfaced in the transcript.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategySummary {
    pub mode: Mode,
    pub target: Option<PartyId>,
    /// Isolating strategies: did every transmission by the target get
    /// dropped (vacuously true if the target transmitted nothing)?
    pub isolated: Option<bool>,
    /// Singleton dropping: realized drop fraction per epoch.
    pub realized_fractions: Vec<f64>,
    pub total_drops: u64,
}

/// A live adversary: the corrupted set plus the running strategy state.
pub struct Adversary {
    pub corrupted: HashSet<PartyId>,
    pub mode: Mode,
    state: StrategyState,
    rng: ChaCha8Rng,
    total_drops: u64,
}

enum StrategyState {
    Passive,
    Isolating {
        target: PartyId,
        all_dropped: bool,
    },
    SenderTargeting {
        target: PartyId,
        round1_receivers: HashSet<PartyId>,
    },
    SingletonDropping {
        alpha_schedule: Vec<f64>,
        realized: Vec<f64>,
    },
    PairDropping,
}

impl Adversary {
    /// Build the adversary: corruption set of exactly ⌊κN⌋ parties drawn
    /// uniformly from the adversary seed, then the strategy.
    pub fn new(config: &AdversaryConfig, n_parties: u32, total_epochs: u32) -> Result<Adversary> {
        if !(0.0..=1.0).contains(&config.kappa) {
            return Err(SimError::config(format!("kappa {} not in [0,1]", config.kappa)));
        }
        let n_corrupt = (config.kappa * n_parties as f64).floor() as usize;
        let mut corruption_rng = seeded_rng(split_seed(config.seed, stream::CORRUPTION));
        let corrupted: HashSet<PartyId> = (1..=n_parties)
            .map(PartyId)
            .choose_multiple(&mut corruption_rng, n_corrupt)
            .into_iter()
            .collect();
        let mut rng = seeded_rng(split_seed(config.seed, stream::ADVERSARY));
        let state = match &config.spec {
            AdversarySpec::Passive => StrategyState::Passive,
            AdversarySpec::Isolating { target } => StrategyState::Isolating {
                target: *target,
                all_dropped: true,
            },
            AdversarySpec::UniformIsolating => StrategyState::Isolating {
                target: PartyId(rng.random_range(1..=n_parties)),
                all_dropped: true,
            },
            AdversarySpec::SenderTargeting { target } => StrategyState::SenderTargeting {
                target: *target,
                round1_receivers: HashSet::new(),
            },
            AdversarySpec::SingletonDropping { alpha_schedule } => {
                if alpha_schedule.len() != total_epochs as usize {
                    return Err(SimError::config(format!(
                        "schedule has {} entries for {total_epochs} epochs",
                        alpha_schedule.len()
                    )));
                }
                if alpha_schedule.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    return Err(SimError::config("schedule fractions must be in [0,1]"));
                }
                StrategyState::SingletonDropping {
                    alpha_schedule: alpha_schedule.clone(),
                    realized: Vec::new(),
                }
            }
            AdversarySpec::PairDropping => StrategyState::PairDropping,
        };
        Ok(Adversary {
            corrupted,
            mode: config.spec.mode(),
            state,
            rng,
            total_drops: 0,
        })
    }

    pub fn is_corrupted(&self, p: PartyId) -> bool {
        self.corrupted.contains(&p)
    }

    /// Per-round drop decision. Returns the handles to drop; the engine
    /// audits that each has a corrupted receiver.
    pub fn decide(
        &mut self,
        info: RoundInfo,
        transmissions: &[TransmissionView],
        oracle: Option<&OracleInfo>,
    ) -> Vec<OnionHandle> {
        let corrupted = &self.corrupted;
        let drops: Vec<OnionHandle> = match &mut self.state {
            StrategyState::Passive => Vec::new(),
            StrategyState::Isolating {
                target,
                all_dropped,
            } => {
                let mut drops = Vec::new();
                for t in transmissions {
                    if t.sender == *target {
                        if corrupted.contains(&t.receiver) {
                            drops.push(t.handle);
                        } else {
                            *all_dropped = false;
                        }
                    }
                }
                drops
            }
            StrategyState::SenderTargeting {
                target,
                round1_receivers,
            } => match info.round {
                1 => {
                    let mut drops = Vec::new();
                    for t in transmissions {
                        if t.sender == *target {
                            round1_receivers.insert(t.receiver);
                            if corrupted.contains(&t.receiver) {
                                drops.push(t.handle);
                            }
                        }
                    }
                    drops
                }
                2 => transmissions
                    .iter()
                    .filter(|t| {
                        round1_receivers.contains(&t.sender) && corrupted.contains(&t.receiver)
                    })
                    .map(|t| t.handle)
                    .collect(),
                _ => Vec::new(),
            },
            StrategyState::SingletonDropping {
                alpha_schedule,
                realized,
            } => {
                if !info.is_epoch_first_round || info.epoch == 0 {
                    Vec::new()
                } else {
                    let oracle = oracle.expect("oracle-mode strategy needs an oracle view");
                    let alpha = alpha_schedule[(info.epoch - 1) as usize];
                    let desired =
                        (alpha * oracle.live_singletons as f64).round() as usize;
                    let mut candidates: Vec<OnionHandle> = transmissions
                        .iter()
                        .filter(|t| {
                            corrupted.contains(&t.receiver)
                                && oracle.class_of.get(&t.handle)
                                    == Some(&OracleClass::Singleton)
                        })
                        .map(|t| t.handle)
                        .collect();
                    candidates.shuffle(&mut self.rng);
                    candidates.truncate(desired);
                    let fraction = if oracle.live_singletons == 0 {
                        0.0
                    } else {
                        candidates.len() as f64 / oracle.live_singletons as f64
                    };
                    realized.push(fraction);
                    candidates
                }
            }
            StrategyState::PairDropping => {
                if !info.is_epoch_first_round || info.epoch < info.first_merging_epoch {
                    Vec::new()
                } else {
                    let oracle = oracle.expect("oracle-mode strategy needs an oracle view");
                    // Pairs with both members arriving at corrupted parties.
                    let mut members: HashMap<u64, Vec<OnionHandle>> = HashMap::new();
                    for t in transmissions {
                        if corrupted.contains(&t.receiver) {
                            if let Some(OracleClass::PairMember(pair)) =
                                oracle.class_of.get(&t.handle)
                            {
                                members.entry(*pair).or_default().push(t.handle);
                            }
                        }
                    }
                    let mut drops: Vec<(u64, Vec<OnionHandle>)> = members
                        .into_iter()
                        .filter(|(_, hs)| hs.len() == 2)
                        .collect();
                    drops.sort_by_key(|(pair, _)| *pair);
                    drops.into_iter().flat_map(|(_, hs)| hs).collect()
                }
            }
        };
        self.total_drops += drops.len() as u64;
        drops
    }

    pub fn summary(&self) -> StrategySummary {
        let (target, isolated, realized_fractions) = match &self.state {
            StrategyState::Passive => (None, None, Vec::new()),
            StrategyState::Isolating {
                target,
                all_dropped,
            } => (Some(*target), Some(*all_dropped), Vec::new()),
            StrategyState::SenderTargeting { target, .. } => (Some(*target), None, Vec::new()),
            StrategyState::SingletonDropping { realized, .. } => {
                (None, None, realized.clone())
            }
            StrategyState::PairDropping => (None, None, Vec::new()),
        };
        StrategySummary {
            mode: self.mode,
            target,
            isolated,
            realized_fractions,
            total_drops: self.total_drops,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(spec: AdversarySpec, seed: u64) -> AdversaryConfig {
        AdversaryConfig {
            spec,
            kappa: 0.25,
            seed,
        }
    }

    fn tv(sender: u32, receiver: u32, handle: u128) -> TransmissionView {
        TransmissionView {
            sender: PartyId(sender),
            receiver: PartyId(receiver),
            handle: OnionHandle(handle),
        }
    }

    fn info(round: u32) -> RoundInfo {
        RoundInfo {
            round,
            epoch: (round + 3) / 4,
            is_epoch_first_round: round % 4 == 1,
            first_merging_epoch: 1,
        }
    }

    #[test]
    fn corruption_set_has_floor_kappa_n_parties() {
        let adv = Adversary::new(&cfg(AdversarySpec::Passive, 1), 16, 1).unwrap();
        assert_eq!(adv.corrupted.len(), 4);
        let adv2 = Adversary::new(&cfg(AdversarySpec::Passive, 1), 16, 1).unwrap();
        assert_eq!(adv.corrupted, adv2.corrupted);
    }

    #[test]
    fn passive_never_drops() {
        let mut adv = Adversary::new(&cfg(AdversarySpec::Passive, 1), 16, 1).unwrap();
        let c = *adv.corrupted.iter().next().unwrap();
        let txs = vec![tv(1, c.0, 10), tv(2, 3, 11)];
        assert!(adv.decide(info(1), &txs, None).is_empty());
    }

    #[test]
    fn isolating_drops_target_to_corrupted_links_only() {
        let mut adv = Adversary::new(
            &cfg(AdversarySpec::Isolating { target: PartyId(1) }, 2),
            16,
            1,
        )
        .unwrap();
        let corrupted = *adv.corrupted.iter().min().unwrap();
        let honest = (1..=16)
            .map(PartyId)
            .find(|p| !adv.is_corrupted(*p) && p.0 != 1)
            .unwrap();
        let txs = vec![
            tv(1, corrupted.0, 10),
            tv(1, honest.0, 11),
            tv(2, corrupted.0, 12),
        ];
        let drops = adv.decide(info(1), &txs, None);
        assert_eq!(drops, vec![OnionHandle(10)]);
        // The honest-receiver transmission escaped, so not isolated.
        assert_eq!(adv.summary().isolated, Some(false));
    }

    #[test]
    fn isolation_is_vacuously_true_without_target_transmissions() {
        let mut adv = Adversary::new(
            &cfg(AdversarySpec::Isolating { target: PartyId(1) }, 2),
            16,
            1,
        )
        .unwrap();
        let drops = adv.decide(info(1), &[tv(2, 3, 10)], None);
        assert!(drops.is_empty());
        assert_eq!(adv.summary().isolated, Some(true));
    }

    #[test]
    fn uniform_isolating_samples_targets_uniformly() {
        // 1e4 seeds: each of 16 parties targeted with freq 1/16 ± 3σ.
        let mut counts = [0usize; 16];
        let trials = 10_000u64;
        for seed in 0..trials {
            let adv =
                Adversary::new(&cfg(AdversarySpec::UniformIsolating, seed), 16, 1).unwrap();
            counts[adv.summary().target.unwrap().index0()] += 1;
        }
        // 4σ band: with 16 bins a 3σ bound has a ~4% family-wise false
        // alarm rate.
        let p = 1.0 / 16.0;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - trials as f64 * p).abs() <= 4.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn sender_targeting_applies_the_two_round_window() {
        let mut adv = Adversary::new(
            &cfg(AdversarySpec::SenderTargeting { target: PartyId(1) }, 3),
            16,
            1,
        )
        .unwrap();
        let corrupted = *adv.corrupted.iter().min().unwrap();
        let honest: Vec<PartyId> = (1..=16)
            .map(PartyId)
            .filter(|p| !adv.is_corrupted(*p) && p.0 != 1)
            .collect();
        // Round 1: target → corrupted dropped, target → honest observed.
        let r1 = vec![tv(1, corrupted.0, 10), tv(1, honest[0].0, 11)];
        assert_eq!(adv.decide(info(1), &r1, None), vec![OnionHandle(10)]);
        // Round 2: the round-1 receiver forwarding to corrupted is dropped;
        // an unrelated sender is not.
        let r2 = vec![
            tv(honest[0].0, corrupted.0, 20),
            tv(honest[1].0, corrupted.0, 21),
        ];
        assert_eq!(adv.decide(info(2), &r2, None), vec![OnionHandle(20)]);
        // Round 3: window closed, even direct target → corrupted survives.
        let r3 = vec![tv(1, corrupted.0, 30)];
        assert!(adv.decide(info(3), &r3, None).is_empty());
    }

    #[test]
    fn singleton_dropping_respects_schedule_and_availability() {
        let mut adv = Adversary::new(
            &cfg(
                AdversarySpec::SingletonDropping {
                    alpha_schedule: vec![0.5, 0.0],
                },
                4,
            ),
            16,
            2,
        )
        .unwrap();
        assert_eq!(adv.mode, Mode::Oracle);
        let corrupted = *adv.corrupted.iter().min().unwrap();
        let mut oracle = OracleInfo {
            live_singletons: 4,
            ..Default::default()
        };
        for h in 10..14u128 {
            oracle.class_of.insert(OnionHandle(h), OracleClass::Singleton);
        }
        // All four singletons arrive at the corrupted party; α=0.5 of the
        // 4 live singletons → 2 drops.
        let txs: Vec<_> = (10..14u128).map(|h| tv(1, corrupted.0, h)).collect();
        let drops = adv.decide(
            RoundInfo {
                round: 1,
                epoch: 1,
                is_epoch_first_round: true,
                first_merging_epoch: 1,
            },
            &txs,
            Some(&oracle),
        );
        assert_eq!(drops.len(), 2);
        assert!((adv.summary().realized_fractions[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_zero_schedule_is_passive() {
        let mut adv = Adversary::new(
            &cfg(
                AdversarySpec::SingletonDropping {
                    alpha_schedule: vec![0.0; 3],
                },
                4,
            ),
            16,
            3,
        )
        .unwrap();
        let corrupted = *adv.corrupted.iter().min().unwrap();
        let mut oracle = OracleInfo {
            live_singletons: 1,
            ..Default::default()
        };
        oracle.class_of.insert(OnionHandle(10), OracleClass::Singleton);
        let drops = adv.decide(
            RoundInfo {
                round: 1,
                epoch: 1,
                is_epoch_first_round: true,
                first_merging_epoch: 1,
            },
            &[tv(1, corrupted.0, 10)],
            Some(&oracle),
        );
        assert!(drops.is_empty());
    }

    #[test]
    fn schedule_length_mismatch_is_rejected() {
        assert!(Adversary::new(
            &cfg(
                AdversarySpec::SingletonDropping {
                    alpha_schedule: vec![0.1; 2],
                },
                4,
            ),
            16,
            3,
        )
        .is_err());
    }

    #[test]
    fn pair_dropping_takes_whole_pairs_at_corrupted_parties_only() {
        let mut adv = Adversary::new(&cfg(AdversarySpec::PairDropping, 5), 16, 2).unwrap();
        let corrupted = *adv.corrupted.iter().min().unwrap();
        let honest = (1..=16)
            .map(PartyId)
            .find(|p| !adv.is_corrupted(*p))
            .unwrap();
        let mut oracle = OracleInfo::default();
        // Pair 1 fully at the corrupted party; pair 2 split honest/corrupted.
        for (h, pair) in [(10u128, 1u64), (11, 1), (12, 2), (13, 2)] {
            oracle
                .class_of
                .insert(OnionHandle(h), OracleClass::PairMember(pair));
        }
        let txs = vec![
            tv(1, corrupted.0, 10),
            tv(2, corrupted.0, 11),
            tv(3, corrupted.0, 12),
            tv(4, honest.0, 13),
        ];
        let round = RoundInfo {
            round: 1,
            epoch: 1,
            is_epoch_first_round: true,
            first_merging_epoch: 1,
        };
        let drops = adv.decide(round, &txs, Some(&oracle));
        assert_eq!(drops, vec![OnionHandle(10), OnionHandle(11)]);
    }

    #[test]
    fn decisions_are_deterministic() {
        let run = |seed: u64| {
            let mut adv = Adversary::new(
                &cfg(AdversarySpec::Isolating { target: PartyId(1) }, seed),
                16,
                1,
            )
            .unwrap();
            let txs: Vec<_> = (0..20u128).map(|h| tv(1, (h % 16 + 1) as u32, h)).collect();
            adv.decide(info(1), &txs, None)
        };
        assert_eq!(run(9), run(9));
    }
}
