//! Butterfly topology and plan conversion: prepend a mixing-phase walk
//! through an iterated butterfly network to a tree-protocol routing plan.
//!
//! Parties carry (n−1)-bit labels (n = log2(N) + 1 stages). At stage τ the
//! network pairs each party with the party whose label differs in one bit;
//! a converted onion walks L = n·D mixing epochs through these pairs before
//! entering its original merging route.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::onion::RoutingPlan;
use crate::tree::{CheckpointDatum, PitreeParams};
use crate::types::{Nonce, PartyId};

/// Butterfly shape: N = 2^(n−1) parties, n stages, D iterations, L = n·D
/// mixing epochs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ButterflyConfig {
    pub n_parties: u32,
    pub iterations: u32,
}

impl ButterflyConfig {
    pub fn new(n_parties: u32, iterations: u32) -> Result<Self> {
        if !n_parties.is_power_of_two() || n_parties < 2 {
            return Err(SimError::config(format!(
                "butterfly needs a power-of-two party count ≥ 2, got {n_parties}"
            )));
        }
        if iterations < 1 {
            return Err(SimError::config("butterfly needs at least one iteration"));
        }
        Ok(ButterflyConfig {
            n_parties,
            iterations,
        })
    }

    /// Stages n = log2(N) + 1.
    pub fn stages(&self) -> u32 {
        self.n_parties.ilog2() + 1
    }

    /// Mixing epochs L = n·D.
    pub fn mixing_epochs(&self) -> u32 {
        self.stages() * self.iterations
    }

    /// Bit position (1-based, most-significant-first over n−1 label bits)
    /// flipped at stage τ.
    fn stage_bit(&self, tau: u32) -> u32 {
        (tau - 1) % (self.stages() - 1) + 1
    }

    /// The party sharing i's stage-τ subnet: label with the stage's bit
    /// flipped. Symmetric in i.
    pub fn subnet_partner(&self, i: PartyId, tau: u32) -> PartyId {
        let label_bits = self.stages() - 1;
        let bit = self.stage_bit(tau);
        // Bit 1 is the most significant of the label.
        let mask = 1u32 << (label_bits - bit);
        PartyId::from_index0((i.index0() as u32 ^ mask) as usize)
    }

    /// The unordered stage-τ subnet {i, partner}.
    pub fn subnet_of(&self, i: PartyId, tau: u32) -> [PartyId; 2] {
        let j = self.subnet_partner(i, tau);
        if i.0 <= j.0 {
            [i, j]
        } else {
            [j, i]
        }
    }

    /// Random walk w_1..w_L: w_1 uniform, each step moves within the next
    /// stage's subnet. When pinned at (epoch, party), the walk fixes that
    /// hop and extends backward and forward by the same two-choice rule.
    pub fn random_walk(
        &self,
        pin: Option<(u32, PartyId)>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<PartyId>> {
        let l = self.mixing_epochs() as usize;
        let mut walk = vec![PartyId(0); l];
        let start = match pin {
            Some((epoch, k)) => {
                if epoch < 1 || epoch as usize > l {
                    return Err(SimError::config(format!(
                        "pinned epoch {epoch} outside 1..={l}"
                    )));
                }
                let idx = (epoch - 1) as usize;
                walk[idx] = k;
                // Backward: w_τ is in the stage-(τ+1) subnet of w_{τ+1}.
                for tau in (0..idx).rev() {
                    let pair = self.subnet_of(walk[tau + 1], tau as u32 + 2);
                    walk[tau] = pair[rng.random_range(0..2)];
                }
                idx
            }
            None => {
                walk[0] = PartyId(rng.random_range(1..=self.n_parties));
                0
            }
        };
        for tau in start + 1..l {
            let pair = self.subnet_of(walk[tau - 1], tau as u32 + 1);
            walk[tau] = pair[rng.random_range(0..2)];
        }
        Ok(walk)
    }
}

/// Butterfly-protocol tunables: the embedded tree parameters plus the
/// butterfly shape. Executable epochs: L mixing + h − 1 merging.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PibflyParams {
    pub tree: PitreeParams,
    pub butterfly: ButterflyConfig,
}

impl PibflyParams {
    pub fn new(tree: PitreeParams, iterations: u32) -> Result<Self> {
        let butterfly = ButterflyConfig::new(tree.n_parties, iterations)?;
        let mut tree = tree;
        // Checkpoint frequency spreads χ expected checkpoints over the
        // L + h epoch budget behind the W formula.
        tree.ckpt_freq = tree.chi as f64
            / (tree.n_parties as f64 * (butterfly.mixing_epochs() + tree.h()) as f64);
        let p = PibflyParams { butterfly, tree };
        p.tree.validate()?;
        Ok(p)
    }

    /// Executable epochs: L + h − 1 (the first merging epoch overlaps the
    /// last converted segment of the base plan).
    pub fn total_epochs(&self) -> u32 {
        self.butterfly.mixing_epochs() + self.tree.h() - 1
    }

    /// Expected genuine checkpoints per honest diagnostic,
    /// W = (1−κ)·χ/(nD + h).
    pub fn expected_checkpoints(&self) -> f64 {
        (1.0 - self.tree.kappa) * self.tree.chi as f64
            / (self.butterfly.mixing_epochs() + self.tree.h()) as f64
    }

    /// Abort iff missing > W/3, compared exactly as
    /// missing · 3 · (L+h) > (1−κ) · χ.
    pub fn diagnostic_aborts(&self, missing: usize) -> bool {
        let lhs = missing as f64 * 3.0 * (self.butterfly.mixing_epochs() + self.tree.h()) as f64;
        let rhs = (1.0 - self.tree.kappa) * self.tree.chi as f64;
        lhs > rhs
    }
}

/// Convert a tree-protocol plan by prepending L mixing epochs: for each
/// epoch τ the segment holds d−1 uniform parties from the walk hop's
/// stage-τ subnet followed by the hop itself, with empty nonces. A
/// mixing-phase checkpoint pins the walk and sets the nonce at its
/// diagnostic position. The base plan keeps positions d+1 ... h·d+1.
pub fn convert_plan(
    base: &RoutingPlan,
    checkpoint: Option<CheckpointDatum>,
    config: &ButterflyConfig,
    h: u32,
    d: u32,
    rng: &mut ChaCha8Rng,
) -> Result<RoutingPlan> {
    let base_len = (h * d) as usize + 1;
    if base.path.len() != base_len {
        return Err(SimError::config(format!(
            "base plan has {} entries, expected h·d+1 = {base_len}",
            base.path.len()
        )));
    }
    let l = config.mixing_epochs();
    if let Some(c) = checkpoint {
        if c.epoch < 1 || c.epoch > l {
            return Err(SimError::config(format!(
                "mixing checkpoint epoch {} outside 1..={l}",
                c.epoch
            )));
        }
    }
    let walk = config.random_walk(checkpoint.map(|c| (c.epoch, c.verifier)), rng)?;
    let mut path = Vec::with_capacity(((l + h - 1) * d) as usize + 1);
    let mut nonces = vec![Nonce::EMPTY; (l * d) as usize];
    for (tau0, &hop) in walk.iter().enumerate() {
        let pair = config.subnet_of(hop, tau0 as u32 + 1);
        for _ in 0..d - 1 {
            path.push(pair[rng.random_range(0..2)]);
        }
        path.push(hop);
    }
    if let Some(c) = checkpoint {
        nonces[(c.epoch * d) as usize - 1] = c.checkpoint;
    }
    path.extend_from_slice(&base.path[d as usize..]);
    nonces.extend_from_slice(&base.nonces[d as usize..]);
    Ok(RoutingPlan {
        message: base.message,
        path,
        nonces,
        origin: base.origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::types::Message;

    #[test]
    fn subnet_partner_flips_the_stage_bit() {
        // N=8: party 1 has bits 000; stage 1 flips bit 1 → 100 = party 5.
        let c = ButterflyConfig::new(8, 1).unwrap();
        assert_eq!(c.subnet_of(PartyId(1), 1), [PartyId(1), PartyId(5)]);
        // Party 3 has bits 010; stage 2 flips bit 2 → 000 = party 1.
        assert_eq!(c.subnet_of(PartyId(3), 2), [PartyId(1), PartyId(3)]);
    }

    #[test]
    fn subnet_relation_is_symmetric() {
        let c = ButterflyConfig::new(8, 1).unwrap();
        for tau in 1..=4u32 {
            for i in 1..=8u32 {
                let j = c.subnet_partner(PartyId(i), tau);
                assert_eq!(c.subnet_partner(j, tau), PartyId(i));
            }
        }
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        assert!(ButterflyConfig::new(12, 1).is_err());
    }

    #[test]
    fn walk_respects_subnets() {
        let c = ButterflyConfig::new(8, 2).unwrap();
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            let walk = c.random_walk(None, &mut rng).unwrap();
            assert_eq!(walk.len(), c.mixing_epochs() as usize);
            for tau in 1..walk.len() {
                let pair = c.subnet_of(walk[tau - 1], tau as u32 + 1);
                assert!(pair.contains(&walk[tau]));
            }
        }
    }

    #[test]
    fn pinned_walk_hits_the_pin_and_stays_valid() {
        let c = ButterflyConfig::new(8, 2).unwrap();
        let mut rng = seeded_rng(2);
        for _ in 0..100 {
            let walk = c.random_walk(Some((3, PartyId(5))), &mut rng).unwrap();
            assert_eq!(walk[2], PartyId(5));
            for tau in 1..walk.len() {
                let pair = c.subnet_of(walk[tau - 1], tau as u32 + 1);
                assert!(pair.contains(&walk[tau]));
            }
        }
    }

    #[test]
    fn pin_epoch_out_of_range_is_rejected() {
        let c = ButterflyConfig::new(8, 1).unwrap();
        let mut rng = seeded_rng(2);
        assert!(c.random_walk(Some((99, PartyId(1))), &mut rng).is_err());
    }

    #[test]
    fn full_butterfly_mixes_to_uniform() {
        // N=8, D=1: endpoint of 1e5 unpinned walks is uniform, 1/8 ± 3σ.
        let c = ButterflyConfig::new(8, 1).unwrap();
        let mut rng = seeded_rng(3);
        let trials = 100_000usize;
        let mut counts = [0usize; 8];
        for _ in 0..trials {
            let walk = c.random_walk(None, &mut rng).unwrap();
            counts[walk.last().unwrap().index0()] += 1;
        }
        let p = 1.0 / 8.0;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for &n in &counts {
            assert!((n as f64 - trials as f64 * p).abs() <= 3.0 * sigma, "count {n}");
        }
    }

    fn base_plan(h: u32, d: u32, n: u32, rng: &mut ChaCha8Rng) -> RoutingPlan {
        crate::tree::form_checkpoint_plan(PartyId(1), None, h, d, n, rng).unwrap()
    }

    #[test]
    fn converted_length_matches_the_epoch_count() {
        // N=4 (n=3), D=1 (L=3), h=2, d=2 → (3+2−1)·2+1 = 9 entries.
        let c = ButterflyConfig::new(4, 1).unwrap();
        let mut rng = seeded_rng(4);
        let base = base_plan(2, 2, 4, &mut rng);
        let plan = convert_plan(&base, None, &c, 2, 2, &mut rng).unwrap();
        assert_eq!(plan.path.len(), 9);
        assert_eq!(plan.nonces.len(), 8);
        plan.validate().unwrap();
    }

    #[test]
    fn unpinned_conversion_has_all_empty_mixing_nonces() {
        let c = ButterflyConfig::new(8, 1).unwrap();
        let mut rng = seeded_rng(5);
        let base = base_plan(3, 2, 8, &mut rng);
        let plan = convert_plan(&base, None, &c, 3, 2, &mut rng).unwrap();
        let ld = (c.mixing_epochs() * 2) as usize;
        assert!(plan.nonces[..ld].iter().all(|n| n.is_empty()));
        // The surviving base suffix is intact.
        assert_eq!(plan.path[ld..], base.path[2..]);
        assert_eq!(plan.nonces[ld..], base.nonces[2..]);
    }

    #[test]
    fn pinned_conversion_places_the_checkpoint_nonce() {
        // Checkpoint at epoch 2 with d=2: nonce index 4 (1-based) = c.
        let c = ButterflyConfig::new(8, 1).unwrap();
        let mut rng = seeded_rng(6);
        let base = base_plan(3, 2, 8, &mut rng);
        let datum = CheckpointDatum {
            epoch: 2,
            verifier: PartyId(6),
            checkpoint: Nonce(0xbeef),
        };
        let plan = convert_plan(&base, Some(datum), &c, 3, 2, &mut rng).unwrap();
        assert_eq!(plan.nonces[3], Nonce(0xbeef));
        assert_eq!(plan.path[3], PartyId(6));
        let ld = (c.mixing_epochs() * 2) as usize;
        for (i, n) in plan.nonces[..ld].iter().enumerate() {
            if i != 3 {
                assert!(n.is_empty(), "nonce {i} not empty");
            }
        }
    }

    #[test]
    fn converted_segments_stay_inside_their_subnets() {
        let c = ButterflyConfig::new(8, 2).unwrap();
        let mut rng = seeded_rng(7);
        let d = 3u32;
        for _ in 0..50 {
            let base = base_plan(2, d, 8, &mut rng);
            let plan = convert_plan(&base, None, &c, 2, d, &mut rng).unwrap();
            for tau in 0..c.mixing_epochs() as usize {
                let hop = plan.path[tau * d as usize + d as usize - 1];
                let pair = c.subnet_of(hop, tau as u32 + 1);
                for p in &plan.path[tau * d as usize..(tau + 1) * d as usize] {
                    assert!(pair.contains(p));
                }
            }
        }
    }

    #[test]
    fn malformed_base_shape_is_rejected() {
        let c = ButterflyConfig::new(8, 1).unwrap();
        let mut rng = seeded_rng(8);
        let bad = RoutingPlan {
            message: Message::Empty,
            path: vec![PartyId(1), PartyId(2)],
            nonces: vec![Nonce(1)],
            origin: PartyId(1),
        };
        assert!(convert_plan(&bad, None, &c, 3, 2, &mut rng).is_err());
    }

    #[test]
    fn pibfly_params_derive_the_documented_quantities() {
        let tree = PitreeParams::new(16, 16, 0.25, 4, 4).unwrap();
        let p = PibflyParams::new(tree, 4).unwrap();
        // n = 5, L = 20, h = 3: 22 executable epochs, W = 0.75·4/23.
        assert_eq!(p.butterfly.stages(), 5);
        assert_eq!(p.butterfly.mixing_epochs(), 20);
        assert_eq!(p.total_epochs(), 22);
        assert!((p.expected_checkpoints() - 0.75 * 4.0 / 23.0).abs() < 1e-12);
        // W/3 ≈ 0.0435: missing 0 continues, missing 1 aborts.
        assert!(!p.diagnostic_aborts(0));
        assert!(p.diagnostic_aborts(1));
    }
}
