//! Tree-protocol onion forming: checkpoint data generation, checkpoint
//! onion plans, and the suffix-addressed merge tree behind merging onions.
//!
//! Every sender forms χ = 2^(h−1) merging onions for its one message; their
//! routes coincide pairwise at merge-tree nodes so equal-nonce collisions
//! reduce them back to a single delivery. Checkpoint onions are dummies
//! whose layer at one diagnostic round reveals a PRF-derived nonce that a
//! designated verifier can tally.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::keys::KeyMaterial;
use crate::onion::RoutingPlan;
use crate::types::{Message, Nonce, PartyId};

/// A checkpoint agreement: at diagnostic epoch `epoch`, the owner's
/// checkpoint onion reveals `checkpoint` while passing through `verifier`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CheckpointDatum {
    pub epoch: u32,
    pub verifier: PartyId,
    pub checkpoint: Nonce,
}

/// Tree-protocol tunables. `chi` must be a power of two; `h = log2(chi)+1`
/// epochs of `d` rounds each.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PitreeParams {
    pub n_parties: u32,
    pub lambda: u32,
    /// Corruption bound in [0, 0.5).
    pub kappa: f64,
    /// Merging onions per message; a power of two.
    pub chi: u32,
    /// Rounds per epoch.
    pub d: u32,
    /// Abort threshold on missing checkpoints per diagnostic.
    pub threshold_t: f64,
    /// Per-(epoch, peer) checkpoint inclusion probability.
    pub ckpt_freq: f64,
}

impl PitreeParams {
    pub fn new(n_parties: u32, lambda: u32, kappa: f64, chi: u32, d: u32) -> Result<Self> {
        let mut p = PitreeParams {
            n_parties,
            lambda,
            kappa,
            chi,
            d,
            threshold_t: 0.0,
            ckpt_freq: 0.0,
        };
        p.validate()?;
        p.ckpt_freq = chi as f64 / (n_parties as f64 * p.h() as f64);
        p.threshold_t = pitree_threshold(0.5, kappa, 0.5, lambda);
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.chi.is_power_of_two() {
            return Err(SimError::config(format!(
                "chi must be a power of two, got {}",
                self.chi
            )));
        }
        if self.d < 1 {
            return Err(SimError::config("d must be at least 1"));
        }
        if !(0.0..0.5).contains(&self.kappa) {
            return Err(SimError::config(format!(
                "kappa must be in [0, 0.5), got {}",
                self.kappa
            )));
        }
        if !(0.0..=1.0).contains(&self.ckpt_freq) {
            return Err(SimError::config("ckpt_freq must be a probability"));
        }
        Ok(())
    }

    /// Epochs: h = log2(chi) + 1.
    pub fn h(&self) -> u32 {
        self.chi.ilog2() + 1
    }
}

/// Abort threshold T = 2(1−δ)(1−κ)³κ·log2(λ)^(1+ε) for the tree protocol's
/// diagnostics.
pub fn pitree_threshold(delta: f64, kappa: f64, epsilon: f64, lambda: u32) -> f64 {
    2.0 * (1.0 - delta) * (1.0 - kappa).powi(3) * kappa * (lambda as f64).log2().powf(1.0 + epsilon)
}

/// Fixed-point Bernoulli: true iff `value` falls below `freq`·2^64.
pub fn bernoulli_from_prf(value: u64, freq: f64) -> bool {
    let threshold = (freq * 2f64.powi(64)) as u128;
    (value as u128) < threshold
}

fn prf_input(epoch: u32, tag: u8) -> [u8; 5] {
    let e = epoch.to_le_bytes();
    [e[0], e[1], e[2], e[3], tag]
}

/// Checkpoint data for one owner: for every (epoch, peer) pair the shared
/// PRF decides inclusion, and a second PRF call derives the checkpoint
/// nonce. Owners i and k deterministically agree on their shared data.
pub fn gen_ckpt_data(
    keys: &KeyMaterial,
    owner: PartyId,
    epochs: u32,
    freq: f64,
) -> Vec<CheckpointDatum> {
    let mut data = Vec::new();
    for epoch in 1..=epochs {
        for k in 1..=keys.n_parties() {
            let verifier = PartyId(k);
            let key = keys.shared_key(owner, verifier);
            if bernoulli_from_prf(keys.prf(key, &prf_input(epoch, 0)), freq) {
                data.push(CheckpointDatum {
                    epoch,
                    verifier,
                    checkpoint: keys.prf_nonce(key, &prf_input(epoch, 1)),
                });
            }
        }
    }
    data
}

fn random_party(n: u32, rng: &mut ChaCha8Rng) -> PartyId {
    PartyId(rng.random_range(1..=n))
}

fn random_nonce(rng: &mut ChaCha8Rng) -> Nonce {
    loop {
        let v: u64 = rng.random();
        if v != 0 {
            return Nonce(v);
        }
    }
}

/// Base checkpoint-onion plan: h·d uniform intermediaries plus a uniform
/// random recipient, dummy payload. When a datum is embedded, the party at
/// position `epoch`·d is the verifier and the nonce revealed there is the
/// checkpoint; everything else stays uniform.
pub fn form_checkpoint_plan(
    owner: PartyId,
    datum: Option<CheckpointDatum>,
    h: u32,
    d: u32,
    n_parties: u32,
    rng: &mut ChaCha8Rng,
) -> Result<RoutingPlan> {
    let hops = (h * d) as usize;
    if let Some(datum) = datum {
        if datum.epoch < 1 || datum.epoch > h {
            return Err(SimError::config(format!(
                "checkpoint epoch {} outside 1..={h}",
                datum.epoch
            )));
        }
    }
    let mut path: Vec<PartyId> = (0..hops).map(|_| random_party(n_parties, rng)).collect();
    let mut nonces: Vec<Nonce> = (0..hops).map(|_| random_nonce(rng)).collect();
    path.push(random_party(n_parties, rng));
    if let Some(datum) = datum {
        let pos = (datum.epoch * d) as usize;
        path[pos - 1] = datum.verifier;
        nonces[pos - 1] = datum.checkpoint;
    }
    Ok(RoutingPlan {
        message: Message::Empty,
        path,
        nonces,
        origin: owner,
    })
}

/// One node of the merge tree. Labels are read suffix-first: a leaf with
/// label bits b_1…b_{h−1} ascends through the nodes labelled by its proper
/// suffixes (drop the leading bit each level) down to the empty-label root.
#[derive(Clone, Debug)]
pub struct MergeTreeNode {
    pub label_len: u32,
    pub label_bits: u32,
    pub parties: Vec<PartyId>,
    pub nonces: Vec<Nonce>,
}

/// Suffix-addressed binary merge tree with 2^(h−1) leaves; every node
/// carries d parties and d non-empty nonces.
#[derive(Clone, Debug)]
pub struct MergeTree {
    pub h: u32,
    pub d: u32,
    nodes: Vec<MergeTreeNode>,
}

impl MergeTree {
    pub fn build(h: u32, d: u32, n_parties: u32, rng: &mut ChaCha8Rng) -> Self {
        let mut nodes = Vec::new();
        for len in 0..h {
            for bits in 0..(1u32 << len) {
                nodes.push(MergeTreeNode {
                    label_len: len,
                    label_bits: bits,
                    parties: (0..d).map(|_| random_party(n_parties, rng)).collect(),
                    nonces: (0..d).map(|_| random_nonce(rng)).collect(),
                });
            }
        }
        MergeTree { h, d, nodes }
    }

    pub fn leaf_count(&self) -> u32 {
        1 << (self.h - 1)
    }

    pub fn node(&self, label_len: u32, label_bits: u32) -> &MergeTreeNode {
        let offset = (1usize << label_len) - 1;
        &self.nodes[offset + label_bits as usize]
    }

    /// Node chain a leaf ascends through: the leaf itself, then each proper
    /// suffix (leading bit dropped), ending at the root.
    fn chain(&self, leaf: u32) -> impl Iterator<Item = &MergeTreeNode> {
        (0..self.h).rev().map(move |len| {
            let bits = leaf & ((1u32 << len) - 1);
            self.node(len, bits)
        })
    }

    /// Routing plan of one leaf onion: h segments of d parties (leaf to
    /// root) followed by the recipient; h·d nonces.
    pub fn leaf_plan(
        &self,
        leaf: u32,
        message: Message,
        recipient: PartyId,
        origin: PartyId,
    ) -> RoutingPlan {
        let mut path = Vec::with_capacity((self.h * self.d) as usize + 1);
        let mut nonces = Vec::with_capacity((self.h * self.d) as usize);
        for node in self.chain(leaf) {
            path.extend_from_slice(&node.parties);
            nonces.extend_from_slice(&node.nonces);
        }
        path.push(recipient);
        RoutingPlan {
            message,
            path,
            nonces,
            origin,
        }
    }

    /// 1-based path position where the onions of two distinct leaves first
    /// coincide: the start of their longest common suffix node's segment.
    pub fn merge_position(&self, leaf_a: u32, leaf_b: u32) -> Option<usize> {
        if leaf_a == leaf_b {
            return None;
        }
        // Longest common proper suffix length of the (h−1)-bit labels.
        let mut common = 0;
        for l in (0..self.h).rev() {
            let mask = if l == 0 { 0 } else { (1u32 << l) - 1 };
            if l < self.h - 1 && (leaf_a & mask) == (leaf_b & mask) {
                common = l;
                break;
            }
        }
        // Segments before the common node: (h−1) − common.
        let segments_before = (self.h - 1 - common) as usize;
        Some(segments_before * self.d as usize + 1)
    }
}

/// All χ merging-onion plans for one (message, recipient), plus the tree
/// they were built from (kept for invariant checks).
pub fn form_merging_plans(
    sender: PartyId,
    message: Message,
    recipient: PartyId,
    params: &PitreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<(MergeTree, Vec<RoutingPlan>)> {
    params.validate()?;
    let tree = MergeTree::build(params.h(), params.d, params.n_parties, rng);
    let plans = (0..params.chi)
        .map(|leaf| tree.leaf_plan(leaf, message, recipient, sender))
        .collect();
    Ok((tree, plans))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn bernoulli_extremes() {
        for v in [0u64, 1, u64::MAX / 2, u64::MAX] {
            assert!(bernoulli_from_prf(v, 1.0));
            assert!(!bernoulli_from_prf(v, 0.0));
        }
    }

    #[test]
    fn bernoulli_acceptance_rate_matches_frequency() {
        // 1e6 uniform values at freq 0.25 must accept at 0.25 ± 0.002.
        let mut rng = seeded_rng(13);
        let trials = 1_000_000u32;
        let mut hits = 0u32;
        for _ in 0..trials {
            if bernoulli_from_prf(rng.random(), 0.25) {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!((rate - 0.25).abs() < 0.002, "rate {rate}");
    }

    #[test]
    fn ckpt_data_is_symmetric_between_owners() {
        let keys = KeyMaterial::generate(16, 3).unwrap();
        for i in 1..=16u32 {
            let gi = gen_ckpt_data(&keys, PartyId(i), 3, 0.3);
            for k in 1..=16u32 {
                let gk = gen_ckpt_data(&keys, PartyId(k), 3, 0.3);
                for d in gi.iter().filter(|d| d.verifier == PartyId(k)) {
                    assert!(gk.contains(&CheckpointDatum {
                        epoch: d.epoch,
                        verifier: PartyId(i),
                        checkpoint: d.checkpoint,
                    }));
                }
            }
        }
    }

    #[test]
    fn zero_frequency_yields_no_data() {
        let keys = KeyMaterial::generate(8, 1).unwrap();
        assert!(gen_ckpt_data(&keys, PartyId(1), 4, 0.0).is_empty());
    }

    #[test]
    fn mean_ckpt_count_converges_to_chi() {
        // N=16, h=3, chi=4: mean of |gen| over 1e4 seeds within 4 ± 0.1.
        let (n, h, chi) = (16u32, 3u32, 4.0f64);
        let freq = chi / (n as f64 * h as f64);
        let seeds = 10_000u64;
        let mut total = 0usize;
        for seed in 0..seeds {
            let keys = KeyMaterial::generate(n, seed).unwrap();
            total += gen_ckpt_data(&keys, PartyId(1), h, freq).len();
        }
        let mean = total as f64 / seeds as f64;
        assert!((mean - chi).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn checkpoint_plan_embeds_verifier_and_nonce() {
        // h=2, d=3, epoch 1: path length 7, position 3 = verifier, nonce 3 = c.
        let mut rng = seeded_rng(4);
        let datum = CheckpointDatum {
            epoch: 1,
            verifier: PartyId(9),
            checkpoint: Nonce(0xabcd),
        };
        let plan = form_checkpoint_plan(PartyId(1), Some(datum), 2, 3, 16, &mut rng).unwrap();
        assert_eq!(plan.path.len(), 7);
        assert_eq!(plan.nonces.len(), 6);
        assert_eq!(plan.path[2], PartyId(9));
        assert_eq!(plan.nonces[2], Nonce(0xabcd));
        assert_eq!(plan.message, Message::Empty);
    }

    #[test]
    fn checkpoint_epoch_out_of_range_is_rejected() {
        let mut rng = seeded_rng(4);
        let datum = CheckpointDatum {
            epoch: 3,
            verifier: PartyId(9),
            checkpoint: Nonce(1),
        };
        assert!(form_checkpoint_plan(PartyId(1), Some(datum), 2, 3, 16, &mut rng).is_err());
    }

    #[test]
    fn checkpoint_plan_first_position_is_uniform() {
        // 1e4 onions: each party appears at position 1 with freq 1/N ± 3σ.
        let n = 16u32;
        let trials = 10_000usize;
        let mut counts = vec![0usize; n as usize];
        let mut rng = seeded_rng(77);
        for _ in 0..trials {
            let plan = form_checkpoint_plan(PartyId(1), None, 2, 2, n, &mut rng).unwrap();
            counts[plan.path[0].index0()] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let expect = trials as f64 * p;
            assert!(
                (c as f64 - expect).abs() <= 3.0 * sigma,
                "party {} count {c} vs {expect}",
                i + 1
            );
        }
    }

    #[test]
    fn chi_two_onions_share_the_root_segment() {
        // chi=2, h=2, d=2: both paths have length 5 and identical last-d
        // parties and nonces.
        let params = PitreeParams::new(16, 16, 0.25, 2, 2).unwrap();
        let mut rng = seeded_rng(5);
        let (_, plans) =
            form_merging_plans(PartyId(1), Message::Data(1), PartyId(7), &params, &mut rng)
                .unwrap();
        assert_eq!(plans.len(), 2);
        for p in &plans {
            assert_eq!(p.path.len(), 5);
        }
        assert_eq!(plans[0].path[2..], plans[1].path[2..]);
        assert_eq!(plans[0].nonces[2..], plans[1].nonces[2..]);
        assert_ne!(plans[0].path[..2], plans[1].path[..2]);
    }

    #[test]
    fn sibling_leaves_first_coincide_after_their_own_segment() {
        // chi=4, h=3: leaves 0B and 1B (equal low bits) meet at position d+1.
        let params = PitreeParams::new(16, 16, 0.25, 4, 2).unwrap();
        let mut rng = seeded_rng(6);
        let (tree, plans) =
            form_merging_plans(PartyId(1), Message::Data(1), PartyId(7), &params, &mut rng)
                .unwrap();
        let d = params.d as usize;
        for b in 0..2u32 {
            let (a, bb) = (b, b | 0b10);
            assert_eq!(tree.merge_position(a, bb), Some(d + 1));
            let (pa, pb) = (&plans[a as usize], &plans[bb as usize]);
            assert_ne!(pa.path[..d], pb.path[..d]);
            assert_eq!(pa.path[d..], pb.path[d..]);
            assert_eq!(pa.nonces[d..], pb.nonces[d..]);
        }
        // Leaves differing in the low bit only meet at the root segment.
        assert_eq!(tree.merge_position(0, 1), Some(2 * d + 1));
    }

    #[test]
    fn degenerate_single_onion_tree() {
        // chi=1, h=1: one onion, d intermediaries plus the recipient.
        let params = PitreeParams::new(8, 16, 0.25, 1, 3).unwrap();
        let mut rng = seeded_rng(7);
        let (_, plans) =
            form_merging_plans(PartyId(2), Message::Data(2), PartyId(5), &params, &mut rng)
                .unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].path.len(), 4);
        assert_eq!(plans[0].recipient(), PartyId(5));
    }

    #[test]
    fn tree_nonces_are_never_empty() {
        let mut rng = seeded_rng(8);
        let tree = MergeTree::build(4, 3, 16, &mut rng);
        for len in 0..4 {
            for bits in 0..(1u32 << len) {
                for n in &tree.node(len, bits).nonces {
                    assert!(!n.is_empty());
                }
            }
        }
    }

    #[test]
    fn chi_must_be_a_power_of_two() {
        assert!(PitreeParams::new(16, 16, 0.25, 3, 2).is_err());
    }

    #[test]
    fn threshold_formula_matches_hand_evaluation() {
        // 2(1−δ)(1−κ)³κ·log2(λ)^(1+ε) at δ=0.5, κ=0.25, ε=0.5, λ=16:
        // 2·0.5·0.421875·0.25·4^1.5 = 0.10546875·8 = 0.84375.
        let t = pitree_threshold(0.5, 0.25, 0.5, 16);
        assert!((t - 0.84375).abs() < 1e-12, "t = {t}");
    }
}
