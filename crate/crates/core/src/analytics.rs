//! Run statistics, the equalizing experiment, and Monte-Carlo oracles for
//! the combinatorial facts the protocol analysis leans on.

use std::collections::HashMap;

use num_bigint::BigUint;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryConfig, AdversarySpec};
use crate::engine::{run, Protocol};
use crate::error::{Result, SimError};
use crate::input::SimpleInput;
use crate::rng::{seeded_rng, trial_seed};
use crate::transcript::{Event, OnionKind, RunTranscript};
use crate::types::PartyId;

/// Per-party transmission counts and the onion-cost statistic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostReport {
    /// out[i.index0()] = transmissions with sender i.
    pub out: Vec<u64>,
    /// Mean of out over honest parties.
    pub onion_cost: f64,
    /// Total transmissions per round, 1-based round = index + 1.
    pub per_round_totals: Vec<u64>,
    /// Largest number of protocol onions (merging + checkpoint) formed by
    /// any honest party.
    pub max_formed: u32,
    /// Whether max_formed ≤ 3χ.
    pub formed_bound_ok: bool,
}

/// Transmission accounting from a transcript. `chi` feeds the 3χ bound on
/// per-party formed onions.
pub fn onion_cost(t: &RunTranscript, chi: u32) -> CostReport {
    let n = t.n_parties as usize;
    let mut out = vec![0u64; n];
    let mut per_round_totals = vec![0u64; t.rounds as usize];
    for e in &t.events {
        if let Event::Transmission { round, sender, .. } = e {
            out[sender.index0()] += 1;
            per_round_totals[(*round - 1) as usize] += 1;
        }
    }
    let honest: Vec<usize> = (0..n)
        .filter(|&p| !t.corrupted.contains(&PartyId::from_index0(p)))
        .collect();
    let onion_cost = if honest.is_empty() {
        0.0
    } else {
        honest.iter().map(|&p| out[p] as f64).sum::<f64>() / honest.len() as f64
    };
    let mut formed = vec![0u32; n];
    for ev in &t.evolutions {
        if matches!(ev.kind, OnionKind::Merging | OnionKind::Checkpoint) {
            formed[ev.origin.index0()] += 1;
        }
    }
    let max_formed = honest.iter().map(|&p| formed[p]).max().unwrap_or(0);
    CostReport {
        out,
        onion_cost,
        per_round_totals,
        max_formed,
        formed_bound_ok: max_formed <= 3 * chi,
    }
}

/// Number of onions created by `creator`, actually received by `relay` as
/// an intermediary, whose final destination is `dest`.
pub fn hops_count(t: &RunTranscript, creator: PartyId, relay: PartyId, dest: PartyId) -> u64 {
    let mut count = 0;
    for ev in &t.evolutions {
        if ev.origin != creator || ev.recipient() != dest {
            continue;
        }
        for (i, p) in ev.path[..ev.path.len() - 1].iter().enumerate() {
            if *p == relay && ev.position_received(i + 1) {
                count += 1;
            }
        }
    }
    count
}

/// Monte-Carlo test of the "i cannot affect j's recipient" predicate:
/// mean over trials of the number of j's onions relayed through i on their
/// way to j's recipient; the predicate holds when the mean is ≤ 1/2.
pub fn cannot_affect_check(
    protocol: &Protocol,
    input: &SimpleInput,
    spec: &AdversarySpec,
    kappa: f64,
    base_seed: u64,
    i: PartyId,
    j: PartyId,
    trials: u32,
) -> Result<(f64, bool)> {
    if trials < 1 {
        return Err(SimError::config("need at least one trial"));
    }
    let dest = input.recipient(j);
    let mut total = 0u64;
    for t in 0..trials {
        let seed = trial_seed(base_seed, t as u64);
        let cfg = AdversaryConfig {
            spec: spec.clone(),
            kappa,
            seed,
        };
        let transcript = run(protocol, input, &cfg, seed)?;
        total += hops_count(&transcript, j, i, dest);
    }
    let mean = total as f64 / trials as f64;
    Ok((mean, mean <= 0.5))
}

/// Distribution comparison for the lower-bound argument.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EqualizingReport {
    pub trials: u32,
    /// The watched coordinate: j's recipient under σ0.
    pub r: PartyId,
    /// Total-variation distance between the received-count-vector
    /// distributions under σ0 and σ1.
    pub tv_estimate: f64,
    /// Bootstrap 95% half-width of the TV estimate.
    pub tv_radius: f64,
    pub vr_mean_sigma0: f64,
    pub vr_mean_sigma1: f64,
    pub sigma0_isolated_runs: u32,
    pub sigma1_isolated_runs: u32,
    /// Among isolated σ1 runs, fraction with v_r = 0.
    pub sigma1_isolated_vr_zero_fraction: f64,
    /// Among isolated σ0 runs, fraction with v_r > 0.
    pub sigma0_isolated_vr_positive_fraction: f64,
}

fn tv_distance(a: &[Vec<u32>], b: &[Vec<u32>]) -> f64 {
    let mut counts: HashMap<&[u32], (u32, u32)> = HashMap::new();
    for v in a {
        counts.entry(v.as_slice()).or_default().0 += 1;
    }
    for v in b {
        counts.entry(v.as_slice()).or_default().1 += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    0.5 * counts
        .values()
        .map(|(ca, cb)| (*ca as f64 / na - *cb as f64 / nb).abs())
        .sum::<f64>()
}

/// Run `trials` paired executions of σ0 and σ1 = swap(σ0, i, j) and
/// compare the adversary-visible received-count vectors.
#[allow(clippy::too_many_arguments)]
pub fn equalizing_experiment(
    protocol: &Protocol,
    spec: &AdversarySpec,
    kappa: f64,
    sigma0: &SimpleInput,
    i: PartyId,
    j: PartyId,
    base_seed: u64,
    trials: u32,
) -> Result<EqualizingReport> {
    if trials < 100 {
        return Err(SimError::config("equalizing experiment needs ≥ 100 trials"));
    }
    let sigma1 = sigma0.swap(i, j)?;
    let r = sigma0.recipient(j);
    let mut v0: Vec<Vec<u32>> = Vec::with_capacity(trials as usize);
    let mut v1: Vec<Vec<u32>> = Vec::with_capacity(trials as usize);
    let mut iso0: Vec<bool> = Vec::with_capacity(trials as usize);
    let mut iso1: Vec<bool> = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let seed = trial_seed(base_seed, t as u64);
        let cfg = AdversaryConfig {
            spec: spec.clone(),
            kappa,
            seed,
        };
        let t0 = run(protocol, sigma0, &cfg, seed)?;
        let t1 = run(protocol, &sigma1, &cfg, seed)?;
        iso0.push(t0.strategy.isolated.unwrap_or(false));
        iso1.push(t1.strategy.isolated.unwrap_or(false));
        v0.push(t0.received_data);
        v1.push(t1.received_data);
    }
    let tv_estimate = tv_distance(&v0, &v1);
    // Bootstrap the TV estimate over paired trial indices.
    let mut boot_rng = seeded_rng(base_seed ^ 0x626f_6f74);
    let b = 200;
    let mut boots = Vec::with_capacity(b);
    for _ in 0..b {
        let idx: Vec<usize> = (0..trials as usize)
            .map(|_| boot_rng.random_range(0..trials as usize))
            .collect();
        let sa: Vec<Vec<u32>> = idx.iter().map(|&k| v0[k].clone()).collect();
        let sb: Vec<Vec<u32>> = idx.iter().map(|&k| v1[k].clone()).collect();
        boots.push(tv_distance(&sa, &sb));
    }
    boots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| boots[((p * (b - 1) as f64).round() as usize).min(b - 1)];
    let tv_radius = (q(0.975) - q(0.025)) / 2.0;

    let vr = |vs: &[Vec<u32>]| -> Vec<u32> { vs.iter().map(|v| v[r.index0()]).collect() };
    let (vr0, vr1) = (vr(&v0), vr(&v1));
    let mean = |v: &[u32]| v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    let iso_count = |iso: &[bool]| iso.iter().filter(|&&b| b).count() as u32;
    let sigma0_isolated_runs = iso_count(&iso0);
    let sigma1_isolated_runs = iso_count(&iso1);
    let frac = |pairs: Vec<(bool, bool)>| {
        let total = pairs.iter().filter(|(iso, _)| *iso).count();
        if total == 0 {
            0.0
        } else {
            pairs.iter().filter(|(iso, hit)| *iso && *hit).count() as f64 / total as f64
        }
    };
    let sigma1_isolated_vr_zero_fraction = frac(
        iso1.iter()
            .zip(&vr1)
            .map(|(&i, &v)| (i, v == 0))
            .collect(),
    );
    let sigma0_isolated_vr_positive_fraction = frac(
        iso0.iter()
            .zip(&vr0)
            .map(|(&i, &v)| (i, v > 0))
            .collect(),
    );
    Ok(EqualizingReport {
        trials,
        r,
        tv_estimate,
        tv_radius,
        vr_mean_sigma0: mean(&vr0),
        vr_mean_sigma1: mean(&vr1),
        sigma0_isolated_runs,
        sigma1_isolated_runs,
        sigma1_isolated_vr_zero_fraction,
        sigma0_isolated_vr_positive_fraction,
    })
}

/// Transcript-side audit of the isolated event: every transmission sent
/// by `target` has a matching adversary drop in the same round.
pub fn isolated_from_events(t: &RunTranscript, target: PartyId) -> bool {
    let mut drops: HashMap<(u32, crate::onion::OnionHandle), ()> = HashMap::new();
    for e in &t.events {
        if let Event::AdversaryDrop { round, handle, .. } = e {
            drops.insert((*round, *handle), ());
        }
    }
    t.events.iter().all(|e| match e {
        Event::Transmission {
            round,
            sender,
            handle,
            ..
        } if *sender == target => drops.contains_key(&(*round, *handle)),
        _ => true,
    })
}

/// Exact vs sampled probability that a uniform `sample_size` draw (without
/// replacement) from N parties lands entirely inside the ⌊κN⌋ corrupted
/// ones.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsolationReport {
    pub exact: f64,
    pub empirical: f64,
    pub relative_error: f64,
    /// The κ^k approximation reported alongside the exact quotient.
    pub kappa_power: f64,
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let mut num = BigUint::from(1u32);
    let mut den = BigUint::from(1u32);
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    num / den
}

fn big_ratio(num: BigUint, den: BigUint) -> f64 {
    // Scale to keep precision for small ratios.
    let scale = BigUint::from(1u128 << 63);
    let scaled = num * &scale / den;
    let mut value = 0.0f64;
    for d in scaled.to_u64_digits().iter().rev() {
        value = value * 2f64.powi(64) + *d as f64;
    }
    value / 9.223_372_036_854_776e18
}

pub fn isolation_probability(
    n: u32,
    kappa: f64,
    sample_size: u32,
    trials: u32,
    seed: u64,
) -> Result<IsolationReport> {
    if sample_size > n {
        return Err(SimError::config("sample size exceeds the party count"));
    }
    let green = (kappa * n as f64).floor() as u64;
    let exact = if sample_size == 0 {
        1.0
    } else if sample_size as u64 > green {
        0.0
    } else {
        big_ratio(
            binomial(green, sample_size as u64),
            binomial(n as u64, sample_size as u64),
        )
    };
    let mut rng = seeded_rng(seed);
    let mut hits = 0u32;
    for _ in 0..trials {
        let sample = index::sample(&mut rng, n as usize, sample_size as usize);
        if sample.iter().all(|s| (s as u64) < green) {
            hits += 1;
        }
    }
    let empirical = hits as f64 / trials.max(1) as f64;
    let relative_error = if exact > 0.0 {
        (empirical - exact).abs() / exact
    } else {
        empirical
    };
    Ok(IsolationReport {
        exact,
        empirical,
        relative_error,
        kappa_power: kappa.powi(sample_size as i32),
    })
}

/// Expected dropped-singleton fraction per epoch: ζ_1 = 0 and
/// ζ_ℓ = Σ_{τ<ℓ} (1−ζ_τ)·α_τ, clamped at 1. Output has one entry per
/// epoch 1..=len(α)+1.
pub fn zeta_recursion(alpha_schedule: &[f64]) -> Vec<f64> {
    let mut zeta = vec![0.0f64];
    for l in 1..=alpha_schedule.len() {
        let z: f64 = (0..l).map(|t| (1.0 - zeta[t]) * alpha_schedule[t]).sum();
        zeta.push(z.min(1.0));
    }
    zeta
}

/// Paired-balls expectation: draw a 2v-subset of u pairs (2u balls); W
/// counts balls whose partner is also drawn. Formula: 2v(2v−1)/(2u−1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairsReport {
    pub formula: f64,
    pub empirical: f64,
    /// Exact (ΣW, #subsets) from exhaustive enumeration, small u only.
    pub exhaustive: Option<(u64, u64)>,
}

/// Exhaustive (ΣW over all 2v-subsets, number of subsets); u ≤ 12.
pub fn pairs_exhaustive(u: u32, v: u32) -> Result<(u64, u64)> {
    if v > u || v == 0 {
        return Err(SimError::config("need 1 ≤ v ≤ u"));
    }
    if u > 12 {
        return Err(SimError::config("exhaustive enumeration is limited to u ≤ 12"));
    }
    let balls = 2 * u;
    let take = 2 * v;
    let (mut total_w, mut subsets) = (0u64, 0u64);
    for mask in 0u32..(1u32 << balls) {
        if mask.count_ones() != take {
            continue;
        }
        subsets += 1;
        for pair in 0..u {
            let both = 0b11u32 << (2 * pair);
            if mask & both == both {
                total_w += 2;
            }
        }
    }
    Ok((total_w, subsets))
}

pub fn pairs_expectation_oracle(u: u32, v: u32, trials: u32, seed: u64) -> Result<PairsReport> {
    if v > u || v == 0 {
        return Err(SimError::config("need 1 ≤ v ≤ u"));
    }
    let formula = 2.0 * v as f64 * (2.0 * v as f64 - 1.0) / (2.0 * u as f64 - 1.0);
    let mut rng = seeded_rng(seed);
    let mut total = 0u64;
    for _ in 0..trials {
        let sample = index::sample(&mut rng, 2 * u as usize, 2 * v as usize);
        let mut selected = vec![false; 2 * u as usize];
        for s in sample {
            selected[s] = true;
        }
        for pair in 0..u as usize {
            if selected[2 * pair] && selected[2 * pair + 1] {
                total += 2;
            }
        }
    }
    let empirical = total as f64 / trials.max(1) as f64;
    let exhaustive = if u <= 12 {
        Some(pairs_exhaustive(u, v)?)
    } else {
        None
    };
    Ok(PairsReport {
        formula,
        empirical,
        exhaustive,
    })
}

/// Balls-into-bins occupancy check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallsBinsReport {
    /// Monte-Carlo mean number of nonempty bins.
    pub mean_nonempty: f64,
    /// Closed form N'·(1−(1−1/N')^X).
    pub closed_form: f64,
    /// Fraction of trials with nonempty bins ≥ X/logλ.
    pub success_fraction: f64,
    /// Whether X ≤ (N'+2)/2, the regime the occupancy claim targets.
    pub in_regime: bool,
}

pub fn balls_bins_oracle(
    x: u32,
    nprime: u32,
    log_lambda: f64,
    trials: u32,
    seed: u64,
) -> Result<BallsBinsReport> {
    if nprime == 0 {
        return Err(SimError::config("need at least one bin"));
    }
    let mut rng = seeded_rng(seed);
    let threshold = x as f64 / log_lambda;
    let mut nonempty_total = 0u64;
    let mut successes = 0u32;
    let mut occupied = vec![false; nprime as usize];
    for _ in 0..trials {
        occupied.iter_mut().for_each(|b| *b = false);
        for _ in 0..x {
            occupied[rng.random_range(0..nprime as usize)] = true;
        }
        let nonempty = occupied.iter().filter(|&&b| b).count();
        nonempty_total += nonempty as u64;
        if nonempty as f64 >= threshold {
            successes += 1;
        }
    }
    let closed_form =
        nprime as f64 * (1.0 - (1.0 - 1.0 / nprime as f64).powi(x as i32));
    Ok(BallsBinsReport {
        mean_nonempty: nonempty_total as f64 / trials.max(1) as f64,
        closed_form,
        success_fraction: successes as f64 / trials.max(1) as f64,
        in_regime: x <= (nprime + 2) / 2,
    })
}

/// V^i_ℓ: live merging-onion evolutions per origin after each diagnostic
/// round ℓ·d. Indexed [epoch−1][party.index0()].
pub fn survival_fractions(t: &RunTranscript, d: u32, total_epochs: u32) -> Vec<Vec<u32>> {
    let mut v = vec![vec![0u32; t.n_parties as usize]; total_epochs as usize];
    for ev in &t.evolutions {
        if ev.kind != OnionKind::Merging {
            continue;
        }
        for epoch in 1..=total_epochs {
            if ev.live_after(epoch * d) {
                v[(epoch - 1) as usize][ev.origin.index0()] += 1;
            }
        }
    }
    v
}
