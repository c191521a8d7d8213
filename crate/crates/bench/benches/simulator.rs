//! Benchmarks for the hot paths: full protocol runs, onion forming, and
//! the Monte-Carlo oracles.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use orsim_core::adversary::{AdversaryConfig, AdversarySpec};
use orsim_core::analytics::{balls_bins_oracle, pairs_expectation_oracle};
use orsim_core::engine::{run, Protocol};
use orsim_core::input::SimpleInput;
use orsim_core::rng::seeded_rng;
use orsim_core::tree::{form_merging_plans, PitreeParams};
use orsim_core::types::{Message, PartyId};
use orsim_core::PibflyParams;

fn passive(seed: u64) -> AdversaryConfig {
    AdversaryConfig {
        spec: AdversarySpec::Passive,
        kappa: 0.25,
        seed,
    }
}

fn bench_runs(c: &mut Criterion) {
    let tree = PitreeParams::new(16, 16, 0.25, 4, 4).unwrap();
    let pibfly = Protocol::Pibfly(PibflyParams::new(tree, 4).unwrap());
    let pitree = Protocol::Pitree(PitreeParams::new(16, 16, 0.25, 4, 2).unwrap());
    let input = SimpleInput::random(16, 1);
    c.bench_function("pibfly_run_n16", |b| {
        b.iter(|| run(black_box(&pibfly), &input, &passive(1), 1).unwrap())
    });
    c.bench_function("pitree_run_n16", |b| {
        b.iter(|| run(black_box(&pitree), &input, &passive(1), 1).unwrap())
    });
    let oracle_cfg = AdversaryConfig {
        spec: AdversarySpec::PairDropping,
        kappa: 0.25,
        seed: 1,
    };
    c.bench_function("pibfly_run_n16_oracle_adversary", |b| {
        b.iter(|| run(black_box(&pibfly), &input, &oracle_cfg, 1).unwrap())
    });
}

fn bench_forming(c: &mut Criterion) {
    let params = PitreeParams::new(16, 16, 0.25, 16, 2).unwrap();
    c.bench_function("form_merging_plans_chi16", |b| {
        let mut rng = seeded_rng(2);
        b.iter(|| {
            form_merging_plans(
                PartyId(1),
                Message::Data(1),
                PartyId(2),
                black_box(&params),
                &mut rng,
            )
            .unwrap()
        })
    });
}

fn bench_oracles(c: &mut Criterion) {
    c.bench_function("pairs_oracle_u50_v20_1k", |b| {
        b.iter(|| pairs_expectation_oracle(50, 20, 1000, black_box(3)).unwrap())
    });
    c.bench_function("balls_bins_x100_n128_1k", |b| {
        b.iter(|| balls_bins_oracle(100, 128, 4.0, 1000, black_box(4)).unwrap())
    });
}

criterion_group!(benches, bench_runs, bench_forming, bench_oracles);
criterion_main!(benches);
