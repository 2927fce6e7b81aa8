use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use infobargain::limit::{delta_sweep_with, halving_schedule, Quantity};
use infobargain::sim::estimate_values_with;
use infobargain::verify::verify_equilibrium_with;
use infobargain::*;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn lattice(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_market");
    for nb in [8, 11] {
        let cfg = MarketConfig::from_discount(nb, 1, 1.0, 0.5, 0.95).unwrap();
        let policy = TradingPolicy::immediate(&cfg);
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, nb), &nb, |b, _| {
                b.iter(|| solve_market_with(black_box(&cfg), &policy, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn verification(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify_equilibrium");
    let cfg = MarketConfig::from_discount(9, 1, 1.0, 0.5, 0.95).unwrap();
    let policy = TradingPolicy::designated_first_buyer(&cfg, AgentId(1)).unwrap();
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| verify_equilibrium_with(black_box(&cfg), &policy, 1e-9, exec).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_values");
    g.sample_size(20);
    let cfg = MarketConfig::from_discount(4, 1, 1.0, 0.5, 0.95).unwrap();
    let sol = solve_market(&cfg, &TradingPolicy::immediate(&cfg)).unwrap();
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| estimate_values_with(&sol, cfg.initial_state(), 20_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("delta_sweep");
    g.sample_size(20);
    let cfg = MarketConfig::new(6, 1, 1.0, 0.5, 1.0, 0.5).unwrap();
    let policy = AnyPolicy::from_name(&cfg, "first-buyer:1").unwrap();
    let first = Quantity::Price(
        TradeOpportunity::new(&cfg, AgentId(0), AgentId(1), cfg.initial_state()).unwrap(),
    );
    let schedule = halving_schedule(0.5, 15);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| delta_sweep_with(&cfg, &policy, &[first], &schedule, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, lattice, verification, monte_carlo, sweep);
criterion_main!(benches);
