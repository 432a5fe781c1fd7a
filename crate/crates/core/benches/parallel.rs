//! Benchmarks of the data-parallel hot paths against single-threaded runs.
//!
//! With the default `parallel` feature the "single" groups pin a one-thread
//! rayon pool, approximating the sequential fallback without a rebuild; run
//! `cargo bench --no-default-features` to measure the true sequential build
//! (both groups then coincide).

use criterion::{criterion_group, criterion_main, Criterion};
use dynhedge::friction::FrictionParams;
use dynhedge::lift::{buyer_threshold_strategy, lift_and_simulate, SimConfig};
use dynhedge::model::{build_lattice, MarketParams};
use dynhedge::payoff::{evaluate_on_lattice, PayoffPair};
use dynhedge::solver::{solve, solve_root, Instance, SolverGrid};

fn canonical_instance(
    n: usize,
) -> (
    MarketParams,
    FrictionParams,
    PayoffPair,
    dynhedge::model::BinomialLattice,
    dynhedge::payoff::PayoffTables,
    SolverGrid,
) {
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let pay = PayoffPair::game_put(110.0, 2.0).unwrap();
    let lat = build_lattice(&mp, n);
    let tab = evaluate_on_lattice(&pay, &lat).unwrap();
    let grid = SolverGrid::default_for(&lat, &tab, fp, 5.0, 0.0, 201, 41, 5.0, 1.05).unwrap();
    (mp, fp, pay, lat, tab, grid)
}

#[cfg(feature = "parallel")]
fn run_single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn run_single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    f()
}

fn bench_solver(c: &mut Criterion) {
    let (_, fp, _, lat, tab, grid) = canonical_instance(16);
    let inst = Instance {
        lattice: &lat,
        tables: &tab,
        friction: fp,
        grid: &grid,
    };
    let mut group = c.benchmark_group("solve_root_n16");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| solve_root(&inst).unwrap()));
    group.bench_function("single", |b| {
        b.iter(|| run_single_threaded(|| solve_root(&inst).unwrap()))
    });
    group.finish();
}

fn bench_simulation(c: &mut Criterion) {
    let (mp, fp, pay, lat, tab, grid) = canonical_instance(8);
    let inst = Instance {
        lattice: &lat,
        tables: &tab,
        friction: fp,
        grid: &grid,
    };
    let solved = solve(&inst).unwrap();
    let sim = SimConfig {
        num_paths: 512,
        seed: 17,
        fine_steps: 2048,
        horizon_factor: 4.0,
        z0: 5.0,
        y0: 0.0,
    };
    let strategies = [
        buyer_threshold_strategy(0.0).unwrap(),
        buyer_threshold_strategy(1.0).unwrap(),
    ];
    let mut group = c.benchmark_group("simulate_512_paths");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| lift_and_simulate(&solved, &mp, fp, &pay, &sim, &strategies, false).unwrap())
    });
    group.bench_function("single", |b| {
        b.iter(|| {
            run_single_threaded(|| {
                lift_and_simulate(&solved, &mp, fp, &pay, &sim, &strategies, false).unwrap()
            })
        })
    });
    group.finish();
}

criterion_group!(benches, bench_solver, bench_simulation);
criterion_main!(benches);
