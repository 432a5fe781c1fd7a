use std::time::Instant;

use dynhedge::checks;
use dynhedge::experiments::{fit_rate, run_convergence, ConvergenceConfig, RateFit};
use dynhedge::friction::FrictionParams;
use dynhedge::lift::{buyer_threshold_strategy, lift_and_simulate, SimConfig};
use dynhedge::model::{build_lattice, MarketParams};
use dynhedge::payoff::{evaluate_on_lattice, PayoffPair};
use dynhedge::solver::{solve, Instance, SolverGrid};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "check32" => check32(),
        "frictionmono" => frictionmono(),
        "sim" => sim_calibration(),
        "conv" => conv(),
        "growth" => growth(),
        "vmatch" => vmatch_seeds(),
        "vmatch2" => vmatch_coupled(),
        _ => eprintln!("usage: calib [check32|frictionmono|sim|conv|growth]"),
    }
}

fn canonical() -> (MarketParams, FrictionParams, PayoffPair) {
    (
        MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap(),
        FrictionParams::new(0.5, 0.01).unwrap(),
        PayoffPair::game_put(100.0, 2.0).unwrap(),
    )
}

fn check32() {
    let (mp, fp, pay) = canonical();
    let t0 = Instant::now();
    let lat = build_lattice(&mp, 32);
    let tab = evaluate_on_lattice(&pay, &lat).unwrap();
    let grid = SolverGrid::default_for(&lat, &tab, fp, 5.0, 0.0, 201, 41, 5.0, 1.05)
        .unwrap()
        .with_query_cash(5.0)
        .unwrap();
    let inst = Instance { lattice: &lat, tables: &tab, friction: fp, grid: &grid };
    let solved = solve(&inst).unwrap();
    println!("solve n=32: {:?}", t0.elapsed());
    let t1 = Instant::now();
    let v = checks::run_surface_checks(&solved.surface, &solved.policy, &tab);
    println!("surface checks: {:?} violations={}", t1.elapsed(), v.len());
    for msg in v.iter().take(8) {
        println!("  {msg}");
    }
    // How many states are interp-free?
    let mut free = 0usize;
    let mut total = 0usize;
    for layer in &solved.policy.layers {
        for e in layer {
            total += 1;
            if e.interp_free {
                free += 1;
            }
        }
    }
    println!("interp-free states: {free}/{total}");
    println!("R_32(5,0) = {}", solved.surface.query(5.0, 0.0).unwrap());
}

fn frictionmono() {
    let (mp, _, pay) = canonical();
    let lat = build_lattice(&mp, 32);
    let tab = evaluate_on_lattice(&pay, &lat).unwrap();
    let deltas = [0.25, 0.5, 1.0];
    let mus = [0.005, 0.01, 0.02];
    // grid must bracket maxX for the largest friction. maxX independent of friction.
    let fp0 = FrictionParams::new(0.5, 0.01).unwrap();
    let grid = SolverGrid::default_for(&lat, &tab, fp0, 5.0, 0.0, 201, 41, 5.0, 1.05)
        .unwrap()
        .with_query_cash(5.0)
        .unwrap();
    let t0 = Instant::now();
    let v = checks::check_friction_monotonicity(&lat, &tab, &grid, &deltas, &mus, 1e-9).unwrap();
    println!("friction mono (y=0 states, tol 1e-9): {:?} violations={}", t0.elapsed(), v.len());
    for msg in v.iter().take(8) {
        println!("  {msg}");
    }
    // Also probe the full y range manually at tol 1e-9 and 1e-6.
    let mut risks = Vec::new();
    for &d in &deltas {
        for &m in &mus {
            let fp = FrictionParams::new(d, m).unwrap();
            let inst = Instance { lattice: &lat, tables: &tab, friction: fp, grid: &grid };
            let root = dynhedge::solver::solve_root(&inst).unwrap();
            risks.push(root.values.clone());
        }
    }
    let ny = grid.y.len();
    let nz = grid.z.len();
    let idx = |di: usize, mi: usize| di * mus.len() + mi;
    for tol in [1e-9, 1e-6, 1e-3] {
        let mut viol = 0usize;
        let mut worst: f64 = 0.0;
        for di in 0..3 {
            for mi in 0..3 {
                for yi in 0..ny {
                    for zi in 0..nz {
                        let a = risks[idx(di, mi)][yi * nz + zi];
                        if di + 1 < 3 {
                            let b = risks[idx(di + 1, mi)][yi * nz + zi];
                            if a > b + tol { viol += 1; worst = worst.max(a - b); }
                        }
                        if mi + 1 < 3 {
                            let b = risks[idx(di, mi + 1)][yi * nz + zi];
                            if a > b + tol { viol += 1; worst = worst.max(a - b); }
                        }
                    }
                }
            }
        }
        println!("all-y tol={tol:e}: violations={viol} worst_drop={worst:e}");
    }
}

fn sim_calibration() {
    // Nontrivial config: ITM put K=110 so cancellation is not free at z=5.
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let pay = PayoffPair::game_put(110.0, 2.0).unwrap();
    let n = 16;
    let lat = build_lattice(&mp, n);
    let tab = evaluate_on_lattice(&pay, &lat).unwrap();
    let grid = SolverGrid::default_for(&lat, &tab, fp, 5.0, 0.0, 201, 41, 5.0, 1.05)
        .unwrap()
        .with_query_cash(5.0)
        .unwrap();
    let inst = Instance { lattice: &lat, tables: &tab, friction: fp, grid: &grid };
    let solved = solve(&inst).unwrap();
    let r16 = solved.surface.query(5.0, 0.0).unwrap();
    println!("ITM R_16(5,0) = {r16}");

    let thresholds: Vec<f64> = vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, f64::INFINITY];
    let strategies: Vec<_> = thresholds
        .iter()
        .map(|&c| buyer_threshold_strategy(c).unwrap())
        .collect();
    for fine in [1 << 11, 1 << 12] {
        let sim = SimConfig {
            num_paths: 10_000,
            seed: 2024,
            fine_steps: fine,
            horizon_factor: 4.0,
            z0: 5.0,
            y0: 0.0,
        };
        let t0 = Instant::now();
        let (rep, _) = lift_and_simulate(&solved, &mp, fp, &pay, &sim, &strategies, false).unwrap();
        println!(
            "fine=2^{}: {:?} used={} incomplete={} violations={} worst={:.3e} vmatch={:.6e} growth={:.3}",
            fine.trailing_zeros(),
            t0.elapsed(),
            rep.paths_used,
            rep.incomplete_embeddings,
            rep.admissibility_violations,
            rep.worst_violation,
            rep.value_match_error,
            rep.growth_stat,
        );
        for s in &rep.per_strategy {
            println!(
                "   c={:>6}: mean={:.5} stderr={:.5}  (R+3se+0.05 = {:.5})",
                s.threshold,
                s.mean_shortfall,
                s.stderr,
                r16 + 3.0 * s.stderr + 0.05
            );
        }
    }
    // Canonical degenerate case: everything should be exactly zero.
    let (mpc, fpc, payc) = canonical();
    let latc = build_lattice(&mpc, n);
    let tabc = evaluate_on_lattice(&payc, &latc).unwrap();
    let gridc = SolverGrid::default_for(&latc, &tabc, fpc, 5.0, 0.0, 201, 41, 5.0, 1.05)
        .unwrap()
        .with_query_cash(5.0)
        .unwrap();
    let instc = Instance { lattice: &latc, tables: &tabc, friction: fpc, grid: &gridc };
    let solvedc = solve(&instc).unwrap();
    let simc = SimConfig {
        num_paths: 10_000,
        seed: 2024,
        fine_steps: 1 << 12,
        horizon_factor: 4.0,
        z0: 5.0,
        y0: 0.0,
    };
    let (repc, _) = lift_and_simulate(&solvedc, &mpc, fpc, &payc, &simc, &strategies, false).unwrap();
    println!(
        "canonical z=5: R={} vmatch={} violations={} max mean={:.3e}",
        solvedc.surface.query(5.0, 0.0).unwrap(),
        repc.value_match_error,
        repc.admissibility_violations,
        repc.per_strategy.iter().map(|s| s.mean_shortfall).fold(0.0f64, f64::max),
    );
}

fn conv() {
    for (label, strike, query_z) in [("canonical z=5", 100.0, 5.0), ("ITM K=110 z=5", 110.0, 5.0)] {
        let cfg = ConvergenceConfig {
            market: MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap(),
            friction: FrictionParams::new(0.5, 0.01).unwrap(),
            payoff: PayoffPair::game_put(strike, 2.0).unwrap(),
            query_z,
            query_y: 0.0,
            z_steps_base: 201,
            z_steps_cap: 801,
            y_points: 41,
            y_max_cap: 5.0,
            z_max_factor: 1.05,
        };
        let t0 = Instant::now();
        let rows = run_convergence(&cfg, &[8, 16, 32, 64]).unwrap();
        println!("{label}: {:?}", t0.elapsed());
        for r in &rows {
            println!(
                "  n={:3} risk={:.10} diff={:?} wall={}ms zpts={}",
                r.n, r.risk, r.diff_prev, r.wall_ms, r.z_points
            );
        }
        match fit_rate(&rows) {
            Ok(RateFit::Slope { slope, intercept }) => {
                println!("  slope={slope:.4} intercept={intercept:.4}")
            }
            Ok(RateFit::ExactConvergence) => println!("  exact convergence"),
            Err(e) => println!("  fit error: {e}"),
        }
        // x4 subsequence for the ITM case
        let rows4 = run_convergence(&cfg, &[8, 32, 128]).unwrap();
        println!("  x4 subsequence:");
        for r in &rows4 {
            println!(
                "    n={:3} risk={:.10} diff={:?} wall={}ms zpts={}",
                r.n, r.risk, r.diff_prev, r.wall_ms, r.z_points
            );
        }
    }
}

fn growth() {
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let pay = PayoffPair::game_put(110.0, 2.0).unwrap();
    let (z0, y0) = (5.0, 0.0);
    for n in [8usize, 16, 32] {
        let lat = build_lattice(&mp, n);
        let tab = evaluate_on_lattice(&pay, &lat).unwrap();
        let grid = SolverGrid::default_for(&lat, &tab, fp, z0, y0, 201, 41, 5.0, 1.05)
            .unwrap()
            .with_query_cash(z0)
            .unwrap();
        let inst = Instance { lattice: &lat, tables: &tab, friction: fp, grid: &grid };
        let solved = solve(&inst).unwrap();
        let sim = SimConfig {
            num_paths: 2_000,
            seed: 99,
            fine_steps: 1 << 12,
            horizon_factor: 4.0,
            z0,
            y0,
        };
        let strategies = [buyer_threshold_strategy(f64::INFINITY).unwrap()];
        let (rep, _) = lift_and_simulate(&solved, &mp, fp, &pay, &sim, &strategies, false).unwrap();
        let c_tilde = rep.growth_stat / (1.0 + z0 * z0 + y0 * y0);
        println!(
            "n={n}: growth_stat={:.4} C~={c_tilde:.4} violations={}",
            rep.growth_stat, rep.admissibility_violations
        );
    }
}

#[allow(dead_code)]
fn vmatch_seeds() {
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let pay = PayoffPair::game_put(110.0, 2.0).unwrap();
    let lat = build_lattice(&mp, 16);
    let tab = evaluate_on_lattice(&pay, &lat).unwrap();
    let grid = SolverGrid::default_for(&lat, &tab, fp, 5.0, 0.0, 201, 41, 5.0, 1.05)
        .unwrap()
        .with_query_cash(5.0)
        .unwrap();
    let inst = Instance { lattice: &lat, tables: &tab, friction: fp, grid: &grid };
    let solved = solve(&inst).unwrap();
    let strategies = [buyer_threshold_strategy(f64::INFINITY).unwrap()];
    for seed in [1u64, 7, 42, 2024, 31337] {
        let mut errs = Vec::new();
        for fine in [1 << 11, 1 << 12] {
            let sim = SimConfig { num_paths: 10_000, seed, fine_steps: fine, horizon_factor: 4.0, z0: 5.0, y0: 0.0 };
            let (rep, _) = lift_and_simulate(&solved, &mp, fp, &pay, &sim, &strategies, false).unwrap();
            errs.push(rep.value_match_error);
        }
        println!("seed={seed}: 2^11={:.5} 2^12={:.5} ratio={:.4}", errs[0], errs[1], errs[1] / errs[0]);
    }
}

#[allow(dead_code)]
fn vmatch_coupled() {
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let pay = PayoffPair::game_put(110.0, 2.0).unwrap();
    let lat = build_lattice(&mp, 16);
    let tab = evaluate_on_lattice(&pay, &lat).unwrap();
    let grid = SolverGrid::default_for(&lat, &tab, fp, 5.0, 0.0, 201, 41, 5.0, 1.05)
        .unwrap()
        .with_query_cash(5.0)
        .unwrap();
    let inst = Instance { lattice: &lat, tables: &tab, friction: fp, grid: &grid };
    let solved = solve(&inst).unwrap();
    for seed in [1u64, 7, 42, 2024, 31337] {
        let sim = SimConfig { num_paths: 10_000, seed, fine_steps: 1 << 12, horizon_factor: 4.0, z0: 5.0, y0: 0.0 };
        let (c, f) = dynhedge::lift::value_match_refinement(&solved, &mp, fp, &pay, &sim).unwrap();
        println!("seed={seed}: coarse={c:.5} fine={f:.5} ratio={:.4}", f / c);
    }
}
