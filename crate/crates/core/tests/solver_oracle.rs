//! Solver-against-oracle cross checks on tiny trees.

use dynhedge::friction::FrictionParams;
use dynhedge::model::{build_lattice, BinomialLattice, MarketParams};
use dynhedge::oracle::{brute_force_risk, brute_force_risk_with, OracleOptions, TinyInstance};
use dynhedge::payoff::{evaluate_on_lattice, PayoffPair, PayoffTables};
use dynhedge::solver::{solve, Instance, SolverGrid};

fn canonical(n: usize) -> (BinomialLattice, PayoffTables, FrictionParams, SolverGrid) {
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let lat = build_lattice(&mp, n);
    let tab = evaluate_on_lattice(&PayoffPair::game_put(100.0, 2.0).unwrap(), &lat).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let z: Vec<f64> = (0..21).map(|i| i as f64 * 1.5).collect();
    let grid = SolverGrid::new(z, vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
    (lat, tab, fp, grid)
}

#[test]
fn solver_matches_oracle_on_every_root_state() {
    for n in 1..=3usize {
        let (lat, tab, fp, grid) = canonical(n);
        let inst = Instance {
            lattice: &lat,
            tables: &tab,
            friction: fp,
            grid: &grid,
        };
        let solved = solve(&inst).unwrap();
        let tiny = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        let mut worst = 0.0f64;
        for (yi, &y) in grid.y.iter().enumerate() {
            for (zi, &z) in grid.z.iter().enumerate() {
                let dp = solved.surface.value(0, 0, yi, zi);
                let exact = brute_force_risk(&tiny, z, y).unwrap();
                worst = worst.max((dp - exact).abs());
            }
        }
        assert!(worst <= 1e-12, "n = {n}: max |solver - oracle| = {worst:e}");
    }
}

#[test]
fn solver_matches_oracle_on_lookback_path_tree() {
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    for n in 1..=3usize {
        let lat = build_lattice(&mp, n);
        let tab =
            evaluate_on_lattice(&PayoffPair::lookback_game_put(100.0, 2.0).unwrap(), &lat)
                .unwrap();
        let z: Vec<f64> = (0..21).map(|i| i as f64 * 1.5).collect();
        let grid = SolverGrid::new(z, vec![-1.0, 0.0, 1.0]).unwrap();
        let inst = Instance {
            lattice: &lat,
            tables: &tab,
            friction: fp,
            grid: &grid,
        };
        let solved = solve(&inst).unwrap();
        let tiny = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        for (yi, &y) in grid.y.iter().enumerate() {
            for (zi, &z) in grid.z.iter().enumerate() {
                let dp = solved.surface.value(0, 0, yi, zi);
                let exact = brute_force_risk(&tiny, z, y).unwrap();
                assert!(
                    (dp - exact).abs() <= 1e-12,
                    "lookback n={n} z={z} y={y}: {dp} vs {exact}"
                );
            }
        }
    }
}

#[test]
fn no_trade_state_matches_trade_free_dynkin_recursion() {
    // z = 0.3 < delta with a flat position: no trade is ever feasible, so the
    // DP restricted to that cash level is a plain Dynkin recursion. The test
    // recursion is written independently of the solver.
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let z_probe = 0.3;
    for n in [1usize, 2, 3, 8, 16] {
        let lat = build_lattice(&mp, n);
        let tab = evaluate_on_lattice(&PayoffPair::game_put(100.0, 2.0).unwrap(), &lat).unwrap();
        let mut z: Vec<f64> = (0..21).map(|i| i as f64 * 1.5).collect();
        let z_max = tab.max_x() * 1.05;
        if z[20] < z_max {
            // Deep trees have larger payoffs; stretch the grid but keep 0.3.
            z = (0..21).map(|i| i as f64 * (z_max / 20.0)).collect();
        }
        z.insert(1, z_probe);
        let grid = SolverGrid::new(z, vec![-1.0, 0.0, 1.0]).unwrap();
        let inst = Instance {
            lattice: &lat,
            tables: &tab,
            friction: fp,
            grid: &grid,
        };
        let solved = solve(&inst).unwrap();

        let t = tab.tables();
        let p = lat.up_prob;
        // Trade-free Dynkin recursion at fixed cash.
        let mut layer: Vec<f64> = (0..=n).map(|j| (t.y[n][j] - z_probe).max(0.0)).collect();
        for k in (0..n).rev() {
            let mut next = Vec::with_capacity(k + 1);
            for j in 0..=k {
                let cont = p * layer[j + 1] + (1.0 - p) * layer[j];
                let buyer = (t.y[k][j] - z_probe).max(0.0);
                let cancel = (t.x[k][j] - z_probe).max(0.0);
                next.push(buyer.max(cancel.min(cont)));
            }
            // Compare every node of this step against the solver surface.
            let yi = grid.y_index(0.0).unwrap();
            for j in 0..=k {
                let dp = solved.surface.value(k, j, yi, 1);
                assert!(
                    (dp - next[j]).abs() <= 1e-12,
                    "n={n} k={k} j={j}: solver {dp} vs recursion {}",
                    next[j]
                );
            }
            layer = next;
        }
    }
}

#[test]
fn oracle_value_invariant_under_trade_relabeling() {
    // At y = 0 the targets +1 and -1 cost the same; the minimum over branches
    // must equal the best of the single-target restrictions and the no-trade
    // game, however the candidates are labeled or ordered.
    let (lat, tab, fp, grid) = canonical(2);
    let tiny = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
    let y0 = grid.y_index(0.0).unwrap();
    for &z in &[4.5, 7.5, 15.0] {
        let full = brute_force_risk(&tiny, z, 0.0).unwrap();
        let mut best_single = f64::INFINITY;
        for targets in [vec![y0], vec![1], vec![3], vec![1, 3], vec![3, 1]] {
            let opts = OracleOptions {
                buyer_stop_steps: None,
                allowed_targets: Some(targets),
            };
            let (v, _) = brute_force_risk_with(&tiny, z, 0.0, &opts).unwrap();
            best_single = best_single.min(v);
        }
        // Full enumeration allows every target at every prefix, which can
        // only help the seller further.
        assert!(full <= best_single + 1e-15);
        // Symmetric relabeling (order of equal-cost candidates) is invisible.
        let fwd = OracleOptions {
            buyer_stop_steps: None,
            allowed_targets: Some(vec![1, 3]),
        };
        let rev = OracleOptions {
            buyer_stop_steps: None,
            allowed_targets: Some(vec![3, 1]),
        };
        let (a, _) = brute_force_risk_with(&tiny, z, 0.0, &fwd).unwrap();
        let (b, _) = brute_force_risk_with(&tiny, z, 0.0, &rev).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn solver_agrees_with_oracle_under_wider_share_grid() {
    // A finer share grid weakly lowers both solver and oracle; agreement
    // persists because they share the restriction.
    let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
    let lat = build_lattice(&mp, 2);
    let tab = evaluate_on_lattice(&PayoffPair::game_put(100.0, 2.0).unwrap(), &lat).unwrap();
    let fp = FrictionParams::new(0.5, 0.01).unwrap();
    let z: Vec<f64> = (0..21).map(|i| i as f64 * 1.5).collect();
    let coarse = SolverGrid::new(z.clone(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
    let fine = SolverGrid::new(
        z,
        vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0],
    )
    .unwrap();
    for grid in [&coarse, &fine] {
        let inst = Instance {
            lattice: &lat,
            tables: &tab,
            friction: fp,
            grid,
        };
        let solved = solve(&inst).unwrap();
        let tiny = TinyInstance::new(&lat, &tab, fp, grid).unwrap();
        for (yi, &y) in grid.y.iter().enumerate() {
            for (zi, &zv) in grid.z.iter().enumerate() {
                let dp = solved.surface.value(0, 0, yi, zi);
                let exact = brute_force_risk(&tiny, zv, y).unwrap();
                assert!((dp - exact).abs() <= 1e-12);
            }
        }
    }
    // Grid-bias signal: the finer restriction can only help the seller.
    let tc = TinyInstance::new(&lat, &tab, fp, &coarse).unwrap();
    let tf = TinyInstance::new(&lat, &tab, fp, &fine).unwrap();
    for &zv in &[3.0, 7.5, 12.0] {
        let c = brute_force_risk(&tc, zv, 0.0).unwrap();
        let f = brute_force_risk(&tf, zv, 0.0).unwrap();
        assert!(f <= c + 1e-15, "finer grid worsened the seller: {f} > {c}");
    }
}
