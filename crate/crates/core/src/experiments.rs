//! Convergence study across lattice depth.
//!
//! The continuous-model risk is unknown, so the study tracks successive
//! differences `|R_n - R_{n/2}|` at a fixed query state as the proxy for the
//! approximation error; the cash grid is refined like `sqrt(n)` alongside the
//! lattice so that state-grid bias does not masquerade as lattice
//! convergence.

use std::time::Instant;

use crate::exec;
use crate::friction::FrictionParams;
use crate::model::{build_lattice, MarketParams};
use crate::payoff::{evaluate_on_lattice, PayoffPair};
use crate::solver::{solve_root, Instance, SolverGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceConfig {
    pub market: MarketParams,
    pub friction: FrictionParams,
    pub payoff: PayoffPair,
    /// Query state; the cash level is inserted into every grid so the query
    /// never interpolates.
    pub query_z: f64,
    pub query_y: f64,
    /// Cash-grid points at the smallest depth; scaled by `sqrt(n / n0)`.
    pub z_steps_base: usize,
    /// Upper bound on cash-grid points after scaling.
    pub z_steps_cap: usize,
    pub y_points: usize,
    pub y_max_cap: f64,
    pub z_max_factor: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub n: usize,
    pub risk: f64,
    /// `|R_n - R_prev|` against the previous row; `None` on the first row.
    pub diff_prev: Option<f64>,
    pub wall_ms: u64,
    pub z_points: usize,
    pub y_points: usize,
}

/// One rolling solve per depth, in parallel, rows emitted in depth order.
/// Depths must be strictly increasing, each a power-of-two multiple of the
/// base so successive differences follow the doubling convention.
pub fn run_convergence(cfg: &ConvergenceConfig, n_list: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if n_list.is_empty() {
        return Err(Error::Experiment("empty n list".into()));
    }
    let n0 = n_list[0];
    if n0 == 0 {
        return Err(Error::Experiment("n must be >= 1".into()));
    }
    for w in n_list.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Equal entries are allowed (a determinism probe); otherwise depths
        // must grow by power-of-two factors.
        if b < a || b % a != 0 || !(b / a).is_power_of_two() {
            return Err(Error::Experiment(format!(
                "n list must grow by power-of-two factors, got {a} -> {b}"
            )));
        }
    }

    let solves = exec::map_indexed(n_list.len(), |i| -> Result<(f64, u64, usize)> {
        let n = n_list[i];
        let started = Instant::now();
        let z_steps = ((cfg.z_steps_base as f64) * (n as f64 / n0 as f64).sqrt()).round() as usize;
        let z_steps = z_steps.min(cfg.z_steps_cap).max(2);
        let lattice = build_lattice(&cfg.market, n);
        let tables = evaluate_on_lattice(&cfg.payoff, &lattice)?;
        let grid = SolverGrid::default_for(
            &lattice,
            &tables,
            cfg.friction,
            cfg.query_z,
            cfg.query_y,
            z_steps,
            cfg.y_points,
            cfg.y_max_cap,
            cfg.z_max_factor,
        )?
        .with_query_cash(cfg.query_z)?;
        let z_points = grid.z.len();
        let inst = Instance {
            lattice: &lattice,
            tables: &tables,
            friction: cfg.friction,
            grid: &grid,
        };
        let root = solve_root(&inst)
            .map_err(|e| Error::Experiment(format!("solve at n = {n} failed: {e}")))?;
        let risk = root
            .query(cfg.query_z, cfg.query_y)
            .map_err(|e| Error::Experiment(format!("query at n = {n} failed: {e}")))?;
        Ok((risk, started.elapsed().as_millis() as u64, z_points))
    });

    let mut rows = Vec::with_capacity(n_list.len());
    let mut prev: Option<f64> = None;
    for (i, solved) in solves.into_iter().enumerate() {
        let (risk, wall_ms, z_points) = solved?;
        rows.push(ConvergenceRow {
            n: n_list[i],
            risk,
            diff_prev: prev.map(|p| (risk - p).abs()),
            wall_ms,
            z_points,
            y_points: cfg.y_points,
        });
        prev = Some(risk);
    }
    Ok(rows)
}

/// Outcome of the log-log rate fit over successive differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFit {
    /// Least-squares slope and intercept of `ln diff` against `ln n`.
    Slope { slope: f64, intercept: f64 },
    /// Some successive difference is exactly zero: the sequence has already
    /// converged and no finite rate can be fitted.
    ExactConvergence,
}

/// Fits the decay rate of successive differences; needs at least three
/// positive differences unless the sequence converged exactly.
pub fn fit_rate(rows: &[ConvergenceRow]) -> Result<RateFit> {
    let diffs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.diff_prev.map(|d| (r.n as f64, d)))
        .collect();
    if diffs.iter().any(|&(_, d)| d == 0.0) {
        return Ok(RateFit::ExactConvergence);
    }
    if diffs.len() < 3 {
        return Err(Error::Experiment(format!(
            "rate fit needs >= 3 positive differences, got {}",
            diffs.len()
        )));
    }
    let pts: Vec<(f64, f64)> = diffs.iter().map(|&(n, d)| (n.ln(), d.ln())).collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    Ok(RateFit::Slope { slope, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_with_diffs(diffs: &[(usize, f64)]) -> Vec<ConvergenceRow> {
        let mut rows = vec![ConvergenceRow {
            n: diffs[0].0 / 2,
            risk: 1.0,
            diff_prev: None,
            wall_ms: 0,
            z_points: 0,
            y_points: 0,
        }];
        for &(n, d) in diffs {
            rows.push(ConvergenceRow {
                n,
                risk: 0.0,
                diff_prev: Some(d),
                wall_ms: 0,
                z_points: 0,
                y_points: 0,
            });
        }
        rows
    }

    #[test]
    fn fit_recovers_half_order() {
        let diffs: Vec<(usize, f64)> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| (n, (n as f64).powf(-0.5)))
            .collect();
        match fit_rate(&rows_with_diffs(&diffs)).unwrap() {
            RateFit::Slope { slope, .. } => assert!((slope + 0.5).abs() < 1e-6),
            _ => panic!("expected a fit"),
        }
    }

    #[test]
    fn fit_constant_diffs_zero_slope() {
        let diffs: Vec<(usize, f64)> = [8usize, 16, 32, 64].iter().map(|&n| (n, 0.25)).collect();
        match fit_rate(&rows_with_diffs(&diffs)).unwrap() {
            RateFit::Slope { slope, .. } => assert!(slope.abs() < 1e-12),
            _ => panic!("expected a fit"),
        }
    }

    #[test]
    fn zero_diffs_reported_as_exact() {
        let diffs: Vec<(usize, f64)> = vec![(16, 0.0), (32, 0.0), (64, 0.0)];
        assert_eq!(
            fit_rate(&rows_with_diffs(&diffs)).unwrap(),
            RateFit::ExactConvergence
        );
    }

    #[test]
    fn too_few_diffs_rejected() {
        let diffs: Vec<(usize, f64)> = vec![(16, 0.5), (32, 0.25)];
        assert!(fit_rate(&rows_with_diffs(&diffs)).is_err());
    }

    #[test]
    fn n_list_validation() {
        let cfg = ConvergenceConfig {
            market: MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap(),
            friction: FrictionParams::new(0.5, 0.01).unwrap(),
            payoff: PayoffPair::game_put(100.0, 2.0).unwrap(),
            query_z: 5.0,
            query_y: 0.0,
            z_steps_base: 21,
            z_steps_cap: 100,
            y_points: 5,
            y_max_cap: 2.0,
            z_max_factor: 1.05,
        };
        assert!(run_convergence(&cfg, &[]).is_err());
        assert!(run_convergence(&cfg, &[8, 12]).is_err());
        assert!(run_convergence(&cfg, &[8, 4]).is_err());
    }

    #[test]
    fn repeat_depth_identical_risks() {
        // Determinism probe from the doubling convention: [8, 8] is legal and
        // both rows carry the same risk, so the difference is exactly zero.
        let cfg = ConvergenceConfig {
            market: MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap(),
            friction: FrictionParams::new(0.5, 0.01).unwrap(),
            payoff: PayoffPair::game_put(110.0, 2.0).unwrap(),
            query_z: 5.0,
            query_y: 0.0,
            z_steps_base: 41,
            z_steps_cap: 100,
            y_points: 9,
            y_max_cap: 2.0,
            z_max_factor: 1.05,
        };
        let rows = run_convergence(&cfg, &[8, 8]).unwrap();
        assert_eq!(rows[0].risk, rows[1].risk);
        assert_eq!(rows[1].diff_prev, Some(0.0));
    }
}
