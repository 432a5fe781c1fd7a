//! Lifting binomial policies into the continuous model.
//!
//! A solved binomial policy prescribes an action at every (step, node, cash,
//! shares) state. Along a simulated Brownian path the first-passage embedding
//! turns the walk of signs into a sequence of decision times; replaying the
//! policy there, with trades executed at the *actual* prices seen at those
//! times, produces an admissible hedge in the continuous model whose value at
//! the passage times tracks the binomial portfolio up to the fine-grid
//! overshoot. The simulator measures that tracking error, checks
//! admissibility on every fine-grid point, and evaluates the empirical
//! shortfall against a family of threshold buyer strategies (each a lower
//! bound on the true worst case).
//!
//! Decisions are driven by the binomial-side state (cash tracked exactly
//! through binomial-price frictions, snapped to the nearest grid level for
//! lookup only), which is the faithful image of the lifted binomial hedge;
//! the continuous track applies the same trades at actual prices.

use crate::exec;
use crate::friction::{mark_to_market, post_trade_value, FrictionParams};
use crate::model::{build_lattice, derive_seed, extract_embedding, sample_path, MarketParams};
use crate::payoff::PayoffPair;
use crate::solver::{Action, Solved, Topology};
use crate::{Error, Result};

/// Adapted exercise rule: stop at the first decision time where the observed
/// shortfall `Y - V` strictly exceeds the threshold, else at maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuyerStrategy {
    pub threshold: f64,
}

pub fn buyer_threshold_strategy(threshold: f64) -> Result<BuyerStrategy> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidParam {
            name: "threshold",
            reason: format!("must be >= 0 (infinity allowed), got {threshold}"),
        });
    }
    Ok(BuyerStrategy { threshold })
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub num_paths: usize,
    pub seed: u64,
    /// Fine-grid steps per `[0, T]`.
    pub fine_steps: usize,
    /// Simulation horizon as a multiple of `T`.
    pub horizon_factor: f64,
    pub z0: f64,
    pub y0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyStat {
    pub threshold: f64,
    pub mean_shortfall: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub paths_requested: usize,
    /// Paths entering the statistics (complete embeddings).
    pub paths_used: usize,
    pub incomplete_embeddings: usize,
    /// Paths on which the lifted portfolio value dipped below zero.
    pub admissibility_violations: usize,
    /// Most negative portfolio value observed, 0 when none.
    pub worst_violation: f64,
    /// Max over paths and decision times of |lifted value - binomial value|.
    pub value_match_error: f64,
    /// Mean of `(max_t |gamma| S + integral S |d gamma|)^2` over paths.
    pub growth_stat: f64,
    pub per_strategy: Vec<StrategyStat>,
}

/// One row of the per-path audit trail (`--trace`).
#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub path: usize,
    pub step: usize,
    pub grid_index: usize,
    pub time: f64,
    pub price: f64,
    pub binomial_price: f64,
    pub value: f64,
    pub binomial_value: f64,
    pub shares: f64,
    pub action: &'static str,
    pub beta: f64,
}

struct PathOutcome {
    incomplete: bool,
    violated: bool,
    worst_value: f64,
    value_match: f64,
    growth: f64,
    shortfalls: Vec<f64>,
    trace: Vec<TraceEvent>,
}

/// Replays the solved policy along simulated paths and aggregates the report;
/// traces are collected only when `collect_traces` is set. Fails when more
/// than 1% of paths cannot complete their embedding inside the horizon.
pub fn lift_and_simulate(
    solved: &Solved,
    params: &MarketParams,
    friction: FrictionParams,
    payoff: &PayoffPair,
    sim: &SimConfig,
    strategies: &[BuyerStrategy],
    collect_traces: bool,
) -> Result<(SimReport, Vec<TraceEvent>)> {
    if strategies.is_empty() {
        return Err(Error::Simulation("need at least one buyer strategy".into()));
    }
    if sim.num_paths == 0 {
        return Err(Error::Simulation("need at least one path".into()));
    }
    if sim.z0 < 0.0 {
        return Err(Error::Simulation(format!("initial cash must be >= 0, got {}", sim.z0)));
    }
    let grid = &solved.surface.grid;
    let y0_idx = grid.y_index(sim.y0).ok_or_else(|| {
        Error::Simulation(format!("initial shares {} must lie on the solver grid", sim.y0))
    })?;
    let n = solved.surface.n;
    let lattice = build_lattice(params, n);
    let topology = solved.surface.topology;

    let outcomes = exec::map_indexed(sim.num_paths, |i| {
        replay_path(
            i,
            solved,
            &lattice,
            topology,
            params,
            friction,
            payoff,
            sim,
            strategies,
            y0_idx,
            collect_traces,
        )
    });

    let incomplete = outcomes.iter().filter(|o| o.incomplete).count();
    if incomplete as f64 > 0.01 * sim.num_paths as f64 {
        return Err(Error::Simulation(format!(
            "{incomplete} of {} paths left their embedding incomplete (> 1%); \
             raise horizon_factor",
            sim.num_paths
        )));
    }
    let used: Vec<&PathOutcome> = outcomes.iter().filter(|o| !o.incomplete).collect();
    let paths_used = used.len();

    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut vmatch = 0.0f64;
    let mut growth_sum = 0.0f64;
    for o in &used {
        if o.violated {
            violations += 1;
        }
        worst = worst.min(o.worst_value);
        vmatch = vmatch.max(o.value_match);
        growth_sum += o.growth;
    }

    let per_strategy = strategies
        .iter()
        .enumerate()
        .map(|(si, st)| {
            let mean = used.iter().map(|o| o.shortfalls[si]).sum::<f64>() / paths_used as f64;
            let var = if paths_used > 1 {
                used.iter()
                    .map(|o| (o.shortfalls[si] - mean).powi(2))
                    .sum::<f64>()
                    / (paths_used - 1) as f64
            } else {
                0.0
            };
            StrategyStat {
                threshold: st.threshold,
                mean_shortfall: mean,
                stderr: (var / paths_used as f64).sqrt(),
            }
        })
        .collect();

    let traces = if collect_traces {
        let mut all = Vec::new();
        for o in outcomes {
            all.extend(o.trace);
        }
        all
    } else {
        Vec::new()
    };

    Ok((
        SimReport {
            paths_requested: sim.num_paths,
            paths_used,
            incomplete_embeddings: incomplete,
            admissibility_violations: violations,
            worst_violation: worst,
            value_match_error: vmatch,
            growth_stat: growth_sum / paths_used as f64,
            per_strategy,
        },
        traces,
    ))
}

/// Tracking-error comparison across one grid refinement on coupled paths:
/// each path is simulated once at `sim.fine_steps` and replayed both at that
/// resolution and on its every-other-point decimation, so the reported pair
/// (coarse max error, fine max error) reflects the overshoot shrinkage on a
/// common Brownian realization. Paths incomplete at either resolution are
/// skipped.
pub fn value_match_refinement(
    solved: &Solved,
    params: &MarketParams,
    friction: FrictionParams,
    payoff: &PayoffPair,
    sim: &SimConfig,
) -> Result<(f64, f64)> {
    if sim.fine_steps % 2 != 0 {
        return Err(Error::Simulation(format!(
            "refinement comparison needs an even fine-step count, got {}",
            sim.fine_steps
        )));
    }
    let grid = &solved.surface.grid;
    let y0_idx = grid.y_index(sim.y0).ok_or_else(|| {
        Error::Simulation(format!("initial shares {} must lie on the solver grid", sim.y0))
    })?;
    let n = solved.surface.n;
    let lattice = build_lattice(params, n);
    let topology = solved.surface.topology;
    let strategies = [BuyerStrategy {
        threshold: f64::INFINITY,
    }];

    let pairs = exec::map_indexed(sim.num_paths, |i| {
        let fine = sample_path(
            params,
            sim.fine_steps,
            sim.horizon_factor,
            derive_seed(sim.seed, i as u64),
        );
        let coarse = crate::model::decimate_path(&fine);
        let of = replay_on_path(
            i, &fine, sim.fine_steps, solved, &lattice, topology, params.maturity,
            friction, payoff, sim.z0, y0_idx, &strategies, false,
        );
        let oc = replay_on_path(
            i, &coarse, sim.fine_steps / 2, solved, &lattice, topology, params.maturity,
            friction, payoff, sim.z0, y0_idx, &strategies, false,
        );
        if of.incomplete || oc.incomplete {
            None
        } else {
            Some((oc.value_match, of.value_match))
        }
    });
    let mut coarse_max = 0.0f64;
    let mut fine_max = 0.0f64;
    let mut used = 0usize;
    for p in pairs.into_iter().flatten() {
        coarse_max = coarse_max.max(p.0);
        fine_max = fine_max.max(p.1);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Simulation("no complete paths in refinement comparison".into()));
    }
    Ok((coarse_max, fine_max))
}

/// Snap exact cash to the nearest grid level (ties toward the lower level);
/// clamped at the ends.
fn snap_cash(z_grid: &[f64], z: f64) -> usize {
    if z <= z_grid[0] {
        return 0;
    }
    let last = z_grid.len() - 1;
    if z >= z_grid[last] {
        return last;
    }
    let i = z_grid.partition_point(|&g| g <= z) - 1;
    if z - z_grid[i] <= z_grid[i + 1] - z {
        i
    } else {
        i + 1
    }
}

#[allow(clippy::too_many_arguments)]
fn replay_path(
    path_idx: usize,
    solved: &Solved,
    lattice: &crate::model::BinomialLattice,
    topology: Topology,
    params: &MarketParams,
    friction: FrictionParams,
    payoff: &PayoffPair,
    sim: &SimConfig,
    strategies: &[BuyerStrategy],
    y0_idx: usize,
    collect_trace: bool,
) -> PathOutcome {
    let path = sample_path(
        params,
        sim.fine_steps,
        sim.horizon_factor,
        derive_seed(sim.seed, path_idx as u64),
    );
    replay_on_path(
        path_idx,
        &path,
        sim.fine_steps,
        solved,
        lattice,
        topology,
        params.maturity,
        friction,
        payoff,
        sim.z0,
        y0_idx,
        strategies,
        collect_trace,
    )
}

#[allow(clippy::too_many_arguments)]
fn replay_on_path(
    path_idx: usize,
    path: &crate::model::PathSample,
    steps_per_maturity: usize,
    solved: &Solved,
    lattice: &crate::model::BinomialLattice,
    topology: Topology,
    maturity: f64,
    friction: FrictionParams,
    payoff: &PayoffPair,
    z0: f64,
    y0_idx: usize,
    strategies: &[BuyerStrategy],
    collect_trace: bool,
) -> PathOutcome {
    let n = solved.surface.n;
    let grid = &solved.surface.grid;
    let emb = extract_embedding(path, n, maturity);
    if !emb.complete {
        return PathOutcome {
            incomplete: true,
            violated: false,
            worst_value: 0.0,
            value_match: 0.0,
            growth: 0.0,
            shortfalls: vec![0.0; strategies.len()],
            trace: Vec::new(),
        };
    }
    let idx_t = path.maturity_index(steps_per_maturity);

    // Per decision step: effective grid index (clipped at maturity), buyer
    // payoff Y, penalty payoff X, lifted value V, all at the effective time.
    let mut eff_idx = Vec::with_capacity(n + 1);
    let mut y_eff = Vec::with_capacity(n + 1);
    let mut x_eff = Vec::with_capacity(n + 1);
    let mut v_eff = Vec::with_capacity(n + 1);

    let mut yi = y0_idx;
    let mut z_cont = z0;
    let mut z_bin = z0;
    let mut node = 0usize;
    let mut seg_price_cont = path.prices[0];
    let mut seg_price_bin = lattice.price(0, 0);
    let mut seg_start = 0usize;

    let mut running_min = path.prices[0];
    let mut worst_value = f64::INFINITY;
    let mut value_match = 0.0f64;
    let mut max_exposure = 0.0f64;
    let mut turnover = 0.0f64;
    let mut cancel_step: Option<usize> = None;
    // Value and payoffs at the exact maturity point, captured when the scan
    // crosses it.
    let mut at_maturity: Option<(f64, f64, f64)> = None;
    let mut trace = Vec::new();

    'steps: for k in 0..=n {
        let gi = emb.hit_indices[k];
        // Scan the fine grid across the segment, tracking admissibility,
        // exposure, the running minimum, and the maturity crossing.
        let y_val = grid.y[yi];
        for t in (seg_start + 1)..=gi {
            let v = mark_to_market(seg_price_cont, path.prices[t], z_cont, y_val, friction);
            worst_value = worst_value.min(v);
            running_min = running_min.min(path.prices[t]);
            max_exposure = max_exposure.max(y_val.abs() * path.prices[t]);
            if t == idx_t {
                let (py, px) = payoff.evaluate_at(path.prices[t], running_min, true);
                at_maturity = Some((v, py, px));
            }
        }
        // Advance both tracks to this decision time (no-op at step 0, where
        // both sit at the initial price already).
        let s_cont = path.prices[gi];
        let s_bin = lattice.price(k, topology.ups(node));
        if k > 0 {
            z_cont = mark_to_market(seg_price_cont, s_cont, z_cont, y_val, friction);
            z_bin = mark_to_market(seg_price_bin, s_bin, z_bin, y_val, friction);
        }
        seg_price_cont = s_cont;
        seg_price_bin = s_bin;
        seg_start = gi;
        value_match = value_match.max((z_cont - z_bin).abs());
        worst_value = worst_value.min(z_cont);
        max_exposure = max_exposure.max(y_val.abs() * s_cont);

        // Effective (maturity-clipped) state for the game evaluation.
        let e = gi.min(idx_t);
        eff_idx.push(e);
        if gi <= idx_t {
            let (py, px) = payoff.evaluate_at(s_cont, running_min, e == idx_t);
            y_eff.push(py);
            x_eff.push(px);
            v_eff.push(z_cont);
            if gi == idx_t {
                at_maturity = Some((z_cont, py, px));
            }
        } else {
            let (v, py, px) = at_maturity.expect("maturity crossed before this passage");
            y_eff.push(py);
            x_eff.push(px);
            v_eff.push(v);
        }

        if k == n {
            // Horizon of the lifted strategy: liquidate (value neutral).
            turnover += y_val.abs() * s_cont;
            if collect_trace {
                trace.push(TraceEvent {
                    path: path_idx,
                    step: k,
                    grid_index: gi,
                    time: path.times[gi],
                    price: s_cont,
                    binomial_price: s_bin,
                    value: z_cont,
                    binomial_value: z_bin,
                    shares: y_val,
                    action: "liquidate",
                    beta: -y_val,
                });
            }
            break 'steps;
        }

        let zi = snap_cash(&grid.z, z_bin);
        let entry = solved.policy.entry(k, node, yi, zi);
        let (label, beta) = match entry.action {
            Action::Trade { beta, target } => {
                z_cont = post_trade_value(s_cont, z_cont, y_val, beta, friction);
                z_bin = post_trade_value(s_bin, z_bin, y_val, beta, friction);
                turnover += beta.abs() * s_cont;
                yi = target;
                ("trade", beta)
            }
            Action::Cancel | Action::Forced => {
                cancel_step = Some(k);
                ("cancel", 0.0)
            }
            Action::Wait => ("wait", 0.0),
        };
        if collect_trace {
            trace.push(TraceEvent {
                path: path_idx,
                step: k,
                grid_index: gi,
                time: path.times[gi],
                price: s_cont,
                binomial_price: s_bin,
                value: z_cont,
                binomial_value: z_bin,
                shares: grid.y[yi],
                action: label,
                beta,
            });
        }
        if cancel_step.is_some() {
            // Liquidation preserves the liquidation value; the portfolio is
            // constant afterwards.
            turnover += grid.y[yi].abs() * s_cont;
            worst_value = worst_value.min(z_cont);
            break 'steps;
        }
        // Follow the embedded walk to the next node.
        let (up, down) = topology.children(k, node);
        node = if emb.signs[k] == 1 { up } else { down };
    }

    // Value and payoffs at exact maturity for "stop at T" outcomes: if the
    // replay ended before crossing T (cancellation or theta_n before T), the
    // position is flat and the value frozen.
    let (v_t, y_t, x_t) = at_maturity.unwrap_or_else(|| {
        let v = z_cont;
        let (py, px) = payoff.evaluate_at(
            // Prices after the replay end no longer matter to the hedge, but
            // the payoff at T is still read off the simulated path.
            path.prices[idx_t],
            min_up_to(&path.prices, idx_t),
            true,
        );
        debug_assert_eq!(px, py);
        (v, py, px)
    });

    // Seller side: effective index of the cancellation, or maturity.
    let last_step = cancel_step.unwrap_or(n);
    let (sigma_idx, sigma_payout, sigma_value) = match cancel_step {
        Some(k) => {
            let e = eff_idx[k];
            if e < idx_t {
                (e, x_eff[k], v_eff[k])
            } else {
                (idx_t, x_t, v_t)
            }
        }
        None => (idx_t, y_t, v_t),
    };

    let shortfalls = strategies
        .iter()
        .map(|st| {
            // Buyer: first decision time with Y - V strictly above threshold,
            // else maturity.
            let mut stop: Option<(usize, f64, f64)> = None;
            for k in 0..=last_step.min(n) {
                if y_eff[k] - v_eff[k] > st.threshold {
                    stop = Some((eff_idx[k], y_eff[k], v_eff[k]));
                    break;
                }
            }
            let (tau_idx, tau_payout, tau_value) = stop.unwrap_or((idx_t, y_t, v_t));
            if tau_idx <= sigma_idx {
                (tau_payout - tau_value).max(0.0)
            } else {
                (sigma_payout - sigma_value).max(0.0)
            }
        })
        .collect();

    let growth = {
        let g = max_exposure + turnover;
        g * g
    };
    PathOutcome {
        incomplete: false,
        violated: worst_value < 0.0,
        worst_value: worst_value.min(0.0),
        value_match,
        growth,
        shortfalls,
        trace,
    }
}

fn min_up_to(prices: &[f64], idx: usize) -> f64 {
    prices[..=idx].iter().cloned().fold(f64::INFINITY, f64::min)
}
