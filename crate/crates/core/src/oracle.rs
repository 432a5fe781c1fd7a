//! Brute-force cross-check on tiny trees.
//!
//! Enumerates every adapted seller plan (a cancel/wait/trade decision per
//! path prefix and reachable state) against a best-responding buyer, carrying
//! the cash state *exactly* through the friction transitions: no value table,
//! no interpolation, prefixes never recombined. Trades share the solver's
//! share-grid restriction, which is what makes solver agreement exact rather
//! than approximate; rerunning with a finer share grid isolates the grid bias
//! of both.
//!
//! The plan space is walked as a tree: independent subtrees are minimized
//! independently, which reproduces the full product-space minimum because the
//! plan value is monotone in each subtree's value. Sizes are counted before
//! evaluation and capped.

use crate::exec;
use crate::friction::{mark_to_market, post_trade_value, FrictionParams};
use crate::model::BinomialLattice;
use crate::payoff::PayoffTables;
use crate::solver::{SolverGrid, Topology};
use crate::{Error, Result};

/// Hard cap on evaluated stop/terminal leaves per root state.
pub const LEAF_CAP: u128 = 100_000_000;

/// Largest tree depth the oracle accepts.
pub const MAX_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct TinyInstance<'a> {
    pub lattice: &'a BinomialLattice,
    pub tables: &'a PayoffTables,
    pub friction: FrictionParams,
    pub grid: &'a SolverGrid,
}

impl<'a> TinyInstance<'a> {
    pub fn new(
        lattice: &'a BinomialLattice,
        tables: &'a PayoffTables,
        friction: FrictionParams,
        grid: &'a SolverGrid,
    ) -> Result<Self> {
        if lattice.n > MAX_DEPTH {
            return Err(Error::SizeLimit(format!(
                "oracle accepts n <= {MAX_DEPTH}, got {}",
                lattice.n
            )));
        }
        Ok(Self {
            lattice,
            tables,
            friction,
            grid,
        })
    }
}

/// Strategy-space size for one root state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationSize {
    /// Distinct adapted seller plans.
    pub seller_plans: u128,
    /// Stop/terminal payoff evaluations performed by the walk.
    pub leaf_evals: u128,
}

/// Restrictions used by the sanity-monotonicity tests.
#[derive(Debug, Clone, Default)]
pub struct OracleOptions {
    /// `buyer_stop_steps[k] = false` forbids buyer exercise at step `k < n`
    /// (maturity is always allowed). `None` allows all steps.
    pub buyer_stop_steps: Option<Vec<bool>>,
    /// Allowed trade-target share indices. `None` allows the whole grid.
    pub allowed_targets: Option<Vec<usize>>,
}

struct Walk<'a> {
    inst: &'a TinyInstance<'a>,
    topology: Topology,
    opts: &'a OracleOptions,
}

impl<'a> Walk<'a> {
    fn buyer_may_stop(&self, k: usize) -> bool {
        match &self.opts.buyer_stop_steps {
            None => true,
            Some(mask) => mask.get(k).copied().unwrap_or(true),
        }
    }

    fn target_allowed(&self, ti: usize) -> bool {
        match &self.opts.allowed_targets {
            None => true,
            Some(list) => list.contains(&ti),
        }
    }

    /// Exact min-max value with plan/leaf accounting at one prefix state.
    fn value(&self, k: usize, node: usize, z: f64, yi: usize) -> (f64, EnumerationSize) {
        let tabs = self.inst.tables.tables();
        let n = self.inst.lattice.n;
        if k == n {
            return (
                (tabs.y[n][node] - z).max(0.0),
                EnumerationSize {
                    seller_plans: 1,
                    leaf_evals: 1,
                },
            );
        }
        let grid = self.inst.grid;
        let fp = self.inst.friction;
        let y = grid.y[yi];
        let s = self.inst.lattice.price(k, self.topology.ups(node));
        let (nu, nd) = self.topology.children(k, node);
        let su = self.inst.lattice.price(k + 1, self.topology.ups(nu));
        let sd = self.inst.lattice.price(k + 1, self.topology.ups(nd));
        let p = self.inst.lattice.up_prob;

        let buyer_stop = (tabs.y[k][node] - z).max(0.0);
        let cancel = (tabs.x[k][node] - z).max(0.0);

        let mut best = cancel;
        let mut plans: u128 = 1;
        let mut leaves: u128 = 1;

        let continue_with = |zc: f64, yc: usize, best: &mut f64, plans: &mut u128, leaves: &mut u128| {
            let zu = mark_to_market(s, su, zc, grid.y[yc], fp);
            if zu < 0.0 {
                return;
            }
            let zd = mark_to_market(s, sd, zc, grid.y[yc], fp);
            if zd < 0.0 {
                return;
            }
            let (vu, szu) = self.value(k + 1, nu, zu, yc);
            let (vd, szd) = self.value(k + 1, nd, zd, yc);
            let v = p * vu + (1.0 - p) * vd;
            if v < *best {
                *best = v;
            }
            *plans += szu.seller_plans * szd.seller_plans;
            *leaves += szu.leaf_evals + szd.leaf_evals;
        };

        continue_with(z, yi, &mut best, &mut plans, &mut leaves);
        for ti in 0..grid.y.len() {
            if ti == yi || !self.target_allowed(ti) {
                continue;
            }
            let beta = grid.y[ti] - y;
            let zt = post_trade_value(s, z, y, beta, fp);
            if zt < 0.0 {
                continue;
            }
            continue_with(zt, ti, &mut best, &mut plans, &mut leaves);
        }

        let value = if self.buyer_may_stop(k) {
            buyer_stop.max(best)
        } else {
            best
        };
        (
            value,
            EnumerationSize {
                seller_plans: plans,
                leaf_evals: leaves,
            },
        )
    }

    /// Size-only pre-pass (identical control flow, no payoff arithmetic kept).
    fn size(&self, k: usize, node: usize, z: f64, yi: usize) -> EnumerationSize {
        self.value(k, node, z, yi).1
    }
}

fn root_state(inst: &TinyInstance, z0: f64, y0: f64) -> Result<usize> {
    if !inst.grid.z.contains(&z0) {
        return Err(Error::Query(format!("oracle start z = {z0} must lie on the cash grid")));
    }
    inst.grid
        .y_index(y0)
        .ok_or_else(|| Error::Query(format!("oracle start y = {y0} must lie on the share grid")))
}

/// Strategy-space size for the given start, bounded before enumeration.
pub fn enumeration_size(inst: &TinyInstance, z0: f64, y0: f64) -> Result<EnumerationSize> {
    let yi = root_state(inst, z0, y0)?;
    let walk = Walk {
        inst,
        topology: if inst.tables.is_path_indexed() {
            Topology::PathTree
        } else {
            Topology::Recombining
        },
        opts: &OracleOptions::default(),
    };
    Ok(walk.size(0, 0, z0, yi))
}

/// Exact shortfall risk by strategy enumeration.
pub fn brute_force_risk(inst: &TinyInstance, z0: f64, y0: f64) -> Result<f64> {
    brute_force_risk_with(inst, z0, y0, &OracleOptions::default()).map(|(v, _)| v)
}

/// Enumeration with restrictions; returns the value and the explored size.
pub fn brute_force_risk_with(
    inst: &TinyInstance,
    z0: f64,
    y0: f64,
    opts: &OracleOptions,
) -> Result<(f64, EnumerationSize)> {
    let yi = root_state(inst, z0, y0)?;
    let topology = if inst.tables.is_path_indexed() {
        Topology::PathTree
    } else {
        Topology::Recombining
    };
    let walk = Walk {
        inst,
        topology,
        opts,
    };
    let size = walk.size(0, 0, z0, yi);
    if size.leaf_evals > LEAF_CAP {
        return Err(Error::EnumerationTooLarge {
            leaves: size.leaf_evals,
            cap: LEAF_CAP,
        });
    }

    // Outermost seller branches in parallel, reduced in canonical order.
    let n = inst.lattice.n;
    let tabs = inst.tables.tables();
    let grid = inst.grid;
    let fp = inst.friction;
    if n == 0 {
        return Ok(((tabs.y[0][0] - z0).max(0.0), size));
    }
    let y = grid.y[yi];
    let s = inst.lattice.price(0, 0);
    let (nu, nd) = topology.children(0, 0);
    let su = inst.lattice.price(1, topology.ups(nu));
    let sd = inst.lattice.price(1, topology.ups(nd));
    let p = inst.lattice.up_prob;

    // (z after action, share index after action); None marks inadmissible.
    let mut branches: Vec<(f64, usize)> = Vec::new();
    branches.push((z0, yi));
    for ti in 0..grid.y.len() {
        if ti == yi || !walk.target_allowed(ti) {
            continue;
        }
        let beta = grid.y[ti] - y;
        let zt = post_trade_value(s, z0, y, beta, fp);
        if zt >= 0.0 {
            branches.push((zt, ti));
        }
    }
    let values = exec::map_indexed(branches.len(), |bi| {
        let (zc, yc) = branches[bi];
        let zu = mark_to_market(s, su, zc, grid.y[yc], fp);
        if zu < 0.0 {
            return None;
        }
        let zd = mark_to_market(s, sd, zc, grid.y[yc], fp);
        if zd < 0.0 {
            return None;
        }
        let (vu, _) = walk.value(1, nu, zu, yc);
        let (vd, _) = walk.value(1, nd, zd, yc);
        Some(p * vu + (1.0 - p) * vd)
    });
    let mut best = (tabs.x[0][0] - z0).max(0.0);
    for v in values.into_iter().flatten() {
        if v < best {
            best = v;
        }
    }
    let buyer_stop = (tabs.y[0][0] - z0).max(0.0);
    let value = if walk.buyer_may_stop(0) {
        buyer_stop.max(best)
    } else {
        best
    };
    Ok((value, size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lattice, MarketParams};
    use crate::payoff::{evaluate_on_lattice, PayoffPair};

    fn setup(n: usize) -> (BinomialLattice, PayoffTables, FrictionParams, SolverGrid) {
        let mp = MarketParams::new(100.0, 0.2, 0.02, 1.0).unwrap();
        let lat = build_lattice(&mp, n);
        let tab = evaluate_on_lattice(&PayoffPair::game_put(100.0, 2.0).unwrap(), &lat).unwrap();
        let fp = FrictionParams::new(0.5, 0.01).unwrap();
        let z: Vec<f64> = (0..21).map(|i| i as f64 * 1.5).collect();
        let grid = SolverGrid::new(z, vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        (lat, tab, fp, grid)
    }

    #[test]
    fn rejects_deep_trees() {
        let (lat, tab, fp, grid) = setup(4);
        assert!(TinyInstance::new(&lat, &tab, fp, &grid).is_err());
    }

    #[test]
    fn superhedged_start_is_zero() {
        let (lat, tab, fp, grid) = setup(1);
        let inst = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        assert_eq!(brute_force_risk(&inst, 30.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn one_step_no_trade_expansion() {
        // z = 0.3 < delta, y = 0: no trade is feasible, so the game value is
        // max((Y0-z)^+, min((X0-z)^+, E[(Y1-z)^+])) expanded by hand.
        let (lat, tab, fp, grid) = setup(1);
        let inst = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        let grid2 = {
            let mut z = grid.z.clone();
            z.insert(1, 0.3);
            SolverGrid::new(z, grid.y.clone()).unwrap()
        };
        let inst2 = TinyInstance {
            grid: &grid2,
            ..inst
        };
        let t = tab.tables();
        let p = lat.up_prob;
        let z = 0.3;
        let wait = p * (t.y[1][1] - z).max(0.0) + (1.0 - p) * (t.y[1][0] - z).max(0.0);
        let expected = (t.y[0][0] - z)
            .max(0.0)
            .max((t.x[0][0] - z).max(0.0).min(wait));
        let got = brute_force_risk(&inst2, 0.3, 0.0).unwrap();
        assert!((got - expected).abs() <= 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn off_grid_start_rejected() {
        let (lat, tab, fp, grid) = setup(2);
        let inst = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        assert!(brute_force_risk(&inst, 0.123, 0.0).is_err());
        assert!(brute_force_risk(&inst, 1.5, 0.5).is_err());
    }

    #[test]
    fn size_logged_and_bounded() {
        let (lat, tab, fp, grid) = setup(3);
        let inst = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        let size = enumeration_size(&inst, 15.0, 0.0).unwrap();
        assert!(size.seller_plans > 1);
        assert!(size.leaf_evals > 1 && size.leaf_evals <= LEAF_CAP);
    }

    #[test]
    fn restricting_buyer_weakly_decreases_value() {
        let (lat, tab, fp, grid) = setup(3);
        let inst = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        let restricted = OracleOptions {
            buyer_stop_steps: Some(vec![false, false, false]),
            allowed_targets: None,
        };
        for zi in [0usize, 2, 6, 10] {
            for &y0 in &[-1.0, 0.0, 1.0] {
                let z0 = grid.z[zi];
                let full = brute_force_risk(&inst, z0, y0).unwrap();
                let (cut, _) = brute_force_risk_with(&inst, z0, y0, &restricted).unwrap();
                assert!(cut <= full + 1e-15, "z={z0} y={y0}: {cut} > {full}");
            }
        }
    }

    #[test]
    fn restricting_seller_weakly_increases_value() {
        let (lat, tab, fp, grid) = setup(3);
        let inst = TinyInstance::new(&lat, &tab, fp, &grid).unwrap();
        let y0_idx = grid.y_index(0.0).unwrap();
        let restricted = OracleOptions {
            buyer_stop_steps: None,
            allowed_targets: Some(vec![y0_idx]),
        };
        for zi in [0usize, 2, 6, 10] {
            for &y0 in &[-1.0, 0.0, 1.0] {
                let z0 = grid.z[zi];
                let full = brute_force_risk(&inst, z0, y0).unwrap();
                let (cut, _) = brute_force_risk_with(&inst, z0, y0, &restricted).unwrap();
                assert!(cut >= full - 1e-15, "z={z0} y={y0}: {cut} < {full}");
            }
        }
    }
}
