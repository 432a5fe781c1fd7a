//! Backward-induction Dynkin-game solver.
//!
//! State: step `k`, lattice node, liquidation value `z` (grid, interpolated
//! linearly), share count `y` (grid, exact). At each interior state the value
//! is
//!
//! ```text
//! G = max( (Y - z)^+ , min( (X - z)^+ , C_wait , min over feasible trades C_trade ) )
//! ```
//!
//! where continuations transition `z` through the friction module and read the
//! next layer with linear interpolation in `z`; a branch whose one-step
//! successor has negative mark-to-market is inadmissible and excluded. If
//! every continuation is excluded the seller is forced to cancel. Terminal
//! values are `(Y_n - z)^+`, independent of `y` since `z` is already the
//! liquidation value. Expectations use the real-world up probability `p^(n)`,
//! not the martingale one.

use crate::exec;
use crate::friction::{mark_to_market, post_trade_value, FrictionParams};
use crate::model::BinomialLattice;
use crate::payoff::PayoffTables;
use crate::{Error, Result};

/// Hard cap on stored states for a full surface solve (values + policy).
const MAX_SURFACE_STATES: usize = 40_000_000;
/// Hard cap on the widest layer for a rolling (root-only) solve.
const MAX_LAYER_STATES: usize = 80_000_000;

/// Discretization of the (cash, shares) state space. Trades are restricted to
/// `beta = y_target - y_current` with `y_target` on the share grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverGrid {
    /// Strictly increasing cash levels, `z[0] = 0`.
    pub z: Vec<f64>,
    /// Strictly increasing share levels containing 0.
    pub y: Vec<f64>,
}

impl SolverGrid {
    pub fn new(z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::Grid("z grid needs at least 2 points".into()));
        }
        if z[0] != 0.0 {
            return Err(Error::Grid(format!("z grid must start at 0, got {}", z[0])));
        }
        if !z.windows(2).all(|w| w[0] < w[1]) || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid("z grid must be finite, strictly increasing".into()));
        }
        if y.is_empty() || !y.windows(2).all(|w| w[0] < w[1]) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid("y grid must be finite, strictly increasing".into()));
        }
        if !y.contains(&0.0) {
            return Err(Error::Grid("y grid must contain 0".into()));
        }
        Ok(Self { z, y })
    }

    /// Uniform grid: `z_points` on `[0, z_max]`, `y_points` (odd) symmetric on
    /// `[-y_max, y_max]` built around an exact 0.
    pub fn uniform(z_max: f64, z_points: usize, y_max: f64, y_points: usize) -> Result<Self> {
        if !(z_max > 0.0) || z_points < 2 {
            return Err(Error::Grid(format!(
                "need z_max > 0 and z_points >= 2, got {z_max}, {z_points}"
            )));
        }
        if y_points % 2 == 0 {
            return Err(Error::Grid(format!(
                "y_points must be odd so the grid contains 0, got {y_points}"
            )));
        }
        if y_points > 1 && !(y_max > 0.0) {
            return Err(Error::Grid(format!("need y_max > 0, got {y_max}")));
        }
        let zstep = z_max / (z_points - 1) as f64;
        let z: Vec<f64> = (0..z_points).map(|i| i as f64 * zstep).collect();
        let mid = (y_points / 2) as i64;
        let ystep = if y_points > 1 { y_max / mid as f64 } else { 0.0 };
        let y: Vec<f64> = (0..y_points as i64).map(|i| (i - mid) as f64 * ystep).collect();
        Self::new(z, y)
    }

    /// Default grid for an instance: `z_max = z_max_factor * max X` over the
    /// tree, share span from the admissible-growth bound capped at `y_max_cap`.
    pub fn default_for(
        lattice: &BinomialLattice,
        tables: &PayoffTables,
        fp: FrictionParams,
        z0: f64,
        y0: f64,
        z_points: usize,
        y_points: usize,
        y_max_cap: f64,
        z_max_factor: f64,
    ) -> Result<Self> {
        if z_max_factor < 1.0 {
            return Err(Error::Grid(format!(
                "z_max_factor must be >= 1, got {z_max_factor}"
            )));
        }
        let z_max = z_max_factor * tables.max_x();
        let y_max = default_y_max(z0, y0, lattice, fp, y_max_cap);
        Self::uniform(z_max, z_points, y_max, y_points)
    }

    /// Returns a grid whose cash axis contains `z` exactly, inserting it when
    /// needed, so the point can be queried without interpolation.
    pub fn with_query_cash(mut self, z: f64) -> Result<Self> {
        if !(0.0..=*self.z.last().unwrap()).contains(&z) {
            return Err(Error::Grid(format!(
                "query cash {z} outside [0, {}]",
                self.z.last().unwrap()
            )));
        }
        match self.z.binary_search_by(|g| g.partial_cmp(&z).unwrap()) {
            Ok(_) => {}
            Err(pos) => self.z.insert(pos, z),
        }
        Ok(self)
    }

    /// Index of an exactly matching share level.
    pub fn y_index(&self, y: f64) -> Option<usize> {
        self.y.iter().position(|&g| g == y)
    }
}

/// Share-exposure bound from the admissible-portfolio growth estimate,
/// `ceil((z0 + (1+mu)|y0| s + 1) / (mu * min tree price))`, capped.
pub fn default_y_max(
    z0: f64,
    y0: f64,
    lattice: &BinomialLattice,
    fp: FrictionParams,
    cap: f64,
) -> f64 {
    let s_min = lattice.price(lattice.n, 0);
    let raw = ((z0 + (1.0 + fp.mu) * y0.abs() * lattice.spot + 1.0) / (fp.mu * s_min)).ceil();
    raw.min(cap)
}

/// Seller action at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Cancel, paying `(X - z)^+` worth of shortfall.
    Cancel,
    /// Hold position through the next step.
    Wait,
    /// Rebalance by `beta` shares onto the grid level `target`, then hold
    /// through the next step.
    Trade { beta: f64, target: usize },
    /// Every continuation was inadmissible; cancellation is forced.
    Forced,
}

impl Action {
    pub fn label(&self) -> &'static str {
        match self {
            Action::Cancel => "cancel",
            Action::Wait => "wait",
            Action::Trade { .. } => "trade",
            Action::Forced => "forced",
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            Action::Trade { beta, .. } => *beta,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyEntry {
    pub action: Action,
    /// The outer maximum is attained by the buyer stopping now.
    pub buyer_exercise: bool,
    /// No successor read needed interpolation; exact-arithmetic state.
    pub interp_free: bool,
}

impl Default for PolicyEntry {
    fn default() -> Self {
        Self {
            action: Action::Cancel,
            buyer_exercise: false,
            interp_free: true,
        }
    }
}

/// Node indexing of the tree the DP runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Markovian payoffs: node = number of up moves, `k+1` nodes at step `k`.
    Recombining,
    /// Path-dependent payoffs: node = path prefix bits, `2^k` nodes.
    PathTree,
}

impl Topology {
    pub fn nodes_at(self, k: usize) -> usize {
        match self {
            Topology::Recombining => k + 1,
            Topology::PathTree => 1usize << k,
        }
    }

    /// Children (up, down) of `node` at step `k`.
    pub fn children(self, k: usize, node: usize) -> (usize, usize) {
        match self {
            Topology::Recombining => (node + 1, node),
            Topology::PathTree => (node | (1 << k), node),
        }
    }

    /// Up-move count of a node, which determines its price.
    pub fn ups(self, node: usize) -> usize {
        match self {
            Topology::Recombining => node,
            Topology::PathTree => node.count_ones() as usize,
        }
    }
}

/// DP output: shortfall-risk values over every state.
#[derive(Debug, Clone)]
pub struct RiskSurface {
    pub n: usize,
    pub grid: SolverGrid,
    pub topology: Topology,
    pub max_x: f64,
    /// `layers[k][(node * ny + yi) * nz + zi]`.
    pub layers: Vec<Vec<f64>>,
}

impl RiskSurface {
    #[inline]
    pub fn value(&self, k: usize, node: usize, yi: usize, zi: usize) -> f64 {
        let (ny, nz) = (self.grid.y.len(), self.grid.z.len());
        self.layers[k][(node * ny + yi) * nz + zi]
    }

    /// Risk at the initial state, linear in `z` between grid points; `y` must
    /// be a grid level.
    pub fn query(&self, z: f64, y: f64) -> Result<f64> {
        query_values(&self.grid, &self.layers[0], z, y)
    }
}

/// Seller policy and buyer worst-case exercise flags for steps `0..n`.
#[derive(Debug, Clone)]
pub struct Policy {
    pub n: usize,
    /// `layers[k][(node * ny + yi) * nz + zi]`; no entries at `k = n`.
    pub layers: Vec<Vec<PolicyEntry>>,
    ny: usize,
    nz: usize,
}

impl Policy {
    #[inline]
    pub fn entry(&self, k: usize, node: usize, yi: usize, zi: usize) -> PolicyEntry {
        self.layers[k][(node * self.ny + yi) * self.nz + zi]
    }
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub surface: RiskSurface,
    pub policy: Policy,
}

/// Everything a solve needs; payoff tables fix the topology.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub lattice: &'a BinomialLattice,
    pub tables: &'a PayoffTables,
    pub friction: FrictionParams,
    pub grid: &'a SolverGrid,
}

impl<'a> Instance<'a> {
    pub fn topology(&self) -> Topology {
        if self.tables.is_path_indexed() {
            Topology::PathTree
        } else {
            Topology::Recombining
        }
    }

    fn validate(&self) -> Result<()> {
        let max_x = self.tables.max_x();
        let z_max = *self.grid.z.last().unwrap();
        if z_max < max_x {
            return Err(Error::Grid(format!(
                "z grid too coarse: z_max = {z_max} does not bracket max X = {max_x}"
            )));
        }
        Ok(())
    }
}

/// Trade candidates per current share index: target indices ordered by
/// `(|beta|, beta)` so argmin ties resolve toward the smallest rebalance.
fn trade_orders(y: &[f64]) -> Vec<Vec<usize>> {
    (0..y.len())
        .map(|yi| {
            let mut order: Vec<usize> = (0..y.len()).filter(|&ti| ti != yi).collect();
            order.sort_by(|&a, &b| {
                let (ba, bb) = (y[a] - y[yi], y[b] - y[yi]);
                (ba.abs(), ba).partial_cmp(&(bb.abs(), bb)).unwrap()
            });
            order
        })
        .collect()
}

struct LayerCtx<'a> {
    lattice: &'a BinomialLattice,
    y_tab: &'a [f64],
    x_tab: &'a [f64],
    fp: FrictionParams,
    grid: &'a SolverGrid,
    trade_order: &'a [Vec<usize>],
    topology: Topology,
    k: usize,
    next: &'a [f64],
}

impl<'a> LayerCtx<'a> {
    /// Next-layer read at exact cash `zq >= 0`: stored value at grid points,
    /// linear interpolation between them, zero above the grid (risk vanishes
    /// beyond the largest payoff). The flag reports grid-exactness.
    #[inline]
    fn read(&self, node: usize, yi: usize, zq: f64) -> (f64, bool) {
        let z = &self.grid.z;
        let nz = z.len();
        debug_assert!(zq >= 0.0);
        if zq > z[nz - 1] {
            return (0.0, true);
        }
        let row_off = (node * self.grid.y.len() + yi) * nz;
        let i = z.partition_point(|&g| g <= zq) - 1;
        if zq == z[i] {
            return (self.next[row_off + i], true);
        }
        let w = (zq - z[i]) / (z[i + 1] - z[i]);
        let (lo, hi) = (self.next[row_off + i], self.next[row_off + i + 1]);
        (lo + w * (hi - lo), false)
    }

    /// One-step continuation from cash `z`, shares `y[yi]` at `node`; `None`
    /// when a successor mark-to-market goes negative (inadmissible).
    #[inline]
    fn continuation(&self, node: usize, s: f64, su: f64, sd: f64, z: f64, yi: usize) -> Option<(f64, bool)> {
        let y = self.grid.y[yi];
        let zu = mark_to_market(s, su, z, y, self.fp);
        if zu < 0.0 {
            return None;
        }
        let zd = mark_to_market(s, sd, z, y, self.fp);
        if zd < 0.0 {
            return None;
        }
        let (nu, nd) = self.topology.children(self.k, node);
        let (vu, eu) = self.read(nu, yi, zu);
        let (vd, ed) = self.read(nd, yi, zd);
        let p = self.lattice.up_prob;
        Some((p * vu + (1.0 - p) * vd, eu && ed))
    }

    /// Value, action, buyer flag at one interior state.
    fn step_value(&self, node: usize, yi: usize, zi: usize) -> (f64, PolicyEntry) {
        let z = self.grid.z[zi];
        debug_assert!(z >= 0.0, "negative cash is a caller bug");
        let y = self.grid.y[yi];
        let s = self.lattice.price(self.k, self.topology.ups(node));
        let (nu, nd) = self.topology.children(self.k, node);
        let su = self.lattice.price(self.k + 1, self.topology.ups(nu));
        let sd = self.lattice.price(self.k + 1, self.topology.ups(nd));

        let buyer_stop = (self.y_tab[node] - z).max(0.0);
        let cancel = (self.x_tab[node] - z).max(0.0);

        let mut best = cancel;
        let mut action = Action::Cancel;
        let mut any_continuation = false;
        let mut interp_free = true;

        if let Some((v, exact)) = self.continuation(node, s, su, sd, z, yi) {
            any_continuation = true;
            interp_free &= exact;
            if v < best {
                best = v;
                action = Action::Wait;
            }
        }
        for &ti in &self.trade_order[yi] {
            let beta = self.grid.y[ti] - y;
            let zt = post_trade_value(s, z, y, beta, self.fp);
            if zt < 0.0 {
                continue;
            }
            if let Some((v, exact)) = self.continuation(node, s, su, sd, zt, ti) {
                any_continuation = true;
                interp_free &= exact;
                if v < best {
                    best = v;
                    action = Action::Trade { beta, target: ti };
                }
            }
        }
        if !any_continuation {
            action = Action::Forced;
        }
        let value = buyer_stop.max(best);
        let buyer_exercise = buyer_stop >= best;
        (
            value,
            PolicyEntry {
                action,
                buyer_exercise,
                interp_free,
            },
        )
    }
}

fn terminal_layer_values(tables: &PayoffTables, grid: &SolverGrid, topology: Topology, n: usize) -> Vec<f64> {
    let y_n = &tables.tables().y[n];
    let (ny, nz) = (grid.y.len(), grid.z.len());
    let nodes = topology.nodes_at(n);
    let mut values = vec![0.0; nodes * ny * nz];
    exec::fill_chunks(&mut values, nz, |chunk, out| {
        let node = chunk / ny;
        let payoff = y_n[node];
        for (zi, slot) in out.iter_mut().enumerate() {
            *slot = (payoff - grid.z[zi]).max(0.0);
        }
    });
    values
}

/// Full backward sweep keeping every layer and the policy.
pub fn solve(inst: &Instance) -> Result<Solved> {
    inst.validate()?;
    let topology = inst.topology();
    let n = inst.lattice.n;
    let (ny, nz) = (inst.grid.y.len(), inst.grid.z.len());
    let total_states: usize = (0..=n).map(|k| topology.nodes_at(k) * ny * nz).sum();
    if total_states > MAX_SURFACE_STATES {
        return Err(Error::SizeLimit(format!(
            "surface would hold {total_states} states (cap {MAX_SURFACE_STATES}); \
             coarsen the grids or reduce n"
        )));
    }
    let trade_order = trade_orders(&inst.grid.y);
    let tabs = inst.tables.tables();

    let mut layers: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut policy_layers: Vec<Vec<PolicyEntry>> = Vec::with_capacity(n);
    layers.push(terminal_layer_values(inst.tables, inst.grid, topology, n));

    for k in (0..n).rev() {
        let nodes = topology.nodes_at(k);
        let ctx = LayerCtx {
            lattice: inst.lattice,
            y_tab: &tabs.y[k],
            x_tab: &tabs.x[k],
            fp: inst.friction,
            grid: inst.grid,
            trade_order: &trade_order,
            topology,
            k,
            next: layers.last().unwrap(),
        };
        let mut values = vec![0.0; nodes * ny * nz];
        let mut entries = vec![PolicyEntry::default(); nodes * ny * nz];
        exec::fill_chunks2(&mut values, &mut entries, nz, |chunk, vout, pout| {
            let (node, yi) = (chunk / ny, chunk % ny);
            for zi in 0..nz {
                let (v, e) = ctx.step_value(node, yi, zi);
                vout[zi] = v;
                pout[zi] = e;
            }
        });
        layers.push(values);
        policy_layers.push(entries);
    }
    layers.reverse();
    policy_layers.reverse();

    Ok(Solved {
        surface: RiskSurface {
            n,
            grid: inst.grid.clone(),
            topology,
            max_x: inst.tables.max_x(),
            layers,
        },
        policy: Policy {
            n,
            layers: policy_layers,
            ny,
            nz,
        },
    })
}

/// Root layer of the DP (step 0) computed with rolling storage; values and
/// query semantics match [`solve`] exactly.
#[derive(Debug, Clone)]
pub struct RootValues {
    pub n: usize,
    pub grid: SolverGrid,
    pub max_x: f64,
    /// `[(yi) * nz + zi]` at the single root node.
    pub values: Vec<f64>,
}

impl RootValues {
    pub fn query(&self, z: f64, y: f64) -> Result<f64> {
        query_values(&self.grid, &self.values, z, y)
    }
}

pub fn solve_root(inst: &Instance) -> Result<RootValues> {
    inst.validate()?;
    let topology = inst.topology();
    let n = inst.lattice.n;
    let (ny, nz) = (inst.grid.y.len(), inst.grid.z.len());
    let widest = topology.nodes_at(n) * ny * nz;
    if widest > MAX_LAYER_STATES {
        return Err(Error::SizeLimit(format!(
            "layer would hold {widest} states (cap {MAX_LAYER_STATES}); \
             coarsen the grids or reduce n"
        )));
    }
    let trade_order = trade_orders(&inst.grid.y);
    let tabs = inst.tables.tables();

    let mut next = terminal_layer_values(inst.tables, inst.grid, topology, n);
    for k in (0..n).rev() {
        let nodes = topology.nodes_at(k);
        let ctx = LayerCtx {
            lattice: inst.lattice,
            y_tab: &tabs.y[k],
            x_tab: &tabs.x[k],
            fp: inst.friction,
            grid: inst.grid,
            trade_order: &trade_order,
            topology,
            k,
            next: &next,
        };
        let mut values = vec![0.0; nodes * ny * nz];
        exec::fill_chunks(&mut values, nz, |chunk, vout| {
            let (node, yi) = (chunk / ny, chunk % ny);
            for (zi, slot) in vout.iter_mut().enumerate() {
                *slot = ctx.step_value(node, yi, zi).0;
            }
        });
        next = values;
    }
    Ok(RootValues {
        n,
        grid: inst.grid.clone(),
        max_x: inst.tables.max_x(),
        values: next,
    })
}

/// Shared query path: exact at grid points, linear between, rejecting
/// out-of-range cash and off-grid share levels.
fn query_values(grid: &SolverGrid, values: &[f64], z: f64, y: f64) -> Result<f64> {
    let z_max = *grid.z.last().unwrap();
    if !(0.0..=z_max).contains(&z) {
        return Err(Error::Query(format!("z = {z} outside [0, {z_max}]")));
    }
    let yi = grid
        .y_index(y)
        .ok_or_else(|| Error::Query(format!("y = {y} is not a grid share level")))?;
    let nz = grid.z.len();
    let row = &values[yi * nz..(yi + 1) * nz];
    let i = grid.z.partition_point(|&g| g <= z) - 1;
    if z == grid.z[i] {
        return Ok(row[i]);
    }
    let w = (z - grid.z[i]) / (grid.z[i + 1] - grid.z[i]);
    Ok(row[i] + w * (row[i + 1] - row[i]))
}

/// Spec-named alias for querying a solved surface.
pub fn query_risk(surface: &RiskSurface, z: f64, y: f64) -> Result<f64> {
    surface.query(z, y)
}
