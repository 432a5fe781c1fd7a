//! Invariant suites over solved surfaces.
//!
//! Each check returns human-readable violation descriptions; an empty vector
//! means the property held everywhere. The CLI runs these under `--check` and
//! maps any violation to a nonzero exit.

use crate::friction::FrictionParams;
use crate::model::BinomialLattice;
use crate::payoff::PayoffTables;
use crate::solver::{solve_root, Instance, Policy, RiskSurface, SolverGrid};

const REPORT_CAP: usize = 8;

fn push(violations: &mut Vec<String>, msg: String) {
    if violations.len() < REPORT_CAP {
        violations.push(msg);
    }
}

/// `0 <= G <= max X` everywhere.
pub fn check_bounds(surface: &RiskSurface) -> Vec<String> {
    let mut out = Vec::new();
    let bound = surface.max_x + 1e-12;
    for (k, layer) in surface.layers.iter().enumerate() {
        for (idx, &v) in layer.iter().enumerate() {
            if !(0.0..=bound).contains(&v) {
                push(&mut out, format!("bounds: G = {v} at k={k} idx={idx}"));
            }
        }
    }
    out
}

/// `G >= (Y - z)^+` everywhere: the buyer can always stop now.
pub fn check_lower_envelope(surface: &RiskSurface, tables: &PayoffTables) -> Vec<String> {
    let mut out = Vec::new();
    let (ny, nz) = (surface.grid.y.len(), surface.grid.z.len());
    let y_tab = &tables.tables().y;
    for (k, layer) in surface.layers.iter().enumerate() {
        let nodes = surface.topology.nodes_at(k);
        for node in 0..nodes {
            let payoff = y_tab[k][node];
            for yi in 0..ny {
                for (zi, &z) in surface.grid.z.iter().enumerate() {
                    let v = layer[(node * ny + yi) * nz + zi];
                    let floor = (payoff - z).max(0.0);
                    if v < floor - 1e-12 {
                        push(
                            &mut out,
                            format!("envelope: G = {v} < {floor} at k={k} node={node} y={} z={z}", surface.grid.y[yi]),
                        );
                    }
                }
            }
        }
    }
    out
}

/// Monotone non-increasing everywhere, and 1-Lipschitz at `tight_tol` along
/// adjacent grid pairs whose states needed no interpolated successor reads
/// (where the DP arithmetic is exact).
///
/// Between other pairs the 1-Lipschitz property is not a theorem of the
/// discrete game: a share position whose next-step mark-to-market turns
/// admissible between two cash levels can change the available branch set,
/// and the resulting value cliff does not shrink with the grid spacing. Those
/// pairs are summarized by [`lipschitz_excess_diagnostic`] instead.
pub fn check_cash_monotone_lipschitz(
    surface: &RiskSurface,
    policy: &Policy,
    tight_tol: f64,
) -> Vec<String> {
    let mut out = Vec::new();
    let (ny, nz) = (surface.grid.y.len(), surface.grid.z.len());
    let z = &surface.grid.z;
    for (k, layer) in surface.layers.iter().enumerate() {
        let nodes = surface.topology.nodes_at(k);
        for node in 0..nodes {
            for yi in 0..ny {
                let row = &layer[(node * ny + yi) * nz..(node * ny + yi) * nz + nz];
                for zi in 0..nz - 1 {
                    let (lo, hi) = (row[zi], row[zi + 1]);
                    let dz = z[zi + 1] - z[zi];
                    if hi > lo + tight_tol {
                        push(
                            &mut out,
                            format!("monotone: G rose {lo} -> {hi} at k={k} node={node} yi={yi} z={}", z[zi]),
                        );
                    }
                    let exact = k == surface.n || {
                        let a = policy.entry(k, node, yi, zi);
                        let b = policy.entry(k, node, yi, zi + 1);
                        a.interp_free && b.interp_free
                    };
                    if exact && lo - hi > dz + tight_tol {
                        push(
                            &mut out,
                            format!(
                                "lipschitz: drop {} over dz = {dz} at k={k} node={node} yi={yi} z={}",
                                lo - hi,
                                z[zi]
                            ),
                        );
                    }
                }
            }
        }
    }
    out
}

/// Lipschitz diagnostic over the interpolating pairs: counts drops exceeding
/// one extra grid spacing (the interpolation-smear allowance) and reports the
/// worst drop-to-spacing ratio. Nonzero counts mark admissibility cliffs;
/// they are reported, not failed.
pub fn lipschitz_excess_diagnostic(surface: &RiskSurface, policy: &Policy) -> (usize, f64) {
    let (ny, nz) = (surface.grid.y.len(), surface.grid.z.len());
    let z = &surface.grid.z;
    let mut count = 0usize;
    let mut worst_ratio = 0.0f64;
    for (k, layer) in surface.layers.iter().enumerate() {
        if k == surface.n {
            continue;
        }
        let nodes = surface.topology.nodes_at(k);
        for node in 0..nodes {
            for yi in 0..ny {
                let row = &layer[(node * ny + yi) * nz..(node * ny + yi) * nz + nz];
                for zi in 0..nz - 1 {
                    let a = policy.entry(k, node, yi, zi);
                    let b = policy.entry(k, node, yi, zi + 1);
                    if a.interp_free && b.interp_free {
                        continue;
                    }
                    let dz = z[zi + 1] - z[zi];
                    let drop = row[zi] - row[zi + 1];
                    if drop > 2.0 * dz + 1e-9 {
                        count += 1;
                    }
                    worst_ratio = worst_ratio.max(drop / dz);
                }
            }
        }
    }
    (count, worst_ratio)
}

/// Cash dominates shares at the root: `R(z, y) <= R(z, 0) + tol`.
pub fn check_cash_dominates_shares(surface: &RiskSurface, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    let (ny, nz) = (surface.grid.y.len(), surface.grid.z.len());
    let layer = &surface.layers[0];
    let y0 = surface
        .grid
        .y_index(0.0)
        .expect("grid invariant: contains 0");
    for yi in 0..ny {
        for zi in 0..nz {
            let with_shares = layer[yi * nz + zi];
            let flat = layer[y0 * nz + zi];
            if with_shares > flat + tol {
                push(
                    &mut out,
                    format!(
                        "cash-dominates: R(z={}, y={}) = {with_shares} > R(z, 0) = {flat}",
                        surface.grid.z[zi],
                        surface.grid.y[yi]
                    ),
                );
            }
        }
    }
    out
}

/// Raising either friction parameter weakly raises the risk at every root
/// state. One rolling solve per parameter combination.
pub fn check_friction_monotonicity(
    lattice: &BinomialLattice,
    tables: &PayoffTables,
    grid: &SolverGrid,
    deltas: &[f64],
    mus: &[f64],
    tol: f64,
) -> crate::Result<Vec<String>> {
    let mut out = Vec::new();
    let states = grid.y.len() * grid.z.len();
    let mut risks: Vec<Vec<f64>> = Vec::new();
    for &delta in deltas {
        for &mu in mus {
            let fp = FrictionParams::new(delta, mu)?;
            let inst = Instance {
                lattice,
                tables,
                friction: fp,
                grid,
            };
            risks.push(solve_root(&inst)?.values);
        }
    }
    let idx = |di: usize, mi: usize| di * mus.len() + mi;
    let mut compare = |lo: &[f64], hi: &[f64], what: String| {
        for si in 0..states {
            if lo[si] > hi[si] + tol {
                push(
                    &mut out,
                    format!(
                        "friction: R fell {} -> {} {what} at z={} y={}",
                        lo[si],
                        hi[si],
                        grid.z[si % grid.z.len()],
                        grid.y[si / grid.z.len()]
                    ),
                );
                return;
            }
        }
    };
    for di in 0..deltas.len() {
        for mi in 0..mus.len() {
            if di + 1 < deltas.len() {
                compare(
                    &risks[idx(di, mi)],
                    &risks[idx(di + 1, mi)],
                    format!("raising delta {} -> {}", deltas[di], deltas[di + 1]),
                );
            }
            if mi + 1 < mus.len() {
                compare(
                    &risks[idx(di, mi)],
                    &risks[idx(di, mi + 1)],
                    format!("raising mu {} -> {}", mus[mi], mus[mi + 1]),
                );
            }
        }
    }
    Ok(out)
}

/// The full surface suite (everything that does not need extra solves).
pub fn run_surface_checks(
    surface: &RiskSurface,
    policy: &Policy,
    tables: &PayoffTables,
) -> Vec<String> {
    let mut out = check_bounds(surface);
    out.extend(check_lower_envelope(surface, tables));
    out.extend(check_cash_monotone_lipschitz(surface, policy, 1e-9));
    out.extend(check_cash_dominates_shares(surface, 1e-6));
    out
}
