//! Transaction-cost algebra.
//!
//! A trade of `beta != 0` shares at price `S` costs `max(delta, mu*|beta|*S)`;
//! the fixed fee `delta` puts a floor under every trade. All portfolio state
//! in this crate is carried as the *liquidation value* `z`: the cash obtained
//! by notionally closing the share position, closing cost included. The three
//! primitives below keep that convention consistent:
//!
//! - [`trade_cost`]: the cost `g(beta, S)` itself.
//! - [`post_trade_value`]: liquidation value after trading `beta` at price `S`.
//! - [`mark_to_market`]: liquidation value after a price move with no trade.

use crate::{require_finite, Error, Result};

/// Fixed fee `delta > 0` and proportional rate `mu` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionParams {
    pub delta: f64,
    pub mu: f64,
}

impl FrictionParams {
    pub fn new(delta: f64, mu: f64) -> Result<Self> {
        require_finite("delta", delta)?;
        require_finite("mu", mu)?;
        if delta <= 0.0 {
            return Err(Error::InvalidParam {
                name: "delta",
                reason: format!("must be > 0, got {delta}"),
            });
        }
        if mu <= 0.0 || mu >= 1.0 {
            return Err(Error::InvalidParam {
                name: "mu",
                reason: format!("must lie in (0, 1), got {mu}"),
            });
        }
        Ok(Self { delta, mu })
    }
}

/// Cost of trading `beta` shares at price `price`: `max(delta, mu*|beta|*price)`
/// for `beta != 0`, zero for the empty trade.
#[inline]
pub fn trade_cost(beta: f64, price: f64, fp: FrictionParams) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        (fp.mu * beta.abs() * price).max(fp.delta)
    }
}

/// Liquidation value after trading `beta` shares at price `price` from the
/// state (cash `z`, shares `y`). May be negative; callers check feasibility.
///
/// For `beta = 0` the continuity convention `z - delta` is returned; a zero
/// trade is never taken by the solver, which treats "wait" as a separate
/// costless branch.
#[inline]
pub fn post_trade_value(price: f64, z: f64, y: f64, beta: f64, fp: FrictionParams) -> f64 {
    if beta == 0.0 {
        return z - fp.delta;
    }
    z + trade_cost(y, price, fp) - trade_cost(y + beta, price, fp) - trade_cost(beta, price, fp)
}

/// Liquidation value after the price moves `s_old -> s_new` with the position
/// held unchanged.
#[inline]
pub fn mark_to_market(s_old: f64, s_new: f64, z: f64, y: f64, fp: FrictionParams) -> f64 {
    z + trade_cost(y, s_old, fp) + y * (s_new - s_old) - trade_cost(y, s_new, fp)
}

/// The feasible-trade set: trade sizes keeping the post-trade liquidation
/// value nonnegative, as a finite union of disjoint closed intervals.
///
/// The full liquidation `beta = -y` is always feasible for `y != 0` (its
/// post-trade value is exactly `z`) and shows up as a degenerate interval
/// when its neighbors are infeasible. `beta = 0` is never a member, even when
/// an interval's closure covers it: the zero trade would burn the fixed fee
/// for nothing and is handled by the solver as "wait".
#[derive(Debug, Clone, PartialEq)]
pub struct TradeSet {
    /// Disjoint closed intervals `[lo, hi]`, ordered, possibly degenerate.
    pub intervals: Vec<(f64, f64)>,
}

impl TradeSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Membership test; `beta = 0` is excluded by convention.
    pub fn contains(&self, beta: f64) -> bool {
        beta != 0.0 && self.intervals.iter().any(|&(lo, hi)| lo <= beta && beta <= hi)
    }
}

/// Computes the feasible-trade set in closed form.
///
/// Away from `beta = -y` the post-trade value agrees with the continuous
/// envelope `z + g(y,S) - max(delta, mu*|y+beta|*S) - max(delta, mu*|beta|*S)`,
/// a concave piecewise-linear function of `beta` whose nonnegativity region is
/// a single interval. Slope breakpoints sit at `beta = +-m` and `beta = -y +- m`
/// with `m = delta/(mu*S)`; interval endpoints are roots of linear pieces. The
/// point `beta = -y` (value exactly `z`) is appended when it falls outside.
pub fn trade_set(price: f64, z: f64, y: f64, fp: FrictionParams) -> TradeSet {
    debug_assert!(price > 0.0 && z >= 0.0);
    let m = fp.delta / (fp.mu * price);
    let envelope = |beta: f64| -> f64 {
        z + trade_cost(y, price, fp)
            - (fp.mu * (y + beta).abs() * price).max(fp.delta)
            - (fp.mu * beta.abs() * price).max(fp.delta)
    };

    // Concave piecewise-linear: walk the breakpoints left to right and find
    // the first/last sign change by solving the linear piece in closed form.
    let mut knots = [-y - m, -y + m, -m, m];
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let peak = knots
        .iter()
        .map(|&b| envelope(b))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut intervals: Vec<(f64, f64)> = Vec::new();
    if peak >= 0.0 {
        let slope = 2.0 * fp.mu * price;
        let lo = {
            // Leftmost knot with envelope >= 0; extend left along slope +2muS
            // or walk back inside the knot list while the piece stays negative.
            let mut i = 0;
            while envelope(knots[i]) < 0.0 {
                i += 1;
            }
            if i == 0 {
                // envelope(b) = envelope(k0) + slope*(b - k0) for b <= k0
                knots[0] - envelope(knots[0]) / slope
            } else {
                // Root inside [knots[i-1], knots[i]].
                let (a, b) = (knots[i - 1], knots[i]);
                let (fa, fb) = (envelope(a), envelope(b));
                a + (b - a) * (-fa) / (fb - fa)
            }
        };
        let hi = {
            let mut i = knots.len() - 1;
            while envelope(knots[i]) < 0.0 {
                i -= 1;
            }
            if i == knots.len() - 1 {
                knots[i] + envelope(knots[i]) / slope
            } else {
                let (a, b) = (knots[i], knots[i + 1]);
                let (fa, fb) = (envelope(a), envelope(b));
                a + (b - a) * fa / (fa - fb)
            }
        };
        if lo == 0.0 && hi == 0.0 {
            // Only the null trade satisfies the envelope; excluded by convention.
        } else {
            intervals.push((lo, hi));
        }
    }

    if y != 0.0 && z >= 0.0 {
        let covered = intervals.iter().any(|&(lo, hi)| lo <= -y && -y <= hi);
        if !covered {
            intervals.push((-y, -y));
        }
    }
    intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    TradeSet { intervals }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(delta: f64, mu: f64) -> FrictionParams {
        FrictionParams::new(delta, mu).unwrap()
    }

    #[test]
    fn params_validated() {
        assert!(FrictionParams::new(0.0, 0.01).is_err());
        assert!(FrictionParams::new(0.5, 0.0).is_err());
        assert!(FrictionParams::new(0.5, 1.0).is_err());
        assert!(FrictionParams::new(f64::NAN, 0.5).is_err());
        assert!(FrictionParams::new(0.5, 0.01).is_ok());
    }

    #[test]
    fn trade_cost_examples() {
        let f = fp(0.5, 0.01);
        assert_eq!(trade_cost(2.0, 10.0, f), 0.5);
        assert_eq!(trade_cost(0.0, 123.0, f), 0.0);
        assert_eq!(trade_cost(10.0, 100.0, f), 10.0);
        assert_eq!(trade_cost(-10.0, 100.0, f), 10.0);
    }

    #[test]
    fn post_trade_examples() {
        let f = fp(0.5, 0.01);
        // Full liquidation preserves liquidation value.
        for y in [1.0, -2.5, 0.25] {
            assert_eq!(post_trade_value(100.0, 7.0, y, -y, f), 7.0);
        }
        assert_eq!(post_trade_value(100.0, 10.0, 0.0, 1.0, f), 8.0);
        // Continuity convention at beta = 0.
        assert_eq!(post_trade_value(100.0, 10.0, 3.0, 0.0, f), 9.5);
    }

    #[test]
    fn mark_to_market_examples() {
        let f = fp(0.5, 0.01);
        assert_eq!(mark_to_market(100.0, 110.0, 10.0, 0.0, f), 10.0);
        let v = mark_to_market(100.0, 110.0, 10.0, 1.0, f);
        assert!((v - 19.9).abs() < 1e-12, "got {v}");
        assert_eq!(mark_to_market(100.0, 100.0, 10.0, 1.0, f), 10.0);
    }

    #[test]
    fn trade_set_empty_when_cash_below_fee() {
        let f = fp(0.5, 0.01);
        let ts = trade_set(100.0, 0.3, 0.0, f);
        assert!(ts.is_empty());
    }

    #[test]
    fn trade_set_liquidation_singleton() {
        // y=1, S=100, z=0: the envelope touches zero only at beta = -1/2
        // (where both legs sit exactly at the fee floor) and the liquidation
        // point beta = -1 has value z = 0. Two degenerate intervals.
        let f = fp(0.5, 0.01);
        let ts = trade_set(100.0, 0.0, 1.0, f);
        assert_eq!(ts.intervals.len(), 2);
        let (a, b) = ts.intervals[0];
        assert!((a + 1.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12);
        let (a, b) = ts.intervals[1];
        assert!((a + 0.5).abs() < 1e-12 && (b + 0.5).abs() < 1e-12);
        assert!(ts.contains(-1.0));
        assert!(!ts.contains(-0.75));
    }

    #[test]
    fn liquidation_always_member() {
        let f = fp(0.5, 0.01);
        for y in [2.0, -1.5, 0.25, -0.25] {
            for z in [0.0, 1.0, 25.0] {
                let ts = trade_set(100.0, z, y, f);
                assert!(ts.contains(-y), "-y={} z={z} not in {ts:?}", -y);
            }
        }
    }

    #[test]
    fn zero_trade_never_member() {
        let f = fp(0.5, 0.01);
        let ts = trade_set(100.0, 20.0, 0.0, f);
        assert!(!ts.is_empty());
        assert!(!ts.contains(0.0));
    }

    #[test]
    fn membership_matches_sign_of_h() {
        // Dense scan against the defining inequality h >= 0, skipping probes
        // adjacent to the structural breakpoints of h.
        let f = fp(0.5, 0.01);
        let cases = [
            (100.0, 3.0, 1.0),
            (100.0, 0.0, 1.0),
            (80.0, 5.0, -2.0),
            (120.0, 1.4, 0.0),
            (100.0, 2.4, 0.5),
        ];
        for (s, z, y) in cases {
            let ts = trade_set(s, z, y, f);
            let m = f.delta / (f.mu * s);
            let knots = [-y - m, -y + m, -m, m, -y, 0.0];
            let step = 1e-4;
            let mut probes_checked = 0usize;
            for i in -60_000i64..=60_000 {
                let beta = i as f64 * step;
                if beta == 0.0 || knots.iter().any(|k| (beta - k).abs() <= step) {
                    continue;
                }
                let h = post_trade_value(s, z, y, beta, f);
                if h.abs() < 1e-9 {
                    // Sign is float-ambiguous exactly at an interval root.
                    continue;
                }
                assert_eq!(
                    ts.contains(beta),
                    h >= 0.0,
                    "s={s} z={z} y={y} beta={beta} h={h} ts={ts:?}"
                );
                probes_checked += 1;
            }
            assert!(probes_checked > 100_000);
        }
    }
}
