//! Game payoff pairs and their lattice discretization.
//!
//! A game option carries two progressively measurable payoffs `Y <= X`: the
//! buyer receives `Y` on exercise, `X` on seller cancellation. The built-ins
//! follow the standard convention that the cancellation penalty vanishes at
//! maturity (`X_T = Y_T`).

use crate::model::BinomialLattice;
use crate::{require_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    GamePut,
    GameCall,
    /// Put on the running minimum; path dependent.
    LookbackGamePut,
}

/// Maximum lattice depth accepted for path-dependent payoffs: the solver then
/// works on the non-recombining tree with `2^n` leaves.
pub const MAX_PATH_DEPENDENT_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffPair {
    pub kind: PayoffKind,
    pub strike: f64,
    pub penalty: f64,
}

impl PayoffPair {
    pub fn new(kind: PayoffKind, strike: f64, penalty: f64) -> Result<Self> {
        require_finite("strike", strike)?;
        require_finite("penalty", penalty)?;
        if strike <= 0.0 {
            return Err(Error::InvalidParam {
                name: "strike",
                reason: format!("must be > 0, got {strike}"),
            });
        }
        if penalty < 0.0 {
            return Err(Error::InvalidParam {
                name: "penalty",
                reason: format!("must be >= 0, got {penalty}"),
            });
        }
        Ok(Self {
            kind,
            strike,
            penalty,
        })
    }

    pub fn game_put(strike: f64, penalty: f64) -> Result<Self> {
        Self::new(PayoffKind::GamePut, strike, penalty)
    }

    pub fn game_call(strike: f64, penalty: f64) -> Result<Self> {
        Self::new(PayoffKind::GameCall, strike, penalty)
    }

    pub fn lookback_game_put(strike: f64, penalty: f64) -> Result<Self> {
        Self::new(PayoffKind::LookbackGamePut, strike, penalty)
    }

    pub fn is_path_dependent(&self) -> bool {
        matches!(self.kind, PayoffKind::LookbackGamePut)
    }

    /// Uniform Lipschitz constant of both payoff functionals in the sup norm.
    pub fn lipschitz_constant(&self) -> f64 {
        1.0
    }

    /// Polynomial growth bound `(C, p)` with `|Y| + |X| <= C (1 + ||path||^p)`.
    pub fn growth_bounds(&self) -> (f64, f64) {
        match self.kind {
            PayoffKind::GamePut | PayoffKind::LookbackGamePut => {
                (2.0 * self.strike + self.penalty, 1.0)
            }
            PayoffKind::GameCall => (2.0 + self.penalty, 1.0),
        }
    }

    /// Evaluates `(Y, X)` on a path prefix; the last entry is the evaluation
    /// time. Depends only on the prefix.
    pub fn evaluate(&self, times: &[f64], prices: &[f64], maturity: f64) -> (f64, f64) {
        assert!(!prices.is_empty() && times.len() == prices.len());
        let t = *times.last().unwrap();
        let s_t = *prices.last().unwrap();
        debug_assert!(prices.iter().all(|&p| p > 0.0));
        let running_min = prices.iter().cloned().fold(f64::INFINITY, f64::min);
        self.evaluate_at(s_t, running_min, t >= maturity)
    }

    /// Incremental form of [`evaluate`](Self::evaluate) for callers tracking
    /// the prefix state themselves: current price and running minimum.
    pub fn evaluate_at(&self, price: f64, running_min: f64, at_maturity: bool) -> (f64, f64) {
        let y = match self.kind {
            PayoffKind::GamePut => (self.strike - price).max(0.0),
            PayoffKind::GameCall => (price - self.strike).max(0.0),
            PayoffKind::LookbackGamePut => (self.strike - running_min).max(0.0),
        };
        let x = if at_maturity { y } else { y + self.penalty };
        (y, x)
    }
}

/// Discretized payoffs on the lattice: Markovian kinds index by node `(k, j)`,
/// path-dependent kinds by the path prefix id (bit `i` set when step `i+1`
/// moved up).
#[derive(Debug, Clone)]
pub enum PayoffTables {
    Node(Tables),
    Path(Tables),
}

#[derive(Debug, Clone)]
pub struct Tables {
    /// `y[k][idx]`, buyer payoff.
    pub y: Vec<Vec<f64>>,
    /// `x[k][idx]`, seller payoff; equals `y[n]` at maturity.
    pub x: Vec<Vec<f64>>,
}

impl PayoffTables {
    pub fn tables(&self) -> &Tables {
        match self {
            PayoffTables::Node(t) | PayoffTables::Path(t) => t,
        }
    }

    pub fn is_path_indexed(&self) -> bool {
        matches!(self, PayoffTables::Path(_))
    }

    /// Largest seller payoff anywhere on the tree; bounds every DP value.
    pub fn max_x(&self) -> f64 {
        self.tables()
            .x
            .iter()
            .flat_map(|row| row.iter().cloned())
            .fold(0.0, f64::max)
    }
}

pub fn evaluate_on_lattice(pair: &PayoffPair, lattice: &BinomialLattice) -> Result<PayoffTables> {
    let n = lattice.n;
    if pair.is_path_dependent() {
        if n > MAX_PATH_DEPENDENT_STEPS {
            return Err(Error::SizeLimit(format!(
                "path-dependent payoff needs a non-recombining tree; n = {n} exceeds \
                 the supported maximum {MAX_PATH_DEPENDENT_STEPS}"
            )));
        }
        let mut y = Vec::with_capacity(n + 1);
        let mut x = Vec::with_capacity(n + 1);
        // running_min[p] for paths of the current length.
        let mut running_min = vec![lattice.spot];
        for k in 0..=n {
            if k > 0 {
                let parent_mask = (1usize << (k - 1)) - 1;
                let mut next = vec![0.0; 1 << k];
                for (p, slot) in next.iter_mut().enumerate() {
                    let price = lattice.price(k, p.count_ones() as usize);
                    *slot = running_min[p & parent_mask].min(price);
                }
                running_min = next;
            }
            let yk: Vec<f64> = running_min
                .iter()
                .map(|&m| (pair.strike - m).max(0.0))
                .collect();
            let xk: Vec<f64> = if k < n {
                yk.iter().map(|v| v + pair.penalty).collect()
            } else {
                yk.clone()
            };
            y.push(yk);
            x.push(xk);
        }
        return Ok(PayoffTables::Path(Tables { y, x }));
    }

    let mut y = Vec::with_capacity(n + 1);
    let mut x = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let yk: Vec<f64> = (0..=k)
            .map(|j| {
                let s = lattice.price(k, j);
                match pair.kind {
                    PayoffKind::GamePut => (pair.strike - s).max(0.0),
                    PayoffKind::GameCall => (s - pair.strike).max(0.0),
                    PayoffKind::LookbackGamePut => unreachable!(),
                }
            })
            .collect();
        let xk: Vec<f64> = if k < n {
            yk.iter().map(|v| v + pair.penalty).collect()
        } else {
            yk.clone()
        };
        y.push(yk);
        x.push(xk);
    }
    Ok(PayoffTables::Node(Tables { y, x }))
}
