//! Market models: geometric Brownian price, its binomial approximation,
//! fine-grid path simulation, and Skorokhod first-passage embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{require_finite, Error, Result};

/// Black-Scholes primitives: the price process is
/// `S_t = s * exp(kappa * W_t + (vartheta - kappa^2/2) * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Initial stock price `s > 0`.
    pub spot: f64,
    /// Volatility `kappa > 0`.
    pub kappa: f64,
    /// Drift parameter `vartheta`.
    pub vartheta: f64,
    /// Maturity `T > 0`.
    pub maturity: f64,
}

impl MarketParams {
    pub fn new(spot: f64, kappa: f64, vartheta: f64, maturity: f64) -> Result<Self> {
        require_finite("s", spot)?;
        require_finite("kappa", kappa)?;
        require_finite("vartheta", vartheta)?;
        require_finite("T", maturity)?;
        for (name, v) in [("s", spot), ("kappa", kappa), ("T", maturity)] {
            if v <= 0.0 {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        Ok(Self {
            spot,
            kappa,
            vartheta,
            maturity,
        })
    }
}

/// Real-world probability of an up move in the n-step binomial model:
/// `p = 1 / (exp((kappa - 2*vartheta/kappa) * sqrt(T/n)) + 1)`.
///
/// The exponent is evaluated as `(kappa^2 - 2*vartheta)/kappa` so that the
/// driftless special case `vartheta = kappa^2/2` yields exactly 1/2.
pub fn binomial_up_prob(params: &MarketParams, n: usize) -> f64 {
    assert!(n >= 1, "n must be >= 1");
    let a = (params.kappa * params.kappa - 2.0 * params.vartheta) / params.kappa;
    let h = params.maturity / n as f64;
    1.0 / ((a * h.sqrt()).exp() + 1.0)
}

/// Radon-Nikodym density of the martingale measure restricted to time `t`:
/// `Z_t = exp(-(vartheta/kappa) W_t - (vartheta/kappa)^2 t / 2)`.
pub fn rn_density(params: &MarketParams, w_t: f64, t: f64) -> f64 {
    let r = params.vartheta / params.kappa;
    (-r * w_t - 0.5 * r * r * t).exp()
}

/// Recombining binomial lattice: node `(k, j)` after `j` up moves out of `k`
/// steps carries price `s * exp(log_step * (2j - k))`.
#[derive(Debug, Clone)]
pub struct BinomialLattice {
    pub n: usize,
    /// Step length `T/n`.
    pub step: f64,
    /// Real-world up probability `p^(n)`.
    pub up_prob: f64,
    /// Log-price increment per step, `kappa * sqrt(T/n)`.
    pub log_step: f64,
    pub spot: f64,
}

impl BinomialLattice {
    pub fn price(&self, k: usize, j: usize) -> f64 {
        debug_assert!(j <= k && k <= self.n);
        self.spot * (self.log_step * (2.0 * j as f64 - k as f64)).exp()
    }
}

pub fn build_lattice(params: &MarketParams, n: usize) -> BinomialLattice {
    assert!(n >= 1, "n must be >= 1");
    let h = params.maturity / n as f64;
    BinomialLattice {
        n,
        step: h,
        up_prob: binomial_up_prob(params, n),
        log_step: params.kappa * h.sqrt(),
        spot: params.spot,
    }
}

/// A simulated path of `W*_t = (ln S_t - ln s)/kappa` on a uniform fine grid,
/// with prices derived exactly as `s * exp(kappa * w)`.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub w_star: Vec<f64>,
    pub prices: Vec<f64>,
}

impl PathSample {
    /// Grid index corresponding to the maturity `T`.
    pub fn maturity_index(&self, steps_per_maturity: usize) -> usize {
        steps_per_maturity.min(self.times.len() - 1)
    }
}

/// Simulates `W*` with drift `(vartheta - kappa^2/2)/kappa` and unit diffusion
/// on `steps_per_maturity` grid points per `[0, T]`, extended to
/// `horizon_factor * T` so the embedding can complete. Deterministic in the
/// seed.
pub fn sample_path(
    params: &MarketParams,
    steps_per_maturity: usize,
    horizon_factor: f64,
    rng_seed: u64,
) -> PathSample {
    assert!(steps_per_maturity >= 1);
    assert!(horizon_factor >= 1.0);
    let dt = params.maturity / steps_per_maturity as f64;
    let total = (steps_per_maturity as f64 * horizon_factor).ceil() as usize;
    let drift = (params.vartheta - 0.5 * params.kappa * params.kappa) / params.kappa * dt;
    let vol = dt.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut times = Vec::with_capacity(total + 1);
    let mut w_star = Vec::with_capacity(total + 1);
    let mut prices = Vec::with_capacity(total + 1);
    let mut w = 0.0_f64;
    for i in 0..=total {
        if i > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            w += drift + vol * z;
        }
        times.push(i as f64 * dt);
        w_star.push(w);
        prices.push(params.spot * (params.kappa * w).exp());
    }
    PathSample {
        times,
        w_star,
        prices,
    }
}

/// First-passage skeleton of a path: `hit_indices[k]` is the first grid index
/// at which `|w_star - w_star[hit_indices[k-1]]| >= sqrt(T/n)`, `signs[k-1]`
/// the direction of that passage. `complete` is false when the path ends
/// before all `n` passages occur.
#[derive(Debug, Clone)]
pub struct EmbeddedWalk {
    pub hit_indices: Vec<usize>,
    pub signs: Vec<i8>,
    pub complete: bool,
}

pub fn extract_embedding(path: &PathSample, n: usize, maturity: f64) -> EmbeddedWalk {
    assert!(n >= 1);
    let barrier = (maturity / n as f64).sqrt();
    let mut hit_indices = Vec::with_capacity(n + 1);
    let mut signs = Vec::with_capacity(n);
    hit_indices.push(0);
    let mut anchor = path.w_star[0];
    let mut i = 1;
    while signs.len() < n && i < path.w_star.len() {
        let d = path.w_star[i] - anchor;
        if d.abs() >= barrier {
            hit_indices.push(i);
            signs.push(if d > 0.0 { 1 } else { -1 });
            anchor = path.w_star[i];
        }
        i += 1;
    }
    let complete = signs.len() == n;
    EmbeddedWalk {
        hit_indices,
        signs,
        complete,
    }
}

/// The same path observed on every other grid point: the coarse-grid view of
/// an already-simulated Brownian path, used to compare embedding overshoot
/// across resolutions on a common realization.
pub fn decimate_path(path: &PathSample) -> PathSample {
    assert!(path.times.len() % 2 == 1, "need an even step count");
    let pick = |v: &[f64]| v.iter().step_by(2).cloned().collect();
    PathSample {
        times: pick(&path.times),
        w_star: pick(&path.w_star),
        prices: pick(&path.prices),
    }
}

/// Derives the seed for an indexed item (path, run) from a master seed, so
/// item `i` reproduces independently of batch size. splitmix64 mixing.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
