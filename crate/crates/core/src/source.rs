//! Markov source models: the scalar linear-Gaussian source and finite-state chains.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::belief::{Grid, GridBelief, SimplexBelief};
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Normal density with the given mean and standard deviation.
pub fn normal_pdf(z: f64, mean: f64, std: f64) -> f64 {
    let u = (z - mean) / std;
    INV_SQRT_2PI / std * (-0.5 * u * u).exp()
}

/// A scalar transition kernel with density `phi(z | x)`.
///
/// Anything implementing this can drive the grid filter; the linear-Gaussian
/// source is the built-in instance.
pub trait ScalarKernel: Send + Sync {
    fn density(&self, z: f64, x: f64) -> f64;
    fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64;
}

/// Distribution of the initial state `x_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDistribution {
    Density { mean: f64, std: f64 },
    PointMass(f64),
    /// Start from the invariant distribution of the source.
    Stationary,
}

/// `x_{t+1} = a x_t + w_t` with `w_t ~ N(0, sigma^2)` i.i.d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianSource {
    coefficient: f64,
    noise_std: f64,
    initial: InitialDistribution,
}

impl LinearGaussianSource {
    pub fn new(coefficient: f64, noise_std: f64, initial: InitialDistribution) -> Result<Self> {
        if !(noise_std > 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidModel(format!(
                "noise_std must be positive, got {noise_std}"
            )));
        }
        if !coefficient.is_finite() {
            return Err(Error::InvalidModel("coefficient must be finite".into()));
        }
        if let InitialDistribution::Density { std, .. } = initial {
            if !(std > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "initial std must be positive, got {std}"
                )));
            }
        }
        if initial == InitialDistribution::Stationary && coefficient.abs() >= 1.0 {
            return Err(Error::NoInvariantDistribution(format!(
                "|a| = {} >= 1",
                coefficient.abs()
            )));
        }
        Ok(Self {
            coefficient,
            noise_std,
            initial,
        })
    }

    /// Noiseless dynamics `x_{t+1} = a x_t`.
    ///
    /// Test mode only: the transition has no density, so every design and
    /// filtering path refuses a source built this way.
    pub fn deterministic(coefficient: f64) -> Self {
        Self {
            coefficient,
            noise_std: 0.0,
            initial: InitialDistribution::PointMass(0.0),
        }
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn initial(&self) -> InitialDistribution {
        self.initial
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise_std == 0.0
    }

    /// Standard deviation of the invariant law, `sigma / sqrt(1 - a^2)`.
    pub fn stationary_std(&self) -> Result<f64> {
        let a = self.coefficient;
        if a.abs() >= 1.0 {
            return Err(Error::NoInvariantDistribution(format!("|a| = {} >= 1", a.abs())));
        }
        Ok(self.noise_std / (1.0 - a * a).sqrt())
    }

    /// `phi(z | x)`: normal density with mean `a x` and std `sigma`.
    pub fn transition_density(&self, z: f64, x: f64) -> f64 {
        normal_pdf(z, self.coefficient * x, self.noise_std)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let mean = self.coefficient * x;
        if self.is_deterministic() {
            return mean;
        }
        let noise = Normal::new(0.0, self.noise_std).expect("positive std");
        mean + noise.sample(rng)
    }

    /// Invariant law `N(0, sigma^2 / (1 - a^2))` sampled on `grid`.
    pub fn invariant_distribution(&self, grid: &Grid) -> Result<GridBelief> {
        let std = self.stationary_std()?;
        GridBelief::from_fn(grid.clone(), |x| normal_pdf(x, 0.0, std))
    }

    /// Sup-norm and Lipschitz constant of `phi(. | x)`, uniform in `x`.
    pub fn density_bounds(&self) -> Result<DensityBounds> {
        if self.is_deterministic() {
            return Err(Error::InvalidModel("deterministic source has no density".into()));
        }
        let sigma = self.noise_std;
        let c = INV_SQRT_2PI / sigma;
        // |d/dz phi| = |u| / sigma^2 * pdf(u); unimodal in |u| on [0, inf).
        let slope = |u: f64| u / (sigma * sigma) * normal_pdf(u, 0.0, sigma);
        let c1 = golden_max(slope, 0.0, 10.0 * sigma, 1e-12 * sigma);
        DensityBounds::new(c, c1)
    }
}

impl ScalarKernel for LinearGaussianSource {
    fn density(&self, z: f64, x: f64) -> f64 {
        self.transition_density(z, x)
    }

    fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.sample_next(x, rng)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        }
    }
    f(0.5 * (lo + hi))
}

/// Uniform bound `C` and Lipschitz constant `C1` of the transition density.
///
/// Every belief reachable after one filter step is a density bounded by `C`
/// and `C1`-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityBounds {
    pub sup: f64,
    pub lipschitz: f64,
}

impl DensityBounds {
    pub fn new(sup: f64, lipschitz: f64) -> Result<Self> {
        if !(sup > 0.0) || !(lipschitz >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "density bounds need C > 0 and C1 >= 0, got ({sup}, {lipschitz})"
            )));
        }
        Ok(Self { sup, lipschitz })
    }
}

/// Finite-state Markov chain with real-valued state labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteChain {
    transition: Vec<Vec<f64>>,
    initial: SimplexBelief,
    support: Vec<f64>,
    strictly_positive: bool,
}

impl FiniteChain {
    /// Chain with states labelled `0, 1, ..., n-1`.
    pub fn new(transition: Vec<Vec<f64>>, initial: SimplexBelief) -> Result<Self> {
        let support = (0..transition.len()).map(|i| i as f64).collect();
        Self::with_support(transition, initial, support)
    }

    pub fn with_support(
        transition: Vec<Vec<f64>>,
        initial: SimplexBelief,
        support: Vec<f64>,
    ) -> Result<Self> {
        let n = transition.len();
        if n < 2 {
            return Err(Error::InvalidModel(format!("alphabet size must be >= 2, got {n}")));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!("row {i} has length {}", row.len())));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidModel(format!("row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!("row {i} sums to {sum}")));
            }
        }
        if initial.len() != n {
            return Err(Error::InvalidModel("initial belief has wrong length".into()));
        }
        if support.len() != n || support.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("support must hold n finite values".into()));
        }
        let strictly_positive = transition.iter().flatten().all(|&p| p > 0.0);
        Ok(Self {
            transition,
            initial,
            support,
            strictly_positive,
        })
    }

    pub fn len(&self) -> usize {
        self.transition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transition.is_empty()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from][to]
    }

    pub fn initial(&self) -> &SimplexBelief {
        &self.initial
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.strictly_positive
    }

    /// Same chain started from `initial`.
    pub fn with_initial(&self, initial: SimplexBelief) -> Result<Self> {
        Self::with_support(self.transition.clone(), initial, self.support.clone())
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        sample_categorical(&self.transition[x], rng)
    }

    /// True when some power of the transition matrix is strictly positive
    /// (irreducible and aperiodic).
    pub fn is_primitive(&self) -> bool {
        let n = self.len();
        let base: Vec<Vec<bool>> = self
            .transition
            .iter()
            .map(|row| row.iter().map(|&p| p > 0.0).collect())
            .collect();
        let mut power = base.clone();
        // Wielandt: primitive iff P^k > 0 for k = (n-1)^2 + 1.
        for _ in 1..((n - 1) * (n - 1) + 1) {
            if power.iter().flatten().all(|&b| b) {
                return true;
            }
            power = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).any(|k| power[i][k] && base[k][j]))
                        .collect()
                })
                .collect();
        }
        power.iter().flatten().all(|&b| b)
    }

    /// Unique `pi` with `pi P = pi`.
    pub fn invariant_distribution(&self) -> Result<SimplexBelief> {
        if !self.is_primitive() {
            return Err(Error::NoInvariantDistribution(
                "chain is reducible or periodic".into(),
            ));
        }
        let n = self.len();
        // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = self.transition[j][i] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[n - 1] = 1.0;
        let solution = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoInvariantDistribution("singular system".into()))?;
        let probs: Vec<f64> = solution.iter().map(|&p| p.max(0.0)).collect();
        SimplexBelief::normalized(probs)
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last partial sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
