//! The controlled belief chain of a coding problem.
//!
//! A [`CodingProblem`] bundles a source, a belief representation and a
//! distortion measure. Its filter maps `(pi, Q, m)` to the posterior
//! predictor
//!
//! ```text
//! pi'(dz) = (1 / pi(B_m)) \int_{B_m} P(dz | x) pi(dx)
//! ```
//!
//! so the belief is a controlled Markov chain driven by the quantizer choice.
//! The DP designer, the infinite-horizon tools and the simulator only talk
//! to this trait.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::{ContinuousBelief, Grid, GridBelief, SimplexBelief};
use crate::cost::{tabular_cell, CellMoments, CostModel, Reconstruction, MASS_FLOOR};
use crate::error::{Error, Result};
use crate::quantizer::{FinitePartition, IntervalQuantizer, Quantizer};
use crate::source::{normal_pdf, sample_categorical, FiniteChain, InitialDistribution, LinearGaussianSource};

/// One quantizer applied to one belief: cost, symbol probabilities and the
/// posteriors of the symbols that carry mass.
#[derive(Debug, Clone)]
pub struct Expansion<B> {
    pub stage_cost: f64,
    pub masses: Vec<f64>,
    /// `(symbol, posterior)` for every symbol whose mass exceeds the floor,
    /// in symbol order.
    pub posteriors: Vec<(usize, B)>,
}

pub trait CodingProblem: Send + Sync {
    type State: Copy + Send + Sync + std::fmt::Debug;
    type Belief: Clone + Send + Sync + std::fmt::Debug + Serialize;
    type Quantizer: Quantizer + Serialize;

    /// `pi_0` as configured on the source.
    fn initial_belief(&self) -> Result<Self::Belief>;

    /// `pi(Q^{-1}(m))` for every cell.
    fn cell_masses(&self, belief: &Self::Belief, q: &Self::Quantizer) -> Vec<f64>;

    fn cell_mass(&self, belief: &Self::Belief, q: &Self::Quantizer, m: usize) -> Result<f64> {
        let levels = q.levels();
        if m >= levels {
            return Err(Error::InvalidCell { index: m, levels });
        }
        Ok(self.cell_masses(belief, q)[m])
    }

    /// Decoder output for symbol `m`.
    fn optimal_reconstruction(
        &self,
        belief: &Self::Belief,
        q: &Self::Quantizer,
        m: usize,
    ) -> Result<Reconstruction>;

    /// `c(pi, Q)`.
    fn stage_cost(&self, belief: &Self::Belief, q: &Self::Quantizer) -> f64;

    /// `c(pi, Q)` for every candidate.
    fn stage_costs(&self, belief: &Self::Belief, candidates: &[Self::Quantizer]) -> Vec<f64> {
        candidates.iter().map(|q| self.stage_cost(belief, q)).collect()
    }

    /// Posterior predictor after observing symbol `m`.
    fn filter_update(&self, belief: &Self::Belief, q: &Self::Quantizer, m: usize) -> Result<Self::Belief>;

    /// One Chapman-Kolmogorov step without conditioning.
    fn predict(&self, belief: &Self::Belief) -> Self::Belief;

    fn tv_distance(&self, a: &Self::Belief, b: &Self::Belief) -> Result<f64>;

    /// `E[x^k]` under the belief.
    fn moment(&self, belief: &Self::Belief, k: u32) -> f64;

    fn belief_std(&self, belief: &Self::Belief) -> f64 {
        let m = self.moment(belief, 1);
        (self.moment(belief, 2) - m * m).max(0.0).sqrt()
    }

    /// Exact byte image of the belief; equal keys mean identical beliefs.
    fn belief_key(&self, belief: &Self::Belief) -> Vec<u8>;

    fn sample_from(&self, belief: &Self::Belief, rng: &mut ChaCha8Rng) -> Self::State;

    fn sample_next(&self, x: Self::State, rng: &mut ChaCha8Rng) -> Self::State;

    fn classify(&self, q: &Self::Quantizer, x: Self::State) -> usize;

    /// `c0(x, u)`.
    fn distortion(&self, x: Self::State, u: &Reconstruction) -> f64;

    /// Real value of a state, for logs.
    fn state_value(&self, x: Self::State) -> f64;

    fn expand(&self, belief: &Self::Belief, q: &Self::Quantizer, floor: f64) -> Result<Expansion<Self::Belief>> {
        let masses = self.cell_masses(belief, q);
        let stage_cost = self.stage_cost(belief, q);
        let mut posteriors = Vec::new();
        for (m, &mass) in masses.iter().enumerate() {
            if mass > floor {
                posteriors.push((m, self.filter_update(belief, q, m)?));
            }
        }
        Ok(Expansion {
            stage_cost,
            masses,
            posteriors,
        })
    }
}

/// Finite-state chain with a quadratic or tabular distortion.
#[derive(Debug, Clone)]
pub struct FiniteProblem {
    chain: FiniteChain,
    cost: CostModel,
}

impl FiniteProblem {
    pub fn new(chain: FiniteChain, cost: CostModel) -> Result<Self> {
        cost.validate(Some(chain.len()))?;
        Ok(Self { chain, cost })
    }

    pub fn chain(&self) -> &FiniteChain {
        &self.chain
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    fn cell_moments(&self, belief: &SimplexBelief, q: &FinitePartition, m: usize) -> CellMoments {
        let mut cell = CellMoments::default();
        for (x, (&p, &v)) in belief.probs().iter().zip(self.chain.support()).enumerate() {
            if q.classify(x) == m {
                cell.mass += p;
                cell.first += p * v;
                cell.second += p * v * v;
            }
        }
        cell
    }

    fn cell_cost(&self, belief: &SimplexBelief, q: &FinitePartition, m: usize) -> (Option<Reconstruction>, f64) {
        match &self.cost {
            CostModel::Quadratic => {
                let cell = self.cell_moments(belief, q, m);
                (cell.centroid().map(Reconstruction::Point), cell.quadratic_cost())
            }
            CostModel::BoundedTabular { matrix } => {
                let weight = |x: usize| if q.classify(x) == m { belief.probs()[x] } else { 0.0 };
                let mass: f64 = (0..belief.len()).map(weight).sum();
                if mass < MASS_FLOOR {
                    return (None, 0.0);
                }
                let (u, cost) = tabular_cell(matrix, weight);
                (Some(Reconstruction::Index(u)), cost)
            }
        }
    }
}

impl CodingProblem for FiniteProblem {
    type State = usize;
    type Belief = SimplexBelief;
    type Quantizer = FinitePartition;

    fn initial_belief(&self) -> Result<SimplexBelief> {
        Ok(self.chain.initial().clone())
    }

    fn cell_masses(&self, belief: &SimplexBelief, q: &FinitePartition) -> Vec<f64> {
        let mut masses = vec![0.0; q.levels()];
        for (x, &p) in belief.probs().iter().enumerate() {
            masses[q.classify(x)] += p;
        }
        masses
    }

    fn optimal_reconstruction(&self, belief: &SimplexBelief, q: &FinitePartition, m: usize) -> Result<Reconstruction> {
        let mass = self.cell_mass(belief, q, m)?;
        self.cell_cost(belief, q, m)
            .0
            .ok_or(Error::ZeroProbabilitySymbol { symbol: m, mass })
    }

    fn stage_cost(&self, belief: &SimplexBelief, q: &FinitePartition) -> f64 {
        (0..q.levels()).map(|m| self.cell_cost(belief, q, m).1).sum()
    }

    fn filter_update(&self, belief: &SimplexBelief, q: &FinitePartition, m: usize) -> Result<SimplexBelief> {
        let mass = self.cell_mass(belief, q, m)?;
        if mass <= MASS_FLOOR {
            return Err(Error::ZeroProbabilitySymbol { symbol: m, mass });
        }
        let n = self.chain.len();
        let mut next = vec![0.0; n];
        for (x, &p) in belief.probs().iter().enumerate() {
            if q.classify(x) != m || p == 0.0 {
                continue;
            }
            for (z, out) in next.iter_mut().enumerate() {
                *out += p * self.chain.prob(x, z);
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        Ok(SimplexBelief::from_raw(next))
    }

    fn predict(&self, belief: &SimplexBelief) -> SimplexBelief {
        let n = self.chain.len();
        let mut next = vec![0.0; n];
        for (x, &p) in belief.probs().iter().enumerate() {
            for (z, out) in next.iter_mut().enumerate() {
                *out += p * self.chain.prob(x, z);
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        SimplexBelief::from_raw(next)
    }

    fn tv_distance(&self, a: &SimplexBelief, b: &SimplexBelief) -> Result<f64> {
        a.tv_distance(b)
    }

    fn moment(&self, belief: &SimplexBelief, k: u32) -> f64 {
        belief.moment(self.chain.support(), k)
    }

    fn belief_key(&self, belief: &SimplexBelief) -> Vec<u8> {
        belief.probs().iter().flat_map(|p| p.to_le_bytes()).collect()
    }

    fn sample_from(&self, belief: &SimplexBelief, rng: &mut ChaCha8Rng) -> usize {
        sample_categorical(belief.probs(), rng)
    }

    fn sample_next(&self, x: usize, rng: &mut ChaCha8Rng) -> usize {
        self.chain.sample_next(x, rng)
    }

    fn classify(&self, q: &FinitePartition, x: usize) -> usize {
        q.classify(x)
    }

    fn distortion(&self, x: usize, u: &Reconstruction) -> f64 {
        match (&self.cost, u) {
            (CostModel::BoundedTabular { matrix }, Reconstruction::Index(i)) => matrix[x][*i],
            (_, u) => {
                let d = self.chain.support()[x] - u.as_f64();
                d * d
            }
        }
    }

    fn state_value(&self, x: usize) -> f64 {
        self.chain.support()[x]
    }
}

/// Dense kernel matrix `K[j][i] = phi(z_j | x_i)` over one grid.
#[derive(Debug)]
struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    fn build(source: &LinearGaussianSource, grid: &Grid) -> Self {
        let nodes = grid.nodes();
        let n = nodes.len();
        let mut values = vec![0.0; n * n];
        for (j, &z) in nodes.iter().enumerate() {
            for (i, &x) in nodes.iter().enumerate() {
                values[j * n + i] = source.transition_density(z, x);
            }
        }
        Self { n, values }
    }

    /// `out_j = sum_k K[j][start + k] * c_k`.
    fn apply(&self, start: usize, coeffs: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let row = &self.values[j * self.n + start..j * self.n + start + coeffs.len()];
                row.iter().zip(coeffs).map(|(k, c)| k * c).sum()
            })
            .collect()
    }
}

/// Scalar linear-Gaussian source with beliefs discretized on a grid and
/// squared-error distortion.
#[derive(Debug, Clone)]
pub struct GridProblem {
    source: LinearGaussianSource,
    grid: Grid,
    kernel: Arc<KernelMatrix>,
}

/// Default number of grid nodes.
pub const DEFAULT_GRID_POINTS: usize = 801;
/// Default half-width of the grid, in stationary standard deviations.
pub const DEFAULT_GRID_HALF_WIDTH: f64 = 8.0;

impl GridProblem {
    pub fn new(source: LinearGaussianSource, grid: Grid) -> Result<Self> {
        if source.is_deterministic() {
            return Err(Error::InvalidModel(
                "the filter needs a transition density (noise_std > 0)".into(),
            ));
        }
        let kernel = Arc::new(KernelMatrix::build(&source, &grid));
        Ok(Self { source, grid, kernel })
    }

    /// 801 nodes over +-8 stationary standard deviations.
    pub fn with_default_grid(source: LinearGaussianSource) -> Result<Self> {
        let half = DEFAULT_GRID_HALF_WIDTH * source.stationary_std()?;
        Self::new(source, Grid::centered(0.0, half, DEFAULT_GRID_POINTS)?)
    }

    pub fn source(&self) -> &LinearGaussianSource {
        &self.source
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn density(&self, f: impl Fn(f64) -> f64) -> Result<ContinuousBelief> {
        Ok(ContinuousBelief::Density(GridBelief::from_fn(self.grid.clone(), f)?))
    }

    fn propagate(&self, start: usize, coeffs: &[f64]) -> ContinuousBelief {
        let raw = self.kernel.apply(start, coeffs);
        let total: f64 = self
            .grid
            .trapezoid_weights()
            .iter()
            .zip(&raw)
            .map(|(w, v)| w * v)
            .sum();
        log::trace!("filter renormalization drift {:e}", (total - 1.0).abs());
        let values = raw.into_iter().map(|v| v / total).collect();
        ContinuousBelief::Density(GridBelief::from_raw(self.grid.clone(), values))
    }

    fn cell_moments(&self, belief: &ContinuousBelief, q: &IntervalQuantizer, m: usize) -> CellMoments {
        match belief {
            ContinuousBelief::PointMass(x) => {
                if q.classify(*x) == m {
                    CellMoments {
                        mass: 1.0,
                        first: *x,
                        second: x * x,
                    }
                } else {
                    CellMoments::default()
                }
            }
            ContinuousBelief::Density(g) => {
                let (a, b) = q.cell_bounds(m).expect("cell index in range");
                let grid = g.grid();
                let w = grid.interval_weights(a, b);
                let v = g.values();
                let mut cell = CellMoments::default();
                for (k, &wk) in w.weights.iter().enumerate() {
                    let i = w.start + k;
                    let x = grid.node(i);
                    let p = wk * v[i];
                    cell.mass += p;
                    cell.first += p * x;
                    cell.second += p * x * x;
                }
                cell
            }
        }
    }
}

impl CodingProblem for GridProblem {
    type State = f64;
    type Belief = ContinuousBelief;
    type Quantizer = IntervalQuantizer;

    fn initial_belief(&self) -> Result<ContinuousBelief> {
        match self.source.initial() {
            InitialDistribution::PointMass(x) => Ok(ContinuousBelief::PointMass(x)),
            InitialDistribution::Density { mean, std } => self.density(|x| normal_pdf(x, mean, std)),
            InitialDistribution::Stationary => {
                Ok(ContinuousBelief::Density(self.source.invariant_distribution(&self.grid)?))
            }
        }
    }

    fn cell_masses(&self, belief: &ContinuousBelief, q: &IntervalQuantizer) -> Vec<f64> {
        (0..q.levels()).map(|m| self.cell_moments(belief, q, m).mass).collect()
    }

    fn optimal_reconstruction(&self, belief: &ContinuousBelief, q: &IntervalQuantizer, m: usize) -> Result<Reconstruction> {
        let levels = q.levels();
        if m >= levels {
            return Err(Error::InvalidCell { index: m, levels });
        }
        let cell = self.cell_moments(belief, q, m);
        cell.centroid()
            .map(Reconstruction::Point)
            .ok_or(Error::ZeroProbabilitySymbol {
                symbol: m,
                mass: cell.mass,
            })
    }

    fn stage_cost(&self, belief: &ContinuousBelief, q: &IntervalQuantizer) -> f64 {
        (0..q.levels())
            .map(|m| self.cell_moments(belief, q, m).quadratic_cost())
            .sum()
    }

    fn stage_costs(&self, belief: &ContinuousBelief, candidates: &[IntervalQuantizer]) -> Vec<f64> {
        let ContinuousBelief::Density(g) = belief else {
            return candidates.iter().map(|q| self.stage_cost(belief, q)).collect();
        };
        let prefix = MomentPrefix::new(g);
        candidates
            .iter()
            .map(|q| {
                (0..q.levels())
                    .map(|m| {
                        let (a, b) = q.cell_bounds(m).expect("cell index in range");
                        prefix.cell(a, b).quadratic_cost()
                    })
                    .sum()
            })
            .collect()
    }

    fn filter_update(&self, belief: &ContinuousBelief, q: &IntervalQuantizer, m: usize) -> Result<ContinuousBelief> {
        let levels = q.levels();
        if m >= levels {
            return Err(Error::InvalidCell { index: m, levels });
        }
        match belief {
            ContinuousBelief::PointMass(x) => {
                if q.classify(*x) != m {
                    return Err(Error::ZeroProbabilitySymbol { symbol: m, mass: 0.0 });
                }
                Ok(self.propagate_point(*x))
            }
            ContinuousBelief::Density(g) => {
                if g.grid() != &self.grid {
                    return Err(Error::MismatchedDomains);
                }
                let (a, b) = q.cell_bounds(m)?;
                let w = self.grid.interval_weights(a, b);
                let coeffs: Vec<f64> = w
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(k, wk)| wk * g.values()[w.start + k])
                    .collect();
                let mass: f64 = coeffs.iter().sum();
                if mass <= MASS_FLOOR {
                    return Err(Error::ZeroProbabilitySymbol { symbol: m, mass });
                }
                let scaled: Vec<f64> = coeffs.iter().map(|c| c / mass).collect();
                Ok(self.propagate(w.start, &scaled))
            }
        }
    }

    fn predict(&self, belief: &ContinuousBelief) -> ContinuousBelief {
        match belief {
            ContinuousBelief::PointMass(x) => self.propagate_point(*x),
            ContinuousBelief::Density(g) => {
                let coeffs: Vec<f64> = self
                    .grid
                    .trapezoid_weights()
                    .iter()
                    .zip(g.values())
                    .map(|(w, v)| w * v)
                    .collect();
                self.propagate(0, &coeffs)
            }
        }
    }

    fn tv_distance(&self, a: &ContinuousBelief, b: &ContinuousBelief) -> Result<f64> {
        a.tv_distance(b)
    }

    fn moment(&self, belief: &ContinuousBelief, k: u32) -> f64 {
        belief.moment(k)
    }

    fn belief_std(&self, belief: &ContinuousBelief) -> f64 {
        belief.std()
    }

    fn belief_key(&self, belief: &ContinuousBelief) -> Vec<u8> {
        match belief {
            ContinuousBelief::PointMass(x) => {
                let mut key = vec![0u8];
                key.extend_from_slice(&x.to_le_bytes());
                key
            }
            ContinuousBelief::Density(g) => {
                let mut key = vec![1u8];
                key.extend(g.values().iter().flat_map(|v| v.to_le_bytes()));
                key
            }
        }
    }

    fn sample_from(&self, belief: &ContinuousBelief, rng: &mut ChaCha8Rng) -> f64 {
        match belief {
            ContinuousBelief::PointMass(x) => *x,
            ContinuousBelief::Density(g) => sample_piecewise_linear(g, rng),
        }
    }

    fn sample_next(&self, x: f64, rng: &mut ChaCha8Rng) -> f64 {
        self.source.sample_next(x, rng)
    }

    fn classify(&self, q: &IntervalQuantizer, x: f64) -> usize {
        q.classify(x)
    }

    fn distortion(&self, x: f64, u: &Reconstruction) -> f64 {
        let d = x - u.as_f64();
        d * d
    }

    fn state_value(&self, x: f64) -> f64 {
        x
    }
}

impl GridProblem {
    fn propagate_point(&self, x: f64) -> ContinuousBelief {
        let values: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .map(|&z| self.source.transition_density(z, x))
            .collect();
        let total: f64 = self
            .grid
            .trapezoid_weights()
            .iter()
            .zip(&values)
            .map(|(w, v)| w * v)
            .sum();
        ContinuousBelief::Density(GridBelief::from_raw(
            self.grid.clone(),
            values.into_iter().map(|v| v / total).collect(),
        ))
    }
}

/// Draws from the piecewise-linear interpolant of a grid density.
/// Running segment integrals of `p`, `x p` and `x^2 p` for O(1) cell moments.
struct MomentPrefix<'a> {
    belief: &'a GridBelief,
    // prefix[s] = integral over the first s segments
    prefix: Vec<[f64; 3]>,
}

impl<'a> MomentPrefix<'a> {
    fn new(belief: &'a GridBelief) -> Self {
        let grid = belief.grid();
        let v = belief.values();
        let h = grid.spacing();
        let g = |i: usize| {
            let x = grid.node(i);
            [v[i], v[i] * x, v[i] * x * x]
        };
        let mut prefix = Vec::with_capacity(grid.len());
        let mut acc = [0.0; 3];
        prefix.push(acc);
        for s in 0..grid.len() - 1 {
            let (l, r) = (g(s), g(s + 1));
            for k in 0..3 {
                acc[k] += 0.5 * h * (l[k] + r[k]);
            }
            prefix.push(acc);
        }
        Self { belief, prefix }
    }

    // integral over the fraction [u0, u1] of segment s
    fn partial(&self, s: usize, u0: f64, u1: f64, out: &mut CellMoments) {
        let grid = self.belief.grid();
        let v = self.belief.values();
        let h = grid.spacing();
        let half_sq = 0.5 * (u1 * u1 - u0 * u0);
        let wl = h * ((u1 - u0) - half_sq);
        let wr = h * half_sq;
        for (i, w) in [(s, wl), (s + 1, wr)] {
            let x = grid.node(i);
            let p = w * v[i];
            out.mass += p;
            out.first += p * x;
            out.second += p * x * x;
        }
    }

    fn cell(&self, a: f64, b: f64) -> CellMoments {
        let grid = self.belief.grid();
        let mut out = CellMoments::default();
        let a = a.max(grid.lo());
        let b = b.min(grid.hi());
        if !(a < b) {
            return out;
        }
        let h = grid.spacing();
        let n = grid.len();
        let seg_of = |x: f64| (((x - grid.lo()) / h).floor() as usize).min(n - 2);
        let frac = |x: f64, s: usize| ((x - grid.node(s)) / h).clamp(0.0, 1.0);
        let (sa, sb) = (seg_of(a), seg_of(b));
        if sa == sb {
            self.partial(sa, frac(a, sa), frac(b, sb), &mut out);
            return out;
        }
        self.partial(sa, frac(a, sa), 1.0, &mut out);
        let (lo, hi) = (self.prefix[sa + 1], self.prefix[sb]);
        out.mass += hi[0] - lo[0];
        out.first += hi[1] - lo[1];
        out.second += hi[2] - lo[2];
        self.partial(sb, 0.0, frac(b, sb), &mut out);
        out
    }
}

fn sample_piecewise_linear(g: &GridBelief, rng: &mut ChaCha8Rng) -> f64 {
    let grid = g.grid();
    let h = grid.spacing();
    let v = g.values();
    let seg_mass: Vec<f64> = v.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).collect();
    let s = sample_categorical(&normalize(&seg_mass), rng);
    let (v0, v1) = (v[s], v[s + 1]);
    let r: f64 = rng.random();
    // Solve v0 u + (v1 - v0) u^2 / 2 = r (v0 + v1) / 2 for u in [0, 1].
    let u = if (v1 - v0).abs() < 1e-12 * (v0 + v1).max(f64::MIN_POSITIVE) {
        r
    } else {
        let a = 0.5 * (v1 - v0);
        let c = -r * 0.5 * (v0 + v1);
        let disc = (v0 * v0 - 4.0 * a * c).max(0.0);
        (2.0 * -c / (v0 + disc.sqrt())).clamp(0.0, 1.0)
    };
    grid.node(s) + u * h
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::enumerate_finite_partitions;
    use crate::rng::{stream, StreamKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const TWO_STATE: [[f64; 2]; 2] = [[0.9, 0.1], [0.2, 0.8]];

    fn chain(rows: &[[f64; 2]; 2], initial: Vec<f64>) -> FiniteChain {
        FiniteChain::new(
            rows.iter().map(|r| r.to_vec()).collect(),
            SimplexBelief::new(initial).unwrap(),
        )
        .unwrap()
    }

    fn finite(rows: &[[f64; 2]; 2]) -> FiniteProblem {
        FiniteProblem::new(chain(rows, vec![0.5, 0.5]), CostModel::Quadratic).unwrap()
    }

    fn iid_normal() -> GridProblem {
        let src = LinearGaussianSource::new(0.0, 1.0, InitialDistribution::Stationary).unwrap();
        GridProblem::with_default_grid(src).unwrap()
    }

    fn thresholds(t: &[f64]) -> IntervalQuantizer {
        IntervalQuantizer::new(t.to_vec()).unwrap()
    }

    #[test]
    fn batched_stage_costs_match() {
        let p = iid_normal();
        let skew = p.density(|x| normal_pdf(x, 0.7, 0.6) + 0.3 * normal_pdf(x, -1.5, 1.2)).unwrap();
        let spec = crate::quantizer::IntervalCandidateSpec {
            levels: 3,
            lo: -9.0,
            hi: 3.3,
            steps: 23,
        };
        let cands = crate::quantizer::enumerate_interval_candidates(&spec).unwrap();
        let batch = p.stage_costs(&skew, &cands);
        for (q, c) in cands.iter().zip(batch) {
            assert_abs_diff_eq!(c, p.stage_cost(&skew, q), epsilon = 1e-12);
        }
        let point = ContinuousBelief::PointMass(0.2);
        assert_eq!(p.stage_costs(&point, &cands[..2]), vec![0.0, 0.0]);
    }

    #[test]
    fn finite_filter_examples() {
        let identity = finite(&[[1.0, 0.0], [0.0, 1.0]]);
        let half = SimplexBelief::uniform(2);
        let split = FinitePartition::new(2, vec![0, 1]).unwrap();
        assert_eq!(identity.filter_update(&half, &split, 0).unwrap().probs(), &[1.0, 0.0]);

        let p = finite(&TWO_STATE);
        let lumped = FinitePartition::new(1, vec![0, 0]).unwrap();
        let post = p.filter_update(&half, &lumped, 0).unwrap();
        assert_abs_diff_eq!(post.probs()[0], 0.55, epsilon = 1e-15);
        assert_abs_diff_eq!(post.probs()[1], 0.45, epsilon = 1e-15);
        let pred = p.predict(&half);
        assert_abs_diff_eq!(pred.probs()[0], 0.55, epsilon = 1e-15);
        assert_eq!(identity.predict(&half), half);
    }

    #[test]
    fn zero_mass_symbol_is_refused() {
        let p = finite(&TWO_STATE);
        let point = SimplexBelief::point(2, 0);
        let split = FinitePartition::new(2, vec![0, 1]).unwrap();
        assert!(matches!(
            p.filter_update(&point, &split, 1),
            Err(Error::ZeroProbabilitySymbol { symbol: 1, .. })
        ));
        assert!(matches!(p.cell_mass(&point, &split, 2), Err(Error::InvalidCell { .. })));
    }

    #[test]
    fn finite_reconstruction_and_cost() {
        let c = FiniteChain::with_support(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            SimplexBelief::uniform(2),
            vec![-1.0, 1.0],
        )
        .unwrap();
        let p = FiniteProblem::new(c, CostModel::Quadratic).unwrap();
        let b = SimplexBelief::uniform(2);
        let split = FinitePartition::new(2, vec![0, 1]).unwrap();
        assert_eq!(p.optimal_reconstruction(&b, &split, 1).unwrap(), Reconstruction::Point(1.0));
        assert_eq!(p.stage_cost(&b, &split), 0.0);
        let lumped = FinitePartition::new(1, vec![0, 0]).unwrap();
        assert_abs_diff_eq!(p.stage_cost(&b, &lumped), 1.0, epsilon = 1e-15);
        assert_eq!(finite(&TWO_STATE).stage_cost(&b, &split), 0.0);
    }

    #[test]
    fn tabular_cost_uses_argmin() {
        let c = chain(&TWO_STATE, vec![0.3, 0.7]);
        let p = FiniteProblem::new(
            c,
            CostModel::BoundedTabular {
                matrix: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            },
        )
        .unwrap();
        let b = SimplexBelief::new(vec![0.3, 0.7]).unwrap();
        let lumped = FinitePartition::new(1, vec![0, 0]).unwrap();
        assert_eq!(p.optimal_reconstruction(&b, &lumped, 0).unwrap(), Reconstruction::Index(1));
        assert_abs_diff_eq!(p.stage_cost(&b, &lumped), 0.3, epsilon = 1e-15);
        assert_eq!(p.distortion(0, &Reconstruction::Index(1)), 1.0);
    }

    #[test]
    fn grid_cell_masses() {
        let p = iid_normal();
        let b = p.initial_belief().unwrap();
        assert_abs_diff_eq!(p.cell_mass(&b, &thresholds(&[0.0]), 0).unwrap(), 0.5, epsilon = 1e-6);
        // 1 - Phi(1)
        assert_abs_diff_eq!(
            p.cell_mass(&b, &thresholds(&[1.0]), 1).unwrap(),
            0.158_655_253_931_457,
            epsilon = 1e-4
        );
    }

    #[test]
    fn grid_reconstruction_and_cost() {
        let p = iid_normal();
        let b = p.initial_belief().unwrap();
        let half = thresholds(&[0.0]);
        let sqrt_2_over_pi = (2.0 / std::f64::consts::PI).sqrt();
        match p.optimal_reconstruction(&b, &half, 1).unwrap() {
            Reconstruction::Point(u) => assert_abs_diff_eq!(u, sqrt_2_over_pi, epsilon = 1e-3),
            other => panic!("unexpected {other:?}"),
        }
        assert_abs_diff_eq!(p.stage_cost(&b, &IntervalQuantizer::trivial()), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(
            p.stage_cost(&b, &half),
            1.0 - 2.0 / std::f64::consts::PI,
            epsilon = 1e-3
        );

        let grid = Grid::new(0.0, 1.0, 201).unwrap();
        let uniform = ContinuousBelief::Density(GridBelief::uniform(grid));
        match p.optimal_reconstruction(&uniform, &IntervalQuantizer::trivial(), 0).unwrap() {
            Reconstruction::Point(u) => assert_abs_diff_eq!(u, 0.5, epsilon = 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn iid_filter_returns_noise_density() {
        let p = iid_normal();
        let b = p.initial_belief().unwrap();
        let post = p.filter_update(&b, &thresholds(&[0.7]), 1).unwrap();
        let reference = p.density(|x| normal_pdf(x, 0.0, 1.0)).unwrap();
        assert!(p.tv_distance(&post, &reference).unwrap() < 1e-9);
    }

    #[test]
    fn point_mass_prediction() {
        let src = LinearGaussianSource::new(0.5, 1.0, InitialDistribution::PointMass(2.0)).unwrap();
        let p = GridProblem::with_default_grid(src).unwrap();
        let b = p.initial_belief().unwrap();
        let pred = p.predict(&b);
        let want = p.density(|x| normal_pdf(x, 1.0, 1.0)).unwrap();
        assert!(p.tv_distance(&pred, &want).unwrap() < 1e-12);
        assert_eq!(p.stage_cost(&b, &thresholds(&[0.0])), 0.0);
        assert!(p.filter_update(&b, &thresholds(&[0.0]), 0).is_err());
    }

    #[test]
    fn deterministic_source_is_rejected() {
        let grid = Grid::centered(0.0, 5.0, 101).unwrap();
        assert!(GridProblem::new(LinearGaussianSource::deterministic(0.5), grid).is_err());
    }

    #[test]
    fn grid_total_expectation() {
        let src = LinearGaussianSource::new(0.8, 1.0, InitialDistribution::Stationary).unwrap();
        let p = GridProblem::with_default_grid(src).unwrap();
        let b = p.filter_update(&p.initial_belief().unwrap(), &thresholds(&[0.5]), 1).unwrap();
        let q = thresholds(&[-1.0, 0.3, 2.0]);
        let masses = p.cell_masses(&b, &q);
        assert_abs_diff_eq!(masses.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let pred = p.predict(&b);
        let mut mix = vec![0.0; p.grid().len()];
        for (m, &mass) in masses.iter().enumerate() {
            let post = p.filter_update(&b, &q, m).unwrap();
            for (acc, v) in mix.iter_mut().zip(post.as_density().unwrap().values()) {
                *acc += mass * v;
            }
        }
        for (a, b) in mix.iter().zip(pred.as_density().unwrap().values()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn grid_refinement_never_increases_cost() {
        let src = LinearGaussianSource::new(0.5, 1.0, InitialDistribution::Stationary).unwrap();
        let p = GridProblem::with_default_grid(src).unwrap();
        let b = p.initial_belief().unwrap();
        let mut q = IntervalQuantizer::trivial();
        let mut cost = p.stage_cost(&b, &q);
        assert!(cost <= p.moment(&b, 2) + 1e-12);
        for t in [0.0, -1.3, 0.9, 2.2, -0.4] {
            q = q.refine(t).unwrap();
            let next = p.stage_cost(&b, &q);
            assert!(next <= cost + 1e-12);
            cost = next;
        }
    }

    #[test]
    fn grid_sampling_matches_density() {
        let p = iid_normal();
        let b = p.initial_belief().unwrap();
        let mut rng = stream(3, StreamKind::Source(0));
        let n = 50_000;
        let draws: Vec<f64> = (0..n).map(|_| p.sample_from(&b, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 0.02);
        assert_abs_diff_eq!(var, 1.0, epsilon = 0.03);
    }

    fn arb_chain(n: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (
            proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, n), n),
            proptest::collection::vec(0.0f64..1.0, n),
        )
            .prop_map(|(rows, init)| {
                let rows = rows.iter().map(|r| normalize(r)).collect();
                let s: f64 = init.iter().sum::<f64>() + 1e-3;
                let init = init.iter().map(|x| (x + 1e-3 / init.len() as f64) / s).collect();
                (rows, init)
            })
    }

    proptest! {
        #[test]
        fn finite_total_expectation((rows, init) in arb_chain(3)) {
            let c = FiniteChain::new(rows, SimplexBelief::normalized(init).unwrap()).unwrap();
            let p = FiniteProblem::new(c, CostModel::Quadratic).unwrap();
            let b = p.initial_belief().unwrap();
            let pred = p.predict(&b);
            for q in enumerate_finite_partitions(3, 2).unwrap() {
                let masses = p.cell_masses(&b, &q);
                prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let mut mix = [0.0; 3];
                for (m, &mass) in masses.iter().enumerate() {
                    if mass > MASS_FLOOR {
                        let post = p.filter_update(&b, &q, m).unwrap();
                        prop_assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                        for (acc, v) in mix.iter_mut().zip(post.probs()) { *acc += mass * v; }
                    }
                }
                for (a, b) in mix.iter().zip(pred.probs()) { prop_assert!((a - b).abs() < 1e-12); }
            }
        }

        #[test]
        fn relabeling_leaves_cost_unchanged((rows, init) in arb_chain(3), raw in proptest::collection::vec(0usize..3, 3)) {
            let c = FiniteChain::with_support(rows, SimplexBelief::normalized(init).unwrap(), vec![-0.5, 1.0, 2.5]).unwrap();
            let p = FiniteProblem::new(c, CostModel::Quadratic).unwrap();
            let b = p.initial_belief().unwrap();
            let q = FinitePartition::new(3, raw).unwrap();
            prop_assert!((p.stage_cost(&b, &q) - p.stage_cost(&b, &q.canonical())).abs() < 1e-12);
        }

        #[test]
        fn centroid_perturbation_never_helps(t in -2.0f64..2.0, m in 0usize..2, delta in prop_oneof![Just(-0.01), Just(0.01)]) {
            let p = iid_normal();
            let b = p.initial_belief().unwrap();
            let q = thresholds(&[t]);
            let cell = p.cell_moments(&b, &q, m);
            let u = cell.centroid().unwrap();
            prop_assert!(cell.quadratic_cost_at(u + delta) >= cell.quadratic_cost_at(u));
        }
    }
}
