//! Belief states: densities on a uniform grid and probability vectors on a
//! finite alphabet.
//!
//! Grid densities are treated as piecewise-linear interpolants of their node
//! values. Integrals over the whole domain reduce to the trapezoid rule, and
//! integrals over a sub-interval `[a, b]` are exact for the interpolant, so
//! splitting the line into cells never loses or double counts mass.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::DensityBounds;

/// Uniform grid of `n` nodes on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

/// Minimum number of grid nodes.
pub const MIN_GRID_POINTS: usize = 16;

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidModel(format!("bad grid domain [{lo}, {hi}]")));
        }
        if n < MIN_GRID_POINTS {
            return Err(Error::InvalidModel(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {n}"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    /// Symmetric grid `[center - half_width, center + half_width]`.
    pub fn centered(center: f64, half_width: f64, n: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    /// Quadrature weights for `\int_{[a, b] \cap [lo, hi]} g(x) dx` applied
    /// to the linear interpolant of `g`.
    ///
    /// `a` may be `-inf` and `b` may be `+inf`. Weights for adjacent
    /// intervals sum to the trapezoid weights.
    pub fn interval_weights(&self, a: f64, b: f64) -> CellWeights {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if !(a < b) {
            return CellWeights::empty();
        }
        let h = self.spacing();
        let seg_of = |x: f64| (((x - self.lo) / h).floor() as usize).min(self.n - 2);
        let first = seg_of(a);
        let last = seg_of(b);
        let mut weights = vec![0.0; last - first + 2];
        for s in first..=last {
            let x0 = self.node(s);
            let u0 = ((a.max(x0) - x0) / h).clamp(0.0, 1.0);
            let u1 = ((b.min(self.node(s + 1)) - x0) / h).clamp(0.0, 1.0);
            if u1 <= u0 {
                continue;
            }
            let half_sq = 0.5 * (u1 * u1 - u0 * u0);
            weights[s - first] += h * ((u1 - u0) - half_sq);
            weights[s - first + 1] += h * half_sq;
        }
        CellWeights {
            start: first,
            weights,
        }
    }
}

/// Sparse quadrature weights over a contiguous run of grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights {
    pub start: usize,
    pub weights: Vec<f64>,
}

impl CellWeights {
    pub fn empty() -> Self {
        Self {
            start: 0,
            weights: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `sum_i w_i g(i)` over the run.
    pub fn integrate(&self, g: impl Fn(usize) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, &w)| w * g(self.start + k))
            .sum()
    }
}

/// Density sampled at the nodes of a [`Grid`], normalized by the trapezoid rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridBelief {
    grid: Grid,
    values: Vec<f64>,
}

impl GridBelief {
    /// Normalizes `values` so their trapezoid integral is 1.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::MismatchedDomains);
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidModel("density values must be finite and >= 0".into()));
        }
        let mut belief = Self { grid, values };
        let total = belief.integral();
        if !(total > 0.0) {
            return Err(Error::InvalidModel("density has zero mass on the grid".into()));
        }
        belief.values.iter_mut().for_each(|v| *v /= total);
        Ok(belief)
    }

    pub fn from_fn(grid: Grid, density: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(density).collect();
        Self::new(grid, values)
    }

    /// Uniform density on the whole grid domain.
    pub fn uniform(grid: Grid) -> Self {
        let v = 1.0 / (grid.hi() - grid.lo());
        let values = vec![v; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn integral(&self) -> f64 {
        self.grid
            .trapezoid_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// `\int x^k pi(dx)`.
    pub fn moment(&self, k: u32) -> f64 {
        let nodes = self.grid.nodes();
        self.grid
            .trapezoid_weights()
            .iter()
            .zip(&self.values)
            .zip(&nodes)
            .map(|((w, v), x)| w * v * x.powi(k as i32))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn std(&self) -> f64 {
        let m = self.moment(1);
        (self.moment(2) - m * m).max(0.0).sqrt()
    }

    /// `\int |p - q|`, in `[0, 2]`.
    pub fn tv_distance(&self, other: &GridBelief) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::MismatchedDomains);
        }
        Ok(self
            .grid
            .trapezoid_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (p, q))| w * (p - q).abs())
            .sum())
    }

    /// Sup-norm and discrete Lipschitz constant against the bounds of the
    /// reachable density class.
    pub fn check_density_class(&self, bounds: &DensityBounds, tol: f64) -> DensityClassReport {
        let max_density = self.values.iter().copied().fold(0.0, f64::max);
        let h = self.grid.spacing();
        let lipschitz_estimate = self
            .values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / h)
            .fold(0.0, f64::max);
        DensityClassReport {
            max_density,
            lipschitz_estimate,
            pass: max_density <= bounds.sup + tol && lipschitz_estimate <= bounds.lipschitz + tol,
        }
    }

    /// Writes `grid_x,density` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "grid_x,density")?;
        for (x, v) in self.grid.nodes().iter().zip(&self.values) {
            writeln!(out, "{x},{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityClassReport {
    pub max_density: f64,
    pub lipschitz_estimate: f64,
    pub pass: bool,
}

/// Belief over a real-valued source: a grid density or an exact point mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousBelief {
    PointMass(f64),
    Density(GridBelief),
}

impl ContinuousBelief {
    pub fn moment(&self, k: u32) -> f64 {
        match self {
            ContinuousBelief::PointMass(x) => x.powi(k as i32),
            ContinuousBelief::Density(g) => g.moment(k),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn std(&self) -> f64 {
        match self {
            ContinuousBelief::PointMass(_) => 0.0,
            ContinuousBelief::Density(g) => g.std(),
        }
    }

    pub fn as_density(&self) -> Option<&GridBelief> {
        match self {
            ContinuousBelief::Density(g) => Some(g),
            ContinuousBelief::PointMass(_) => None,
        }
    }

    /// Point masses are mutually singular with densities and with each
    /// other unless they coincide.
    pub fn tv_distance(&self, other: &ContinuousBelief) -> Result<f64> {
        match (self, other) {
            (ContinuousBelief::Density(a), ContinuousBelief::Density(b)) => a.tv_distance(b),
            (ContinuousBelief::PointMass(x), ContinuousBelief::PointMass(y)) => {
                Ok(if x == y { 0.0 } else { 2.0 })
            }
            _ => Ok(2.0),
        }
    }
}

impl From<GridBelief> for ContinuousBelief {
    fn from(g: GridBelief) -> Self {
        ContinuousBelief::Density(g)
    }
}

/// Probability vector over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexBelief {
    probs: Vec<f64>,
}

impl SimplexBelief {
    /// Validates that entries are non-negative and sum to 1 within 1e-12.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel("belief entries must be finite and >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("belief sums to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Divides by the sum.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if !(sum > 0.0) || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidModel("cannot normalize belief".into()));
        }
        probs.iter_mut().for_each(|p| *p /= sum);
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    /// `sum_i p_i v_i^k` where `support[i]` is the value of state `i`.
    pub fn moment(&self, support: &[f64], k: u32) -> f64 {
        self.probs
            .iter()
            .zip(support)
            .map(|(p, v)| p * v.powi(k as i32))
            .sum()
    }

    /// `sum_i |p_i - q_i|`, in `[0, 2]`.
    pub fn tv_distance(&self, other: &SimplexBelief) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::MismatchedDomains);
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::normal_pdf;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn std_normal() -> GridBelief {
        GridBelief::from_fn(Grid::centered(0.0, 8.0, 801).unwrap(), |x| normal_pdf(x, 0.0, 1.0))
            .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 1.0, 15).is_err());
        assert!(Grid::new(1.0, 1.0, 100).is_err());
        let g = Grid::new(-2.0, 2.0, 41).unwrap();
        assert_eq!(g.node(20), 0.0);
        assert_eq!(g.node(40), 2.0);
        assert_abs_diff_eq!(g.trapezoid_weights().iter().sum::<f64>(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_moments() {
        let b = std_normal();
        assert_abs_diff_eq!(b.integral(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.moment(1), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b.moment(2), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn simplex_moment_and_tv() {
        let b = SimplexBelief::new(vec![0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(b.moment(&[0.0, 1.0], 1), 0.75, epsilon = 1e-15);
        let p = SimplexBelief::point(2, 0);
        let q = SimplexBelief::point(2, 1);
        assert_eq!(p.tv_distance(&p).unwrap(), 0.0);
        assert_eq!(p.tv_distance(&q).unwrap(), 2.0);
        let r = SimplexBelief::new(vec![0.75, 0.25]).unwrap();
        let s = SimplexBelief::new(vec![0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(r.tv_distance(&s).unwrap(), 1.0, epsilon = 1e-15);
        assert!(p.tv_distance(&SimplexBelief::uniform(3)).is_err());
    }

    #[test]
    fn grid_tv_requires_matching_domains() {
        let a = std_normal();
        assert_eq!(a.tv_distance(&a).unwrap(), 0.0);
        let other = GridBelief::uniform(Grid::centered(0.0, 8.0, 401).unwrap());
        assert!(matches!(a.tv_distance(&other), Err(Error::MismatchedDomains)));
    }

    #[test]
    fn simplex_rejects_bad_vectors() {
        assert!(SimplexBelief::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexBelief::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn density_class_checks() {
        let bounds = DensityBounds::new(0.4, 0.25).unwrap();
        let uniform = GridBelief::uniform(Grid::centered(0.0, 10.0, 201).unwrap());
        assert!(uniform.check_density_class(&bounds, 1e-9).pass);
        let spike = GridBelief::from_fn(Grid::centered(0.0, 1.0, 201).unwrap(), |x| {
            normal_pdf(x, 0.0, 0.05)
        })
        .unwrap();
        let report = spike.check_density_class(&bounds, 1e-9);
        assert!(!report.pass);
        assert!(report.max_density > 0.4);
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        GridBelief::uniform(Grid::new(0.0, 1.0, 16).unwrap())
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("grid_x,density\n0,1\n"));
        assert_eq!(text.lines().count(), 17);
    }

    proptest! {
        #[test]
        fn interval_weights_partition_trapezoid(cuts in proptest::collection::vec(-9.0f64..9.0, 0..5)) {
            let grid = Grid::centered(0.0, 8.0, 101).unwrap();
            let mut cuts = cuts;
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut edges = vec![f64::NEG_INFINITY];
            edges.extend(cuts);
            edges.push(f64::INFINITY);
            let mut total = vec![0.0; grid.len()];
            for w in edges.windows(2) {
                let cell = grid.interval_weights(w[0], w[1]);
                for (k, v) in cell.weights.iter().enumerate() {
                    total[cell.start + k] += v;
                }
            }
            for (a, b) in total.iter().zip(grid.trapezoid_weights()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn interval_weights_exact_for_linear(a in -8.0f64..8.0, len in 0.0f64..8.0) {
            let grid = Grid::centered(0.0, 8.0, 101).unwrap();
            let b = (a + len).min(8.0);
            let cell = grid.interval_weights(a, b);
            // linear functions are reproduced exactly by the interpolant
            let got = cell.integrate(|i| 2.0 * grid.node(i) + 1.0);
            let want = (b * b + b) - (a * a + a);
            prop_assert!((got - want).abs() < 1e-9);
        }
    }
}
