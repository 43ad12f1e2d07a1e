//! Time-varying and stationary coding policies and the agent that executes them.

use serde::{Deserialize, Serialize};

use crate::dp::{greedy_policy_step, PolicyTree};
use crate::error::{Error, Result};
use crate::horizon::schedule::PiecingSchedule;
use crate::problem::CodingProblem;

/// Rectangular binning of beliefs by their mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binning {
    pub mean_range: (f64, f64),
    pub mean_bins: usize,
    pub std_range: (f64, f64),
    pub std_bins: usize,
}

impl Binning {
    pub fn new(mean_range: (f64, f64), mean_bins: usize, std_range: (f64, f64), std_bins: usize) -> Result<Self> {
        let b = Self {
            mean_range,
            mean_bins,
            std_range,
            std_bins,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if self.mean_bins == 0 || self.std_bins == 0 || !ok_range(self.mean_range) || !ok_range(self.std_range) {
            return Err(Error::Config("binning needs positive bin counts and finite lo < hi ranges".into()));
        }
        Ok(())
    }

    /// 50 mean bins over the support and a single std bin.
    pub fn finite_default(support: &[f64]) -> Self {
        let lo = support.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = support.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Self {
            mean_range: (lo, hi),
            mean_bins: 50,
            std_range: (0.0, hi - lo),
            std_bins: 1,
        }
    }

    /// 50 mean bins over `+-4 s` and 20 std bins over `[0, s]`.
    pub fn continuous_default(stationary_std: f64) -> Self {
        Self {
            mean_range: (-4.0 * stationary_std, 4.0 * stationary_std),
            mean_bins: 50,
            std_range: (0.0, stationary_std),
            std_bins: 20,
        }
    }

    pub fn len(&self) -> usize {
        self.mean_bins * self.std_bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(v: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
        let u = ((v - lo) / (hi - lo) * bins as f64).floor();
        if u.is_nan() || u < 0.0 {
            0
        } else {
            (u as usize).min(bins - 1)
        }
    }

    /// Bin of `(mean, std)`; values outside the ranges go to the edge bins.
    pub fn index(&self, mean: f64, std: f64) -> usize {
        Self::axis(mean, self.mean_range, self.mean_bins) * self.std_bins + Self::axis(std, self.std_range, self.std_bins)
    }

    /// Center of bin `b` as `(mean, std)`.
    pub fn center(&self, b: usize) -> (f64, f64) {
        let (i, j) = (b / self.std_bins, b % self.std_bins);
        let mid = |(lo, hi): (f64, f64), n: usize, k: usize| lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
        (mid(self.mean_range, self.mean_bins, i), mid(self.std_range, self.std_bins, j))
    }

    pub fn bin_of<P: CodingProblem>(&self, problem: &P, belief: &P::Belief) -> usize {
        self.index(problem.moment(belief, 1), problem.belief_std(belief))
    }
}

/// Stationary policy that draws the quantizer from a per-bin distribution
/// using randomness shared by encoder and decoder.
#[derive(Debug, Clone, Serialize)]
pub struct RandomizedStationaryPolicy<Q> {
    pub binning: Binning,
    pub table: Vec<Vec<f64>>,
    pub candidates: Vec<Q>,
}

impl<Q> RandomizedStationaryPolicy<Q> {
    pub fn new(binning: Binning, table: Vec<Vec<f64>>, candidates: Vec<Q>) -> Result<Self> {
        binning.validate()?;
        if table.len() != binning.len() {
            return Err(Error::InvalidPolicy(format!(
                "table has {} rows for {} bins",
                table.len(),
                binning.len()
            )));
        }
        for (b, row) in table.iter().enumerate() {
            if row.len() != candidates.len() || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidPolicy(format!("row {b} is not a distribution over the candidates")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidPolicy(format!("row {b} sums to {s}")));
            }
        }
        Ok(Self {
            binning,
            table,
            candidates,
        })
    }

    /// Same distribution in every bin.
    pub fn uniform_rows(binning: Binning, row: Vec<f64>, candidates: Vec<Q>) -> Result<Self> {
        let table = vec![row; binning.len()];
        Self::new(binning, table, candidates)
    }

    /// Candidate drawn by inverting the row's CDF at `r` in `[0, 1)`.
    pub fn draw(&self, bin: usize, r: f64) -> usize {
        let row = &self.table[bin];
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if r < acc {
                return i;
            }
        }
        row.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Segment<B, Q> {
    pub horizon: u64,
    pub repetitions: u64,
    pub tree: PolicyTree<B, Q>,
}

/// Finite-horizon trees replayed back to back with the belief reset to
/// `restart` at every block start.
///
/// Branches the tree does not contain (pruned as negligible) are coded with
/// the greedy choice over `fallback`, which should be the candidate list the
/// trees were designed with.
#[derive(Debug, Clone, Serialize)]
pub struct PiecedPolicy<B, Q> {
    pub schedule: PiecingSchedule,
    pub segments: Vec<Segment<B, Q>>,
    pub restart: B,
    pub fallback: Vec<Q>,
}

impl<B: Clone, Q: Clone + crate::quantizer::Quantizer> PiecedPolicy<B, Q> {
    /// A single tree repeated every `T` steps.
    pub fn replay(tree: PolicyTree<B, Q>, fallback: Vec<Q>) -> Self {
        let t = tree.horizon as u64;
        let schedule = PiecingSchedule {
            horizons: vec![t],
            repetitions: vec![1],
            segment_lengths: vec![t],
            boundaries: vec![t],
            tail_ratios: Vec::new(),
        };
        let restart = tree.root_node().belief.clone();
        Self {
            schedule,
            segments: vec![Segment {
                horizon: t,
                repetitions: 1,
                tree,
            }],
            restart,
            fallback,
        }
    }
}

/// Pieces one tree per schedule segment into a single time-varying policy.
///
/// Every tree must have horizon `T_k` and be rooted at the same belief.
pub fn build_pieced_policy<P: CodingProblem>(
    problem: &P,
    trees: Vec<PolicyTree<P::Belief, P::Quantizer>>,
    schedule: &PiecingSchedule,
    fallback: Vec<P::Quantizer>,
) -> Result<PiecedPolicy<P::Belief, P::Quantizer>> {
    if trees.len() != schedule.k_max() {
        return Err(Error::ScheduleMismatch(format!(
            "{} trees for {} segments",
            trees.len(),
            schedule.k_max()
        )));
    }
    let restart = trees[0].root_node().belief.clone();
    let key = problem.belief_key(&restart);
    let mut segments = Vec::with_capacity(trees.len());
    for (k, tree) in trees.into_iter().enumerate() {
        if tree.horizon as u64 != schedule.horizons[k] {
            return Err(Error::ScheduleMismatch(format!(
                "segment {} needs horizon {}, tree has {}",
                k + 1,
                schedule.horizons[k],
                tree.horizon
            )));
        }
        if problem.belief_key(&tree.root_node().belief) != key {
            return Err(Error::ScheduleMismatch(format!(
                "segment {} tree is rooted at a different belief",
                k + 1
            )));
        }
        segments.push(Segment {
            horizon: schedule.horizons[k],
            repetitions: schedule.repetitions[k],
            tree,
        });
    }
    Ok(PiecedPolicy {
        schedule: schedule.clone(),
        segments,
        restart,
        fallback,
    })
}

/// Any policy the rollout simulator can run.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy<B, Q> {
    Pieced(PiecedPolicy<B, Q>),
    /// Least stage cost at the current belief.
    Greedy { candidates: Vec<Q> },
    /// The same quantizer at every step.
    Fixed { quantizer: Q },
    Randomized(RandomizedStationaryPolicy<Q>),
}

impl<B, Q> Policy<B, Q> {
    pub fn needs_shared_randomness(&self) -> bool {
        matches!(self, Policy::Randomized(_))
    }
}

/// One side (encoder or decoder) of a running policy.
pub struct Agent<'a, P: CodingProblem> {
    problem: &'a P,
    policy: &'a Policy<P::Belief, P::Quantizer>,
    belief: P::Belief,
    segment: usize,
    node: Option<usize>,
}

impl<'a, P: CodingProblem> Agent<'a, P> {
    pub fn new(problem: &'a P, policy: &'a Policy<P::Belief, P::Quantizer>, start: P::Belief) -> Self {
        Self {
            problem,
            policy,
            belief: start,
            segment: 0,
            node: None,
        }
    }

    pub fn belief(&self) -> &P::Belief {
        &self.belief
    }

    /// Quantizer id and quantizer for step `t`; `r` is the shared uniform
    /// draw, used only by randomized policies.
    pub fn choose(&mut self, t: u64, r: f64) -> (usize, &'a P::Quantizer) {
        match self.policy {
            Policy::Pieced(pp) => {
                let (k, offset) = pp.schedule.position(t);
                if offset == 0 {
                    self.belief = pp.restart.clone();
                    self.segment = k;
                    self.node = Some(pp.segments[k].tree.root);
                }
                match self.node {
                    Some(n) => {
                        let node = &pp.segments[self.segment].tree.nodes[n];
                        (node.quantizer_id, &node.quantizer)
                    }
                    None => {
                        let i = greedy_policy_step(self.problem, &self.belief, &pp.fallback);
                        (i, &pp.fallback[i])
                    }
                }
            }
            Policy::Greedy { candidates } => {
                let i = greedy_policy_step(self.problem, &self.belief, candidates);
                (i, &candidates[i])
            }
            Policy::Fixed { quantizer } => (0, quantizer),
            Policy::Randomized(rp) => {
                let bin = rp.binning.bin_of(self.problem, &self.belief);
                let i = rp.draw(bin, r);
                (i, &rp.candidates[i])
            }
        }
    }

    /// Advances the belief (and tree position) after `symbol` was sent with `q`.
    pub fn observe(&mut self, q: &P::Quantizer, symbol: usize) -> Result<()> {
        self.belief = self.problem.filter_update(&self.belief, q, symbol)?;
        if let (Policy::Pieced(pp), Some(n)) = (self.policy, self.node) {
            self.node = pp.segments[self.segment].tree.child(n, symbol);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_indices() {
        let b = Binning::new((0.0, 1.0), 50, (0.0, 1.0), 1).unwrap();
        assert_eq!(b.len(), 50);
        assert_eq!(b.index(0.0, 0.3), 0);
        assert_eq!(b.index(1.0, 0.3), 49);
        assert_eq!(b.index(-3.0, 9.0), 0);
        assert_eq!(b.index(0.5, 0.0), 25);
        let (m, s) = b.center(25);
        assert!((m - 0.51).abs() < 1e-12 && (s - 0.5).abs() < 1e-12);
        let g = Binning::new((-1.0, 1.0), 2, (0.0, 1.0), 2).unwrap();
        assert_eq!(g.index(0.5, 0.75), 3);
        assert_eq!(g.index(-0.5, 0.75), 1);
        assert!(Binning::new((1.0, 0.0), 2, (0.0, 1.0), 1).is_err());
    }

    #[test]
    fn randomized_rows_are_validated() {
        let b = Binning::new((0.0, 1.0), 2, (0.0, 1.0), 1).unwrap();
        assert!(RandomizedStationaryPolicy::uniform_rows(b.clone(), vec![0.5, 0.4], vec![0, 1]).is_err());
        assert!(RandomizedStationaryPolicy::new(b.clone(), vec![vec![1.0, 0.0]], vec![0, 1]).is_err());
        let p = RandomizedStationaryPolicy::uniform_rows(b, vec![0.25, 0.75], vec![0, 1]).unwrap();
        assert_eq!(p.draw(0, 0.0), 0);
        assert_eq!(p.draw(0, 0.2499), 0);
        assert_eq!(p.draw(0, 0.25), 1);
        assert_eq!(p.draw(1, 0.999_999), 1);
    }
}
