//! Empirical occupation measures over (belief bin, quantizer) pairs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cost::MASS_FLOOR;
use crate::error::{Error, Result};
use crate::horizon::policy::{Binning, Policy};
use crate::horizon::rollout::simulate_path;
use crate::problem::CodingProblem;

/// Visit counts of `(belief bin, quantizer id)` along one trajectory.
///
/// The first belief seen in each bin is kept as that bin's representative.
#[derive(Debug, Clone)]
pub struct OccupationHistogram<B> {
    pub binning: Binning,
    pub counts: BTreeMap<(usize, usize), u64>,
    pub total_steps: u64,
    pub cost_sum: f64,
    pub representatives: BTreeMap<usize, B>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationCell {
    pub bin: usize,
    pub mean_center: f64,
    pub std_center: f64,
    pub quantizer_id: usize,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationSummary {
    pub binning: Binning,
    pub total_steps: u64,
    pub time_averaged_cost: f64,
    pub cells: Vec<OccupationCell>,
}

impl<B: Clone> OccupationHistogram<B> {
    pub fn new(binning: Binning) -> Self {
        Self {
            binning,
            counts: BTreeMap::new(),
            total_steps: 0,
            cost_sum: 0.0,
            representatives: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, bin: usize, quantizer_id: usize, cost: f64, belief: &B) {
        *self.counts.entry((bin, quantizer_id)).or_insert(0) += 1;
        self.total_steps += 1;
        self.cost_sum += cost;
        self.representatives.entry(bin).or_insert_with(|| belief.clone());
    }

    /// `\int c dv`, the realized average stage cost.
    pub fn time_averaged_cost(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.cost_sum / self.total_steps as f64
        }
    }

    /// Normalized mass of each belief bin.
    pub fn bin_marginal(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for (&(b, _), &c) in &self.counts {
            *out.entry(b).or_insert(0.0) += c as f64 / self.total_steps as f64;
        }
        out
    }

    /// `sum |v - w|` between normalized `(bin, quantizer)` histograms.
    pub fn tv_distance(&self, other: &Self) -> Result<f64> {
        if self.total_steps == 0 || other.total_steps == 0 {
            return Err(Error::EmptyHistogram);
        }
        if self.binning != other.binning {
            return Err(Error::MismatchedDomains);
        }
        let mut keys: Vec<_> = self.counts.keys().chain(other.counts.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        Ok(keys
            .iter()
            .map(|k| {
                let a = self.counts.get(k).copied().unwrap_or(0) as f64 / self.total_steps as f64;
                let b = other.counts.get(k).copied().unwrap_or(0) as f64 / other.total_steps as f64;
                (a - b).abs()
            })
            .sum())
    }

    pub fn summary(&self) -> OccupationSummary {
        OccupationSummary {
            binning: self.binning.clone(),
            total_steps: self.total_steps,
            time_averaged_cost: self.time_averaged_cost(),
            cells: self
                .counts
                .iter()
                .map(|(&(bin, quantizer_id), &count)| {
                    let (mean_center, std_center) = self.binning.center(bin);
                    OccupationCell {
                        bin,
                        mean_center,
                        std_center,
                        quantizer_id,
                        count,
                    }
                })
                .collect(),
        }
    }
}

/// Runs one path of `steps` steps and bins every visited belief.
pub fn occupation_measure<P: CodingProblem>(
    problem: &P,
    policy: &Policy<P::Belief, P::Quantizer>,
    start: &P::Belief,
    steps: u64,
    seed: u64,
    binning: &Binning,
) -> Result<OccupationHistogram<P::Belief>> {
    binning.validate()?;
    let mut hist = OccupationHistogram::new(binning.clone());
    simulate_path(problem, policy, start, steps, seed, 0, &mut |v| {
        let bin = binning.bin_of(problem, v.belief);
        hist.record(bin, v.record.quantizer_id, v.record.stage_cost, v.belief);
    })?;
    Ok(hist)
}

/// `sum_b |v(b) - (P v)(b)|` over belief bins, where `P v` pushes each
/// `(bin, quantizer)` cell through one filter step from the bin's
/// representative belief. `candidates[id]` is the quantizer with that id.
pub fn invariance_residual<P: CodingProblem>(
    problem: &P,
    hist: &OccupationHistogram<P::Belief>,
    candidates: &[P::Quantizer],
) -> Result<f64> {
    if hist.total_steps == 0 {
        return Err(Error::EmptyHistogram);
    }
    let total = hist.total_steps as f64;
    let mut pushed: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(bin, qid), &count) in &hist.counts {
        let q = candidates
            .get(qid)
            .ok_or_else(|| Error::InvalidPolicy(format!("no candidate with id {qid}")))?;
        let rep = &hist.representatives[&bin];
        let e = problem.expand(rep, q, MASS_FLOOR)?;
        for (m, post) in &e.posteriors {
            let to = hist.binning.bin_of(problem, post);
            *pushed.entry(to).or_insert(0.0) += count as f64 / total * e.masses[*m];
        }
    }
    let marginal = hist.bin_marginal();
    let mut bins: Vec<usize> = marginal.keys().chain(pushed.keys()).copied().collect();
    bins.sort_unstable();
    bins.dedup();
    Ok(bins
        .iter()
        .map(|b| (marginal.get(b).copied().unwrap_or(0.0) - pushed.get(b).copied().unwrap_or(0.0)).abs())
        .sum())
}

/// Convenience: the candidate table a policy's quantizer ids refer to.
pub fn policy_candidates<B, Q: Clone>(policy: &Policy<B, Q>) -> Vec<Q> {
    match policy {
        Policy::Pieced(p) => p.fallback.clone(),
        Policy::Greedy { candidates } => candidates.clone(),
        Policy::Fixed { quantizer } => vec![quantizer.clone()],
        Policy::Randomized(r) => r.candidates.clone(),
    }
}
