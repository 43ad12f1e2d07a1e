//! Brute-force references for small instances.
//!
//! The finite-state oracles read the transition matrix and cost table and
//! nothing else from the solver: Bayes updates, cell costs and the search
//! itself are written out again here with plain loops.

use serde::Serialize;

use crate::belief::{GridBelief, SimplexBelief};
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::quantizer::IntervalQuantizer;
use crate::source::FiniteChain;

/// Node cap for [`brute_force_finite`].
pub const BRUTE_FORCE_BUDGET: usize = 10_000_000;

/// `inf_u sum_x w[x] c0(x, u)` over the states listed in `members`.
fn oracle_cell_cost(chain: &FiniteChain, cost: &CostModel, w: &[f64], members: &[usize]) -> f64 {
    match cost {
        CostModel::Quadratic => {
            let support = chain.support();
            let mut mass = 0.0;
            let mut first = 0.0;
            for &x in members {
                mass += w[x];
                first += w[x] * support[x];
            }
            if mass <= 0.0 {
                return 0.0;
            }
            let u = first / mass;
            members.iter().map(|&x| w[x] * (support[x] - u) * (support[x] - u)).sum()
        }
        CostModel::BoundedTabular { matrix } => {
            let mut best = f64::INFINITY;
            for u in 0..matrix[0].len() {
                let c: f64 = members.iter().map(|&x| w[x] * matrix[x][u]).sum();
                best = best.min(c);
            }
            best
        }
    }
}

/// Every map `{0..n-1} -> {0..M-1}`, labels not canonicalized.
fn all_assignments(n: usize, levels: usize) -> Vec<Vec<usize>> {
    let total = levels.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let d = code % levels;
                    code /= levels;
                    d
                })
                .collect()
        })
        .collect()
}

struct BruteForce<'a> {
    chain: &'a FiniteChain,
    cost: &'a CostModel,
    horizon: usize,
    assignments: Vec<Vec<usize>>,
    levels: usize,
    nodes: usize,
}

impl BruteForce<'_> {
    fn value(&mut self, pi: &[f64], t: usize) -> Result<f64> {
        self.nodes += 1;
        if self.nodes > BRUTE_FORCE_BUDGET {
            return Err(Error::BudgetExceeded {
                budget: BRUTE_FORCE_BUDGET,
                nodes: self.nodes,
                upper_bound: None,
            });
        }
        let n = pi.len();
        let mut best = f64::INFINITY;
        for a in 0..self.assignments.len() {
            let f = self.assignments[a].clone();
            let mut total = 0.0;
            for m in 0..self.levels {
                let members: Vec<usize> = (0..n).filter(|&x| f[x] == m).collect();
                total += oracle_cell_cost(self.chain, self.cost, pi, &members) / self.horizon as f64;
                if t + 1 == self.horizon {
                    continue;
                }
                let mass: f64 = members.iter().map(|&x| pi[x]).sum();
                if mass <= 0.0 {
                    continue;
                }
                let mut next = vec![0.0; n];
                for (j, nj) in next.iter_mut().enumerate() {
                    for &i in &members {
                        *nj += pi[i] * self.chain.prob(i, j);
                    }
                }
                let s: f64 = next.iter().sum();
                for v in &mut next {
                    *v /= s;
                }
                total += mass * self.value(&next, t + 1)?;
            }
            best = best.min(total);
        }
        Ok(best)
    }
}

/// Exact optimal `E[(1/T) sum_t c(pi_t, Q_t)]` by exhaustive search over every
/// `M`-level assignment at every reachable belief.
pub fn brute_force_finite(
    pi0: &SimplexBelief,
    chain: &FiniteChain,
    levels: usize,
    horizon: usize,
    cost: &CostModel,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidHorizon("T must be >= 1".into()));
    }
    if levels == 0 || pi0.len() != chain.len() {
        return Err(Error::InvalidModel("belief and chain sizes differ or M = 0".into()));
    }
    cost.validate(Some(chain.len()))?;
    let n = chain.len();
    let branching = (levels as f64).powi(n as i32) * levels as f64;
    if branching.powi(horizon as i32 - 1) > BRUTE_FORCE_BUDGET as f64 {
        return Err(Error::BudgetExceeded {
            budget: BRUTE_FORCE_BUDGET,
            nodes: branching.powi(horizon as i32 - 1).min(usize::MAX as f64) as usize,
            upper_bound: None,
        });
    }
    let mut search = BruteForce {
        chain,
        cost,
        horizon,
        assignments: all_assignments(n, levels),
        levels,
        nodes: 0,
    };
    search.value(pi0.probs(), 0)
}

/// Exact optimum over all zero-delay encoders that see the full source
/// history, for `T <= 2`, with optimal decoders.
///
/// At `t = 0` the encoder maps `x_0` to a symbol; at `t = 1` it maps the pair
/// `(x_0, x_1)` to a symbol. This contains every encoder that uses
/// `(q_0, x_1)`, since `q_0` is a function of `x_0`. The decoder at `t`
/// reconstructs from all symbols received so far.
pub fn exhaustive_admissible_search(
    pi0: &SimplexBelief,
    chain: &FiniteChain,
    levels: usize,
    horizon: usize,
    cost: &CostModel,
) -> Result<f64> {
    let n = chain.len();
    if n > 3 || levels > 2 || horizon > 2 || horizon == 0 || levels == 0 {
        return Err(Error::InstanceTooLarge(format!(
            "admissible search needs n <= 3, 1 <= M <= 2, 1 <= T <= 2 (got n = {n}, M = {levels}, T = {horizon})"
        )));
    }
    if pi0.len() != n {
        return Err(Error::InvalidModel("belief and chain sizes differ".into()));
    }
    cost.validate(Some(n))?;
    let p0 = pi0.probs();
    let first_stage = |f0: &[usize]| -> f64 {
        (0..levels)
            .map(|m| {
                let members: Vec<usize> = (0..n).filter(|&x| f0[x] == m).collect();
                oracle_cell_cost(chain, cost, p0, &members)
            })
            .sum()
    };
    let encoders0 = all_assignments(n, levels);
    if horizon == 1 {
        return Ok(encoders0.iter().map(|f| first_stage(f)).fold(f64::INFINITY, f64::min));
    }

    // second-stage encoders act on the n * n pairs (x0, x1), indexed x0 * n + x1
    let encoders1 = all_assignments(n * n, levels);
    let mut best = f64::INFINITY;
    for f0 in &encoders0 {
        let d0 = first_stage(f0);
        for f1 in &encoders1 {
            let mut d1 = 0.0;
            for m0 in 0..levels {
                for m1 in 0..levels {
                    // conditional law of x1 given (q0, q1) = (m0, m1), unnormalized
                    let mut w = vec![0.0; n];
                    for x0 in 0..n {
                        if f0[x0] != m0 {
                            continue;
                        }
                        for (x1, wx) in w.iter_mut().enumerate() {
                            if f1[x0 * n + x1] == m1 {
                                *wx += p0[x0] * chain.prob(x0, x1);
                            }
                        }
                    }
                    let all: Vec<usize> = (0..n).collect();
                    d1 += oracle_cell_cost(chain, cost, &w, &all);
                }
            }
            best = best.min(0.5 * (d0 + d1));
        }
    }
    Ok(best)
}

/// Output of [`lloyd_max`].
#[derive(Debug, Clone, Serialize)]
pub struct LloydMax {
    pub quantizer: IntervalQuantizer,
    pub reconstructions: Vec<f64>,
    pub mse: f64,
    pub iterations: usize,
}

/// Mass, first and second moment of a grid density over `(a, b]`.
fn interval_moments(belief: &GridBelief, a: f64, b: f64) -> (f64, f64, f64) {
    let grid = belief.grid();
    let w = grid.interval_weights(a, b);
    let v = belief.values();
    let mut out = (0.0, 0.0, 0.0);
    for (k, &wk) in w.weights.iter().enumerate() {
        let i = w.start + k;
        let x = grid.node(i);
        let p = wk * v[i];
        out.0 += p;
        out.1 += p * x;
        out.2 += p * x * x;
    }
    out
}

fn cell_edges(thresholds: &[f64], m: usize) -> (f64, f64) {
    let a = if m == 0 { f64::NEG_INFINITY } else { thresholds[m - 1] };
    let b = thresholds.get(m).copied().unwrap_or(f64::INFINITY);
    (a, b)
}

/// Memoryless `M`-level squared-error quantizer by alternating centroid and
/// midpoint updates.
pub fn lloyd_max(belief: &GridBelief, levels: usize, max_iter: usize, tol: f64) -> Result<LloydMax> {
    if levels == 0 {
        return Err(Error::InfeasibleSpec("M must be >= 1".into()));
    }
    let grid = belief.grid();
    let mean = belief.mean();
    let std = belief.std();
    let modes = belief
        .values()
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count();
    if modes > 1 {
        log::warn!("density has {modes} local maxima; Lloyd-Max may stop at a local optimum");
    }

    let mut thresholds: Vec<f64> = (1..levels)
        .map(|k| (mean + std * (-2.0 + 4.0 * k as f64 / levels as f64)).clamp(grid.lo(), grid.hi()))
        .collect();
    let mut recon = vec![0.0; levels];
    let mut iterations = 0;
    loop {
        for (m, r) in recon.iter_mut().enumerate() {
            let (a, b) = cell_edges(&thresholds, m);
            let (mass, first, _) = interval_moments(belief, a, b);
            *r = if mass > crate::cost::MASS_FLOOR {
                first / mass
            } else {
                0.5 * (a.max(grid.lo()) + b.min(grid.hi()))
            };
        }
        let next: Vec<f64> = recon.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let shift = thresholds
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        thresholds = next;
        iterations += 1;
        if shift < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: shift,
            });
        }
    }
    // recenter the decoder on the final cells
    for (m, r) in recon.iter_mut().enumerate() {
        let (a, b) = cell_edges(&thresholds, m);
        let (mass, first, _) = interval_moments(belief, a, b);
        if mass > crate::cost::MASS_FLOOR {
            *r = first / mass;
        }
    }
    let mse = (0..levels)
        .map(|m| {
            let (a, b) = cell_edges(&thresholds, m);
            let (mass, first, second) = interval_moments(belief, a, b);
            second - 2.0 * recon[m] * first + recon[m] * recon[m] * mass
        })
        .sum::<f64>()
        .max(0.0);
    Ok(LloydMax {
        quantizer: IntervalQuantizer::new(thresholds)?,
        reconstructions: recon,
        mse,
        iterations,
    })
}
