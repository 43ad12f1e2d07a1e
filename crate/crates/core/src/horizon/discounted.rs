//! Discounted-cost value iteration on a finite grid of beliefs.
//!
//! ```text
//! V(pi) <- min_Q [ c(pi, Q) + beta * sum_m pi(B_m) V(nn(pi_m')) ]
//! ```
//!
//! where `nn` maps a posterior to the nearest grid belief in total
//! variation. On the two-state simplex the grid is a mesh of `[0, 1]` and the
//! lookup is plain rounding. For density beliefs the grid bias is not
//! quantified; treat those results as approximate.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::SimplexBelief;
use crate::cost::MASS_FLOOR;
use crate::error::{Error, Result};
use crate::problem::CodingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViOptions {
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViSolution {
    pub values: Vec<f64>,
    /// Minimizing candidate per grid point, first on ties.
    pub policy: Vec<usize>,
    /// `sup |V - TV|` at the returned values.
    pub residual: f64,
    pub iterations: usize,
    /// Sup-norm change of every sweep.
    pub diffs: Vec<f64>,
}

impl ViSolution {
    /// Rows of `point,value,quantizer_id`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "point,value,quantizer_id")?;
        for (i, (v, q)) in self.values.iter().zip(&self.policy).enumerate() {
            writeln!(out, "{i},{v},{q}")?;
        }
        Ok(())
    }
}

/// `points` beliefs `(1 - s, s)` with `s = i / (points - 1)`.
pub fn simplex_grid_2(points: usize) -> Result<Vec<SimplexBelief>> {
    if points < 2 {
        return Err(Error::InvalidModel("a simplex grid needs at least 2 points".into()));
    }
    (0..points)
        .map(|i| {
            let s = i as f64 / (points - 1) as f64;
            SimplexBelief::new(vec![1.0 - s, s])
        })
        .collect()
}

struct Transition {
    stage: f64,
    next: Vec<(f64, usize)>,
}

fn nearest<P: CodingProblem>(problem: &P, grid: &[P::Belief], b: &P::Belief) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for (j, g) in grid.iter().enumerate() {
        let d = problem.tv_distance(b, g)?;
        if d < best.1 {
            best = (j, d);
        }
    }
    Ok(best.0)
}

fn bellman(table: &[Vec<Transition>], values: &[f64], beta: f64) -> (Vec<f64>, Vec<usize>) {
    table
        .par_iter()
        .map(|row| {
            let mut best = (f64::INFINITY, 0);
            for (q, tr) in row.iter().enumerate() {
                let v = tr.stage + beta * tr.next.iter().map(|(p, j)| p * values[*j]).sum::<f64>();
                if v < best.0 {
                    best = (v, q);
                }
            }
            best
        })
        .unzip()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates the discounted Bellman operator from `V = 0` until the sup-norm
/// change drops below `tol`. `beta = 0` is allowed and returns the best
/// stage cost at every point.
pub fn discounted_value_iteration<P: CodingProblem>(
    problem: &P,
    grid: &[P::Belief],
    candidates: &[P::Quantizer],
    options: ViOptions,
) -> Result<ViSolution> {
    let ViOptions { beta, tol, max_iter } = options;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidModel(format!("discount must lie in [0, 1), got {beta}")));
    }
    if grid.is_empty() || candidates.is_empty() {
        return Err(Error::InfeasibleSpec("empty belief grid or candidate list".into()));
    }
    let table: Vec<Vec<Transition>> = grid
        .par_iter()
        .map(|b| {
            candidates
                .iter()
                .map(|q| {
                    let e = problem.expand(b, q, MASS_FLOOR)?;
                    let next = e
                        .posteriors
                        .iter()
                        .map(|(m, post)| Ok((e.masses[*m], nearest(problem, grid, post)?)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Transition {
                        stage: e.stage_cost,
                        next,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = vec![0.0; grid.len()];
    let mut diffs = Vec::new();
    for iteration in 1..=max_iter {
        let (next, policy) = bellman(&table, &values, beta);
        let diff = sup_diff(&next, &values);
        diffs.push(diff);
        values = next;
        if diff < tol {
            let (check, _) = bellman(&table, &values, beta);
            return Ok(ViSolution {
                residual: sup_diff(&check, &values),
                values,
                policy,
                iterations: iteration,
                diffs,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: *diffs.last().unwrap_or(&f64::INFINITY),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostModel;
    use crate::problem::FiniteProblem;
    use crate::quantizer::enumerate_finite_partitions;
    use crate::source::FiniteChain;
    use approx::assert_abs_diff_eq;

    fn reference(cost: CostModel) -> FiniteProblem {
        let chain = FiniteChain::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]], SimplexBelief::uniform(2)).unwrap();
        FiniteProblem::new(chain, cost).unwrap()
    }

    #[test]
    fn zero_discount_is_stage_cost() {
        let p = reference(CostModel::Quadratic);
        let grid = simplex_grid_2(51).unwrap();
        let cands = enumerate_finite_partitions(2, 1).unwrap();
        let sol = discounted_value_iteration(
            &p,
            &grid,
            &cands,
            ViOptions {
                beta: 0.0,
                tol: 1e-12,
                max_iter: 10,
            },
        )
        .unwrap();
        for (b, v) in grid.iter().zip(&sol.values) {
            assert_eq!(*v, p.stage_cost(b, &cands[0]));
        }
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn constant_cost_gives_geometric_series() {
        let kappa = 0.7;
        let p = reference(CostModel::BoundedTabular {
            matrix: vec![vec![kappa], vec![kappa]],
        });
        let grid = simplex_grid_2(21).unwrap();
        let cands = enumerate_finite_partitions(2, 2).unwrap();
        let sol = discounted_value_iteration(
            &p,
            &grid,
            &cands,
            ViOptions {
                beta: 0.5,
                tol: 1e-12,
                max_iter: 200,
            },
        )
        .unwrap();
        for v in &sol.values {
            assert_abs_diff_eq!(*v, kappa / 0.5, epsilon = 1e-11);
        }
    }

    #[test]
    fn contraction_and_grid_refinement() {
        let p = reference(CostModel::Quadratic);
        let cands = enumerate_finite_partitions(2, 2).unwrap();
        let opts = ViOptions {
            beta: 0.9,
            tol: 1e-9,
            max_iter: 400,
        };
        let coarse = discounted_value_iteration(&p, &simplex_grid_2(201).unwrap(), &cands, opts).unwrap();
        assert!(coarse.residual < 1e-6);
        for w in coarse.diffs.windows(2).skip(5) {
            if w[0] > 1e-13 {
                assert!(w[1] <= (0.9 + 0.01) * w[0], "{} -> {}", w[0], w[1]);
            }
        }
        let fine = discounted_value_iteration(&p, &simplex_grid_2(2001).unwrap(), &cands, opts).unwrap();
        for (i, v) in coarse.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, fine.values[i * 10], epsilon = 1e-3);
        }
    }

    #[test]
    fn rejects_bad_discount() {
        let p = reference(CostModel::Quadratic);
        let cands = enumerate_finite_partitions(2, 2).unwrap();
        let opts = ViOptions {
            beta: 1.0,
            tol: 1e-9,
            max_iter: 10,
        };
        assert!(discounted_value_iteration(&p, &simplex_grid_2(5).unwrap(), &cands, opts).is_err());
    }
}
