//! Distortion measures, optimal decoders and the per-stage cost `c(pi, Q)`.
//!
//! For a belief `pi` and quantizer `Q` the stage cost is the distortion of the
//! best decoder: `sum_m inf_u \int_{B_m} c0(x, u) pi(dx)`. Under squared error
//! the infimum is attained at the cell centroid and the cell term is
//! `mass * (E[x^2 | B_m] - E[x | B_m]^2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cells with less mass than this contribute zero cost and have no
/// reconstruction.
pub const MASS_FLOOR: f64 = 1e-12;

/// Per-letter distortion `c0(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostModel {
    /// `c0(x, u) = (x - u)^2` with real reconstructions.
    Quadratic,
    /// `c0(x, u) = matrix[x][u]` over a finite alphabet and a finite
    /// reconstruction set.
    BoundedTabular { matrix: Vec<Vec<f64>> },
}

impl CostModel {
    pub fn validate(&self, alphabet: Option<usize>) -> Result<()> {
        if let CostModel::BoundedTabular { matrix } = self {
            let n = alphabet.ok_or_else(|| {
                Error::InvalidModel("tabular costs need a finite alphabet".into())
            })?;
            if matrix.len() != n {
                return Err(Error::InvalidModel(format!(
                    "cost matrix has {} rows for {n} states",
                    matrix.len()
                )));
            }
            let width = matrix.first().map_or(0, Vec::len);
            if width == 0 || matrix.iter().any(|r| r.len() != width) {
                return Err(Error::InvalidModel("cost matrix rows must be equal and non-empty".into()));
            }
            if matrix.iter().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
                return Err(Error::InvalidModel("cost entries must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    /// Largest per-letter cost, when bounded.
    pub fn bound(&self) -> Option<f64> {
        match self {
            CostModel::Quadratic => None,
            CostModel::BoundedTabular { matrix } => {
                Some(matrix.iter().flatten().copied().fold(0.0, f64::max))
            }
        }
    }
}

/// Decoder output for one received symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    /// A point of the real line.
    Point(f64),
    /// An index into a finite reconstruction set.
    Index(usize),
}

impl Reconstruction {
    /// Numeric value for logs: the point, or the index.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Reconstruction::Point(u) => u,
            Reconstruction::Index(i) => i as f64,
        }
    }
}

/// Zeroth, first and second moments of a belief restricted to one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellMoments {
    pub mass: f64,
    pub first: f64,
    pub second: f64,
}

impl CellMoments {
    pub fn centroid(&self) -> Option<f64> {
        (self.mass >= MASS_FLOOR).then(|| self.first / self.mass)
    }

    /// `inf_u \int_B (x - u)^2 pi(dx)`.
    pub fn quadratic_cost(&self) -> f64 {
        if self.mass < MASS_FLOOR {
            return 0.0;
        }
        let mean = self.first / self.mass;
        (self.mass * (self.second / self.mass - mean * mean)).max(0.0)
    }

    /// `\int_B (x - u)^2 pi(dx)` for an arbitrary reconstruction `u`.
    pub fn quadratic_cost_at(&self, u: f64) -> f64 {
        self.second - 2.0 * u * self.first + u * u * self.mass
    }
}

/// Best index `u` and its cost `sum_x weights[x] * matrix[x][u]`; ties go to
/// the lowest index.
pub fn tabular_cell(matrix: &[Vec<f64>], weights: impl Fn(usize) -> f64) -> (usize, f64) {
    let width = matrix[0].len();
    let mut best = (0, f64::INFINITY);
    for u in 0..width {
        let cost: f64 = matrix.iter().enumerate().map(|(x, row)| weights(x) * row[u]).sum();
        if cost < best.1 {
            best = (u, cost);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_is_first_order_optimal() {
        let cell = CellMoments {
            mass: 0.4,
            first: 0.3,
            second: 0.5,
        };
        let u = cell.centroid().unwrap();
        let best = cell.quadratic_cost_at(u);
        assert!((best - cell.quadratic_cost()).abs() < 1e-15);
        for d in [-0.01, 0.01] {
            assert!(cell.quadratic_cost_at(u + d) >= best);
        }
    }

    #[test]
    fn negligible_cells_cost_nothing() {
        let cell = CellMoments {
            mass: 1e-13,
            first: 1.0,
            second: 5.0,
        };
        assert_eq!(cell.quadratic_cost(), 0.0);
        assert!(cell.centroid().is_none());
    }

    #[test]
    fn tabular_ties_go_low() {
        let m = vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(tabular_cell(&m, |x| [0.5, 0.5][x]), (0, 0.5));
        assert_eq!(tabular_cell(&m, |x| [1.0, 0.0][x]), (2, 0.0));
    }

    #[test]
    fn validation() {
        assert!(CostModel::Quadratic.validate(None).is_ok());
        let bad = CostModel::BoundedTabular {
            matrix: vec![vec![0.0, -1.0], vec![1.0, 0.0]],
        };
        assert!(bad.validate(Some(2)).is_err());
        let ok = CostModel::BoundedTabular {
            matrix: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        assert!(ok.validate(Some(2)).is_ok());
        assert!(ok.validate(Some(3)).is_err());
        assert!(ok.validate(None).is_err());
        assert_eq!(ok.bound(), Some(1.0));
    }
}
