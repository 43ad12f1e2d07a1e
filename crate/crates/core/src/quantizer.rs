//! Quantizers with convex codecells.
//!
//! Cells are indexed from 0. A quantizer with `M` levels maps every input to
//! one of `0..M`; cells may be empty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Common surface of the quantizer types.
pub trait Quantizer: Clone + Send + Sync + std::fmt::Debug {
    fn levels(&self) -> usize;

    /// Flat numeric description (thresholds or assignment) for CSV output.
    fn params(&self) -> Vec<f64>;

    fn to_any(&self) -> AnyQuantizer;
}

/// Scalar quantizer with cells `(-inf, t_1], (t_1, t_2], ..., (t_{M-1}, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalQuantizer {
    thresholds: Vec<f64>,
}

impl IntervalQuantizer {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidQuantizer("thresholds must be finite".into()));
        }
        if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidQuantizer(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self { thresholds })
    }

    /// The one-cell quantizer.
    pub fn trivial() -> Self {
        Self {
            thresholds: Vec::new(),
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Boundary points belong to the lower cell.
    pub fn classify(&self, x: f64) -> usize {
        self.thresholds.partition_point(|&t| t < x)
    }

    /// Bounds `(lower, upper]` of cell `m`.
    pub fn cell_bounds(&self, m: usize) -> Result<(f64, f64)> {
        let levels = self.levels();
        if m >= levels {
            return Err(Error::InvalidCell { index: m, levels });
        }
        let lower = if m == 0 {
            f64::NEG_INFINITY
        } else {
            self.thresholds[m - 1]
        };
        let upper = self.thresholds.get(m).copied().unwrap_or(f64::INFINITY);
        Ok((lower, upper))
    }

    /// Inserts one more threshold, splitting the cell that contains it.
    pub fn refine(&self, threshold: f64) -> Result<Self> {
        let mut thresholds = self.thresholds.clone();
        let pos = thresholds.partition_point(|&t| t < threshold);
        thresholds.insert(pos, threshold);
        Self::new(thresholds)
    }
}

impl Quantizer for IntervalQuantizer {
    fn levels(&self) -> usize {
        self.thresholds.len() + 1
    }

    fn params(&self) -> Vec<f64> {
        self.thresholds.clone()
    }

    fn to_any(&self) -> AnyQuantizer {
        AnyQuantizer::Interval {
            levels: self.levels(),
            thresholds: self.thresholds.clone(),
        }
    }
}

/// Separating hyperplane between cells `i < j`: cell `i` lies on the side
/// `normal . x <= offset`, cell `j` on the side `normal . x >= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub i: usize,
    pub j: usize,
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Quantizer on `R^d` whose cells are intersections of half-spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneQuantizer {
    dimension: usize,
    levels: usize,
    hyperplanes: Vec<Hyperplane>,
}

impl HyperplaneQuantizer {
    /// `pairs` lists `(normal, offset)` for `(0,1), (0,2), ..., (0,M-1),
    /// (1,2), ...` in that order. Normals are rescaled to unit length.
    pub fn new(dimension: usize, levels: usize, pairs: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidQuantizer("hyperplane quantizers need d >= 2".into()));
        }
        if levels == 0 {
            return Err(Error::InvalidQuantizer("need at least one level".into()));
        }
        let expected = levels * (levels - 1) / 2;
        if pairs.len() != expected {
            return Err(Error::InvalidQuantizer(format!(
                "{levels} levels need {expected} hyperplanes, got {}",
                pairs.len()
            )));
        }
        let mut hyperplanes = Vec::with_capacity(expected);
        let mut it = pairs.into_iter();
        for i in 0..levels {
            for j in (i + 1)..levels {
                let (normal, offset) = it.next().expect("counted above");
                if normal.len() != dimension {
                    return Err(Error::InvalidQuantizer("normal has wrong dimension".into()));
                }
                let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::InvalidQuantizer("zero normal vector".into()));
                }
                hyperplanes.push(Hyperplane {
                    i,
                    j,
                    normal: normal.iter().map(|v| v / norm).collect(),
                    offset: offset / norm,
                });
            }
        }
        Ok(Self {
            dimension,
            levels,
            hyperplanes,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn hyperplanes(&self) -> &[Hyperplane] {
        &self.hyperplanes
    }

    fn in_cell(&self, cell: usize, x: &[f64]) -> bool {
        self.hyperplanes.iter().all(|h| {
            let dot: f64 = h.normal.iter().zip(x).map(|(a, b)| a * b).sum();
            if h.i == cell {
                dot <= h.offset
            } else if h.j == cell {
                dot >= h.offset
            } else {
                true
            }
        })
    }

    /// Lowest-indexed cell containing `x`.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dimension {
            return Err(Error::InvalidQuantizer("point has wrong dimension".into()));
        }
        (0..self.levels)
            .find(|&m| self.in_cell(m, x))
            .ok_or(Error::EmptyClassification)
    }
}

impl Quantizer for HyperplaneQuantizer {
    fn levels(&self) -> usize {
        self.levels
    }

    fn params(&self) -> Vec<f64> {
        self.hyperplanes
            .iter()
            .flat_map(|h| h.normal.iter().copied().chain(std::iter::once(h.offset)))
            .collect()
    }

    fn to_any(&self) -> AnyQuantizer {
        AnyQuantizer::Hyperplane {
            levels: self.levels,
            hyperplanes: self.hyperplanes.clone(),
        }
    }
}

/// Quantizer on a finite alphabet: `assignment[x]` is the cell of state `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FinitePartition {
    levels: usize,
    assignment: Vec<usize>,
}

impl FinitePartition {
    pub fn new(levels: usize, assignment: Vec<usize>) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidQuantizer("need at least one level".into()));
        }
        if let Some(&bad) = assignment.iter().find(|&&c| c >= levels) {
            return Err(Error::InvalidCell { index: bad, levels });
        }
        Ok(Self { levels, assignment })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn classify(&self, x: usize) -> usize {
        self.assignment[x]
    }

    /// Relabels cells in order of first use.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.levels];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&c| {
                if map[c] == usize::MAX {
                    map[c] = next;
                    next += 1;
                }
                map[c]
            })
            .collect();
        Self {
            levels: self.levels,
            assignment,
        }
    }
}

impl Quantizer for FinitePartition {
    fn levels(&self) -> usize {
        self.levels
    }

    fn params(&self) -> Vec<f64> {
        self.assignment.iter().map(|&c| c as f64).collect()
    }

    fn to_any(&self) -> AnyQuantizer {
        AnyQuantizer::Finite {
            levels: self.levels,
            assignment: self.assignment.clone(),
        }
    }
}

/// JSON form of any quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnyQuantizer {
    Interval {
        #[serde(rename = "M")]
        levels: usize,
        thresholds: Vec<f64>,
    },
    Hyperplane {
        #[serde(rename = "M")]
        levels: usize,
        hyperplanes: Vec<Hyperplane>,
    },
    Finite {
        #[serde(rename = "M")]
        levels: usize,
        assignment: Vec<usize>,
    },
}

/// Search grid for interval quantizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalCandidateSpec {
    pub levels: usize,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

/// All interval quantizers whose thresholds are `M - 1` distinct points of
/// the uniform `steps`-point grid on `[lo, hi]`, in lexicographic order.
pub fn enumerate_interval_candidates(spec: &IntervalCandidateSpec) -> Result<Vec<IntervalQuantizer>> {
    let IntervalCandidateSpec {
        levels,
        lo,
        hi,
        steps,
    } = *spec;
    if levels == 0 {
        return Err(Error::InfeasibleSpec("levels must be >= 1".into()));
    }
    if levels == 1 {
        return Ok(vec![IntervalQuantizer::trivial()]);
    }
    let k = levels - 1;
    if steps < k {
        return Err(Error::InfeasibleSpec(format!(
            "{steps} grid points cannot hold {k} distinct thresholds"
        )));
    }
    if steps > 1 && !(lo < hi) {
        return Err(Error::InfeasibleSpec(format!("empty threshold range [{lo}, {hi}]")));
    }
    let point = |i: usize| {
        if steps == 1 {
            lo
        } else if i == steps - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (steps - 1) as f64
        }
    };
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(IntervalQuantizer {
            thresholds: idx.iter().map(|&i| point(i)).collect(),
        });
        // advance to the next k-combination of 0..steps
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if idx[pos] < steps - k + pos {
                break;
            }
        }
        idx[pos] += 1;
        for p in (pos + 1)..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// All partitions of an `n`-letter alphabet into at most `M` cells, one per
/// relabeling class, in lexicographic order of their canonical assignment.
pub fn enumerate_finite_partitions(n: usize, levels: usize) -> Result<Vec<FinitePartition>> {
    if n == 0 || levels == 0 {
        return Err(Error::InfeasibleSpec("need n >= 1 and M >= 1".into()));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    grow(n, levels, 0, &mut current, &mut out);
    Ok(out)
}

// Restricted growth strings: each entry is at most one more than the
// largest label used so far.
fn grow(n: usize, levels: usize, used: usize, current: &mut Vec<usize>, out: &mut Vec<FinitePartition>) {
    if current.len() == n {
        out.push(FinitePartition {
            levels,
            assignment: current.clone(),
        });
        return;
    }
    for label in 0..=used.min(levels - 1) {
        current.push(label);
        grow(n, levels, used.max(label + 1), current, out);
        current.pop();
    }
}
