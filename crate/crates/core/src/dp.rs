//! Finite-horizon policy design by dynamic programming over reachable beliefs.
//!
//! With finitely many candidate quantizers the beliefs reachable from `pi_0`
//! in `t` steps form a finite tree: each node branches on the quantizer
//! choice and then on the transmitted symbol. The designer evaluates
//!
//! ```text
//! J_T(pi) = 0
//! J_t(pi) = min_Q ( c(pi, Q) / T + sum_m pi(B_m) J_{t+1}(pi_m') )
//! ```
//!
//! by backward induction on that tree and keeps the minimizing branch as a
//! [`PolicyTree`].

use std::collections::HashMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::CodingProblem;
use crate::quantizer::Quantizer;

/// Default cap on evaluated belief nodes.
pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;
/// Branches with less probability than this are not expanded.
pub const DEFAULT_PRUNE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DpOptions {
    pub node_budget: usize,
    pub prune: f64,
    pub parallel: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            prune: DEFAULT_PRUNE,
            parallel: true,
        }
    }
}

/// Edge of a policy tree: the symbol sent, its probability, and the child.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Branch {
    pub symbol: usize,
    pub prob: f64,
    pub node: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyNode<B, Q> {
    pub t: usize,
    pub belief: B,
    /// Position of the chosen quantizer in the candidate list.
    pub quantizer_id: usize,
    pub quantizer: Q,
    pub stage_cost: f64,
    /// Value-to-go `J_t` at this node (stage costs scaled by `1/T`).
    pub value: f64,
    pub children: Vec<Branch>,
}

/// Markov coding policy for horizon `T`: one quantizer per reachable belief.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyTree<B, Q> {
    pub horizon: usize,
    pub root: usize,
    pub nodes: Vec<PolicyNode<B, Q>>,
}

/// Largest Bellman residual found in a tree and where.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellmanCheck {
    pub max_residual: f64,
    pub worst_node: usize,
    pub max_prob_deficit: f64,
}

impl<B, Q: Quantizer> PolicyTree<B, Q> {
    pub fn root_node(&self) -> &PolicyNode<B, Q> {
        &self.nodes[self.root]
    }

    pub fn value(&self) -> f64 {
        self.root_node().value
    }

    pub fn child(&self, node: usize, symbol: usize) -> Option<usize> {
        self.nodes[node]
            .children
            .iter()
            .find(|b| b.symbol == symbol)
            .map(|b| b.node)
    }

    /// Recomputes `stage / T + sum prob * child` at every node.
    pub fn check_bellman(&self) -> BellmanCheck {
        let horizon = self.horizon as f64;
        let mut check = BellmanCheck {
            max_residual: 0.0,
            worst_node: self.root,
            max_prob_deficit: 0.0,
        };
        for (id, node) in self.nodes.iter().enumerate() {
            let continuation: f64 = node
                .children
                .iter()
                .map(|b| b.prob * self.nodes[b.node].value)
                .sum();
            let residual = (node.value - (node.stage_cost / horizon + continuation)).abs();
            if residual > check.max_residual {
                check.max_residual = residual;
                check.worst_node = id;
            }
            if node.t + 1 < self.horizon {
                let total: f64 = node.children.iter().map(|b| b.prob).sum();
                check.max_prob_deficit = check.max_prob_deficit.max((1.0 - total).abs());
            }
        }
        check
    }

    /// Rows of `t,node,parent,symbol,branch_prob,quantizer_id,q_0..q_k,stage_cost,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let width = self.root_node().quantizer.params().len();
        let params: Vec<String> = (0..width).map(|k| format!("q_{k}")).collect();
        let mut header = vec!["t", "node", "parent", "symbol", "branch_prob", "quantizer_id"];
        header.extend(params.iter().map(String::as_str));
        header.extend(["stage_cost", "value"]);
        writeln!(out, "{}", header.join(","))?;
        let mut parent = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            for b in &node.children {
                parent[b.node] = Some((id, *b));
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            let (p, sym, prob) = match parent[id] {
                Some((p, b)) => (p.to_string(), b.symbol.to_string(), b.prob.to_string()),
                None => (String::new(), String::new(), "1".into()),
            };
            let q: Vec<String> = node.quantizer.params().iter().map(|v| v.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}{}{},{}",
                node.t,
                id,
                p,
                sym,
                prob,
                node.quantizer_id,
                q.join(","),
                if q.is_empty() { "" } else { "," },
                node.stage_cost,
                node.value
            )?;
        }
        Ok(())
    }
}

/// Result of [`solve_finite_horizon`].
#[derive(Debug, Clone, Serialize)]
pub struct DpSolution<B, Q> {
    /// `min E[(1/T) sum_t c(pi_t, Q_t)]` over the candidate policies.
    pub value: f64,
    pub tree: PolicyTree<B, Q>,
    pub nodes_evaluated: usize,
    /// Bound on the value lost to pruned branches: `prune * T * max stage cost`.
    pub pruned_value_bound: f64,
}

struct Solved<B> {
    value: f64,
    choice: usize,
    stage_cost: f64,
    belief: B,
    children: Vec<(usize, f64, Arc<Solved<B>>)>,
}

struct Search<'a, P: CodingProblem> {
    problem: &'a P,
    candidates: &'a [P::Quantizer],
    horizon: usize,
    options: DpOptions,
    nodes: AtomicUsize,
    max_stage: Mutex<f64>,
    memo: Mutex<HashMap<(usize, Vec<u8>), Arc<Solved<P::Belief>>>>,
}

type Choice<B> = (f64, f64, Vec<(usize, f64, Arc<Solved<B>>)>);

impl<P: CodingProblem> Search<'_, P> {
    fn solve(&self, belief: P::Belief, t: usize) -> Result<Arc<Solved<P::Belief>>> {
        // leaves are cheap to recompute and dominate the count, so only
        // interior nodes are memoized
        let key = (t + 1 < self.horizon).then(|| (t, self.problem.belief_key(&belief)));
        if let Some(k) = &key {
            if let Some(hit) = self.memo.lock().expect("memo lock").get(k) {
                return Ok(hit.clone());
            }
        }
        let visited = self.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        if visited > self.options.node_budget {
            return Err(Error::BudgetExceeded {
                budget: self.options.node_budget,
                nodes: visited,
                upper_bound: None,
            });
        }

        let evaluate = |q: &P::Quantizer| -> Result<Choice<P::Belief>> { self.evaluate(&belief, q, t) };
        let results: Vec<Result<Choice<P::Belief>>> = if self.options.parallel {
            self.candidates.par_iter().map(evaluate).collect()
        } else {
            self.candidates.iter().map(evaluate).collect()
        };

        let mut best: Option<(usize, Choice<P::Belief>)> = None;
        for (i, r) in results.into_iter().enumerate() {
            let choice = r?;
            if best.as_ref().is_none_or(|(_, b)| choice.0 < b.0) {
                best = Some((i, choice));
            }
        }
        let (choice, (value, stage_cost, children)) = best.expect("non-empty candidates");
        {
            let mut max_stage = self.max_stage.lock().expect("stage lock");
            *max_stage = max_stage.max(stage_cost);
        }
        let solved = Arc::new(Solved {
            value,
            choice,
            stage_cost,
            belief,
            children,
        });
        if let Some(k) = key {
            self.memo.lock().expect("memo lock").insert(k, solved.clone());
        }
        Ok(solved)
    }

    fn evaluate(&self, belief: &P::Belief, q: &P::Quantizer, t: usize) -> Result<Choice<P::Belief>> {
        let horizon = self.horizon as f64;
        if t + 1 == self.horizon {
            let stage = self.problem.stage_cost(belief, q);
            return Ok((stage / horizon, stage, Vec::new()));
        }
        let expansion = self.problem.expand(belief, q, self.options.prune)?;
        let mut value = expansion.stage_cost / horizon;
        let mut children = Vec::with_capacity(expansion.posteriors.len());
        for (m, posterior) in expansion.posteriors {
            let prob = expansion.masses[m];
            let child = self.solve(posterior, t + 1)?;
            value += prob * child.value;
            children.push((m, prob, child));
        }
        Ok((value, expansion.stage_cost, children))
    }
}

fn flatten<B: Clone, Q: Clone>(
    solved: &Solved<B>,
    t: usize,
    candidates: &[Q],
    nodes: &mut Vec<PolicyNode<B, Q>>,
) -> usize {
    let id = nodes.len();
    nodes.push(PolicyNode {
        t,
        belief: solved.belief.clone(),
        quantizer_id: solved.choice,
        quantizer: candidates[solved.choice].clone(),
        stage_cost: solved.stage_cost,
        value: solved.value,
        children: Vec::new(),
    });
    let children = solved
        .children
        .iter()
        .map(|(symbol, prob, child)| Branch {
            symbol: *symbol,
            prob: *prob,
            node: flatten(child, t + 1, candidates, nodes),
        })
        .collect();
    nodes[id].children = children;
    id
}

/// Optimal Markov policy over `candidates` for horizon `horizon` from `root`.
///
/// Ties go to the earliest candidate. Fails with [`Error::BudgetExceeded`]
/// when more than `options.node_budget` beliefs would be evaluated; the error
/// then carries the value of the greedy policy as an upper bound when that
/// is cheap to compute.
pub fn solve_finite_horizon<P: CodingProblem>(
    problem: &P,
    root: &P::Belief,
    candidates: &[P::Quantizer],
    horizon: usize,
    options: DpOptions,
) -> Result<DpSolution<P::Belief, P::Quantizer>> {
    if horizon == 0 {
        return Err(Error::InvalidHorizon("T must be >= 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InfeasibleSpec("empty candidate list".into()));
    }
    let search = Search {
        problem,
        candidates,
        horizon,
        options,
        nodes: AtomicUsize::new(0),
        max_stage: Mutex::new(0.0),
        memo: Mutex::new(HashMap::new()),
    };
    let solved = match search.solve(root.clone(), 0) {
        Ok(s) => s,
        Err(Error::BudgetExceeded { budget, nodes, .. }) => {
            let levels = candidates.iter().map(Quantizer::levels).max().unwrap_or(1);
            let greedy_nodes = (levels as f64).powi(horizon as i32 - 1);
            let upper_bound = (greedy_nodes <= budget.max(DEFAULT_NODE_BUDGET) as f64)
                .then(|| evaluate_greedy(problem, root, candidates, horizon, options.prune).ok())
                .flatten();
            return Err(Error::BudgetExceeded {
                budget,
                nodes,
                upper_bound,
            });
        }
        Err(e) => return Err(e),
    };
    let mut nodes = Vec::new();
    let root_id = flatten(&solved, 0, candidates, &mut nodes);
    let max_stage = *search.max_stage.lock().expect("stage lock");
    Ok(DpSolution {
        value: solved.value,
        tree: PolicyTree {
            horizon,
            root: root_id,
            nodes,
        },
        nodes_evaluated: search.nodes.load(Ordering::Relaxed),
        pruned_value_bound: options.prune * horizon as f64 * max_stage,
    })
}

/// `sum_m pi(B_m) J(pi_m')`, with `next_values` given as `(symbol, value)`.
///
/// Symbols at or below `floor` mass contribute nothing; every other symbol
/// must have a value.
pub fn expected_continuation<P: CodingProblem>(
    problem: &P,
    belief: &P::Belief,
    q: &P::Quantizer,
    next_values: &[(usize, f64)],
    floor: f64,
) -> Result<f64> {
    let masses = problem.cell_masses(belief, q);
    continuation_from_masses(&masses, next_values, floor)
}

pub fn continuation_from_masses(masses: &[f64], next_values: &[(usize, f64)], floor: f64) -> Result<f64> {
    let mut total = 0.0;
    for (m, &mass) in masses.iter().enumerate() {
        if mass <= floor {
            continue;
        }
        let v = next_values
            .iter()
            .find(|(s, _)| *s == m)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::InvalidPolicy(format!("no continuation value for symbol {m}")))?;
        total += mass * v;
    }
    Ok(total)
}

/// Index of the candidate with the smallest stage cost (first on ties).
pub fn greedy_policy_step<P: CodingProblem>(problem: &P, belief: &P::Belief, candidates: &[P::Quantizer]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in problem.stage_costs(belief, candidates).into_iter().enumerate() {
        if c < best.1 {
            best = (i, c);
        }
    }
    best.0
}

/// Exact `E[(1/T) sum_t c(pi_t, Q_t)]` of the greedy policy, through the
/// belief recursion.
pub fn evaluate_greedy<P: CodingProblem>(
    problem: &P,
    root: &P::Belief,
    candidates: &[P::Quantizer],
    horizon: usize,
    floor: f64,
) -> Result<f64> {
    fn go<P: CodingProblem>(
        problem: &P,
        belief: &P::Belief,
        candidates: &[P::Quantizer],
        steps_left: usize,
        floor: f64,
    ) -> Result<f64> {
        let q = &candidates[greedy_policy_step(problem, belief, candidates)];
        if steps_left == 1 {
            return Ok(problem.stage_cost(belief, q));
        }
        let e = problem.expand(belief, q, floor)?;
        let mut total = e.stage_cost;
        for (m, post) in &e.posteriors {
            total += e.masses[*m] * go(problem, post, candidates, steps_left - 1, floor)?;
        }
        Ok(total)
    }
    if horizon == 0 {
        return Err(Error::InvalidHorizon("T must be >= 1".into()));
    }
    Ok(go(problem, root, candidates, horizon, floor)? / horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::SimplexBelief;
    use crate::cost::CostModel;
    use crate::problem::FiniteProblem;
    use crate::quantizer::{enumerate_finite_partitions, FinitePartition};
    use crate::source::FiniteChain;
    use approx::assert_abs_diff_eq;

    fn problem(rows: Vec<Vec<f64>>) -> FiniteProblem {
        let n = rows.len();
        let chain = FiniteChain::new(rows, SimplexBelief::uniform(n)).unwrap();
        FiniteProblem::new(chain, CostModel::Quadratic).unwrap()
    }

    #[test]
    fn horizon_zero_is_rejected() {
        let p = problem(vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        let c = enumerate_finite_partitions(2, 2).unwrap();
        let root = p.initial_belief().unwrap();
        assert!(matches!(
            solve_finite_horizon(&p, &root, &c, 0, DpOptions::default()),
            Err(Error::InvalidHorizon(_))
        ));
        assert!(solve_finite_horizon(&p, &root, &[], 2, DpOptions::default()).is_err());
    }

    #[test]
    fn identity_chain_with_separating_partition_costs_nothing() {
        let p = problem(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let c = enumerate_finite_partitions(3, 3).unwrap();
        let root = p.initial_belief().unwrap();
        let sol = solve_finite_horizon(&p, &root, &c, 3, DpOptions::default()).unwrap();
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn horizon_one_is_best_stage_cost() {
        let p = problem(vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8]]);
        let c = enumerate_finite_partitions(3, 2).unwrap();
        let root = p.initial_belief().unwrap();
        let sol = solve_finite_horizon(&p, &root, &c, 1, DpOptions::default()).unwrap();
        let best = c.iter().map(|q| p.stage_cost(&root, q)).fold(f64::INFINITY, f64::min);
        assert_eq!(sol.value, best);
        assert_eq!(sol.tree.nodes.len(), 1);
    }

    #[test]
    fn bellman_identity_and_budget() {
        let p = problem(vec![vec![0.7, 0.2, 0.1], vec![0.3, 0.4, 0.3], vec![0.2, 0.2, 0.6]]);
        let c = enumerate_finite_partitions(3, 2).unwrap();
        let root = p.initial_belief().unwrap();
        let sol = solve_finite_horizon(&p, &root, &c, 4, DpOptions::default()).unwrap();
        let check = sol.tree.check_bellman();
        assert!(check.max_residual < 1e-12);
        assert!(check.max_prob_deficit < 1e-9);
        let tight = DpOptions {
            node_budget: 5,
            ..DpOptions::default()
        };
        match solve_finite_horizon(&p, &root, &c, 4, tight) {
            Err(Error::BudgetExceeded { upper_bound, .. }) => {
                assert!(upper_bound.unwrap() >= sol.value - 1e-12);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let p = problem(vec![vec![0.7, 0.2, 0.1], vec![0.3, 0.4, 0.3], vec![0.2, 0.2, 0.6]]);
        let c = enumerate_finite_partitions(3, 3).unwrap();
        let root = p.initial_belief().unwrap();
        let par = solve_finite_horizon(&p, &root, &c, 3, DpOptions::default()).unwrap();
        let ser = solve_finite_horizon(
            &p,
            &root,
            &c,
            3,
            DpOptions {
                parallel: false,
                ..DpOptions::default()
            },
        )
        .unwrap();
        assert_eq!(par.value.to_bits(), ser.value.to_bits());
        assert_eq!(
            serde_json::to_string(&par.tree).unwrap(),
            serde_json::to_string(&ser.tree).unwrap()
        );
    }

    #[test]
    fn continuation_examples() {
        let p = problem(vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        let b = SimplexBelief::uniform(2);
        let split = FinitePartition::new(2, vec![0, 1]).unwrap();
        let v = expected_continuation(&p, &b, &split, &[(0, 3.0), (1, 3.0)], 1e-12).unwrap();
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-15);
        let v = expected_continuation(&p, &b, &split, &[(0, 0.0), (1, 1.0)], 1e-12).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        assert!(expected_continuation(&p, &b, &split, &[(0, 0.0)], 1e-12).is_err());
        let point = SimplexBelief::point(2, 0);
        assert_eq!(expected_continuation(&p, &point, &split, &[(0, 2.0)], 1e-12).unwrap(), 2.0);
    }

    #[test]
    fn greedy_picks_separating_partition() {
        let p = problem(vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        let c = enumerate_finite_partitions(2, 2).unwrap();
        let b = SimplexBelief::uniform(2);
        assert_eq!(greedy_policy_step(&p, &b, &c), 1);
        assert_eq!(greedy_policy_step(&p, &b, &c[..1]), 0);
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let p = problem(vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        let c = enumerate_finite_partitions(2, 1).unwrap();
        let root = p.initial_belief().unwrap();
        let sol = solve_finite_horizon(&p, &root, &c, 3, DpOptions::default()).unwrap();
        let mut buf = Vec::new();
        sol.tree.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), sol.tree.nodes.len() + 1);
        assert!(text.starts_with("t,node,parent,symbol,branch_prob,quantizer_id,q_0,q_1,stage_cost,value"));
    }
}
