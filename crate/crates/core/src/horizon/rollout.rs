//! Monte Carlo simulation of encoder, channel and decoder.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::horizon::policy::{Agent, Policy};
use crate::problem::CodingProblem;
use crate::quantizer::Quantizer as _;
use crate::rng::{stream, StreamKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutOptions {
    pub steps: u64,
    pub paths: u64,
    pub seed: u64,
    /// Keep the per-step log of path 0.
    pub log_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t: u64,
    pub x: f64,
    pub symbol: usize,
    pub u: f64,
    pub stage_cost: f64,
    pub belief_mean: f64,
    pub belief_std: f64,
    pub quantizer_id: usize,
}

/// What an observer sees at each step of a path.
pub struct StepView<'a, B> {
    pub record: &'a TrajectoryRecord,
    pub belief: &'a B,
}

#[derive(Debug, Clone, Serialize)]
pub struct RolloutResult {
    /// `(1/N) sum_t c0(x_t, u_t)` per path.
    pub path_averages: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the path averages over `sqrt(paths)`.
    pub std_error: f64,
    /// Running average `(1/(t+1)) sum_{s<=t} c0`, averaged over paths.
    pub cesaro: Vec<f64>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryRecord>,
}

impl RolloutResult {
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,symbol,u,stage_cost,belief_mean,belief_std,quantizer_id")?;
        for r in &self.trajectory {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.t, r.x, r.symbol, r.u, r.stage_cost, r.belief_mean, r.belief_std, r.quantizer_id
            )?;
        }
        Ok(())
    }

    pub fn write_cesaro_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,running_average")?;
        for (t, v) in self.cesaro.iter().enumerate() {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Runs path `path` for `steps` steps and returns the realized costs.
///
/// The source draws from stream `Source(path)` and the shared randomness
/// from `Shared(path)`; encoder and decoder each hold their own copy of the
/// shared stream. Their beliefs and quantizer choices are compared every step.
pub fn simulate_path<P: CodingProblem>(
    problem: &P,
    policy: &Policy<P::Belief, P::Quantizer>,
    start: &P::Belief,
    steps: u64,
    seed: u64,
    path: u64,
    observer: &mut dyn FnMut(StepView<'_, P::Belief>),
) -> Result<Vec<f64>> {
    let mut source_rng = stream(seed, StreamKind::Source(path));
    let shared = policy.needs_shared_randomness();
    let mut enc_rng = stream(seed, StreamKind::Shared(path));
    let mut dec_rng = stream(seed, StreamKind::Shared(path));
    let mut encoder = Agent::new(problem, policy, start.clone());
    let mut decoder = Agent::new(problem, policy, start.clone());
    let mut x = problem.sample_from(start, &mut source_rng);
    let mut costs = Vec::with_capacity(steps as usize);
    for t in 0..steps {
        let (r_enc, r_dec) = if shared {
            (enc_rng.random::<f64>(), dec_rng.random::<f64>())
        } else {
            (0.0, 0.0)
        };
        let (id_enc, q) = encoder.choose(t, r_enc);
        let (id_dec, q_dec) = decoder.choose(t, r_dec);
        if id_enc != id_dec
            || problem.belief_key(encoder.belief()) != problem.belief_key(decoder.belief())
            || q.params() != q_dec.params()
        {
            return Err(Error::BeliefDesync { t });
        }
        let symbol = problem.classify(q, x);
        let u = problem.optimal_reconstruction(decoder.belief(), q_dec, symbol)?;
        let c = problem.distortion(x, &u);
        costs.push(c);
        let record = TrajectoryRecord {
            t,
            x: problem.state_value(x),
            symbol,
            u: u.as_f64(),
            stage_cost: c,
            belief_mean: problem.moment(encoder.belief(), 1),
            belief_std: problem.belief_std(encoder.belief()),
            quantizer_id: id_enc,
        };
        observer(StepView {
            record: &record,
            belief: encoder.belief(),
        });
        if t + 1 < steps {
            encoder.observe(q, symbol)?;
            decoder.observe(q_dec, symbol)?;
            x = problem.sample_next(x, &mut source_rng);
        }
    }
    Ok(costs)
}

/// Simulates `paths` independent paths of `steps` steps from `start`.
///
/// Paths run in parallel; results are reduced in path order, so the output
/// does not depend on the thread count.
pub fn rollout<P: CodingProblem>(
    problem: &P,
    policy: &Policy<P::Belief, P::Quantizer>,
    start: &P::Belief,
    options: RolloutOptions,
) -> Result<RolloutResult> {
    if options.steps == 0 || options.paths == 0 {
        return Err(Error::InvalidHorizon("rollout needs steps >= 1 and paths >= 1".into()));
    }
    let steps = options.steps as usize;
    let mut trajectory = Vec::new();
    let mut cesaro_sums = vec![0.0; steps];
    let mut path_averages = Vec::with_capacity(options.paths as usize);
    let chunk = ((1usize << 22) / steps).max(1) as u64;
    let mut first = 0u64;
    while first < options.paths {
        let last = (first + chunk).min(options.paths);
        let costs: Vec<Result<Vec<f64>>> = (first..last)
            .into_par_iter()
            .map(|p| {
                if p == 0 && options.log_trajectory {
                    Ok(Vec::new())
                } else {
                    simulate_path(problem, policy, start, options.steps, options.seed, p, &mut |_| {})
                }
            })
            .collect();
        for (p, c) in (first..last).zip(costs) {
            let c = if p == 0 && options.log_trajectory {
                simulate_path(problem, policy, start, options.steps, options.seed, 0, &mut |v| {
                    trajectory.push(v.record.clone())
                })?
            } else {
                c?
            };
            let mut running = 0.0;
            for (t, v) in c.iter().enumerate() {
                running += v;
                cesaro_sums[t] += running / (t + 1) as f64;
            }
            path_averages.push(running / steps as f64);
        }
        first = last;
    }
    let n = path_averages.len() as f64;
    let mean = path_averages.iter().sum::<f64>() / n;
    let std_error = if path_averages.len() > 1 {
        let var = path_averages.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(RolloutResult {
        path_averages,
        mean,
        std_error,
        cesaro: cesaro_sums.into_iter().map(|s| s / n).collect(),
        trajectory,
    })
}
