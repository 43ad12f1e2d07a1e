//! Experiment configuration files.
//!
//! ```toml
//! task = "design"
//! seed = 7
//!
//! [model]
//! kind = "finite"
//! transition = [[0.9, 0.1], [0.2, 0.8]]
//! initial = "uniform"
//!
//! [cost]
//! kind = "quadratic"
//!
//! [quantizers]
//! levels = 2
//!
//! [design]
//! horizon = 3
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::horizon::policy::Binning;
use crate::source::InitialDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Design,
    Rollout,
    OracleCheck,
    DiscountedVi,
    Schedule,
    Occupancy,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Design => "design",
            Task::Rollout => "rollout",
            Task::OracleCheck => "oracle-check",
            Task::DiscountedVi => "discounted-vi",
            Task::Schedule => "schedule",
            Task::Occupancy => "occupancy",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Task::Rollout | Task::Occupancy)
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            Task::Design,
            Task::Rollout,
            Task::OracleCheck,
            Task::DiscountedVi,
            Task::Schedule,
            Task::Occupancy,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FiniteInitial {
    Stationary,
    Uniform,
    Probs(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Finite {
        transition: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<Vec<f64>>,
        initial: FiniteInitial,
    },
    LinearGaussian {
        a: f64,
        sigma: f64,
        initial: InitialDistribution,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
}

/// Candidate quantizers: all partitions into at most `levels` cells for
/// finite models; thresholds on a `steps`-point grid over `[lo, hi]` for
/// continuous ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Replay the optimal `horizon`-step tree.
    Dp { horizon: usize },
    Greedy,
    /// Candidate `quantizer` at every step.
    Fixed { quantizer: usize },
    /// Piecing schedule over `horizons`, one DP tree per segment.
    Pieced { horizons: Vec<u64>, k_max: usize },
    /// The same candidate distribution `row` in every belief bin.
    Randomized { row: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSpec {
    pub steps: u64,
    pub paths: u64,
    pub policy: PolicySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub horizons: Vec<usize>,
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
}

fn default_oracle_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountedSpec {
    pub beta: f64,
    #[serde(default = "default_vi_tol")]
    pub tol: f64,
    #[serde(default = "default_vi_iter")]
    pub max_iter: usize,
    /// Simplex grid size for two-state chains; for continuous models the
    /// grid is `points` means times `std_points` standard deviations.
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_points: Option<usize>,
}

fn default_vi_tol() -> f64 {
    1e-9
}

fn default_vi_iter() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub horizons: Vec<u64>,
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancySpec {
    pub steps: u64,
    pub policy: PolicySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<Binning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Node budget for every DP solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default = "default_cost")]
    pub cost: CostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantizers: Option<QuantizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discounted: Option<DiscountedSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<OccupancySpec>,
}

fn default_cost() -> CostModel {
    CostModel::Quadratic
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(locate_unknown_key(text, e.to_string())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolves the task to run: the one given on the command line must agree
    /// with the one in the file, if any.
    pub fn resolve_task(&self, requested: Option<Task>) -> Result<Task> {
        match (requested, self.task) {
            (Some(r), Some(c)) if r != c => Err(Error::Config(format!(
                "task `{}` requested but the config declares task `{}`",
                r.name(),
                c.name()
            ))),
            (Some(t), _) | (None, Some(t)) => Ok(t),
            (None, None) => Err(Error::Config("missing field `task`".into())),
        }
    }

    pub fn require_model(&self) -> Result<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("missing table `[model]`".into()))
    }

    pub fn require_seed(&self, task: Task) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Config(format!(
                "missing field `seed`: task `{}` is stochastic and needs a seed (set `seed` or pass --seed)",
                task.name()
            ))
        })
    }
}

/// Tagged tables report unknown keys at the table header; point at the key.
fn locate_unknown_key(text: &str, msg: String) -> String {
    let Some(key) = msg
        .split("unknown field `")
        .nth(1)
        .and_then(|rest| rest.split('`').next())
    else {
        return msg;
    };
    let line = text.lines().position(|l| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    });
    match line {
        Some(i) if !msg.contains(&format!("line {},", i + 1)) => {
            format!("{msg}\n(key `{key}` at line {})", i + 1)
        }
        _ => msg,
    }
}

pub(crate) fn missing(table: &str, task: Task) -> Error {
    Error::Config(format!("missing table `[{table}]` for task `{}`", task.name()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_module_example() {
        let c = ExperimentConfig::from_toml(
            r#"
            task = "design"
            seed = 7
            [model]
            kind = "finite"
            transition = [[0.9, 0.1], [0.2, 0.8]]
            initial = "uniform"
            [cost]
            kind = "quadratic"
            [quantizers]
            levels = 2
            [design]
            horizon = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.task, Some(Task::Design));
        assert_eq!(c.design.unwrap().horizon, 3);
    }

    #[test]
    fn parses_gaussian_and_policies() {
        let c = ExperimentConfig::from_toml(
            r#"
            [model]
            kind = "linear_gaussian"
            a = 0.5
            sigma = 1.0
            initial = { density = { mean = 0.0, std = 1.0 } }
            grid = { lo = -6.0, hi = 6.0, points = 201 }
            [quantizers]
            levels = 2
            lo = -2.0
            hi = 2.0
            steps = 41
            [rollout]
            steps = 10
            paths = 5
            policy = { kind = "pieced", horizons = [1, 2, 4], k_max = 2 }
            "#,
        )
        .unwrap();
        assert!(matches!(c.model, Some(ModelSpec::LinearGaussian { .. })));
        assert!(matches!(c.rollout.unwrap().policy, PolicySpec::Pieced { .. }));
        let c = ExperimentConfig::from_toml("[model]\nkind = \"linear_gaussian\"\na = 0.0\nsigma = 1.0\ninitial = \"stationary\"\n").unwrap();
        assert!(c.model.is_some());
    }

    #[test]
    fn unknown_keys_are_reported_with_location() {
        let e = ExperimentConfig::from_toml("task = \"design\"\n[design]\nhorizon = 3\nhorizn = 4\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("horizn") && msg.contains("line 4"), "{msg}");
        assert!(ExperimentConfig::from_toml("task = \"dsign\"").is_err());
        let e = ExperimentConfig::from_toml("[model]\nkind = \"finite\"\ntransition = [[1.0]]\ninitial = \"uniform\"\ncolour = 3\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("colour") && e.contains("line 5"), "{e}");
    }

    #[test]
    fn task_resolution() {
        let c = ExperimentConfig::from_toml("task = \"rollout\"").unwrap();
        assert_eq!(c.resolve_task(None).unwrap(), Task::Rollout);
        assert!(c.resolve_task(Some(Task::Design)).is_err());
        let e = c.require_seed(Task::Rollout).unwrap_err().to_string();
        assert!(e.contains("`seed`"));
        assert_eq!(Task::parse("oracle-check").unwrap(), Task::OracleCheck);
    }
}
