//! Infinite-horizon constructions: piecing, rollouts, discounted value
//! iteration and occupation diagnostics.

pub mod discounted;
pub mod occupation;
pub mod policy;
pub mod rollout;
pub mod schedule;

pub use discounted::{discounted_value_iteration, simplex_grid_2, ViOptions, ViSolution};
pub use occupation::{invariance_residual, occupation_measure, policy_candidates, OccupationHistogram, OccupationSummary};
pub use policy::{build_pieced_policy, Agent, Binning, PiecedPolicy, Policy, RandomizedStationaryPolicy, Segment};
pub use rollout::{rollout, simulate_path, RolloutOptions, RolloutResult, TrajectoryRecord};
pub use schedule::{piecing_schedule, PiecingSchedule};
