//! Episodic bivariate point-process model of social-media posting.
//!
//! Events arrive in non-overlapping episodes. Each episode opens with a parent
//! whose waiting time follows a periodic (time-of-day) hazard, and consists of
//! alternating runs of original posts and reposts whose counts are shifted
//! Poisson and whose within-episode gaps follow a per-mark distribution.
//!
//! Estimation maximizes a composite likelihood built from sub-window marginal
//! likelihoods with an EM algorithm ([`clem`]); the sub-window marginals are
//! evaluated exactly by an episode-block recursion ([`window`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod clem;
pub mod error;
pub mod gof;
pub mod hazard;
pub mod model;
pub mod simulate;
pub mod uncertainty;
pub mod window;

pub use analytics::{derived_metrics, DerivedMetrics};
pub use clem::{fit, FitConfig, FitResult};
pub use error::{Error, Result};
pub use hazard::{HazardFamily, HazardObjective, HazardSpec};
pub use model::{
    c_coefficient, complete_log_density, decompose, expected_episode_length,
    expected_events_per_episode, EpisodeDecomposition, EventSequence, LabelAssignment, Mark,
    ModelParams, OffspringFamily, OffspringGap,
};
pub use window::{dp_loglik, enumerate_loglik, partition, posterior_stats, WindowPartition, WindowStats};
pub use simulate::{simulate, Simulation, Truncation};
pub use uncertainty::{sandwich, simulation_cov, window_score, VarianceEstimate, VarianceMethod};
