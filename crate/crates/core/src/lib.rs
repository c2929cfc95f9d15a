//! Opinion dynamics under popularity-based and personalized search rankings.
//!
//! Agents with noisy private signals pick websites by a ranking-weighted
//! stochastic choice; the ranking in turn follows recent clicks. The crate
//! provides finite-horizon simulations, the deterministic mean dynamics and
//! their limits, and the efficiency and polarization metrics built on them.
//!
//! ```
//! use rankfeedback::{limits, ModelParams};
//!
//! let params = ModelParams::default();
//! let few = limits::class_limit(&params, 2).unwrap();
//! let more = limits::class_limit(&params, 6).unwrap();
//! assert!(few > more);
//! ```

pub mod choice;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod limits;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod variants;

pub use choice::{ChoiceDistribution, ExpectedValueTable, ValueVector};
pub use dynamics::{FeedbackMode, PersistenceSchedule, Ranking, Recording, SimConfig, TrajectoryRecord};
pub use error::{Error, Result};
pub use limits::{Branch, LimitResult, PersonalizedMethod, ThetaParams};
pub use metrics::{EfficiencyReport, RankingRegime};
pub use model::{
    fix_realization, sample_agent_signals, sample_realization, validate, AgentSignals, Group, GroupConfig,
    InterimRealization, MajoritySignal, ModelParams, SignalModel,
};
