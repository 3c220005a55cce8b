//! Capacity-region optimization, schedule synthesis, pruning, parameter
//! selection and the min-max oracle.

pub mod lp;
pub mod oracle;
pub mod params;
pub mod schedule;
pub mod simplex;

pub use lp::{max_utility_lp, prune, FeasibleSet, LpOutcome};
pub use oracle::{minmax_oracle, OracleError, OracleResult};
pub use schedule::{discretize, slot_count, Schedule};
