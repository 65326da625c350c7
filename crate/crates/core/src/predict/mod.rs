//! Posterior summaries: exceedance maps, predictive counts and
//! re-aggregation onto new units.

mod exceedance;
mod predictive;
mod reaggregate;

pub use exceedance::{exceedance, ExceedanceMap};
pub use predictive::{predictive_counts, PredictiveDraws};
pub use reaggregate::{
    compare_processes, quantile, reaggregate, reaggregation_weights, ReaggregationResult,
    ReaggregationWeights, RegionSummary, WinnerTable,
};
