//! Structural search-cost estimation from keyword panels.
//!
//! Shares follow an exponential stopping model over each search's listing;
//! mean utilities are recovered by a contraction and the stopping rate by
//! GMM on AR(1) moments of the unobserved quality. The module also holds
//! the rank-effect variant, the synthetic panel generator used to validate
//! both, and the reduced-form regressions.

mod gmm;
mod panel;
mod regression;
mod shares;
mod synthetic;
mod usage;

pub use gmm::{
    estimate_rank_effect, gmm_estimate, gmm_moments, GmmConfig, MomentProblem, MomentSums,
    RankEffectConfig, RankEffectEstimate, SearchCostEstimate,
};
pub use panel::{daily_market_size, KeywordPanel, Panel, SEARCHES_PER_DAY};
pub use regression::{
    descriptive_sales_regression, interaction_regression, ols, sales_observations, DescriptiveFit,
    InteractionFit, MarketRow, OlsFit, Projector, SalesObs, StdErrors, DESCRIPTIVE_TERMS,
    INTERACTION_TERMS,
};
pub use shares::{
    invert_shares, invert_shares_with, predict_shares, stop_cdf, stop_weights, InversionConfig,
};
pub use synthetic::{generate_synthetic_panel, SyntheticConfig, SyntheticDemand};
pub use usage::{algo_usage_index, pearson, PriceBasis, MIN_SERIES_LEN};
