//! Pricing-and-bidding duopolies on a search platform.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! model: logit demand over consideration sets, the log-normal first-price
//! ad auction, one-period payoffs, equilibrium benchmarks, tabular
//! Q-learning sessions and the structural search-cost estimator. File
//! formats, the CLI and parallel experiment drivers live in the `searchbid`
//! crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod numeric;

pub mod auction;
pub mod economy;
pub mod estimation;
pub mod market;
pub mod qlearn;
pub mod solvers;

pub use error::{Error, Result};

pub(crate) mod prelude {
    pub use alloc::format;
    pub use alloc::string::{String, ToString};
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    pub use num_traits::Float;
}
