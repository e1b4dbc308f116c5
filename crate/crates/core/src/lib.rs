//! Bias-corrected structured multilevel regression and post-stratification.
//!
//! The crate is organised bottom up: [`frame`] loads the population and
//! survey tables, [`priors`] and [`model`] define the posterior, [`sampler`]
//! draws from it, [`poststrat`] turns draws into area estimates. The
//! [`correction`], [`simstudy`], [`annotate`] and [`agreement`] modules
//! build on those.

pub mod agreement;
pub mod annotate;
pub mod correction;
pub mod fixtures;
pub mod frame;
pub mod model;
pub mod par;
pub mod poststrat;
pub mod priors;
pub mod sampler;
pub mod simstudy;
pub mod stats;
