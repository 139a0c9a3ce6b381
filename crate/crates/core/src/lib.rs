//! Calibration and projection toolkit for a two-stage progressive cancer
//! natural-history model.
//!
//! The disease process is a continuous-time Markov chain over latent states
//! `1_1, ..., 1_k, 2, 3, 4, 5`: a hypoexponential chain of `k` onset phases
//! (no cancer), early- and advanced-stage preclinical states, and absorbing
//! early- and advanced-stage clinical states. The crate provides:
//!
//! - [`ctmc`]: intensity matrices, transition probabilities, and transition
//!   densities for the latent chain;
//! - [`natural_history`]: sojourn-time hypotheses, the identifiability
//!   relations among progression rates, and derived hazards;
//! - [`calibration`]: Poisson maximum-likelihood estimation from age- and
//!   stage-specific incidence tables;
//! - [`screening`]: projection of screen-detected and clinically diagnosed
//!   advanced-stage probabilities in simulated trial arms, stage-shift
//!   summaries, sensitivity sweeps, multi-cancer aggregation, and a Monte
//!   Carlo cohort oracle;
//! - [`miscan`]: derivation of stage-aggregated test sensitivities and mean
//!   sojourn times from stage- and histology-specific tables.

pub mod calibration;
pub mod ctmc;
pub mod error;
mod linalg;
pub mod miscan;
pub mod natural_history;
pub mod screening;

pub use error::{Error, Result};
pub use natural_history::{NaturalHistoryParams, SojournHypothesis};
