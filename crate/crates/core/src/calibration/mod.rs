//! Maximum-likelihood calibration of natural-history parameters from age-
//! and stage-specific incidence tables.
//!
//! Counts in each (age group, stage) cell are modeled as Poisson with mean
//! `person-years x cause-specific hazard at the group midpoint`. Under a
//! sojourn hypothesis the free parameters are the onset rates and
//! `lambda23`; they are estimated by box-constrained quasi-Newton ascent of
//! the Poisson log likelihood with multistart initialization.

mod fit;
mod likelihood;
mod optim;
mod table;

pub use fit::{
    fit, select_onset_dimension, FitConfig, FitResult, OptimizerSettings, SelectionTrace,
    SelectionEntry,
};
pub use likelihood::{expected_counts, poisson_loglik, poisson_loglik_grad, saturated_loglik};
pub use table::{inflate_risk, load_incidence, load_incidence_path, IncidenceRow, IncidenceTable};
