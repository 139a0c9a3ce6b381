//! Screening-trial projection: probabilities of screen-detected and
//! clinically diagnosed advanced-stage cancer in the intervention and
//! control arms, stage-shift summaries, sensitivity sweeps, multi-cancer
//! aggregation, and a discrete-event Monte Carlo oracle.

mod forward;
mod mced;
mod project;
mod simulate;
mod sweep;

pub use forward::{initial_distribution, sequence_probability, ScreenOutcome};
pub use mced::{mced_project, McedProjection, SiteModel};
pub use project::{
    control_interval_advanced, interval_clinical_advanced, relative_advanced_reduction,
    screen_detected_advanced, stage_shift, TrialProjection,
};
pub use simulate::{simulate_cohort, CohortTally};
pub use sweep::{sweep, SweepCase, SweepOutcome};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ctmc::StateSpace;
use crate::error::{Error, Result};

/// Trial design: screen ages, end of follow-up, and stage-specific test
/// sensitivities for preclinical disease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningProtocol {
    /// Strictly increasing screen ages `a_1 < ... < a_n`.
    pub screen_ages: Vec<f64>,
    /// Final follow-up age `a_(n+1)`, beyond the last screen.
    pub followup_end: f64,
    /// Sensitivity for early-stage preclinical cancer.
    pub sensitivity_early: f64,
    /// Sensitivity for advanced-stage preclinical cancer.
    pub sensitivity_advanced: f64,
}

impl ScreeningProtocol {
    pub fn new(
        screen_ages: Vec<f64>,
        followup_end: f64,
        sensitivity_early: f64,
        sensitivity_advanced: f64,
    ) -> Result<Self> {
        let protocol = ScreeningProtocol {
            screen_ages,
            followup_end,
            sensitivity_early,
            sensitivity_advanced,
        };
        protocol.validate()?;
        Ok(protocol)
    }

    pub fn validate(&self) -> Result<()> {
        if self.screen_ages.is_empty() {
            return Err(Error::InvalidParameter(
                "protocol needs at least one screen age".into(),
            ));
        }
        if self.screen_ages[0] <= 0.0 {
            return Err(Error::InvalidParameter(
                "first screen age must be positive".into(),
            ));
        }
        for pair in self.screen_ages.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidParameter(
                    "screen ages must be strictly increasing".into(),
                ));
            }
        }
        if self.followup_end <= *self.screen_ages.last().unwrap() {
            return Err(Error::InvalidParameter(
                "follow-up end must exceed the last screen age".into(),
            ));
        }
        for (name, s) in [
            ("sensitivity_early", self.sensitivity_early),
            ("sensitivity_advanced", self.sensitivity_advanced),
        ] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Number of screens `n`.
    pub fn n_screens(&self) -> usize {
        self.screen_ages.len()
    }

    /// Observation ages `a_1, ..., a_n, a_(n+1)`.
    pub fn observation_ages(&self) -> Vec<f64> {
        let mut ages = self.screen_ages.clone();
        ages.push(self.followup_end);
        ages
    }
}

/// Per-latent-state observation probabilities at a screen: columns are the
/// observable outcomes 1..=5 (no finding, screen-detected early,
/// screen-detected advanced, clinical early, clinical advanced).
#[derive(Debug, Clone)]
pub struct EmissionMatrix {
    probs: Array2<f64>,
}

impl EmissionMatrix {
    pub fn new(space: StateSpace, sensitivity_early: f64, sensitivity_advanced: f64) -> Self {
        let d = space.dim();
        let mut probs = Array2::<f64>::zeros((d, 5));
        for i in 0..space.k() {
            probs[(i, 0)] = 1.0;
        }
        probs[(space.preclinical_early(), 0)] = 1.0 - sensitivity_early;
        probs[(space.preclinical_early(), 1)] = sensitivity_early;
        probs[(space.preclinical_advanced(), 0)] = 1.0 - sensitivity_advanced;
        probs[(space.preclinical_advanced(), 2)] = sensitivity_advanced;
        probs[(space.clinical_early(), 3)] = 1.0;
        probs[(space.clinical_advanced(), 4)] = 1.0;
        EmissionMatrix { probs }
    }

    /// P(observe `outcome` | latent state `state`), `outcome` in 1..=5.
    pub fn prob(&self, state: usize, outcome: u8) -> f64 {
        self.probs[(state, outcome as usize - 1)]
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_validation() {
        assert!(ScreeningProtocol::new(vec![60.0, 61.0], 63.0, 0.3, 0.9).is_ok());
        assert!(ScreeningProtocol::new(vec![], 63.0, 0.3, 0.9).is_err());
        assert!(ScreeningProtocol::new(vec![61.0, 60.0], 63.0, 0.3, 0.9).is_err());
        assert!(ScreeningProtocol::new(vec![60.0], 60.0, 0.3, 0.9).is_err());
        assert!(ScreeningProtocol::new(vec![60.0], 63.0, 1.3, 0.9).is_err());
    }

    #[test]
    fn emission_rows_are_distributions() {
        let space = StateSpace::new(3).unwrap();
        let e = EmissionMatrix::new(space, 0.35, 0.82);
        for i in 0..space.dim() {
            let sum: f64 = (1..=5).map(|o| e.prob(i, o)).sum();
            assert!((sum - 1.0).abs() < 1e-14, "row {i} sums to {sum}");
        }
        assert_eq!(e.prob(space.preclinical_early(), 2), 0.35);
        assert_eq!(e.prob(space.preclinical_advanced(), 3), 0.82);
        assert_eq!(e.prob(space.clinical_advanced(), 5), 1.0);
        assert_eq!(e.prob(space.onset_phase(0), 1), 1.0);
    }
}
