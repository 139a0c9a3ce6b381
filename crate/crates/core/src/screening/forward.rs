//! Forward recursion over the latent chain for observation sequences at the
//! trial's screen and follow-up ages.

use crate::ctmc::{self, TransitionMatrix};
use crate::error::{Error, Result};
use crate::natural_history::{NaturalHistoryParams, SURVIVAL_FLOOR};
use crate::screening::{EmissionMatrix, ScreeningProtocol};

/// Observable outcome at a screen or follow-up contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreenOutcome {
    /// No finding (healthy, or preclinical disease missed by the test).
    Negative,
    ScreenDetectedEarly,
    ScreenDetectedAdvanced,
    ClinicalEarly,
    ClinicalAdvanced,
}

impl ScreenOutcome {
    /// Observable state code 1..=5.
    pub fn code(self) -> u8 {
        match self {
            ScreenOutcome::Negative => 1,
            ScreenOutcome::ScreenDetectedEarly => 2,
            ScreenOutcome::ScreenDetectedAdvanced => 3,
            ScreenOutcome::ClinicalEarly => 4,
            ScreenOutcome::ClinicalAdvanced => 5,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            1 => ScreenOutcome::Negative,
            2 => ScreenOutcome::ScreenDetectedEarly,
            3 => ScreenOutcome::ScreenDetectedAdvanced,
            4 => ScreenOutcome::ClinicalEarly,
            5 => ScreenOutcome::ClinicalAdvanced,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "observation code must be 1..=5, got {other}"
                )))
            }
        })
    }
}

/// Latent-state distribution at the first screen age, conditioned on no
/// clinical diagnosis before enrollment: transient occupancies renormalized
/// by the survival mass, zero on the clinical states.
pub fn initial_distribution(params: &NaturalHistoryParams, a1: f64) -> Result<Vec<f64>> {
    if a1 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "first screen age must be positive, got {a1}"
        )));
    }
    let intensity = params.intensity()?;
    let space = intensity.space();
    let p = ctmc::transition_matrix(&intensity, a1)?;
    let absorbed = p.entry(0, space.clinical_early()) + p.entry(0, space.clinical_advanced());
    let survival = 1.0 - absorbed;
    if survival < SURVIVAL_FLOOR {
        return Err(Error::NonComputableHazard { age: a1 });
    }
    let d = space.dim();
    let mut pi = vec![0.0; d];
    for j in 0..d {
        if space.is_transient(j) {
            pi[j] = p.entry(0, j) / survival;
        }
    }
    Ok(pi)
}

/// Transition matrices for the inter-observation gaps
/// `a_2 - a_1, ..., a_(n+1) - a_n`.
pub(crate) fn step_matrices(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
) -> Result<Vec<TransitionMatrix>> {
    let intensity = params.intensity()?;
    let ages = protocol.observation_ages();
    ages.windows(2)
        .map(|w| ctmc::transition_matrix(&intensity, w[1] - w[0]))
        .collect()
}

/// Probability of an observation sequence `o_1, ..., o_l` at the first `l`
/// observation ages of the protocol (screens, then final follow-up), for
/// enrollees with no clinical diagnosis before the first screen.
///
/// Marginalizes the latent path with a forward recursion: linear in the
/// sequence length and quadratic in the latent dimension.
pub fn sequence_probability(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
    observations: &[ScreenOutcome],
) -> Result<f64> {
    protocol.validate()?;
    let len = observations.len();
    if len == 0 {
        return Err(Error::InvalidArgument("observation sequence is empty".into()));
    }
    if len > protocol.n_screens() + 1 {
        return Err(Error::InvalidArgument(format!(
            "sequence of length {len} exceeds the {} observation ages",
            protocol.n_screens() + 1
        )));
    }

    let space = params.intensity()?.space();
    let emission = EmissionMatrix::new(
        space,
        protocol.sensitivity_early,
        protocol.sensitivity_advanced,
    );
    let steps = step_matrices(params, protocol)?;
    let pi = initial_distribution(params, protocol.screen_ages[0])?;
    let d = space.dim();

    // alpha[x] = P(o_1..o_i, X_i = x)
    let mut alpha: Vec<f64> = (0..d)
        .map(|x| pi[x] * emission.prob(x, observations[0].code()))
        .collect();
    for (i, obs) in observations.iter().enumerate().skip(1) {
        let step = &steps[i - 1];
        let mut next = vec![0.0; d];
        for (x, &ax) in alpha.iter().enumerate() {
            if ax == 0.0 {
                continue;
            }
            for (y, slot) in next.iter_mut().enumerate() {
                *slot += ax * step.entry(x, y);
            }
        }
        for (y, slot) in next.iter_mut().enumerate() {
            *slot *= emission.prob(y, obs.code());
        }
        alpha = next;
    }
    Ok(alpha.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_params() -> NaturalHistoryParams {
        NaturalHistoryParams::new(vec![0.02, 0.05], 0.3, 0.2, 1.2).unwrap()
    }

    fn toy_protocol() -> ScreeningProtocol {
        ScreeningProtocol::new(vec![55.0, 57.0, 60.0], 62.5, 0.4, 0.8).unwrap()
    }

    #[test]
    fn initial_distribution_is_conditioned_and_normalized() {
        let params = toy_params();
        let pi = initial_distribution(&params, 60.0).unwrap();
        let space = params.intensity().unwrap().space();
        assert_abs_diff_eq!(pi.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        assert_eq!(pi[space.clinical_early()], 0.0);
        assert_eq!(pi[space.clinical_advanced()], 0.0);
    }

    #[test]
    fn initial_distribution_concentrates_at_young_age() {
        let params = toy_params();
        let pi = initial_distribution(&params, 1e-7).unwrap();
        assert!(pi[0] > 1.0 - 1e-6, "pi[0] = {}", pi[0]);
    }

    #[test]
    fn single_observation_reduces_to_projected_initial_distribution() {
        let params = toy_params();
        let protocol = toy_protocol();
        let space = params.intensity().unwrap().space();
        let pi = initial_distribution(&params, protocol.screen_ages[0]).unwrap();
        let p3 = sequence_probability(&params, &protocol, &[ScreenOutcome::ScreenDetectedAdvanced])
            .unwrap();
        assert_abs_diff_eq!(
            p3,
            pi[space.preclinical_advanced()] * protocol.sensitivity_advanced,
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_sensitivity_zeroes_detection_sequences() {
        let params = toy_params();
        let protocol = ScreeningProtocol::new(vec![55.0, 57.0], 60.0, 0.0, 0.0).unwrap();
        for seq in [
            vec![ScreenOutcome::ScreenDetectedEarly],
            vec![ScreenOutcome::Negative, ScreenOutcome::ScreenDetectedAdvanced],
        ] {
            let p = sequence_probability(&params, &protocol, &seq).unwrap();
            assert_eq!(p, 0.0);
        }
    }

    /// Exhaustive path-sum oracle for the same sequence probability.
    fn enumeration_oracle(
        params: &NaturalHistoryParams,
        protocol: &ScreeningProtocol,
        observations: &[ScreenOutcome],
    ) -> f64 {
        let space = params.intensity().unwrap().space();
        let d = space.dim();
        let emission = EmissionMatrix::new(
            space,
            protocol.sensitivity_early,
            protocol.sensitivity_advanced,
        );
        let steps = step_matrices(params, protocol).unwrap();
        let pi = initial_distribution(params, protocol.screen_ages[0]).unwrap();
        let len = observations.len();
        let mut total = 0.0;
        let mut path = vec![0usize; len];
        loop {
            let mut prob = pi[path[0]] * emission.prob(path[0], observations[0].code());
            for i in 1..len {
                prob *= steps[i - 1].entry(path[i - 1], path[i])
                    * emission.prob(path[i], observations[i].code());
            }
            total += prob;
            // Odometer increment over latent paths.
            let mut pos = 0;
            loop {
                if pos == len {
                    return total;
                }
                path[pos] += 1;
                if path[pos] < d {
                    break;
                }
                path[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let params = toy_params();
        let protocol = toy_protocol();
        let sequences = vec![
            vec![
                ScreenOutcome::Negative,
                ScreenOutcome::Negative,
                ScreenOutcome::ScreenDetectedAdvanced,
            ],
            vec![
                ScreenOutcome::Negative,
                ScreenOutcome::Negative,
                ScreenOutcome::Negative,
                ScreenOutcome::ClinicalAdvanced,
            ],
            vec![ScreenOutcome::Negative, ScreenOutcome::ScreenDetectedEarly],
            vec![
                ScreenOutcome::Negative,
                ScreenOutcome::ClinicalEarly,
                ScreenOutcome::ClinicalEarly,
            ],
        ];
        for seq in sequences {
            let fast = sequence_probability(&params, &protocol, &seq).unwrap();
            let slow = enumeration_oracle(&params, &protocol, &seq);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn sequence_length_is_bounded_by_observation_ages() {
        let params = toy_params();
        let protocol = toy_protocol();
        let seq = vec![ScreenOutcome::Negative; 5];
        assert!(sequence_probability(&params, &protocol, &seq).is_err());
    }
}
