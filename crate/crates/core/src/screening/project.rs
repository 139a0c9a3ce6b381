//! Trial-arm probabilities and stage-shift summaries.

use serde::{Deserialize, Serialize};

use crate::ctmc;
use crate::error::{Error, Result};
use crate::natural_history::{NaturalHistoryParams, SURVIVAL_FLOOR};
use crate::screening::forward::{initial_distribution, step_matrices};
use crate::screening::{EmissionMatrix, ScreeningProtocol};

/// Projected trial outcome probabilities, per screen and per interval, with
/// the interval and cumulative stage shifts.
///
/// All quantities are conditional on enrollment (no clinical diagnosis
/// before the first screen). `screen_detected[l]` is the probability of a
/// screen-detected advanced-stage cancer at screen `l+1` after `l` negative
/// screens; `interval_clinical[l]` the probability of an advanced-stage
/// clinical diagnosis in the interval following screen `l+1` in the
/// intervention arm; `control_clinical[l]` the matching control-arm
/// probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialProjection {
    pub screen_ages: Vec<f64>,
    pub followup_end: f64,
    pub screen_detected: Vec<f64>,
    pub interval_clinical: Vec<f64>,
    pub control_clinical: Vec<f64>,
    /// Per-interval relative reduction; `None` where the control-arm
    /// probability is zero.
    pub interval_shifts: Vec<Option<f64>>,
    /// `[sum C - (sum S + sum J)] / sum C` over all intervals.
    pub cumulative_shift: f64,
}

impl TrialProjection {
    /// Total advanced-stage probability in the intervention arm.
    pub fn total_intervention_advanced(&self) -> f64 {
        self.screen_detected.iter().sum::<f64>() + self.interval_clinical.iter().sum::<f64>()
    }

    /// Total advanced-stage probability in the control arm.
    pub fn total_control_advanced(&self) -> f64 {
        self.control_clinical.iter().sum()
    }
}

/// All screen and interval probabilities for a protocol, computed with one
/// forward pass (intervention arm) and one set of absolute transition
/// probabilities (control arm).
fn arm_probabilities(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    protocol.validate()?;
    let intensity = params.intensity()?;
    let space = intensity.space();
    let d = space.dim();
    let s3 = space.preclinical_advanced();
    let s5 = space.clinical_advanced();
    let n = protocol.n_screens();

    let emission = EmissionMatrix::new(
        space,
        protocol.sensitivity_early,
        protocol.sensitivity_advanced,
    );
    let steps = step_matrices(params, protocol)?;
    let pi = initial_distribution(params, protocol.screen_ages[0])?;

    // beta[x] = P(first l-1 screens negative, X at screen l = x).
    let mut beta = pi;
    let mut screen_detected = Vec::with_capacity(n);
    let mut interval_clinical = Vec::with_capacity(n);
    for l in 0..n {
        screen_detected.push(beta[s3] * protocol.sensitivity_advanced);
        // Survivors of screen l continue with a negative result.
        let survivors: Vec<f64> = (0..d).map(|x| beta[x] * emission.prob(x, 1)).collect();
        let step = &steps[l];
        let mut next = vec![0.0; d];
        for (x, &mass) in survivors.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (y, slot) in next.iter_mut().enumerate() {
                *slot += mass * step.entry(x, y);
            }
        }
        interval_clinical.push(next[s5]);
        beta = next;
    }

    // Control arm: increments of the absolute advanced-stage diagnosis
    // probability, conditioned on enrollment.
    let ages = protocol.observation_ages();
    let p_at: Vec<f64> = ages
        .iter()
        .map(|&a| Ok(ctmc::transition_matrix(&intensity, a)?.entry(0, s5)))
        .collect::<Result<_>>()?;
    let p_enroll = ctmc::transition_matrix(&intensity, ages[0])?;
    let survival =
        1.0 - p_enroll.entry(0, space.clinical_early()) - p_enroll.entry(0, s5);
    if survival < SURVIVAL_FLOOR {
        return Err(Error::NonComputableHazard { age: ages[0] });
    }
    let control_clinical: Vec<f64> = (0..n)
        .map(|l| ((p_at[l + 1] - p_at[l]) / survival).max(0.0))
        .collect();

    Ok((screen_detected, interval_clinical, control_clinical))
}

/// Probability of screen-detected advanced-stage cancer at screen `l`
/// (1-based), after `l - 1` negative screens.
pub fn screen_detected_advanced(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
    l: usize,
) -> Result<f64> {
    let (s, _, _) = arm_probabilities(params, protocol)?;
    index_interval(&s, l)
}

/// Probability of an advanced-stage clinical diagnosis in interval `l`
/// (1-based, between observation ages `a_l` and `a_(l+1)`) in the
/// intervention arm, after `l` negative screens.
pub fn interval_clinical_advanced(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
    l: usize,
) -> Result<f64> {
    let (_, j, _) = arm_probabilities(params, protocol)?;
    index_interval(&j, l)
}

/// Probability of an advanced-stage clinical diagnosis in interval `l`
/// (1-based) in the control arm.
pub fn control_interval_advanced(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
    l: usize,
) -> Result<f64> {
    let (_, _, c) = arm_probabilities(params, protocol)?;
    index_interval(&c, l)
}

fn index_interval(values: &[f64], l: usize) -> Result<f64> {
    if l == 0 || l > values.len() {
        return Err(Error::InvalidArgument(format!(
            "interval index must lie in 1..={}, got {l}",
            values.len()
        )));
    }
    Ok(values[l - 1])
}

/// Projects both arms and summarizes the stage shift.
pub fn stage_shift(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
) -> Result<TrialProjection> {
    let (screen_detected, interval_clinical, control_clinical) =
        arm_probabilities(params, protocol)?;

    let interval_shifts = control_clinical
        .iter()
        .zip(screen_detected.iter().zip(&interval_clinical))
        .map(|(&c, (&s, &j))| {
            if c > 0.0 {
                Some((c - (s + j)) / c)
            } else {
                None
            }
        })
        .collect();

    let total_control: f64 = control_clinical.iter().sum();
    if total_control <= 0.0 {
        return Err(Error::UndefinedShift);
    }
    let total_intervention: f64 =
        screen_detected.iter().sum::<f64>() + interval_clinical.iter().sum::<f64>();
    let cumulative_shift = (total_control - total_intervention) / total_control;

    Ok(TrialProjection {
        screen_ages: protocol.screen_ages.clone(),
        followup_end: protocol.followup_end,
        screen_detected,
        interval_clinical,
        control_clinical,
        interval_shifts,
        cumulative_shift,
    })
}

/// Relative reduction in total advanced-stage probability of one
/// intervention projection against another (the comparator arm), as used
/// when two screening modalities are contrasted directly.
pub fn relative_advanced_reduction(
    intervention: &TrialProjection,
    comparator: &TrialProjection,
) -> Result<f64> {
    let reference = comparator.total_intervention_advanced();
    if reference <= 0.0 {
        return Err(Error::UndefinedShift);
    }
    Ok((reference - intervention.total_intervention_advanced()) / reference)
}
