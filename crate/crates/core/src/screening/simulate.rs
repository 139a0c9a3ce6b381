//! Discrete-event Monte Carlo oracle for the screening trial.
//!
//! Life histories are sampled by drawing exponential dwell times through the
//! latent chain; screens are Bernoulli tests with the protocol
//! sensitivities. Individuals are partitioned into fixed chunks, each with
//! its own counter-mode RNG stream, so tallies are bit-identical for a given
//! seed regardless of thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::natural_history::NaturalHistoryParams;
use crate::screening::project::TrialProjection;
use crate::screening::ScreeningProtocol;

const CHUNK: u64 = 1 << 16;

/// Empirical trial tallies over an enrolled cohort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortTally {
    pub n_enrolled: u64,
    /// Screen-detected advanced cases per screen.
    pub screen_detected: Vec<u64>,
    /// Advanced-stage clinical diagnoses per interval, intervention arm.
    pub interval_clinical: Vec<u64>,
    /// Advanced-stage clinical diagnoses per interval, control arm (same
    /// histories, screening ignored).
    pub control_clinical: Vec<u64>,
}

impl CohortTally {
    fn empty(n_screens: usize) -> Self {
        CohortTally {
            n_enrolled: 0,
            screen_detected: vec![0; n_screens],
            interval_clinical: vec![0; n_screens],
            control_clinical: vec![0; n_screens],
        }
    }

    fn merge(mut self, other: &CohortTally) -> Self {
        self.n_enrolled += other.n_enrolled;
        for (a, b) in self.screen_detected.iter_mut().zip(&other.screen_detected) {
            *a += b;
        }
        for (a, b) in self.interval_clinical.iter_mut().zip(&other.interval_clinical) {
            *a += b;
        }
        for (a, b) in self.control_clinical.iter_mut().zip(&other.control_clinical) {
            *a += b;
        }
        self
    }

    pub fn screen_detected_rates(&self) -> Vec<f64> {
        let n = self.n_enrolled as f64;
        self.screen_detected.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn interval_clinical_rates(&self) -> Vec<f64> {
        let n = self.n_enrolled as f64;
        self.interval_clinical.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn control_clinical_rates(&self) -> Vec<f64> {
        let n = self.n_enrolled as f64;
        self.control_clinical.iter().map(|&c| c as f64 / n).collect()
    }

    /// Empirical cumulative stage shift.
    pub fn cumulative_shift(&self) -> Result<f64> {
        let control: u64 = self.control_clinical.iter().sum();
        if control == 0 {
            return Err(Error::UndefinedShift);
        }
        let intervention: u64 =
            self.screen_detected.iter().sum::<u64>() + self.interval_clinical.iter().sum::<u64>();
        Ok((control as f64 - intervention as f64) / control as f64)
    }

    /// Empirical analogue of the analytic projection.
    pub fn to_projection(&self, protocol: &ScreeningProtocol) -> Result<TrialProjection> {
        let screen_detected = self.screen_detected_rates();
        let interval_clinical = self.interval_clinical_rates();
        let control_clinical = self.control_clinical_rates();
        let interval_shifts = control_clinical
            .iter()
            .zip(screen_detected.iter().zip(&interval_clinical))
            .map(|(&c, (&s, &j))| if c > 0.0 { Some((c - (s + j)) / c) } else { None })
            .collect();
        Ok(TrialProjection {
            screen_ages: protocol.screen_ages.clone(),
            followup_end: protocol.followup_end,
            screen_detected,
            interval_clinical,
            control_clinical,
            interval_shifts,
            cumulative_shift: self.cumulative_shift()?,
        })
    }
}

/// One sampled life history, reduced to what the trial can observe.
#[derive(Debug, Clone, Copy)]
struct History {
    onset_age: f64,
    /// Entry into advanced-stage preclinical disease, if the path goes
    /// through it.
    advanced_preclinical_age: Option<f64>,
    clinical_age: f64,
    clinical_advanced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LatentStage {
    Healthy,
    PreclinicalEarly,
    PreclinicalAdvanced,
    Clinical,
}

impl History {
    fn stage_at(&self, age: f64) -> LatentStage {
        if age < self.onset_age {
            LatentStage::Healthy
        } else if age >= self.clinical_age {
            LatentStage::Clinical
        } else if let Some(adv) = self.advanced_preclinical_age {
            if age >= adv {
                LatentStage::PreclinicalAdvanced
            } else {
                LatentStage::PreclinicalEarly
            }
        } else {
            LatentStage::PreclinicalEarly
        }
    }
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    // (0, 1] keeps ln finite.
    let u = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

fn sample_history(rng: &mut ChaCha8Rng, params: &NaturalHistoryParams) -> History {
    let mut age = 0.0;
    for &rate in params.theta() {
        age += exp_draw(rng, rate);
    }
    let onset_age = age;
    let exit_rate = params.lambda23() + params.lambda24();
    let dwell_early = exp_draw(rng, exit_rate);
    let advances = rng.random::<f64>() < params.lambda23() / exit_rate;
    if advances {
        let advanced_age = onset_age + dwell_early;
        let clinical_age = advanced_age + exp_draw(rng, params.lambda35());
        History {
            onset_age,
            advanced_preclinical_age: Some(advanced_age),
            clinical_age,
            clinical_advanced: true,
        }
    } else {
        History {
            onset_age,
            advanced_preclinical_age: None,
            clinical_age: onset_age + dwell_early,
            clinical_advanced: false,
        }
    }
}

fn run_chunk(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
    n: u64,
    seed: u64,
    stream: u64,
) -> CohortTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let ages = protocol.observation_ages();
    let n_screens = protocol.n_screens();
    let a1 = ages[0];
    let mut tally = CohortTally::empty(n_screens);
    tally.n_enrolled = n;

    for _ in 0..n {
        // Enrollment requires no clinical diagnosis before the first screen.
        let history = loop {
            let h = sample_history(&mut rng, params);
            if h.clinical_age > a1 {
                break h;
            }
        };

        // Control arm: tabulate the advanced clinical event if it falls in
        // the trial window.
        if history.clinical_advanced {
            for l in 0..n_screens {
                if history.clinical_age > ages[l] && history.clinical_age <= ages[l + 1] {
                    tally.control_clinical[l] += 1;
                    break;
                }
            }
        }

        // Intervention arm: screens, then the following interval.
        'trial: for l in 0..n_screens {
            match history.stage_at(ages[l]) {
                LatentStage::PreclinicalEarly => {
                    if rng.random::<f64>() < protocol.sensitivity_early {
                        break 'trial; // screen-detected early; leaves follow-up
                    }
                }
                LatentStage::PreclinicalAdvanced => {
                    if rng.random::<f64>() < protocol.sensitivity_advanced {
                        tally.screen_detected[l] += 1;
                        break 'trial;
                    }
                }
                LatentStage::Healthy => {}
                // Unreachable: a clinical event would have ended the walk in
                // the previous interval.
                LatentStage::Clinical => break 'trial,
            }
            if history.clinical_age > ages[l] && history.clinical_age <= ages[l + 1] {
                if history.clinical_advanced {
                    tally.interval_clinical[l] += 1;
                }
                break 'trial;
            }
        }
    }
    tally
}

/// Samples `n` enrolled life histories and tabulates empirical per-screen
/// and per-interval advanced-stage probabilities in both arms.
/// Reproducible: a fixed seed yields bit-identical tallies.
pub fn simulate_cohort(
    params: &NaturalHistoryParams,
    protocol: &ScreeningProtocol,
    n: u64,
    seed: u64,
) -> Result<CohortTally> {
    if n == 0 {
        return Err(Error::InvalidArgument("cohort size must be >= 1".into()));
    }
    protocol.validate()?;
    params.intensity()?; // surfaces invalid-rate errors before sampling

    let n_chunks = n.div_ceil(CHUNK);
    let tallies: Vec<CohortTally> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(n - c * CHUNK);
            run_chunk(params, protocol, count, seed, c)
        })
        .collect();

    Ok(tallies
        .into_iter()
        .fold(CohortTally::empty(protocol.n_screens()), |acc, t| acc.merge(&t)))
}
