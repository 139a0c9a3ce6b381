//! Epidemiological parameterization of the natural-history model.
//!
//! Incidence data alone do not identify all transition rates. The gap is
//! closed by a [`SojournHypothesis`]: exogenous values for the overall mean
//! preclinical sojourn time (OMST) and the advanced-stage mean sojourn time
//! (LMST). Under a hypothesis, `lambda35 = 1/LMST` and `lambda24` is a
//! function of `lambda23`, leaving `lambda23` and the onset rates free.

use serde::{Deserialize, Serialize};

use crate::ctmc::{self, IntensityMatrix};
use crate::error::{Error, Result};

/// Survival mass below this is treated as non-computable for hazards.
pub const SURVIVAL_FLOOR: f64 = 1e-12;

/// Exogenous sojourn-time hypothesis (years). Requires `lmst < omst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SojournHypothesis {
    omst: f64,
    lmst: f64,
}

impl SojournHypothesis {
    pub fn new(omst: f64, lmst: f64) -> Result<Self> {
        if !(omst.is_finite() && omst > 0.0 && lmst.is_finite() && lmst > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sojourn times must be positive and finite, got OMST={omst}, LMST={lmst}"
            )));
        }
        if lmst >= omst {
            return Err(Error::InvalidParameter(format!(
                "LMST must be strictly less than OMST, got OMST={omst}, LMST={lmst}"
            )));
        }
        Ok(SojournHypothesis { omst, lmst })
    }

    pub fn omst(&self) -> f64 {
        self.omst
    }

    pub fn lmst(&self) -> f64 {
        self.lmst
    }

    /// Advanced-stage clinical-surfacing rate implied by the hypothesis.
    pub fn lambda35(&self) -> f64 {
        1.0 / self.lmst
    }

    /// Open upper bound on `lambda23` under this hypothesis:
    /// `lambda35 / (lambda35 * OMST - 1)`.
    pub fn lambda23_upper_bound(&self) -> f64 {
        let l35 = self.lambda35();
        l35 / (l35 * self.omst - 1.0)
    }
}

/// Expresses `lambda24` in terms of the hypothesis and `lambda23`:
/// `(lambda35 + lambda23) / (lambda35 * OMST) - lambda23`.
///
/// `lambda23` must lie strictly inside `(0, lambda35/(lambda35*OMST - 1))`
/// for the result to be positive.
pub fn lambda24_from_hypothesis(hyp: &SojournHypothesis, lambda23: f64) -> Result<f64> {
    let bound = hyp.lambda23_upper_bound();
    if !(lambda23 > 0.0 && lambda23 < bound) {
        return Err(Error::ConstraintViolation(format!(
            "lambda23 must lie in the open interval (0, {bound:.6}) under OMST={}, LMST={}; got {lambda23}",
            hyp.omst, hyp.lmst
        )));
    }
    let l35 = hyp.lambda35();
    Ok((l35 + lambda23) / (l35 * hyp.omst) - lambda23)
}

/// Full rate parameterization of the latent chain.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalHistoryParams {
    theta: Vec<f64>,
    lambda23: f64,
    lambda24: f64,
    lambda35: f64,
}

impl NaturalHistoryParams {
    pub fn new(theta: Vec<f64>, lambda23: f64, lambda24: f64, lambda35: f64) -> Result<Self> {
        let params = NaturalHistoryParams {
            theta,
            lambda23,
            lambda24,
            lambda35,
        };
        params.validate()?;
        Ok(params)
    }

    /// Constructs parameters under a sojourn hypothesis: `lambda35 = 1/LMST`
    /// and `lambda24` derived from `lambda23` so the OMST relation holds.
    pub fn from_hypothesis(
        theta: Vec<f64>,
        lambda23: f64,
        hyp: &SojournHypothesis,
    ) -> Result<Self> {
        let lambda24 = lambda24_from_hypothesis(hyp, lambda23)?;
        NaturalHistoryParams::new(theta, lambda23, lambda24, hyp.lambda35())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::InvalidParameter(
                "onset rate vector must be non-empty".into(),
            ));
        }
        for (i, &rate) in self.theta.iter().enumerate() {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "onset rate theta[{i}] must be positive and finite, got {rate}"
                )));
            }
        }
        for (name, rate) in [
            ("lambda23", self.lambda23),
            ("lambda24", self.lambda24),
            ("lambda35", self.lambda35),
        ] {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {rate}"
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn lambda23(&self) -> f64 {
        self.lambda23
    }

    pub fn lambda24(&self) -> f64 {
        self.lambda24
    }

    pub fn lambda35(&self) -> f64 {
        self.lambda35
    }

    /// Generator of the latent chain for these rates.
    pub fn intensity(&self) -> Result<IntensityMatrix> {
        ctmc::build_intensity(self)
    }

    /// Mean advanced-stage preclinical sojourn time, `1/lambda35`.
    pub fn lmst(&self) -> f64 {
        1.0 / self.lambda35
    }
}

/// Early-stage mean sojourn time `1/(lambda23 + lambda24)`: the window of
/// opportunity for early detection.
pub fn emst(params: &NaturalHistoryParams) -> f64 {
    1.0 / (params.lambda23 + params.lambda24)
}

/// Overall mean preclinical sojourn time:
/// `1/(lambda23+lambda24) + [lambda23/(lambda23+lambda24)] / lambda35`.
pub fn omst(params: &NaturalHistoryParams) -> f64 {
    let total = params.lambda23 + params.lambda24;
    1.0 / total + params.lambda23 / total / params.lambda35
}

/// Cause-specific hazards of early- and advanced-stage clinical diagnosis on
/// an age grid. Ages where survival has fallen below [`SURVIVAL_FLOOR`] are
/// flagged non-computable.
#[derive(Debug, Clone)]
pub struct HazardCurve {
    pub ages: Vec<f64>,
    /// Early-stage clinical diagnosis hazard per year.
    pub h4: Vec<f64>,
    /// Advanced-stage clinical diagnosis hazard per year.
    pub h5: Vec<f64>,
    /// False where survival mass was too small to form the ratio.
    pub computable: Vec<bool>,
}

impl HazardCurve {
    /// Errors on the first non-computable age, if any.
    pub fn require_computable(&self) -> Result<()> {
        for (idx, ok) in self.computable.iter().enumerate() {
            if !ok {
                return Err(Error::NonComputableHazard { age: self.ages[idx] });
            }
        }
        Ok(())
    }
}

/// Evaluates `h4(a) = f_{1_1 4}(a) / S(a)` and `h5(a) = f_{1_1 5}(a) / S(a)`
/// on a strictly increasing age grid, where `S(a)` is the probability of no
/// clinical diagnosis by age `a`.
pub fn hazards(params: &NaturalHistoryParams, ages: &[f64]) -> Result<HazardCurve> {
    for w in ages.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(
                "age grid must be strictly increasing".into(),
            ));
        }
    }
    if ages.first().is_some_and(|&a| a < 0.0) {
        return Err(Error::InvalidArgument("ages must be >= 0".into()));
    }

    let intensity = params.intensity()?;
    let space = intensity.space();
    let mut h4 = Vec::with_capacity(ages.len());
    let mut h5 = Vec::with_capacity(ages.len());
    let mut computable = Vec::with_capacity(ages.len());

    for &age in ages {
        let p = ctmc::transition_matrix(&intensity, age)?;
        let absorbed =
            p.entry(0, space.clinical_early()) + p.entry(0, space.clinical_advanced());
        let survival = 1.0 - absorbed;
        if survival < SURVIVAL_FLOOR {
            h4.push(f64::NAN);
            h5.push(f64::NAN);
            computable.push(false);
            continue;
        }
        let f4 = ctmc::density_from_row(&intensity, &p, 0, space.clinical_early());
        let f5 = ctmc::density_from_row(&intensity, &p, 0, space.clinical_advanced());
        h4.push(f4 / survival);
        h5.push(f5 / survival);
        computable.push(true);
    }

    Ok(HazardCurve {
        ages: ages.to_vec(),
        h4,
        h5,
        computable,
    })
}

/// Probability that preclinical onset has occurred by age `a` (no
/// other-cause mortality): one minus the mass still in the onset phases.
pub fn cumulative_onset(params: &NaturalHistoryParams, age: f64) -> Result<f64> {
    let intensity = params.intensity()?;
    let p = ctmc::transition_matrix(&intensity, age)?;
    let in_onset: f64 = (0..params.k()).map(|j| p.entry(0, j)).sum();
    Ok(1.0 - in_onset)
}

/// Probability of clinical diagnosis (either stage) by age `a`:
/// `P_{1_1 4}(a) + P_{1_1 5}(a)`.
pub fn cumulative_diagnosis(params: &NaturalHistoryParams, age: f64) -> Result<f64> {
    let intensity = params.intensity()?;
    let space = intensity.space();
    let p = ctmc::transition_matrix(&intensity, age)?;
    Ok(p.entry(0, space.clinical_early()) + p.entry(0, space.clinical_advanced()))
}

/// On-disk form of a parameter set. Field names are fixed for cross-tool
/// use; the derived sojourn summaries are stored alongside the rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub theta: Vec<f64>,
    pub lambda23: f64,
    pub lambda24: f64,
    pub lambda35: f64,
    pub omst: f64,
    pub lmst: f64,
    pub emst: f64,
}

impl ParamsFile {
    pub fn from_params(params: &NaturalHistoryParams) -> Self {
        ParamsFile {
            theta: params.theta().to_vec(),
            lambda23: params.lambda23(),
            lambda24: params.lambda24(),
            lambda35: params.lambda35(),
            omst: omst(params),
            lmst: params.lmst(),
            emst: emst(params),
        }
    }

    /// Reconstructs the parameter set, checking that the stored sojourn
    /// summaries are consistent with the rates.
    pub fn into_params(self) -> Result<NaturalHistoryParams> {
        let params =
            NaturalHistoryParams::new(self.theta, self.lambda23, self.lambda24, self.lambda35)?;
        let checks = [
            ("omst", self.omst, omst(&params)),
            ("lmst", self.lmst, params.lmst()),
            ("emst", self.emst, emst(&params)),
        ];
        for (name, stored, derived) in checks {
            if (stored - derived).abs() > 1e-6 * derived.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "stored {name}={stored} disagrees with rates (derived {derived})"
                )));
            }
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: None,
            msg: format!("parameter file: {e}"),
        })
    }
}
