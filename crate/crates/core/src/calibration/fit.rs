//! Maximum-likelihood fitting and onset-dimension selection.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::calibration::likelihood::{
    cells_from_table, deviance_from, loglik_ff, Cell,
};
use crate::calibration::optim::{halton_point, minimize, Transform};
use crate::calibration::table::{inflate_risk, IncidenceTable};
use crate::error::{Error, Result};
use crate::natural_history::{hazards, NaturalHistoryParams, SojournHypothesis};

/// Quasi-Newton settings. The optimizer works on unconstrained coordinates:
/// onset rates through a logistic curve in log space over `rate_box`, and
/// `lambda23` through a logistic scaled to its open upper bound.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    /// Supremum-norm tolerance on the transformed-space gradient.
    pub grad_tol: f64,
    /// Total number of starts (a data-driven start plus Halton points).
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_iters: 400,
            grad_tol: 1e-6,
            multistarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Onset dimension (number of hypoexponential phases).
    pub k: usize,
    pub hypothesis: SojournHypothesis,
    /// Multiplier applied to observed counts before fitting (elevated-risk
    /// cohorts). 1.0 leaves the table untouched.
    pub risk_inflation: f64,
    pub optimizer: OptimizerSettings,
    /// Box for each onset rate, per year.
    pub rate_box: (f64, f64),
    /// Override for the hazard evaluation age of the terminal (open-ended)
    /// group; by default the encoded interval midpoint is used.
    pub terminal_midpoint: Option<f64>,
    /// Optional warm start `(theta, lambda23)`, used as one of the starts.
    pub warm_start: Option<(Vec<f64>, f64)>,
}

impl FitConfig {
    pub fn new(k: usize, hypothesis: SojournHypothesis) -> Self {
        FitConfig {
            k,
            hypothesis,
            risk_inflation: 1.0,
            optimizer: OptimizerSettings::default(),
            rate_box: (1e-6, 10.0),
            terminal_midpoint: None,
            warm_start: None,
        }
    }
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: NaturalHistoryParams,
    pub hypothesis: SojournHypothesis,
    pub k: usize,
    /// Full Poisson log-pmf of the (inflated) table at the fitted point,
    /// including the `-ln(o!)` data constant.
    pub loglik: f64,
    /// `2 (saturated - model)` in the factorial-free convention.
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Expected counts per table row, `[early, advanced]`.
    pub predicted: Vec<[f64; 2]>,
    /// Set when an onset rate was driven to the bottom of its box, which
    /// signals a degenerate fit (for example an all-zero table).
    pub degenerate: bool,
}

struct Objective<'a> {
    cells: &'a [Cell],
    hyp: SojournHypothesis,
    transforms: &'a [Transform],
    k: usize,
}

impl Objective<'_> {
    fn decode(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let theta: Vec<f64> = (0..self.k).map(|i| self.transforms[i].forward(u[i])).collect();
        let lambda23 = self.transforms[self.k].forward(u[self.k]);
        (theta, lambda23)
    }

    fn value(&self, u: &[f64]) -> f64 {
        let (theta, lambda23) = self.decode(u);
        let params = match NaturalHistoryParams::from_hypothesis(theta, lambda23, &self.hyp) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        match loglik_ff(&params, self.cells) {
            Ok(Some(ll)) => -ll,
            _ => f64::INFINITY,
        }
    }

    /// Negative log likelihood and its central-difference gradient in the
    /// unconstrained coordinates.
    fn value_and_grad(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let f = self.value(u);
        if !f.is_finite() {
            return (f, vec![0.0; u.len()]);
        }
        let h = 1e-5;
        let mut grad = vec![0.0; u.len()];
        let mut probe = u.to_vec();
        for i in 0..u.len() {
            probe[i] = u[i] + h;
            let up = self.value(&probe);
            probe[i] = u[i] - h;
            let dn = self.value(&probe);
            probe[i] = u[i];
            grad[i] = if up.is_finite() && dn.is_finite() {
                (up - dn) / (2.0 * h)
            } else if up.is_finite() {
                (up - f) / h
            } else if dn.is_finite() {
                (f - dn) / h
            } else {
                0.0
            };
        }
        (f, grad)
    }
}

/// Data-driven initial point: `lambda23` matched to the observed advanced
/// share through the sojourn relations, and a geometric ladder of onset
/// rates whose total mean dwell is picked by a coarse likelihood scan.
fn heuristic_start(obj: &Objective<'_>, table: &IncidenceTable) -> Vec<f64> {
    let (early, advanced) = table.total_counts();
    let total = (early + advanced) as f64;
    let q = if total > 0.0 {
        (advanced as f64 / total).clamp(0.02, 0.98)
    } else {
        0.5
    };
    let hyp = &obj.hyp;
    let exit_rate = 1.0 / (hyp.omst() - q * hyp.lmst());
    let lambda23 = q * exit_rate;

    let ladder: Vec<f64> = (0..obj.k)
        .map(|i| 1.35f64.powi(i as i32 - (obj.k as i32 - 1) / 2))
        .collect();
    let ladder_sum: f64 = ladder.iter().sum();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mean in [15.0, 25.0, 35.0, 45.0, 55.0, 65.0, 80.0, 100.0] {
        let theta: Vec<f64> = ladder.iter().map(|w| ladder_sum / (w * mean)).collect();
        let mut u: Vec<f64> = theta
            .iter()
            .enumerate()
            .map(|(i, &rate)| obj.transforms[i].inverse(rate))
            .collect();
        u.push(obj.transforms[obj.k].inverse(lambda23));
        let value = obj.value(&u);
        if value.is_finite() && best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, u));
        }
    }
    best.map(|(_, u)| u).unwrap_or_else(|| vec![0.0; obj.k + 1])
}

/// Estimates onset rates and `lambda23` by maximizing the Poisson
/// likelihood of the (optionally risk-inflated) table under the configured
/// sojourn hypothesis. Deterministic given the seed.
pub fn fit(table: &IncidenceTable, config: &FitConfig) -> Result<FitResult> {
    if config.k == 0 {
        return Err(Error::InvalidParameter("onset dimension k must be >= 1".into()));
    }
    if config.optimizer.multistarts == 0 {
        return Err(Error::InvalidParameter("multistart count must be >= 1".into()));
    }
    let working = if config.risk_inflation != 1.0 {
        inflate_risk(table, config.risk_inflation)?
    } else {
        table.clone()
    };
    let cells = cells_from_table(&working, config.terminal_midpoint);

    let (lo, hi) = config.rate_box;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "rate box must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    let bound = config.hypothesis.lambda23_upper_bound();
    let mut transforms: Vec<Transform> = (0..config.k).map(|_| Transform::log_box(lo, hi)).collect();
    transforms.push(Transform::scaled(bound));

    let obj = Objective {
        cells: &cells,
        hyp: config.hypothesis,
        transforms: &transforms,
        k: config.k,
    };

    // Assemble starts: data-driven, optional warm start, then Halton points.
    let mut starts: Vec<Vec<f64>> = vec![heuristic_start(&obj, &working)];
    if let Some((theta, lambda23)) = &config.warm_start {
        if theta.len() == config.k {
            let mut u: Vec<f64> = theta
                .iter()
                .enumerate()
                .map(|(i, &rate)| transforms[i].inverse(rate))
                .collect();
            u.push(transforms[config.k].inverse(*lambda23));
            starts.push(u);
        }
    }
    let halton_offset = config.optimizer.seed.wrapping_mul(97);
    let mut index = 0u64;
    while starts.len() < config.optimizer.multistarts {
        let t = halton_point(halton_offset + index, config.k + 1);
        index += 1;
        let mut u: Vec<f64> = (0..config.k)
            .map(|i| {
                let rate = (0.002f64.ln() + t[i] * (3.0f64.ln() - 0.002f64.ln())).exp();
                transforms[i].inverse(rate.clamp(lo * 1.001, hi * 0.999))
            })
            .collect();
        u.push(transforms[config.k].inverse(bound * (0.05 + 0.9 * t[config.k])));
        starts.push(u);
    }
    starts.truncate(starts.len().max(config.optimizer.multistarts));

    let runs: Vec<_> = starts
        .par_iter()
        .map(|u0| {
            minimize(
                |u| obj.value_and_grad(u),
                u0,
                config.optimizer.max_iters,
                config.optimizer.grad_tol,
            )
        })
        .collect();

    // Deterministic merge: best value wins, earlier start breaks ties.
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.feasible && r.value.is_finite())
        .min_by(|(ia, a), (ib, b)| {
            a.value
                .partial_cmp(&b.value)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib))
        });

    let Some((_, best)) = best else {
        return Err(Error::NonConvergence {
            msg: format!("all {} starts were infeasible", runs.len()),
            best: None,
        });
    };

    let (theta, lambda23) = obj.decode(&best.x);
    let degenerate = theta
        .iter()
        .any(|&rate| transforms[0].box_fraction(rate) < 0.01);
    let params = NaturalHistoryParams::from_hypothesis(theta, lambda23, &config.hypothesis)?;

    let mids: Vec<f64> = cells.iter().map(|c| c.midpoint).collect();
    let curve = hazards(&params, &mids)?;
    curve.require_computable()?;
    let predicted: Vec<[f64; 2]> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| [c.person_years * curve.h4[i], c.person_years * curve.h5[i]])
        .collect();
    let deviance = deviance_from(&predicted, &cells);
    let constant: f64 = cells
        .iter()
        .map(|c| ln_gamma(c.o4 + 1.0) + ln_gamma(c.o5 + 1.0))
        .sum();
    let loglik = -best.value - constant;

    Ok(FitResult {
        params,
        hypothesis: config.hypothesis,
        k: config.k,
        loglik,
        deviance,
        converged: best.converged,
        iterations: best.iterations,
        grad_norm: best.grad_norm,
        predicted,
        degenerate,
    })
}

/// One rung of the onset-dimension selection ladder.
#[derive(Debug, Clone)]
pub struct SelectionEntry {
    pub k: usize,
    pub deviance: f64,
    pub loglik: f64,
    pub converged: bool,
}

/// Deviance trace over increasing onset dimension, with the chosen `k` and
/// its fit.
#[derive(Debug)]
pub struct SelectionTrace {
    pub entries: Vec<SelectionEntry>,
    pub chosen_k: usize,
    pub best_fit: FitResult,
}

/// Fits `k = 1, 2, ...` up to `k_max`, warm-starting each dimension from
/// the previous solution, and stops once the relative deviance improvement
/// falls below `rel_threshold`. The chosen dimension is the last one that
/// still improved materially; with a zero threshold the ladder runs to
/// `k_max`.
pub fn select_onset_dimension(
    table: &IncidenceTable,
    base: &FitConfig,
    k_max: usize,
    rel_threshold: f64,
) -> Result<SelectionTrace> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be >= 1".into()));
    }
    let mut entries = Vec::new();
    let mut fits: Vec<FitResult> = Vec::new();

    for k in 1..=k_max {
        let mut config = base.clone();
        config.k = k;
        config.warm_start = fits.last().map(|prev| {
            let mut theta = prev.params.theta().to_vec();
            theta.push(4.0);
            (theta, prev.params.lambda23())
        });
        let fit_k = fit(table, &config)?;
        entries.push(SelectionEntry {
            k,
            deviance: fit_k.deviance,
            loglik: fit_k.loglik,
            converged: fit_k.converged,
        });
        let stop = if let Some(prev) = fits.last() {
            let improvement = prev.deviance - fit_k.deviance;
            prev.deviance <= 0.0 || improvement < rel_threshold * prev.deviance.abs()
        } else {
            false
        };
        fits.push(fit_k);
        if stop {
            break;
        }
    }

    // The triggering dimension added nothing; keep its predecessor. When the
    // ladder ran to the end, keep the final dimension.
    let last = fits.len();
    let stopped_early = last < k_max || {
        last >= 2 && {
            let improvement = fits[last - 2].deviance - fits[last - 1].deviance;
            fits[last - 2].deviance <= 0.0
                || improvement < rel_threshold * fits[last - 2].deviance.abs()
        }
    };
    let chosen_idx = if stopped_early && last >= 2 { last - 2 } else { last - 1 };
    let chosen_k = fits[chosen_idx].k;
    let best_fit = fits.swap_remove(chosen_idx);

    Ok(SelectionTrace {
        entries,
        chosen_k,
        best_fit,
    })
}
