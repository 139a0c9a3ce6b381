//! Latent-state continuous-time Markov chain for the two-stage progressive
//! model.
//!
//! The latent state space is `1_1, ..., 1_k, 2, 3, 4, 5` in that order:
//! `k` hypoexponential onset phases (observable state 1, no cancer), then
//! early-stage preclinical (2), advanced-stage preclinical (3), early-stage
//! clinical (4), and advanced-stage clinical (5). States 4 and 5 are
//! absorbing. The generator is upper triangular, so transition matrices are
//! upper triangular as well.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;
use crate::natural_history::NaturalHistoryParams;

/// Engineering cap on the latent dimension `d = k + 4`. Keeps matrix
/// exponentials well conditioned; the onset dimension is never anywhere near
/// this in practice.
pub const MAX_LATENT_DIM: usize = 64;

/// Tolerance used when validating row-stochasticity of transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Row-sum violations beyond this are treated as numerical-integrity errors.
pub const ROW_SUM_HARD_TOL: f64 = 1e-8;

/// Index bookkeeping for the latent state space with `k` onset phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    k: usize,
}

impl StateSpace {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter(
                "onset dimension k must be >= 1".into(),
            ));
        }
        if k + 4 > MAX_LATENT_DIM {
            return Err(Error::InvalidParameter(format!(
                "latent dimension {} exceeds the supported maximum {}",
                k + 4,
                MAX_LATENT_DIM
            )));
        }
        Ok(StateSpace { k })
    }

    /// Number of onset phases.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Total latent dimension `k + 4`.
    pub fn dim(&self) -> usize {
        self.k + 4
    }

    /// Index of onset phase `1_(i+1)`, `i` in `0..k`.
    pub fn onset_phase(&self, i: usize) -> usize {
        debug_assert!(i < self.k);
        i
    }

    /// Index of the early-stage preclinical state (observable state 2).
    pub fn preclinical_early(&self) -> usize {
        self.k
    }

    /// Index of the advanced-stage preclinical state (observable state 3).
    pub fn preclinical_advanced(&self) -> usize {
        self.k + 1
    }

    /// Index of the absorbing early-stage clinical state (observable state 4).
    pub fn clinical_early(&self) -> usize {
        self.k + 2
    }

    /// Index of the absorbing advanced-stage clinical state (observable state 5).
    pub fn clinical_advanced(&self) -> usize {
        self.k + 3
    }

    /// Whether a latent index is transient (anything but the clinical states).
    pub fn is_transient(&self, idx: usize) -> bool {
        idx < self.clinical_early()
    }

    /// Observable state (1..=5) emitted by a latent index.
    pub fn observable(&self, idx: usize) -> u8 {
        if idx < self.k {
            1
        } else {
            (idx - self.k + 2) as u8
        }
    }
}

/// Generator of the latent chain. Rows sum to zero; rows for the clinical
/// states are identically zero.
#[derive(Debug, Clone)]
pub struct IntensityMatrix {
    space: StateSpace,
    entries: Array2<f64>,
}

impl IntensityMatrix {
    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

}

/// Assembles the latent-chain generator from natural-history rates.
///
/// The onset phases chain `1_1 -> 1_2 -> ... -> 1_k -> 2` with the rates in
/// `theta`; state 2 branches to 3 (rate `lambda23`) or 4 (rate `lambda24`);
/// state 3 surfaces at 5 with rate `lambda35`; 4 and 5 absorb.
pub fn build_intensity(params: &NaturalHistoryParams) -> Result<IntensityMatrix> {
    params.validate()?;
    let space = StateSpace::new(params.k())?;
    let d = space.dim();
    let mut m = Array2::<f64>::zeros((d, d));

    for (i, &rate) in params.theta().iter().enumerate() {
        m[(i, i)] = -rate;
        m[(i, i + 1)] = rate;
    }
    let s2 = space.preclinical_early();
    let s3 = space.preclinical_advanced();
    let s4 = space.clinical_early();
    let s5 = space.clinical_advanced();
    m[(s2, s2)] = -(params.lambda23() + params.lambda24());
    m[(s2, s3)] = params.lambda23();
    m[(s2, s4)] = params.lambda24();
    m[(s3, s3)] = -params.lambda35();
    m[(s3, s5)] = params.lambda35();

    Ok(IntensityMatrix { space, entries: m })
}

/// Row-stochastic transition probability matrix `P(t) = exp(intensity * t)`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    space: StateSpace,
    t: f64,
    entries: Array2<f64>,
}

impl TransitionMatrix {
    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn elapsed(&self) -> f64 {
        self.t
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// Computes `P(t)` for the latent chain over an elapsed time of `t` years.
pub fn transition_matrix(intensity: &IntensityMatrix, t: f64) -> Result<TransitionMatrix> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "elapsed time must be finite and >= 0, got {t}"
        )));
    }
    let scaled = intensity.entries() * t;
    let mut p = linalg::expm(&scaled);
    let d = intensity.dim();

    // The generator is upper triangular, so the exact exponential is too.
    // Enforce the structural zeros and clear roundoff-scale negatives.
    for i in 0..d {
        for j in 0..i {
            p[(i, j)] = 0.0;
        }
    }
    for v in p.iter_mut() {
        if *v < 0.0 {
            if *v < -ROW_SUM_HARD_TOL {
                return Err(Error::NumericalIntegrity(format!(
                    "transition probability {v} below zero beyond tolerance"
                )));
            }
            *v = 0.0;
        }
    }
    for i in 0..d {
        let sum: f64 = p.row(i).sum();
        if (sum - 1.0).abs() > ROW_SUM_HARD_TOL {
            return Err(Error::NumericalIntegrity(format!(
                "row {i} of P({t}) sums to {sum}, violating stochasticity"
            )));
        }
    }

    Ok(TransitionMatrix {
        space: intensity.space(),
        t,
        entries: p,
    })
}

/// Density of entering state `j` at elapsed time `t`, starting from state `i`:
/// the sum over intermediate states `l != j` of `P_il(t) * rate(l -> j)`.
///
/// For an unreachable target the density is zero.
pub fn transition_density(intensity: &IntensityMatrix, t: f64, i: usize, j: usize) -> Result<f64> {
    let d = intensity.dim();
    if i >= d || j >= d {
        return Err(Error::InvalidArgument(format!(
            "state index out of range: i={i}, j={j}, dim={d}"
        )));
    }
    let p = transition_matrix(intensity, t)?;
    Ok(density_from_row(intensity, &p, i, j))
}

/// Same as [`transition_density`] but reusing a precomputed `P(t)`.
pub(crate) fn density_from_row(
    intensity: &IntensityMatrix,
    p: &TransitionMatrix,
    i: usize,
    j: usize,
) -> f64 {
    let d = intensity.dim();
    let mut acc = 0.0;
    for l in 0..d {
        if l != j {
            acc += p.entry(i, l) * intensity.entry(l, j);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::natural_history::NaturalHistoryParams;
    use approx::assert_abs_diff_eq;

    fn k1_params() -> NaturalHistoryParams {
        NaturalHistoryParams::new(vec![0.5], 0.4, 0.2, 2.0).unwrap()
    }

    /// Independent series oracle: truncated Taylor with scaling and squaring.
    fn expm_taylor(a: &Array2<f64>, terms: usize) -> Array2<f64> {
        let n = a.nrows();
        let norm = a.iter().map(|x| x.abs()).fold(0.0, f64::max) * n as f64;
        let s = norm.log2().ceil().max(0.0) as u32;
        let scaled = a / 2f64.powi(s as i32);
        let mut acc = Array2::<f64>::eye(n);
        let mut term = Array2::<f64>::eye(n);
        for m in 1..=terms {
            term = term.dot(&scaled) / m as f64;
            acc += &term;
        }
        for _ in 0..s {
            acc = acc.dot(&acc);
        }
        acc
    }

    #[test]
    fn build_intensity_k1_matches_block_structure() {
        let lam = build_intensity(&k1_params()).unwrap();
        let m = lam.entries();
        let expected = [
            [-0.5, 0.5, 0.0, 0.0, 0.0],
            [0.0, -0.6, 0.4, 0.2, 0.0],
            [0.0, 0.0, -2.0, 0.0, 2.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
        ];
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m[(i, j)], expected[i][j], "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn build_intensity_rejects_nonpositive_rates() {
        assert!(NaturalHistoryParams::new(vec![0.0], 0.4, 0.2, 2.0).is_err());
        assert!(NaturalHistoryParams::new(vec![0.5], -0.1, 0.2, 2.0).is_err());
    }

    #[test]
    fn build_intensity_k2_chains_onset_phases() {
        let params = NaturalHistoryParams::new(vec![0.5, 0.7], 0.4, 0.2, 2.0).unwrap();
        let lam = build_intensity(&params).unwrap();
        assert_eq!(lam.dim(), 6);
        let m = lam.entries();
        assert_eq!(m[(0, 0)], -0.5);
        assert_eq!(m[(0, 1)], 0.5);
        assert_eq!(m[(1, 1)], -0.7);
        assert_eq!(m[(1, 2)], 0.7);
        assert_eq!(m[(2, 3)], 0.4);
        assert_eq!(m[(2, 4)], 0.2);
    }

    #[test]
    fn intensity_rows_sum_to_zero() {
        let lam = build_intensity(&k1_params()).unwrap();
        for i in 0..lam.dim() {
            let sum: f64 = lam.entries().row(i).sum();
            assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn transition_matrix_at_zero_is_identity() {
        let lam = build_intensity(&k1_params()).unwrap();
        let p = transition_matrix(&lam, 0.0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(p.entry(i, j), expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn transition_matrix_rejects_negative_time() {
        let lam = build_intensity(&k1_params()).unwrap();
        assert!(matches!(
            transition_matrix(&lam, -1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn two_state_chain_halves_at_ln2() {
        // Departure from a state with unit exit rate: P00(ln 2) = 1/2 and the
        // departed mass is the complementary 1/2.
        let params = NaturalHistoryParams::new(vec![1.0], 1.0, 1.0, 1.0).unwrap();
        let lam = build_intensity(&params).unwrap();
        let p = transition_matrix(&lam, std::f64::consts::LN_2).unwrap();
        assert_abs_diff_eq!(p.entry(0, 0), 0.5, epsilon = 1e-12);
        let departed: f64 = (1..5).map(|j| p.entry(0, j)).sum();
        assert_abs_diff_eq!(departed, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn transition_matrix_matches_taylor_oracle() {
        let lam = build_intensity(&k1_params()).unwrap();
        let p = transition_matrix(&lam, 1.0).unwrap();
        let oracle = expm_taylor(&(lam.entries() * 1.0), 60);
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!(p.entry(i, j), oracle[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn transition_density_zero_at_time_zero() {
        let lam = build_intensity(&k1_params()).unwrap();
        let space = lam.space();
        let f = transition_density(&lam, 0.0, space.onset_phase(0), space.clinical_early()).unwrap();
        assert_abs_diff_eq!(f, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn transition_density_rejects_bad_indices() {
        let lam = build_intensity(&k1_params()).unwrap();
        assert!(transition_density(&lam, 1.0, 0, 9).is_err());
    }

    /// Adaptive Simpson quadrature for the oracle integrals.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
        }
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            m: f64,
            fm: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (left, lm, flm) = simpson(f, a, fa, m, fm);
            let (right, rm, frm) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                    + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (whole, m, fm) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
    }

    #[test]
    fn transition_density_matches_quadrature_oracle() {
        // f_{1_1 4}(t) = integral of g1(u) exp(-(l23+l24)(t-u)) l24 du with
        // g1 the exponential onset density for k = 1.
        let params = k1_params();
        let (theta, l23, l24) = (0.5, 0.4, 0.2);
        let t = 2.0;
        let lam = build_intensity(&params).unwrap();
        let space = lam.space();
        let f = transition_density(&lam, t, space.onset_phase(0), space.clinical_early()).unwrap();
        let integrand = move |u: f64| theta * (-theta * u).exp() * (-(l23 + l24) * (t - u)).exp() * l24;
        let oracle = adaptive_simpson(&integrand, 0.0, t, 1e-10);
        assert_abs_diff_eq!(f, oracle, epsilon = 1e-6);
    }

    #[test]
    fn advanced_surfacing_mass_matches_branching_probability() {
        // Integrating the advanced clinical-entry density over a long horizon
        // gives the probability of ever surfacing advanced: l23/(l23+l24).
        let params = k1_params();
        let lam = build_intensity(&params).unwrap();
        let space = lam.space();
        let i = space.onset_phase(0);
        let j = space.clinical_advanced();
        let integrand = |t: f64| transition_density(&lam, t, i, j).unwrap();
        let mass = adaptive_simpson(&integrand, 0.0, 200.0, 1e-9);
        assert_abs_diff_eq!(mass, 0.4 / 0.6, epsilon = 1e-6);
    }

    #[test]
    fn absorption_is_monotone() {
        let params = k1_params();
        let lam = build_intensity(&params).unwrap();
        let space = lam.space();
        let mut prev = 0.0;
        for step in 0..60 {
            let t = step as f64 * 0.5;
            let p = transition_matrix(&lam, t).unwrap();
            let absorbed = p.entry(0, space.clinical_early()) + p.entry(0, space.clinical_advanced());
            assert!(absorbed + 1e-12 >= prev, "absorbed mass decreased at t={t}");
            prev = absorbed;
        }
    }

    #[test]
    fn k1_preclinical_early_occupancy_matches_closed_form() {
        // Two-rate chain 1_1 -> 2 -> out: occupancy of state 2 at time t is
        // theta/(r - theta) (exp(-theta t) - exp(-r t)) with r = l23 + l24.
        let params = k1_params();
        let lam = build_intensity(&params).unwrap();
        let space = lam.space();
        let (theta, r) = (0.5, 0.6);
        for &t in &[0.1, 0.7, 1.9, 5.3, 17.0, 42.0] {
            let p = transition_matrix(&lam, t).unwrap();
            let closed = theta / (r - theta) * ((-theta * t).exp() - (-r * t).exp());
            assert_abs_diff_eq!(p.entry(0, space.preclinical_early()), closed, epsilon = 1e-9);
        }
    }

    #[test]
    fn density_matches_derivative_of_absorption() {
        // f_{1_1 4} + f_{1_1 5} equals d/dt [P_{1_1 4} + P_{1_1 5}].
        let params = k1_params();
        let lam = build_intensity(&params).unwrap();
        let space = lam.space();
        let absorbed = |t: f64| {
            let p = transition_matrix(&lam, t).unwrap();
            p.entry(0, space.clinical_early()) + p.entry(0, space.clinical_advanced())
        };
        for &t in &[0.5, 2.0, 10.0, 30.0] {
            let h = 1e-5;
            let fd = (absorbed(t + h) - absorbed(t - h)) / (2.0 * h);
            let f4 = transition_density(&lam, t, 0, space.clinical_early()).unwrap();
            let f5 = transition_density(&lam, t, 0, space.clinical_advanced()).unwrap();
            assert_abs_diff_eq!(f4 + f5, fd, epsilon = 1e-5);
        }
    }
}
