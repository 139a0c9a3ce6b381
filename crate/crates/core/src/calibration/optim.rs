//! Box-constrained quasi-Newton machinery: smooth reparameterization onto
//! unconstrained coordinates, a compact L-BFGS with strong-Wolfe line
//! search, and a Halton sequence for low-discrepancy multistart points.

/// Smooth bijection between an unconstrained coordinate and a bounded
/// parameter. Rates use a logistic curve in log space; `lambda23` uses a
/// plain logistic scaled to its open upper bound.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Transform {
    /// x = exp(ln_lo + (ln_hi - ln_lo) * sigmoid(u))
    LogLogistic { ln_lo: f64, ln_hi: f64 },
    /// x = scale * sigmoid(u)
    ScaledLogistic { scale: f64 },
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let z = u.exp();
        z / (1.0 + z)
    }
}

fn logit(t: f64) -> f64 {
    (t / (1.0 - t)).ln()
}

impl Transform {
    pub fn log_box(lo: f64, hi: f64) -> Self {
        Transform::LogLogistic {
            ln_lo: lo.ln(),
            ln_hi: hi.ln(),
        }
    }

    pub fn scaled(scale: f64) -> Self {
        Transform::ScaledLogistic { scale }
    }

    pub fn forward(&self, u: f64) -> f64 {
        match *self {
            Transform::LogLogistic { ln_lo, ln_hi } => {
                (ln_lo + (ln_hi - ln_lo) * sigmoid(u)).exp()
            }
            Transform::ScaledLogistic { scale } => scale * sigmoid(u),
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        const EPS: f64 = 1e-12;
        match *self {
            Transform::LogLogistic { ln_lo, ln_hi } => {
                let t = ((x.ln() - ln_lo) / (ln_hi - ln_lo)).clamp(EPS, 1.0 - EPS);
                logit(t)
            }
            Transform::ScaledLogistic { scale } => {
                let t = (x / scale).clamp(EPS, 1.0 - EPS);
                logit(t)
            }
        }
    }

    /// Fraction of the (log-scale) box occupied by `x`, in [0, 1].
    pub fn box_fraction(&self, x: f64) -> f64 {
        match *self {
            Transform::LogLogistic { ln_lo, ln_hi } => (x.ln() - ln_lo) / (ln_hi - ln_lo),
            Transform::ScaledLogistic { scale } => x / scale,
        }
    }
}

/// Result of an L-BFGS minimization.
#[derive(Debug, Clone)]
pub(crate) struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when no finite objective value was ever seen.
    pub feasible: bool,
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MEMORY: usize = 10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f` from `x0` with the two-loop L-BFGS recursion and a
/// strong-Wolfe line search. The objective returns `(value, gradient)`;
/// infeasible points are signaled with a non-finite value.
pub(crate) fn minimize<F>(
    mut f: F,
    x0: &[f64],
    max_iters: usize,
    grad_tol: f64,
) -> MinimizeResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = f(&x);
    if !fx.is_finite() {
        return MinimizeResult {
            x,
            value: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            feasible: false,
        };
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iterations = 0;

    for iter in 0..max_iters {
        iterations = iter + 1;
        if inf_norm(&gx) <= grad_tol {
            return MinimizeResult {
                x,
                value: fx,
                grad_norm: inf_norm(&gx),
                iterations: iter,
                converged: true,
                feasible: true,
            };
        }

        // Two-loop recursion for the search direction.
        let mut q = gx.clone();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            let a = rho_hist[i] * dot(&s_hist[i], &q);
            alphas[i] = a;
            for j in 0..n {
                q[j] -= a * y_hist[i][j];
            }
        }
        let gamma = if m > 0 {
            let i = m - 1;
            dot(&s_hist[i], &y_hist[i]) / dot(&y_hist[i], &y_hist[i])
        } else {
            1.0
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for i in 0..m {
            let beta = rho_hist[i] * dot(&y_hist[i], &q);
            for j in 0..n {
                q[j] += s_hist[i][j] * (alphas[i] - beta);
            }
        }
        let mut direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&gx, &direction);
        if !(slope < 0.0) {
            // Fall back to steepest descent if curvature info went bad.
            direction = gx.iter().map(|v| -v).collect();
            slope = dot(&gx, &direction);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        match line_search(&mut f, &x, fx, &gx, &direction, slope) {
            Some((alpha, x_new, f_new, g_new)) => {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).max(1e-300) {
                    if s_hist.len() == MEMORY {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    rho_hist.push(1.0 / sy);
                    s_hist.push(s);
                    y_hist.push(y);
                }
                let _ = alpha;
                x = x_new;
                fx = f_new;
                gx = g_new;
            }
            None => {
                // Line search failed; report the best point found.
                return MinimizeResult {
                    grad_norm: inf_norm(&gx),
                    x,
                    value: fx,
                    iterations: iter + 1,
                    converged: false,
                    feasible: true,
                };
            }
        }
    }

    MinimizeResult {
        grad_norm: inf_norm(&gx),
        x,
        value: fx,
        iterations,
        converged: inf_norm(&gx) <= grad_tol,
        feasible: true,
    }
}

type SearchPoint = (f64, Vec<f64>, f64, Vec<f64>);

/// Strong-Wolfe line search (bracket then zoom).
fn line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    direction: &[f64],
    slope0: f64,
) -> Option<SearchPoint>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |f: &mut F, alpha: f64| -> (Vec<f64>, f64, Vec<f64>, f64) {
        let xt: Vec<f64> = x.iter().zip(direction).map(|(xi, di)| xi + alpha * di).collect();
        let (ft, gt) = f(&xt);
        let st = if ft.is_finite() { dot(&gt, direction) } else { f64::INFINITY };
        (xt, ft, gt, st)
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut slope_prev = slope0;
    let mut alpha = 1.0;
    let max_expand = 20;

    for i in 0..max_expand {
        let (xt, ft, gt, st) = eval(f, alpha);
        if !ft.is_finite() || ft > f0 + WOLFE_C1 * alpha * slope0 || (i > 0 && ft >= f_prev) {
            return zoom(f, x, f0, slope0, direction, alpha_prev, f_prev, slope_prev, alpha, ft);
        }
        if st.abs() <= -WOLFE_C2 * slope0 {
            return Some((alpha, xt, ft, gt));
        }
        if st >= 0.0 {
            return zoom(f, x, f0, slope0, direction, alpha, ft, st, alpha_prev, f_prev);
        }
        alpha_prev = alpha;
        f_prev = ft;
        slope_prev = st;
        alpha *= 2.0;
    }
    let _ = (g0, slope_prev);
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    direction: &[f64],
    mut lo: f64,
    mut f_lo: f64,
    mut slope_lo: f64,
    mut hi: f64,
    mut f_hi: f64,
) -> Option<SearchPoint>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |f: &mut F, alpha: f64| -> (Vec<f64>, f64, Vec<f64>, f64) {
        let xt: Vec<f64> = x.iter().zip(direction).map(|(xi, di)| xi + alpha * di).collect();
        let (ft, gt) = f(&xt);
        let st = if ft.is_finite() { dot(&gt, direction) } else { f64::INFINITY };
        (xt, ft, gt, st)
    };

    for _ in 0..40 {
        // Quadratic interpolation using the lo endpoint slope, with a
        // bisection fallback that keeps the trial inside the bracket.
        let mut alpha = if f_hi.is_finite() && (hi - lo).abs() > 0.0 {
            let denom = 2.0 * (f_hi - f_lo - slope_lo * (hi - lo));
            if denom.abs() > 1e-300 {
                lo - slope_lo * (hi - lo) * (hi - lo) / denom
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        let (lo_b, hi_b) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let width = hi_b - lo_b;
        if !(alpha.is_finite() && alpha > lo_b + 0.1 * width && alpha < hi_b - 0.1 * width) {
            alpha = 0.5 * (lo + hi);
        }

        let (xt, ft, gt, st) = eval(f, alpha);
        if !ft.is_finite() || ft > f0 + WOLFE_C1 * alpha * slope0 || ft >= f_lo {
            hi = alpha;
            f_hi = ft;
        } else {
            if st.abs() <= -WOLFE_C2 * slope0 {
                return Some((alpha, xt, ft, gt));
            }
            if st * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = alpha;
            f_lo = ft;
            slope_lo = st;
        }
        if (hi - lo).abs() < 1e-14 {
            break;
        }
    }
    // Accept the best sufficient-decrease point even without curvature.
    if f_lo < f0 && lo > 0.0 {
        let (xt, ft, gt, _) = eval(f, lo);
        if ft.is_finite() && ft < f0 {
            return Some((lo, xt, ft, gt));
        }
    }
    None
}

/// Element `index` of the base-`base` van der Corput sequence.
fn van_der_corput(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut denom = 1.0;
    while index > 0 {
        denom *= base as f64;
        result += (index % base) as f64 / denom;
        index /= base;
    }
    result
}

const HALTON_BASES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `index` (1-based internally) of the Halton sequence in (0,1)^dim.
pub(crate) fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| van_der_corput(index + 1, HALTON_BASES[d % HALTON_BASES.len()]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn transform_round_trip() {
        let t = Transform::log_box(1e-6, 10.0);
        for &x in &[1e-5, 0.01, 0.5, 3.0, 9.0] {
            assert_abs_diff_eq!(t.forward(t.inverse(x)), x, epsilon = 1e-9 * x);
        }
        let s = Transform::scaled(0.7);
        for &x in &[0.001, 0.2, 0.5, 0.69] {
            assert_abs_diff_eq!(s.forward(s.inverse(x)), x, epsilon = 1e-10);
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let target = [1.0, -2.0, 3.5];
        let f = |x: &[f64]| {
            let value: f64 = x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
            let grad: Vec<f64> = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            (value, grad)
        };
        let res = minimize(f, &[0.0, 0.0, 0.0], 100, 1e-10);
        assert!(res.converged);
        for (xi, ti) in res.x.iter().zip(&target) {
            assert_abs_diff_eq!(xi, ti, epsilon = 1e-6);
        }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let value = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let grad = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (value, grad)
        };
        let res = minimize(f, &[-1.2, 1.0], 500, 1e-8);
        assert!(res.converged, "rosenbrock failed: {res:?}");
        assert_abs_diff_eq!(res.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(res.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn reports_infeasible_start() {
        let f = |_: &[f64]| (f64::INFINITY, vec![0.0]);
        let res = minimize(f, &[0.0], 10, 1e-8);
        assert!(!res.feasible);
    }

    #[test]
    fn halton_covers_unit_cube() {
        for i in 0..32 {
            let p = halton_point(i, 3);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        // First coordinates follow the base-2 van der Corput sequence.
        assert_abs_diff_eq!(halton_point(0, 1)[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(halton_point(1, 1)[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(halton_point(2, 1)[0], 0.75, epsilon = 1e-15);
    }
}
