//! Small dense linear algebra: matrix exponential and an LU solver.
//!
//! The intensity matrices in this crate are tiny (dimension <= 64), so a
//! dense scaling-and-squaring evaluation with diagonal Pade approximants is
//! both simple and accurate. Orders 3/5/7/9 are used when the scaled 1-norm
//! permits, otherwise order 13 after scaling, following the usual theta
//! thresholds.

use ndarray::Array2;

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Maximum absolute column sum.
fn norm_1(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn eye(n: usize) -> Array2<f64> {
    Array2::eye(n)
}

/// Evaluates the [m/m] Pade numerator/denominator halves U and V for
/// m in {3, 5, 7, 9} from precomputed even powers of `a`.
fn pade_low_order(a: &Array2<f64>, powers: &[Array2<f64>], b: &[f64]) -> (Array2<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut u_inner = Array2::<f64>::zeros((n, n));
    let mut v = Array2::<f64>::zeros((n, n));
    // powers[p] holds A^(2p), powers[0] = I.
    for (p, pow) in powers.iter().enumerate() {
        let odd = 2 * p + 1;
        if odd < b.len() {
            u_inner.scaled_add(b[odd], pow);
        }
        v.scaled_add(b[2 * p], pow);
    }
    (a.dot(&u_inner), v)
}

fn pade_13(a: &Array2<f64>, a2: &Array2<f64>, a4: &Array2<f64>, a6: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = a.nrows();
    let b = &B13;
    let id = eye(n);

    let mut w1 = a6.clone() * b[13];
    w1.scaled_add(b[11], a4);
    w1.scaled_add(b[9], a2);
    let mut w2 = a6.dot(&w1);
    w2.scaled_add(b[7], a6);
    w2.scaled_add(b[5], a4);
    w2.scaled_add(b[3], a2);
    w2.scaled_add(b[1], &id);
    let u = a.dot(&w2);

    let mut z1 = a6.clone() * b[12];
    z1.scaled_add(b[10], a4);
    z1.scaled_add(b[8], a2);
    let mut v = a6.dot(&z1);
    v.scaled_add(b[6], a6);
    v.scaled_add(b[4], a4);
    v.scaled_add(b[2], a2);
    v.scaled_add(b[0], &id);

    (u, v)
}

/// Dense matrix exponential.
///
/// Panics if `a` is not square (internal invariant; all callers construct
/// square intensity matrices).
pub fn expm(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return a.clone();
    }

    let nrm = norm_1(a);
    let a2 = a.dot(a);

    if nrm <= THETA_3 {
        let (u, v) = pade_low_order(a, &[eye(n), a2], &B3);
        return pade_solve(&u, &v);
    }
    let a4 = a2.dot(&a2);
    if nrm <= THETA_5 {
        let (u, v) = pade_low_order(a, &[eye(n), a2.clone(), a4], &B5);
        return pade_solve(&u, &v);
    }
    let a6 = a4.dot(&a2);
    if nrm <= THETA_7 {
        let (u, v) = pade_low_order(a, &[eye(n), a2.clone(), a4.clone(), a6], &B7);
        return pade_solve(&u, &v);
    }
    if nrm <= THETA_9 {
        let a8 = a6.dot(&a2);
        let (u, v) = pade_low_order(a, &[eye(n), a2.clone(), a4.clone(), a6, a8], &B9);
        return pade_solve(&u, &v);
    }

    // Scale so that ||A / 2^s|| <= theta_13, apply Pade-13, square back.
    let s = ((nrm / THETA_13).log2().ceil().max(0.0)) as u32;
    let scale = 2f64.powi(-(s as i32));
    let a_s = a * scale;
    let a2_s = &a2 * (scale * scale);
    let a4_s = &a4 * (scale * scale * scale * scale);
    let a6_s = a4_s.dot(&a2_s);
    let (u, v) = pade_13(&a_s, &a2_s, &a4_s, &a6_s);
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// Solves (V - U) X = (V + U), the rational Pade combination.
fn pade_solve(u: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let p = v + u;
    let q = v - u;
    solve(&q, &p)
}

/// Solves A X = B for X via LU with partial pivoting.
///
/// Panics on a numerically singular pivot; the Pade denominator is always
/// well conditioned for scaled inputs.
pub fn solve(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let m = b.ncols();

    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        // Pivot selection.
        let mut pivot = col;
        let mut best = lu[(col, col)].abs();
        for row in (col + 1)..n {
            let v = lu[(row, col)].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        assert!(best > 0.0, "singular matrix in LU solve");
        if pivot != col {
            perm.swap(pivot, col);
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(pivot, j)];
                lu[(pivot, j)] = tmp;
            }
            for j in 0..m {
                let tmp = x[(col, j)];
                x[(col, j)] = x[(pivot, j)];
                x[(pivot, j)] = tmp;
            }
        }
        let inv = 1.0 / lu[(col, col)];
        for row in (col + 1)..n {
            let factor = lu[(row, col)] * inv;
            lu[(row, col)] = factor;
            if factor != 0.0 {
                for j in (col + 1)..n {
                    lu[(row, j)] -= factor * lu[(col, j)];
                }
                for j in 0..m {
                    x[(row, j)] -= factor * x[(col, j)];
                }
            }
        }
    }

    // Back substitution.
    for col in (0..n).rev() {
        let inv = 1.0 / lu[(col, col)];
        for j in 0..m {
            x[(col, j)] *= inv;
        }
        for row in 0..col {
            let factor = lu[(row, col)];
            if factor != 0.0 {
                for j in 0..m {
                    x[(row, j)] -= factor * x[(col, j)];
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn expm_zero_is_identity() {
        let a = Array2::<f64>::zeros((4, 4));
        let e = expm(&a);
        assert_eq!(e, Array2::<f64>::eye(4));
    }

    #[test]
    fn expm_diagonal() {
        let a = Array2::from_diag(&ndarray::arr1(&[-0.3, 0.7, 2.5]));
        let e = expm(&a);
        for (i, &d) in [-0.3f64, 0.7, 2.5].iter().enumerate() {
            assert_abs_diff_eq!(e[(i, i)], d.exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn expm_nilpotent() {
        let a = array![[0.0, 1.0], [0.0, 0.0]];
        let e = expm(&a);
        assert_abs_diff_eq!(e[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[(0, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn expm_large_norm_uses_scaling() {
        // 1x1 sanity at a norm far above theta_13.
        let a = array![[-40.0]];
        let e = expm(&a);
        assert_abs_diff_eq!(e[(0, 0)], (-40.0f64).exp(), epsilon = 1e-22);
    }

    #[test]
    fn solve_round_trip() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let b = array![[1.0], [2.0], [3.0]];
        let x = solve(&a, &b);
        let r = a.dot(&x) - &b;
        for v in r.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }
}
