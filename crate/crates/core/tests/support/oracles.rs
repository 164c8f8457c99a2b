//! Independent oracles for the numerical kernels: exact rational
//! arithmetic, closed-form eigenvalues, numeric integration of densities
//! and direct evaluation of the SVM optimality conditions. Each check
//! panics on the first mismatch. Shared with the acceptance run.

#![allow(dead_code)]

use facetouch::reduce::{fit_pca, symmetric_eigen};
use facetouch::stats::{
    chi_square_sf, correlation_from_r, exact_binomial_two_sided, mcnemar_counts, student_t_two_sided, McNemarMethod,
};
use facetouch::svm::{train_svm, Gamma, SvmModel, SvmParams};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn binom(n: usize, k: usize) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

fn exact_p_rational(k: usize, n: usize) -> f64 {
    let mut tail = BigRational::zero();
    for i in 0..=k {
        tail += BigRational::new(binom(n, i), BigInt::one() << n);
    }
    let p = tail * BigRational::from_integer(BigInt::from(2));
    p.min(BigRational::one()).to_f64().unwrap()
}

pub fn mcnemar_exact_branch_matches_rationals() {
    for n in 0..25usize {
        for b in 0..=n {
            let c = n - b;
            let r = mcnemar_counts(b, c);
            assert_eq!(r.method, McNemarMethod::ExactBinomial);
            let oracle = if n == 0 { 1.0 } else { exact_p_rational(b.min(c), n) };
            assert!((r.p_value - oracle).abs() <= 1e-12, "b={b} c={c}: {} vs {oracle}", r.p_value);
            assert_eq!(r.p_value, mcnemar_counts(c, b).p_value);
            if n > 0 {
                assert!((exact_binomial_two_sided(b.min(c), n) - oracle).abs() <= 1e-12);
            }
        }
    }
    assert_ne!(mcnemar_counts(20, 5).method, McNemarMethod::ExactBinomial);
}

/// Adaptive Simpson quadrature.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Two-sided Student-t tail, normalizing the kernel numerically so no
/// gamma function is involved. Integrates over θ with t = tan θ.
fn t_tail_oracle(t: f64, df: f64) -> f64 {
    let g = move |theta: f64| {
        let x = theta.tan();
        let c = theta.cos();
        (1.0 + x * x / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let half = std::f64::consts::FRAC_PI_2 - 1e-12;
    let total = integrate(&g, -half, half, 1e-13);
    let tail = integrate(&g, t.abs().atan(), half, 1e-13);
    2.0 * tail / total
}

/// Chi-square upper tail with x = u² to remove the singularity at 0.
fn chi2_tail_oracle(x: f64, df: f64) -> f64 {
    let g = move |u: f64| 2.0 * u.powf(df - 1.0) * (-u * u / 2.0).exp();
    // The integrand is smooth after the substitution: composite Simpson.
    let simpson = |from: f64| {
        let (to, n) = (40.0, 400_000);
        let h = (to - from) / n as f64;
        let inner: f64 = (1..n).map(|i| g(from + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        h / 3.0 * (g(from) + inner + g(to))
    };
    simpson(x.sqrt()) / simpson(0.0)
}

pub fn t_tail_matches_numeric_integration() {
    for df in [1.0, 2.0, 5.0, 17.0, 30.0, 58.0] {
        for t in [0.0, 0.5, 1.0, 2.0, 2.9, 3.5, 6.0] {
            let got = student_t_two_sided(t, df);
            let want = t_tail_oracle(t, df);
            assert!((got - want).abs() <= 1e-6, "t={t} df={df}: {got} vs {want}");
        }
    }
}

pub fn chi_square_tail_matches_numeric_integration() {
    for df in [1.0, 2.0, 3.0, 7.0, 12.0] {
        for x in [0.05, 0.5, 1.0, 3.841, 6.63, 10.0, 25.0] {
            let got = chi_square_sf(x, df);
            let want = chi2_tail_oracle(x, df);
            assert!((got - want).abs() <= 1e-6, "x={x} df={df}: {got} vs {want}");
        }
    }
}

pub fn pearson_reference_p_value() {
    let c = correlation_from_r(0.599, 19);
    assert!((c.p_value - 0.0067).abs() <= 0.0005, "p = {}", c.p_value);
    assert!((c.t_statistic - 0.599 * (17.0f64 / (1.0 - 0.599 * 0.599)).sqrt()).abs() < 1e-12);
}

pub fn eigenvalues_of_2x2_match_quadratic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let (a, b, d) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (vals, vecs) = symmetric_eigen(&[vec![a, b], vec![b, d]], 1e-12, 100);
        let mid = (a + d) / 2.0;
        let rad = (((a - d) / 2.0).powi(2) + b * b).sqrt();
        assert!((vals[0] - (mid + rad)).abs() <= 1e-10);
        assert!((vals[1] - (mid - rad)).abs() <= 1e-10);
        let dot = vecs[0][0] * vecs[1][0] + vecs[0][1] * vecs[1][1];
        assert!(dot.abs() < 1e-8);
    }
}

/// Closed-form eigenvalues of a symmetric 3×3 matrix (trigonometric method).
fn eig3_closed_form(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return [q; 3];
    }
    let bm: Vec<Vec<f64>> =
        (0..3).map(|i| (0..3).map(|j| (m[i][j] - if i == j { q } else { 0.0 }) / p).collect()).collect();
    let det = bm[0][0] * (bm[1][1] * bm[2][2] - bm[1][2] * bm[2][1]) - bm[0][1] * (bm[1][0] * bm[2][2] - bm[1][2] * bm[2][0])
        + bm[0][2] * (bm[1][0] * bm[2][1] - bm[1][1] * bm[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

pub fn eigenvalues_of_3x3_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let v = rng.random_range(-3.0..3.0);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        let rows: Vec<Vec<f64>> = m.iter().map(|r| r.to_vec()).collect();
        let (vals, _) = symmetric_eigen(&rows, 1e-12, 100);
        let want = eig3_closed_form(&m);
        for k in 0..3 {
            assert!((vals[k] - want[k]).abs() <= 1e-10, "{vals:?} vs {want:?}");
        }
    }
}

pub fn pca_on_known_spectrum() {
    // Points along two rotated axes with covariance eigenvalues 4, 1, 0.
    let (s, t) = (6.0f64.sqrt(), 1.5f64.sqrt());
    let (c, sn) = (0.3f64.cos(), 0.3f64.sin());
    let rot = |v: [f64; 3]| vec![c * v[0] - sn * v[1], sn * v[0] + c * v[1], v[2]];
    let rows = vec![rot([s, 0.0, 0.0]), rot([-s, 0.0, 0.0]), rot([0.0, t, 0.0]), rot([0.0, -t, 0.0])];
    let pca = fit_pca(&rows).unwrap();
    assert!((pca.eigenvalues[0] - 4.0).abs() < 1e-10);
    assert!((pca.eigenvalues[1] - 1.0).abs() < 1e-10);
    assert!(pca.eigenvalues[2].abs() < 1e-10);
    let r = &pca.explained_variance_ratio;
    assert!((r[0] - 0.8).abs() < 1e-10 && (r[1] - 0.2).abs() < 1e-10 && r[2].abs() < 1e-10);
    assert_eq!(pca.retained_for(0.8), 1);
    assert_eq!(pca.retained_for(0.9), 2);
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

fn decision_oracle(m: &SvmModel, x: &[f64]) -> f64 {
    m.support_vectors.iter().zip(&m.dual_coef).map(|(sv, a)| a * rbf(sv, x, m.gamma)).sum::<f64>() + m.bias
}

fn blobs(n: usize, overlap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label: i8 = if i % 3 == 0 { 1 } else { -1 };
        let centre = if label == 1 { 1.0 } else { -1.0 };
        x.push((0..3).map(|_| centre * (1.0 - overlap) + rng.random_range(-1.5..1.5)).collect());
        y.push(label);
    }
    (x, y)
}

/// Checks the KKT conditions directly from the duals and decision values.
fn assert_kkt(x: &[Vec<f64>], y: &[i8], m: &SvmModel, tol: f64) {
    let mut alpha = vec![0.0; x.len()];
    for (k, &i) in m.support_indices.iter().enumerate() {
        alpha[i] = m.dual_coef[k] * y[i] as f64;
        assert!(alpha[i] > 0.0);
    }
    let sum: f64 = m.dual_coef.iter().sum();
    assert!(sum.abs() <= 1e-6, "sum alpha y = {sum}");
    for i in 0..x.len() {
        let c_i = m.c * if y[i] > 0 { m.class_weights[1] } else { m.class_weights[0] };
        assert!(alpha[i] <= c_i * (1.0 + 1e-12));
        let yf = y[i] as f64 * decision_oracle(m, &x[i]);
        if alpha[i] == 0.0 {
            assert!(yf >= 1.0 - tol, "row {i}: alpha 0, yf {yf}");
        } else if alpha[i] >= c_i * (1.0 - 1e-12) {
            assert!(yf <= 1.0 + tol, "row {i}: alpha at C, yf {yf}");
        } else {
            assert!((yf - 1.0).abs() <= tol, "row {i}: free, yf {yf}");
        }
    }
}

pub fn svm_satisfies_kkt() {
    for (seed, c, gamma) in [(1, 1.0, Gamma::Scale), (2, 10.0, Gamma::Fixed(0.1)), (3, 0.1, Gamma::Scale), (4, 100.0, Gamma::Fixed(0.5))] {
        let (x, y) = blobs(150, 0.5, seed);
        let params = SvmParams { c, gamma, ..Default::default() };
        let m = train_svm(&x, &y, &params).unwrap();
        assert_kkt(&x, &y, &m, 2.0 * params.tol);
        let (pred, dec) = m.predict(&x).unwrap();
        for i in 0..x.len() {
            assert!((dec[i] - decision_oracle(&m, &x[i])).abs() < 1e-9);
            assert_eq!(pred[i], dec[i] >= 0.0);
        }
    }
}

pub fn svm_solves_xor_and_separable_data() {
    let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let y = vec![-1, -1, 1, 1];
    let m = train_svm(&x, &y, &SvmParams { c: 100.0, gamma: Gamma::Fixed(1.0), ..Default::default() }).unwrap();
    assert_eq!(m.predict(&x).unwrap().0, vec![false, false, true, true]);

    let (x, y) = blobs(90, -1.0, 9);
    let m = train_svm(&x, &y, &SvmParams { c: 10.0, ..Default::default() }).unwrap();
    let pred = m.predict(&x).unwrap().0;
    assert!(pred.iter().zip(&y).all(|(p, &l)| *p == (l > 0)));
}
