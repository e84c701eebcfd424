//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the solvers under test.
#![allow(dead_code)]

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Centres `x` and `y` and scales columns of `x` by their standard deviation
/// (divisor `n`).
pub fn standardize(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    let mut scales = Vec::new();
    for mut col in z.column_iter_mut() {
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / n).sqrt();
        col /= sd;
        scales.push(sd);
    }
    let ym = y.sum() / n;
    (z, y.add_scalar(-ym), scales)
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `1/2 |y - Zb|^2 / n + lambda (gamma |b|_1 + (1 - gamma) sum_g |b_g|_2)`.
pub fn sg_objective(z: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, groups: &[Range<usize>], lambda: f64, gamma: f64) -> f64 {
    let n = z.nrows() as f64;
    let r = y - z * b;
    let l1 = b.iter().map(|v| v.abs()).sum::<f64>();
    let l2: f64 = groups.iter().map(|g| b.rows(g.start, g.len()).norm()).sum();
    0.5 * r.norm_squared() / n + lambda * (gamma * l1 + (1.0 - gamma) * l2)
}

/// Plain LASSO by cyclic coordinate descent on standardised columns.
pub fn lasso_cd(z: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = z.nrows() as f64;
    let p = z.ncols();
    let norms: Vec<f64> = (0..p).map(|j| z.column(j).norm_squared() / n).collect();
    let mut b = DVector::zeros(p);
    let mut r = y.clone();
    for _ in 0..100_000 {
        let mut max_step = 0.0f64;
        for j in 0..p {
            let old = b[j];
            let rho = z.column(j).dot(&r) / n + norms[j] * old;
            let new = soft(rho, lambda) / norms[j];
            if new != old {
                r.axpy(old - new, &z.column(j), 1.0);
                b[j] = new;
                max_step = max_step.max((new - old).abs());
            }
        }
        if max_step < 1e-13 {
            break;
        }
    }
    b
}

/// Group LASSO by FISTA with a global step `1 / lambda_max(Z'Z / n)`.
pub fn group_lasso_fista(z: &DMatrix<f64>, y: &DVector<f64>, groups: &[Range<usize>], lambda: f64) -> DVector<f64> {
    let n = z.nrows() as f64;
    let p = z.ncols();
    let gram = z.transpose() * z / n;
    let lip = gram.clone().symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let zty = z.transpose() * y / n;
    let prox = |v: DVector<f64>| {
        let mut out = v.clone();
        for g in groups {
            let norm = v.rows(g.start, g.len()).norm();
            let f = if norm > 0.0 { (1.0 - step * lambda / norm).max(0.0) } else { 0.0 };
            out.rows_mut(g.start, g.len()).scale_mut(f);
        }
        out
    };
    let obj = |b: &DVector<f64>| sg_objective(z, y, b, groups, lambda, 0.0);
    let mut b = DVector::zeros(p);
    let mut m = b.clone();
    let mut t: f64 = 1.0;
    let mut last = obj(&b);
    for _ in 0..200_000 {
        let grad = &gram * &m - &zty;
        let next = prox(&m - grad * step);
        let val = obj(&next);
        if val > last {
            m = b.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let diff = (&next - &b).amax();
        m = &next + (&next - &b) * ((t - 1.0) / t_next);
        b = next;
        t = t_next;
        last = val;
        if diff < 1e-14 {
            break;
        }
    }
    b
}

/// Least squares with an intercept via the normal equations. Returns
/// `(intercept, slopes)`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let a = x.clone().insert_column(0, 1.0);
    let coef = (a.transpose() * &a).lu().solve(&(a.transpose() * y)).expect("nonsingular normal equations");
    (coef[0], coef.rows(1, x.ncols()).into_owned())
}

/// Least squares with unit dummies (no common intercept). Rows are stacked by
/// unit, `periods` rows each. Returns `(unit intercepts, slopes)`.
pub fn least_squares_dummies(x: &DMatrix<f64>, y: &DVector<f64>, units: usize, periods: usize) -> (Vec<f64>, DVector<f64>) {
    let p = x.ncols();
    let a = DMatrix::from_fn(x.nrows(), units + p, |r, c| if c < units { f64::from(u8::from(r / periods == c)) } else { x[(r, c - units)] });
    let coef = (a.transpose() * &a).lu().solve(&(a.transpose() * y)).expect("nonsingular normal equations");
    (coef.rows(0, units).iter().copied().collect(), coef.rows(units, p).into_owned())
}

/// Weighted logistic MLE by Newton's method. `x` already contains any
/// constant column.
pub fn newton_logistic(x: &DMatrix<f64>, y: &[i8], w: &[f64]) -> DVector<f64> {
    let (n, p) = x.shape();
    let mut theta = DVector::zeros(p);
    for _ in 0..100 {
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let xi = x.row(i).transpose();
            let yi = f64::from(y[i]);
            let z = yi * xi.dot(&theta);
            let s = 1.0 / (1.0 + z.exp());
            grad -= &xi * (w[i] * yi * s / n as f64);
            hess += &xi * xi.transpose() * (w[i] * s * (1.0 - s) / n as f64);
        }
        let step = hess.lu().solve(&grad).expect("nonsingular Hessian");
        theta -= &step;
        if step.amax() < 1e-14 {
            break;
        }
    }
    theta
}

/// Weighted logistic loss `(1/n) sum w log(1 + exp(-y x'theta))`.
pub fn logistic_loss(x: &DMatrix<f64>, y: &[i8], w: &[f64], theta: &DVector<f64>) -> f64 {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let z = f64::from(y[i]) * x.row(i).transpose().dot(theta);
            w[i] * (1.0 + (-z).exp()).ln()
        })
        .sum::<f64>()
        / n as f64
}

/// Gap cross-validation training set written as a set comprehension over the
/// three cases.
pub fn brute_gap(t_len: usize, t: usize, l: usize) -> Vec<usize> {
    (1..=t_len)
        .filter(|&s| {
            if t <= l + 1 {
                s >= t + l + 1
            } else if t + l >= t_len {
                s + l + 1 <= t_len
            } else {
                s + l + 1 <= t || s >= t + l + 1
            }
        })
        .collect()
}

/// Long-run variance `Gamma_0 + sum_{k>0} w_k (Gamma_k + Gamma_k')` with
/// explicit loops.
pub fn naive_lrv(s: &DMatrix<f64>, weight: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let (t_len, g) = s.shape();
    let mut out = DMatrix::zeros(g, g);
    for k in 0..t_len {
        let w = weight(k);
        if w == 0.0 {
            continue;
        }
        let mut gamma = DMatrix::zeros(g, g);
        for t in 0..t_len - k {
            for a in 0..g {
                for b in 0..g {
                    gamma[(a, b)] += s[(t, a)] * s[(t + k, b)];
                }
            }
        }
        gamma /= t_len as f64;
        if k == 0 {
            out += gamma;
        } else {
            out += (&gamma + gamma.transpose()) * w;
        }
    }
    out
}
