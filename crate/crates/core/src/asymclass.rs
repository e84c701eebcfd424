//! Cost-sensitive binary classification.
//!
//! A loss quartet `l_{f,y}(x)` (decision `f`, outcome `y`, both in `{-1, 1}`)
//! is turned into per-observation weights `omega = y a(x) + b(x)` that
//! multiply the logistic likelihood terms of an L1-penalised logistic
//! regression. Classification uses the sign rule `x'theta >= 0 -> 1`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::sym_eigenvalues_desc;

/// A covariate-driven loss function.
pub type LossFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The four losses `l_{f,y}`.
#[derive(Clone)]
pub struct LossQuartet {
    /// `l_{1,1}`: predicted 1, outcome 1.
    pub true_positive: LossFn,
    /// `l_{1,-1}`: predicted 1, outcome -1.
    pub false_positive: LossFn,
    /// `l_{-1,1}`: predicted -1, outcome 1.
    pub false_negative: LossFn,
    /// `l_{-1,-1}`: predicted -1, outcome -1.
    pub true_negative: LossFn,
}

impl fmt::Debug for LossQuartet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LossQuartet { .. }")
    }
}

/// Value of a template component: a constant or a covariate column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Constant(f64),
    Column(usize),
}

impl Component {
    fn eval(self, x: &[f64]) -> f64 {
        match self {
            Component::Constant(c) => c,
            Component::Column(j) => x.get(j).copied().unwrap_or(f64::NAN),
        }
    }
}

/// Pre-trial detention template. Decision 1 is detain, outcome 1 is
/// recidivism. Losses:
///
/// | decision \ outcome | recidivist        | non-recidivist |
/// |--------------------|-------------------|----------------|
/// | detained           | `EBD + ECD`       | `psi * ECD`    |
/// | released           | `psi * C`         | `0`            |
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetentionTemplate {
    /// Economic benefit of detention, `EBD(c)`.
    pub benefit: Component,
    /// Economic cost of detention, `ECD(d)`.
    pub detention_cost: Component,
    /// Cost of recidivism after release, `C(z, c)`.
    pub recidivism_cost: Component,
    /// Group weight `psi_G`.
    pub group_weight: Component,
}

impl LossQuartet {
    pub fn new(true_positive: LossFn, false_positive: LossFn, false_negative: LossFn, true_negative: LossFn) -> Self {
        Self { true_positive, false_positive, false_negative, true_negative }
    }

    /// Quartet of constant losses.
    pub fn constant(true_positive: f64, false_positive: f64, false_negative: f64, true_negative: f64) -> Self {
        let c = |v: f64| -> LossFn { Arc::new(move |_: &[f64]| v) };
        Self::new(c(true_positive), c(false_positive), c(false_negative), c(true_negative))
    }

    /// Misclassification loss `1{f != y}`.
    pub fn symmetric() -> Self {
        Self::constant(0.0, 1.0, 1.0, 0.0)
    }

    pub fn detention(t: DetentionTemplate) -> Self {
        Self::new(
            Arc::new(move |x: &[f64]| t.benefit.eval(x) + t.detention_cost.eval(x)),
            Arc::new(move |x: &[f64]| t.group_weight.eval(x) * t.detention_cost.eval(x)),
            Arc::new(move |x: &[f64]| t.group_weight.eval(x) * t.recidivism_cost.eval(x)),
            Arc::new(|_: &[f64]| 0.0),
        )
    }

    /// Multiplies every loss by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |f: &LossFn| -> LossFn {
            let f = f.clone();
            Arc::new(move |x: &[f64]| c * f(x))
        };
        Self::new(s(&self.true_positive), s(&self.false_positive), s(&self.false_negative), s(&self.true_negative))
    }

    /// `(a(x), b(x))`.
    pub fn coefficients(&self, x: &[f64]) -> Result<(f64, f64)> {
        let l11 = (self.true_positive)(x);
        let l1m = (self.false_positive)(x);
        let lm1 = (self.false_negative)(x);
        let lmm = (self.true_negative)(x);
        for (name, v) in [("l_{1,1}", l11), ("l_{1,-1}", l1m), ("l_{-1,1}", lm1), ("l_{-1,-1}", lmm)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidQuartet(format!("{name} = {v} is not a finite non-negative loss")));
            }
        }
        Ok((lm1 - l11 + lmm - l1m, lm1 - l11 + l1m - lmm))
    }
}

/// Likelihood weight `omega(y, x) = y a(x) + b(x)`.
pub fn quartet_weights(quartet: &LossQuartet, x: &[f64], y: i8) -> Result<f64> {
    check_label(y)?;
    let (a, b) = quartet.coefficients(x)?;
    let w = f64::from(y) * a + b;
    if w < 0.0 {
        return Err(Error::InvalidQuartet(format!("negative weight {w} for label {y}")));
    }
    Ok(w)
}

/// Weights for every row of `x`.
pub fn observation_weights(quartet: &LossQuartet, x: &DMatrix<f64>, y: &[i8]) -> Result<Vec<f64>> {
    if x.nrows() != y.len() {
        return invalid(format!("{} rows but {} labels", x.nrows(), y.len()));
    }
    (0..x.nrows())
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            quartet_weights(quartet, &row, y[i])
        })
        .collect()
}

fn check_label(y: i8) -> Result<()> {
    if y == 1 || y == -1 {
        Ok(())
    } else {
        invalid(format!("label must be -1 or 1, got {y}"))
    }
}

/// Parses a label; `0` maps to `-1`.
pub fn parse_label(s: &str) -> Result<i8> {
    match s.trim() {
        "1" | "1.0" | "+1" => Ok(1),
        "-1" | "-1.0" | "0" | "0.0" => Ok(-1),
        other => Err(Error::Parse(format!("label `{other}` is not one of -1, 0, 1"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticOptions {
    /// Prepend a constant column; its coefficient is `coefficients[0]`.
    pub intercept: bool,
    pub penalize_intercept: bool,
    pub max_iterations: usize,
    /// Stop when the scaled prox-gradient step is below this.
    pub tolerance: f64,
    /// Coefficient norm beyond which the fit is declared diverging.
    pub norm_cap: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { intercept: true, penalize_intercept: false, max_iterations: 200_000, tolerance: 1e-10, norm_cap: 1e6 }
    }
}

/// The weighted, L1-penalised logistic objective over a fixed design.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    /// Design including the constant column when an intercept is used.
    pub design: DMatrix<f64>,
    pub labels: Vec<i8>,
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub penalized: Vec<bool>,
}

fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn sigmoid_neg(z: f64) -> f64 {
    // 1 / (1 + e^z)
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

impl LogisticProblem {
    pub fn new(x: &DMatrix<f64>, labels: &[i8], weights: &[f64], lambda: f64, options: &LogisticOptions) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return invalid("need at least one observation");
        }
        if labels.len() != n || weights.len() != n {
            return invalid(format!("{n} rows, {} labels, {} weights", labels.len(), weights.len()));
        }
        labels.iter().try_for_each(|&y| check_label(y))?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return invalid(format!("weights must be finite and non-negative, got {w}"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("lambda must be finite and non-negative, got {lambda}"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return invalid("design has non-finite entries");
        }
        let design = if options.intercept { x.clone().insert_column(0, 1.0) } else { x.clone() };
        let mut penalized = vec![true; design.ncols()];
        if options.intercept && !options.penalize_intercept {
            penalized[0] = false;
        }
        Ok(Self { design, labels: labels.to_vec(), weights: weights.to_vec(), lambda, penalized })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    fn margins(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut m = &self.design * theta;
        for (i, v) in m.iter_mut().enumerate() {
            *v *= f64::from(self.labels[i]);
        }
        m
    }

    /// Weighted negative log-likelihood `(1/n) sum omega_i log(1 + e^{-y_i x_i'theta})`.
    pub fn smooth_loss(&self, theta: &DVector<f64>) -> f64 {
        let m = self.margins(theta);
        m.iter().zip(&self.weights).map(|(z, w)| w * log1p_exp_neg(*z)).sum::<f64>() / self.n() as f64
    }

    pub fn smooth_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let m = self.margins(theta);
        let n = self.n() as f64;
        let r = DVector::from_fn(self.n(), |i, _| -self.weights[i] * f64::from(self.labels[i]) * sigmoid_neg(m[i]) / n);
        self.design.transpose() * r
    }

    pub fn penalty(&self, theta: &DVector<f64>) -> f64 {
        self.lambda * theta.iter().zip(&self.penalized).filter(|(_, p)| **p).map(|(t, _)| t.abs()).sum::<f64>()
    }

    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        self.smooth_loss(theta) + self.penalty(theta)
    }

    fn separates(&self, theta: &DVector<f64>) -> bool {
        let m = self.margins(theta);
        self.weights.iter().any(|w| *w > 0.0)
            && m.iter().zip(&self.weights).filter(|(_, w)| **w > 0.0).all(|(z, _)| *z > 0.0)
    }

    fn lipschitz(&self) -> f64 {
        let n = self.n() as f64;
        let mut xw = self.design.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= self.weights[i].sqrt();
        }
        let gram = xw.transpose() * xw;
        let top = sym_eigenvalues_desc(&gram).first().copied().unwrap_or(0.0);
        (top / (4.0 * n)).max(1e-12)
    }

    fn prox(&self, v: &DVector<f64>, step: f64) -> DVector<f64> {
        let t = step * self.lambda;
        DVector::from_fn(v.len(), |j, _| {
            if self.penalized[j] {
                v[j].signum() * (v[j].abs() - t).max(0.0)
            } else {
                v[j]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLogisticFit {
    /// Leading entry is the intercept when `intercept` is set.
    pub coefficients: DVector<f64>,
    pub intercept: bool,
    pub lambda: f64,
    pub converged: bool,
    /// Coefficient norm hit the cap (separable data without enough penalty).
    pub diverging: bool,
    pub objective_value: f64,
    pub iterations: usize,
}

impl WeightedLogisticFit {
    /// `x'theta` for a covariate record without the constant.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        let (offset, slopes) = if self.intercept {
            (self.coefficients[0], self.coefficients.rows(1, self.coefficients.len() - 1))
        } else {
            (0.0, self.coefficients.rows(0, self.coefficients.len()))
        };
        offset + slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn slopes(&self) -> &[f64] {
        let s = self.coefficients.as_slice();
        if self.intercept {
            &s[1..]
        } else {
            s
        }
    }
}

/// Minimises the weighted logistic objective with `lambda |theta|_1` on the
/// penalised coordinates by accelerated proximal gradient with restarts.
pub fn fit_weighted_logistic(
    x: &DMatrix<f64>,
    y: &[i8],
    weights: &[f64],
    lambda: f64,
    options: &LogisticOptions,
) -> Result<WeightedLogisticFit> {
    let problem = LogisticProblem::new(x, y, weights, lambda, options)?;
    Ok(solve(&problem, options))
}

/// Solves a prepared problem.
pub fn solve(problem: &LogisticProblem, options: &LogisticOptions) -> WeightedLogisticFit {
    let p = problem.design.ncols();
    let step = 1.0 / problem.lipschitz();
    let mut theta = DVector::zeros(p);
    let mut momentum = theta.clone();
    let mut t_k: f64 = 1.0;
    let mut obj = problem.objective(&theta);
    let mut converged = false;
    let mut diverging = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let grad = problem.smooth_gradient(&momentum);
        let next = problem.prox(&(&momentum - grad * step), step);
        let next_obj = problem.objective(&next);
        if next_obj > obj {
            // restart from the last iterate with a plain proximal step
            t_k = 1.0;
            momentum = theta.clone();
            let grad = problem.smooth_gradient(&theta);
            let plain = problem.prox(&(&theta - grad * step), step);
            let plain_obj = problem.objective(&plain);
            let moved = (&plain - &theta).amax();
            theta = plain;
            momentum.copy_from(&theta);
            obj = plain_obj;
            if moved / step <= options.tolerance {
                converged = true;
                break;
            }
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
        let change = (&next - &momentum).amax() / step;
        let delta = &next - &theta;
        momentum = &next + delta * ((t_k - 1.0) / t_next);
        t_k = t_next;
        theta = next;
        obj = next_obj;
        if theta.norm() > options.norm_cap {
            diverging = true;
            log::warn!("logistic coefficients exceed norm cap {}; data may be separable", options.norm_cap);
            break;
        }
        if change <= options.tolerance {
            converged = true;
            break;
        }
    }
    if !diverging && problem.lambda == 0.0 && problem.separates(&theta) {
        // every weighted observation is on the correct side: the loss keeps
        // decreasing along theta, so no finite minimiser exists
        log::warn!("data are separated by the fitted coefficients; the unpenalised fit diverges");
        diverging = true;
        converged = false;
    }
    if !converged && !diverging {
        log::warn!("weighted logistic fit did not converge in {iterations} iterations");
    }
    WeightedLogisticFit {
        objective_value: problem.objective(&theta),
        coefficients: theta,
        intercept: options.intercept,
        lambda: problem.lambda,
        converged,
        diverging,
        iterations,
    }
}

/// Sign rule with the boundary mapped to `1`.
pub fn classify(fit: &WeightedLogisticFit, x: &[f64]) -> i8 {
    if fit.decision_value(x) >= 0.0 {
        1
    } else {
        -1
    }
}

/// Labelled classification data read from CSV.
#[derive(Debug, Clone)]
pub struct ClassificationData {
    pub feature_names: Vec<String>,
    pub features: DMatrix<f64>,
    pub labels: Vec<i8>,
}

/// Reads a headed CSV whose `label_column` holds `-1/1` or `0/1` labels and
/// whose other columns are numeric features.
pub fn read_classification_csv(path: &Path, label_column: &str) -> Result<ClassificationData> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Parse(format!("{}: no `{label_column}` column", path.display())))?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|(i, _)| *i != label_idx).map(|(_, h)| h.trim().to_string()).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                labels.push(parse_label(field)?);
            } else {
                values.push(field.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("{}: row {}: `{field}` is not a number", path.display(), line + 2))
                })?);
            }
        }
    }
    let features = DMatrix::from_row_slice(labels.len(), feature_names.len(), &values);
    Ok(ClassificationData { feature_names, features, labels })
}
