//! Sparse-group LASSO for time-series and panel regressions.
//!
//! The estimator minimises
//!
//! ```text
//! 1/2 ||y - a - X b||_T^2 + lambda * Omega(b),
//! Omega(b) = gamma |b|_1 + (1 - gamma) sum_g |b_g|_2,
//! ```
//!
//! where `||u||_T^2 = |u|_2^2 / T` and the intercept `a` (one per unit for
//! fixed effects) is unpenalised. `gamma = 1` is the LASSO and `gamma = 0` the
//! group LASSO. Without the factor 1/2 the same minimiser is obtained with
//! `2 * lambda`; the panel objective `||.||_NT^2 + 2 lambda Omega(b)` uses the
//! same `lambda` as here.
//!
//! Columns are centred and, by default, scaled to unit standard deviation
//! (divisor `T`) before fitting, so one `lambda` is comparable across columns.
//! The penalty acts on the standardised coefficients; reported coefficients
//! are on the original scale. Zero-variance columns are dropped with a warning
//! and reported as zero.
//!
//! The solver is proximal block coordinate descent: each group takes
//! proximal-gradient steps with step `1 / L_g`, `L_g` the largest eigenvalue
//! of the group's Gram block, using the exact blended proximal map.

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::lagpoly::{GroupKind, GroupMap, GroupedDesign};
use crate::linalg::sym_eigenvalues_desc;

/// Penalty level `lambda >= 0` and blend `gamma` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub gamma: f64,
}

impl PenaltySpec {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("lambda must be finite and non-negative, got {lambda}"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return invalid(format!("gamma must lie in [0, 1], got {gamma}"));
        }
        Ok(Self { lambda, gamma })
    }
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `Omega(b)` for the given grouping.
pub fn sg_penalty(b: &[f64], groups: &GroupMap, gamma: f64) -> f64 {
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    let l21: f64 = groups
        .groups()
        .iter()
        .map(|g| b[g.columns.clone()].iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    gamma * l1 + (1.0 - gamma) * l21
}

/// In-place blended shrinkage of one group: soft-threshold every coordinate
/// at `l1`, then scale the group by `(1 - l2 / |.|_2)_+`.
fn shrink_group(v: &mut [f64], l1: f64, l2: f64) {
    for x in v.iter_mut() {
        *x = soft_threshold(*x, l1);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if norm > l2 { 1.0 - l2 / norm } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= scale);
}

/// Proximal map of `step * lambda * Omega`:
/// `argmin_u 1/2 |u - v|^2 + step * lambda * Omega(u)`.
pub fn sg_lasso_prox(v: &[f64], step: f64, penalty: PenaltySpec, groups: &GroupMap) -> Vec<f64> {
    let mut out = v.to_vec();
    let l1 = step * penalty.gamma * penalty.lambda;
    let l2 = step * (1.0 - penalty.gamma) * penalty.lambda;
    if l1 == 0.0 && l2 == 0.0 {
        return out;
    }
    for g in groups.groups() {
        shrink_group(&mut out[g.columns.clone()], l1, l2);
    }
    out
}

/// Solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Cap on full passes over the groups.
    pub max_passes: usize,
    /// Relative objective change below which a pass counts as converged.
    pub tolerance: f64,
    /// Largest standardised coefficient change allowed in a converged pass.
    pub coefficient_tolerance: f64,
    /// Scale columns to unit standard deviation before fitting.
    pub standardize: bool,
    /// Penalise the autoregressive group; when false it is fitted freely.
    pub penalize_autoregressive: bool,
    /// Keep the objective value after every pass.
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_passes: 10_000,
            tolerance: 1e-8,
            coefficient_tolerance: 1e-10,
            standardize: true,
            penalize_autoregressive: true,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    NotConverged { passes: usize },
    DroppedConstantColumn { column: usize },
}

impl fmt::Display for FitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitWarning::NotConverged { passes } => write!(f, "no convergence after {passes} passes"),
            FitWarning::DroppedConstantColumn { column } => {
                write!(f, "column {column} has zero variance and was dropped")
            }
        }
    }
}

/// Balanced panel layout: rows are stacked unit by unit, `periods` rows each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelShape {
    pub units: usize,
    pub periods: usize,
}

/// The fixed-effects indicator `B = I_N (x) iota_T`.
pub fn fixed_effects_indicator(shape: PanelShape) -> DMatrix<f64> {
    DMatrix::from_fn(shape.units * shape.periods, shape.units, |r, i| {
        if r / shape.periods == i {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Centering {
    Global,
    PerUnit(PanelShape),
}

/// Result of a sparse-group LASSO fit.
#[derive(Debug, Clone)]
pub struct SgLassoFit {
    /// Slopes on the original column scale.
    pub coefficients: DVector<f64>,
    /// One intercept, or one per unit for fixed effects.
    pub intercepts: Vec<f64>,
    pub penalty: PenaltySpec,
    /// Objective at the solution, evaluated on the standardised problem.
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: DVector<f64>,
    /// Divisor applied to each column before fitting; zero for dropped ones.
    pub column_scales: Vec<f64>,
    pub warnings: Vec<FitWarning>,
    /// Objective after each pass when tracing was requested.
    pub objective_trace: Vec<f64>,
    /// Rows per unit for fixed effects; `None` for a single intercept.
    pub periods_per_unit: Option<usize>,
}

impl SgLassoFit {
    /// Intercept applying to design row `row`.
    pub fn intercept_for_row(&self, row: usize) -> f64 {
        match self.periods_per_unit {
            Some(t) => self.intercepts[row / t],
            None => self.intercepts[0],
        }
    }

    /// Prediction `a + x' b` using the pooled (or first) intercept.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercepts[0] + x.iter().zip(self.coefficients.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn fitted_values(&self, matrix: &DMatrix<f64>) -> DVector<f64> {
        let mut f = matrix * &self.coefficients;
        for (r, v) in f.iter_mut().enumerate() {
            *v += self.intercept_for_row(r);
        }
        f
    }

    /// Coefficients on the standardised scale the penalty acts on.
    pub fn standardized_coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.coefficients.len(),
            self.coefficients.iter().zip(&self.column_scales).map(|(b, s)| b * s),
        )
    }
}

/// Subgradient-optimality diagnostics on the standardised problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest stationarity residual over nonzero coordinates.
    pub active_violation: f64,
    /// Largest `|z_j' u / T| - gamma lambda` excess over zero coordinates of
    /// active groups.
    pub inactive_coordinate_violation: f64,
    /// Largest `|soft(Z_g' u / T, gamma lambda)|_2 - (1 - gamma) lambda` excess
    /// over zero groups.
    pub zero_group_violation: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.active_violation.max(self.inactive_coordinate_violation).max(self.zero_group_violation)
    }
}

#[derive(Debug, Clone)]
struct Block {
    /// Range in the kept-column index space.
    cols: Range<usize>,
    penalized: bool,
    lipschitz: f64,
}

/// A design prepared for repeated fits: centred, scaled and with the
/// per-group step sizes computed once. Fits along a `lambda` path reuse it
/// and may warm-start from the previous solution.
#[derive(Debug, Clone)]
pub struct SgLassoSolver {
    z: DMatrix<f64>,
    y: DVector<f64>,
    raw: DMatrix<f64>,
    raw_y: DVector<f64>,
    kept: Vec<usize>,
    scales: Vec<f64>,
    blocks: Vec<Block>,
    centering: Centering,
    options: SolverOptions,
    warnings: Vec<FitWarning>,
    p: usize,
}

fn block_gradient(z: &DMatrix<f64>, r: &DVector<f64>, cols: &Range<usize>, n: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(cols.clone().map(|j| z.column(j).dot(r) / n));
}

impl SgLassoSolver {
    /// Time-series (or pooled) problem with one intercept.
    pub fn new(design: &GroupedDesign, options: &SolverOptions) -> Result<Self> {
        Self::build(design, Centering::Global, options)
    }

    /// Fixed-effects problem: one intercept per unit.
    pub fn new_fixed_effects(design: &GroupedDesign, shape: PanelShape, options: &SolverOptions) -> Result<Self> {
        check_shape(design, shape)?;
        Self::build(design, Centering::PerUnit(shape), options)
    }

    fn build(design: &GroupedDesign, centering: Centering, options: &SolverOptions) -> Result<Self> {
        let (n, p) = (design.rows(), design.cols());
        if n < 2 {
            return invalid(format!("need at least 2 rows, got {n}"));
        }
        if design.matrix.iter().chain(design.response.iter()).any(|v| !v.is_finite()) {
            return invalid("design or response contains non-finite values");
        }
        let (xc, yc) = center(&design.matrix, &design.response, centering);
        let nf = n as f64;
        let mut kept = Vec::with_capacity(p);
        let mut scales = vec![0.0; p];
        let mut warnings = Vec::new();
        for j in 0..p {
            let ss = xc.column(j).norm_squared() / nf;
            let sd = ss.sqrt();
            let mean_mag = design.matrix.column(j).amax();
            if sd <= 1e-12 * mean_mag.max(1.0) {
                log::warn!("column {j} has zero variance; dropped");
                warnings.push(FitWarning::DroppedConstantColumn { column: j });
                continue;
            }
            scales[j] = if options.standardize { sd } else { 1.0 };
            kept.push(j);
        }
        let mut z = DMatrix::zeros(n, kept.len());
        for (k, &j) in kept.iter().enumerate() {
            z.set_column(k, &(xc.column(j) / scales[j]));
        }
        let mut blocks = Vec::new();
        for g in design.groups.groups() {
            let start = kept.partition_point(|&j| j < g.columns.start);
            let end = kept.partition_point(|&j| j < g.columns.end);
            if start == end {
                continue;
            }
            let zg = z.columns(start, end - start);
            let gram = zg.transpose() * zg / nf;
            let lipschitz = sym_eigenvalues_desc(&gram)[0];
            let penalized = !(g.kind == GroupKind::Autoregressive && !options.penalize_autoregressive);
            blocks.push(Block { cols: start..end, penalized, lipschitz });
        }
        Ok(Self {
            z,
            y: yc,
            raw: design.matrix.clone(),
            raw_y: design.response.clone(),
            kept,
            scales,
            blocks,
            centering,
            options: options.clone(),
            warnings,
            p,
        })
    }

    fn n(&self) -> f64 {
        self.z.nrows() as f64
    }

    fn penalty_std(&self, b: &DVector<f64>, pen: PenaltySpec) -> f64 {
        let mut total = 0.0;
        for blk in self.blocks.iter().filter(|b| b.penalized) {
            let v = b.rows(blk.cols.start, blk.cols.len());
            total += pen.gamma * v.lp_norm(1) + (1.0 - pen.gamma) * v.norm();
        }
        pen.lambda * total
    }

    fn objective(&self, r: &DVector<f64>, b: &DVector<f64>, pen: PenaltySpec) -> f64 {
        0.5 * r.norm_squared() / self.n() + self.penalty_std(b, pen)
    }

    /// Residual of the centred response after least squares on the
    /// unpenalised blocks.
    fn unpenalized_residual(&self) -> DVector<f64> {
        let cols: Vec<usize> =
            self.blocks.iter().filter(|b| !b.penalized).flat_map(|b| b.cols.clone()).collect();
        if cols.is_empty() {
            return self.y.clone();
        }
        let zu = self.z.select_columns(&cols);
        let gram = zu.transpose() * &zu;
        let rhs = zu.transpose() * &self.y;
        let coef = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .unwrap_or_else(|| gram.pseudo_inverse(1e-12).expect("pseudo-inverse of a Gram matrix") * &rhs);
        &self.y - zu * coef
    }

    /// Smallest `lambda` at which every penalised coefficient is zero.
    pub fn lambda_max(&self, gamma: f64) -> f64 {
        let r = self.unpenalized_residual();
        let mut v = Vec::new();
        let mut best = 0.0f64;
        for blk in self.blocks.iter().filter(|b| b.penalized) {
            block_gradient(&self.z, &r, &blk.cols, self.n(), &mut v);
            best = best.max(group_zero_threshold(&v, gamma));
        }
        best
    }

    /// Fits at `penalty`, optionally warm-starting from original-scale
    /// coefficients.
    pub fn fit(&self, penalty: PenaltySpec, warm: Option<&DVector<f64>>) -> SgLassoFit {
        let q = self.kept.len();
        let mut b = DVector::zeros(q);
        if let Some(w) = warm {
            for (k, &j) in self.kept.iter().enumerate() {
                b[k] = w[j] * self.scales[j];
            }
        }
        let mut r = &self.y - &self.z * &b;
        let n = self.n();
        let opts = &self.options;
        let mut prev = self.objective(&r, &b, penalty);
        let mut trace = Vec::new();
        if opts.record_trace {
            trace.push(prev);
        }
        let mut converged = false;
        let mut passes = 0;
        let mut grad = Vec::new();
        let mut cand = Vec::new();
        while passes < opts.max_passes {
            passes += 1;
            let mut max_change = 0.0f64;
            for blk in &self.blocks {
                let (l1, l2) = if blk.penalized {
                    (penalty.gamma * penalty.lambda, (1.0 - penalty.gamma) * penalty.lambda)
                } else {
                    (0.0, 0.0)
                };
                let lip = blk.lipschitz;
                let inner_cap = if blk.cols.len() == 1 { 1 } else { 200 };
                for _ in 0..inner_cap {
                    block_gradient(&self.z, &r, &blk.cols, n, &mut grad);
                    // gradient-scale point L b_g + Z_g' r / T
                    cand.clear();
                    cand.extend(blk.cols.clone().zip(&grad).map(|(j, g)| lip * b[j] + g));
                    shrink_group(&mut cand, l1, l2);
                    let mut step_change = 0.0f64;
                    for (k, j) in blk.cols.clone().enumerate() {
                        let new = cand[k] / lip;
                        let d = new - b[j];
                        if d != 0.0 {
                            r.axpy(-d, &self.z.column(j), 1.0);
                            b[j] = new;
                            step_change = step_change.max(d.abs());
                        }
                    }
                    max_change = max_change.max(step_change);
                    if step_change <= 0.1 * opts.coefficient_tolerance {
                        break;
                    }
                }
            }
            let obj = self.objective(&r, &b, penalty);
            if opts.record_trace {
                trace.push(obj);
            }
            let rel = (prev - obj).abs() / prev.abs().max(f64::MIN_POSITIVE);
            prev = obj;
            if max_change == 0.0 || (rel < opts.tolerance && max_change < opts.coefficient_tolerance) {
                converged = true;
                break;
            }
        }
        let mut warnings = self.warnings.clone();
        if !converged {
            log::warn!("sg-LASSO did not converge after {passes} passes");
            warnings.push(FitWarning::NotConverged { passes });
        }
        self.finish(b, penalty, prev, passes, converged, warnings, trace)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        b_std: DVector<f64>,
        penalty: PenaltySpec,
        objective_value: f64,
        iterations: usize,
        converged: bool,
        warnings: Vec<FitWarning>,
        objective_trace: Vec<f64>,
    ) -> SgLassoFit {
        let mut coefficients = DVector::zeros(self.p);
        for (k, &j) in self.kept.iter().enumerate() {
            coefficients[j] = b_std[k] / self.scales[j];
        }
        let xb = &self.raw * &coefficients;
        let gap = &self.raw_y - &xb;
        let (intercepts, periods_per_unit) = match self.centering {
            Centering::Global => (vec![gap.mean()], None),
            Centering::PerUnit(s) => (
                (0..s.units).map(|i| gap.rows(i * s.periods, s.periods).mean()).collect(),
                Some(s.periods),
            ),
        };
        let mut residuals = gap;
        for (row, v) in residuals.iter_mut().enumerate() {
            *v -= match periods_per_unit {
                Some(t) => intercepts[row / t],
                None => intercepts[0],
            };
        }
        SgLassoFit {
            coefficients,
            intercepts,
            penalty,
            objective_value,
            iterations,
            converged,
            residuals,
            column_scales: self.scales.clone(),
            warnings,
            objective_trace,
            periods_per_unit,
        }
    }

    /// Fits a decreasing sequence of penalties, each warm-started from the
    /// previous solution.
    pub fn fit_path(&self, penalties: &[PenaltySpec]) -> Vec<SgLassoFit> {
        let mut out: Vec<SgLassoFit> = Vec::with_capacity(penalties.len());
        for &pen in penalties {
            let warm = out.last().map(|f| f.coefficients.clone());
            out.push(self.fit(pen, warm.as_ref()));
        }
        out
    }

    /// Objective `1/2 |y - a - Xb|_T^2 + lambda Omega(b_std)` at an
    /// original-scale coefficient vector.
    pub fn objective_at(&self, coefficients: &DVector<f64>, penalty: PenaltySpec) -> f64 {
        let b = self.to_std(coefficients);
        let r = &self.y - &self.z * &b;
        self.objective(&r, &b, penalty)
    }

    fn to_std(&self, coefficients: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.kept.len(), self.kept.iter().map(|&j| coefficients[j] * self.scales[j]))
    }

    /// Checks the subgradient optimality conditions of `fit` on the
    /// standardised problem.
    pub fn kkt(&self, fit: &SgLassoFit) -> KktReport {
        let b = self.to_std(&fit.coefficients);
        let r = &self.y - &self.z * &b;
        let pen = fit.penalty;
        let (gl, hl) = (pen.gamma * pen.lambda, (1.0 - pen.gamma) * pen.lambda);
        let mut rep = KktReport { active_violation: 0.0, inactive_coordinate_violation: 0.0, zero_group_violation: 0.0 };
        let mut grad = Vec::new();
        for blk in &self.blocks {
            block_gradient(&self.z, &r, &blk.cols, self.n(), &mut grad);
            let bg = b.rows(blk.cols.start, blk.cols.len());
            let norm = bg.norm();
            if !blk.penalized {
                let v = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
                rep.active_violation = rep.active_violation.max(v);
                continue;
            }
            if norm == 0.0 {
                let s: f64 = grad.iter().map(|g| soft_threshold(*g, gl).powi(2)).sum::<f64>().sqrt();
                rep.zero_group_violation = rep.zero_group_violation.max(s - hl);
                continue;
            }
            for (k, g) in grad.iter().enumerate() {
                if bg[k] != 0.0 {
                    let want = gl * bg[k].signum() + hl * bg[k] / norm;
                    rep.active_violation = rep.active_violation.max((g - want).abs());
                } else {
                    rep.inactive_coordinate_violation = rep.inactive_coordinate_violation.max(g.abs() - gl);
                }
            }
        }
        rep
    }
}

/// Smallest `mu` with `|soft(v, gamma mu)|_2 <= (1 - gamma) mu`.
fn group_zero_threshold(v: &[f64], gamma: f64) -> f64 {
    let inf = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let two = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if gamma >= 1.0 {
        return inf;
    }
    if gamma <= 0.0 {
        return two;
    }
    let excess = |mu: f64| {
        let s: f64 = v.iter().map(|x| soft_threshold(*x, gamma * mu).powi(2)).sum::<f64>().sqrt();
        s - (1.0 - gamma) * mu
    };
    let (mut lo, mut hi) = (0.0, (inf / gamma).min(two / (1.0 - gamma)));
    if hi == 0.0 {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn center(x: &DMatrix<f64>, y: &DVector<f64>, centering: Centering) -> (DMatrix<f64>, DVector<f64>) {
    let mut xc = x.clone();
    let mut yc = y.clone();
    let blocks: Vec<Range<usize>> = match centering {
        Centering::Global => vec![0..x.nrows()],
        Centering::PerUnit(s) => (0..s.units).map(|i| i * s.periods..(i + 1) * s.periods).collect(),
    };
    for rows in blocks {
        let len = rows.len();
        let ym = yc.rows(rows.start, len).mean();
        yc.rows_mut(rows.start, len).add_scalar_mut(-ym);
        for j in 0..x.ncols() {
            let mut col = xc.view_mut((rows.start, j), (len, 1));
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
    }
    (xc, yc)
}

fn check_shape(design: &GroupedDesign, shape: PanelShape) -> Result<()> {
    if shape.units == 0 || shape.units * shape.periods != design.rows() {
        return invalid(format!(
            "panel of {} units x {} periods does not match {} design rows",
            shape.units,
            shape.periods,
            design.rows()
        ));
    }
    if shape.periods < 2 {
        return invalid("each unit needs at least 2 periods");
    }
    Ok(())
}

/// Sparse-group LASSO with an unpenalised intercept and default options.
pub fn fit_sg_lasso(design: &GroupedDesign, penalty: PenaltySpec) -> Result<SgLassoFit> {
    fit_sg_lasso_with(design, penalty, &SolverOptions::default())
}

pub fn fit_sg_lasso_with(design: &GroupedDesign, penalty: PenaltySpec, options: &SolverOptions) -> Result<SgLassoFit> {
    Ok(SgLassoSolver::new(design, options)?.fit(penalty, None))
}

/// Fixed-effects panel fit: unit intercepts `a` (unpenalised) and slopes `b`
/// minimising `1/2 ||y - B a - X b||_NT^2 + lambda Omega(b)` with
/// `B = I_N (x) iota_T`. Rows are stacked unit by unit.
pub fn fit_panel_fixed_effects(
    design: &GroupedDesign,
    shape: PanelShape,
    penalty: PenaltySpec,
    options: &SolverOptions,
) -> Result<SgLassoFit> {
    Ok(SgLassoSolver::new_fixed_effects(design, shape, options)?.fit(penalty, None))
}

/// Pooled panel fit with a single common intercept.
pub fn fit_panel_pooled(
    design: &GroupedDesign,
    shape: PanelShape,
    penalty: PenaltySpec,
    options: &SolverOptions,
) -> Result<SgLassoFit> {
    check_shape(design, shape)?;
    Ok(SgLassoSolver::new(design, options)?.fit(penalty, None))
}

/// Log-spaced descending grid from `lambda_max` to `ratio * lambda_max`.
pub fn lambda_grid(design: &GroupedDesign, gamma: f64, grid_size: usize, ratio: f64) -> Result<Vec<f64>> {
    let solver = SgLassoSolver::new(design, &SolverOptions::default())?;
    grid_from_max(solver.lambda_max(gamma), grid_size, ratio)
}

/// Log-spaced grid anchored at a given `lambda_max`.
pub fn grid_from_max(lambda_max: f64, grid_size: usize, ratio: f64) -> Result<Vec<f64>> {
    if grid_size == 0 {
        return invalid("grid size must be at least 1");
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return invalid(format!("grid ratio must lie in (0, 1), got {ratio}"));
    }
    if grid_size == 1 {
        return Ok(vec![lambda_max]);
    }
    let last = (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|k| if k == 0 { lambda_max } else { lambda_max * ratio.powf(k as f64 / last) })
        .collect())
}
