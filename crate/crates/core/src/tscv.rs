//! Leave-one-out cross-validation with a gap.
//!
//! For each evaluation point `t` the model is refitted on
//! `I_{t,l} = {1, ..., t-l-1, t+l+1, ..., T}`, which leaves `l` observations
//! out on both sides of the test point so the training and test samples are
//! decorrelated. Near the boundaries the training set is the one-sided
//! remainder. `l = 0` is ordinary leave-one-out. Optionally only a random
//! subsample of `K` evaluation points is used.
//!
//! Indices in this module are one-based, matching the usual `t = 1, ..., T`
//! convention; design rows are zero-based.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lagpoly::GroupedDesign;
use crate::sglasso::{PenaltySpec, SgLassoSolver, SolverOptions};

/// Loss applied to the out-of-sample residual `y_t - f(x_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvLoss {
    #[default]
    Squared,
    Absolute,
}

impl CvLoss {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            CvLoss::Squared => u * u,
            CvLoss::Absolute => u.abs(),
        }
    }
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub sample_size: usize,
    pub gap: usize,
    /// Number `K` of randomly drawn evaluation points; all `T` when `None`.
    pub subsample_size: Option<usize>,
    pub seed: u64,
    pub loss: CvLoss,
}

impl CvPlan {
    pub fn new(sample_size: usize, gap: usize, subsample_size: Option<usize>, seed: u64, loss: CvLoss) -> Result<Self> {
        if 2 * gap + 1 >= sample_size {
            return invalid(format!("gap {gap} too large for T = {sample_size}: need 2l + 1 < T"));
        }
        if let Some(k) = subsample_size {
            if k == 0 || k > sample_size {
                return invalid(format!("subsample size must lie in 1..={sample_size}, got {k}"));
            }
        }
        for t in 1..=sample_size {
            gap_cv_indices(sample_size, t, gap)?;
        }
        Ok(Self { sample_size, gap, subsample_size, seed, loss })
    }

    /// Evaluation points (one-based, increasing).
    pub fn evaluation_points(&self) -> Vec<usize> {
        match self.subsample_size {
            None => (1..=self.sample_size).collect(),
            Some(k) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut pts: Vec<usize> = sample(&mut rng, self.sample_size, k).into_iter().map(|i| i + 1).collect();
                pts.sort_unstable();
                pts
            }
        }
    }
}

/// Training indices (one-based) for test point `t` with gap `l`.
///
/// The boundary cases are applied in order: `t <= l + 1` trains on
/// `{t+l+1, ..., T}`, then `t >= T - l` trains on `{1, ..., T-l-1}`, and
/// interior points use both sides.
pub fn gap_cv_indices(sample_size: usize, t: usize, gap: usize) -> Result<Vec<usize>> {
    if t == 0 || t > sample_size {
        return invalid(format!("test point {t} outside 1..={sample_size}"));
    }
    let out: Vec<usize> = if t <= gap + 1 {
        (t + gap + 1..=sample_size).collect()
    } else if t + gap >= sample_size {
        (1..sample_size.saturating_sub(gap)).collect()
    } else {
        (1..t - gap).chain(t + gap + 1..=sample_size).collect()
    };
    if out.is_empty() {
        return invalid(format!("empty training set for t = {t}, l = {gap}, T = {sample_size}"));
    }
    Ok(out)
}

/// Cross-validation curve over a penalty sequence.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub penalties: Vec<PenaltySpec>,
    /// Mean out-of-sample loss per penalty over the folds that converged.
    pub cv_loss: Vec<f64>,
    /// Folds excluded per penalty because the solver did not converge.
    pub excluded_folds: Vec<usize>,
    pub selected_index: usize,
    pub selected: PenaltySpec,
    pub evaluation_points: Vec<usize>,
}

/// Computes `CV(lambda)` for every penalty and selects the minimiser.
///
/// Within a fold the penalties are fitted in the given order with warm
/// starts, so a decreasing sequence is the natural input. Folds run in
/// parallel; per-fold losses are summed in fold order, so the curve does not
/// depend on the thread count.
pub fn cross_validate(
    design: &GroupedDesign,
    plan: &CvPlan,
    penalties: &[PenaltySpec],
    options: &SolverOptions,
) -> Result<CvResult> {
    if penalties.is_empty() {
        return invalid("no penalties to cross-validate");
    }
    if design.rows() != plan.sample_size {
        return invalid(format!("plan is for T = {} but design has {} rows", plan.sample_size, design.rows()));
    }
    let points = plan.evaluation_points();
    let folds: Vec<Result<Vec<Option<f64>>>> = points
        .par_iter()
        .map(|&t| {
            let train: Vec<usize> = gap_cv_indices(plan.sample_size, t, plan.gap)?.into_iter().map(|i| i - 1).collect();
            let solver = SgLassoSolver::new(&design.select_rows(&train), options)?;
            let x: Vec<f64> = design.matrix.row(t - 1).iter().copied().collect();
            let y = design.response[t - 1];
            Ok(solver
                .fit_path(penalties)
                .into_iter()
                .map(|fit| {
                    if fit.converged {
                        Some(plan.loss.eval(y - fit.predict(&x)))
                    } else {
                        log::warn!("fold t = {t} excluded at lambda = {}: solver did not converge", fit.penalty.lambda);
                        None
                    }
                })
                .collect())
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;
    let mut cv_loss = Vec::with_capacity(penalties.len());
    let mut excluded = Vec::with_capacity(penalties.len());
    for i in 0..penalties.len() {
        let (mut sum, mut count, mut skipped) = (0.0, 0usize, 0usize);
        for f in &folds {
            match f[i] {
                Some(v) => {
                    sum += v;
                    count += 1;
                }
                None => skipped += 1,
            }
        }
        cv_loss.push(if count > 0 { sum / count as f64 } else { f64::NAN });
        excluded.push(skipped);
    }
    let selected_index = cv_loss
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument("no penalty produced a finite CV loss".into()))?;
    Ok(CvResult {
        penalties: penalties.to_vec(),
        cv_loss,
        excluded_folds: excluded,
        selected_index,
        selected: penalties[selected_index],
        evaluation_points: points,
    })
}
