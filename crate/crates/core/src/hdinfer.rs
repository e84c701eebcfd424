//! Debiased inference after sparse-group LASSO.
//!
//! For a block `G` of coefficients the desparsified estimator is
//! `b_G + Theta_G X' u / T`, where `Theta_G` are rows of an approximate
//! inverse of the centred Gram matrix obtained from nodewise regressions and
//! `u` are the fit residuals. Its long-run variance is estimated with a
//! kernel HAC estimator over the scores `u_t * Theta_G x_t`, and the Granger
//! non-causality hypothesis for the block is tested with the Wald statistic
//! `W_T = T d' Xi^{-1} d` against a chi-squared law with `|G|` degrees of
//! freedom.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::lagpoly::{Group, GroupMap, GroupedDesign};
use crate::linalg::{center_columns, sym_eigen_desc};
use crate::sglasso::{fit_sg_lasso_with, grid_from_max, PenaltySpec, SgLassoFit, SgLassoSolver, SolverOptions};
use crate::tscv::{cross_validate, CvPlan};

/// Kernel families with characteristic exponent 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Parzen,
    QuadraticSpectral,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Parzen => "parzen",
            KernelFamily::QuadraticSpectral => "quadratic-spectral",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parzen" => Ok(KernelFamily::Parzen),
            "qs" | "quadratic-spectral" | "quadratic_spectral" => Ok(KernelFamily::QuadraticSpectral),
            _ => Err(Error::Parse(format!("unknown kernel `{s}`"))),
        }
    }
}

/// Kernel weight `K(x)`.
pub fn kernel_weight(family: KernelFamily, x: f64) -> f64 {
    let a = x.abs();
    match family {
        KernelFamily::Parzen => {
            if a <= 0.5 {
                1.0 - 6.0 * a * a + 6.0 * a * a * a
            } else if a <= 1.0 {
                2.0 * (1.0 - a).powi(3)
            } else {
                0.0
            }
        }
        KernelFamily::QuadraticSpectral => {
            let z = 6.0 * PI * a / 5.0;
            if z < 1e-4 {
                // series of 3 (sin z / z - cos z) / z^2
                1.0 - z * z / 10.0 + z.powi(4) / 280.0
            } else {
                25.0 / (12.0 * PI * PI * a * a) * (z.sin() / z - z.cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Lag truncation `M_T`.
    pub bandwidth: f64,
}

impl KernelSpec {
    /// Characteristic exponent of both supported kernels.
    pub const SMOOTHNESS_ORDER: f64 = 2.0;

    pub fn weight(&self, lag: usize) -> f64 {
        if lag == 0 {
            1.0
        } else if self.bandwidth <= 0.0 {
            0.0
        } else {
            kernel_weight(self.family, lag as f64 / self.bandwidth)
        }
    }
}

/// Tail assumption for the bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailRegime {
    SubGaussian,
    /// `moments` is `q > 2`, the number of finite moments.
    HeavyTailed { moments: f64 },
}

/// Rule-of-thumb bandwidth with smoothness order 2:
/// `1.3 (T / log p)^{1/3}` for sub-Gaussian data and
/// `1.3 (T^{2 - 2/q} / p^{2/q})^{1/3}` for heavy tails.
pub fn bandwidth_rule(sample_size: usize, p: usize, regime: TailRegime) -> Result<f64> {
    if sample_size < 2 || p == 0 {
        return invalid(format!("bandwidth rule needs T >= 2 and p >= 1, got T = {sample_size}, p = {p}"));
    }
    let t = sample_size as f64;
    let pf = p as f64;
    let exponent = 1.0 / (1.0 + KernelSpec::SMOOTHNESS_ORDER);
    match regime {
        TailRegime::SubGaussian => {
            if p == 1 {
                return invalid("sub-Gaussian bandwidth rule needs p >= 2 (log p = 0)");
            }
            Ok(1.3 * (t / pf.ln()).powf(exponent))
        }
        TailRegime::HeavyTailed { moments: q } => {
            if !(q > 2.0) {
                return invalid(format!("heavy-tailed rule needs q > 2, got {q}"));
            }
            Ok(1.3 * (t.powf(2.0 - 2.0 / q) / pf.powf(2.0 / q)).powf(exponent))
        }
    }
}

/// Rows `Theta_G` of an approximate inverse of `X_c' X_c / T`.
#[derive(Debug, Clone)]
pub struct PrecisionRows {
    pub target_indices: Vec<usize>,
    /// `|G| x p`.
    pub rows: DMatrix<f64>,
    /// Penalty used for each nodewise regression.
    pub penalties: Vec<PenaltySpec>,
    /// Nodes that fell back to ridge-regularised Gram inversion.
    pub ridge_fallback: Vec<usize>,
}

fn drop_column(groups: &GroupMap, j: usize) -> GroupMap {
    let mut out = Vec::new();
    let mut start = 0;
    for g in groups.groups() {
        let width = g.columns.len() - usize::from(g.columns.contains(&j));
        if width > 0 {
            out.push(Group { label: g.label.clone(), kind: g.kind.clone(), columns: start..start + width });
            start += width;
        }
    }
    GroupMap::new(out, start).expect("shrunken partition is valid")
}

fn check_targets(p: usize, g: &[usize]) -> Result<()> {
    if g.is_empty() {
        return invalid("target index set is empty");
    }
    if let Some(&bad) = g.iter().find(|&&j| j >= p) {
        return invalid(format!("target index {bad} out of range for {p} columns"));
    }
    Ok(())
}

fn node_design(x: &DMatrix<f64>, groups: &GroupMap, j: usize) -> Result<GroupedDesign> {
    let others: Vec<usize> = (0..x.ncols()).filter(|&k| k != j).collect();
    GroupedDesign::new(x.select_columns(&others), drop_column(groups, j), x.column(j).into_owned())
}

fn ridge_row(xc: &DMatrix<f64>, j: usize) -> DVector<f64> {
    let n = xc.nrows() as f64;
    let p = xc.ncols();
    let gram = xc.transpose() * xc / n;
    let eps = 1e-6 * gram.trace() / p as f64;
    let reg = gram + DMatrix::identity(p, p) * eps;
    let e = DVector::from_fn(p, |k, _| if k == j { 1.0 } else { 0.0 });
    reg.cholesky().expect("ridge-regularised Gram is positive definite").solve(&e)
}

/// Nodewise LASSO estimate of `Theta_G`.
///
/// Column `j` is regressed on the other columns with penalty `tuning[i]`
/// (a single entry is used for every node). With residual `r_j` and
/// `tau_j^2 = x_j' r_j / T`, row `j` is `(e_j - gamma_j) / tau_j^2`, which
/// gives `Theta_j Sigma e_j = 1` exactly. Nodes whose regression does not
/// converge fall back to a row of the ridge-regularised inverse Gram.
pub fn nodewise_precision(
    design: &GroupedDesign,
    g: &[usize],
    tuning: &[PenaltySpec],
    options: &SolverOptions,
) -> Result<PrecisionRows> {
    let x = &design.matrix;
    let (n, p) = (x.nrows(), x.ncols());
    check_targets(p, g)?;
    if tuning.len() != 1 && tuning.len() != g.len() {
        return invalid(format!("need 1 or {} nodewise penalties, got {}", g.len(), tuning.len()));
    }
    let xc = center_columns(x);
    for j in 0..p {
        if xc.column(j).norm_squared() == 0.0 {
            return invalid(format!("column {j} has zero variance; Gram matrix is degenerate"));
        }
    }
    let mut rows = DMatrix::zeros(g.len(), p);
    let mut fallback = Vec::new();
    let mut penalties = Vec::with_capacity(g.len());
    for (i, &j) in g.iter().enumerate() {
        let pen = tuning[if tuning.len() == 1 { 0 } else { i }];
        penalties.push(pen);
        let row = if p == 1 {
            let tau2 = xc.column(0).norm_squared() / n as f64;
            DVector::from_element(1, 1.0 / tau2)
        } else {
            let fit = fit_sg_lasso_with(&node_design(x, &design.groups, j)?, pen, options)?;
            let tau2 = xc.column(j).dot(&fit.residuals) / n as f64;
            if fit.converged && tau2 > 1e-12 * xc.column(j).norm_squared() / n as f64 {
                let mut row = DVector::zeros(p);
                row[j] = 1.0 / tau2;
                for (k, &col) in (0..p).filter(|&k| k != j).collect::<Vec<_>>().iter().enumerate() {
                    row[col] = -fit.coefficients[k] / tau2;
                }
                row
            } else {
                log::warn!("nodewise regression for column {j} failed; using ridge inverse");
                fallback.push(j);
                ridge_row(&xc, j)
            }
        };
        rows.set_row(i, &row.transpose());
    }
    Ok(PrecisionRows { target_indices: g.to_vec(), rows, penalties, ridge_fallback: fallback })
}

/// Nodewise precision with each node's LASSO penalty chosen by gap
/// cross-validation over a log grid of `grid_size` points down to
/// `ratio * lambda_max`.
pub fn nodewise_precision_cv(
    design: &GroupedDesign,
    g: &[usize],
    gamma: f64,
    plan: &CvPlan,
    grid_size: usize,
    ratio: f64,
    options: &SolverOptions,
) -> Result<PrecisionRows> {
    check_targets(design.cols(), g)?;
    let mut tuning = Vec::with_capacity(g.len());
    for &j in g {
        let node = node_design(&design.matrix, &design.groups, j)?;
        let lmax = SgLassoSolver::new(&node, options)?.lambda_max(gamma);
        let grid = grid_from_max(lmax, grid_size, ratio)?
            .into_iter()
            .map(|l| PenaltySpec::new(l, gamma))
            .collect::<Result<Vec<_>>>()?;
        tuning.push(cross_validate(&node, plan, &grid, options)?.selected);
    }
    nodewise_precision(design, g, &tuning, options)
}

/// Desparsified coefficients `b_G + Theta_G X_c' u / T`.
pub fn debias(fit: &SgLassoFit, design: &GroupedDesign, precision: &PrecisionRows) -> Result<DVector<f64>> {
    let (n, p) = (design.rows(), design.cols());
    if fit.coefficients.len() != p || fit.residuals.len() != n || precision.rows.ncols() != p {
        return invalid("fit, design and precision rows have inconsistent dimensions");
    }
    let xc = center_columns(&design.matrix);
    let correction = &precision.rows * (xc.transpose() * &fit.residuals) / n as f64;
    let b = DVector::from_iterator(precision.target_indices.len(), precision.target_indices.iter().map(|&j| fit.coefficients[j]));
    Ok(b + correction)
}

/// Scores `u_t * Theta_G x_t` as a `T x |G|` matrix (centred regressors).
pub fn hac_scores(residuals: &DVector<f64>, design: &GroupedDesign, precision: &PrecisionRows) -> DMatrix<f64> {
    let xc = center_columns(&design.matrix);
    let mut s = xc * precision.rows.transpose();
    for (t, mut row) in s.row_iter_mut().enumerate() {
        row *= residuals[t];
    }
    s
}

/// HAC long-run variance `sum_{|k| < T} K(k / M_T) Gamma_k` with
/// `Gamma_k = T^{-1} sum_{t=1}^{T-k} s_t s_{t+k}'` and
/// `Gamma_{-k} = Gamma_k'`. Exactly symmetric.
pub fn hac_lrv(scores: &DMatrix<f64>, kernel: KernelSpec) -> DMatrix<f64> {
    let (t, g) = scores.shape();
    let n = t as f64;
    let mut xi = scores.transpose() * scores / n;
    for k in 1..t {
        let w = kernel.weight(k);
        if w == 0.0 {
            if kernel.family == KernelFamily::Parzen && k as f64 > kernel.bandwidth {
                break;
            }
            continue;
        }
        let lead = scores.rows(0, t - k);
        let lag = scores.rows(k, t - k);
        let gamma = lead.transpose() * lag / n;
        xi += (&gamma + gamma.transpose()) * w;
    }
    let sym = (&xi + xi.transpose()) * 0.5;
    debug_assert_eq!(sym.shape(), (g, g));
    sym
}

/// Debiased coefficient block with its HAC long-run variance.
#[derive(Debug, Clone)]
pub struct DebiasedBlock {
    pub target_indices: Vec<usize>,
    pub debiased_coefficients: DVector<f64>,
    pub precision_rows: DMatrix<f64>,
    pub lrv: DMatrix<f64>,
    pub sample_size: usize,
    pub kernel: KernelSpec,
}

impl DebiasedBlock {
    /// Normal-approximation interval for coefficient `i` of the block.
    pub fn confidence_interval(&self, i: usize, z: f64) -> (f64, f64) {
        let se = (self.lrv[(i, i)].max(0.0) / self.sample_size as f64).sqrt();
        let c = self.debiased_coefficients[i];
        (c - z * se, c + z * se)
    }
}

pub fn debiased_block(
    fit: &SgLassoFit,
    design: &GroupedDesign,
    precision: &PrecisionRows,
    kernel: KernelSpec,
) -> Result<DebiasedBlock> {
    let debiased = debias(fit, design, precision)?;
    let scores = hac_scores(&fit.residuals, design, precision);
    Ok(DebiasedBlock {
        target_indices: precision.target_indices.clone(),
        debiased_coefficients: debiased,
        precision_rows: precision.rows.clone(),
        lrv: hac_lrv(&scores, kernel),
        sample_size: design.rows(),
        kernel,
    })
}

/// What to do when the long-run variance is numerically singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularPolicy {
    #[default]
    Error,
    /// Raise small eigenvalues to the floor before inverting.
    Floor,
    /// Drop directions below the floor; degrees of freedom become the rank.
    PseudoInverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub critical_value: f64,
    pub level: f64,
    pub reject: bool,
    /// Set when the floor or pseudo-inverse was applied.
    pub regularized: bool,
}

/// Bias-corrected Wald test of `coefficients == null_value` for the block.
///
/// Eigenvalues of `Xi` at or below `1e-10 * trace / |G|` count as singular.
pub fn granger_wald(
    block: &DebiasedBlock,
    sample_size: usize,
    null_value: &DVector<f64>,
    level: f64,
    policy: SingularPolicy,
) -> Result<WaldTest> {
    let k = block.debiased_coefficients.len();
    if null_value.len() != k || block.lrv.shape() != (k, k) {
        return invalid("null value and long-run variance must match the block size");
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("level must lie in (0, 1), got {level}"));
    }
    let d = &block.debiased_coefficients - null_value;
    let (vals, vecs) = sym_eigen_desc(&block.lrv);
    let floor = 1e-10 * block.lrv.trace().abs() / k as f64;
    let singular = vals.iter().any(|&v| v <= floor);
    let mut regularized = false;
    let mut dof = k;
    let quad = if !singular {
        let chol = block
            .lrv
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericalSingularity("long-run variance is not positive definite".into()))?;
        d.dot(&chol.solve(&d))
    } else {
        match policy {
            SingularPolicy::Error => {
                return Err(Error::NumericalSingularity(format!(
                    "long-run variance has eigenvalue {:.3e} below floor {floor:.3e}",
                    vals[k - 1]
                )))
            }
            SingularPolicy::Floor | SingularPolicy::PseudoInverse => {
                log::warn!("long-run variance is near singular; applying {policy:?}");
                regularized = true;
                let mut q = 0.0;
                for (i, &v) in vals.iter().enumerate() {
                    let proj = vecs.column(i).dot(&d);
                    if v > floor {
                        q += proj * proj / v;
                    } else if policy == SingularPolicy::Floor && floor > 0.0 {
                        q += proj * proj / floor;
                    }
                }
                if policy == SingularPolicy::PseudoInverse {
                    dof = vals.iter().filter(|&&v| v > floor).count();
                    if dof == 0 {
                        return Err(Error::NumericalSingularity("long-run variance is zero".into()));
                    }
                }
                q
            }
        }
    };
    let statistic = sample_size as f64 * quad;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let critical_value = chi.inverse_cdf(1.0 - level);
    Ok(WaldTest {
        statistic,
        dof,
        p_value: chi.sf(statistic),
        critical_value,
        level,
        reject: statistic > critical_value,
        regularized,
    })
}

/// Settings of the end-to-end Granger causality test.
#[derive(Debug, Clone)]
pub struct GrangerConfig {
    /// Penalty of the main sparse-group LASSO regression.
    pub penalty: PenaltySpec,
    /// Nodewise penalties, one or one per tested column.
    pub nodewise: Vec<PenaltySpec>,
    pub kernel: KernelFamily,
    pub regime: TailRegime,
    /// Overrides the rule-of-thumb bandwidth.
    pub bandwidth: Option<f64>,
    pub level: f64,
    pub singular: SingularPolicy,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct GrangerReport {
    pub fit: SgLassoFit,
    pub precision: PrecisionRows,
    pub block: DebiasedBlock,
    pub test: WaldTest,
}

impl GrangerReport {
    /// Flat key-value record of the test.
    pub fn record(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("statistic".to_string(), format!("{:?}", self.test.statistic)),
            ("dof".to_string(), self.test.dof.to_string()),
            ("p_value".to_string(), format!("{:?}", self.test.p_value)),
            ("critical_value".to_string(), format!("{:?}", self.test.critical_value)),
            ("level".to_string(), format!("{:?}", self.test.level)),
            ("reject".to_string(), self.test.reject.to_string()),
            ("regularized".to_string(), self.test.regularized.to_string()),
            ("bandwidth".to_string(), format!("{:?}", self.block.kernel.bandwidth)),
            ("kernel".to_string(), self.block.kernel.family.to_string()),
            ("lambda".to_string(), format!("{:?}", self.fit.penalty.lambda)),
            ("gamma".to_string(), format!("{:?}", self.fit.penalty.gamma)),
            ("sample_size".to_string(), self.block.sample_size.to_string()),
            ("fit_converged".to_string(), self.fit.converged.to_string()),
        ];
        for (i, &j) in self.block.target_indices.iter().enumerate() {
            out.push((format!("nodewise_lambda_{j}"), format!("{:?}", self.precision.penalties[i].lambda)));
            out.push((format!("debiased_{j}"), format!("{:?}", self.block.debiased_coefficients[i])));
        }
        out
    }
}

/// Runs the three steps: fit, debias with a HAC variance, compare the Wald
/// statistic with the chi-squared quantile. `tested` are the design columns
/// of the candidate causal series; the null sets them to zero.
pub fn granger_test(design: &GroupedDesign, tested: &[usize], config: &GrangerConfig) -> Result<GrangerReport> {
    check_targets(design.cols(), tested)?;
    let fit = fit_sg_lasso_with(design, config.penalty, &config.solver)?;
    let precision = nodewise_precision(design, tested, &config.nodewise, &config.solver)?;
    let bandwidth = match config.bandwidth {
        Some(b) => b,
        None => bandwidth_rule(design.rows(), design.cols().max(2), config.regime)?,
    };
    let kernel = KernelSpec { family: config.kernel, bandwidth };
    let block = debiased_block(&fit, design, &precision, kernel)?;
    let null = DVector::zeros(tested.len());
    let test = granger_wald(&block, design.rows(), &null, config.level, config.singular)?;
    Ok(GrangerReport { fit, precision, block, test })
}
