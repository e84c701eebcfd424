//! MIDAS lag polynomials and the grouped regression design.
//!
//! The lag coefficients of covariate `k` are parametrised by a weight curve
//! `omega(s) = sum_l beta_{l,k} w_l(s)` over a dictionary `w_0, ..., w_{L-1}`.
//! The MIDAS term `(1/m_k) sum_j omega(j / n_k^H) x_{t - j/n_k^H}` is then the
//! lag row times an `m_k x L` weight matrix times `beta_k`, so each covariate
//! contributes a group of `L` design columns.

use std::fmt::Debug;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::datavintage::MixedFrequencyPanel;
use crate::error::{invalid, Error, Result};

/// A finite family of basis functions on `[0, support_length]`.
pub trait Dictionary: Debug + Send + Sync {
    fn degree_count(&self) -> usize;
    fn support_length(&self) -> f64;
    /// Value of basis function `degree` at `s`.
    fn evaluate(&self, degree: usize, s: f64) -> f64;
}

/// Classical (unnormalised) Legendre polynomials composed with the affine map
/// from `[0, support_length]` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreDictionary {
    degree_count: usize,
    support_length: f64,
}

/// Shifted Legendre dictionary `w_l(s) = P_l(2 s / support_length - 1)` for
/// `l = 0..degree_count`.
pub fn legendre_dictionary(degree_count: usize, support_length: f64) -> Result<LegendreDictionary> {
    if degree_count == 0 {
        return invalid("dictionary needs at least one basis function");
    }
    if !(support_length > 0.0 && support_length.is_finite()) {
        return invalid(format!("support length must be positive, got {support_length}"));
    }
    Ok(LegendreDictionary { degree_count, support_length })
}

/// `P_n(u)` via Bonnet's recursion.
pub fn legendre_p(n: usize, u: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, u);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * u * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

impl Dictionary for LegendreDictionary {
    fn degree_count(&self) -> usize {
        self.degree_count
    }

    fn support_length(&self) -> f64 {
        self.support_length
    }

    fn evaluate(&self, degree: usize, s: f64) -> f64 {
        debug_assert!(degree < self.degree_count);
        legendre_p(degree, 2.0 * s / self.support_length - 1.0)
    }
}

/// Lag layout of one covariate.
#[derive(Debug, Clone)]
pub struct CovariateLags {
    pub name: String,
    /// `n_k^H`: high-frequency observations per low-frequency period.
    pub high_freq_per_low: usize,
    /// `n_k^L`: low-frequency periods covered by the lags.
    pub low_freq_lag_periods: usize,
    pub dictionary: Arc<dyn Dictionary>,
}

impl CovariateLags {
    /// `m_k = n_k^H * n_k^L`.
    pub fn total_lags(&self) -> usize {
        self.high_freq_per_low * self.low_freq_lag_periods
    }
}

/// Lag structure of the whole regression.
#[derive(Debug, Clone)]
pub struct LagSpec {
    pub covariates: Vec<CovariateLags>,
    /// `J`: number of autoregressive lags `y_{t-s}, ..., y_{t-s-J+1}` with
    /// `s = `[`LagSpec::ar_offset`].
    pub autoregressive_lags: usize,
    /// `h`: forecast horizon in low-frequency periods.
    pub horizon: usize,
}

impl LagSpec {
    pub fn new(covariates: Vec<CovariateLags>, autoregressive_lags: usize, horizon: usize) -> Result<Self> {
        for c in &covariates {
            if c.high_freq_per_low == 0 || c.low_freq_lag_periods == 0 {
                return invalid(format!("covariate `{}` needs positive n^H and n^L", c.name));
            }
            if c.dictionary.degree_count() == 0 {
                return invalid(format!("covariate `{}` has an empty dictionary", c.name));
            }
            if (c.dictionary.support_length() - c.low_freq_lag_periods as f64).abs() > 1e-12 {
                return invalid(format!(
                    "dictionary support of `{}` must equal n^L = {}",
                    c.name, c.low_freq_lag_periods
                ));
            }
        }
        Ok(Self { covariates, autoregressive_lags, horizon })
    }

    /// Spec with a shifted Legendre dictionary of `degree_count` functions
    /// for every covariate `(name, n^H, n^L)`.
    pub fn legendre(
        covariates: &[(&str, usize, usize)],
        degree_count: usize,
        autoregressive_lags: usize,
        horizon: usize,
    ) -> Result<Self> {
        let covs = covariates
            .iter()
            .map(|&(name, nh, nl)| {
                Ok(CovariateLags {
                    name: name.to_string(),
                    high_freq_per_low: nh,
                    low_freq_lag_periods: nl,
                    dictionary: Arc::new(legendre_dictionary(degree_count, nl as f64)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(covs, autoregressive_lags, horizon)
    }

    /// First autoregressive lag: 0 when forecasting (`h >= 1`), 1 when
    /// nowcasting so that `y_t` never explains itself.
    pub fn ar_offset(&self) -> usize {
        usize::from(self.horizon == 0)
    }
}

/// `m_k x L` matrix with entry `(j, l) = w_l(j / n_k^H) / m_k`.
pub fn build_weight_matrix(spec: &LagSpec, covariate: usize) -> Result<DMatrix<f64>> {
    let c = spec
        .covariates
        .get(covariate)
        .ok_or_else(|| Error::InvalidArgument(format!("no covariate with index {covariate}")))?;
    let m = c.total_lags();
    let nh = c.high_freq_per_low as f64;
    let l = c.dictionary.degree_count();
    Ok(DMatrix::from_fn(m, l, |j, d| c.dictionary.evaluate(d, j as f64 / nh) / m as f64))
}

/// What a column group represents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupKind {
    Autoregressive,
    Covariate(usize),
    /// Groups built outside the MIDAS layout.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub label: String,
    pub kind: GroupKind,
    pub columns: Range<usize>,
}

/// Partition of the design columns into contiguous groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap {
    groups: Vec<Group>,
}

impl GroupMap {
    /// Validates that the ranges are nonempty, contiguous and cover `0..p`.
    pub fn new(groups: Vec<Group>, p: usize) -> Result<Self> {
        let mut next = 0;
        for g in &groups {
            if g.columns.start != next || g.columns.end <= g.columns.start {
                return invalid(format!("group `{}` breaks the column partition", g.label));
            }
            next = g.columns.end;
        }
        if next != p {
            return invalid(format!("groups cover {next} columns, design has {p}"));
        }
        Ok(Self { groups })
    }

    /// Groups of the given sizes, labelled `g0, g1, ...`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let g = Group { label: format!("g{i}"), kind: GroupKind::Other, columns: start..start + s };
                start += s;
                g
            })
            .collect();
        Self::new(groups, start)
    }

    /// Every column in its own group.
    pub fn singletons(p: usize) -> Self {
        Self::from_sizes(&vec![1; p]).expect("singleton partition is valid")
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn column_count(&self) -> usize {
        self.groups.last().map_or(0, |g| g.columns.end)
    }

    pub fn group_of_column(&self, j: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.columns.contains(&j))
    }
}

/// Regression design with its column-group structure.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    pub matrix: DMatrix<f64>,
    pub groups: GroupMap,
    pub response: DVector<f64>,
    pub column_names: Vec<String>,
    /// Low-frequency period of each row, when known.
    pub row_periods: Vec<i64>,
}

impl GroupedDesign {
    pub fn new(matrix: DMatrix<f64>, groups: GroupMap, response: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != response.len() {
            return invalid(format!("design has {} rows but response has {}", matrix.nrows(), response.len()));
        }
        if groups.column_count() != matrix.ncols() {
            return invalid(format!(
                "group map covers {} columns, design has {}",
                groups.column_count(),
                matrix.ncols()
            ));
        }
        let column_names = (0..matrix.ncols()).map(|j| format!("x{j}")).collect();
        let row_periods = (0..matrix.nrows() as i64).collect();
        Ok(Self { matrix, groups, response, column_names, row_periods })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Design restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            matrix: self.matrix.select_rows(rows),
            groups: self.groups.clone(),
            response: self.response.select_rows(rows),
            column_names: self.column_names.clone(),
            row_periods: rows.iter().map(|&r| self.row_periods[r]).collect(),
        }
    }
}

/// Group layout implied by a lag spec: `[AR (J) | covariate 1 (L_1) | ...]`.
pub fn design_groups(spec: &LagSpec) -> (GroupMap, Vec<String>) {
    let mut groups = Vec::new();
    let mut names = Vec::new();
    let mut start = 0;
    if spec.autoregressive_lags > 0 {
        let j = spec.autoregressive_lags;
        groups.push(Group { label: "ar".into(), kind: GroupKind::Autoregressive, columns: 0..j });
        let s = spec.ar_offset();
        names.extend((0..j).map(|i| format!("ar_lag{}", i + s)));
        start = j;
    }
    for (k, c) in spec.covariates.iter().enumerate() {
        let l = c.dictionary.degree_count();
        groups.push(Group { label: c.name.clone(), kind: GroupKind::Covariate(k), columns: start..start + l });
        names.extend((0..l).map(|d| format!("{}_w{d}", c.name)));
        start += l;
    }
    (GroupMap::new(groups, start).expect("layout is a partition"), names)
}

fn check_panel(panel: &MixedFrequencyPanel, spec: &LagSpec) -> Result<()> {
    if panel.covariates.len() != spec.covariates.len() {
        return invalid(format!(
            "panel has {} covariates, lag spec has {}",
            panel.covariates.len(),
            spec.covariates.len()
        ));
    }
    for (pc, sc) in panel.covariates.iter().zip(&spec.covariates) {
        let width = pc.lags.first().map_or(sc.total_lags(), Vec::len);
        if pc.name != sc.name || width != sc.total_lags() {
            return invalid(format!(
                "panel covariate `{}` ({width} lags) does not match spec covariate `{}` ({} lags)",
                pc.name,
                sc.name,
                sc.total_lags()
            ));
        }
    }
    Ok(())
}

/// Regressor row for panel row `row`, or `None` when any lag is missing.
pub fn feature_row(
    panel: &MixedFrequencyPanel,
    spec: &LagSpec,
    weights: &[DMatrix<f64>],
    row: usize,
) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for j in 0..spec.autoregressive_lags {
        out.push(panel.target.get(row.checked_sub(j + spec.ar_offset())?).copied().flatten()?);
    }
    for (k, w) in weights.iter().enumerate() {
        let lags = &panel.covariates[k].lags[row];
        let x: Option<Vec<f64>> = lags.iter().copied().collect();
        let x = DVector::from_vec(x?);
        out.extend((w.transpose() * x).iter());
    }
    Some(out)
}

/// Maps a mixed-frequency panel onto the grouped linear regression design.
///
/// Rows are the periods with a released response `y_{t+h}`, all `J`
/// autoregressive lags and complete lag windows for every covariate; other
/// rows are dropped.
pub fn construct_design(panel: &MixedFrequencyPanel, spec: &LagSpec) -> Result<GroupedDesign> {
    check_panel(panel, spec)?;
    if panel.horizon != spec.horizon {
        return invalid(format!("panel horizon {} differs from spec horizon {}", panel.horizon, spec.horizon));
    }
    for (pc, sc) in panel.covariates.iter().zip(&spec.covariates) {
        if !pc.lags.iter().any(|r| r.iter().all(Option::is_some)) {
            return Err(Error::TooShortSample {
                covariate: sc.name.clone(),
                detail: format!("no period has all {} lags available", sc.total_lags()),
            });
        }
    }
    let weights = (0..spec.covariates.len())
        .map(|k| build_weight_matrix(spec, k))
        .collect::<Result<Vec<_>>>()?;
    let (groups, names) = design_groups(spec);
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut periods = Vec::new();
    for r in 0..panel.rows() {
        let Some(y) = panel.response(r) else { continue };
        if let Some(x) = feature_row(panel, spec, &weights, r) {
            rows.push(x);
            ys.push(y);
            periods.push(panel.periods[r]);
        }
    }
    if rows.len() < 2 {
        let who = if spec.autoregressive_lags > 0 && spec.covariates.is_empty() {
            format!("{} (autoregressive lags)", panel.target_name)
        } else {
            panel.target_name.clone()
        };
        return Err(Error::TooShortSample {
            covariate: who,
            detail: format!("only {} usable rows after aligning lags and horizon", rows.len()),
        });
    }
    let p = groups.column_count();
    let matrix = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let mut design = GroupedDesign::new(matrix, groups, DVector::from_vec(ys))?;
    design.column_names = names;
    design.row_periods = periods;
    Ok(design)
}
