//! Tensor factor models.
//!
//! A tensor `Y` of shape `N_1 x ... x N_d` is stored densely with the first
//! index varying fastest. The mode-`j` matricization `Y_(j)` has the mode-`j`
//! fibres as rows and the remaining indices as columns, ordered with the
//! lowest-numbered remaining mode varying fastest. Modes are numbered from 1.
//!
//! PCA estimates loadings per mode from the leading eigenvectors of
//! `Y_(j) Y_(j)'`. The number of factors is tested with the eigenvalue-ratio
//! statistic against a null simulated from the top eigenvalues of Gaussian
//! symmetric matrices.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{canonical_sign, sym_eigen_desc, sym_eigenvalues_desc};
use crate::seeds::stream_rng;

const BINARY_MAGIC: &[u8; 4] = b"TNSR";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<String>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return invalid(format!("tensor dimensions must be positive, got {dims:?}"));
        }
        let count: usize = dims.iter().product();
        if values.len() != count {
            return invalid(format!("dims {dims:?} need {count} values, got {}", values.len()));
        }
        let labels = (1..=dims.len()).map(|j| format!("i{j}")).collect();
        Ok(Self { dims, values, labels })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let count = dims.iter().product();
        Self::new(dims, vec![0.0; count])
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return invalid(format!("{} labels for a {}-mode tensor", labels.len(), self.dims.len()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Linear offset of a zero-based multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        let mut off = 0;
        let mut stride = 1;
        for (i, n) in index.iter().zip(&self.dims) {
            off += i * stride;
            stride *= n;
        }
        off
    }

    /// Zero-based multi-index of a linear offset.
    pub fn multi_index(&self, mut offset: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|n| {
                let i = offset % n;
                offset /= n;
                i
            })
            .collect()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], v: f64) {
        let off = self.offset(index);
        self.values[off] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_mode(dims: &[usize], mode: usize) -> Result<()> {
    if mode == 0 || mode > dims.len() {
        return invalid(format!("mode {mode} outside 1..={}", dims.len()));
    }
    Ok(())
}

/// Column of `Y_(mode)` holding the entry at `index`.
fn unfolding_column(dims: &[usize], mode: usize, index: &[usize]) -> usize {
    let mut col = 0;
    let mut stride = 1;
    for (k, (&i, &n)) in index.iter().zip(dims).enumerate() {
        if k + 1 != mode {
            col += i * stride;
            stride *= n;
        }
    }
    col
}

/// Mode-`mode` matricization (modes start at 1).
pub fn matricize(tensor: &Tensor, mode: usize) -> Result<DMatrix<f64>> {
    check_mode(&tensor.dims, mode)?;
    let rows = tensor.dims[mode - 1];
    let cols = tensor.values.len() / rows;
    let mut m = DMatrix::zeros(rows, cols);
    for (off, &v) in tensor.values.iter().enumerate() {
        let idx = tensor.multi_index(off);
        m[(idx[mode - 1], unfolding_column(&tensor.dims, mode, &idx))] = v;
    }
    Ok(m)
}

/// Inverse of [`matricize`].
pub fn dematricize(matrix: &DMatrix<f64>, dims: &[usize], mode: usize) -> Result<Tensor> {
    check_mode(dims, mode)?;
    let mut t = Tensor::zeros(dims.to_vec())?;
    if matrix.nrows() != dims[mode - 1] || matrix.nrows() * matrix.ncols() != t.values.len() {
        return invalid(format!("{}x{} matrix does not unfold dims {dims:?} at mode {mode}", matrix.nrows(), matrix.ncols()));
    }
    for off in 0..t.values.len() {
        let idx = t.multi_index(off);
        t.values[off] = matrix[(idx[mode - 1], unfolding_column(dims, mode, &idx))];
    }
    Ok(t)
}

/// `v_1 (x) v_2 (x) ... (x) v_d`.
pub fn outer_product(vectors: &[DVector<f64>]) -> Result<Tensor> {
    let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    let mut t = Tensor::zeros(dims)?;
    for off in 0..t.values.len() {
        let idx = t.multi_index(off);
        t.values[off] = idx.iter().zip(vectors).map(|(&i, v)| v[i]).product();
    }
    Ok(t)
}

/// Descending eigenvalues of `Y_(j) Y_(j)'`, all `N_j` of them. When `N_j`
/// exceeds the number of columns the smaller Gram is used and the spectrum is
/// padded with zeros.
pub fn mode_spectrum(tensor: &Tensor, mode: usize) -> Result<Vec<f64>> {
    let y = matricize(tensor, mode)?;
    let n = y.nrows();
    if n > y.ncols() {
        let mut v = sym_eigenvalues_desc(&(y.transpose() * &y));
        v.resize(n, 0.0);
        Ok(v)
    } else {
        Ok(sym_eigenvalues_desc(&(&y * y.transpose())))
    }
}

/// Leading `rank` eigenpairs of `Y Y'`.
fn leading_eigenpairs(y: &DMatrix<f64>, rank: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = y.nrows();
    if n > y.ncols() {
        let (vals, vecs) = sym_eigen_desc(&(y.transpose() * y));
        let floor = 1e-12 * vals.first().copied().unwrap_or(0.0).max(0.0);
        if vals.len() >= rank && vals[..rank].iter().all(|&v| v > floor && v > 0.0) {
            let mut u = DMatrix::zeros(n, rank);
            for r in 0..rank {
                let col = y * vecs.column(r) / vals[r].sqrt();
                u.set_column(r, &(&col / col.norm()));
            }
            let mut all = vals;
            all.resize(n, 0.0);
            return (all, u);
        }
    }
    let (vals, vecs) = sym_eigen_desc(&(y * y.transpose()));
    (vals, vecs.columns(0, rank).into_owned())
}

#[derive(Debug, Clone)]
pub struct TensorFactorFit {
    pub rank: usize,
    /// Per mode, `N_j x R` with unit-norm columns.
    pub loadings: Vec<DMatrix<f64>>,
    /// Per mode, the `R` largest eigenvalues (estimates of `sigma_r^2`).
    pub scales: Vec<Vec<f64>>,
    /// Per mode, the full descending spectrum.
    pub spectra: Vec<Vec<f64>>,
    /// Least-squares scales for the `R` outer products; `None` if the refit
    /// system is singular.
    pub joint_scales: Option<Vec<f64>>,
}

impl TensorFactorFit {
    /// `sum_r sigma_r (x)_j m_{j,r}` using the joint scales.
    pub fn reconstruct(&self) -> Option<Tensor> {
        let sigma = self.joint_scales.as_ref()?;
        let dims: Vec<usize> = self.loadings.iter().map(|m| m.nrows()).collect();
        let mut out = Tensor::zeros(dims).ok()?;
        for (r, s) in sigma.iter().enumerate() {
            let cols: Vec<DVector<f64>> = self.loadings.iter().map(|m| m.column(r).into_owned()).collect();
            let term = outer_product(&cols).ok()?;
            out.values.iter_mut().zip(&term.values).for_each(|(o, t)| *o += s * t);
        }
        Some(out)
    }
}

fn joint_scales(tensor: &Tensor, loadings: &[DMatrix<f64>], rank: usize) -> Option<Vec<f64>> {
    let mut gram = DMatrix::from_element(rank, rank, 1.0);
    for m in loadings {
        let inner = m.transpose() * m;
        gram.component_mul_assign(&inner);
    }
    let mut rhs = DVector::zeros(rank);
    for (off, &v) in tensor.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let idx = tensor.multi_index(off);
        for r in 0..rank {
            rhs[r] += v * idx.iter().zip(loadings).map(|(&i, m)| m[(i, r)]).product::<f64>();
        }
    }
    let chol = gram.cholesky()?;
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// Mode-wise PCA with `rank` factors.
pub fn tensor_pca(tensor: &Tensor, rank: usize) -> Result<TensorFactorFit> {
    let min_dim = tensor.dims.iter().copied().min().unwrap_or(0);
    if rank == 0 || rank > min_dim {
        return invalid(format!("rank must lie in 1..={min_dim}, got {rank}"));
    }
    let mut loadings = Vec::with_capacity(tensor.order());
    let mut scales = Vec::with_capacity(tensor.order());
    let mut spectra = Vec::with_capacity(tensor.order());
    for mode in 1..=tensor.order() {
        let y = matricize(tensor, mode)?;
        let (vals, mut vecs) = leading_eigenpairs(&y, rank);
        for mut col in vecs.column_iter_mut() {
            canonical_sign(col.as_mut_slice());
        }
        scales.push(vals[..rank].iter().map(|v| v.max(0.0)).collect());
        spectra.push(vals);
        loadings.push(vecs);
    }
    let joint = joint_scales(tensor, &loadings, rank);
    Ok(TensorFactorFit { rank, loadings, scales, spectra, joint_scales: joint })
}

/// `S = max_{k < r <= K} (s_r - s_{r+1}) / (s_{r+1} - s_{r+2})` over a
/// descending spectrum `s` indexed from 1.
pub fn eigenvalue_ratio_stat(eigenvalues: &[f64], k: usize, cap: usize) -> Result<f64> {
    if k >= cap {
        return invalid(format!("need k < K, got k = {k}, K = {cap}"));
    }
    if eigenvalues.len() < cap + 2 {
        return invalid(format!("need at least K + 2 = {} eigenvalues, got {}", cap + 2, eigenvalues.len()));
    }
    let mut best = f64::NEG_INFINITY;
    for r in k + 1..=cap {
        let num = eigenvalues[r - 1] - eigenvalues[r];
        let den = eigenvalues[r] - eigenvalues[r + 1];
        if den == 0.0 {
            return Err(Error::DegenerateSpectrum(format!("zero eigenvalue gap at r = {}", r + 1)));
        }
        best = best.max(num / den);
    }
    Ok(best)
}

/// Default search cap `K = min(8, min_j N_j - 2)`.
pub fn default_search_cap(dims: &[usize]) -> usize {
    dims.iter().copied().min().unwrap_or(0).saturating_sub(2).min(8)
}

/// Empirical distribution of the simulated null statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    /// Draws in simulation order.
    pub draws: Vec<f64>,
    sorted: Vec<f64>,
}

impl NullDistribution {
    pub fn from_draws(draws: Vec<f64>) -> Self {
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        Self { draws, sorted }
    }

    /// `F_m(x) = m^{-1} #{Z_i <= x}`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|z| *z <= x) as f64 / self.sorted.len() as f64
    }

    /// Empirical quantile (lower, order statistic `ceil(q m)`).
    pub fn quantile(&self, q: f64) -> f64 {
        let m = self.sorted.len();
        let i = ((q * m as f64).ceil() as usize).clamp(1, m);
        self.sorted[i - 1]
    }
}

fn gaussian_top_eigenvalues(n: usize, count: usize, master: u64, draw: u64) -> Vec<f64> {
    let mut rng = stream_rng(master, draw);
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i == j {
                m[(i, i)] = std::f64::consts::SQRT_2 * z;
            } else {
                m[(i, j)] = z;
                m[(j, i)] = z;
            }
        }
    }
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.truncate(count);
    vals
}

fn null_statistic(xi: &[f64], span: usize) -> f64 {
    (1..=span)
        .map(|r| {
            let den = xi[r] - xi[r + 1];
            if den == 0.0 {
                f64::INFINITY
            } else {
                (xi[r - 1] - xi[r]) / den
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Simulates `m` draws of `Z = max_{0 < r <= K-k} (xi_r - xi_{r+1}) /
/// (xi_{r+1} - xi_{r+2})`, with `xi` the top `K - k + 2` eigenvalues of an
/// `N x N` symmetric Gaussian matrix (off-diagonal variance 1, diagonal 2).
/// Draw `i` uses generator stream `i` of `seed`.
pub fn simulate_null(n: usize, cap: usize, k: usize, m: usize, seed: u64) -> Result<NullDistribution> {
    if k >= cap {
        return invalid(format!("need k < K, got k = {k}, K = {cap}"));
    }
    let span = cap - k;
    if m == 0 {
        return invalid("need at least one draw");
    }
    if n < span + 2 {
        return invalid(format!("matrix size {n} is below K - k + 2 = {}", span + 2));
    }
    let draws: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|i| null_statistic(&gaussian_top_eigenvalues(n, span + 2, seed, i), span))
        .collect();
    Ok(NullDistribution::from_draws(draws))
}

/// `min(1, (2/d) sum p_j)`.
pub fn combine_p_values(p: &[f64]) -> f64 {
    if p.is_empty() {
        return 1.0;
    }
    (2.0 * p.iter().sum::<f64>() / p.len() as f64).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTest {
    pub mode: usize,
    pub dim: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    /// Reason the mode was excluded, if it was.
    pub degenerate: Option<String>,
    /// `N_j` exceeds the number of fibres, so the spectrum has structural zeros.
    pub exceeds_fibre_count: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTestReport {
    pub modes: Vec<ModeTest>,
    pub p_mean: f64,
    pub k: usize,
    pub cap: usize,
    pub draws: usize,
    pub seed: u64,
}

/// Tests `H0: at most k factors` against `k < R <= K` (`K = cap`, default
/// [`default_search_cap`]). Degenerate modes are excluded from the
/// combination and flagged.
pub fn rank_test(tensor: &Tensor, k: usize, cap: Option<usize>, draws: usize, seed: u64) -> Result<RankTestReport> {
    let cap = cap.unwrap_or_else(|| default_search_cap(&tensor.dims));
    if k >= cap {
        return invalid(format!("need k < K, got k = {k}, K = {cap}"));
    }
    let mut nulls: Vec<(usize, NullDistribution)> = Vec::new();
    let mut modes = Vec::with_capacity(tensor.order());
    for mode in 1..=tensor.order() {
        let dim = tensor.dims[mode - 1];
        let fibres = tensor.values.len() / dim;
        let spectrum = mode_spectrum(tensor, mode)?;
        let mut test = ModeTest {
            mode,
            dim,
            statistic: None,
            p_value: None,
            degenerate: None,
            exceeds_fibre_count: dim > fibres,
        };
        match eigenvalue_ratio_stat(&spectrum, k, cap) {
            Ok(s) => {
                if !nulls.iter().any(|(n, _)| *n == dim) {
                    nulls.push((dim, simulate_null(dim, cap, k, draws, seed)?));
                }
                let null = &nulls.iter().find(|(n, _)| *n == dim).expect("cached").1;
                test.statistic = Some(s);
                test.p_value = Some(1.0 - null.cdf(s));
            }
            Err(Error::DegenerateSpectrum(msg)) => {
                log::warn!("mode {mode} excluded: {msg}");
                test.degenerate = Some(msg);
            }
            Err(e) => return Err(e),
        }
        modes.push(test);
    }
    let p: Vec<f64> = modes.iter().filter_map(|m| m.p_value).collect();
    if p.is_empty() {
        return Err(Error::DegenerateSpectrum("every mode has a degenerate spectrum".into()));
    }
    Ok(RankTestReport { modes, p_mean: combine_p_values(&p), k, cap, draws, seed })
}

/// Reads a long-format CSV: one column per mode with 1-based indices, then a
/// `value` column. Index column names become the mode labels and every cell
/// must appear exactly once.
pub fn read_tensor_csv(path: &Path) -> Result<Tensor> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 2 || headers.last().map(String::as_str) != Some("value") {
        return Err(Error::Parse(format!("{}: expected index columns followed by `value`", path.display())));
    }
    let d = headers.len() - 1;
    let mut entries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |f: &str| Error::Parse(format!("{}: row {}: bad field `{f}`", path.display(), line + 2));
        let mut idx = Vec::with_capacity(d);
        for f in record.iter().take(d) {
            let i: usize = f.trim().parse().map_err(|_| bad(f))?;
            if i == 0 {
                return Err(bad(f));
            }
            idx.push(i - 1);
        }
        let v: f64 = record.get(d).ok_or_else(|| bad(""))?.trim().parse().map_err(|_| bad(&record[d]))?;
        entries.push((idx, v));
    }
    let dims: Vec<usize> = (0..d).map(|j| entries.iter().map(|(i, _)| i[j] + 1).max().unwrap_or(0)).collect();
    let mut t = Tensor::zeros(dims)?.with_labels(headers[..d].to_vec())?;
    let mut seen = vec![false; t.values.len()];
    for (idx, v) in entries {
        let off = t.offset(&idx);
        if seen[off] {
            return Err(Error::Parse(format!("{}: duplicate cell {:?}", path.display(), idx)));
        }
        seen[off] = true;
        t.values[off] = v;
    }
    if let Some(off) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("{}: missing cell {:?}", path.display(), t.multi_index(off))));
    }
    Ok(t)
}

pub fn write_tensor_csv(tensor: &Tensor, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = tensor.labels.clone();
    header.push("value".into());
    w.write_record(&header)?;
    for (off, v) in tensor.values.iter().enumerate() {
        let mut row: Vec<String> = tensor.multi_index(off).iter().map(|i| (i + 1).to_string()).collect();
        row.push(format!("{v}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Binary layout, all little-endian: magic `TNSR`, `u32` version (1), `u32`
/// order `d`, `d` x `u64` dims, then the `f64` values first index fastest.
pub fn write_tensor_binary<W: Write>(tensor: &Tensor, mut out: W) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(tensor.order() as u32).to_le_bytes())?;
    for &n in &tensor.dims {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in &tensor.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_binary<R: Read>(mut input: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Parse("not a tensor file (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != BINARY_VERSION {
        return Err(Error::Parse(format!("unsupported tensor file version {version}")));
    }
    input.read_exact(&mut word)?;
    let d = u32::from_le_bytes(word) as usize;
    let mut long = [0u8; 8];
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        input.read_exact(&mut long)?;
        dims.push(usize::try_from(u64::from_le_bytes(long)).map_err(|_| Error::Parse("dimension overflow".into()))?);
    }
    let count: usize = dims.iter().product();
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut long)?;
        values.push(f64::from_le_bytes(long));
    }
    Tensor::new(dims, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> Tensor {
        Tensor::new(vec![3, 4, 2], (1..=24).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn example_unfoldings() {
        let t = example();
        let m1 = matricize(&t, 1).unwrap();
        assert_eq!(m1.shape(), (3, 8));
        let row: Vec<f64> = m1.row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 4.0, 7.0, 10.0, 13.0, 16.0, 19.0, 22.0]);
        let m2 = matricize(&t, 2).unwrap();
        assert_eq!(m2.shape(), (4, 6));
        let row: Vec<f64> = m2.row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 2.0, 3.0, 13.0, 14.0, 15.0]);
        let row: Vec<f64> = m2.row(3).iter().copied().collect();
        assert_eq!(row, vec![10.0, 11.0, 12.0, 22.0, 23.0, 24.0]);
        let m3 = matricize(&t, 3).unwrap();
        assert_eq!(m3.shape(), (2, 12));
        let row: Vec<f64> = m3.row(1).iter().copied().collect();
        assert_eq!(row, (13..=24).map(f64::from).collect::<Vec<_>>());
        assert!(matricize(&t, 0).is_err());
        assert!(matricize(&t, 4).is_err());
    }

    #[test]
    fn ratio_examples() {
        let s = [10.0, 5.0, 1.0, 0.5, 0.25];
        assert_eq!(eigenvalue_ratio_stat(&s, 0, 2).unwrap(), 8.0);
        assert_eq!(eigenvalue_ratio_stat(&s, 1, 2).unwrap(), 8.0);
        assert_eq!(eigenvalue_ratio_stat(&[4.0, 3.0, 2.0, 1.0, 0.0], 0, 3).unwrap(), 1.0);
        assert!(matches!(eigenvalue_ratio_stat(&[3.0, 2.0, 1.0, 1.0], 0, 2), Err(Error::DegenerateSpectrum(_))));
        assert!(eigenvalue_ratio_stat(&s, 2, 2).is_err());
        assert!(eigenvalue_ratio_stat(&s, 0, 4).is_err());
    }

    #[test]
    fn p_value_combination() {
        assert!((combine_p_values(&[0.1, 0.2, 0.3]) - 0.4).abs() < 1e-15);
        assert_eq!(combine_p_values(&[1.0, 1.0, 1.0]), 1.0);
    }

    #[test]
    fn null_is_seeded_and_nonnegative() {
        let a = simulate_null(20, 3, 1, 50, 9).unwrap();
        let b = simulate_null(20, 3, 1, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.draws.iter().all(|z| *z >= 0.0));
        assert_ne!(a, simulate_null(20, 3, 1, 50, 10).unwrap());
        assert_eq!(a.cdf(f64::INFINITY), 1.0);
        assert!(simulate_null(3, 3, 1, 5, 0).is_err());
    }

    #[test]
    fn zero_tensor_has_zero_scales() {
        let fit = tensor_pca(&Tensor::zeros(vec![3, 4, 5]).unwrap(), 2).unwrap();
        assert!(fit.scales.iter().flatten().all(|s| *s == 0.0));
        for m in &fit.loadings {
            for c in m.column_iter() {
                assert!((c.norm() - 1.0).abs() < 1e-10);
            }
        }
        assert!(tensor_pca(&example(), 3).is_err());
    }

    #[test]
    fn rank_one_recovery() {
        let l = DVector::from_vec(vec![1.0, 2.0, 2.0]) / 3.0;
        let m = DVector::from_vec(vec![0.6, 0.0, -0.8, 0.0]);
        let f = DVector::from_vec(vec![0.0, 1.0]);
        let mut t = outer_product(&[l.clone(), m.clone(), f.clone()]).unwrap();
        t.values.iter_mut().for_each(|v| *v *= 5.0);
        let fit = tensor_pca(&t, 1).unwrap();
        for (j, truth) in [l, m, f].iter().enumerate() {
            assert!((fit.scales[j][0] - 25.0).abs() < 1e-10);
            assert!(fit.loadings[j].column(0).dot(truth).abs() > 1.0 - 1e-10);
        }
        let sigma = fit.joint_scales.clone().unwrap();
        assert!((sigma[0].abs() - 5.0).abs() < 1e-10);
        let back = fit.reconstruct().unwrap();
        let err: f64 = back.values().iter().zip(t.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn unbalanced_mode_uses_small_gram() {
        let t = Tensor::new(vec![7, 2], (0..14).map(|i| ((i * 5) % 9) as f64 - 3.0).collect()).unwrap();
        let s = mode_spectrum(&t, 1).unwrap();
        assert_eq!(s.len(), 7);
        let y = matricize(&t, 1).unwrap();
        let direct = sym_eigenvalues_desc(&(&y * y.transpose()));
        for (a, b) in s.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
        let fit = tensor_pca(&t, 2).unwrap();
        let (_, vecs) = sym_eigen_desc(&(&y * y.transpose()));
        for r in 0..2 {
            assert!(fit.loadings[0].column(r).dot(&vecs.column(r)).abs() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn binary_round_trip() {
        let t = example();
        let mut buf = Vec::new();
        write_tensor_binary(&t, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 3 * 8 + 24 * 8);
        assert_eq!(read_tensor_binary(buf.as_slice()).unwrap(), t);
        buf[0] = b'X';
        assert!(read_tensor_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = example().with_labels(vec!["row".into(), "col".into(), "time".into()]).unwrap();
        write_tensor_csv(&t, &path).unwrap();
        assert_eq!(read_tensor_csv(&path).unwrap(), t);
        std::fs::write(&path, "i1,i2,value\n1,1,2.0\n2,2,1.0\n").unwrap();
        assert!(matches!(read_tensor_csv(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn default_cap() {
        assert_eq!(default_search_cap(&[20, 30, 40]), 8);
        assert_eq!(default_search_cap(&[6, 30]), 4);
    }
}
