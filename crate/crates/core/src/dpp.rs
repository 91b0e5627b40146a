//! Determinantal point process machinery.
//!
//! Everything here works on small dense matrices (a few hundred items at
//! most), so matrices are plain row-major `Vec<f64>` buffers and the
//! eigensolver is a cyclic Jacobi sweep.
//!
//! The k-DPP sampler is the classic two-phase spectral algorithm:
//!
//! 1. choose `k` eigenvectors, walking the spectrum from the top and keeping
//!    eigenvector `n` with probability `λ_n e_{k-1}^{n-1} / e_k^n`;
//! 2. repeatedly pick an item `i` with probability `Σ_v v_i² / |V|`, then
//!    replace `V` by an orthonormal basis of its subspace orthogonal to the
//!    `i`-th standard basis vector.

use rand::seq::index;
use rand::{Rng, RngCore};
use thiserror::Error;

/// Columns with a smaller norm are treated as the zero vector.
pub const ZERO_NORM_TOL: f64 = 1e-9;
/// Eigenvalues below this are clamped to exactly zero.
pub const EIGEN_ZERO_TOL: f64 = 1e-10;
/// Eigenvalues more negative than this mean the kernel was not PSD.
pub const NEGATIVE_EIGEN_TOL: f64 = -1e-8;
/// Allowed asymmetry of a kernel matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;

const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const GS_DROP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DppError {
    #[error("feature matrix needs at least one column")]
    NoItems,
    #[error("column {index} has dimension {got}, expected {expected}")]
    RaggedColumns {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("kernel must be square: {len} entries is not {n}x{n}")]
    NotSquare { n: usize, len: usize },
    #[error("kernel is not symmetric: |L[{i}][{j}] - L[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("kernel is not positive semi-definite: eigenvalue {value:e}")]
    NotPsd { value: f64 },
    #[error("non-finite kernel entry at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("Jacobi eigensolver did not converge on a {n}x{n} matrix: off-diagonal norm {residual:e} after {sweeps} sweeps")]
    NoConvergence {
        n: usize,
        residual: f64,
        sweeps: usize,
    },
    #[error("subset index {index} out of range for {n} items")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("subset contains index {0} more than once")]
    DuplicateIndex(usize),
    #[error("requested {k} items from a ground set of {n}")]
    TooManyItems { k: usize, n: usize },
    #[error("subset has {got} items, expected {k}")]
    WrongSubsetSize { k: usize, got: usize },
    #[error("kernel rank is below {k}: e_k of the spectrum is zero")]
    InsufficientRank { k: usize },
}

pub type Result<T> = std::result::Result<T, DppError>;

/// Item feature vectors, one column per item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        let dim = columns.first().ok_or(DppError::NoItems)?.len();
        for (index, col) in columns.iter().enumerate() {
            if col.len() != dim {
                return Err(DppError::RaggedColumns {
                    index,
                    expected: dim,
                    got: col.len(),
                });
            }
        }
        Ok(Self { dim, columns })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_items(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// Symmetric positive semi-definite kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl KernelMatrix {
    /// Builds a kernel from row-major entries, checking shape, finiteness and
    /// symmetry. Positive semi-definiteness is checked lazily by [`sym_eigen`].
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(DppError::NotSquare {
                n,
                len: entries.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                if !entries[i * n + j].is_finite() {
                    return Err(DppError::NonFinite { i, j });
                }
            }
            for j in (i + 1)..n {
                let gap = (entries[i * n + j] - entries[j * n + i]).abs();
                if gap > SYMMETRY_TOL {
                    return Err(DppError::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let entries: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_row_major(n, entries)
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// The principal submatrix `L_Y` on the given indices.
    pub fn principal_submatrix(&self, subset: &[usize]) -> Result<KernelMatrix> {
        check_subset(subset, self.n)?;
        let s = subset.len();
        let mut entries = Vec::with_capacity(s * s);
        for &i in subset {
            for &j in subset {
                entries.push(self.get(i, j));
            }
        }
        Ok(KernelMatrix { n: s, entries })
    }

    fn plus_identity(&self) -> KernelMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            out.entries[i * self.n + i] += 1.0;
        }
        out
    }
}

/// Eigenpairs of a kernel, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[n]` pairs with `eigenvalues[n]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenSystem {
    /// Determinant as the product of the (clamped) eigenvalues.
    pub fn determinant(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    /// Number of eigenvalues strictly above the zero tolerance.
    pub fn rank(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| l > EIGEN_ZERO_TOL)
            .count()
    }
}

/// Elementary symmetric polynomials `e_j^i` of the eigenvalue prefixes
/// `λ_1..λ_i`, for `j ≤ k` and `i ≤ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EskTable {
    k: usize,
    n: usize,
    values: Vec<f64>,
}

impl EskTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `e_j^i`: degree `j`, first `i` eigenvalues.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * (self.n + 1) + i]
    }

    /// `e_k^n`, the k-DPP normaliser.
    pub fn top(&self) -> f64 {
        self.get(self.k, self.n)
    }
}

/// Scales every column to unit ℓ2 norm; near-zero columns become zero.
pub fn normalize_columns(m: &FeatureMatrix) -> FeatureMatrix {
    let columns = m
        .columns
        .iter()
        .map(|col| {
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < ZERO_NORM_TOL {
                vec![0.0; col.len()]
            } else {
                col.iter().map(|x| x / norm).collect()
            }
        })
        .collect();
    FeatureMatrix {
        dim: m.dim,
        columns,
    }
}

/// `MᵀM`: pairwise dot products of the columns.
pub fn gram_kernel(m: &FeatureMatrix) -> KernelMatrix {
    let n = m.n_items();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let d = dot(&m.columns[i], &m.columns[j]);
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    KernelMatrix { n, entries }
}

/// Determinant of a PSD kernel via diagonally pivoted Cholesky.
///
/// A pivot that falls to the rounding floor means the matrix is singular and
/// the determinant is reported as exactly zero.
pub fn det_psd(l: &KernelMatrix) -> f64 {
    let n = l.n;
    if n == 0 {
        return 1.0;
    }
    let mut a = l.entries.clone();
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return 0.0;
    }
    let tol = 1e-12 * scale.max(1.0);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut det = 1.0;
    for step in 0..n {
        // largest remaining diagonal
        let (p, pivot) = (step..n).map(|r| (r, a[perm[r] * n + perm[r]])).fold(
            (step, f64::NEG_INFINITY),
            |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            },
        );
        if pivot <= tol {
            return 0.0;
        }
        perm.swap(step, p);
        det *= pivot;
        let pr = perm[step];
        // Schur complement update on the remaining rows/cols.
        for r in (step + 1)..n {
            let ri = perm[r];
            let factor = a[ri * n + pr] / pivot;
            if factor == 0.0 {
                continue;
            }
            for &ci in &perm[(step + 1)..n] {
                a[ri * n + ci] -= factor * a[pr * n + ci];
            }
        }
    }
    if det < 0.0 {
        0.0
    } else {
        det
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back ascending; values below [`EIGEN_ZERO_TOL`] are
/// clamped to zero and anything below [`NEGATIVE_EIGEN_TOL`] is rejected.
pub fn sym_eigen(l: &KernelMatrix) -> Result<EigenSystem> {
    let n = l.n;
    let mut a = l.entries.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_OFF_TOL * frob.max(1.0);

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += 2.0 * a[p * n + q] * a[p * n + q];
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= tol;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - s * (vrq + tau * vrp);
                    v[r * n + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
        sweeps += 1;
        converged = off_norm(&a) <= tol;
    }
    if !converged {
        return Err(DppError::NoConvergence {
            n,
            residual: off_norm(&a),
            sweeps,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for &c in &order {
        let lambda = a[c * n + c];
        if lambda < NEGATIVE_EIGEN_TOL {
            return Err(DppError::NotPsd { value: lambda });
        }
        eigenvalues.push(if lambda < EIGEN_ZERO_TOL { 0.0 } else { lambda });
        eigenvectors.push((0..n).map(|r| v[r * n + c]).collect());
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Fills the `(k+1) × (n+1)` table of elementary symmetric polynomials with
/// the recurrence `e_j^i = e_j^{i-1} + λ_i e_{j-1}^{i-1}`.
pub fn esk_table(eigenvalues: &[f64], k: usize) -> EskTable {
    let n = eigenvalues.len();
    let width = n + 1;
    let mut values = vec![0.0; (k + 1) * width];
    values[..=n].fill(1.0);
    for j in 1..=k {
        for i in 1..=n {
            values[j * width + i] =
                values[j * width + i - 1] + eigenvalues[i - 1] * values[(j - 1) * width + i - 1];
        }
    }
    EskTable { k, n, values }
}

/// `det(L_Y) / det(L + I)`.
pub fn dpp_subset_probability(l: &KernelMatrix, subset: &[usize]) -> Result<f64> {
    let sub = l.principal_submatrix(subset)?;
    Ok(det_psd(&sub) / det_psd(&l.plus_identity()))
}

/// `det(L_Y) / e_k(λ)` for `|Y| = k`.
pub fn kdpp_subset_probability(l: &KernelMatrix, subset: &[usize], k: usize) -> Result<f64> {
    if subset.len() != k {
        return Err(DppError::WrongSubsetSize {
            k,
            got: subset.len(),
        });
    }
    if k > l.n {
        return Err(DppError::TooManyItems { k, n: l.n });
    }
    let sub = l.principal_submatrix(subset)?;
    let eig = sym_eigen(l)?;
    let norm = esk_table(&eig.eigenvalues, k).top();
    if norm <= 0.0 {
        return Err(DppError::InsufficientRank { k });
    }
    Ok(det_psd(&sub) / norm)
}

/// Outcome of one k-DPP draw.
#[derive(Debug, Clone, PartialEq)]
pub struct KdppSample {
    /// Selected item indices, in selection order.
    pub indices: Vec<usize>,
    /// Number of nonzero eigenvalues of the kernel.
    pub rank: usize,
    /// True when the rank fell below `k` and the tail was filled uniformly.
    pub fallback: bool,
}

/// Samples `k` diverse items from the kernel `L = M̂ᵀM̂` of the normalised
/// feature columns.
///
/// When the feature dimension is below the item count the spectrum is taken
/// from the small `M̂M̂ᵀ` matrix instead; the nonzero eigenpairs agree exactly
/// and the zero eigenvalues never enter the sampler.
pub fn kdpp_sample(m: &FeatureMatrix, k: usize, rng: &mut dyn RngCore) -> Result<KdppSample> {
    let n = m.n_items();
    if k > n {
        return Err(DppError::TooManyItems { k, n });
    }
    let normed = normalize_columns(m);
    let (values, vectors) = if normed.dim < n {
        feature_space_spectrum(&normed)?
    } else {
        let eig = sym_eigen(&gram_kernel(&normed))?;
        (eig.eigenvalues, eig.eigenvectors)
    };
    Ok(sample_from_spectrum(&values, &vectors, n, k, rng))
}

/// Samples `k` items from an explicit kernel.
pub fn kdpp_sample_kernel(l: &KernelMatrix, k: usize, rng: &mut dyn RngCore) -> Result<KdppSample> {
    if k > l.n {
        return Err(DppError::TooManyItems { k, n: l.n });
    }
    let eig = sym_eigen(l)?;
    Ok(sample_from_spectrum(
        &eig.eigenvalues,
        &eig.eigenvectors,
        l.n,
        k,
        rng,
    ))
}

/// Nonzero eigenpairs of `M̂ᵀM̂` recovered from the `dim × dim` matrix
/// `M̂M̂ᵀ`: for `M̂M̂ᵀu = λu`, `v = M̂ᵀu / √λ` is a unit eigenvector of `M̂ᵀM̂`.
fn feature_space_spectrum(m: &FeatureMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = m.dim;
    let n = m.n_items();
    let mut c = vec![0.0; d * d];
    for col in &m.columns {
        for r in 0..d {
            if col[r] == 0.0 {
                continue;
            }
            for s in r..d {
                c[r * d + s] += col[r] * col[s];
            }
        }
    }
    for r in 0..d {
        for s in 0..r {
            c[r * d + s] = c[s * d + r];
        }
    }
    let eig = sym_eigen(&KernelMatrix { n: d, entries: c })?;
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for (lambda, u) in eig.eigenvalues.iter().zip(&eig.eigenvectors) {
        if *lambda <= EIGEN_ZERO_TOL {
            continue;
        }
        let inv = 1.0 / lambda.sqrt();
        let mut v: Vec<f64> = (0..n).map(|i| dot(&m.columns[i], u) * inv).collect();
        // one normalisation pass absorbs the rounding in λ
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        values.push(*lambda);
        vectors.push(v);
    }
    Ok((values, vectors))
}

/// Runs both sampling phases on a spectrum (eigenvalues may include zeros).
fn sample_from_spectrum(
    values: &[f64],
    vectors: &[Vec<f64>],
    n_items: usize,
    k: usize,
    rng: &mut dyn RngCore,
) -> KdppSample {
    let rank = values.iter().filter(|&&l| l > EIGEN_ZERO_TOL).count();
    let (target, fallback) = if rank < k { (rank, true) } else { (k, false) };

    let mut indices = if target == 0 {
        Vec::new()
    } else {
        let chosen = select_eigenvectors(values, target, rng);
        let basis: Vec<Vec<f64>> = chosen.iter().map(|&c| vectors[c].clone()).collect();
        select_items(basis, rng)
    };

    if indices.len() < k {
        let mut taken = vec![false; n_items];
        for &i in &indices {
            taken[i] = true;
        }
        let free: Vec<usize> = (0..n_items).filter(|&i| !taken[i]).collect();
        let need = k - indices.len();
        for pos in index::sample(rng, free.len(), need) {
            indices.push(free[pos]);
        }
    }
    KdppSample {
        indices,
        rank,
        fallback,
    }
}

/// Phase one: pick `k` eigenvector indices.
///
/// Scaling every eigenvalue by a constant leaves the acceptance ratios
/// unchanged, so the spectrum is rescaled to unit mean first to keep the
/// polynomials away from overflow.
fn select_eigenvectors(values: &[f64], k: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let scaled: Vec<f64> = values.iter().map(|l| l / mean).collect();
    let table = esk_table(&scaled, k);

    let mut remaining = k;
    let mut chosen = Vec::with_capacity(k);
    for i in (1..=n).rev() {
        if remaining == 0 {
            break;
        }
        // Once i == remaining every leftover eigenvector must be taken; the
        // ratio is 1 in exact arithmetic.
        let accept = if i == remaining {
            true
        } else {
            let p = scaled[i - 1] * table.get(remaining - 1, i - 1) / table.get(remaining, i);
            rng.random::<f64>() < p
        };
        if accept {
            chosen.push(i - 1);
            remaining -= 1;
        }
    }
    chosen
}

/// Phase two: draw one item per basis vector.
fn select_items(mut basis: Vec<Vec<f64>>, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut picked = Vec::with_capacity(basis.len());
    while !basis.is_empty() {
        let n_items = basis[0].len();
        let weights: Vec<f64> = (0..n_items)
            .map(|i| basis.iter().map(|v| v[i] * v[i]).sum::<f64>())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut item = n_items - 1;
        for (i, w) in weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            if u < *w {
                item = i;
                break;
            }
            u -= w;
            item = i;
        }
        picked.push(item);
        basis = project_out_item(basis, item);
    }
    picked
}

/// Returns an orthonormal basis for the part of `span(basis)` orthogonal to
/// the `item`-th standard basis vector. The output has one fewer vector
/// unless the input was already orthogonal to it.
pub(crate) fn project_out_item(mut basis: Vec<Vec<f64>>, item: usize) -> Vec<Vec<f64>> {
    let pivot = basis
        .iter()
        .enumerate()
        .max_by(|a, b| a.1[item].abs().total_cmp(&b.1[item].abs()))
        .map(|(i, _)| i);
    if let Some(p) = pivot {
        if basis[p][item].abs() > 0.0 {
            let pv = basis.swap_remove(p);
            for v in basis.iter_mut() {
                let f = v[item] / pv[item];
                if f != 0.0 {
                    for (x, y) in v.iter_mut().zip(&pv) {
                        *x -= f * y;
                    }
                }
                v[item] = 0.0;
            }
        }
    }
    modified_gram_schmidt(basis)
}

fn modified_gram_schmidt(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        for u in &out {
            let proj = dot(&v, u);
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < GS_DROP_TOL {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    out
}

fn check_subset(subset: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in subset {
        if i >= n {
            return Err(DppError::IndexOutOfRange { index: i, n });
        }
        if seen[i] {
            return Err(DppError::DuplicateIndex(i));
        }
        seen[i] = true;
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
