//! Kronecker sums and products of per-mode factors.
//!
//! The apply form `sum_k T x_k Psi_k` is authoritative. Dense materializations
//! are defined so that `M * vec(T) == vec(kron_sum_apply(F, T))` under the
//! first-index-fastest vectorization, which makes the mode-0 factor the
//! innermost Kronecker factor:
//!
//! ```text
//! M = sum_k I_{right_k} (x) Psi_k (x) I_{left_k}
//! ```
//!
//! with `left_k = prod_{l<k} m_l` and `right_k = prod_{l>k} m_l`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, ModeLayout};

/// Largest `m` for which dense `m x m` operators are built.
pub const MATERIALIZE_CAP: usize = 4096;

/// A symmetric `m_k x m_k` factor. Symmetry is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SymFactor {
    values: DMatrix<f64>,
}

impl SymFactor {
    /// Rejects matrices that are not square or not exactly symmetric.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "factor must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::InvalidShape("factor must be at least 1x1".into()));
        }
        let n = values.nrows();
        for i in 0..n {
            for j in i + 1..n {
                if values[(i, j)] != values[(j, i)] {
                    return Err(Error::NotSymmetric(format!(
                        "entries ({i},{j})={} and ({j},{i})={} differ",
                        values[(i, j)],
                        values[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    /// Averages a square matrix with its transpose.
    pub fn symmetrized(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Self::new(values);
        }
        let mut s = (&values + values.transpose()) * 0.5;
        // averaging is exact-symmetric only after mirroring one triangle
        let n = s.nrows();
        for i in 0..n {
            for j in i + 1..n {
                s[(j, i)] = s[(i, j)];
            }
        }
        Self::new(s)
    }

    pub fn identity(m: usize) -> Self {
        Self {
            values: DMatrix::identity(m, m),
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            values: DMatrix::zeros(m, m),
        }
    }

    pub fn mode_size(&self) -> usize {
        self.values.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Writes `v` into both `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.values[(i, j)] = v;
        self.values[(j, i)] = v;
    }

    /// Copy with the diagonal zeroed.
    pub fn off_diagonal(&self) -> Self {
        let mut values = self.values.clone();
        values.fill_diagonal(0.0);
        Self { values }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.values.diagonal()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ordered per-mode factors `Psi_0, ..., Psi_{K-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorList {
    factors: Vec<SymFactor>,
}

impl FactorList {
    pub fn new(factors: Vec<SymFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidShape("need at least one factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[SymFactor] {
        &self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(SymFactor::mode_size).collect()
    }

    /// Total number of variables `m = prod_k m_k`.
    pub fn size(&self) -> usize {
        self.factors.iter().map(SymFactor::mode_size).product()
    }

    fn check_tensor(&self, t: &DenseTensor) -> Result<()> {
        if t.shape() != self.shape().as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "factors have shape {:?}, tensor has {:?}",
                self.shape(),
                t.shape()
            )));
        }
        Ok(())
    }
}

/// `sum_k T x_k Psi_k`.
pub fn kron_sum_apply(f: &FactorList, t: &DenseTensor) -> Result<DenseTensor> {
    f.check_tensor(t)?;
    let mut out = DenseTensor::zeros(t.shape().to_vec())?;
    for (k, psi) in f.factors.iter().enumerate() {
        let term = t.mode_product(psi.matrix(), k)?;
        for (o, v) in out.values_mut().iter_mut().zip(term.values()) {
            *o += v;
        }
    }
    Ok(out)
}

pub fn kron_sum_materialize(f: &FactorList) -> Result<DMatrix<f64>> {
    kron_sum_materialize_with_cap(f, MATERIALIZE_CAP)
}

pub fn kron_sum_materialize_with_cap(f: &FactorList, cap: usize) -> Result<DMatrix<f64>> {
    let shape = f.shape();
    let m = check_cap(&shape, cap)?;
    let mut out = DMatrix::zeros(m, m);
    for (k, psi) in f.factors.iter().enumerate() {
        embed_mode(&mut out, &shape, k, psi.matrix());
    }
    Ok(out)
}

/// Adds `I_right (x) A (x) I_left` for mode `k` into `out`.
pub(crate) fn embed_mode(out: &mut DMatrix<f64>, shape: &[usize], k: usize, a: &DMatrix<f64>) {
    let lay = ModeLayout::of(shape, k);
    for b in 0..lay.right {
        for aa in 0..lay.left {
            for p in 0..lay.size {
                let row = lay.index(aa, p, b);
                for q in 0..lay.size {
                    let v = a[(p, q)];
                    if v != 0.0 {
                        out[(row, lay.index(aa, q, b))] += v;
                    }
                }
            }
        }
    }
}

/// `Psi_{K-1} (x) ... (x) Psi_0`, the Kronecker product under the same
/// vectorization convention as [`kron_sum_materialize`].
pub fn kron_product_materialize(f: &FactorList) -> Result<DMatrix<f64>> {
    check_cap(&f.shape(), MATERIALIZE_CAP)?;
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for psi in f.factors.iter().rev() {
        out = out.kronecker(psi.matrix());
    }
    Ok(out)
}

/// `(sum_k Psi_k)^2` materialized as a dense precision matrix.
pub fn squared_ks_precision(f: &FactorList) -> Result<DMatrix<f64>> {
    let m = kron_sum_materialize(f)?;
    Ok(symmetric_square(&m))
}

/// `M * M` for symmetric `M`, with the result mirrored to be exactly symmetric.
pub(crate) fn symmetric_square(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sq = m * m;
    let n = sq.nrows();
    for i in 0..n {
        for j in i + 1..n {
            sq[(j, i)] = sq[(i, j)];
        }
    }
    sq
}

fn check_cap(shape: &[usize], cap: usize) -> Result<usize> {
    let m = shape
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .unwrap_or(usize::MAX);
    if m > cap {
        return Err(Error::SizeCapExceeded { size: m, cap });
    }
    Ok(m)
}

/// Spectral form of a Kronecker sum: per-mode eigenvectors `U_k` and the
/// eigenvalue tensor `Lambda[i] = sum_k lambda_k[i_k]`.
#[derive(Debug, Clone)]
pub struct KsEigen {
    pub vectors: Vec<DMatrix<f64>>,
    pub mode_values: Vec<DVector<f64>>,
    pub values: DenseTensor,
}

pub fn ks_eigen(f: &FactorList) -> Result<KsEigen> {
    let mut vectors = Vec::with_capacity(f.order());
    let mut mode_values = Vec::with_capacity(f.order());
    for psi in f.factors() {
        let eig = psi.matrix().clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSymmetric(
                "eigendecomposition produced non-finite values".into(),
            ));
        }
        vectors.push(eig.eigenvectors);
        mode_values.push(eig.eigenvalues);
    }
    let values = DenseTensor::from_fn(f.shape(), |idx| {
        idx.iter().zip(&mode_values).map(|(&i, lam)| lam[i]).sum()
    })?;
    Ok(KsEigen {
        vectors,
        mode_values,
        values,
    })
}

impl KsEigen {
    pub fn min_value(&self) -> f64 {
        self.values
            .values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn transposed(&self) -> Vec<DMatrix<f64>> {
        self.vectors.iter().map(|u| u.transpose()).collect()
    }

    /// `U (Lambda . (U^T T))`, equal to `kron_sum_apply`.
    pub fn apply(&self, t: &DenseTensor) -> Result<DenseTensor> {
        let z = t.multi_mode_product(&self.transposed())?;
        let z = z.hadamard(&self.values)?;
        z.multi_mode_product(&self.vectors)
    }

    /// Solves `sum_k X x_k Psi_k = T` for `X`. Every eigenvalue must be positive.
    pub fn solve(&self, t: &DenseTensor) -> Result<DenseTensor> {
        let min = self.min_value();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "Kronecker sum has eigenvalue {min}"
            )));
        }
        let mut z = t.multi_mode_product(&self.transposed())?;
        for (v, lam) in z.values_mut().iter_mut().zip(self.values.values()) {
            *v /= lam;
        }
        z.multi_mode_product(&self.vectors)
    }
}
