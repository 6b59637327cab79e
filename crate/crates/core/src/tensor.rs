//! Dense K-mode tensors and the three primitives everything else is built on:
//! vectorization, mode-k matricization and the k-mode product.
//!
//! Storage is linearized with the **first index varying fastest**: for a tensor of
//! shape `(m_0, ..., m_{K-1})` the element at `(i_0, ..., i_{K-1})` lives at
//!
//! ```text
//! lin(i) = i_0 + m_0 * (i_1 + m_1 * (i_2 + ... ))
//! ```
//!
//! Modes are zero-based in this crate. The mode-k unfolding places the mode-k
//! fibers in columns, with the remaining indices decoded from the column index
//! `c` with the lowest-numbered mode fastest:
//!
//! ```text
//! c = sum_{l != k} i_l * J_l,   J_l = prod_{n < l, n != k} m_n
//! ```

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Strides of mode `mode` in a first-index-fastest layout: the number of
/// elements before it (`left`), its size, and the number of slabs after it
/// (`right`). Element `(a, p, b)` sits at `a + left * (p + size * b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeLayout {
    pub left: usize,
    pub size: usize,
    pub right: usize,
}

impl ModeLayout {
    pub fn of(shape: &[usize], mode: usize) -> Self {
        let left = shape[..mode].iter().product();
        let right = shape[mode + 1..].iter().product();
        Self {
            left,
            size: shape[mode],
            right,
        }
    }

    #[inline]
    pub fn index(&self, a: usize, p: usize, b: usize) -> usize {
        a + self.left * (p + self.size * b)
    }
}

impl DenseTensor {
    /// Builds a tensor from values already in first-index-fastest order.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            values: vec![0.0; len],
        })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.values.fill(value);
        Ok(t)
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        let mut values = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            values.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Ok(Self { shape, values })
    }

    /// Inverse of [`vectorize`](Self::vectorize).
    pub fn devectorize(values: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), values.to_vec())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut lin = 0;
        for (&i, &m) in idx.iter().zip(&self.shape).rev() {
            debug_assert!(i < m);
            lin = lin * m + i;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let lin = self.linear_index(idx);
        self.values[lin] = value;
    }

    /// `vec(T)`, first index fastest.
    pub fn vectorize(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn layout(&self, mode: usize) -> Result<ModeLayout> {
        self.check_mode(mode)?;
        Ok(ModeLayout::of(&self.shape, mode))
    }

    /// Mode-`mode` unfolding: an `m_k x (m / m_k)` matrix whose columns are the
    /// mode-`mode` fibers.
    pub fn matricize(&self, mode: usize) -> Result<Matricization> {
        let lay = self.layout(mode)?;
        // With first-index-fastest storage the column index a + left*b is
        // exactly the ordering described in the module docs.
        let matrix = DMatrix::from_fn(lay.size, lay.left * lay.right, |p, c| {
            let (a, b) = (c % lay.left, c / lay.left);
            self.values[lay.index(a, p, b)]
        });
        Ok(Matricization {
            mode,
            shape: self.shape.clone(),
            matrix,
        })
    }

    /// `T x_k A` for a square `A` of size `m_k`.
    pub fn mode_product(&self, a: &DMatrix<f64>, mode: usize) -> Result<Self> {
        let lay = self.layout(mode)?;
        if a.nrows() != lay.size || a.ncols() != lay.size {
            return Err(Error::DimensionMismatch(format!(
                "mode {mode} has size {}, matrix is {}x{}",
                lay.size,
                a.nrows(),
                a.ncols()
            )));
        }
        let mut out = vec![0.0; self.values.len()];
        let mut fiber = vec![0.0; lay.size];
        for b in 0..lay.right {
            for aa in 0..lay.left {
                for (p, f) in fiber.iter_mut().enumerate() {
                    *f = self.values[lay.index(aa, p, b)];
                }
                for j in 0..lay.size {
                    let mut acc = 0.0;
                    for (i, f) in fiber.iter().enumerate() {
                        acc += a[(j, i)] * f;
                    }
                    out[lay.index(aa, j, b)] = acc;
                }
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            values: out,
        })
    }

    /// `T x {A_0, ..., A_{K-1}}`: one mode product per mode.
    pub fn multi_mode_product(&self, mats: &[DMatrix<f64>]) -> Result<Self> {
        if mats.len() != self.order() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for a {}-mode tensor",
                mats.len(),
                self.order()
            )));
        }
        let mut out = self.clone();
        for (k, a) in mats.iter().enumerate() {
            out = out.mode_product(a, k)?;
        }
        Ok(out)
    }

    /// Elementwise product with a tensor of the same shape.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            values,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            values,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matricization {
    pub mode: usize,
    /// Shape of the source tensor, needed to fold back.
    pub shape: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl Matricization {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Refold into a tensor. Also accepts a matrix of the same size that was
    /// produced from the unfolding (e.g. `A * X_(k)`).
    pub fn fold(&self) -> Result<DenseTensor> {
        fold(&self.matrix, self.mode, &self.shape)
    }
}

/// Inverse of mode-`mode` matricization for a tensor of shape `shape`.
pub fn fold(matrix: &DMatrix<f64>, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    validate_shape(shape)?;
    if mode >= shape.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: shape.len(),
        });
    }
    let lay = ModeLayout::of(shape, mode);
    if matrix.nrows() != lay.size || matrix.ncols() != lay.left * lay.right {
        return Err(Error::DimensionMismatch(format!(
            "cannot fold a {}x{} matrix along mode {mode} of {shape:?}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut values = vec![0.0; lay.size * lay.left * lay.right];
    for c in 0..matrix.ncols() {
        let (a, b) = (c % lay.left, c / lay.left);
        for p in 0..lay.size {
            values[lay.index(a, p, b)] = matrix[(p, c)];
        }
    }
    DenseTensor::new(shape.to_vec(), values)
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidShape(
            "a tensor needs at least one mode".into(),
        ));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape(format!(
            "mode sizes must be positive, got {shape:?}"
        )));
    }
    Ok(())
}

/// Advance a multi-index in first-index-fastest order.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for (i, &m) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < m {
            return;
        }
        *i = 0;
    }
}
