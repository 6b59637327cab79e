//! Ground-truth factor generators and samplers for the Sylvester model.
//!
//! All randomness goes through [`ChaCha8Rng`]. Sample `s` of a dataset drawn
//! with seed `seed` uses `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `s`, so each observation is reproducible on its own and samples can be
//! generated in parallel.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kron::{ks_eigen, FactorList, SymFactor};
use crate::tensor::DenseTensor;

/// Which generator to use for one mode.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Ar1 { m: usize, rho: f64 },
    StarBlock { m: usize, block: usize, rho: f64 },
    ErdosRenyi { m: usize, edges: usize, seed: u64 },
}

impl GraphSpec {
    pub fn mode_size(&self) -> usize {
        match *self {
            GraphSpec::Ar1 { m, .. }
            | GraphSpec::StarBlock { m, .. }
            | GraphSpec::ErdosRenyi { m, .. } => m,
        }
    }

    pub fn generate(&self) -> Result<SymFactor> {
        match *self {
            GraphSpec::Ar1 { m, rho } => gen_ar1(m, rho),
            GraphSpec::StarBlock { m, block, rho } => gen_star_block(m, block, rho),
            GraphSpec::ErdosRenyi { m, edges, seed } => gen_erdos_renyi(m, edges, seed),
        }
    }
}

pub fn generate_factors(specs: &[GraphSpec]) -> Result<FactorList> {
    FactorList::new(
        specs
            .iter()
            .map(GraphSpec::generate)
            .collect::<Result<_>>()?,
    )
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must lie in (0, 1), got {rho}"
        )));
    }
    Ok(())
}

fn check_size(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidParameter("mode size must be positive".into()));
    }
    Ok(())
}

/// Precision factor of an AR(1) process: the inverse of `(rho^|i-j|)_{ij}`.
/// It is tridiagonal with `1/(1-rho^2)` at the two ends of the diagonal,
/// `(1+rho^2)/(1-rho^2)` inside, and `-rho/(1-rho^2)` next to the diagonal.
pub fn gen_ar1(m: usize, rho: f64) -> Result<SymFactor> {
    check_size(m)?;
    check_rho(rho)?;
    let s = 1.0 / (1.0 - rho * rho);
    let mut psi = DMatrix::zeros(m, m);
    for i in 0..m {
        let boundary = i == 0 || i + 1 == m;
        psi[(i, i)] = if m == 1 {
            1.0
        } else if boundary {
            s
        } else {
            (1.0 + rho * rho) * s
        };
        if i + 1 < m {
            psi[(i, i + 1)] = -rho * s;
            psi[(i + 1, i)] = -rho * s;
        }
    }
    SymFactor::new(psi)
}

/// AR(1) covariance `(rho^|i-j|)_{ij}`.
pub fn ar1_covariance(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Block-diagonal star covariance: within each block the hub (first index)
/// has covariance `rho` with every leaf, leaves have `rho^2` among themselves.
pub fn star_block_covariance(m: usize, block: usize, rho: f64) -> Result<DMatrix<f64>> {
    check_size(m)?;
    check_rho(rho)?;
    if block == 0 || !m.is_multiple_of(block) {
        return Err(Error::InvalidParameter(format!(
            "block size {block} must divide mode size {m}"
        )));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| {
        if i / block != j / block {
            0.0
        } else if i == j {
            1.0
        } else if i % block == 0 || j % block == 0 {
            rho
        } else {
            rho * rho
        }
    }))
}

/// Precision factor of the star-block covariance. Each block's precision is a
/// star centred on the block's first index.
pub fn gen_star_block(m: usize, block: usize, rho: f64) -> Result<SymFactor> {
    let cov = star_block_covariance(m, block, rho)?;
    if Cholesky::new(cov).is_none() {
        return Err(Error::NotPositiveDefinite(format!(
            "star-block covariance with block {block} and rho {rho}"
        )));
    }
    // Leaves are conditionally independent given the hub: x_leaf = rho*x_hub + noise.
    let s = 1.0 / (1.0 - rho * rho);
    let mut psi = DMatrix::zeros(m, m);
    for start in (0..m).step_by(block) {
        psi[(start, start)] = 1.0 + (block - 1) as f64 * rho * rho * s;
        for leaf in start + 1..start + block {
            psi[(leaf, leaf)] = s;
            psi[(start, leaf)] = -rho * s;
            psi[(leaf, start)] = -rho * s;
        }
    }
    SymFactor::new(psi)
}

/// One selected Erdős–Rényi edge and its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// The edges chosen by [`gen_erdos_renyi`] in the order they are applied.
pub fn erdos_renyi_edges(m: usize, edges: usize, seed: u64) -> Result<Vec<WeightedEdge>> {
    check_size(m)?;
    let pairs = m * (m - 1) / 2;
    if edges > pairs {
        return Err(Error::InvalidParameter(format!(
            "{edges} edges requested but a {m}-node graph has {pairs} pairs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, pairs, edges);
    Ok(picked
        .into_iter()
        .map(|p| {
            let (i, j) = upper_pair(m, p);
            let weight = rng.random_range(0.6..=0.8);
            WeightedEdge { i, j, weight }
        })
        .collect())
}

/// Maps a position in the row-major strict upper triangle to `(i, j)`, `i < j`.
fn upper_pair(m: usize, mut p: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = m - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

/// Diagonally dominant random-graph precision factor: starts from `0.25 I`,
/// and each of `edges` random pairs gets weight `psi ~ U[0.6, 0.8]` subtracted
/// off the diagonal and added to both diagonal entries.
pub fn gen_erdos_renyi(m: usize, edges: usize, seed: u64) -> Result<SymFactor> {
    let chosen = erdos_renyi_edges(m, edges, seed)?;
    let mut a = DMatrix::identity(m, m) * 0.25;
    for e in chosen {
        a[(e.i, e.j)] -= e.weight;
        a[(e.j, e.i)] -= e.weight;
        a[(e.i, e.i)] += e.weight;
        a[(e.j, e.j)] += e.weight;
    }
    SymFactor::new(a)
}

/// `N` observations of a K-mode tensor, stored as a (K+1)-mode tensor with the
/// observation index last. Observation `s` is the contiguous block
/// `values[s*m .. (s+1)*m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    tensor: DenseTensor,
}

impl Dataset {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        if tensor.order() < 2 {
            return Err(Error::InvalidShape(
                "a dataset needs at least one variable mode plus the observation mode".into(),
            ));
        }
        Ok(Self { tensor })
    }

    pub fn from_samples(shape: &[usize], samples: &[Vec<f64>]) -> Result<Self> {
        let m: usize = shape.iter().product();
        let mut values = Vec::with_capacity(m * samples.len());
        for s in samples {
            if s.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "sample has {} values, shape {shape:?} needs {m}",
                    s.len()
                )));
            }
            values.extend_from_slice(s);
        }
        let mut full = shape.to_vec();
        full.push(samples.len());
        Self::new(DenseTensor::new(full, values)?)
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }

    /// Shape of one observation.
    pub fn shape(&self) -> &[usize] {
        let s = self.tensor.shape();
        &s[..s.len() - 1]
    }

    pub fn order(&self) -> usize {
        self.tensor.order() - 1
    }

    pub fn n_obs(&self) -> usize {
        *self.tensor.shape().last().expect("non-empty shape")
    }

    pub fn n_vars(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.values()
    }

    pub fn sample(&self, s: usize) -> &[f64] {
        let m = self.n_vars();
        &self.tensor.values()[s * m..(s + 1) * m]
    }

    pub fn sample_tensor(&self, s: usize) -> DenseTensor {
        DenseTensor::new(self.shape().to_vec(), self.sample(s).to_vec())
            .expect("sample matches shape")
    }
}

/// Generator for observation `sample` of a dataset drawn with `seed`.
pub fn sample_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

/// The white-noise tensor behind observation `sample`.
pub fn standard_normal_tensor(seed: u64, sample: usize, shape: &[usize]) -> Result<DenseTensor> {
    let mut rng = sample_rng(seed, sample);
    let m: usize = shape.iter().product();
    let values = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    DenseTensor::new(shape.to_vec(), values)
}

/// Draws `n` observations `X` solving `sum_k X x_k Psi_k = T` with standard
/// normal `T`, i.e. `vec(X) ~ N(0, (sum Psi_k)^-2)`.
pub fn sample_sylvester(f: &FactorList, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "need at least one observation".into(),
        ));
    }
    let eig = ks_eigen(f)?;
    let min = eig.min_value();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "Kronecker sum has eigenvalue {min}"
        )));
    }
    let shape = f.shape();
    let samples = (0..n)
        .into_par_iter()
        .map(|s| {
            let noise = standard_normal_tensor(seed, s, &shape)?;
            Ok(eig.solve(&noise)?.into_values())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_samples(&shape, &samples)
}

/// Gaussian sampler for a dense precision matrix, factored once and reusable
/// across seeds.
#[derive(Debug, Clone)]
pub struct PrecisionSampler {
    shape: Vec<usize>,
    /// Upper factor `L^T` of `Omega = L L^T`; `x = L^-T z` has covariance
    /// `Omega^-1`.
    upper: DMatrix<f64>,
}

impl PrecisionSampler {
    pub fn new(precision: &DMatrix<f64>, shape: &[usize]) -> Result<Self> {
        let m: usize = shape.iter().product();
        if precision.nrows() != m || precision.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "precision is {}x{}, shape {shape:?} needs {m}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        let chol = Cholesky::new(precision.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("precision matrix".into()))?;
        Ok(Self {
            shape: shape.to_vec(),
            upper: chol.l().transpose(),
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let samples = (0..n)
            .into_par_iter()
            .map(|s| {
                let z = standard_normal_tensor(seed, s, &self.shape)?;
                let x = self
                    .upper
                    .solve_upper_triangular(&DVector::from_vec(z.into_values()))
                    .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
                Ok(x.as_slice().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_samples(&self.shape, &samples)
    }
}

/// Draws `n` observations `vec(X) ~ N(0, precision^-1)` through the Cholesky
/// factor of a dense precision matrix.
pub fn sample_gaussian_precision(
    precision: &DMatrix<f64>,
    shape: &[usize],
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    PrecisionSampler::new(precision, shape)?.sample(n, seed)
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub data: Dataset,
    /// Linear indices of variables with zero spread; these are centred only.
    pub constant: Vec<usize>,
}

/// Centres every variable across observations and scales it to unit standard
/// deviation (population convention, divisor `N`).
pub fn standardize(d: &Dataset) -> Standardized {
    let m = d.n_vars();
    let n = d.n_obs();
    let src = d.values();
    let mut out = src.to_vec();
    let mut constant = Vec::new();
    for i in 0..m {
        let mean = (0..n).map(|s| src[s * m + i]).sum::<f64>() / n as f64;
        let var = (0..n).map(|s| (src[s * m + i] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let degenerate = sd <= 1e-12 * (1.0 + mean.abs());
        if degenerate {
            constant.push(i);
        }
        for s in 0..n {
            let v = src[s * m + i] - mean;
            out[s * m + i] = if degenerate { v } else { v / sd };
        }
    }
    let tensor = DenseTensor::new(d.tensor().shape().to_vec(), out).expect("same shape");
    Standardized {
        data: Dataset { tensor },
        constant,
    }
}
