//! Nodewise coordinate descent for the Sylvester pseudolikelihood.
//!
//! The objective for data `X` with `N` observations is
//!
//! ```text
//! Q = -N sum_i log W_i + 1/2 sum_{s,i} (W_i X_{i,s} + Y_{i,s})^2
//!     + sum_k lambda_k ||Psi_k||_{1,off}
//! Y = sum_k X x_k Psi_k^off
//! ```
//!
//! where `||.||_{1,off}` counts both symmetric entries, i.e. `2 sum_{i<j} |psi_ij|`.
//! `W` is the per-variable diagonal field `sum_k (Psi_k)_{i_k i_k}`; only it and
//! the off-diagonal parts are identifiable.
//!
//! Every update is an exact coordinate minimizer, so `Q` never increases.
//! The solver keeps the residual `R = W . X + Y` up to date: changing one
//! off-diagonal pair of `Psi_k` touches only two mode-k fiber rows of `R`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kron::{embed_mode, symmetric_square, FactorList, SymFactor, MATERIALIZE_CAP};
use crate::synth::Dataset;
use crate::tensor::{DenseTensor, ModeLayout};

/// Estimator state: off-diagonal factor parts and the diagonal field `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    pub offdiag: Vec<SymFactor>,
    pub w: DenseTensor,
}

impl FactorSet {
    pub fn new(offdiag: Vec<SymFactor>, w: DenseTensor) -> Result<Self> {
        let s = Self { offdiag, w };
        s.validate()?;
        Ok(s)
    }

    /// Splits full factors into off-diagonal parts and `W = sum_k diag(Psi_k)`.
    pub fn from_factors(f: &FactorList) -> Result<Self> {
        let diags: Vec<_> = f.factors().iter().map(SymFactor::diagonal).collect();
        let w = DenseTensor::from_fn(f.shape(), |idx| {
            idx.iter().zip(&diags).map(|(&i, d)| d[i]).sum()
        })?;
        Self::new(f.factors().iter().map(SymFactor::off_diagonal).collect(), w)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.offdiag.iter().map(SymFactor::mode_size).collect()
    }

    /// Strict-upper-triangle entries of every off-diagonal factor, mode by mode,
    /// row-major within a mode.
    pub fn beta(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for f in &self.offdiag {
            let m = f.mode_size();
            for i in 0..m {
                for j in i + 1..m {
                    out.push(f.get(i, j));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.offdiag.is_empty() {
            return Err(Error::InvalidShape("need at least one mode".into()));
        }
        if self.w.shape() != self.shape().as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "W has shape {:?}, factors {:?}",
                self.w.shape(),
                self.shape()
            )));
        }
        for (k, f) in self.offdiag.iter().enumerate() {
            if f.diagonal().iter().any(|&d| d != 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "off-diagonal factor {k} has a non-zero diagonal"
                )));
            }
        }
        check_w(self.w.values())
    }
}

fn check_w(w: &[f64]) -> Result<()> {
    match w.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::NonPositiveDiagonal {
            index,
            value: w[index],
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub lambdas: Vec<f64>,
    /// Stop once the largest absolute parameter change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Value assigned to `W_i` when variable `i` is identically zero.
    pub w_floor: f64,
    /// Keep `W` fixed at this value instead of estimating it.
    pub fixed_w: Option<DenseTensor>,
}

impl SolverConfig {
    pub fn new(lambdas: Vec<f64>) -> Self {
        Self {
            lambdas,
            tol: 1e-6,
            max_sweeps: 500,
            w_floor: 1e-12,
            fixed_w: None,
        }
    }

    /// Same penalty on each of `order` modes.
    pub fn uniform(order: usize, lambda: f64) -> Self {
        Self::new(vec![lambda; order])
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn with_fixed_w(mut self, w: DenseTensor) -> Self {
        self.fixed_w = Some(w);
        self
    }

    fn validate(&self, order: usize) -> Result<()> {
        if self.lambdas.len() != order {
            return Err(Error::InvalidParameter(format!(
                "{} penalties for {order} modes",
                self.lambdas.len()
            )));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0)) {
            return Err(Error::InvalidParameter(format!("penalty {l} must be >= 0")));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol {} must be > 0",
                self.tol
            )));
        }
        if !(self.w_floor > 0.0) {
            return Err(Error::InvalidParameter("w_floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Input was not centred; the largest absolute per-variable mean is given.
    NotStandardized { max_abs_mean: f64 },
    /// Both variables of a pair are identically zero, so the pair was skipped.
    DegenerateCoordinate { mode: usize, row: usize, col: usize },
    /// Variable has zero second moment; its `W` entry was set to `w_floor`.
    ZeroSecondMoment { index: usize },
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub factors: FactorSet,
    /// Objective after initialization, then after every sweep.
    pub objective_trace: Vec<f64>,
    /// Largest absolute parameter change of every sweep.
    pub delta_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub warnings: Vec<Warning>,
}

/// `sign(x) * max(|x| - t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold {t} must be >= 0"
        )));
    }
    Ok(shrink(x, t))
}

#[inline]
fn shrink(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Value of the penalized pseudolikelihood at `s`.
pub fn objective(s: &FactorSet, d: &Dataset, lambdas: &[f64]) -> Result<f64> {
    let cd = CoordinateDescent::new(d, s.clone(), lambdas.to_vec())?;
    Ok(cd.objective())
}

/// Exact minimizer of the objective over `(Psi_k)_{row,col}` with everything
/// else held at `s`.
pub fn offdiag_update(
    s: &FactorSet,
    d: &Dataset,
    mode: usize,
    row: usize,
    col: usize,
    lambda: f64,
) -> Result<f64> {
    let mut lambdas = vec![0.0; s.offdiag.len()];
    if mode < lambdas.len() {
        lambdas[mode] = lambda;
    }
    let cd = CoordinateDescent::new(d, s.clone(), lambdas)?;
    cd.coordinate_minimizer(mode, row, col)
}

/// Simultaneous exact minimizer over every `W_i`: the positive root of
/// `a_i W^2 + b_i W - 1 = 0` with `a_i = mean_s X^2`, `b_i = mean_s X Y`.
/// Variables with `a_i == 0` get `w_floor`.
pub fn diag_update(s: &FactorSet, d: &Dataset) -> Result<DenseTensor> {
    let mut cd = CoordinateDescent::new(d, s.clone(), vec![0.0; s.offdiag.len()])?;
    cd.update_diagonal()?;
    Ok(cd.factors().w)
}

/// `(sum_k Psi_k^off (embedded) + diag(W))^2` as a dense matrix.
pub fn reconstruct_omega(s: &FactorSet) -> Result<DMatrix<f64>> {
    let shape = s.shape();
    let m = s.w.len();
    if m > MATERIALIZE_CAP {
        return Err(Error::SizeCapExceeded {
            size: m,
            cap: MATERIALIZE_CAP,
        });
    }
    let mut ks = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s.w.values()));
    for (k, f) in s.offdiag.iter().enumerate() {
        embed_mode(&mut ks, &shape, k, f.matrix());
    }
    Ok(symmetric_square(&ks))
}

pub fn fit(d: &Dataset, cfg: &SolverConfig) -> Result<FitReport> {
    fit_with_observer(d, cfg, |_, _| {})
}

/// Like [`fit`], calling `observe(sweep, state)` after initialization
/// (`sweep == 0`) and after every completed sweep.
pub fn fit_with_observer(
    d: &Dataset,
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &FactorSet),
) -> Result<FitReport> {
    let order = d.order();
    cfg.validate(order)?;
    let mut warnings = Vec::new();

    let max_abs_mean = max_abs_mean(d);
    if max_abs_mean > 1e-8 {
        warnings.push(Warning::NotStandardized { max_abs_mean });
    }

    let shape = d.shape().to_vec();
    let init_w = match &cfg.fixed_w {
        Some(w) => w.clone(),
        None => DenseTensor::filled(shape.clone(), 1.0)?,
    };
    let start = FactorSet::new(shape.iter().map(|&m| SymFactor::zeros(m)).collect(), init_w)?;
    let mut cd = CoordinateDescent::new(d, start, cfg.lambdas.clone())?;
    cd.w_floor = cfg.w_floor;
    let estimate_w = cfg.fixed_w.is_none();
    if estimate_w {
        cd.update_diagonal()?;
    }

    let mut objective_trace = vec![cd.objective()];
    let mut delta_trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    if !objective_trace[0].is_finite() {
        return Err(Error::NonFinite { sweep: 0 });
    }
    observe(0, &cd.factors());

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut delta = cd.sweep_offdiag();
        if estimate_w {
            delta = delta.max(cd.update_diagonal()?);
        }
        let obj = cd.objective();
        if !obj.is_finite() || !delta.is_finite() {
            return Err(Error::NonFinite { sweep: sweeps });
        }
        objective_trace.push(obj);
        delta_trace.push(delta);
        observe(sweeps, &cd.factors());
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    warnings.extend(
        cd.degenerate
            .iter()
            .map(|&(mode, row, col)| Warning::DegenerateCoordinate { mode, row, col }),
    );
    warnings.extend(
        cd.zero_moment
            .iter()
            .map(|&index| Warning::ZeroSecondMoment { index }),
    );
    Ok(FitReport {
        factors: cd.factors(),
        objective_trace,
        delta_trace,
        sweeps,
        converged,
        warnings,
    })
}

fn max_abs_mean(d: &Dataset) -> f64 {
    let m = d.n_vars();
    let n = d.n_obs();
    let mut sums = vec![0.0; m];
    for s in 0..n {
        for (acc, v) in sums.iter_mut().zip(d.sample(s)) {
            *acc += v;
        }
    }
    sums.iter()
        .fold(0.0, |acc, v| acc.max((v / n as f64).abs()))
}

/// Mutable coordinate-descent state over one dataset.
///
/// Exposed so callers can step through individual updates; [`fit`] is the
/// usual entry point.
pub struct CoordinateDescent<'a> {
    data: &'a Dataset,
    shape: Vec<usize>,
    layouts: Vec<ModeLayout>,
    offdiag: Vec<DMatrix<f64>>,
    w: Vec<f64>,
    /// `W . X + Y` over the full (variables x observations) tensor.
    resid: Vec<f64>,
    /// Per mode, `(X_(k) X_(k)^T)_{pp}` over the full data tensor.
    gram_diag: Vec<Vec<f64>>,
    /// `mean_s X_{i,s}^2` per variable.
    second_moment: Vec<f64>,
    lambdas: Vec<f64>,
    w_floor: f64,
    degenerate: BTreeSet<(usize, usize, usize)>,
    zero_moment: BTreeSet<usize>,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(data: &'a Dataset, start: FactorSet, lambdas: Vec<f64>) -> Result<Self> {
        start.validate()?;
        let shape = data.shape().to_vec();
        if start.shape() != shape {
            return Err(Error::DimensionMismatch(format!(
                "factors have shape {:?}, data {:?}",
                start.shape(),
                shape
            )));
        }
        if lambdas.len() != shape.len() {
            return Err(Error::InvalidParameter(format!(
                "{} penalties for {} modes",
                lambdas.len(),
                shape.len()
            )));
        }
        let full = data.tensor();
        let layouts: Vec<_> = (0..shape.len())
            .map(|k| ModeLayout::of(full.shape(), k))
            .collect();

        let x = full.values();
        let gram_diag = layouts
            .iter()
            .map(|lay| {
                let mut g = vec![0.0; lay.size];
                for b in 0..lay.right {
                    for a in 0..lay.left {
                        for (p, gp) in g.iter_mut().enumerate() {
                            let v = x[lay.index(a, p, b)];
                            *gp += v * v;
                        }
                    }
                }
                g
            })
            .collect();

        let m = data.n_vars();
        let n = data.n_obs();
        let mut second_moment = vec![0.0; m];
        for s in 0..n {
            for (acc, v) in second_moment.iter_mut().zip(data.sample(s)) {
                *acc += v * v;
            }
        }
        second_moment.iter_mut().for_each(|v| *v /= n as f64);

        // R = W . X + sum_k X x_k Psi_k^off, built with plain mode products.
        let mut resid: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(idx, v)| start.w.values()[idx % m] * v)
            .collect();
        for (k, f) in start.offdiag.iter().enumerate() {
            let y = full.mode_product(f.matrix(), k)?;
            for (r, v) in resid.iter_mut().zip(y.values()) {
                *r += v;
            }
        }

        Ok(Self {
            data,
            shape,
            layouts,
            offdiag: start
                .offdiag
                .into_iter()
                .map(SymFactor::into_matrix)
                .collect(),
            w: start.w.into_values(),
            resid,
            gram_diag,
            second_moment,
            lambdas,
            w_floor: 1e-12,
            degenerate: BTreeSet::new(),
            zero_moment: BTreeSet::new(),
        })
    }

    pub fn factors(&self) -> FactorSet {
        FactorSet {
            offdiag: self
                .offdiag
                .iter()
                .map(|m| SymFactor::new(m.clone()).expect("updates keep factors symmetric"))
                .collect(),
            w: DenseTensor::new(self.shape.clone(), self.w.clone()).expect("shape of W"),
        }
    }

    pub fn objective(&self) -> f64 {
        let n = self.data.n_obs() as f64;
        let log_term: f64 = self.w.iter().map(|w| w.ln()).sum();
        let fit_term: f64 = self.resid.iter().map(|r| r * r).sum();
        let penalty: f64 = self
            .offdiag
            .iter()
            .zip(&self.lambdas)
            .map(|(f, l)| {
                let m = f.nrows();
                let mut s = 0.0;
                for j in 0..m {
                    for i in 0..j {
                        s += f[(i, j)].abs();
                    }
                }
                2.0 * l * s
            })
            .sum();
        -n * log_term + 0.5 * fit_term + penalty
    }

    /// Returns the minimizing value without changing state.
    pub fn coordinate_minimizer(&self, mode: usize, row: usize, col: usize) -> Result<f64> {
        let (quad, lin) = self.coordinate_quadratic(mode, row, col)?;
        if quad <= 0.0 {
            return Err(Error::DegenerateCoordinate { mode, row, col });
        }
        // Smooth part 1/2 quad t^2 + lin t, penalty 2 lambda |t|.
        Ok(shrink(-lin, 2.0 * self.lambdas[mode]) / quad)
    }

    /// Coefficients of the smooth part of the objective restricted to the
    /// coordinate with that coordinate set to zero.
    fn coordinate_quadratic(&self, mode: usize, row: usize, col: usize) -> Result<(f64, f64)> {
        if mode >= self.shape.len() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.shape.len(),
            });
        }
        let mk = self.shape[mode];
        if !(row < col && col < mk) {
            return Err(Error::InvalidParameter(format!(
                "coordinate ({row}, {col}) must satisfy row < col < {mk}"
            )));
        }
        let lay = self.layouts[mode];
        let x = self.data.values();
        let mut cross = 0.0;
        for b in 0..lay.right {
            for a in 0..lay.left {
                let pi = lay.index(a, row, b);
                let pj = lay.index(a, col, b);
                cross += self.resid[pi] * x[pj] + self.resid[pj] * x[pi];
            }
        }
        let quad = self.gram_diag[mode][row] + self.gram_diag[mode][col];
        let current = self.offdiag[mode][(row, col)];
        Ok((quad, cross - current * quad))
    }

    /// Applies the exact minimizer for one off-diagonal pair and returns the
    /// absolute change.
    pub fn update_offdiag(&mut self, mode: usize, row: usize, col: usize) -> Result<f64> {
        let new = self.coordinate_minimizer(mode, row, col)?;
        let old = self.offdiag[mode][(row, col)];
        let delta = new - old;
        if delta != 0.0 {
            let lay = self.layouts[mode];
            let x = self.data.values();
            for b in 0..lay.right {
                for a in 0..lay.left {
                    let pi = lay.index(a, row, b);
                    let pj = lay.index(a, col, b);
                    self.resid[pi] += delta * x[pj];
                    self.resid[pj] += delta * x[pi];
                }
            }
            self.offdiag[mode][(row, col)] = new;
            self.offdiag[mode][(col, row)] = new;
        }
        Ok(delta.abs())
    }

    /// One pass over every off-diagonal pair: modes ascending, pairs in
    /// lexicographic order. Degenerate pairs are skipped and remembered.
    pub fn sweep_offdiag(&mut self) -> f64 {
        let mut max_delta: f64 = 0.0;
        for k in 0..self.shape.len() {
            let mk = self.shape[k];
            for i in 0..mk {
                for j in i + 1..mk {
                    match self.update_offdiag(k, i, j) {
                        Ok(d) => max_delta = max_delta.max(d),
                        Err(_) => {
                            self.degenerate.insert((k, i, j));
                        }
                    }
                }
            }
        }
        max_delta
    }

    /// Updates every `W_i` at once and returns the largest absolute change.
    pub fn update_diagonal(&mut self) -> Result<f64> {
        let m = self.w.len();
        let n = self.data.n_obs();
        let x = self.data.values();
        let mut b = vec![0.0; m];
        for s in 0..n {
            for i in 0..m {
                let idx = s * m + i;
                let y = self.resid[idx] - self.w[i] * x[idx];
                b[i] += x[idx] * y;
            }
        }
        let mut new_w = vec![0.0; m];
        for i in 0..m {
            let a = self.second_moment[i];
            let bi = b[i] / n as f64;
            new_w[i] = if a > 0.0 {
                positive_root(a, bi)
            } else {
                self.zero_moment.insert(i);
                self.w_floor
            };
        }
        check_w(&new_w)?;
        let mut max_delta: f64 = 0.0;
        for s in 0..n {
            for i in 0..m {
                let idx = s * m + i;
                self.resid[idx] += (new_w[i] - self.w[i]) * x[idx];
            }
        }
        for (old, new) in self.w.iter_mut().zip(new_w) {
            max_delta = max_delta.max((new - *old).abs());
            *old = new;
        }
        Ok(max_delta)
    }
}

/// Positive root of `a w^2 + b w - 1 = 0` for `a > 0`, computed without
/// cancellation when `b > 0`.
fn positive_root(a: f64, b: f64) -> f64 {
    let disc = (b * b + 4.0 * a).sqrt();
    if b > 0.0 {
        2.0 / (b + disc)
    } else {
        (-b + disc) / (2.0 * a)
    }
}
