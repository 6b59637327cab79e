//! Edge-recovery and estimation-error metrics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kron::SymFactor;

/// Default magnitude below which a fitted entry is treated as zero.
pub const DEFAULT_SUPPORT_EPS: f64 = 1e-8;

/// Declared edges of an `m`-node graph over the strict upper triangle, stored
/// row-major (`(0,1), (0,2), ..., (1,2), ...`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMatrix {
    mode_size: usize,
    mask: Vec<bool>,
}

impl SupportMatrix {
    pub fn empty(mode_size: usize) -> Self {
        Self {
            mode_size,
            mask: vec![false; pair_count(mode_size)],
        }
    }

    pub fn full(mode_size: usize) -> Self {
        Self {
            mode_size,
            mask: vec![true; pair_count(mode_size)],
        }
    }

    pub fn from_edges(mode_size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut s = Self::empty(mode_size);
        for &(i, j) in edges {
            let (i, j) = (i.min(j), i.max(j));
            if i == j || j >= mode_size {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) is not an off-diagonal pair of a {mode_size}-node graph"
                )));
            }
            let p = s.position(i, j);
            s.mask[p] = true;
        }
        Ok(s)
    }

    pub fn mode_size(&self) -> usize {
        self.mode_size
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        self.mask[self.position(i.min(j), i.max(j))]
    }

    pub fn edge_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        pairs(self.mode_size)
            .zip(&self.mask)
            .filter_map(|(p, &on)| on.then_some(p))
            .collect()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.mode_size == other.mode_size
            && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    fn position(&self, i: usize, j: usize) -> usize {
        // rows before i contribute (m-1) + (m-2) + ... + (m-i)
        i * (2 * self.mode_size - i - 1) / 2 + (j - i - 1)
    }
}

fn pair_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

fn pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (i + 1..m).map(move |j| (i, j)))
}

/// Edges `(i, j)`, `i < j`, with `|F_ij| > eps`.
pub fn support_of(f: &SymFactor, eps: f64) -> SupportMatrix {
    let m = f.mode_size();
    SupportMatrix {
        mode_size: m,
        mask: pairs(m).map(|(i, j)| f.get(i, j).abs() > eps).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

pub fn confusion(est: &SupportMatrix, truth: &SupportMatrix) -> Result<Confusion> {
    if est.mode_size != truth.mode_size {
        return Err(Error::DimensionMismatch(format!(
            "supports over {} and {} nodes",
            est.mode_size, truth.mode_size
        )));
    }
    let mut c = Confusion::default();
    for (&e, &t) in est.mask.iter().zip(&truth.mask) {
        match (e, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

impl Confusion {
    /// Matthews correlation coefficient; 0 whenever any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }

    /// `(FP / (FP + TN), FN / (FN + TP))`, each 0 when its denominator is 0.
    pub fn fpr_fnr(&self) -> (f64, f64) {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        (
            ratio(self.fp, self.fp + self.tn),
            ratio(self.fn_, self.fn_ + self.tp),
        )
    }
}

pub fn mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    Confusion { tp, tn, fp, fn_ }.mcc()
}

pub fn fpr_fnr(tp: u64, tn: u64, fp: u64, fn_: u64) -> (f64, f64) {
    Confusion { tp, tn, fp, fn_ }.fpr_fnr()
}

/// `||a - b||_F / ||b||_F`.
pub fn rel_frob_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let denom = b.norm();
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "reference matrix has zero norm".into(),
        ));
    }
    Ok((a - b).norm() / denom)
}

/// Keeps the `ceil(target * m(m-1)/2)` largest off-diagonal entries by
/// magnitude. Equal magnitudes are ranked by lexicographic `(i, j)`.
pub fn threshold_to_sparsity(f: &SymFactor, target: f64) -> Result<SupportMatrix> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::InvalidParameter(format!(
            "target fraction {target} outside [0, 1]"
        )));
    }
    let m = f.mode_size();
    let total = pair_count(m);
    let keep = ((target * total as f64).ceil() as usize).min(total);
    let mut order: Vec<(usize, f64)> = pairs(m)
        .enumerate()
        .map(|(p, (i, j))| (p, f.get(i, j).abs()))
        .collect();
    // stable sort keeps the row-major order among ties
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut s = SupportMatrix::empty(m);
    for &(p, _) in order.iter().take(keep) {
        s.mask[p] = true;
    }
    Ok(s)
}
