//! Test-only oracles. Nothing here calls into the solver or the Kronecker
//! machinery of the crate; every quantity is rebuilt from multi-index loops.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Decode a first-index-fastest linear index.
pub fn multi_index(mut lin: usize, shape: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .map(|&m| {
            let i = lin % m;
            lin /= m;
            i
        })
        .collect()
}

pub fn linear_index(idx: &[usize], shape: &[usize]) -> usize {
    let mut lin = 0;
    let mut stride = 1;
    for (&i, &m) in idx.iter().zip(shape) {
        lin += i * stride;
        stride *= m;
    }
    lin
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = normal(rng);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

pub fn random_offdiag(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DMatrix<f64> {
    let mut a = random_symmetric(rng, m) * scale;
    a.fill_diagonal(0.0);
    a
}

/// Dense Kronecker sum built entry by entry: `M[p, q] = sum_k A_k[p_k, q_k]`
/// when `p` and `q` agree outside mode `k`.
pub fn dense_kron_sum(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let shape: Vec<usize> = mats.iter().map(|a| a.nrows()).collect();
    let m: usize = shape.iter().product();
    let mut out = DMatrix::zeros(m, m);
    for p in 0..m {
        let pi = multi_index(p, &shape);
        for q in 0..m {
            let qi = multi_index(q, &shape);
            for (k, a) in mats.iter().enumerate() {
                let others_equal = (0..shape.len()).all(|l| l == k || pi[l] == qi[l]);
                if others_equal {
                    out[(p, q)] += a[(pi[k], qi[k])];
                }
            }
        }
    }
    out
}

/// Literal evaluation of the penalized pseudolikelihood:
/// `-N sum log W + 1/2 sum_s sum_i (W_i X_i + sum_k sum_{j != i_k} Psi_k[i_k, j] X[.., j, ..])^2
///  + sum_k lambda_k sum_{i != j} |Psi_k[i, j]|`.
pub fn naive_objective(
    offdiag: &[DMatrix<f64>],
    w: &[f64],
    samples: &[Vec<f64>],
    lambdas: &[f64],
) -> f64 {
    let shape: Vec<usize> = offdiag.iter().map(|a| a.nrows()).collect();
    let m: usize = shape.iter().product();
    let n = samples.len() as f64;
    let mut value = -n * w.iter().map(|v| v.ln()).sum::<f64>();
    for x in samples {
        for lin in 0..m {
            let idx = multi_index(lin, &shape);
            let mut term = w[lin] * x[lin];
            for (k, psi) in offdiag.iter().enumerate() {
                for j in 0..shape[k] {
                    if j == idx[k] {
                        continue;
                    }
                    let mut other = idx.clone();
                    other[k] = j;
                    term += psi[(idx[k], j)] * x[linear_index(&other, &shape)];
                }
            }
            value += 0.5 * term * term;
        }
    }
    for (psi, l) in offdiag.iter().zip(lambdas) {
        let mut s = 0.0;
        for i in 0..psi.nrows() {
            for j in 0..psi.ncols() {
                if i != j {
                    s += psi[(i, j)].abs();
                }
            }
        }
        value += l * s;
    }
    value
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g: f64 = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Parameters of the pseudolikelihood in a flat layout used by the oracle:
/// `W` (m entries), then every strict-upper pair of every mode.
#[derive(Debug, Clone)]
pub struct Problem {
    pub shape: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub w: Vec<f64>,
    pub offdiag: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

impl Problem {
    pub fn pairs(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (k, &m) in self.shape.iter().enumerate() {
            for i in 0..m {
                for j in i + 1..m {
                    out.push((k, i, j));
                }
            }
        }
        out
    }

    pub fn n_vars(&self) -> usize {
        self.shape.iter().product()
    }

    /// For every pair, the `(p, q)` positions of the dense operator it fills
    /// (both orientations).
    pub fn pair_positions(&self) -> Vec<Vec<(usize, usize)>> {
        let m = self.n_vars();
        self.pairs()
            .iter()
            .map(|&(k, i, j)| {
                let mut pos = Vec::new();
                for p in 0..m {
                    let pi = multi_index(p, &self.shape);
                    if pi[k] != i && pi[k] != j {
                        continue;
                    }
                    let mut qi = pi.clone();
                    qi[k] = if pi[k] == i { j } else { i };
                    pos.push((p, linear_index(&qi, &self.shape)));
                }
                pos
            })
            .collect()
    }

    pub fn unpack(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        let mut mats: Vec<_> = self.shape.iter().map(|&m| DMatrix::zeros(m, m)).collect();
        for (&(k, i, j), &v) in self.pairs().iter().zip(theta) {
            mats[k][(i, j)] = v;
            mats[k][(j, i)] = v;
        }
        mats
    }

    pub fn pack(&self, mats: &[DMatrix<f64>]) -> Vec<f64> {
        self.pairs()
            .iter()
            .map(|&(k, i, j)| mats[k][(i, j)])
            .collect()
    }

    /// Penalized objective at `(w, theta)`.
    pub fn objective(&self, w: &[f64], theta: &[f64]) -> f64 {
        naive_objective(&self.unpack(theta), w, &self.samples, &self.lambdas)
    }

    /// Minimizer over `W` for fixed off-diagonals, found by bracketing and
    /// Newton steps on the monotone stationarity condition `-N / W_i + sum_s x (W_i x + y) = 0`.
    pub fn best_w(&self, theta: &[f64]) -> Vec<f64> {
        let m = self.n_vars();
        let n = self.samples.len() as f64;
        let positions = self.pair_positions();
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        for x in &self.samples {
            let mut y = vec![0.0; m];
            for (t, pos) in positions.iter().enumerate() {
                for &(p, q) in pos {
                    y[p] += theta[t] * x[q];
                }
            }
            for i in 0..m {
                a[i] += x[i] * x[i];
                b[i] += x[i] * y[i];
            }
        }
        (0..m)
            .map(|i| {
                let h = |w: f64| -n / w + w * a[i] + b[i];
                let (mut lo, mut hi) = (1e-300_f64, 1.0_f64);
                while h(hi) < 0.0 {
                    hi *= 2.0;
                }
                // geometric bisection down to a factor-2 bracket, then Newton
                // from the left: h is increasing and concave, so the iterates
                // stay below the root and increase monotonically
                while hi / lo > 2.0 {
                    let mid = (lo * hi).sqrt();
                    if h(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let mut w = lo;
                for _ in 0..100 {
                    let next = w - h(w) / (n / (w * w) + a[i]);
                    if !(next > w) {
                        break;
                    }
                    w = next.min(hi);
                }
                w
            })
            .collect()
    }

    /// Smooth part of the objective with `W` profiled out, and its gradient
    /// in `theta`. By the envelope theorem the gradient is the partial
    /// derivative at the profiled `W`: `sum_s sum_(p,q) r_p x_q` over the
    /// operator positions of each pair.
    pub fn profiled_smooth(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let m = self.n_vars();
        let positions = self.pair_positions();
        let w = self.best_w(theta);
        let mut op = DMatrix::zeros(m, m);
        for i in 0..m {
            op[(i, i)] = w[i];
        }
        for (t, pos) in positions.iter().enumerate() {
            for &(a, b) in pos {
                op[(a, b)] += theta[t];
            }
        }
        let n = self.samples.len() as f64;
        let mut f = -n * w.iter().map(|v| v.ln()).sum::<f64>();
        let mut gram = DMatrix::zeros(m, m);
        for x in &self.samples {
            let x = DVector::from_column_slice(x);
            let r = &op * &x;
            f += 0.5 * r.norm_squared();
            gram += &r * x.transpose();
        }
        let g = positions
            .iter()
            .map(|pos| pos.iter().map(|&(a, b)| gram[(a, b)]).sum())
            .collect();
        (f, g)
    }

    /// Accelerated projected gradient over the off-diagonal pairs of the
    /// profiled objective, followed by Newton polishing on the support.
    ///
    /// The split `theta = pos - neg`, `pos, neg >= 0` makes the penalty
    /// linear. Function values stop resolving progress long before the
    /// parameters settle on nearly flat instances, so once the first-order
    /// phase stalls the smooth stationarity equations of the nonzero pairs
    /// are solved by Newton steps with a finite-difference Hessian.
    pub fn profiled_projected_gradient(&self, max_iter: usize, tol: f64) -> OracleSolution {
        let p = self.pairs().len();
        let lam: Vec<f64> = self
            .pairs()
            .iter()
            .map(|&(k, _, _)| 2.0 * self.lambdas[k])
            .collect();
        let dim = 2 * p;
        let theta_of = |z: &[f64]| -> Vec<f64> { (0..p).map(|t| z[t] - z[p + t]).collect() };
        let eval = |z: &[f64]| -> (f64, Vec<f64>) {
            let (mut f, gs) = self.profiled_smooth(&theta_of(z));
            let mut g = vec![0.0; dim];
            for t in 0..p {
                f += lam[t] * (z[t] + z[p + t]);
                g[t] = gs[t] + lam[t];
                g[p + t] = -gs[t] + lam[t];
            }
            (f, g)
        };
        let project = |z: &mut [f64]| z.iter_mut().for_each(|v| *v = v.max(0.0));

        let mut x = vec![0.0; dim];
        let mut y = x.clone();
        let mut t_mom: f64 = 1.0;
        let mut step = 1e-2;
        let (mut fx, _) = eval(&x);
        let mut iterations = 0;
        let mut restarted = false;
        while iterations < max_iter {
            if iterations % 10 == 0 {
                let (_, gx) = eval(&x);
                // natural residual of the bound-constrained problem
                let res = x
                    .iter()
                    .zip(&gx)
                    .map(|(&v, &g)| (v - (v - g).max(0.0)).abs())
                    .fold(0.0, f64::max);
                if res < tol {
                    break;
                }
            }
            iterations += 1;
            let (fy, gy) = eval(&y);
            let (x_new, f_new) = loop {
                let mut cand: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
                project(&mut cand);
                let (fc, _) = eval(&cand);
                let diff: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
                let lin: f64 = diff.iter().zip(&gy).map(|(d, g)| d * g).sum();
                let sq: f64 = diff.iter().map(|d| d * d).sum();
                if fc.is_finite() && fc <= fy + lin + sq / (2.0 * step) + 1e-14 * fy.abs() {
                    break (cand, fc);
                }
                step *= 0.5;
                assert!(step > 1e-300, "oracle line search failed");
            };
            if f_new > fx {
                // adaptive restart from the last accepted point; a second
                // restart in a row means the decrease is below the rounding
                // resolution of f and x cannot move any further
                if restarted {
                    break;
                }
                restarted = true;
                t_mom = 1.0;
                y = x.clone();
                continue;
            }
            restarted = false;
            let t_next = (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt()) / 2.0;
            let beta = (t_mom - 1.0) / t_next;
            y = x_new
                .iter()
                .zip(&x)
                .map(|(a, b)| a + beta * (a - b))
                .collect();
            project(&mut y);
            x = x_new;
            fx = f_new;
            t_mom = t_next;
            step *= 1.1;
        }
        let theta = self.newton_polish(theta_of(&x), &lam);
        let w = self.best_w(&theta);
        OracleSolution {
            objective: self.objective(&w, &theta),
            w,
            offdiag: self.unpack(&theta),
            iterations,
        }
    }

    /// Newton iterations on `grad_smooth + lam * sign(theta) = 0` over the
    /// nonzero pairs, keeping every sign. A step is taken only while it
    /// shrinks the gradient norm and keeps the signs.
    fn newton_polish(&self, mut theta: Vec<f64>, lam: &[f64]) -> Vec<f64> {
        let active: Vec<usize> = (0..theta.len()).filter(|&t| theta[t] != 0.0).collect();
        if active.is_empty() {
            return theta;
        }
        let grad = |th: &[f64]| -> DVector<f64> {
            let (_, g) = self.profiled_smooth(th);
            DVector::from_iterator(
                active.len(),
                active.iter().map(|&t| g[t] + lam[t] * th[t].signum()),
            )
        };
        let mut g = grad(&theta);
        for _ in 0..50 {
            let a = active.len();
            let mut h = DMatrix::zeros(a, a);
            for (c, &t) in active.iter().enumerate() {
                let e = 1e-6 * (1.0 + theta[t].abs());
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[t] += e;
                minus[t] -= e;
                let col = (grad(&plus) - grad(&minus)) / (2.0 * e);
                h.set_column(c, &col);
            }
            let h = (&h + h.transpose()) * 0.5;
            let Some(d) = h.lu().solve(&(-&g)) else {
                break;
            };
            let mut cand = theta.clone();
            for (c, &t) in active.iter().enumerate() {
                cand[t] += d[c];
            }
            if active
                .iter()
                .any(|&t| cand[t].signum() != theta[t].signum())
            {
                break;
            }
            let g_new = grad(&cand);
            if !(g_new.norm() < g.norm()) {
                break;
            }
            theta = cand;
            g = g_new;
        }
        theta
    }

    /// Whether the unpenalized (`lambda = 0`) objective of a single
    /// observation has a finite minimum.
    ///
    /// The objective is unbounded below exactly when some off-diagonal
    /// direction `d` moves every residual against its variable,
    /// `x_i (d Y)_i <= 0` for all `i` and not all zero, because `W` can then
    /// grow along `-dY / x` with the quadratic term fixed and `log W` rising.
    /// By Stiemke's lemma that fails iff the orthogonal complement of
    /// `V = { (x_i (d Y)_i) }` contains a strictly positive vector, which is a
    /// small LP solved here by vertex enumeration.
    pub fn unpenalized_minimum_exists(&self) -> bool {
        assert_eq!(
            self.samples.len(),
            1,
            "certificate covers a single observation"
        );
        let m = self.n_vars();
        let positions = self.pair_positions();
        let rows = m;
        // columns: image of each pair direction, scaled by x
        let mut v = DMatrix::<f64>::zeros(rows, positions.len());
        for (t, pos) in positions.iter().enumerate() {
            for (s, x) in self.samples.iter().enumerate() {
                for &(a, b) in pos {
                    v[(s * m + a, t)] += x[b] * x[a];
                }
            }
        }
        assert!(
            self.samples.iter().flatten().all(|&x| x != 0.0),
            "certificate assumes non-zero data"
        );
        let proj = DMatrix::identity(v.nrows(), v.nrows())
            - &v * v.clone().pseudo_inverse(1e-12).expect("pseudo-inverse");
        let eig = proj.symmetric_eigen();
        let basis: Vec<DVector<f64>> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > 0.5)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if basis.is_empty() {
            return false;
        }
        max_min_margin(&basis) > 1e-9
    }
}

/// `max_{|c|_inf <= 1} min_r (B c)_r` by enumerating vertices of the LP
/// `max t  s.t.  B c - t >= 0, -1 <= c_j <= 1`.
fn max_min_margin(basis: &[DVector<f64>]) -> f64 {
    let d = basis.len();
    let rows = basis[0].len();
    // constraint rows a . (c, t) >= b
    let mut cons: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in 0..rows {
        let mut a: Vec<f64> = basis.iter().map(|col| col[r]).collect();
        a.push(-1.0);
        cons.push((a, 0.0));
    }
    for j in 0..d {
        let mut a = vec![0.0; d + 1];
        a[j] = 1.0;
        cons.push((a.clone(), -1.0));
        a[j] = -1.0;
        cons.push((a, -1.0));
    }
    let mut best = f64::NEG_INFINITY;
    let mut chosen = vec![0usize; d + 1];
    combos(cons.len(), d + 1, 0, 0, &mut chosen, &mut |set| {
        let a = DMatrix::from_fn(d + 1, d + 1, |i, j| cons[set[i]].0[j]);
        let b = DVector::from_fn(d + 1, |i, _| cons[set[i]].1);
        if let Some(sol) = a.lu().solve(&b) {
            let feasible = cons.iter().all(|(a, b)| {
                a.iter().zip(sol.iter()).map(|(x, y)| x * y).sum::<f64>() >= b - 1e-10
            });
            if feasible && sol[d] > best {
                best = sol[d];
            }
        }
    });
    best
}

fn combos(
    n: usize,
    k: usize,
    start: usize,
    depth: usize,
    chosen: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        f(chosen);
        return;
    }
    for i in start..n {
        chosen[depth] = i;
        combos(n, k, i + 1, depth + 1, chosen, f);
    }
}
