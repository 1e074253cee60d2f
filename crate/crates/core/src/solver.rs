//! Quadratic programs behind the capacity.
//!
//! For a positive definite kernel `G` on target points the equilibrium
//! problem is `min ½zᵀGz − 1ᵀz` over `z ≥ 0`. At the optimum `Gz = 1` on the
//! support, `Gz ≥ 1` everywhere, and the capacity equals `Σz`.
//!
//! [`solve_dual`] runs accelerated projected gradient with restarts and
//! periodically tries an exact solve on a guessed support. The duality gap
//! it reports is `P/D − 1`, where `D = (Σz)²/zᵀGz` is attained by the
//! rescaled measure and `P = zᵀGz / (min Gz)²` is the norm of an admissible
//! function. [`nnls_equilibrium`] is an independent active-set method used
//! on small atomic problems.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::Grid2;
use crate::tree::{MeetKernel, Node2, TreeShape};

/// A symmetric positive definite kernel on `dim()` points.
pub trait KernelOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
    /// Dense principal submatrix, when cheap to form.
    fn principal(&self, _idx: &[usize]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Row-major dense kernel matrix.
#[derive(Clone, Debug)]
pub struct ExplicitGram {
    n: usize,
    data: Vec<f64>,
}

impl ExplicitGram {
    pub fn from_fn<F: Fn(usize, usize) -> f64 + Sync>(n: usize, f: F) -> Self {
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if j >= i { f(i, j) } else { f(j, i) };
            }
        });
        ExplicitGram { n, data }
    }

    pub fn from_points<P: MeetKernel + Sync>(points: &[P]) -> Self {
        Self::from_fn(points.len(), |i, j| points[i].kernel(&points[j]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

impl KernelOperator for ExplicitGram {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let row = |i: usize| -> f64 { self.data[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum() };
        if n >= 256 {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = row(i);
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn principal(&self, idx: &[usize]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b])))
    }
}

/// Matrix-free kernel on bitree vertices: scatter, subtree sums, path sums, gather.
pub struct TreeSweepOperator {
    shape: TreeShape,
    targets: Vec<Node2>,
}

impl TreeSweepOperator {
    pub fn new(shape: TreeShape, targets: Vec<Node2>) -> Result<Self> {
        Grid2::zeros(shape)?;
        Ok(TreeSweepOperator { shape, targets })
    }
}

impl KernelOperator for TreeSweepOperator {
    fn dim(&self) -> usize {
        self.targets.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut g = Grid2::zeros(self.shape).expect("checked at construction");
        for (t, v) in self.targets.iter().zip(x) {
            let i = g.index(*t);
            g.data_mut()[i] += v;
        }
        let g = g.subtree_sums().path_sums();
        for (t, o) in self.targets.iter().zip(out.iter_mut()) {
            *o = g.get(*t);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.ancestor_count() as f64).collect()
    }

    fn principal(&self, idx: &[usize]) -> Option<DMatrix<f64>> {
        (idx.len() <= DIRECT_LIMIT)
            .then(|| DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.targets[idx[a]].kernel(&self.targets[idx[b]])))
    }
}

/// Largest support solved by dense factorization inside the polish step.
const DIRECT_LIMIT: usize = 1500;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualOptions {
    /// Target relative duality gap.
    pub tol: f64,
    pub max_iters: usize,
    /// Allowed `|V − 1|` on the support of the returned measure.
    pub kkt_tol: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions { tol: 1e-8, max_iters: 20_000, kkt_tol: 1e-7 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    /// Equilibrium masses, rescaled so that `Σw = wᵀGw`.
    pub weights: Vec<f64>,
    /// `Gw` at every target.
    pub potential: Vec<f64>,
    pub cap: f64,
    pub gap: f64,
    pub iterations: usize,
    pub certified: bool,
}

struct Scaled<'a> {
    op: &'a dyn KernelOperator,
    s: f64,
}

impl Scaled<'_> {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.op.apply(x, &mut out);
        out.iter_mut().for_each(|v| *v /= self.s);
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(z: &[f64], v: &[f64]) -> f64 {
    0.5 * dot(z, v) - z.iter().sum::<f64>()
}

/// Relative gap and support deviation of an iterate.
fn certificate(z: &[f64], v: &[f64]) -> (f64, f64) {
    let mass: f64 = z.iter().sum();
    let e = dot(z, v);
    let m = v.iter().copied().fold(f64::INFINITY, f64::min);
    if mass <= 0.0 || e <= 0.0 || m <= 0.0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let gap = (e / (m * mass)).powi(2) - 1.0;
    let t = mass / e;
    let dev = z.iter().zip(v).filter(|(w, _)| **w > 0.0).map(|(_, p)| (t * p - 1.0).abs()).fold(0.0, f64::max);
    (gap.max(0.0), dev)
}

pub fn solve_dual(op: &dyn KernelOperator, opts: &DualOptions) -> Result<DualSolution> {
    if !(opts.tol > 0.0) {
        return Err(CoreError::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    let n = op.dim();
    if n == 0 {
        return Ok(DualSolution {
            weights: vec![],
            potential: vec![],
            cap: 0.0,
            gap: 0.0,
            iterations: 0,
            certified: true,
        });
    }
    let s = op.diagonal().into_iter().fold(0.0, f64::max);
    if !(s > 0.0) {
        return Err(CoreError::Numerical("kernel diagonal is not positive".into()));
    }
    let g = Scaled { op, s };

    let ones = vec![1.0; n];
    let row_sums = g.apply(&ones);
    let row_max = row_sums.iter().copied().fold(0.0, f64::max);
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lam = 0.0;
    for _ in 0..40 {
        let w = g.apply(&v);
        lam = dot(&v, &w);
        let nw = dot(&w, &w).sqrt();
        v = w.into_iter().map(|x| x / nw).collect();
    }
    let mut lip = if row_max <= 2.0 * lam { row_max } else { 1.1 * lam };

    let c = n as f64 / row_sums.iter().sum::<f64>();
    let mut z = vec![c; n];
    let mut vz: Vec<f64> = row_sums.iter().map(|r| r * c).collect();
    let mut f = objective(&z, &vz);
    let mut z_prev = z.clone();
    let mut v_prev = vz.clone();
    let mut t = 1.0f64;
    let mut next_polish = 10usize;
    let mut it = 0usize;
    let (mut gap, mut dev) = certificate(&z, &vz);

    while it < opts.max_iters {
        if gap <= opts.tol && dev <= opts.kkt_tol {
            break;
        }
        it += 1;
        if it >= next_polish {
            next_polish = 2 * next_polish + 10;
            if let Some((zc, vc)) = polish(&g, &z, &vz) {
                let fc = objective(&zc, &vc);
                if fc <= f {
                    z_prev = zc.clone();
                    v_prev = vc.clone();
                    z = zc;
                    vz = vc;
                    f = fc;
                    t = 1.0;
                    let cert = certificate(&z, &vz);
                    gap = cert.0;
                    dev = cert.1;
                    continue;
                }
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let y: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a + beta * (a - b)).collect();
        let vy: Vec<f64> = vz.iter().zip(&v_prev).map(|(a, b)| a + beta * (a - b)).collect();
        let z_new: Vec<f64> = y.iter().zip(&vy).map(|(yi, gi)| (yi - (gi - 1.0) / lip).max(0.0)).collect();
        let v_new = g.apply(&z_new);
        let f_new = objective(&z_new, &v_new);
        if f_new > f + 1e-15 * f.abs() {
            if beta == 0.0 {
                lip *= 2.0;
            }
            t = 1.0;
            z_prev = z.clone();
            v_prev = vz.clone();
            continue;
        }
        z_prev = std::mem::replace(&mut z, z_new);
        v_prev = std::mem::replace(&mut vz, v_new);
        f = f_new;
        t = t_next;
        let cert = certificate(&z, &vz);
        gap = cert.0;
        dev = cert.1;
    }

    let mass: f64 = z.iter().sum();
    let e = dot(&z, &vz);
    let scale = mass / e;
    let weights: Vec<f64> = z.iter().map(|w| w * scale / s).collect();
    let potential: Vec<f64> = vz.iter().map(|p| p * scale).collect();
    Ok(DualSolution {
        cap: weights.iter().sum(),
        weights,
        potential,
        gap,
        iterations: it,
        certified: gap <= opts.tol && dev <= opts.kkt_tol,
    })
}

/// Exact solves on a sequence of guessed supports, keeping the best feasible one.
fn polish(g: &Scaled<'_>, z: &[f64], v: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = z.len();
    let mass: f64 = z.iter().sum();
    let e = dot(z, v);
    let t = if e > 0.0 { mass / e } else { 1.0 };
    let mut support: Vec<usize> = (0..n).filter(|&i| z[i] > 0.0 || t * v[i] < 1.0).collect();
    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for _ in 0..60 {
        if support.is_empty() {
            break;
        }
        let w = solve_support(g, &support)?;
        if w.iter().any(|x| *x < 0.0) {
            let keep: Vec<usize> = support.iter().zip(&w).filter(|(_, x)| **x >= 0.0).map(|(i, _)| *i).collect();
            support = keep;
            continue;
        }
        let mut zc = vec![0.0; n];
        for (i, x) in support.iter().zip(&w) {
            zc[*i] = *x;
        }
        let vc = g.apply(&zc);
        let fc = objective(&zc, &vc);
        if best.as_ref().is_none_or(|b| fc < b.2) {
            best = Some((zc.clone(), vc.clone(), fc));
        }
        let missing: Vec<usize> = (0..n).filter(|&i| zc[i] == 0.0 && vc[i] < 1.0 - 1e-13).collect();
        if missing.is_empty() {
            break;
        }
        support.extend(missing);
        support.sort_unstable();
    }
    best.map(|(z, v, _)| (z, v))
}

/// Solves `G_SS w = 1` directly or by conjugate gradients.
fn solve_support(g: &Scaled<'_>, support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    if k <= DIRECT_LIMIT {
        if let Some(m) = g.op.principal(support) {
            let m = m / g.s;
            let rhs = DVector::from_element(k, 1.0);
            if let Some(ch) = m.clone().cholesky() {
                return Some(ch.solve(&rhs).iter().copied().collect());
            }
            return m.lu().solve(&rhs).map(|x| x.iter().copied().collect());
        }
    }
    let n = g.op.dim();
    let apply_s = |x: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; n];
        for (i, v) in support.iter().zip(x) {
            full[*i] = *v;
        }
        let out = g.apply(&full);
        support.iter().map(|&i| out[i]).collect()
    };
    let mut x = vec![0.0; k];
    let mut r = vec![1.0; k];
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-26 * k as f64;
    for _ in 0..(5 * k).max(200) {
        if rr <= stop {
            break;
        }
        let ap = apply_s(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..k {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..k {
            p[i] = r[i] + beta * p[i];
        }
    }
    (rr <= 1e-18 * k as f64).then_some(x)
}

/// Lawson–Hanson active set for `min ½xᵀGx − 1ᵀx`, `x ≥ 0`.
///
/// Terminates in finitely many steps; each step factors the Gram matrix on
/// the passive set.
pub fn nnls_equilibrium(gram: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = gram.nrows();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let eps = 1e-13;
    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let m = DMatrix::from_fn(idx.len(), idx.len(), |a, b| gram[(idx[a], idx[b])]);
        let rhs = DVector::from_element(idx.len(), 1.0);
        let sol = match m.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => m.lu().solve(&rhs).ok_or_else(|| CoreError::Numerical("singular Gram block".into()))?,
        };
        let mut full = DVector::zeros(n);
        for (k, &i) in idx.iter().enumerate() {
            full[i] = sol[k];
        }
        Ok(full)
    };
    for _ in 0..(10 * n + 10) {
        let w = DVector::from_element(n, 1.0) - gram * &x;
        let candidate = (0..n).filter(|&i| !passive[i] && w[i] > eps).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = candidate else {
            return Ok(x.iter().copied().collect());
        };
        passive[j] = true;
        loop {
            let s = solve_passive(&passive)?;
            if (0..n).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && s[i] <= 0.0) {
                alpha = alpha.min(x[i] / (x[i] - s[i]));
            }
            x = &x + (&s - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= eps * 1e-3 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    Err(CoreError::Numerical("active-set iteration did not terminate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn staircase_gram() -> ExplicitGram {
        let m = [[4.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 4.0]];
        ExplicitGram::from_fn(3, |i, j| m[i][j])
    }

    #[test]
    fn dual_solves_small_system() {
        let sol = solve_dual(&staircase_gram(), &DualOptions::default()).unwrap();
        assert!(sol.certified);
        let expect = [1.0 / 6.0, 1.0 / 12.0, 1.0 / 6.0];
        for (w, e) in sol.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-12, "{w} vs {e}");
        }
        assert!((sol.cap - 5.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_solves_small_system() {
        let x = nnls_equilibrium(&staircase_gram().to_matrix()).unwrap();
        assert!((x[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((x[1] - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn nnls_drops_shadowed_point() {
        // second point is dominated: its kernel row makes it redundant
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let x = nnls_equilibrium(&m).unwrap();
        assert_eq!(x[1], 0.0);
        assert!((x[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_problem() {
        let g = ExplicitGram::from_fn(0, |_, _| 0.0);
        let sol = solve_dual(&g, &DualOptions::default()).unwrap();
        assert_eq!(sol.cap, 0.0);
        assert!(sol.certified);
    }
}
