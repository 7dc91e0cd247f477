//! Nonnegative least squares in Gram form: minimize 1/2 w^T G w - c^T w
//! subject to w >= 0, which is min ||r - C w||^2 / 2 up to a constant when
//! G = C^T C and c = C^T r. Lawson-Hanson active set with an incrementally
//! grown Cholesky factor of the passive block.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// KKT tolerance applied to returned solutions.
pub const KKT_TOL: f64 = 1e-8;

/// Square symmetric PSD operator, accessed column by column.
pub trait GramOperator {
    fn size(&self) -> usize;
    /// Writes column k into `out` (length `size()`).
    fn column(&self, k: usize, out: &mut [f64]);
}

impl GramOperator for DMatrix<f64> {
    fn size(&self) -> usize {
        self.nrows()
    }

    fn column(&self, k: usize, out: &mut [f64]) {
        out.copy_from_slice(self.column(k).as_slice());
    }
}

/// G + beta^2 1 1^T: the Gram matrix of C with an extra row beta 1^T.
pub struct WithSumRow<'a, G: ?Sized> {
    pub inner: &'a G,
    pub beta: f64,
}

impl<G: GramOperator + ?Sized> GramOperator for WithSumRow<'_, G> {
    fn size(&self) -> usize {
        self.inner.size()
    }

    fn column(&self, k: usize, out: &mut [f64]) {
        self.inner.column(k, out);
        let b2 = self.beta * self.beta;
        out.iter_mut().for_each(|v| *v += b2);
    }
}

#[derive(Clone, Debug)]
pub struct NnlsOptions {
    /// Stop when every inactive gradient component is >= -stop_tol.
    pub stop_tol: f64,
    /// Relative pivot below which a new column counts as linearly dependent.
    pub pivot_tol: f64,
    pub max_iters: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions { stop_tol: 1e-11, pivot_tol: 1e-11, max_iters: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub weights: Vec<f64>,
    /// Indices with positive weight, in the order they entered.
    pub passive: Vec<usize>,
    pub iterations: usize,
}

struct Passive {
    idx: Vec<usize>,
    cols: Vec<Vec<f64>>,
    // Row-major lower-triangular Cholesky factor of G restricted to idx.
    l: Vec<Vec<f64>>,
}

enum Append {
    Added,
    Dependent,
}

impl Passive {
    fn new() -> Self {
        Passive { idx: Vec::new(), cols: Vec::new(), l: Vec::new() }
    }

    fn try_push(&mut self, k: usize, col: Vec<f64>, pivot_tol: f64) -> Result<Append> {
        let p = self.idx.len();
        let mut row = vec![0.0; p + 1];
        for i in 0..p {
            let mut s = col[self.idx[i]];
            for m in 0..i {
                s -= self.l[i][m] * row[m];
            }
            row[i] = s / self.l[i][i];
        }
        let diag = col[k];
        let d = diag - row[..p].iter().map(|v| v * v).sum::<f64>();
        if d < -1e-8 * diag.abs().max(1.0) {
            return Err(Error::NotPositiveSemidefinite(d));
        }
        if d <= pivot_tol * diag.abs().max(f64::MIN_POSITIVE) {
            return Ok(Append::Dependent);
        }
        row[p] = d.sqrt();
        self.l.push(row);
        self.idx.push(k);
        self.cols.push(col);
        Ok(Append::Added)
    }

    fn pop(&mut self) {
        self.idx.pop();
        self.cols.pop();
        self.l.pop();
    }

    /// Drops the entries flagged in `remove` and refactors. Returns every
    /// index that left the set, including any that rounding now marks as
    /// dependent.
    fn retain(&mut self, remove: &[bool], pivot_tol: f64) -> Result<Vec<usize>> {
        let idx = std::mem::take(&mut self.idx);
        let cols = std::mem::take(&mut self.cols);
        self.l.clear();
        let mut gone = Vec::new();
        for ((k, col), &drop) in idx.into_iter().zip(cols).zip(remove) {
            if drop {
                gone.push(k);
            } else if let Append::Dependent = self.try_push(k, col, pivot_tol)? {
                gone.push(k);
            }
        }
        Ok(gone)
    }

    fn solve(&self, c: &[f64]) -> Vec<f64> {
        let p = self.idx.len();
        let mut y = vec![0.0; p];
        for i in 0..p {
            let mut s = c[self.idx[i]];
            for m in 0..i {
                s -= self.l[i][m] * y[m];
            }
            y[i] = s / self.l[i][i];
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for m in i + 1..p {
                s -= self.l[m][i] * y[m];
            }
            y[i] = s / self.l[i][i];
        }
        y
    }

    fn gradient(&self, w: &[f64], c: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = c.iter().map(|v| -v).collect();
        for (j, &k) in self.idx.iter().enumerate() {
            let wk = w[k];
            for (gi, ci) in g.iter_mut().zip(&self.cols[j]) {
                *gi += wk * ci;
            }
        }
        g
    }
}

/// Dense-matrix entry point: checks shape and symmetry, then solves.
pub fn nnls(g: &DMatrix<f64>, c: &[f64]) -> Result<Vec<f64>> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch { expected: g.nrows(), found: g.ncols() });
    }
    if c.len() != g.nrows() {
        return Err(Error::DimensionMismatch { expected: g.nrows(), found: c.len() });
    }
    let asym = (g - g.transpose()).amax();
    if asym > 1e-12 * g.amax().max(1.0) {
        return Err(Error::InvalidState(format!("Gram matrix not symmetric (defect {asym:e})")));
    }
    // The active-set iteration only ever factors the blocks it visits, so
    // indefiniteness elsewhere would go unnoticed.
    if g.nrows() > 0 {
        let min_eig = g.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * g.amax().max(1.0) {
            return Err(Error::NotPositiveSemidefinite(min_eig));
        }
    }
    let w = nnls_with(g, c, &[], &NnlsOptions::default())?.weights;
    // Dependent columns are skipped, so a c outside the range of G (objective
    // unbounded below) ends with a KKT point that is not one.
    let scale = g.amax().max(c.iter().fold(0.0, |m, v| m.max(v.abs()))).max(1.0);
    let v = kkt_violation(g, c, &w);
    if v > KKT_TOL * scale {
        return Err(Error::NoConvergence(format!(
            "KKT violation {v:e} at termination; the objective is unbounded below unless c lies in the range of G"
        )));
    }
    Ok(w)
}

/// Active-set solve, optionally warm-started from a guess of the passive set.
pub fn nnls_with<G: GramOperator + ?Sized>(
    op: &G,
    c: &[f64],
    warm: &[usize],
    opts: &NnlsOptions,
) -> Result<NnlsSolution> {
    let m = op.size();
    if c.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: c.len() });
    }
    let max_iters = if opts.max_iters == 0 { 10 * m + 100 } else { opts.max_iters };
    let column = |k: usize| {
        let mut col = vec![0.0; m];
        op.column(k, &mut col);
        col
    };

    let mut set = Passive::new();
    let mut in_set = vec![false; m];
    let mut w = vec![0.0; m];

    // Warm start: take the guess, then discard indices until the
    // unconstrained solution on the set is strictly positive.
    for &k in warm {
        if k < m && !in_set[k] {
            if let Append::Added = set.try_push(k, column(k), opts.pivot_tol)? {
                in_set[k] = true;
            }
        }
    }
    loop {
        let z = set.solve(c);
        let bad: Vec<bool> = z.iter().map(|&v| v <= 0.0).collect();
        if !bad.iter().any(|&b| b) {
            for (&k, &v) in set.idx.iter().zip(&z) {
                w[k] = v;
            }
            break;
        }
        for k in set.retain(&bad, opts.pivot_tol)? {
            in_set[k] = false;
        }
    }

    let mut iterations = 0;
    let mut rejected = vec![false; m];
    loop {
        iterations += 1;
        if iterations > max_iters {
            return Err(Error::NoConvergence(format!("NNLS exceeded {max_iters} iterations")));
        }
        let g = set.gradient(&w, c);
        let mut best: Option<usize> = None;
        for i in 0..m {
            if !in_set[i] && !rejected[i] && g[i] < -opts.stop_tol {
                if best.map_or(true, |b| g[i] < g[b]) {
                    best = Some(i);
                }
            }
        }
        let Some(t) = best else { break };
        match set.try_push(t, column(t), opts.pivot_tol)? {
            Append::Dependent => {
                rejected[t] = true;
                continue;
            }
            Append::Added => in_set[t] = true,
        }

        let mut entered = true;
        loop {
            let z = set.solve(c);
            if z.iter().all(|&v| v > 0.0) {
                for (&k, &v) in set.idx.iter().zip(&z) {
                    w[k] = v;
                }
                break;
            }
            if entered && *z.last().unwrap() <= 0.0 {
                // The entering variable would not move off zero: rounding
                // noise in its gradient. Undo and ignore it this time round.
                set.pop();
                in_set[t] = false;
                rejected[t] = true;
                break;
            }
            entered = false;
            let mut alpha = f64::INFINITY;
            let mut blocking = 0;
            for (j, (&k, &zk)) in set.idx.iter().zip(&z).enumerate() {
                if zk <= 0.0 {
                    let a = w[k] / (w[k] - zk);
                    if a < alpha {
                        alpha = a;
                        blocking = j;
                    }
                }
            }
            let mut remove = vec![false; set.idx.len()];
            for (j, (&k, &zk)) in set.idx.iter().zip(&z).enumerate() {
                w[k] += alpha * (zk - w[k]);
                remove[j] = j == blocking || w[k] <= 0.0;
            }
            for k in set.retain(&remove, opts.pivot_tol)? {
                w[k] = 0.0;
                in_set[k] = false;
            }
            iterations += 1;
        }
        if in_set[t] {
            rejected.iter_mut().for_each(|r| *r = false);
        }
    }
    Ok(NnlsSolution { weights: w, passive: set.idx, iterations })
}

/// Largest violation of the KKT conditions of the Gram-form problem:
/// w_i > 0 needs (Gw - c)_i = 0, w_i = 0 needs (Gw - c)_i >= 0.
pub fn kkt_violation<G: GramOperator + ?Sized>(op: &G, c: &[f64], w: &[f64]) -> f64 {
    let m = op.size();
    let mut g: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut col = vec![0.0; m];
    for (k, &wk) in w.iter().enumerate() {
        if wk != 0.0 {
            op.column(k, &mut col);
            for (gi, ci) in g.iter_mut().zip(&col) {
                *gi += wk * ci;
            }
        }
    }
    let mut worst = w.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
    for (gi, &wi) in g.iter().zip(w) {
        let v = if wi > 0.0 { gi.abs() } else { (-gi).max(0.0) };
        worst = worst.max(v);
    }
    worst
}
