//! Z-eigenpairs of symmetric tensors: real unit vectors v with
//! A v^[N-1] = lambda v. These are exactly the critical points of A x^[N]
//! on the unit 3-sphere, which is how they are computed here: multi-start
//! projected gradient with Armijo backtracking, a shifted fixed-point
//! refinement, and a Riemannian Newton endgame.
//!
//! Nothing here certifies global optimality; `all_z_eigenvalues` in
//! particular is best-effort and may miss critical points with tiny basins.

mod form;
pub mod maxmixed;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, uniform_s3};
use crate::spin::Spin;
use crate::tensor::SymmetricTensor;

pub use form::PolynomialForm;
pub use maxmixed::{mm_eigenvalues, mm_extrema, mm_polynomial};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub v: [f64; 4],
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZSolverConfig {
    /// `None` means max(200, 40 N).
    pub num_starts: Option<usize>,
    pub step_tol: f64,
    pub residual_tol: f64,
    pub max_iters: usize,
    pub dedupe_lambda_tol: f64,
    pub seed: u64,
}

impl Default for ZSolverConfig {
    fn default() -> Self {
        ZSolverConfig {
            num_starts: None,
            step_tol: 1e-12,
            residual_tol: 1e-10,
            max_iters: 5000,
            dedupe_lambda_tol: 1e-7,
            seed: 0,
        }
    }
}

impl ZSolverConfig {
    pub fn with_seed(seed: u64) -> Self {
        ZSolverConfig { seed, ..Self::default() }
    }

    pub fn starts_for(&self, order: usize) -> usize {
        self.num_starts.unwrap_or_else(|| (40 * order).max(200))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_tol", self.step_tol),
            ("residual_tol", self.residual_tol),
            ("dedupe_lambda_tol", self.dedupe_lambda_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::OutOfRange(format!("{name} must be positive, got {v}")));
            }
        }
        if self.num_starts == Some(0) || self.max_iters == 0 {
            return Err(Error::OutOfRange("num_starts and max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Which critical points a run is steered towards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientStep {
    pub x: [f64; 4],
    pub value: f64,
    /// Step length that was accepted (or the last one tried).
    pub eta: f64,
    /// True when no step improved the objective (first-order stationary).
    pub converged: bool,
}

fn normalize(x: [f64; 4]) -> [f64; 4] {
    let n = norm(&x);
    x.map(|v| v / n)
}

fn norm(x: &[f64; 4]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn check_unit(x: &[f64; 4]) -> Result<()> {
    let n = norm(x);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::NonUnitVector(n));
    }
    Ok(())
}

/// Tangential part of the Euclidean gradient at unit x: N (A x^[N-1] - f(x) x).
fn tangent_gradient(grad: &[f64; 4], x: &[f64; 4]) -> [f64; 4] {
    let radial = dot(grad, x);
    std::array::from_fn(|i| grad[i] - radial * x[i])
}

/// One projected-gradient step on the sphere with Armijo backtracking,
/// starting from trial length `eta`.
pub fn riemannian_step(
    form: &PolynomialForm,
    x: &[f64; 4],
    sense: Sense,
    eta: f64,
) -> Result<GradientStep> {
    check_unit(x)?;
    let (f, grad) = form.value_grad(x);
    let gt = tangent_gradient(&grad, x);
    let gnorm2 = dot(&gt, &gt);
    if gnorm2 == 0.0 {
        return Ok(GradientStep { x: *x, value: f, eta, converged: true });
    }
    let s = sense.sign();
    let mut eta = eta;
    while eta * gnorm2.sqrt() > 1e-16 {
        let y = normalize(std::array::from_fn(|i| x[i] - s * eta * gt[i]));
        let fy = form.value(&y);
        if s * (fy - f) <= -1e-4 * eta * gnorm2 {
            return Ok(GradientStep { x: y, value: fy, eta, converged: false });
        }
        eta *= 0.5;
    }
    Ok(GradientStep { x: *x, value: f, eta, converged: true })
}

/// ||A x^[N-1] - lambda x|| with lambda = A x^[N].
pub fn residual(form: &PolynomialForm, x: &[f64; 4]) -> (f64, f64) {
    let (f, grad) = form.value_grad(x);
    let n = form.order() as f64;
    let r: f64 = (0..4).map(|i| (grad[i] / n - f * x[i]).powi(2)).sum::<f64>().sqrt();
    (f, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Extremum(Sense),
    AnyCritical,
}

/// Orthonormal basis of the tangent space at unit x.
fn tangent_basis(x: &[f64; 4]) -> [[f64; 4]; 3] {
    let mut basis: Vec<[f64; 4]> = Vec::with_capacity(3);
    let mut order: [usize; 4] = [0, 1, 2, 3];
    order.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()));
    for &e in &order {
        let mut v = [0.0; 4];
        v[e] = 1.0;
        let px = dot(&v, x);
        for i in 0..4 {
            v[i] -= px * x[i];
        }
        for b in &basis {
            let pb = dot(&v, b);
            for i in 0..4 {
                v[i] -= pb * b[i];
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            basis.push(v.map(|c| c / n));
        }
        if basis.len() == 3 {
            break;
        }
    }
    [basis[0], basis[1], basis[2]]
}

/// Riemannian Newton step (saddle-free for extremum targets), capped in length.
fn newton_direction(form: &PolynomialForm, x: &[f64; 4], target: Target) -> [f64; 4] {
    let (f, grad, hess) = form.value_grad_hess(x);
    let basis = tangent_basis(x);
    let radial = dot(&grad, x);
    let g: [f64; 3] = std::array::from_fn(|a| dot(&grad, &basis[a]));
    let mut h = nalgebra::Matrix3::<f64>::zeros();
    for a in 0..3 {
        for b in 0..3 {
            let mut v = 0.0;
            for i in 0..4 {
                for k in 0..4 {
                    v += basis[a][i] * hess[i][k] * basis[b][k];
                }
            }
            h[(a, b)] = v - if a == b { radial } else { 0.0 };
        }
    }
    h = (h + h.transpose()) * 0.5;
    let eig = h.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, e| m.max(e.abs())).max(f.abs());
    let mut step = [0.0; 4];
    for k in 0..3 {
        let mut hk = eig.eigenvalues[k];
        match target {
            Target::Extremum(Sense::Minimize) => hk = hk.abs(),
            Target::Extremum(Sense::Maximize) => hk = -hk.abs(),
            Target::AnyCritical => {}
        }
        if hk.abs() < 1e-14 * scale {
            continue;
        }
        let ev = eig.eigenvectors.column(k);
        let gk: f64 = (0..3).map(|a| ev[a] * g[a]).sum();
        let coef = -gk / hk;
        for a in 0..3 {
            for i in 0..4 {
                step[i] += coef * ev[a] * basis[a][i];
            }
        }
    }
    let len = norm(&step);
    const MAX_STEP: f64 = 0.3;
    if len > MAX_STEP {
        step = step.map(|s| s * MAX_STEP / len);
    }
    step
}

fn newton_polish(
    form: &PolynomialForm,
    mut x: [f64; 4],
    target: Target,
    cfg: &ZSolverConfig,
) -> [f64; 4] {
    let (mut f, mut r) = residual(form, &x);
    for _ in 0..200 {
        if r <= 0.01 * cfg.residual_tol {
            break;
        }
        let step = newton_direction(form, &x, target);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let y = normalize(std::array::from_fn(|i| x[i] + t * step[i]));
            let (fy, ry) = residual(form, &y);
            let ok = match target {
                Target::Extremum(sense) => {
                    let s = sense.sign();
                    s * (fy - f) <= 1e-15 * (1.0 + f.abs()) && (ry < r || s * (fy - f) < 0.0)
                }
                Target::AnyCritical => ry < r,
            };
            if ok {
                x = y;
                f = fy;
                r = ry;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// Shifted fixed-point iteration x <- normalize(s A x^[N-1] + alpha x) with
/// alpha large enough to make the shifted form locally convex.
fn shifted_fixed_point(
    form: &PolynomialForm,
    mut x: [f64; 4],
    sense: Sense,
    cfg: &ZSolverConfig,
) -> [f64; 4] {
    let n = form.order() as f64;
    let s = -sense.sign();
    for _ in 0..cfg.max_iters {
        let (_, grad, hess) = form.value_grad_hess(&x);
        let (_, r) = residual(form, &x);
        if r <= cfg.residual_tol {
            break;
        }
        // Hessian of f is N (N-1) A x^[N-2].
        let m = nalgebra::Matrix4::from_fn(|i, k| s * hess[i][k] / (n * (n - 1.0)).max(1.0));
        let min_eig = m.symmetric_eigenvalues().min();
        let alpha = (-(n - 1.0) * min_eig).max(0.0) + 1e-3;
        let next = normalize(std::array::from_fn(|i| s * grad[i] / n + alpha * x[i]));
        let delta: f64 = (0..4).map(|i| (next[i] - x[i]).powi(2)).sum::<f64>().sqrt();
        x = next;
        if delta < cfg.step_tol {
            break;
        }
    }
    x
}

fn run_from(
    form: &PolynomialForm,
    start: [f64; 4],
    target: Target,
    cfg: &ZSolverConfig,
) -> Option<EigenPair> {
    let mut x = start;
    if let Target::Extremum(sense) = target {
        let mut eta = 0.1;
        for _ in 0..cfg.max_iters {
            let (f, r) = residual(form, &x);
            if r <= 1e-4 * (1.0 + f.abs()) {
                break;
            }
            let step = match riemannian_step(form, &x, sense, eta) {
                Ok(s) => s,
                Err(_) => break,
            };
            let moved: f64 = (0..4).map(|i| (step.x[i] - x[i]).powi(2)).sum::<f64>().sqrt();
            x = step.x;
            if step.converged || moved < cfg.step_tol {
                break;
            }
            eta = step.eta * 2.0;
        }
    }
    x = newton_polish(form, x, target, cfg);
    let (_, r) = residual(form, &x);
    if r > cfg.residual_tol {
        if let Target::Extremum(sense) = target {
            x = shifted_fixed_point(form, x, sense, cfg);
            x = newton_polish(form, x, target, cfg);
        }
    }
    let (lambda, r) = residual(form, &x);
    (r <= cfg.residual_tol).then_some(EigenPair { lambda, v: x, residual: r })
}

fn starts(order: usize, cfg: &ZSolverConfig) -> Vec<[f64; 4]> {
    (0..cfg.starts_for(order))
        .map(|i| uniform_s3(&mut stream(cfg.seed, i as u64)))
        .collect()
}

fn extremum(tensor: &SymmetricTensor, cfg: &ZSolverConfig, sense: Sense) -> Result<EigenPair> {
    cfg.validate()?;
    let form = PolynomialForm::new(tensor);
    let found: Vec<Option<EigenPair>> = starts(tensor.order(), cfg)
        .into_par_iter()
        .map(|x0| run_from(&form, x0, Target::Extremum(sense), cfg))
        .collect();
    let s = sense.sign();
    found
        .into_iter()
        .flatten()
        .reduce(|best, p| if s * p.lambda < s * best.lambda { p } else { best })
        .ok_or_else(|| {
            Error::NoConvergence(format!(
                "none of {} starts reached residual {:e}",
                cfg.starts_for(tensor.order()),
                cfg.residual_tol
            ))
        })
}

/// Smallest Z-eigenvalue: the best local minimum of A x^[N] over all starts.
pub fn min_z_eigenvalue(tensor: &SymmetricTensor, cfg: &ZSolverConfig) -> Result<EigenPair> {
    extremum(tensor, cfg, Sense::Minimize)
}

pub fn max_z_eigenvalue(tensor: &SymmetricTensor, cfg: &ZSolverConfig) -> Result<EigenPair> {
    extremum(tensor, cfg, Sense::Maximize)
}

/// Every critical value found from the starts (minimization, maximization
/// and an unconstrained Newton search per start), deduplicated by value and
/// sorted ascending. Best-effort: completeness is not guaranteed.
pub fn all_z_eigenvalues(tensor: &SymmetricTensor, cfg: &ZSolverConfig) -> Result<Vec<EigenPair>> {
    cfg.validate()?;
    let form = PolynomialForm::new(tensor);
    let targets = [
        Target::Extremum(Sense::Minimize),
        Target::Extremum(Sense::Maximize),
        Target::AnyCritical,
    ];
    let mut found: Vec<EigenPair> = starts(tensor.order(), cfg)
        .into_par_iter()
        .flat_map_iter(|x0| {
            let form = &form;
            targets.iter().filter_map(move |&t| run_from(form, x0, t, cfg))
        })
        .collect();
    if found.is_empty() {
        return Err(Error::NoConvergence(format!(
            "no critical point reached residual {:e}",
            cfg.residual_tol
        )));
    }
    found.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(dedupe_by_value(found, cfg.dedupe_lambda_tol))
}

/// Groups a sorted list into runs whose consecutive gaps are at most `tol`,
/// keeping the member with the smallest residual from each run.
fn dedupe_by_value(sorted: Vec<EigenPair>, tol: f64) -> Vec<EigenPair> {
    let mut out: Vec<EigenPair> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for p in sorted {
        match out.last_mut() {
            Some(rep) if p.lambda - last <= tol => {
                if p.residual < rep.residual {
                    *rep = p;
                }
            }
            _ => out.push(p),
        }
        last = p.lambda;
    }
    out
}

/// For odd N, checks that (-lambda, -v) is also an eigenpair within
/// `tol`. Returns `None` for even N, where the check does not apply.
pub fn sign_counterpart_check(tensor: &SymmetricTensor, pair: &EigenPair, tol: f64) -> Option<bool> {
    if tensor.order() % 2 == 0 {
        return None;
    }
    let w = pair.v.map(|c| -c);
    let av = tensor.contract_to_vector(&w);
    let r: f64 = (0..4).map(|i| (av[i] + pair.lambda * w[i]).powi(2)).sum::<f64>().sqrt();
    Some(r <= tol)
}

/// Analytic spectrum of any spin coherent state: {0, 2^j} for integer j,
/// {-2^j, 0, 2^j} for half-integer j.
pub fn coherent_eigenvalues(spin: Spin) -> Vec<f64> {
    let top = 2f64.powf(spin.j());
    if spin.is_integer() {
        vec![0.0, top]
    } else {
        vec![-top, 0.0, top]
    }
}

/// Eigen-report file: `{ "order", "eigenpairs": [{lambda, v, residual}], "num_starts", "seed" }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenReport {
    pub order: usize,
    pub eigenpairs: Vec<EigenPair>,
    pub num_starts: usize,
    pub seed: u64,
}

impl EigenReport {
    pub fn new(order: usize, eigenpairs: Vec<EigenPair>, cfg: &ZSolverConfig) -> Self {
        EigenReport { order, eigenpairs, num_starts: cfg.starts_for(order), seed: cfg.seed }
    }
}
