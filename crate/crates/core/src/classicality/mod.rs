//! Quantumness: Hilbert-Schmidt distance from a state to the classical
//! states (convex mixtures of spin coherent states).
//!
//! Two stages. The quadratic stage solves a nonnegative least-squares fit of
//! the state by a finite atlas of coherent projectors, re-sampling the atlas
//! around the directions that carry weight. The linear stage then walks from
//! that fit towards the state for as long as the point stays representable
//! by a much larger atlas, and measures the remaining distance.

mod nnls;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream};
use crate::spin::{
    coherent_amplitudes, hermitize, hs_distance_matrices, overlap_sq_from_vectors, CMatrix,
    CVector, CoherentDirection, Spin, SpinState,
};

pub use nnls::{kkt_violation, nnls, nnls_with, GramOperator, NnlsOptions, NnlsSolution, WithSumRow, KKT_TOL};

/// How the mixture weights are constrained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Only w >= 0: distance to the cone generated by coherent projectors.
    #[default]
    Cone,
    /// Additionally sum(w) = 1, enforced by a heavily weighted extra row.
    SumToOne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumnessConfig {
    pub atlas_size: usize,
    pub atlas_size_linear: usize,
    pub iterations: usize,
    pub keep_threshold: f64,
    pub neighbors: usize,
    pub sigma0: f64,
    pub decay: f64,
    pub bisection_steps: usize,
    pub feas_tol: f64,
    pub normalization: Normalization,
    /// Weight of the sum-to-one row relative to the data rows.
    pub sum_row_weight: f64,
    pub seed: u64,
}

impl Default for QuantumnessConfig {
    fn default() -> Self {
        QuantumnessConfig {
            atlas_size: 800,
            atlas_size_linear: 8000,
            iterations: 8,
            keep_threshold: 1e-6,
            neighbors: 5,
            sigma0: 0.3,
            decay: 0.5,
            bisection_steps: 25,
            feas_tol: 1e-6,
            normalization: Normalization::Cone,
            sum_row_weight: 1e3,
            seed: 0,
        }
    }
}

impl QuantumnessConfig {
    pub fn with_seed(seed: u64) -> Self {
        QuantumnessConfig { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atlas_size == 0 || self.iterations == 0 {
            return Err(Error::OutOfRange("atlas_size and iterations must be positive".into()));
        }
        for (name, v) in [
            ("keep_threshold", self.keep_threshold),
            ("sigma0", self.sigma0),
            ("feas_tol", self.feas_tol),
            ("sum_row_weight", self.sum_row_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::OutOfRange(format!("decay = {} not in (0, 1]", self.decay)));
        }
        Ok(())
    }
}

/// A finite set of coherent directions, with amplitudes and (optionally) the
/// dense Gram matrix G_ik = |<alpha_i|alpha_k>|^2 precomputed.
#[derive(Clone, Debug)]
pub struct CoherentAtlas {
    spin: Spin,
    directions: Vec<CoherentDirection>,
    units: Vec<[f64; 3]>,
    amplitudes: Vec<CVector>,
    gram: Option<DMatrix<f64>>,
}

impl CoherentAtlas {
    /// With `dense_gram` false, Gram columns are computed on demand, which
    /// keeps large atlases at O(M) memory.
    pub fn from_directions(spin: Spin, directions: Vec<CoherentDirection>, dense_gram: bool) -> Self {
        let units: Vec<[f64; 3]> = directions.iter().map(|d| d.unit_vector()).collect();
        let amplitudes = directions.iter().map(|&d| coherent_amplitudes(spin, d)).collect();
        let m = directions.len();
        let gram = dense_gram.then(|| {
            let mut g = DMatrix::from_element(m, m, 1.0);
            for i in 0..m {
                for k in 0..i {
                    let v = overlap_sq_from_vectors(spin.order(), &units[i], &units[k]);
                    g[(i, k)] = v;
                    g[(k, i)] = v;
                }
            }
            g
        });
        CoherentAtlas { spin, directions, units, amplitudes, gram }
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[CoherentDirection] {
        &self.directions
    }

    pub fn gram(&self) -> Option<&DMatrix<f64>> {
        self.gram.as_ref()
    }

    /// sum_i w_i |alpha_i><alpha_i| over the listed (index, weight) pairs.
    fn mixture(&self, terms: impl Iterator<Item = (usize, f64)>) -> CMatrix {
        let d = self.spin.dim();
        let mut m = CMatrix::zeros(d, d);
        for (i, w) in terms {
            let a = &self.amplitudes[i];
            for r in 0..d {
                let ar = a[r] * w;
                for c in 0..d {
                    m[(r, c)] += ar * a[c].conj();
                }
            }
        }
        hermitize(&m)
    }
}

impl GramOperator for CoherentAtlas {
    fn size(&self) -> usize {
        self.len()
    }

    fn column(&self, k: usize, out: &mut [f64]) {
        match &self.gram {
            Some(g) => out.copy_from_slice(g.column(k).as_slice()),
            None => {
                let n = self.spin.order();
                let uk = &self.units[k];
                for (o, u) in out.iter_mut().zip(&self.units) {
                    *o = overlap_sq_from_vectors(n, u, uk);
                }
                out[k] = 1.0;
            }
        }
    }
}

/// `m` uniform directions with the dense Gram matrix.
pub fn build_atlas<R: Rng + ?Sized>(spin: Spin, m: usize, rng: &mut R) -> CoherentAtlas {
    let dirs = (0..m).map(|_| CoherentDirection::random(rng)).collect();
    CoherentAtlas::from_directions(spin, dirs, true)
}

/// c_i = <alpha_i| rho |alpha_i>.
pub fn target_overlaps(state: &SpinState, atlas: &CoherentAtlas) -> Result<Vec<f64>> {
    if state.spin() != atlas.spin {
        return Err(Error::DimensionMismatch { expected: atlas.spin.dim(), found: state.spin().dim() });
    }
    Ok(overlaps(state.matrix(), atlas))
}

fn overlaps(m: &CMatrix, atlas: &CoherentAtlas) -> Vec<f64> {
    let d = atlas.spin.dim();
    atlas
        .amplitudes
        .iter()
        .map(|a| {
            let mut s = Complex64::new(0.0, 0.0);
            for r in 0..d {
                let mut row = Complex64::new(0.0, 0.0);
                for c in 0..d {
                    row += m[(r, c)] * a[c];
                }
                s += a[r].conj() * row;
            }
            s.re
        })
        .collect()
}

/// Nonnegative mixture of coherent projectors; only the directions with
/// positive weight are stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDecomposition {
    pub j: f64,
    pub directions: Vec<CoherentDirection>,
    pub weights: Vec<f64>,
    pub weight_sum: f64,
}

impl ClassicalDecomposition {
    fn from_solution(atlas: &CoherentAtlas, weights: &[f64]) -> Self {
        let (directions, weights): (Vec<_>, Vec<_>) = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (atlas.directions[i], w))
            .unzip();
        let weight_sum = weights.iter().sum();
        ClassicalDecomposition { j: atlas.spin.j(), directions, weights, weight_sum }
    }

    pub fn spin(&self) -> Result<Spin> {
        Spin::from_j(self.j)
    }

    /// rho_c = sum_i w_i |alpha_i><alpha_i| (trace = weight_sum).
    pub fn matrix(&self) -> Result<CMatrix> {
        let atlas = CoherentAtlas::from_directions(self.spin()?, self.directions.clone(), false);
        Ok(atlas.mixture(self.weights.iter().copied().enumerate()))
    }

    /// Directions whose weight exceeds `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<(CoherentDirection, f64)> {
        self.directions
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > threshold)
            .map(|(&d, &w)| (d, w))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticResult {
    pub q: f64,
    pub decomposition: ClassicalDecomposition,
    /// Round (1-based) whose fit was kept.
    pub best_round: usize,
    pub iterations_used: usize,
}

struct Fit {
    q: f64,
    weights: Vec<f64>,
    passive: Vec<usize>,
}

fn solve_fit(
    atlas: &CoherentAtlas,
    target: &CMatrix,
    c: &[f64],
    warm: &[usize],
    cfg: &QuantumnessConfig,
) -> Result<Fit> {
    let opts = NnlsOptions::default();
    let sol = match cfg.normalization {
        Normalization::Cone => nnls_with(atlas, c, warm, &opts)?,
        Normalization::SumToOne => {
            let beta = cfg.sum_row_weight;
            let ca: Vec<f64> = c.iter().map(|v| v + beta * beta).collect();
            nnls_with(&WithSumRow { inner: atlas, beta }, &ca, warm, &opts)?
        }
    };
    let fit = atlas.mixture(sol.passive.iter().map(|&k| (k, sol.weights[k])));
    let q = hs_distance_matrices(target, &fit)?;
    Ok(Fit { q, weights: sol.weights, passive: sol.passive })
}

fn perturb<R: Rng + ?Sized>(dir: CoherentDirection, sigma: f64, rng: &mut R) -> CoherentDirection {
    let n = dir.unit_vector();
    let v = [
        n[0] + sigma * standard_normal(rng),
        n[1] + sigma * standard_normal(rng),
        n[2] + sigma * standard_normal(rng),
    ];
    if v.iter().all(|x| x.abs() < 1e-12) {
        return dir;
    }
    CoherentDirection::from_vector(v)
}

/// Quadratic stage: repeated NNLS over a re-sampled atlas. Q_est is the
/// distance from the state to the best fit, computed directly from the
/// matrices (equal to sqrt(w^T G w - 2 c^T w + tr rho^2)).
pub fn quantumness_quadratic(state: &SpinState, cfg: &QuantumnessConfig) -> Result<QuadraticResult> {
    cfg.validate()?;
    let spin = state.spin();
    let mut rng = stream(cfg.seed, 0);
    let m = cfg.atlas_size;
    let mut dirs: Vec<CoherentDirection> = (0..m).map(|_| CoherentDirection::random(&mut rng)).collect();
    let mut warm: Vec<usize> = Vec::new();
    let mut best: Option<(f64, ClassicalDecomposition, usize)> = None;
    let mut rounds = 0;

    for t in 0..cfg.iterations {
        rounds = t + 1;
        let atlas = CoherentAtlas::from_directions(spin, dirs, true);
        let c = overlaps(state.matrix(), &atlas);
        let fit = solve_fit(&atlas, state.matrix(), &c, &warm, cfg)?;
        if best.as_ref().map_or(true, |b| fit.q < b.0) {
            best = Some((fit.q, ClassicalDecomposition::from_solution(&atlas, &fit.weights), t + 1));
        }
        if fit.q < 1e-12 || t + 1 == cfg.iterations {
            break;
        }

        let kept: Vec<usize> = fit
            .passive
            .iter()
            .copied()
            .filter(|&k| fit.weights[k] > cfg.keep_threshold)
            .collect();
        let sigma = cfg.sigma0 * cfg.decay.powi(t as i32);
        let mut next: Vec<CoherentDirection> = kept.iter().map(|&k| atlas.directions[k]).collect();
        'outer: for &k in &kept {
            for _ in 0..cfg.neighbors {
                if next.len() >= m {
                    break 'outer;
                }
                next.push(perturb(atlas.directions[k], sigma, &mut rng));
            }
        }
        while next.len() < m {
            next.push(CoherentDirection::random(&mut rng));
        }
        warm = (0..kept.len()).collect();
        dirs = next;
    }

    let (q, decomposition, best_round) = best.expect("at least one round");
    Ok(QuadraticResult { q, decomposition, best_round, iterations_used: rounds })
}

#[derive(Clone, Debug)]
pub struct LinearResult {
    pub q: f64,
    pub k: f64,
    pub decomposition: ClassicalDecomposition,
}

/// Linear stage: the largest k in [0, 1] for which
/// rho_k = rho_c + k (rho - rho_c) is still fitted by `atlas_large` to within
/// `feas_tol`, found by bisection. Q is the distance from rho to that fit.
/// `atlas_large` should contain the support of `decomposition` so that
/// k = 0 is feasible.
pub fn refine_linear(
    state: &SpinState,
    decomposition: &ClassicalDecomposition,
    atlas_large: &CoherentAtlas,
    cfg: &QuantumnessConfig,
) -> Result<LinearResult> {
    let spin = state.spin();
    if decomposition.spin()? != spin || atlas_large.spin != spin {
        return Err(Error::DimensionMismatch { expected: spin.dim(), found: atlas_large.spin.dim() });
    }
    let rho = state.matrix();
    let rho_c = decomposition.matrix()?;
    let q0 = hs_distance_matrices(rho, &rho_c)?;
    let c_rho = overlaps(rho, atlas_large);
    let c_c = overlaps(&rho_c, atlas_large);

    let point = |k: f64| -> (CMatrix, Vec<f64>) {
        let m = &rho_c + (rho - &rho_c) * Complex64::new(k, 0.0);
        let c = c_c.iter().zip(&c_rho).map(|(a, b)| a + k * (b - a)).collect();
        (m, c)
    };
    let mut witness: Option<(f64, Fit)> = None;
    let mut warm: Vec<usize> = Vec::new();
    let try_k = |k: f64, warm: &mut Vec<usize>| -> Result<Option<Fit>> {
        let (m, c) = point(k);
        let fit = solve_fit(atlas_large, &m, &c, warm, cfg)?;
        if fit.q <= cfg.feas_tol {
            *warm = fit.passive.clone();
            Ok(Some(fit))
        } else {
            Ok(None)
        }
    };

    if let Some(fit) = try_k(1.0, &mut warm)? {
        witness = Some((1.0, fit));
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..cfg.bisection_steps {
            let mid = 0.5 * (lo + hi);
            match try_k(mid, &mut warm)? {
                Some(fit) => {
                    lo = mid;
                    witness = Some((mid, fit));
                }
                None => hi = mid,
            }
        }
    }

    let Some((k, fit)) = witness else {
        return Ok(LinearResult { q: q0, k: 0.0, decomposition: decomposition.clone() });
    };
    let fitted = atlas_large.mixture(fit.passive.iter().map(|&i| (i, fit.weights[i])));
    let q = hs_distance_matrices(rho, &fitted)?;
    if q >= q0 {
        return Ok(LinearResult { q: q0, k: 0.0, decomposition: decomposition.clone() });
    }
    Ok(LinearResult { q, k, decomposition: ClassicalDecomposition::from_solution(atlas_large, &fit.weights) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumnessReport {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "Q_quadratic")]
    pub q_quadratic: f64,
    pub k_refine: f64,
    pub weight_sum: f64,
    pub iterations_used: usize,
    pub best_round: usize,
    pub atlas_size: usize,
    pub atlas_size_linear: usize,
    pub seed: u64,
    pub normalization: Normalization,
    /// Witness: rho_c with ||rho - rho_c|| = Q.
    pub decomposition: ClassicalDecomposition,
    /// Directions of the witness with weight above the keep threshold.
    pub support: Vec<(CoherentDirection, f64)>,
    pub config: QuantumnessConfig,
}

impl QuantumnessReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Full pipeline: quadratic stage, then linear refinement over an atlas of
/// the quadratic support plus `atlas_size_linear` fresh directions.
pub fn quantumness(state: &SpinState, cfg: &QuantumnessConfig) -> Result<QuantumnessReport> {
    let quad = quantumness_quadratic(state, cfg)?;
    let lin = if cfg.atlas_size_linear == 0 || cfg.bisection_steps == 0 {
        LinearResult { q: quad.q, k: 0.0, decomposition: quad.decomposition.clone() }
    } else {
        let mut rng = stream(cfg.seed, 1);
        let mut dirs = quad.decomposition.directions.clone();
        dirs.extend((0..cfg.atlas_size_linear).map(|_| CoherentDirection::random(&mut rng)));
        let atlas = CoherentAtlas::from_directions(state.spin(), dirs, false);
        refine_linear(state, &quad.decomposition, &atlas, cfg)?
    };
    Ok(QuantumnessReport {
        q: lin.q,
        q_quadratic: quad.q,
        k_refine: lin.k,
        weight_sum: lin.decomposition.weight_sum,
        iterations_used: quad.iterations_used,
        best_round: quad.best_round,
        atlas_size: cfg.atlas_size,
        atlas_size_linear: cfg.atlas_size_linear,
        seed: cfg.seed,
        normalization: cfg.normalization,
        support: lin.decomposition.support(cfg.keep_threshold),
        decomposition: lin.decomposition,
        config: cfg.clone(),
    })
}

/// The witness of the pipeline rescaled to unit trace.
pub fn closest_classical_state(state: &SpinState, cfg: &QuantumnessConfig) -> Result<SpinState> {
    let report = quantumness(state, cfg)?;
    decomposition_state(&report.decomposition)
}

/// A decomposition as a normalized state.
pub fn decomposition_state(decomposition: &ClassicalDecomposition) -> Result<SpinState> {
    if !(decomposition.weight_sum > 0.0) {
        return Err(Error::InvalidState("empty classical decomposition".into()));
    }
    let m = decomposition.matrix()? / Complex64::new(decomposition.weight_sum, 0.0);
    let tr = m.trace().re;
    SpinState::new(decomposition.spin()?, hermitize(&(m / Complex64::new(tr, 0.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::spin::{coherent_state, dicke_state, maximally_mixed, random_hs_state};

    fn spin(j: f64) -> Spin {
        Spin::from_j(j).unwrap()
    }

    fn small(seed: u64) -> QuantumnessConfig {
        QuantumnessConfig { atlas_size: 300, atlas_size_linear: 2000, seed, ..QuantumnessConfig::default() }
    }

    #[test]
    fn atlas_gram_properties() {
        let mut rng = seeded(1);
        let one = build_atlas(spin(2.0), 1, &mut rng);
        assert_eq!(one.gram().unwrap(), &DMatrix::from_element(1, 1, 1.0));
        let a = build_atlas(spin(1.5), 60, &mut rng);
        let g = a.gram().unwrap();
        assert!((g - g.transpose()).amax() == 0.0);
        for i in 0..60 {
            assert_eq!(g[(i, i)], 1.0);
        }
        assert!(g.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(g.clone().symmetric_eigenvalues().min() > -1e-10);
        // dense and lazy columns agree
        let lazy = CoherentAtlas::from_directions(spin(1.5), a.directions().to_vec(), false);
        let mut col = vec![0.0; 60];
        lazy.column(7, &mut col);
        for i in 0..60 {
            assert!((col[i] - g[(i, 7)]).abs() < 1e-15);
        }
    }

    #[test]
    fn atlas_is_uniform() {
        let a = build_atlas(spin(1.0), 10_000, &mut seeded(2));
        let mean: f64 = a.directions().iter().map(|d| d.theta.cos()).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.03);
    }

    #[test]
    fn overlaps_examples() {
        let mut rng = seeded(3);
        let a = build_atlas(spin(2.0), 40, &mut rng);
        let mm = target_overlaps(&maximally_mixed(spin(2.0)), &a).unwrap();
        assert!(mm.iter().all(|&c| (c - 0.2).abs() < 1e-12));
        let rho = coherent_state(spin(2.0), a.directions()[5]);
        let c = target_overlaps(&rho, &a).unwrap();
        assert!((c[5] - 1.0).abs() < 1e-12);
        let g = a.gram().unwrap();
        for i in 0..40 {
            assert!((c[i] - g[(i, 5)]).abs() < 1e-12);
            assert!((0.0..=1.0 + 1e-12).contains(&c[i]));
        }
    }

    #[test]
    fn spin_half_is_always_classical() {
        // One fixed set of 100 random directions has a hull of inradius
        // about 0.95 in the Bloch ball, so near-pure states need the
        // re-sampled atlas of the quadratic stage.
        let mut rng = seeded(4);
        let s = spin(0.5);
        let cfg = QuantumnessConfig { atlas_size: 100, ..QuantumnessConfig::with_seed(4) };
        for _ in 0..10 {
            let rho = random_hs_state(s, &mut rng);
            let r = quantumness_quadratic(&rho, &cfg).unwrap();
            assert!(r.q < 1e-6, "Q = {}", r.q);
        }
        let atlas = build_atlas(s, 100, &mut rng);
        let rho = crate::spin::depolarize(&random_hs_state(s, &mut rng), 0.5).unwrap();
        let c = overlaps(rho.matrix(), &atlas);
        let w = nnls(atlas.gram().unwrap(), &c).unwrap();
        assert!(kkt_violation(atlas.gram().unwrap(), &c, &w) < KKT_TOL);
        let fit = atlas.mixture(w.iter().copied().enumerate());
        assert!(hs_distance_matrices(rho.matrix(), &fit).unwrap() < 1e-6);
    }

    #[test]
    fn coherent_and_mixed_inputs() {
        let s = spin(2.0);
        let rho = coherent_state(s, CoherentDirection::new(0.7, 1.9).unwrap());
        let r = quantumness(&rho, &small(5)).unwrap();
        assert!(r.q <= 1e-4, "Q = {}", r.q);
        let r = quantumness(&maximally_mixed(s), &small(5)).unwrap();
        assert!(r.q <= 1e-3 && r.q <= r.q_quadratic);
    }

    #[test]
    fn dicke_state_is_far_from_classical() {
        let r = quantumness_quadratic(&dicke_state(spin(2.0), 0.0).unwrap(), &small(6)).unwrap();
        assert!(r.q > 0.1);
    }

    #[test]
    fn report_matches_its_witness() {
        let mut rng = seeded(7);
        let rho = random_hs_state(spin(1.5), &mut rng);
        let r = quantumness(&rho, &small(7)).unwrap();
        let direct = hs_distance_matrices(rho.matrix(), &r.decomposition.matrix().unwrap()).unwrap();
        assert!((direct - r.q).abs() < 1e-8);
        assert!(r.q <= r.q_quadratic && r.q >= 0.0);
        assert!((0.0..=1.0).contains(&r.k_refine));
        let again = quantumness(&rho, &small(7)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn sum_to_one_mode_gives_unit_weight() {
        let mut rng = seeded(8);
        let rho = random_hs_state(spin(1.0), &mut rng);
        let cfg = QuantumnessConfig { normalization: Normalization::SumToOne, ..small(8) };
        let r = quantumness(&rho, &cfg).unwrap();
        assert!((r.weight_sum - 1.0).abs() < 1e-5, "{}", r.weight_sum);
    }

    #[test]
    fn closest_state_is_valid() {
        let mut rng = seeded(9);
        let rho = random_hs_state(spin(2.0), &mut rng);
        let c = closest_classical_state(&rho, &small(9)).unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let cfg = QuantumnessConfig { decay: 0.0, ..QuantumnessConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(QuantumnessConfig::default().validate().is_ok());
    }
}
