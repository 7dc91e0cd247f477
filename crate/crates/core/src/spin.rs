//! Spin-j density matrices in the `|j,m>` basis (m descending from j to -j),
//! spin coherent states, the Dicke embedding into N = 2j qubits and the
//! Hilbert-Schmidt random ensemble.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::binomial;
use crate::error::{Error, Result};
use crate::rng::standard_normal;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest qubit number N = 2j handled by the Dicke-based routines unless a
/// caller raises it explicitly.
pub const DEFAULT_ORDER_CAP: usize = 12;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

/// A spin quantum number, stored as the qubit count N = 2j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Spin {
    order: usize,
}

impl Spin {
    pub fn from_j(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 0.5 || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpin(j));
        }
        Ok(Spin { order: twice.round() as usize })
    }

    pub fn from_order(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidSpin(0.0));
        }
        Ok(Spin { order })
    }

    pub fn j(self) -> f64 {
        self.order as f64 / 2.0
    }

    /// N = 2j.
    pub fn order(self) -> usize {
        self.order
    }

    /// 2j + 1.
    pub fn dim(self) -> usize {
        self.order + 1
    }

    pub fn is_integer(self) -> bool {
        self.order % 2 == 0
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.order / 2)
        } else {
            write!(f, "{}/2", self.order)
        }
    }
}

/// Direction of a spin coherent state on the Bloch sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentDirection {
    pub theta: f64,
    pub phi: f64,
}

impl CoherentDirection {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::OutOfRange(format!("theta = {theta} not in [0, pi]")));
        }
        if !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::OutOfRange(format!("phi = {phi} not in [0, 2pi)")));
        }
        Ok(CoherentDirection { theta, phi })
    }

    /// Builds a direction from arbitrary angles, folding them into range.
    pub fn wrapped(theta: f64, phi: f64) -> Self {
        let n = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        Self::from_vector(n)
    }

    /// Direction of a nonzero 3-vector (normalized internally).
    pub fn from_vector(n: [f64; 3]) -> Self {
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let z = (n[2] / norm).clamp(-1.0, 1.0);
        let theta = z.acos();
        let mut phi = n[1].atan2(n[0]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        if phi >= 2.0 * PI {
            phi = 0.0;
        }
        CoherentDirection { theta, phi }
    }

    /// Uniform on the sphere: cos(theta) uniform in [-1, 1], phi uniform.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        CoherentDirection { theta: z.acos(), phi }
    }

    /// n = (sin(theta) cos(phi), sin(theta) sin(phi), cos(theta)).
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Amplitudes of the coherent state in the `|j,m>` basis, index k = j - m.
pub fn coherent_amplitudes(spin: Spin, dir: CoherentDirection) -> CVector {
    let n = spin.order();
    let (s, c) = (dir.theta / 2.0).sin_cos();
    let down = Complex64::from_polar(s, -dir.phi);
    DVector::from_fn(n + 1, |k, _| {
        let up_part = Complex64::new(c.powi((n - k) as i32), 0.0);
        up_part * down.powu(k as u32) * binomial(n, k).sqrt()
    })
}

/// A validated spin-j density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    spin: Spin,
    matrix: CMatrix,
}

impl SpinState {
    /// Validates Hermiticity, unit trace and positivity before accepting `matrix`.
    pub fn new(spin: Spin, matrix: CMatrix) -> Result<Self> {
        let state = SpinState { spin, matrix };
        state.validate()?;
        Ok(state)
    }

    /// Pure state from an (unnormalized) amplitude vector.
    pub fn from_pure(spin: Spin, amplitudes: &CVector) -> Result<Self> {
        if amplitudes.len() != spin.dim() {
            return Err(Error::DimensionMismatch { expected: spin.dim(), found: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidState("zero amplitude vector".into()));
        }
        let a = amplitudes / Complex64::new(norm, 0.0);
        Ok(SpinState { spin, matrix: hermitize(&(&a * a.adjoint())) })
    }

    pub(crate) fn from_raw(spin: Spin, matrix: CMatrix) -> Self {
        SpinState { spin, matrix }
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.spin.dim();
        if self.matrix.nrows() != d || self.matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.matrix.nrows() });
        }
        if self.matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite matrix entry".into()));
        }
        let herm = hermiticity_defect(&self.matrix);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max deviation {herm:e})"
            )));
        }
        let tr = self.matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_eig = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "not positive semi-definite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// tr(rho^2).
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// <alpha| rho |alpha> for the coherent state in direction `dir`.
    pub fn coherent_expectation(&self, dir: CoherentDirection) -> f64 {
        let a = coherent_amplitudes(self.spin, dir);
        (a.adjoint() * &self.matrix * &a)[(0, 0)].re
    }

    pub fn to_file(&self) -> StateFile {
        StateFile {
            j: self.spin.j(),
            matrix: (0..self.spin.dim())
                .map(|r| {
                    (0..self.spin.dim())
                        .map(|c| {
                            let z = self.matrix[(r, c)];
                            [z.re, z.im]
                        })
                        .collect()
                })
                .collect(),
            provenance: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(text)?;
        file.into_state()
    }
}

/// On-disk state layout: `{ "j": 1.5, "matrix": [[[re, im], ...], ...] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub j: f64,
    pub matrix: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl StateFile {
    pub fn into_state(self) -> Result<SpinState> {
        let spin = Spin::from_j(self.j)?;
        let d = spin.dim();
        if self.matrix.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.matrix.len() });
        }
        if let Some(row) = self.matrix.iter().find(|row| row.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: row.len() });
        }
        let m = CMatrix::from_fn(d, d, |r, c| {
            let [re, im] = self.matrix[r][c];
            Complex64::new(re, im)
        });
        SpinState::new(spin, m)
    }
}

/// Largest entry modulus.
pub trait MaxAbs {
    fn max_abs(&self) -> f64;
}

impl MaxAbs for CMatrix {
    fn max_abs(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// (M + M^dagger) / 2.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn coherent_state(spin: Spin, dir: CoherentDirection) -> SpinState {
    let a = coherent_amplitudes(spin, dir);
    SpinState::from_raw(spin, hermitize(&(&a * a.adjoint())))
}

/// |<alpha_1|alpha_2>|^2 = 4^-j [1 + cos t1 cos t2 + cos(p1 - p2) sin t1 sin t2]^(2j).
pub fn coherent_overlap_sq(spin: Spin, a: CoherentDirection, b: CoherentDirection) -> f64 {
    let bracket = 1.0
        + a.theta.cos() * b.theta.cos()
        + (a.phi - b.phi).cos() * a.theta.sin() * b.theta.sin();
    (bracket / 2.0).max(0.0).powi(spin.order() as i32)
}

/// Same quantity from the unit vectors: ((1 + n1.n2) / 2)^(2j).
pub(crate) fn overlap_sq_from_vectors(order: usize, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    ((1.0 + dot) / 2.0).max(0.0).powi(order as i32)
}

/// Projector onto `|j,m>`.
pub fn dicke_state(spin: Spin, m: f64) -> Result<SpinState> {
    let k = spin.j() - m;
    if !(-1e-9..=spin.order() as f64 + 1e-9).contains(&k) || (k - k.round()).abs() > 1e-9 {
        return Err(Error::InvalidMagneticNumber { j: spin.j(), m });
    }
    let k = k.round() as usize;
    let mut mat = CMatrix::zeros(spin.dim(), spin.dim());
    mat[(k, k)] = Complex64::new(1.0, 0.0);
    Ok(SpinState::from_raw(spin, mat))
}

/// The 2^N x (N+1) isometry whose column k is the normalized symmetric sum of
/// all N-bit strings of Hamming weight k (qubit q is bit q; bit value 1 is an
/// excitation). Column k corresponds to m = j - k.
pub fn dicke_isometry(spin: Spin, cap: usize) -> Result<CMatrix> {
    let n = spin.order();
    if n > cap {
        return Err(Error::OrderAboveCap { order: n, cap });
    }
    let rows = 1usize << n;
    let mut d = CMatrix::zeros(rows, n + 1);
    for b in 0..rows {
        let k = (b as u64).count_ones() as usize;
        d[(b, k)] = Complex64::new(binomial(n, k).powf(-0.5), 0.0);
    }
    Ok(d)
}

/// Hilbert-Schmidt distance sqrt(tr[(a - b)^dagger (a - b)]).
pub fn hs_distance(a: &SpinState, b: &SpinState) -> Result<f64> {
    hs_distance_matrices(a.matrix(), b.matrix())
}

pub fn hs_distance_matrices(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
}

/// G G^dagger / tr(G G^dagger) with G a complex Ginibre matrix (independent
/// standard normal real and imaginary parts).
pub fn random_hs_state<R: Rng + ?Sized>(spin: Spin, rng: &mut R) -> SpinState {
    let d = spin.dim();
    let mut g = CMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let re = standard_normal(rng);
            let im = standard_normal(rng);
            g[(r, c)] = Complex64::new(re, im);
        }
    }
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    SpinState::from_raw(spin, hermitize(&(m / Complex64::new(tr, 0.0))))
}

pub fn maximally_mixed(spin: Spin) -> SpinState {
    let d = spin.dim();
    SpinState::from_raw(spin, CMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0))
}

/// a rho + (1 - a) 1/(N+1).
pub fn depolarize(state: &SpinState, a: f64) -> Result<SpinState> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::OutOfRange(format!("mixing parameter a = {a} not in [0, 1]")));
    }
    let mm = maximally_mixed(state.spin());
    let m = state.matrix() * Complex64::new(a, 0.0) + mm.matrix() * Complex64::new(1.0 - a, 0.0);
    Ok(SpinState::from_raw(state.spin(), m))
}

/// Real parts of all entries (row-major) followed by all imaginary parts;
/// length 2 (2j+1)^2. Hermiticity makes about half of the coordinates
/// redundant; they are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct RealStateVector {
    pub spin: Spin,
    pub entries: Vec<f64>,
}

pub fn to_real_vector(state: &SpinState) -> RealStateVector {
    RealStateVector { spin: state.spin(), entries: matrix_to_real(state.matrix()) }
}

pub(crate) fn matrix_to_real(m: &CMatrix) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(2 * d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)].re);
        }
    }
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)].im);
        }
    }
    out
}

pub fn from_real_vector(v: &[f64], spin: Spin) -> Result<SpinState> {
    let d = spin.dim();
    if v.len() != 2 * d * d {
        return Err(Error::DimensionMismatch { expected: 2 * d * d, found: v.len() });
    }
    let m = CMatrix::from_fn(d, d, |r, c| Complex64::new(v[r * d + c], v[d * d + r * d + c]));
    SpinState::new(spin, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn spin(j: f64) -> Spin {
        Spin::from_j(j).unwrap()
    }

    fn diag_of(s: &SpinState) -> Vec<f64> {
        (0..s.spin().dim()).map(|k| s.matrix()[(k, k)].re).collect()
    }

    #[test]
    fn spin_parsing() {
        assert_eq!(spin(1.5).order(), 3);
        assert_eq!(spin(6.0).dim(), 13);
        assert!(Spin::from_j(0.3).is_err());
        assert!(Spin::from_j(0.0).is_err());
        assert!(Spin::from_j(-1.0).is_err());
        assert_eq!(spin(2.5).to_string(), "5/2");
    }

    #[test]
    fn coherent_state_at_poles() {
        let up = coherent_state(spin(1.0), CoherentDirection::new(0.0, 0.0).unwrap());
        assert_eq!(diag_of(&up), vec![1.0, 0.0, 0.0]);
        let down = coherent_state(spin(1.0), CoherentDirection::new(PI, 0.0).unwrap());
        let d = diag_of(&down);
        assert!(d[0].abs() < 1e-15 && d[1].abs() < 1e-15 && (d[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coherent_state_is_pure_and_valid() {
        let s = coherent_state(spin(2.0), CoherentDirection::new(PI / 3.0, 1.1).unwrap());
        s.validate().unwrap();
        assert!((s.purity() - 1.0).abs() < 1e-12);
        let ev = s.eigenvalues();
        assert!(ev[..ev.len() - 1].iter().all(|e| e.abs() < 1e-10));
        let dir = CoherentDirection::new(PI / 3.0, 1.1).unwrap();
        assert!((s.coherent_expectation(dir) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_examples() {
        let s = spin(1.0);
        let a = CoherentDirection::new(0.7, 2.0).unwrap();
        assert!((coherent_overlap_sq(s, a, a) - 1.0).abs() < 1e-15);
        let anti = CoherentDirection::new(PI - 0.7, 2.0 + PI).unwrap();
        assert!(coherent_overlap_sq(s, a, anti).abs() < 1e-15);

        // theta 0 vs pi/2: bracket = 1, overlap = 4^-1.
        let p = CoherentDirection::new(0.0, 0.4).unwrap();
        let q = CoherentDirection::new(PI / 2.0, 0.4).unwrap();
        let closed = coherent_overlap_sq(s, p, q);
        let amp = (coherent_amplitudes(s, p).adjoint() * coherent_amplitudes(s, q))[(0, 0)];
        assert!((closed - 0.25).abs() < 1e-15);
        assert!((amp.norm_sqr() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn overlap_matches_amplitudes_on_random_pairs() {
        let mut rng = seeded(11);
        for &j in &[0.5, 1.0, 1.5, 2.0, 3.0] {
            let s = spin(j);
            for _ in 0..100 {
                let a = CoherentDirection::random(&mut rng);
                let b = CoherentDirection::random(&mut rng);
                let amp = (coherent_amplitudes(s, a).adjoint() * coherent_amplitudes(s, b))[(0, 0)];
                assert!((coherent_overlap_sq(s, a, b) - amp.norm_sqr()).abs() < 1e-12);
                let from_vec = overlap_sq_from_vectors(s.order(), &a.unit_vector(), &b.unit_vector());
                assert!((from_vec - amp.norm_sqr()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dicke_projectors() {
        assert_eq!(diag_of(&dicke_state(spin(1.0), 0.0).unwrap()), vec![0.0, 1.0, 0.0]);
        assert_eq!(diag_of(&dicke_state(spin(2.0), 2.0).unwrap()), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            diag_of(&dicke_state(spin(1.5), -0.5).unwrap()),
            vec![0.0, 0.0, 1.0, 0.0]
        );
        assert!(dicke_state(spin(1.0), 2.0).is_err());
        assert!(dicke_state(spin(1.0), 0.5).is_err());
    }

    #[test]
    fn dicke_isometry_small_cases() {
        let d = dicke_isometry(spin(0.5), DEFAULT_ORDER_CAP).unwrap();
        assert_eq!(d, CMatrix::identity(2, 2));
        let d = dicke_isometry(spin(1.0), DEFAULT_ORDER_CAP).unwrap();
        let h = 0.5f64.sqrt();
        // |01> is index 2 (qubit 1 excited), |10> index 1.
        assert!((d[(1, 1)].re - h).abs() < 1e-15 && (d[(2, 1)].re - h).abs() < 1e-15);
        assert_eq!(d[(0, 1)].re, 0.0);
        assert_eq!(d[(3, 1)].re, 0.0);
        assert!(dicke_isometry(spin(6.5), DEFAULT_ORDER_CAP).is_err());
        assert!(dicke_isometry(spin(6.5), 13).is_ok());
    }

    #[test]
    fn dicke_isometry_is_orthonormal_and_permutation_symmetric() {
        let s = spin(2.0);
        let d = dicke_isometry(s, DEFAULT_ORDER_CAP).unwrap();
        let gram = d.adjoint() * &d;
        assert!((gram - CMatrix::identity(5, 5)).max_abs() < 1e-14);
        // Swapping qubits 0 and 2 permutes computational basis rows.
        let swap = |b: usize| {
            let b0 = b & 1;
            let b2 = (b >> 2) & 1;
            (b & !0b101) | (b2) | (b0 << 2)
        };
        for b in 0..16 {
            for k in 0..5 {
                assert_eq!(d[(b, k)], d[(swap(b), k)]);
            }
        }
    }

    #[test]
    fn hs_distance_examples() {
        let s = spin(1.0);
        let up = dicke_state(s, 1.0).unwrap();
        let down = dicke_state(s, -1.0).unwrap();
        assert_eq!(hs_distance(&up, &up).unwrap(), 0.0);
        assert!((hs_distance(&up, &down).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        // (2/3)^2 + 2 (1/3)^2 = 2/3
        let d = hs_distance(&up, &maximally_mixed(s)).unwrap();
        assert!((d - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(hs_distance(&up, &maximally_mixed(spin(2.0))).is_err());
    }

    #[test]
    fn hs_distance_triangle_inequality() {
        let mut rng = seeded(5);
        let s = spin(1.5);
        for _ in 0..50 {
            let a = random_hs_state(s, &mut rng);
            let b = random_hs_state(s, &mut rng);
            let c = random_hs_state(s, &mut rng);
            let ab = hs_distance(&a, &b).unwrap();
            let bc = hs_distance(&b, &c).unwrap();
            let ac = hs_distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
            assert!((ab - hs_distance(&b, &a).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn random_states_are_valid_and_reproducible() {
        for &j in &[0.5, 1.0, 2.5, 6.0] {
            let s = spin(j);
            let mut rng = seeded(42);
            for _ in 0..20 {
                random_hs_state(s, &mut rng).validate().unwrap();
            }
            let a = random_hs_state(s, &mut seeded(9));
            let b = random_hs_state(s, &mut seeded(9));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn random_ensemble_mean_is_maximally_mixed() {
        let s = spin(1.0);
        let mut rng = seeded(2024);
        let mut acc = CMatrix::zeros(3, 3);
        let draws = 10_000;
        for _ in 0..draws {
            acc += random_hs_state(s, &mut rng).matrix();
        }
        acc /= Complex64::new(draws as f64, 0.0);
        let diff = acc - maximally_mixed(s).matrix();
        assert!(diff.iter().all(|z| z.norm() < 0.02), "max dev {}", diff.max_abs());
    }

    #[test]
    fn maximally_mixed_and_depolarize() {
        let s = spin(1.0);
        let mm = maximally_mixed(s);
        assert_eq!(diag_of(&mm), vec![1.0 / 3.0; 3]);
        for n in 1..=12 {
            let t = maximally_mixed(Spin::from_order(n).unwrap()).matrix().trace();
            assert!((t.re - 1.0).abs() < 1e-14);
        }
        let rho = coherent_state(s, CoherentDirection::new(0.9, 0.3).unwrap());
        assert_eq!(depolarize(&rho, 1.0).unwrap(), rho);
        assert!((depolarize(&rho, 0.0).unwrap().matrix() - mm.matrix()).max_abs() < 1e-16);
        let half = depolarize(&rho, 0.5).unwrap();
        half.validate().unwrap();
        let ev = half.eigenvalues();
        let want = [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(depolarize(&rho, 1.5).is_err());
        assert!(depolarize(&rho, -0.1).is_err());
    }

    #[test]
    fn real_vector_layout() {
        let s = spin(1.0);
        let v = to_real_vector(&maximally_mixed(s));
        assert_eq!(v.entries.len(), 18);
        let thirds = v.entries.iter().filter(|&&x| (x - 1.0 / 3.0).abs() < 1e-15).count();
        let zeros = v.entries.iter().filter(|&&x| x == 0.0).count();
        assert_eq!((thirds, zeros), (3, 15));

        let mut rng = seeded(1);
        for _ in 0..10 {
            let rho = random_hs_state(spin(2.0), &mut rng);
            let v = to_real_vector(&rho);
            let back = from_real_vector(&v.entries, rho.spin()).unwrap();
            assert_eq!(back, rho);
            let sq: f64 = v.entries.iter().map(|x| x * x).sum();
            assert!((sq - rho.purity()).abs() < 1e-14);
        }
        assert!(from_real_vector(&[0.0; 5], s).is_err());
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let s = spin(1.0);
        let mut m = maximally_mixed(s).into_matrix();
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        let err = SpinState::new(s, m.clone()).unwrap_err();
        assert!(err.to_string().contains("Hermitian"));
        m[(1, 0)] = Complex64::new(0.1, 0.0);
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        assert!(SpinState::new(s, m).unwrap_err().to_string().contains("trace"));
        let neg = CMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1.2, 0.0),
            Complex64::new(-0.2, 0.0),
            Complex64::new(0.0, 0.0),
        ]));
        assert!(SpinState::new(s, neg).unwrap_err().to_string().contains("semi-definite"));
    }

    #[test]
    fn json_roundtrip() {
        let rho = random_hs_state(spin(1.5), &mut seeded(3));
        let text = rho.to_json().unwrap();
        assert_eq!(SpinState::from_json(&text).unwrap(), rho);
        let bad = r#"{"j": 1, "matrix": [[[1,0],[0,0]],[[0,0],[0,0]]]}"#;
        assert!(SpinState::from_json(bad).is_err());
    }
}
