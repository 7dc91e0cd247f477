//! Real symmetric order-N tensors over indices 0..3, A = tr(rho S), where
//! S_{mu_1..mu_N} is the Pauli string sigma_{mu_1} x ... x sigma_{mu_N}
//! compressed onto the symmetric subspace.
//!
//! Entries are stored once per index multiset, keyed by the counts
//! (n0, n1, n2, n3) of each index value; multinomial weights are applied when
//! contracting.
//!
//! The y-axis Pauli factor is taken as `[[0, i], [-i, 0]]` so that the
//! coherent state with azimuth phi (amplitude phase `exp(-i phi)`) has Bloch
//! vector `(sin t cos phi, sin t sin phi, cos t)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, multinomial};
use crate::error::{Error, Result};
use crate::spin::{hermitize, CMatrix, Spin, SpinState, DEFAULT_ORDER_CAP};
#[cfg(debug_assertions)]
use crate::spin::MaxAbs;

pub type Counts = [u8; 4];

/// Imaginary part of tr(rho S) tolerated before the input is rejected.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-10;

/// All index multisets of the given order, ordered by (n0, n1, n2) ascending.
pub fn multisets(order: usize) -> Vec<Counts> {
    let mut out = Vec::with_capacity(num_multisets(order));
    for n0 in 0..=order {
        for n1 in 0..=order - n0 {
            for n2 in 0..=order - n0 - n1 {
                let n3 = order - n0 - n1 - n2;
                out.push([n0 as u8, n1 as u8, n2 as u8, n3 as u8]);
            }
        }
    }
    out
}

/// binom(N + 3, 3).
pub fn num_multisets(order: usize) -> usize {
    (order + 1) * (order + 2) * (order + 3) / 6
}

/// Position of `counts` in [`multisets`] of the same order.
pub fn multiset_rank(counts: &Counts) -> usize {
    let order: usize = counts.iter().map(|&c| c as usize).sum();
    let (n0, n1, n2) = (counts[0] as usize, counts[1] as usize, counts[2] as usize);
    let tri = |r: usize| (r + 1) * (r + 2) / 2;
    let mut rank: usize = (0..n0).map(|a| tri(order - a)).sum();
    let rest = order - n0;
    rank += (0..n1).map(|b| rest - b + 1).sum::<usize>();
    rank + n2
}

pub fn counts_of_tuple(indices: &[usize]) -> Result<Counts> {
    let mut c = [0u8; 4];
    for &i in indices {
        if i > 3 {
            return Err(Error::OutOfRange(format!("tensor index {i} not in 0..=3")));
        }
        c[i] += 1;
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    entries: Vec<f64>,
}

impl SymmetricTensor {
    pub fn from_fn(order: usize, mut f: impl FnMut(&Counts) -> f64) -> Self {
        let entries = multisets(order).iter().map(&mut f).collect();
        SymmetricTensor { order, entries }
    }

    pub fn from_entries(order: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != num_multisets(order) {
            return Err(Error::DimensionMismatch {
                expected: num_multisets(order),
                found: entries.len(),
            });
        }
        Ok(SymmetricTensor { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Values in [`multisets`] order.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, counts: &Counts) -> f64 {
        self.entries[multiset_rank(counts)]
    }

    pub fn set(&mut self, counts: &Counts, value: f64) {
        let r = multiset_rank(counts);
        self.entries[r] = value;
    }

    /// Entry for an explicit index tuple (mu_1, ..., mu_N).
    pub fn get_indices(&self, indices: &[usize]) -> Result<f64> {
        if indices.len() != self.order {
            return Err(Error::DimensionMismatch { expected: self.order, found: indices.len() });
        }
        Ok(self.get(&counts_of_tuple(indices)?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Counts, f64)> + '_ {
        multisets(self.order).into_iter().zip(self.entries.iter().copied())
    }

    /// A x^[N] = sum over multisets of multinomial * A * x^counts.
    pub fn contract_full(&self, x: &[f64; 4]) -> f64 {
        let pw = powers(x, self.order);
        self.iter()
            .map(|(c, a)| multinomial(&c) * a * monomial(&pw, &c))
            .sum()
    }

    /// (A x^[N-1])_nu, i.e. 1/N times the Euclidean gradient of A x^[N].
    pub fn contract_to_vector(&self, x: &[f64; 4]) -> [f64; 4] {
        let pw = powers(x, self.order);
        let n = self.order as f64;
        let mut out = [0.0; 4];
        for (c, a) in self.iter() {
            let w = multinomial(&c) * a / n;
            for (nu, o) in out.iter_mut().enumerate() {
                if c[nu] == 0 {
                    continue;
                }
                let mut m = c[nu] as f64 * pw[nu][c[nu] as usize - 1];
                for mu in (0..4).filter(|&mu| mu != nu) {
                    m *= pw[mu][c[mu] as usize];
                }
                *o += w * m;
            }
        }
        out
    }

    /// A'_{mu_1..mu_N} = R_{mu_1 nu_1} ... R_{mu_N nu_N} A_{nu_1..nu_N}.
    pub fn rotate(&self, rotation: &Rotation4) -> SymmetricTensor {
        let r = rotation.matrix();
        // A' x^[N] = A (R^T x)^[N]; expand the right side as a polynomial in x.
        let linear: [[f64; 4]; 4] =
            std::array::from_fn(|mu| std::array::from_fn(|nu| r[nu][mu]));
        let n = self.order;
        let ladders: Vec<Vec<[usize; 4]>> = (0..n)
            .map(|d| {
                multisets(d)
                    .iter()
                    .map(|c| {
                        std::array::from_fn(|nu| {
                            let mut up = *c;
                            up[nu] += 1;
                            multiset_rank(&up)
                        })
                    })
                    .collect()
            })
            .collect();
        let mut coeffs = vec![0.0; num_multisets(n)];
        for (c, a) in self.iter() {
            let w = multinomial(&c) * a;
            if w == 0.0 {
                continue;
            }
            let mut poly = vec![w];
            let mut degree = 0;
            for (mu, &times) in c.iter().enumerate() {
                for _ in 0..times {
                    let mut next = vec![0.0; num_multisets(degree + 1)];
                    for (i, &p) in poly.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        for nu in 0..4 {
                            next[ladders[degree][i][nu]] += p * linear[mu][nu];
                        }
                    }
                    poly = next;
                    degree += 1;
                }
            }
            for (acc, p) in coeffs.iter_mut().zip(poly) {
                *acc += p;
            }
        }
        let entries = multisets(n)
            .iter()
            .zip(coeffs)
            .map(|(c, p)| p / multinomial(c))
            .collect();
        SymmetricTensor { order: n, entries }
    }

    /// max over sub-multisets K of order N-2 of |sum_a A_{aaK} - A_{00K}|.
    pub fn contraction_identity_violation(&self) -> f64 {
        if self.order < 2 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for c in multisets(self.order - 2) {
            let with = |mu: usize| {
                let mut d = c;
                d[mu] += 2;
                self.get(&d)
            };
            let v = (with(1) + with(2) + with(3) - with(0)).abs();
            worst = worst.max(v);
        }
        worst
    }

    pub fn to_file(&self) -> TensorFile {
        TensorFile {
            order: self.order,
            entries: self
                .iter()
                .map(|(counts, value)| TensorEntry { counts, value })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TensorFile = serde_json::from_str(text)?;
        file.into_tensor()
    }
}

/// `{ "order": N, "entries": [ { "counts": [n0,n1,n2,n3], "value": x }, ... ] }`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorFile {
    pub order: usize,
    pub entries: Vec<TensorEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub counts: Counts,
    pub value: f64,
}

impl TensorFile {
    pub fn into_tensor(self) -> Result<SymmetricTensor> {
        let n = self.order;
        let mut entries = vec![None; num_multisets(n)];
        for e in &self.entries {
            let sum: usize = e.counts.iter().map(|&c| c as usize).sum();
            if sum != n {
                return Err(Error::InvalidTensor(format!(
                    "counts {:?} do not sum to order {n}",
                    e.counts
                )));
            }
            let slot = &mut entries[multiset_rank(&e.counts)];
            if slot.is_some() {
                return Err(Error::InvalidTensor(format!("duplicate counts {:?}", e.counts)));
            }
            *slot = Some(e.value);
        }
        let entries = entries
            .into_iter()
            .zip(multisets(n))
            .map(|(v, c)| v.ok_or_else(|| Error::InvalidTensor(format!("missing counts {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        SymmetricTensor::from_entries(n, entries)
    }
}

pub(crate) fn powers(x: &[f64; 4], order: usize) -> [Vec<f64>; 4] {
    std::array::from_fn(|mu| {
        let mut p = Vec::with_capacity(order + 1);
        let mut acc = 1.0;
        for _ in 0..=order {
            p.push(acc);
            acc *= x[mu];
        }
        p
    })
}

fn monomial(pw: &[Vec<f64>; 4], c: &Counts) -> f64 {
    pw[0][c[0] as usize] * pw[1][c[1] as usize] * pw[2][c[2] as usize] * pw[3][c[3] as usize]
}

/// A 4x4 block rotation diag(1, O) with O in O(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation4 {
    m: [[f64; 4]; 4],
}

impl Rotation4 {
    pub fn identity() -> Self {
        Self::from_block([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap()
    }

    /// Embeds an orthogonal 3x3 block; rejects blocks with |O^T O - I| > 1e-12.
    pub fn from_block(block: [[f64; 3]; 3]) -> Result<Self> {
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|k| block[k][a] * block[k][b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-12 {
                    return Err(Error::InvalidTensor(format!(
                        "rotation block is not orthogonal (entry ({a},{b}) of O^T O is {dot})"
                    )));
                }
            }
        }
        let mut m = [[0.0; 4]; 4];
        m[0][0] = 1.0;
        for a in 0..3 {
            for b in 0..3 {
                m[a + 1][b + 1] = block[a][b];
            }
        }
        Ok(Rotation4 { m })
    }

    /// Rotation by `angle` about `axis` (Rodrigues).
    pub fn axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [x, y, z] = axis.map(|v| v / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Rotation4::from_unit_quaternion_block([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    /// Uniformly random rotation (Haar measure via a normalized 4D Gaussian quaternion).
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let [w, x, y, z] = crate::rng::uniform_s3(rng);
        Rotation4::from_unit_quaternion_block([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    fn from_unit_quaternion_block(block: [[f64; 3]; 3]) -> Self {
        let mut m = [[0.0; 4]; 4];
        m[0][0] = 1.0;
        for a in 0..3 {
            for b in 0..3 {
                m[a + 1][b + 1] = block[a][b];
            }
        }
        Rotation4 { m }
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    pub fn apply(&self, x: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|a| (0..4).map(|b| self.m[a][b] * x[b]).sum())
    }

    pub fn apply3(&self, n: &[f64; 3]) -> [f64; 3] {
        let v = self.apply(&[0.0, n[0], n[1], n[2]]);
        [v[1], v[2], v[3]]
    }
}

/// Matrices S_c = D^dagger (sigma string) D in the |j,m> basis, one per multiset.
#[derive(Debug)]
pub struct SymmetricPauliBasis {
    order: usize,
    matrices: Vec<CMatrix>,
}

impl SymmetricPauliBasis {
    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, counts: &Counts) -> &CMatrix {
        &self.matrices[multiset_rank(counts)]
    }
}

/// Representative index tuple for a multiset: n0 zeros, then n1 ones, ...
fn representative(c: &Counts) -> Vec<u8> {
    let mut t = Vec::new();
    for (mu, &k) in c.iter().enumerate() {
        t.extend(std::iter::repeat_n(mu as u8, k as usize));
    }
    t
}

/// Compressed Pauli string for an explicit index tuple, computed matrix-free:
/// each Pauli string maps a computational basis state to a single basis state
/// times a phase in {1, i, -1, -i}.
pub fn symmetric_pauli_matrix(indices: &[u8]) -> Result<CMatrix> {
    let n = indices.len();
    if n == 0 || n > 30 {
        return Err(Error::OutOfRange(format!("Pauli string length {n}")));
    }
    let (mut flip, mut ymask, mut zmask) = (0u64, 0u64, 0u64);
    for (q, &mu) in indices.iter().enumerate() {
        match mu {
            0 => {}
            1 => flip |= 1 << q,
            2 => {
                flip |= 1 << q;
                ymask |= 1 << q;
            }
            3 => zmask |= 1 << q,
            _ => return Err(Error::OutOfRange(format!("Pauli index {mu}"))),
        }
    }
    const PHASES: [Complex64; 4] = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    let mut m = CMatrix::zeros(n + 1, n + 1);
    for b in 0u64..(1u64 << n) {
        let l = b.count_ones() as usize;
        let target = b ^ flip;
        let k = target.count_ones() as usize;
        // y': |0> -> -i|1>, |1> -> +i|0>; z: |1> -> -|1>.
        let y1 = (ymask & b).count_ones() as i64;
        let y0 = (ymask & !b).count_ones() as i64;
        let z1 = (zmask & b).count_ones() as i64;
        let power = (y1 - y0 + 2 * z1).rem_euclid(4) as usize;
        m[(k, l)] += PHASES[power];
    }
    for k in 0..=n {
        for l in 0..=n {
            let norm = (binomial(n, k) * binomial(n, l)).sqrt();
            m[(k, l)] /= Complex64::new(norm, 0.0);
        }
    }
    Ok(m)
}

fn basis_cache() -> &'static Mutex<HashMap<usize, Arc<SymmetricPauliBasis>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SymmetricPauliBasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached S-matrices for order N (built once per order).
pub fn symmetric_pauli_basis(order: usize, cap: usize) -> Result<Arc<SymmetricPauliBasis>> {
    if order > cap {
        return Err(Error::OrderAboveCap { order, cap });
    }
    if let Some(b) = basis_cache().lock().unwrap().get(&order) {
        return Ok(b.clone());
    }
    let matrices = multisets(order)
        .iter()
        .map(|c| symmetric_pauli_matrix(&representative(c)))
        .collect::<Result<Vec<_>>>()?;
    #[cfg(debug_assertions)]
    for (c, m) in multisets(order).iter().zip(&matrices) {
        let mut rev = representative(c);
        rev.reverse();
        let other = symmetric_pauli_matrix(&rev)?;
        debug_assert!((&other - m).max_abs() < 1e-12, "S depends on index order for {c:?}");
    }
    let basis = Arc::new(SymmetricPauliBasis { order, matrices });
    basis_cache().lock().unwrap().insert(order, basis.clone());
    Ok(basis)
}

pub fn tensor_from_state(state: &SpinState) -> Result<SymmetricTensor> {
    tensor_from_state_capped(state, DEFAULT_ORDER_CAP)
}

/// A_c = tr(rho S_c). Fails if any entry has an imaginary residue above
/// [`IMAGINARY_RESIDUE_TOL`].
pub fn tensor_from_state_capped(state: &SpinState, cap: usize) -> Result<SymmetricTensor> {
    let n = state.spin().order();
    let basis = symmetric_pauli_basis(n, cap)?;
    let rho = state.matrix();
    let d = n + 1;
    let mut entries = Vec::with_capacity(basis.matrices.len());
    for (c, s) in multisets(n).iter().zip(&basis.matrices) {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..d {
            for l in 0..d {
                acc += rho[(l, k)] * s[(k, l)];
            }
        }
        if acc.im.abs() > IMAGINARY_RESIDUE_TOL {
            return Err(Error::ImaginaryResidue { counts: *c, residue: acc.im });
        }
        entries.push(acc.re);
    }
    Ok(SymmetricTensor { order: n, entries })
}

/// rho = 2^-N sum over all index tuples of A S, i.e. the multinomially
/// weighted sum over multisets.
pub fn state_from_tensor(tensor: &SymmetricTensor, spin: Spin) -> Result<SpinState> {
    let n = spin.order();
    if tensor.order() != n {
        return Err(Error::DimensionMismatch { expected: n, found: tensor.order() });
    }
    let basis = symmetric_pauli_basis(n, DEFAULT_ORDER_CAP.max(n))?;
    let mut rho = CMatrix::zeros(n + 1, n + 1);
    let scale = 0.5f64.powi(n as i32);
    for ((c, a), s) in tensor.iter().zip(&basis.matrices) {
        let w = multinomial(&c) * a * scale;
        if w != 0.0 {
            rho += s * Complex64::new(w, 0.0);
        }
    }
    SpinState::new(spin, hermitize(&rho))
}

/// Tensor of the coherent state along unit vector `n`: A_c = n1^c1 n2^c2 n3^c3.
pub fn coherent_tensor(spin: Spin, n: [f64; 3]) -> SymmetricTensor {
    let x = [1.0, n[0], n[1], n[2]];
    let pw = powers(&x, spin.order());
    SymmetricTensor::from_fn(spin.order(), |c| monomial(&pw, c))
}
