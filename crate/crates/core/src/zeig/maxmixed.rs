//! Closed-form spectrum of the maximally mixed state. Its form A x^[N]
//! depends on x only through x0, as g(x0) below, so Z-eigenvalues are the
//! values of g at its stationary points and at x0 = +-1.

use crate::combinatorics::binomial;
use crate::spin::Spin;

const GRID: usize = 10_000;
const ROOT_TOL: f64 = 1e-12;

/// g(x0) = sum_{k <= floor(j)} C(N, 2k) / (2k + 1) * x0^(N - 2k) * (1 - x0^2)^k.
pub fn mm_polynomial(spin: Spin, x0: f64) -> f64 {
    let n = spin.order();
    let s = 1.0 - x0 * x0;
    (0..=n / 2)
        .map(|k| {
            binomial(n, 2 * k) / (2 * k + 1) as f64 * x0.powi((n - 2 * k) as i32) * s.powi(k as i32)
        })
        .sum()
}

fn derivative(spin: Spin, x: f64) -> f64 {
    let h = 1e-6;
    (mm_polynomial(spin, x + h) - mm_polynomial(spin, x - h)) / (2.0 * h)
}

/// Roots of `f` in ]a, b[ located by a sign scan over `grid` cells and
/// refined by bisection.
fn scan_roots(f: impl Fn(f64) -> f64, a: f64, b: f64, grid: usize) -> Vec<f64> {
    let xs: Vec<f64> = (1..grid).map(|i| a + (b - a) * i as f64 / grid as f64).collect();
    let mut roots = Vec::new();
    for w in xs.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo * fhi > 0.0 {
            continue;
        }
        if fhi == 0.0 {
            // picked up as `flo == 0` in the next window, unless it is the last point
            if hi == *xs.last().unwrap() {
                roots.push(hi);
            }
            continue;
        }
        let up = flo < 0.0;
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if (f(mid) < 0.0) == up {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots
}

/// Stationary points of g in the open interval ]0, 1[, as (x0, g(x0)).
pub fn mm_extrema(spin: Spin) -> Vec<(f64, f64)> {
    scan_roots(|x| derivative(spin, x), 0.0, 1.0, GRID)
        .into_iter()
        .map(|x| (x, mm_polynomial(spin, x)))
        .collect()
}

/// Distinct Z-eigenvalues of the maximally mixed tensor, ascending.
/// Integer j: {g(0), g(1)} plus interior values; half-integer j: g is odd,
/// so the border gives +-1 and each interior extremum comes with its mirror.
pub fn mm_eigenvalues(spin: Spin) -> Vec<f64> {
    let mut out = vec![mm_polynomial(spin, 1.0)];
    let interior = mm_extrema(spin).into_iter().map(|(_, g)| g);
    if spin.is_integer() {
        out.push(mm_polynomial(spin, 0.0));
        out.extend(interior);
    } else {
        out.push(mm_polynomial(spin, -1.0));
        for g in interior {
            out.extend([g, -g]);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    out
}

/// P(u) = -u^k + k u^(k-2) - k u^2 + 1, whose roots govern the turning
/// points of g's stationarity condition.
pub fn turning_point_polynomial(k: u32, u: f64) -> f64 {
    let kf = k as f64;
    -u.powi(k as i32) + kf * u.powi(k as i32 - 2) - kf * u * u + 1.0
}

/// Numbers of roots of P in ]-1, 0[ and ]0, 1[.
pub fn turning_point_root_counts(k: u32) -> (usize, usize) {
    let p = |u| turning_point_polynomial(k, u);
    (scan_roots(p, -1.0, 0.0, GRID).len(), scan_roots(p, 0.0, 1.0, GRID).len())
}
