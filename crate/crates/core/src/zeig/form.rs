use crate::combinatorics::multinomial;
use crate::tensor::{powers, Counts, SymmetricTensor};

// Shared by `value` and `value_grad` so both round identically.
fn term(w: f64, pw: &[Vec<f64>; 4], c: &Counts) -> f64 {
    w * pw[0][c[0] as usize] * pw[1][c[1] as usize] * pw[2][c[2] as usize] * pw[3][c[3] as usize]
}

/// f(x) = A x^[N] as an explicit polynomial in four variables, with the
/// multinomial weights folded into the coefficients.
#[derive(Clone, Debug)]
pub struct PolynomialForm {
    order: usize,
    terms: Vec<(Counts, f64)>,
}

impl PolynomialForm {
    pub fn new(tensor: &SymmetricTensor) -> Self {
        let terms = tensor
            .iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|(c, a)| (c, multinomial(&c) * a))
            .collect();
        PolynomialForm { order: tensor.order(), terms }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self, x: &[f64; 4]) -> f64 {
        let pw = powers(x, self.order);
        self.terms
            .iter()
            .map(|(c, w)| term(*w, &pw, c))
            .sum()
    }

    pub fn value_grad(&self, x: &[f64; 4]) -> (f64, [f64; 4]) {
        let pw = powers(x, self.order);
        let mut f = 0.0;
        let mut g = [0.0; 4];
        for (c, w) in &self.terms {
            let p: [f64; 4] = std::array::from_fn(|m| pw[m][c[m] as usize]);
            f += term(*w, &pw, c);
            for nu in 0..4 {
                if c[nu] == 0 {
                    continue;
                }
                let mut t = w * c[nu] as f64 * pw[nu][c[nu] as usize - 1];
                for mu in (0..4).filter(|&mu| mu != nu) {
                    t *= p[mu];
                }
                g[nu] += t;
            }
        }
        (f, g)
    }

    /// Value, Euclidean gradient and Euclidean Hessian.
    pub fn value_grad_hess(&self, x: &[f64; 4]) -> (f64, [f64; 4], [[f64; 4]; 4]) {
        let pw = powers(x, self.order);
        let (f, g) = self.value_grad(x);
        let mut h = [[0.0; 4]; 4];
        // d^k/dx^k of x^c, k = 0..2, read from the power table.
        let deriv = |m: usize, c: u8, k: usize| -> f64 {
            let c = c as usize;
            if c < k {
                return 0.0;
            }
            let fall = match k {
                0 => 1.0,
                1 => c as f64,
                _ => (c * (c - 1)) as f64,
            };
            fall * pw[m][c - k]
        };
        for (c, w) in &self.terms {
            for a in 0..4 {
                for b in a..4 {
                    let mut t = *w;
                    for m in 0..4 {
                        let k = (m == a) as usize + (m == b) as usize;
                        t *= deriv(m, c[m], k);
                        if t == 0.0 {
                            break;
                        }
                    }
                    h[a][b] += t;
                }
            }
        }
        for a in 0..4 {
            for b in 0..a {
                h[a][b] = h[b][a];
            }
        }
        (f, g, h)
    }
}
