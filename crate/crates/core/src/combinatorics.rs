/// Binomial coefficient as f64. Exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Multinomial coefficient N! / (n0! n1! n2! n3!) for index counts summing to N.
pub fn multinomial(counts: &[u8; 4]) -> f64 {
    let mut remaining: usize = counts.iter().map(|&c| c as usize).sum();
    let mut acc = 1.0;
    for &c in counts {
        acc *= binomial(remaining, c as usize);
        remaining -= c as usize;
    }
    acc
}
