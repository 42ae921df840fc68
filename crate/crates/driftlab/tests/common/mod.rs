//! Independent oracles for the integration suites.  Everything here is
//! computed from first principles (Pascal's triangle, integer arithmetic,
//! backward substitution) without touching the library's kernel or
//! enumeration code, so agreement is a genuine two-route check.

#![allow(dead_code)]

/// Binomial coefficient via Pascal's triangle; exact for every input used
/// by the suites (n <= 128 stays far below u128 overflow at these sizes).
pub fn binom_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let mut row = vec![0u128; k as usize + 1];
    row[0] = 1;
    for _ in 0..n {
        for j in (1..row.len()).rev() {
            row[j] += row[j - 1];
        }
    }
    row[k as usize]
}

/// Pr[Bin(n, num/den) = j] from exact integer powers.
pub fn binomial_pmf_exact(n: u32, j: u32, num: u32, den: u32) -> f64 {
    let c = binom_u128(n as u64, j as u64);
    let up = (num as u128).pow(j);
    let down = ((den - num) as u128).pow(n - j);
    let total = (den as u128).pow(n);
    (c * up * down) as f64 / total as f64
}

/// Σ_j j·C(n,j)·num^j·(den−num)^(n−j), which must equal num·den^(n−1)·n/den
/// scaled out, i.e. the binomial mean identity in exact integers.
pub fn binomial_mean_identity_holds(n: u32, num: u32, den: u32) -> bool {
    let lhs: u128 = (0..=n)
        .map(|j| {
            j as u128
                * binom_u128(n as u64, j as u64)
                * (num as u128).pow(j)
                * ((den - num) as u128).pow(n - j)
        })
        .sum();
    let rhs = (num as u128) * (n as u128) * (den as u128).pow(n - 1);
    lhs == rhs
}

/// One neutral two-offspring step from `num/k`: the pair disagrees with
/// probability 2·num·(k−num)/k², splitting evenly between the two winners.
/// Masses are exact integers over `k²`.
pub struct TwoSampleRow {
    pub up: u128,
    pub down: u128,
    pub stay: u128,
    pub den: u128,
}

pub fn two_sample_row_exact(num: u32, k: u32) -> TwoSampleRow {
    let cross = num as u128 * (k - num) as u128;
    let den = (k as u128).pow(2);
    TwoSampleRow {
        up: cross,
        down: cross,
        stay: den - 2 * cross,
        den,
    }
}

impl TwoSampleRow {
    /// num·k² == up·(num+1) + down·(num−1) + stay·num, checked exactly.
    pub fn mean_preserving(&self, num: u32) -> bool {
        let num = num as u128;
        self.up * (num + 1) + self.down * (num - 1) + self.stay * num == num * self.den
    }
}

/// One-step law of the incremental update p' = (1−rho)·p + rho·X/mu with
/// X ~ Bin(mu, p), as (value, mass) pairs sorted by value.
pub fn incremental_onestep_oracle(p: f64, mu: u32, rho: f64) -> Vec<(f64, f64)> {
    (0..=mu)
        .map(|x| {
            let c = binom_u128(mu as u64, x as u64) as f64;
            let mass = c * p.powi(x as i32) * (1.0 - p).powi((mu - x) as i32);
            ((1.0 - rho) * p + rho * x as f64 / mu as f64, mass)
        })
        .filter(|&(_, mass)| mass > 0.0)
        .collect()
}

/// Expected steps to leave a birth-death middle band, solved by backward
/// substitution on the tridiagonal system (I − Q)·E = 1.  `rows[i]` gives
/// (down, stay, up) masses for inside state i; leaving the band in either
/// direction ends the walk.
pub fn band_exit_expectation(rows: &[(f64, f64, f64)], start: usize) -> f64 {
    let n = rows.len();
    // Forward elimination on the tridiagonal system.
    let mut diag = vec![0.0; n];
    let mut rhs = vec![1.0; n];
    for i in 0..n {
        let (down, stay, _up) = rows[i];
        diag[i] = 1.0 - stay;
        if i > 0 {
            let (_, _, up_prev) = rows[i - 1];
            let factor = down / diag[i - 1];
            diag[i] -= factor * up_prev;
            rhs[i] += factor * rhs[i - 1];
        }
    }
    let mut e = vec![0.0; n];
    for i in (0..n).rev() {
        let (_, _, up) = rows[i];
        let carry = if i + 1 < n { up * e[i + 1] } else { 0.0 };
        e[i] = (rhs[i] + carry) / diag[i];
    }
    e[start]
}

/// Empirical CDF comparison: sup_t |F̂(t) − F(t)| over the support of `cdf`,
/// with `samples` censored at the horizon treated as "not yet hit".
pub fn sup_cdf_gap(samples: &[u64], cdf: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mut gap = 0.0f64;
    let mut idx = 0usize;
    for (t, &f) in cdf.iter().enumerate() {
        while idx < sorted.len() && sorted[idx] <= t as u64 {
            idx += 1;
        }
        gap = gap.max((idx as f64 / n - f).abs());
    }
    gap
}

/// Mean and standard error without going through the library helpers.
pub fn naive_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
