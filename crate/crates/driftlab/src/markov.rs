//! Exact finite-state chains for the grid-valued neutral processes.
//!
//! The reduced cGA and UMDA processes live on the grids `i/K` and `i/mu`,
//! so their hitting times are solvable exactly: mean times through the
//! fundamental-matrix system `(I - Q) h = 1`, finite-horizon distributions
//! by iterating the stopped chain.  These solves are the oracles the Monte
//! Carlo campaigns are judged against.
//!
//! cGA rows are tridiagonal and handled by the Thomas algorithm; UMDA rows
//! are dense binomial pmfs and go through a partial-pivot LU capped at
//! 4096 unknowns.  Both paths finish with iterative refinement and insist
//! on a final residual of at most `1e-8`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::stats::binomial_pmf;

const ROW_SUM_TOLERANCE: f64 = 1e-12;
const RESIDUAL_TOLERANCE: f64 = 1e-8;
const MAX_DENSE_STATES: usize = 4096;

/// Row-stochastic transition matrix on the frequency grid `0/den .. den/den`,
/// stored as sparse rows.  Immutable after construction; safe to share.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    den: u32,
    rows: Vec<Vec<(u32, f64)>>,
}

impl TransitionKernel {
    /// Builds a kernel from explicit rows (`rows[i]` lists `(target, mass)`
    /// pairs).  Rows are sorted, zero masses dropped, and each row must sum
    /// to one within `1e-12`.
    pub fn from_rows(den: u32, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        if rows.len() != den as usize + 1 {
            return Err(Error::InvalidSpec(format!(
                "kernel on a 1/{den} grid needs {} rows, got {}",
                den + 1,
                rows.len()
            )));
        }
        let mut clean = Vec::with_capacity(rows.len());
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for (j, p) in row {
                if j > den {
                    return Err(Error::InvalidSpec(format!(
                        "row {i} targets state {j} beyond the grid end {den}"
                    )));
                }
                if p < 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "row {i} assigns negative mass {p} to state {j}"
                    )));
                }
                if p == 0.0 {
                    continue;
                }
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += p,
                    _ => merged.push((j, p)),
                }
            }
            let sum: f64 = merged.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidSpec(format!(
                    "row {i} sums to {sum}, off by more than {ROW_SUM_TOLERANCE}"
                )));
            }
            clean.push(merged);
        }
        Ok(TransitionKernel { den, rows: clean })
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn num_states(&self) -> usize {
        self.den as usize + 1
    }

    pub fn row(&self, i: u32) -> &[(u32, f64)] {
        &self.rows[i as usize]
    }

    pub fn probability(&self, i: u32, j: u32) -> f64 {
        self.rows[i as usize]
            .iter()
            .find(|&&(t, _)| t == j)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Frequency value of a state.
    pub fn frequency(&self, i: u32) -> f64 {
        i as f64 / self.den as f64
    }

    /// Maps a frequency to its grid state; off-grid values are rejected
    /// with a diagnostic (e.g. `1/2` on an odd-`mu` UMDA grid).
    pub fn state_of(&self, p: f64) -> Result<u32> {
        let scaled = p * self.den as f64;
        let num = scaled.round();
        if (scaled - num).abs() > 1e-9 || !(0.0..=self.den as f64).contains(&num) {
            return Err(Error::Domain(format!(
                "frequency {p} does not lie on the 1/{} grid; \
                 pick a representable start (even denominators put 1/2 on the grid)",
                self.den
            )));
        }
        Ok(num as u32)
    }

    pub fn is_absorbing(&self, i: u32) -> bool {
        let row = &self.rows[i as usize];
        row.len() == 1 && row[0].0 == i
    }

    /// `sum_j P(i, j) * (j / den)`; equals `i / den` for balanced kernels.
    pub fn row_mean(&self, i: u32) -> f64 {
        self.rows[i as usize]
            .iter()
            .map(|&(j, p)| p * self.frequency(j))
            .sum()
    }

    /// Conditional variance of the next frequency given state `i`.
    pub fn conditional_variance(&self, i: u32) -> f64 {
        let mean = self.frequency(i);
        self.rows[i as usize]
            .iter()
            .map(|&(j, p)| p * (self.frequency(j) - mean).powi(2))
            .sum()
    }

    /// Conditional third central moment of the next frequency.
    pub fn conditional_third(&self, i: u32) -> f64 {
        let mean = self.frequency(i);
        self.rows[i as usize]
            .iter()
            .map(|&(j, p)| p * (self.frequency(j) - mean).powi(3))
            .sum()
    }

    /// States whose frequency lies outside the open interval `(lo, hi)`.
    pub fn states_outside(&self, lo: f64, hi: f64) -> Vec<u32> {
        (0..=self.den)
            .filter(|&i| {
                let v = self.frequency(i);
                v <= lo || v >= hi
            })
            .collect()
    }

    /// Writes `(state, target, probability)` triples as CSV for external
    /// verification; states are grid numerators.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "state,target,probability")?;
        for i in 0..=self.den {
            for &(j, p) in self.row(i) {
                writeln!(w, "{i},{j},{p:?}")?;
            }
        }
        Ok(())
    }
}

/// Reduced cGA chain on the `1/K` grid: from interior state `i` the chain
/// moves one step up or down, each with probability `i (K - i) / K^2`.
pub fn build_cga_kernel(k: u32) -> Result<TransitionKernel> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::InvalidSpec(format!(
            "cGA needs even K >= 2 so that 1/2 lies on the grid, got K={k}"
        )));
    }
    let kk = k as u64 * k as u64;
    let rows = (0..=k)
        .map(|i| {
            let m = i as u64 * (k - i) as u64;
            if m == 0 {
                vec![(i, 1.0)]
            } else {
                let move_p = m as f64 / kk as f64;
                let stay = (kk - 2 * m) as f64 / kk as f64;
                vec![(i - 1, move_p), (i, stay), (i + 1, move_p)]
            }
        })
        .collect();
    TransitionKernel::from_rows(k, rows)
}

/// Reduced UMDA chain on the `1/mu` grid: row `i` is the Binomial(mu, i/mu)
/// pmf.  Rows are renormalized after a `1e-12` sum check so the
/// row-stochastic invariant holds exactly in later arithmetic.
pub fn build_umda_kernel(mu: u32) -> Result<TransitionKernel> {
    if mu < 1 {
        return Err(Error::InvalidSpec("mu must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(mu as usize + 1);
    for i in 0..=mu {
        let p = i as f64 / mu as f64;
        let mut row: Vec<(u32, f64)> = (0..=mu)
            .map(|j| (j, binomial_pmf(mu as u64, j as u64, p)))
            .filter(|&(_, q)| q > 0.0)
            .collect();
        let sum: f64 = row.iter().map(|&(_, q)| q).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Domain(format!(
                "binomial row {i}/{mu} sums to {sum}; pmf evaluation lost precision"
            )));
        }
        for entry in &mut row {
            entry.1 /= sum;
        }
        rows.push(row);
    }
    TransitionKernel::from_rows(mu, rows)
}

/// Expected number of steps from `start` until the chain enters any
/// absorbing state.  Absorbing starts take 0 steps.
pub fn expected_absorption_time(kernel: &TransitionKernel, start: u32) -> Result<f64> {
    if start > kernel.den {
        return Err(Error::Domain(format!(
            "start state {start} beyond grid end {}",
            kernel.den
        )));
    }
    if kernel.is_absorbing(start) {
        return Ok(0.0);
    }
    let transient: Vec<u32> = (0..=kernel.den)
        .filter(|&i| !kernel.is_absorbing(i))
        .collect();
    let h = solve_mean_hitting(kernel, &transient)?;
    let idx = transient.binary_search(&start).expect("start is transient");
    Ok(h[idx])
}

/// Expected number of steps from `start` until the frequency leaves the
/// open interval `(lo, hi)`; reaching an endpoint counts as having left.
pub fn exit_time_from_interval(
    kernel: &TransitionKernel,
    lo: f64,
    hi: f64,
    start: u32,
) -> Result<f64> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::Domain(format!(
            "need 0 <= lo < hi <= 1, got ({lo}, {hi})"
        )));
    }
    if start > kernel.den {
        return Err(Error::Domain(format!(
            "start state {start} beyond grid end {}",
            kernel.den
        )));
    }
    let v = kernel.frequency(start);
    if !(lo < v && v < hi) {
        return Err(Error::Domain(format!(
            "start frequency {v} must lie strictly inside ({lo}, {hi})"
        )));
    }
    let transient: Vec<u32> = (0..=kernel.den)
        .filter(|&i| {
            let f = kernel.frequency(i);
            lo < f && f < hi
        })
        .collect();
    let h = solve_mean_hitting(kernel, &transient)?;
    let idx = transient.binary_search(&start).expect("start is transient");
    Ok(h[idx])
}

/// CDF of the first time the chain visits any state in `targets`, for
/// `t = 0..=horizon` (index `t` holds `Pr[T <= t]`), computed by pushing
/// the start mass through the chain stopped on the target set.
pub fn hitting_time_distribution(
    kernel: &TransitionKernel,
    start: u32,
    targets: &[u32],
    horizon: u64,
) -> Result<Vec<f64>> {
    if start > kernel.den {
        return Err(Error::Domain(format!(
            "start state {start} beyond grid end {}",
            kernel.den
        )));
    }
    let mut is_target = vec![false; kernel.num_states()];
    for &t in targets {
        if t > kernel.den {
            return Err(Error::Domain(format!(
                "target state {t} beyond grid end {}",
                kernel.den
            )));
        }
        is_target[t as usize] = true;
    }
    let steps = horizon as usize;
    if is_target[start as usize] {
        return Ok(vec![1.0; steps + 1]);
    }
    let mut cdf = Vec::with_capacity(steps + 1);
    cdf.push(0.0);
    let mut mass = vec![0.0f64; kernel.num_states()];
    mass[start as usize] = 1.0;
    let mut hit = 0.0f64;
    for _ in 1..=steps {
        let mut next = vec![0.0f64; kernel.num_states()];
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for &(j, p) in kernel.row(i as u32) {
                if is_target[j as usize] {
                    hit += m * p;
                } else {
                    next[j as usize] += m * p;
                }
            }
        }
        mass = next;
        cdf.push(hit.min(1.0));
    }
    Ok(cdf)
}

/// Solves `(I - Q) h = 1` on the given transient states with iterative
/// refinement, insisting on a final residual of at most `1e-8`.
fn solve_mean_hitting(kernel: &TransitionKernel, transient: &[u32]) -> Result<Vec<f64>> {
    let n = transient.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut index = vec![usize::MAX; kernel.num_states()];
    for (a, &s) in transient.iter().enumerate() {
        index[s as usize] = a;
    }

    let contiguous = transient.windows(2).all(|w| w[1] == w[0] + 1);
    let banded = transient.iter().all(|&s| {
        kernel
            .row(s)
            .iter()
            .all(|&(j, _)| index[j as usize] == usize::MAX || j.abs_diff(s) <= 1)
    });

    let solver: Box<dyn Fn(&[f64]) -> Result<Vec<f64>>> = if contiguous && banded {
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for (a, &s) in transient.iter().enumerate() {
            diag[a] = 1.0;
            for &(j, p) in kernel.row(s) {
                match index[j as usize] {
                    usize::MAX => {}
                    b if b == a => diag[a] -= p,
                    b if b + 1 == a => sub[a] = -p,
                    b if b == a + 1 => sup[a] = -p,
                    _ => unreachable!("banded check admitted a far coupling"),
                }
            }
        }
        Box::new(move |rhs: &[f64]| thomas_solve(&sub, &diag, &sup, rhs))
    } else {
        if n > MAX_DENSE_STATES {
            return Err(Error::InfeasibleSize(format!(
                "dense hitting-time solve needs {n} unknowns, cap is {MAX_DENSE_STATES}"
            )));
        }
        let mut a = vec![0.0f64; n * n];
        for (row, &s) in transient.iter().enumerate() {
            a[row * n + row] = 1.0;
            for &(j, p) in kernel.row(s) {
                let col = index[j as usize];
                if col != usize::MAX {
                    a[row * n + col] -= p;
                }
            }
        }
        let lu = LuFactors::factor(a, n)?;
        Box::new(move |rhs: &[f64]| Ok(lu.solve(rhs)))
    };

    let ones = vec![1.0f64; n];
    let mut h = solver(&ones)?;
    for _ in 0..8 {
        let r = hitting_residual(kernel, transient, &index, &h);
        if inf_norm(&r) <= 1e-12 {
            break;
        }
        let dh = solver(&r)?;
        for (hi, di) in h.iter_mut().zip(&dh) {
            *hi += di;
        }
    }
    let residual = inf_norm(&hitting_residual(kernel, transient, &index, &h));
    if !residual.is_finite() || residual > RESIDUAL_TOLERANCE {
        return Err(Error::SingularSystem(format!(
            "hitting-time system did not converge (residual {residual}); \
             the chain cannot leave the transient set from some state"
        )));
    }
    Ok(h)
}

/// `1 - (I - Q) h`, evaluated from the sparse kernel rows.
fn hitting_residual(
    kernel: &TransitionKernel,
    transient: &[u32],
    index: &[usize],
    h: &[f64],
) -> Vec<f64> {
    transient
        .iter()
        .enumerate()
        .map(|(a, &s)| {
            let mut r = 1.0 - h[a];
            for &(j, p) in kernel.row(s) {
                let b = index[j as usize];
                if b != usize::MAX {
                    r += p * h[b];
                }
            }
            r
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Thomas algorithm for a tridiagonal system; the hitting systems are
/// diagonally dominant, so no pivoting is needed.
fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0f64; n];
    let mut d = vec![0.0f64; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::SingularSystem(
            "tridiagonal solve hit a zero pivot; no escape from the transient set".into(),
        ));
    }
    c[0] = sup[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(Error::SingularSystem(
                "tridiagonal solve hit a zero pivot; no escape from the transient set".into(),
            ));
        }
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}

/// Dense LU with partial pivoting, row-major.
struct LuFactors {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl LuFactors {
    fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        let mut piv = Vec::with_capacity(n);
        for col in 0..n {
            let (best, best_abs) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("nonempty column");
            if best_abs < 1e-300 {
                return Err(Error::SingularSystem(
                    "dense solve hit a zero pivot; no escape from the transient set".into(),
                ));
            }
            if best != col {
                for j in 0..n {
                    a.swap(col * n + j, best * n + j);
                }
            }
            piv.push(best);
            let pivot = a[col * n + col];
            for r in col + 1..n {
                let factor = a[r * n + col] / pivot;
                a[r * n + col] = factor;
                if factor != 0.0 {
                    for j in col + 1..n {
                        a[r * n + j] -= factor * a[col * n + j];
                    }
                }
            }
        }
        Ok(LuFactors { n, a, piv })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for (col, &p) in self.piv.iter().enumerate() {
            x.swap(col, p);
            let xc = x[col];
            if xc != 0.0 {
                for r in col + 1..n {
                    x[r] -= self.a[r * n + col] * xc;
                }
            }
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for j in r + 1..n {
                s -= self.a[r * n + j] * x[j];
            }
            x[r] = s / self.a[r * n + r];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cga_rows_match_hand_values() {
        let k2 = build_cga_kernel(2).unwrap();
        assert_eq!(k2.row(1), &[(0, 0.25), (1, 0.5), (2, 0.25)]);
        assert!(k2.is_absorbing(0) && k2.is_absorbing(2));

        let k4 = build_cga_kernel(4).unwrap();
        assert_eq!(k4.row(1), &[(0, 3.0 / 16.0), (1, 0.625), (2, 3.0 / 16.0)]);
        assert!(build_cga_kernel(5).is_err());
        assert!(build_cga_kernel(0).is_err());
    }

    #[test]
    fn cga_rows_are_exact_rationals() {
        // Numerators over K^2: up = down = i(K-i), stay = K^2 - 2i(K-i).
        // Row sum and first moment are integer identities, checked exactly.
        for &k in &[2u32, 4, 6, 10, 16, 64, 128] {
            let kk = k as u128 * k as u128;
            for i in 0..=k as u128 {
                let m = i * (k as u128 - i);
                assert_eq!(m + m + (kk - 2 * m), kk);
                let mean_num = if m == 0 {
                    i * kk
                } else {
                    (i - 1) * m + (i + 1) * m + i * (kk - 2 * m)
                };
                assert_eq!(mean_num, i * kk);
            }
        }
    }

    #[test]
    fn umda_rows_match_binomial() {
        let u2 = build_umda_kernel(2).unwrap();
        assert_eq!(u2.row(1), &[(0, 0.25), (1, 0.5), (2, 0.25)]);
        assert!(u2.is_absorbing(0) && u2.is_absorbing(2));

        // mu = 1 has no interior state at all.
        let u1 = build_umda_kernel(1).unwrap();
        assert!(u1.is_absorbing(0) && u1.is_absorbing(1));

        // Large mu exercises the log-space pmf path; rows must still pass
        // the 1e-12 sum budget inside the constructor.
        let large = build_umda_kernel(150).unwrap();
        for i in 0..=150 {
            let sum: f64 = large.row(i).iter().map(|&(_, p)| p).sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn kernels_are_balanced_and_match_moment_formulas() {
        for &k in &[2u32, 8, 10, 64] {
            let kernel = build_cga_kernel(k).unwrap();
            for i in 0..=k {
                let p = kernel.frequency(i);
                assert!((kernel.row_mean(i) - p).abs() <= 1e-12);
                let want = crate::moments::cga_conditional_moments(i, k).unwrap();
                assert!((kernel.conditional_variance(i) - want.variance).abs() <= 1e-12);
                assert!(kernel.conditional_third(i).abs() <= 1e-18);
            }
        }
        for &mu in &[2u32, 8, 12] {
            let kernel = build_umda_kernel(mu).unwrap();
            for i in 0..=mu {
                let p = kernel.frequency(i);
                assert!((kernel.row_mean(i) - p).abs() <= 1e-12);
                let want = crate::moments::pbil_conditional_moments(p, mu, 1.0).unwrap();
                assert!((kernel.conditional_variance(i) - want.variance).abs() <= 1e-12);
                assert!((kernel.conditional_third(i) - want.third_central).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn umda_row_means_are_exact_in_integer_arithmetic() {
        // sum_y C(mu,y) i^y (mu-i)^(mu-y) y = i mu^mu, the binomial mean
        // identity with integer weights; fits u128 for mu <= 16.
        for &mu in &[2u64, 4, 8, 12, 16] {
            for i in 0..=mu {
                let mut lhs: u128 = 0;
                for y in 0..=mu {
                    let w = crate::stats::binomial_coefficient_u128(mu, y)
                        * (i as u128).pow(y as u32)
                        * ((mu - i) as u128).pow((mu - y) as u32);
                    lhs += w * y as u128;
                }
                assert_eq!(lhs, i as u128 * (mu as u128).pow(mu as u32));
            }
        }
    }

    #[test]
    fn state_lookup_enforces_grid() {
        let k4 = build_cga_kernel(4).unwrap();
        assert_eq!(k4.state_of(0.5).unwrap(), 2);
        assert_eq!(k4.state_of(0.0).unwrap(), 0);
        let u5 = build_umda_kernel(5).unwrap();
        let err = u5.state_of(0.5).unwrap_err();
        assert!(err.to_string().contains("grid"));
    }

    #[test]
    fn absorption_time_matches_hand_values() {
        // K=2: single interior state, leaves with probability 1/2 per step.
        let k2 = build_cga_kernel(2).unwrap();
        assert_eq!(expected_absorption_time(&k2, 1).unwrap(), 2.0);
        assert_eq!(expected_absorption_time(&k2, 0).unwrap(), 0.0);
        assert_eq!(expected_absorption_time(&k2, 2).unwrap(), 0.0);

        // UMDA mu=2 has the same three-state structure.
        let u2 = build_umda_kernel(2).unwrap();
        assert_eq!(expected_absorption_time(&u2, 1).unwrap(), 2.0);
    }

    #[test]
    fn umda_absorption_uses_the_dense_path() {
        // mu = 4 rows couple states two apart, so the solve is dense; the
        // answer must satisfy the hitting recurrence h = 1 + Q h tightly.
        let u4 = build_umda_kernel(4).unwrap();
        let h: Vec<f64> = (1..4)
            .map(|i| expected_absorption_time(&u4, i).unwrap())
            .collect();
        for i in 1..4u32 {
            let mut want = 1.0;
            for &(j, p) in u4.row(i) {
                if j >= 1 && j <= 3 {
                    want += p * h[j as usize - 1];
                }
            }
            assert!((h[i as usize - 1] - want).abs() <= 1e-10);
        }
        assert!(h[1] > h[0]);
        assert!((h[0] - h[2]).abs() <= 1e-10, "symmetric starts must agree");
    }

    #[test]
    fn exit_time_single_state_solves() {
        // K=4, interval (1/4, 3/4): only 1/2 is transient and the chain
        // leaves it with probability 2 * (1/2)(1/2) = 1/2, so E = 2.
        let k4 = build_cga_kernel(4).unwrap();
        assert_eq!(exit_time_from_interval(&k4, 0.25, 0.75, 2).unwrap(), 2.0);

        // K=4, interval (0, 1/2): only 1/4 is transient, escape probability
        // 2 * (1/4)(3/4) = 3/8, so E = 8/3.
        let t = exit_time_from_interval(&k4, 0.0, 0.5, 1).unwrap();
        assert!((t - 8.0 / 3.0).abs() < 1e-12);

        // Interval (0,1) is absorption under another name.
        let k8 = build_cga_kernel(8).unwrap();
        for i in 1..8 {
            let a = expected_absorption_time(&k8, i).unwrap();
            let b = exit_time_from_interval(&k8, 0.0, 1.0, i).unwrap();
            assert!((a - b).abs() <= 1e-10);
        }

        assert!(exit_time_from_interval(&k4, 0.25, 0.75, 1).is_err());
        assert!(exit_time_from_interval(&k4, 0.75, 0.25, 2).is_err());
    }

    #[test]
    fn exit_time_scale_is_flat_in_k_squared() {
        let ratios: Vec<f64> = [8u32, 16, 32, 64]
            .iter()
            .map(|&k| {
                let kernel = build_cga_kernel(k).unwrap();
                let t = exit_time_from_interval(&kernel, 0.25, 0.75, k / 2).unwrap();
                t / (k as f64 * k as f64)
            })
            .collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0f64, f64::max);
        assert!(
            hi / lo <= 1.2,
            "exit-time/K^2 band [{lo}, {hi}] wider than 20%"
        );
    }

    #[test]
    fn hitting_cdf_is_geometric_for_k2() {
        let k2 = build_cga_kernel(2).unwrap();
        let cdf = hitting_time_distribution(&k2, 1, &[0, 2], 30).unwrap();
        assert_eq!(cdf[0], 0.0);
        for t in 1..=30usize {
            let want = 1.0 - 0.5f64.powi(t as i32);
            assert!((cdf[t] - want).abs() <= 1e-15, "t={t}");
        }
        // Starting on a target hits at time zero.
        let at_target = hitting_time_distribution(&k2, 0, &[0, 2], 3).unwrap();
        assert_eq!(at_target, vec![1.0; 4]);
    }

    #[test]
    fn hitting_cdf_is_monotone_and_bounded() {
        let k16 = build_cga_kernel(16).unwrap();
        let targets = k16.states_outside(0.25, 0.75);
        assert_eq!(targets, vec![0, 1, 2, 3, 4, 12, 13, 14, 15, 16]);
        let cdf = hitting_time_distribution(&k16, 8, &targets, 200).unwrap();
        for w in cdf.windows(2) {
            assert!(w[0] <= w[1] + 1e-15);
        }
        assert!(cdf.iter().all(|&p| (0.0..=1.0).contains(&p)));
        // The exponential tail bound 2 exp(-K^2 / (32 T)) holds pointwise.
        for t in 1..=200usize {
            let bound = 2.0 * (-256.0 / (32.0 * t as f64)).exp();
            assert!(
                cdf[t] <= bound + 1e-15,
                "t={t}: exact {} above bound {bound}",
                cdf[t]
            );
        }
    }

    #[test]
    fn singular_transient_set_is_diagnosed() {
        // Two states feeding each other forever; absorption is unreachable.
        let swap = TransitionKernel::from_rows(
            2,
            vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(2, 1.0)]],
        )
        .unwrap();
        let err = expected_absorption_time(&swap, 0).unwrap_err();
        assert!(matches!(err, Error::SingularSystem(_)));
    }

    #[test]
    fn oversized_dense_systems_are_rejected() {
        // Every interior state couples to the transient state 2, which
        // defeats the tridiagonal path; 4999 unknowns break the dense cap.
        let den = 5000u32;
        let rows = (0..=den)
            .map(|i| {
                if i == 0 || i == den {
                    vec![(i, 1.0)]
                } else {
                    vec![(2, 0.25), (i, 0.5), (den, 0.25)]
                }
            })
            .collect();
        let kernel = TransitionKernel::from_rows(den, rows).unwrap();
        let err = expected_absorption_time(&kernel, 2500).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSize(_)));
    }

    #[test]
    fn from_rows_validates() {
        assert!(TransitionKernel::from_rows(1, vec![vec![(0, 1.0)]]).is_err());
        assert!(
            TransitionKernel::from_rows(1, vec![vec![(0, 0.9)], vec![(1, 1.0)]]).is_err()
        );
        assert!(
            TransitionKernel::from_rows(1, vec![vec![(2, 1.0)], vec![(1, 1.0)]]).is_err()
        );
        let merged =
            TransitionKernel::from_rows(1, vec![vec![(0, 0.5), (0, 0.5)], vec![(1, 1.0)]])
                .unwrap();
        assert_eq!(merged.row(0), &[(0, 1.0)]);
    }

    #[test]
    fn csv_export_lists_all_triples() {
        let k2 = build_cga_kernel(2).unwrap();
        let mut buf = Vec::new();
        k2.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let want = "state,target,probability\n0,0,1.0\n1,0,0.25\n1,1,0.5\n1,2,0.25\n2,2,1.0\n";
        assert_eq!(text, want);
    }
}
