//! Stochastic dominance of frequency laws.
//!
//! A bit whose value never hurts fitness ("weakly prefers a one") keeps its
//! frequency stochastically at least as high as a neutral bit's, step for
//! step.  This module makes that comparable in practice: exact one-step
//! laws by enumerating every sample outcome (with fitness ties averaged
//! analytically), CDF dominance verdicts, and multi-step checks that either
//! propagate exact laws (one-dimensional instances) or fall back to paired
//! Monte Carlo with a one-sided DKW allowance.
//!
//! The comparison `a ⪰ b` means `CDF_a(x) <= CDF_b(x)` everywhere.

use rayon::prelude::*;
use serde::Serialize;

use crate::eda::{
    cga_update, run_eda, Algorithm, EdaSpec, FitnessFunction, FrequencyVector,
};
use crate::error::{Error, Result};
use crate::stats::{binomial_coefficient_u128, binomial_pmf, dkw_one_sided};
use crate::stopping::{Frequency, StoppingRule};
use crate::stream::{replica_stream, sweep_stream};

/// Largest total bit count `lambda * D` the one-step enumeration accepts.
const MAX_ENUMERATION_BITS: usize = 16;
/// Largest reachable frequency support the exact multi-step engine carries.
const MAX_EXACT_SUPPORT: usize = 4096;
/// Exact-mode dominance tolerance.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Probability distribution on finitely many frequency values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution from (value, mass) pairs; equal values are
    /// merged, zero masses dropped, and the total must be 1 within `1e-12`.
    pub fn from_weighted(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs
            .into_iter()
            .filter(|&(_, m)| m != 0.0)
            .collect();
        for &(v, m) in &pairs {
            if !v.is_finite() || m < 0.0 {
                return Err(Error::Domain(format!(
                    "invalid distribution atom ({v}, {m})"
                )));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = Vec::with_capacity(pairs.len());
        let mut masses: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, m) in pairs {
            if support.last() == Some(&v) {
                *masses.last_mut().expect("same length") += m;
            } else {
                support.push(v);
                masses.push(m);
            }
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "distribution mass sums to {total}, off by more than 1e-12"
            )));
        }
        Ok(DiscreteDistribution { support, masses })
    }

    pub fn point_mass(v: f64) -> Self {
        DiscreteDistribution {
            support: vec![v],
            masses: vec![1.0],
        }
    }

    /// Law of `Binomial(mu, p) / mu`.
    pub fn binomial_frequency(mu: u32, p: f64) -> Result<Self> {
        if mu < 1 {
            return Err(Error::Domain("mu must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        Self::from_weighted(
            (0..=mu)
                .map(|j| (j as f64 / mu as f64, binomial_pmf(mu as u64, j as u64, p)))
                .collect(),
        )
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.masses)
            .map(|(&v, &m)| v * m)
            .sum()
    }

    /// `Pr[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.masses)
            .take_while(|&(&v, _)| v <= x)
            .map(|(_, &m)| m)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceVerdict {
    pub dominates: bool,
    /// Largest value of `CDF_a - CDF_b` over the merged support; dominance
    /// holds when it stays within tolerance.
    pub max_cdf_violation: f64,
    /// Point where the worst excess occurs.
    pub witness: Option<f64>,
}

/// Checks `a ⪰ b`: the CDF of `a` must not exceed the CDF of `b` by more
/// than `tol` anywhere on the merged support.
pub fn stochastic_dominance(
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
    tol: f64,
) -> DominanceVerdict {
    let mut merged: Vec<f64> = a.support.iter().chain(b.support.iter()).copied().collect();
    merged.sort_by(f64::total_cmp);
    merged.dedup();
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ca, mut cb) = (0.0f64, 0.0f64);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for &x in &merged {
        while ia < a.support.len() && a.support[ia] <= x {
            ca += a.masses[ia];
            ia += 1;
        }
        while ib < b.support.len() && b.support[ib] <= x {
            cb += b.masses[ib];
            ib += 1;
        }
        let excess = ca - cb;
        if excess > worst {
            worst = excess;
            witness = Some(x);
        }
    }
    DominanceVerdict {
        dominates: worst <= tol,
        max_cdf_violation: worst,
        witness,
    }
}

/// Exact law of `freq[bit]` after one iteration, by enumerating all
/// `2^(lambda * D)` sample outcomes.  Fitness ties at the selection cutoff
/// are averaged analytically: a uniformly random subset of the tied group
/// fills the remaining slots, so the tracked bit's column sum picks up a
/// hypergeometric contribution.
pub fn exact_onestep_distribution(
    spec: &EdaSpec,
    fitness: &FitnessFunction,
    freq: &FrequencyVector,
    bit: usize,
) -> Result<DiscreteDistribution> {
    let atoms = enumerate_onestep(spec, fitness, freq, bit)?;
    DiscreteDistribution::from_weighted(
        atoms.into_iter().map(|(f, m)| (f.value(), m)).collect(),
    )
}

/// As [`exact_onestep_distribution`] but keeping the exact grid form of each
/// outcome, so multi-step propagation never leaves the grid.
fn enumerate_onestep(
    spec: &EdaSpec,
    fitness: &FitnessFunction,
    freq: &FrequencyVector,
    bit: usize,
) -> Result<Vec<(Frequency, f64)>> {
    spec.validate()?;
    let d = spec.dim as usize;
    if freq.len() != d {
        return Err(Error::InvalidSpec(format!(
            "frequency vector has {} entries for dimension {d}",
            freq.len()
        )));
    }
    if bit >= d {
        return Err(Error::Domain(format!("bit {bit} out of range for D={d}")));
    }
    let lambda = spec.lambda as usize;
    let total_bits = lambda * d;
    if total_bits > MAX_ENUMERATION_BITS {
        return Err(Error::InfeasibleSize(format!(
            "one-step enumeration needs 2^{total_bits} outcomes (cap 2^{MAX_ENUMERATION_BITS}); \
             use the Monte Carlo mode"
        )));
    }
    let probs = freq.values();
    let margins = spec.margin_denominator();
    let mut atoms: Vec<(Frequency, f64)> = Vec::new();
    let mut individuals = vec![vec![false; d]; lambda];

    'outcomes: for code in 0u32..(1u32 << total_bits) {
        let mut prob = 1.0f64;
        for i in 0..lambda {
            for j in 0..d {
                let one = code >> (i * d + j) & 1 == 1;
                individuals[i][j] = one;
                prob *= if one { probs[j] } else { 1.0 - probs[j] };
                if prob == 0.0 {
                    continue 'outcomes;
                }
            }
        }
        match spec.algorithm {
            Algorithm::Cga => {
                let f0 = fitness.eval(&individuals[0]);
                let f1 = fitness.eval(&individuals[1]);
                let next = cga_update(
                    freq,
                    &individuals[0],
                    &individuals[1],
                    f0 >= f1,
                    spec.k.expect("validated cGA spec has K"),
                    margins,
                );
                atoms.push((next.bit(bit), prob));
            }
            _ => {
                let fits: Vec<f64> = individuals.iter().map(|x| fitness.eval(x)).collect();
                let mut sorted = fits.clone();
                sorted.sort_by(|x, y| y.total_cmp(x));
                let cutoff = sorted[spec.mu as usize - 1];
                let mut above = 0u32;
                let mut ties = 0u32;
                let mut ones_above = 0u32;
                let mut ones_tied = 0u32;
                for (f, x) in fits.iter().zip(&individuals) {
                    if *f > cutoff {
                        above += 1;
                        ones_above += x[bit] as u32;
                    } else if *f == cutoff {
                        ties += 1;
                        ones_tied += x[bit] as u32;
                    }
                }
                let slots = spec.mu - above;
                let denom = binomial_coefficient_u128(ties as u64, slots as u64) as f64;
                let h_lo = slots.saturating_sub(ties - ones_tied);
                let h_hi = slots.min(ones_tied);
                for h in h_lo..=h_hi {
                    let weight = binomial_coefficient_u128(ones_tied as u64, h as u64) as f64
                        * binomial_coefficient_u128(
                            (ties - ones_tied) as u64,
                            (slots - h) as u64,
                        ) as f64
                        / denom;
                    let column_sum = ones_above + h;
                    let next = pbil_next_bit(
                        &freq.bit(bit),
                        column_sum,
                        spec.mu,
                        spec.rate_at(1),
                        margins,
                    );
                    atoms.push((next, prob * weight));
                }
            }
        }
    }
    Ok(atoms)
}

/// One-bit image of the PBIL-family update, with the same grid dispatch as
/// the full vector update.
fn pbil_next_bit(
    current: &Frequency,
    column_sum: u32,
    mu: u32,
    rho: f64,
    margins: Option<u32>,
) -> Frequency {
    let grid_ok = margins.map_or(true, |m| mu % m == 0);
    if rho == 1.0 && grid_ok {
        let num = match margins {
            Some(d) => column_sum.clamp(mu / d, mu - mu / d),
            None => column_sum,
        };
        Frequency::Grid { num, den: mu }
    } else {
        let p = (1.0 - rho) * current.value() + rho * column_sum as f64 / mu as f64;
        let clamped = match margins {
            Some(d) => p.clamp(1.0 / d as f64, 1.0 - 1.0 / d as f64),
            None => p,
        };
        Frequency::Real(clamped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DominanceMode {
    /// Exact propagation of the tracked bit's law; needs `D = 1` so the
    /// frequency alone is the full chain state.
    Exact,
    /// Paired campaigns with a one-sided empirical-CDF comparison.
    MonteCarlo { replicas: u32, master_seed: u64 },
}

/// Per-step dominance report; serialized as JSON by the front ends.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceStepReport {
    pub t: u64,
    pub dominates: bool,
    pub max_violation: f64,
    pub witness: Option<f64>,
    /// Allowed excess: the exact tolerance, or the statistical slack.
    pub slack: f64,
}

/// Compares the tracked first bit of a run under `fitness_f` against a
/// neutral run of `spec_g`, both from all-1/2 starts, for `t = 0..=t_max`.
pub fn multistep_dominance_check(
    spec_f: &EdaSpec,
    fitness_f: &FitnessFunction,
    spec_g: &EdaSpec,
    t_max: u64,
    mode: &DominanceMode,
) -> Result<Vec<DominanceStepReport>> {
    spec_f.validate()?;
    spec_g.validate()?;
    match *mode {
        DominanceMode::Exact => multistep_exact(spec_f, fitness_f, spec_g, t_max),
        DominanceMode::MonteCarlo {
            replicas,
            master_seed,
        } => multistep_monte_carlo(spec_f, fitness_f, spec_g, t_max, replicas, master_seed),
    }
}

fn multistep_exact(
    spec_f: &EdaSpec,
    fitness_f: &FitnessFunction,
    spec_g: &EdaSpec,
    t_max: u64,
) -> Result<Vec<DominanceStepReport>> {
    for spec in [spec_f, spec_g] {
        if spec.dim != 1 {
            return Err(Error::InfeasibleSize(format!(
                "exact multi-step propagation tracks the frequency alone, which is the \
                 whole chain state only for D=1 (got D={}); use the Monte Carlo mode",
                spec.dim
            )));
        }
    }
    let mut law_f = ExactLaw::initial(spec_f);
    let mut law_g = ExactLaw::initial(spec_g);
    let mut reports = Vec::with_capacity(t_max as usize + 1);
    for t in 0..=t_max {
        if t > 0 {
            law_f = law_f.step(spec_f, fitness_f)?;
            law_g = law_g.step(spec_g, &FitnessFunction::Neutral)?;
        }
        let verdict = stochastic_dominance(
            &law_f.distribution()?,
            &law_g.distribution()?,
            EXACT_TOLERANCE,
        );
        reports.push(DominanceStepReport {
            t,
            dominates: verdict.dominates,
            max_violation: verdict.max_cdf_violation,
            witness: verdict.witness,
            slack: EXACT_TOLERANCE,
        });
    }
    Ok(reports)
}

/// Law of a one-dimensional chain's frequency, keyed by the exact state so
/// grid chains never accumulate float drift.
struct ExactLaw {
    atoms: Vec<(Frequency, f64)>,
}

impl ExactLaw {
    fn initial(spec: &EdaSpec) -> Self {
        ExactLaw {
            atoms: vec![(FrequencyVector::initial(spec).bit(0), 1.0)],
        }
    }

    fn step(&self, spec: &EdaSpec, fitness: &FitnessFunction) -> Result<Self> {
        let mut merged: Vec<(Frequency, f64)> = Vec::new();
        for (state, mass) in &self.atoms {
            let freq = match *state {
                Frequency::Grid { num, den } => FrequencyVector::Grid {
                    nums: vec![num],
                    den,
                },
                Frequency::Real(p) => FrequencyVector::Real(vec![p]),
            };
            for (next, w) in enumerate_onestep(spec, fitness, &freq, 0)? {
                merged.push((next, mass * w));
            }
        }
        merged.sort_by(|a, b| state_key(&a.0).partial_cmp(&state_key(&b.0)).expect("finite"));
        let mut atoms: Vec<(Frequency, f64)> = Vec::new();
        for (state, mass) in merged {
            match atoms.last_mut() {
                Some(last) if state_key(&last.0) == state_key(&state) => last.1 += mass,
                _ => atoms.push((state, mass)),
            }
        }
        if atoms.len() > MAX_EXACT_SUPPORT {
            return Err(Error::InfeasibleSize(format!(
                "exact law support grew to {} states (cap {MAX_EXACT_SUPPORT}); \
                 use the Monte Carlo mode",
                atoms.len()
            )));
        }
        Ok(ExactLaw { atoms })
    }

    fn distribution(&self) -> Result<DiscreteDistribution> {
        DiscreteDistribution::from_weighted(
            self.atoms.iter().map(|(s, m)| (s.value(), *m)).collect(),
        )
    }
}

/// Merge key: grid states by exact numerator, real states by value; the two
/// kinds never mix within one chain after the first step.
fn state_key(state: &Frequency) -> (u8, f64) {
    match *state {
        Frequency::Grid { num, den } => (0, num as f64 / den as f64 + den as f64),
        Frequency::Real(p) => (1, p),
    }
}

fn multistep_monte_carlo(
    spec_f: &EdaSpec,
    fitness_f: &FitnessFunction,
    spec_g: &EdaSpec,
    t_max: u64,
    replicas: u32,
    master_seed: u64,
) -> Result<Vec<DominanceStepReport>> {
    if replicas < 2 {
        return Err(Error::InvalidSpec(
            "Monte Carlo dominance needs at least 2 replicas".into(),
        ));
    }
    let run = |spec: &EdaSpec, fitness: &FitnessFunction, arm: u32| -> Result<Vec<Vec<f64>>> {
        (0..replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_stream(master_seed, sweep_stream(arm, r));
                let trace = run_eda(
                    spec,
                    fitness,
                    &StoppingRule::Horizon(t_max),
                    t_max.max(1),
                    &mut rng,
                )?;
                Ok(trace.history.iter().map(|f| f.get(0)).collect())
            })
            .collect()
    };
    let samples_f = run(spec_f, fitness_f, 0)?;
    let samples_g = run(spec_g, &FitnessFunction::Neutral, 1)?;

    // Two one-sided DKW bands at level alpha/2 each give a one-sided
    // two-sample allowance at overall level 1e-3.
    let slack = 2.0 * dkw_one_sided(replicas as usize, 5e-4);
    let mut reports = Vec::with_capacity(t_max as usize + 1);
    for t in 0..=t_max as usize {
        let mut fa: Vec<f64> = samples_f.iter().map(|h| h[t]).collect();
        let mut ga: Vec<f64> = samples_g.iter().map(|h| h[t]).collect();
        fa.sort_by(f64::total_cmp);
        ga.sort_by(f64::total_cmp);
        let (excess, witness) = empirical_cdf_excess(&fa, &ga);
        reports.push(DominanceStepReport {
            t: t as u64,
            dominates: excess <= slack,
            max_violation: excess,
            witness,
            slack,
        });
    }
    Ok(reports)
}

/// `sup_x (ECDF_a(x) - ECDF_b(x))` over both samples (sorted inputs),
/// together with the location of the supremum.
fn empirical_cdf_excess(a: &[f64], b: &[f64]) -> (f64, Option<f64>) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    while ia < a.len() || ib < b.len() {
        let x = match (a.get(ia), b.get(ib)) {
            (Some(&va), Some(&vb)) => va.min(vb),
            (Some(&va), None) => va,
            (None, Some(&vb)) => vb,
            (None, None) => break,
        };
        while ia < a.len() && a[ia] <= x {
            ia += 1;
        }
        while ib < b.len() && b[ib] <= x {
            ib += 1;
        }
        let excess = ia as f64 / na - ib as f64 / nb;
        if excess > worst {
            worst = excess;
            witness = Some(x);
        }
    }
    (worst, witness)
}

/// First index `t` with `trace.history[t].get(bit) <= threshold`, if any.
/// Used to measure one-sided loss times without stopping runs that drift to
/// the upper boundary.
pub fn first_time_at_or_below(
    history: &[FrequencyVector],
    bit: usize,
    threshold: f64,
) -> Option<u64> {
    history
        .iter()
        .position(|f| f.get(bit) <= threshold)
        .map(|t| t as u64)
}

/// A start pair whose one-step laws violate dominance.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub u_start: Vec<f64>,
    pub v_start: Vec<f64>,
    pub verdict: DominanceVerdict,
}

/// Searches the given start pairs for a one-step dominance violation of
/// `fitness_u` at `u0` over `fitness_v` at `v0` on the tracked bit.
/// Dominance between two runs that both favor ones is not guaranteed; this
/// hook lets the test suite look for concrete failures.
pub fn search_onestep_counterexample(
    spec: &EdaSpec,
    fitness_u: &FitnessFunction,
    fitness_v: &FitnessFunction,
    starts: &[(FrequencyVector, FrequencyVector)],
    bit: usize,
    tol: f64,
) -> Result<Option<CounterexampleReport>> {
    for (u0, v0) in starts {
        let a = exact_onestep_distribution(spec, fitness_u, u0, bit)?;
        let b = exact_onestep_distribution(spec, fitness_v, v0, bit)?;
        let verdict = stochastic_dominance(&a, &b, tol);
        if !verdict.dominates {
            return Ok(Some(CounterexampleReport {
                u_start: u0.values(),
                v_start: v0.values(),
                verdict,
            }));
        }
    }
    Ok(None)
}
