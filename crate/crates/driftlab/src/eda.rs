//! The n-Bernoulli-lambda-EDA framework.
//!
//! Each of the `D` bits carries a sampling frequency; every iteration samples
//! `lambda` individuals bit-wise independently, ranks them by fitness, and
//! feeds the best `mu` back into the frequency vector through the scheme's
//! update rule:
//!
//! * PBIL / lambda-MMAS / CE: `p' = (1 - rho) p + (rho / mu) * column sum`
//! * UMDA: the same with `rho = 1`
//! * cGA: `lambda = 2`; each bit moves by `1/K` toward the winner when the
//!   two samples disagree
//!
//! Frequencies of the grid-valued schemes (cGA, UMDA) are stored as exact
//! integer numerators so long runs cannot drift off the `1/K` (resp. `1/mu`)
//! grid; fractional learning rates use plain doubles.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stopping::{Frequency, HittingRecord, StopTrigger, StoppingRule};

pub type BitString = Vec<bool>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Pbil,
    Umda,
    LambdaMmas,
    Cga,
    Ce,
}

/// Learning-rate schedule; a finite table with a final repeating value
/// covers the cross-entropy method's time-dependent rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateSchedule {
    Constant(f64),
    Table { values: Vec<f64>, tail: f64 },
}

impl RateSchedule {
    /// Learning rate applied at iteration `t` (iterations count from 1).
    pub fn rate_at(&self, t: u64) -> f64 {
        match self {
            RateSchedule::Constant(r) => *r,
            RateSchedule::Table { values, tail } => {
                let idx = t.saturating_sub(1) as usize;
                values.get(idx).copied().unwrap_or(*tail)
            }
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            RateSchedule::Constant(r) => Some(*r),
            RateSchedule::Table { .. } => None,
        }
    }

    /// Smallest rate the schedule ever applies.
    pub fn min_rate(&self) -> f64 {
        match self {
            RateSchedule::Constant(r) => *r,
            RateSchedule::Table { values, tail } => values.iter().copied().fold(*tail, f64::min),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| r > 0.0 && r <= 1.0;
        let valid = match self {
            RateSchedule::Constant(r) => ok(*r),
            RateSchedule::Table { values, tail } => ok(*tail) && values.iter().all(|&r| ok(r)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidSpec(
                "every learning rate must lie in (0, 1]".into(),
            ))
        }
    }
}

/// Parameters of one EDA instance.  Use the named constructors; `validate`
/// enforces the per-scheme constraints for hand-built values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdaSpec {
    pub algorithm: Algorithm,
    pub mu: u32,
    pub lambda: u32,
    pub rho: RateSchedule,
    /// cGA step granularity; `None` for the other schemes.
    pub k: Option<u32>,
    /// Clamp all frequencies to `[1/D, 1 - 1/D]` after each update.
    pub margins: bool,
    pub dim: u32,
}

impl EdaSpec {
    pub fn pbil(mu: u32, lambda: u32, rho: f64, dim: u32) -> Result<Self> {
        let spec = EdaSpec {
            algorithm: Algorithm::Pbil,
            mu,
            lambda,
            rho: RateSchedule::Constant(rho),
            k: None,
            margins: false,
            dim,
        };
        spec.validate().map(|()| spec)
    }

    pub fn umda(mu: u32, lambda: u32, dim: u32) -> Result<Self> {
        let spec = EdaSpec {
            algorithm: Algorithm::Umda,
            mu,
            lambda,
            rho: RateSchedule::Constant(1.0),
            k: None,
            margins: false,
            dim,
        };
        spec.validate().map(|()| spec)
    }

    pub fn lambda_mmas(lambda: u32, rho: f64, dim: u32) -> Result<Self> {
        let spec = EdaSpec {
            algorithm: Algorithm::LambdaMmas,
            mu: 1,
            lambda,
            rho: RateSchedule::Constant(rho),
            k: None,
            margins: false,
            dim,
        };
        spec.validate().map(|()| spec)
    }

    pub fn cga(k: u32, dim: u32) -> Result<Self> {
        let spec = EdaSpec {
            algorithm: Algorithm::Cga,
            mu: 1,
            lambda: 2,
            rho: RateSchedule::Constant(1.0),
            k: Some(k),
            margins: false,
            dim,
        };
        spec.validate().map(|()| spec)
    }

    pub fn ce(mu: u32, lambda: u32, rho: RateSchedule, dim: u32) -> Result<Self> {
        let spec = EdaSpec {
            algorithm: Algorithm::Ce,
            mu,
            lambda,
            rho,
            k: None,
            margins: false,
            dim,
        };
        spec.validate().map(|()| spec)
    }

    pub fn with_margins(mut self) -> Result<Self> {
        self.margins = true;
        self.validate().map(|()| self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if self.mu < 1 || self.lambda < self.mu {
            return Err(Error::InvalidSpec(format!(
                "need 1 <= mu <= lambda, got mu={}, lambda={}",
                self.mu, self.lambda
            )));
        }
        self.rho.validate()?;
        if self.margins && self.dim < 2 {
            return Err(Error::InvalidSpec(
                "margins at 1/D and 1-1/D need D >= 2".into(),
            ));
        }
        match self.algorithm {
            Algorithm::Cga => {
                let k = self.k.ok_or_else(|| {
                    Error::InvalidSpec("cGA requires the step granularity K".into())
                })?;
                if k < 2 || k % 2 != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "cGA needs even K >= 2 so that 1/2 lies on the grid, got K={k}"
                    )));
                }
                if self.lambda != 2 || self.mu != 1 {
                    return Err(Error::InvalidSpec(
                        "cGA samples exactly two individuals per iteration (mu=1, lambda=2)"
                            .into(),
                    ));
                }
                if self.margins && k % self.dim != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "cGA margins require 1 - 2/D to be an even multiple of 1/K \
                         (equivalently D | K for even K), got K={k}, D={}",
                        self.dim
                    )));
                }
            }
            Algorithm::Umda => {
                if self.rho.constant() != Some(1.0) {
                    return Err(Error::InvalidSpec("UMDA fixes rho = 1".into()));
                }
                if self.k.is_some() {
                    return Err(Error::InvalidSpec("K applies only to the cGA".into()));
                }
                if self.margins && self.mu % self.dim != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "UMDA margins require the margin 1/D to lie on the 1/mu grid \
                         (D | mu), got mu={}, D={}",
                        self.mu, self.dim
                    )));
                }
            }
            Algorithm::LambdaMmas => {
                if self.mu != 1 {
                    return Err(Error::InvalidSpec("lambda-MMAS fixes mu = 1".into()));
                }
                if self.k.is_some() {
                    return Err(Error::InvalidSpec("K applies only to the cGA".into()));
                }
            }
            Algorithm::Pbil => {
                if self.rho.constant().is_none() {
                    return Err(Error::InvalidSpec(
                        "PBIL uses a constant learning rate; use the CE scheme for schedules"
                            .into(),
                    ));
                }
                if self.k.is_some() {
                    return Err(Error::InvalidSpec("K applies only to the cGA".into()));
                }
            }
            Algorithm::Ce => {
                if self.k.is_some() {
                    return Err(Error::InvalidSpec("K applies only to the cGA".into()));
                }
            }
        }
        Ok(())
    }

    pub fn rate_at(&self, t: u64) -> f64 {
        self.rho.rate_at(t)
    }

    /// Margin denominator `D` when margins are active.
    pub fn margin_denominator(&self) -> Option<u32> {
        self.margins.then_some(self.dim)
    }

    /// True when every frequency the run can produce lies on an exact grid,
    /// so absorption at 0/1 is a well-defined event.
    pub fn exact_grid(&self) -> bool {
        self.algorithm == Algorithm::Cga || self.rho.min_rate() == 1.0
    }

    /// Scale of the drift hitting times: `K^2` for the cGA, `mu / rho_min^2`
    /// for the PBIL family (which is `mu` for UMDA).
    pub fn theta_scale(&self) -> f64 {
        match self.algorithm {
            Algorithm::Cga => {
                let k = self.k.unwrap_or(2) as f64;
                k * k
            }
            _ => {
                let rho = self.rho.min_rate();
                self.mu as f64 / (rho * rho)
            }
        }
    }

    /// Default iteration cap: 200 times the drift scale, which makes budget
    /// exhaustion a rare, always-reported event.
    pub fn default_budget(&self, stop: &StoppingRule) -> u64 {
        match *stop {
            StoppingRule::Horizon(t) => t.max(1),
            _ => (200.0 * self.theta_scale()).ceil() as u64,
        }
    }
}

/// Vector of per-bit sampling frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FrequencyVector {
    /// Exact representation `nums[j] / den` (cGA: den = K, UMDA: den = mu).
    Grid { nums: Vec<u32>, den: u32 },
    Real(Vec<f64>),
}

impl FrequencyVector {
    /// The all-1/2 initial vector in the exactest representation the
    /// algorithm admits.  UMDA with odd `mu` starts as a double and moves
    /// onto the `1/mu` grid after the first update.
    pub fn initial(spec: &EdaSpec) -> Self {
        let d = spec.dim as usize;
        match spec.algorithm {
            Algorithm::Cga => {
                let k = spec.k.expect("validated cGA spec has K");
                FrequencyVector::Grid {
                    nums: vec![k / 2; d],
                    den: k,
                }
            }
            _ if spec.rho.constant() == Some(1.0) && spec.mu % 2 == 0 => FrequencyVector::Grid {
                nums: vec![spec.mu / 2; d],
                den: spec.mu,
            },
            _ => FrequencyVector::Real(vec![0.5; d]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FrequencyVector::Grid { nums, .. } => nums.len(),
            FrequencyVector::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, j: usize) -> f64 {
        match self {
            FrequencyVector::Grid { nums, den } => nums[j] as f64 / *den as f64,
            FrequencyVector::Real(v) => v[j],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.get(j)).collect()
    }

    /// Scalar view of one bit for stopping-rule evaluation.
    pub fn bit(&self, j: usize) -> Frequency {
        match self {
            FrequencyVector::Grid { nums, den } => Frequency::Grid {
                num: nums[j],
                den: *den,
            },
            FrequencyVector::Real(v) => Frequency::Real(v[j]),
        }
    }
}

/// Fitness functions used by the drift experiments.  `Neutral` ignores the
/// first bit entirely (it scores ones over the remaining bits), so the first
/// bit's frequency is a martingale under every scheme.
#[derive(Clone)]
pub enum FitnessFunction {
    Neutral,
    OneMax,
    LeadingOnes,
    /// Indicator of the given bit: flipping it to one never hurts.
    WeakPreferOne(usize),
    /// Indicator of the bit being zero.
    WeakPreferZero(usize),
    Custom(Arc<dyn Fn(&[bool]) -> f64 + Send + Sync>),
}

impl fmt::Debug for FitnessFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitnessFunction::Neutral => write!(f, "Neutral"),
            FitnessFunction::OneMax => write!(f, "OneMax"),
            FitnessFunction::LeadingOnes => write!(f, "LeadingOnes"),
            FitnessFunction::WeakPreferOne(b) => write!(f, "WeakPreferOne({b})"),
            FitnessFunction::WeakPreferZero(b) => write!(f, "WeakPreferZero({b})"),
            FitnessFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl FitnessFunction {
    pub fn eval(&self, x: &[bool]) -> f64 {
        match self {
            FitnessFunction::Neutral => x.iter().skip(1).filter(|&&b| b).count() as f64,
            FitnessFunction::OneMax => x.iter().filter(|&&b| b).count() as f64,
            FitnessFunction::LeadingOnes => x.iter().take_while(|&&b| b).count() as f64,
            FitnessFunction::WeakPreferOne(b) => x[*b] as u8 as f64,
            FitnessFunction::WeakPreferZero(b) => (!x[*b]) as u8 as f64,
            FitnessFunction::Custom(f) => f(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub individuals: Vec<BitString>,
    pub fitnesses: Vec<f64>,
}

impl Population {
    pub fn evaluate(individuals: Vec<BitString>, fitness: &FitnessFunction) -> Self {
        let fitnesses = individuals.iter().map(|x| fitness.eval(x)).collect();
        Population {
            individuals,
            fitnesses,
        }
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }
}

/// Samples `lambda` individuals bit-wise independently from `freq` and
/// evaluates them.
pub fn sample_population<R: Rng + ?Sized>(
    freq: &FrequencyVector,
    lambda: u32,
    fitness: &FitnessFunction,
    rng: &mut R,
) -> Population {
    let probs = freq.values();
    let individuals = (0..lambda)
        .map(|_| probs.iter().map(|&p| rng.gen_bool(p)).collect())
        .collect();
    Population::evaluate(individuals, fitness)
}

/// Keeps the `mu` highest-fitness individuals; ties are broken uniformly at
/// random, so selection never correlates with bit positions or sample order.
pub fn select_mu_best<R: Rng + ?Sized>(
    pop: &Population,
    mu: u32,
    rng: &mut R,
) -> Result<Population> {
    let lambda = pop.len();
    if mu as usize > lambda {
        return Err(Error::InvalidSpec(format!(
            "cannot select mu={mu} from lambda={lambda} individuals"
        )));
    }
    let mut order: Vec<(usize, u64)> = (0..lambda).map(|i| (i, rng.gen())).collect();
    order.sort_unstable_by(|a, b| {
        pop.fitnesses[b.0]
            .total_cmp(&pop.fitnesses[a.0])
            .then(a.1.cmp(&b.1))
    });
    let take = &order[..mu as usize];
    Ok(Population {
        individuals: take.iter().map(|&(i, _)| pop.individuals[i].clone()).collect(),
        fitnesses: take.iter().map(|&(i, _)| pop.fitnesses[i]).collect(),
    })
}

fn clamp_grid(num: u32, den: u32, margins: Option<u32>) -> u32 {
    match margins {
        Some(d) => {
            debug_assert_eq!(den % d, 0, "margin off the frequency grid");
            let m = den / d;
            num.clamp(m, den - m)
        }
        None => num,
    }
}

fn clamp_real(p: f64, margins: Option<u32>) -> f64 {
    match margins {
        Some(d) => {
            let m = 1.0 / d as f64;
            p.clamp(m, 1.0 - m)
        }
        None => p,
    }
}

/// PBIL-family update: `p' = (1 - rho) p + (rho / mu) * column sum`, then
/// the margin clamp.  With `rho = 1` the result lands exactly on the `1/mu`
/// grid and is returned in integer form whenever the margins allow it.
pub fn pbil_update(
    freq: &FrequencyVector,
    selected: &Population,
    rho: f64,
    mu: u32,
    margins: Option<u32>,
) -> FrequencyVector {
    assert_eq!(
        selected.len(),
        mu as usize,
        "selected population must contain exactly mu individuals"
    );
    let d = freq.len();
    let sums: Vec<u32> = (0..d)
        .map(|j| selected.individuals.iter().filter(|x| x[j]).count() as u32)
        .collect();
    let grid_ok = margins.map_or(true, |m| mu % m == 0);
    if rho == 1.0 && grid_ok {
        let nums = sums
            .iter()
            .map(|&s| clamp_grid(s, mu, margins))
            .collect();
        FrequencyVector::Grid { nums, den: mu }
    } else {
        let vals = (0..d)
            .map(|j| {
                let p = (1.0 - rho) * freq.get(j) + rho * sums[j] as f64 / mu as f64;
                clamp_real(p, margins)
            })
            .collect();
        FrequencyVector::Real(vals)
    }
}

/// cGA update: every bit on which the two samples disagree moves by `1/K`
/// toward the winner, then the margin clamp.
pub fn cga_update(
    freq: &FrequencyVector,
    first: &[bool],
    second: &[bool],
    first_is_better: bool,
    k: u32,
    margins: Option<u32>,
) -> FrequencyVector {
    let (nums, den) = match freq {
        FrequencyVector::Grid { nums, den } => (nums, *den),
        FrequencyVector::Real(_) => panic!("cGA frequencies live on the 1/K grid"),
    };
    assert_eq!(den, k, "frequency grid does not match K");
    let (winner, loser) = if first_is_better {
        (first, second)
    } else {
        (second, first)
    };
    let new_nums = nums
        .iter()
        .zip(winner.iter().zip(loser.iter()))
        .map(|(&num, (&w, &l))| {
            let moved = match (w, l) {
                (true, false) => {
                    assert!(num < k, "sampled a one under frequency 1 complement");
                    num + 1
                }
                (false, true) => {
                    assert!(num > 0, "sampled a one under frequency 0");
                    num - 1
                }
                _ => num,
            };
            clamp_grid(moved, k, margins)
        })
        .collect();
    FrequencyVector::Grid { nums: new_nums, den: k }
}

/// Full trajectory of one run: `history[t]` is the frequency vector after
/// `t` iterations, so `history.len() == stopping_time + 1`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub history: Vec<FrequencyVector>,
    pub stopping_time: u64,
    pub trigger: StopTrigger,
}

/// Runs the EDA from the all-1/2 vector until the stopping rule fires on the
/// first bit or the budget runs out (reported as a result, not an error).
pub fn run_eda<R: Rng + ?Sized>(
    spec: &EdaSpec,
    fitness: &FitnessFunction,
    stop: &StoppingRule,
    budget: u64,
    rng: &mut R,
) -> Result<Trace> {
    let (history, record) = drive(spec, fitness, stop, budget, rng, true)?;
    Ok(Trace {
        history: history.expect("history recorded"),
        stopping_time: record.stopping_time,
        trigger: record.trigger,
    })
}

/// As [`run_eda`] but without storing the trajectory; for hitting-time
/// campaigns.
pub fn run_eda_hitting<R: Rng + ?Sized>(
    spec: &EdaSpec,
    fitness: &FitnessFunction,
    stop: &StoppingRule,
    budget: u64,
    rng: &mut R,
) -> Result<HittingRecord> {
    drive(spec, fitness, stop, budget, rng, false).map(|(_, record)| record)
}

fn drive<R: Rng + ?Sized>(
    spec: &EdaSpec,
    fitness: &FitnessFunction,
    stop: &StoppingRule,
    budget: u64,
    rng: &mut R,
    record_history: bool,
) -> Result<(Option<Vec<FrequencyVector>>, HittingRecord)> {
    spec.validate()?;
    stop.validate()?;
    match stop {
        StoppingRule::RunAway { .. } => {
            return Err(Error::UnsupportedStop(
                "run-away detection is interpreted by the reduced-process simulator".into(),
            ));
        }
        StoppingRule::Absorption if !spec.exact_grid() => {
            return Err(Error::UnsupportedStop(
                "fractional learning rates never reach 0/1 exactly; \
                 use exit-middle or the reduced process with run-away detection"
                    .into(),
            ));
        }
        StoppingRule::MarginHit if !spec.margins => {
            return Err(Error::UnsupportedStop(
                "margin-hit stopping requires margins to be enabled".into(),
            ));
        }
        _ => {}
    }
    if budget < 1 {
        return Err(Error::InvalidSpec("iteration budget must be at least 1".into()));
    }

    let margins = spec.margin_denominator();
    let mut freq = FrequencyVector::initial(spec);
    let mut history = record_history.then(|| vec![freq.clone()]);

    // Only a zero horizon can stop before the first update.
    if matches!(stop, StoppingRule::Horizon(0)) {
        let record = HittingRecord {
            stopping_time: 0,
            terminal_frequency: freq.get(0),
            trigger: StopTrigger::Horizon,
            certified: false,
        };
        return Ok((history, record));
    }

    for t in 1..=budget {
        let pop = sample_population(&freq, spec.lambda, fitness, rng);
        freq = match spec.algorithm {
            Algorithm::Cga => {
                let first_is_better = pop.fitnesses[0] >= pop.fitnesses[1];
                cga_update(
                    &freq,
                    &pop.individuals[0],
                    &pop.individuals[1],
                    first_is_better,
                    spec.k.expect("validated cGA spec has K"),
                    margins,
                )
            }
            _ => {
                let selected = select_mu_best(&pop, spec.mu, rng)?;
                pbil_update(&freq, &selected, spec.rate_at(t), spec.mu, margins)
            }
        };
        if let Some(h) = history.as_mut() {
            h.push(freq.clone());
        }
        if let Some(trigger) = stop.fires(t, &freq.bit(0), margins) {
            let record = HittingRecord {
                stopping_time: t,
                terminal_frequency: freq.get(0),
                trigger,
                certified: false,
            };
            return Ok((history, record));
        }
    }

    let record = HittingRecord {
        stopping_time: budget,
        terminal_frequency: freq.get(0),
        trigger: StopTrigger::BudgetExhausted,
        certified: false,
    };
    Ok((history, record))
}
