//! Reduced one-bit processes for a neutral bit.
//!
//! When a bit has no influence on fitness, selection is independent of its
//! sampled values, so the bit's frequency evolves autonomously:
//!
//! * PBIL family: `p' = (1 - rho) p + (rho / mu) Bin(mu, p)`
//! * cGA: `p' = p +- 1/K`, each with probability `p (1 - p)`
//!
//! Both are martingales, which is exactly why the frequency drifts to the
//! boundary without any selective pressure.  Simulating the reduced process
//! instead of the full EDA makes hitting-time campaigns cheap, and the
//! `marginal equivalence` integration tests confirm the two agree in
//! distribution.
//!
//! Fractional learning rates approach 0/1 only in the limit, so "the bit is
//! lost" is operationalized as a run-away: the first time `p` enters
//! `[0, c rho / mu]` (or the mirrored band at 1) of a streak that then keeps
//! sampling the all-zero (all-one) outcome until the union bound
//! `mu p / rho <= epsilon` certifies that any later recovery has negligible
//! probability.  If a contradicting sample arrives first, the streak is
//! discarded and detection starts over.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eda::RateSchedule;
use crate::error::{Error, Result};
use crate::stopping::{Frequency, HittingRecord, StopTrigger, StoppingRule};
use crate::stream::sample_binomial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProcessKind {
    /// Covers PBIL, UMDA (`rho = 1`), lambda-MMAS (`mu = 1`) and CE
    /// (rate schedule).
    Pbil { mu: u32, rho: RateSchedule },
    Cga { k: u32 },
}

/// One-bit process specification, mirroring the parameter constraints of the
/// full EDA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutralProcessSpec {
    pub kind: ProcessKind,
    /// Margin denominator `D`; frequencies are clamped to `[1/D, 1 - 1/D]`.
    pub margins: Option<u32>,
}

impl NeutralProcessSpec {
    pub fn pbil(mu: u32, rho: f64) -> Result<Self> {
        let spec = NeutralProcessSpec {
            kind: ProcessKind::Pbil {
                mu,
                rho: RateSchedule::Constant(rho),
            },
            margins: None,
        };
        spec.validate().map(|()| spec)
    }

    pub fn umda(mu: u32) -> Result<Self> {
        Self::pbil(mu, 1.0)
    }

    pub fn lambda_mmas(rho: f64) -> Result<Self> {
        Self::pbil(1, rho)
    }

    pub fn ce(mu: u32, rho: RateSchedule) -> Result<Self> {
        let spec = NeutralProcessSpec {
            kind: ProcessKind::Pbil { mu, rho },
            margins: None,
        };
        spec.validate().map(|()| spec)
    }

    pub fn cga(k: u32) -> Result<Self> {
        let spec = NeutralProcessSpec {
            kind: ProcessKind::Cga { k },
            margins: None,
        };
        spec.validate().map(|()| spec)
    }

    pub fn with_margins(mut self, d: u32) -> Result<Self> {
        self.margins = Some(d);
        self.validate().map(|()| self)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ProcessKind::Pbil { mu, rho } => {
                if *mu < 1 {
                    return Err(Error::InvalidSpec("mu must be at least 1".into()));
                }
                rho.validate()?;
            }
            ProcessKind::Cga { k } => {
                if *k < 2 || k % 2 != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "cGA needs even K >= 2 so that 1/2 lies on the grid, got K={k}"
                    )));
                }
            }
        }
        if let Some(d) = self.margins {
            if d < 2 {
                return Err(Error::InvalidSpec(
                    "margins at 1/D and 1-1/D need D >= 2".into(),
                ));
            }
            match &self.kind {
                ProcessKind::Cga { k } => {
                    if k % d != 0 {
                        return Err(Error::InvalidSpec(format!(
                            "cGA margins require D | K, got K={k}, D={d}"
                        )));
                    }
                }
                ProcessKind::Pbil { mu, rho } => {
                    if rho.min_rate() == 1.0 && mu % d != 0 {
                        return Err(Error::InvalidSpec(format!(
                            "UMDA margins require D | mu, got mu={mu}, D={d}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Starting state `p = 1/2`, exact where the grid admits it.
    pub fn initial(&self) -> Frequency {
        match &self.kind {
            ProcessKind::Cga { k } => Frequency::Grid { num: k / 2, den: *k },
            ProcessKind::Pbil { mu, rho } if rho.constant() == Some(1.0) && mu % 2 == 0 => {
                Frequency::Grid { num: mu / 2, den: *mu }
            }
            _ => Frequency::Real(0.5),
        }
    }

    fn exact_grid(&self) -> bool {
        match &self.kind {
            ProcessKind::Cga { .. } => true,
            ProcessKind::Pbil { rho, .. } => rho.min_rate() == 1.0,
        }
    }

    /// `K^2` for the cGA, `mu / rho_min^2` for the PBIL family.
    pub fn theta_scale(&self) -> f64 {
        match &self.kind {
            ProcessKind::Cga { k } => (*k as f64) * (*k as f64),
            ProcessKind::Pbil { mu, rho } => {
                let r = rho.min_rate();
                *mu as f64 / (r * r)
            }
        }
    }

    /// 200 times the drift scale, see [`crate::eda::EdaSpec::default_budget`].
    pub fn default_budget(&self, stop: &StoppingRule) -> u64 {
        match *stop {
            StoppingRule::Horizon(t) => t.max(1),
            _ => (200.0 * self.theta_scale()).ceil() as u64,
        }
    }
}

/// One step of the reduced PBIL process.
pub fn pbil_neutral_step<R: Rng + ?Sized>(p: f64, mu: u32, rho: f64, rng: &mut R) -> f64 {
    let y = sample_binomial(rng, mu as u64, p);
    (1.0 - rho) * p + rho * y as f64 / mu as f64
}

/// One step of the reduced cGA process on the numerator grid: up or down by
/// one, each with probability `p (1 - p)`.
pub fn cga_neutral_step<R: Rng + ?Sized>(num: u32, k: u32, rng: &mut R) -> u32 {
    debug_assert!(num <= k);
    let pq = (num as u64 * (k - num) as u64) as f64 / (k as f64 * k as f64);
    let u: f64 = rng.gen();
    if u < pq {
        num + 1
    } else if u < 2.0 * pq {
        num - 1
    } else {
        num
    }
}

/// Union bound certificate that a low frequency never recovers: summing the
/// per-step probability of sampling a one over the entire future gives
/// `mu p / rho`; once that is below `epsilon` the streak is accepted.
/// Symmetric runs at the upper boundary pass `1 - p`.
pub fn certify_runaway(p: f64, mu: u32, rho: f64, epsilon: f64) -> bool {
    if p <= 0.0 {
        return true;
    }
    if rho >= 1.0 {
        return false;
    }
    mu as f64 * p / rho <= epsilon
}

/// Detects certified run-aways from a stream of (sample, new frequency)
/// observations.  A streak starts when the frequency enters the band
/// `[0, c rho / mu]` (or its mirror image), is discarded on any sample the
/// boundary regime contradicts, and is certified once the recovery bound
/// drops below `epsilon`.  The reported time is the streak's entry time.
#[derive(Debug, Clone)]
struct RunAwayTracker {
    mu: u32,
    rho: f64,
    threshold: f64,
    epsilon: f64,
    streak: Option<(u64, bool)>,
}

impl RunAwayTracker {
    fn new(mu: u32, rho: f64, c: f64, epsilon: f64) -> Self {
        RunAwayTracker {
            mu,
            rho,
            threshold: c * rho / mu as f64,
            epsilon,
            streak: None,
        }
    }

    /// Feed the sample drawn at time `t` and the resulting frequency.
    /// Returns the certified entry time once the run-away is confirmed.
    fn observe(&mut self, t: u64, ones_sampled: u64, p_new: f64) -> Option<u64> {
        if let Some((_, high)) = self.streak {
            let consistent = if high {
                ones_sampled == self.mu as u64
            } else {
                ones_sampled == 0
            };
            if !consistent {
                self.streak = None;
            }
        }
        if self.streak.is_none() {
            if p_new <= self.threshold {
                self.streak = Some((t, false));
            } else if p_new >= 1.0 - self.threshold {
                self.streak = Some((t, true));
            }
        }
        if let Some((entry, high)) = self.streak {
            let q = if high { 1.0 - p_new } else { p_new };
            if certify_runaway(q, self.mu, self.rho, self.epsilon) {
                return Some(entry);
            }
        }
        None
    }
}

/// Simulates the reduced process from `p = 1/2` until the stopping rule
/// fires or the budget runs out (reported, never silently truncated).
pub fn simulate_until<R: Rng + ?Sized>(
    spec: &NeutralProcessSpec,
    stop: &StoppingRule,
    budget: u64,
    rng: &mut R,
) -> Result<HittingRecord> {
    spec.validate()?;
    stop.validate()?;
    if let StoppingRule::RunAway { c, epsilon } = *stop {
        return simulate_runaway(spec, c, epsilon, budget, rng);
    }
    match stop {
        StoppingRule::Absorption if !spec.exact_grid() => {
            return Err(Error::UnsupportedStop(
                "fractional learning rates never reach 0/1 exactly; use run-away detection"
                    .into(),
            ));
        }
        StoppingRule::MarginHit if spec.margins.is_none() => {
            return Err(Error::UnsupportedStop(
                "margin-hit stopping requires margins to be enabled".into(),
            ));
        }
        _ => {}
    }
    if matches!(stop, StoppingRule::Horizon(0)) {
        return Ok(HittingRecord {
            stopping_time: 0,
            terminal_frequency: spec.initial().value(),
            trigger: StopTrigger::Horizon,
            certified: false,
        });
    }
    if budget < 1 {
        return Err(Error::InvalidSpec("iteration budget must be at least 1".into()));
    }

    let margins = spec.margins;
    let mut state = spec.initial();
    for t in 1..=budget {
        state = step(spec, &state, t, rng);
        if let Some(trigger) = stop.fires(t, &state, margins) {
            return Ok(HittingRecord {
                stopping_time: t,
                terminal_frequency: state.value(),
                trigger,
                certified: false,
            });
        }
    }
    Ok(HittingRecord {
        stopping_time: budget,
        terminal_frequency: state.value(),
        trigger: StopTrigger::BudgetExhausted,
        certified: false,
    })
}

fn step<R: Rng + ?Sized>(
    spec: &NeutralProcessSpec,
    state: &Frequency,
    t: u64,
    rng: &mut R,
) -> Frequency {
    match &spec.kind {
        ProcessKind::Cga { k } => {
            let num = match state {
                Frequency::Grid { num, .. } => *num,
                Frequency::Real(_) => unreachable!("cGA state stays on the grid"),
            };
            let moved = cga_neutral_step(num, *k, rng);
            let clamped = match spec.margins {
                Some(d) => moved.clamp(k / d, k - k / d),
                None => moved,
            };
            Frequency::Grid { num: clamped, den: *k }
        }
        ProcessKind::Pbil { mu, rho } => {
            let r = rho.rate_at(t);
            let p = state.value();
            let grid_ok = spec.margins.map_or(true, |d| mu % d == 0);
            if r == 1.0 && grid_ok {
                let y = sample_binomial(rng, *mu as u64, p) as u32;
                let clamped = match spec.margins {
                    Some(d) => y.clamp(mu / d, mu - mu / d),
                    None => y,
                };
                Frequency::Grid { num: clamped, den: *mu }
            } else {
                let y = sample_binomial(rng, *mu as u64, p);
                let next = (1.0 - r) * p + r * y as f64 / *mu as f64;
                let clamped = match spec.margins {
                    Some(d) => next.clamp(1.0 / d as f64, 1.0 - 1.0 / d as f64),
                    None => next,
                };
                Frequency::Real(clamped)
            }
        }
    }
}

fn simulate_runaway<R: Rng + ?Sized>(
    spec: &NeutralProcessSpec,
    c: f64,
    epsilon: f64,
    budget: u64,
    rng: &mut R,
) -> Result<HittingRecord> {
    let (mu, rho) = match &spec.kind {
        ProcessKind::Pbil { mu, rho } => match rho.constant() {
            Some(r) if r < 1.0 => (*mu, r),
            Some(_) => {
                return Err(Error::UnsupportedStop(
                    "rho = 1 reaches the boundary exactly; use absorption".into(),
                ))
            }
            None => {
                return Err(Error::UnsupportedStop(
                    "run-away detection assumes a constant learning rate".into(),
                ))
            }
        },
        ProcessKind::Cga { .. } => {
            return Err(Error::UnsupportedStop(
                "the cGA reaches the boundary exactly; use absorption".into(),
            ))
        }
    };
    if budget < 1 {
        return Err(Error::InvalidSpec("iteration budget must be at least 1".into()));
    }

    let mut tracker = RunAwayTracker::new(mu, rho, c, epsilon);
    let mut p = 0.5;
    for t in 1..=budget {
        let y = sample_binomial(rng, mu as u64, p);
        p = (1.0 - rho) * p + rho * y as f64 / mu as f64;
        if let Some(d) = spec.margins {
            p = p.clamp(1.0 / d as f64, 1.0 - 1.0 / d as f64);
        }
        if let Some(entry) = tracker.observe(t, y, p) {
            return Ok(HittingRecord {
                stopping_time: entry,
                terminal_frequency: p,
                trigger: StopTrigger::RanAway,
                certified: true,
            });
        }
    }
    Ok(HittingRecord {
        stopping_time: budget,
        terminal_frequency: p,
        trigger: StopTrigger::BudgetExhausted,
        certified: false,
    })
}

/// Frequency of the reduced process after exactly `t` steps.
pub fn frequency_after<R: Rng + ?Sized>(
    spec: &NeutralProcessSpec,
    t: u64,
    rng: &mut R,
) -> Result<f64> {
    simulate_until(spec, &StoppingRule::Horizon(t), t.max(1), rng)
        .map(|record| record.terminal_frequency)
}
