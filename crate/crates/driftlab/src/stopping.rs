//! Stopping rules for frequency trajectories and the records they produce.
//!
//! A rule watches a single tracked frequency (the first bit by convention).
//! Grid-valued processes are compared through their integer numerators, so
//! absorption and margin hits are exact rather than float-threshold events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tracked sampling frequency, either on an exact grid `num/den` or a
/// plain double (fractional learning rates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    Grid { num: u32, den: u32 },
    Real(f64),
}

impl Frequency {
    pub fn value(&self) -> f64 {
        match *self {
            Frequency::Grid { num, den } => num as f64 / den as f64,
            Frequency::Real(p) => p,
        }
    }

    /// Exact absorption test: frequency is 0 or 1.
    pub fn is_absorbed(&self) -> bool {
        match *self {
            Frequency::Grid { num, den } => num == 0 || num == den,
            Frequency::Real(p) => p == 0.0 || p == 1.0,
        }
    }

    /// Exact margin test for margins at `1/d` and `1 - 1/d`.
    pub fn at_margin(&self, d: u32) -> bool {
        match *self {
            Frequency::Grid { num, den } => {
                debug_assert_eq!(den % d, 0, "margin off the frequency grid");
                let m = den / d;
                num == m || num == den - m
            }
            Frequency::Real(p) => {
                let m = 1.0 / d as f64;
                p <= m || p >= 1.0 - m
            }
        }
    }
}

/// When a trajectory stops being simulated.
///
/// `RunAway` is stateful (it certifies that no future sample can flip the
/// bit) and is interpreted by the reduced-process simulator; the remaining
/// rules are pointwise predicates on the tracked frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum StoppingRule {
    /// Stop when the frequency reaches 0 or 1 exactly.
    Absorption,
    /// Stop on first exit from the open interval `(lo, hi)`; hitting either
    /// endpoint counts as an exit.
    ExitMiddle { lo: f64, hi: f64 },
    /// Stop when the frequency reaches a margin value `1/D` or `1 - 1/D`.
    MarginHit,
    /// Stop at the entry time of a certified run-away: the frequency drops
    /// to `c * rho / mu` (or the mirrored upper threshold) and afterwards no
    /// sample ever flips the bit, certified once the residual flip
    /// probability is at most `epsilon`.
    RunAway { c: f64, epsilon: f64 },
    /// Stop after exactly `T` iterations.
    Horizon(u64),
}

impl StoppingRule {
    /// Standard middle range used by the hitting-time lower bounds.
    pub fn exit_middle_default() -> Self {
        StoppingRule::ExitMiddle { lo: 0.25, hi: 0.75 }
    }

    /// Run-away detection with the default band factor and certificate
    /// threshold.
    pub fn run_away_default() -> Self {
        StoppingRule::RunAway { c: 0.6, epsilon: 1e-9 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::ExitMiddle { lo, hi } => {
                if !(lo >= 0.0 && lo < hi && hi <= 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "exit-middle bounds must satisfy 0 <= lo < hi <= 1, got lo={lo}, hi={hi}"
                    )));
                }
            }
            StoppingRule::RunAway { c, epsilon } => {
                let upper = 0.5f64.sqrt();
                if !(c > 0.5 && c < upper) {
                    return Err(Error::InvalidSpec(format!(
                        "run-away constant c must lie strictly between 1/2 and 1/sqrt(2), got {c}"
                    )));
                }
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "run-away certification level must lie in (0, 1), got {epsilon}"
                    )));
                }
            }
            StoppingRule::Absorption | StoppingRule::MarginHit | StoppingRule::Horizon(_) => {}
        }
        Ok(())
    }

    /// Evaluates the pointwise rules after the update at iteration `t`.
    ///
    /// Returns `None` for `RunAway`; its phase logic lives in the simulator.
    /// `margins` carries the margin denominator `D` when margins are active.
    pub fn fires(&self, t: u64, freq: &Frequency, margins: Option<u32>) -> Option<StopTrigger> {
        match *self {
            StoppingRule::Absorption => freq.is_absorbed().then_some(StopTrigger::Absorbed),
            StoppingRule::ExitMiddle { lo, hi } => {
                let p = freq.value();
                (p <= lo || p >= hi).then_some(StopTrigger::ExitedMiddle)
            }
            StoppingRule::MarginHit => match margins {
                Some(d) => freq.at_margin(d).then_some(StopTrigger::MarginHit),
                None => None,
            },
            StoppingRule::RunAway { .. } => None,
            StoppingRule::Horizon(horizon) => (t >= horizon).then_some(StopTrigger::Horizon),
        }
    }
}

/// Why a trajectory stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopTrigger {
    Absorbed,
    ExitedMiddle,
    MarginHit,
    RanAway,
    Horizon,
    BudgetExhausted,
}

impl StopTrigger {
    /// Stable token used in CSV sample files.
    pub fn token(&self) -> &'static str {
        match self {
            StopTrigger::Absorbed => "absorbed",
            StopTrigger::ExitedMiddle => "exited_middle",
            StopTrigger::MarginHit => "margin_hit",
            StopTrigger::RanAway => "ran_away",
            StopTrigger::Horizon => "horizon",
            StopTrigger::BudgetExhausted => "budget_exhausted",
        }
    }
}

/// Outcome of one simulated trajectory.
///
/// `stopping_time` is at least 1 unless the rule is `Horizon(0)`: rules are
/// evaluated after each update, never on the initial vector.  For run-away
/// records the stopping time is the entry time into the boundary region of
/// the certified phase, while `terminal_frequency` is the frequency at
/// certification.  `certified` is only ever true for run-away records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub stopping_time: u64,
    pub terminal_frequency: f64,
    pub trigger: StopTrigger,
    pub certified: bool,
}
