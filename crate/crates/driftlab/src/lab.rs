//! Experiment drivers: replica campaigns over the reduced processes and full
//! EDAs, scaling-law fits, tail-bound validation, parameter advice and
//! run-away campaigns.
//!
//! Reproducibility contract: replica `r` of sweep point `i` draws from the
//! dedicated stream `(i << 32) | r` of the master-seeded ChaCha8 generator,
//! and aggregation walks replicas in index order.  Results are therefore
//! byte-identical for a fixed config no matter how many rayon workers run.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eda::{run_eda_hitting, EdaSpec, FitnessFunction};
use crate::error::{Error, Result};
use crate::markov::{build_cga_kernel, hitting_time_distribution};
use crate::neutral::{simulate_until, NeutralProcessSpec, ProcessKind};
use crate::stats::{mean_stderr, median, power_law_fit, Z_95, Z_99_ONE_SIDED};
use crate::stopping::{HittingRecord, StopTrigger, StoppingRule};
use crate::stream::{replica_stream, sweep_stream};

/// Serializable fitness selector; closures cannot round-trip through JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FitnessName {
    Neutral,
    OneMax,
    LeadingOnes,
    WeakPreferOne { bit: usize },
    WeakPreferZero { bit: usize },
}

impl FitnessName {
    pub fn to_fitness(self) -> FitnessFunction {
        match self {
            FitnessName::Neutral => FitnessFunction::Neutral,
            FitnessName::OneMax => FitnessFunction::OneMax,
            FitnessName::LeadingOnes => FitnessFunction::LeadingOnes,
            FitnessName::WeakPreferOne { bit } => FitnessFunction::WeakPreferOne(bit),
            FitnessName::WeakPreferZero { bit } => FitnessFunction::WeakPreferZero(bit),
        }
    }
}

/// What gets simulated: a reduced one-bit process or a full EDA under an
/// explicit fitness function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProcessConfig {
    Neutral { spec: NeutralProcessSpec },
    Eda { spec: EdaSpec, fitness: FitnessName },
}

impl ProcessConfig {
    fn validate(&self) -> Result<()> {
        match self {
            ProcessConfig::Neutral { spec } => spec.validate(),
            ProcessConfig::Eda { spec, .. } => spec.validate(),
        }
    }

    fn default_budget(&self, stop: &StoppingRule) -> u64 {
        match self {
            ProcessConfig::Neutral { spec } => spec.default_budget(stop),
            ProcessConfig::Eda { spec, .. } => spec.default_budget(stop),
        }
    }
}

/// Parameter grid for scaling campaigns; each value replaces the swept field
/// of the reduced process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepGrid {
    Mu(Vec<u32>),
    Rho(Vec<f64>),
    K(Vec<u32>),
}

impl SweepGrid {
    fn is_empty(&self) -> bool {
        match self {
            SweepGrid::Mu(v) => v.is_empty(),
            SweepGrid::K(v) => v.is_empty(),
            SweepGrid::Rho(v) => v.is_empty(),
        }
    }
}

/// Declarative description of a hitting-time campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessConfig,
    pub stop: StoppingRule,
    pub replicas: u32,
    pub master_seed: u64,
    /// Iteration cap per replica; `None` uses 200 drift scales.
    #[serde(default)]
    pub budget: Option<u64>,
    /// Optional parameter grid, driven by [`run_sweep`].
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::InvalidSpec(
                "an experiment needs at least one replica".into(),
            ));
        }
        if self.budget == Some(0) {
            return Err(Error::InvalidSpec(
                "the iteration budget must be at least 1".into(),
            ));
        }
        self.process.validate()?;
        self.stop.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(Error::InvalidSpec("the sweep grid is empty".into()));
            }
            if matches!(self.process, ProcessConfig::Eda { .. }) {
                return Err(Error::InvalidSpec(
                    "sweeps drive the reduced one-bit process; configure a neutral spec"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    fn effective_budget(&self) -> u64 {
        self.budget
            .unwrap_or_else(|| self.process.default_budget(&self.stop))
    }
}

/// Aggregate of a replica campaign.
///
/// Budget-exhausted replicas are excluded from the location statistics and
/// reported on the side; `exhausted_flagged` trips when they exceed 0.1% of
/// the total, a level at which the exclusion visibly biases the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingSummary {
    pub n: u32,
    pub mean: f64,
    pub stderr: f64,
    /// Normal-approximation 95% confidence interval for the mean.
    pub ci95: [f64; 2],
    pub median: f64,
    pub budget_exhausted: u32,
    pub exhausted_flagged: bool,
    /// Certificate threshold for run-away campaigns.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certification_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples_path: Option<String>,
}

fn summarize(
    records: &[HittingRecord],
    certification_epsilon: Option<f64>,
) -> Result<HittingSummary> {
    let n = records.len() as u32;
    let exhausted = records
        .iter()
        .filter(|r| r.trigger == StopTrigger::BudgetExhausted)
        .count() as u32;
    if exhausted == n {
        return Err(Error::ExperimentFailed(format!(
            "all {n} replicas hit the iteration budget; raise the budget or relax the \
             stopping rule"
        )));
    }
    let times: Vec<f64> = records
        .iter()
        .filter(|r| r.trigger != StopTrigger::BudgetExhausted)
        .map(|r| r.stopping_time as f64)
        .collect();
    let (mean, stderr) = mean_stderr(&times);
    let half = Z_95 * stderr;
    Ok(HittingSummary {
        n,
        mean,
        stderr,
        ci95: [mean - half, mean + half],
        median: median(&times),
        budget_exhausted: exhausted,
        exhausted_flagged: exhausted as f64 > 0.001 * n as f64,
        certification_epsilon,
        samples_path: None,
    })
}

fn run_point(config: &ExperimentConfig, point: u32) -> Result<Vec<HittingRecord>> {
    let budget = config.effective_budget();
    (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(config.master_seed, sweep_stream(point, r));
            match &config.process {
                ProcessConfig::Neutral { spec } => {
                    simulate_until(spec, &config.stop, budget, &mut rng)
                }
                ProcessConfig::Eda { spec, fitness } => {
                    run_eda_hitting(spec, &fitness.to_fitness(), &config.stop, budget, &mut rng)
                }
            }
        })
        .collect()
}

/// Runs `config.replicas` independent trajectories in parallel and
/// aggregates their stopping times.
///
/// The per-replica records are returned alongside the summary so callers can
/// write sample files or compute their own statistics.
pub fn run_hitting_experiment(
    config: &ExperimentConfig,
) -> Result<(HittingSummary, Vec<HittingRecord>)> {
    config.validate()?;
    if config.sweep.is_some() {
        return Err(Error::InvalidSpec(
            "config carries a sweep grid; use run_sweep".into(),
        ));
    }
    let records = run_point(config, 0)?;
    let epsilon = match config.stop {
        StoppingRule::RunAway { epsilon, .. } => Some(epsilon),
        _ => None,
    };
    let summary = summarize(&records, epsilon)?;
    Ok((summary, records))
}

/// Summary of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// The swept parameter value (`mu`, `rho` or `K`).
    pub value: f64,
    pub summary: HittingSummary,
}

fn sweep_specs(
    base: &NeutralProcessSpec,
    sweep: &SweepGrid,
) -> Result<Vec<(f64, NeutralProcessSpec)>> {
    let mismatch = |want: &str| {
        Error::InvalidSpec(format!(
            "sweep grid over {want} does not match the configured process"
        ))
    };
    let mut points = Vec::new();
    match (sweep, &base.kind) {
        (SweepGrid::Mu(values), ProcessKind::Pbil { rho, .. }) => {
            for &mu in values {
                let spec = NeutralProcessSpec {
                    kind: ProcessKind::Pbil {
                        mu,
                        rho: rho.clone(),
                    },
                    margins: base.margins,
                };
                spec.validate()?;
                points.push((mu as f64, spec));
            }
        }
        (SweepGrid::Rho(values), ProcessKind::Pbil { mu, .. }) => {
            for &rho in values {
                let spec = NeutralProcessSpec::pbil(*mu, rho)?;
                points.push((rho, spec));
            }
        }
        (SweepGrid::K(values), ProcessKind::Cga { .. }) => {
            for &k in values {
                let spec = NeutralProcessSpec {
                    kind: ProcessKind::Cga { k },
                    margins: base.margins,
                };
                spec.validate()?;
                points.push((k as f64, spec));
            }
        }
        (SweepGrid::Mu(_), _) => return Err(mismatch("mu")),
        (SweepGrid::Rho(_), _) => return Err(mismatch("rho")),
        (SweepGrid::K(_), _) => return Err(mismatch("K")),
    }
    Ok(points)
}

/// Runs every point of the config's sweep grid.
///
/// Point `i` uses replica streams `(i << 32) | r`, so extending the grid
/// leaves the results of earlier points untouched.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("config has no sweep grid".into()))?;
    let base = match &config.process {
        ProcessConfig::Neutral { spec } => spec,
        ProcessConfig::Eda { .. } => unreachable!("validate rejects EDA sweeps"),
    };
    let epsilon = match config.stop {
        StoppingRule::RunAway { epsilon, .. } => Some(epsilon),
        _ => None,
    };
    sweep_specs(base, sweep)?
        .into_iter()
        .enumerate()
        .map(|(i, (value, spec))| {
            let point_config = ExperimentConfig {
                process: ProcessConfig::Neutral { spec },
                sweep: None,
                ..config.clone()
            };
            let records = run_point(&point_config, i as u32)?;
            let summary = summarize(&records, epsilon)?;
            Ok(SweepPoint { value, summary })
        })
        .collect()
}

/// Power-law fit `time ~ constant * parameter^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub constant: f64,
    /// Coefficient of determination of the log-log regression, in `[0, 1]`.
    pub r_squared: f64,
}

/// Least-squares fit in log-log space; needs at least three positive points.
pub fn fit_scaling_law(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let (exponent, constant, r_squared) = power_law_fit(points)?;
    Ok(ScalingFit {
        exponent,
        constant,
        r_squared,
    })
}

/// Closed-form bound on `Pr[max_{t <= horizon} |p_t - 1/2| >= gamma]` for the
/// constant-rate PBIL family (`2 exp(-gamma^2 mu / (2 rho^2 T))`) and the cGA
/// (`2 exp(-gamma^2 K^2 / (2 T))`).
pub fn tail_bound(spec: &NeutralProcessSpec, gamma: f64, horizon: u64) -> Result<f64> {
    spec.validate()?;
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::Domain(format!(
            "gamma must lie in (0, 1/2], got {gamma}"
        )));
    }
    if horizon < 1 {
        return Err(Error::Domain("the horizon must be at least 1".into()));
    }
    let t = horizon as f64;
    let exponent = match &spec.kind {
        ProcessKind::Cga { k } => {
            let k = *k as f64;
            gamma * gamma * k * k / (2.0 * t)
        }
        ProcessKind::Pbil { mu, rho } => {
            let rho = rho.constant().ok_or_else(|| {
                Error::Domain(
                    "the tail bound needs a constant learning rate; bound each schedule \
                     segment separately"
                        .into(),
                )
            })?;
            gamma * gamma * *mu as f64 / (2.0 * rho * rho * t)
        }
    };
    Ok(2.0 * (-exponent).exp())
}

/// Tail-bound check at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEntry {
    pub horizon: u64,
    pub bound: f64,
    /// Fraction of replicas that left `[1/2 - gamma, 1/2 + gamma]` by the
    /// horizon.
    pub empirical: f64,
    /// One-sided 99% confidence limits around the empirical rate.
    pub lower99: f64,
    pub upper99: f64,
    /// A bound of 1 or more carries no information.
    pub vacuous: bool,
    /// The lower confidence limit exceeds the bound.
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub gamma: f64,
    pub replicas: u32,
    pub entries: Vec<TailEntry>,
}

impl TailReport {
    pub fn any_violation(&self) -> bool {
        self.entries.iter().any(|e| e.violated)
    }
}

/// Estimates the boundary-hit probability at each horizon and compares it
/// with [`tail_bound`].
///
/// Each replica is simulated once to the largest horizon; a horizon entry is
/// flagged as violated only when the empirical lower 99% confidence limit
/// exceeds the bound, so flags are statistically meaningful rather than
/// noise.
pub fn validate_tail_bound(
    spec: &NeutralProcessSpec,
    gamma: f64,
    horizons: &[u64],
    replicas: u32,
    master_seed: u64,
) -> Result<TailReport> {
    if horizons.is_empty() {
        return Err(Error::Domain("at least one horizon is required".into()));
    }
    if replicas < 1 {
        return Err(Error::Domain("at least one replica is required".into()));
    }
    let max_h = *horizons.iter().max().expect("nonempty");
    // Validates the process parameters, gamma, the horizons and the
    // constant-rate requirement in one place.
    for &t in horizons {
        tail_bound(spec, gamma, t)?;
    }
    let stop = StoppingRule::ExitMiddle {
        lo: 0.5 - gamma,
        hi: 0.5 + gamma,
    };
    let exit_times: Vec<u64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(master_seed, sweep_stream(0, r));
            let record = simulate_until(spec, &stop, max_h, &mut rng)?;
            Ok(match record.trigger {
                StopTrigger::ExitedMiddle => record.stopping_time,
                _ => u64::MAX,
            })
        })
        .collect::<Result<_>>()?;
    let n = replicas as f64;
    let entries = horizons
        .iter()
        .map(|&t| {
            let hits = exit_times.iter().filter(|&&e| e <= t).count() as f64;
            let empirical = hits / n;
            let se = (empirical * (1.0 - empirical) / n).sqrt();
            let lower99 = (empirical - Z_99_ONE_SIDED * se).max(0.0);
            let upper99 = (empirical + Z_99_ONE_SIDED * se).min(1.0);
            let bound = tail_bound(spec, gamma, t).expect("validated above");
            let vacuous = bound >= 1.0;
            TailEntry {
                horizon: t,
                bound,
                empirical,
                lower99,
                upper99,
                vacuous,
                violated: !vacuous && lower99 > bound,
            }
        })
        .collect();
    Ok(TailReport {
        gamma,
        replicas,
        entries,
    })
}

/// Exact `Pr[T_exit <= t]`, `t = 0..=horizon`, for the reduced cGA started
/// at `1/2` with exit set `{p : |p - 1/2| >= gamma}`.
pub fn cga_exact_exit_cdf(k: u32, gamma: f64, horizon: u64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::Domain(format!(
            "gamma must lie in (0, 1/2], got {gamma}"
        )));
    }
    let kernel = build_cga_kernel(k)?;
    let targets = kernel.states_outside(0.5 - gamma, 0.5 + gamma);
    let start = kernel.state_of(0.5)?;
    hitting_time_distribution(&kernel, start, &targets, horizon)
}

/// Algorithms covered by the parameter advisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvisorAlgorithm {
    Cga,
    Pbil,
    Umda,
}

/// Smallest stabilising parameter such that all `dim` frequencies stay
/// within `gamma` of `1/2` over the whole evaluation budget with probability
/// at least `1 - delta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterAdvice {
    pub algorithm: AdvisorAlgorithm,
    /// `"K"` for the cGA, `"mu"` for the PBIL family.
    pub parameter: &'static str,
    pub value: u64,
    /// Iterations implied by the evaluation budget.
    pub iterations: u64,
    /// Real-valued lower bound before rounding up.
    pub bound: f64,
}

/// Inverts the tail bound: after a union bound over `dim` positions, keeping
/// each frequency within `gamma` of `1/2` for `T` iterations with failure
/// probability `delta` needs `K >= sqrt(2 T ln(2 dim / delta)) / gamma`
/// (cGA, rounded up to even) or `mu >= (2 rho^2 T / gamma^2) ln(2 dim /
/// delta)` (PBIL family, rounded up).
///
/// `budget_evals` counts fitness evaluations; one iteration costs `lambda`
/// of them (2 for the cGA).  `lambda` must be supplied for PBIL and UMDA,
/// `rho` for PBIL; UMDA fixes `rho = 1` and the cGA takes neither.
pub fn advise_parameters(
    algorithm: AdvisorAlgorithm,
    budget_evals: u64,
    dim: u32,
    gamma: f64,
    delta: f64,
    lambda: Option<u32>,
    rho: Option<f64>,
) -> Result<ParameterAdvice> {
    if budget_evals < 2 {
        return Err(Error::Domain(
            "the evaluation budget must cover at least one iteration (F >= 2)".into(),
        ));
    }
    if dim < 1 {
        return Err(Error::Domain("the dimension must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::Domain(format!(
            "gamma must lie in (0, 1/2], got {gamma}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "the failure probability must lie in (0, 1), got {delta}"
        )));
    }
    let log_term = (2.0 * dim as f64 / delta).ln();
    match algorithm {
        AdvisorAlgorithm::Cga => {
            if lambda.is_some_and(|l| l != 2) {
                return Err(Error::Domain(
                    "the cGA evaluates exactly two offspring per iteration".into(),
                ));
            }
            if rho.is_some() {
                return Err(Error::Domain(
                    "the cGA has no learning rate; drop rho".into(),
                ));
            }
            let t = budget_evals as f64 / 2.0;
            let bound = (2.0 * t * log_term).sqrt() / gamma;
            let mut value = (bound.ceil() as u64).max(2);
            if value % 2 == 1 {
                value += 1;
            }
            Ok(ParameterAdvice {
                algorithm,
                parameter: "K",
                value,
                iterations: budget_evals / 2,
                bound,
            })
        }
        AdvisorAlgorithm::Pbil | AdvisorAlgorithm::Umda => {
            let lambda = lambda.ok_or_else(|| {
                Error::Domain("PBIL/UMDA advice needs the offspring count lambda".into())
            })?;
            if lambda < 1 {
                return Err(Error::Domain("lambda must be at least 1".into()));
            }
            let rho = match algorithm {
                AdvisorAlgorithm::Umda => {
                    if rho.is_some_and(|r| r != 1.0) {
                        return Err(Error::Domain("UMDA replaces the whole model: rho = 1".into()));
                    }
                    1.0
                }
                _ => rho.ok_or_else(|| {
                    Error::Domain("PBIL advice needs the learning rate rho".into())
                })?,
            };
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::Domain(format!(
                    "rho must lie in (0, 1], got {rho}"
                )));
            }
            let t = budget_evals as f64 / lambda as f64;
            let bound = 2.0 * rho * rho * t / (gamma * gamma) * log_term;
            let value = (bound.ceil() as u64).max(1);
            Ok(ParameterAdvice {
                algorithm,
                parameter: "mu",
                value,
                iterations: budget_evals / lambda as u64,
                bound,
            })
        }
    }
}

/// Run-away entry-time campaign for the constant-rate PBIL family.
///
/// `rho = 1` is rejected: full replacement absorbs in finite time and the
/// run-away band degenerates.  The certificate threshold `epsilon` is
/// recorded in the summary.
pub fn runaway_campaign(
    mu: u32,
    rho: f64,
    c: f64,
    epsilon: f64,
    replicas: u32,
    master_seed: u64,
    budget: Option<u64>,
) -> Result<(HittingSummary, Vec<HittingRecord>)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "run-away campaigns need 0 < rho < 1, got rho={rho}"
        )));
    }
    let spec = NeutralProcessSpec::pbil(mu, rho)?;
    let config = ExperimentConfig {
        process: ProcessConfig::Neutral { spec },
        stop: StoppingRule::RunAway { c, epsilon },
        replicas,
        master_seed,
        budget,
        sweep: None,
    };
    run_hitting_experiment(&config)
}

/// Writes per-replica samples as CSV.  Floats use the shortest round-trip
/// representation, so files are byte-stable across runs and thread counts.
pub fn write_samples_csv<W: io::Write>(mut w: W, records: &[HittingRecord]) -> io::Result<()> {
    writeln!(w, "replica_index,stopping_time,terminal_frequency,trigger")?;
    for (i, r) in records.iter().enumerate() {
        writeln!(
            w,
            "{},{},{:?},{}",
            i,
            r.stopping_time,
            r.terminal_frequency,
            r.trigger.token()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neutral_config(
        spec: NeutralProcessSpec,
        stop: StoppingRule,
        replicas: u32,
        master_seed: u64,
    ) -> ExperimentConfig {
        ExperimentConfig {
            process: ProcessConfig::Neutral { spec },
            stop,
            replicas,
            master_seed,
            budget: None,
            sweep: None,
        }
    }

    #[test]
    fn two_step_chain_matches_exact_mean() {
        let config = neutral_config(
            NeutralProcessSpec::cga(2).unwrap(),
            StoppingRule::Absorption,
            20_000,
            7,
        );
        let (summary, records) = run_hitting_experiment(&config).unwrap();
        assert_eq!(records.len(), 20_000);
        assert_eq!(summary.budget_exhausted, 0);
        assert!(!summary.exhausted_flagged);
        assert!(
            (summary.mean - 2.0).abs() < 0.05,
            "mean {} off the exact value 2",
            summary.mean
        );
        assert!(summary.ci95[0] <= summary.mean && summary.mean <= summary.ci95[1]);
        assert!(summary.median >= 1.0);
        assert!(summary.certification_epsilon.is_none());
    }

    #[test]
    fn instant_absorption_has_zero_variance() {
        let config = neutral_config(
            NeutralProcessSpec::umda(1).unwrap(),
            StoppingRule::Absorption,
            500,
            3,
        );
        let (summary, _) = run_hitting_experiment(&config).unwrap();
        assert_eq!(summary.mean, 1.0);
        assert_eq!(summary.stderr, 0.0);
        assert_eq!(summary.ci95, [1.0, 1.0]);
        assert_eq!(summary.median, 1.0);
    }

    #[test]
    fn exhausted_replicas_are_excluded_and_flagged() {
        // K=2 from 1/2 absorbs in one step with probability 1/2; with a
        // budget of 1 the rest exhaust, so the surviving mean is exactly 1.
        let mut config = neutral_config(
            NeutralProcessSpec::cga(2).unwrap(),
            StoppingRule::Absorption,
            2_000,
            11,
        );
        config.budget = Some(1);
        let (summary, _) = run_hitting_experiment(&config).unwrap();
        assert_eq!(summary.mean, 1.0);
        assert!(summary.exhausted_flagged);
        assert!(
            (800..1200).contains(&summary.budget_exhausted),
            "exhausted count {} far from 1000",
            summary.budget_exhausted
        );
    }

    #[test]
    fn fully_exhausted_experiment_is_an_error() {
        // K=8 cannot absorb from 4/8 in a single step.
        let mut config = neutral_config(
            NeutralProcessSpec::cga(8).unwrap(),
            StoppingRule::Absorption,
            50,
            5,
        );
        config.budget = Some(1);
        match run_hitting_experiment(&config) {
            Err(Error::ExperimentFailed(_)) => {}
            other => panic!("expected ExperimentFailed, got {other:?}"),
        }
    }

    #[test]
    fn fit_recovers_quadratic_law() {
        let points: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0, 64.0]
            .iter()
            .map(|&k| (k, 3.0 * k * k))
            .collect();
        let fit = fit_scaling_law(&points).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-9);
        assert!((fit.constant - 3.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn advice_matches_the_closed_forms() {
        let cga = advise_parameters(
            AdvisorAlgorithm::Cga,
            10_000,
            100,
            0.25,
            0.1,
            None,
            None,
        )
        .unwrap();
        assert_eq!(cga.parameter, "K");
        assert_eq!(cga.value, 1104);
        assert_eq!(cga.iterations, 5_000);
        assert_eq!(cga.value % 2, 0);
        assert!(cga.value as f64 >= cga.bound && ((cga.value - 2) as f64) < cga.bound);

        // T = F / lambda = 100 iterations at rho = 1.
        let umda = advise_parameters(
            AdvisorAlgorithm::Umda,
            2_000,
            10,
            0.25,
            0.1,
            Some(20),
            None,
        )
        .unwrap();
        assert_eq!(umda.parameter, "mu");
        assert_eq!(umda.value, 16_955);
        let expected = 2.0 * 100.0 / (0.25 * 0.25) * (20.0f64 / 0.1).ln();
        assert!((umda.bound - expected).abs() < 1e-9);
        assert!(umda.value as f64 >= umda.bound && ((umda.value - 1) as f64) < umda.bound);

        let pbil = advise_parameters(
            AdvisorAlgorithm::Pbil,
            2_000,
            10,
            0.25,
            0.1,
            Some(20),
            Some(0.5),
        )
        .unwrap();
        // Quartering rho^2 quarters the requirement.
        assert!((pbil.bound - expected / 4.0).abs() < 1e-6);
    }

    #[test]
    fn advised_size_never_grows_with_delta() {
        let deltas = [0.01, 0.05, 0.1, 0.3, 0.7];
        let mut last = u64::MAX;
        for &delta in &deltas {
            let advice = advise_parameters(
                AdvisorAlgorithm::Cga,
                10_000,
                100,
                0.25,
                delta,
                None,
                None,
            )
            .unwrap();
            assert!(
                advice.value <= last,
                "delta {delta} advised {} after {last}",
                advice.value
            );
            last = advice.value;
        }
    }

    #[test]
    fn advice_rejects_bad_inputs() {
        let cga = |f, d, g, dl| advise_parameters(AdvisorAlgorithm::Cga, f, d, g, dl, None, None);
        assert!(cga(1, 10, 0.25, 0.1).is_err());
        assert!(cga(100, 0, 0.25, 0.1).is_err());
        assert!(cga(100, 10, 0.0, 0.1).is_err());
        assert!(cga(100, 10, 0.6, 0.1).is_err());
        assert!(cga(100, 10, 0.25, 1.0).is_err());
        assert!(
            advise_parameters(AdvisorAlgorithm::Cga, 100, 10, 0.25, 0.1, None, Some(0.5)).is_err()
        );
        assert!(
            advise_parameters(AdvisorAlgorithm::Pbil, 100, 10, 0.25, 0.1, Some(4), None).is_err()
        );
        assert!(
            advise_parameters(AdvisorAlgorithm::Pbil, 100, 10, 0.25, 0.1, None, Some(0.5))
                .is_err()
        );
        assert!(advise_parameters(
            AdvisorAlgorithm::Umda,
            100,
            10,
            0.25,
            0.1,
            Some(4),
            Some(0.5)
        )
        .is_err());
    }

    #[test]
    fn tail_report_matches_closed_form() {
        let spec = NeutralProcessSpec::cga(16).unwrap();
        let report = validate_tail_bound(&spec, 0.25, &[4, 8, 11, 12], 20_000, 11).unwrap();
        assert_eq!(report.entries.len(), 4);
        let at_8 = &report.entries[1];
        assert_eq!(at_8.horizon, 8);
        // gamma^2 K^2 / (2 T) = 1 at T = 8, so the bound is 2/e.
        assert!((at_8.bound - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!(!at_8.vacuous);
        assert!(!report.entries[2].vacuous, "bound at T=11 is 0.966 < 1");
        assert!(report.entries[3].vacuous, "bound at T=12 exceeds 1");
        assert!(!report.any_violation());
        for entry in &report.entries {
            assert!(entry.lower99 <= entry.empirical && entry.empirical <= entry.upper99);
        }
        for pair in report.entries.windows(2) {
            assert!(pair[0].empirical <= pair[1].empirical);
        }
    }

    #[test]
    fn tail_bound_requires_constant_rate() {
        let spec = NeutralProcessSpec::ce(
            8,
            crate::eda::RateSchedule::Table {
                values: vec![0.5, 0.25],
                tail: 0.1,
            },
        )
        .unwrap();
        assert!(tail_bound(&spec, 0.25, 10).is_err());
        assert!(validate_tail_bound(&spec, 0.25, &[10], 10, 0).is_err());
    }

    #[test]
    fn exact_exit_cdf_stays_under_bound() {
        let spec = NeutralProcessSpec::cga(16).unwrap();
        let cdf = cga_exact_exit_cdf(16, 0.25, 200).unwrap();
        assert_eq!(cdf.len(), 201);
        assert_eq!(cdf[0], 0.0);
        for t in 1..=200u64 {
            let bound = tail_bound(&spec, 0.25, t).unwrap();
            assert!(
                cdf[t as usize] <= bound + 1e-12,
                "exact exit probability {} above bound {} at t={t}",
                cdf[t as usize],
                bound
            );
            assert!(cdf[t as usize] >= cdf[t as usize - 1]);
        }
    }

    #[test]
    fn runaway_campaign_records_the_certificate() {
        let (summary, records) = runaway_campaign(16, 0.5, 0.6, 1e-9, 2_000, 3, None).unwrap();
        assert_eq!(summary.certification_epsilon, Some(1e-9));
        assert_eq!(summary.budget_exhausted, 0);
        assert!(summary.mean > 1.0);
        for r in &records {
            assert_eq!(r.trigger, StopTrigger::RanAway);
            assert!(r.certified);
        }
    }

    #[test]
    fn runaway_campaign_rejects_degenerate_parameters() {
        assert!(runaway_campaign(16, 1.0, 0.6, 1e-9, 10, 0, None).is_err());
        assert!(runaway_campaign(16, 0.5, 0.5, 1e-9, 10, 0, None).is_err());
        assert!(runaway_campaign(16, 0.5, 0.8, 1e-9, 10, 0, None).is_err());
        assert!(runaway_campaign(16, 0.5, 0.6, 0.0, 10, 0, None).is_err());
    }

    #[test]
    fn sweep_runs_each_point_reproducibly() {
        let mut config = neutral_config(
            NeutralProcessSpec::cga(2).unwrap(),
            StoppingRule::Absorption,
            500,
            21,
        );
        config.sweep = Some(SweepGrid::K(vec![2, 4]));
        let points = run_sweep(&config).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].value, 2.0);
        assert_eq!(points[1].value, 4.0);
        assert!(points[0].summary.mean > 0.0);
        // Larger K drifts more slowly.
        assert!(points[1].summary.mean > points[0].summary.mean);
        let again = run_sweep(&config).unwrap();
        assert_eq!(points, again);
    }

    #[test]
    fn sweep_rejects_mismatched_grids() {
        let mut config = neutral_config(
            NeutralProcessSpec::cga(2).unwrap(),
            StoppingRule::Absorption,
            10,
            0,
        );
        config.sweep = Some(SweepGrid::Mu(vec![2, 4]));
        assert!(run_sweep(&config).is_err());
        config.sweep = Some(SweepGrid::K(vec![]));
        assert!(run_sweep(&config).is_err());
        let mut eda_config = ExperimentConfig {
            process: ProcessConfig::Eda {
                spec: crate::eda::EdaSpec::cga(4, 1).unwrap(),
                fitness: FitnessName::Neutral,
            },
            stop: StoppingRule::Absorption,
            replicas: 10,
            master_seed: 0,
            budget: None,
            sweep: Some(SweepGrid::K(vec![2, 4])),
        };
        assert!(run_sweep(&eda_config).is_err());
        eda_config.sweep = None;
        assert!(run_hitting_experiment(&eda_config).is_ok());
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let config = neutral_config(
            NeutralProcessSpec::pbil(8, 0.25).unwrap(),
            StoppingRule::run_away_default(),
            100,
            42,
        );
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);

        let bad = json.replacen("\"replicas\"", "\"replcias\"", 1);
        let err = serde_json::from_str::<ExperimentConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        assert!(err.line() > 0);
    }

    #[test]
    fn experiments_are_bitwise_reproducible_across_pools() {
        let config = neutral_config(
            NeutralProcessSpec::cga(8).unwrap(),
            StoppingRule::exit_middle_default(),
            2_000,
            9,
        );
        let lone = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_hitting_experiment(&config))
            .unwrap();
        let wide = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_hitting_experiment(&config))
            .unwrap();
        assert_eq!(lone.1, wide.1);
        assert_eq!(
            serde_json::to_string(&lone.0).unwrap(),
            serde_json::to_string(&wide.0).unwrap()
        );
    }

    #[test]
    fn samples_csv_is_byte_stable() {
        let records = vec![
            HittingRecord {
                stopping_time: 3,
                terminal_frequency: 0.5,
                trigger: StopTrigger::ExitedMiddle,
                certified: false,
            },
            HittingRecord {
                stopping_time: 17,
                terminal_frequency: 1.0,
                trigger: StopTrigger::Absorbed,
                certified: false,
            },
        ];
        let mut out = Vec::new();
        write_samples_csv(&mut out, &records).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "replica_index,stopping_time,terminal_frequency,trigger\n\
             0,3,0.5,exited_middle\n\
             1,17,1.0,absorbed\n"
        );
    }

    #[test]
    fn config_validation_catches_basics() {
        let mut config = neutral_config(
            NeutralProcessSpec::cga(4).unwrap(),
            StoppingRule::Absorption,
            0,
            0,
        );
        assert!(config.validate().is_err());
        config.replicas = 10;
        config.budget = Some(0);
        assert!(config.validate().is_err());
        config.budget = None;
        assert!(config.validate().is_ok());
        assert!(run_sweep(&config).is_err(), "no sweep grid configured");
    }
}
