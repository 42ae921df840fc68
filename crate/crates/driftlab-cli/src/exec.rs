//! Subcommand execution: assemble configs from files and flag overrides,
//! run the library, emit one-line summaries plus JSON/CSV artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::Rng;

use driftlab::dominance::{multistep_dominance_check, DominanceMode};
use driftlab::eda::{EdaSpec, FitnessFunction};
use driftlab::lab::{
    advise_parameters, cga_exact_exit_cdf, fit_scaling_law, run_hitting_experiment, run_sweep,
    tail_bound, AdvisorAlgorithm, ExperimentConfig, HittingSummary, ProcessConfig, SweepGrid,
    SweepPoint,
};
use driftlab::markov::{
    build_cga_kernel, build_umda_kernel, exit_time_from_interval, expected_absorption_time,
    TransitionKernel,
};
use driftlab::moments::{cga_conditional_moments, pbil_conditional_moments, check_sqrt_bound};
use driftlab::neutral::{NeutralProcessSpec, ProcessKind};
use driftlab::stopping::{HittingRecord, StoppingRule};
use driftlab::stream::replica_stream;

use crate::args::*;
use crate::report::*;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Exact(args) => exact(args),
        Command::Scaling(args) => scaling(args),
        Command::Tailcheck(args) => tailcheck(args),
        Command::Runaway(args) => runaway(args),
        Command::Dominance(args) => dominance(args),
        Command::Advise(args) => advise(args),
        Command::MomentsCheck(args) => moments_check(args),
    }
}

fn neutral_spec(
    algo: AlgoArg,
    k: Option<u32>,
    mu: Option<u32>,
    rho: Option<f64>,
    margins: Option<u32>,
) -> Result<NeutralProcessSpec> {
    let spec = match algo {
        AlgoArg::Cga => {
            let k = k.ok_or_else(|| anyhow!("--K is required for --algo cga"))?;
            NeutralProcessSpec::cga(k)?
        }
        AlgoArg::Umda => {
            let mu = mu.ok_or_else(|| anyhow!("--mu is required for --algo umda"))?;
            if rho.is_some_and(|r| r != 1.0) {
                bail!("--rho must be 1 for UMDA; drop the flag or use --algo pbil");
            }
            NeutralProcessSpec::umda(mu)?
        }
        AlgoArg::Pbil => {
            let mu = mu.ok_or_else(|| anyhow!("--mu is required for --algo pbil"))?;
            let rho = rho.ok_or_else(|| anyhow!("--rho is required for --algo pbil"))?;
            NeutralProcessSpec::pbil(mu, rho)?
        }
        AlgoArg::LambdaMmas => {
            let rho = rho.ok_or_else(|| anyhow!("--rho is required for --algo lambda-mmas"))?;
            NeutralProcessSpec::lambda_mmas(rho)?
        }
    };
    Ok(match margins {
        Some(d) => spec.with_margins(d)?,
        None => spec,
    })
}

fn stop_rule(
    stop: StopArg,
    horizon: Option<u64>,
    lo: Option<f64>,
    hi: Option<f64>,
) -> Result<StoppingRule> {
    Ok(match stop {
        StopArg::Absorption => StoppingRule::Absorption,
        StopArg::ExitMiddle => StoppingRule::ExitMiddle {
            lo: lo.unwrap_or(0.25),
            hi: hi.unwrap_or(0.75),
        },
        StopArg::MarginHit => StoppingRule::MarginHit,
        StopArg::Horizon => StoppingRule::Horizon(
            horizon.ok_or_else(|| anyhow!("--horizon is required for --stop horizon"))?,
        ),
    })
}

fn summary_line(s: &HittingSummary) -> String {
    let mut line = format!(
        "n={} mean={:?} stderr={:?} ci95=[{:?}, {:?}] median={:?} exhausted={}",
        s.n, s.mean, s.stderr, s.ci95[0], s.ci95[1], s.median, s.budget_exhausted
    );
    if s.exhausted_flagged {
        line.push_str(" (exhaustion flagged)");
    }
    if let Some(eps) = s.certification_epsilon {
        line.push_str(&format!(" epsilon={eps:?}"));
    }
    line
}

fn attach_samples(
    summary: &mut HittingSummary,
    records: &[HittingRecord],
    path: Option<&Path>,
) -> Result<()> {
    if let Some(path) = path {
        write_samples(path, records)?;
        summary.samples_path = Some(path.display().to_string());
    }
    Ok(())
}

fn simulate_config(args: &SimulateArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => read_json::<ExperimentConfig>(path)?,
        None => {
            let algo = args
                .algo
                .ok_or_else(|| anyhow!("--algo is required without --config"))?;
            ExperimentConfig {
                process: ProcessConfig::Neutral {
                    spec: neutral_spec(algo, args.k, args.mu, args.rho, args.margins)?,
                },
                stop: stop_rule(
                    args.stop.unwrap_or(StopArg::Absorption),
                    args.horizon,
                    args.lo,
                    args.hi,
                )?,
                replicas: args.replicas.unwrap_or(10_000),
                master_seed: args.seed.unwrap_or(0),
                budget: args.budget,
                sweep: None,
            }
        }
    };
    if args.config.is_some() {
        if let Some(algo) = args.algo {
            config.process = ProcessConfig::Neutral {
                spec: neutral_spec(algo, args.k, args.mu, args.rho, args.margins)?,
            };
        }
        if let Some(stop) = args.stop {
            config.stop = stop_rule(stop, args.horizon, args.lo, args.hi)?;
        }
        if let Some(replicas) = args.replicas {
            config.replicas = replicas;
        }
        if let Some(seed) = args.seed {
            config.master_seed = seed;
        }
        if let Some(budget) = args.budget {
            config.budget = Some(budget);
        }
    }
    config.validate()?;
    Ok(config)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = simulate_config(&args)?;
    if args.dump_config {
        return dump_config(&config, args.out.as_deref());
    }
    let (mut summary, records) = run_hitting_experiment(&config)?;
    attach_samples(&mut summary, &records, args.samples.as_deref())?;
    if let Some(path) = &args.out {
        write_json(path, &summary)?;
    }
    println!("simulate: {}", summary_line(&summary));
    Ok(())
}

fn export_kernel(kernel: &TransitionKernel, path: &Path) -> Result<()> {
    let file = fs::File::create(path)
        .with_context(|| format!("cannot create kernel file {}", path.display()))?;
    kernel
        .write_csv(BufWriter::new(file))
        .with_context(|| format!("cannot write kernel file {}", path.display()))
}

fn exact(args: ExactArgs) -> Result<()> {
    let (kernel, algorithm, parameter) = match args.algo {
        ExactAlgoArg::Cga => {
            let k = args
                .k
                .ok_or_else(|| anyhow!("--K is required for --algo cga"))?;
            (build_cga_kernel(k)?, "cga", k)
        }
        ExactAlgoArg::Umda => {
            let mu = args
                .mu
                .ok_or_else(|| anyhow!("--mu is required for --algo umda"))?;
            (build_umda_kernel(mu)?, "umda", mu)
        }
    };
    if let Some(path) = &args.export_kernel {
        export_kernel(&kernel, path)?;
    }
    let start = kernel.state_of(args.start)?;
    let (expected, stop) = match args.stop {
        ExactStopArg::Absorption => (expected_absorption_time(&kernel, start)?, "absorption"),
        ExactStopArg::ExitMiddle => (
            exit_time_from_interval(&kernel, args.lo, args.hi, start)?,
            "exit-middle",
        ),
    };
    let report = ExactReport {
        algorithm,
        parameter,
        stop,
        start: args.start,
        expected,
    };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    println!(
        "exact: algo={algorithm} parameter={parameter} stop={stop} start={:?} expected={:?}",
        args.start, expected
    );
    Ok(())
}

fn exact_time(kernel: &TransitionKernel, stop: StopArg, lo: f64, hi: f64) -> Result<f64> {
    let start = kernel.state_of(0.5)?;
    Ok(match stop {
        StopArg::Absorption => expected_absorption_time(kernel, start)?,
        StopArg::ExitMiddle => exit_time_from_interval(kernel, lo, hi, start)?,
        _ => bail!("exact scaling supports absorption or exit-middle stops"),
    })
}

fn scaling_config(args: &ScalingArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => read_json::<ExperimentConfig>(path)?,
        None => {
            let algo = args
                .algo
                .ok_or_else(|| anyhow!("--algo is required without --config"))?;
            let (spec, sweep) = match algo {
                AlgoArg::Cga => {
                    if !args.grid_rho.is_empty() {
                        bail!("--grid-rho applies to --algo pbil");
                    }
                    let grid = require_grid(&args.grid)?;
                    (NeutralProcessSpec::cga(grid[0])?, SweepGrid::K(grid))
                }
                AlgoArg::Umda => {
                    let grid = require_grid(&args.grid)?;
                    (NeutralProcessSpec::umda(grid[0])?, SweepGrid::Mu(grid))
                }
                AlgoArg::Pbil => {
                    if !args.grid_rho.is_empty() {
                        let mu = args.mu.ok_or_else(|| {
                            anyhow!("--mu fixes the parent count for --grid-rho")
                        })?;
                        (
                            NeutralProcessSpec::pbil(mu, args.grid_rho[0])?,
                            SweepGrid::Rho(args.grid_rho.clone()),
                        )
                    } else {
                        let grid = require_grid(&args.grid)?;
                        let rho = args.rho.ok_or_else(|| {
                            anyhow!("--rho fixes the learning rate for a mu grid")
                        })?;
                        (NeutralProcessSpec::pbil(grid[0], rho)?, SweepGrid::Mu(grid))
                    }
                }
                AlgoArg::LambdaMmas => bail!("scaling sweeps cover cga, umda and pbil"),
            };
            ExperimentConfig {
                process: ProcessConfig::Neutral { spec },
                stop: stop_rule(
                    args.stop.unwrap_or(StopArg::Absorption),
                    args.horizon,
                    args.lo,
                    args.hi,
                )?,
                replicas: args.replicas.unwrap_or(10_000),
                master_seed: args.seed.unwrap_or(0),
                budget: args.budget,
                sweep: Some(sweep),
            }
        }
    };
    if args.config.is_some() {
        if let Some(stop) = args.stop {
            config.stop = stop_rule(stop, args.horizon, args.lo, args.hi)?;
        }
        if let Some(replicas) = args.replicas {
            config.replicas = replicas;
        }
        if let Some(seed) = args.seed {
            config.master_seed = seed;
        }
        if let Some(budget) = args.budget {
            config.budget = Some(budget);
        }
    }
    config.validate()?;
    Ok(config)
}

fn require_grid(grid: &[u32]) -> Result<Vec<u32>> {
    if grid.is_empty() {
        bail!("--grid is required (comma-separated parameter values)");
    }
    Ok(grid.to_vec())
}

fn print_scaling(report: &ScalingReport) {
    println!(
        "scaling: mode={} points={} exponent={:?} constant={:?} r2={:?}",
        report.mode,
        report.points.len(),
        report.fit.exponent,
        report.fit.constant,
        report.fit.r_squared
    );
}

fn scaling(args: ScalingArgs) -> Result<()> {
    let report = if args.exact {
        if args.dump_config {
            bail!("--dump-config applies to sampled sweeps; exact solves take flags only");
        }
        let algo = args
            .algo
            .ok_or_else(|| anyhow!("--algo is required for exact scaling"))?;
        let stop = args.stop.unwrap_or(StopArg::Absorption);
        let (lo, hi) = (args.lo.unwrap_or(0.25), args.hi.unwrap_or(0.75));
        let grid = require_grid(&args.grid)?;
        let points: Vec<(f64, f64)> = match algo {
            AlgoArg::Cga => grid
                .iter()
                .map(|&k| Ok((k as f64, exact_time(&build_cga_kernel(k)?, stop, lo, hi)?)))
                .collect::<Result<_>>()?,
            AlgoArg::Umda => grid
                .iter()
                .map(|&mu| Ok((mu as f64, exact_time(&build_umda_kernel(mu)?, stop, lo, hi)?)))
                .collect::<Result<_>>()?,
            _ => bail!("exact scaling needs a finite frequency chain; use cga or umda"),
        };
        let fit = fit_scaling_law(&points)?;
        ScalingReport {
            mode: "exact",
            points: points
                .into_iter()
                .map(|(value, time)| ScalingPointReport {
                    value,
                    time,
                    summary: None,
                })
                .collect(),
            fit,
        }
    } else {
        let config = scaling_config(&args)?;
        if args.dump_config {
            return dump_config(&config, args.out.as_deref());
        }
        let sweep = run_sweep(&config)?;
        sweep_report("monte-carlo", sweep)?
    };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    print_scaling(&report);
    Ok(())
}

fn sweep_report(mode: &'static str, sweep: Vec<SweepPoint>) -> Result<ScalingReport> {
    let points: Vec<(f64, f64)> = sweep.iter().map(|p| (p.value, p.summary.mean)).collect();
    let fit = fit_scaling_law(&points)?;
    Ok(ScalingReport {
        mode,
        points: sweep
            .into_iter()
            .map(|p| ScalingPointReport {
                value: p.value,
                time: p.summary.mean,
                summary: Some(p.summary),
            })
            .collect(),
        fit,
    })
}

fn tailcheck_config(args: &TailcheckArgs) -> Result<TailCheckConfig> {
    let mut config = match &args.config {
        Some(path) => read_json::<TailCheckConfig>(path)?,
        None => {
            let algo = args
                .algo
                .ok_or_else(|| anyhow!("--algo is required without --config"))?;
            TailCheckConfig {
                spec: neutral_spec(algo, args.k, args.mu, args.rho, None)?,
                gamma: args
                    .gamma
                    .ok_or_else(|| anyhow!("--gamma is required without --config"))?,
                horizons: args.horizons.clone(),
                replicas: args.replicas.unwrap_or(10_000),
                master_seed: args.seed.unwrap_or(0),
            }
        }
    };
    if args.config.is_some() {
        if let Some(algo) = args.algo {
            config.spec = neutral_spec(algo, args.k, args.mu, args.rho, None)?;
        }
        if let Some(gamma) = args.gamma {
            config.gamma = gamma;
        }
        if !args.horizons.is_empty() {
            config.horizons = args.horizons.clone();
        }
        if let Some(replicas) = args.replicas {
            config.replicas = replicas;
        }
        if let Some(seed) = args.seed {
            config.master_seed = seed;
        }
    }
    if config.horizons.is_empty() {
        bail!("--horizons must list at least one T");
    }
    Ok(config)
}

fn tailcheck(args: TailcheckArgs) -> Result<()> {
    let config = tailcheck_config(&args)?;
    if args.dump_config {
        return dump_config(&config, args.out.as_deref());
    }
    let monte_carlo = driftlab::lab::validate_tail_bound(
        &config.spec,
        config.gamma,
        &config.horizons,
        config.replicas,
        config.master_seed,
    )?;
    let mut exact_horizon = None;
    let mut exact_max_excess = None;
    if args.exact {
        let k = match &config.spec.kind {
            ProcessKind::Cga { k } => *k,
            ProcessKind::Pbil { .. } => {
                bail!("--exact tail checks need the finite cGA chain")
            }
        };
        let max_h = *config.horizons.iter().max().expect("validated nonempty");
        let cdf = cga_exact_exit_cdf(k, config.gamma, max_h)?;
        let mut worst = f64::NEG_INFINITY;
        for t in 1..=max_h {
            let bound = tail_bound(&config.spec, config.gamma, t)?;
            worst = worst.max(cdf[t as usize] - bound);
        }
        exact_horizon = Some(max_h);
        exact_max_excess = Some(worst);
    }
    let violations = monte_carlo.entries.iter().filter(|e| e.violated).count();
    let report = TailcheckReport {
        monte_carlo,
        exact_horizon,
        exact_max_excess,
    };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    let exact_note = match report.exact_max_excess {
        Some(excess) => format!(" exact_max_excess={excess:?}"),
        None => String::new(),
    };
    println!(
        "tailcheck: gamma={:?} horizons={} replicas={} violations={violations}{exact_note}",
        config.gamma,
        config.horizons.len(),
        config.replicas
    );
    Ok(())
}

fn runaway_config(args: &RunawayArgs) -> Result<ExperimentConfig> {
    if !args.grid_mu.is_empty() && !args.grid_rho.is_empty() {
        bail!("--grid-mu and --grid-rho are mutually exclusive");
    }
    let mut config = match &args.config {
        Some(path) => read_json::<ExperimentConfig>(path)?,
        None => {
            let mu = args
                .mu
                .or_else(|| args.grid_mu.first().copied())
                .ok_or_else(|| anyhow!("--mu is required without --config"))?;
            let rho = args
                .rho
                .or_else(|| args.grid_rho.first().copied())
                .ok_or_else(|| anyhow!("--rho is required without --config"))?;
            let sweep = if !args.grid_mu.is_empty() {
                Some(SweepGrid::Mu(args.grid_mu.clone()))
            } else if !args.grid_rho.is_empty() {
                Some(SweepGrid::Rho(args.grid_rho.clone()))
            } else {
                None
            };
            ExperimentConfig {
                process: ProcessConfig::Neutral {
                    spec: NeutralProcessSpec::pbil(mu, rho)?,
                },
                stop: StoppingRule::RunAway {
                    c: args.c,
                    epsilon: args.epsilon,
                },
                replicas: args.replicas.unwrap_or(10_000),
                master_seed: args.seed.unwrap_or(0),
                budget: args.budget,
                sweep,
            }
        }
    };
    if args.config.is_some() {
        if let Some(replicas) = args.replicas {
            config.replicas = replicas;
        }
        if let Some(seed) = args.seed {
            config.master_seed = seed;
        }
        if let Some(budget) = args.budget {
            config.budget = Some(budget);
        }
    }
    if !matches!(config.stop, StoppingRule::RunAway { .. }) {
        bail!("the runaway subcommand needs stop: run-away in the config");
    }
    match &config.process {
        ProcessConfig::Neutral { spec } => match &spec.kind {
            ProcessKind::Pbil { rho, .. } if rho.constant() == Some(1.0) => {
                bail!("run-away campaigns need rho < 1; UMDA absorbs instead, use simulate")
            }
            ProcessKind::Pbil { .. } => {}
            ProcessKind::Cga { .. } => {
                bail!("run-away campaigns cover the PBIL family, not the cGA")
            }
        },
        ProcessConfig::Eda { .. } => {
            bail!("run-away campaigns run on the reduced one-bit process")
        }
    }
    config.validate()?;
    Ok(config)
}

fn runaway(args: RunawayArgs) -> Result<()> {
    let config = runaway_config(&args)?;
    if args.dump_config {
        return dump_config(&config, args.out.as_deref());
    }
    if config.sweep.is_some() {
        let report = sweep_report("run-away", run_sweep(&config)?)?;
        if let Some(path) = &args.out {
            write_json(path, &report)?;
        }
        println!(
            "runaway: points={} exponent={:?} constant={:?} r2={:?}",
            report.points.len(),
            report.fit.exponent,
            report.fit.constant,
            report.fit.r_squared
        );
    } else {
        let (mut summary, records) = run_hitting_experiment(&config)?;
        attach_samples(&mut summary, &records, args.samples.as_deref())?;
        if let Some(path) = &args.out {
            write_json(path, &summary)?;
        }
        println!("runaway: {}", summary_line(&summary));
    }
    Ok(())
}

fn eda_spec(args: &DominanceArgs) -> Result<EdaSpec> {
    let spec = match args.algo {
        AlgoArg::Cga => EdaSpec::cga(
            args.k
                .ok_or_else(|| anyhow!("--K is required for --algo cga"))?,
            args.dim,
        )?,
        AlgoArg::Umda => EdaSpec::umda(
            args.mu
                .ok_or_else(|| anyhow!("--mu is required for --algo umda"))?,
            args.lambda
                .ok_or_else(|| anyhow!("--lambda is required for --algo umda"))?,
            args.dim,
        )?,
        AlgoArg::Pbil => EdaSpec::pbil(
            args.mu
                .ok_or_else(|| anyhow!("--mu is required for --algo pbil"))?,
            args.lambda
                .ok_or_else(|| anyhow!("--lambda is required for --algo pbil"))?,
            args.rho
                .ok_or_else(|| anyhow!("--rho is required for --algo pbil"))?,
            args.dim,
        )?,
        AlgoArg::LambdaMmas => EdaSpec::lambda_mmas(
            args.lambda
                .ok_or_else(|| anyhow!("--lambda is required for --algo lambda-mmas"))?,
            args.rho
                .ok_or_else(|| anyhow!("--rho is required for --algo lambda-mmas"))?,
            args.dim,
        )?,
    };
    Ok(spec)
}

fn dominance(args: DominanceArgs) -> Result<()> {
    if args.bit >= args.dim as usize {
        bail!("--bit must be below --dim, got bit {} for {} bits", args.bit, args.dim);
    }
    let spec = eda_spec(&args)?;
    let fitness = match args.fitness {
        FitnessArg::Neutral => FitnessFunction::Neutral,
        FitnessArg::OneMax => FitnessFunction::OneMax,
        FitnessArg::LeadingOnes => FitnessFunction::LeadingOnes,
        FitnessArg::WeakPreferOne => FitnessFunction::WeakPreferOne(args.bit),
        FitnessArg::WeakPreferZero => FitnessFunction::WeakPreferZero(args.bit),
    };
    let mode = if args.exact {
        if args.replicas.is_some() {
            bail!("--replicas applies to Monte Carlo mode; drop --exact");
        }
        DominanceMode::Exact
    } else {
        DominanceMode::MonteCarlo {
            replicas: args.replicas.unwrap_or(10_000),
            master_seed: args.seed.unwrap_or(0),
        }
    };
    let reports = multistep_dominance_check(&spec, &fitness, &spec, args.t_max, &mode)?;
    let failing = reports.iter().filter(|r| !r.dominates).count();
    let worst = reports
        .iter()
        .map(|r| r.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(path) = &args.out {
        write_json(path, &reports)?;
    }
    println!(
        "dominance: t_max={} steps={} non_dominating={failing} max_violation={worst:?}",
        args.t_max,
        reports.len()
    );
    Ok(())
}

fn advise(args: AdviseArgs) -> Result<()> {
    let (algorithm, token) = match args.algo {
        AdviseAlgoArg::Cga => (AdvisorAlgorithm::Cga, "cga"),
        AdviseAlgoArg::Pbil => (AdvisorAlgorithm::Pbil, "pbil"),
        AdviseAlgoArg::Umda => (AdvisorAlgorithm::Umda, "umda"),
    };
    let advice = advise_parameters(
        algorithm,
        args.budget,
        args.dim,
        args.gamma,
        args.delta,
        args.lambda,
        args.rho,
    )?;
    if let Some(path) = &args.out {
        write_json(path, &advice)?;
    }
    println!(
        "advise: algorithm={token} {}={} iterations={} bound={:?}",
        advice.parameter, advice.value, advice.iterations, advice.bound
    );
    Ok(())
}

/// Error scaled to the closed-form value, with an absolute floor of 1 so
/// near-zero moments are compared absolutely.
fn scaled_error(observed: f64, closed: f64) -> f64 {
    (observed - closed).abs() / closed.abs().max(1.0)
}

fn moments_check(args: MomentsCheckArgs) -> Result<()> {
    if args.max_mu < 1 {
        bail!("--max-mu must be at least 1");
    }
    if args.max_k < 2 || args.max_k % 2 != 0 {
        bail!("--max-k must be an even value >= 2");
    }
    let mut rows = 0u64;
    let mut worst_rel = 0.0f64;
    for k in (2..=args.max_k).step_by(2) {
        let kernel = build_cga_kernel(k)?;
        for state in 1..k {
            let closed = cga_conditional_moments(state, k)?;
            worst_rel = worst_rel
                .max(scaled_error(kernel.row_mean(state), closed.mean))
                .max(scaled_error(kernel.conditional_variance(state), closed.variance))
                .max(scaled_error(kernel.conditional_third(state), closed.third_central));
            rows += 1;
        }
    }
    for mu in 1..=args.max_mu {
        let kernel = build_umda_kernel(mu)?;
        for state in 1..mu {
            let p = kernel.frequency(state);
            let closed = pbil_conditional_moments(p, mu, 1.0)?;
            worst_rel = worst_rel
                .max(scaled_error(kernel.row_mean(state), closed.mean))
                .max(scaled_error(kernel.conditional_variance(state), closed.variance))
                .max(scaled_error(kernel.conditional_third(state), closed.third_central));
            rows += 1;
        }
    }
    let mut rng = replica_stream(args.seed, 0);
    let mut sqrt_failures = 0u64;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut track = |check: driftlab::moments::SqrtBoundCheck| {
        if !check.holds {
            sqrt_failures += 1;
        }
        worst_slack = worst_slack.max(check.lhs - check.rhs);
    };
    for _ in 0..args.pairs {
        let z: f64 = rng.gen_range(0.0..=10.0);
        let z0: f64 = rng.gen_range(1e-6..=10.0);
        track(check_sqrt_bound(z, z0)?);
    }
    // Boundary case and the exact-equality case.
    track(check_sqrt_bound(0.0, 1.0)?);
    track(check_sqrt_bound(3.5, 3.5)?);
    let report = MomentsReport {
        kernel_rows_checked: rows,
        max_relative_error: worst_rel,
        sqrt_pairs_checked: args.pairs + 2,
        sqrt_failures,
        worst_sqrt_slack: worst_slack,
    };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    println!(
        "moments-check: rows={} max_rel_err={:?} sqrt_pairs={} sqrt_failures={} worst_slack={:?}",
        report.kernel_rows_checked,
        report.max_relative_error,
        report.sqrt_pairs_checked,
        report.sqrt_failures,
        report.worst_sqrt_slack
    );
    if report.max_relative_error > 1e-12 || report.sqrt_failures > 0 {
        return Err(driftlab::Error::ExperimentFailed(format!(
            "moment cross-check failed: max_rel_err={:?}, sqrt_failures={}",
            report.max_relative_error, report.sqrt_failures
        ))
        .into());
    }
    Ok(())
}
