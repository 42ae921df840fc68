//! Cross-route agreement: the full population simulator against the reduced
//! one-bit process, sampled campaigns against exact chain solves, and the
//! hitting-time consequences of stochastic dominance.

mod common;

use rayon::prelude::*;

use driftlab::eda::{run_eda, run_eda_hitting, EdaSpec, FitnessFunction};
use driftlab::dominance::first_time_at_or_below;
use driftlab::lab::{run_hitting_experiment, ExperimentConfig, ProcessConfig};
use driftlab::markov::{
    build_cga_kernel, build_umda_kernel, expected_absorption_time, hitting_time_distribution,
};
use driftlab::neutral::{simulate_until, NeutralProcessSpec};
use driftlab::stats::{dkw_two_sided, ks_critical, ks_two_sample};
use driftlab::stopping::StoppingRule;
use driftlab::stream::replica_stream;

fn full_terminal_frequencies(
    spec: &EdaSpec,
    horizon: u64,
    replicas: u32,
    master_seed: u64,
) -> Vec<f64> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(master_seed, r as u64);
            run_eda_hitting(
                spec,
                &FitnessFunction::Neutral,
                &StoppingRule::Horizon(horizon),
                horizon,
                &mut rng,
            )
            .unwrap()
            .terminal_frequency
        })
        .collect()
}

fn reduced_terminal_frequencies(
    spec: &NeutralProcessSpec,
    horizon: u64,
    replicas: u32,
    master_seed: u64,
) -> Vec<f64> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(master_seed, r as u64);
            simulate_until(spec, &StoppingRule::Horizon(horizon), horizon, &mut rng)
                .unwrap()
                .terminal_frequency
        })
        .collect()
}

#[test]
fn full_selection_run_matches_the_reduced_process() {
    // A neutral bit of UMDA(mu=4, lambda=8) over 3 bits follows the same law
    // as the reduced binomial process; compare terminal frequencies with a
    // two-sample KS test at alpha = 1e-3.
    let full_spec = EdaSpec::umda(4, 8, 3).unwrap();
    let reduced_spec = NeutralProcessSpec::umda(4).unwrap();
    let n = 100_000u32;
    let critical = ks_critical(1e-3, n as usize, n as usize);
    for (i, horizon) in [1u64, 5, 10].into_iter().enumerate() {
        let a = full_terminal_frequencies(&full_spec, horizon, n, 1000 + i as u64);
        let b = reduced_terminal_frequencies(&reduced_spec, horizon, n, 2000 + i as u64);
        let stat = ks_two_sample(&a, &b);
        assert!(
            stat < critical,
            "t={horizon}: KS {stat} exceeds critical {critical}"
        );
    }
}

#[test]
fn full_two_sample_run_matches_the_reduced_process() {
    let full_spec = EdaSpec::cga(8, 2).unwrap();
    let reduced_spec = NeutralProcessSpec::cga(8).unwrap();
    let n = 100_000u32;
    let critical = ks_critical(1e-3, n as usize, n as usize);
    for (i, horizon) in [1u64, 5, 10].into_iter().enumerate() {
        let a = full_terminal_frequencies(&full_spec, horizon, n, 3000 + i as u64);
        let b = reduced_terminal_frequencies(&reduced_spec, horizon, n, 4000 + i as u64);
        let stat = ks_two_sample(&a, &b);
        assert!(
            stat < critical,
            "t={horizon}: KS {stat} exceeds critical {critical}"
        );
    }
}

fn absorption_campaign(spec: NeutralProcessSpec, replicas: u32, seed: u64) -> (f64, f64, Vec<u64>) {
    let config = ExperimentConfig {
        process: ProcessConfig::Neutral { spec },
        stop: StoppingRule::Absorption,
        replicas,
        master_seed: seed,
        budget: None,
        sweep: None,
    };
    let (summary, records) = run_hitting_experiment(&config).unwrap();
    assert_eq!(summary.budget_exhausted, 0, "campaign was truncated");
    (
        summary.mean,
        summary.stderr,
        records.iter().map(|r| r.stopping_time).collect(),
    )
}

#[test]
fn sampled_absorption_means_match_the_exact_solves() {
    for k in [8u32, 16] {
        let kernel = build_cga_kernel(k).unwrap();
        let exact = expected_absorption_time(&kernel, k / 2).unwrap();
        let (mean, se, _) = absorption_campaign(NeutralProcessSpec::cga(k).unwrap(), 20_000, 7);
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "K={k}: mc {mean} vs exact {exact} (se {se})"
        );
    }
    for mu in [8u32, 16] {
        let kernel = build_umda_kernel(mu).unwrap();
        let exact = expected_absorption_time(&kernel, mu / 2).unwrap();
        let (mean, se, _) = absorption_campaign(NeutralProcessSpec::umda(mu).unwrap(), 20_000, 8);
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "mu={mu}: mc {mean} vs exact {exact} (se {se})"
        );
    }
}

#[test]
fn absorption_time_cdf_matches_the_empirical_law() {
    let k = 8u32;
    let kernel = build_cga_kernel(k).unwrap();
    let horizon = 2000u64;
    let cdf = hitting_time_distribution(&kernel, k / 2, &[0, k], horizon).unwrap();
    let (_, _, times) = absorption_campaign(NeutralProcessSpec::cga(k).unwrap(), 100_000, 9);
    let gap = common::sup_cdf_gap(&times, &cdf);
    let slack = dkw_two_sided(100_000, 1e-3);
    assert!(gap <= slack, "sup CDF gap {gap} exceeds DKW slack {slack}");
}

fn first_low_crossing_times(
    fitness: FitnessFunction,
    replicas: u32,
    horizon: u64,
    master_seed: u64,
) -> Vec<f64> {
    let spec = EdaSpec::cga(8, 2).unwrap();
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(master_seed, r as u64);
            let trace = run_eda(
                &spec,
                &fitness,
                &StoppingRule::Horizon(horizon),
                horizon,
                &mut rng,
            )
            .unwrap();
            first_time_at_or_below(&trace.history, 0, 0.25)
                .unwrap_or(horizon + 1) as f64
        })
        .collect()
}

#[test]
fn preferring_ones_delays_the_low_crossing() {
    // If flipping the bit to one never hurts, its frequency dominates the
    // neutral run, so the first crossing below 1/4 cannot come earlier in
    // distribution; compare censored means with a 3-sigma allowance.
    let n = 20_000u32;
    let horizon = 400u64;
    let preferred = first_low_crossing_times(FitnessFunction::WeakPreferOne(0), n, horizon, 21);
    let neutral = first_low_crossing_times(FitnessFunction::Neutral, n, horizon, 22);
    let (mean_p, se_p) = common::naive_mean_se(&preferred);
    let (mean_n, se_n) = common::naive_mean_se(&neutral);
    let slack = 3.0 * (se_p * se_p + se_n * se_n).sqrt();
    assert!(
        mean_p >= mean_n - slack,
        "preferred {mean_p} crossed earlier than neutral {mean_n} (slack {slack})"
    );
}
