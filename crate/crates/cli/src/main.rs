//! Command-line driver: configuration, experiment orchestration, and
//! reproducible CSV/JSONL output.
//!
//! Subcommands: `run` (execute trials, write transcripts + summary),
//! `equalize` (paired-input distribution comparison), `lowerbound`
//! (isolation demo pipeline), `oracles` (the four analytic oracles).
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orsim_core::analytics::{
    balls_bins_oracle, cannot_affect_check, equalizing_experiment, isolation_probability,
    onion_cost, pairs_expectation_oracle, zeta_recursion,
};
use orsim_core::engine::run;
use orsim_core::rng::trial_seed;
use orsim_core::types::PartyId;
use orsim_core::{SimError, SimpleInput};

use config::ResolvedConfig;
use output::OutputWriter;

#[derive(Parser)]
#[command(name = "orsim", version, about = "Deterministic onion-routing protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count (overrides config).
    #[arg(long, global = true)]
    trials: Option<u32>,
    /// Output directory (overrides config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Protocol name: pitree | pibfly | strawman (overrides config).
    #[arg(long, global = true)]
    protocol: Option<String>,
    /// Adversary name: passive | isolating | uniform_isolating |
    /// sender_targeting | singleton_dropping | pair_dropping.
    #[arg(long, global = true)]
    adversary: Option<String>,
    /// Permit ground-truth oracle strategies; transcripts record the mode.
    #[arg(long, global = true)]
    oracle_mode: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute trials and write transcript JSONL plus a summary CSV.
    Run,
    /// Paired σ0/σ1 experiment comparing received-count distributions.
    Equalize {
        /// First swapped party.
        #[arg(long)]
        i: Option<u32>,
        /// Second swapped party.
        #[arg(long)]
        j: Option<u32>,
    },
    /// Isolation demo pipeline: cannot-affect check, isolation
    /// probability, and the conditional delivery comparison.
    Lowerbound {
        #[arg(long)]
        i: Option<u32>,
        #[arg(long)]
        j: Option<u32>,
    },
    /// Analytic oracles, one CSV per oracle.
    Oracles {
        /// Which oracle: pairs | bins | zeta | isolation.
        #[arg(long)]
        oracle: String,
        #[arg(long, default_value_t = 4)]
        u: u32,
        #[arg(long, default_value_t = 2)]
        v: u32,
        #[arg(long, default_value_t = 16)]
        x: u32,
        #[arg(long, default_value_t = 64)]
        nprime: u32,
        #[arg(long, default_value_t = 4.0)]
        log_lambda: f64,
        #[arg(long, default_value_t = 100)]
        n: u32,
        #[arg(long, default_value_t = 0.2)]
        kappa: f64,
        #[arg(long, default_value_t = 3)]
        sample_size: u32,
        /// Comma-separated fractions for the zeta oracle.
        #[arg(long, default_value = "0.3,0.3")]
        alpha_schedule: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(SimError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), SimError> {
    let resolved = ResolvedConfig::load(cli)?;
    match &cli.command {
        Command::Run => cmd_run(&resolved),
        Command::Equalize { i, j } => cmd_equalize(&resolved, *i, *j),
        Command::Lowerbound { i, j } => cmd_lowerbound(&resolved, *i, *j),
        Command::Oracles {
            oracle,
            u,
            v,
            x,
            nprime,
            log_lambda,
            n,
            kappa,
            sample_size,
            alpha_schedule,
        } => cmd_oracles(
            &resolved,
            oracle,
            *u,
            *v,
            *x,
            *nprime,
            *log_lambda,
            *n,
            *kappa,
            *sample_size,
            alpha_schedule,
        ),
    }
}

fn cmd_run(cfg: &ResolvedConfig) -> Result<(), SimError> {
    let protocol = cfg.protocol()?;
    let writer = OutputWriter::new(cfg)?;
    let mut summary = writer.csv(
        "summary.csv",
        &[
            "trial",
            "seed",
            "protocol",
            "adversary",
            "oracle_mode",
            "deliveries",
            "aborts",
            "onion_cost",
            "max_formed",
            "total_drops",
            "isolated",
        ],
    )?;
    for t in 0..cfg.trials {
        let seed = trial_seed(cfg.seed, t as u64);
        let input = cfg.input(seed)?;
        let adversary = cfg.adversary(seed)?;
        let transcript = run(&protocol, &input, &adversary, seed)?;
        let name = if cfg.trials == 1 {
            "transcript.jsonl".to_string()
        } else {
            format!("transcript_{t:03}.jsonl")
        };
        writer.jsonl_transcript(&name, &transcript)?;
        let cost = onion_cost(&transcript, cfg.params.chi);
        summary.row(&[
            t.to_string(),
            seed.to_string(),
            cfg.protocol_name.clone(),
            cfg.adversary_name.clone(),
            transcript.oracle_mode.to_string(),
            transcript.data_delivery_count().to_string(),
            transcript.abort_count().to_string(),
            format!("{:.6}", cost.onion_cost),
            cost.max_formed.to_string(),
            transcript.strategy.total_drops.to_string(),
            transcript
                .strategy
                .isolated
                .map(|b| b.to_string())
                .unwrap_or_default(),
        ])?;
        println!(
            "trial {t}: seed {seed}, {} deliveries, {} aborts, onion cost {:.3}",
            transcript.data_delivery_count(),
            transcript.abort_count(),
            cost.onion_cost
        );
    }
    summary.finish()?;
    Ok(())
}

fn cmd_equalize(cfg: &ResolvedConfig, i: Option<u32>, j: Option<u32>) -> Result<(), SimError> {
    let protocol = cfg.protocol()?;
    let (i, j) = cfg.swap_pair(i, j)?;
    let sigma0 = cfg.input(cfg.seed)?;
    let report = equalizing_experiment(
        &protocol,
        &cfg.adversary_spec()?,
        cfg.params.kappa,
        &sigma0,
        i,
        j,
        cfg.seed,
        cfg.trials,
    )?;
    let writer = OutputWriter::new(cfg)?;
    let mut csv = writer.csv(
        "equalize.csv",
        &[
            "trials",
            "i",
            "j",
            "r",
            "tv_estimate",
            "tv_radius",
            "vr_mean_sigma0",
            "vr_mean_sigma1",
            "sigma0_isolated_runs",
            "sigma1_isolated_runs",
            "sigma1_isolated_vr_zero_fraction",
            "sigma0_isolated_vr_positive_fraction",
        ],
    )?;
    csv.row(&[
        report.trials.to_string(),
        i.to_string(),
        j.to_string(),
        report.r.to_string(),
        format!("{:.6}", report.tv_estimate),
        format!("{:.6}", report.tv_radius),
        format!("{:.6}", report.vr_mean_sigma0),
        format!("{:.6}", report.vr_mean_sigma1),
        report.sigma0_isolated_runs.to_string(),
        report.sigma1_isolated_runs.to_string(),
        format!("{:.6}", report.sigma1_isolated_vr_zero_fraction),
        format!("{:.6}", report.sigma0_isolated_vr_positive_fraction),
    ])?;
    csv.finish()?;
    println!(
        "equalize: TV {:.4} ± {:.4} over {} trials (r = {})",
        report.tv_estimate, report.tv_radius, report.trials, report.r
    );
    Ok(())
}

fn cmd_lowerbound(cfg: &ResolvedConfig, i: Option<u32>, j: Option<u32>) -> Result<(), SimError> {
    let protocol = cfg.protocol()?;
    let (i, j) = cfg.swap_pair(i, j)?;
    let spec = cfg.adversary_spec()?;
    let sigma0 = cfg.input(cfg.seed)?;
    let (mean, ok) = cannot_affect_check(
        &protocol,
        &sigma0,
        &spec,
        cfg.params.kappa,
        cfg.seed,
        i,
        j,
        cfg.trials.min(500).max(1),
    )?;
    let report = equalizing_experiment(
        &protocol,
        &spec,
        cfg.params.kappa,
        &sigma0,
        i,
        j,
        cfg.seed,
        cfg.trials,
    )?;
    let iso = isolation_probability(
        cfg.params.n_parties,
        cfg.params.kappa,
        cfg.params.alpha_hops,
        100_000,
        cfg.seed,
    )?;
    let writer = OutputWriter::new(cfg)?;
    let mut csv = writer.csv(
        "lowerbound.csv",
        &[
            "i",
            "j",
            "r",
            "cannot_affect_mean",
            "cannot_affect_ok",
            "sigma0_isolated_runs",
            "sigma1_isolated_runs",
            "sigma1_isolated_vr_zero_fraction",
            "sigma0_isolated_vr_positive_fraction",
            "exact_isolation_p",
            "empirical_isolation_p",
        ],
    )?;
    csv.row(&[
        i.to_string(),
        j.to_string(),
        report.r.to_string(),
        format!("{mean:.6}"),
        ok.to_string(),
        report.sigma0_isolated_runs.to_string(),
        report.sigma1_isolated_runs.to_string(),
        format!("{:.6}", report.sigma1_isolated_vr_zero_fraction),
        format!("{:.6}", report.sigma0_isolated_vr_positive_fraction),
        format!("{:.8}", iso.exact),
        format!("{:.8}", iso.empirical),
    ])?;
    csv.finish()?;
    println!(
        "lowerbound: cannot-affect mean {mean:.4} (ok={ok}); isolated σ1 runs {} with v_r=0 fraction {:.3}",
        report.sigma1_isolated_runs, report.sigma1_isolated_vr_zero_fraction
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracles(
    cfg: &ResolvedConfig,
    oracle: &str,
    u: u32,
    v: u32,
    x: u32,
    nprime: u32,
    log_lambda: f64,
    n: u32,
    kappa: f64,
    sample_size: u32,
    alpha_schedule: &str,
) -> Result<(), SimError> {
    let writer = OutputWriter::new(cfg)?;
    let trials = cfg.trials.max(1);
    match oracle {
        "pairs" => {
            let r = pairs_expectation_oracle(u, v, trials, cfg.seed)?;
            let mut csv = writer.csv(
                "pairs.csv",
                &["u", "v", "trials", "formula", "empirical", "exhaustive_mean", "exact_match"],
            )?;
            let (exh_mean, exact_match) = match r.exhaustive {
                Some((total, subsets)) => {
                    let mean = total as f64 / subsets as f64;
                    // Cross-multiplied exact comparison with the formula
                    // 2v(2v−1)/(2u−1).
                    let exact = total as u128 * (2 * u as u128 - 1)
                        == 2 * v as u128 * (2 * v as u128 - 1) * subsets as u128;
                    (format!("{mean:.6}"), exact.to_string())
                }
                None => (String::new(), String::new()),
            };
            csv.row(&[
                u.to_string(),
                v.to_string(),
                trials.to_string(),
                format!("{:.6}", r.formula),
                format!("{:.6}", r.empirical),
                exh_mean,
                exact_match,
            ])?;
            csv.finish()?;
        }
        "bins" => {
            let r = balls_bins_oracle(x, nprime, log_lambda, trials, cfg.seed)?;
            let mut csv = writer.csv(
                "bins.csv",
                &[
                    "x",
                    "nprime",
                    "log_lambda",
                    "trials",
                    "mean_nonempty",
                    "closed_form",
                    "success_fraction",
                    "in_regime",
                ],
            )?;
            csv.row(&[
                x.to_string(),
                nprime.to_string(),
                log_lambda.to_string(),
                trials.to_string(),
                format!("{:.6}", r.mean_nonempty),
                format!("{:.6}", r.closed_form),
                format!("{:.6}", r.success_fraction),
                r.in_regime.to_string(),
            ])?;
            csv.finish()?;
        }
        "zeta" => {
            let alphas: Vec<f64> = alpha_schedule
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| SimError::config(format!("bad fraction '{s}': {e}")))
                })
                .collect::<Result<_, _>>()?;
            if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(SimError::config("schedule fractions must be in [0,1]"));
            }
            let zeta = zeta_recursion(&alphas);
            let mut csv = writer.csv("zeta.csv", &["epoch", "alpha", "zeta"])?;
            for (idx, z) in zeta.iter().enumerate() {
                let alpha = alphas
                    .get(idx)
                    .map(|a| a.to_string())
                    .unwrap_or_default();
                csv.row(&[(idx + 1).to_string(), alpha, format!("{z:.6}")])?;
            }
            csv.finish()?;
        }
        "isolation" => {
            let r = isolation_probability(n, kappa, sample_size, trials, cfg.seed)?;
            let mut csv = writer.csv(
                "isolation.csv",
                &[
                    "n",
                    "kappa",
                    "sample_size",
                    "trials",
                    "exact",
                    "empirical",
                    "relative_error",
                    "kappa_power",
                ],
            )?;
            csv.row(&[
                n.to_string(),
                kappa.to_string(),
                sample_size.to_string(),
                trials.to_string(),
                format!("{:.8}", r.exact),
                format!("{:.8}", r.empirical),
                format!("{:.6}", r.relative_error),
                format!("{:.8}", r.kappa_power),
            ])?;
            csv.finish()?;
        }
        other => {
            return Err(SimError::config(format!(
                "unknown oracle '{other}' (expected pairs | bins | zeta | isolation)"
            )));
        }
    }
    println!("oracle '{oracle}' written to {}", cfg.out_dir.display());
    Ok(())
}

// Re-exported for config.rs validation helpers.
pub(crate) fn parse_party(v: u32, n: u32, what: &str) -> Result<PartyId, SimError> {
    if v < 1 || v > n {
        return Err(SimError::config(format!("{what} {v} outside 1..={n}")));
    }
    Ok(PartyId(v))
}

pub(crate) fn random_input(n: u32, seed: u64) -> SimpleInput {
    SimpleInput::random(n, seed)
}
