//! Command-line front door: simulation sweeps, single tests on adjacency
//! files, spectral diagnostics, correlation-network ingestion, and
//! random-matrix checks.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad flags, malformed
//! input), 3 on numerical failures (no signal, non-convergence).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use netcohort::error::Error;
use netcohort::harness::{
    build_sim_config, monte_carlo, run_with_workers, write_artifacts, K0Policy, SimOverrides,
};
use netcohort::inference::{run_group_test, run_pair_test, TestOptions, TestReport, Variant};
use netcohort::ingest::{
    correlation_network, load_adjacency, load_series_panel, save_adjacency, AdjFormat,
};
use netcohort::model::example_model;
use netcohort::rmt::{
    eigen_expansion_residuals, entrywise_law_gap, expansion_rows, law_rows, write_diagnostics_csv,
};
use netcohort::spectral::{estimate_k0, leading_spectrum, max_degree_q, K0Variant};

#[derive(Parser)]
#[command(
    name = "netcohort",
    version,
    about = "Spectral tests for shared membership profiles of network node cohorts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte Carlo sweep on a benchmark preset and write CSV artifacts.
    Simulate {
        /// Benchmark preset: 1/3 plain statistic, 2/4 degree-corrected ratio statistic.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        example: u8,
        /// Network size (positive multiple of 40).
        #[arg(long, default_value_t = 3000)]
        n: usize,
        /// Tested group size.
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Working rank: an integer, or "auto" for the data-driven rule.
        #[arg(long, default_value = "3")]
        k0: String,
        /// Multiplier for the data-driven rank threshold (default: log log n).
        #[arg(long)]
        k0_multiplier: Option<f64>,
        /// Sparsity level: theta for examples 1/3, r^2 for examples 2/4.
        #[arg(long, visible_alias = "r2", default_value_t = 0.5)]
        theta: f64,
        /// Profile separation, examples 3 and 4 only.
        #[arg(long)]
        delta: Option<f64>,
        /// Nominal test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Number of replications.
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Master seed; every replication seed derives from it.
        #[arg(long)]
        seed: u64,
        /// Worker threads (default: one per CPU).
        #[arg(long)]
        workers: Option<usize>,
        /// Directory for size_power.csv, ecdf.csv, k0_tally.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Test whether two nodes share a membership profile.
    TestPair {
        /// Adjacency file.
        #[arg(long)]
        adj: PathBuf,
        /// Adjacency format: edge-list, dense-csv, or coordinate.
        #[arg(long, default_value = "dense-csv")]
        format: String,
        /// Exactly two 1-based node indices, comma-separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Statistic variant: "T" or "ratio".
        #[arg(long, default_value = "T")]
        variant: String,
        /// Fixed working rank; omitted = data-driven.
        #[arg(long)]
        k0: Option<usize>,
        #[arg(long)]
        k0_multiplier: Option<f64>,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test whether a group of nodes shares a membership profile.
    TestGroup {
        #[arg(long)]
        adj: PathBuf,
        #[arg(long, default_value = "dense-csv")]
        format: String,
        /// 1-based node indices, comma-separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Statistic variant: "T" or "ratio".
        #[arg(long, default_value = "T")]
        variant: String,
        #[arg(long)]
        k0: Option<usize>,
        #[arg(long)]
        k0_multiplier: Option<f64>,
        /// Seed for the random coupling of the group.
        #[arg(long)]
        seed: u64,
        /// Experimental: first test a random subgroup of this size.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leading eigenvalues and working-rank diagnostics of an adjacency matrix.
    Spectral {
        #[arg(long)]
        adj: PathBuf,
        #[arg(long, default_value = "dense-csv")]
        format: String,
        /// Number of leading eigenpairs to compute.
        #[arg(long, default_value_t = 12)]
        k: usize,
        /// Multiplier for the rank thresholds (default: log log n).
        #[arg(long)]
        multiplier: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a binary adjacency matrix by thresholding series correlations.
    IngestCorr {
        /// Series panel CSV: first row names, later rows observations.
        #[arg(long)]
        panel: PathBuf,
        /// Optional covariate panel CSV in the same layout.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Regress each series on the covariates (plus intercept) first.
        #[arg(long, default_value_t = false)]
        residualize: bool,
        /// Absolute-correlation threshold for an edge.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Output adjacency path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "dense-csv")]
        format: String,
    },
    /// Random-matrix diagnostics on a benchmark preset: spike locations,
    /// eigenvector expansion residuals, and resolvent entry laws.
    RmtCheck {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        example: u8,
        #[arg(long, default_value_t = 400)]
        n: usize,
        /// Sparsity level: theta for examples 1/3, r^2 for examples 2/4.
        #[arg(long, visible_alias = "r2", default_value_t = 0.5)]
        theta: f64,
        #[arg(long)]
        delta: Option<f64>,
        /// Number of leading eigenpairs to diagnose.
        #[arg(long, default_value_t = 3)]
        k0: usize,
        /// Number of noise draws.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Base seed; draws use seed, seed+1, ...
        #[arg(long)]
        seed: u64,
        /// Rescaled evaluation points for the entry law, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "-3,-5,-8", allow_hyphen_values = true)]
        z: Vec<f64>,
        /// Directory for expansion.csv and law.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_variant(name: &str) -> Result<Variant, Error> {
    match name {
        "T" => Ok(Variant::T),
        "ratio" => Ok(Variant::Ratio),
        other => Err(Error::validation(format!(
            "unknown variant '{other}' (expected T or ratio)"
        ))),
    }
}

fn format_label(format: AdjFormat) -> &'static str {
    match format {
        AdjFormat::EdgeList => "edge-list",
        AdjFormat::DenseCsv => "dense-csv",
        AdjFormat::Coordinate => "coordinate",
    }
}

/// 1-based CLI node indices to internal 0-based.
fn to_internal_nodes(nodes: &[usize]) -> Result<Vec<usize>, Error> {
    nodes
        .iter()
        .map(|&v| {
            if v == 0 {
                Err(Error::validation("node indices are 1-based; 0 is not a node"))
            } else {
                Ok(v - 1)
            }
        })
        .collect()
}

#[derive(Serialize)]
struct TestInvocation {
    adjacency: String,
    format: &'static str,
    nodes: Vec<usize>,
    alpha: f64,
    variant: Variant,
    k0_override: Option<usize>,
    k0_multiplier: Option<f64>,
    seed: Option<u64>,
    subsample: Option<usize>,
}

#[derive(Serialize)]
struct CliReport<C: Serialize, R: Serialize> {
    library: &'static str,
    version: &'static str,
    command: &'static str,
    config: C,
    report: R,
}

fn emit_json<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RankOutcome {
    threshold: f64,
    k0: Option<usize>,
    note: Option<String>,
}

fn rank_outcome(
    x: &netcohort::spectral::AdjacencyMatrix,
    spec: &netcohort::spectral::Spectrum,
    rule: K0Variant,
    multiplier: Option<f64>,
) -> RankOutcome {
    let n = x.n();
    let (_, q_check) = max_degree_q(x);
    let ln_n = (n as f64).ln();
    let exponent = match rule {
        K0Variant::Pair => 0.5,
        K0Variant::Group => 1.5,
    };
    let threshold = q_check * ln_n.powf(exponent) * multiplier.unwrap_or_else(|| ln_n.ln());
    let attempt = match estimate_k0(spec, q_check, n, rule, multiplier) {
        Err(Error::Numerical(msg)) if msg.contains("undetermined") => {
            leading_spectrum(x, n).and_then(|full| estimate_k0(&full, q_check, n, rule, multiplier))
        }
        other => other,
    };
    match attempt {
        Ok(k0) => RankOutcome { threshold, k0: Some(k0), note: None },
        Err(e) => RankOutcome { threshold, k0: None, note: Some(e.to_string()) },
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate {
            example,
            n,
            m,
            k0,
            k0_multiplier,
            theta,
            delta,
            alpha,
            reps,
            seed,
            workers,
            out_dir,
        } => {
            let policy = if k0 == "auto" {
                K0Policy::DataDriven
            } else {
                let v: usize = k0.parse().map_err(|_| {
                    Error::validation(format!("--k0 expects an integer or \"auto\", got '{k0}'"))
                })?;
                K0Policy::Fixed(v)
            };
            let config = build_sim_config(
                example,
                &SimOverrides {
                    n: Some(n),
                    level: Some(theta),
                    delta,
                    m: Some(m),
                    k0: Some(policy),
                    k0_multiplier,
                    alpha: Some(alpha),
                    reps: Some(reps),
                    seed: Some(seed),
                },
            )?;
            let summary = run_with_workers(workers, || monte_carlo(&config))??;
            write_artifacts(&summary, &out_dir)?;
            println!(
                "example {} n={} m={} k0={} level={} reps={}: rejection rate {:.4} (95% CI {:.4}..{:.4}), {} completed, {} failed",
                config.example,
                config.n,
                config.m,
                match config.k0 {
                    K0Policy::Fixed(v) => v.to_string(),
                    K0Policy::DataDriven => "auto".to_string(),
                },
                config.level,
                config.reps,
                summary.rate,
                summary.ci_low,
                summary.ci_high,
                summary.completed,
                summary.failures,
            );
            for note in &summary.failure_notes {
                eprintln!("replication failure: {note}");
            }
            println!("artifacts written to {}", out_dir.display());
            Ok(())
        }
        Command::TestPair {
            adj,
            format,
            nodes,
            alpha,
            variant,
            k0,
            k0_multiplier,
            out,
        } => {
            let format = AdjFormat::parse(&format)?;
            let variant = parse_variant(&variant)?;
            if nodes.len() != 2 {
                return Err(Error::validation(format!(
                    "test-pair needs exactly two nodes, got {}",
                    nodes.len()
                )));
            }
            let internal = to_internal_nodes(&nodes)?;
            let x = load_adjacency(&adj, format)?;
            let opts = TestOptions {
                alpha,
                variant,
                k0_override: k0,
                k0_multiplier,
                subsample_m0: None,
            };
            let report = run_pair_test(&x, internal[0], internal[1], &opts)?;
            let config = TestInvocation {
                adjacency: adj.display().to_string(),
                format: format_label(format),
                nodes,
                alpha,
                variant,
                k0_override: k0,
                k0_multiplier,
                seed: None,
                subsample: None,
            };
            emit_json(
                &CliReport::<_, TestReport> {
                    library: "netcohort",
                    version: netcohort::VERSION,
                    command: "test-pair",
                    config,
                    report,
                },
                out.as_ref(),
            )
        }
        Command::TestGroup {
            adj,
            format,
            nodes,
            alpha,
            variant,
            k0,
            k0_multiplier,
            seed,
            subsample,
            out,
        } => {
            let format = AdjFormat::parse(&format)?;
            let variant = parse_variant(&variant)?;
            let internal = to_internal_nodes(&nodes)?;
            let x = load_adjacency(&adj, format)?;
            let opts = TestOptions {
                alpha,
                variant,
                k0_override: k0,
                k0_multiplier,
                subsample_m0: subsample,
            };
            let report = run_group_test(&x, &internal, seed, &opts)?;
            let config = TestInvocation {
                adjacency: adj.display().to_string(),
                format: format_label(format),
                nodes,
                alpha,
                variant,
                k0_override: k0,
                k0_multiplier,
                seed: Some(seed),
                subsample,
            };
            emit_json(
                &CliReport::<_, TestReport> {
                    library: "netcohort",
                    version: netcohort::VERSION,
                    command: "test-group",
                    config,
                    report,
                },
                out.as_ref(),
            )
        }
        Command::Spectral { adj, format, k, multiplier, out } => {
            let format = AdjFormat::parse(&format)?;
            if k == 0 {
                return Err(Error::validation("need at least one eigenpair"));
            }
            let x = load_adjacency(&adj, format)?;
            let k = k.min(x.n());
            let spec = leading_spectrum(&x, k)?;
            let (max_degree, q_check) = max_degree_q(&x);

            #[derive(Serialize)]
            struct SpectralConfig {
                adjacency: String,
                format: &'static str,
                k: usize,
                multiplier: Option<f64>,
            }
            #[derive(Serialize)]
            struct SpectralBody {
                n: usize,
                self_loops: bool,
                max_degree: f64,
                q_check: f64,
                eigenvalues: Vec<f64>,
                pair_rule: RankOutcome,
                group_rule: RankOutcome,
            }
            let body = SpectralBody {
                n: x.n(),
                self_loops: x.self_loops(),
                max_degree,
                q_check,
                eigenvalues: spec.values.clone(),
                pair_rule: rank_outcome(&x, &spec, K0Variant::Pair, multiplier),
                group_rule: rank_outcome(&x, &spec, K0Variant::Group, multiplier),
            };
            emit_json(
                &CliReport {
                    library: "netcohort",
                    version: netcohort::VERSION,
                    command: "spectral",
                    config: SpectralConfig {
                        adjacency: adj.display().to_string(),
                        format: format_label(format),
                        k,
                        multiplier,
                    },
                    report: body,
                },
                out.as_ref(),
            )
        }
        Command::IngestCorr {
            panel,
            covariates,
            residualize,
            threshold,
            out,
            format,
        } => {
            let format = AdjFormat::parse(&format)?;
            let mut series_panel = load_series_panel(&panel)?;
            if let Some(path) = &covariates {
                let cov = load_series_panel(path)?;
                if cov.observations() != series_panel.observations() {
                    return Err(Error::validation(format!(
                        "covariate panel has {} observations, series panel has {}",
                        cov.observations(),
                        series_panel.observations()
                    )));
                }
                series_panel.covariates = Some(cov.series);
            }
            let x = correlation_network(&series_panel, threshold, residualize)?;
            save_adjacency(&out, format, &x)?;
            let edges: f64 = x.mat().as_slice().iter().sum::<f64>() / 2.0;
            println!(
                "{} series, {} observations -> {} edges at |corr| >= {}; wrote {}",
                series_panel.width(),
                series_panel.observations(),
                edges as u64,
                threshold,
                out.display()
            );
            Ok(())
        }
        Command::RmtCheck {
            example,
            n,
            theta,
            delta,
            k0,
            seeds,
            seed,
            z,
            out_dir,
        } => {
            if seeds == 0 {
                return Err(Error::validation("need at least one noise draw"));
            }
            let model = example_model(example, n, theta, delta, seed)?;
            let seed_list: Vec<u64> = (0..seeds as u64).map(|i| seed.wrapping_add(i)).collect();
            std::fs::create_dir_all(&out_dir)?;

            let diag = eigen_expansion_residuals(&model, &seed_list, k0)?;
            write_diagnostics_csv(&out_dir.join("expansion.csv"), &expansion_rows(&diag))?;
            for warning in &diag.warnings {
                eprintln!("warning: {warning}");
            }
            let points = entrywise_law_gap(&model, &z, &seed_list)?;
            write_diagnostics_csv(&out_dir.join("law.csv"), &law_rows(n, diag.theta, &points))?;

            println!(
                "n={} k0={} draws={}: spiked ratio {:.3}, median eigenvalue gaps {:?}, median max residuals {:?}",
                n, k0, seeds, diag.spiked_ratio, diag.median_gaps, diag.median_residuals
            );
            for p in &points {
                println!(
                    "z={}: median diag gap {:.3e}, median offdiag max {:.3e}, bound scale {:.3e}",
                    p.z, p.median_diag_gap, p.median_offdiag_max, p.bound_scale
                );
            }
            println!("artifacts written to {}", out_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
