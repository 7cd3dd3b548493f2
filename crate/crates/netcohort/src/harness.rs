//! Monte Carlo driver for the benchmark presets: size and power sweeps over
//! seeded replications, with CSV artifacts for the rejection rates, the
//! empirical statistic distribution, and the working-rank tallies.
//!
//! Replications run in parallel, but every per-replication seed is derived
//! from the master seed by a counter split, so results are identical under
//! any worker count.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{chi2_cdf, gumbel_cdf};
use crate::error::{Error, Result};
use crate::inference::{
    group_test_from_spectrum, gumbel_centering, TestOptions, Variant, LEAD_REQUEST,
};
use crate::model::{example_model, preset_layout, sample_adjacency, NetworkModel};
use crate::spectral::{estimate_k0, leading_spectrum, max_degree_q, K0Variant, Spectrum};

/// How the working rank is chosen on each replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum K0Policy {
    Fixed(usize),
    DataDriven,
}

impl K0Policy {
    fn label(&self) -> String {
        match self {
            K0Policy::Fixed(k) => format!("fixed:{k}"),
            K0Policy::DataDriven => "data-driven".to_string(),
        }
    }
}

/// Fully resolved simulation setting: one benchmark preset plus the sweep
/// parameters. `level` is theta for presets 1 and 3 and r^2 for presets 2
/// and 4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub example: u8,
    pub n: usize,
    pub k: usize,
    pub n0: usize,
    pub m: usize,
    pub variant: Variant,
    pub k0: K0Policy,
    pub k0_multiplier: Option<f64>,
    pub level: f64,
    pub delta: Option<f64>,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Optional departures from the preset defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SimOverrides {
    pub n: Option<usize>,
    pub level: Option<f64>,
    pub delta: Option<f64>,
    pub m: Option<usize>,
    pub k0: Option<K0Policy>,
    pub k0_multiplier: Option<f64>,
    pub alpha: Option<f64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

/// Populates a benchmark config: n=3000 with five communities of 300 pure
/// nodes each, four mixed blocks, banded kernel with rho=0.2, m=10,
/// working rank fixed at 3, 500 replications. Presets 1 and 3 use the plain
/// statistic, presets 2 and 4 the ratio statistic; delta applies to presets
/// 3 and 4 only.
pub fn build_sim_config(example: u8, overrides: &SimOverrides) -> Result<SimConfig> {
    if !(1..=4).contains(&example) {
        return Err(Error::validation(format!(
            "preset number must be 1..4, got {example}"
        )));
    }
    let n = overrides.n.unwrap_or(3000);
    let layout = preset_layout(n)?;
    let variant = match example {
        1 | 3 => Variant::T,
        _ => Variant::Ratio,
    };
    let delta = match (example, overrides.delta) {
        (1 | 2, None) => None,
        (1 | 2, Some(_)) => {
            return Err(Error::validation("delta applies to presets 3 and 4 only"));
        }
        (_, d) => Some(d.unwrap_or(0.3)),
    };
    if let Some(d) = delta {
        if !(0.0..=0.5).contains(&d) {
            return Err(Error::validation(format!("delta must lie in [0, 0.5], got {d}")));
        }
    }
    let level = overrides.level.unwrap_or(0.5);
    if level <= 0.0 || level > 1.0 {
        return Err(Error::validation(format!("level must lie in (0, 1], got {level}")));
    }
    let m = overrides.m.unwrap_or(10);
    let mixed_len = layout.mixed[0].len();
    if m < 2 {
        return Err(Error::validation(format!("group size must be at least 2, got {m}")));
    }
    let needed = match example {
        1 | 2 => m,
        _ => m.div_ceil(2),
    };
    if needed > mixed_len {
        return Err(Error::validation(format!(
            "group size {m} exceeds the mixed block capacity {mixed_len} at n={n}"
        )));
    }
    let k0 = overrides.k0.unwrap_or(K0Policy::Fixed(3));
    if let K0Policy::Fixed(v) = k0 {
        if v == 0 || v > n {
            return Err(Error::validation(format!("fixed working rank {v} outside 1..={n}")));
        }
        if variant == Variant::Ratio && v < 2 {
            return Err(Error::validation(
                "the ratio statistic needs a working rank of at least 2",
            ));
        }
    }
    if let Some(mult) = overrides.k0_multiplier {
        if !(mult.is_finite() && mult > 0.0) {
            return Err(Error::validation(format!(
                "rank-rule multiplier must be positive and finite, got {mult}"
            )));
        }
        if k0 != K0Policy::DataDriven {
            return Err(Error::validation(
                "rank-rule multiplier applies to the data-driven policy only",
            ));
        }
    }
    let alpha = overrides.alpha.unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let reps = overrides.reps.unwrap_or(500);
    if reps == 0 {
        return Err(Error::validation("need at least one replication"));
    }
    Ok(SimConfig {
        example,
        n,
        k: 5,
        n0: layout.n0,
        m,
        variant,
        k0,
        k0_multiplier: overrides.k0_multiplier,
        level,
        delta,
        alpha,
        reps,
        seed: overrides.seed.unwrap_or(0),
    })
}

/// Laptop-sized variant of a preset: n=600, 200 replications.
pub fn desk_config(example: u8) -> Result<SimConfig> {
    build_sim_config(
        example,
        &SimOverrides {
            n: Some(600),
            reps: Some(200),
            ..SimOverrides::default()
        },
    )
}

/// The tested group: the first m nodes of the first mixed block for the
/// null presets 1 and 2, and a half/half split across the first two mixed
/// blocks for the power presets 3 and 4.
pub fn representative_group(config: &SimConfig) -> Result<Vec<usize>> {
    let layout = preset_layout(config.n)?;
    let m = config.m;
    let mut group = Vec::with_capacity(m);
    match config.example {
        1 | 2 => group.extend(layout.mixed[0].clone().take(m)),
        _ => {
            let first = m.div_ceil(2);
            group.extend(layout.mixed[0].clone().take(first));
            group.extend(layout.mixed[1].clone().take(m - first));
        }
    }
    if group.len() != m {
        return Err(Error::validation(format!(
            "group size {m} does not fit the preset layout at n={}",
            config.n
        )));
    }
    Ok(group)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-split replication seed: position `counter` in the splitmix64
/// stream started at the master seed.
pub(crate) fn rep_seed(master: u64, counter: u64) -> u64 {
    splitmix64(master.wrapping_add(counter.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// One point of the empirical distribution export.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub x: f64,
    pub empirical: f64,
    pub theoretical: f64,
}

/// Aggregated sweep result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: SimConfig,
    /// Replications that produced a test decision.
    pub completed: usize,
    /// Replications that errored; their messages are deduplicated below.
    pub failures: usize,
    pub rejections: usize,
    /// rejections / completed; equals rejections/reps when nothing failed.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Statistic values of the completed replications, in replication order.
    pub statistics: Vec<f64>,
    /// Working rank actually used per replication, tallied.
    pub k0_tally: BTreeMap<usize, usize>,
    pub ecdf: Vec<EcdfPoint>,
    pub failure_notes: Vec<String>,
}

struct RepOutcome {
    statistic: f64,
    reject: bool,
    k0: usize,
}

fn rep_k0(
    x: &crate::spectral::AdjacencyMatrix,
    spec: &Spectrum,
    config: &SimConfig,
) -> Result<(usize, Option<Spectrum>)> {
    match config.k0 {
        K0Policy::Fixed(v) => Ok((v, None)),
        K0Policy::DataDriven => {
            let (_, q_check) = max_degree_q(x);
            match estimate_k0(spec, q_check, config.n, K0Variant::Group, config.k0_multiplier) {
                Ok(k) => Ok((k, None)),
                Err(Error::Numerical(msg)) if msg.contains("undetermined") => {
                    let full = leading_spectrum(x, config.n)?;
                    let k = estimate_k0(
                        &full,
                        q_check,
                        config.n,
                        K0Variant::Group,
                        config.k0_multiplier,
                    )?;
                    Ok((k, Some(full)))
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn run_replication(
    model: &NetworkModel,
    group: &[usize],
    config: &SimConfig,
    rep: u64,
) -> Result<RepOutcome> {
    let seed_adj = rep_seed(config.seed, 2 * rep);
    let seed_coupling = rep_seed(config.seed, 2 * rep + 1);
    let x = sample_adjacency(model, seed_adj)?;
    let width = match config.k0 {
        K0Policy::Fixed(v) => v.min(config.n),
        K0Policy::DataDriven => LEAD_REQUEST.min(config.n),
    };
    let spec = leading_spectrum(&x, width)?;
    let (k0, replacement) = rep_k0(&x, &spec, config)?;
    let spec = replacement.as_ref().unwrap_or(&spec);
    let opts = TestOptions {
        alpha: config.alpha,
        variant: config.variant,
        ..TestOptions::default()
    };
    let report = group_test_from_spectrum(&x, spec, group, seed_coupling, k0, &opts)?;
    Ok(RepOutcome {
        statistic: report.statistic,
        reject: report.reject,
        k0: report.k0,
    })
}

/// 95% score interval for a binomial proportion.
fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    // Two-sided 95%: the 0.975 normal quantile.
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// The reference distribution at the modal working rank: Gumbel centering
/// for effective sizes of six or more, the exact max-of-chi-square law for
/// smaller groups.
fn theoretical_cdf(config: &SimConfig, k0_modal: usize) -> Result<Box<dyn Fn(f64) -> f64>> {
    let k_eff = match config.variant {
        Variant::T => k0_modal,
        Variant::Ratio => k0_modal.saturating_sub(1),
    };
    if k_eff == 0 {
        return Err(Error::numerical("no effective coordinates for the reference curve"));
    }
    let pairs = config.m / 2;
    let m_eff = 2 * pairs;
    if m_eff >= 6 {
        let b_m = gumbel_centering(m_eff, k_eff)?;
        Ok(Box::new(move |x: f64| gumbel_cdf((x - b_m) / 2.0)))
    } else {
        Ok(Box::new(move |x: f64| {
            chi2_cdf(x.max(0.0), k_eff).map_or(f64::NAN, |c| c.powi(pairs as i32))
        }))
    }
}

fn build_ecdf(config: &SimConfig, stats: &[f64], k0_modal: usize) -> Result<Vec<EcdfPoint>> {
    if stats.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let span = hi - lo;
    let reference = theoretical_cdf(config, k0_modal)?;
    let count = sorted.len() as f64;
    let points = (0..512)
        .map(|t| {
            let x = if span == 0.0 {
                lo
            } else {
                lo + span * t as f64 / 511.0
            };
            let below = sorted.partition_point(|&s| s <= x);
            EcdfPoint {
                x,
                empirical: below as f64 / count,
                theoretical: reference(x),
            }
        })
        .collect();
    Ok(points)
}

/// Runs the configured number of replications, resampling only the noise;
/// the mean structure (and the degree draw for presets 2 and 4) is fixed by
/// the config. Per-replication errors are tallied, not fatal. The summary
/// is identical for any worker count.
pub fn monte_carlo(config: &SimConfig) -> Result<SimSummary> {
    let model = example_model(
        config.example,
        config.n,
        config.level,
        config.delta,
        config.seed,
    )?;
    let group = representative_group(config)?;

    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(&model, &group, config, rep))
        .collect();

    let mut completed = 0usize;
    let mut failures = 0usize;
    let mut rejections = 0usize;
    let mut statistics = Vec::with_capacity(config.reps);
    let mut k0_tally = BTreeMap::new();
    let mut failure_notes: Vec<String> = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(rep) => {
                completed += 1;
                if rep.reject {
                    rejections += 1;
                }
                statistics.push(rep.statistic);
                *k0_tally.entry(rep.k0).or_insert(0usize) += 1;
            }
            Err(e) => {
                failures += 1;
                let msg = e.to_string();
                if !failure_notes.contains(&msg) && failure_notes.len() < 8 {
                    failure_notes.push(msg);
                }
            }
        }
    }

    let rate = if completed > 0 {
        rejections as f64 / completed as f64
    } else {
        f64::NAN
    };
    let (ci_low, ci_high) = wilson_interval(rejections, completed);
    let k0_modal = k0_tally
        .iter()
        .max_by_key(|(k0, count)| (**count, std::cmp::Reverse(**k0)))
        .map(|(k0, _)| *k0);
    let ecdf = match k0_modal {
        Some(k0) => build_ecdf(config, &statistics, k0)?,
        None => Vec::new(),
    };
    Ok(SimSummary {
        config: config.clone(),
        completed,
        failures,
        rejections,
        rate,
        ci_low,
        ci_high,
        statistics,
        k0_tally,
        ecdf,
        failure_notes,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads; `None` uses the
/// current (global) pool.
pub fn run_with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::validation("worker count must be positive")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Serialize)]
struct SizePowerRow<'a> {
    example: u8,
    n: usize,
    k: usize,
    n0: usize,
    m: usize,
    variant: &'a Variant,
    k0_policy: String,
    level: f64,
    delta: Option<f64>,
    alpha: f64,
    reps: usize,
    seed: u64,
    completed: usize,
    failures: usize,
    rejections: usize,
    rate: f64,
    ci_low: f64,
    ci_high: f64,
}

#[derive(Serialize, Deserialize)]
struct TallyRow {
    k0: usize,
    count: usize,
}

/// Writes `size_power.csv`, `ecdf.csv`, and `k0_tally.csv` into `out_dir`.
pub fn write_artifacts(summary: &SimSummary, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let c = &summary.config;
    let mut w = csv::Writer::from_path(out_dir.join("size_power.csv"))?;
    w.serialize(SizePowerRow {
        example: c.example,
        n: c.n,
        k: c.k,
        n0: c.n0,
        m: c.m,
        variant: &c.variant,
        k0_policy: c.k0.label(),
        level: c.level,
        delta: c.delta,
        alpha: c.alpha,
        reps: c.reps,
        seed: c.seed,
        completed: summary.completed,
        failures: summary.failures,
        rejections: summary.rejections,
        rate: summary.rate,
        ci_low: summary.ci_low,
        ci_high: summary.ci_high,
    })?;
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join("ecdf.csv"))?;
    for point in &summary.ecdf {
        w.serialize(point)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join("k0_tally.csv"))?;
    for (k0, count) in &summary.k0_tally {
        w.serialize(TallyRow { k0: *k0, count: *count })?;
    }
    w.flush()?;
    Ok(())
}
