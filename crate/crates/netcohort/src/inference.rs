//! Random coupling, pair and group statistics for both variants, calibration
//! against chi-square and Gumbel limits, and end-to-end test drivers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{ratio_vector, sigma_pair, sigma_ratio, CovarianceEstimate, SigmaSource};
use crate::distributions::{chi2_cdf, chi2_quantile, chi2_sf, gumbel_cdf, gumbel_quantile};
use crate::error::{Error, Result};
use crate::mat::eigh_small;
use crate::spectral::{estimate_k0, leading_spectrum, max_degree_q, AdjacencyMatrix, K0Variant, Spectrum};

const COUPLING_STREAM: u64 = 0x636f_7570_6c6e_67;

/// Test statistic family: `T` studentizes raw eigenvector coordinates,
/// `Ratio` studentizes coordinate ratios against the leading eigenvector
/// (the degree-robust form).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "T")]
    T,
    #[serde(rename = "ratio")]
    Ratio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Pair,
    Group,
}

/// Disjoint random pairing of a node group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingPlan {
    pub pairs: Vec<[usize; 2]>,
    pub seed: u64,
    pub dropped_node: Option<usize>,
}

/// Outcome of one test run. Exactly one of `df` / `b_m` is set: `df` for
/// chi-square calibrations (pair scope and small groups), `b_m` for the
/// Gumbel calibration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestReport {
    pub variant: Variant,
    pub scope: Scope,
    pub statistic: f64,
    pub k0: usize,
    pub m: usize,
    pub df: Option<usize>,
    pub b_m: Option<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub coupling: Option<CouplingPlan>,
    pub warnings: Vec<String>,
}

/// Knobs shared by the drivers. `k0_override` pins the working rank (the
/// benchmark sweeps do); `k0_multiplier` replaces the log log n factor in the
/// data-driven rank rule; `subsample_m0` activates the experimental
/// subsampled group variant with the stated subgroup size.
#[derive(Clone, Debug)]
pub struct TestOptions {
    pub alpha: f64,
    pub variant: Variant,
    pub k0_override: Option<usize>,
    pub k0_multiplier: Option<f64>,
    pub subsample_m0: Option<usize>,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            alpha: 0.05,
            variant: Variant::T,
            k0_override: None,
            k0_multiplier: None,
            subsample_m0: None,
        }
    }
}

/// Uniform sequential pairing of the group. Odd groups drop one uniformly
/// chosen node, recorded in the plan.
pub fn random_coupling(group: &[usize], seed: u64) -> Result<CouplingPlan> {
    if group.len() < 2 {
        return Err(Error::validation(format!(
            "coupling needs at least 2 nodes, got {}",
            group.len()
        )));
    }
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != group.len() {
        return Err(Error::validation("coupling group has duplicate nodes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(COUPLING_STREAM);
    let mut nodes = group.to_vec();
    // Fisher-Yates: uniform over orderings, hence uniform over matchings.
    for i in (1..nodes.len()).rev() {
        let j = rng.gen_range(0..=i);
        nodes.swap(i, j);
    }
    let dropped_node = if nodes.len() % 2 == 1 { nodes.pop() } else { None };
    let pairs = nodes
        .chunks(2)
        .map(|c| if c[0] < c[1] { [c[0], c[1]] } else { [c[1], c[0]] })
        .collect();
    Ok(CouplingPlan { pairs, seed, dropped_node })
}

/// Statistic value plus any numerical-policy warnings raised on the way.
#[derive(Clone, Debug)]
pub struct StatOutcome {
    pub value: f64,
    pub warnings: Vec<String>,
}

const COND_CAP: f64 = 1e12;
const PINV_CUTOFF: f64 = 1e-10;

/// Quadratic form x' Sigma^{-1} x through a symmetric eigendecomposition.
/// Well-conditioned positive definite input inverts exactly; otherwise a
/// pseudo-inverse with a relative eigenvalue cutoff takes over, flagged.
fn studentize(sigma: &CovarianceEstimate, x: &[f64]) -> Result<StatOutcome> {
    let dim = sigma.dim;
    debug_assert_eq!(x.len(), dim);
    let (vals, vecs) = eigh_small(dim, &sigma.data)?;
    let max_abs = vals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut warnings = Vec::new();
    if max_abs == 0.0 {
        return Ok(StatOutcome {
            value: 0.0,
            warnings: vec![format!(
                "covariance for pair ({}, {}) is identically zero; statistic set to 0",
                sigma.i, sigma.j
            )],
        });
    }
    let min_val = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_abs = vals.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    let cond = max_abs / min_abs;
    let use_pinv = min_val <= 0.0 || cond > COND_CAP;
    if use_pinv {
        warnings.push(format!(
            "covariance for pair ({}, {}) is near-singular (condition {cond:.3e}); pseudo-inverse with relative cutoff {PINV_CUTOFF:.0e} applied",
            sigma.i, sigma.j
        ));
    }
    let mut acc = 0.0f64;
    for k in 0..dim {
        let lam = vals[k];
        if use_pinv && lam.abs() < PINV_CUTOFF * max_abs {
            continue;
        }
        let mut proj = 0.0;
        for l in 0..dim {
            proj += vecs[k * dim + l] * x[l];
        }
        acc += proj * proj / lam;
    }
    if acc < 0.0 {
        warnings.push(format!(
            "indefinite covariance for pair ({}, {}) gave a negative quadratic form {acc:.3e}; clamped to 0",
            sigma.i, sigma.j
        ));
        acc = 0.0;
    }
    Ok(StatOutcome { value: acc, warnings })
}

fn coordinate_difference(
    spec: &Spectrum,
    i: usize,
    j: usize,
    k0: usize,
    variant: Variant,
) -> Result<Vec<f64>> {
    match variant {
        Variant::T => Ok((0..k0).map(|a| spec.vectors[a][i] - spec.vectors[a][j]).collect()),
        Variant::Ratio => {
            let yi = ratio_vector(spec, i, k0)?;
            let yj = ratio_vector(spec, j, k0)?;
            Ok(yi.entries.iter().zip(&yj.entries).map(|(a, b)| a - b).collect())
        }
    }
}

/// Studentized pair statistic with warning detail.
pub fn pair_statistic_detail(
    spec: &Spectrum,
    sigma: &CovarianceEstimate,
    i: usize,
    j: usize,
    k0: usize,
    variant: Variant,
) -> Result<StatOutcome> {
    if i == j {
        return Ok(StatOutcome { value: 0.0, warnings: Vec::new() });
    }
    if k0 == 0 || k0 > spec.k_stored() {
        return Err(Error::validation(format!(
            "K0={k0} outside the stored spectrum (k={})",
            spec.k_stored()
        )));
    }
    let pair_matches = (sigma.i == i && sigma.j == j) || (sigma.i == j && sigma.j == i);
    if !pair_matches || sigma.k0 != k0 {
        return Err(Error::validation(format!(
            "covariance was built for pair ({}, {}) at K0={}, statistic asked for ({i}, {j}) at K0={k0}",
            sigma.i, sigma.j, sigma.k0
        )));
    }
    let expected_dim = effective_df(k0, variant)?;
    if sigma.dim != expected_dim {
        return Err(Error::validation(format!(
            "covariance dimension {} does not match variant (expected {expected_dim})",
            sigma.dim
        )));
    }
    let x = coordinate_difference(spec, i, j, k0, variant)?;
    studentize(sigma, &x)
}

/// Studentized difference of the pair's eigenvector coordinates (variant T)
/// or ratio coordinates (variant Ratio); nonnegative.
pub fn pair_statistic(
    spec: &Spectrum,
    sigma: &CovarianceEstimate,
    i: usize,
    j: usize,
    k0: usize,
    variant: Variant,
) -> Result<f64> {
    pair_statistic_detail(spec, sigma, i, j, k0, variant).map(|o| o.value)
}

/// Maximum pair statistic over the coupling plan; covariances line up with
/// `plan.pairs` by position.
pub fn group_statistic(
    spec: &Spectrum,
    covariances: &[CovarianceEstimate],
    plan: &CouplingPlan,
    k0: usize,
    variant: Variant,
) -> Result<f64> {
    if plan.pairs.is_empty() {
        return Err(Error::validation("coupling plan has no pairs"));
    }
    if covariances.len() != plan.pairs.len() {
        return Err(Error::validation(format!(
            "{} covariances supplied for {} pairs",
            covariances.len(),
            plan.pairs.len()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for (sigma, pair) in covariances.iter().zip(&plan.pairs) {
        let s = pair_statistic(spec, sigma, pair[0], pair[1], k0, variant)?;
        best = best.max(s);
    }
    Ok(best)
}

/// Gumbel centering
/// b_m = 2 log(m/2) + (K_eff - 2) log log(m/2) - 2 log Gamma(K_eff / 2)
/// for even m >= 6.
pub fn gumbel_centering(m: usize, k_eff: usize) -> Result<f64> {
    if m % 2 != 0 {
        return Err(Error::validation(format!("centering needs an even group size, got {m}")));
    }
    if m / 2 <= 1 {
        return Err(Error::validation(format!(
            "centering undefined for m={m}: log log(m/2) needs m/2 > 1"
        )));
    }
    if m < 6 {
        return Err(Error::validation(format!(
            "centering unreliable for m={m} < 6; use the small-group chi-square calibration"
        )));
    }
    if k_eff == 0 {
        return Err(Error::validation("K_eff must be at least 1"));
    }
    let half = m as f64 / 2.0;
    Ok(2.0 * half.ln() + (k_eff as f64 - 2.0) * half.ln().ln()
        - 2.0 * crate::distributions::ln_gamma(k_eff as f64 / 2.0))
}

/// Upper-tail chi-square p-value for a pair statistic.
pub fn pair_pvalue(stat: f64, df: usize) -> Result<f64> {
    chi2_sf(stat, df)
}

/// Gumbel p-value 1 - G((stat - b_m) / 2) for even m >= 6.
pub fn group_pvalue(stat: f64, m: usize, k_eff: usize) -> Result<f64> {
    let b_m = gumbel_centering(m, k_eff)?;
    Ok(1.0 - gumbel_cdf((stat - b_m) / 2.0))
}

/// Exact small-group p-value: the null maximum over m/2 independent
/// chi-square draws gives p = 1 - F(stat)^{m/2}.
pub fn small_group_pvalue(stat: f64, m: usize, k_eff: usize) -> Result<f64> {
    if m % 2 != 0 || m == 0 {
        return Err(Error::validation(format!(
            "small-group calibration needs even m >= 2, got {m}"
        )));
    }
    let f = chi2_cdf(stat, k_eff)?;
    Ok(1.0 - f.powf(m as f64 / 2.0))
}

fn effective_df(k0: usize, variant: Variant) -> Result<usize> {
    match variant {
        Variant::T => Ok(k0),
        Variant::Ratio => {
            if k0 < 2 {
                Err(Error::validation(
                    "ratio variant needs K0 >= 2; use variant T when only one eigenvalue carries signal",
                ))
            } else {
                Ok(k0 - 1)
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn plugin_sigma(
    x: &AdjacencyMatrix,
    spec: &Spectrum,
    i: usize,
    j: usize,
    k0: usize,
    variant: Variant,
) -> Result<CovarianceEstimate> {
    match variant {
        Variant::T => sigma_pair(SigmaSource::Plugin { x }, spec, i, j, k0),
        Variant::Ratio => sigma_ratio(SigmaSource::Plugin { x }, spec, None, i, j, k0),
    }
}

/// How many leading eigenpairs the drivers fetch before applying the rank
/// rule; generous enough that the threshold cut lands inside the stored
/// prefix for realistic spike counts, with a full-decomposition retry as
/// backstop when it does not.
pub(crate) const LEAD_REQUEST: usize = 12;

fn resolve_k0(
    x: &AdjacencyMatrix,
    rule: K0Variant,
    opts: &TestOptions,
) -> Result<(usize, Spectrum)> {
    let n = x.n();
    if let Some(k0) = opts.k0_override {
        if k0 == 0 || k0 > n {
            return Err(Error::validation(format!("K0 override {k0} outside 1..={n}")));
        }
        let spec = leading_spectrum(x, k0.max(LEAD_REQUEST.min(n)).min(n))?;
        return Ok((k0, spec));
    }
    let spec = leading_spectrum(x, LEAD_REQUEST.min(n))?;
    let (_, q_check) = max_degree_q(x);
    match estimate_k0(&spec, q_check, n, rule, opts.k0_multiplier) {
        Ok(k0) => Ok((k0, spec)),
        Err(Error::Numerical(msg)) if msg.contains("undetermined") => {
            let full = leading_spectrum(x, n)?;
            let k0 = estimate_k0(&full, q_check, n, rule, opts.k0_multiplier)?;
            Ok((k0, full))
        }
        Err(e) => Err(e),
    }
}

/// Single-pair test: spectrum, rank rule (pair threshold) unless overridden,
/// plug-in covariance, studentized statistic, chi-square calibration.
pub fn run_pair_test(
    x: &AdjacencyMatrix,
    i: usize,
    j: usize,
    opts: &TestOptions,
) -> Result<TestReport> {
    check_alpha(opts.alpha)?;
    let n = x.n();
    if i == j {
        return Err(Error::validation(format!(
            "pair test needs two distinct nodes, got ({i}, {j})"
        )));
    }
    if i >= n || j >= n {
        return Err(Error::validation(format!("pair ({i}, {j}) out of range for n={n}")));
    }
    let (k0, spec) = resolve_k0(x, K0Variant::Pair, opts)?;
    pair_test_from_spectrum(x, &spec, i, j, k0, opts)
}

/// Pair pipeline on a precomputed spectrum; `k0` already resolved.
pub(crate) fn pair_test_from_spectrum(
    x: &AdjacencyMatrix,
    spec: &Spectrum,
    i: usize,
    j: usize,
    k0: usize,
    opts: &TestOptions,
) -> Result<TestReport> {
    check_alpha(opts.alpha)?;
    let df = effective_df(k0, opts.variant)?;
    let sigma = plugin_sigma(x, spec, i, j, k0, opts.variant)?;
    let outcome = pair_statistic_detail(spec, &sigma, i, j, k0, opts.variant)?;
    let p_value = pair_pvalue(outcome.value, df)?;
    let critical = chi2_quantile(1.0 - opts.alpha, df)?;
    Ok(TestReport {
        variant: opts.variant,
        scope: Scope::Pair,
        statistic: outcome.value,
        k0,
        m: 2,
        df: Some(df),
        b_m: None,
        p_value,
        reject: outcome.value >= critical,
        alpha: opts.alpha,
        coupling: None,
        warnings: outcome.warnings,
    })
}

/// Group test: rank rule (group threshold) unless overridden, seeded random
/// coupling, max studentized pair statistic, Gumbel calibration for an
/// effective size of at least 6, exact max-of-chi-square calibration below.
pub fn run_group_test(
    x: &AdjacencyMatrix,
    group: &[usize],
    seed: u64,
    opts: &TestOptions,
) -> Result<TestReport> {
    check_alpha(opts.alpha)?;
    validate_group(x.n(), group)?;
    let (k0, spec) = resolve_k0(x, K0Variant::Group, opts)?;
    group_test_from_spectrum(x, &spec, group, seed, k0, opts)
}

fn validate_group(n: usize, group: &[usize]) -> Result<()> {
    if group.len() < 2 {
        return Err(Error::validation(format!(
            "group test needs at least 2 nodes, got {}",
            group.len()
        )));
    }
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != group.len() {
        return Err(Error::validation("group has duplicate nodes"));
    }
    if let Some(&worst) = group.iter().max() {
        if worst >= n {
            return Err(Error::validation(format!("group node {worst} out of range for n={n}")));
        }
    }
    Ok(())
}

/// Group pipeline on a precomputed spectrum; `k0` already resolved.
pub(crate) fn group_test_from_spectrum(
    x: &AdjacencyMatrix,
    spec: &Spectrum,
    group: &[usize],
    seed: u64,
    k0: usize,
    opts: &TestOptions,
) -> Result<TestReport> {
    check_alpha(opts.alpha)?;
    validate_group(x.n(), group)?;
    let mut warnings = Vec::new();
    let working: Vec<usize> = match opts.subsample_m0 {
        None => group.to_vec(),
        Some(m0) => {
            if m0 < 2 || m0 > group.len() {
                return Err(Error::validation(format!(
                    "subsample size {m0} outside 2..={}",
                    group.len()
                )));
            }
            warnings.push(format!(
                "experimental subsampled variant: testing {m0} of {} group nodes",
                group.len()
            ));
            subsample_group(group, m0, seed)
        }
    };
    let plan = random_coupling(&working, seed)?;
    let df = effective_df(k0, opts.variant)?;
    let mut stat = f64::NEG_INFINITY;
    for pair in &plan.pairs {
        let sigma = plugin_sigma(x, spec, pair[0], pair[1], k0, opts.variant)?;
        let outcome = pair_statistic_detail(spec, &sigma, pair[0], pair[1], k0, opts.variant)?;
        warnings.extend(outcome.warnings);
        stat = stat.max(outcome.value);
    }
    let m_eff = 2 * plan.pairs.len();
    let (p_value, critical, df_field, b_m_field) = if m_eff >= 6 {
        let b_m = gumbel_centering(m_eff, df)?;
        let p = 1.0 - gumbel_cdf((stat - b_m) / 2.0);
        let crit = 2.0 * gumbel_quantile(1.0 - opts.alpha)? + b_m;
        (p, crit, None, Some(b_m))
    } else {
        let p = small_group_pvalue(stat, m_eff, df)?;
        let crit = chi2_quantile((1.0 - opts.alpha).powf(2.0 / m_eff as f64), df)?;
        (p, crit, Some(df), None)
    };
    Ok(TestReport {
        variant: opts.variant,
        scope: Scope::Group,
        statistic: stat,
        k0,
        m: group.len(),
        df: df_field,
        b_m: b_m_field,
        p_value,
        reject: stat >= critical,
        alpha: opts.alpha,
        coupling: Some(plan),
        warnings,
    })
}

fn subsample_group(group: &[usize], m0: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(COUPLING_STREAM ^ 0x5542);
    let mut nodes = group.to_vec();
    for i in (1..nodes.len()).rev() {
        let j = rng.gen_range(0..=i);
        nodes.swap(i, j);
    }
    nodes.truncate(m0);
    nodes
}
