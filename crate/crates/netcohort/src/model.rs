//! Generative models: mixed membership (MM) and its degree-corrected variant
//! (DCMM), mean-matrix construction, Bernoulli adjacency sampling, and the
//! population quantities used as oracles in tests.
//!
//! An MM model has mean H = theta * Pi P Pi'; the degree-corrected form is
//! H = Theta Pi P Pi' Theta with per-node positive weights on the diagonal of
//! Theta. Both are handled through one weight vector: w_i = sqrt(theta) in the
//! MM case.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::SymMat;
use crate::spectral::{spectrum_of_symmat, AdjacencyMatrix, Spectrum};

/// Row-stochastic membership profiles, one row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl MembershipMatrix {
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::validation(format!(
                "membership data length {} does not match {n} x {k}",
                data.len()
            )));
        }
        Ok(MembershipMatrix { n, k, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::validation("membership rows have inconsistent lengths"));
        }
        let mut data = Vec::with_capacity(n * k);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(MembershipMatrix { n, k, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    /// Explicit renormalization of each row to sum 1. Never applied silently;
    /// rows with non-positive sums are an error.
    pub fn renormalize(&mut self) -> Result<()> {
        for i in 0..self.n {
            let row = &mut self.data[i * self.k..(i + 1) * self.k];
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(Error::validation(format!("membership row {i} has non-positive sum {s}")));
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(())
    }
}

/// Per-node degree weights. `Constant(theta)` is the MM case where the mean
/// matrix carries a single multiplier theta (equivalently a constant weight
/// sqrt(theta) per node).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DegreeProfile {
    Constant(f64),
    PerNode(Vec<f64>),
}

impl DegreeProfile {
    /// Node weight w_i such that h_ij = w_i w_j pi_i' P pi_j.
    pub fn weight(&self, i: usize) -> f64 {
        match self {
            DegreeProfile::Constant(theta) => theta.max(0.0).sqrt(),
            DegreeProfile::PerNode(v) => v[i],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, DegreeProfile::Constant(_))
    }

    /// Average squared weight, the effective theta of the model.
    pub fn theta_bar(&self, n: usize) -> f64 {
        match self {
            DegreeProfile::Constant(theta) => *theta,
            DegreeProfile::PerNode(v) => v.iter().map(|x| x * x).sum::<f64>() / n as f64,
        }
    }
}

/// Symmetric K x K community connectivity kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct CommunityKernel {
    k: usize,
    data: Vec<f64>,
}

impl CommunityKernel {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * k {
            return Err(Error::validation(format!("kernel data length {} is not {k} x {k}", data.len())));
        }
        Ok(CommunityKernel { k, data })
    }

    /// Diagonal 1, off-diagonal rho / |a - b|.
    pub fn banded(k: usize, rho: f64) -> Self {
        let mut data = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                data[a * k + b] = if a == b { 1.0 } else { rho / (a.abs_diff(b) as f64) };
            }
        }
        CommunityKernel { k, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.k + b]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let (vals, _) = crate::mat::eigh_small(self.k, &self.data)?;
        Ok(vals)
    }
}

/// A complete generative model. `h_cap_epsilon` is the margin required in the
/// link-probability bound max h_ij <= 1 - epsilon.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    pub membership: MembershipMatrix,
    pub degrees: DegreeProfile,
    pub kernel: CommunityKernel,
    pub self_loops: bool,
    pub h_cap_epsilon: f64,
}

impl NetworkModel {
    pub fn new(membership: MembershipMatrix, degrees: DegreeProfile, kernel: CommunityKernel) -> Self {
        NetworkModel { membership, degrees, kernel, self_loops: false, h_cap_epsilon: 1e-6 }
    }

    pub fn with_self_loops(mut self, yes: bool) -> Self {
        self.self_loops = yes;
        self
    }

    pub fn n(&self) -> usize {
        self.membership.n()
    }

    pub fn k(&self) -> usize {
        self.membership.k()
    }

    /// Effective theta: average squared node weight.
    pub fn theta_bar(&self) -> f64 {
        self.degrees.theta_bar(self.n())
    }

    /// q = sqrt(n * theta_bar), the natural spectral noise scale.
    pub fn q(&self) -> f64 {
        (self.n() as f64 * self.theta_bar()).sqrt()
    }
}

/// Symmetric mean matrix H with a nominal rank hint (the model's K).
#[derive(Clone, Debug)]
pub struct MeanMatrix {
    mat: SymMat,
    rank_hint: usize,
}

impl MeanMatrix {
    pub fn n(&self) -> usize {
        self.mat.n()
    }

    pub fn rank_hint(&self) -> usize {
        self.rank_hint
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    pub fn mat(&self) -> &SymMat {
        &self.mat
    }
}

/// Group under test plus optional asymptotic-rate metadata. The rates are
/// carried for bookkeeping only and never enter any computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub group: Vec<usize>,
    pub c1n: Option<f64>,
    pub c2n: Option<f64>,
}

impl HypothesisSpec {
    pub fn new(group: Vec<usize>) -> Result<Self> {
        let spec = HypothesisSpec { group, c1n: None, c2n: None };
        spec.check_basic()?;
        Ok(spec)
    }

    fn check_basic(&self) -> Result<()> {
        if self.group.len() < 2 {
            return Err(Error::validation("hypothesis group needs at least 2 nodes"));
        }
        let mut seen = self.group.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.group.len() {
            return Err(Error::validation("hypothesis group has duplicate node indices"));
        }
        if let Some(r) = self.c1n.or(self.c2n) {
            if r <= 0.0 {
                return Err(Error::validation("rate metadata must be positive"));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.check_basic()?;
        if let Some(&bad) = self.group.iter().find(|&&i| i >= n) {
            return Err(Error::validation(format!("group node {bad} out of range for n={n}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<String>,
    pub max_h: f64,
    pub kernel_eigenvalues: Vec<f64>,
}

/// Checks model invariants. Violations are reported as data, not errors.
pub fn validate_model(model: &NetworkModel) -> ValidationReport {
    let mut violations = Vec::new();
    let n = model.n();
    let k = model.k();

    if model.kernel.k() != k {
        violations.push(format!("kernel is {0} x {0} but membership has {k} columns", model.kernel.k()));
    }
    if let DegreeProfile::PerNode(v) = &model.degrees {
        if v.len() != n {
            violations.push(format!("degree profile has {} entries for n={n}", v.len()));
        }
    }

    for i in 0..n {
        let row = model.membership.row(i);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            violations.push(format!("membership row {i} is not row-stochastic (sum {s})"));
        }
        if row.iter().any(|&v| v < 0.0) {
            violations.push(format!("membership row {i} has a negative entry"));
        }
    }

    match &model.degrees {
        DegreeProfile::Constant(theta) => {
            if *theta <= 0.0 {
                violations.push(format!("theta must be strictly positive, got {theta}"));
            }
        }
        DegreeProfile::PerNode(v) => {
            if v.iter().take(n).any(|&x| x <= 0.0) {
                violations.push("degree profile has a non-positive entry".into());
            }
        }
    }

    let pk = model.kernel.k();
    for a in 0..pk {
        for b in (a + 1)..pk {
            if (model.kernel.get(a, b) - model.kernel.get(b, a)).abs() > 1e-12 {
                violations.push(format!("kernel asymmetric at ({a}, {b})"));
            }
        }
    }
    if model.kernel.data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        violations.push("kernel entry outside [0, 1]".into());
    }

    let mut max_h = 0.0f64;
    if model.kernel.k() == k && dims_ok(model) {
        max_h = max_mean_entry(model);
        if max_h > 1.0 - model.h_cap_epsilon {
            violations.push(format!(
                "max link probability {max_h} exceeds 1 - {}",
                model.h_cap_epsilon
            ));
        }
    }

    let kernel_eigenvalues = model.kernel.eigenvalues().unwrap_or_default();
    ValidationReport { ok: violations.is_empty(), violations, max_h, kernel_eigenvalues }
}

fn dims_ok(model: &NetworkModel) -> bool {
    match &model.degrees {
        DegreeProfile::PerNode(v) => v.len() == model.n(),
        DegreeProfile::Constant(_) => true,
    }
}

fn max_mean_entry(model: &NetworkModel) -> f64 {
    let n = model.n();
    let k = model.k();
    let g = kernel_profiles(model);
    let mut max_h = 0.0f64;
    for i in 0..n {
        let wi = model.degrees.weight(i);
        let gi = &g[i * k..(i + 1) * k];
        for j in i..n {
            let pj = model.membership.row(j);
            let mut acc = 0.0;
            for t in 0..k {
                acc += gi[t] * pj[t];
            }
            let h = wi * model.degrees.weight(j) * acc;
            if h > max_h {
                max_h = h;
            }
        }
    }
    max_h
}

/// Rows of Pi P, so h_ij = w_i w_j (Pi P)_i . pi_j.
fn kernel_profiles(model: &NetworkModel) -> Vec<f64> {
    let n = model.n();
    let k = model.k();
    let mut g = vec![0.0; n * k];
    for i in 0..n {
        let pi = model.membership.row(i);
        for b in 0..k {
            let mut acc = 0.0;
            for a in 0..k {
                acc += pi[a] * model.kernel.get(a, b);
            }
            g[i * k + b] = acc;
        }
    }
    g
}

/// H = Theta Pi P Pi' Theta (MM: theta Pi P Pi').
pub fn mean_matrix(model: &NetworkModel) -> Result<MeanMatrix> {
    let n = model.n();
    let k = model.k();
    if model.kernel.k() != k {
        return Err(Error::validation(format!(
            "kernel is {0} x {0} but membership has {k} columns",
            model.kernel.k()
        )));
    }
    if !dims_ok(model) {
        return Err(Error::validation("degree profile length does not match n"));
    }
    let g = kernel_profiles(model);
    let mut mat = SymMat::zeros(n);
    let mut max_h = 0.0f64;
    let mut min_h = 0.0f64;
    for i in 0..n {
        let wi = model.degrees.weight(i);
        let gi = &g[i * k..(i + 1) * k];
        for j in i..n {
            let pj = model.membership.row(j);
            let mut acc = 0.0;
            for t in 0..k {
                acc += gi[t] * pj[t];
            }
            let h = wi * model.degrees.weight(j) * acc;
            max_h = max_h.max(h);
            min_h = min_h.min(h);
            mat.set_sym(i, j, h);
        }
    }
    if min_h < -1e-12 || max_h > 1.0 + 1e-12 {
        return Err(Error::validation(format!(
            "mean matrix entries fall outside [0, 1] (range {min_h}..{max_h})"
        )));
    }
    Ok(MeanMatrix { mat, rank_hint: k })
}

/// Samples a symmetric Bernoulli adjacency matrix. Upper-triangle entries are
/// independent Bernoulli(h_ij); the diagonal is sampled only when the model
/// allows self loops. One counter-based RNG stream per row makes the draw
/// reproducible independently of traversal or tiling.
pub fn sample_adjacency(model: &NetworkModel, seed: u64) -> Result<AdjacencyMatrix> {
    let h = mean_matrix(model)?;
    Ok(sample_from_mean(&h, model.self_loops, seed))
}

/// Sampling path for callers that already hold H.
pub fn sample_from_mean(h: &MeanMatrix, self_loops: bool, seed: u64) -> AdjacencyMatrix {
    let n = h.n();
    let mut x = SymMat::zeros(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let start = if self_loops { i } else { i + 1 };
        for j in start..n {
            let u: f64 = rng.gen();
            if u < h.get(i, j) {
                x.set_sym(i, j, 1.0);
            }
        }
    }
    AdjacencyMatrix::from_parts(x, self_loops)
}

/// Top-K eigenpairs of a mean matrix, magnitude ordered. Errors if H carries
/// fewer than K numerically nonzero eigenvalues.
pub fn population_spectrum(h: &MeanMatrix, k: usize) -> Result<Spectrum> {
    let n = h.n();
    if k == 0 || k > n {
        return Err(Error::validation(format!("requested K={k} outside 1..={n}")));
    }
    let spec = spectrum_of_symmat(h.mat(), Some(k))?;
    let top = spec.values[0].abs();
    let floor = 1e-10 * top.max(1.0);
    if spec.values[k - 1].abs() < floor {
        return Err(Error::numerical(format!(
            "mean matrix is rank deficient: |d_{k}| = {} below {floor}",
            spec.values[k - 1].abs()
        )));
    }
    Ok(spec)
}

/// Largest pairwise membership-difference norm over the group.
pub fn null_closeness(pi: &MembershipMatrix, group: &[usize]) -> Result<f64> {
    check_group(pi, group)?;
    let mut best = 0.0f64;
    for (a, &i) in group.iter().enumerate() {
        for &j in group.iter().skip(a + 1) {
            let d: f64 = pi
                .row(i)
                .iter()
                .zip(pi.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            best = best.max(d.sqrt());
        }
    }
    Ok(best)
}

/// Largest pairwise sqrt of the smallest eigenvalue of the 2 x 2 Gram matrix
/// of (pi_i, pi_j).
pub fn alt_separation(pi: &MembershipMatrix, group: &[usize]) -> Result<f64> {
    check_group(pi, group)?;
    let mut best = 0.0f64;
    for (a, &i) in group.iter().enumerate() {
        for &j in group.iter().skip(a + 1) {
            let (mut gii, mut gij, mut gjj) = (0.0, 0.0, 0.0);
            for (x, y) in pi.row(i).iter().zip(pi.row(j)) {
                gii += x * x;
                gij += x * y;
                gjj += y * y;
            }
            let tr = gii + gjj;
            let disc = ((gii - gjj) * (gii - gjj) + 4.0 * gij * gij).sqrt();
            let lam_min = (0.5 * (tr - disc)).max(0.0);
            best = best.max(lam_min.sqrt());
        }
    }
    Ok(best)
}

fn check_group(pi: &MembershipMatrix, group: &[usize]) -> Result<()> {
    if group.len() < 2 {
        return Err(Error::validation("group must contain at least 2 nodes"));
    }
    if let Some(&bad) = group.iter().find(|&&i| i >= pi.n()) {
        return Err(Error::validation(format!("group node {bad} out of range for n={}", pi.n())));
    }
    Ok(())
}

/// Node layout of the benchmark presets: 5 pure blocks of n/10 nodes followed
/// by 4 mixed blocks of equal size.
#[derive(Clone, Debug)]
pub struct PresetLayout {
    pub n0: usize,
    pub pure: [std::ops::Range<usize>; 5],
    pub mixed: [std::ops::Range<usize>; 4],
}

pub fn preset_layout(n: usize) -> Result<PresetLayout> {
    if n % 40 != 0 || n == 0 {
        return Err(Error::validation(format!(
            "preset size n={n} must be a positive multiple of 40 (5 pure blocks of n/10, 4 equal mixed blocks)"
        )));
    }
    let n0 = n / 10;
    let mixed_len = (n - 5 * n0) / 4;
    let pure = std::array::from_fn(|c| c * n0..(c + 1) * n0);
    let mixed = std::array::from_fn(|b| 5 * n0 + b * mixed_len..5 * n0 + (b + 1) * mixed_len);
    Ok(PresetLayout { n0, pure, mixed })
}

fn preset_membership(n: usize, delta: f64) -> Result<MembershipMatrix> {
    let layout = preset_layout(n)?;
    let k = 5usize;
    let a1 = [0.1, 0.6, 0.1, 0.1, 0.1];
    let a2 = [0.1 + delta, 0.6 - delta, 0.1, 0.1, 0.1];
    let a3 = [0.1, 0.1, 0.6, 0.1, 0.1];
    let a4 = [0.2, 0.2, 0.2, 0.2, 0.2];
    if a2.iter().any(|&v| v < 0.0 || v > 1.0) {
        return Err(Error::validation(format!("delta {delta} pushes a membership weight outside [0, 1]")));
    }
    let mut data = vec![0.0; n * k];
    for (c, range) in layout.pure.iter().enumerate() {
        for i in range.clone() {
            data[i * k + c] = 1.0;
        }
    }
    for (b, range) in layout.mixed.iter().enumerate() {
        let a = match b {
            0 => &a1,
            1 => &a2,
            2 => &a3,
            _ => &a4,
        };
        for i in range.clone() {
            data[i * k..(i + 1) * k].copy_from_slice(a);
        }
    }
    MembershipMatrix::new(n, k, data)
}

/// Benchmark presets 1..4. `level` is theta for the MM presets (1, 3) and the
/// mean squared weight r^2 for the degree-corrected presets (2, 4), whose
/// node weights are r times iid Uniform[0.5, 1] draws from `seed`. `delta`
/// tunes the second mixed block for presets 3 and 4 and must be absent
/// otherwise (presets 1 and 2 fix it at 0.5).
pub fn example_model(example: u8, n: usize, level: f64, delta: Option<f64>, seed: u64) -> Result<NetworkModel> {
    if !(1..=4).contains(&example) {
        return Err(Error::validation(format!("preset number must be 1..4, got {example}")));
    }
    if level <= 0.0 || level > 1.0 {
        return Err(Error::validation(format!("preset level must lie in (0, 1], got {level}")));
    }
    let delta = match (example, delta) {
        (1 | 2, None) => 0.5,
        (1 | 2, Some(_)) => {
            return Err(Error::validation("delta applies to presets 3 and 4 only"));
        }
        (_, Some(d)) => {
            if !(0.0..=0.5).contains(&d) {
                return Err(Error::validation(format!("delta must lie in [0, 0.5], got {d}")));
            }
            d
        }
        (_, None) => {
            return Err(Error::validation(format!("preset {example} requires delta")));
        }
    };
    let membership = preset_membership(n, delta)?;
    let kernel = CommunityKernel::banded(5, 0.2);
    let degrees = match example {
        1 | 3 => DegreeProfile::Constant(level),
        _ => {
            let r = level.sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0);
            let v: Vec<f64> = (0..n).map(|_| r * (0.5 + 0.5 * rng.gen::<f64>())).collect();
            DegreeProfile::PerNode(v)
        }
    };
    Ok(NetworkModel::new(membership, degrees, kernel))
}

/// Serializable model description: either a preset reference or explicit
/// membership/kernel/degree fields.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Option<u8>,
    pub n: usize,
    pub k: Option<usize>,
    pub theta: Option<f64>,
    pub degrees: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub kernel: Option<Vec<Vec<f64>>>,
    pub membership: Option<Vec<Vec<f64>>>,
    pub delta: Option<f64>,
    #[serde(default)]
    pub self_loops: bool,
    pub seed: Option<u64>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<NetworkModel> {
        if let Some(example) = self.preset {
            let level = self
                .theta
                .ok_or_else(|| Error::validation("preset config requires theta"))?;
            let model = example_model(example, self.n, level, self.delta, self.seed.unwrap_or(0))?;
            return Ok(model.with_self_loops(self.self_loops));
        }
        let membership = self
            .membership
            .as_ref()
            .ok_or_else(|| Error::validation("non-preset config requires explicit membership"))?;
        let pi = MembershipMatrix::from_rows(membership)?;
        if pi.n() != self.n {
            return Err(Error::validation(format!(
                "membership has {} rows but config says n={}",
                pi.n(),
                self.n
            )));
        }
        let k = pi.k();
        let kernel = match (&self.kernel, self.rho) {
            (Some(rows), _) => {
                let mut data = Vec::with_capacity(k * k);
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::validation("kernel dimensions do not match membership columns"));
                }
                for r in rows {
                    data.extend_from_slice(r);
                }
                CommunityKernel::new(k, data)?
            }
            (None, Some(rho)) => CommunityKernel::banded(k, rho),
            (None, None) => {
                return Err(Error::validation("config needs either a kernel or rho"));
            }
        };
        let degrees = match (&self.degrees, self.theta) {
            (Some(v), _) => DegreeProfile::PerNode(v.clone()),
            (None, Some(theta)) => DegreeProfile::Constant(theta),
            (None, None) => {
                return Err(Error::validation("config needs either theta or a degree vector"));
            }
        };
        Ok(NetworkModel::new(pi, degrees, kernel).with_self_loops(self.self_loops))
    }
}
