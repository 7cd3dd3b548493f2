//! Covariance matrices for the studentized eigenvector statistics, in
//! population-oracle and plug-in form, plus the leading-eigenvector ratio
//! coordinates used by the degree-corrected variant.

use crate::error::{Error, Result};
use crate::mat::SymMat;
use crate::model::MeanMatrix;
use crate::spectral::{AdjacencyMatrix, Spectrum};

/// Where the noise-variance table comes from.
///
/// * `Population`: entries sigma^2_kl = h_kl (1 - h_kl) from a mean matrix.
/// * `Plugin`: squared residual entries of X minus its leading spectral part.
/// * `Explicit`: a caller-supplied symmetric table of sigma^2 values.
///
/// With self loops off the diagonal noise is identically zero (the diagonal
/// of X is deterministic), so both derived modes zero the table diagonal.
#[derive(Clone, Copy)]
pub enum SigmaSource<'a> {
    Population { h: &'a MeanMatrix, self_loops: bool },
    Plugin { x: &'a AdjacencyMatrix },
    Explicit { table: &'a SymMat },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Population,
    Plugin,
    Explicit,
}

/// Symmetric covariance estimate for one node pair.
#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    pub dim: usize,
    pub data: Vec<f64>,
    pub provenance: Provenance,
    pub i: usize,
    pub j: usize,
    pub k0: usize,
}

impl CovarianceEstimate {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.dim + b]
    }
}

/// Ratio coordinates Y_i(k) = v_k(i) / v_1(i) for k = 2..K0, with 0/0 := 1.
#[derive(Clone, Debug)]
pub struct RatioVector {
    pub node: usize,
    pub entries: Vec<f64>,
}

impl<'a> SigmaSource<'a> {
    fn provenance(&self) -> Provenance {
        match self {
            SigmaSource::Population { .. } => Provenance::Population,
            SigmaSource::Plugin { .. } => Provenance::Plugin,
            SigmaSource::Explicit { .. } => Provenance::Explicit,
        }
    }

    fn n(&self) -> usize {
        match self {
            SigmaSource::Population { h, .. } => h.n(),
            SigmaSource::Plugin { x } => x.n(),
            SigmaSource::Explicit { table } => table.n(),
        }
    }

    /// Row u of the sigma^2 table under the given working rank.
    fn sigma_row(&self, u: usize, spec: &Spectrum, k0: usize) -> Vec<f64> {
        let n = self.n();
        match self {
            SigmaSource::Population { h, self_loops } => {
                let mut row: Vec<f64> = (0..n)
                    .map(|l| {
                        let p = h.get(u, l);
                        p * (1.0 - p)
                    })
                    .collect();
                if !self_loops {
                    row[u] = 0.0;
                }
                row
            }
            SigmaSource::Plugin { x } => {
                let mut row = vec![0.0f64; n];
                for l in 0..n {
                    let mut w = x.mat().get(u, l);
                    for k in 0..k0 {
                        w -= spec.values[k] * spec.vectors[k][u] * spec.vectors[k][l];
                    }
                    row[l] = w * w;
                }
                if !x.self_loops() {
                    row[u] = 0.0;
                }
                row
            }
            SigmaSource::Explicit { table } => (0..n).map(|l| table.get(u, l)).collect(),
        }
    }
}

fn check_pair(source: &SigmaSource, spec: &Spectrum, i: usize, j: usize, k0: usize) -> Result<()> {
    let n = source.n();
    if spec.n != n {
        return Err(Error::validation(format!("spectrum is for n={} but source has n={n}", spec.n)));
    }
    if i == j {
        return Err(Error::validation(format!("node pair must be distinct, got ({i}, {j})")));
    }
    if i >= n || j >= n {
        return Err(Error::validation(format!("pair ({i}, {j}) out of range for n={n}")));
    }
    if k0 == 0 {
        return Err(Error::validation("working rank K0 must be at least 1"));
    }
    if k0 > spec.k_stored() {
        return Err(Error::validation(format!(
            "K0={k0} exceeds the {} stored eigenpairs",
            spec.k_stored()
        )));
    }
    Ok(())
}

/// Covariance of the K0-vector (e_i - e_j)' W V D^{-1}: entry (a, b) is
/// (1/(d_a d_b)) [sum_l (s_il + s_jl) v_a(l) v_b(l) - s_ij (v_a(i) v_b(j) + v_a(j) v_b(i))]
/// with s the sigma^2 table of the source.
pub fn sigma_pair(
    source: SigmaSource,
    spec: &Spectrum,
    i: usize,
    j: usize,
    k0: usize,
) -> Result<CovarianceEstimate> {
    check_pair(&source, spec, i, j, k0)?;
    let sig_i = source.sigma_row(i, spec, k0);
    let sig_j = source.sigma_row(j, spec, k0);
    let sig_ij = sig_i[j];
    let n = source.n();

    let mut data = vec![0.0f64; k0 * k0];
    for a in 0..k0 {
        let va = &spec.vectors[a];
        for b in a..k0 {
            let vb = &spec.vectors[b];
            let mut acc = 0.0;
            for l in 0..n {
                acc += (sig_i[l] + sig_j[l]) * va[l] * vb[l];
            }
            acc -= sig_ij * (va[i] * vb[j] + va[j] * vb[i]);
            let entry = acc / (spec.values[a] * spec.values[b]);
            data[a * k0 + b] = entry;
            data[b * k0 + a] = entry;
        }
    }
    Ok(CovarianceEstimate { dim: k0, data, provenance: source.provenance(), i, j, k0 })
}

/// Denominator guard for ratio coordinates, relative to the leading
/// eigenvector's largest entry.
pub fn ratio_guard(spec: &Spectrum) -> f64 {
    let vmax = spec.vectors[0].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    1e-8 * vmax
}

/// Y_i(k) = v_k(i) / v_1(i), k = 2..K0. Both entries under the guard count as
/// an exact 0/0 and yield 1; a guarded denominator with a live numerator is
/// an error.
pub fn ratio_vector(spec: &Spectrum, i: usize, k0: usize) -> Result<RatioVector> {
    if k0 == 0 {
        return Err(Error::validation("working rank K0 must be at least 1"));
    }
    if k0 > spec.k_stored() {
        return Err(Error::validation(format!(
            "K0={k0} exceeds the {} stored eigenpairs",
            spec.k_stored()
        )));
    }
    if i >= spec.n {
        return Err(Error::validation(format!("node {i} out of range for n={}", spec.n)));
    }
    let eps = ratio_guard(spec);
    let den = spec.vectors[0][i];
    let mut entries = Vec::with_capacity(k0.saturating_sub(1));
    for k in 1..k0 {
        let num = spec.vectors[k][i];
        if den.abs() < eps {
            if num.abs() < eps {
                entries.push(1.0);
            } else {
                return Err(Error::numerical(format!(
                    "near-singular ratio at node {i}: v_1({i}) = {den} under guard {eps} with live numerator {num}"
                )));
            }
        } else {
            entries.push(num / den);
        }
    }
    Ok(RatioVector { node: i, entries })
}

/// Covariance of the studentized ratio differences (dimension K0 - 1).
/// `t_values` injects exact detection boundaries t_k for the population
/// oracle; by default t_k = d_k, and plug-in mode always uses the empirical
/// eigenvalues.
pub fn sigma_ratio(
    source: SigmaSource,
    spec: &Spectrum,
    t_values: Option<&[f64]>,
    i: usize,
    j: usize,
    k0: usize,
) -> Result<CovarianceEstimate> {
    check_pair(&source, spec, i, j, k0)?;
    if k0 < 2 {
        return Err(Error::validation("ratio covariance needs K0 >= 2"));
    }
    if let Some(t) = t_values {
        if t.len() < k0 {
            return Err(Error::validation(format!("t_values has {} entries, K0={k0} needed", t.len())));
        }
    }
    let v1i = spec.vectors[0][i];
    let v1j = spec.vectors[0][j];
    match source {
        SigmaSource::Population { .. } | SigmaSource::Explicit { .. } => {
            if v1i == 0.0 || v1j == 0.0 {
                return Err(Error::numerical(format!(
                    "singular leading-eigenvector entry: v_1({i}) = {v1i}, v_1({j}) = {v1j}"
                )));
            }
        }
        SigmaSource::Plugin { .. } => {
            let eps = ratio_guard(spec);
            if v1i.abs() < eps || v1j.abs() < eps {
                return Err(Error::numerical(format!(
                    "singular leading-eigenvector entry under guard: v_1({i}) = {v1i}, v_1({j}) = {v1j}"
                )));
            }
        }
    }

    let t = |k: usize| -> f64 {
        match t_values {
            Some(tv) => tv[k],
            None => spec.values[k],
        }
    };
    let n = source.n();
    let sig_i = source.sigma_row(i, spec, k0);
    let sig_j = source.sigma_row(j, spec, k0);
    let sig_ij = sig_i[j];
    let dim = k0 - 1;
    let v1 = &spec.vectors[0];
    let t1 = t(0);

    // g_u(k, l) = v_k(l) / (t_k v_1(u)) - v_k(u) v_1(l) / (t_1 v_1(u)^2)
    let g = |u: usize, v1u: f64, k: usize, l: usize| -> f64 {
        spec.vectors[k][l] / (t(k) * v1u) - spec.vectors[k][u] * v1[l] / (t1 * v1u * v1u)
    };

    let mut data = vec![0.0f64; dim * dim];
    for a in 0..dim {
        let ka = a + 1;
        for b in a..dim {
            let kb = b + 1;
            let mut acc = 0.0;
            for l in 0..n {
                if l != j {
                    acc += sig_i[l] * g(i, v1i, ka, l) * g(i, v1i, kb, l);
                }
                if l != i {
                    acc += sig_j[l] * g(j, v1j, ka, l) * g(j, v1j, kb, l);
                }
            }
            let bra = g(i, v1i, ka, j) - g(j, v1j, ka, i);
            let brb = g(i, v1i, kb, j) - g(j, v1j, kb, i);
            acc += sig_ij * bra * brb;
            data[a * dim + b] = acc;
            data[b * dim + a] = acc;
        }
    }
    Ok(CovarianceEstimate { dim, data, provenance: source.provenance(), i, j, k0 })
}
