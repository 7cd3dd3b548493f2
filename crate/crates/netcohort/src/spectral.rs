//! Eigendecomposition of adjacency matrices, magnitude ordering, data-driven
//! selection of the working rank, and residual-matrix construction.

use crate::error::{Error, Result};
use crate::mat::{self, SymMat};

/// Symmetric binary adjacency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    mat: SymMat,
    self_loops: bool,
}

impl AdjacencyMatrix {
    /// Wraps an already-sampled symmetric 0/1 matrix; callers guarantee the
    /// invariants (the samplers and validated loaders do).
    pub fn from_parts(mat: SymMat, self_loops: bool) -> Self {
        AdjacencyMatrix { mat, self_loops }
    }

    /// Validating constructor for external data.
    pub fn from_dense(n: usize, data: Vec<f64>, self_loops: bool) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::validation(format!("adjacency buffer length {} is not {n} x {n}", data.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = data[i * n + j];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::validation(format!("adjacency entry ({i}, {j}) = {v} is not 0/1")));
                }
                if j > i && v != data[j * n + i] {
                    return Err(Error::validation(format!("adjacency is asymmetric at ({i}, {j})")));
                }
            }
            if !self_loops && data[i * n + i] != 0.0 {
                return Err(Error::validation(format!("self loop at node {i} but self_loops=false")));
            }
        }
        Ok(AdjacencyMatrix { mat: SymMat::from_raw(n, data), self_loops })
    }

    pub fn n(&self) -> usize {
        self.mat.n()
    }

    pub fn mat(&self) -> &SymMat {
        &self.mat
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn degree(&self, j: usize) -> f64 {
        (0..self.n()).map(|l| self.mat.get(l, j)).sum()
    }
}

/// Eigenpairs ordered by descending absolute eigenvalue, ties broken by
/// signed value descending and then original solver index. Each vector is
/// unit-norm with its largest-magnitude entry positive (ties: lowest index).
/// May hold a leading subset; `is_full` tells which.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn k_stored(&self) -> usize {
        self.values.len()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.n
    }
}

fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap()
            .then(values[b].partial_cmp(&values[a]).unwrap())
            .then(a.cmp(&b))
    });
    order
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = -1.0f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Eigenpairs of a symmetric matrix in the Spectrum convention. `k = None`
/// computes the full spectrum; `Some(k)` the leading k by magnitude.
pub fn spectrum_of_symmat(m: &SymMat, k: Option<usize>) -> Result<Spectrum> {
    let n = m.n();
    match k {
        None => {
            let (vals, vecs) = mat::eigh(m)?;
            let order = magnitude_order(&vals);
            let mut values = Vec::with_capacity(n);
            let mut vectors = Vec::with_capacity(n);
            for &idx in &order {
                values.push(vals[idx]);
                let mut v = vecs[idx * n..(idx + 1) * n].to_vec();
                fix_sign(&mut v);
                vectors.push(v);
            }
            Ok(Spectrum { n, values, vectors })
        }
        Some(k) => {
            let k = k.min(n);
            let lead = mat::lanczos_leading(m, k, 1e-11)?;
            // The solver already orders by magnitude; re-apply the full tie
            // rule and the sign convention for a deterministic result.
            let order = magnitude_order(&lead.values);
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            for &idx in &order {
                values.push(lead.values[idx]);
                let mut v = lead.vectors[idx].clone();
                fix_sign(&mut v);
                vectors.push(v);
            }
            Ok(Spectrum { n, values, vectors })
        }
    }
}

/// Full spectrum of an adjacency matrix.
pub fn eigendecompose(x: &AdjacencyMatrix) -> Result<Spectrum> {
    spectrum_of_symmat(x.mat(), None)
}

/// Leading k eigenpairs of an adjacency matrix.
pub fn leading_spectrum(x: &AdjacencyMatrix, k: usize) -> Result<Spectrum> {
    spectrum_of_symmat(x.mat(), Some(k))
}

/// Maximum node degree: returns (max degree, its square root).
pub fn max_degree_q(x: &AdjacencyMatrix) -> (f64, f64) {
    let n = x.n();
    let mut best = 0.0f64;
    for j in 0..n {
        let d = x.degree(j);
        if d > best {
            best = d;
        }
    }
    (best, best.sqrt())
}

/// Which threshold exponent the rank rule uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum K0Variant {
    Pair,
    Group,
}

/// Data-driven working rank: the number of eigenvalues with
/// |d_k| >= q_check * (log n)^e * multiplier, where e is 1/2 (pair) or 3/2
/// (group) and the multiplier defaults to log log n.
pub fn estimate_k0(
    spec: &Spectrum,
    q_check: f64,
    n: usize,
    variant: K0Variant,
    multiplier: Option<f64>,
) -> Result<usize> {
    if n < 3 {
        return Err(Error::validation(format!("rank rule needs n >= 3, got {n}")));
    }
    let ln_n = (n as f64).ln();
    let mult = multiplier.unwrap_or_else(|| ln_n.ln());
    let exponent = match variant {
        K0Variant::Pair => 0.5,
        K0Variant::Group => 1.5,
    };
    let threshold = q_check * ln_n.powf(exponent) * mult;
    // Magnitude ordering makes the passing set a prefix.
    let count = spec.values.iter().take_while(|d| d.abs() >= threshold).count();
    if count == 0 {
        return Err(Error::numerical(format!(
            "no signal: largest eigenvalue {} is below the rank threshold {threshold}",
            spec.values.first().map(|d| d.abs()).unwrap_or(0.0)
        )));
    }
    if count == spec.k_stored() && !spec.is_full() {
        return Err(Error::numerical(
            "rank rule undetermined: every stored eigenvalue passes the threshold; recompute with more eigenpairs",
        ));
    }
    Ok(count)
}

/// X minus its leading-K0 spectral component.
#[derive(Clone, Debug)]
pub struct ResidualMatrix {
    mat: SymMat,
    k0: usize,
}

impl ResidualMatrix {
    pub fn mat(&self) -> &SymMat {
        &self.mat
    }

    pub fn k0(&self) -> usize {
        self.k0
    }
}

pub fn residual_matrix(x: &AdjacencyMatrix, spec: &Spectrum, k0: usize) -> Result<ResidualMatrix> {
    let n = x.n();
    if k0 == 0 || k0 > n {
        return Err(Error::validation(format!("residual rank {k0} outside 1..={n}")));
    }
    if spec.k_stored() < k0 {
        return Err(Error::validation(format!(
            "spectrum stores {} eigenpairs, residual needs {k0}",
            spec.k_stored()
        )));
    }
    let mut mat = SymMat::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut v = x.mat().get(i, j);
            for k in 0..k0 {
                v -= spec.values[k] * spec.vectors[k][i] * spec.vectors[k][j];
            }
            mat.set_sym(i, j, v);
        }
    }
    Ok(ResidualMatrix { mat, k0 })
}
