//! Dense symmetric matrices and eigensolvers.
//!
//! Storage is full row-major. The full decomposition is delegated to LAPACK's
//! `dsyevd` (divide and conquer) from the system OpenBLAS; the leading-pairs
//! path is a Lanczos iteration with full reorthogonalization, used by the
//! Monte Carlo driver where only the top few eigenpairs matter.

use std::os::raw::c_char;
use std::sync::Once;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat { n, data: vec![0.0; n * n] }
    }

    /// Builds from a full row-major buffer; the caller guarantees symmetry.
    pub fn from_raw(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        SymMat { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both (i, j) and (j, i).
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Raw mutable buffer; the caller keeps it symmetric.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            y[i] = acc;
        }
    }
}

// LAPACK from the system OpenBLAS (LP64 interface).
#[link(name = "openblas")]
extern "C" {
    fn dsyevd_(
        jobz: *const c_char,
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
}

static BLAS_INIT: Once = Once::new();

fn pin_blas_threads() {
    // Single-threaded BLAS keeps results independent of machine parallelism;
    // replication-level parallelism happens above this layer.
    BLAS_INIT.call_once(|| {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
        std::env::set_var("OMP_NUM_THREADS", "1");
    });
}

/// Full symmetric eigendecomposition.
///
/// Returns eigenvalues in ascending order and eigenvectors as columns of a
/// column-major n x n buffer (column k matches eigenvalue k).
pub fn eigh(a: &SymMat) -> Result<(Vec<f64>, Vec<f64>)> {
    pin_blas_threads();
    let n = a.n;
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    // Row-major symmetric input equals its column-major transpose, so the
    // buffer can be handed to LAPACK as is.
    let mut buf = a.data.clone();
    let mut w = vec![0.0f64; n];
    let ni = n as i32;
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    let mut info: i32 = 0;

    // Workspace query.
    let mut work_q = [0.0f64];
    let mut iwork_q = [0i32];
    let neg1 = -1i32;
    unsafe {
        dsyevd_(
            &jobz, &uplo, &ni, buf.as_mut_ptr(), &ni, w.as_mut_ptr(), work_q.as_mut_ptr(), &neg1,
            iwork_q.as_mut_ptr(), &neg1, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("eigensolver workspace query failed (info={info})")));
    }
    let lwork = work_q[0] as i32;
    let liwork = iwork_q[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        dsyevd_(
            &jobz, &uplo, &ni, buf.as_mut_ptr(), &ni, w.as_mut_ptr(), work.as_mut_ptr(), &lwork,
            iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("eigensolver failed to converge (info={info})")));
    }
    Ok((w, buf))
}

/// Symmetric eigendecomposition of a small dense matrix given as a row-major
/// buffer. Same return convention as [`eigh`].
pub fn eigh_small(dim: usize, data: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    // Symmetrize defensively: callers assemble these analytically.
    let mut m = SymMat::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let v = 0.5 * (data[i * dim + j] + data[j * dim + i]);
            m.data[i * dim + j] = v;
        }
    }
    eigh(&m)
}

pub struct LeadingPairs {
    /// Eigenvalues, sorted by descending absolute value.
    pub values: Vec<f64>,
    /// Matching eigenvectors, one contiguous n-vector per eigenvalue.
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
}

const LANCZOS_SEED: u64 = 0x6e65_7463_6f68_7274;

/// Leading `k` eigenpairs by absolute value via Lanczos with full
/// reorthogonalization. Deterministic: fixed start vector, fixed iteration
/// schedule. Falls back to the full solver for small problems or if the
/// iteration fails to converge.
pub fn lanczos_leading(a: &SymMat, k: usize, tol: f64) -> Result<LeadingPairs> {
    let n = a.n;
    let k = k.min(n);
    if n <= 120 || k * 8 >= n {
        return leading_from_full(a, k);
    }

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(LANCZOS_SEED);

    let max_iter = (12 * k + 60).min(n).max(80);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_iter);
    let mut betas: Vec<f64> = Vec::with_capacity(max_iter);

    let mut q = vec![0.0f64; n];
    for v in q.iter_mut() {
        *v = rng.gen::<f64>() - 0.5;
    }
    normalize(&mut q);

    let mut w = vec![0.0f64; n];
    let mut scale = 0.0f64;

    let mut j = 0;
    let converged = loop {
        a.matvec(&q, &mut w);
        if let Some(&beta_prev) = betas.last() {
            let prev = &basis[j - 1];
            for (wi, pi) in w.iter_mut().zip(prev.iter()) {
                *wi -= beta_prev * pi;
            }
        }
        let alpha = dot(&q, &w);
        for (wi, qi) in w.iter_mut().zip(q.iter()) {
            *wi -= alpha * qi;
        }
        basis.push(std::mem::replace(&mut q, Vec::new()));
        alphas.push(alpha);
        scale = scale.max(alpha.abs());

        // Full reorthogonalization, two passes.
        for _ in 0..2 {
            for b in basis.iter() {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b.iter()) {
                    *wi -= c * bi;
                }
            }
        }

        let beta = norm(&w);
        j += 1;

        let enough = j >= 2 * k + 2;
        let check = enough && (j % 8 == 0 || j == max_iter || beta <= f64::EPSILON * scale.max(1.0));
        if check {
            if ritz_converged(&alphas, &betas, beta, k, tol) {
                break true;
            }
        }
        if j == max_iter {
            break false;
        }
        if beta <= f64::EPSILON * scale.max(1.0) {
            // Invariant subspace: restart with a fresh orthogonal direction.
            let mut fresh = vec![0.0f64; n];
            for v in fresh.iter_mut() {
                *v = rng.gen::<f64>() - 0.5;
            }
            for _ in 0..2 {
                for b in basis.iter() {
                    let c = dot(b, &fresh);
                    for (fi, bi) in fresh.iter_mut().zip(b.iter()) {
                        *fi -= c * bi;
                    }
                }
            }
            let nrm = norm(&fresh);
            if nrm <= f64::EPSILON {
                break true; // space exhausted; Ritz pairs are exact
            }
            for v in fresh.iter_mut() {
                *v /= nrm;
            }
            betas.push(0.0);
            q = fresh;
        } else {
            betas.push(beta);
            q = w.iter().map(|v| v / beta).collect();
        }
    };

    if !converged {
        return leading_from_full(a, k);
    }

    // Ritz pairs of the tridiagonal matrix.
    let m = alphas.len();
    let mut tri = vec![0.0f64; m * m];
    for i in 0..m {
        tri[i * m + i] = alphas[i];
        if i + 1 < m {
            tri[i * m + i + 1] = betas[i];
            tri[(i + 1) * m + i] = betas[i];
        }
    }
    let (tvals, tvecs) = eigh_small(m, &tri)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| {
        tvals[y]
            .abs()
            .partial_cmp(&tvals[x].abs())
            .unwrap()
            .then(tvals[y].partial_cmp(&tvals[x]).unwrap())
            .then(x.cmp(&y))
    });

    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        values.push(tvals[idx]);
        let s = &tvecs[idx * m..(idx + 1) * m];
        let mut y = vec![0.0f64; n];
        for (b, &si) in basis.iter().zip(s.iter()) {
            for (yi, bi) in y.iter_mut().zip(b.iter()) {
                *yi += si * bi;
            }
        }
        normalize(&mut y);
        vectors.push(y);
    }
    Ok(LeadingPairs { values, vectors, iterations: m })
}

fn ritz_converged(alphas: &[f64], betas: &[f64], beta_last: f64, k: usize, tol: f64) -> bool {
    let m = alphas.len();
    if m < k {
        return false;
    }
    let mut tri = vec![0.0f64; m * m];
    for i in 0..m {
        tri[i * m + i] = alphas[i];
        if i + 1 < m {
            tri[i * m + i + 1] = betas[i];
            tri[(i + 1) * m + i] = betas[i];
        }
    }
    let Ok((tvals, tvecs)) = eigh_small(m, &tri) else {
        return false;
    };
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&x, &y| tvals[y].abs().partial_cmp(&tvals[x].abs()).unwrap());
    let top = tvals[idx[0]].abs().max(1e-300);
    idx.iter().take(k).all(|&i| {
        let s_last = tvecs[i * m + (m - 1)];
        (beta_last * s_last).abs() <= tol * top
    })
}

fn leading_from_full(a: &SymMat, k: usize) -> Result<LeadingPairs> {
    let n = a.n;
    let (vals, vecs) = eigh(a)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        vals[y]
            .abs()
            .partial_cmp(&vals[x].abs())
            .unwrap()
            .then(vals[y].partial_cmp(&vals[x]).unwrap())
            .then(x.cmp(&y))
    });
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        values.push(vals[idx]);
        vectors.push(vecs[idx * n..(idx + 1) * n].to_vec());
    }
    Ok(LeadingPairs { values, vectors, iterations: n })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        for v in a.iter_mut() {
            *v /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigh_two_by_two() {
        let mut a = SymMat::zeros(2);
        a.set_sym(0, 0, 2.0);
        a.set_sym(1, 1, 2.0);
        a.set_sym(0, 1, 1.0);
        let (w, v) = eigh(&a).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 3.0, epsilon = 1e-12);
        // Columns orthonormal.
        let c0 = [v[0], v[1]];
        let c1 = [v[2], v[3]];
        assert_abs_diff_eq!(c0[0] * c1[0] + c0[1] * c1[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c0[0] * c0[0] + c0[1] * c0[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigh_reconstructs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 30;
        let mut a = SymMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                a.set_sym(i, j, rng.gen::<f64>() - 0.5);
            }
        }
        let (w, v) = eigh(&a).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += w[k] * v[k * n + i] * v[k * n + j];
                }
                assert_abs_diff_eq!(acc, a.get(i, j), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn lanczos_matches_full_solver() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        // Low-rank signal plus small noise, mimicking the target workload.
        let mut a = SymMat::zeros(n);
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        for i in 0..n {
            u1[i] = rng.gen::<f64>() - 0.5;
            u2[i] = rng.gen::<f64>() - 0.5;
        }
        normalize(&mut u1);
        normalize(&mut u2);
        for i in 0..n {
            for j in i..n {
                let noise = 0.05 * (rng.gen::<f64>() - 0.5);
                let v = 40.0 * u1[i] * u1[j] - 25.0 * u2[i] * u2[j] + noise;
                a.set_sym(i, j, v);
            }
        }
        let lead = lanczos_leading(&a, 4, 1e-11).unwrap();
        let full = leading_from_full(&a, 4).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(lead.values[k], full.values[k], epsilon = 1e-8);
            let mut align = 0.0;
            for i in 0..n {
                align += lead.vectors[k][i] * full.vectors[k][i];
            }
            assert_abs_diff_eq!(align.abs(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn lanczos_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200;
        let mut a = SymMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                a.set_sym(i, j, if rng.gen::<f64>() < 0.2 { 1.0 } else { 0.0 });
            }
        }
        let r1 = lanczos_leading(&a, 5, 1e-11).unwrap();
        let r2 = lanczos_leading(&a, 5, 1e-11).unwrap();
        assert_eq!(r1.values, r2.values);
        assert_eq!(r1.vectors, r2.vectors);
    }
}
