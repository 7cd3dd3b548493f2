//! Desk-scale numerical checks of the random-matrix facts the statistics
//! rest on: the quadratic vector equation and its Stieltjes-type limit,
//! spiked eigenvalue locations, eigenvector expansion residuals, entrywise
//! resolvent gaps, and the tail-energy diagnostic.
//!
//! Everything here works on the rescaled matrix W/q with q = sqrt(n theta);
//! the statistical modules stay unrescaled.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mat::{eigh, SymMat};
use crate::model::{mean_matrix, population_spectrum, sample_from_mean, MeanMatrix, NetworkModel};
use crate::spectral::leading_spectrum;

/// Fixed point of the quadratic vector equation at a real evaluation point
/// outside the support.
#[derive(Clone, Debug)]
pub struct QveSolution {
    pub z: f64,
    pub m: Vec<f64>,
    pub s: SymMat,
    pub residual: f64,
    pub iterations: usize,
}

const QVE_TOL: f64 = 1e-12;
const QVE_MAX_ITER: usize = 10_000;

fn max_row_sum(s: &SymMat) -> f64 {
    (0..s.n()).fold(0.0f64, |m, i| m.max(s.row(i).iter().sum()))
}

/// Solve 1/M_i = -z - sum_j s_ij M_j by fixed-point iteration from
/// M = -1/z. Requires |z| beyond the support bound 2 sqrt(max row sum).
pub fn qve_solve(s: &SymMat, z: f64) -> Result<QveSolution> {
    let n = s.n();
    if n == 0 {
        return Err(Error::validation("variance matrix is empty"));
    }
    let m_bound = max_row_sum(s);
    if m_bound < 0.0 || s.as_slice().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::validation("variance matrix must be entrywise nonnegative and finite"));
    }
    let edge = 2.0 * m_bound.sqrt();
    if z.abs() <= edge {
        return Err(Error::validation(format!(
            "evaluation point z={z} lies inside the support bound |z| <= {edge:.6}"
        )));
    }
    let mut m = vec![-1.0 / z; n];
    let mut sm = vec![0.0f64; n];
    let mut residual = f64::INFINITY;
    for iter in 0..QVE_MAX_ITER {
        s.matvec(&m, &mut sm);
        residual = 0.0;
        for i in 0..n {
            residual = residual.max((1.0 / m[i] + z + sm[i]).abs());
        }
        if residual < QVE_TOL {
            return Ok(QveSolution { z, m, s: s.clone(), residual, iterations: iter });
        }
        for i in 0..n {
            m[i] = 1.0 / (-z - sm[i]);
        }
    }
    Err(Error::numerical(format!(
        "quadratic vector equation did not converge at z={z} (residual {residual:.3e}); \
         the point sits too close to the support"
    )))
}

/// Spiked-location equation 1 + d_k sum_i M_i(t) v_k(i)^2 = 0 evaluated at t.
fn spike_equation(d_k: f64, v_k: &[f64], s: &SymMat, t: f64) -> Result<f64> {
    let sol = qve_solve(s, t)?;
    let weighted: f64 = sol.m.iter().zip(v_k).map(|(m, v)| m * v * v).sum();
    Ok(1.0 + d_k * weighted)
}

/// Location t_k of the k-th spiked eigenvalue (1-based k into the
/// magnitude-ordered population values), found by bisection inside the
/// separation interval around d_k. All inputs in rescaled units.
pub fn t_k_solve(d: &[f64], vectors: &[Vec<f64>], s: &SymMat, k: usize) -> Result<f64> {
    if k == 0 || k > d.len() {
        return Err(Error::validation(format!("k={k} outside 1..={}", d.len())));
    }
    if vectors.len() < d.len() {
        return Err(Error::validation("one eigenvector per eigenvalue is required"));
    }
    let d_k = d[k - 1];
    let v_k = &vectors[k - 1];
    let dm = d_k.abs();
    let m_bound = max_row_sum(s);
    let edge = 2.0 * m_bound.sqrt();
    if dm <= edge {
        return Err(Error::validation(format!(
            "|d_{k}| = {dm:.6} sits inside the bulk support bound {edge:.6}; not a spike"
        )));
    }
    // Separation interval: geometric half-gap toward the nearest neighbor in
    // magnitude (the support edge standing in below the last spike), with
    // the gap-ratio excess serving as the interval half-width control.
    let r_up = if k >= 2 { (d[k - 2].abs() / dm).min(4.0) } else { 4.0 };
    let r_low = if k < d.len() {
        let next = d[k].abs().max(edge);
        dm / next
    } else {
        dm / edge
    };
    let ratio = r_up.min(r_low);
    if ratio <= 1.0 + 1e-9 {
        return Err(Error::numerical(format!(
            "no magnitude separation around d_{k}; cannot bracket t_{k}"
        )));
    }
    let eps0 = ratio - 1.0;
    let half = (1.0 + eps0).sqrt();
    let lo_mag = (dm / half).max(edge * (1.0 + 1e-6));
    let hi_mag = dm * half;
    if lo_mag >= hi_mag {
        return Err(Error::numerical(format!("degenerate bracket for t_{k}")));
    }
    let (mut lo, mut hi) = if d_k > 0.0 { (lo_mag, hi_mag) } else { (-hi_mag, -lo_mag) };
    let mut f_lo = spike_equation(d_k, v_k, s, lo)?;
    let f_hi = spike_equation(d_k, v_k, s, hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::numerical(format!(
            "spike equation does not change sign on the bracket for t_{k}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() < 1e-13 * dm.max(1.0) {
            return Ok(mid);
        }
        let f_mid = spike_equation(d_k, v_k, s, mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tail energy: theta^{-1} max_{i,j} |sum_{k > K0} d_k v_k(i) v_k(j)|,
/// zero by convention once K0 exhausts the stored rank.
pub fn tail_energy(d: &[f64], vectors: &[Vec<f64>], k0: usize, theta: f64) -> Result<f64> {
    if theta <= 0.0 {
        return Err(Error::validation(format!("theta must be positive, got {theta}")));
    }
    if k0 >= d.len() {
        return Ok(0.0);
    }
    let n = vectors.first().map_or(0, |v| v.len());
    let mut tail = vec![0.0f64; n * n];
    for k in k0..d.len() {
        let v = &vectors[k];
        for i in 0..n {
            let scaled = d[k] * v[i];
            for j in 0..n {
                tail[i * n + j] += scaled * v[j];
            }
        }
    }
    let max = tail.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    Ok(max / theta)
}

/// Population variance table sigma^2_ij = h_ij (1 - h_ij), diagonal zeroed
/// when self-loops are suppressed (that entry is deterministic).
fn sigma_table(h: &MeanMatrix, self_loops: bool) -> SymMat {
    let n = h.n();
    let mut s = SymMat::zeros(n);
    for i in 0..n {
        for j in i..n {
            if i == j && !self_loops {
                continue;
            }
            let v = h.mat().get(i, j);
            s.set_sym(i, j, v * (1.0 - v));
        }
    }
    s
}

/// Population quantities rescaled by q = sqrt(n theta): eigenvalues d/q,
/// variance profile sigma^2/q^2, untouched eigenvectors.
pub struct RescaledProfile {
    pub d: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub s: SymMat,
    pub q: f64,
}

pub fn rescaled_profile(model: &NetworkModel, k: usize) -> Result<RescaledProfile> {
    let h = mean_matrix(model)?;
    let spec = population_spectrum(&h, k)?;
    let q = model.q();
    if q <= 0.0 {
        return Err(Error::validation("degree level gives q = 0; nothing to rescale"));
    }
    let mut s = sigma_table(&h, model.self_loops);
    for v in s.as_mut_slice() {
        *v /= q * q;
    }
    Ok(RescaledProfile {
        d: spec.values.iter().map(|d| d / q).collect(),
        vectors: spec.vectors,
        s,
        q,
    })
}

/// Monte Carlo residuals of the first-order eigenvector expansion
/// v_hat_k = v_k + (1/d_hat_k) W v_k + r_k, with per-seed eigenvalue gaps
/// |d_hat_k - t_k| against the predicted locations.
#[derive(Clone, Debug)]
pub struct ExpansionDiagnostics {
    pub n: usize,
    pub theta: f64,
    pub k0: usize,
    pub spiked_ratio: f64,
    pub spiked: bool,
    pub t_values: Vec<f64>,
    pub eigenvalue_gaps: Vec<Vec<f64>>,
    pub max_residuals: Vec<Vec<f64>>,
    pub median_gaps: Vec<f64>,
    pub median_residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn eigen_expansion_residuals(
    model: &NetworkModel,
    seeds: &[u64],
    k0: usize,
) -> Result<ExpansionDiagnostics> {
    if seeds.is_empty() {
        return Err(Error::validation("at least one seed is required"));
    }
    let n = model.n();
    let h = mean_matrix(model)?;
    let pop = population_spectrum(&h, k0)?;
    let theta = model.theta_bar();
    let mut warnings = Vec::new();

    let noise_scale = (n as f64 * theta * (n as f64).ln()).sqrt();
    let spiked_ratio = pop.values[k0 - 1].abs() / noise_scale;
    let spiked = spiked_ratio >= 1.0;
    if !spiked {
        warnings.push(format!(
            "configuration is not strongly spiked: |d_{k0}| / sqrt(n theta log n) = {spiked_ratio:.3}"
        ));
    }

    // Predicted locations from the rescaled spike equation where solvable.
    let rescaled = rescaled_profile(model, k0)?;
    let mut t_values = Vec::with_capacity(k0);
    for k in 1..=k0 {
        match t_k_solve(&rescaled.d, &rescaled.vectors, &rescaled.s, k) {
            Ok(t) => t_values.push(t * rescaled.q),
            Err(e) => {
                warnings.push(format!("t_{k} not solvable ({e}); using d_{k} as the location"));
                t_values.push(pop.values[k - 1]);
            }
        }
    }

    let mut eigenvalue_gaps = Vec::with_capacity(seeds.len());
    let mut max_residuals = Vec::with_capacity(seeds.len());
    let mut wv = vec![0.0f64; n];
    for &seed in seeds {
        let x = sample_from_mean(&h, model.self_loops, seed);
        let spec = leading_spectrum(&x, k0)?;
        let mut gaps = Vec::with_capacity(k0);
        let mut residuals = Vec::with_capacity(k0);
        for k in 0..k0 {
            let d_hat = spec.values[k];
            gaps.push((d_hat - t_values[k]).abs());
            let v = &pop.vectors[k];
            let v_hat = &spec.vectors[k];
            let sign = if v_hat.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                -1.0
            } else {
                1.0
            };
            // W v = X v - H v, entrywise; the subtraction keeps the
            // deterministic diagonal term when self-loops are off.
            x.mat().matvec(v, &mut wv);
            let mut hv = vec![0.0f64; n];
            h.mat().matvec(v, &mut hv);
            let mut worst = 0.0f64;
            for i in 0..n {
                let r = sign * v_hat[i] - v[i] - (wv[i] - hv[i]) / d_hat;
                worst = worst.max(r.abs());
            }
            residuals.push(worst);
        }
        eigenvalue_gaps.push(gaps);
        max_residuals.push(residuals);
    }

    let mut median_gaps = Vec::with_capacity(k0);
    let mut median_residuals = Vec::with_capacity(k0);
    for k in 0..k0 {
        let mut g: Vec<f64> = eigenvalue_gaps.iter().map(|r| r[k]).collect();
        let mut m: Vec<f64> = max_residuals.iter().map(|r| r[k]).collect();
        median_gaps.push(median(&mut g));
        median_residuals.push(median(&mut m));
    }

    Ok(ExpansionDiagnostics {
        n,
        theta,
        k0,
        spiked_ratio,
        spiked,
        t_values,
        eigenvalue_gaps,
        max_residuals,
        median_gaps,
        median_residuals,
        warnings,
    })
}

/// Entrywise local-law gap at one evaluation point: medians across seeds of
/// max_i |G_ii(z) - M_i(z)| and max_{i != j} |G_ij(z)| for the rescaled
/// noise resolvent, next to the 1/(q z^2) reference scale.
#[derive(Clone, Debug)]
pub struct LawGapPoint {
    pub z: f64,
    pub median_diag_gap: f64,
    pub median_offdiag_max: f64,
    pub bound_scale: f64,
}

pub fn entrywise_law_gap(
    model: &NetworkModel,
    z_grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<LawGapPoint>> {
    if z_grid.is_empty() || seeds.is_empty() {
        return Err(Error::validation("need at least one evaluation point and one seed"));
    }
    let n = model.n();
    let h = mean_matrix(model)?;
    let q = model.q();
    if q <= 0.0 {
        return Err(Error::validation("degree level gives q = 0; nothing to rescale"));
    }
    let mut s = sigma_table(&h, model.self_loops);
    for v in s.as_mut_slice() {
        *v /= q * q;
    }
    let edge = 2.0 * max_row_sum(&s).sqrt();
    for &z in z_grid {
        if z.abs() <= edge * 1.01 {
            return Err(Error::validation(format!(
                "z={z} inside the support margin (edge {edge:.6})"
            )));
        }
    }
    let limits: Vec<QveSolution> =
        z_grid.iter().map(|&z| qve_solve(&s, z)).collect::<Result<_>>()?;

    let mut diag_gaps = vec![Vec::with_capacity(seeds.len()); z_grid.len()];
    let mut off_maxes = vec![Vec::with_capacity(seeds.len()); z_grid.len()];
    for &seed in seeds {
        let x = sample_from_mean(&h, model.self_loops, seed);
        let mut w = SymMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                w.set_sym(i, j, (x.mat().get(i, j) - h.mat().get(i, j)) / q);
            }
        }
        let (vals, vecs) = eigh(&w)?;
        for (zi, &z) in z_grid.iter().enumerate() {
            let inv: Vec<f64> = vals.iter().map(|l| 1.0 / (l - z)).collect();
            let mut diag_gap = 0.0f64;
            for i in 0..n {
                let mut g_ii = 0.0;
                for k in 0..n {
                    let u = vecs[k * n + i];
                    g_ii += u * u * inv[k];
                }
                diag_gap = diag_gap.max((g_ii - limits[zi].m[i]).abs());
            }
            let mut off_max = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    let mut g_ij = 0.0;
                    for k in 0..n {
                        g_ij += vecs[k * n + i] * vecs[k * n + j] * inv[k];
                    }
                    off_max = off_max.max(g_ij.abs());
                }
            }
            diag_gaps[zi].push(diag_gap);
            off_maxes[zi].push(off_max);
        }
    }

    Ok(z_grid
        .iter()
        .enumerate()
        .map(|(zi, &z)| LawGapPoint {
            z,
            median_diag_gap: median(&mut diag_gaps[zi]),
            median_offdiag_max: median(&mut off_maxes[zi]),
            bound_scale: 1.0 / (q * z * z),
        })
        .collect())
}

/// One row of the exported sweep table.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticRow {
    pub n: usize,
    pub theta: f64,
    pub k: usize,
    pub metric: String,
    pub value: f64,
}

pub fn expansion_rows(diag: &ExpansionDiagnostics) -> Vec<DiagnosticRow> {
    let mut rows = vec![DiagnosticRow {
        n: diag.n,
        theta: diag.theta,
        k: 0,
        metric: "spiked_ratio".into(),
        value: diag.spiked_ratio,
    }];
    for k in 0..diag.k0 {
        for (metric, value) in [
            ("t_k", diag.t_values[k]),
            ("median_eigenvalue_gap", diag.median_gaps[k]),
            ("median_max_residual", diag.median_residuals[k]),
        ] {
            rows.push(DiagnosticRow {
                n: diag.n,
                theta: diag.theta,
                k: k + 1,
                metric: metric.into(),
                value,
            });
        }
    }
    rows
}

pub fn law_rows(n: usize, theta: f64, points: &[LawGapPoint]) -> Vec<DiagnosticRow> {
    let mut rows = Vec::with_capacity(4 * points.len());
    for (idx, p) in points.iter().enumerate() {
        for (metric, value) in [
            ("z", p.z),
            ("median_diag_gap", p.median_diag_gap),
            ("median_offdiag_max", p.median_offdiag_max),
            ("law_bound_scale", p.bound_scale),
        ] {
            rows.push(DiagnosticRow { n, theta, k: idx + 1, metric: metric.into(), value });
        }
    }
    rows
}

pub fn write_diagnostics_csv(path: &std::path::Path, rows: &[DiagnosticRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_model;

    fn homogeneous(n: usize, total: f64) -> SymMat {
        let mut s = SymMat::zeros(n);
        for v in s.as_mut_slice() {
            *v = total / n as f64;
        }
        s
    }

    #[test]
    fn qve_homogeneous_closed_form() {
        // Semicircle Stieltjes limit: M = (3 - sqrt(5)) / 2 at z = -3.
        let s = homogeneous(40, 1.0);
        let sol = qve_solve(&s, -3.0).unwrap();
        let want = 0.3819660112501051;
        for m in &sol.m {
            assert!((m - want).abs() < 1e-10, "{m}");
        }
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn qve_zero_variance_is_trivial() {
        let s = SymMat::zeros(6);
        let sol = qve_solve(&s, -3.0).unwrap();
        for m in &sol.m {
            assert_eq!(*m, 1.0 / 3.0);
        }
        let right = qve_solve(&s, 2.5).unwrap();
        for m in &right.m {
            assert_eq!(*m, -0.4);
        }
    }

    #[test]
    fn qve_defining_equation_holds() {
        let model = example_model(1, 200, 0.5, None, 0).unwrap();
        let prof = rescaled_profile(&model, 5).unwrap();
        let sol = qve_solve(&prof.s, -3.0).unwrap();
        let n = prof.s.n();
        let mut sm = vec![0.0; n];
        prof.s.matvec(&sol.m, &mut sm);
        let edge = 2.0 * max_row_sum(&prof.s).sqrt();
        let cap = 1.0 / (3.0 - edge);
        for i in 0..n {
            assert!((1.0 / sol.m[i] + sol.z + sm[i]).abs() < 1e-10);
            assert!(sol.m[i] > 0.0 && sol.m[i] < cap, "M_{i} = {} outside (0, {cap})", sol.m[i]);
        }
    }

    #[test]
    fn qve_rejects_points_near_support() {
        let s = homogeneous(30, 1.0);
        assert!(qve_solve(&s, -1.5).is_err());
        assert!(qve_solve(&s, -2.00000001).is_err());
    }

    #[test]
    fn t1_homogeneous_closed_form() {
        // 1 + d m(t) = 0 under homogeneous variance gives t = d + M/d.
        let n = 50;
        let s = homogeneous(n, 1.0);
        let u = vec![1.0 / (n as f64).sqrt(); n];
        let t = t_k_solve(&[10.0], &[u.clone()], &s, 1).unwrap();
        assert!((t - 10.1).abs() < 1e-8, "t1 = {t}");
        let t_neg = t_k_solve(&[-10.0], &[u], &s, 1).unwrap();
        assert!((t_neg + 10.1).abs() < 1e-8, "t1 = {t_neg}");
    }

    #[test]
    fn t_k_relative_gap_shrinks_with_spike_size() {
        let n = 50;
        let s = homogeneous(n, 1.0);
        let u = vec![1.0 / (n as f64).sqrt(); n];
        let t5 = t_k_solve(&[5.0], &[u.clone()], &s, 1).unwrap();
        let t20 = t_k_solve(&[20.0], &[u], &s, 1).unwrap();
        let rel5 = (t5 - 5.0).abs() / 5.0;
        let rel20 = (t20 - 20.0).abs() / 20.0;
        assert!(rel20 < rel5);
    }

    #[test]
    fn t_k_rejects_bulk_eigenvalues() {
        let n = 30;
        let s = homogeneous(n, 1.0);
        let u = vec![1.0 / (n as f64).sqrt(); n];
        assert!(t_k_solve(&[1.5], &[u], &s, 1).is_err());
    }

    #[test]
    fn t1_close_to_d1_on_preset() {
        let model = example_model(1, 400, 0.6, None, 0).unwrap();
        let prof = rescaled_profile(&model, 5).unwrap();
        let t1 = t_k_solve(&prof.d, &prof.vectors, &prof.s, 1).unwrap();
        let d1 = prof.d[0];
        assert!((t1 - d1).abs() <= 2.0 / d1.abs(), "t1 = {t1}, d1 = {d1}");
        // The spike sits beyond its prediction-free location.
        assert!(t1 > d1);
    }

    #[test]
    fn tail_energy_hand_values() {
        // Rank-2 toy: drop the second component, max entry |d2| * 0.5.
        let v1 = vec![1.0 / 2.0f64.sqrt(), 1.0 / 2.0f64.sqrt()];
        let v2 = vec![1.0 / 2.0f64.sqrt(), -1.0 / 2.0f64.sqrt()];
        let d = [3.0, 0.8];
        let e = tail_energy(&d, &[v1.clone(), v2.clone()], 1, 0.2).unwrap();
        assert!((e - 2.0).abs() < 1e-12, "{e}");
        assert_eq!(tail_energy(&d, &[v1, v2], 2, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn tail_energy_bounded_on_preset_sweep() {
        for theta in [0.2, 0.5, 0.8] {
            let model = example_model(1, 400, theta, None, 0).unwrap();
            let h = mean_matrix(&model).unwrap();
            let pop = population_spectrum(&h, 5).unwrap();
            let e = tail_energy(&pop.values, &pop.vectors, 3, theta).unwrap();
            assert!(e.is_finite() && e > 0.0);
            assert!(e < 10.0, "tail energy {e} at theta={theta}");
        }
    }

    #[test]
    fn expansion_residuals_vanish_without_noise() {
        // X = H exactly: the expansion collapses to eigensolver agreement.
        let model = example_model(1, 200, 0.6, None, 0).unwrap();
        let h = mean_matrix(&model).unwrap();
        let pop = population_spectrum(&h, 3).unwrap();
        let x = crate::spectral::AdjacencyMatrix::from_parts(h.mat().clone(), model.self_loops);
        let spec = leading_spectrum(&x, 3).unwrap();
        for k in 0..3 {
            let v = &pop.vectors[k];
            let v_hat = &spec.vectors[k];
            let sign = if v_hat.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let worst = v
                .iter()
                .zip(v_hat)
                .map(|(a, b)| (sign * b - a).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-7, "k={k}: {worst}");
        }
    }

    #[test]
    fn expansion_residuals_shrink_with_degree_level() {
        let seeds: Vec<u64> = (0..8).collect();
        let mut medians = Vec::new();
        for theta in [0.2, 0.8] {
            let model = example_model(1, 400, theta, None, 0).unwrap();
            let diag = eigen_expansion_residuals(&model, &seeds, 3).unwrap();
            assert_eq!(diag.max_residuals.len(), 8);
            for row in &diag.max_residuals {
                for r in row {
                    assert!(r.is_finite() && *r >= 0.0);
                }
            }
            let worst = diag.median_residuals.iter().cloned().fold(0.0f64, f64::max);
            medians.push(worst);
        }
        assert!(medians[1] < medians[0], "medians {medians:?}");
    }

    #[test]
    fn expansion_diagnostics_deterministic() {
        let model = example_model(1, 200, 0.5, None, 0).unwrap();
        let a = eigen_expansion_residuals(&model, &[3, 9], 3).unwrap();
        let b = eigen_expansion_residuals(&model, &[3, 9], 3).unwrap();
        assert_eq!(a.max_residuals, b.max_residuals);
        assert_eq!(a.eigenvalue_gaps, b.eigenvalue_gaps);
    }

    #[test]
    fn law_gap_shrinks_with_q() {
        let seeds: Vec<u64> = (0..6).collect();
        let mut gaps = Vec::new();
        for theta in [0.3, 0.7] {
            let model = example_model(1, 320, theta, None, 0).unwrap();
            let points = entrywise_law_gap(&model, &[-3.0], &seeds).unwrap();
            assert_eq!(points.len(), 1);
            let p = &points[0];
            assert!(p.median_diag_gap.is_finite() && p.median_diag_gap > 0.0);
            // Off-diagonal entries live on the local-law scale, up to a
            // moderate constant at desk size.
            assert!(p.median_offdiag_max < 40.0 * p.bound_scale,
                "off-diag {} vs scale {}", p.median_offdiag_max, p.bound_scale);
            gaps.push(p.median_diag_gap);
        }
        assert!(gaps[1] < gaps[0], "gaps {gaps:?}");
    }

    #[test]
    fn law_gap_tiny_far_from_support() {
        let model = example_model(1, 200, 0.5, None, 0).unwrap();
        let points = entrywise_law_gap(&model, &[-40.0], &[1, 2, 3]).unwrap();
        // Both resolvent and limit behave as -1/z + O(1/z^2).
        assert!(points[0].median_diag_gap < 5e-3, "{}", points[0].median_diag_gap);
    }

    #[test]
    fn law_gap_rejects_in_support_points() {
        let model = example_model(1, 200, 0.5, None, 0).unwrap();
        assert!(entrywise_law_gap(&model, &[0.1], &[1]).is_err());
    }

    #[test]
    fn diagnostics_csv_round_trips() {
        let model = example_model(1, 200, 0.5, None, 0).unwrap();
        let diag = eigen_expansion_residuals(&model, &[5], 2).unwrap();
        let rows = expansion_rows(&diag);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_diagnostics_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n,theta,k,metric,value");
        assert_eq!(text.lines().count(), rows.len() + 1);
        assert!(text.contains("median_max_residual"));
    }
}
