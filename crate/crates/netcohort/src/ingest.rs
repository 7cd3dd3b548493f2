//! Adjacency file formats and the correlation-network builder that turns a
//! multivariate series panel into a binary graph.
//!
//! Three adjacency formats, all lossless:
//! * edge list: header line `n=<count>`, then whitespace-separated 1-based
//!   node pairs, one per line;
//! * dense CSV: n rows of n comma-separated 0/1 entries;
//! * coordinate: `%%` comment lines, a `n n nnz` size line, then 1-based
//!   `i j 1` triples.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mat::SymMat;
use crate::spectral::AdjacencyMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjFormat {
    EdgeList,
    DenseCsv,
    Coordinate,
}

impl AdjFormat {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "edge-list" => Ok(AdjFormat::EdgeList),
            "dense-csv" => Ok(AdjFormat::DenseCsv),
            "coordinate" => Ok(AdjFormat::Coordinate),
            other => Err(Error::validation(format!(
                "unknown adjacency format '{other}' (expected edge-list, dense-csv, or coordinate)"
            ))),
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::validation(format!("{}:{line}: {msg}", path.display()))
}

/// Loads an adjacency matrix; the self-loop flag is inferred from the
/// diagonal (any loop present turns it on).
pub fn load_adjacency(path: &Path, format: AdjFormat) -> Result<AdjacencyMatrix> {
    let text = std::fs::read_to_string(path)?;
    let (n, data) = match format {
        AdjFormat::EdgeList => parse_edge_list(path, &text)?,
        AdjFormat::DenseCsv => parse_dense_csv(path, &text)?,
        AdjFormat::Coordinate => parse_coordinate(path, &text)?,
    };
    let self_loops = (0..n).any(|i| data[i * n + i] != 0.0);
    AdjacencyMatrix::from_dense(n, data, self_loops)
}

pub fn save_adjacency(path: &Path, format: AdjFormat, x: &AdjacencyMatrix) -> Result<()> {
    let text = match format {
        AdjFormat::EdgeList => format_edge_list(x),
        AdjFormat::DenseCsv => format_dense_csv(x),
        AdjFormat::Coordinate => format_coordinate(x),
    };
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_node(path: &Path, lineno: usize, token: &str, n: usize) -> Result<usize> {
    let v: usize = token
        .parse()
        .map_err(|_| parse_err(path, lineno, format!("'{token}' is not a node index")))?;
    if v == 0 || v > n {
        return Err(parse_err(path, lineno, format!("node {v} outside 1..={n}")));
    }
    Ok(v - 1)
}

fn parse_edge_list(path: &Path, text: &str) -> Result<(usize, Vec<f64>)> {
    let mut lines = text.lines().enumerate();
    let (header_no, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(path, 1, "empty file; expected a n=<count> header"))?;
    let header = header.trim();
    let n: usize = header
        .strip_prefix("n=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(path, header_no + 1, format!("expected n=<count>, got '{header}'")))?;
    if n == 0 {
        return Err(parse_err(path, header_no + 1, "node count must be positive"));
    }
    let mut data = vec![0.0f64; n * n];
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(parse_err(path, idx + 1, format!("expected two node indices, got '{line}'"))),
        };
        let i = parse_node(path, idx + 1, a, n)?;
        let j = parse_node(path, idx + 1, b, n)?;
        data[i * n + j] = 1.0;
        data[j * n + i] = 1.0;
    }
    Ok((n, data))
}

fn format_edge_list(x: &AdjacencyMatrix) -> String {
    let n = x.n();
    let mut out = format!("n={n}\n");
    for i in 0..n {
        for j in i..n {
            if x.mat().get(i, j) != 0.0 {
                let _ = writeln!(out, "{} {}", i + 1, j + 1);
            }
        }
    }
    out
}

fn parse_dense_csv(path: &Path, text: &str) -> Result<(usize, Vec<f64>)> {
    let rows: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(path, 1, "empty file"));
    }
    let mut data = vec![0.0f64; n * n];
    for (row, &(lineno, line)) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("row has {} entries, expected {n}", cells.len()),
            ));
        }
        for (col, cell) in cells.iter().enumerate() {
            let v = match *cell {
                "0" => 0.0,
                "1" => 1.0,
                other => {
                    return Err(parse_err(
                        path,
                        lineno + 1,
                        format!("entry ({}, {}) = '{other}' is not 0/1", row + 1, col + 1),
                    ))
                }
            };
            data[row * n + col] = v;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if data[i * n + j] != data[j * n + i] {
                return Err(Error::validation(format!(
                    "{}: adjacency is asymmetric at ({}, {})",
                    path.display(),
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok((n, data))
}

fn format_dense_csv(x: &AdjacencyMatrix) -> String {
    let n = x.n();
    let mut out = String::with_capacity(2 * n * (n + 1));
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(',');
            }
            out.push(if x.mat().get(i, j) != 0.0 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

fn parse_coordinate(path: &Path, text: &str) -> Result<(usize, Vec<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with("%%"));
    let (size_no, size_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing size line 'n n nnz'"))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(path, size_no + 1, format!("expected 'n n nnz', got '{}'", size_line.trim())));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(path, size_no + 1, "size line is not numeric"))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(path, size_no + 1, "size line is not numeric"))?;
    let nnz: usize = dims[2]
        .parse()
        .map_err(|_| parse_err(path, size_no + 1, "size line is not numeric"))?;
    if rows != cols || rows == 0 {
        return Err(parse_err(path, size_no + 1, format!("matrix must be square and nonempty, got {rows} x {cols}")));
    }
    let n = rows;
    let mut data = vec![0.0f64; n * n];
    let mut seen = 0usize;
    for (idx, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(path, idx + 1, format!("expected 'i j 1', got '{}'", line.trim())));
        }
        let i = parse_node(path, idx + 1, parts[0], n)?;
        let j = parse_node(path, idx + 1, parts[1], n)?;
        if parts[2] != "1" {
            return Err(parse_err(path, idx + 1, format!("entry value '{}' is not 1", parts[2])));
        }
        data[i * n + j] = 1.0;
        data[j * n + i] = 1.0;
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::validation(format!(
            "{}: size line declares {nnz} entries but {seen} were found",
            path.display()
        )));
    }
    Ok((n, data))
}

fn format_coordinate(x: &AdjacencyMatrix) -> String {
    let n = x.n();
    let mut entries = Vec::new();
    for i in 0..n {
        for j in i..n {
            if x.mat().get(i, j) != 0.0 {
                entries.push((i + 1, j + 1));
            }
        }
    }
    let mut out = String::from("%% symmetric binary adjacency, 1-based coordinate triples\n");
    let _ = writeln!(out, "{n} {n} {}", entries.len());
    for (i, j) in entries {
        let _ = writeln!(out, "{i} {j} 1");
    }
    out
}

/// T observations of n real series, column-major, with optional covariates.
#[derive(Clone, Debug)]
pub struct SeriesPanel {
    pub names: Vec<String>,
    /// One vector of T observations per series.
    pub series: Vec<Vec<f64>>,
    /// Optional covariate panel, one vector of T observations per factor.
    pub covariates: Option<Vec<Vec<f64>>>,
}

impl SeriesPanel {
    pub fn observations(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn width(&self) -> usize {
        self.series.len()
    }
}

/// Loads a series panel from CSV: first row holds series names, every later
/// row one observation per series. Missing or non-numeric cells are
/// rejected.
pub fn load_series_panel(path: &Path) -> Result<SeriesPanel> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file; expected a name header row"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let width = names.len();
    if width == 0 || names.iter().any(String::is_empty) {
        return Err(parse_err(path, 1, "header row must name every series"));
    }
    let mut series = vec![Vec::new(); width];
    for (idx, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(parse_err(
                path,
                idx + 1,
                format!("row has {} cells, expected {width}", cells.len()),
            ));
        }
        for (col, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(parse_err(path, idx + 1, format!("missing value in column '{}'", names[col])));
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(path, idx + 1, format!("'{cell}' in column '{}' is not a number", names[col]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, idx + 1, format!("non-finite value in column '{}'", names[col])));
            }
            series[col].push(v);
        }
    }
    if series[0].is_empty() {
        return Err(parse_err(path, 2, "no observation rows"));
    }
    Ok(SeriesPanel { names, series, covariates: None })
}

/// Least-squares residual of y on the covariates plus an intercept, via the
/// normal equations with a rank check.
fn residualize(y: &[f64], covariates: &[Vec<f64>]) -> Result<Vec<f64>> {
    let t = y.len();
    let f = covariates.len();
    let p = f + 1;
    // Design matrix columns: intercept, then each factor.
    let col = |k: usize, row: usize| -> f64 {
        if k == 0 {
            1.0
        } else {
            covariates[k - 1][row]
        }
    };
    let mut ata = vec![0.0f64; p * p];
    let mut aty = vec![0.0f64; p];
    for a in 0..p {
        for b in a..p {
            let mut acc = 0.0;
            for r in 0..t {
                acc += col(a, r) * col(b, r);
            }
            ata[a * p + b] = acc;
            ata[b * p + a] = acc;
        }
        let mut acc = 0.0;
        for r in 0..t {
            acc += col(a, r) * y[r];
        }
        aty[a] = acc;
    }
    let (vals, vecs) = crate::mat::eigh_small(p, &ata)?;
    let max = vals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max == 0.0 || vals.iter().any(|v| v.abs() < 1e-12 * max) {
        return Err(Error::validation(
            "rank-deficient covariates: the factor panel plus intercept does not have full column rank",
        ));
    }
    let mut beta = vec![0.0f64; p];
    for k in 0..p {
        let mut proj = 0.0;
        for a in 0..p {
            proj += vecs[k * p + a] * aty[a];
        }
        let scaled = proj / vals[k];
        for a in 0..p {
            beta[a] += vecs[k * p + a] * scaled;
        }
    }
    let mut resid = Vec::with_capacity(t);
    for r in 0..t {
        let mut fit = 0.0;
        for a in 0..p {
            fit += beta[a] * col(a, r);
        }
        resid.push(y[r] - fit);
    }
    Ok(resid)
}

fn centered(y: &[f64]) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| v - mean).collect()
}

/// Pearson correlations of the (optionally residualized) series,
/// hard-thresholded at |corr| >= threshold into a binary graph with zero
/// diagonal.
pub fn correlation_network(
    panel: &SeriesPanel,
    threshold: f64,
    residualize_flag: bool,
) -> Result<AdjacencyMatrix> {
    let n = panel.width();
    let t = panel.observations();
    if n < 2 {
        return Err(Error::validation(format!("need at least 2 series, got {n}")));
    }
    if t < 3 {
        return Err(Error::validation(format!("need at least 3 observations, got {t}")));
    }
    if panel.series.iter().any(|s| s.len() != t) {
        return Err(Error::validation("series have unequal lengths"));
    }
    if !threshold.is_finite() {
        return Err(Error::validation("threshold must be finite"));
    }
    let covariates = match (residualize_flag, &panel.covariates) {
        (false, _) => None,
        (true, Some(c)) => {
            if c.iter().any(|f| f.len() != t) {
                return Err(Error::validation("covariate length does not match the series"));
            }
            Some(c)
        }
        (true, None) => {
            return Err(Error::validation("residualization requested but the panel has no covariates"))
        }
    };

    let prepared: Vec<Vec<f64>> = panel
        .series
        .iter()
        .map(|y| match covariates {
            Some(c) => residualize(y, c).map(|r| centered(&r)),
            None => Ok(centered(y)),
        })
        .collect::<Result<_>>()?;

    let mut norms = Vec::with_capacity(n);
    for (idx, c) in prepared.iter().enumerate() {
        let power: f64 = panel.series[idx].iter().map(|v| v * v).sum();
        let s2: f64 = c.iter().map(|v| v * v).sum();
        if s2 <= 1e-20 * power.max(f64::MIN_POSITIVE) {
            return Err(Error::validation(format!(
                "series '{}' has zero variance{}",
                panel.names.get(idx).map_or("?", String::as_str),
                if covariates.is_some() { " after residualization" } else { "" }
            )));
        }
        norms.push(s2.sqrt());
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0f64; n];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dot: f64 = prepared[i].iter().zip(&prepared[j]).map(|(a, b)| a * b).sum();
                let corr = dot / (norms[i] * norms[j]);
                if corr.abs() >= threshold {
                    row[j] = 1.0;
                }
            }
            row
        })
        .collect();

    let mut mat = SymMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if rows[i][j] != 0.0 {
                mat.set_sym(i, j, 1.0);
            }
        }
    }
    Ok(AdjacencyMatrix::from_parts(mat, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_model, sample_adjacency};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn all_formats_round_trip_sampled_graph() {
        let model = example_model(1, 80, 0.6, None, 0).unwrap();
        let x = sample_adjacency(&model, 5).unwrap();
        let dir = tmp();
        for (format, name) in [
            (AdjFormat::EdgeList, "g.edges"),
            (AdjFormat::DenseCsv, "g.csv"),
            (AdjFormat::Coordinate, "g.mtx"),
        ] {
            let path = dir.path().join(name);
            save_adjacency(&path, format, &x).unwrap();
            let back = load_adjacency(&path, format).unwrap();
            assert_eq!(back.mat().as_slice(), x.mat().as_slice(), "{format:?}");
            assert_eq!(back.self_loops(), x.self_loops(), "{format:?}");
        }
    }

    #[test]
    fn edge_list_path_graph() {
        let dir = tmp();
        let path = dir.path().join("p.edges");
        std::fs::write(&path, "n=3\n1 2\n2 3\n").unwrap();
        let x = load_adjacency(&path, AdjFormat::EdgeList).unwrap();
        assert_eq!(x.n(), 3);
        assert_eq!(x.mat().get(0, 1), 1.0);
        assert_eq!(x.mat().get(1, 2), 1.0);
        assert_eq!(x.mat().get(0, 2), 0.0);
        assert_eq!(x.mat().get(1, 0), 1.0);
        assert!(!x.self_loops());
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        let dir = tmp();
        let path = dir.path().join("bad.edges");
        std::fs::write(&path, "n=3\n1 2\n7 1\n").unwrap();
        let err = load_adjacency(&path, AdjFormat::EdgeList).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        std::fs::write(&path, "nodes=3\n1 2\n").unwrap();
        let err = load_adjacency(&path, AdjFormat::EdgeList).unwrap_err().to_string();
        assert!(err.contains("n=<count>"), "{err}");
        std::fs::write(&path, "n=3\n1 2 3\n").unwrap();
        assert!(load_adjacency(&path, AdjFormat::EdgeList).is_err());
    }

    #[test]
    fn dense_csv_rejects_asymmetry_at_index() {
        let dir = tmp();
        let path = dir.path().join("asym.csv");
        std::fs::write(&path, "0,1,0\n0,0,1\n0,1,0\n").unwrap();
        let err = load_adjacency(&path, AdjFormat::DenseCsv).unwrap_err().to_string();
        assert!(err.contains("(1, 2)"), "{err}");
    }

    #[test]
    fn dense_csv_rejects_non_binary() {
        let dir = tmp();
        let path = dir.path().join("frac.csv");
        std::fs::write(&path, "0,0.5\n0.5,0\n").unwrap();
        let err = load_adjacency(&path, AdjFormat::DenseCsv).unwrap_err().to_string();
        assert!(err.contains("not 0/1"), "{err}");
    }

    #[test]
    fn coordinate_parses_comments_and_counts() {
        let dir = tmp();
        let path = dir.path().join("c.mtx");
        std::fs::write(&path, "%% a comment\n%% another\n3 3 2\n1 2 1\n2 3 1\n").unwrap();
        let x = load_adjacency(&path, AdjFormat::Coordinate).unwrap();
        assert_eq!(x.mat().get(0, 1), 1.0);
        assert_eq!(x.mat().get(1, 2), 1.0);
        std::fs::write(&path, "3 3 5\n1 2 1\n").unwrap();
        let err = load_adjacency(&path, AdjFormat::Coordinate).unwrap_err().to_string();
        assert!(err.contains("declares 5"), "{err}");
        std::fs::write(&path, "3 3 1\n1 2 2\n").unwrap();
        assert!(load_adjacency(&path, AdjFormat::Coordinate).is_err());
    }

    #[test]
    fn self_loops_survive_round_trip() {
        let mut m = SymMat::zeros(3);
        m.set_sym(0, 0, 1.0);
        m.set_sym(0, 1, 1.0);
        let x = AdjacencyMatrix::from_parts(m, true);
        let dir = tmp();
        for (format, name) in [
            (AdjFormat::EdgeList, "l.edges"),
            (AdjFormat::DenseCsv, "l.csv"),
            (AdjFormat::Coordinate, "l.mtx"),
        ] {
            let path = dir.path().join(name);
            save_adjacency(&path, format, &x).unwrap();
            let back = load_adjacency(&path, format).unwrap();
            assert!(back.self_loops());
            assert_eq!(back.mat().as_slice(), x.mat().as_slice());
        }
    }

    #[test]
    fn panel_loads_names_and_rows() {
        let dir = tmp();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n4,5,6\n7,8,9\n").unwrap();
        let panel = load_series_panel(&path).unwrap();
        assert_eq!(panel.names, vec!["a", "b", "c"]);
        assert_eq!(panel.width(), 3);
        assert_eq!(panel.observations(), 3);
        assert_eq!(panel.series[1], vec![2.0, 5.0, 8.0]);
    }

    #[test]
    fn panel_rejects_missing_values() {
        let dir = tmp();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "a,b\n1,2\n3,\n").unwrap();
        let err = load_series_panel(&path).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("missing"), "{err}");
        std::fs::write(&path, "a,b\n1,x\n").unwrap();
        assert!(load_series_panel(&path).is_err());
    }

    fn gaussian_panel(n: usize, t: usize, seed: u64) -> SeriesPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut series = Vec::with_capacity(n);
        // Correlated pairs: series 2k+1 mixes in series 2k.
        for i in 0..n {
            let mut s = Vec::with_capacity(t);
            for _ in 0..t {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                s.push((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos());
            }
            if i % 2 == 1 {
                let prev = &series[i - 1] as &Vec<f64>;
                for (v, p) in s.iter_mut().zip(prev) {
                    *v = 0.8 * p + 0.6 * *v;
                }
            }
            series.push(s);
        }
        SeriesPanel {
            names: (0..n).map(|i| format!("s{i}")).collect(),
            series,
            covariates: None,
        }
    }

    #[test]
    fn correlation_network_matches_pairwise_oracle() {
        let panel = gaussian_panel(10, 100, 3);
        let x = correlation_network(&panel, 0.5, false).unwrap();
        let t = panel.observations();
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j {
                    0.0
                } else {
                    // Independent oracle: explicit (T-1)-normalized moments.
                    let mi = panel.series[i].iter().sum::<f64>() / t as f64;
                    let mj = panel.series[j].iter().sum::<f64>() / t as f64;
                    let mut cov = 0.0;
                    let mut vi = 0.0;
                    let mut vj = 0.0;
                    for r in 0..t {
                        let a = panel.series[i][r] - mi;
                        let b = panel.series[j][r] - mj;
                        cov += a * b;
                        vi += a * a;
                        vj += b * b;
                    }
                    let denom = (t - 1) as f64;
                    let corr = (cov / denom) / ((vi / denom).sqrt() * (vj / denom).sqrt());
                    if corr.abs() >= 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                };
                assert_eq!(x.mat().get(i, j), want, "({i}, {j})");
            }
        }
        // The construction plants |corr| ~ 0.8 on consecutive pairs.
        assert_eq!(x.mat().get(0, 1), 1.0);
    }

    #[test]
    fn duplicated_series_always_linked() {
        let mut panel = gaussian_panel(3, 50, 9);
        panel.series[2] = panel.series[0].clone();
        let x = correlation_network(&panel, 0.5, false).unwrap();
        assert_eq!(x.mat().get(0, 2), 1.0);
        assert_eq!(x.mat().get(2, 2), 0.0);
    }

    #[test]
    fn impossible_threshold_gives_empty_graph() {
        let panel = gaussian_panel(6, 60, 1);
        let x = correlation_network(&panel, 1.1, false).unwrap();
        assert_eq!(x.mat().max_abs(), 0.0);
    }

    #[test]
    fn correlation_network_scale_invariant() {
        let panel = gaussian_panel(8, 80, 7);
        let base = correlation_network(&panel, 0.5, false).unwrap();
        let mut scaled = panel.clone();
        for v in scaled.series[3].iter_mut() {
            *v *= 3.7e4;
        }
        for v in scaled.series[5].iter_mut() {
            *v *= 1e-6;
        }
        let again = correlation_network(&scaled, 0.5, false).unwrap();
        assert_eq!(base.mat().as_slice(), again.mat().as_slice());
    }

    #[test]
    fn degenerate_panels_rejected() {
        let mut panel = gaussian_panel(4, 50, 2);
        panel.series[1] = vec![2.5; 50];
        let err = correlation_network(&panel, 0.5, false).unwrap_err().to_string();
        assert!(err.contains("zero variance") && err.contains("s1"), "{err}");

        let mut short = gaussian_panel(4, 2, 2);
        short.covariates = None;
        assert!(correlation_network(&short, 0.5, false).is_err());

        let lonely = SeriesPanel {
            names: vec!["a".into()],
            series: vec![vec![1.0, 2.0, 3.0]],
            covariates: None,
        };
        assert!(correlation_network(&lonely, 0.5, false).is_err());
    }

    #[test]
    fn residualization_removes_common_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = 120;
        let factor: Vec<f64> = (0..t)
            .map(|_| {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let mut panel = gaussian_panel(6, t, 13);
        // Load every series on the common factor; raw correlations saturate.
        for s in panel.series.iter_mut() {
            for (v, f) in s.iter_mut().zip(&factor) {
                *v = 3.0 * f + 0.5 * *v;
            }
        }
        let raw = correlation_network(&panel, 0.5, false).unwrap();
        let raw_edges: f64 = raw.mat().as_slice().iter().sum();
        panel.covariates = Some(vec![factor]);
        let resid = correlation_network(&panel, 0.5, true).unwrap();
        let resid_edges: f64 = resid.mat().as_slice().iter().sum();
        assert!(raw_edges > resid_edges, "raw {raw_edges} vs residualized {resid_edges}");
    }

    #[test]
    fn residualization_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = 90;
        let covs: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                (0..t)
                    .map(|_| {
                        let u1: f64 = rng.gen_range(1e-12..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect()
            })
            .collect();
        let panel = gaussian_panel(5, t, 23);
        for y in &panel.series {
            let once = residualize(y, &covs).unwrap();
            let twice = residualize(&once, &covs).unwrap();
            let gap = once
                .iter()
                .zip(&twice)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(gap < 1e-10, "{gap}");
        }
    }

    #[test]
    fn rank_deficient_covariates_rejected() {
        let panel = {
            let mut p = gaussian_panel(3, 40, 31);
            let f: Vec<f64> = (0..40).map(|i| i as f64).collect();
            p.covariates = Some(vec![f.clone(), f]);
            p
        };
        let err = correlation_network(&panel, 0.5, true).unwrap_err().to_string();
        assert!(err.contains("rank-deficient"), "{err}");
    }
}
