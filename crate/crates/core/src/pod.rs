//! Snapshot proper orthogonal decomposition.
//!
//! Snapshots are flattened vectors of field values. Each value carries a
//! nonnegative quadrature weight so the L2 inner product over the domain is
//! `⟨u, v⟩ = Σ w_j u_j v_j`. The modes come from the eigenvectors of the
//! `M × M` correlation matrix of the mean-subtracted snapshots.

use std::path::Path;

use crate::error::{Error, Result};

/// `M` snapshots of equal length with one weight per stored value.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEnsemble {
    snapshots: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SnapshotEnsemble {
    pub fn new(snapshots: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Invalid("ensemble has no snapshots".into()));
        }
        let len = weights.len();
        if len == 0 {
            return Err(Error::Invalid("snapshots are empty".into()));
        }
        if let Some(i) = snapshots.iter().position(|s| s.len() != len) {
            return Err(Error::Invalid(format!(
                "snapshot {i} has {} values, expected {len}",
                snapshots[i].len()
            )));
        }
        if snapshots.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("snapshot values must be finite".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Invalid("weights must be finite and nonnegative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::Invalid("weights must have a positive sum".into()));
        }
        Ok(SnapshotEnsemble { snapshots, weights })
    }

    /// Snapshots whose cells each hold `components` values sharing the
    /// cell's weight.
    pub fn from_cells(snapshots: Vec<Vec<f64>>, cell_weights: &[f64], components: usize) -> Result<Self> {
        if components == 0 {
            return Err(Error::Invalid("components must be positive".into()));
        }
        let weights = cell_weights
            .iter()
            .flat_map(|w| std::iter::repeat_n(*w, components))
            .collect();
        Self::new(snapshots, weights)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn snapshots(&self) -> &[Vec<f64>] {
        &self.snapshots
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }
}

pub fn mean_snapshot(ens: &SnapshotEnsemble) -> Vec<f64> {
    let m = ens.len() as f64;
    let mut mean = vec![0.0; ens.dim()];
    for s in ens.snapshots() {
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    mean
}

fn fluctuations(ens: &SnapshotEnsemble, mean: &[f64]) -> Vec<Vec<f64>> {
    ens.snapshots()
        .iter()
        .map(|s| s.iter().zip(mean).map(|(a, b)| a - b).collect())
        .collect()
}

/// `C_mn = (1/M) ⟨u_m − u0, u_n − u0⟩`.
pub fn correlation_matrix(ens: &SnapshotEnsemble) -> Result<Vec<Vec<f64>>> {
    let m = ens.len();
    if m < 2 {
        return Err(Error::Invalid("correlation matrix needs at least two snapshots".into()));
    }
    let fl = fluctuations(ens, &mean_snapshot(ens));
    let mut c = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let v = ens.inner(&fl[i], &fl[j]) / m as f64;
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    Ok(c)
}

/// Eigenpairs sorted by decreasing eigenvalue; `vectors[i]` pairs with
/// `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigensolver for small symmetric matrices.
pub fn symmetric_eigendecomposition(c: &[Vec<f64>]) -> Result<SymmetricEigen> {
    let n = c.len();
    if n == 0 || c.iter().any(|row| row.len() != n) {
        return Err(Error::Invalid("matrix must be square and nonempty".into()));
    }
    if c.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("matrix entries must be finite".into()));
    }
    let norm = frobenius(c);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((c[i][j] - c[j][i]).abs());
        }
    }
    if asym > 1e-12 * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    let mut a: Vec<Vec<f64>> = c.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let off = |a: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..100 {
        if off(&a) <= 1e-14 * norm || norm == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = cs * vp - sn * vq;
                    row[q] = sn * vp + cs * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among exact ties
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| a[i][i]).collect(),
        vectors: order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodResult {
    pub mean: Vec<f64>,
    /// All eigenvalues of the correlation matrix, decreasing.
    pub eigenvalues: Vec<f64>,
    /// Retained modes, orthonormal in the weighted inner product.
    pub modes: Vec<Vec<f64>>,
    /// `amplitudes[i][m]` is the coefficient of mode `i` in snapshot `m`.
    pub amplitudes: Vec<Vec<f64>>,
}

impl PodResult {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// `u0 + Σ_{i<n} a_i^m u_i`.
    pub fn reconstruct(&self, snapshot: usize, n_modes: usize) -> Vec<f64> {
        let mut out = self.mean.clone();
        for i in 0..n_modes.min(self.n_modes()) {
            let a = self.amplitudes[i][snapshot];
            for (o, u) in out.iter_mut().zip(&self.modes[i]) {
                *o += a * u;
            }
        }
        out
    }

    /// Mean squared weighted norm of the reconstruction residual with
    /// `n_modes` modes.
    pub fn truncation_residual(&self, ens: &SnapshotEnsemble, n_modes: usize) -> f64 {
        let m = ens.len();
        (0..m)
            .map(|k| {
                let rec = self.reconstruct(k, n_modes);
                let diff: Vec<f64> = ens.snapshots()[k].iter().zip(&rec).map(|(a, b)| a - b).collect();
                ens.inner(&diff, &diff)
            })
            .sum::<f64>()
            / m as f64
    }
}

/// Modes `u_i = Σ_m e_i^m (u_m − u0) / √(M λ_i)` and amplitudes
/// `a_i^m = √(M λ_i) e_i^m`, for eigenvalues above `1e-12 λ_1`.
pub fn pod_modes_and_amplitudes(ens: &SnapshotEnsemble, eig: &SymmetricEigen) -> Result<PodResult> {
    let m = ens.len();
    if eig.values.len() != m || eig.vectors.iter().any(|v| v.len() != m) {
        return Err(Error::Invalid("eigendecomposition does not match the ensemble".into()));
    }
    let mean = mean_snapshot(ens);
    let fl = fluctuations(ens, &mean);
    let lambda1 = eig.values.first().copied().unwrap_or(0.0);
    let mut modes = Vec::new();
    let mut amplitudes = Vec::new();
    for (lambda, e) in eig.values.iter().zip(&eig.vectors) {
        if !(*lambda > 1e-12 * lambda1) || !(*lambda > 0.0) {
            break;
        }
        let scale = (m as f64 * lambda).sqrt();
        let mut mode = vec![0.0; ens.dim()];
        for (coef, f) in e.iter().zip(&fl) {
            for (u, v) in mode.iter_mut().zip(f) {
                *u += coef * v;
            }
        }
        mode.iter_mut().for_each(|u| *u /= scale);
        modes.push(mode);
        amplitudes.push(e.iter().map(|c| c * scale).collect());
    }
    if modes.is_empty() {
        return Err(Error::Invalid("no POD mode has positive energy".into()));
    }
    Ok(PodResult {
        mean,
        eigenvalues: eig.values.clone(),
        modes,
        amplitudes,
    })
}

/// Full pipeline: correlation matrix, eigendecomposition, modes.
pub fn pod(ens: &SnapshotEnsemble) -> Result<PodResult> {
    let c = correlation_matrix(ens)?;
    let eig = symmetric_eigendecomposition(&c)?;
    pod_modes_and_amplitudes(ens, &eig)
}

/// One planar velocity snapshot: cell centres and interleaved `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSnapshot {
    pub positions: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_row(what: &str, line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(Error::parse(
            what,
            format!("line {line_no}: expected {expected} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(what, format!("line {line_no}: bad number {f:?}")))
        })
        .collect()
}

/// Parses a snapshot CSV with header `x,y,u,v`.
pub fn parse_snapshot_csv(text: &str) -> Result<CellSnapshot> {
    let what = "snapshot csv";
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| Error::parse(what, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["x", "y", "u", "v"] {
        return Err(Error::parse(what, format!("header must be x,y,u,v, found {header:?}")));
    }
    let mut positions = Vec::new();
    let mut values = Vec::new();
    for (no, line) in lines {
        let row = parse_row(what, no, line, 4)?;
        positions.push([row[0], row[1]]);
        values.extend_from_slice(&row[2..]);
    }
    if positions.is_empty() {
        return Err(Error::parse(what, "no cells"));
    }
    Ok(CellSnapshot { positions, values })
}

/// Parses a weights file with header `w`, one nonnegative weight per row.
pub fn parse_weights(text: &str) -> Result<Vec<f64>> {
    let what = "weights";
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| Error::parse(what, "empty file"))?;
    if header != "w" {
        return Err(Error::parse(what, format!("header must be w, found {header:?}")));
    }
    let mut out = Vec::new();
    for (no, line) in lines {
        let w = parse_row(what, no, line, 1)?[0];
        if w < 0.0 {
            return Err(Error::parse(what, format!("line {no}: negative weight")));
        }
        out.push(w);
    }
    if out.is_empty() {
        return Err(Error::parse(what, "no weights"));
    }
    Ok(out)
}

pub const MATRIX_MAGIC: &[u8; 4] = b"PODM";

/// Decodes the binary snapshot matrix: `PODM`, rows and columns as
/// little-endian `u32`, then `rows × cols` little-endian `f64` row by row.
pub fn decode_matrix(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let what = "snapshot matrix";
    if bytes.len() < 12 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::parse(what, "missing PODM header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::parse(what, "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            what,
            format!("{rows}x{cols} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::parse(what, "empty matrix"));
    }
    let data = &bytes[12..];
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row: Vec<f64> = (0..cols)
            .map(|c| {
                let off = 8 * (r * cols + c);
                f64::from_le_bytes(data[off..off + 8].try_into().unwrap())
            })
            .collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(what, format!("row {r} has a non-finite value")));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn encode_matrix(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid("rows have different lengths".into()));
    }
    let (nr, nc) = (
        u32::try_from(rows.len()).map_err(|_| Error::Invalid("too many rows".into()))?,
        u32::try_from(cols).map_err(|_| Error::Invalid("too many columns".into()))?,
    );
    let mut out = Vec::with_capacity(12 + 8 * rows.len() * cols);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&nr.to_le_bytes());
    out.extend_from_slice(&nc.to_le_bytes());
    for v in rows.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads every `*.csv` in `dir` except the weights file, in name order.
pub fn load_snapshot_dir(dir: &Path, weights_path: &Path) -> Result<(SnapshotEnsemble, Vec<[f64; 2]>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .filter(|p| p.canonicalize().ok() != weights_path.canonicalize().ok())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Invalid(format!("no snapshot CSV files in {}", dir.display())));
    }
    let weights = parse_weights(&read_text(weights_path)?)?;
    let mut snaps = Vec::with_capacity(files.len());
    let mut positions = None;
    for f in &files {
        let s = parse_snapshot_csv(&read_text(f)?).map_err(|e| Error::Invalid(format!("{}: {e}", f.display())))?;
        if s.positions.len() != weights.len() {
            return Err(Error::Invalid(format!(
                "{} has {} cells but the weights file has {}",
                f.display(),
                s.positions.len(),
                weights.len()
            )));
        }
        match &positions {
            None => positions = Some(s.positions.clone()),
            Some(p) if *p != s.positions => {
                return Err(Error::Invalid(format!("{} uses different cell positions", f.display())));
            }
            _ => {}
        }
        snaps.push(s.values);
    }
    Ok((SnapshotEnsemble::from_cells(snaps, &weights, 2)?, positions.unwrap()))
}

/// Loads a binary matrix (row = snapshot) with one weight per column.
pub fn load_matrix(path: &Path, weights_path: &Path) -> Result<SnapshotEnsemble> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let rows = decode_matrix(&bytes)?;
    let weights = parse_weights(&read_text(weights_path)?)?;
    SnapshotEnsemble::new(rows, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ensemble(seed: u64, m: usize, dim: usize) -> SnapshotEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snaps = (0..m)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let weights = (0..dim).map(|_| rng.random_range(0.1..2.0)).collect();
        SnapshotEnsemble::new(snaps, weights).unwrap()
    }

    #[test]
    fn mean_examples() {
        let v = vec![1.0, -2.0, 0.5];
        let e = SnapshotEnsemble::new(vec![v.clone(), v.iter().map(|x| -x).collect()], vec![1.0; 3]).unwrap();
        assert_eq!(mean_snapshot(&e), vec![0.0; 3]);
        let same = SnapshotEnsemble::new(vec![v.clone(); 4], vec![1.0; 3]).unwrap();
        assert_eq!(mean_snapshot(&same), v);
        let three =
            SnapshotEnsemble::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]], vec![1.0; 2]).unwrap();
        assert_eq!(mean_snapshot(&three), vec![0.0, 0.0]);
    }

    #[test]
    fn correlation_examples() {
        // ⟨v, v⟩ = 2
        let v = vec![1.0, 1.0];
        let e = SnapshotEnsemble::new(vec![v.clone(), vec![-1.0, -1.0]], vec![1.0; 2]).unwrap();
        assert_eq!(correlation_matrix(&e).unwrap(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let same = SnapshotEnsemble::new(vec![v.clone(); 3], vec![1.0; 2]).unwrap();
        assert!(correlation_matrix(&same).unwrap().iter().flatten().all(|x| *x == 0.0));
        let r = random_ensemble(3, 6, 10);
        for row in correlation_matrix(&r).unwrap() {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
        let one = SnapshotEnsemble::new(vec![v], vec![1.0; 2]).unwrap();
        assert!(correlation_matrix(&one).is_err());
    }

    #[test]
    fn ensemble_validation() {
        assert!(SnapshotEnsemble::new(vec![], vec![1.0]).is_err());
        assert!(SnapshotEnsemble::new(vec![vec![1.0, 2.0], vec![1.0]], vec![1.0, 1.0]).is_err());
        assert!(SnapshotEnsemble::new(vec![vec![1.0]], vec![-1.0]).is_err());
        assert!(SnapshotEnsemble::new(vec![vec![1.0]], vec![0.0]).is_err());
        let e = SnapshotEnsemble::from_cells(vec![vec![1.0, 2.0, 3.0, 4.0]], &[0.5, 2.0], 2).unwrap();
        assert_eq!(e.weights(), &[0.5, 0.5, 2.0, 2.0]);
    }

    #[test]
    fn eigen_examples() {
        let d = symmetric_eigendecomposition(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(d.values, vec![3.0, 1.0]);
        assert_eq!(d.vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let d = symmetric_eigendecomposition(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert!((d.values[0] - 2.0).abs() < 1e-15 && d.values[1].abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let e1 = &d.vectors[0];
        assert!((e1[0].abs() - s).abs() < 1e-15 && (e1[0] + e1[1]).abs() < 1e-15);
        assert!(matches!(
            symmetric_eigendecomposition(&[vec![1.0, 2.0], vec![0.0, 1.0]]),
            Err(Error::NotSymmetric(_))
        ));
        assert!(symmetric_eigendecomposition(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn eigen_reconstruction_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = vec![vec![0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                c[i][j] = v;
                c[j][i] = v;
            }
        }
        let d = symmetric_eigendecomposition(&c).unwrap();
        let norm = frobenius(&c);
        for i in 0..6 {
            for j in 0..6 {
                let rec: f64 = (0..6).map(|k| d.vectors[k][i] * d.values[k] * d.vectors[k][j]).sum();
                assert!((rec - c[i][j]).abs() < 1e-10 * norm);
            }
        }
        for (lambda, e) in d.values.iter().zip(&d.vectors) {
            let res: f64 = (0..6)
                .map(|i| ((0..6).map(|j| c[i][j] * e[j]).sum::<f64>() - lambda * e[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-10 * norm);
        }
        assert!(d.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn two_snapshot_hand_example() {
        // v = (1, 1) so ⟨v, v⟩ = 2
        let e = SnapshotEnsemble::new(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![1.0; 2]).unwrap();
        let p = pod(&e).unwrap();
        assert!((p.eigenvalues[0] - 2.0).abs() < 1e-15);
        assert!(p.eigenvalues[1].abs() < 1e-15);
        assert_eq!(p.n_modes(), 1);
        let sign = p.amplitudes[0][0].signum();
        let s2 = 2f64.sqrt();
        assert!((p.amplitudes[0][0] - sign * s2).abs() < 1e-15);
        assert!((p.amplitudes[0][1] + sign * s2).abs() < 1e-15);
        for u in &p.modes[0] {
            assert!((u - sign / s2).abs() < 1e-15);
        }
        let second_moment: f64 = p.amplitudes[0].iter().map(|a| a * a).sum::<f64>() / 2.0;
        assert!((second_moment - 2.0).abs() < 1e-14);
    }

    #[test]
    fn completeness_with_all_modes() {
        let e = random_ensemble(5, 7, 12);
        let p = pod(&e).unwrap();
        assert_eq!(p.n_modes(), 6);
        for k in 0..7 {
            let rec = p.reconstruct(k, 6);
            for (a, b) in rec.iter().zip(&e.snapshots()[k]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Residual of the best rank-n approximation of the weighted
    /// fluctuation matrix, from its singular values.
    fn svd_residual(ens: &SnapshotEnsemble, n: usize) -> f64 {
        let mean = mean_snapshot(ens);
        let (dim, m) = (ens.dim(), ens.len());
        let x = DMatrix::from_fn(dim, m, |i, j| {
            ens.weights()[i].sqrt() * (ens.snapshots()[j][i] - mean[i])
        });
        let mut sv: Vec<f64> = x.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv.iter().skip(n).map(|s| s * s).sum::<f64>() / m as f64
    }

    #[test]
    fn degenerate_ties_keep_index_order() {
        let d = symmetric_eigendecomposition(&[vec![2.0, 0.0, 0.0], vec![0.0, 5.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(d.values, vec![5.0, 2.0, 2.0]);
        assert_eq!(d.vectors[1], vec![1.0, 0.0, 0.0]);
        assert_eq!(d.vectors[2], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn matrix_round_trip_and_rejections() {
        let rows = vec![vec![1.0, 2.5, -3.0], vec![0.0, 1e-300, 7.0]];
        let bytes = encode_matrix(&rows).unwrap();
        assert_eq!(decode_matrix(&bytes).unwrap(), rows);
        assert!(decode_matrix(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_matrix(b"PODX\x01\0\0\0\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_matrix(b"PODM\xff\xff\xff\xff\xff\xff\xff\xff").is_err());
        let mut nan = encode_matrix(&[vec![1.0]]).unwrap();
        nan[12..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_matrix(&nan).is_err());
    }

    #[test]
    fn csv_parsers() {
        let s = parse_snapshot_csv("# columns: x,y,u,v\nx,y,u,v\n0,0,1,2\n1,0,3,4\n").unwrap();
        assert_eq!(s.positions, vec![[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(s.values, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(parse_snapshot_csv("x,y,u\n0,0,1\n").is_err());
        assert!(parse_snapshot_csv("x,y,u,v\n0,0,1\n").is_err());
        assert!(parse_snapshot_csv("x,y,u,v\n0,0,nan,1\n").is_err());
        assert_eq!(parse_weights("w\n0.5\n2\n").unwrap(), vec![0.5, 2.0]);
        assert!(parse_weights("w\n-1\n").is_err());
        assert!(parse_weights("weight\n1\n").is_err());
    }

    #[test]
    fn snapshot_dir_loading() {
        let dir = tempfile::tempdir().unwrap();
        let w = dir.path().join("weights.csv");
        std::fs::write(&w, "w\n1\n3\n").unwrap();
        std::fs::write(dir.path().join("s0.csv"), "x,y,u,v\n0,0,1,0\n1,0,0,1\n").unwrap();
        std::fs::write(dir.path().join("s1.csv"), "x,y,u,v\n0,0,-1,0\n1,0,0,-1\n").unwrap();
        let (ens, pos) = load_snapshot_dir(dir.path(), &w).unwrap();
        assert_eq!(ens.len(), 2);
        assert_eq!(ens.weights(), &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(pos.len(), 2);
        std::fs::write(dir.path().join("s2.csv"), "x,y,u,v\n0,0,1,0\n").unwrap();
        assert!(load_snapshot_dir(dir.path(), &w).is_err());
    }

    proptest! {
        #[test]
        fn pod_invariants_on_random_ensembles(seed in 0u64..1000, m in 2usize..=8, extra in 0usize..6) {
            let ens = random_ensemble(seed, m, m + 2 + extra);
            let p = pod(&ens).unwrap();
            let n = p.n_modes();
            prop_assert_eq!(n, m - 1);
            prop_assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(p.eigenvalues[m - 1].abs() < 1e-12 * p.eigenvalues[0]);
            for i in 0..n {
                for j in 0..n {
                    let ip = ens.inner(&p.modes[i], &p.modes[j]);
                    let delta = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((ip - delta).abs() < 1e-10, "modes {} {}: {}", i, j, ip);
                    let moment: f64 = (0..m).map(|k| p.amplitudes[i][k] * p.amplitudes[j][k]).sum::<f64>() / m as f64;
                    prop_assert!((moment - p.eigenvalues[i] * delta).abs() < 1e-10);
                }
                let mean_a: f64 = p.amplitudes[i].iter().sum::<f64>() / m as f64;
                prop_assert!(mean_a.abs() < 1e-10);
            }
            for k in 0..n {
                let ours = p.truncation_residual(&ens, k);
                let oracle = svd_residual(&ens, k);
                prop_assert!((ours - oracle).abs() < 1e-10, "rank {}: {} vs {}", k, ours, oracle);
            }
        }

        #[test]
        fn matrix_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_matrix(&bytes);
        }

        #[test]
        fn text_parsers_never_panic(text in "\\PC{0,200}") {
            let _ = parse_snapshot_csv(&text);
            let _ = parse_weights(&text);
        }
    }
}
