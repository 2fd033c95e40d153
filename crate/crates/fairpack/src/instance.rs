//! Problem representation: sparse non-negative constraint matrices with
//! column normalization, box-row augmentation, synthetic instance generation,
//! and Matrix Market I/O.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default fill density for [`generate_random`].
pub const DEFAULT_DENSITY: f64 = 0.3;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("column {0} has no positive entry")]
    EmptyColumn(usize),
    #[error("negative entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

/// A column-normalized packing instance `Ax <= 1`, `A >= 0`.
///
/// Entries are stored twice, in row-major (CSR) and column-major (CSC)
/// order, both built once at construction. The structure is immutable
/// afterwards and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    rows: usize,
    cols: usize,
    // CSR: per-row entries sorted by column index.
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    // CSC: per-column entries sorted by row index. `col_logs` caches
    // ln(a_ij) for the log-domain gradient evaluation.
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    col_logs: Vec<f64>,
    col_scale: Vec<f64>,
    objective_offset: f64,
    width: f64,
}

/// Sidecar metadata written next to a Matrix Market file.
#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub m: usize,
    pub n: usize,
    pub nnz: usize,
    pub width: f64,
    pub col_scale: Vec<f64>,
    pub objective_offset: f64,
}

impl ProblemInstance {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.row_vals.len()
    }

    /// Width of the normalized matrix: max non-zero over min non-zero.
    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn col_scale(&self) -> &[f64] {
        &self.col_scale
    }

    /// Additive constant recovering the unscaled objective: -sum_j log M_j.
    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    /// Entries of row `i` as `(column, value)`, in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.row_cols[span.clone()]
            .iter()
            .copied()
            .zip(self.row_vals[span].iter().copied())
    }

    /// Entries of column `j` as `(row, value)`, in increasing row order.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        self.col_rows[span.clone()]
            .iter()
            .copied()
            .zip(self.col_vals[span].iter().copied())
    }

    /// Entries of column `j` as `(row, value, ln value)`.
    pub fn col_with_logs(&self, j: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        let rows = self.col_rows[span.clone()].iter().copied();
        let vals = self.col_vals[span.clone()].iter().copied();
        let logs = self.col_logs[span].iter().copied();
        rows.zip(vals).zip(logs).map(|((i, v), l)| (i, v, l))
    }

    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// `out_i = <A_i, v>` for every row, accumulated in column order.
    pub fn mat_vec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.row_vals[k] * v[self.row_cols[k]];
            }
            out[i] = acc;
        }
    }

    /// `out_j = (A^T w)_j`, accumulated in increasing row order.
    pub fn t_mat_vec(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for i in 0..self.rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.row_cols[k]] += self.row_vals[k] * wi;
            }
        }
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.row_vals[k] * x[self.row_cols[k]];
        }
        acc
    }

    /// Maximum row inner product and its row index; ties go to the
    /// smallest index.
    pub fn max_row_dot(&self, x: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for i in 0..self.rows {
            let v = self.row_dot(i, x);
            if v > best {
                best = v;
                arg = i;
            }
        }
        (best, arg)
    }

    /// All stored entries as `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                out.push((i, j, v));
            }
        }
        out
    }

    /// True when the first `n` rows are exactly the canonical unit rows.
    pub fn has_box_rows(&self) -> bool {
        if self.rows < self.cols {
            return false;
        }
        for i in 0..self.cols {
            let mut entries = self.row(i);
            match (entries.next(), entries.next()) {
                (Some((j, v)), None) => {
                    if j != i || v != 1.0 {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }
}

/// Builds a normalized instance from raw triplets.
///
/// Duplicated coordinates are summed (Matrix Market convention), entries
/// equal to zero are dropped, and each column is divided by its maximum so
/// that the column maxima all equal one. `col_scale` records the divisors
/// and `objective_offset` the induced additive objective shift.
pub fn normalize_columns(
    rows: usize,
    cols: usize,
    triplets: &[(usize, usize, f64)],
) -> Result<ProblemInstance, InstanceError> {
    if rows == 0 || cols == 0 {
        return Err(InstanceError::BadParam(
            "matrix dimensions must be positive".into(),
        ));
    }
    for &(i, j, v) in triplets {
        if i >= rows || j >= cols {
            return Err(InstanceError::Parse(format!(
                "entry ({i}, {j}) outside a {rows}x{cols} matrix"
            )));
        }
        if v < 0.0 {
            return Err(InstanceError::NegativeEntry(i, j));
        }
    }

    // Sum duplicates, then drop explicit zeros.
    let mut merged: Vec<(usize, usize, f64)> = triplets.to_vec();
    merged.sort_by_key(|&(i, j, _)| (i, j));
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(merged.len());
    for (i, j, v) in merged {
        match entries.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => entries.push((i, j, v)),
        }
    }
    entries.retain(|&(_, _, v)| v != 0.0);

    let mut col_max = vec![0.0f64; cols];
    for &(_, j, v) in &entries {
        if v > col_max[j] {
            col_max[j] = v;
        }
    }
    if let Some(j) = col_max.iter().position(|&m| m <= 0.0) {
        return Err(InstanceError::EmptyColumn(j));
    }

    for entry in entries.iter_mut() {
        entry.2 /= col_max[entry.1];
    }
    let objective_offset = -col_max.iter().map(|m| m.ln()).sum::<f64>();
    Ok(build_instance(
        rows,
        cols,
        entries,
        col_max,
        objective_offset,
    ))
}

fn build_instance(
    rows: usize,
    cols: usize,
    mut entries: Vec<(usize, usize, f64)>,
    col_scale: Vec<f64>,
    objective_offset: f64,
) -> ProblemInstance {
    let nnz = entries.len();

    entries.sort_by_key(|&(i, j, _)| (i, j));
    let mut row_ptr = vec![0usize; rows + 1];
    let mut row_cols = Vec::with_capacity(nnz);
    let mut row_vals = Vec::with_capacity(nnz);
    for &(i, j, v) in &entries {
        row_ptr[i + 1] += 1;
        row_cols.push(j);
        row_vals.push(v);
    }
    for i in 0..rows {
        row_ptr[i + 1] += row_ptr[i];
    }

    entries.sort_by_key(|&(i, j, _)| (j, i));
    let mut col_ptr = vec![0usize; cols + 1];
    let mut col_rows = Vec::with_capacity(nnz);
    let mut col_vals = Vec::with_capacity(nnz);
    let mut col_logs = Vec::with_capacity(nnz);
    for &(i, j, v) in &entries {
        col_ptr[j + 1] += 1;
        col_rows.push(i);
        col_vals.push(v);
        col_logs.push(v.ln());
    }
    for j in 0..cols {
        col_ptr[j + 1] += col_ptr[j];
    }

    let mut max_v = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    for &v in &row_vals {
        max_v = max_v.max(v);
        min_v = min_v.min(v);
    }
    let width = if row_vals.is_empty() {
        1.0
    } else {
        max_v / min_v
    };

    ProblemInstance {
        rows,
        cols,
        row_ptr,
        row_cols,
        row_vals,
        col_ptr,
        col_rows,
        col_vals,
        col_logs,
        col_scale,
        objective_offset,
        width,
    }
}

/// Ensures the first `n` rows are the canonical unit rows `e_1..e_n`,
/// prepending them when absent. Idempotent.
///
/// Returns the (possibly) augmented instance and a map from new row indices
/// to original ones; synthetic rows map to `None`.
pub fn augment_with_box_rows(inst: &ProblemInstance) -> (ProblemInstance, Vec<Option<usize>>) {
    let n = inst.cols();
    if inst.has_box_rows() {
        return (inst.clone(), (0..inst.rows()).map(Some).collect());
    }
    let mut entries = Vec::with_capacity(inst.nnz() + n);
    for j in 0..n {
        entries.push((j, j, 1.0));
    }
    for (i, j, v) in inst.triplets() {
        entries.push((i + n, j, v));
    }
    let mut row_map = vec![None; n];
    row_map.extend((0..inst.rows()).map(Some));
    let augmented = build_instance(
        inst.rows() + n,
        n,
        entries,
        inst.col_scale.clone(),
        inst.objective_offset,
    );
    (augmented, row_map)
}

/// Generates a seeded random normalized instance with non-zero entries
/// drawn log-uniformly on `[1/rho, 1]` at [`DEFAULT_DENSITY`].
pub fn generate_random(
    n: usize,
    m: usize,
    rho: f64,
    seed: u64,
) -> Result<ProblemInstance, InstanceError> {
    generate_random_with_density(n, m, rho, DEFAULT_DENSITY, seed)
}

/// As [`generate_random`] with an explicit fill density in `(0, 1]`.
/// Every column receives at least one entry.
pub fn generate_random_with_density(
    n: usize,
    m: usize,
    rho: f64,
    density: f64,
    seed: u64,
) -> Result<ProblemInstance, InstanceError> {
    if n == 0 || m == 0 {
        return Err(InstanceError::BadParam("n and m must be at least 1".into()));
    }
    if rho < 1.0 {
        return Err(InstanceError::BadParam(format!("rho = {rho} must be >= 1")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(InstanceError::BadParam(format!(
            "density = {density} must be in (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_rho = rho.ln();
    let mut entries = Vec::new();
    for j in 0..n {
        let guaranteed = rng.gen_range(0..m);
        for i in 0..m {
            let keep = rng.gen::<f64>() < density;
            if keep || i == guaranteed {
                let u: f64 = rng.gen();
                entries.push((i, j, (-u * log_rho).exp()));
            }
        }
    }
    normalize_columns(m, n, &entries)
}

/// Reads a `%%MatrixMarket matrix coordinate real general` file
/// (1-based indices) and returns the normalized instance.
pub fn read_matrix_market(path: &Path) -> Result<ProblemInstance, InstanceError> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .ok_or_else(|| InstanceError::Parse("empty file".into()))??;
    let fields: Vec<String> = header
        .split_whitespace()
        .map(|s| s.to_lowercase())
        .collect();
    let expected = ["%%matrixmarket", "matrix", "coordinate", "real", "general"];
    if fields.len() != expected.len() || fields.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(InstanceError::Parse(format!(
            "unsupported header: {header:?} (expected coordinate real general)"
        )));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        if dims.is_none() {
            let m = parse_field::<usize>(parts.next(), "row count")?;
            let n = parse_field::<usize>(parts.next(), "column count")?;
            let nnz = parse_field::<usize>(parts.next(), "nnz count")?;
            dims = Some((m, n, nnz));
            triplets.reserve(nnz);
            continue;
        }
        let (m, n, _) = dims.unwrap();
        let i = parse_field::<usize>(parts.next(), "row index")?;
        let j = parse_field::<usize>(parts.next(), "column index")?;
        let v = parse_field::<f64>(parts.next(), "value")?;
        if i < 1 || i > m || j < 1 || j > n {
            return Err(InstanceError::Parse(format!(
                "entry ({i}, {j}) outside declared {m}x{n} matrix"
            )));
        }
        triplets.push((i - 1, j - 1, v));
    }
    let (m, n, nnz) = dims.ok_or_else(|| InstanceError::Parse("missing size line".into()))?;
    if triplets.len() != nnz {
        return Err(InstanceError::Parse(format!(
            "declared {nnz} entries, found {}",
            triplets.len()
        )));
    }
    normalize_columns(m, n, &triplets)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T, InstanceError> {
    field
        .ok_or_else(|| InstanceError::Parse(format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| InstanceError::Parse(format!("invalid {what}")))
}

/// Writes the instance in Matrix Market coordinate format (column-major,
/// 1-based) plus a JSON sidecar at `<path>.json`.
pub fn write_matrix_market(inst: &ProblemInstance, path: &Path) -> Result<(), InstanceError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", inst.rows(), inst.cols(), inst.nnz())?;
    for j in 0..inst.cols() {
        for (i, v) in inst.col(j) {
            writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
        }
    }
    out.flush()?;

    let sidecar = InstanceSidecar {
        m: inst.rows(),
        n: inst.cols(),
        nnz: inst.nnz(),
        width: inst.width(),
        col_scale: inst.col_scale.clone(),
        objective_offset: inst.objective_offset,
    };
    let json_path = sidecar_path(path);
    let file = File::create(json_path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)
        .map_err(|e| InstanceError::Parse(e.to_string()))?;
    Ok(())
}

/// Path of the JSON sidecar associated with a Matrix Market file.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

#[cfg(test)]
pub(crate) fn from_dense(rows: &[&[f64]]) -> ProblemInstance {
    let m = rows.len();
    let n = rows[0].len();
    let mut triplets = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), n);
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                triplets.push((i, j, v));
            }
        }
    }
    normalize_columns(m, n, &triplets).unwrap()
}
