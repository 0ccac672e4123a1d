//! Tensor-train (TT) compression of embedding-table regions.
//!
//! A table region `E` of `rows x dim` is viewed as a `d`-way tensor whose mode
//! `k` combines a row digit `i_k < I_k` and a column digit `j_k < J_k` into
//! `m_k = i_k * J_k + j_k`. Row `i` and column `j` split into digits in
//! mixed radix, most significant first:
//!
//! ```text
//! i = sum_k i_k * prod_{l>k} I_l        j = sum_k j_k * prod_{l>k} J_l
//! E(i, j) = G_1[:, i_1, j_1, :] G_2[:, i_2, j_2, :] ... G_d[:, i_d, j_d, :]
//! ```
//!
//! Core `G_k` has extents `R_{k-1} x I_k x J_k x R_k` with `R_0 = R_d = 1` and is
//! stored row-major as 32-bit floats. Cores are produced by TT-SVD and rows are
//! reconstructed with the sequential unfold/matmul/reshape kernel used by the
//! EMB core hardware.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense row-major `f32` matrix: one embedding-table region.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl EmbMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(EmbMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        EmbMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn frobenius(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

// ── Shapes ───────────────────────────────────────────────────────────────────

/// Factor shapes and ranks of a TT representation.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TTShape {
    /// Row factors `I_k`; their product is the padded row count.
    pub row_factors: Vec<usize>,
    /// Column factors `J_k`; their product is the embedding dimension.
    pub col_factors: Vec<usize>,
    /// `R_0 ..= R_d`.
    pub ranks: Vec<usize>,
}

impl TTShape {
    pub fn new(
        row_factors: Vec<usize>,
        col_factors: Vec<usize>,
        ranks: Vec<usize>,
    ) -> Result<Self> {
        let shape = TTShape {
            row_factors,
            col_factors,
            ranks,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Ranks as TT-SVD would produce them with truncation at `max_rank`:
    /// `R_k = min(max_rank, R_{k-1} * I_k * J_k, prod_{l>k} I_l * J_l)`.
    pub fn with_max_rank(
        row_factors: Vec<usize>,
        col_factors: Vec<usize>,
        max_rank: usize,
    ) -> Result<Self> {
        if max_rank == 0 {
            return Err(Error::Config("max_rank must be >= 1".into()));
        }
        let d = row_factors.len();
        if d == 0 || col_factors.len() != d {
            return Err(Error::Shape(format!(
                "need matching non-empty factor lists, got {} row and {} column factors",
                d,
                col_factors.len()
            )));
        }
        let modes: Vec<usize> = row_factors
            .iter()
            .zip(&col_factors)
            .map(|(i, j)| i * j)
            .collect();
        let mut ranks = vec![1usize; d + 1];
        for k in 1..d {
            let right: usize = modes[k..].iter().product();
            ranks[k] = max_rank.min(ranks[k - 1] * modes[k - 1]).min(right);
        }
        TTShape::new(row_factors, col_factors, ranks)
    }

    /// Shape for a region of `rows` rows and `dim` columns split into `d` cores.
    pub fn for_region(rows: u64, dim: u32, d: usize, max_rank: usize) -> Result<Self> {
        TTShape::with_max_rank(factor_rows(rows, d)?, factor_dim(dim, d)?, max_rank)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.row_factors.len();
        if d == 0 || self.col_factors.len() != d || self.ranks.len() != d + 1 {
            return Err(Error::Shape(format!(
                "inconsistent TT shape: {} row factors, {} column factors, {} ranks",
                d,
                self.col_factors.len(),
                self.ranks.len()
            )));
        }
        if self.ranks[0] != 1 || self.ranks[d] != 1 {
            return Err(Error::Shape("boundary TT ranks must be 1".into()));
        }
        if self
            .row_factors
            .iter()
            .chain(&self.col_factors)
            .chain(&self.ranks)
            .any(|&v| v == 0)
        {
            return Err(Error::Shape("TT factors and ranks must be >= 1".into()));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.row_factors.len()
    }

    /// Padded row count `prod I_k`.
    pub fn rows(&self) -> usize {
        self.row_factors.iter().product()
    }

    pub fn dim(&self) -> usize {
        self.col_factors.iter().product()
    }

    /// Element count of core `k`.
    pub fn core_len(&self, k: usize) -> usize {
        self.ranks[k] * self.row_factors[k] * self.col_factors[k] * self.ranks[k + 1]
    }

    /// Total TT parameters `sum_k R_{k-1} I_k J_k R_k`.
    pub fn param_count(&self) -> usize {
        (0..self.d()).map(|k| self.core_len(k)).sum()
    }

    /// Row digits of `i`, most significant first.
    pub fn split_row(&self, mut i: usize) -> Vec<usize> {
        let mut digits = vec![0; self.d()];
        for (k, &f) in self.row_factors.iter().enumerate().rev() {
            digits[k] = i % f;
            i /= f;
        }
        digits
    }

    pub fn join_row(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.row_factors)
            .fold(0, |acc, (&digit, &f)| acc * f + digit)
    }
}

/// Smallest `f` with `f^k >= n`.
fn ceil_root(n: u64, k: u32) -> u64 {
    if n <= 1 {
        return n.max(1);
    }
    let mut f = (n as f64).powf(1.0 / f64::from(k)).floor().max(1.0) as u64;
    while f.checked_pow(k).is_some_and(|p| p >= n) && f > 1 {
        f -= 1;
    }
    while f.checked_pow(k).is_some_and(|p| p < n) {
        f += 1;
    }
    f
}

/// Near-equal factors of a padded row count: each factor is the ceiling
/// `m`-th root of what is still left to cover. The product is `>= rows`.
pub fn factor_rows(rows: u64, d: usize) -> Result<Vec<usize>> {
    if d == 0 {
        return Err(Error::Config("TT core count must be >= 1".into()));
    }
    let mut left = rows.max(1);
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let f = ceil_root(left, (d - k) as u32);
        out.push(f as usize);
        left = left.div_ceil(f);
    }
    Ok(out)
}

/// Exact factorization of `dim` into `d` balanced factors, each `>= 2` when
/// `d > 1`. Fails when `dim` has fewer than `d` prime factors.
pub fn factor_dim(dim: u32, d: usize) -> Result<Vec<usize>> {
    if d == 0 {
        return Err(Error::Config("TT core count must be >= 1".into()));
    }
    if d == 1 {
        return Ok(vec![dim as usize]);
    }
    let mut primes = Vec::new();
    let mut n = dim as usize;
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            primes.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        primes.push(n);
    }
    if primes.len() < d {
        return Err(Error::Config(format!(
            "dim {dim} cannot be split into {d} integer factors >= 2"
        )));
    }
    let mut factors = vec![1usize; d];
    for &p in primes.iter().rev() {
        let smallest = (0..d).min_by_key(|&k| (factors[k], k)).unwrap();
        factors[smallest] *= p;
    }
    factors.sort_unstable_by(|a, b| b.cmp(a));
    Ok(factors)
}

// ── Cores ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct TTCores {
    pub shape: TTShape,
    /// Core `k` in `(R_{k-1}, I_k, J_k, R_k)` row-major order.
    pub cores: Vec<Vec<f32>>,
}

impl TTCores {
    pub fn new(shape: TTShape, cores: Vec<Vec<f32>>) -> Result<Self> {
        let tt = TTCores { shape, cores };
        tt.validate()?;
        Ok(tt)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.cores.len() != self.shape.d() {
            return Err(Error::Shape(format!(
                "{} cores for d = {}",
                self.cores.len(),
                self.shape.d()
            )));
        }
        for (k, core) in self.cores.iter().enumerate() {
            if core.len() != self.shape.core_len(k) {
                return Err(Error::Shape(format!(
                    "core {k} has {} values, expected {}",
                    core.len(),
                    self.shape.core_len(k)
                )));
            }
            if core.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("core {k} holds non-finite values")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    /// Reconstructs row `i` by sequential core-slice products.
    ///
    /// The first slice `G_1[0, i_1, :, :]` is unfolded to `(J_1, R_1)`, every later
    /// slice `G_k[:, i_k, :, :]` to `(R_{k-1}, J_k * R_k)`. After each product
    /// the `(rows, J_k * R_k)` result is reshaped to `(rows * J_k, R_k)`; the
    /// last reshape yields the `dim`-long row.
    pub fn reconstruct_row(&self, i: usize) -> Result<Vec<f32>> {
        let shape = &self.shape;
        if i >= shape.rows() {
            return Err(Error::Index {
                index: i as u64,
                limit: shape.rows() as u64,
            });
        }
        let digits = shape.split_row(i);
        let (j1, r1) = (shape.col_factors[0], shape.ranks[1]);
        let base = digits[0] * j1 * r1;
        let mut acc: Vec<f64> = self.cores[0][base..base + j1 * r1]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        let mut rows = j1;

        for k in 1..shape.d() {
            let (r_in, ik, jk, r_out) = (
                shape.ranks[k],
                shape.row_factors[k],
                shape.col_factors[k],
                shape.ranks[k + 1],
            );
            let width = jk * r_out;
            let core = &self.cores[k];
            let mut next = vec![0.0f64; rows * width];
            for a in 0..r_in {
                let off = (a * ik + digits[k]) * width;
                let u_row = &core[off..off + width];
                for r in 0..rows {
                    let t = acc[r * r_in + a];
                    if t == 0.0 {
                        continue;
                    }
                    let out = &mut next[r * width..(r + 1) * width];
                    for (o, &u) in out.iter_mut().zip(u_row) {
                        *o += t * f64::from(u);
                    }
                }
            }
            acc = next;
            rows *= jk;
        }
        Ok(acc.into_iter().map(|v| v as f32).collect())
    }

    /// Rows for every index; fails before computing anything if any index is
    /// out of range.
    pub fn reconstruct_batch(&self, indices: &[usize]) -> Result<EmbMatrix> {
        let limit = self.shape.rows();
        if let Some(&bad) = indices.iter().find(|&&i| i >= limit) {
            return Err(Error::Index {
                index: bad as u64,
                limit: limit as u64,
            });
        }
        let rows = crate::par::map(indices, |&i| {
            self.reconstruct_row(i).expect("index checked above")
        });
        let dim = self.shape.dim();
        EmbMatrix::new(indices.len(), dim, rows.concat())
    }

    /// Reconstruction of the first `rows` rows.
    pub fn reconstruct(&self, rows: usize) -> Result<EmbMatrix> {
        let indices: Vec<usize> = (0..rows).collect();
        self.reconstruct_batch(&indices)
    }
}

/// TT-SVD of `region` with the given factors, truncating every unfolding to
/// at most `max_rank` singular vectors. Rows are zero-padded up to
/// `prod row_factors`. Singular vectors whose singular value is numerically
/// zero are stored as zeros.
pub fn decompose(
    region: &EmbMatrix,
    row_factors: &[usize],
    col_factors: &[usize],
    max_rank: usize,
) -> Result<TTCores> {
    let shape = TTShape::with_max_rank(row_factors.to_vec(), col_factors.to_vec(), max_rank)?;
    if region.rows > shape.rows() {
        return Err(Error::Shape(format!(
            "{} rows exceed the {} rows addressable by factors {:?}",
            region.rows,
            shape.rows(),
            row_factors
        )));
    }
    if region.cols != shape.dim() {
        return Err(Error::Shape(format!(
            "dim {} does not match column factors {:?}",
            region.cols, col_factors
        )));
    }

    let d = shape.d();
    let modes: Vec<usize> = (0..d)
        .map(|k| shape.row_factors[k] * shape.col_factors[k])
        .collect();
    let mut strides = vec![1usize; d];
    for k in (0..d - 1).rev() {
        strides[k] = strides[k + 1] * modes[k + 1];
    }

    // offsets of every (padded) row and column into the mode-ordered tensor
    let row_off: Vec<usize> = (0..region.rows)
        .map(|i| {
            let digits = shape.split_row(i);
            (0..d)
                .map(|k| digits[k] * shape.col_factors[k] * strides[k])
                .sum()
        })
        .collect();
    let col_off: Vec<usize> = (0..region.cols)
        .map(|mut j| {
            let mut off = 0;
            for k in (0..d).rev() {
                off += (j % shape.col_factors[k]) * strides[k];
                j /= shape.col_factors[k];
            }
            off
        })
        .collect();

    let total: usize = modes.iter().product();
    let mut tensor = vec![0.0f64; total];
    for (i, &ro) in row_off.iter().enumerate() {
        for (j, &co) in col_off.iter().enumerate() {
            tensor[ro + co] = f64::from(region.get(i, j));
        }
    }

    let mut cores = Vec::with_capacity(d);
    let mut rest = tensor;
    for k in 0..d - 1 {
        let m = shape.ranks[k] * modes[k];
        let n = rest.len() / m;
        let r = shape.ranks[k + 1];
        let svd = DMatrix::from_row_slice(m, n, &rest).svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let s = &svd.singular_values;
        let s_max = s.iter().cloned().fold(0.0, f64::max);
        let tol = s_max * f64::EPSILON * m.max(n) as f64;

        let mut core = vec![0.0f32; m * r];
        let mut next = vec![0.0f64; r * n];
        for b in 0..r {
            if s[b] <= tol {
                continue;
            }
            for a in 0..m {
                core[a * r + b] = u[(a, b)] as f32;
            }
            for c in 0..n {
                next[b * n + c] = s[b] * v_t[(b, c)];
            }
        }
        cores.push(core);
        rest = next;
    }
    cores.push(rest.into_iter().map(|v| v as f32).collect());
    TTCores::new(shape, cores)
}

/// `||region - reconstruction||_F / ||region||_F` over the real rows of
/// `region`; the absolute norm when `region` is all zeros.
pub fn reconstruction_error(region: &EmbMatrix, cores: &TTCores) -> Result<f64> {
    if region.cols != cores.shape.dim() || region.rows > cores.shape.rows() {
        return Err(Error::Shape(format!(
            "{}x{} region does not fit TT shape {:?}",
            region.rows, region.cols, cores.shape
        )));
    }
    let approx = cores.reconstruct(region.rows)?;
    let diff: f64 = region
        .data
        .iter()
        .zip(&approx.data)
        .map(|(&a, &b)| {
            let e = f64::from(a) - f64::from(b);
            e * e
        })
        .sum::<f64>()
        .sqrt();
    let norm = region.frobenius();
    Ok(if norm == 0.0 { diff } else { diff / norm })
}

// ── Core file ────────────────────────────────────────────────────────────────

/// Writes `d`, `I[d]`, `J[d]`, `R[d+1]` as little-endian `u32`, then every core
/// as little-endian `f32` in `(R_{k-1}, I_k, J_k, R_k)` row-major order.
pub fn write_cores<W: Write>(tt: &TTCores, out: &mut W) -> Result<()> {
    let shape = &tt.shape;
    let header = std::iter::once(shape.d())
        .chain(shape.row_factors.iter().copied())
        .chain(shape.col_factors.iter().copied())
        .chain(shape.ranks.iter().copied());
    for v in header {
        let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} exceeds u32")))?;
        out.write_all(&v.to_le_bytes())?;
    }
    for core in &tt.cores {
        for v in core {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_cores<R: Read>(mut input: R) -> Result<TTCores> {
    let mut word = [0u8; 4];
    let mut next = |input: &mut R| -> Result<[u8; 4]> {
        input
            .read_exact(&mut word)
            .map_err(|e| Error::parse(0, format!("truncated TT core file: {e}")))?;
        Ok(word)
    };
    let d = u32::from_le_bytes(next(&mut input)?) as usize;
    if d == 0 || d > 64 {
        return Err(Error::parse(0, format!("implausible core count {d}")));
    }
    let mut header = Vec::with_capacity(3 * d + 1);
    for _ in 0..3 * d + 1 {
        header.push(u32::from_le_bytes(next(&mut input)?) as usize);
    }
    let shape = TTShape::new(
        header[..d].to_vec(),
        header[d..2 * d].to_vec(),
        header[2 * d..].to_vec(),
    )?;
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let mut core = Vec::with_capacity(shape.core_len(k));
        for _ in 0..shape.core_len(k) {
            core.push(f32::from_le_bytes(next(&mut input)?));
        }
        cores.push(core);
    }
    TTCores::new(shape, cores)
}

pub fn save_cores(tt: &TTCores, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_cores(tt, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_cores(path: &Path) -> Result<TTCores> {
    read_cores(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> EmbMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        EmbMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn factorizations() {
        assert_eq!(factor_rows(4096, 3).unwrap(), vec![16, 16, 16]);
        let f = factor_rows(1000, 3).unwrap();
        assert!(f.iter().product::<usize>() >= 1000);
        assert_eq!(f, vec![10, 10, 10]);
        assert!(factor_rows(1001, 3).unwrap().iter().product::<usize>() >= 1001);
        assert_eq!(factor_rows(1, 3).unwrap(), vec![1, 1, 1]);
        assert_eq!(factor_dim(64, 3).unwrap(), vec![4, 4, 4]);
        assert_eq!(factor_dim(16, 2).unwrap(), vec![4, 4]);
        assert_eq!(factor_dim(12, 2).unwrap(), vec![4, 3]);
        assert!(factor_dim(13, 2).is_err());
        assert_eq!(ceil_root(27, 3), 3);
        assert_eq!(ceil_root(28, 3), 4);
    }

    #[test]
    fn shape_parameter_count() {
        let s = TTShape::for_region(4096, 64, 3, 4).unwrap();
        assert_eq!(s.ranks, vec![1, 4, 4, 1]);
        assert_eq!(s.param_count(), 256 + 1024 + 256);
        let r1 = TTShape::with_max_rank(vec![5, 1, 1], vec![1, 1, 3], 1).unwrap();
        assert_eq!(r1.param_count(), 5 + 1 + 3);
        assert!(TTShape::new(vec![2], vec![2], vec![2, 1]).is_err());
    }

    #[test]
    fn mixed_radix_digits() {
        let s = TTShape::with_max_rank(vec![3, 4, 5], vec![1, 1, 1], 1).unwrap();
        assert_eq!(s.split_row(0), vec![0, 0, 0]);
        assert_eq!(s.split_row(59), vec![2, 3, 4]);
        assert_eq!(s.split_row(7), vec![0, 1, 2]);
        for i in 0..60 {
            assert_eq!(s.join_row(&s.split_row(i)), i);
        }
    }

    #[test]
    fn single_core_is_the_table() {
        let m = random(8, 4, 1);
        let tt = decompose(&m, &[8], &[4], 3).unwrap();
        for i in 0..8 {
            assert_eq!(tt.reconstruct_row(i).unwrap(), m.row(i));
        }
    }

    #[test]
    fn full_rank_is_exact() {
        let m = random(8, 4, 2);
        let tt = decompose(&m, &[2, 2, 2], &[2, 1, 2], 64).unwrap();
        assert!(reconstruction_error(&m, &tt).unwrap() <= 1e-5);
        for i in 0..8 {
            let row = tt.reconstruct_row(i).unwrap();
            for (a, b) in row.iter().zip(m.row(i)) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn rank_one_outer_product() {
        // u and v must themselves split along the modes for TT rank 1
        let kron = |a: &[f32], b: &[f32]| -> Vec<f32> {
            a.iter()
                .flat_map(|x| b.iter().map(move |y| x * y))
                .collect()
        };
        let u = kron(&[0.5, -1.0, 2.0, 0.25], &[1.0, 0.3, -0.7, 2.0]);
        let v = kron(&[1.5, -0.5], &[0.2, 1.0, -2.0, 0.8]);
        let m = EmbMatrix::new(16, 8, kron(&u, &v)).unwrap();
        let tt = decompose(&m, &[4, 4], &[2, 4], 1).unwrap();
        assert!(reconstruction_error(&m, &tt).unwrap() <= 1e-5);

        // a generic outer product is not: one mode pair cannot carry it
        let u: Vec<f32> = (0..16).map(|i| (i as f32 * 0.37).sin()).collect();
        let generic = EmbMatrix::new(16, 8, kron(&u, &v)).unwrap();
        let tt = decompose(&generic, &[4, 4], &[2, 4], 1).unwrap();
        assert!(reconstruction_error(&generic, &tt).unwrap() > 1e-3);
    }

    #[test]
    fn zero_matrix_gives_zero_cores() {
        let m = EmbMatrix::zeros(12, 6);
        let tt = decompose(&m, &[2, 2, 3], &[1, 2, 3], 2).unwrap();
        assert!(tt.cores.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(reconstruction_error(&m, &tt).unwrap(), 0.0);
    }

    #[test]
    fn padding_and_last_index() {
        let m = random(10, 4, 3);
        let tt = decompose(&m, &[3, 4], &[2, 2], 16).unwrap();
        assert!(reconstruction_error(&m, &tt).unwrap() <= 1e-5);
        let last = tt.reconstruct_row(11).unwrap();
        assert!(last.iter().all(|v| v.abs() < 1e-5));
        assert!(tt.reconstruct_row(12).is_err());
    }

    #[test]
    fn batch_matches_rows() {
        let m = random(16, 4, 4);
        let tt = decompose(&m, &[4, 4], &[2, 2], 2).unwrap();
        let b = tt.reconstruct_batch(&[5, 5, 0]).unwrap();
        assert_eq!(b.row(0), b.row(1));
        assert_eq!(b.row(0), tt.reconstruct_row(5).unwrap().as_slice());
        let full = tt.reconstruct(16).unwrap();
        assert_eq!(full.row(0), b.row(2));
        let empty = tt.reconstruct_batch(&[]).unwrap();
        assert_eq!((empty.rows, empty.cols), (0, 4));
        assert!(tt.reconstruct_batch(&[1, 16]).is_err());
    }

    #[test]
    fn error_shrinks_with_rank() {
        let m = random(64, 16, 5);
        let mut last = f64::INFINITY;
        for rank in 1..=32 {
            let tt = decompose(&m, &[4, 4, 4], &[2, 2, 4], rank).unwrap();
            let err = reconstruction_error(&m, &tt).unwrap();
            assert!(err <= last + 1e-9, "rank {rank}: {err} > {last}");
            last = err;
        }
        assert!(last <= 1e-5);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let m = random(10, 4, 6);
        assert!(decompose(&m, &[3, 3], &[2, 2], 2).is_err());
        assert!(decompose(&m, &[4, 4], &[2, 3], 2).is_err());
    }

    #[test]
    fn core_file_round_trip() {
        let m = random(16, 8, 7);
        let tt = decompose(&m, &[4, 4], &[2, 4], 3).unwrap();
        let mut bytes = Vec::new();
        write_cores(&tt, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], &2u32.to_le_bytes());
        let back = read_cores(bytes.as_slice()).unwrap();
        assert_eq!(back, tt);
        assert!(read_cores(&bytes[..bytes.len() - 1]).is_err());
    }
}
