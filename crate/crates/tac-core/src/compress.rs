//! Pruning and codebook quantization of fully connected layers.
//!
//! A layer is compressed in two steps: magnitude pruning removes an exact
//! count of the smallest-magnitude weights, then the survivors are clustered
//! with k-means and each kept weight is replaced by the index of its nearest
//! centroid. The result is stored CSR-style in [`SparseQuantLayer`]:
//! row offsets, column positions, b-bit codes, and the codebook itself.
//!
//! Serialized layout (little-endian): five `u32` header fields (rows, cols,
//! kept count, bit width, level count), levels as `f32`, row offsets as
//! `u32`, column indices as `u16` when `cols <= 65536` and `u32`
//! otherwise, then codes bit-packed LSB-first into `u64` words with zero
//! padding up to the word boundary. [`sparse_layer_size_bits`] is the single
//! size formula shared with the analyzer's accounting.

use crate::error::{Result, TacError};
use crate::tensor::{mask_low, Tensor, WORD_BITS};

/// Lloyd iteration cap and the centroid-movement threshold that ends it.
const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_TOLERANCE: f64 = 1e-8;

/// Boolean keep/remove decision per weight, same shape as the weight tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    shape: Vec<usize>,
    kept: Vec<bool>,
}

impl PruneMask {
    pub fn new(shape: Vec<usize>, kept: Vec<bool>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != kept.len() {
            return Err(TacError::ShapeMismatch {
                expected: format!("{len} flags for shape {shape:?}"),
                actual: format!("{} flags", kept.len()),
            });
        }
        Ok(Self { shape, kept })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.kept[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.kept
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }
}

/// Removes exactly `floor(rate * n)` weights of smallest magnitude.
/// Ties are broken by removing the lower flat index first.
pub fn prune_by_magnitude(w: &Tensor, rate: f64) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TacError::InvalidArgument(format!(
            "pruning rate {rate} outside [0, 1)"
        )));
    }
    let n = w.len();
    let remove = (rate * n as f64).floor() as usize;
    let mut kept = vec![true; n];
    if remove > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        // Partial selection on the (magnitude, index) total order.
        let key = |i: &usize| (w.data()[*i].abs(), *i);
        order.select_nth_unstable_by(remove - 1, |a, b| key(a).partial_cmp(&key(b)).unwrap());
        for &i in &order[..remove] {
            kept[i] = false;
        }
    }
    PruneMask::new(w.shape().to_vec(), kept)
}

/// Ascending quantization levels, at most `2^bit_width` of them.
///
/// Levels are snapped to `f32` at construction: that is the precision the
/// serialized form carries, and keeping the in-memory value identical to
/// the stored one means a saved and reloaded model computes the same
/// outputs. Levels that collide after snapping are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    levels: Vec<f64>,
    bit_width: u32,
}

impl Codebook {
    pub fn new(levels: Vec<f64>, bit_width: u32) -> Result<Self> {
        if !(1..=24).contains(&bit_width) {
            return Err(TacError::InvalidArgument(format!(
                "bit width {bit_width} outside 1..=24"
            )));
        }
        if levels.is_empty() || levels.len() > 1usize << bit_width {
            return Err(TacError::InvalidArgument(format!(
                "{} levels does not fit bit width {bit_width}",
                levels.len()
            )));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TacError::InvalidArgument(
                "codebook levels must be strictly ascending".into(),
            ));
        }
        let mut snapped: Vec<f64> = levels.iter().map(|&l| l as f32 as f64).collect();
        snapped.dedup();
        Ok(Self {
            levels: snapped,
            bit_width,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    /// Index of the nearest level; exact ties go to the lower level.
    pub fn nearest(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &l) in self.levels.iter().enumerate() {
            let d = (v - l).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Runs Lloyd iterations to convergence from the given initial centroids.
/// Empty clusters are re-seeded at the point farthest from its current
/// centroid. Returns the converged centroids (sorted, deduplicated) and the
/// within-cluster sum of squares. Fully deterministic.
fn lloyd(weights: &[f64], init: &[f64]) -> (Vec<f64>, f64) {
    let k = init.len();
    let mut centroids = init.to_vec();
    let mut assign = vec![0usize; weights.len()];

    for _ in 0..KMEANS_MAX_ITERS {
        for (i, &v) in weights.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &m) in centroids.iter().enumerate() {
                let d = (v - m).abs();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }

        let mut sums = vec![0.0f64; k];
        let mut counts = vec![0usize; k];
        for (i, &v) in weights.iter().enumerate() {
            sums[assign[i]] += v;
            counts[assign[i]] += 1;
        }

        // One re-seed per empty cluster, each claiming a distinct point.
        let mut claimed = vec![false; weights.len()];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far_i = usize::MAX;
            let mut far_d = -1.0;
            for (i, &v) in weights.iter().enumerate() {
                if claimed[i] || counts[assign[i]] <= 1 {
                    continue;
                }
                let d = (v - centroids[assign[i]]).abs();
                if d > far_d {
                    far_d = d;
                    far_i = i;
                }
            }
            if far_i == usize::MAX {
                continue;
            }
            claimed[far_i] = true;
            let donor = assign[far_i];
            sums[donor] -= weights[far_i];
            counts[donor] -= 1;
            sums[c] = weights[far_i];
            counts[c] = 1;
            assign[far_i] = c;
        }

        let mut movement = 0.0f64;
        for c in 0..k {
            if counts[c] > 0 {
                let next = sums[c] / counts[c] as f64;
                movement = movement.max((next - centroids[c]).abs());
                centroids[c] = next;
            }
        }
        if movement < KMEANS_TOLERANCE {
            break;
        }
    }

    let wcss = weights
        .iter()
        .map(|&v| {
            let d = centroids
                .iter()
                .map(|&m| (v - m).abs())
                .fold(f64::INFINITY, f64::min);
            d * d
        })
        .sum();
    centroids.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    centroids.dedup();
    (centroids, wcss)
}

/// Evenly spaced initial centroids over `[lo, hi]`.
fn linear_init(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Initial centroids at the data quantiles (sorted input).
fn quantile_init(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut init: Vec<f64> = (0..k)
        .map(|i| sorted[(((i as f64 + 0.5) / k as f64) * n as f64) as usize])
        .collect();
    init.dedup();
    init
}

/// Grows `prev` toward `k` centroids by inserting midpoints of the widest
/// gaps (including the gaps to the data extremes).
fn split_init(prev: &[f64], k: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = prev.to_vec();
    while pts.len() < k {
        let mut best_gap = 0.0;
        let mut best_mid = f64::NAN;
        let mut consider = |a: f64, b: f64| {
            if b - a > best_gap {
                best_gap = b - a;
                best_mid = (a + b) / 2.0;
            }
        };
        consider(lo, pts[0]);
        for w in pts.windows(2) {
            consider(w[0], w[1]);
        }
        consider(*pts.last().unwrap(), hi);
        if best_gap <= 0.0 {
            break;
        }
        let at = pts.partition_point(|&p| p < best_mid);
        pts.insert(at, best_mid);
    }
    pts
}

/// Clusters the kept weights into at most `2^bit_width` levels and returns
/// the codebook plus one code per input weight (input order preserved).
///
/// When the input has no more distinct values than levels, the distinct
/// values themselves are the converged solution and are returned directly
/// (zero reconstruction error). Otherwise Lloyd's algorithm runs from a
/// small set of deterministic initializations (evenly spaced, data
/// quantiles, and a hierarchical split of the best solution at half the
/// level count) and the lowest-error result wins. The split chain makes
/// reconstruction error non-increasing in the bit width.
pub fn kmeans_quantize(kept_weights: &[f64], bit_width: u32) -> Result<(Codebook, Vec<u32>)> {
    if kept_weights.is_empty() {
        return Err(TacError::InvalidArgument(
            "cannot quantize an empty weight list".into(),
        ));
    }
    if !(1..=24).contains(&bit_width) {
        return Err(TacError::InvalidArgument(format!(
            "bit width {bit_width} outside 1..=24"
        )));
    }
    let k_target = 1usize << bit_width;

    let mut sorted: Vec<f64> = kept_weights.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = sorted.clone();
    distinct.dedup();

    if distinct.len() <= k_target {
        // Exact fit: one level per distinct value is a Lloyd fixed point
        // with zero within-cluster error (at storage precision).
        let codebook = Codebook::new(distinct, bit_width)?;
        let codes = kept_weights
            .iter()
            .map(|&v| codebook.nearest(v) as u32)
            .collect();
        return Ok((codebook, codes));
    }

    let lo = distinct[0];
    let hi = *distinct.last().unwrap();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut k = 2usize;
    loop {
        let mut inits = vec![linear_init(lo, hi, k), quantile_init(&sorted, k)];
        if let Some((prev, _)) = &best {
            inits.push(split_init(prev, k, lo, hi));
        }
        for init in inits {
            let (centroids, wcss) = lloyd(kept_weights, &init);
            if best.as_ref().is_none_or(|(_, w)| wcss < *w) {
                best = Some((centroids, wcss));
            }
        }
        if k == k_target {
            break;
        }
        k = (k * 2).min(k_target);
        // Invalidate the carried score: the split candidate at the next k
        // starts from these centroids, so keep them but reset the score.
        if let Some((_, w)) = &mut best {
            *w = f64::INFINITY;
        }
    }

    let levels = best.expect("at least one candidate ran").0;
    let codebook = Codebook::new(levels, bit_width)?;
    let codes = kept_weights
        .iter()
        .map(|&v| codebook.nearest(v) as u32)
        .collect();
    Ok((codebook, codes))
}

/// Mean squared reconstruction error of `codes` against `weights`.
pub fn reconstruction_mse(weights: &[f64], codebook: &Codebook, codes: &[u32]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    weights
        .iter()
        .zip(codes)
        .map(|(&w, &c)| {
            let d = w - codebook.levels[c as usize];
            d * d
        })
        .sum::<f64>()
        / weights.len() as f64
}

/// A pruned and quantized FC weight matrix in CSR-like form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseQuantLayer {
    rows: usize,
    cols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    codes: Vec<u32>,
    codebook: Codebook,
}

impl SparseQuantLayer {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kept_count(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    fn check_invariants(&self) -> Result<()> {
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr[0] != 0 {
            return Err(TacError::CorruptData("bad row offsets".into()));
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(TacError::CorruptData("row offsets decrease".into()));
        }
        if self.row_ptr[self.rows] as usize != self.col_idx.len()
            || self.col_idx.len() != self.codes.len()
        {
            return Err(TacError::CorruptData(
                "row offsets disagree with entry count".into(),
            ));
        }
        for r in 0..self.rows {
            let span = &self.col_idx[self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize];
            if span.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TacError::CorruptData(format!(
                    "column indices not strictly increasing in row {r}"
                )));
            }
            if span.iter().any(|&c| c as usize >= self.cols) {
                return Err(TacError::CorruptData(format!(
                    "column index out of range in row {r}"
                )));
            }
        }
        if self
            .codes
            .iter()
            .any(|&c| c as usize >= self.codebook.levels.len())
        {
            return Err(TacError::CorruptData("code exceeds level count".into()));
        }
        Ok(())
    }
}

/// Assembles the sparse layer from a 2-d weight tensor, its mask, and the
/// per-kept-weight codes (row-major kept order).
pub fn encode(
    w: &Tensor,
    mask: &PruneMask,
    codebook: Codebook,
    codes: &[u32],
) -> Result<SparseQuantLayer> {
    if w.shape().len() != 2 {
        return Err(TacError::InvalidArgument(format!(
            "expected a 2-d weight matrix, got shape {:?}",
            w.shape()
        )));
    }
    if mask.shape() != w.shape() {
        return Err(TacError::ShapeMismatch {
            expected: format!("mask shaped {:?}", w.shape()),
            actual: format!("mask shaped {:?}", mask.shape()),
        });
    }
    let kept = mask.kept_count();
    if codes.len() != kept {
        return Err(TacError::ShapeMismatch {
            expected: format!("{kept} codes"),
            actual: format!("{} codes", codes.len()),
        });
    }
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    let mut row_ptr = Vec::with_capacity(rows + 1);
    let mut col_idx = Vec::with_capacity(kept);
    row_ptr.push(0u32);
    for r in 0..rows {
        for c in 0..cols {
            if mask.is_kept(r * cols + c) {
                col_idx.push(c as u32);
            }
        }
        row_ptr.push(col_idx.len() as u32);
    }
    let layer = SparseQuantLayer {
        rows,
        cols,
        row_ptr,
        col_idx,
        codes: codes.to_vec(),
        codebook,
    };
    layer.check_invariants()?;
    Ok(layer)
}

/// Expands back to a dense matrix: pruned positions are exactly zero, kept
/// positions take their codebook level.
pub fn decode(layer: &SparseQuantLayer) -> Tensor {
    let mut data = vec![0.0f64; layer.rows * layer.cols];
    for r in 0..layer.rows {
        for j in layer.row_ptr[r] as usize..layer.row_ptr[r + 1] as usize {
            data[r * layer.cols + layer.col_idx[j] as usize] =
                layer.codebook.levels[layer.codes[j] as usize];
        }
    }
    Tensor::new(vec![layer.rows, layer.cols], data).expect("levels are finite")
}

/// Sparse matrix-vector product `decode(layer) * x` without densifying.
pub fn fc_forward(layer: &SparseQuantLayer, x: &Tensor) -> Result<Tensor> {
    if x.len() != layer.cols {
        return Err(TacError::ShapeMismatch {
            expected: format!("input of {} elements", layer.cols),
            actual: format!("input of {} elements", x.len()),
        });
    }
    let out: Vec<f64> = (0..layer.rows)
        .map(|r| {
            (layer.row_ptr[r] as usize..layer.row_ptr[r + 1] as usize)
                .map(|j| {
                    layer.codebook.levels[layer.codes[j] as usize]
                        * x.data()[layer.col_idx[j] as usize]
                })
                .sum()
        })
        .collect();
    Tensor::from_vec(out)
}

/// Prunes then quantizes one FC weight matrix.
pub fn prune_quantize(w: &Tensor, rate: f64, bit_width: u32) -> Result<(PruneMask, SparseQuantLayer)> {
    let mask = prune_by_magnitude(w, rate)?;
    let layer = quantize_with_mask(w, &mask, bit_width)?;
    Ok((mask, layer))
}

/// Quantizes the kept weights of `w` under an existing mask.
pub fn quantize_with_mask(w: &Tensor, mask: &PruneMask, bit_width: u32) -> Result<SparseQuantLayer> {
    let kept: Vec<f64> = w
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_kept(*i))
        .map(|(_, &v)| v)
        .collect();
    if kept.is_empty() {
        return Err(TacError::InvalidArgument(
            "mask keeps no weights; nothing to quantize".into(),
        ));
    }
    let (codebook, codes) = kmeans_quantize(&kept, bit_width)?;
    encode(w, mask, codebook, &codes)
}

/// Storage cost in bits for a sparse quantized layer. This is the one
/// formula shared between the serializer and the analyzer; `index_bits` is
/// the per-entry cost charged for column positions (the serializer uses 16
/// for `cols <= 65536`, 32 above; the analyzer treats it as a policy knob).
pub fn sparse_layer_size_bits(
    rows: u64,
    cols: u64,
    kept: u64,
    bit_width: u32,
    num_levels: u64,
    index_bits: u32,
) -> u64 {
    let _ = cols;
    let header = 5 * 32;
    let levels = num_levels * 32;
    let offsets = (rows + 1) * 32;
    let indices = kept * index_bits as u64;
    let codes = (kept * bit_width as u64).div_ceil(64) * 64;
    header + levels + offsets + indices + codes
}

fn col_index_bits(cols: usize) -> u32 {
    if cols <= 1 << 16 {
        16
    } else {
        32
    }
}

impl SparseQuantLayer {
    /// Serializes to the documented byte layout. The output length always
    /// equals [`sparse_layer_size_bits`] / 8 for this layer's actual column
    /// index width.
    pub fn to_bytes(&self) -> Vec<u8> {
        let idx_bits = col_index_bits(self.cols);
        let expect_bits = sparse_layer_size_bits(
            self.rows as u64,
            self.cols as u64,
            self.kept_count() as u64,
            self.codebook.bit_width,
            self.codebook.levels.len() as u64,
            idx_bits,
        );
        let mut out = Vec::with_capacity((expect_bits / 8) as usize);
        for v in [
            self.rows as u32,
            self.cols as u32,
            self.kept_count() as u32,
            self.codebook.bit_width,
            self.codebook.levels.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &l in &self.codebook.levels {
            out.extend_from_slice(&(l as f32).to_le_bytes());
        }
        for &p in &self.row_ptr {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for &c in &self.col_idx {
            if idx_bits == 16 {
                out.extend_from_slice(&((c & 0xffff) as u16).to_le_bytes());
            } else {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        let b = self.codebook.bit_width as usize;
        let nwords = (self.codes.len() * b).div_ceil(WORD_BITS);
        let mut words = vec![0u64; nwords];
        for (j, &code) in self.codes.iter().enumerate() {
            let bit = j * b;
            let (wi, off) = (bit / WORD_BITS, bit % WORD_BITS);
            words[wi] |= (code as u64) << off;
            if off + b > WORD_BITS {
                words[wi + 1] |= (code as u64) >> (WORD_BITS - off);
            }
        }
        for &w in &words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        debug_assert_eq!(out.len() as u64 * 8, expect_bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(TacError::CorruptData(format!(
                    "unexpected end of data at byte {pos}"
                )));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let mut pos = 0usize;
        let mut header = [0u32; 5];
        for h in &mut header {
            *h = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        }
        let [rows, cols, kept, bit_width, num_levels] = header;
        let (rows, cols, kept, num_levels) =
            (rows as usize, cols as usize, kept as usize, num_levels as usize);

        let mut raw_levels = Vec::with_capacity(num_levels);
        for _ in 0..num_levels {
            raw_levels.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as f64);
        }
        if raw_levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(TacError::CorruptData("levels not sorted ascending".into()));
        }
        // Distinct f64 levels may collide once stored as f32; merge the
        // duplicates and remap codes onto the surviving level.
        let mut levels = Vec::with_capacity(raw_levels.len());
        let mut level_remap = Vec::with_capacity(raw_levels.len());
        for &l in &raw_levels {
            if levels.last() != Some(&l) {
                levels.push(l);
            }
            level_remap.push((levels.len() - 1) as u32);
        }
        let codebook = Codebook::new(levels, bit_width)?;

        let mut row_ptr = Vec::with_capacity(rows + 1);
        for _ in 0..=rows {
            row_ptr.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
        }
        let idx_bits = col_index_bits(cols);
        let mut col_idx = Vec::with_capacity(kept);
        for _ in 0..kept {
            let c = if idx_bits == 16 {
                u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as u32
            } else {
                u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap())
            };
            col_idx.push(c);
        }
        let b = bit_width as usize;
        let nwords = (kept * b).div_ceil(WORD_BITS);
        let mut words = Vec::with_capacity(nwords);
        for _ in 0..nwords {
            words.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        if pos != bytes.len() {
            return Err(TacError::CorruptData(format!(
                "{} trailing bytes after payload",
                bytes.len() - pos
            )));
        }
        let mut codes = Vec::with_capacity(kept);
        for j in 0..kept {
            let bit = j * b;
            let (wi, off) = (bit / WORD_BITS, bit % WORD_BITS);
            let mut v = words[wi] >> off;
            if off + b > WORD_BITS {
                v |= words[wi + 1] << (WORD_BITS - off);
            }
            let raw = (v & mask_low(b)) as usize;
            if raw >= level_remap.len() {
                return Err(TacError::CorruptData(format!(
                    "code {raw} exceeds level count {num_levels}"
                )));
            }
            codes.push(level_remap[raw]);
        }
        // Trailing pad bits must be zero.
        let used = kept * b;
        if used % WORD_BITS != 0 && !words.is_empty() {
            let tail = words[nwords - 1] & !mask_low(used % WORD_BITS);
            if tail != 0 {
                return Err(TacError::CorruptData("nonzero code padding bits".into()));
            }
        }
        let layer = SparseQuantLayer {
            rows,
            cols,
            row_ptr,
            col_idx,
            codes,
            codebook,
        };
        layer.check_invariants()?;
        Ok(layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Full-sort pruning oracle: independent of the selection-based
    /// implementation, keeps the `n - remove` largest magnitudes with the
    /// same deterministic tie rule.
    fn sort_oracle(values: &[f64], rate: f64) -> Vec<bool> {
        let n = values.len();
        let remove = (rate * n as f64).floor() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            (values[a].abs(), a)
                .partial_cmp(&(values[b].abs(), b))
                .unwrap()
        });
        let mut kept = vec![true; n];
        for &i in &order[..remove] {
            kept[i] = false;
        }
        kept
    }

    #[test]
    fn four_by_four_quarter_rate_removes_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Tensor::new(vec![4, 4], (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let mask = prune_by_magnitude(&w, 0.25).unwrap();
        assert_eq!(mask.kept_count(), 12);
    }

    #[test]
    fn zero_rate_keeps_everything() {
        let w = Tensor::from_vec(vec![0.0, 1.0, -2.0]).unwrap();
        let mask = prune_by_magnitude(&w, 0.0).unwrap();
        assert_eq!(mask.kept_count(), 3);
    }

    #[test]
    fn rejects_rate_out_of_range() {
        let w = Tensor::from_vec(vec![1.0]).unwrap();
        assert!(prune_by_magnitude(&w, 1.0).is_err());
        assert!(prune_by_magnitude(&w, -0.1).is_err());
    }

    #[test]
    fn thousand_weight_mask_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let values: Vec<f64> = (0..1000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w = Tensor::from_vec(values.clone()).unwrap();
        let mask = prune_by_magnitude(&w, 0.6).unwrap();
        assert_eq!(mask.kept_count(), 400);
        assert_eq!(mask.flags(), &sort_oracle(&values, 0.6)[..]);
    }

    #[test]
    fn ties_remove_lower_index_first() {
        let w = Tensor::from_vec(vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let mask = prune_by_magnitude(&w, 0.5).unwrap();
        assert_eq!(mask.flags(), &[false, false, true, true]);
    }

    proptest! {
        #[test]
        fn mask_matches_oracle_and_rates_nest(
            values in proptest::collection::vec(-10.0f64..10.0, 1..200),
            r1 in 0.0f64..0.98,
            dr in 0.0f64..0.5,
        ) {
            let r2 = (r1 + dr).min(0.9999);
            let w = Tensor::from_vec(values.clone()).unwrap();
            let m1 = prune_by_magnitude(&w, r1).unwrap();
            let m2 = prune_by_magnitude(&w, r2).unwrap();
            prop_assert_eq!(m1.flags(), &sort_oracle(&values, r1)[..]);
            prop_assert_eq!(m2.flags(), &sort_oracle(&values, r2)[..]);
            // Monotone nesting: kept(r2) is a subset of kept(r1).
            for i in 0..values.len() {
                prop_assert!(!m2.is_kept(i) || m1.is_kept(i));
            }
            let n = values.len();
            prop_assert_eq!(m1.kept_count(), n - (r1 * n as f64).floor() as usize);
        }
    }

    #[test]
    fn kmeans_is_lossless_when_distinct_fits() {
        let weights = vec![0.5, -0.25, 0.5, 1.0, -0.25, 1.0, 0.5];
        let (cb, codes) = kmeans_quantize(&weights, 2).unwrap();
        assert_eq!(cb.levels(), &[-0.25, 0.5, 1.0]);
        for (i, &w) in weights.iter().enumerate() {
            assert_eq!(cb.levels()[codes[i] as usize], w);
        }
    }

    #[test]
    fn kmeans_single_value_single_level() {
        let (cb, codes) = kmeans_quantize(&[0.75; 10], 4).unwrap();
        assert_eq!(cb.levels(), &[0.75]);
        assert!(codes.iter().all(|&c| c == 0));
    }

    #[test]
    fn kmeans_rejects_empty_and_bad_width() {
        assert!(kmeans_quantize(&[], 4).is_err());
        assert!(kmeans_quantize(&[1.0], 0).is_err());
    }

    #[test]
    fn kmeans_beats_random_codebooks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let weights: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (cb, codes) = kmeans_quantize(&weights, 2).unwrap();
        let kmeans_mse = reconstruction_mse(&weights, &cb, &codes);

        let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for trial in 0..1000 {
            let mut levels: Vec<f64> = (0..4).map(|_| rng.gen_range(lo..hi)).collect();
            levels.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            levels.dedup();
            let rand_cb = Codebook::new(levels, 2).unwrap();
            let rand_codes: Vec<u32> =
                weights.iter().map(|&w| rand_cb.nearest(w) as u32).collect();
            let rand_mse = reconstruction_mse(&weights, &rand_cb, &rand_codes);
            assert!(
                kmeans_mse <= rand_mse + 1e-12,
                "random codebook {trial} beat k-means: {rand_mse} < {kmeans_mse}"
            );
        }
    }

    #[test]
    fn kmeans_mse_non_increasing_in_bit_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.gen_range(50..400);
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut prev = f64::INFINITY;
            for b in 1..=6 {
                let (cb, codes) = kmeans_quantize(&weights, b).unwrap();
                let mse = reconstruction_mse(&weights, &cb, &codes);
                // Slack covers the f32 snap of the levels.
                assert!(
                    mse <= prev * (1.0 + 1e-9) + 1e-12,
                    "MSE rose from {prev} to {mse} at b={b}"
                );
                prev = mse;
            }
        }
    }

    fn random_layer(
        rng: &mut ChaCha8Rng,
        rows: usize,
        cols: usize,
        rate: f64,
        bits: u32,
    ) -> (Tensor, PruneMask, SparseQuantLayer) {
        // Weights drawn from an f32 grid so serialized levels stay exact.
        let w = Tensor::new(
            vec![rows, cols],
            (0..rows * cols)
                .map(|_| rng.gen_range(-1.0f32..1.0) as f64)
                .collect(),
        )
        .unwrap();
        let (mask, layer) = prune_quantize(&w, rate, bits).unwrap();
        (w, mask, layer)
    }

    #[test]
    fn decode_is_masked_dequantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let rows = rng.gen_range(1..12);
            let cols = rng.gen_range(1..12);
            let rate = rng.gen_range(0.0..0.9);
            let (w, mask, layer) = random_layer(&mut rng, rows, cols, rate, 3);
            let dense = decode(&layer);
            for i in 0..rows * cols {
                if mask.is_kept(i) {
                    let level = layer.codebook().levels()[layer.codes()
                        [dense_code_index(&layer, i, cols)]
                        as usize];
                    assert_eq!(dense.data()[i], level);
                    // Nearest-level error bound: decode equals mask * dequant.
                    assert_eq!(
                        dense.data()[i],
                        layer.codebook().levels()
                            [layer.codebook().nearest(w.data()[i])]
                    );
                } else {
                    assert_eq!(dense.data()[i], 0.0);
                }
            }
        }
    }

    fn dense_code_index(layer: &SparseQuantLayer, flat: usize, cols: usize) -> usize {
        let (r, c) = (flat / cols, flat % cols);
        let span = layer.row_ptr()[r] as usize..layer.row_ptr()[r + 1] as usize;
        span.clone()
            .find(|&j| layer.col_idx()[j] as usize == c)
            .expect("kept entry present")
    }

    #[test]
    fn identity_codebook_dense_mask_roundtrip_is_exact() {
        let w = Tensor::new(vec![2, 2], vec![0.5, -0.5, 0.25, -0.25]).unwrap();
        let mask = prune_by_magnitude(&w, 0.0).unwrap();
        let layer = quantize_with_mask(&w, &mask, 2).unwrap();
        assert_eq!(decode(&layer), w);
    }

    #[test]
    fn all_pruned_row_has_flat_offsets() {
        let w = Tensor::new(vec![3, 2], vec![0.01, 0.02, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let mask = PruneMask::new(vec![3, 2], vec![false, false, true, true, true, true]).unwrap();
        let layer = quantize_with_mask(&w, &mask, 3).unwrap();
        assert_eq!(layer.row_ptr(), &[0, 0, 2, 4]);
    }

    #[test]
    fn empty_layer_decodes_to_zero_matrix() {
        let w = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let mask = PruneMask::new(vec![2, 3], vec![false; 6]).unwrap();
        let cb = Codebook::new(vec![0.5], 1).unwrap();
        let layer = encode(&w, &mask, cb, &[]).unwrap();
        let dense = decode(&layer);
        assert!(dense.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_kept_weight_at_origin() {
        let w = Tensor::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.0]).unwrap();
        let mut kept = vec![false; 4];
        kept[0] = true;
        let mask = PruneMask::new(vec![2, 2], kept).unwrap();
        let cb = Codebook::new(vec![0.5], 1).unwrap();
        let layer = encode(&w, &mask, cb, &[0]).unwrap();
        let dense = decode(&layer);
        assert_eq!(dense.data(), &[0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_rejects_inconsistent_counts() {
        let w = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let mask = prune_by_magnitude(&w, 0.0).unwrap();
        let cb = Codebook::new(vec![1.0], 1).unwrap();
        assert!(encode(&w, &mask, cb, &[0, 0]).is_err());
    }

    #[test]
    fn forward_zero_input_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, _, layer) = random_layer(&mut rng, 5, 7, 0.4, 2);
        let y = fc_forward(&layer, &Tensor::from_vec(vec![0.0; 7]).unwrap()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_identity_pattern_permutes_input() {
        // Diagonal layer with level 2.0 doubles each input coordinate.
        let w = Tensor::new(vec![3, 3], vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0])
            .unwrap();
        let kept: Vec<bool> = (0..9).map(|i| i % 4 == 0).collect();
        let mask = PruneMask::new(vec![3, 3], kept).unwrap();
        let layer = quantize_with_mask(&w, &mask, 1).unwrap();
        let y = fc_forward(&layer, &Tensor::from_vec(vec![1.0, -2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn forward_matches_dense_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(31337);
        for _ in 0..40 {
            let rows = rng.gen_range(1..16);
            let cols = rng.gen_range(1..16);
            let rate = rng.gen_range(0.0..0.8);
            let (_, _, layer) = random_layer(&mut rng, rows, cols, rate, 2);
            let x = Tensor::from_vec((0..cols).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap();
            let y = fc_forward(&layer, &x).unwrap();
            let dense = decode(&layer);
            for r in 0..rows {
                let want: f64 = (0..cols)
                    .map(|c| dense.data()[r * cols + c] * x.data()[c])
                    .sum();
                let got = y.data()[r];
                assert!(
                    (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                    "row {r}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn forward_rejects_length_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, _, layer) = random_layer(&mut rng, 3, 4, 0.25, 2);
        assert!(fc_forward(&layer, &Tensor::from_vec(vec![0.0; 3]).unwrap()).is_err());
    }

    #[test]
    fn serialized_roundtrip_and_size_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4096);
        for _ in 0..25 {
            let rows = rng.gen_range(1..20);
            let cols = rng.gen_range(1..20);
            let bits = rng.gen_range(1..6);
            let rate = rng.gen_range(0.0..0.9);
            let (_, _, layer) = random_layer(&mut rng, rows, cols, rate, bits);
            let bytes = layer.to_bytes();
            let expect = sparse_layer_size_bits(
                rows as u64,
                cols as u64,
                layer.kept_count() as u64,
                layer.codebook().bit_width(),
                layer.codebook().levels().len() as u64,
                16,
            );
            assert_eq!(bytes.len() as u64 * 8, expect);
            // Levels are f32-valued in memory, so the roundtrip is exact.
            let back = SparseQuantLayer::from_bytes(&bytes).unwrap();
            assert_eq!(back, layer);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn serialized_roundtrip_exact_on_f32_levels() {
        // Levels already representable at storage precision roundtrip
        // to an identical in-memory layer.
        let w = Tensor::new(vec![2, 3], vec![0.5, -0.75, 0.5, 0.25, -0.75, 0.25]).unwrap();
        let mask = prune_by_magnitude(&w, 0.0).unwrap();
        let layer = quantize_with_mask(&w, &mask, 2).unwrap();
        let back = SparseQuantLayer::from_bytes(&layer.to_bytes()).unwrap();
        assert_eq!(back, layer);
    }

    #[test]
    fn from_bytes_rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (_, _, layer) = random_layer(&mut rng, 4, 6, 0.3, 2);
        let good = layer.to_bytes();
        assert!(SparseQuantLayer::from_bytes(&good[..good.len() - 1]).is_err());
        let mut truncated_header = good.clone();
        truncated_header.truncate(7);
        assert!(SparseQuantLayer::from_bytes(&truncated_header).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(SparseQuantLayer::from_bytes(&extra).is_err());
    }
}
