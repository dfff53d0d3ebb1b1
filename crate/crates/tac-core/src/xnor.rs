//! Binary convolution and binary matrix multiply via XNOR + popcount.
//!
//! A dot product over {-1,+1} vectors packed as bits is `n - 2*popcount(a ^ w)`.
//! The convolution kernel gathers each receptive field into a packed row
//! (im2row) and runs that word-wise dot against each packed filter row, so the
//! inner loop is pure XOR/popcount; the only floating operation per output is
//! the final multiply by the filter's alpha.
//!
//! Accumulation is in integers and results are identical regardless of how
//! callers schedule outputs, so the kernels compare bit-exactly against a
//! dense reference.

use crate::binarize::BinarizedFilterBank;
use crate::error::{Result, TacError};
use crate::tensor::{mask_low, BitTensor, BitWriter, Tensor, WORD_BITS};

/// Shape bookkeeping for a 2-d convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub input_h: usize,
    pub input_w: usize,
}

impl ConvGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(TacError::InvalidArgument("stride must be positive".into()));
        }
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
            || self.input_h == 0
            || self.input_w == 0
        {
            return Err(TacError::InvalidArgument(format!(
                "degenerate convolution geometry: {self:?}"
            )));
        }
        if self.input_h + 2 * self.padding < self.kernel_h
            || self.input_w + 2 * self.padding < self.kernel_w
        {
            return Err(TacError::InvalidArgument(format!(
                "kernel {}x{} larger than padded input {}x{}",
                self.kernel_h,
                self.kernel_w,
                self.input_h + 2 * self.padding,
                self.input_w + 2 * self.padding
            )));
        }
        Ok(())
    }

    pub fn output_h(&self) -> usize {
        (self.input_h + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn output_w(&self) -> usize {
        (self.input_w + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    /// Bits per im2row patch: the kernel volume.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

/// How out-of-bounds input positions contribute to the dot product.
///
/// `PlusOne`/`MinusOne` pad with that constant in the {-1,+1} domain.
/// `Zero` reproduces conventional zero padding: padded positions are
/// excluded from the accumulation entirely (a correction that plain
/// constant padding cannot express in the binary domain).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    PlusOne,
    MinusOne,
    Zero,
}

fn xor_popcount(a: &[u64], b: &[u64]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones() as u64)
        .sum()
}

fn masked_xor_popcount(a: &[u64], b: &[u64], mask: &[u64]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), mask.len());
    a.iter()
        .zip(b)
        .zip(mask)
        .map(|((x, y), m)| ((x ^ y) & m).count_ones() as u64)
        .sum()
}

/// Signed dot product of the first `n` elements of two packed {-1,+1}
/// vectors, computed as `n - 2*popcount(a ^ w)`.
pub fn binary_dot(a: &BitTensor, w: &BitTensor, n: usize) -> Result<i64> {
    if n > a.logical_len() || n > w.logical_len() {
        return Err(TacError::InvalidArgument(format!(
            "dot length {n} exceeds operand lengths {} and {}",
            a.logical_len(),
            w.logical_len()
        )));
    }
    let full_words = n / WORD_BITS;
    let mut diff =
        xor_popcount(&a.words()[..full_words], &w.words()[..full_words]);
    let rem = n % WORD_BITS;
    if rem != 0 {
        diff += ((a.words()[full_words] ^ w.words()[full_words]) & mask_low(rem)).count_ones()
            as u64;
    }
    Ok(n as i64 - 2 * diff as i64)
}

/// Word-aligned packed rows extracted from a filter bank, one per output
/// channel, all of equal logical length.
struct PackedRows {
    rows: Vec<Vec<u64>>,
}

impl PackedRows {
    fn from_bank(bank: &BinarizedFilterBank) -> Result<Self> {
        let out = bank.out_channels();
        let row_len = bank.row_len();
        let mut rows = Vec::with_capacity(out);
        for k in 0..out {
            let mut w = BitWriter::with_capacity(row_len);
            w.push_bits(bank.bits.words(), k * row_len, row_len);
            let mut words = w.into_words();
            words.resize(row_len.div_ceil(WORD_BITS), 0);
            rows.push(words);
        }
        Ok(Self { rows })
    }
}

/// Binary 2-d convolution. Input is a packed `[in_channels, input_h,
/// input_w]` tensor; output is `[out_channels, output_h, output_w]` where
/// each entry is `alpha[k]` times an integer XNOR-popcount accumulation.
pub fn binary_conv2d(
    input: &BitTensor,
    filters: &BinarizedFilterBank,
    geom: &ConvGeometry,
    padding: Padding,
) -> Result<Tensor> {
    geom.validate()?;
    let expected_input = [geom.in_channels, geom.input_h, geom.input_w];
    if input.shape() != expected_input {
        return Err(TacError::ShapeMismatch {
            expected: format!("input {expected_input:?}"),
            actual: format!("input {:?}", input.shape()),
        });
    }
    let n = geom.patch_len();
    if filters.out_channels() != geom.out_channels || filters.row_len() != n {
        return Err(TacError::ShapeMismatch {
            expected: format!(
                "filters [{}, {}, {}, {}]",
                geom.out_channels, geom.in_channels, geom.kernel_h, geom.kernel_w
            ),
            actual: format!(
                "filters {:?} ({} channels of {} bits)",
                filters.bits.shape(),
                filters.out_channels(),
                filters.row_len()
            ),
        });
    }
    let rows = PackedRows::from_bank(filters)?;
    let (out_h, out_w) = (geom.output_h(), geom.output_w());
    let nwords = n.div_ceil(WORD_BITS);
    let mut out = vec![0.0f64; geom.out_channels * out_h * out_w];

    let pad_bit = matches!(padding, Padding::PlusOne);
    let needs_mask = matches!(padding, Padding::Zero);
    let (h, w) = (geom.input_h, geom.input_w);

    for oy in 0..out_h {
        for ox in 0..out_w {
            // im2row: gather the receptive field, channel-major then rows.
            let mut patch = BitWriter::with_capacity(n);
            let mut mask = BitWriter::with_capacity(if needs_mask { n } else { 0 });
            let mut valid = 0usize;
            let y0 = (oy * geom.stride) as isize - geom.padding as isize;
            let x0 = (ox * geom.stride) as isize - geom.padding as isize;
            for c in 0..geom.in_channels {
                for ky in 0..geom.kernel_h {
                    let iy = y0 + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        patch.push_run(pad_bit, geom.kernel_w);
                        if needs_mask {
                            mask.push_run(false, geom.kernel_w);
                        }
                        continue;
                    }
                    let left = (-x0).clamp(0, geom.kernel_w as isize) as usize;
                    let right =
                        (x0 + geom.kernel_w as isize - w as isize).clamp(0, geom.kernel_w as isize)
                            as usize;
                    let live = geom.kernel_w - left - right;
                    patch.push_run(pad_bit, left);
                    if live > 0 {
                        let start = (c * h + iy as usize) * w + (x0 + left as isize) as usize;
                        patch.push_bits(input.words(), start, live);
                    }
                    patch.push_run(pad_bit, right);
                    if needs_mask {
                        mask.push_run(false, left);
                        mask.push_run(true, live);
                        mask.push_run(false, right);
                        valid += live;
                    }
                }
            }
            debug_assert_eq!(patch.len(), n);
            let mut patch_words = patch.into_words();
            patch_words.resize(nwords, 0);
            let mask_words = if needs_mask {
                let mut mw = mask.into_words();
                mw.resize(nwords, 0);
                Some(mw)
            } else {
                None
            };

            for k in 0..geom.out_channels {
                let acc = match &mask_words {
                    Some(m) => {
                        valid as i64 - 2 * masked_xor_popcount(&patch_words, &rows.rows[k], m) as i64
                    }
                    None => n as i64 - 2 * xor_popcount(&patch_words, &rows.rows[k]) as i64,
                };
                out[(k * out_h + oy) * out_w + ox] = filters.alpha[k] * acc as f64;
            }
        }
    }

    Tensor::new(vec![geom.out_channels, out_h, out_w], out)
}

/// Binary fully connected layer: `out[k] = alpha[k] * <input, row_k>` over
/// a `[out, in]` filter bank.
pub fn binary_linear(input: &BitTensor, weights: &BinarizedFilterBank) -> Result<Tensor> {
    let n = weights.row_len();
    if input.logical_len() != n {
        return Err(TacError::ShapeMismatch {
            expected: format!("input of {n} elements"),
            actual: format!("input of {} elements", input.logical_len()),
        });
    }
    let rows = PackedRows::from_bank(weights)?;
    let nwords = n.div_ceil(WORD_BITS);
    let mut in_words = input.words().to_vec();
    in_words.resize(nwords, 0);
    let out: Vec<f64> = (0..weights.out_channels())
        .map(|k| {
            let acc = n as i64 - 2 * xor_popcount(&in_words, &rows.rows[k]) as i64;
            weights.alpha[k] * acc as f64
        })
        .collect();
    Tensor::new(vec![weights.out_channels()], out)
}
