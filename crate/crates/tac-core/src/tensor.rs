//! Dense tensors and bit-packed sign tensors.
//!
//! [`Tensor`] is a plain row-major array of finite `f64` values. [`BitTensor`]
//! stores one bit per logical element in 64-bit words: bit value 1 encodes +1
//! and bit value 0 encodes -1, with bit 0 of word 0 holding element 0. Every
//! padding bit past the logical length is kept at 0 so that popcount over the
//! raw words equals the number of +1 elements.
//!
//! Persistence layout for `BitTensor` (all little-endian):
//! `u32` dim count, `u32` per dim, then the `u64` words. `Tensor` uses the
//! same header followed by the elements as `f64`.

use crate::error::{Result, TacError};

/// Machine word width used for bit packing.
pub const WORD_BITS: usize = 64;

fn checked_len(shape: &[usize]) -> Result<usize> {
    shape.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d).ok_or_else(|| {
            TacError::InvalidArgument(format!("shape {shape:?} overflows element count"))
        })
    })
}

/// Dense row-major tensor of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting length mismatches and non-finite elements.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(&shape)?;
        if len != data.len() {
            return Err(TacError::ShapeMismatch {
                expected: format!("{len} elements for shape {shape:?}"),
                actual: format!("{} elements", data.len()),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TacError::NonFinite { index, value });
        }
        Ok(Self { shape, data })
    }

    /// One-dimensional tensor from a value list.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let shape = vec![data.len()];
        Self::new(shape, data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = checked_len(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Serializes as dims header + `f64` payload, little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.shape.len() + 8 * self.data.len());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let ndims = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(r.u32()? as usize);
        }
        let len = checked_len(&shape)?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(r.array()?));
        }
        r.finish()?;
        Self::new(shape, data)
    }
}

/// Bit-packed tensor over {-1, +1}: bit 1 means +1, bit 0 means -1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitTensor {
    shape: Vec<usize>,
    words: Vec<u64>,
    logical_len: usize,
}

impl BitTensor {
    /// Builds from a sign predicate evaluated per flat index
    /// (`true` encodes +1). Padding bits are left at zero.
    pub fn from_fn(shape: Vec<usize>, mut is_plus: impl FnMut(usize) -> bool) -> Result<Self> {
        let logical_len = checked_len(&shape)?;
        let mut words = vec![0u64; logical_len.div_ceil(WORD_BITS)];
        for i in 0..logical_len {
            if is_plus(i) {
                words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
            }
        }
        Ok(Self {
            shape,
            words,
            logical_len,
        })
    }

    /// Reassembles from raw parts; verifies length and the padding invariant.
    pub fn from_parts(shape: Vec<usize>, words: Vec<u64>) -> Result<Self> {
        let logical_len = checked_len(&shape)?;
        if words.len() != logical_len.div_ceil(WORD_BITS) {
            return Err(TacError::ShapeMismatch {
                expected: format!("{} words", logical_len.div_ceil(WORD_BITS)),
                actual: format!("{} words", words.len()),
            });
        }
        let t = Self {
            shape,
            words,
            logical_len,
        };
        if !t.padding_is_zero() {
            return Err(TacError::CorruptData(
                "nonzero padding bits past logical length".into(),
            ));
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn logical_len(&self) -> usize {
        self.logical_len
    }

    /// Bit at flat index `i`: `true` is +1.
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.logical_len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    /// Number of +1 elements (popcount over the words).
    pub fn count_plus(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// True when every bit past `logical_len` in the final word is zero.
    pub fn padding_is_zero(&self) -> bool {
        let rem = self.logical_len % WORD_BITS;
        if rem == 0 || self.words.is_empty() {
            return true;
        }
        let mask = !0u64 << rem;
        self.words[self.logical_len / WORD_BITS] & mask == 0
    }

    /// Copies the bit range `[start, start + len)` into a fresh 1-d tensor.
    pub fn slice_bits(&self, start: usize, len: usize) -> Result<BitTensor> {
        if start + len > self.logical_len {
            return Err(TacError::InvalidArgument(format!(
                "bit range {start}..{} exceeds logical length {}",
                start + len,
                self.logical_len
            )));
        }
        let mut out = BitWriter::with_capacity(len);
        out.push_bits(&self.words, start, len);
        out.into_bit_tensor(vec![len])
    }

    /// Serializes as dims header + words, little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.shape.len() + 8 * self.words.len());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let ndims = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(r.u32()? as usize);
        }
        let len = checked_len(&shape)?;
        let nwords = len.div_ceil(WORD_BITS);
        let mut words = Vec::with_capacity(nwords);
        for _ in 0..nwords {
            words.push(u64::from_le_bytes(r.array()?));
        }
        r.finish()?;
        Self::from_parts(shape, words)
    }
}

/// Packs a strictly-{-1,+1} tensor into bits. Any other value is rejected
/// with the flat index of the first offender.
pub fn pack(t: &Tensor) -> Result<BitTensor> {
    for (index, &value) in t.data().iter().enumerate() {
        if value != 1.0 && value != -1.0 {
            return Err(TacError::NotBinary { index, value });
        }
    }
    BitTensor::from_fn(t.shape().to_vec(), |i| t.data()[i] == 1.0)
}

/// Expands a bit tensor back to a dense {-1, +1} tensor.
pub fn unpack(b: &BitTensor) -> Tensor {
    let data: Vec<f64> = (0..b.logical_len())
        .map(|i| if b.get(i) { 1.0 } else { -1.0 })
        .collect();
    Tensor::new(b.shape().to_vec(), data).expect("unpacked bits are always valid")
}

/// Append-only bit buffer used to assemble packed rows word by word.
pub(crate) struct BitWriter {
    words: Vec<u64>,
    len: usize,
}

impl BitWriter {
    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(bits.div_ceil(WORD_BITS)),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len % WORD_BITS == 0 {
            self.words.push(0);
        }
        if bit {
            let last = self.words.len() - 1;
            self.words[last] |= 1u64 << (self.len % WORD_BITS);
        }
        self.len += 1;
    }

    /// Appends `count` copies of `bit`.
    pub fn push_run(&mut self, bit: bool, count: usize) {
        for _ in 0..count {
            self.push_bit(bit);
        }
    }

    /// Appends bits `[start, start + count)` read from `src` words.
    pub fn push_bits(&mut self, src: &[u64], start: usize, count: usize) {
        let mut remaining = count;
        let mut pos = start;
        while remaining > 0 {
            let word = src[pos / WORD_BITS];
            let offset = pos % WORD_BITS;
            let take = (WORD_BITS - offset).min(remaining);
            let chunk = (word >> offset) & mask_low(take);
            self.push_chunk(chunk, take);
            pos += take;
            remaining -= take;
        }
    }

    /// Appends the low `count` bits of `chunk` (count <= 64).
    pub fn push_chunk(&mut self, chunk: u64, count: usize) {
        if count == 0 {
            return;
        }
        debug_assert!(count == WORD_BITS || chunk & !mask_low(count) == 0);
        let offset = self.len % WORD_BITS;
        if offset == 0 {
            self.words.push(chunk);
        } else {
            let last = self.words.len() - 1;
            self.words[last] |= chunk << offset;
            if offset + count > WORD_BITS {
                self.words.push(chunk >> (WORD_BITS - offset));
            }
        }
        self.len += count;
    }

    pub fn into_words(self) -> Vec<u64> {
        self.words
    }

    pub fn into_bit_tensor(self, shape: Vec<usize>) -> Result<BitTensor> {
        BitTensor::from_parts(shape, self.words)
    }
}

/// Low-`n` bit mask; `n` must be at most 64.
pub(crate) fn mask_low(n: usize) -> u64 {
    if n >= WORD_BITS {
        !0
    } else {
        (1u64 << n) - 1
    }
}

/// Minimal cursor over a byte slice for the blob decoders.
struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.pos + N > self.bytes.len() {
            return Err(TacError::CorruptData(format!(
                "unexpected end of data at byte {}",
                self.pos
            )));
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..self.pos + N]);
        self.pos += N;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(TacError::CorruptData(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
