//! C ABI over the core toolkit: opaque handles, integer status codes, and
//! a thread-local last-error message. The header `include/tac.h` is
//! generated at build time.
//!
//! Conventions: constructors return a status and write the new handle
//! through an out pointer; every handle has a matching `*_free`; functions
//! never take ownership of their input handles. On any non-OK status the
//! message from [`tac_last_error`] describes the failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use tac_core::analyzer::{compare, AnalyzerOptions, ModelGraph};
use tac_core::binarize::binarize_filters;
use tac_core::compress::{
    decode, fc_forward, prune_quantize, sparse_layer_size_bits, SparseQuantLayer,
};
use tac_core::error::TacError;
use tac_core::graphs::{self, NamedPolicy};
use tac_core::tensor::{pack, unpack, BitTensor, Tensor};
use tac_core::xnor;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TacStatus {
    Ok = 0,
    /// An argument was null, malformed, or out of its documented domain.
    InvalidArgument = 1,
    /// Input bytes or files failed validation.
    CorruptData = 2,
    /// Shapes or lengths disagree.
    ShapeMismatch = 3,
    /// Any other internal failure.
    Internal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap());
}

fn status_of(err: &TacError) -> TacStatus {
    match err {
        TacError::InvalidArgument(_) | TacError::Config(_) => TacStatus::InvalidArgument,
        TacError::CorruptData(_) | TacError::MissingData(_) => TacStatus::CorruptData,
        TacError::ShapeMismatch { .. } | TacError::NotBinary { .. } | TacError::NonFinite { .. } => {
            TacStatus::ShapeMismatch
        }
        _ => TacStatus::Internal,
    }
}

fn fail(err: TacError) -> TacStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Dense row-major tensor of doubles (opaque).
pub struct TacTensor(Tensor);
/// Bit-packed sign tensor (opaque).
pub struct TacBitTensor(BitTensor);
/// Pruned and quantized fc layer (opaque).
pub struct TacSparseLayer(SparseQuantLayer);
/// Layered model description with per-layer policies (opaque).
pub struct TacGraph(ModelGraph);

/// Convolution geometry in C-friendly form.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TacConvGeometry {
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel_h: u32,
    pub kernel_w: u32,
    pub stride: u32,
    pub padding: u32,
    pub input_h: u32,
    pub input_w: u32,
}

impl TacConvGeometry {
    fn to_core(self) -> xnor::ConvGeometry {
        xnor::ConvGeometry {
            in_channels: self.in_channels as usize,
            out_channels: self.out_channels as usize,
            kernel_h: self.kernel_h as usize,
            kernel_w: self.kernel_w as usize,
            stride: self.stride as usize,
            padding: self.padding as usize,
            input_h: self.input_h as usize,
            input_w: self.input_w as usize,
        }
    }
}

/// Padding semantics for the binary convolution.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TacPadding {
    PlusOne = 0,
    MinusOne = 1,
    Zero = 2,
}

impl TacPadding {
    fn to_core(self) -> xnor::Padding {
        match self {
            TacPadding::PlusOne => xnor::Padding::PlusOne,
            TacPadding::MinusOne => xnor::Padding::MinusOne,
            TacPadding::Zero => xnor::Padding::Zero,
        }
    }
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> TacStatus {
    if out.is_null() {
        set_error("output pointer is null");
        return TacStatus::InvalidArgument;
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    TacStatus::Ok
}

macro_rules! try_ref {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error(concat!($name, " handle is null"));
                return TacStatus::InvalidArgument;
            }
        }
    };
}

// --- tensors ---------------------------------------------------------------

/// Builds a dense tensor from `ndims` dimensions and `len` doubles.
///
/// # Safety
/// `dims` must point to `ndims` readable u32 values and `data` to `len`
/// readable doubles; `out` must be a valid location for a pointer.
#[no_mangle]
pub unsafe extern "C" fn tac_tensor_new(
    dims: *const u32,
    ndims: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut TacTensor,
) -> TacStatus {
    if dims.is_null() || (data.is_null() && len > 0) {
        set_error("dims/data pointer is null");
        return TacStatus::InvalidArgument;
    }
    let shape: Vec<usize> = unsafe { std::slice::from_raw_parts(dims, ndims) }
        .iter()
        .map(|&d| d as usize)
        .collect();
    let values = if len == 0 {
        Vec::new()
    } else {
        unsafe { std::slice::from_raw_parts(data, len) }.to_vec()
    };
    match Tensor::new(shape, values) {
        Ok(t) => unsafe { write_out(out, TacTensor(t)) },
        Err(e) => fail(e),
    }
}

/// # Safety
/// `t` must be a handle from this library, not yet freed (or null).
#[no_mangle]
pub unsafe extern "C" fn tac_tensor_free(t: *mut TacTensor) {
    if !t.is_null() {
        drop(unsafe { Box::from_raw(t) });
    }
}

/// Element count of a tensor; 0 for a null handle.
///
/// # Safety
/// `t` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tac_tensor_len(t: *const TacTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.0.len())
}

/// Borrows the tensor's data pointer and length. The pointer is valid while
/// the handle lives and must not be written through.
///
/// # Safety
/// All pointers must be valid; the handle must outlive any use of `*data`.
#[no_mangle]
pub unsafe extern "C" fn tac_tensor_data(
    t: *const TacTensor,
    data: *mut *const f64,
    len: *mut usize,
) -> TacStatus {
    let t = try_ref!(t, "tensor");
    if data.is_null() || len.is_null() {
        set_error("output pointer is null");
        return TacStatus::InvalidArgument;
    }
    unsafe {
        *data = t.0.data().as_ptr();
        *len = t.0.len();
    }
    TacStatus::Ok
}

/// Packs a strictly {-1,+1} tensor into bits.
///
/// # Safety
/// `t` must be a live handle; `out` a valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_pack(t: *const TacTensor, out: *mut *mut TacBitTensor) -> TacStatus {
    let t = try_ref!(t, "tensor");
    match pack(&t.0) {
        Ok(b) => unsafe { write_out(out, TacBitTensor(b)) },
        Err(e) => fail(e),
    }
}

/// Expands a bit tensor back to dense {-1,+1} values.
///
/// # Safety
/// `b` must be a live handle; `out` a valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_unpack(
    b: *const TacBitTensor,
    out: *mut *mut TacTensor,
) -> TacStatus {
    let b = try_ref!(b, "bit tensor");
    unsafe { write_out(out, TacTensor(unpack(&b.0))) }
}

/// Binarizes elementwise (+1 where the value is >= 0).
///
/// # Safety
/// `t` must be a live handle; `out` a valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_sign_binarize(
    t: *const TacTensor,
    out: *mut *mut TacBitTensor,
) -> TacStatus {
    let t = try_ref!(t, "tensor");
    unsafe { write_out(out, TacBitTensor(tac_core::binarize::sign_binarize(&t.0))) }
}

/// # Safety
/// `b` must be a handle from this library, not yet freed (or null).
#[no_mangle]
pub unsafe extern "C" fn tac_bit_tensor_free(b: *mut TacBitTensor) {
    if !b.is_null() {
        drop(unsafe { Box::from_raw(b) });
    }
}

/// Number of +1 elements.
///
/// # Safety
/// `b` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tac_bit_tensor_popcount(b: *const TacBitTensor) -> u64 {
    unsafe { b.as_ref() }.map_or(0, |b| b.0.count_plus() as u64)
}

// --- kernels ---------------------------------------------------------------

/// Binary convolution: the input bits are convolved with the sign of
/// `weights` (per-channel mean-|w| scales when `scaled` is nonzero).
///
/// # Safety
/// `input` and `weights` must be live handles; `out` a valid location.
#[no_mangle]
pub unsafe extern "C" fn tac_binary_conv2d(
    input: *const TacBitTensor,
    weights: *const TacTensor,
    geometry: TacConvGeometry,
    padding: TacPadding,
    scaled: i32,
    out: *mut *mut TacTensor,
) -> TacStatus {
    let input = try_ref!(input, "input");
    let weights = try_ref!(weights, "weights");
    let bank = match binarize_filters(&weights.0, scaled != 0) {
        Ok(b) => b,
        Err(e) => return fail(e),
    };
    match xnor::binary_conv2d(&input.0, &bank, &geometry.to_core(), padding.to_core()) {
        Ok(t) => unsafe { write_out(out, TacTensor(t)) },
        Err(e) => fail(e),
    }
}

/// Binary fully connected layer over a `[out, in]` weight matrix.
///
/// # Safety
/// `input` and `weights` must be live handles; `out` a valid location.
#[no_mangle]
pub unsafe extern "C" fn tac_binary_linear(
    input: *const TacBitTensor,
    weights: *const TacTensor,
    scaled: i32,
    out: *mut *mut TacTensor,
) -> TacStatus {
    let input = try_ref!(input, "input");
    let weights = try_ref!(weights, "weights");
    let bank = match binarize_filters(&weights.0, scaled != 0) {
        Ok(b) => b,
        Err(e) => return fail(e),
    };
    match xnor::binary_linear(&input.0, &bank) {
        Ok(t) => unsafe { write_out(out, TacTensor(t)) },
        Err(e) => fail(e),
    }
}

// --- compression -----------------------------------------------------------

/// Prunes a 2-d weight tensor at `rate` and quantizes the survivors with a
/// `bit_width`-bit codebook.
///
/// # Safety
/// `weights` must be a live handle; `out` a valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_prune_quantize(
    weights: *const TacTensor,
    rate: f64,
    bit_width: u32,
    out: *mut *mut TacSparseLayer,
) -> TacStatus {
    let weights = try_ref!(weights, "weights");
    match prune_quantize(&weights.0, rate, bit_width) {
        Ok((_, layer)) => unsafe { write_out(out, TacSparseLayer(layer)) },
        Err(e) => fail(e),
    }
}

/// # Safety
/// `l` must be a handle from this library, not yet freed (or null).
#[no_mangle]
pub unsafe extern "C" fn tac_sparse_free(l: *mut TacSparseLayer) {
    if !l.is_null() {
        drop(unsafe { Box::from_raw(l) });
    }
}

/// Dense reconstruction: pruned positions are exactly zero.
///
/// # Safety
/// `l` must be a live handle; `out` a valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_sparse_decode(
    l: *const TacSparseLayer,
    out: *mut *mut TacTensor,
) -> TacStatus {
    let l = try_ref!(l, "sparse layer");
    unsafe { write_out(out, TacTensor(decode(&l.0))) }
}

/// Sparse matrix-vector product against an input of length `cols`.
///
/// # Safety
/// `l` and `x` must be live handles; `out` a valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_sparse_forward(
    l: *const TacSparseLayer,
    x: *const TacTensor,
    out: *mut *mut TacTensor,
) -> TacStatus {
    let l = try_ref!(l, "sparse layer");
    let x = try_ref!(x, "input");
    match fc_forward(&l.0, &x.0) {
        Ok(t) => unsafe { write_out(out, TacTensor(t)) },
        Err(e) => fail(e),
    }
}

/// Serializes the layer into a fresh byte buffer; free it with
/// [`tac_buffer_free`].
///
/// # Safety
/// `l` must be a live handle; `buf`/`len` valid output locations.
#[no_mangle]
pub unsafe extern "C" fn tac_sparse_serialize(
    l: *const TacSparseLayer,
    buf: *mut *mut u8,
    len: *mut usize,
) -> TacStatus {
    let l = try_ref!(l, "sparse layer");
    if buf.is_null() || len.is_null() {
        set_error("output pointer is null");
        return TacStatus::InvalidArgument;
    }
    let bytes = l.0.to_bytes().into_boxed_slice();
    unsafe {
        *len = bytes.len();
        *buf = Box::into_raw(bytes) as *mut u8;
    }
    TacStatus::Ok
}

/// Rebuilds a layer from bytes written by [`tac_sparse_serialize`].
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` a valid location.
#[no_mangle]
pub unsafe extern "C" fn tac_sparse_deserialize(
    bytes: *const u8,
    len: usize,
    out: *mut *mut TacSparseLayer,
) -> TacStatus {
    if bytes.is_null() {
        set_error("bytes pointer is null");
        return TacStatus::InvalidArgument;
    }
    let slice = unsafe { std::slice::from_raw_parts(bytes, len) };
    match SparseQuantLayer::from_bytes(slice) {
        Ok(l) => unsafe { write_out(out, TacSparseLayer(l)) },
        Err(e) => fail(e),
    }
}

/// Frees a buffer returned by [`tac_sparse_serialize`].
///
/// # Safety
/// `buf` must be a buffer of exactly `len` bytes from this library.
#[no_mangle]
pub unsafe extern "C" fn tac_buffer_free(buf: *mut u8, len: usize) {
    if !buf.is_null() {
        drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(buf, len)) });
    }
}

/// Storage cost in bits of a sparse quantized layer (the same formula the
/// serializer and the analyzer share).
#[no_mangle]
pub extern "C" fn tac_sparse_size_bits(
    rows: u64,
    cols: u64,
    kept: u64,
    bit_width: u32,
    num_levels: u64,
    index_bits: u32,
) -> u64 {
    sparse_layer_size_bits(rows, cols, kept, bit_width, num_levels, index_bits)
}

// --- analyzer --------------------------------------------------------------

/// Looks up a graph from the shipped zoo by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` a valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_graph_by_name(
    name: *const c_char,
    out: *mut *mut TacGraph,
) -> TacStatus {
    if name.is_null() {
        set_error("name pointer is null");
        return TacStatus::InvalidArgument;
    }
    let name = match unsafe { CStr::from_ptr(name) }.to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("name is not valid UTF-8");
            return TacStatus::InvalidArgument;
        }
    };
    match graphs::by_name(name) {
        Ok(g) => unsafe { write_out(out, TacGraph(g)) },
        Err(e) => fail(e),
    }
}

/// # Safety
/// `g` must be a handle from this library, not yet freed (or null).
#[no_mangle]
pub unsafe extern "C" fn tac_graph_free(g: *mut TacGraph) {
    if !g.is_null() {
        drop(unsafe { Box::from_raw(g) });
    }
}

/// Applies a named policy (`full`, `xnor`, `bnn`, `tac`, `tac-bnn`) and
/// returns a new graph handle.
///
/// # Safety
/// `g` must be a live handle, `policy` a NUL-terminated string, `out` a
/// valid output location.
#[no_mangle]
pub unsafe extern "C" fn tac_graph_apply_policy(
    g: *const TacGraph,
    policy: *const c_char,
    rate: f64,
    bit_width: u32,
    out: *mut *mut TacGraph,
) -> TacStatus {
    let g = try_ref!(g, "graph");
    if policy.is_null() {
        set_error("policy pointer is null");
        return TacStatus::InvalidArgument;
    }
    let policy = match unsafe { CStr::from_ptr(policy) }.to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("policy is not valid UTF-8");
            return TacStatus::InvalidArgument;
        }
    };
    let named = match NamedPolicy::parse(policy) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    match graphs::apply_policy(&g.0, named, rate, bit_width) {
        Ok(g2) => unsafe { write_out(out, TacGraph(g2)) },
        Err(e) => fail(e),
    }
}

/// Accounting report of `compressed` against `full`, rendered in the
/// machine format (tab-separated, one record per layer plus totals and
/// ratios). Free the string with [`tac_string_free`].
///
/// # Safety
/// `full` and `compressed` must be live handles; `out` a valid location.
#[no_mangle]
pub unsafe extern "C" fn tac_analyze_machine(
    full: *const TacGraph,
    compressed: *const TacGraph,
    index_bits: u32,
    include_bias: i32,
    out: *mut *mut c_char,
) -> TacStatus {
    let full = try_ref!(full, "full graph");
    let compressed = try_ref!(compressed, "compressed graph");
    if out.is_null() {
        set_error("output pointer is null");
        return TacStatus::InvalidArgument;
    }
    let opts = AnalyzerOptions {
        index_bits,
        include_bias: include_bias != 0,
    };
    match compare(&full.0, &compressed.0, &opts) {
        Ok(report) => {
            let s = CString::new(report.render_machine()).unwrap();
            unsafe { *out = s.into_raw() };
            TacStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be a string from this library, not yet freed (or null).
#[no_mangle]
pub unsafe extern "C" fn tac_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

// --- self checks -------------------------------------------------------------

/// Runs the randomized self-check suites; returns the total failure count
/// (0 means everything passed).
#[no_mangle]
pub extern "C" fn tac_verify(seed: u64, instances: usize) -> u64 {
    tac_core::verify::run_all(seed, instances)
        .iter()
        .map(|r| r.failures.len() as u64)
        .sum()
}
