#ifndef TAC_H
#define TAC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum TacStatus {
  TAC_STATUS_OK = 0,
  // An argument was null, malformed, or out of its documented domain.
  TAC_STATUS_INVALID_ARGUMENT = 1,
  // Input bytes or files failed validation.
  TAC_STATUS_CORRUPT_DATA = 2,
  // Shapes or lengths disagree.
  TAC_STATUS_SHAPE_MISMATCH = 3,
  // Any other internal failure.
  TAC_STATUS_INTERNAL = 4,
} TacStatus;

// Padding semantics for the binary convolution.
typedef enum TacPadding {
  TAC_PADDING_PLUS_ONE = 0,
  TAC_PADDING_MINUS_ONE = 1,
  TAC_PADDING_ZERO = 2,
} TacPadding;

// Bit-packed sign tensor (opaque).
typedef struct TacBitTensor TacBitTensor;

// Layered model description with per-layer policies (opaque).
typedef struct TacGraph TacGraph;

// Pruned and quantized fc layer (opaque).
typedef struct TacSparseLayer TacSparseLayer;

// Dense row-major tensor of doubles (opaque).
typedef struct TacTensor TacTensor;

// Convolution geometry in C-friendly form.
typedef struct TacConvGeometry {
  uint32_t in_channels;
  uint32_t out_channels;
  uint32_t kernel_h;
  uint32_t kernel_w;
  uint32_t stride;
  uint32_t padding;
  uint32_t input_h;
  uint32_t input_w;
} TacConvGeometry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. The pointer stays
// valid until the next failing call on the same thread.
const char *tac_last_error(void);

// Builds a dense tensor from `ndims` dimensions and `len` doubles.
//
// # Safety
// `dims` must point to `ndims` readable u32 values and `data` to `len`
// readable doubles; `out` must be a valid location for a pointer.
enum TacStatus tac_tensor_new(const uint32_t *dims,
                              uintptr_t ndims,
                              const double *data,
                              uintptr_t len,
                              struct TacTensor **out);

// # Safety
// `t` must be a handle from this library, not yet freed (or null).
void tac_tensor_free(struct TacTensor *t);

// Element count of a tensor; 0 for a null handle.
//
// # Safety
// `t` must be a live handle or null.
uintptr_t tac_tensor_len(const struct TacTensor *t);

// Borrows the tensor's data pointer and length. The pointer is valid while
// the handle lives and must not be written through.
//
// # Safety
// All pointers must be valid; the handle must outlive any use of `*data`.
enum TacStatus tac_tensor_data(const struct TacTensor *t, const double **data, uintptr_t *len);

// Packs a strictly {-1,+1} tensor into bits.
//
// # Safety
// `t` must be a live handle; `out` a valid output location.
enum TacStatus tac_pack(const struct TacTensor *t, struct TacBitTensor **out);

// Expands a bit tensor back to dense {-1,+1} values.
//
// # Safety
// `b` must be a live handle; `out` a valid output location.
enum TacStatus tac_unpack(const struct TacBitTensor *b, struct TacTensor **out);

// Binarizes elementwise (+1 where the value is >= 0).
//
// # Safety
// `t` must be a live handle; `out` a valid output location.
enum TacStatus tac_sign_binarize(const struct TacTensor *t, struct TacBitTensor **out);

// # Safety
// `b` must be a handle from this library, not yet freed (or null).
void tac_bit_tensor_free(struct TacBitTensor *b);

// Number of +1 elements.
//
// # Safety
// `b` must be a live handle or null.
uint64_t tac_bit_tensor_popcount(const struct TacBitTensor *b);

// Binary convolution: the input bits are convolved with the sign of
// `weights` (per-channel mean-|w| scales when `scaled` is nonzero).
//
// # Safety
// `input` and `weights` must be live handles; `out` a valid location.
enum TacStatus tac_binary_conv2d(const struct TacBitTensor *input,
                                 const struct TacTensor *weights,
                                 struct TacConvGeometry geometry,
                                 enum TacPadding padding,
                                 int32_t scaled,
                                 struct TacTensor **out);

// Binary fully connected layer over a `[out, in]` weight matrix.
//
// # Safety
// `input` and `weights` must be live handles; `out` a valid location.
enum TacStatus tac_binary_linear(const struct TacBitTensor *input,
                                 const struct TacTensor *weights,
                                 int32_t scaled,
                                 struct TacTensor **out);

// Prunes a 2-d weight tensor at `rate` and quantizes the survivors with a
// `bit_width`-bit codebook.
//
// # Safety
// `weights` must be a live handle; `out` a valid output location.
enum TacStatus tac_prune_quantize(const struct TacTensor *weights,
                                  double rate,
                                  uint32_t bit_width,
                                  struct TacSparseLayer **out);

// # Safety
// `l` must be a handle from this library, not yet freed (or null).
void tac_sparse_free(struct TacSparseLayer *l);

// Dense reconstruction: pruned positions are exactly zero.
//
// # Safety
// `l` must be a live handle; `out` a valid output location.
enum TacStatus tac_sparse_decode(const struct TacSparseLayer *l, struct TacTensor **out);

// Sparse matrix-vector product against an input of length `cols`.
//
// # Safety
// `l` and `x` must be live handles; `out` a valid output location.
enum TacStatus tac_sparse_forward(const struct TacSparseLayer *l,
                                  const struct TacTensor *x,
                                  struct TacTensor **out);

// Serializes the layer into a fresh byte buffer; free it with
// [`tac_buffer_free`].
//
// # Safety
// `l` must be a live handle; `buf`/`len` valid output locations.
enum TacStatus tac_sparse_serialize(const struct TacSparseLayer *l, uint8_t **buf, uintptr_t *len);

// Rebuilds a layer from bytes written by [`tac_sparse_serialize`].
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` a valid location.
enum TacStatus tac_sparse_deserialize(const uint8_t *bytes,
                                      uintptr_t len,
                                      struct TacSparseLayer **out);

// Frees a buffer returned by [`tac_sparse_serialize`].
//
// # Safety
// `buf` must be a buffer of exactly `len` bytes from this library.
void tac_buffer_free(uint8_t *buf, uintptr_t len);

// Storage cost in bits of a sparse quantized layer (the same formula the
// serializer and the analyzer share).
uint64_t tac_sparse_size_bits(uint64_t rows,
                              uint64_t cols,
                              uint64_t kept,
                              uint32_t bit_width,
                              uint64_t num_levels,
                              uint32_t index_bits);

// Looks up a graph from the shipped zoo by name.
//
// # Safety
// `name` must be a NUL-terminated string; `out` a valid output location.
enum TacStatus tac_graph_by_name(const char *name, struct TacGraph **out);

// # Safety
// `g` must be a handle from this library, not yet freed (or null).
void tac_graph_free(struct TacGraph *g);

// Applies a named policy (`full`, `xnor`, `bnn`, `tac`, `tac-bnn`) and
// returns a new graph handle.
//
// # Safety
// `g` must be a live handle, `policy` a NUL-terminated string, `out` a
// valid output location.
enum TacStatus tac_graph_apply_policy(const struct TacGraph *g,
                                      const char *policy,
                                      double rate,
                                      uint32_t bit_width,
                                      struct TacGraph **out);

// Accounting report of `compressed` against `full`, rendered in the
// machine format (tab-separated, one record per layer plus totals and
// ratios). Free the string with [`tac_string_free`].
//
// # Safety
// `full` and `compressed` must be live handles; `out` a valid location.
enum TacStatus tac_analyze_machine(const struct TacGraph *full,
                                   const struct TacGraph *compressed,
                                   uint32_t index_bits,
                                   int32_t include_bias,
                                   char **out);

// Frees a string returned by this library.
//
// # Safety
// `s` must be a string from this library, not yet freed (or null).
void tac_string_free(char *s);

// Runs the randomized self-check suites; returns the total failure count
// (0 means everything passed).
uint64_t tac_verify(uint64_t seed, uintptr_t instances);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAC_H */
