#pragma once

#include "fedmef/sparse/masked_tensor.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fedmef::sparse {

enum class Scheme : std::uint8_t { Dense = 0, Bitmap = 1, COO = 2, CSR = 3, CSC = 4 };

std::string_view scheme_name(Scheme s);

/// Density band selection. The lowest band reports CSR; use the shape-aware overload to
/// resolve CSR versus CSC.
///   [0.9, 1] Dense, [0.3, 0.9) Bitmap, [0.1, 0.3) COO, [0, 0.1) CSR/CSC
Scheme select_scheme(double density);

/// As above, picking CSR or CSC by the smaller position overhead (ties go to CSR).
Scheme select_scheme(double density, std::size_t rows, std::size_t cols, std::size_t nnz);

/// ceil(log2(x)), with x <= 1 mapped to 0.
unsigned ceil_log2(std::uint64_t x) noexcept;

/// Position overhead `o` for a scheme.
std::uint64_t position_bits(std::uint64_t n, std::uint64_t nnz, Scheme scheme, std::uint64_t rows,
                            std::uint64_t cols);

/// Storage cost `s` in bits:
///   Dense  n*b
///   Bitmap n + nnz*b
///   COO    nnz*ceil(log2 n) + nnz*b
///   CSR    nnz*ceil(log2 cols) + rows*ceil(log2 nnz) + nnz*b   (CSC: rows and cols swapped)
/// Throws InvalidArgument when nnz > n, b == 0, or rows*cols != n.
std::uint64_t storage_bits(std::uint64_t n, std::uint64_t nnz, unsigned b, Scheme scheme, std::uint64_t rows,
                           std::uint64_t cols);

/// Shape-free overload for schemes that ignore the 2-D view (rows = 1, cols = n).
std::uint64_t storage_bits(std::uint64_t n, std::uint64_t nnz, unsigned b, Scheme scheme);

/// 2-D view used before CSR/CSC: leading dims flattened into rows, last dim is columns.
struct MatrixView {
    std::size_t rows = 1;
    std::size_t cols = 1;
};
MatrixView as_matrix(const Shape &shape);

struct EncodedTensor {
    Scheme scheme = Scheme::Dense;
    Shape shape;
    std::uint64_t nnz = 0;
    unsigned value_bits = 32;
    std::uint64_t position_bits = 0;
    std::uint64_t total_bits = 0;
    /// Bit-packed payload, LSB first, padded to whole bytes.
    std::vector<std::uint8_t> payload;

    friend bool operator==(const EncodedTensor &, const EncodedTensor &) = default;
};

/// Encodes with the density-selected scheme. `value_bits` must be 32 or 64; other widths are
/// supported by storage_bits for accounting only.
EncodedTensor encode(const MaskedTensor &t, unsigned value_bits = 32);

/// Encodes with an explicit scheme (used for TopK uploads, which are always costed as COO).
EncodedTensor encode(const MaskedTensor &t, unsigned value_bits, Scheme scheme);

/// Throws DecodeError naming the scheme and payload byte offset on malformed input.
MaskedTensor decode(const EncodedTensor &e);

/// Framed record: u8 scheme, u32 rank, u32 dims[rank], u32 nnz, u32 b, payload. Little-endian.
std::vector<std::uint8_t> serialize(const EncodedTensor &e);
void serialize_into(const EncodedTensor &e, std::vector<std::uint8_t> &out);

/// Reads one record starting at `offset` and advances it past the record.
EncodedTensor deserialize(std::span<const std::uint8_t> bytes, std::size_t &offset);

/// Checkpoint: u32 record count, then one framed record per tensor.
std::vector<std::uint8_t> write_checkpoint(std::span<const MaskedTensor> tensors, unsigned value_bits = 32);
std::vector<MaskedTensor> read_checkpoint(std::span<const std::uint8_t> bytes);

} // namespace fedmef::sparse
