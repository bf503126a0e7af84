#include "fedmef/sparse/codec.hpp"

#include "fedmef/errors.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace fedmef::sparse {

std::string_view scheme_name(Scheme s) {
    switch (s) {
    case Scheme::Dense: return "Dense";
    case Scheme::Bitmap: return "Bitmap";
    case Scheme::COO: return "COO";
    case Scheme::CSR: return "CSR";
    case Scheme::CSC: return "CSC";
    }
    return "Unknown";
}

Scheme select_scheme(double density) {
    if (density >= 0.9)
        return Scheme::Dense;
    if (density >= 0.3)
        return Scheme::Bitmap;
    if (density >= 0.1)
        return Scheme::COO;
    return Scheme::CSR;
}

Scheme select_scheme(double density, std::size_t rows, std::size_t cols, std::size_t nnz) {
    const Scheme band = select_scheme(density);
    if (band != Scheme::CSR)
        return band;
    const auto n = static_cast<std::uint64_t>(rows) * cols;
    const auto csr = position_bits(n, nnz, Scheme::CSR, rows, cols);
    const auto csc = position_bits(n, nnz, Scheme::CSC, rows, cols);
    return csc < csr ? Scheme::CSC : Scheme::CSR;
}

unsigned ceil_log2(std::uint64_t x) noexcept {
    if (x <= 1)
        return 0;
    return static_cast<unsigned>(std::bit_width(x - 1));
}

std::uint64_t position_bits(std::uint64_t n, std::uint64_t nnz, Scheme scheme, std::uint64_t rows,
                            std::uint64_t cols) {
    switch (scheme) {
    case Scheme::Dense: return 0;
    case Scheme::Bitmap: return n;
    case Scheme::COO: return nnz * ceil_log2(n);
    case Scheme::CSR: return nnz * ceil_log2(cols) + rows * ceil_log2(nnz);
    case Scheme::CSC: return nnz * ceil_log2(rows) + cols * ceil_log2(nnz);
    }
    throw InvalidArgument("unknown compression scheme");
}

std::uint64_t storage_bits(std::uint64_t n, std::uint64_t nnz, unsigned b, Scheme scheme, std::uint64_t rows,
                           std::uint64_t cols) {
    if (nnz > n)
        throw InvalidArgument("storage_bits: nnz exceeds element count");
    if (b == 0)
        throw InvalidArgument("storage_bits: value bitwidth must be positive");
    if (rows * cols != n)
        throw InvalidArgument("storage_bits: rows * cols must equal n");
    if (scheme == Scheme::Dense)
        return n * b;
    return position_bits(n, nnz, scheme, rows, cols) + nnz * b;
}

std::uint64_t storage_bits(std::uint64_t n, std::uint64_t nnz, unsigned b, Scheme scheme) {
    return storage_bits(n, nnz, b, scheme, 1, n);
}

MatrixView as_matrix(const Shape &shape) {
    if (shape.empty())
        return {1, 1};
    const std::size_t cols = shape.back();
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i)
        rows *= shape[i];
    return {rows, cols};
}

namespace {

// Pruned slots in a Dense payload carry this NaN so the mask survives the round trip.
constexpr std::uint32_t kPrunedF32 = 0x7fc0'0001u;
constexpr std::uint64_t kPrunedF64 = 0x7ff8'0000'0000'0001ull;

class BitWriter {
public:
    void put(std::uint64_t value, unsigned width) {
        for (unsigned i = 0; i < width; ++i) {
            if (bit_ % 8 == 0)
                bytes_.push_back(0);
            if ((value >> i) & 1u)
                bytes_.back() |= static_cast<std::uint8_t>(1u << (bit_ % 8));
            ++bit_;
        }
    }
    std::uint64_t bits() const noexcept { return bit_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    std::uint64_t bit_ = 0;
};

class BitReader {
public:
    BitReader(const std::vector<std::uint8_t> &bytes, Scheme scheme) : bytes_(bytes), scheme_(scheme) {}

    std::uint64_t get(unsigned width) {
        if (bit_ + width > bytes_.size() * 8)
            fail("payload truncated");
        std::uint64_t v = 0;
        for (unsigned i = 0; i < width; ++i, ++bit_)
            if ((bytes_[bit_ / 8] >> (bit_ % 8)) & 1u)
                v |= std::uint64_t{1} << i;
        return v;
    }

    [[noreturn]] void fail(const std::string &what) const {
        throw DecodeError(std::string(scheme_name(scheme_)), bit_ / 8, what);
    }

    void expect_end() const {
        if ((bit_ + 7) / 8 != bytes_.size())
            fail("trailing payload bytes");
    }

private:
    const std::vector<std::uint8_t> &bytes_;
    Scheme scheme_;
    std::uint64_t bit_ = 0;
};

void put_value(BitWriter &w, float v, unsigned b) {
    if (b == 32) {
        w.put(std::bit_cast<std::uint32_t>(v), 32);
    } else {
        w.put(std::bit_cast<std::uint64_t>(static_cast<double>(v)), 64);
    }
}

float get_value(BitReader &r, unsigned b) {
    if (b == 32)
        return std::bit_cast<float>(static_cast<std::uint32_t>(r.get(32)));
    const double d = std::bit_cast<double>(r.get(64));
    const auto f = static_cast<float>(d);
    if (static_cast<double>(f) != d && d == d)
        r.fail("64-bit value not representable in the tensor's precision");
    return f;
}

std::uint64_t ceil_log2_entries(std::uint64_t x) { return ceil_log2(x + 1); }

void check_value_bits(unsigned b) {
    if (b != 32 && b != 64)
        throw InvalidArgument("encode: value bitwidth must be 32 or 64");
}

} // namespace

EncodedTensor encode(const MaskedTensor &t, unsigned value_bits) {
    const std::size_t n = t.size();
    const std::size_t nnz = t.mask().count_kept();
    const double density = n == 0 ? 0.0 : static_cast<double>(nnz) / static_cast<double>(n);
    const auto mv = as_matrix(t.shape());
    return encode(t, value_bits, select_scheme(density, mv.rows, mv.cols, nnz));
}

EncodedTensor encode(const MaskedTensor &t, unsigned value_bits, Scheme scheme) {
    check_value_bits(value_bits);
    const auto &vals = t.values();
    const auto &mask = t.mask();
    const std::size_t n = t.size();
    const auto mv = as_matrix(t.shape());

    EncodedTensor e;
    e.scheme = scheme;
    e.shape = t.shape();
    e.nnz = mask.count_kept();
    e.value_bits = value_bits;
    e.position_bits = position_bits(n, e.nnz, scheme, mv.rows, mv.cols);
    e.total_bits = storage_bits(n, e.nnz, value_bits, scheme, mv.rows, mv.cols);

    BitWriter w;
    switch (scheme) {
    case Scheme::Dense:
        for (std::size_t i = 0; i < n; ++i) {
            if (mask[i]) {
                const bool clash = value_bits == 32
                                       ? std::bit_cast<std::uint32_t>(vals[i]) == kPrunedF32
                                       : std::bit_cast<std::uint64_t>(static_cast<double>(vals[i])) == kPrunedF64;
                if (clash)
                    throw InvalidArgument("encode: kept value collides with the pruned-slot marker");
                put_value(w, vals[i], value_bits);
            } else if (value_bits == 32) {
                w.put(kPrunedF32, 32);
            } else {
                w.put(kPrunedF64, 64);
            }
        }
        break;
    case Scheme::Bitmap:
        for (std::size_t i = 0; i < n; ++i)
            w.put(mask[i] ? 1 : 0, 1);
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i])
                put_value(w, vals[i], value_bits);
        break;
    case Scheme::COO: {
        const unsigned iw = ceil_log2(n);
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i])
                w.put(i, iw);
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i])
                put_value(w, vals[i], value_bits);
        break;
    }
    case Scheme::CSR:
    case Scheme::CSC: {
        const bool by_row = scheme == Scheme::CSR;
        const std::size_t outer = by_row ? mv.rows : mv.cols;
        const std::size_t inner = by_row ? mv.cols : mv.rows;
        const auto at = [&](std::size_t o, std::size_t i) { return by_row ? o * mv.cols + i : i * mv.cols + o; };
        const unsigned pw = static_cast<unsigned>(ceil_log2_entries(e.nnz));
        const unsigned iw = ceil_log2(inner);
        std::uint64_t running = 0;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i)
                running += mask[at(o, i)] ? 1 : 0;
            w.put(running, pw);
        }
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i)
                if (mask[at(o, i)])
                    w.put(i, iw);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i)
                if (mask[at(o, i)])
                    put_value(w, vals[at(o, i)], value_bits);
        break;
    }
    }
    e.payload = w.take();
    return e;
}

MaskedTensor decode(const EncodedTensor &e) {
    const std::string name(scheme_name(e.scheme));
    if (e.value_bits != 32 && e.value_bits != 64)
        throw DecodeError(name, 0, "unsupported value bitwidth " + std::to_string(e.value_bits));
    const std::size_t n = element_count(e.shape);
    if (e.nnz > n)
        throw DecodeError(name, 0, "nnz exceeds element count");
    const auto mv = as_matrix(e.shape);

    std::vector<float> vals(n, 0.0f);
    std::vector<std::uint8_t> bits(n, 0);
    BitReader r(e.payload, e.scheme);

    switch (e.scheme) {
    case Scheme::Dense: {
        std::size_t kept = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t raw = r.get(e.value_bits);
            const bool pruned = e.value_bits == 32 ? raw == kPrunedF32 : raw == kPrunedF64;
            if (pruned)
                continue;
            bits[i] = 1;
            ++kept;
            vals[i] = e.value_bits == 32 ? std::bit_cast<float>(static_cast<std::uint32_t>(raw))
                                         : static_cast<float>(std::bit_cast<double>(raw));
        }
        if (kept != e.nnz)
            r.fail("kept count disagrees with header nnz");
        break;
    }
    case Scheme::Bitmap: {
        std::size_t kept = 0;
        for (std::size_t i = 0; i < n; ++i) {
            bits[i] = static_cast<std::uint8_t>(r.get(1));
            kept += bits[i];
        }
        if (kept != e.nnz)
            r.fail("bitmap population disagrees with header nnz");
        for (std::size_t i = 0; i < n; ++i)
            if (bits[i])
                vals[i] = get_value(r, e.value_bits);
        break;
    }
    case Scheme::COO: {
        const unsigned iw = ceil_log2(n);
        std::vector<std::size_t> idx(e.nnz);
        for (std::size_t k = 0; k < e.nnz; ++k) {
            idx[k] = static_cast<std::size_t>(r.get(iw));
            if (idx[k] >= n || (k > 0 && idx[k] <= idx[k - 1]))
                r.fail("coordinate out of range or out of order");
            bits[idx[k]] = 1;
        }
        for (std::size_t k = 0; k < e.nnz; ++k)
            vals[idx[k]] = get_value(r, e.value_bits);
        break;
    }
    case Scheme::CSR:
    case Scheme::CSC: {
        const bool by_row = e.scheme == Scheme::CSR;
        const std::size_t outer = by_row ? mv.rows : mv.cols;
        const std::size_t inner = by_row ? mv.cols : mv.rows;
        const auto at = [&](std::size_t o, std::size_t i) { return by_row ? o * mv.cols + i : i * mv.cols + o; };
        const unsigned pw = static_cast<unsigned>(ceil_log2_entries(e.nnz));
        const unsigned iw = ceil_log2(inner);
        std::vector<std::uint64_t> ends(outer);
        std::uint64_t prev = 0;
        for (std::size_t o = 0; o < outer; ++o) {
            ends[o] = r.get(pw);
            if (ends[o] < prev || ends[o] > e.nnz)
                r.fail("segment pointers not monotone");
            prev = ends[o];
        }
        if (outer > 0 ? prev != e.nnz : e.nnz != 0)
            r.fail("segment pointers do not cover nnz");
        std::vector<std::size_t> flat;
        flat.reserve(e.nnz);
        std::uint64_t start = 0;
        for (std::size_t o = 0; o < outer; ++o) {
            std::size_t last = 0;
            for (std::uint64_t k = start; k < ends[o]; ++k) {
                const auto i = static_cast<std::size_t>(r.get(iw));
                if (i >= inner || (k > start && i <= last))
                    r.fail("inner index out of range or out of order");
                last = i;
                flat.push_back(at(o, i));
                bits[at(o, i)] = 1;
            }
            start = ends[o];
        }
        for (auto f : flat)
            vals[f] = get_value(r, e.value_bits);
        break;
    }
    default:
        throw DecodeError("Unknown", 0, "unknown scheme tag");
    }
    r.expect_end();
    return MaskedTensor(std::move(vals), Mask(e.shape, std::move(bits)));
}

namespace {

void put_u32(std::vector<std::uint8_t> &out, std::uint64_t v) {
    if (v > std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("serialize: field exceeds 32 bits");
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t &offset) {
    if (offset + 4 > bytes.size())
        throw DecodeError("frame", offset, "truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    offset += 4;
    return v;
}

std::uint64_t payload_bits(Scheme s, std::uint64_t n, std::uint64_t nnz, unsigned b, MatrixView mv) {
    switch (s) {
    case Scheme::Dense: return n * b;
    case Scheme::Bitmap: return n + nnz * b;
    case Scheme::COO: return nnz * ceil_log2(n) + nnz * b;
    case Scheme::CSR: return mv.rows * ceil_log2_entries(nnz) + nnz * ceil_log2(mv.cols) + nnz * b;
    case Scheme::CSC: return mv.cols * ceil_log2_entries(nnz) + nnz * ceil_log2(mv.rows) + nnz * b;
    }
    return 0;
}

} // namespace

void serialize_into(const EncodedTensor &e, std::vector<std::uint8_t> &out) {
    out.push_back(static_cast<std::uint8_t>(e.scheme));
    put_u32(out, e.shape.size());
    for (auto d : e.shape)
        put_u32(out, d);
    put_u32(out, e.nnz);
    put_u32(out, e.value_bits);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
}

std::vector<std::uint8_t> serialize(const EncodedTensor &e) {
    std::vector<std::uint8_t> out;
    serialize_into(e, out);
    return out;
}

EncodedTensor deserialize(std::span<const std::uint8_t> bytes, std::size_t &offset) {
    if (offset >= bytes.size())
        throw DecodeError("frame", offset, "missing scheme tag");
    const std::uint8_t tag = bytes[offset++];
    if (tag > static_cast<std::uint8_t>(Scheme::CSC))
        throw DecodeError("frame", offset - 1, "unknown scheme tag " + std::to_string(tag));
    EncodedTensor e;
    e.scheme = static_cast<Scheme>(tag);
    const std::uint32_t rank = get_u32(bytes, offset);
    if (rank > 16)
        throw DecodeError(std::string(scheme_name(e.scheme)), offset - 4, "implausible rank");
    for (std::uint32_t i = 0; i < rank; ++i)
        e.shape.push_back(get_u32(bytes, offset));
    e.nnz = get_u32(bytes, offset);
    e.value_bits = get_u32(bytes, offset);
    const std::uint64_t n = element_count(e.shape);
    if (e.nnz > n || (e.value_bits != 32 && e.value_bits != 64))
        throw DecodeError(std::string(scheme_name(e.scheme)), offset - 8, "inconsistent header");
    const auto mv = as_matrix(e.shape);
    const std::uint64_t pbytes = (payload_bits(e.scheme, n, e.nnz, e.value_bits, mv) + 7) / 8;
    if (offset + pbytes > bytes.size())
        throw DecodeError(std::string(scheme_name(e.scheme)), offset, "truncated payload");
    e.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                     bytes.begin() + static_cast<std::ptrdiff_t>(offset + pbytes));
    offset += pbytes;
    e.position_bits = position_bits(n, e.nnz, e.scheme, mv.rows, mv.cols);
    e.total_bits = storage_bits(n, e.nnz, e.value_bits, e.scheme, mv.rows, mv.cols);
    return e;
}

std::vector<std::uint8_t> write_checkpoint(std::span<const MaskedTensor> tensors, unsigned value_bits) {
    std::vector<std::uint8_t> out;
    put_u32(out, tensors.size());
    for (const auto &t : tensors)
        serialize_into(encode(t, value_bits), out);
    return out;
}

std::vector<MaskedTensor> read_checkpoint(std::span<const std::uint8_t> bytes) {
    std::size_t offset = 0;
    const std::uint32_t count = get_u32(bytes, offset);
    std::vector<MaskedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i)
        out.push_back(decode(deserialize(bytes, offset)));
    if (offset != bytes.size())
        throw DecodeError("frame", offset, "trailing bytes after checkpoint");
    return out;
}

} // namespace fedmef::sparse
