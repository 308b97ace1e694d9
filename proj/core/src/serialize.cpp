#include "daal/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace daal::nd {

namespace {

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::istream& is, void* p, std::size_t n, std::uint64_t& offset,
               const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) {
        throw std::runtime_error(std::string("truncated stream at offset ") +
                                 std::to_string(offset) + " reading " + what);
    }
    offset += n;
}

std::uint64_t to_le64(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
        return r;
    }
}

std::uint32_t to_le32(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) |
               ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

} // namespace

void write_u32(std::ostream& os, std::uint32_t v) {
    const std::uint32_t le = to_le32(v);
    put_bytes(os, &le, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    const std::uint64_t le = to_le64(v);
    put_bytes(os, &le, 8);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

std::uint32_t read_u32(std::istream& is, std::uint64_t& offset) {
    std::uint32_t v = 0;
    get_bytes(is, &v, 4, offset, "u32");
    return to_le32(v);
}

std::uint64_t read_u64(std::istream& is, std::uint64_t& offset) {
    std::uint64_t v = 0;
    get_bytes(is, &v, 8, offset, "u64");
    return to_le64(v);
}

double read_f64(std::istream& is, std::uint64_t& offset) {
    const std::uint64_t bits = read_u64(is, offset);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_fragment(std::ostream& os, const std::string& name,
                    const Tensor& tensor) {
    write_u64(os, name.size());
    put_bytes(os, name.data(), name.size());
    write_u64(os, tensor.rank());
    for (std::size_t e : tensor.shape()) write_u64(os, e);
    for (double v : tensor.data()) write_f64(os, v);
}

std::pair<std::string, Tensor> read_fragment(std::istream& is,
                                             std::uint64_t& offset) {
    const std::uint64_t name_len = read_u64(is, offset);
    if (name_len > 1u << 20) {
        throw std::runtime_error("fragment name length " +
                                 std::to_string(name_len) +
                                 " implausible at offset " +
                                 std::to_string(offset - 8));
    }
    std::string name(name_len, '\0');
    if (name_len) get_bytes(is, name.data(), name_len, offset, "name");
    const std::uint64_t rank = read_u64(is, offset);
    if (rank > 8) {
        throw std::runtime_error("fragment rank " + std::to_string(rank) +
                                 " implausible at offset " +
                                 std::to_string(offset - 8));
    }
    std::vector<std::size_t> shape(rank);
    std::uint64_t numel = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
        shape[d] = static_cast<std::size_t>(read_u64(is, offset));
        numel *= shape[d];
        if (numel > (1ull << 32)) {
            throw std::runtime_error("fragment too large at offset " +
                                     std::to_string(offset));
        }
    }
    std::vector<double> data(numel);
    for (std::uint64_t i = 0; i < numel; ++i) data[i] = read_f64(is, offset);
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

} // namespace daal::nd
