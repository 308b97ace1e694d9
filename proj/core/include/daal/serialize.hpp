#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "daal/tensor.hpp"

namespace daal::nd {

/// Tensor fragment wire format, little-endian throughout:
///   u64 name length, UTF-8 name bytes,
///   u64 rank, u64 extents[rank],
///   f64 data[product(extents)].
/// Checkpoints are a header followed by fragments until end of file.

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is, std::uint64_t& offset);
std::uint64_t read_u64(std::istream& is, std::uint64_t& offset);
double read_f64(std::istream& is, std::uint64_t& offset);

void write_fragment(std::ostream& os, const std::string& name,
                    const Tensor& tensor);

/// Reads one fragment. `offset` tracks the stream position for error
/// reporting and is updated as bytes are consumed. Throws
/// std::runtime_error with the offending offset on truncation.
std::pair<std::string, Tensor> read_fragment(std::istream& is,
                                             std::uint64_t& offset);

} // namespace daal::nd
