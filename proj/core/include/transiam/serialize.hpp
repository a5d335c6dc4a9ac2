#pragma once

#include <cstdint>
#include <istream>
#include <ostream>

#include "transiam/tensor.hpp"

namespace transiam {

/// Tensor wire format: "TSR1", rank (u64), extents (u64 each), then the
/// values as little-endian 32-bit floats.
void write_tensor(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& in);

/// Bytes write_tensor emits for a tensor of this shape.
std::uint64_t serialized_size(const Shape& shape);

}  // namespace transiam
