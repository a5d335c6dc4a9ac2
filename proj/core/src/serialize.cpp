#include "transiam/serialize.hpp"

#include "transiam/binary_io.hpp"

namespace transiam {
namespace {
constexpr char kMagic[] = "TSR1";
constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;
}  // namespace

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  out.write(kMagic, 4);
  binary::write_u64(out, static_cast<std::uint64_t>(t.rank()));
  for (auto e : t.shape()) binary::write_u64(out, static_cast<std::uint64_t>(e));
  binary::write_f32(out, t.values());
}

Tensor<float> read_tensor(std::istream& in) {
  binary::expect_magic(in, kMagic, "tensor");
  const auto rank = binary::read_u64(in, "tensor rank");
  if (rank == 0 || rank > kMaxRank) {
    throw CorruptFileError("tensor rank " + std::to_string(rank) + " out of range");
  }
  Shape shape;
  std::uint64_t total = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    const auto e = binary::read_u64(in, "tensor extent");
    if (e == 0 || e > kMaxElements || total * e > kMaxElements) {
      throw CorruptFileError("tensor extent " + std::to_string(e) + " out of range");
    }
    total *= e;
    shape.push_back(static_cast<std::int64_t>(e));
  }
  Tensor<float> t(shape);
  binary::read_f32(in, t.values(), "tensor payload");
  return t;
}

std::uint64_t serialized_size(const Shape& shape) {
  return 4 + 8 + 8 * shape.size() + 4 * static_cast<std::uint64_t>(shape_numel(shape));
}

}  // namespace transiam
