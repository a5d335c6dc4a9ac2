#include "transiam/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <vector>

#include "transiam/errors.hpp"

namespace transiam::binary {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw CorruptFileError(std::string("truncated file while reading ") + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }

void write_f32(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float f : values) put_le(out, std::bit_cast<std::uint32_t>(f));
  }
}

void write_bytes(std::ostream& out, std::span<const std::uint8_t> bytes) {
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_u32(std::istream& in, const char* what) { return get_le<std::uint32_t>(in, what); }
std::uint64_t read_u64(std::istream& in, const char* what) { return get_le<std::uint64_t>(in, what); }

void read_f32(std::istream& in, std::span<float> values, const char* what) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (in.gcount() != static_cast<std::streamsize>(values.size_bytes())) {
      throw CorruptFileError(std::string("truncated file while reading ") + what);
    }
  } else {
    for (float& f : values) f = std::bit_cast<float>(get_le<std::uint32_t>(in, what));
  }
}

void read_bytes(std::istream& in, std::span<std::uint8_t> bytes, const char* what) {
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw CorruptFileError(std::string("truncated file while reading ") + what);
  }
}

void expect_magic(std::istream& in, const std::string& magic, const char* what) {
  std::vector<char> buf(magic.size());
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw CorruptFileError(std::string("truncated file while reading ") + what + " header");
  }
  if (std::memcmp(buf.data(), magic.data(), magic.size()) != 0) {
    throw CorruptFileError(std::string("bad magic in ") + what + ": expected \"" + magic + "\"");
  }
}

}  // namespace transiam::binary
