#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>

// Little-endian encoding helpers. Files are little-endian regardless of host order.

namespace transiam::binary {

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, std::span<const float> values);
void write_bytes(std::ostream& out, std::span<const std::uint8_t> bytes);

/// Readers throw CorruptFileError naming `what` on a short read.
std::uint32_t read_u32(std::istream& in, const char* what);
std::uint64_t read_u64(std::istream& in, const char* what);
void read_f32(std::istream& in, std::span<float> values, const char* what);
void read_bytes(std::istream& in, std::span<std::uint8_t> bytes, const char* what);

/// Reads exactly magic.size() bytes and throws CorruptFileError unless they match.
void expect_magic(std::istream& in, const std::string& magic, const char* what);

}  // namespace transiam::binary
