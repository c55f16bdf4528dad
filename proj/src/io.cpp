#include "tar/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tar/errors.hpp"

namespace tar {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IngestionError("write failed for '" + path + "'");
}

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

void ByteWriter::u16(std::uint16_t v) { put_le(out_, v); }
void ByteWriter::u32(std::uint32_t v) { put_le(out_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(out_, v); }
void ByteWriter::f32(float v) { put_le(out_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(out_, std::bit_cast<std::uint64_t>(v)); }

std::string_view ByteReader::bytes(std::size_t n) {
  if (n > data_.size() - pos_) {
    throw FormatError(format_ + ": truncated at byte " + std::to_string(pos_));
  }
  const std::string_view s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

namespace {

template <typename T>
T get_le(std::string_view s) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(s[i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::uint16_t ByteReader::u16() { return get_le<std::uint16_t>(bytes(2)); }
std::uint32_t ByteReader::u32() { return get_le<std::uint32_t>(bytes(4)); }
std::uint64_t ByteReader::u64() { return get_le<std::uint64_t>(bytes(8)); }
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

}  // namespace tar
