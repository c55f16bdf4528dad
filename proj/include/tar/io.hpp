#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tar {

// Whole-file helpers; failures raise IngestionError.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// Little-endian binary encoder.
class ByteWriter {
 public:
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

// Little-endian decoder over a borrowed buffer. Reading past the end raises
// FormatError tagged with the format name.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string format) : data_(data), format_(std::move(format)) {}

  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string_view bytes(std::size_t n);
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::string format_;
  std::size_t pos_ = 0;
};

}  // namespace tar
