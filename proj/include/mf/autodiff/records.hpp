#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf/autodiff/tensor.hpp"

// Named-array records shared by checkpoints (MFCK) and datasets (MFDS).
// Record layout: name length u32, UTF-8 name, dtype code u8, rank u8,
// extents u64 x rank, raw little-endian payload.
namespace mf {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i32 = 3, u8 = 4 };

std::size_t dtype_size(DType d);

/// Thrown on malformed files; carries the byte offset where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

struct ArrayRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint64_t> extents;
  std::vector<std::uint8_t> bytes;

  std::size_t count() const;

  static ArrayRecord from_f32(std::string name, const Shape& shape, const std::vector<float>& values);
  static ArrayRecord from_f64(std::string name, const Shape& shape, const std::vector<double>& values);
  static ArrayRecord from_i32(std::string name, const Shape& shape, const std::vector<std::int32_t>& values);
  static ArrayRecord from_u8(std::string name, const Shape& shape, const std::vector<std::uint8_t>& values);

  Shape shape() const;
  std::vector<float> as_f32() const;
  std::vector<double> as_f64() const;
  std::vector<std::int32_t> as_i32() const;
  std::vector<std::uint8_t> as_u8() const;

  bool operator==(const ArrayRecord&) const = default;
};

/// Stream writer/reader tracking the absolute byte offset for error reports.
class RecordWriter {
 public:
  explicit RecordWriter(std::ostream& os) : os_(os) {}
  void bytes(const void* data, std::size_t n);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void record(const ArrayRecord& r);

 private:
  std::ostream& os_;
};

class RecordReader {
 public:
  explicit RecordReader(std::istream& is) : is_(is) {}
  void bytes(void* data, std::size_t n, const char* what);
  std::uint8_t u8(const char* what);
  std::uint32_t u32(const char* what);
  std::uint64_t u64(const char* what);
  ArrayRecord record();
  bool at_end();
  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// MFCK file: magic, version, then records until end of file.
void save_checkpoint(const std::string& path, const std::vector<ArrayRecord>& records);
std::vector<ArrayRecord> load_checkpoint(const std::string& path);

}  // namespace mf
