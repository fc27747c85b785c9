#include "mf/autodiff/records.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mf {

static_assert(std::endian::native == std::endian::little, "record IO assumes a little-endian host");

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i32: return 4;
    case DType::u8: return 1;
  }
  return 0;
}

std::size_t ArrayRecord::count() const {
  std::size_t n = 1;
  for (auto e : extents) n *= static_cast<std::size_t>(e);
  return n;
}

namespace {

template <typename V>
ArrayRecord make_record(std::string name, DType dtype, const Shape& shape, const std::vector<V>& values) {
  if (shape_numel(shape) != values.size()) {
    throw TensorError("record '" + name + "': shape " + shape_str(shape) + " does not match " +
                      std::to_string(values.size()) + " values");
  }
  ArrayRecord r;
  r.name = std::move(name);
  r.dtype = dtype;
  r.extents.assign(shape.begin(), shape.end());
  r.bytes.resize(values.size() * sizeof(V));
  if (!values.empty()) std::memcpy(r.bytes.data(), values.data(), r.bytes.size());
  return r;
}

template <typename V>
std::vector<V> read_values(const ArrayRecord& r, DType expected) {
  if (r.dtype != expected) throw TensorError("record '" + r.name + "': unexpected dtype");
  std::vector<V> out(r.count());
  if (out.size() * sizeof(V) != r.bytes.size()) throw TensorError("record '" + r.name + "': payload size mismatch");
  if (!out.empty()) std::memcpy(out.data(), r.bytes.data(), r.bytes.size());
  return out;
}

}  // namespace

ArrayRecord ArrayRecord::from_f32(std::string name, const Shape& shape, const std::vector<float>& values) {
  return make_record(std::move(name), DType::f32, shape, values);
}
ArrayRecord ArrayRecord::from_f64(std::string name, const Shape& shape, const std::vector<double>& values) {
  return make_record(std::move(name), DType::f64, shape, values);
}
ArrayRecord ArrayRecord::from_i32(std::string name, const Shape& shape, const std::vector<std::int32_t>& values) {
  return make_record(std::move(name), DType::i32, shape, values);
}
ArrayRecord ArrayRecord::from_u8(std::string name, const Shape& shape, const std::vector<std::uint8_t>& values) {
  return make_record(std::move(name), DType::u8, shape, values);
}

Shape ArrayRecord::shape() const { return Shape(extents.begin(), extents.end()); }
std::vector<float> ArrayRecord::as_f32() const { return read_values<float>(*this, DType::f32); }
std::vector<double> ArrayRecord::as_f64() const { return read_values<double>(*this, DType::f64); }
std::vector<std::int32_t> ArrayRecord::as_i32() const { return read_values<std::int32_t>(*this, DType::i32); }
std::vector<std::uint8_t> ArrayRecord::as_u8() const { return read_values<std::uint8_t>(*this, DType::u8); }

void RecordWriter::bytes(const void* data, std::size_t n) {
  os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os_) throw std::runtime_error("write failed");
}

void RecordWriter::record(const ArrayRecord& r) {
  if (r.extents.size() > 255) throw TensorError("record '" + r.name + "': rank exceeds 255");
  if (r.bytes.size() != r.count() * dtype_size(r.dtype)) {
    throw TensorError("record '" + r.name + "': payload size mismatch");
  }
  u32(static_cast<std::uint32_t>(r.name.size()));
  bytes(r.name.data(), r.name.size());
  u8(static_cast<std::uint8_t>(r.dtype));
  u8(static_cast<std::uint8_t>(r.extents.size()));
  for (auto e : r.extents) u64(e);
  bytes(r.bytes.data(), r.bytes.size());
}

void RecordReader::bytes(void* data, std::size_t n, const char* what) {
  if (n == 0) return;
  is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(is_.gcount());
  if (got != n) throw FormatError(std::string("truncated file while reading ") + what, offset_ + got);
  offset_ += n;
}

std::uint8_t RecordReader::u8(const char* what) {
  std::uint8_t v = 0;
  bytes(&v, 1, what);
  return v;
}
std::uint32_t RecordReader::u32(const char* what) {
  std::uint32_t v = 0;
  bytes(&v, 4, what);
  return v;
}
std::uint64_t RecordReader::u64(const char* what) {
  std::uint64_t v = 0;
  bytes(&v, 8, what);
  return v;
}

bool RecordReader::at_end() { return is_.peek() == std::char_traits<char>::eof(); }

ArrayRecord RecordReader::record() {
  ArrayRecord r;
  const std::uint64_t start = offset_;
  const auto name_len = u32("record name length");
  if (name_len > (1u << 20)) throw FormatError("implausible record name length", start);
  r.name.resize(name_len);
  bytes(r.name.data(), name_len, "record name");
  const auto dtype_offset = offset_;
  const auto code = u8("dtype code");
  if (code < 1 || code > 4) throw FormatError("unknown dtype code " + std::to_string(code), dtype_offset);
  r.dtype = static_cast<DType>(code);
  const auto rank = u8("rank");
  r.extents.resize(rank);
  for (auto& e : r.extents) e = u64("extent");
  const std::uint64_t payload = static_cast<std::uint64_t>(r.count()) * dtype_size(r.dtype);
  if (payload > (std::uint64_t{1} << 36)) throw FormatError("implausible payload size", offset_);
  r.bytes.resize(static_cast<std::size_t>(payload));
  bytes(r.bytes.data(), r.bytes.size(), "payload");
  return r;
}

void save_checkpoint(const std::string& path, const std::vector<ArrayRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  RecordWriter w(os);
  w.bytes("MFCK", 4);
  w.u32(kCheckpointVersion);
  for (const auto& r : records) w.record(r);
}

std::vector<ArrayRecord> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  RecordReader r(is);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "MFCK", 4) != 0) throw FormatError("bad magic (expected MFCK)", 0);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported version " + std::to_string(version), 4);
  std::vector<ArrayRecord> out;
  while (!r.at_end()) out.push_back(r.record());
  return out;
}

}  // namespace mf
