#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "ecnn/errors.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

/// Little-endian serializer into an in-memory byte buffer.
class BinaryWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <class T>
  void scalar(T v) {
    std::array<char, sizeof(T)> raw;
    std::memcpy(raw.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    buf_.insert(buf_.end(), raw.begin(), raw.end());
  }

  void u32(std::uint32_t v) { scalar(v); }
  void u64(std::uint64_t v) { scalar(v); }
  void f64(double v) { scalar(std::bit_cast<std::uint64_t>(v)); }

  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  /// name, rank, extents, raw values
  void tensor(std::string_view name, const Tensor& t) {
    text(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) u64(e);
    for (double v : t.data()) f64(v);
  }

  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

/// Reader over a byte buffer; running past the end throws `Err`.
template <class Err>
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    if (n > data_.size() - pos_)
      throw Err("truncated data: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                ", file has " + std::to_string(data_.size()));
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <class T>
  T scalar() {
    auto raw = bytes(sizeof(T));
    std::array<char, sizeof(T)> tmp;
    std::memcpy(tmp.data(), raw.data(), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(tmp.begin(), tmp.end());
    T v;
    std::memcpy(&v, tmp.data(), sizeof(T));
    return v;
  }

  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(scalar<std::uint64_t>()); }
  std::string text() { return std::string(bytes(u32())); }

  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };

  Entry tensor() {
    Entry e;
    e.name = text();
    const auto rank = u32();
    if (rank > 8) throw Err("implausible tensor rank " + std::to_string(rank) + " for '" + e.name + "'");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      e.shape.push_back(u64());
      if (e.shape.back() == 0 || e.shape.back() > remaining()) throw Err("implausible extent in '" + e.name + "'");
      n *= e.shape.back();
    }
    if (n > remaining() / 8) throw Err("truncated data: tensor '" + e.name + "' exceeds file size");
    e.values.resize(n);
    for (auto& v : e.values) v = f64();
    return e;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
/// Replaces the file contents; throws ecnn::Error on I/O failure.
void write_file(const std::string& path, std::string_view contents);

}  // namespace ecnn
