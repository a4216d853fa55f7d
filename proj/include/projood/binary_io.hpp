#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "projood/error.hpp"

namespace projood::bin {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with a little-endian host layout");

// Append-only little-endian byte buffer.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size_bytes()); }

  const std::vector<char>& data() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

// Bounds-checked little-endian reader; every short read throws MalformedFile.
class Reader {
 public:
  explicit Reader(std::vector<char> data, std::string origin = {})
      : buf_(std::move(data)), origin_(std::move(origin)) {}
  static Reader open(const std::filesystem::path& path);

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  void f64s(std::span<double> out) { raw(out.data(), out.size_bytes()); }

  std::size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining())
      throw MalformedFile(origin_ + ": truncated (need " + std::to_string(n) + " bytes, " +
                          std::to_string(remaining()) + " left)");
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> data);

}  // namespace projood::bin
