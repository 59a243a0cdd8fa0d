#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>

#include "elastident/error.hpp"
#include "elastident/mpm.hpp"
#include "elastident/observation.hpp"

// Binary file formats, all little-endian:
//   PFM   "Pf\n<w> <h>\n-1.0\n" then f32 rows, bottom row first
//   FLW1  "FLW1", u32 width, u32 height, row-major f32 (u, v) pairs
//   MPMS  "MPMS", u32 count, per particle 3 f32 position, 3 f32 velocity, u32 object id

namespace elastident {

namespace detail {

template <typename T>
T byteswap(T value) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

class ByteWriter {
 public:
  void raw(std::string_view s) { out_.append(s); }

  template <typename T>
  void le(T value) {
    if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void require(std::size_t n) const {
    if (remaining() < n)
      fail(ErrorCategory::truncated_payload, what_ + ": truncated payload at byte offset " + std::to_string(pos_) +
                                                 ", missing " + std::to_string(n - remaining()) + " bytes");
  }

  std::string_view bytes(std::size_t n) {
    require(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T le(bool big_endian = false) {
    require(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    const bool swap = big_endian != (std::endian::native == std::endian::big);
    return swap ? byteswap(value) : value;
  }

  /// Whitespace-delimited ASCII token (PFM header).
  std::string token() {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (start == pos_)
      fail(ErrorCategory::malformed_header, what_ + ": header ends early at byte offset " + std::to_string(pos_));
    return std::string(data_.substr(start, pos_ - start));
  }

  /// Single whitespace byte separating a text header from binary data.
  void separator() {
    if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_])))
      fail(ErrorCategory::malformed_header, what_ + ": expected whitespace at byte offset " + std::to_string(pos_));
    ++pos_;
  }

  [[noreturn]] void malformed(const std::string& msg, std::size_t at) const {
    fail(ErrorCategory::malformed_header, what_ + ": " + msg + " at byte offset " + std::to_string(at));
  }

 private:
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::uint32_t checked_dimension(const std::string& tok, const ByteReader& r, std::size_t at) {
  std::size_t used = 0;
  unsigned long value = 0;
  try {
    value = std::stoul(tok, &used);
  } catch (const std::exception&) {
    r.malformed("invalid dimension '" + tok + "'", at);
  }
  if (used != tok.size() || value == 0 || value > (1u << 20)) r.malformed("invalid dimension '" + tok + "'", at);
  return static_cast<std::uint32_t>(value);
}

}  // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCategory::io, "short write to " + path.string());
}

// --- PFM -------------------------------------------------------------------

inline std::string encode_pfm(const Image& img) {
  detail::ByteWriter w;
  w.raw("Pf\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n");
  for (float v : img.pixels) w.le(v);
  return w.take();
}

inline Image decode_pfm(std::string_view bytes, const std::string& what = "pfm") {
  detail::ByteReader r(bytes, what);
  const std::size_t magic_at = r.offset();
  const std::string magic = r.token();
  if (magic != "Pf") r.malformed("expected grayscale magic 'Pf', found '" + magic + "'", magic_at);
  std::size_t at = r.offset();
  const auto w = detail::checked_dimension(r.token(), r, at);
  at = r.offset();
  const auto h = detail::checked_dimension(r.token(), r, at);
  at = r.offset();
  const std::string scale_tok = r.token();
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    r.malformed("invalid scale '" + scale_tok + "'", at);
  }
  if (scale == 0.0 || !std::isfinite(scale)) r.malformed("invalid scale '" + scale_tok + "'", at);
  r.separator();
  const bool big_endian = scale > 0.0;

  Image img(static_cast<int>(w), static_cast<int>(h));
  r.require(img.pixels.size() * sizeof(float));
  for (float& v : img.pixels) v = r.le<float>(big_endian);
  return img;
}

inline void write_image(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pfm(img)); }
inline Image read_image(const std::filesystem::path& path) { return decode_pfm(read_file(path), path.string()); }

// --- FLW1 ------------------------------------------------------------------

inline std::string encode_flow(const FlowField& flow) {
  detail::ByteWriter w;
  w.raw("FLW1");
  w.le(static_cast<std::uint32_t>(flow.width));
  w.le(static_cast<std::uint32_t>(flow.height));
  for (float v : flow.data) w.le(v);
  return w.take();
}

inline FlowField decode_flow(std::string_view bytes, const std::string& what = "flow") {
  detail::ByteReader r(bytes, what);
  const auto magic = r.bytes(4);
  if (magic != "FLW1") r.malformed("expected magic 'FLW1', found '" + std::string(magic) + "'", 0);
  const auto w = r.le<std::uint32_t>();
  const auto h = r.le<std::uint32_t>();
  if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20)) r.malformed("invalid dimensions", 4);
  FlowField flow(static_cast<int>(w), static_cast<int>(h));
  r.require(flow.data.size() * sizeof(float));
  for (float& v : flow.data) v = r.le<float>();
  return flow;
}

inline void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  write_file(path, encode_flow(flow));
}
inline FlowField read_flow(const std::filesystem::path& path) {
  return decode_flow(read_file(path), path.string());
}

// --- MPMS ------------------------------------------------------------------

inline std::string encode_snapshot(const Snapshot& s) {
  detail::ByteWriter w;
  w.raw("MPMS");
  w.le(static_cast<std::uint32_t>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int a = 0; a < 3; ++a) w.le(static_cast<float>(s.positions[i](a)));
    for (int a = 0; a < 3; ++a) w.le(static_cast<float>(s.velocities[i](a)));
    w.le(static_cast<std::uint32_t>(s.object_ids[i]));
  }
  return w.take();
}

inline Snapshot decode_snapshot(std::string_view bytes, const std::string& what = "trajectory") {
  detail::ByteReader r(bytes, what);
  const auto magic = r.bytes(4);
  if (magic != "MPMS") r.malformed("expected magic 'MPMS', found '" + std::string(magic) + "'", 0);
  const auto count = r.le<std::uint32_t>();
  r.require(static_cast<std::size_t>(count) * 28);
  Snapshot s;
  s.positions.resize(count);
  s.velocities.resize(count);
  s.object_ids.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (int a = 0; a < 3; ++a) s.positions[i](a) = r.le<float>();
    for (int a = 0; a < 3; ++a) s.velocities[i](a) = r.le<float>();
    s.object_ids[i] = r.le<std::uint32_t>();
  }
  return s;
}

inline void write_snapshot(const std::filesystem::path& path, const Snapshot& s) {
  write_file(path, encode_snapshot(s));
}
inline Snapshot read_snapshot(const std::filesystem::path& path) {
  return decode_snapshot(read_file(path), path.string());
}

}  // namespace elastident
