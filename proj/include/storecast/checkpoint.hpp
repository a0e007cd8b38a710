#pragma once

// Binary checkpoint: named float64 tensors, a string key/value header and
// optimizer moments. Integers and doubles are stored little-endian.
//
//   "SCKP" | version:u8 | n_meta:u32 | (key, value)* |
//   n_tensors:u32 | tensor* | adam_step:u64 | n_slots:u32 | tensor*
//   tensor = name | rank:u32 | dims:u64* | values:f64*
//   string = length:u32 | bytes

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "storecast/csv.hpp"
#include "storecast/error.hpp"
#include "storecast/tensor.hpp"

namespace storecast::ad {

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedTensor> tensors;
  std::uint64_t optimizer_step = 0;
  std::vector<NamedTensor> optimizer_slots;

  const std::string* find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return &v;
    return nullptr;
  }
  const Tensor* find_tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.tensor;
    return nullptr;
  }
};

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void tensor(const NamedTensor& t) {
    str(t.name);
    u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) u64(d);
    for (double v : t.tensor.data()) f64(v);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = str();
    const auto rank = u32();
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    const auto n = numel(shape);
    need(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = f64();
    t.tensor = Tensor(std::move(shape), std::move(data));
    return t;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) fail(ErrorKind::IoError, "checkpoint truncated");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  detail::Writer w;
  for (char c : std::string("SCKP")) w.u8(static_cast<std::uint8_t>(c));
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) w.tensor(t);
  w.u64(ck.optimizer_step);
  w.u32(static_cast<std::uint32_t>(ck.optimizer_slots.size()));
  for (const auto& t : ck.optimizer_slots) w.tensor(t);
  return w.bytes();
}

inline Checkpoint deserialize(std::string bytes) {
  detail::Reader r(std::move(bytes));
  std::string magic;
  for (int i = 0; i < 4; ++i) magic.push_back(static_cast<char>(r.u8()));
  if (magic != "SCKP") fail(ErrorKind::IoError, "not a checkpoint file");
  const auto version = r.u8();
  if (version != kCheckpointVersion) fail(ErrorKind::IoError, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    auto v = r.str();
    ck.meta.emplace_back(std::move(k), std::move(v));
  }
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) ck.tensors.push_back(r.tensor());
  ck.optimizer_step = r.u64();
  const auto n_slots = r.u32();
  for (std::uint32_t i = 0; i < n_slots; ++i) ck.optimizer_slots.push_back(r.tensor());
  if (!r.done()) fail(ErrorKind::IoError, "trailing bytes in checkpoint");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  csv::write_atomic(path, serialize(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingFile, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(std::move(bytes));
}

}  // namespace storecast::ad
