// Copyright 2026 The alenc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "alenc/core/tensor.hpp"

namespace alenc {

// Reserved vocabulary ids. Content tokens are 2..V-1.
inline constexpr int kSos = 0;
inline constexpr int kEos = 1;
inline constexpr int kFirstContentToken = 2;

// Inclusive frame span [start, end] of one content token.
struct Boundary {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  double center() const { return 0.5 * (double(start) + double(end)); }
  bool operator==(const Boundary&) const = default;
};

struct Utterance {
  std::string id;
  Tensor features;                  // [T x F]
  std::vector<int> tokens;          // y_1..y_U, y_U == <EOS>
  std::vector<Boundary> boundaries; // one per content token, in token order

  std::size_t num_frames() const { return features.rows(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t num_tokens() const { return tokens.size(); }

  std::vector<int> content_tokens() const {
    return {tokens.begin(), tokens.end() - (tokens.empty() ? 0 : 1)};
  }

  bool operator==(const Utterance& o) const {
    return tokens == o.tokens && boundaries == o.boundaries && features.shape() == o.features.shape() &&
           std::equal(features.values().begin(), features.values().end(), o.features.values().begin());
  }
};

// Checks the structural invariants. Boundaries must be strictly monotone in
// one direction (increasing for ordinary audio, decreasing once reversed),
// non-overlapping, and inside [0, T).
inline void validate(const Utterance& u) {
  if (!u.features.defined() || u.features.rank() != 2)
    throw ValidationError("utterance features must be a [T x F] matrix");
  const auto T = u.num_frames();
  if (u.tokens.empty() || u.tokens.back() != kEos)
    throw ValidationError("utterance tokens must end with <EOS>");
  for (std::size_t i = 0; i + 1 < u.tokens.size(); ++i)
    if (u.tokens[i] == kEos) throw ValidationError("<EOS> may only appear as the final token");
  if (u.num_tokens() > T)
    throw ValidationError(detail::concat("U=", u.num_tokens(), " exceeds T=", T));
  if (!u.boundaries.empty() && u.boundaries.size() != u.num_tokens() - 1)
    throw ValidationError(detail::concat("expected ", u.num_tokens() - 1, " boundaries, got ",
                                         u.boundaries.size()));
  for (const auto& b : u.boundaries)
    if (b.start > b.end || b.end >= T) throw ValidationError("boundary outside [0, T) or inverted");
  if (u.boundaries.size() >= 2) {
    const bool increasing = u.boundaries[1].start > u.boundaries[0].end;
    for (std::size_t i = 0; i + 1 < u.boundaries.size(); ++i) {
      const auto& a = u.boundaries[i];
      const auto& b = u.boundaries[i + 1];
      const bool ok = increasing ? b.start > a.end : a.start > b.end;
      if (!ok) throw ValidationError("boundaries overlap or are not monotone");
    }
  }
}

// Utterances padded to a common length. Masks are 1 on real positions and 0
// on padding; padded feature frames are zero.
struct Batch {
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }

  std::size_t max_frames() const {
    std::size_t m = 0;
    for (const auto& u : utterances) m = std::max(m, u.num_frames());
    return m;
  }
  std::size_t max_tokens() const {
    std::size_t m = 0;
    for (const auto& u : utterances) m = std::max(m, u.num_tokens());
    return m;
  }

  std::vector<std::vector<std::uint8_t>> frame_mask() const {
    std::vector<std::vector<std::uint8_t>> m;
    for (const auto& u : utterances) {
      std::vector<std::uint8_t> row(max_frames(), 0);
      std::fill_n(row.begin(), u.num_frames(), 1);
      m.push_back(std::move(row));
    }
    return m;
  }
  std::vector<std::vector<std::uint8_t>> token_mask() const {
    std::vector<std::vector<std::uint8_t>> m;
    for (const auto& u : utterances) {
      std::vector<std::uint8_t> row(max_tokens(), 0);
      std::fill_n(row.begin(), u.num_tokens(), 1);
      m.push_back(std::move(row));
    }
    return m;
  }

  // [B x Tmax x F], zero padded.
  Tensor padded_features() const {
    const auto T = max_frames(), F = utterances.at(0).feature_dim();
    Tensor out = Tensor::zeros({size(), T, F});
    auto v = out.mutable_values();
    for (std::size_t b = 0; b < size(); ++b) {
      const auto& f = utterances[b].features.values();
      std::copy(f.begin(), f.end(), v.begin() + b * T * F);
    }
    return out;
  }
};

// --- "ALNU1" utterance container -------------------------------------------
// magic "ALNU1" | u32 T | u32 U | u32 F | f32[T*F] features row-major |
// u32[U] tokens | u32[2*(U-1)] boundary pairs. Little-endian throughout.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& data) : data_(data) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t lo = u32(what);
    std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  float f32(const char* what) {
    std::uint32_t v = u32(what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  double f64(const char* what) {
    std::uint64_t v = u64(what);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > data_.size()) throw ParseError(concat("truncated input while reading ", what), pos_);
  }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

inline void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace detail

inline constexpr char kUtteranceMagic[] = "ALNU1";

inline std::string encode_utterance(const Utterance& u) {
  std::string out(kUtteranceMagic, 5);
  const auto T = u.num_frames(), U = u.num_tokens(), F = u.feature_dim();
  detail::put_u32(out, static_cast<std::uint32_t>(T));
  detail::put_u32(out, static_cast<std::uint32_t>(U));
  detail::put_u32(out, static_cast<std::uint32_t>(F));
  for (Real v : u.features.values()) detail::put_f32(out, static_cast<float>(v));
  for (int t : u.tokens) detail::put_u32(out, static_cast<std::uint32_t>(t));
  std::vector<Boundary> bounds = u.boundaries;
  if (bounds.empty() && U > 1) throw ValidationError("container requires token boundaries");
  for (const auto& b : bounds) {
    detail::put_u32(out, b.start);
    detail::put_u32(out, b.end);
  }
  return out;
}

inline Utterance decode_utterance(const std::string& data, std::string id = {}) {
  detail::ByteReader r(data);
  if (r.bytes(5, "magic") != std::string(kUtteranceMagic, 5)) throw ParseError("bad magic, expected ALNU1", 0);
  const auto T = r.u32("T"), U = r.u32("U"), F = r.u32("F");
  if (T == 0 || F == 0) throw ParseError("T and F must be positive", 5);
  if (U == 0) throw ValidationError("utterance has no tokens (missing <EOS>)");
  const std::size_t expected = 17 + 4ull * (std::size_t(T) * F + U + 2ull * (U - 1));
  if (data.size() != expected)
    throw ParseError(detail::concat("size ", data.size(), " does not match header (expected ", expected, ")"),
                     std::min(data.size(), expected));
  std::vector<Real> feats(std::size_t(T) * F);
  for (auto& v : feats) v = static_cast<Real>(r.f32("features"));
  Utterance u;
  u.id = std::move(id);
  u.features = Tensor::from({T, F}, std::move(feats));
  u.tokens.resize(U);
  for (auto& t : u.tokens) t = static_cast<int>(r.u32("tokens"));
  u.boundaries.resize(U - 1);
  for (auto& b : u.boundaries) {
    b.start = r.u32("boundary");
    b.end = r.u32("boundary");
  }
  validate(u);
  return u;
}

inline void save_features_file(const std::filesystem::path& path, const Utterance& u) {
  detail::write_file(path, encode_utterance(u));
}

inline Utterance load_features_file(const std::filesystem::path& path) {
  return decode_utterance(detail::read_file(path), path.stem().string());
}

// Newline-delimited list of container paths; relative entries resolve
// against the manifest's directory.
inline std::vector<Utterance> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::vector<Utterance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::filesystem::path p(line);
    if (p.is_relative()) p = manifest.parent_path() / p;
    out.push_back(load_features_file(p));
  }
  return out;
}

}  // namespace alenc
