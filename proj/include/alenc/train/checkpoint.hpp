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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "alenc/data/utterance.hpp"
#include "alenc/model/params.hpp"

namespace alenc {

struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Training snapshot. Tensor names are prefixed by role: "param/", "ema/",
// "adam.m/", "adam.v/".
struct Checkpoint {
  std::uint64_t step = 0;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t adam_t = 0;
  std::string config_json;
  std::map<std::string, std::string> rng_states;
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  void add(const std::string& prefix, const ParameterSet& ps) {
    for (const auto& it : ps.items())
      tensors.push_back({prefix + it.name, it.tensor.shape(), {it.tensor.values().begin(), it.tensor.values().end()}});
  }

  void add(const std::string& name, const Shape& shape, const std::vector<Real>& values) {
    tensors.push_back({name, shape, {values.begin(), values.end()}});
  }

  // Copies "prefix + name" blobs into the matching parameters.
  void restore(const std::string& prefix, ParameterSet& ps) const {
    for (auto& it : ps.items()) {
      const TensorBlob* b = find(prefix + it.name);
      if (!b) throw ValidationError("checkpoint lacks tensor " + prefix + it.name);
      if (b->shape != it.tensor.shape())
        throw ValidationError(detail::concat("checkpoint tensor ", b->name, " has shape ", shape_str(b->shape),
                                             ", model expects ", shape_str(it.tensor.shape())));
      auto dst = it.tensor.mutable_values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(b->values[i]);
    }
  }
};

inline constexpr char kCheckpointMagic[] = "ALNC1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// magic "ALNC1" | u32 version | u64 step | u64 fingerprint | u64 adam_t |
// u32 len + config JSON | u32 n + (name, state) string pairs |
// u32 n + tensors: u32 len + UTF-8 name | u32 rank | u32 dims |
// u32 element bytes (4 or 8) | payload. Little-endian throughout.
inline std::string encode_checkpoint(const Checkpoint& c) {
  using namespace detail;
  std::string out(kCheckpointMagic, 5);
  put_u32(out, kCheckpointVersion);
  put_u64(out, c.step);
  put_u64(out, c.config_fingerprint);
  put_u64(out, c.adam_t);
  auto put_str = [&](const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
  };
  put_str(c.config_json);
  put_u32(out, static_cast<std::uint32_t>(c.rng_states.size()));
  for (const auto& [k, v] : c.rng_states) {
    put_str(k);
    put_str(v);
  }
  put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
  constexpr std::uint32_t bytes = sizeof(Real);
  for (const auto& t : c.tensors) {
    put_str(t.name);
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    put_u32(out, bytes);
    for (double v : t.values) {
      if constexpr (bytes == 8) put_f64(out, v);
      else put_f32(out, static_cast<float>(v));
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& data) {
  detail::ByteReader r(data);
  if (r.bytes(5, "magic") != std::string(kCheckpointMagic, 5)) throw ParseError("not an ALNC1 checkpoint", 0);
  const auto off = r.offset();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) throw ParseError(detail::concat("unsupported checkpoint version ", version), off);
  Checkpoint c;
  c.step = r.u64("step");
  c.config_fingerprint = r.u64("fingerprint");
  c.adam_t = r.u64("adam step");
  auto get_str = [&](const char* what) { return r.bytes(r.u32(what), what); };
  c.config_json = get_str("config");
  const auto n_rng = r.u32("rng count");
  for (std::uint32_t i = 0; i < n_rng; ++i) {
    auto k = get_str("rng name");
    c.rng_states[k] = get_str("rng state");
  }
  const auto n = r.u32("tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    TensorBlob t;
    t.name = get_str("tensor name");
    const auto rank = r.u32("rank");
    if (rank > 8) throw ParseError(detail::concat("tensor ", t.name, " has implausible rank ", rank), r.offset() - 4);
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.u32("dim"));
    const auto eoff = r.offset();
    const auto bytes = r.u32("element size");
    if (bytes != 4 && bytes != 8) throw ParseError(detail::concat("bad element size ", bytes), eoff);
    const auto count = shape_size(t.shape);
    r.need(count * bytes, "tensor payload");
    t.values.resize(count);
    for (auto& v : t.values) v = bytes == 8 ? r.f64("value") : double(r.f32("value"));
    c.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after checkpoint", r.offset());
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  detail::write_file(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace alenc
