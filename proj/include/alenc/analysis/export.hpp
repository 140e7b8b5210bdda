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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include "alenc/data/utterance.hpp"

namespace alenc {

enum class MatrixFormat { csv, alnm };

inline MatrixFormat parse_matrix_format(const std::string& s) {
  if (s == "csv") return MatrixFormat::csv;
  if (s == "alnm" || s == "alnm-binary" || s == "binary") return MatrixFormat::alnm;
  throw ConfigError("unknown matrix format '" + s + "' (csv, alnm)");
}

inline constexpr char kMatrixMagic[] = "ALNM1";

// CSV: first line "rows,cols", then one line per row. Values are printed
// with 9 significant digits, so a re-parse agrees to about 1e-9 relative.
// ALNM1: magic | u32 rows | u32 cols | f32 values row-major; lossless for
// float-representable values.
inline std::string encode_matrix(const Tensor& m, MatrixFormat format) {
  if (m.rank() != 2) throw DimensionError("export_matrix needs a 2-D tensor, got " + shape_str(m.shape()));
  for (Real v : m.values())
    if (!std::isfinite(v)) throw ContractError("export_matrix: non-finite value");
  const auto R = m.rows(), C = m.cols();
  if (format == MatrixFormat::csv) {
    std::string out = std::to_string(R) + "," + std::to_string(C) + "\n";
    char buf[32];
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        std::snprintf(buf, sizeof buf, "%.9g", double(m.at(r, c)));
        if (c) out += ',';
        out += buf;
      }
      out += '\n';
    }
    return out;
  }
  std::string out(kMatrixMagic, 5);
  detail::put_u32(out, static_cast<std::uint32_t>(R));
  detail::put_u32(out, static_cast<std::uint32_t>(C));
  for (Real v : m.values()) detail::put_f32(out, static_cast<float>(v));
  return out;
}

inline Tensor decode_matrix(const std::string& data, MatrixFormat format) {
  if (format == MatrixFormat::alnm) {
    detail::ByteReader r(data);
    if (r.bytes(5, "magic") != std::string(kMatrixMagic, 5)) throw ParseError("not an ALNM1 matrix", 0);
    const auto R = r.u32("rows"), C = r.u32("cols");
    if (R == 0 || C == 0) throw ParseError("matrix dimensions must be positive", 5);
    r.need(std::size_t(R) * C * 4, "matrix payload");
    std::vector<Real> v(std::size_t(R) * C);
    for (auto& x : v) x = static_cast<Real>(r.f32("value"));
    if (!r.at_end()) throw ParseError("trailing bytes after matrix", r.offset());
    return Tensor::from({R, C}, std::move(v));
  }
  std::istringstream in(data);
  std::string line;
  std::size_t R = 0, C = 0;
  char comma = 0;
  if (!std::getline(in, line)) throw ParseError("empty CSV matrix", 0);
  std::istringstream hdr(line);
  if (!(hdr >> R >> comma >> C) || comma != ',' || R == 0 || C == 0) throw ParseError("bad CSV header '" + line + "'", 0);
  std::vector<Real> v;
  v.reserve(R * C);
  std::size_t offset = line.size() + 1;
  for (std::size_t r = 0; r < R; ++r) {
    if (!std::getline(in, line)) throw ParseError(detail::concat("CSV matrix ends after ", r, " rows"), offset);
    std::istringstream row(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(row, cell, ',')) {
      try {
        v.push_back(static_cast<Real>(std::stod(cell)));
      } catch (const std::exception&) {
        throw ParseError("bad CSV value '" + cell + "'", offset);
      }
      ++c;
    }
    if (c != C) throw ParseError(detail::concat("CSV row ", r, " has ", c, " values, expected ", C), offset);
    offset += line.size() + 1;
  }
  return Tensor::from({R, C}, std::move(v));
}

inline void export_matrix(const Tensor& m, const std::filesystem::path& path, MatrixFormat format) {
  detail::write_file(path, encode_matrix(m, format));
}

inline Tensor import_matrix(const std::filesystem::path& path, MatrixFormat format) {
  return decode_matrix(detail::read_file(path), format);
}

}  // namespace alenc
