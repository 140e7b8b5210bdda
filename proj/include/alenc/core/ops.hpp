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

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "alenc/core/tensor.hpp"

// Differentiable operations. Each op computes its forward values eagerly and,
// when recording, registers a closure that adds its contribution to the
// inputs' gradients. Broadcasting is explicit: only add_bias broadcasts, and
// only along the trailing axis.

namespace alenc {

namespace detail {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(concat(op, ": expected a matrix, got shape ", shape_str(t.shape())));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(concat(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                                shape_str(b.shape())));
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<Real> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(name, x.shape(), std::move(out), {&x}, [&] {
    return [a = x.node(), deriv](Node& o) {
      Real* ga = sink(a);
      for (std::size_t i = 0; i < o.value.size(); ++i)
        ga[i] += o.grad[i] * deriv(a->value[i], o.value[i]);
    };
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result("add", a.shape(), std::move(out), {&a, &b}, [&] {
    return [pa = a.node(), pb = b.node()](detail::Node& o) {
      if (Real* g = detail::sink(pa))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      if (Real* g = detail::sink(pb))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    };
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result("sub", a.shape(), std::move(out), {&a, &b}, [&] {
    return [pa = a.node(), pb = b.node()](detail::Node& o) {
      if (Real* g = detail::sink(pa))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      if (Real* g = detail::sink(pb))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    };
  });
}

// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result("mul", a.shape(), std::move(out), {&a, &b}, [&] {
    return [pa = a.node(), pb = b.node()](detail::Node& o) {
      if (Real* g = detail::sink(pa))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * pb->value[i];
      if (Real* g = detail::sink(pb))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * pa->value[i];
    };
  });
}

inline Tensor scale(const Tensor& a, Real s) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return detail::make_result("scale", a.shape(), std::move(out), {&a}, [&] {
    return [pa = a.node(), s](detail::Node& o) {
      Real* g = detail::sink(pa);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * s;
    };
  });
}

// x[..., c] + bias[c], broadcast over every leading index.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.size() != x.cols())
    throw DimensionError(detail::concat("add_bias: bias ", shape_str(bias.shape()),
                                        " does not match trailing axis of ", shape_str(x.shape())));
  const std::size_t c = x.cols();
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + bias[i % c];
  return detail::make_result("add_bias", x.shape(), std::move(out), {&x, &bias}, [&] {
    return [px = x.node(), pb = bias.node(), c](detail::Node& o) {
      if (Real* g = detail::sink(px))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      if (Real* g = detail::sink(pb))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % c] += o.grad[i];
    };
  });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError(detail::concat("matmul: inner dimensions differ, a is ", shape_str(a.shape()),
                                        ", b is ", shape_str(b.shape())));
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<Real> out(m * n);
  detail::MapMat(out.data(), m, n).noalias() =
      detail::CMapMat(a.values().data(), m, k) * detail::CMapMat(b.values().data(), k, n);
  return detail::make_result("matmul", {m, n}, std::move(out), {&a, &b}, [&] {
    return [pa = a.node(), pb = b.node(), m, k, n](detail::Node& o) {
      detail::CMapMat dc(o.grad.data(), m, n);
      if (Real* g = detail::sink(pa))
        detail::MapMat(g, m, k).noalias() += dc * detail::CMapMat(pb->value.data(), k, n).transpose();
      if (Real* g = detail::sink(pb))
        detail::MapMat(g, k, n).noalias() += detail::CMapMat(pa->value.data(), m, k).transpose() * dc;
    };
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank2(a, "transpose");
  const auto r = a.rows(), c = a.cols();
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return detail::make_result("transpose", {c, r}, std::move(out), {&a}, [&] {
    return [pa = a.node(), r, c](detail::Node& o) {
      Real* g = detail::sink(pa);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    };
  });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary("tanh", x, [](Real v) { return std::tanh(v); },
                       [](Real, Real y) { return Real(1) - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x, [](Real v) { return Real(1) / (Real(1) + std::exp(-v)); },
      [](Real, Real y) { return y * (Real(1) - y); });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary("relu", x, [](Real v) { return v > 0 ? v : Real(0); },
                       [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

// x * sigmoid(x)
inline Tensor silu(const Tensor& x) {
  return detail::unary(
      "silu", x, [](Real v) { return v / (Real(1) + std::exp(-v)); },
      [](Real v, Real) {
        Real s = Real(1) / (Real(1) + std::exp(-v));
        return s * (Real(1) + v * (Real(1) - s));
      });
}

inline Tensor softmax_rows(const Tensor& x) {
  if (x.cols() == 0) throw DimensionError("softmax_rows: empty row dimension");
  const auto c = x.cols(), r = x.size() / c;
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const Real* in = x.values().data() + i * c;
    Real* y = out.data() + i * c;
    Real mx = *std::max_element(in, in + c);
    Real s = 0;
    for (std::size_t j = 0; j < c; ++j) s += (y[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  return detail::make_result("softmax_rows", x.shape(), std::move(out), {&x}, [&] {
    return [px = x.node(), r, c](detail::Node& o) {
      Real* g = detail::sink(px);
      for (std::size_t i = 0; i < r; ++i) {
        const Real* y = o.value.data() + i * c;
        const Real* dy = o.grad.data() + i * c;
        Real dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (dy[j] - dot);
      }
    };
  });
}

inline Tensor log_softmax_rows(const Tensor& x) {
  if (x.cols() == 0) throw DimensionError("log_softmax_rows: empty row dimension");
  const auto c = x.cols(), r = x.size() / c;
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const Real* in = x.values().data() + i * c;
    Real* y = out.data() + i * c;
    Real mx = *std::max_element(in, in + c);
    Real s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(in[j] - mx);
    Real lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) y[j] = in[j] - lse;
  }
  return detail::make_result("log_softmax_rows", x.shape(), std::move(out), {&x}, [&] {
    return [px = x.node(), r, c](detail::Node& o) {
      Real* g = detail::sink(px);
      for (std::size_t i = 0; i < r; ++i) {
        const Real* y = o.value.data() + i * c;
        const Real* dy = o.grad.data() + i * c;
        Real total = 0;
        for (std::size_t j = 0; j < c; ++j) total += dy[j];
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += dy[j] - std::exp(y[j]) * total;
      }
    };
  });
}

// Normalizes each trailing-axis vector to zero mean / unit variance, then
// applies gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = Real(1e-5)) {
  const auto d = x.cols();
  if (d == 0) throw DimensionError("layer_norm: zero-length last axis");
  if (gain.size() != d || bias.size() != d)
    throw DimensionError(detail::concat("layer_norm: gain/bias ", shape_str(gain.shape()), "/",
                                        shape_str(bias.shape()), " vs last axis ", d));
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const auto r = x.size() / d;
  std::vector<Real> out(x.size()), xhat(x.size()), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Real* in = x.values().data() + i * d;
    Real mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= Real(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= Real(d);
    inv_std[i] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (in[j] - mean) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gain[j] + bias[j];
    }
  }
  return detail::make_result("layer_norm", x.shape(), std::move(out), {&x, &gain, &bias}, [&] {
    return [px = x.node(), pg = gain.node(), pb = bias.node(), xhat = std::move(xhat),
            inv_std = std::move(inv_std), r, d](detail::Node& o) {
      Real* gx = detail::sink(px);
      Real* gg = detail::sink(pg);
      Real* gb = detail::sink(pb);
      for (std::size_t i = 0; i < r; ++i) {
        const Real* dy = o.grad.data() + i * d;
        const Real* xh = xhat.data() + i * d;
        if (gg)
          for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
        if (gb)
          for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
        if (gx) {
          Real s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < d; ++j) {
            Real dxh = dy[j] * pg->value[j];
            s1 += dxh;
            s2 += dxh * xh[j];
          }
          for (std::size_t j = 0; j < d; ++j) {
            Real dxh = dy[j] * pg->value[j];
            gx[i * d + j] += inv_std[i] * (dxh - s1 / Real(d) - xh[j] * s2 / Real(d));
          }
        }
      }
    };
  });
}

inline Tensor sum(const Tensor& x) {
  Real s = 0;
  for (Real v : x.values()) s += v;
  return detail::make_result("sum", {1}, {s}, {&x}, [&] {
    return [px = x.node()](detail::Node& o) {
      Real* g = detail::sink(px);
      for (std::size_t i = 0; i < px->value.size(); ++i) g[i] += o.grad[0];
    };
  });
}

// Full contraction sum_i a_i b_i of two same-shape tensors.
inline Tensor dot(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "dot");
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return detail::make_result("dot", {1}, {s}, {&a, &b}, [&] {
    return [pa = a.node(), pb = b.node()](detail::Node& o) {
      const Real go = o.grad[0];
      if (Real* g = detail::sink(pa))
        for (std::size_t i = 0; i < pa->value.size(); ++i) g[i] += go * pb->value[i];
      if (Real* g = detail::sink(pb))
        for (std::size_t i = 0; i < pb->value.size(); ++i) g[i] += go * pa->value[i];
    };
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw DimensionError(detail::concat("reshape: ", shape_str(x.shape()), " -> ", shape_str(shape)));
  std::vector<Real> out(x.values().begin(), x.values().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {&x}, [&] {
    return [px = x.node()](detail::Node& o) {
      Real* g = detail::sink(px);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    };
  });
}

// Rows [begin, end) of a matrix.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank2(x, "slice_rows");
  if (begin >= end || end > x.rows())
    throw DimensionError(detail::concat("slice_rows: [", begin, ",", end, ") out of ", x.rows()));
  const auto c = x.cols();
  std::vector<Real> out(x.values().begin() + begin * c, x.values().begin() + end * c);
  return detail::make_result("slice_rows", {end - begin, c}, std::move(out), {&x}, [&] {
    return [px = x.node(), begin, c](detail::Node& o) {
      Real* g = detail::sink(px) + begin * c;
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    };
  });
}

// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank2(x, "slice_cols");
  if (begin >= end || end > x.cols())
    throw DimensionError(detail::concat("slice_cols: [", begin, ",", end, ") out of ", x.cols()));
  const auto r = x.rows(), c = x.cols(), w = end - begin;
  std::vector<Real> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.values().data() + i * c + begin, w, out.data() + i * w);
  return detail::make_result("slice_cols", {r, w}, std::move(out), {&x}, [&] {
    return [px = x.node(), begin, r, c, w](detail::Node& o) {
      Real* g = detail::sink(px);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += o.grad[i * w + j];
    };
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const auto c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    r += p.rows();
  }
  std::vector<Real> out;
  out.reserve(r * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return detail::make_result_n("concat_rows", {r, c}, std::move(out), parts, [&] {
    std::vector<detail::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return [nodes](detail::Node& o) {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        if (Real* g = detail::sink(n))
          for (std::size_t i = 0; i < n->value.size(); ++i) g[i] += o.grad[off + i];
        off += n->value.size();
      }
    };
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const auto r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
    c += p.cols();
  }
  std::vector<Real> out(r * c);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto w = p.cols();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(p.values().data() + i * w, w, out.data() + i * c + off);
    off += w;
  }
  return detail::make_result_n("concat_cols", {r, c}, std::move(out), parts, [&] {
    std::vector<detail::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return [nodes, r, c](detail::Node& o) {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const auto w = n->shape.back();
        if (Real* g = detail::sink(n))
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += o.grad[i * c + off + j];
        off += w;
      }
    };
  });
}

// Row lookup: out[i] = table[ids[i]].
inline Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  detail::require_rank2(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const auto c = table.cols();
  std::vector<Real> out(ids.size() * c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows())
      throw ContractError(detail::concat("gather_rows: id ", ids[i], " outside table of ", table.rows()));
    std::copy_n(table.values().data() + ids[i] * c, c, out.data() + i * c);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return detail::make_result("gather_rows", {ids.size(), c}, std::move(out), {&table}, [&] {
    return [pt = table.node(), idv = std::move(idv), c](detail::Node& o) {
      Real* g = detail::sink(pt);
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) g[idv[i] * c + j] += o.grad[i * c + j];
    };
  });
}

// out[t*U + u] = a[t] + b[u]; the all-pairs combination a transducer lattice needs.
inline Tensor pairwise_add(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "pairwise_add");
  detail::require_rank2(b, "pairwise_add");
  if (a.cols() != b.cols()) throw DimensionError("pairwise_add: widths differ");
  const auto T = a.rows(), U = b.rows(), c = a.cols();
  std::vector<Real> out(T * U * c);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u < U; ++u)
      for (std::size_t j = 0; j < c; ++j) out[(t * U + u) * c + j] = a[t * c + j] + b[u * c + j];
  return detail::make_result("pairwise_add", {T * U, c}, std::move(out), {&a, &b}, [&] {
    return [pa = a.node(), pb = b.node(), T, U, c](detail::Node& o) {
      Real* ga = detail::sink(pa);
      Real* gb = detail::sink(pb);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t u = 0; u < U; ++u)
          for (std::size_t j = 0; j < c; ++j) {
            Real go = o.grad[(t * U + u) * c + j];
            if (ga) ga[t * c + j] += go;
            if (gb) gb[u * c + j] += go;
          }
    };
  });
}

// Rotary position embedding on rows of x[T x d]: each pair (2i, 2i+1) of
// row t is rotated by positions[t] * base^(-2i/d).
inline Tensor rope(const Tensor& x, std::span<const int> positions, Real base = Real(10000)) {
  detail::require_rank2(x, "rope");
  const auto T = x.rows(), d = x.cols();
  if (d % 2 != 0) throw ConfigError(detail::concat("rope: head dimension must be even, got ", d));
  if (positions.size() != T) throw DimensionError("rope: one position per row required");
  std::vector<Real> cosv(T * d / 2), sinv(T * d / 2);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d / 2; ++i) {
      Real ang = Real(positions[t]) * std::pow(base, -Real(2 * i) / Real(d));
      cosv[t * d / 2 + i] = std::cos(ang);
      sinv[t * d / 2 + i] = std::sin(ang);
    }
  std::vector<Real> out(x.size());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d / 2; ++i) {
      Real c = cosv[t * d / 2 + i], s = sinv[t * d / 2 + i];
      Real x1 = x[t * d + 2 * i], x2 = x[t * d + 2 * i + 1];
      out[t * d + 2 * i] = x1 * c - x2 * s;
      out[t * d + 2 * i + 1] = x1 * s + x2 * c;
    }
  return detail::make_result("rope", x.shape(), std::move(out), {&x}, [&] {
    return [px = x.node(), cosv = std::move(cosv), sinv = std::move(sinv), T, d](detail::Node& o) {
      Real* g = detail::sink(px);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < d / 2; ++i) {
          Real c = cosv[t * d / 2 + i], s = sinv[t * d / 2 + i];
          Real g1 = o.grad[t * d + 2 * i], g2 = o.grad[t * d + 2 * i + 1];
          g[t * d + 2 * i] += g1 * c + g2 * s;
          g[t * d + 2 * i + 1] += -g1 * s + g2 * c;
        }
    };
  });
}

// Non-causal depthwise 1-D convolution over time with SAME padding.
// x[T x d], weight[k x d], bias[d].
inline Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_rank2(x, "depthwise_conv1d");
  detail::require_rank2(weight, "depthwise_conv1d");
  const auto T = x.rows(), d = x.cols(), k = weight.rows();
  if (weight.cols() != d || bias.size() != d) throw DimensionError("depthwise_conv1d: channel mismatch");
  const long left = static_cast<long>((k - 1) / 2);
  std::vector<Real> out(T * d);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      Real s = bias[j];
      for (std::size_t q = 0; q < k; ++q) {
        long src = static_cast<long>(t) + static_cast<long>(q) - left;
        if (src >= 0 && src < static_cast<long>(T)) s += weight[q * d + j] * x[src * d + j];
      }
      out[t * d + j] = s;
    }
  return detail::make_result("depthwise_conv1d", {T, d}, std::move(out), {&x, &weight, &bias}, [&] {
    return [px = x.node(), pw = weight.node(), pb = bias.node(), T, d, k, left](detail::Node& o) {
      Real* gx = detail::sink(px);
      Real* gw = detail::sink(pw);
      Real* gb = detail::sink(pb);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < d; ++j) {
          Real go = o.grad[t * d + j];
          if (gb) gb[j] += go;
          for (std::size_t q = 0; q < k; ++q) {
            long src = static_cast<long>(t) + static_cast<long>(q) - left;
            if (src < 0 || src >= static_cast<long>(T)) continue;
            if (gw) gw[q * d + j] += go * px->value[src * d + j];
            if (gx) gx[src * d + j] += go * pw->value[q * d + j];
          }
        }
    };
  });
}

// Output length of a SAME-padded strided convolution: ceil(n / stride).
constexpr std::size_t same_out_len(std::size_t n, std::size_t stride) { return (n + stride - 1) / stride; }

// 2-D convolution with SAME padding. x[Cin x H x W], weight[Cout x Cin x k x k],
// bias[Cout] -> [Cout x ceil(H/s) x ceil(W/s)].
inline Tensor conv2d_same(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  if (x.rank() != 3 || weight.rank() != 4) throw DimensionError("conv2d_same: expected [C,H,W] and [O,C,k,k]");
  const auto cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const auto cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin || weight.dim(3) != k || bias.size() != cout)
    throw DimensionError(detail::concat("conv2d_same: weight ", shape_str(weight.shape()), " vs input ",
                                        shape_str(x.shape())));
  const auto Ho = same_out_len(H, stride), Wo = same_out_len(W, stride);
  auto pad_before = [&](std::size_t n, std::size_t no) {
    long total = static_cast<long>((no - 1) * stride + k) - static_cast<long>(n);
    return std::max(total, 0L) / 2;
  };
  const long ph = pad_before(H, Ho), pw = pad_before(W, Wo);
  std::vector<Real> out(cout * Ho * Wo);
  auto xv = x.values();
  auto wv = weight.values();
  for (std::size_t oc = 0; oc < cout; ++oc)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        Real s = bias[oc];
        for (std::size_t ic = 0; ic < cin; ++ic)
          for (std::size_t a = 0; a < k; ++a) {
            long hi = static_cast<long>(i * stride + a) - ph;
            if (hi < 0 || hi >= static_cast<long>(H)) continue;
            for (std::size_t b = 0; b < k; ++b) {
              long wi = static_cast<long>(j * stride + b) - pw;
              if (wi < 0 || wi >= static_cast<long>(W)) continue;
              s += wv[((oc * cin + ic) * k + a) * k + b] * xv[(ic * H + hi) * W + wi];
            }
          }
        out[(oc * Ho + i) * Wo + j] = s;
      }
  return detail::make_result("conv2d_same", {cout, Ho, Wo}, std::move(out), {&x, &weight, &bias}, [&] {
    return [px = x.node(), pwt = weight.node(), pb = bias.node(), cin, H, W, cout, k, Ho, Wo, ph, pw,
            stride](detail::Node& o) {
      Real* gx = detail::sink(px);
      Real* gw = detail::sink(pwt);
      Real* gb = detail::sink(pb);
      for (std::size_t oc = 0; oc < cout; ++oc)
        for (std::size_t i = 0; i < Ho; ++i)
          for (std::size_t j = 0; j < Wo; ++j) {
            Real go = o.grad[(oc * Ho + i) * Wo + j];
            if (gb) gb[oc] += go;
            for (std::size_t ic = 0; ic < cin; ++ic)
              for (std::size_t a = 0; a < k; ++a) {
                long hi = static_cast<long>(i * stride + a) - ph;
                if (hi < 0 || hi >= static_cast<long>(H)) continue;
                for (std::size_t b = 0; b < k; ++b) {
                  long wi = static_cast<long>(j * stride + b) - pw;
                  if (wi < 0 || wi >= static_cast<long>(W)) continue;
                  std::size_t widx = ((oc * cin + ic) * k + a) * k + b;
                  std::size_t xidx = (ic * H + hi) * W + wi;
                  if (gw) gw[widx] += go * px->value[xidx];
                  if (gx) gx[xidx] += go * pwt->value[widx];
                }
              }
          }
    };
  });
}

// [C x T x F] -> [T x (C*F)], channel-major within each output row.
inline Tensor channels_to_features(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("channels_to_features: expected [C,T,F]");
  const auto C = x.dim(0), T = x.dim(1), F = x.dim(2);
  std::vector<Real> out(x.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f) out[t * C * F + c * F + f] = x[(c * T + t) * F + f];
  return detail::make_result("channels_to_features", {T, C * F}, std::move(out), {&x}, [&] {
    return [px = x.node(), C, T, F](detail::Node& o) {
      Real* g = detail::sink(px);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f) g[(c * T + t) * F + f] += o.grad[t * C * F + c * F + f];
    };
  });
}

// Affine map x W + b, the workhorse of every dense layer.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

inline Tensor linear(const Tensor& x, const Tensor& weight) { return matmul(x, weight); }

// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const Real> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace alenc
