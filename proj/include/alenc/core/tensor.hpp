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

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alenc/core/errors.hpp"

namespace alenc {

// Global precision switch. Tests and oracles build in 64-bit; a training
// binary may define ALENC_SINGLE_PRECISION to run in 32-bit.
#ifdef ALENC_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class Tensor;

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

struct Node {
  std::uint64_t id = next_node_id();
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until first touched
  bool requires_grad = false;

  Real* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad.data();
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

// Dense row-major array with an optional gradient. Handles are cheap to copy
// and share storage; values are treated as immutable once an op has produced
// them. Parameters are the exception: the optimizer writes them in place
// between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->value.assign(shape_size(shape), Real(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false) {
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    if (shape_size(shape) != values.size())
      throw DimensionError(detail::concat("shape ", shape_str(shape), " needs ", shape_size(shape),
                                          " values, got ", values.size()));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    std::vector<Real> v;
    std::size_t cols = rows.begin()->size();
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged matrix literal");
      v.insert(v.end(), r.begin(), r.end());
    }
    return from({rows.size(), cols}, std::move(v));
  }

  static Tensor vector(std::vector<Real> values) {
    auto n = values.size();
    return from({n}, std::move(values));
  }

  static Tensor scalar(Real v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[rank() - 2]; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const Real> values() const { return node_->value; }
  std::span<Real> mutable_values() { return node_->value; }
  Real operator[](std::size_t i) const { return node_->value[i]; }
  Real at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  Real item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const {
    node_->grad_buffer();
    return node_->grad;
  }
  std::span<Real> mutable_grad() { return {node_->grad_buffer(), node_->value.size()}; }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), Real(0)); }

  std::uint64_t id() const { return node_->id; }

  // Fresh leaf with copied values and no history.
  Tensor clone(bool requires_grad = false) const {
    return from(shape(), node_->value, requires_grad);
  }
  // Leaf sharing nothing with the graph, same values.
  Tensor detach() const { return clone(false); }

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

// Recorded reverse-mode tape. Entries are appended in execution order, which
// is a topological order by construction; backward walks them in reverse and
// visits each exactly once.
class Graph {
 public:
  struct Entry {
    std::string_view op;
    std::vector<std::uint64_t> inputs;
    std::uint64_t output = 0;
    detail::NodePtr out;
    std::vector<detail::NodePtr> parents;
    std::function<void(detail::Node& out)> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void record(std::string_view op, const detail::NodePtr& out, std::vector<detail::NodePtr> parents,
              std::function<void(detail::Node&)> backward) {
    Entry e;
    e.op = op;
    e.output = out->id;
    e.out = out;
    for (const auto& p : parents) e.inputs.push_back(p->id);
    e.parents = std::move(parents);
    e.backward = std::move(backward);
    entries_.push_back(std::move(e));
  }

  // Seeds d(loss)/d(loss) = 1 and propagates. Grads of recorded intermediates
  // are rebuilt on every call; leaf grads accumulate across calls until the
  // caller resets them.
  void backward(const Tensor& loss) {
    if (loss.size() != 1)
      throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    for (auto& e : entries_) std::fill(e.out->grad.begin(), e.out->grad.end(), Real(0));
    loss.node()->grad_buffer()[0] += Real(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->out->grad.empty()) continue;
      it->backward(*it->out);
    }
  }

  static Graph*& active() {
    thread_local Graph* current = nullptr;
    return current;
  }

 private:
  std::vector<Entry> entries_;
};

// Makes `graph` the recording target for ops on this thread for the scope's
// lifetime. Without an active graph, ops compute values only.
class GradScope {
 public:
  explicit GradScope(Graph& graph) : prev_(Graph::active()) { Graph::active() = &graph; }
  ~GradScope() { Graph::active() = prev_; }
  GradScope(const GradScope&) = delete;
  GradScope& operator=(const GradScope&) = delete;

 private:
  Graph* prev_;
};

// Suspends recording, e.g. for inference inside a training step.
class NoGradScope {
 public:
  NoGradScope() : prev_(Graph::active()) { Graph::active() = nullptr; }
  ~NoGradScope() { Graph::active() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Graph* prev_;
};

inline void backward(Graph& graph, const Tensor& loss) { graph.backward(loss); }

namespace detail {

// Builds an op result. If a graph is active and any input tracks gradients,
// the result tracks gradients and `make_backward` is invoked to obtain the
// closure that pushes out.grad into the parents' grad buffers.
template <typename MakeBackward>
Tensor make_result(std::string_view op, Shape shape, std::vector<Real> values,
                   std::initializer_list<const Tensor*> inputs, MakeBackward&& make_backward) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(values);
  Graph* g = Graph::active();
  bool track = false;
  if (g)
    for (const Tensor* t : inputs) track = track || t->requires_grad();
  if (track) {
    out->requires_grad = true;
    std::vector<NodePtr> parents;
    for (const Tensor* t : inputs) parents.push_back(t->node());
    g->record(op, out, std::move(parents), make_backward());
  }
  return Tensor(std::move(out));
}

template <typename MakeBackward>
Tensor make_result_n(std::string_view op, Shape shape, std::vector<Real> values,
                     const std::vector<Tensor>& inputs, MakeBackward&& make_backward) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(values);
  Graph* g = Graph::active();
  bool track = false;
  if (g)
    for (const Tensor& t : inputs) track = track || t.requires_grad();
  if (track) {
    out->requires_grad = true;
    std::vector<NodePtr> parents;
    for (const Tensor& t : inputs) parents.push_back(t.node());
    g->record(op, out, std::move(parents), make_backward());
  }
  return Tensor(std::move(out));
}

// Gradient sink for a parent: nullptr when the parent does not track grads.
inline Real* sink(const NodePtr& n) { return n->requires_grad ? n->grad_buffer() : nullptr; }

}  // namespace detail

}  // namespace alenc
