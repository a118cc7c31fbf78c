// Copyright 2026 The Contag Authors.
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

// Reverse-mode automatic differentiation over dense tensors.
//
// A Graph is built eagerly: every op computes its value when it is added, so
// model code reads like ordinary arithmetic. The recorded DAG can then be
// re-evaluated with new leaf bindings (used by finite-difference checks) and
// differentiated with gradients().

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "contag/tensor.hpp"

namespace contag::ad {

enum class Op {
  kLeaf,
  kAdd,
  kMul,
  kMatMul,
  kAddBias,
  kScale,
  kConcat,
  kSliceRows,
  kSliceCols,
  kTranspose,
  kTanh,
  kSigmoid,
  kRelu,
  kRowSoftmax,
  kLogSumExp,
  kGather,
  kConv1d,
  kMaxOverTime,
  kLayerNorm,
  kDropout,
  kMaskRows,
  kSum,
  kCustom,
};

const char* op_name(Op op);

enum class LeafKind { kInput, kParameter, kConstant };

/// User-defined differentiable operator. backward() must accumulate into
/// the non-null entries of `input_grads`.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual std::string name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> inputs) const = 0;
  virtual void backward(std::span<const Tensor* const> inputs, const Tensor& output,
                        const Tensor& output_grad, std::span<Tensor* const> input_grads) const = 0;
};

/// Named trainable tensors. Graphs reference these without copying, so a
/// ParameterSet must outlive every graph built from it.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  const std::map<std::string, Tensor>& items() const { return tensors_; }
  std::map<std::string, Tensor>& items() { return tensors_; }
  std::size_t scalar_count() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

class Graph;

/// Per-op configuration and forward caches.
struct OpAttrs {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t c = 0;
  double s = 0.0;
  std::vector<int> index;
  std::vector<double> aux;
  std::vector<char> flags;
  std::shared_ptr<const CustomOp> custom;
};

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

using Bindings = std::map<std::string, Tensor>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Bindable, differentiable leaf.
  Var input(const std::string& name, Tensor value);
  Var constant(Tensor value);
  /// Trainable leaf referencing external storage. Repeated calls with the
  /// same name return the same node.
  Var parameter(const std::string& name, const Tensor& value);
  /// Same, but the graph keeps its own copy.
  Var parameter(const std::string& name, Tensor&& value);
  Var parameter(const ParameterSet& params, const std::string& name) {
    return parameter(name, params.at(name));
  }

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_.at(v.id).value(); }

  /// Rebinds the named leaves and recomputes every node up to `root`.
  const Tensor& evaluate(Var root, const Bindings& bindings = {});

  /// d(loss)/d(leaf) for every parameter leaf. `loss` must hold one value.
  std::map<std::string, Tensor> gradients(Var loss);
  /// Gradient of any node from the most recent gradients() call, or null.
  const Tensor* grad(Var v) const;
  /// Gradient of a named input or parameter leaf from the last gradients()
  /// call; zeros when the loss does not depend on it.
  Tensor leaf_gradient(const std::string& name) const;
  /// Current value of a named leaf.
  const Tensor& leaf_value(const std::string& name) const;
  std::vector<std::string> parameter_names() const;

  // Op construction; used by the free functions below.
  Var apply(Op op, std::vector<Var> inputs, OpAttrs attrs = {});

 private:
  struct Node {
    Op op = Op::kLeaf;
    LeafKind leaf = LeafKind::kConstant;
    std::string name;
    std::vector<int> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool needs_grad = false;
    OpAttrs attrs;

    const Tensor& value() const { return external ? *external : owned; }
  };

  void forward(int id);
  void backward(int id);
  Tensor& grad_slot(int id);
  int find_leaf(const std::string& name) const;

  std::vector<Node> nodes_;
  std::map<std::string, int> leaves_;
};

Var add(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
/// x (n x m) plus a 1 x m row broadcast over every row.
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
/// axis 0 stacks rows, axis 1 joins columns.
Var concat(const std::vector<Var>& parts, int axis);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var transpose(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
/// Softmax over each row. Columns whose key_mask entry is false receive
/// probability exactly zero.
Var row_softmax(Var x, const std::vector<bool>& key_mask = {});
/// log(sum(exp(x))) over all elements, overflow-safe.
Var logsumexp(Var x);
/// Rows of `table` selected by `indices`.
Var gather(Var table, std::span<const int> indices);

enum class Padding { kSame, kValid };
/// 1-D convolution over rows of x (T x Cin). weights is (width*Cin) x Cout,
/// block k holding the filter tap applied to x[t + k*dilation - offset].
Var conv1d(Var x, Var weights, std::size_t width, std::size_t dilation, Padding padding);
/// Column-wise max over rows: T x C -> 1 x C.
Var max_over_time(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Inverted dropout with a mask drawn now from `rng`.
Var dropout(Var x, double rate, Rng& rng);
/// Zeroes the rows whose keep entry is false.
Var mask_rows(Var x, const std::vector<bool>& keep);
Var sum(Var x);
Var custom(std::shared_ptr<const CustomOp> op, const std::vector<Var>& inputs);

struct GradCheckReport {
  double max_relative_error = 0.0;
  bool pass = true;
  std::string worst_leaf;
  std::size_t worst_index = 0;
};

/// Compares analytic gradients of `loss` with respect to the named leaf
/// against central differences. Relative error per element is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport check_gradient(Graph& graph, Var loss, const std::string& leaf, double step,
                               double tolerance);
/// Same check over every parameter leaf of the graph.
GradCheckReport check_gradient(Graph& graph, Var loss, double step, double tolerance);

}  // namespace contag::ad
