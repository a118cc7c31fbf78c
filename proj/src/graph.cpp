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

#include "contag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace contag::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kMatMul: return "matmul";
    case Op::kAddBias: return "add_bias";
    case Op::kScale: return "scale";
    case Op::kConcat: return "concat";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kTranspose: return "transpose";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kRelu: return "relu";
    case Op::kRowSoftmax: return "row_softmax";
    case Op::kLogSumExp: return "logsumexp";
    case Op::kGather: return "gather";
    case Op::kConv1d: return "conv1d";
    case Op::kMaxOverTime: return "max_over_time";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kDropout: return "dropout";
    case Op::kMaskRows: return "mask_rows";
    case Op::kSum: return "sum";
    case Op::kCustom: return "custom";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ParameterSet

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
  auto [it, inserted] = tensors_.emplace(name, std::move(value));
  if (!inserted) throw UsageError("duplicate parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

const Tensor& Var::value() const { return graph->value(*this); }

// ---------------------------------------------------------------------------
// Leaves

Var Graph::input(const std::string& name, Tensor value) {
  if (leaves_.count(name)) throw UsageError("duplicate leaf name '" + name + "'");
  Node n;
  n.leaf = LeafKind::kInput;
  n.name = name;
  n.owned = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size() - 1);
  leaves_[name] = id;
  return {this, id};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.leaf = LeafKind::kConstant;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::parameter(const std::string& name, const Tensor& value) {
  if (auto it = leaves_.find(name); it != leaves_.end()) {
    if (nodes_[it->second].leaf != LeafKind::kParameter) {
      throw UsageError("leaf '" + name + "' is not a parameter");
    }
    return {this, it->second};
  }
  Node n;
  n.leaf = LeafKind::kParameter;
  n.name = name;
  n.external = &value;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size() - 1);
  leaves_[name] = id;
  return {this, id};
}

Var Graph::parameter(const std::string& name, Tensor&& value) {
  Var v = parameter(name, static_cast<const Tensor&>(value));
  Node& n = nodes_[v.id];
  if (n.external == &value) {
    n.owned = std::move(value);
    n.external = nullptr;
  }
  return v;
}

int Graph::find_leaf(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw UsageError("no leaf named '" + name + "'");
  return it->second;
}

const Tensor& Graph::leaf_value(const std::string& name) const {
  return nodes_[find_leaf(name)].value();
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : leaves_) {
    if (nodes_[id].leaf == LeafKind::kParameter) out.push_back(name);
  }
  return out;
}

Var Graph::apply(Op op, std::vector<Var> inputs, OpAttrs attrs) {
  Node n;
  n.op = op;
  n.attrs = std::move(attrs);
  for (const auto& v : inputs) {
    if (v.graph != this) throw UsageError(std::string("input of ") + op_name(op) + " belongs to another graph");
    n.inputs.push_back(v.id);
    n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
  }
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size() - 1);
  try {
    forward(id);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return {this, id};
}

// ---------------------------------------------------------------------------
// Forward

namespace {

[[noreturn]] void shape_mismatch(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_string(a) +
                   " and " + shape_string(b));
}

void require_same(Op op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
}

// out (n x m) += a (n x k) * b (k x m)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// out (n x k) += g (n x m) * b^T, b is (k x m)
void gemm_nt(const Tensor& g, const Tensor& b, Tensor& out) {
  const std::size_t n = g.rows(), m = g.cols(), k = b.rows();
  const double* G = g.data().data();
  const double* B = b.data().data();
  double* C = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = G + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = B + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
      C[i * k + p] += acc;
    }
  }
}

// out (k x m) += a^T * g, a is (n x k), g is (n x m)
void gemm_tn(const Tensor& a, const Tensor& g, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = g.cols();
  const double* A = a.data().data();
  const double* G = g.data().data();
  double* C = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = G + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      double* crow = C + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * grow[j];
    }
  }
}

std::size_t conv_offset(std::size_t width, std::size_t dilation, bool same) {
  return same ? dilation * (width - 1) / 2 : 0;
}

}  // namespace

void Graph::forward(int id) {
  Node& n = nodes_[id];
  if (n.op == Op::kLeaf) return;
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value(); };
  Tensor& out = n.owned;
  auto& at = n.attrs;

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      require_same(n.op, in(0), in(1));
      out = in(0);
      auto b = in(1).data();
      auto o = out.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i];
      break;
    }
    case Op::kMul: {
      require_same(n.op, in(0), in(1));
      out = in(0);
      auto b = in(1).data();
      auto o = out.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] *= b[i];
      break;
    }
    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.cols() != b.rows()) shape_mismatch(n.op, a.shape(), b.shape());
      out = Tensor::matrix(a.rows(), b.cols());
      gemm_nn(a, b, out);
      break;
    }
    case Op::kAddBias: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      if (b.size() != x.cols()) shape_mismatch(n.op, x.shape(), b.shape());
      out = x;
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row_span(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
      }
      break;
    }
    case Op::kScale: {
      out = in(0);
      for (double& v : out.data()) v *= at.s;
      break;
    }
    case Op::kConcat: {
      const bool rows_axis = at.a == 0;
      std::size_t total = 0;
      const Tensor& first = in(0);
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& t = in(i);
        if (rows_axis ? t.cols() != first.cols() : t.rows() != first.rows()) {
          shape_mismatch(n.op, first.shape(), t.shape());
        }
        total += rows_axis ? t.rows() : t.cols();
      }
      if (rows_axis) {
        out = Tensor::matrix(total, first.cols());
        std::size_t r0 = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const Tensor& t = in(i);
          std::copy(t.data().begin(), t.data().end(), out.data().begin() + r0 * out.cols());
          r0 += t.rows();
        }
      } else {
        out = Tensor::matrix(first.rows(), total);
        std::size_t c0 = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const Tensor& t = in(i);
          for (std::size_t r = 0; r < t.rows(); ++r) {
            auto src = t.row_span(r);
            std::copy(src.begin(), src.end(), out.row_span(r).begin() + c0);
          }
          c0 += t.cols();
        }
      }
      break;
    }
    case Op::kSliceRows: {
      const Tensor& x = in(0);
      if (at.a >= at.b || at.b > x.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(at.a) + ", " +
                         std::to_string(at.b) + ") invalid for " + shape_string(x.shape()));
      }
      out = Tensor::matrix(at.b - at.a, x.cols());
      std::copy(x.data().begin() + at.a * x.cols(), x.data().begin() + at.b * x.cols(),
                out.data().begin());
      break;
    }
    case Op::kSliceCols: {
      const Tensor& x = in(0);
      if (at.a >= at.b || at.b > x.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(at.a) + ", " +
                         std::to_string(at.b) + ") invalid for " + shape_string(x.shape()));
      }
      out = Tensor::matrix(x.rows(), at.b - at.a);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto src = x.row_span(r);
        std::copy(src.begin() + at.a, src.begin() + at.b, out.row_span(r).begin());
      }
      break;
    }
    case Op::kTranspose: {
      const Tensor& x = in(0);
      out = Tensor::matrix(x.cols(), x.rows());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
      break;
    }
    case Op::kTanh:
      out = in(0);
      for (double& v : out.data()) v = std::tanh(v);
      break;
    case Op::kSigmoid:
      out = in(0);
      for (double& v : out.data()) {
        v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      }
      break;
    case Op::kRelu:
      out = in(0);
      for (double& v : out.data()) v = v > 0 ? v : 0.0;
      break;
    case Op::kRowSoftmax: {
      const Tensor& x = in(0);
      const auto& keys = at.flags;
      if (!keys.empty() && keys.size() != x.cols()) {
        throw ShapeError("row_softmax: key mask of length " + std::to_string(keys.size()) +
                         " for " + shape_string(x.shape()));
      }
      auto live = [&](std::size_t c) { return keys.empty() || keys[c]; };
      out = Tensor(x.shape());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto src = x.row_span(r);
        auto dst = out.row_span(r);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < src.size(); ++c)
          if (live(c)) m = std::max(m, src[c]);
        if (!std::isfinite(m)) throw NumericError("row_softmax: row has no unmasked entries");
        double z = 0.0;
        for (std::size_t c = 0; c < src.size(); ++c) {
          dst[c] = live(c) ? std::exp(src[c] - m) : 0.0;
          z += dst[c];
        }
        for (double& v : dst) v /= z;
      }
      break;
    }
    case Op::kLogSumExp: {
      const Tensor& x = in(0);
      double m = *std::max_element(x.data().begin(), x.data().end());
      double z = 0.0;
      for (double v : x.data()) z += std::exp(v - m);
      out = Tensor::scalar(m + std::log(z));
      break;
    }
    case Op::kGather: {
      const Tensor& table = in(0);
      const std::size_t d = table.cols();
      out = Tensor::matrix(at.index.size(), d);
      for (std::size_t t = 0; t < at.index.size(); ++t) {
        int idx = at.index[t];
        if (idx < 0 || static_cast<std::size_t>(idx) >= table.rows()) {
          throw ShapeError("gather: index " + std::to_string(idx) + " out of range for " +
                           shape_string(table.shape()));
        }
        auto src = table.row_span(static_cast<std::size_t>(idx));
        std::copy(src.begin(), src.end(), out.row_span(t).begin());
      }
      break;
    }
    case Op::kConv1d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t width = at.a, dil = at.b;
      const bool same = at.c == 0;
      const std::size_t cin = x.cols();
      if (width == 0 || dil == 0 || w.rows() != width * cin) shape_mismatch(n.op, x.shape(), w.shape());
      const std::size_t span = dil * (width - 1);
      if (!same && x.rows() <= span) {
        throw ShapeError("conv1d: valid convolution of width " + std::to_string(width) +
                         " needs more than " + std::to_string(span) + " rows, got " +
                         shape_string(x.shape()));
      }
      const std::size_t t_out = same ? x.rows() : x.rows() - span;
      const std::size_t off = conv_offset(width, dil, same);
      const std::size_t cout = w.cols();
      out = Tensor::matrix(t_out, cout);
      for (std::size_t t = 0; t < t_out; ++t) {
        double* orow = out.data().data() + t * cout;
        for (std::size_t k = 0; k < width; ++k) {
          const long src = static_cast<long>(t + k * dil) - static_cast<long>(off);
          if (src < 0 || src >= static_cast<long>(x.rows())) continue;
          const double* xrow = x.data().data() + static_cast<std::size_t>(src) * cin;
          const double* wblock = w.data().data() + k * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = xrow[ci];
            if (xv == 0.0) continue;
            const double* wrow = wblock + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) orow[co] += xv * wrow[co];
          }
        }
      }
      break;
    }
    case Op::kMaxOverTime: {
      const Tensor& x = in(0);
      out = Tensor::matrix(1, x.cols());
      at.index.assign(x.cols(), 0);
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double best = x(0, c);
        for (std::size_t r = 1; r < x.rows(); ++r) {
          if (x(r, c) > best) {
            best = x(r, c);
            at.index[c] = static_cast<int>(r);
          }
        }
        out(0, c) = best;
      }
      break;
    }
    case Op::kLayerNorm: {
      const Tensor& x = in(0);
      const Tensor& gain = in(1);
      const Tensor& bias = in(2);
      const std::size_t m = x.cols();
      if (gain.size() != m || bias.size() != m) shape_mismatch(n.op, x.shape(), gain.shape());
      out = Tensor(x.shape());
      // aux holds xhat (rows*m) followed by inverse std per row
      at.aux.assign(x.size() + x.rows(), 0.0);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto src = x.row_span(r);
        double mean = 0.0;
        for (double v : src) mean += v;
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (double v : src) var += (v - mean) * (v - mean);
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + at.s);
        at.aux[x.size() + r] = inv;
        auto dst = out.row_span(r);
        for (std::size_t c = 0; c < m; ++c) {
          const double xh = (src[c] - mean) * inv;
          at.aux[r * m + c] = xh;
          dst[c] = gain[c] * xh + bias[c];
        }
      }
      break;
    }
    case Op::kDropout: {
      const Tensor& x = in(0);
      if (at.aux.size() != x.size()) shape_mismatch(n.op, x.shape(), Shape{at.aux.size()});
      out = x;
      auto o = out.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] *= at.aux[i];
      break;
    }
    case Op::kMaskRows: {
      const Tensor& x = in(0);
      if (at.flags.size() != x.rows()) shape_mismatch(n.op, x.shape(), Shape{at.flags.size()});
      out = x;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (!at.flags[r]) std::fill(out.row_span(r).begin(), out.row_span(r).end(), 0.0);
      }
      break;
    }
    case Op::kSum: {
      double s = 0.0;
      for (double v : in(0).data()) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case Op::kCustom: {
      std::vector<const Tensor*> ins;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) ins.push_back(&in(i));
      out = at.custom->forward(ins);
      break;
    }
  }

  if (!out.all_finite()) {
    std::string what = n.op == Op::kCustom ? at.custom->name() : op_name(n.op);
    throw NumericError("non-finite value produced by node " + std::to_string(id) + " (" + what + ")");
  }
}

// ---------------------------------------------------------------------------
// Backward

Tensor& Graph::grad_slot(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value().shape());
  return n.grad;
}

void Graph::backward(int id) {
  // Copy out what we need: grad_slot may not reallocate nodes_, but keep
  // references narrow anyway.
  Node& n = nodes_[id];
  if (n.op == Op::kLeaf || n.grad.empty()) return;
  const Tensor& g = n.grad;
  const Tensor& y = n.owned;
  auto& at = n.attrs;
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value(); };
  auto needs = [&](std::size_t i) { return nodes_[n.inputs[i]].needs_grad; };
  auto slot = [&](std::size_t i) -> Tensor& { return grad_slot(n.inputs[i]); };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      for (std::size_t k = 0; k < 2; ++k) {
        if (!needs(k)) continue;
        auto gi = slot(k).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
      }
      break;
    case Op::kMul:
      for (std::size_t k = 0; k < 2; ++k) {
        if (!needs(k)) continue;
        const Tensor& other = in(1 - k);
        auto gi = slot(k).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] * other[i];
      }
      break;
    case Op::kMatMul:
      if (needs(0)) gemm_nt(g, in(1), slot(0));
      if (needs(1)) gemm_tn(in(0), g, slot(1));
      break;
    case Op::kAddBias:
      if (needs(0)) {
        auto gi = slot(0).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
      }
      if (needs(1)) {
        Tensor& gb = slot(1);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      }
      break;
    case Op::kScale:
      if (needs(0)) {
        auto gi = slot(0).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += at.s * g[i];
      }
      break;
    case Op::kConcat: {
      const bool rows_axis = at.a == 0;
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor& part = in(k);
        if (needs(k)) {
          Tensor& gp = slot(k);
          for (std::size_t r = 0; r < part.rows(); ++r) {
            for (std::size_t c = 0; c < part.cols(); ++c) {
              gp(r, c) += rows_axis ? g(off + r, c) : g(r, off + c);
            }
          }
        }
        off += rows_axis ? part.rows() : part.cols();
      }
      break;
    }
    case Op::kSliceRows:
      if (needs(0)) {
        Tensor& gx = slot(0);
        const std::size_t base = at.a * gx.cols();
        for (std::size_t i = 0; i < g.size(); ++i) gx[base + i] += g[i];
      }
      break;
    case Op::kSliceCols:
      if (needs(0)) {
        Tensor& gx = slot(0);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gx(r, at.a + c) += g(r, c);
      }
      break;
    case Op::kTranspose:
      if (needs(0)) {
        Tensor& gx = slot(0);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gx(c, r) += g(r, c);
      }
      break;
    case Op::kTanh:
      if (needs(0)) {
        auto gi = slot(0).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] * (1.0 - y[i] * y[i]);
      }
      break;
    case Op::kSigmoid:
      if (needs(0)) {
        auto gi = slot(0).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] * y[i] * (1.0 - y[i]);
      }
      break;
    case Op::kRelu:
      if (needs(0)) {
        auto gi = slot(0).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += y[i] > 0 ? g[i] : 0.0;
      }
      break;
    case Op::kRowSoftmax:
      if (needs(0)) {
        Tensor& gx = slot(0);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          auto p = y.row_span(r);
          auto gr = g.row_span(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < p.size(); ++c) dot += p[c] * gr[c];
          auto dst = gx.row_span(r);
          for (std::size_t c = 0; c < p.size(); ++c) dst[c] += p[c] * (gr[c] - dot);
        }
      }
      break;
    case Op::kLogSumExp:
      if (needs(0)) {
        const Tensor& x = in(0);
        const double lse = y.item();
        auto gi = slot(0).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g.item() * std::exp(x[i] - lse);
      }
      break;
    case Op::kGather:
      if (needs(0)) {
        Tensor& gt = slot(0);
        for (std::size_t t = 0; t < at.index.size(); ++t) {
          auto dst = gt.row_span(static_cast<std::size_t>(at.index[t]));
          auto src = g.row_span(t);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
      }
      break;
    case Op::kConv1d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t width = at.a, dil = at.b;
      const bool same = at.c == 0;
      const std::size_t cin = x.cols(), cout = w.cols();
      const std::size_t off = conv_offset(width, dil, same);
      Tensor* gx = needs(0) ? &slot(0) : nullptr;
      Tensor* gw = needs(1) ? &slot(1) : nullptr;
      for (std::size_t t = 0; t < g.rows(); ++t) {
        const double* grow = g.data().data() + t * cout;
        for (std::size_t k = 0; k < width; ++k) {
          const long src = static_cast<long>(t + k * dil) - static_cast<long>(off);
          if (src < 0 || src >= static_cast<long>(x.rows())) continue;
          const std::size_t s = static_cast<std::size_t>(src);
          const double* xrow = x.data().data() + s * cin;
          const double* wblock = w.data().data() + k * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* wrow = wblock + ci * cout;
            if (gx) {
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) acc += grow[co] * wrow[co];
              (*gx)(s, ci) += acc;
            }
            if (gw) {
              const double xv = xrow[ci];
              double* gwrow = gw->data().data() + (k * cin + ci) * cout;
              for (std::size_t co = 0; co < cout; ++co) gwrow[co] += xv * grow[co];
            }
          }
        }
      }
      break;
    }
    case Op::kMaxOverTime:
      if (needs(0)) {
        Tensor& gx = slot(0);
        for (std::size_t c = 0; c < g.cols(); ++c) gx(static_cast<std::size_t>(at.index[c]), c) += g(0, c);
      }
      break;
    case Op::kLayerNorm: {
      const Tensor& x = in(0);
      const Tensor& gain = in(1);
      const std::size_t m = x.cols();
      const double* xhat = at.aux.data();
      Tensor* gx = needs(0) ? &slot(0) : nullptr;
      Tensor* gg = needs(1) ? &slot(1) : nullptr;
      Tensor* gb = needs(2) ? &slot(2) : nullptr;
      std::vector<double> dxhat(m);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double inv = at.aux[x.size() + r];
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
          const double gv = g(r, c);
          const double xh = xhat[r * m + c];
          if (gg) (*gg)[c] += gv * xh;
          if (gb) (*gb)[c] += gv;
          dxhat[c] = gv * gain[c];
          sum_d += dxhat[c];
          sum_dx += dxhat[c] * xh;
        }
        if (gx) {
          const double md = static_cast<double>(m);
          for (std::size_t c = 0; c < m; ++c) {
            (*gx)(r, c) += inv / md * (md * dxhat[c] - sum_d - xhat[r * m + c] * sum_dx);
          }
        }
      }
      break;
    }
    case Op::kDropout:
      if (needs(0)) {
        auto gi = slot(0).data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] * at.aux[i];
      }
      break;
    case Op::kMaskRows:
      if (needs(0)) {
        Tensor& gx = slot(0);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          if (!at.flags[r]) continue;
          auto dst = gx.row_span(r);
          auto src = g.row_span(r);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
      }
      break;
    case Op::kSum:
      if (needs(0)) {
        for (double& v : slot(0).data()) v += g.item();
      }
      break;
    case Op::kCustom: {
      std::vector<const Tensor*> ins;
      std::vector<Tensor*> gins;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        ins.push_back(&in(i));
        gins.push_back(needs(i) ? &slot(i) : nullptr);
      }
      at.custom->backward(ins, y, g, gins);
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Evaluation and differentiation

const Tensor& Graph::evaluate(Var root, const Bindings& bindings) {
  if (root.graph != this) throw UsageError("evaluate: root belongs to another graph");
  for (const auto& [name, value] : bindings) {
    Node& leaf = nodes_[find_leaf(name)];
    if (value.shape() != leaf.value().shape()) {
      throw ShapeError("evaluate: binding '" + name + "' has shape " + shape_string(value.shape()) +
                       ", leaf expects " + shape_string(leaf.value().shape()));
    }
    leaf.owned = value;
    leaf.external = nullptr;
  }
  for (int id = 0; id <= root.id; ++id) forward(id);
  return value(root);
}

std::map<std::string, Tensor> Graph::gradients(Var loss) {
  if (loss.graph != this) throw UsageError("gradients: loss belongs to another graph");
  if (value(loss).size() != 1) {
    throw ShapeError("gradients: loss must be scalar, got " + shape_string(value(loss).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_slot(loss.id).fill(1.0);
  for (int id = loss.id; id >= 0; --id) backward(id);

  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : leaves_) {
    const Node& n = nodes_[id];
    if (n.leaf != LeafKind::kParameter) continue;
    out[name] = n.grad.empty() ? Tensor(n.value().shape()) : n.grad;
  }
  return out;
}

Tensor Graph::leaf_gradient(const std::string& name) const {
  const Node& n = nodes_[find_leaf(name)];
  return n.grad.empty() ? Tensor(n.value().shape()) : n.grad;
}

const Tensor* Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad.empty() ? nullptr : &n.grad;
}

// ---------------------------------------------------------------------------
// Op constructors

Var add(Var a, Var b) { return a.graph->apply(Op::kAdd, {a, b}); }
Var mul(Var a, Var b) { return a.graph->apply(Op::kMul, {a, b}); }
Var matmul(Var a, Var b) { return a.graph->apply(Op::kMatMul, {a, b}); }
Var add_bias(Var x, Var bias) { return x.graph->apply(Op::kAddBias, {x, bias}); }

Var scale(Var x, double factor) {
  OpAttrs at;
  at.s = factor;
  return x.graph->apply(Op::kScale, {x}, std::move(at));
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw UsageError("concat axis must be 0 or 1");
  if (parts.size() == 1) return parts.front();
  OpAttrs at;
  at.a = static_cast<std::size_t>(axis);
  return parts.front().graph->apply(Op::kConcat, parts, std::move(at));
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  OpAttrs at;
  at.a = begin;
  at.b = end;
  return x.graph->apply(Op::kSliceRows, {x}, std::move(at));
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  OpAttrs at;
  at.a = begin;
  at.b = end;
  return x.graph->apply(Op::kSliceCols, {x}, std::move(at));
}

Var transpose(Var x) { return x.graph->apply(Op::kTranspose, {x}); }
Var tanh(Var x) { return x.graph->apply(Op::kTanh, {x}); }
Var sigmoid(Var x) { return x.graph->apply(Op::kSigmoid, {x}); }
Var relu(Var x) { return x.graph->apply(Op::kRelu, {x}); }

Var row_softmax(Var x, const std::vector<bool>& key_mask) {
  OpAttrs at;
  at.flags.assign(key_mask.begin(), key_mask.end());
  return x.graph->apply(Op::kRowSoftmax, {x}, std::move(at));
}

Var logsumexp(Var x) { return x.graph->apply(Op::kLogSumExp, {x}); }

Var gather(Var table, std::span<const int> indices) {
  if (indices.empty()) throw ShapeError("gather: empty index list");
  OpAttrs at;
  at.index.assign(indices.begin(), indices.end());
  return table.graph->apply(Op::kGather, {table}, std::move(at));
}

Var conv1d(Var x, Var weights, std::size_t width, std::size_t dilation, Padding padding) {
  OpAttrs at;
  at.a = width;
  at.b = dilation;
  at.c = padding == Padding::kSame ? 0 : 1;
  return x.graph->apply(Op::kConv1d, {x, weights}, std::move(at));
}

Var max_over_time(Var x) { return x.graph->apply(Op::kMaxOverTime, {x}); }

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  OpAttrs at;
  at.s = eps;
  return x.graph->apply(Op::kLayerNorm, {x, gain, bias}, std::move(at));
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  OpAttrs at;
  const double keep = 1.0 / (1.0 - rate);
  at.aux.resize(x.value().size());
  for (double& m : at.aux) m = rng.bernoulli(rate) ? 0.0 : keep;
  return x.graph->apply(Op::kDropout, {x}, std::move(at));
}

Var mask_rows(Var x, const std::vector<bool>& keep) {
  OpAttrs at;
  at.flags.assign(keep.begin(), keep.end());
  return x.graph->apply(Op::kMaskRows, {x}, std::move(at));
}

Var sum(Var x) { return x.graph->apply(Op::kSum, {x}); }

Var custom(std::shared_ptr<const CustomOp> op, const std::vector<Var>& inputs) {
  if (inputs.empty()) throw UsageError("custom op needs at least one input");
  OpAttrs at;
  at.custom = std::move(op);
  return inputs.front().graph->apply(Op::kCustom, inputs, std::move(at));
}

// ---------------------------------------------------------------------------
// Gradient check

namespace {

void check_leaf(Graph& graph, Var loss, const std::string& leaf, const Tensor& analytic,
                double step, double tolerance, GradCheckReport& report) {
  const Tensor original = graph.leaf_value(leaf);
  Tensor probe = original;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe[i] = original[i] + step;
    const double up = graph.evaluate(loss, {{leaf, probe}}).item();
    probe[i] = original[i] - step;
    const double down = graph.evaluate(loss, {{leaf, probe}}).item();
    probe[i] = original[i];
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_leaf = leaf;
      report.worst_index = i;
    }
  }
  graph.evaluate(loss, {{leaf, original}});
  report.pass = report.max_relative_error < tolerance;
}

}  // namespace

GradCheckReport check_gradient(Graph& graph, Var loss, const std::string& leaf, double step,
                               double tolerance) {
  if (!(step > 0.0)) throw UsageError("check_gradient: step must be positive");
  graph.evaluate(loss);
  graph.gradients(loss);
  const Tensor analytic = graph.leaf_gradient(leaf);
  GradCheckReport report;
  check_leaf(graph, loss, leaf, analytic, step, tolerance, report);
  return report;
}

GradCheckReport check_gradient(Graph& graph, Var loss, double step, double tolerance) {
  if (!(step > 0.0)) throw UsageError("check_gradient: step must be positive");
  graph.evaluate(loss);
  auto grads = graph.gradients(loss);
  GradCheckReport report;
  for (const auto& [name, analytic] : grads) {
    check_leaf(graph, loss, name, analytic, step, tolerance, report);
  }
  report.pass = report.max_relative_error < tolerance;
  return report;
}

}  // namespace contag::ad
