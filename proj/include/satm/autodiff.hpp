#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "satm/tensor.hpp"

namespace satm::num {

/// A trainable tensor with its accumulated gradient. Owned by a
/// ParameterSet; graphs only hold pointers to it.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Stable-address container of named parameters.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order, so backward is a single reverse sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  /// With record_grad=false no backward closures are kept (inference mode).
  explicit Graph(bool record_grad = true) : record_grad_(record_grad) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Repeated calls return the same node.
  Var param(Parameter& p);

  /// Accumulates d(loss)/d(param) into every bound Parameter::grad.
  void backward(Var loss);

  Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents,
             BackwardFn fn);
  Var record(std::string_view op, Tensor value, std::span<const Var> parents,
             BackwardFn fn);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  /// Gradient buffer of a node, zero-allocated on first access.
  Tensor& grad(std::uint32_t id);
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_grad_; }
  std::size_t size() const { return nodes_.size(); }

  /// Parameters bound to this graph that received no gradient in the last
  /// backward pass (their gradient is zero by definition).
  std::vector<const Parameter*> disconnected_parameters() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool touched = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  bool record_grad_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

// Differentiable primitives. Binary elementwise ops broadcast any operand
// dimension of size 1 against the other operand.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Row softmax. Entries where mask == 0 get probability exactly 0.
Var softmax_rows(Var a, const Tensor* mask = nullptr);
/// Row log-softmax. Masked entries report kMaskedLogProb and carry no gradient.
Var log_softmax_rows(Var a, const Tensor* mask = nullptr);
Var sum(Var a);
Var mean(Var a);
Var sum_cols(Var a);  // [r,c] -> [r,1]
Var sum_rows(Var a);  // [r,c] -> [1,c]
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var table, std::span<const std::size_t> rows);
/// out[r] = a(r, cols[r]); result [r,1].
Var select_cols(Var a, std::span<const std::size_t> cols);
/// Scalar sum_i weights[i] * a[0, index[i]] for a row vector a.
Var weighted_entries(Var a, std::span<const std::size_t> index,
                     std::span<const double> weights);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

inline constexpr double kMaskedLogProb = -1e30;

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace satm::num
