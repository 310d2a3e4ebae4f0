#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "keat/tensor.hpp"

namespace keat {

/// One trainable tensor plus its L2 regularization policy.
struct Parameter {
  Tensor value;
  bool regularized = true;
  // Rows of an embedding table that stay out of the L2 penalty (UNK/PAD).
  std::vector<std::size_t> unregularized_rows;
};

/// Named parameters, iterated in lexicographic name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool regularized = true,
                 std::vector<std::size_t> unregularized_rows = {});

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Parameter& get(const std::string& name) const;
  Parameter& get(const std::string& name);
  const Tensor& value(const std::string& name) const { return get(name).value; }
  Tensor& value(const std::string& name) { return get(name).value; }

  std::size_t size() const { return params_.size(); }
  std::size_t total_numel() const;
  const std::map<std::string, Parameter>& entries() const { return params_; }
  std::map<std::string, Parameter>& entries() { return params_; }

  /// Sum of squares over every regularized entry.
  double l2_norm_sq() const;

 private:
  std::map<std::string, Parameter> params_;
};

/// Gradient per parameter name. Slots are created on first touch.
class GradStore {
 public:
  Tensor& slot(const std::string& name, const Shape& shape);
  const Tensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return grads_.count(name) != 0; }

  GradStore& operator+=(const GradStore& other);
  void scale(double factor);
  double global_norm() const;

  const std::map<std::string, Tensor>& entries() const { return grads_; }
  std::map<std::string, Tensor>& entries() { return grads_; }

 private:
  std::map<std::string, Tensor> grads_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape.
///
/// Every primitive appends a node holding its output value and an adjoint
/// rule. backward() walks the nodes in reverse insertion order, which is a
/// valid topological order because inputs are always recorded first. A tape
/// supports one backward pass; call reset() before reusing it.
class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, std::size_t self, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Free leaf; its gradient is available through grad() after backward().
  Var variable(Tensor value);
  /// Leaf bound to a named parameter. The store must outlive the tape.
  Var param(const ParamStore& store, const std::string& name);
  /// Selected rows of a parameter table; gradients scatter back row-wise.
  Var gather_rows(const ParamStore& store, const std::string& name,
                  std::span<const std::size_t> rows);

  /// Appends an op node. Inputs that need no gradient are skipped by the
  /// caller's BackwardFn via requires_grad().
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  void backward(Var loss);
  bool backward_done() const { return backward_done_; }
  void reset();

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Adjoint buffer of a node, zero-initialized on first access.
  Tensor& grad_slot(std::size_t id);
  /// Adjoint of a node after backward(); zeros when nothing flowed into it.
  Tensor grad(Var v) const;

  /// Adds the gradient of every parameter touched on this tape into `out`.
  void accumulate_into(GradStore& out) const;
  /// Dense gradient for every parameter in `store`, zeros where untouched.
  GradStore gradients(const ParamStore& store) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value_of(std::size_t id) const;

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
    Tensor grad;
    bool has_grad = false;
    // Parameter leaves and gathered rows.
    std::string param;
    Shape param_shape;
    std::vector<std::size_t> rows;
    bool gathered = false;
  };

  Var push(Node node);
  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace keat
