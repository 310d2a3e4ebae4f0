#include "keat/tape.hpp"

#include <algorithm>
#include <cmath>

#include "keat/errors.hpp"

namespace keat {

Parameter& ParamStore::add(const std::string& name, Tensor value, bool regularized,
                           std::vector<std::size_t> unregularized_rows) {
  if (params_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  auto& p = params_[name];
  p.value = std::move(value);
  p.regularized = regularized;
  p.unregularized_rows = std::move(unregularized_rows);
  return p;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::total_numel() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.numel();
  return n;
}

double ParamStore::l2_norm_sq() const {
  double total = 0.0;
  for (const auto& [name, p] : params_) {
    if (!p.regularized) continue;
    const auto& rows = p.unregularized_rows;
    const std::size_t cols = p.value.rank() == 2 ? p.value.cols() : p.value.numel();
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      if (!rows.empty() && std::find(rows.begin(), rows.end(), i / cols) != rows.end()) continue;
      total += p.value[i] * p.value[i];
    }
  }
  return total;
}

Tensor& GradStore::slot(const std::string& name, const Shape& shape) {
  auto it = grads_.find(name);
  if (it == grads_.end()) it = grads_.emplace(name, Tensor(shape)).first;
  if (it->second.shape() != shape) {
    throw DimensionError("gradient '" + name + "' has shape " + shape_str(it->second.shape()) +
                         ", expected " + shape_str(shape));
  }
  return it->second;
}

const Tensor* GradStore::find(const std::string& name) const {
  auto it = grads_.find(name);
  return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& GradStore::get(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw ContractError("no gradient for '" + name + "'");
  return *t;
}

GradStore& GradStore::operator+=(const GradStore& other) {
  for (const auto& [name, g] : other.grads_) slot(name, g.shape()) += g;
  return *this;
}

void GradStore::scale(double factor) {
  for (auto& [name, g] : grads_) {
    for (double& v : g.data()) v *= factor;
  }
}

double GradStore::global_norm() const {
  double s = 0.0;
  for (const auto& [name, g] : grads_) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an empty Var");
  return tape_->value_of(id_);
}

Tape& Var::tape() const {
  if (!tape_) throw ContractError("use of an empty Var");
  return *tape_;
}

Var Tape::push(Node node) {
  if (backward_done_) throw ContractError("tape already differentiated; call reset() first");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (!v.valid() || v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

const Tensor& Tape::value_of(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  Node n;
  n.external = &store.value(name);
  n.requires_grad = true;
  n.param = name;
  n.param_shape = n.external->shape();
  return push(std::move(n));
}

Var Tape::gather_rows(const ParamStore& store, const std::string& name,
                      std::span<const std::size_t> rows) {
  const Tensor& table = store.value(name);
  if (table.rank() != 2) throw DimensionError("gather_rows needs a matrix parameter");
  const std::size_t cols = table.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= table.rows()) {
      throw ContractError("row " + std::to_string(rows[i]) + " out of range for '" + name +
                          "' with " + std::to_string(table.rows()) + " rows");
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(i, c) = table.at(rows[i], c);
  }
  Node n;
  n.value = std::move(out);
  n.requires_grad = true;
  n.param = name;
  n.param_shape = table.shape();
  n.rows.assign(rows.begin(), rows.end());
  n.gathered = true;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    check_owned(in);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.has_grad) {
    n.grad = Tensor(value_of(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (backward_done_) throw ContractError("backward called twice without reset");
  const Tensor& lv = value_of(loss.id_);
  if (lv.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(lv.shape()));
  }
  backward_done_ = true;
  grad_slot(loss.id_).fill(1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, i, n.grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  if (n.has_grad) return n.grad;
  return Tensor(value_of(v.id_).shape());
}

void Tape::accumulate_into(GradStore& out) const {
  for (const Node& n : nodes_) {
    if (n.param.empty() || !n.has_grad) continue;
    Tensor& g = out.slot(n.param, n.param_shape);
    if (!n.gathered) {
      g += n.grad;
      continue;
    }
    const std::size_t cols = n.param_shape[1];
    for (std::size_t i = 0; i < n.rows.size(); ++i) {
      for (std::size_t c = 0; c < cols; ++c) g.at(n.rows[i], c) += n.grad.at(i, c);
    }
  }
}

GradStore Tape::gradients(const ParamStore& store) const {
  GradStore out;
  for (const auto& [name, p] : store.entries()) out.slot(name, p.value.shape());
  accumulate_into(out);
  return out;
}

}  // namespace keat
