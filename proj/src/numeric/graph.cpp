#include <algorithm>

#include "satm/autodiff.hpp"

namespace satm::num {

Parameter& ParameterSet::add(std::string name, Tensor init) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter " + name);
  Tensor grad(init.rows(), init.cols());
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

Parameter* ParameterSet::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant fed to graph");
  nodes_.push_back(Node{std::move(value), {}, false, false, {}, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericError("parameter " + p.name + " is not finite");
  nodes_.push_back(Node{p.value, {}, record_grad_, false, {}, &p});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Graph::record(std::string_view op, Tensor value, std::initializer_list<Var> parents,
                  BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Graph::record(std::string_view op, Tensor value, std::span<const Var> parents,
                  BackwardFn fn) {
  if (!value.all_finite())
    throw NumericError("non-finite value produced by " + std::string(op));
  bool needs = false;
  for (const Var& p : parents) {
    if (p.graph() != this) throw std::invalid_argument("operands from different graphs");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  needs = needs && record_grad_;
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : BackwardFn{},
                        nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Graph::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.touched) {
    n.grad = Tensor(n.value.rows(), n.value.cols());
    n.touched = true;
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw std::invalid_argument("loss belongs to another graph");
  if (loss.value().size() != 1)
    throw ShapeError("backward needs a scalar loss, got " + loss.value().shape_string());
  if (!record_grad_) throw std::logic_error("backward on a non-recording graph");
  for (auto& n : nodes_) {
    n.touched = false;
    n.grad = Tensor();
  }
  grad(loss.id())[0] = 1.0;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.touched && n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
  }
  for (auto& [param, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (!n.touched) continue;
    Parameter* p = n.param;
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows(), p->value.cols());
    for (std::size_t k = 0; k < n.grad.size(); ++k) p->grad[k] += n.grad[k];
  }
}

std::vector<const Parameter*> Graph::disconnected_parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& [param, id] : param_nodes_)
    if (!nodes_[id].touched) out.push_back(param);
  std::sort(out.begin(), out.end(),
            [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
  return out;
}

}  // namespace satm::num
