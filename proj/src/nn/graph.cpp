#include "gec/nn/graph.hpp"

#include <stdexcept>

namespace gec::nn {

Parameter& ParameterStore::add(const std::string& name, Matrix init, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->trainable = trainable;
  p->zero_grad();
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  index_.emplace(name, raw);
  return *raw;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + name);
}

const Parameter& ParameterStore::at(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + name);
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p->trainable) out.push_back(p.get());
  return out;
}

long ParameterStore::scalar_count() const {
  long n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.needs_grad = record_ && p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return {this, id};
}

Var Graph::constant(Matrix value) { return make(std::move(value), false, nullptr); }

Var Graph::make(Matrix value, bool needs_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::truncate(int mark) {
  if (mark < 0 || mark > size()) throw std::out_of_range("graph truncate mark out of range");
  nodes_.resize(static_cast<size_t>(mark));
  std::erase_if(param_nodes_, [mark](const auto& kv) { return kv.second >= mark; });
}

Matrix& Graph::grad_ref(int id) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a graph built without gradient recording");
  if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward expects a scalar loss");
  if (!nodes_[loss.id()].needs_grad) return;
  grad_ref(loss.id())(0, 0) += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) n.param->grad += n.grad;
  }
}

}  // namespace gec::nn
