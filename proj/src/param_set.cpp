#include "nppo/param_set.hpp"

#include "nppo/error.hpp"

namespace nppo {

void ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw Error("duplicate parameter '" + name + "'");
  Tensor zeros(value.shape(), 0.0);
  values_.emplace(name, std::move(value));
  grads_.emplace(name, std::move(zeros));
  touch();
}

const Tensor& ParamSet::value(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::mutable_value(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw Error("unknown parameter '" + name + "'");
  touch();
  return it->second;
}

const Tensor& ParamSet::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, v] : values_) n += v.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [_, g] : grads_) g.fill(0.0);
}

namespace {

std::vector<double> flatten(const std::map<std::string, Tensor>& tensors) {
  std::vector<double> out;
  for (const auto& [_, t] : tensors) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

void unflatten(std::map<std::string, Tensor>& tensors, const std::vector<double>& flat) {
  std::size_t total = 0;
  for (const auto& [_, t] : tensors) total += t.size();
  if (total != flat.size()) throw ShapeError("flat parameter vector has the wrong length");
  std::size_t offset = 0;
  for (auto& [_, t] : tensors) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data().begin());
    offset += t.size();
  }
}

}  // namespace

std::vector<double> ParamSet::flat_values() const { return flatten(values_); }
std::vector<double> ParamSet::flat_grads() const { return flatten(grads_); }

void ParamSet::set_flat_values(const std::vector<double>& flat) {
  unflatten(values_, flat);
  touch();
}

void ParamSet::set_flat_grads(const std::vector<double>& flat) { unflatten(grads_, flat); }

bool ParamSet::same_values(const ParamSet& other) const {
  if (values_.size() != other.values_.size()) return false;
  for (const auto& [name, v] : values_) {
    auto it = other.values_.find(name);
    if (it == other.values_.end() || !v.same_shape(it->second)) return false;
    if (v.values() != it->second.values()) return false;
  }
  return true;
}

}  // namespace nppo
