#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nppo/tensor.hpp"

namespace nppo {

// Named parameters with matching gradient buffers. Iteration is in sorted
// name order. `version()` changes whenever parameter values may have been
// mutated, which lets activation caches detect that they are stale.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return values_.count(name) != 0; }

  const Tensor& value(const std::string& name) const;
  Tensor& mutable_value(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Tensor& grad(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t num_tensors() const noexcept { return values_.size(); }
  std::size_t num_scalars() const;

  void zero_grad();
  void touch() noexcept { ++version_; }
  std::uint64_t version() const noexcept { return version_; }

  // Sorted-order flat views, used by grad checks and norm computations.
  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;
  void set_flat_values(const std::vector<double>& flat);
  void set_flat_grads(const std::vector<double>& flat);

  const std::map<std::string, Tensor>& values() const noexcept { return values_; }
  const std::map<std::string, Tensor>& grads() const noexcept { return grads_; }
  std::map<std::string, Tensor>& grads() noexcept { return grads_; }

  // Value-equality of parameters only (gradients ignored).
  bool same_values(const ParamSet& other) const;

 private:
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
  std::uint64_t version_ = 0;
};

}  // namespace nppo
