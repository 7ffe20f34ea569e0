#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nppo/param_set.hpp"
#include "nppo/rng.hpp"
#include "nppo/tensor.hpp"

namespace nppo {

// GELU, tanh approximation (the normative definition used everywhere here):
//   gelu(x)  = 0.5 x (1 + tanh(u)),  u = sqrt(2/pi) (x + 0.044715 x^3)
//   gelu'(x) = 0.5 (1 + tanh(u)) + 0.5 x (1 - tanh(u)^2) sqrt(2/pi) (1 + 3 * 0.044715 x^2)
double gelu(double x) noexcept;
double gelu_grad(double x) noexcept;
Tensor gelu(const Tensor& x);

enum class OutputInit { zero, small_random };

struct MLPSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  OutputInit output_init = OutputInit::small_random;
  double output_scale = 1.0;  // used by small_random

  void validate() const;
  std::size_t num_layers() const noexcept { return hidden_dims.size() + 1; }
};

// Activation record of one forward pass. Holds exactly what backward needs.
struct MlpCache {
  std::uint64_t params_version = 0;
  std::vector<Tensor> inputs;  // input to each linear layer
  std::vector<Tensor> pre;     // pre-activation of each hidden layer
  Shape output_shape;
};

// Feed-forward stack of affine layers with GELU between them (none after the
// last layer). Parameters live in a caller-owned ParamSet under
// "<prefix>l<i>.w" ([out, in]) and "<prefix>l<i>.b" ([out]).
class Mlp {
 public:
  Mlp() = default;
  Mlp(MLPSpec spec, std::string prefix = {});

  const MLPSpec& spec() const noexcept { return spec_; }
  const std::string& prefix() const noexcept { return prefix_; }

  // Adds this network's parameters to `params`. Hidden layers use
  // N(0, 1/fan_in) weights and zero biases.
  void init(ParamSet& params, Rng& rng) const;

  // input: [batch, input_dim] or [input_dim]. Output matches the input rank.
  Tensor forward(const ParamSet& params, const Tensor& input, MlpCache* cache = nullptr) const;

  // Accumulates parameter gradients into params.grad(...) and returns the
  // gradient with respect to the input.
  Tensor backward(ParamSet& params, const MlpCache& cache, const Tensor& grad_output) const;

  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

 private:
  std::size_t layer_in(std::size_t layer) const;
  std::size_t layer_out(std::size_t layer) const;

  MLPSpec spec_;
  std::string prefix_;
};

}  // namespace nppo
