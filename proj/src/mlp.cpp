#include "nppo/mlp.hpp"

#include <cmath>
#include <numbers>

#include "nppo/error.hpp"

namespace nppo {

namespace {

constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

// y[b, o] = bias[o] + sum_i w[o, i] x[b, i]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t batch = x.rows();
  const std::size_t in = w.dim(1);
  const std::size_t out = w.dim(0);
  Tensor y = Tensor::matrix(batch, out);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data().data() + b * in;
    double* yr = y.data().data() + b * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = w.data().data() + o * in;
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

}  // namespace

double gelu(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
  const double th = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = gelu(v);
  return y;
}

void MLPSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ShapeError("MLPSpec: dims must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw ShapeError("MLPSpec: hidden dims must be >= 1");
  }
  if (output_init == OutputInit::small_random && !(output_scale > 0.0)) {
    throw ShapeError("MLPSpec: small_random output scale must be > 0");
  }
}

Mlp::Mlp(MLPSpec spec, std::string prefix) : spec_(std::move(spec)), prefix_(std::move(prefix)) {
  spec_.validate();
}

std::string Mlp::weight_name(std::size_t layer) const {
  return prefix_ + "l" + std::to_string(layer) + ".w";
}

std::string Mlp::bias_name(std::size_t layer) const {
  return prefix_ + "l" + std::to_string(layer) + ".b";
}

std::size_t Mlp::layer_in(std::size_t layer) const {
  return layer == 0 ? spec_.input_dim : spec_.hidden_dims[layer - 1];
}

std::size_t Mlp::layer_out(std::size_t layer) const {
  return layer + 1 == spec_.num_layers() ? spec_.output_dim : spec_.hidden_dims[layer];
}

void Mlp::init(ParamSet& params, Rng& rng) const {
  const std::size_t n = spec_.num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    const std::size_t in = layer_in(l);
    const std::size_t out = layer_out(l);
    Tensor w = Tensor::matrix(out, in);
    Tensor b = Tensor::vector(std::vector<double>(out, 0.0));
    const bool last = l + 1 == n;
    if (!last) {
      const double std_w = 1.0 / std::sqrt(static_cast<double>(in));
      for (double& v : w.data()) v = std_w * rng.normal();
    } else if (spec_.output_init == OutputInit::small_random) {
      const double std_w = spec_.output_scale / std::sqrt(static_cast<double>(in));
      for (double& v : w.data()) v = std_w * rng.normal();
      for (double& v : b.data()) v = spec_.output_scale * rng.normal();
    }
    params.add(weight_name(l), std::move(w));
    params.add(bias_name(l), std::move(b));
  }
}

Tensor Mlp::forward(const ParamSet& params, const Tensor& input, MlpCache* cache) const {
  if (input.rank() < 1 || input.rank() > 2 || input.cols() != spec_.input_dim) {
    throw ShapeError("mlp_forward: expected last dimension " + std::to_string(spec_.input_dim) +
                     ", got shape " + shape_str(input.shape()));
  }
  const std::size_t n = spec_.num_layers();
  Tensor x(Shape{input.rows(), input.cols()}, input.values());
  if (cache) {
    cache->params_version = params.version();
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < n; ++l) {
    const Tensor& w = params.value(weight_name(l));
    const Tensor& b = params.value(bias_name(l));
    if (w.dim(0) != layer_out(l) || w.dim(1) != layer_in(l)) {
      throw ShapeError("mlp_forward: parameter " + weight_name(l) + " has shape " +
                       shape_str(w.shape()));
    }
    Tensor z = affine(x, w, b);
    if (cache) cache->inputs.push_back(std::move(x));
    if (l + 1 < n) {
      x = gelu(z);
      if (cache) cache->pre.push_back(std::move(z));
    } else {
      x = std::move(z);
    }
  }
  x.require_finite("mlp_forward output");
  Tensor out = input.rank() == 1 ? Tensor::vector(x.values()) : std::move(x);
  if (cache) cache->output_shape = out.shape();
  return out;
}

Tensor Mlp::backward(ParamSet& params, const MlpCache& cache, const Tensor& grad_output) const {
  if (cache.params_version != params.version() || cache.inputs.size() != spec_.num_layers()) {
    throw StaleCacheError("mlp_backward: cache does not belong to the current parameters");
  }
  if (grad_output.shape() != cache.output_shape) {
    throw ShapeError("mlp_backward: grad_output shape " + shape_str(grad_output.shape()) +
                     " != forward output shape " + shape_str(cache.output_shape));
  }
  const std::size_t n = spec_.num_layers();
  const std::size_t batch = cache.inputs.front().rows();
  Tensor g(Shape{batch, spec_.output_dim}, grad_output.values());

  for (std::size_t l = n; l-- > 0;) {
    const std::size_t in = layer_in(l);
    const std::size_t out = layer_out(l);
    if (l + 1 < n) {
      const Tensor& z = cache.pre[l];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= gelu_grad(z[i]);
    }
    const Tensor& x = cache.inputs[l];
    const Tensor& w = params.value(weight_name(l));
    Tensor& gw = params.grad(weight_name(l));
    Tensor& gb = params.grad(bias_name(l));
    Tensor gx = Tensor::matrix(batch, in);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xr = x.data().data() + b * in;
      const double* gr = g.data().data() + b * out;
      double* gxr = gx.data().data() + b * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double go = gr[o];
        if (go == 0.0) continue;
        gb[o] += go;
        double* gwr = gw.data().data() + o * in;
        const double* wr = w.data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          gwr[i] += go * xr[i];
          gxr[i] += go * wr[i];
        }
      }
    }
    g = std::move(gx);
  }
  if (grad_output.rank() == 1) return Tensor::vector(g.values());
  return g;
}

}  // namespace nppo
