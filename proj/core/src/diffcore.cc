// Copyright 2026 The rlhf-bilevel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rlhf/diffcore.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "rlhf/errors.h"
#include "rlhf/rng.h"

namespace rlhf {

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(),
                                        std::size_t{1}, std::multiplies<>());
  if (n != data.size()) {
    throw DimensionError("tensor shape does not match data length");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(),
                                        std::size_t{1}, std::multiplies<>());
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

std::string to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

std::string to_string(OutputTransform t) {
  switch (t) {
    case OutputTransform::kIdentity:
      return "identity";
    case OutputTransform::kSigmoid:
      return "sigmoid";
    case OutputTransform::kLogSoftmax:
      return "log_softmax";
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("activation", "unknown activation '" + s + "'");
}

OutputTransform parse_output_transform(const std::string& s) {
  if (s == "identity") return OutputTransform::kIdentity;
  if (s == "sigmoid") return OutputTransform::kSigmoid;
  if (s == "log_softmax") return OutputTransform::kLogSoftmax;
  throw ConfigError("output_transform", "unknown output transform '" + s + "'");
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw DimensionError("mlp input and output dims must be >= 1");
  }
  for (int w : hidden_widths) {
    if (w < 1) throw DimensionError("mlp hidden widths must be >= 1");
  }
  if (output_transform == OutputTransform::kLogSoftmax && output_dim < 2) {
    throw DimensionError("log_softmax head needs output_dim >= 2");
  }
}

int MlpSpec::layer_in(std::size_t l) const {
  return l == 0 ? input_dim : hidden_widths[l - 1];
}

int MlpSpec::layer_out(std::size_t l) const {
  return l == hidden_widths.size() ? output_dim : hidden_widths[l];
}

std::size_t MlpSpec::layer_offset(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) {
    off += static_cast<std::size_t>(layer_out(i)) * (layer_in(i) + 1);
  }
  return off;
}

std::size_t MlpSpec::param_count() const { return layer_offset(num_layers()); }

namespace {

void check_same_size(const ParamVec& a, const ParamVec& b) {
  if (a.size() != b.size()) throw DimensionError("ParamVec size mismatch");
}

double activate(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : std::max(z, 0.0);
}

// Derivative given pre-activation z and activation value y.
double activate_deriv(Activation a, double z, double y) {
  if (a == Activation::kTanh) return 1.0 - y * y;
  // Subgradient 0 at the kink.
  return z > 0.0 ? 1.0 : 0.0;
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_inputs(const MlpSpec& spec, const ParamVec& params,
                  const Tensor& input) {
  spec.validate();
  if (params.size() != spec.param_count()) {
    throw DimensionError("parameter count " + std::to_string(params.size()) +
                         " does not match spec (" +
                         std::to_string(spec.param_count()) + ")");
  }
  if (input.shape.size() != 1 ||
      input.shape[0] != static_cast<std::size_t>(spec.input_dim)) {
    throw DimensionError("mlp input must have shape [" +
                         std::to_string(spec.input_dim) + "]");
  }
}

// y = W x + b for the layer starting at `w`.
void affine(const double* w, int in, int out, std::span<const double> x,
            std::vector<double>& y) {
  y.assign(out, 0.0);
  const double* bias = w + static_cast<std::size_t>(out) * in;
  for (int o = 0; o < out; ++o) {
    const double* row = w + static_cast<std::size_t>(o) * in;
    double acc = bias[o];
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

std::vector<double> apply_output_transform(OutputTransform t,
                                           const std::vector<double>& z) {
  std::vector<double> out(z.size());
  switch (t) {
    case OutputTransform::kIdentity:
      out = z;
      break;
    case OutputTransform::kSigmoid:
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = stable_sigmoid(z[i]);
      break;
    case OutputTransform::kLogSoftmax: {
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double v : z) s += std::exp(v - m);
      const double lse = m + std::log(s);
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
      break;
    }
  }
  return out;
}

}  // namespace

ParamVec& ParamVec::operator+=(const ParamVec& other) {
  check_same_size(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other[i];
  return *this;
}

ParamVec& ParamVec::operator-=(const ParamVec& other) {
  check_same_size(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other[i];
  return *this;
}

ParamVec& ParamVec::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

ParamVec& ParamVec::axpy(double s, const ParamVec& other) {
  check_same_size(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * other[i];
  return *this;
}

double ParamVec::dot(const ParamVec& other) const {
  check_same_size(*this, other);
  double acc = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) acc += values_[i] * other[i];
  return acc;
}

double ParamVec::norm() const { return std::sqrt(dot(*this)); }

bool ParamVec::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

ParamVec operator+(ParamVec a, const ParamVec& b) { return a += b; }
ParamVec operator-(ParamVec a, const ParamVec& b) { return a -= b; }
ParamVec operator*(double s, ParamVec a) { return a *= s; }
ParamVec operator*(ParamVec a, double s) { return a *= s; }

struct TapeAccess {
  static Tape record(const MlpSpec& spec, const ParamVec& params,
                     const Tensor& input) {
    Tape tape;
    tape.spec_ = spec;
    tape.params_ = params.values();
    const std::size_t layers = spec.num_layers();
    tape.layer_inputs_.reserve(layers);
    tape.pre_activations_.reserve(layers - 1);
    std::vector<double> x = input.data;
    std::vector<double> z;
    for (std::size_t l = 0; l < layers; ++l) {
      const double* w = tape.params_.data() + spec.layer_offset(l);
      affine(w, spec.layer_in(l), spec.layer_out(l), x, z);
      tape.layer_inputs_.push_back(std::move(x));
      if (l + 1 < layers) {
        x.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
          x[i] = activate(spec.activation, z[i]);
        }
        tape.pre_activations_.push_back(z);
      }
    }
    tape.logits_ = std::move(z);
    tape.output_ = apply_output_transform(spec.output_transform, tape.logits_);
    return tape;
  }

  static const std::vector<double>& output(const Tape& t) { return t.output_; }

  static ParamVec backward(Tape& tape, const Tensor& cot) {
    if (tape.consumed_) {
      throw UsageError("tape already consumed by a previous backward pass");
    }
    const MlpSpec& spec = tape.spec_;
    if (cot.size() != tape.output_.size()) {
      throw DimensionError("cotangent shape does not match network output");
    }
    tape.consumed_ = true;

    // Cotangent with respect to the final logits.
    std::vector<double> g(cot.data);
    switch (spec.output_transform) {
      case OutputTransform::kIdentity:
        break;
      case OutputTransform::kSigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = tape.output_[i];
          g[i] *= y * (1.0 - y);
        }
        break;
      case OutputTransform::kLogSoftmax: {
        const double total = std::accumulate(g.begin(), g.end(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] -= std::exp(tape.output_[i]) * total;
        }
        break;
      }
    }

    ParamVec grad(tape.params_.size());
    std::vector<double> g_prev;
    for (std::size_t l = spec.num_layers(); l-- > 0;) {
      const int in = spec.layer_in(l);
      const int out = spec.layer_out(l);
      const std::size_t off = spec.layer_offset(l);
      const double* w = tape.params_.data() + off;
      double* gw = grad.span().data() + off;
      double* gb = gw + static_cast<std::size_t>(out) * in;
      const std::vector<double>& x = tape.layer_inputs_[l];
      for (int o = 0; o < out; ++o) {
        double* row = gw + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) row[i] = g[o] * x[i];
        gb[o] = g[o];
      }
      if (l == 0) break;
      g_prev.assign(in, 0.0);
      for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) g_prev[i] += row[i] * g[o];
      }
      const std::vector<double>& z = tape.pre_activations_[l - 1];
      for (int i = 0; i < in; ++i) {
        g_prev[i] *= activate_deriv(spec.activation, z[i], x[i]);
      }
      g.swap(g_prev);
    }
    return grad;
  }
};

ForwardResult mlp_forward(const MlpSpec& spec, const ParamVec& params,
                          const Tensor& input) {
  check_inputs(spec, params, input);
  Tape tape = TapeAccess::record(spec, params, input);
  Tensor out = Tensor::vector(TapeAccess::output(tape));
  return {std::move(out), std::move(tape)};
}

Tensor mlp_eval(const MlpSpec& spec, const ParamVec& params,
                const Tensor& input) {
  check_inputs(spec, params, input);
  std::vector<double> x = input.data;
  std::vector<double> z;
  const std::size_t layers = spec.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    affine(params.span().data() + spec.layer_offset(l), spec.layer_in(l),
           spec.layer_out(l), x, z);
    if (l + 1 < layers) {
      x.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        x[i] = activate(spec.activation, z[i]);
      }
    }
  }
  return Tensor::vector(apply_output_transform(spec.output_transform, z));
}

namespace {
std::atomic<bool> g_backward_sign_fault{false};
}  // namespace

void set_backward_sign_fault(bool enabled) { g_backward_sign_fault = enabled; }
bool backward_sign_fault() { return g_backward_sign_fault; }

ParamVec backward(Tape& tape, const Tensor& output_cotangent) {
  ParamVec g = TapeAccess::backward(tape, output_cotangent);
  if (g_backward_sign_fault) g *= -1.0;
  return g;
}

ParamVec finite_diff_grad(const std::function<double(const ParamVec&)>& f,
                          const ParamVec& x, double h) {
  if (!(h > 0.0)) throw UsageError("finite difference step must be > 0");
  ParamVec grad(x.size());
  ParamVec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite function value in finite differences");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const ParamVec& a, const ParamVec& b, double floor) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

ParamVec init_params(const MlpSpec& spec, InitScheme scheme, Rng& rng) {
  spec.validate();
  ParamVec p(spec.param_count());
  if (scheme == InitScheme::kZero) return p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t off = spec.layer_offset(l);
    const std::size_t n =
        static_cast<std::size_t>(spec.layer_out(l)) * (spec.layer_in(l) + 1);
    const double sd = scheme == InitScheme::kFanIn
                          ? 1.0 / std::sqrt(static_cast<double>(spec.layer_in(l)))
                          : 1.0;
    for (std::size_t i = 0; i < n; ++i) p[off + i] = sd * rng.normal();
  }
  return p;
}

}  // namespace rlhf
