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

#ifndef RLHF_DIFFCORE_H_
#define RLHF_DIFFCORE_H_

// Dense multilayer perceptrons with a hand-written reverse pass.
//
// Parameter packing (ParamVec layout) is layer-major: for each affine layer,
// the weight matrix [out][in] in row-major order, followed by the bias [out].
// Hidden layers apply the configured activation; the final layer applies the
// output transform.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rlhf {

class Rng;

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  // Rank-1 tensor owning `values`.
  static Tensor vector(std::vector<double> values);
  static Tensor zeros(std::vector<std::size_t> shape);

  std::size_t size() const { return data.size(); }
  double operator[](std::size_t i) const { return data[i]; }
  double& operator[](std::size_t i) { return data[i]; }

  bool operator==(const Tensor&) const = default;
};

enum class Activation { kTanh, kRelu };
enum class OutputTransform { kIdentity, kSigmoid, kLogSoftmax };

std::string to_string(Activation a);
std::string to_string(OutputTransform t);
Activation parse_activation(const std::string& s);
OutputTransform parse_output_transform(const std::string& s);

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_widths;
  Activation activation = Activation::kTanh;
  int output_dim = 1;
  OutputTransform output_transform = OutputTransform::kIdentity;

  // Throws DimensionError if any dimension is < 1 or a log-softmax head has
  // fewer than two outputs.
  void validate() const;

  std::size_t num_layers() const { return hidden_widths.size() + 1; }
  // Fan-in and fan-out of affine layer `l`.
  int layer_in(std::size_t l) const;
  int layer_out(std::size_t l) const;
  std::size_t param_count() const;
  // Offset of layer `l`'s weight block inside a ParamVec.
  std::size_t layer_offset(std::size_t l) const;

  bool operator==(const MlpSpec&) const = default;
};

// Flat float64 parameter vector. Arithmetic is element-wise and checks sizes.
class ParamVec {
 public:
  ParamVec() = default;
  explicit ParamVec(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit ParamVec(std::vector<double> values) : values_(std::move(values)) {}
  ParamVec(std::initializer_list<double> values) : values_(values) {}

  static ParamVec zeros(std::size_t n) { return ParamVec(n); }

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> span() const { return values_; }
  std::span<double> span() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  ParamVec& operator+=(const ParamVec& other);
  ParamVec& operator-=(const ParamVec& other);
  ParamVec& operator*=(double s);
  // this += s * other
  ParamVec& axpy(double s, const ParamVec& other);

  double dot(const ParamVec& other) const;
  double norm() const;
  bool all_finite() const;

  bool operator==(const ParamVec&) const = default;

 private:
  std::vector<double> values_;
};

ParamVec operator+(ParamVec a, const ParamVec& b);
ParamVec operator-(ParamVec a, const ParamVec& b);
ParamVec operator*(double s, ParamVec a);
ParamVec operator*(ParamVec a, double s);

// Intermediate values of one forward pass. A tape supports exactly one
// backward pass.
class Tape {
 public:
  bool consumed() const { return consumed_; }

 private:
  friend struct TapeAccess;
  MlpSpec spec_;
  std::vector<double> params_;
  // layer_inputs_[l] is the input to affine layer l (x for l = 0).
  std::vector<std::vector<double>> layer_inputs_;
  // Pre-activation of each hidden layer.
  std::vector<std::vector<double>> pre_activations_;
  // Final affine output before the output transform, and after it.
  std::vector<double> logits_;
  std::vector<double> output_;
  bool consumed_ = false;
};

struct ForwardResult {
  Tensor output;
  Tape tape;
};

// Evaluates the network. Throws DimensionError when the input or parameter
// sizes disagree with `spec`.
ForwardResult mlp_forward(const MlpSpec& spec, const ParamVec& params,
                          const Tensor& input);

// Output only; skips recording.
Tensor mlp_eval(const MlpSpec& spec, const ParamVec& params,
                const Tensor& input);

// Gradient of <output_cotangent, output> with respect to the parameters.
// Throws UsageError if the tape was already consumed and DimensionError on a
// cotangent of the wrong shape.
ParamVec backward(Tape& tape, const Tensor& output_cotangent);

// Fault-injection hook for mutation testing of the verifier: while enabled,
// backward returns the negated gradient. Off by default.
void set_backward_sign_fault(bool enabled);
bool backward_sign_fault();

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
// Throws NumericError if f returns a non-finite value.
ParamVec finite_diff_grad(const std::function<double(const ParamVec&)>& f,
                          const ParamVec& x, double h);

// ||a - b|| / max(||b||, floor); the relative error used by gradient checks.
double relative_error(const ParamVec& a, const ParamVec& b,
                      double floor = 1e-12);

enum class InitScheme {
  kZero,
  kFanIn,           // N(0, 1/fan_in) for weights and biases of a layer
  kStandardNormal,  // N(0, 1) for every entry
};

ParamVec init_params(const MlpSpec& spec, InitScheme scheme, Rng& rng);

}  // namespace rlhf

#endif  // RLHF_DIFFCORE_H_
