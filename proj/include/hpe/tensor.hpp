// Copyright 2026 The handloop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HPE_TENSOR_HPP
#define HPE_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hpe {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense n-dimensional array of 64-bit scalars, row-major, with an optional
/// same-shape gradient accumulator.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation

  int numel() const {
    int n = 1;
    for (int e : shape) n *= e;
    return n;
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  }

  static TensorPtr make(std::vector<int> shape, bool requires_grad = false);
  static TensorPtr from_data(std::vector<int> shape, std::vector<double> data,
                             bool requires_grad = false);
  static TensorPtr scalar(double v, bool requires_grad = false);
};

/// Append-only record of a single forward pass. Nodes are replayed in reverse
/// insertion order; a tensor consumed k times receives the sum of k gradient
/// contributions. Intermediate (op-output) gradients are released after
/// backward so parameter gradients accumulate correctly across passes.
class Tape {
 public:
  Tape() = default;

  /// A disabled tape records nothing; ops skip gradient bookkeeping even for
  /// requires_grad inputs. Used on inference-only paths.
  static Tape inference() { return Tape(false); }

  bool grad_enabled() const { return grad_enabled_; }

  void record(std::function<void()> back, TensorPtr output) {
    nodes_.push_back(std::move(back));
    outputs_.push_back(std::move(output));
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad tensor
  /// reachable from the loss. Throws if loss is not a scalar on this tape.
  void backward(const TensorPtr& loss);

  void clear() {
    nodes_.clear();
    outputs_.clear();
  }

  size_t size() const { return nodes_.size(); }

 private:
  explicit Tape(bool enabled) : grad_enabled_(enabled) {}

  bool grad_enabled_ = true;
  std::vector<std::function<void()>> nodes_;
  std::vector<TensorPtr> outputs_;
};

/// Deterministic, portable RNG. Uniform doubles come from the top 53 bits of
/// an xorshift-mixed 64-bit state; normals via Box-Muller with a cached spare.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  /// Independent stream derived from (seed, index); used so parallel and
  /// serial dataset generation agree record-by-record.
  static Rng stream(uint64_t seed, uint64_t index);

  uint64_t next_u64();
  double uniform();                     // [0, 1)
  double uniform(double a, double b);   // [a, b)
  double normal();                      // standard normal
  size_t index(size_t n);               // uniform integer in [0, n)

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Thrown on shape mismatches and contract violations in forward ops.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(const std::vector<int>& shape);

}  // namespace hpe

#endif  // HPE_TENSOR_HPP
