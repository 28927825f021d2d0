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

#include "hpe/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hpe {

TensorPtr Tensor::make(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(t->numel(), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  t->requires_grad = requires_grad;
  if (static_cast<int>(t->data.size()) != t->numel())
    throw ShapeError("tensor data length " + std::to_string(t->data.size()) +
                     " does not match shape " + shape_str(t->shape));
  return t;
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

void Tape::backward(const TensorPtr& loss) {
  if (loss->numel() != 1)
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_str(loss->shape));
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (size_t i = nodes_.size(); i-- > 0;) nodes_[i]();
  // Release intermediate gradients: only leaf (parameter/input) tensors keep
  // their accumulators across passes.
  for (auto& out : outputs_) out->grad.clear();
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace {
inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

Rng::Rng(uint64_t seed) : state_(seed) {
  // Warm the state so small seeds do not produce correlated early outputs.
  splitmix64(state_);
}

Rng Rng::stream(uint64_t seed, uint64_t index) {
  uint64_t s = seed;
  uint64_t a = splitmix64(s);
  uint64_t b = index + 0x632be59bd9b4e019ULL;
  return Rng(a ^ splitmix64(b));
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0, u2 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

size_t Rng::index(size_t n) {
  return static_cast<size_t>(
      (static_cast<__uint128_t>(next_u64()) * n) >> 64);
}

}  // namespace hpe
