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

#ifndef HPE_OPTIM_HPP
#define HPE_OPTIM_HPP

#include <string>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe {

/// Per-epoch geometric learning-rate decay.
struct LrSchedule {
  double initial_lr = 0.01;
  double decay_factor = 0.95;

  double lr(int epoch) const;
};

/// Rmsprop with element-wise gradient truncation. Gradients are clamped to
/// [-clip, +clip] before entering the mean-square accumulator. When
/// clip_by_norm is set, the whole gradient vector of a parameter is rescaled
/// to norm <= clip instead.
class RmsProp {
 public:
  RmsProp(std::vector<std::pair<std::string, TensorPtr>> params,
          double decay = 0.9, double clip = 0.01, double epsilon = 1e-6,
          bool clip_by_norm = false);

  /// Applies one update from the gradients currently accumulated on the
  /// parameters, then zeroes them. Throws on NaN gradients, naming the
  /// offending parameter.
  void step(double lr);

  double decay() const { return decay_; }
  double clip() const { return clip_; }
  double epsilon() const { return epsilon_; }
  const std::vector<std::vector<double>>& mean_square() const {
    return mean_square_;
  }

 private:
  std::vector<std::pair<std::string, TensorPtr>> params_;
  std::vector<std::vector<double>> mean_square_;
  double decay_, clip_, epsilon_;
  bool clip_by_norm_;
};

/// Adds the weight-decay gradient 2*gamma*param in place (gradient of
/// gamma*||params||^2). Used by the predictor objective only.
void apply_weight_decay(const TensorPtr& param, double gamma);

}  // namespace hpe

#endif  // HPE_OPTIM_HPP
