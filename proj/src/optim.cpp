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

#include "hpe/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hpe {

double LrSchedule::lr(int epoch) const {
  if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
  return initial_lr * std::pow(decay_factor, epoch);
}

RmsProp::RmsProp(std::vector<std::pair<std::string, TensorPtr>> params,
                 double decay, double clip, double epsilon, bool clip_by_norm)
    : params_(std::move(params)),
      decay_(decay),
      clip_(clip),
      epsilon_(epsilon),
      clip_by_norm_(clip_by_norm) {
  mean_square_.reserve(params_.size());
  for (const auto& [name, t] : params_)
    mean_square_.emplace_back(t->data.size(), 0.0);
}

void RmsProp::step(double lr) {
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto& [name, t] = params_[pi];
    if (t->grad.empty()) continue;  // parameter untouched this pass
    auto& ms = mean_square_[pi];
    double norm_scale = 1.0;
    if (clip_by_norm_) {
      double acc = 0.0;
      for (double g : t->grad) acc += g * g;
      const double norm = std::sqrt(acc);
      if (norm > clip_) norm_scale = clip_ / norm;
    }
    for (size_t i = 0; i < t->data.size(); ++i) {
      double g = t->grad[i];
      if (std::isnan(g))
        throw std::runtime_error("NaN gradient in parameter '" + name + "'");
      if (clip_by_norm_)
        g *= norm_scale;
      else
        g = std::clamp(g, -clip_, clip_);
      ms[i] = decay_ * ms[i] + (1.0 - decay_) * g * g;
      t->data[i] -= lr * g / std::sqrt(ms[i] + epsilon_);
    }
    t->zero_grad();
  }
}

void apply_weight_decay(const TensorPtr& param, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
  if (gamma == 0.0) return;
  param->ensure_grad();
  for (size_t i = 0; i < param->data.size(); ++i)
    param->grad[i] += 2.0 * gamma * param->data[i];
}

}  // namespace hpe
