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

#ifndef HPE_OPS_HPP
#define HPE_OPS_HPP

#include <functional>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe {

// All ops are pure in their inputs and record a backward closure on the tape
// whenever any input requires a gradient.

/// Valid convolution with optional symmetric zero-border extension.
/// input [C,H,W], filters [K,C,h,w], bias [K]; output [K,H',W'] with
/// H' = floor((H + 2*pad - h) / stride) + 1.
TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& filters,
                 const TensorPtr& bias, int stride, int pad = 0);

/// Zero-fill upscale by `factor` followed by a 5x5 stride-1 convolution with
/// pad 2. Mathematically identical to conv2d(unpool2d(input, factor), ...)
/// but skips the zero taps (the decoder's hot path).
TensorPtr unpool_conv2d(Tape& tape, const TensorPtr& input,
                        const TensorPtr& filters, const TensorPtr& bias,
                        int factor);

/// Window max with ties broken to the first element in row-major scan order.
/// H and W must be divisible by `window`. If `argmax_out` is non-null it
/// receives the flat input index of each window winner.
TensorPtr max_pool2d(Tape& tape, const TensorPtr& input, int window,
                     std::vector<int>* argmax_out = nullptr);

/// Places input (y,x) at output (y*factor, x*factor); everything else zero.
TensorPtr unpool2d(Tape& tape, const TensorPtr& input, int factor);

/// Affine map: weights [m,n] * input [n] + bias [m].
TensorPtr fully_connected(Tape& tape, const TensorPtr& input,
                          const TensorPtr& weights, const TensorPtr& bias);

TensorPtr relu(Tape& tape, const TensorPtr& input);

/// Clamps `input` itself and returns it; valid only when `input` is the
/// fresh output of another op with no other consumers. Saves the copy on
/// large activation maps.
TensorPtr relu_inplace(Tape& tape, const TensorPtr& input);

/// Concatenation along axis 0; remaining extents must agree.
TensorPtr concat(Tape& tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr reshape(Tape& tape, const TensorPtr& input, std::vector<int> shape);

/// Mean squared error: sum((a-b)^2) / numel.
TensorPtr mse(Tape& tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape& tape, const TensorPtr& a, double c);
TensorPtr sum(Tape& tape, const TensorPtr& a);
TensorPtr sum_squares(Tape& tape, const TensorPtr& a);

/// Euclidean norm; gradient at the origin is defined as zero.
TensorPtr l2_norm(Tape& tape, const TensorPtr& a);

/// Central-difference check of d(f)/d(x). `f` must rebuild its forward pass
/// from scratch on the tape it is given and return a scalar. Returns
/// max over coordinates of |analytic - numeric| / max(1, |analytic|).
double finite_diff_check(const std::function<TensorPtr(Tape&)>& f,
                         const TensorPtr& x, double step);

/// Uniform fan-based initialization: weights in [-s, s] with
/// s = sqrt(6 / (fan_in + fan_out)); biases stay zero.
void init_uniform(Tensor& weights, int fan_in, int fan_out, Rng& rng);

}  // namespace hpe

#endif  // HPE_OPS_HPP
