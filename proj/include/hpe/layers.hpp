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

#ifndef HPE_LAYERS_HPP
#define HPE_LAYERS_HPP

#include <string>
#include <vector>

namespace hpe {

/// The layer vocabulary shared by the three networks. Output shape is a pure
/// function of input shape and parameters.
struct LayerSpec {
  enum class Kind {
    Conv,            // filters, filter_size, stride, pad
    FullyConnected,  // neurons
    MaxPool,         // window
    Unpool,          // factor
    Relu,
    LinearIdentity,
    Reshape,         // shape
    Concat,
  };

  Kind kind = Kind::Relu;
  int filters = 0;
  int filter_size = 0;
  int stride = 1;
  int pad = 0;
  int window = 0;
  int factor = 0;
  int neurons = 0;
  std::vector<int> shape;

  static LayerSpec conv(int filters, int size, int stride = 1, int pad = 0);
  static LayerSpec fc(int neurons);
  static LayerSpec max_pool(int window);
  static LayerSpec unpool(int factor);
  static LayerSpec relu();
  static LayerSpec linear_identity();
  static LayerSpec reshape(std::vector<int> shape);

  /// Throws ShapeError when parameters violate the layer contracts
  /// (conv stride >= 1, pool window >= 2, unpool factor >= 2, ...).
  void validate() const;

  std::vector<int> output_shape(const std::vector<int>& input) const;
};

std::string to_string(const LayerSpec& spec);
LayerSpec parse_layer(const std::string& line);

}  // namespace hpe

#endif  // HPE_LAYERS_HPP
