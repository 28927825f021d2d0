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

#ifndef HPE_SERIALIZE_HPP
#define HPE_SERIALIZE_HPP

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe {

/// Architecture descriptor plus named parameters — what the HPNN model file
/// carries. Round-trips bit-exactly.
struct Model {
  std::string descriptor;
  std::vector<std::pair<std::string, TensorPtr>> params;

  const TensorPtr& param(const std::string& name) const;
};

struct SerializeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// HPNN: magic "HPNN", version u32 LE, descriptor length u32 + UTF-8 text,
// then per parameter: name length u32, name, rank u32, extents u32 each,
// raw little-endian 64-bit scalars.
void write_model(const Model& model, std::ostream& os);
Model read_model(std::istream& is);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace hpe

#endif  // HPE_SERIALIZE_HPP
