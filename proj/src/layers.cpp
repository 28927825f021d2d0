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

#include "hpe/layers.hpp"

#include <sstream>
#include <stdexcept>

#include "hpe/tensor.hpp"

namespace hpe {

LayerSpec LayerSpec::conv(int filters, int size, int stride, int pad) {
  LayerSpec s;
  s.kind = Kind::Conv;
  s.filters = filters;
  s.filter_size = size;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec LayerSpec::fc(int neurons) {
  LayerSpec s;
  s.kind = Kind::FullyConnected;
  s.neurons = neurons;
  return s;
}

LayerSpec LayerSpec::max_pool(int window) {
  LayerSpec s;
  s.kind = Kind::MaxPool;
  s.window = window;
  return s;
}

LayerSpec LayerSpec::unpool(int factor) {
  LayerSpec s;
  s.kind = Kind::Unpool;
  s.factor = factor;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = Kind::Relu;
  return s;
}

LayerSpec LayerSpec::linear_identity() {
  LayerSpec s;
  s.kind = Kind::LinearIdentity;
  return s;
}

LayerSpec LayerSpec::reshape(std::vector<int> shape) {
  LayerSpec s;
  s.kind = Kind::Reshape;
  s.shape = std::move(shape);
  return s;
}

void LayerSpec::validate() const {
  switch (kind) {
    case Kind::Conv:
      if (stride < 1) throw ShapeError("conv stride must be >= 1");
      if (filters < 1 || filter_size < 1)
        throw ShapeError("conv needs positive filter count and size");
      break;
    case Kind::MaxPool:
      if (window < 2) throw ShapeError("max-pool window must be >= 2");
      break;
    case Kind::Unpool:
      if (factor < 2) throw ShapeError("unpool factor must be >= 2");
      break;
    case Kind::FullyConnected:
      if (neurons < 1) throw ShapeError("fully-connected needs neurons >= 1");
      break;
    default:
      break;
  }
}

std::vector<int> LayerSpec::output_shape(const std::vector<int>& in) const {
  validate();
  switch (kind) {
    case Kind::Conv: {
      if (in.size() != 3) throw ShapeError("conv input must be rank 3");
      const int h = (in[1] + 2 * pad - filter_size) / stride + 1;
      const int w = (in[2] + 2 * pad - filter_size) / stride + 1;
      if (h < 1 || w < 1)
        throw ShapeError("conv output collapses for input " + shape_str(in));
      return {filters, h, w};
    }
    case Kind::MaxPool: {
      if (in.size() != 3) throw ShapeError("max-pool input must be rank 3");
      if (in[1] % window != 0 || in[2] % window != 0)
        throw ShapeError("max-pool extents not divisible by window");
      return {in[0], in[1] / window, in[2] / window};
    }
    case Kind::Unpool:
      if (in.size() != 3) throw ShapeError("unpool input must be rank 3");
      return {in[0], in[1] * factor, in[2] * factor};
    case Kind::FullyConnected:
      return {neurons};
    case Kind::Reshape: {
      int n = 1, m = 1;
      for (int e : in) n *= e;
      for (int e : shape) m *= e;
      if (n != m) throw ShapeError("reshape changes element count");
      return shape;
    }
    case Kind::Relu:
    case Kind::LinearIdentity:
      return in;
    case Kind::Concat:
      throw ShapeError("concat output shape needs two inputs");
  }
  throw ShapeError("unknown layer kind");
}

std::string to_string(const LayerSpec& s) {
  std::ostringstream os;
  switch (s.kind) {
    case LayerSpec::Kind::Conv:
      os << "conv filters=" << s.filters << " size=" << s.filter_size
         << " stride=" << s.stride << " pad=" << s.pad;
      break;
    case LayerSpec::Kind::FullyConnected:
      os << "fc neurons=" << s.neurons;
      break;
    case LayerSpec::Kind::MaxPool:
      os << "maxpool window=" << s.window;
      break;
    case LayerSpec::Kind::Unpool:
      os << "unpool factor=" << s.factor;
      break;
    case LayerSpec::Kind::Relu:
      os << "relu";
      break;
    case LayerSpec::Kind::LinearIdentity:
      os << "linear";
      break;
    case LayerSpec::Kind::Reshape:
      os << "reshape shape=";
      for (size_t i = 0; i < s.shape.size(); ++i)
        os << (i ? "x" : "") << s.shape[i];
      break;
    case LayerSpec::Kind::Concat:
      os << "concat";
      break;
  }
  return os.str();
}

LayerSpec parse_layer(const std::string& line) {
  std::istringstream is(line);
  std::string kind;
  is >> kind;
  auto get_kv = [&is](const std::string& key) {
    std::string tok;
    if (!(is >> tok) || tok.rfind(key + "=", 0) != 0)
      throw ShapeError("layer descriptor: expected " + key + "=...");
    return tok.substr(key.size() + 1);
  };
  if (kind == "conv") {
    int f = std::stoi(get_kv("filters"));
    int sz = std::stoi(get_kv("size"));
    int st = std::stoi(get_kv("stride"));
    int pd = std::stoi(get_kv("pad"));
    return LayerSpec::conv(f, sz, st, pd);
  }
  if (kind == "fc") return LayerSpec::fc(std::stoi(get_kv("neurons")));
  if (kind == "maxpool")
    return LayerSpec::max_pool(std::stoi(get_kv("window")));
  if (kind == "unpool") return LayerSpec::unpool(std::stoi(get_kv("factor")));
  if (kind == "relu") return LayerSpec::relu();
  if (kind == "linear") return LayerSpec::linear_identity();
  if (kind == "concat") {
    LayerSpec s;
    s.kind = LayerSpec::Kind::Concat;
    return s;
  }
  if (kind == "reshape") {
    std::string val = get_kv("shape");
    std::vector<int> shape;
    std::istringstream vs(val);
    std::string part;
    while (std::getline(vs, part, 'x')) shape.push_back(std::stoi(part));
    return LayerSpec::reshape(shape);
  }
  throw ShapeError("unknown layer kind in descriptor: " + kind);
}

}  // namespace hpe
