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

#include "hpe/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hpe {

namespace {

constexpr uint32_t kVersion = 1;

// The file format is little-endian; so are all platforms this builds on.
static_assert(sizeof(double) == 8);

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw SerializeError("unexpected end of stream");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& is, std::vector<double>& v) {
  if (!is.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw SerializeError("unexpected end of stream");
}

}  // namespace

const TensorPtr& Model::param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw SerializeError("model has no parameter named '" + name + "'");
}

void write_model(const Model& model, std::ostream& os) {
  os.write("HPNN", 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(model.descriptor.size()));
  os.write(model.descriptor.data(),
           static_cast<std::streamsize>(model.descriptor.size()));
  write_u32(os, static_cast<uint32_t>(model.params.size()));
  for (const auto& [name, t] : model.params) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t->shape.size()));
    for (int e : t->shape) write_u32(os, static_cast<uint32_t>(e));
    write_doubles(os, t->data);
  }
  if (!os) throw SerializeError("write failure");
}

Model read_model(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw SerializeError("unexpected end of stream");
  if (std::memcmp(magic, "HPNN", 4) != 0) throw SerializeError("bad magic");
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw SerializeError("unsupported HPNN version " + std::to_string(version));
  Model m;
  const uint32_t dlen = read_u32(is);
  m.descriptor.resize(dlen);
  if (dlen && !is.read(m.descriptor.data(), dlen))
    throw SerializeError("unexpected end of stream");
  const uint32_t nparams = read_u32(is);
  for (uint32_t i = 0; i < nparams; ++i) {
    const uint32_t nlen = read_u32(is);
    std::string name(nlen, '\0');
    if (nlen && !is.read(name.data(), nlen))
      throw SerializeError("unexpected end of stream");
    const uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    for (uint32_t r = 0; r < rank; ++r)
      shape[r] = static_cast<int>(read_u32(is));
    TensorPtr t = Tensor::make(shape);
    read_doubles(is, t->data);
    m.params.emplace_back(std::move(name), std::move(t));
  }
  return m;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SerializeError("cannot open '" + path + "' for writing");
  write_model(model, os);
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SerializeError("cannot open '" + path + "' for reading");
  return read_model(is);
}

}  // namespace hpe
