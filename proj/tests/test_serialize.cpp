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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sstream>

#include "doctest.h"
#include "hpe/networks.hpp"
#include "hpe/serialize.hpp"
#include "hpe/tensor.hpp"

using namespace hpe;

namespace {

Model sample_model(uint64_t seed) {
  Model m;
  m.descriptor = "network=test\nres=8\njoints=2\n";
  Rng rng(seed);
  TensorPtr w = Tensor::make({3, 4});
  for (double& v : w->data) v = rng.uniform(-1, 1);
  TensorPtr b = Tensor::make({3});
  b->data[1] = -0.0;  // negative zero must survive the round trip
  m.params.emplace_back("w", w);
  m.params.emplace_back("b", b);
  return m;
}

std::string to_bytes(const Model& m) {
  std::ostringstream os(std::ios::binary);
  write_model(m, os);
  return os.str();
}

Model from_bytes(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_model(is);
}

}  // namespace

TEST_CASE("model round-trip preserves descriptor and parameters bit-exactly") {
  Model m = sample_model(5);
  Model back = from_bytes(to_bytes(m));
  CHECK(back.descriptor == m.descriptor);
  REQUIRE(back.params.size() == m.params.size());
  for (size_t i = 0; i < m.params.size(); ++i) {
    CHECK(back.params[i].first == m.params[i].first);
    CHECK(back.params[i].second->shape == m.params[i].second->shape);
    CHECK(back.params[i].second->data == m.params[i].second->data);
  }
  CHECK(std::signbit(back.param("b")->data[1]));
}

TEST_CASE("serialization is byte-deterministic") {
  CHECK(to_bytes(sample_model(5)) == to_bytes(sample_model(5)));
}

TEST_CASE("corrupted magic is rejected") {
  std::string bytes = to_bytes(sample_model(5));
  bytes[0] = 'X';
  CHECK_THROWS_WITH_AS(from_bytes(bytes), "bad magic", SerializeError);
}

TEST_CASE("unsupported version is rejected distinctly") {
  std::string bytes = to_bytes(sample_model(5));
  bytes[4] = 99;
  CHECK_THROWS_WITH_AS(from_bytes(bytes), doctest::Contains("version"),
                       SerializeError);
}

TEST_CASE("truncated blobs are rejected at any cut point") {
  const std::string bytes = to_bytes(sample_model(5));
  for (size_t cut : {size_t{2}, size_t{6}, bytes.size() / 2,
                     bytes.size() - 1}) {
    CHECK_THROWS_WITH_AS(from_bytes(bytes.substr(0, cut)),
                         "unexpected end of stream", SerializeError);
  }
}

TEST_CASE("missing parameter lookups name the parameter") {
  Model m = sample_model(5);
  CHECK_THROWS_WITH_AS(m.param("nope"), doctest::Contains("nope"),
                       SerializeError);
}

TEST_CASE("a reloaded predictor reproduces forward outputs bit-identically") {
  Rng rng(9);
  Predictor net = Predictor::build(32, 5, rng);
  Predictor back = Predictor::from_model(from_bytes(to_bytes(net.to_model())));
  DepthFrame frame(32);
  Rng frng(10);
  for (double& v : frame.v) v = frng.uniform(-1, 1);
  CHECK(net.predict(frame) == back.predict(frame));
}

TEST_CASE("a reloaded decoder reproduces forward outputs bit-identically") {
  Rng rng(11);
  Synthesizer net = Synthesizer::build(32, 5, rng);
  Synthesizer back =
      Synthesizer::from_model(from_bytes(to_bytes(net.to_model())));
  PoseVector pose(15, 0.25);
  CHECK(net.synthesize(pose).v == back.synthesize(pose).v);
}

TEST_CASE("a reloaded corrector reproduces forward outputs bit-identically") {
  Rng rng(13);
  Updater net = Updater::build(64, 14, rng);
  Updater back = Updater::from_model(from_bytes(to_bytes(net.to_model())));
  Rng frng(14);
  DepthFrame a(64), b(64);
  for (double& v : a.v) v = frng.uniform(-1, 1);
  for (double& v : b.v) v = frng.uniform(-1, 1);
  CHECK(net.update(a, b) == back.update(a, b));
}

TEST_CASE("file save and load round-trips through disk") {
  Model m = sample_model(21);
  const std::string path = "serialize_roundtrip.hpnn";
  save_model(m, path);
  Model back = load_model(path);
  CHECK(back.descriptor == m.descriptor);
  CHECK(back.param("w")->data == m.param("w")->data);
  std::remove(path.c_str());
}

TEST_CASE("reading a missing file is a distinct error") {
  CHECK_THROWS_WITH_AS(load_model("does_not_exist.hpnn"),
                       doctest::Contains("cannot open"), SerializeError);
}
