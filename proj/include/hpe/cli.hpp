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

#ifndef HPE_CLI_HPP
#define HPE_CLI_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "hpe/feedback.hpp"
#include "hpe/networks.hpp"

namespace hpe {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key=value run configuration. Unknown keys are rejected; every command
/// writes the fully resolved configuration next to its outputs.
struct RunConfig {
  // paths
  std::string data, test_data, models, out, pred;
  // data generation
  int res = 64;
  int joints = 14;
  int count = 500;
  int test_count = 500;
  double half_extent = 150.0;
  int with_noise = 1;
  // training
  TrainingConfig train;
  // feedback loop
  int iterations = 2;
  // image-space baseline
  BaselineConfig baseline;
  int baseline_frames = 50;  // compare-baseline frame budget, 0 = all
  // inference
  int bench = 0;

  /// Throws ConfigError naming the key on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Parses a key=value file; '#' starts a comment line.
  void load_file(const std::string& path);
  /// All keys with their resolved values, sorted, one per line.
  std::string to_text() const;
};

/// Exit codes: 0 success, 2 malformed config, 3 missing input file,
/// 4 internal error.
int cli_main(int argc, const char* const* argv);

/// Convenience overload for tests.
int cli_main(const std::vector<std::string>& args);

}  // namespace hpe

#endif  // HPE_CLI_HPP
