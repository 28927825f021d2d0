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

#ifndef HPE_NETWORKS_HPP
#define HPE_NETWORKS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hpe/layers.hpp"
#include "hpe/ops.hpp"
#include "hpe/serialize.hpp"
#include "hpe/synthdata.hpp"
#include "hpe/tensor.hpp"

namespace hpe {

TensorPtr tensor_from_frame(const DepthFrame& f);
DepthFrame frame_from_tensor(const TensorPtr& t);
TensorPtr tensor_from_pose(const PoseVector& p);
PoseVector pose_from_tensor(const TensorPtr& t);

struct TrainingConfig {
  int batch_size = 64;
  int predictor_epochs = 30;
  int synth_epochs_per_stage = 30;
  int updater_epochs = 20;
  double predictor_lr = 0.01;
  double synth_lr = 0.01;
  double updater_lr = 0.001;
  double lr_decay = 0.95;
  double gamma = 0.001;   // weight decay, predictor objective only
  double lambda = 0.6;    // minimal-improvement factor of the hinge loss
  double rmsprop_decay = 0.9;
  double clip = 0.01;
  bool clip_by_norm = false;  // alternative reading of gradient truncation
  double epsilon = 1e-6;
  double sigma_noise = 0.1;   // Gaussian copies in the updater training set
  int copies = 2;             // Gaussian copies per seed pose
  int error_copies = 1;       // error-distribution poses per image per round
  int self_augment_period = 2;
  uint64_t seed = 1;

  void validate() const;
};

/// Depth frame -> initial pose. One conv block and two fully connected
/// layers; output is linear with 3*J neurons.
struct Predictor {
  int res = 0, joints = 0;
  TensorPtr conv_w, conv_b, fc1_w, fc1_b, out_w, out_b;

  static Predictor build(int res, int joints, Rng& rng);
  TensorPtr forward(Tape& tape, const TensorPtr& frame) const;
  PoseVector predict(const DepthFrame& frame) const;
  /// Inference for several frames at once. Numerically equivalent to predict
  /// per frame up to rounding: the fully connected layers run as one matrix
  /// product so their weights are read from memory once per batch.
  std::vector<PoseVector> predict_batch(
      const std::vector<DepthFrame>& frames) const;
  std::vector<std::pair<std::string, TensorPtr>> params() const;
  std::vector<LayerSpec> layers() const;
  Model to_model() const;
  static Predictor from_model(const Model& m);
};

/// Pose -> depth frame. Four fully connected layers to a 32x8x8 latent,
/// then one unpool+conv stage per resolution doubling, and a single-filter
/// combining convolution. Stage count is log2(res / 8).
struct Synthesizer {
  int res = 0, joints = 0, stages = 0;
  std::array<TensorPtr, 4> fc_w, fc_b;
  std::vector<TensorPtr> stage_w, stage_b;  // 32 filters 5x5, pad 2
  TensorPtr combine_w, combine_b;           // 1 filter 5x5, pad 2, linear

  static Synthesizer build(int res, int joints, Rng& rng);
  /// Runs the fully grown network; output is [res, res].
  TensorPtr forward(Tape& tape, const TensorPtr& pose) const;
  /// Runs only the first `active_stages` decoder blocks and a caller-supplied
  /// combining conv — the layer-wise training ladder.
  TensorPtr forward_partial(Tape& tape, const TensorPtr& pose,
                            int active_stages, const TensorPtr& cw,
                            const TensorPtr& cb) const;
  DepthFrame synthesize(const PoseVector& pose) const;
  /// Batched inference; see Predictor::predict_batch for the rationale.
  std::vector<DepthFrame> synthesize_batch(
      const std::vector<PoseVector>& poses) const;
  std::vector<std::pair<std::string, TensorPtr>> params() const;
  std::vector<LayerSpec> layers() const;
  Model to_model() const;
  static Synthesizer from_model(const Model& m);
};

/// (observed frame, synthesized frame) -> pose update. Two weight-shared
/// convolutional paths, concatenated and fed into a fully connected head.
struct Updater {
  int res = 0, joints = 0;
  std::array<TensorPtr, 4> conv_w, conv_b;  // shared by both paths
  TensorPtr fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b;

  static Updater build(int res, int joints, Rng& rng);
  TensorPtr path(Tape& tape, const TensorPtr& frame) const;
  TensorPtr forward(Tape& tape, const TensorPtr& input_frame,
                    const TensorPtr& synth_frame) const;
  PoseVector update(const DepthFrame& input, const DepthFrame& synth) const;
  /// Batched inference; see Predictor::predict_batch for the rationale.
  std::vector<PoseVector> update_batch(
      const std::vector<DepthFrame>& inputs,
      const std::vector<DepthFrame>& synths) const;
  std::vector<std::pair<std::string, TensorPtr>> params() const;
  static std::vector<LayerSpec> path_layers();
  Model to_model() const;
  static Updater from_model(const Model& m);
};

/// Box-average downsample; res must be divisible by factor.
DepthFrame box_downsample(const DepthFrame& f, int factor);

struct TrainResult {
  std::vector<double> loss_history;  // one entry per epoch
};

/// Minimizes sum ||pred(D) - p||^2 + gamma*||params||^2 with rmsprop
/// mini-batches. Deterministic given config.seed.
TrainResult train_predictor(const Dataset& data, const TrainingConfig& cfg,
                            Predictor& net);

/// Layer-wise synthesizer training: stage 0 fits the fully connected stack
/// through a temporary combining conv against 8x8 box-averaged targets; each
/// following stage appends one unpool+conv block plus a fresh combining conv
/// and retrains everything grown so far at the doubled resolution.
std::vector<std::vector<double>> train_synthesizer_layerwise(
    const Dataset& data, const TrainingConfig& cfg, Synthesizer& net);

/// Per training image: the seed poses the updater is trained to correct.
/// Entry 0 is always the ground truth.
struct UpdaterTrainingSet {
  std::vector<std::vector<PoseVector>> poses;  // indexed like the dataset

  size_t total() const {
    size_t n = 0;
    for (const auto& v : poses) n += v.size();
    return n;
  }
};

UpdaterTrainingSet build_updater_training_set(const Dataset& data,
                                              const Predictor& predictor,
                                              const TrainingConfig& cfg,
                                              Rng& rng);

/// Applies one updater step to every pose in the set and appends the results;
/// the set size doubles. `synth_cache`, when given, is kept in step with the
/// set so synthesized images are not recomputed.
void self_augment(UpdaterTrainingSet& set, const Updater& updater,
                  const Synthesizer& synth,
                  const std::vector<DepthFrame>& frames,
                  std::vector<std::vector<DepthFrame>>* synth_cache = nullptr);

/// Uniformly drawn residual from the pool of current errors.
PoseVector sample_error_distribution(const std::vector<PoseVector>& pool,
                                     Rng& rng);

/// Hinge loss max(0, ||p''-p|| - lambda*||p'-p||) over all (image, seed pose)
/// pairs, with the synthesizer frozen. Interleaves self-augmentation and
/// error-distribution injection every cfg.self_augment_period epochs.
TrainResult train_updater(UpdaterTrainingSet& set, const Dataset& data,
                          const Synthesizer& synth, const TrainingConfig& cfg,
                          Updater& net);

void write_loss_csv(const std::vector<double>& history,
                    const std::string& path);

}  // namespace hpe

#endif  // HPE_NETWORKS_HPP
