#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fsv/audio.hpp"
#include "fsv/fewshot.hpp"
#include "fsv/losses.hpp"
#include "fsv/network.hpp"
#include "fsv/optimizer.hpp"

namespace fsv {

struct TrainConfig {
  std::size_t epochs = 90;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  double lambda = kCenterLossWeight;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double center_alpha = kCenterUpdateRate;
  double clip_seconds = 3.0;
  audio::Framing framing;

  void validate() const;
};

struct TrainingUtterance {
  std::size_t label = 0;
  audio::WavClip audio;
};

struct TrainingSet {
  std::vector<std::string> speakers;  // label i names speakers[i]
  std::vector<TrainingUtterance> utterances;
};

// Decodes every manifest entry once; labels follow sorted speaker ids.
TrainingSet load_training_set(const DatasetManifest& manifest,
                              const AudioLoader& load = load_canonical_wav);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossBreakdown loss;
  double train_accuracy = 0.0;
};

// Component means over the epoch's steps, with total recomputed from them.
struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  LossBreakdown loss;
  double train_accuracy = 0.0;
};

struct TrainResult {
  EmbeddingNet net;
  ClassifierHead head;
  CenterBank centers;
  std::vector<std::string> speakers;
  std::vector<EpochRecord> history;
};

using StepCallback = std::function<void(const StepRecord&)>;
using EpochCallback = std::function<void(const EpochRecord&)>;

// Seeded epochs of shuffle -> fixed-size batches (last partial batch dropped)
// -> forward -> combined loss -> backward -> optimizer step -> center update.
// Each utterance contributes a fresh random clip of clip_seconds per epoch.
// The network input shape is derived from clip_seconds and framing.
TrainResult train(const TrainingSet& data, const TrainConfig& config,
                  NetConfig net_config = {}, const StepCallback& on_step = {},
                  const EpochCallback& on_epoch = {});

NetConfig net_config_for(const TrainConfig& config, NetConfig base = {});

}  // namespace fsv
