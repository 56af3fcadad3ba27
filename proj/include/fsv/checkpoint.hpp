#pragma once

// Checkpoint layout (all integers little-endian):
//   "VSPK" | u32 version | u64 metadata length | UTF-8 JSON metadata |
//   float32 blobs, concatenated in the order metadata["blobs"] lists them.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsv/losses.hpp"
#include "fsv/network.hpp"
#include "fsv/trainer.hpp"

namespace fsv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Blob {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  NetConfig net_config;
  TrainConfig train_config;
  std::size_t epoch = 0;
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<std::string> speakers;
  std::vector<Blob> blobs;  // network params, batchnorm buffers, head, centers

  const Blob& blob(const std::string& name) const;
};

// A network plus everything training produced, restored at 32-bit precision.
struct Model {
  NetConfig net_config;
  TrainConfig train_config;
  EmbeddingNet net;
  ClassifierHead head;
  CenterBank centers;
  std::vector<std::string> speakers;
};

Checkpoint make_checkpoint(const TrainResult& trained, const TrainConfig& config);
Model restore_model(const Checkpoint& checkpoint);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// Validates magic, version and every length before building anything.
// Throws FormatError, VersionError or TruncationError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const NetConfig& config);
NetConfig net_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace fsv
