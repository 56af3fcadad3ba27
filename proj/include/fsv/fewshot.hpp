#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fsv/audio.hpp"
#include "fsv/network.hpp"
#include "fsv/tensor.hpp"

namespace fsv {

struct ManifestEntry {
  std::string speaker_id;
  std::string wav_path;  // as written; relative paths resolve against base_dir
  double duration_s = 0.0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  // Sorted, unique.
  std::vector<std::string> speakers() const;
  std::vector<const ManifestEntry*> entries_of(const std::string& speaker) const;
  std::filesystem::path resolve(const std::string& wav_path) const;
  // Unique paths, positive durations, non-empty speaker ids.
  void validate() const;
};

// UTF-8 CSV with header "speaker_id,wav_path,duration_s".
DatasetManifest read_manifest(const std::filesystem::path& path);
// Paths are rewritten relative to the destination directory.
void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest);
DatasetManifest rebase(const DatasetManifest& manifest,
                       const std::filesystem::path& new_base);

// Speaker-level split: round(train_fraction * speakers) speakers go to the
// train side, the rest to eval. Entry order is preserved within each side.
std::pair<DatasetManifest, DatasetManifest> split_dataset(
    const DatasetManifest& manifest, double train_fraction,
    std::mt19937_64& rng);

using AudioLoader = std::function<audio::WavClip(const std::filesystem::path&)>;

// Reads a 16 kHz PCM16 mono file.
audio::WavClip load_canonical_wav(const std::filesystem::path& path);

struct SupportSet {
  std::string speaker_id;
  std::vector<audio::WavClip> clips;
  std::vector<std::string> sources;  // manifest wav_path of each clip
};

// K distinct utterances of at least duration_s, one random clip from each.
SupportSet sample_support(const DatasetManifest& manifest,
                          const std::string& speaker_id, std::size_t k,
                          double duration_s, std::mt19937_64& rng,
                          const AudioLoader& load = load_canonical_wav);

struct TrialPair {
  std::string enroll_speaker;
  std::string probe_path;
  std::string probe_speaker;  // empty when read back from a trial file
  bool genuine = false;
};

struct TrialConfig {
  std::size_t per_speaker_probes = 10;
  double impostor_ratio = 1.0;
};

// For every speaker: per_speaker_probes genuine trials from its own
// utterances and round(impostor_ratio * per_speaker_probes) impostor trials
// from the other speakers' utterances. Paths in `excluded` never become
// probes. Pools smaller than the request are cycled in reshuffled passes.
std::vector<TrialPair> build_trials(const DatasetManifest& eval_manifest,
                                    const TrialConfig& config,
                                    std::mt19937_64& rng,
                                    const std::set<std::string>& excluded = {});

// "label enroll_speaker probe_path" lines, label 1 = genuine.
void write_trials(const std::filesystem::path& path,
                  const std::vector<TrialPair>& trials);
std::vector<TrialPair> read_trials(const std::filesystem::path& path);

// Unit-normalized centroid of the support embeddings (eval mode).
Tensor enroll(const EmbeddingNet& net, const SupportSet& support,
              const audio::Framing& framing);
Tensor enroll_embeddings(std::span<const Tensor> embeddings);

// -||enrolled - embed(probe)||, in [-2, 0]; higher is more likely genuine.
double verify(const EmbeddingNet& net, const Tensor& enrolled,
              const audio::Volume& probe);
double verification_score(const Tensor& enrolled, const Tensor& probe_embedding);

}  // namespace fsv
