#include "fsv/fewshot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "fsv/errors.hpp"
#include "fsv/fileio.hpp"

namespace fsv {

namespace {

constexpr const char* kManifestHeader = "speaker_id,wav_path,duration_s";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

// Draws `count` items from pool in successive reshuffled passes.
std::vector<std::size_t> draw_cycling(std::size_t pool, std::size_t count,
                                      std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  std::vector<std::size_t> order(pool);
  while (out.size() < count) {
    for (std::size_t i = 0; i < pool; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < pool && out.size() < count; ++i) {
      out.push_back(order[i]);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> DatasetManifest::speakers() const {
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.speaker_id);
  return {ids.begin(), ids.end()};
}

std::vector<const ManifestEntry*> DatasetManifest::entries_of(
    const std::string& speaker) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.speaker_id == speaker) out.push_back(&e);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const std::string& wav_path) const {
  const std::filesystem::path p(wav_path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.speaker_id.empty()) throw FormatError("manifest entry without speaker_id");
    if (!(e.duration_s > 0.0)) {
      throw FormatError("manifest entry " + e.wav_path +
                        " has non-positive duration");
    }
    if (!seen.insert(e.wav_path).second) {
      throw FormatError("manifest lists " + e.wav_path + " more than once");
    }
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("manifest not found: " + path.string());
  }
  std::istringstream in(read_file_text(path));
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader) {
    throw FormatError(path.string() + ": expected header '" + kManifestHeader + "'");
  }
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 3 comma-separated fields");
    }
    double duration = 0.0;
    const auto& d = fields[2];
    const auto res = std::from_chars(d.data(), d.data() + d.size(), duration);
    if (res.ec != std::errc() || res.ptr != d.data() + d.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": bad duration '" + d + "'");
    }
    manifest.entries.push_back({fields[0], fields[1], duration});
  }
  manifest.validate();
  return manifest;
}

DatasetManifest rebase(const DatasetManifest& manifest,
                       const std::filesystem::path& new_base) {
  DatasetManifest out;
  out.base_dir = new_base;
  const auto base_abs = std::filesystem::absolute(new_base).lexically_normal();
  for (const auto& e : manifest.entries) {
    const auto abs =
        std::filesystem::absolute(manifest.resolve(e.wav_path)).lexically_normal();
    auto rel = abs.lexically_relative(base_abs);
    ManifestEntry copy = e;
    copy.wav_path = rel.empty() ? abs.generic_string() : rel.generic_string();
    out.entries.push_back(std::move(copy));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest) {
  const DatasetManifest local = rebase(manifest, path.parent_path());
  std::string text = std::string(kManifestHeader) + "\n";
  for (const auto& e : local.entries) {
    if (e.speaker_id.find(',') != std::string::npos ||
        e.wav_path.find(',') != std::string::npos) {
      throw FormatError("manifest fields may not contain commas: " + e.wav_path);
    }
    text += e.speaker_id + "," + e.wav_path + "," + format_double(e.duration_s) + "\n";
  }
  write_file_atomic(path, text);
}

std::pair<DatasetManifest, DatasetManifest> split_dataset(
    const DatasetManifest& manifest, double train_fraction,
    std::mt19937_64& rng) {
  std::vector<std::string> speakers = manifest.speakers();
  if (speakers.size() < 2) {
    throw ContractError("splitting needs at least 2 speakers, manifest has " +
                        std::to_string(speakers.size()));
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("train fraction must lie in (0, 1)");
  }
  std::shuffle(speakers.begin(), speakers.end(), rng);
  auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(speakers.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, speakers.size() - 1);
  const std::set<std::string> train_ids(speakers.begin(), speakers.begin() + n_train);

  std::pair<DatasetManifest, DatasetManifest> out;
  out.first.base_dir = manifest.base_dir;
  out.second.base_dir = manifest.base_dir;
  for (const auto& e : manifest.entries) {
    (train_ids.count(e.speaker_id) ? out.first : out.second).entries.push_back(e);
  }
  return out;
}

audio::WavClip load_canonical_wav(const std::filesystem::path& path) {
  audio::WavClip clip = audio::read_wav_file(path);
  try {
    audio::require_canonical_rate(clip);
  } catch (const UnsupportedFormatError& e) {
    throw UnsupportedFormatError(path.string() + ": " + e.what());
  }
  return clip;
}

SupportSet sample_support(const DatasetManifest& manifest,
                          const std::string& speaker_id, std::size_t k,
                          double duration_s, std::mt19937_64& rng,
                          const AudioLoader& load) {
  if (k == 0) throw ContractError("support sets need at least one shot");
  std::vector<const ManifestEntry*> usable;
  for (const ManifestEntry* e : manifest.entries_of(speaker_id)) {
    if (e->duration_s >= duration_s) usable.push_back(e);
  }
  if (usable.size() < k) {
    throw InsufficientDataError(
        "speaker '" + speaker_id + "' has " + std::to_string(usable.size()) +
        " utterances of at least " + std::to_string(duration_s) + " s, need " +
        std::to_string(k));
  }
  std::shuffle(usable.begin(), usable.end(), rng);
  SupportSet support;
  support.speaker_id = speaker_id;
  for (std::size_t i = 0; i < k; ++i) {
    const audio::WavClip full = load(manifest.resolve(usable[i]->wav_path));
    support.clips.push_back(audio::extract_clip(full, duration_s, rng));
    support.sources.push_back(usable[i]->wav_path);
  }
  return support;
}

std::vector<TrialPair> build_trials(const DatasetManifest& eval_manifest,
                                    const TrialConfig& config,
                                    std::mt19937_64& rng,
                                    const std::set<std::string>& excluded) {
  const std::vector<std::string> speakers = eval_manifest.speakers();
  if (speakers.size() < 2) {
    throw ContractError("cannot build impostor trials with " +
                        std::to_string(speakers.size()) + " eval speaker(s)");
  }
  if (config.impostor_ratio < 0.0) {
    throw ContractError("impostor ratio must be non-negative");
  }
  std::map<std::string, std::vector<const ManifestEntry*>> pools;
  for (const auto& e : eval_manifest.entries) {
    if (!excluded.count(e.wav_path)) pools[e.speaker_id].push_back(&e);
  }
  const auto impostors = static_cast<std::size_t>(std::llround(
      config.impostor_ratio * static_cast<double>(config.per_speaker_probes)));

  std::vector<TrialPair> trials;
  for (const auto& speaker : speakers) {
    const auto& own = pools[speaker];
    if (own.empty() && config.per_speaker_probes > 0) {
      throw InsufficientDataError("speaker '" + speaker +
                                  "' has no utterances left for probes");
    }
    for (std::size_t i : draw_cycling(own.size(), config.per_speaker_probes, rng)) {
      trials.push_back({speaker, own[i]->wav_path, speaker, true});
    }
    std::vector<const ManifestEntry*> others;
    for (const auto& e : eval_manifest.entries) {
      if (e.speaker_id != speaker && !excluded.count(e.wav_path)) {
        others.push_back(&e);
      }
    }
    if (others.empty() && impostors > 0) {
      throw InsufficientDataError("no impostor probes available for '" +
                                  speaker + "'");
    }
    for (std::size_t i : draw_cycling(others.size(), impostors, rng)) {
      trials.push_back({speaker, others[i]->wav_path, others[i]->speaker_id, false});
    }
  }
  return trials;
}

void write_trials(const std::filesystem::path& path,
                  const std::vector<TrialPair>& trials) {
  std::string text;
  for (const auto& t : trials) {
    if (t.enroll_speaker.find_first_of(" \t") != std::string::npos ||
        t.probe_path.find_first_of(" \t") != std::string::npos) {
      throw FormatError("trial fields may not contain whitespace: " + t.probe_path);
    }
    text += (t.genuine ? "1 " : "0 ") + t.enroll_speaker + " " + t.probe_path + "\n";
  }
  write_file_atomic(path, text);
}

std::vector<TrialPair> read_trials(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("trial list not found: " + path.string());
  }
  std::istringstream in(read_file_text(path));
  std::vector<TrialPair> trials;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string label, speaker, probe, extra;
    if (!(fields >> label)) continue;
    if (!(fields >> speaker >> probe) || (fields >> extra) ||
        (label != "1" && label != "0")) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'label enroll_speaker probe_path'");
    }
    trials.push_back({speaker, probe, "", label == "1"});
  }
  return trials;
}

Tensor enroll_embeddings(std::span<const Tensor> embeddings) {
  if (embeddings.empty()) throw ContractError("enrollment needs embeddings");
  const std::size_t dim = embeddings.front().size();
  // Coincident points: the centroid is the point itself.
  if (std::all_of(embeddings.begin(), embeddings.end(),
                  [&](const Tensor& e) { return e == embeddings.front(); })) {
    return embeddings.front();
  }
  Tensor centroid({dim}, 0.0);
  for (const Tensor& e : embeddings) {
    if (e.size() != dim) throw DimensionError("embedding widths differ");
    for (std::size_t i = 0; i < dim; ++i) centroid[i] += e[i];
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    centroid[i] /= static_cast<double>(embeddings.size());
    sq += centroid[i] * centroid[i];
  }
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) {
    throw NumericError("support embeddings cancel out; centroid has zero norm");
  }
  for (std::size_t i = 0; i < dim; ++i) centroid[i] /= norm;
  return centroid;
}

Tensor enroll(const EmbeddingNet& net, const SupportSet& support,
              const audio::Framing& framing) {
  std::vector<Tensor> embeddings;
  embeddings.reserve(support.clips.size());
  for (const auto& clip : support.clips) {
    embeddings.push_back(net.infer(audio::waveform_to_volume(clip, framing)));
  }
  return enroll_embeddings(embeddings);
}

double verification_score(const Tensor& enrolled, const Tensor& probe_embedding) {
  double sq = 0.0;
  for (double v : enrolled.data()) sq += v * v;
  if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
    throw ContractError("enrolled speaker model must be unit-norm");
  }
  return 0.0 - euclidean(enrolled.data(), probe_embedding.data());
}

double verify(const EmbeddingNet& net, const Tensor& enrolled,
              const audio::Volume& probe) {
  return verification_score(enrolled, net.infer(probe));
}

}  // namespace fsv
