#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsv/audio.hpp"
#include "fsv/fewshot.hpp"

namespace fsv::synth {

struct SynthConfig {
  std::size_t num_speakers = 10;
  std::size_t utterances_per_speaker = 12;
  std::uint64_t seed = 0;
  double min_duration_s = 4.0;
  double max_duration_s = 5.0;
  double snr_db = 20.0;
};

struct Resonator {
  double center_hz = 0.0;
  double bandwidth_hz = 0.0;
};

// A synthetic speaker is its three pitch targets and its vocal-tract filter.
struct SpeakerVoice {
  std::string id;
  std::array<double, 3> f0_hz{};
  std::array<Resonator, 2> formants{};
};

SpeakerVoice make_voice(const std::string& id, std::uint64_t seed);

// Harmonic tones at the voice's pitches (random phase per segment), shaped
// by the voice's filter, plus white noise at the configured SNR.
audio::WavClip synthesize(const SpeakerVoice& voice, std::size_t utterance,
                          const SynthConfig& config);

std::string speaker_id(std::size_t index, std::size_t count);

// Writes wav/<speaker>/utt<NN>.wav for every utterance and manifest.csv
// under out_dir. Returns the manifest as written.
DatasetManifest write_corpus(const std::filesystem::path& out_dir,
                             const SynthConfig& config);

}  // namespace fsv::synth
