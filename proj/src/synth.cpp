#include "fsv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <system_error>

#include "fsv/errors.hpp"
#include "fsv/random.hpp"

namespace fsv::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxHarmonicHz = 4000.0;
constexpr double kTargetRms = 0.1;

// Two-pole resonator (constant peak gain), direct form I.
struct Biquad {
  double b0 = 1, b2 = 0, a1 = 0, a2 = 0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  Biquad(const Resonator& r, double rate) {
    const double w = kTwoPi * r.center_hz / rate;
    const double radius = std::exp(-std::numbers::pi * r.bandwidth_hz / rate);
    a1 = -2.0 * radius * std::cos(w);
    a2 = radius * radius;
    b0 = (1.0 - a2) / 2.0;
    b2 = -b0;
  }

  double operator()(double x) {
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

SpeakerVoice make_voice(const std::string& id, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, "voice/" + id);
  std::uniform_real_distribution<double> pitch(90.0, 300.0);
  std::uniform_real_distribution<double> first(300.0, 900.0);
  std::uniform_real_distribution<double> second(1000.0, 2800.0);
  std::uniform_real_distribution<double> width(80.0, 200.0);
  SpeakerVoice v;
  v.id = id;
  for (double& f : v.f0_hz) f = pitch(rng);
  std::sort(v.f0_hz.begin(), v.f0_hz.end());
  v.formants[0] = {first(rng), width(rng)};
  v.formants[1] = {second(rng), width(rng)};
  return v;
}

audio::WavClip synthesize(const SpeakerVoice& voice, std::size_t utterance,
                          const SynthConfig& config) {
  const double rate = audio::kCanonicalSampleRate;
  std::mt19937_64 rng =
      make_rng(config.seed, "utterance/" + voice.id + "/" + std::to_string(utterance));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 2);

  const double duration =
      config.min_duration_s + (config.max_duration_s - config.min_duration_s) * unit(rng);
  const auto n = static_cast<std::size_t>(std::ceil(duration * rate));
  std::vector<double> excitation(n, 0.0);

  // Segments of 150-400 ms, each voiced at one of the speaker's pitches with
  // slight jitter and its own harmonic weights; 10 ms raised-cosine edges.
  const auto ramp = static_cast<std::size_t>(0.01 * rate);
  std::size_t start = 0;
  while (start < n) {
    const auto len = std::min<std::size_t>(
        n - start, static_cast<std::size_t>((0.15 + 0.25 * unit(rng)) * rate));
    const double f0 = voice.f0_hz[pick(rng)] * (0.99 + 0.02 * unit(rng));
    const auto harmonics = static_cast<std::size_t>(kMaxHarmonicHz / f0);
    for (std::size_t h = 1; h <= harmonics; ++h) {
      const double amp = (0.7 + 0.6 * unit(rng)) / static_cast<double>(h);
      const double phase = kTwoPi * unit(rng);
      const double step = kTwoPi * f0 * static_cast<double>(h) / rate;
      for (std::size_t i = 0; i < len; ++i) {
        excitation[start + i] += amp * std::sin(phase + step * static_cast<double>(i));
      }
    }
    for (std::size_t i = 0; i < std::min(ramp, len / 2); ++i) {
      const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
      excitation[start + i] *= g;
      excitation[start + len - 1 - i] *= g;
    }
    start += len;
  }

  Biquad f1(voice.formants[0], rate), f2(voice.formants[1], rate);
  std::vector<double> voiced(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = excitation[i];
    voiced[i] = f1(x) + f2(x);
  }

  double power = 0.0;
  for (double v : voiced) power += v * v;
  power /= static_cast<double>(n);
  const double gain = power > 0.0 ? kTargetRms / std::sqrt(power) : 0.0;
  const double noise_rms = kTargetRms * std::pow(10.0, -config.snr_db / 20.0);
  std::normal_distribution<double> noise(0.0, noise_rms);

  audio::WavClip clip;
  clip.sample_rate = audio::kCanonicalSampleRate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = std::clamp(gain * voiced[i] + noise(rng), -1.0, 1.0);
  }
  return clip;
}

std::string speaker_id(std::size_t index, std::size_t count) {
  const std::size_t width = std::max<std::size_t>(2, std::to_string(count - 1).size());
  std::string digits = std::to_string(index);
  return "spk" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

DatasetManifest write_corpus(const std::filesystem::path& out_dir,
                             const SynthConfig& config) {
  if (config.num_speakers < 1 || config.utterances_per_speaker < 1) {
    throw ConfigurationError("synth needs at least one speaker and one utterance");
  }
  if (!(config.min_duration_s > 0.0 && config.max_duration_s >= config.min_duration_s)) {
    throw ConfigurationError("synth durations must satisfy 0 < min <= max");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  const std::size_t utt_width =
      std::max<std::size_t>(2, std::to_string(config.utterances_per_speaker - 1).size());
  for (std::size_t s = 0; s < config.num_speakers; ++s) {
    const SpeakerVoice voice = make_voice(speaker_id(s, config.num_speakers), config.seed);
    const std::filesystem::path dir = out_dir / "wav" / voice.id;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t u = 0; u < config.utterances_per_speaker; ++u) {
      std::string num = std::to_string(u);
      num.insert(0, utt_width - std::min(utt_width, num.size()), '0');
      const std::string rel = "wav/" + voice.id + "/utt" + num + ".wav";
      const audio::WavClip clip = synthesize(voice, u, config);
      audio::write_wav_file(out_dir / rel, clip);
      manifest.entries.push_back({voice.id, rel, clip.duration_s()});
    }
  }
  write_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

}  // namespace fsv::synth
