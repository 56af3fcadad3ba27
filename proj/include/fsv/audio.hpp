#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "fsv/tensor.hpp"

namespace fsv::audio {

inline constexpr std::uint32_t kCanonicalSampleRate = 16000;

struct WavClip {
  std::uint32_t sample_rate = kCanonicalSampleRate;
  std::vector<double> samples;  // each in [-1, 1]

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// RIFF/WAVE, PCM (format 1), 16-bit, mono. Samples are scaled by 1/32768.
WavClip parse_wav(std::span<const std::uint8_t> bytes);

// Inverse of parse_wav up to 16-bit quantization; values are rounded and
// clamped to the int16 range.
std::vector<std::uint8_t> write_wav(const WavClip& clip);

WavClip read_wav_file(const std::filesystem::path& path);
void write_wav_file(const std::filesystem::path& path, const WavClip& clip);

// Pipeline inputs must be 16 kHz; nothing is resampled.
void require_canonical_rate(const WavClip& clip);

// Number of samples a clip of duration_s holds at the clip's rate.
std::size_t clip_samples(const WavClip& clip, double duration_s);

// Contiguous segment of round(duration_s * rate) samples at a uniformly drawn
// offset. Always consumes exactly one draw from rng.
WavClip extract_clip(const WavClip& clip, double duration_s,
                     std::mt19937_64& rng);

struct Framing {
  std::size_t window = 400;  // 25 ms at 16 kHz
  std::size_t hop = 160;     // 10 ms
  std::size_t patch_rows = 20;

  std::size_t patch_cols() const { return window / patch_rows; }
};

void validate_framing(const Framing& framing);

// 1 + floor((samples - window) / hop)
std::size_t frame_count(std::size_t samples, const Framing& framing);

// Raw-waveform network input: each frame is one window reshaped row-major
// into patch_rows x patch_cols.
struct Volume {
  std::size_t frames = 0;
  std::size_t patch_rows = 0;
  std::size_t patch_cols = 0;
  std::size_t channels = 1;
  Tensor data;  // [frames, patch_rows, patch_cols, channels]
};

Volume waveform_to_volume(const WavClip& clip, const Framing& framing);

}  // namespace fsv::audio
