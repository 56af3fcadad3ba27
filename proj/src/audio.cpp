#include "fsv/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "fsv/errors.hpp"
#include "fsv/fileio.hpp"

namespace fsv::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool has_tag(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

WavClip parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !has_tag(bytes, 0, "RIFF")) {
    throw FormatError("not a RIFF container");
  }
  if (bytes.size() < 12) throw TruncationError("RIFF header is truncated");
  if (!has_tag(bytes, 8, "WAVE")) throw FormatError("RIFF form type is not WAVE");

  bool have_fmt = false;
  WavClip clip;
  std::size_t at = 12;
  while (at + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (has_tag(bytes, at, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) {
        throw TruncationError("fmt chunk is truncated");
      }
      const std::uint16_t format = read_u16(bytes, body);
      const std::uint16_t channels = read_u16(bytes, body + 2);
      const std::uint32_t rate = read_u32(bytes, body + 4);
      const std::uint16_t bits = read_u16(bytes, body + 14);
      if (format != kFormatPcm) {
        throw UnsupportedFormatError("WAV audio format " +
                                     std::to_string(format) +
                                     " is not supported (PCM only)");
      }
      if (channels != 1) {
        throw UnsupportedFormatError("only mono WAV is supported, got " +
                                     std::to_string(channels) + " channels");
      }
      if (bits != 16) {
        throw UnsupportedFormatError("only 16-bit PCM is supported, got " +
                                     std::to_string(bits) + " bits");
      }
      if (rate == 0) throw FormatError("WAV sample rate is zero");
      clip.sample_rate = rate;
      have_fmt = true;
    } else if (has_tag(bytes, at, "data")) {
      if (!have_fmt) throw FormatError("data chunk precedes fmt chunk");
      if (body + size > bytes.size() || size % 2 != 0) {
        throw TruncationError("data chunk is truncated: declares " +
                              std::to_string(size) + " bytes, " +
                              std::to_string(bytes.size() - body) +
                              " available");
      }
      const std::size_t count = size / 2;
      if (count == 0) throw FormatError("WAV data chunk holds no samples");
      clip.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
        clip.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return clip;
    }
    at = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError("WAV has no fmt chunk");
  throw FormatError("WAV has no data chunk");
}

std::vector<std::uint8_t> write_wav(const WavClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, clip.sample_rate);
  put_u32(out, clip.sample_rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

WavClip read_wav_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  try {
    return parse_wav(bytes);
  } catch (const Error& e) {
    // Re-throw the same category with the file named.
    const std::string msg = path.string() + ": " + e.what();
    if (dynamic_cast<const TruncationError*>(&e)) throw TruncationError(msg);
    if (dynamic_cast<const UnsupportedFormatError*>(&e)) {
      throw UnsupportedFormatError(msg);
    }
    throw FormatError(msg);
  }
}

void write_wav_file(const std::filesystem::path& path, const WavClip& clip) {
  write_file_atomic(path, write_wav(clip));
}

void require_canonical_rate(const WavClip& clip) {
  if (clip.sample_rate != kCanonicalSampleRate) {
    throw UnsupportedFormatError("sample rate " + std::to_string(clip.sample_rate) +
                                 " Hz is not supported; audio must be 16000 Hz");
  }
}

std::size_t clip_samples(const WavClip& clip, double duration_s) {
  if (!(duration_s > 0.0)) throw ContractError("clip duration must be positive");
  return static_cast<std::size_t>(std::llround(duration_s * clip.sample_rate));
}

WavClip extract_clip(const WavClip& clip, double duration_s,
                     std::mt19937_64& rng) {
  const std::size_t n = clip_samples(clip, duration_s);
  if (clip.samples.size() < n) {
    throw InsufficientAudioError(
        "need " + std::to_string(n) + " samples for a " +
        std::to_string(duration_s) + " s clip, have " +
        std::to_string(clip.samples.size()));
  }
  std::uniform_int_distribution<std::size_t> pick(0, clip.samples.size() - n);
  const std::size_t offset = pick(rng);
  WavClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + offset,
                     clip.samples.begin() + offset + n);
  return out;
}

void validate_framing(const Framing& framing) {
  if (framing.window == 0 || framing.hop == 0 || framing.patch_rows == 0) {
    throw ConfigurationError("window, hop and patch_rows must be positive");
  }
  if (framing.window % framing.patch_rows != 0) {
    throw ConfigurationError("window " + std::to_string(framing.window) +
                             " is not divisible by patch_rows " +
                             std::to_string(framing.patch_rows));
  }
}

std::size_t frame_count(std::size_t samples, const Framing& framing) {
  validate_framing(framing);
  if (samples < framing.window) {
    throw InsufficientAudioError("clip of " + std::to_string(samples) +
                                 " samples is shorter than one " +
                                 std::to_string(framing.window) +
                                 "-sample window");
  }
  return 1 + (samples - framing.window) / framing.hop;
}

Volume waveform_to_volume(const WavClip& clip, const Framing& framing) {
  const std::size_t frames = frame_count(clip.samples.size(), framing);
  Volume v;
  v.frames = frames;
  v.patch_rows = framing.patch_rows;
  v.patch_cols = framing.patch_cols();
  v.channels = 1;
  v.data = Tensor({frames, v.patch_rows, v.patch_cols, 1});
  auto out = v.data.data();
  for (std::size_t f = 0; f < frames; ++f) {
    const auto first = clip.samples.begin() + f * framing.hop;
    std::copy(first, first + framing.window, out.begin() + f * framing.window);
  }
  return v;
}

}  // namespace fsv::audio
