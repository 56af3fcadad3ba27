#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "fsv/checkpoint.hpp"
#include "fsv/errors.hpp"
#include "fsv/fileio.hpp"
#include "tiny_setup.hpp"

using namespace fsv;

namespace {

struct Trained {
  TrainResult result;
  Checkpoint checkpoint;
  std::vector<std::uint8_t> bytes;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained out{train(tiny::data(), tiny::config(), tiny::net()), {}, {}};
    out.checkpoint = make_checkpoint(out.result, tiny::config());
    out.bytes = encode_checkpoint(out.checkpoint);
    return out;
  }();
  return t;
}

std::uint64_t metadata_length(const std::vector<std::uint8_t>& b) {
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | b[8 + i];
  return n;
}

}  // namespace

TEST(Checkpoint, HeaderLayout) {
  const auto& b = trained().bytes;
  ASSERT_GE(b.size(), 16u);
  EXPECT_EQ(std::memcmp(b.data(), "VSPK", 4), 0);
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5] | b[6] | b[7], 0);
  const auto json_len = metadata_length(b);
  const std::string meta(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(json_len));
  const auto j = nlohmann::json::parse(meta);
  EXPECT_EQ(j["epoch"], 2);
  EXPECT_TRUE(j.contains("net"));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint back = decode_checkpoint(trained().bytes);
  const Checkpoint& orig = trained().checkpoint;
  EXPECT_EQ(back.epoch, orig.epoch);
  EXPECT_EQ(back.speakers, orig.speakers);
  EXPECT_EQ(back.metrics, orig.metrics);
  EXPECT_EQ(back.train_config.seed, orig.train_config.seed);
  EXPECT_EQ(back.train_config.framing.window, 64u);
  EXPECT_EQ(back.net_config.channels, orig.net_config.channels);
  EXPECT_EQ(back.net_config.input_shape, orig.net_config.input_shape);
  ASSERT_EQ(back.blobs.size(), orig.blobs.size());
  for (std::size_t i = 0; i < orig.blobs.size(); ++i) {
    EXPECT_EQ(back.blobs[i].name, orig.blobs[i].name);
    EXPECT_EQ(back.blobs[i].shape, orig.blobs[i].shape);
    EXPECT_EQ(std::memcmp(back.blobs[i].values.data(), orig.blobs[i].values.data(),
                          orig.blobs[i].values.size() * sizeof(float)),
              0);
  }
  EXPECT_EQ(encode_checkpoint(back), trained().bytes);
}

TEST(Checkpoint, RestoredModelMatchesWithinFloatPrecision) {
  const Model m = restore_model(decode_checkpoint(trained().bytes));
  const auto& want = trained().result.net.parameters();
  ASSERT_EQ(m.net.parameters().size(), want.size());
  for (std::size_t k = 0; k < want.size(); ++k) {
    const Tensor& a = m.net.parameters()[k].value;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_EQ(a[i], static_cast<double>(static_cast<float>(want[k].value[i])));
    }
  }
  EXPECT_EQ(m.head.weight.shape(), trained().result.head.weight.shape());
  EXPECT_EQ(m.speakers, trained().result.speakers);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "fsv_ckpt_test.ckpt";
  save_checkpoint(path, trained().checkpoint);
  EXPECT_EQ(read_file_bytes(path), trained().bytes);
  EXPECT_EQ(load_checkpoint(path).blobs.size(), trained().checkpoint.blobs.size());
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, BadMagicIsFormatError) {
  auto b = trained().bytes;
  b[0] = 'X';
  EXPECT_THROW(decode_checkpoint(b), FormatError);
}

TEST(Checkpoint, WrongVersionIsVersionError) {
  auto b = trained().bytes;
  b[4] = 2;
  EXPECT_THROW(decode_checkpoint(b), VersionError);
}

TEST(Checkpoint, TruncationAnywhereIsTruncationError) {
  const auto& full = trained().bytes;
  const std::size_t meta_end = 16 + metadata_length(full);
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, std::size_t{15}, std::size_t{20},
                          meta_end - 1, meta_end + 3, (meta_end + full.size()) / 2,
                          full.size() - 1}) {
    const std::vector<std::uint8_t> b(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(decode_checkpoint(b), TruncationError) << "cut at " << cut;
  }
}

TEST(Checkpoint, TrailingBytesAreFormatError) {
  auto b = trained().bytes;
  b.push_back(0);
  EXPECT_THROW(decode_checkpoint(b), FormatError);
}

TEST(Checkpoint, CorruptMetadataIsFormatError) {
  auto b = trained().bytes;
  b[16] = '#';
  EXPECT_THROW(decode_checkpoint(b), FormatError);
}

TEST(Checkpoint, MissingBlobIsFormatError) {
  EXPECT_THROW(trained().checkpoint.blob("nope"), FormatError);
}

TEST(Checkpoint, ConfigJsonRoundTrip) {
  const TrainConfig c = tiny::config();
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.epochs, c.epochs);
  EXPECT_EQ(back.learning_rate, c.learning_rate);
  EXPECT_EQ(back.lambda, c.lambda);
  EXPECT_EQ(back.clip_seconds, c.clip_seconds);
  EXPECT_EQ(back.framing.patch_rows, c.framing.patch_rows);
  const NetConfig n = net_config_from_json(to_json(tiny::net()));
  EXPECT_EQ(n.channels, tiny::net().channels);
  EXPECT_EQ(n.embedding_dim, 8u);
}
