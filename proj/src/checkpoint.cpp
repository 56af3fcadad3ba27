#include "fsv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "fsv/errors.hpp"
#include "fsv/fileio.hpp"

namespace fsv {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'S', 'P', 'K'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8;

Blob to_blob(const std::string& name, const Tensor& t) {
  Blob b{name, t.shape(), {}};
  b.values.reserve(t.size());
  for (double v : t.data()) b.values.push_back(static_cast<float>(v));
  return b;
}

void assign(Tensor& dst, const Blob& src) {
  if (dst.shape() != src.shape) {
    throw FormatError("checkpoint blob " + src.name + " has shape " +
                      shape_string(src.shape) + ", expected " +
                      shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < src.values.size(); ++i) dst[i] = src.values[i];
}

Tensor tensor_from(const Blob& src) {
  Tensor t(src.shape);
  for (std::size_t i = 0; i < src.values.size(); ++i) t[i] = src.values[i];
  return t;
}

std::string bn_prefix(std::size_t block) {
  return "block" + std::to_string(block) + ".bn";
}

const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

}  // namespace

const Blob& Checkpoint::blob(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return b;
  }
  throw FormatError("checkpoint has no blob named " + name);
}

nlohmann::json to_json(const NetConfig& c) {
  return {{"input_shape", c.input_shape},
          {"channels", c.channels},
          {"kernel", c.kernel},
          {"first_pool", c.first_pool},
          {"pool", c.pool},
          {"embedding_dim", c.embedding_dim},
          {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.input_shape = j.at("input_shape").get<std::array<std::size_t, 4>>();
  c.channels = j.at("channels").get<std::vector<std::size_t>>();
  c.kernel = j.at("kernel").get<Triple>();
  c.first_pool = j.at("first_pool").get<Triple>();
  c.pool = j.at("pool").get<Triple>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lambda", c.lambda},
          {"seed", c.seed},
          {"optimizer", optimizer_name(c.optimizer)},
          {"center_alpha", c.center_alpha},
          {"clip_seconds", c.clip_seconds},
          {"window", c.framing.window},
          {"hop", c.framing.hop},
          {"patch_rows", c.framing.patch_rows}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto opt = j.at("optimizer").get<std::string>();
  if (opt != "adam" && opt != "sgd") throw FormatError("unknown optimizer " + opt);
  c.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  c.center_alpha = j.at("center_alpha").get<double>();
  c.clip_seconds = j.at("clip_seconds").get<double>();
  c.framing.window = j.at("window").get<std::size_t>();
  c.framing.hop = j.at("hop").get<std::size_t>();
  c.framing.patch_rows = j.at("patch_rows").get<std::size_t>();
  return c;
}

Checkpoint make_checkpoint(const TrainResult& trained, const TrainConfig& config) {
  Checkpoint ck;
  ck.net_config = trained.net.config();
  ck.train_config = config;
  ck.epoch = trained.history.size();
  ck.speakers = trained.speakers;
  if (!trained.history.empty()) {
    const EpochRecord& last = trained.history.back();
    ck.metrics = {{"l_ce", last.loss.l_ce},
                  {"l_c", last.loss.l_c},
                  {"l_bs", last.loss.l_bs},
                  {"total", last.loss.total},
                  {"train_accuracy", last.train_accuracy}};
  }
  for (const auto& p : trained.net.parameters()) ck.blobs.push_back(to_blob(p.name, p.value));
  const auto& bn = trained.net.bn_states();
  for (std::size_t b = 0; b < bn.size(); ++b) {
    ck.blobs.push_back(to_blob(bn_prefix(b) + ".running_mean", bn[b].running_mean));
    ck.blobs.push_back(to_blob(bn_prefix(b) + ".running_var", bn[b].running_var));
  }
  ck.blobs.push_back(to_blob("head.weight", trained.head.weight));
  ck.blobs.push_back(to_blob("head.bias", trained.head.bias));
  ck.blobs.push_back(to_blob("centers", trained.centers.centers));
  return ck;
}

Model restore_model(const Checkpoint& ck) {
  Model m;
  m.net_config = ck.net_config;
  m.train_config = ck.train_config;
  m.speakers = ck.speakers;
  std::mt19937_64 unused(0);
  m.net = EmbeddingNet::init(ck.net_config, unused);
  for (auto& p : m.net.parameters()) assign(p.value, ck.blob(p.name));
  auto& bn = m.net.bn_states();
  for (std::size_t b = 0; b < bn.size(); ++b) {
    assign(bn[b].running_mean, ck.blob(bn_prefix(b) + ".running_mean"));
    assign(bn[b].running_var, ck.blob(bn_prefix(b) + ".running_var"));
  }
  m.head.weight = tensor_from(ck.blob("head.weight"));
  m.head.bias = tensor_from(ck.blob("head.bias"));
  m.centers.centers = tensor_from(ck.blob("centers"));
  m.centers.alpha = ck.train_config.center_alpha;
  return m;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json meta;
  meta["net"] = to_json(ck.net_config);
  meta["train"] = to_json(ck.train_config);
  meta["epoch"] = ck.epoch;
  meta["metrics"] = ck.metrics;
  meta["speakers"] = ck.speakers;
  nlohmann::json blobs = nlohmann::json::array();
  for (const auto& b : ck.blobs) {
    if (b.values.size() != shape_size(b.shape)) {
      throw DimensionError("blob " + b.name + " size does not match its shape");
    }
    blobs.push_back({{"name", b.name}, {"shape", b.shape}});
  }
  meta["blobs"] = blobs;
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out(kHeaderBytes);
  std::memcpy(out.data(), kMagic, 4);
  const std::uint32_t version = ck.format_version;
  const std::uint64_t length = text.size();
  std::memcpy(out.data() + 4, &version, 4);
  std::memcpy(out.data() + 8, &length, 8);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : ck.blobs) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(b.values.data());
    out.insert(out.end(), raw, raw + b.values.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 && (bytes.empty() || std::memcmp(bytes.data(), kMagic, bytes.size()) == 0)) {
    throw TruncationError("checkpoint header is truncated");
  }
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic");
  }
  if (bytes.size() < kHeaderBytes) throw TruncationError("checkpoint header is truncated");
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&length, bytes.data() + 8, 8);
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (length > bytes.size() - kHeaderBytes) {
    throw TruncationError("checkpoint metadata is truncated");
  }
  const auto* text = reinterpret_cast<const char*>(bytes.data() + kHeaderBytes);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text, text + length);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  ck.format_version = version;
  std::size_t needed = 0;
  try {
    ck.net_config = net_config_from_json(meta.at("net"));
    ck.train_config = train_config_from_json(meta.at("train"));
    ck.epoch = meta.at("epoch").get<std::size_t>();
    ck.metrics = meta.at("metrics");
    ck.speakers = meta.at("speakers").get<std::vector<std::string>>();
    for (const auto& b : meta.at("blobs")) {
      Blob blob;
      blob.name = b.at("name").get<std::string>();
      blob.shape = b.at("shape").get<Shape>();
      needed += shape_size(blob.shape) * sizeof(float);
      ck.blobs.push_back(std::move(blob));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is incomplete: ") + e.what());
  }

  const std::size_t available = bytes.size() - kHeaderBytes - length;
  if (available < needed) {
    throw TruncationError("checkpoint blobs are truncated: need " +
                          std::to_string(needed) + " bytes, have " +
                          std::to_string(available));
  }
  if (available > needed) {
    throw FormatError("checkpoint has " + std::to_string(available - needed) +
                      " trailing bytes");
  }
  std::size_t at = kHeaderBytes + length;
  for (auto& blob : ck.blobs) {
    blob.values.resize(shape_size(blob.shape));
    std::memcpy(blob.values.data(), bytes.data() + at, blob.values.size() * sizeof(float));
    at += blob.values.size() * sizeof(float);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("checkpoint not found: " + path.string());
  }
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace fsv
