#include "fsv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "fsv/errors.hpp"
#include "fsv/ops.hpp"
#include "fsv/random.hpp"

namespace fsv {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigurationError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning rate must be positive");
  if (!(lambda >= 0.0)) throw ConfigurationError("lambda must be non-negative");
  if (!(center_alpha > 0.0 && center_alpha <= 1.0)) {
    throw ConfigurationError("center update rate must lie in (0, 1]");
  }
  if (!(clip_seconds > 0.0)) throw ConfigurationError("clip length must be positive");
  audio::validate_framing(framing);
}

NetConfig net_config_for(const TrainConfig& config, NetConfig base) {
  const auto samples = static_cast<std::size_t>(
      std::llround(config.clip_seconds * audio::kCanonicalSampleRate));
  base.input_shape = NetConfig::input_for(samples, config.framing);
  return base;
}

TrainingSet load_training_set(const DatasetManifest& manifest,
                              const AudioLoader& load) {
  TrainingSet set;
  set.speakers = manifest.speakers();
  std::map<std::string, std::size_t> label_of;
  for (std::size_t i = 0; i < set.speakers.size(); ++i) label_of[set.speakers[i]] = i;
  for (const auto& e : manifest.entries) {
    set.utterances.push_back({label_of.at(e.speaker_id), load(manifest.resolve(e.wav_path))});
  }
  return set;
}

namespace {

std::size_t argmax_row(const Tensor& m, std::size_t row) {
  const std::size_t cols = m.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < cols; ++j) {
    if (m[row * cols + j] > m[row * cols + best]) best = j;
  }
  return best;
}

}  // namespace

TrainResult train(const TrainingSet& data, const TrainConfig& config,
                  NetConfig net_config, const StepCallback& on_step,
                  const EpochCallback& on_epoch) {
  config.validate();
  const std::size_t num_speakers = data.speakers.size();
  if (num_speakers < 2) {
    throw ContractError("training needs at least 2 speakers, got " +
                        std::to_string(num_speakers));
  }
  if (config.epochs > 0 && data.utterances.size() < config.batch_size) {
    throw ContractError("only " + std::to_string(data.utterances.size()) +
                        " training utterances for batch size " +
                        std::to_string(config.batch_size));
  }
  for (const auto& u : data.utterances) {
    if (u.label >= num_speakers) throw IndexError("utterance label out of range");
  }

  net_config = net_config_for(config, net_config);
  std::mt19937_64 init_rng = make_rng(config.seed, "init");
  TrainResult result;
  result.net = EmbeddingNet::init(net_config, init_rng);
  result.head = ClassifierHead::init(num_speakers, net_config.embedding_dim, init_rng);
  result.centers = CenterBank::zeros(num_speakers, net_config.embedding_dim,
                                     config.center_alpha);
  result.speakers = data.speakers;

  OptimizerConfig opt;
  opt.kind = config.optimizer;
  opt.learning_rate = config.learning_rate;
  OptimizerState opt_state;

  const auto& in = net_config.input_shape;
  const std::size_t volume_size = in[0] * in[1] * in[2] * in[3];
  const std::size_t steps_per_epoch = data.utterances.size() / config.batch_size;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng = make_rng(config.seed, "epoch/" + std::to_string(epoch));
    std::vector<std::size_t> order(data.utterances.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double sum_ce = 0.0, sum_c = 0.0, sum_bs = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t b = config.batch_size;
      Tensor batch({b, in[0], in[1], in[2], in[3]});
      std::vector<std::size_t> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        const TrainingUtterance& u = data.utterances[order[step * b + i]];
        const audio::WavClip clip = audio::extract_clip(u.audio, config.clip_seconds, rng);
        const audio::Volume v = audio::waveform_to_volume(clip, config.framing);
        std::copy(v.data.values().begin(), v.data.values().end(),
                  batch.data().begin() + i * volume_size);
        labels[i] = u.label;
      }

      Tape tape;
      const std::vector<Var> params = result.net.bind(tape);
      const Var head_w = tape.leaf(result.head.weight);
      const Var head_b = tape.leaf(result.head.bias);
      const Var emb = result.net.forward(tape, params, tape.constant(batch), Mode::train);
      const Var logit = ops::linear(emb, head_w, head_b);
      const Var l_ce = cross_entropy(logit, labels);
      const Var l_c = center_loss(emb, labels, result.centers);
      const Var l_bs = speaker_bias_loss(head_w);
      const Var total = combined_loss(l_ce, l_c, l_bs, config.lambda);

      const LossBreakdown loss = combined_loss(
          l_ce.value().item(), l_c.value().item(), l_bs.value().item(), config.lambda);
      if (!std::isfinite(total.value().item()) || loss.total != total.value().item()) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(step) + ": loss is not finite");
      }
      tape.backward(total);

      std::vector<ParamRef> refs;
      auto& net_params = result.net.parameters();
      for (std::size_t k = 0; k < net_params.size(); ++k) {
        net_params[k].value.set_grad(tape.grad(params[k]).values());
        refs.push_back({net_params[k].name, &net_params[k].value});
      }
      result.head.weight.set_grad(tape.grad(head_w).values());
      result.head.bias.set_grad(tape.grad(head_b).values());
      refs.push_back({"head.weight", &result.head.weight});
      refs.push_back({"head.bias", &result.head.bias});
      try {
        optimizer_step(refs, opt_state, opt);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(step) + ": " + e.what());
      }
      for (const ParamRef& r : refs) r.tensor->clear_grad();

      update_centers(result.centers, emb.value(), labels);

      std::size_t step_correct = 0;
      for (std::size_t i = 0; i < b; ++i) {
        if (argmax_row(logit.value(), i) == labels[i]) ++step_correct;
      }
      correct += step_correct;
      seen += b;
      sum_ce += loss.l_ce;
      sum_c += loss.l_c;
      sum_bs += loss.l_bs;
      if (on_step) {
        on_step({epoch, step, loss,
                 static_cast<double>(step_correct) / static_cast<double>(b)});
      }
    }

    const double n = static_cast<double>(steps_per_epoch);
    EpochRecord record;
    record.epoch = epoch;
    record.steps = steps_per_epoch;
    record.loss = combined_loss(sum_ce / n, sum_c / n, sum_bs / n, config.lambda);
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

}  // namespace fsv
