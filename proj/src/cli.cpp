#include "fsv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>

#include "fsv/checkpoint.hpp"
#include "fsv/errors.hpp"
#include "fsv/fileio.hpp"
#include "fsv/metrics.hpp"
#include "fsv/random.hpp"

namespace fsv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path canonical_path(const fs::path& p) {
  return fs::absolute(p).lexically_normal();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

DatasetManifest load_manifest(const std::string& path) {
  if (path.empty()) throw ConfigurationError("--manifest is required");
  DatasetManifest m = read_manifest(path);
  m.validate();
  return m;
}

// A file's clip offset depends only on the seed and the file's bytes, so the
// same recording always yields the same clip.
std::mt19937_64 content_rng(std::uint64_t seed, const std::vector<std::uint8_t>& bytes) {
  const std::string_view view(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return make_rng(seed, "content/" + std::to_string(derive_seed(0, view)));
}

audio::WavClip file_clip(const fs::path& path, double duration_s, std::uint64_t seed) {
  if (!fs::exists(path)) throw IoError("audio file not found: " + path.string());
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  audio::WavClip wav = audio::parse_wav(bytes);
  audio::require_canonical_rate(wav);
  std::mt19937_64 rng = content_rng(seed, bytes);
  try {
    return audio::extract_clip(wav, duration_s, rng);
  } catch (const InsufficientAudioError& e) {
    throw InsufficientAudioError(path.string() + ": " + e.what());
  }
}

Model load_model(const std::string& path) {
  if (path.empty()) throw ConfigurationError("--checkpoint is required");
  return restore_model(load_checkpoint(path));
}

Tensor enroll_files(const Model& model, const std::vector<std::string>& files,
                    std::uint64_t seed) {
  if (files.empty()) throw ConfigurationError("at least one enrollment file is required");
  std::vector<Tensor> embeddings;
  for (const auto& f : files) {
    const audio::WavClip clip = file_clip(f, model.train_config.clip_seconds, seed);
    embeddings.push_back(
        model.net.infer(audio::waveform_to_volume(clip, model.train_config.framing)));
  }
  return enroll_embeddings(embeddings);
}

json loss_json(const LossBreakdown& l) {
  return {{"l_ce", l.l_ce}, {"l_c", l.l_c}, {"l_bs", l.l_bs},
          {"lambda", l.lambda}, {"total", l.total}};
}

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) throw ConfigurationError("--out is required");
  synth::SynthConfig sc = cfg.synth;
  sc.seed = cfg.train.seed;
  const DatasetManifest m = synth::write_corpus(cfg.out, sc);
  out << "wrote " << m.entries.size() << " utterances from " << sc.num_speakers
      << " speakers to " << (fs::path(cfg.out) / "manifest.csv").string() << "\n";
  return kExitOk;
}

int cmd_prepare(const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) throw ConfigurationError("--out is required");
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  const std::uint64_t seed = cfg.train.seed;
  std::mt19937_64 split_rng = make_rng(seed, "split");
  auto [train_side, eval_side] = split_dataset(manifest, cfg.train_fraction, split_rng);

  const fs::path dir(cfg.out);
  ensure_dir(dir);
  write_manifest(dir / "train.csv", train_side);
  write_manifest(dir / "eval.csv", eval_side);
  const DatasetManifest eval_local = rebase(eval_side, dir);

  std::set<std::string> support_paths;
  for (const auto& speaker : eval_local.speakers()) {
    std::mt19937_64 rng = make_rng(seed, "support/" + speaker);
    const SupportSet s =
        sample_support(eval_local, speaker, cfg.shots, cfg.duration_s, rng);
    support_paths.insert(s.sources.begin(), s.sources.end());
  }
  std::mt19937_64 trial_rng = make_rng(seed, "trials");
  const auto trials = build_trials(eval_local, cfg.trials, trial_rng, support_paths);
  write_trials(dir / "trials.txt", trials);

  out << "train: " << train_side.speakers().size() << " speakers, "
      << train_side.entries.size() << " utterances\n"
      << "eval: " << eval_side.speakers().size() << " speakers, "
      << eval_side.entries.size() << " utterances, " << trials.size() << " trials\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) throw ConfigurationError("--out is required");
  TrainConfig tc = cfg.train;
  tc.clip_seconds = cfg.duration_s;
  tc.validate();
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  const TrainingSet data = load_training_set(manifest);

  std::string log;
  const auto on_step = [&](const StepRecord& r) {
    json line = {{"kind", "step"}, {"epoch", r.epoch}, {"step", r.step}};
    line.update(loss_json(r.loss));
    line["train_accuracy"] = r.train_accuracy;
    log += line.dump() + "\n";
  };
  const auto on_epoch = [&](const EpochRecord& e) {
    json line = {{"kind", "epoch"}, {"epoch", e.epoch}};
    line.update(loss_json(e.loss));
    line["train_accuracy"] = e.train_accuracy;
    log += line.dump() + "\n";
    out << "epoch " << e.epoch << "/" << tc.epochs << "  loss " << e.loss.total
        << "  (ce " << e.loss.l_ce << ", center " << e.loss.l_c << ", bias "
        << e.loss.l_bs << ")  train acc " << e.train_accuracy << std::endl;
  };
  const TrainResult result = train(data, tc, {}, on_step, on_epoch);

  const fs::path dir(cfg.out);
  ensure_dir(dir);
  save_checkpoint(dir / "model.ckpt", make_checkpoint(result, tc));
  write_file_atomic(dir / "train_log.jsonl", log);
  out << "checkpoint: " << (dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_enroll(const RunConfig& cfg, const std::vector<std::string>& wavs,
               const std::string& speaker, std::ostream& out) {
  if (cfg.out.empty()) throw ConfigurationError("--out is required");
  const Model model = load_model(cfg.checkpoint);
  const Tensor enrolled = enroll_files(model, wavs, cfg.train.seed);
  const json doc = {{"speaker", speaker},
                    {"shots", wavs.size()},
                    {"embedding", enrolled.values()}};
  write_file_atomic(cfg.out, doc.dump() + "\n");
  out << "enrolled " << (speaker.empty() ? std::string("speaker") : speaker) << " from "
      << wavs.size() << " file(s) -> " << cfg.out << "\n";
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg, const std::vector<std::string>& wavs,
               const std::string& enrolled_path, const std::string& probe,
               std::ostream& out) {
  if (probe.empty()) throw ConfigurationError("--probe is required");
  const Model model = load_model(cfg.checkpoint);
  Tensor enrolled;
  if (!enrolled_path.empty()) {
    if (!wavs.empty()) throw ConfigurationError("give either --enroll or --enrolled, not both");
    json doc;
    try {
      doc = json::parse(read_file_text(enrolled_path));
      const auto values = doc.at("embedding").get<std::vector<double>>();
      enrolled = Tensor({values.size()}, values);
    } catch (const json::exception& e) {
      throw FormatError(enrolled_path + ": " + e.what());
    }
  } else {
    enrolled = enroll_files(model, wavs, cfg.train.seed);
  }
  const audio::WavClip clip = file_clip(probe, model.train_config.clip_seconds, cfg.train.seed);
  const double score =
      verify(model.net, enrolled, audio::waveform_to_volume(clip, model.train_config.framing));
  const bool accept = score >= cfg.threshold;
  out << "score " << format_double(score) << "\n"
      << "threshold " << format_double(cfg.threshold) << "\n"
      << "decision " << (accept ? "accept" : "reject") << "\n";
  return accept ? kExitOk : kExitReject;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) throw ConfigurationError("--out is required");
  if (cfg.trials_path.empty()) throw ConfigurationError("--trials is required");
  const Model model = load_model(cfg.checkpoint);
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  if (!fs::exists(cfg.trials_path)) throw IoError("trial list not found: " + cfg.trials_path);
  const std::vector<TrialPair> trials = read_trials(cfg.trials_path);
  const fs::path trials_dir = fs::path(cfg.trials_path).parent_path();
  const double clip_s = model.train_config.clip_seconds;
  const audio::Framing& framing = model.train_config.framing;
  const std::uint64_t seed = cfg.train.seed;

  std::set<std::string> speakers;
  for (const auto& t : trials) speakers.insert(t.enroll_speaker);
  std::map<std::string, Tensor> models;
  std::map<fs::path, std::string> support_owner;
  for (const auto& speaker : speakers) {
    std::mt19937_64 rng = make_rng(seed, "support/" + speaker);
    const SupportSet s = sample_support(manifest, speaker, cfg.shots, clip_s, rng);
    for (const auto& src : s.sources) support_owner[canonical_path(manifest.resolve(src))] = speaker;
    models[speaker] = enroll(model.net, s, framing);
  }

  ScoreSet scores;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialPair& t = trials[i];
    const std::string where = "trial line " + std::to_string(i + 1);
    fs::path p(t.probe_path);
    if (p.is_relative()) p = trials_dir / p;
    if (!fs::exists(p)) throw IoError(where + ": probe file not found: " + p.string());
    if (support_owner.count(canonical_path(p))) {
      throw ContractError(where + ": probe " + t.probe_path +
                          " is also an enrollment clip (was prepare run with this seed?)");
    }
    audio::WavClip wav = load_canonical_wav(p);
    std::mt19937_64 rng = make_rng(seed, "probe/" + std::to_string(i) + "/" + t.probe_path);
    audio::WavClip clip;
    try {
      clip = audio::extract_clip(wav, clip_s, rng);
    } catch (const InsufficientAudioError& e) {
      throw InsufficientAudioError(where + ": " + e.what());
    }
    const double s = verify(model.net, models.at(t.enroll_speaker),
                            audio::waveform_to_volume(clip, framing));
    scores.push_back({s, t.genuine});
  }

  const EerResult eer = compute_eer(scores);
  const fs::path dir(cfg.out);
  ensure_dir(dir);
  write_score_file(dir / "scores.tsv", scores);
  const EerResult recheck = compute_eer(read_score_file(dir / "scores.tsv"));
  if (recheck.eer != eer.eer || recheck.threshold != eer.threshold) {
    throw NumericError("score file does not reproduce the in-memory EER");
  }
  write_det_csv(dir / "det.csv", det_points(scores));

  std::size_t genuine = 0;
  for (const auto& s : scores) genuine += s.genuine ? 1 : 0;
  const json summary = {{"eer", eer.eer},
                        {"eer_percent", eer.eer * 100.0},
                        {"threshold", eer.threshold},
                        {"trials", scores.size()},
                        {"genuine", genuine},
                        {"impostor", scores.size() - genuine},
                        {"shots", cfg.shots}};
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  out << "EER " << std::fixed << std::setprecision(2) << eer.eer * 100.0 << "%  threshold "
      << std::defaultfloat << format_double(eer.threshold) << "  (" << scores.size()
      << " trials)\n";
  return kExitOk;
}

// Splices "key = value" lines from a --config file in as "--key value" flags.
// Keys already given on the command line are skipped so flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (!a.starts_with("--")) continue;
    const auto eq = a.find('=');
    given.insert(a.substr(0, eq));
    if (a == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (a.starts_with("--config=")) path = a.substr(9);
  }
  if (path.empty() || args.empty()) return args;
  if (!fs::exists(path)) throw IoError("config file not found: " + path);

  std::vector<std::string> extra;
  std::istringstream in(read_file_text(path));
  std::string line;
  std::size_t line_no = 0;
  const auto trim = [](std::string t) {
    const auto b = t.find_first_not_of(" \t\r");
    const auto e = t.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config" || given.count("--" + key)) continue;
    extra.push_back("--" + key);
    extra.push_back(value);
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Few-shot speaker verification with a 3D-CNN embedding network", "fsv"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string optimizer = "adam";
  std::vector<std::string> enroll_wavs;
  std::string enrolled_path, probe, speaker, config_path;

  const auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.train.seed, "Seed for every random choice")
        ->capture_default_str();
    sub->add_option("--config", config_path, "Flat key = value file; flags override it");
  };
  const auto add_framing = [&](CLI::App* sub) {
    sub->add_option("--window", cfg.train.framing.window, "Samples per frame")
        ->capture_default_str();
    sub->add_option("--hop", cfg.train.framing.hop, "Samples between frames")
        ->capture_default_str();
    sub->add_option("--patch-rows", cfg.train.framing.patch_rows,
                    "Rows each frame is reshaped into")
        ->capture_default_str();
  };

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic speaker corpus");
  add_seed(synth_cmd);
  synth_cmd->add_option("--speakers", cfg.synth.num_speakers)->capture_default_str();
  synth_cmd->add_option("--utterances", cfg.synth.utterances_per_speaker,
                        "Utterances per speaker")
      ->capture_default_str();
  synth_cmd->add_option("--min-seconds", cfg.synth.min_duration_s)->capture_default_str();
  synth_cmd->add_option("--max-seconds", cfg.synth.max_duration_s)->capture_default_str();
  synth_cmd->add_option("--snr-db", cfg.synth.snr_db)->capture_default_str();
  synth_cmd->add_option("--out", cfg.out, "Corpus directory")->required();

  auto* prepare_cmd = app.add_subcommand(
      "prepare", "Split a manifest by speaker and build the verification trial list");
  add_seed(prepare_cmd);
  prepare_cmd->add_option("--manifest", cfg.manifest)->required();
  prepare_cmd->add_option("--train-fraction", cfg.train_fraction)->capture_default_str();
  prepare_cmd->add_option("--shots", cfg.shots, "Enrollment clips per speaker")
      ->capture_default_str();
  prepare_cmd->add_option("--duration", cfg.duration_s, "Clip length in seconds")
      ->capture_default_str();
  prepare_cmd->add_option("--probes", cfg.trials.per_speaker_probes,
                          "Genuine trials per speaker")
      ->capture_default_str();
  prepare_cmd->add_option("--impostor-ratio", cfg.trials.impostor_ratio)
      ->capture_default_str();
  prepare_cmd->add_option("--out", cfg.out, "Writes train.csv, eval.csv, trials.txt")
      ->required();

  auto* train_cmd = app.add_subcommand(
      "train", "Train the embedding network; the last partial batch of each epoch is dropped");
  add_seed(train_cmd);
  add_framing(train_cmd);
  train_cmd->add_option("--manifest", cfg.manifest, "Training manifest")->required();
  train_cmd->add_option("--epochs", cfg.train.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", cfg.train.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", cfg.train.learning_rate)->capture_default_str();
  train_cmd->add_option("--lambda", cfg.train.lambda, "Center-loss weight")
      ->capture_default_str();
  train_cmd->add_option("--center-alpha", cfg.train.center_alpha, "Center update rate")
      ->capture_default_str();
  train_cmd->add_option("--optimizer", optimizer)
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  train_cmd->add_option("--duration", cfg.duration_s, "Training clip length in seconds")
      ->capture_default_str();
  train_cmd->add_option("--out", cfg.out, "Writes model.ckpt and train_log.jsonl")
      ->required();

  auto* enroll_cmd = app.add_subcommand("enroll", "Build a speaker model from K recordings");
  add_seed(enroll_cmd);
  enroll_cmd->add_option("--checkpoint", cfg.checkpoint)->required();
  enroll_cmd->add_option("--wav", enroll_wavs, "Enrollment recordings")->required();
  enroll_cmd->add_option("--speaker", speaker, "Label stored with the model");
  enroll_cmd->add_option("--out", cfg.out, "Speaker model JSON")->required();

  auto* verify_cmd = app.add_subcommand(
      "verify", "Score a probe against a claimed speaker (exit 0 accept, 1 reject, 2 error)");
  add_seed(verify_cmd);
  verify_cmd->add_option("--checkpoint", cfg.checkpoint)->required();
  auto* enroll_opt = verify_cmd->add_option("--enroll", enroll_wavs, "Enrollment recordings");
  auto* enrolled_opt =
      verify_cmd->add_option("--enrolled", enrolled_path, "Speaker model from `enroll`");
  enroll_opt->excludes(enrolled_opt);
  verify_cmd->add_option("--probe", probe)->required();
  verify_cmd->add_option("--threshold", cfg.threshold, "Accept when score >= threshold")
      ->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "Enroll eval speakers, score trials, report EER");
  add_seed(eval_cmd);
  eval_cmd->add_option("--checkpoint", cfg.checkpoint)->required();
  eval_cmd->add_option("--manifest", cfg.manifest, "Eval manifest")->required();
  eval_cmd->add_option("--trials", cfg.trials_path)->required();
  eval_cmd->add_option("--shots", cfg.shots, "Enrollment clips per speaker")
      ->capture_default_str();
  eval_cmd->add_option("--out", cfg.out, "Writes scores.tsv, det.csv, summary.json")
      ->required();

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }
  cfg.train.optimizer = optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;

  try {
    if (synth_cmd->parsed()) return cmd_synth(cfg, out);
    if (prepare_cmd->parsed()) return cmd_prepare(cfg, out);
    if (train_cmd->parsed()) return cmd_train(cfg, out);
    if (enroll_cmd->parsed()) return cmd_enroll(cfg, enroll_wavs, speaker, out);
    if (verify_cmd->parsed()) {
      if (enroll_wavs.empty() && enrolled_path.empty()) {
        throw ConfigurationError("verify needs --enroll files or an --enrolled model");
      }
      return cmd_verify(cfg, enroll_wavs, enrolled_path, probe, out);
    }
    if (eval_cmd->parsed()) return cmd_eval(cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace fsv::cli
