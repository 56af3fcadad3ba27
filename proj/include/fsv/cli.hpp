#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fsv/audio.hpp"
#include "fsv/fewshot.hpp"
#include "fsv/synth.hpp"
#include "fsv/trainer.hpp"

namespace fsv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitReject = 1;
inline constexpr int kExitError = 2;

// Every knob a run can set. Flags win over a --config file, which wins over
// these defaults.
struct RunConfig {
  TrainConfig train;  // epochs, batch size, lr, lambda, seed, optimizer, framing
  std::size_t shots = 5;
  double duration_s = 3.0;
  double train_fraction = 0.7;
  TrialConfig trials;
  synth::SynthConfig synth;
  double threshold = -1.0;

  std::string manifest;
  std::string trials_path;
  std::string checkpoint;
  std::string out;
};

// Runs one subcommand (args excludes the program name). Returns the exit
// code: 0 success or accept, 1 reject (verify only), 2 error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fsv::cli
