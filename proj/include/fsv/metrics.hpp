#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace fsv {

struct ScoredTrial {
  double score = 0.0;
  bool genuine = false;
};

using ScoreSet = std::vector<ScoredTrial>;

struct EerResult {
  double eer = 0.0;        // fraction in [0, 1]
  double threshold = 0.0;  // score at the crossing
};

struct DetPoint {
  double threshold = 0.0;  // +inf for the reject-everything point
  double far = 0.0;
  double frr = 0.0;
};

// Operating points at every distinct score, ascending, followed by a point at
// +inf. FAR(t) counts impostors with score >= t, FRR(t) genuines with
// score < t. Throws UndefinedMetricError unless both classes are present.
std::vector<DetPoint> det_points(const ScoreSet& scores);

// Equal error rate at the first operating point where FRR >= FAR, linearly
// interpolated from the previous point when the two rates do not meet
// exactly there.
EerResult compute_eer(const ScoreSet& scores);

double accuracy(std::span<const std::size_t> predictions,
                std::span<const std::size_t> labels);

// "score<TAB>label" lines, label 1 = genuine.
void write_score_file(const std::filesystem::path& path, const ScoreSet& scores);
ScoreSet read_score_file(const std::filesystem::path& path);

// "threshold,far,frr" with a header row.
void write_det_csv(const std::filesystem::path& path,
                   const std::vector<DetPoint>& points);

}  // namespace fsv
