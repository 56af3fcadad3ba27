#include "fsv/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "fsv/errors.hpp"
#include "fsv/fileio.hpp"

namespace fsv {

std::vector<DetPoint> det_points(const ScoreSet& scores) {
  std::vector<double> genuine, impostor;
  for (const auto& t : scores) (t.genuine ? genuine : impostor).push_back(t.score);
  if (genuine.empty() || impostor.empty()) {
    throw UndefinedMetricError(
        "error rates need at least one genuine and one impostor score (have " +
        std::to_string(genuine.size()) + " genuine, " +
        std::to_string(impostor.size()) + " impostor)");
  }
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());

  std::vector<double> thresholds;
  thresholds.reserve(scores.size());
  for (const auto& t : scores) thresholds.push_back(t.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double ng = static_cast<double>(genuine.size());
  const double ni = static_cast<double>(impostor.size());
  std::vector<DetPoint> points;
  points.reserve(thresholds.size() + 1);
  std::size_t gen_below = 0;  // genuine scores < threshold
  std::size_t imp_below = 0;  // impostor scores < threshold
  for (double t : thresholds) {
    while (gen_below < genuine.size() && genuine[gen_below] < t) ++gen_below;
    while (imp_below < impostor.size() && impostor[imp_below] < t) ++imp_below;
    points.push_back({t, static_cast<double>(impostor.size() - imp_below) / ni,
                      static_cast<double>(gen_below) / ng});
  }
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

EerResult compute_eer(const ScoreSet& scores) {
  const std::vector<DetPoint> points = det_points(scores);
  // FRR - FAR is -1 at the lowest threshold and +1 at +inf.
  for (std::size_t k = 1; k < points.size(); ++k) {
    const DetPoint& cur = points[k];
    const double d = cur.frr - cur.far;
    if (d < 0.0) continue;
    if (d == 0.0) return {cur.far, cur.threshold};
    const DetPoint& prev = points[k - 1];
    const double d_prev = prev.frr - prev.far;
    const double t = -d_prev / (d - d_prev);
    const double eer = prev.far + t * (cur.far - prev.far);
    const double threshold =
        std::isinf(cur.threshold)
            ? prev.threshold
            : prev.threshold + t * (cur.threshold - prev.threshold);
    return {eer, threshold};
  }
  throw UndefinedMetricError("no FAR/FRR crossing found");
}

double accuracy(std::span<const std::size_t> predictions,
                std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) {
    throw ContractError("accuracy: " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(labels.size()) +
                        " labels");
  }
  if (predictions.empty()) throw ContractError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void write_score_file(const std::filesystem::path& path, const ScoreSet& scores) {
  std::string text;
  for (const auto& t : scores) {
    text += format_double(t.score);
    text += '\t';
    text += t.genuine ? '1' : '0';
    text += '\n';
  }
  write_file_atomic(path, text);
}

ScoreSet read_score_file(const std::filesystem::path& path) {
  std::istringstream in(read_file_text(path));
  ScoreSet scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string label = tab == std::string::npos ? "" : line.substr(tab + 1);
    if (tab == std::string::npos || (label != "1" && label != "0")) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'score<TAB>label'");
    }
    double score = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + tab, score);
    if (res.ec != std::errc() || res.ptr != line.data() + tab) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": bad score '" + line.substr(0, tab) + "'");
    }
    scores.push_back({score, label == "1"});
  }
  return scores;
}

void write_det_csv(const std::filesystem::path& path,
                   const std::vector<DetPoint>& points) {
  std::string text = "threshold,far,frr\n";
  for (const auto& p : points) {
    text += format_double(p.threshold) + "," + format_double(p.far) + "," +
            format_double(p.frr) + "\n";
  }
  write_file_atomic(path, text);
}

}  // namespace fsv
