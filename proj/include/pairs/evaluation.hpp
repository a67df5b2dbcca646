#pragma once
// Keypoint and patch evaluation: PCK scoring, per-patch classification
// accuracy, and the correct-patch-count difficulty histogram.
//
// A prediction is PCK-correct when ||p - g||_2 <= c * max(box_w, box_h),
// boundary inclusive. Per-keypoint PCK is computed over images where that
// ground-truth keypoint is visible; "Overall" is the micro-average over
// all evaluated instances (the macro average of the per-keypoint row is
// also reported for comparison).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pairs/annotation.hpp"
#include "pairs/errors.hpp"
#include "pairs/geometry.hpp"
#include "pairs/scores.hpp"

namespace pairs {

struct PckConfig {
  double c = 0.1;    // threshold factor; the paper never states its value
  double box_w = 0;  // per-image bounding box, pixels
  double box_h = 0;
};

inline bool pck_correct(Point2 pred, Point2 gt, const PckConfig& cfg) {
  if (!(cfg.c > 0.0) || !(cfg.box_w > 0.0) || !(cfg.box_h > 0.0)) {
    throw ConstraintError("PCK config requires c > 0 and positive box dims");
  }
  return distance(pred, gt) <= cfg.c * std::max(cfg.box_w, cfg.box_h);
}

struct BoxSize {
  double w = 0;
  double h = 0;
};

struct PckReport {
  std::vector<std::string> keypoint_names;
  std::vector<double> per_keypoint_percent;  // 0 when never evaluated
  std::vector<long> evaluated;               // visible instances per keypoint
  std::vector<long> correct;
  long total_evaluated = 0;
  long total_correct = 0;
  double overall_percent = 0.0;  // micro-average over instances
  double macro_percent = 0.0;    // mean of per-keypoint percentages
};

inline PckReport pck_report(const std::map<std::string, std::vector<Point2>>& preds,
                            const std::map<std::string, PoseAnnotation>& gts,
                            const std::map<std::string, BoxSize>& boxes,
                            double c,
                            const std::vector<std::string>& keypoint_names) {
  if (preds.size() != gts.size()) {
    throw MismatchedIdsError("prediction and ground-truth image sets differ in size");
  }
  const size_t n_kp = keypoint_names.size();
  PckReport report;
  report.keypoint_names = keypoint_names;
  report.per_keypoint_percent.assign(n_kp, 0.0);
  report.evaluated.assign(n_kp, 0);
  report.correct.assign(n_kp, 0);

  for (const auto& [id, pred] : preds) {
    auto git = gts.find(id);
    if (git == gts.end()) throw MismatchedIdsError("no ground truth for image " + id);
    auto bit = boxes.find(id);
    if (bit == boxes.end()) throw MismatchedIdsError("no bounding box for image " + id);
    const PoseAnnotation& gt = git->second;
    if (pred.size() != n_kp || gt.size() != n_kp) {
      throw DimensionMismatchError("keypoint count differs from schema for image " + id);
    }
    PckConfig cfg{c, bit->second.w, bit->second.h};
    for (size_t k = 0; k < n_kp; ++k) {
      if (!gt[k].visible) continue;  // invisible gt excluded from denominators
      ++report.evaluated[k];
      if (pck_correct(pred[k], gt[k].pos, cfg)) ++report.correct[k];
    }
  }

  double macro_sum = 0.0;
  size_t macro_n = 0;
  for (size_t k = 0; k < n_kp; ++k) {
    report.total_evaluated += report.evaluated[k];
    report.total_correct += report.correct[k];
    if (report.evaluated[k] > 0) {
      report.per_keypoint_percent[k] =
          100.0 * static_cast<double>(report.correct[k]) / report.evaluated[k];
      macro_sum += report.per_keypoint_percent[k];
      ++macro_n;
    }
  }
  report.overall_percent =
      report.total_evaluated > 0
          ? 100.0 * static_cast<double>(report.total_correct) / report.total_evaluated
          : 0.0;
  report.macro_percent = macro_n > 0 ? macro_sum / static_cast<double>(macro_n) : 0.0;
  return report;
}

namespace detail {

inline std::string percent_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace detail

// Aligned two-column table, one keypoint per row in the given order with
// "Overall" last.
inline std::string render_pck_table(const PckReport& r) {
  size_t name_w = 7;  // "Overall"
  for (const auto& n : r.keypoint_names) name_w = std::max(name_w, n.size());
  std::ostringstream os;
  os << std::string(name_w, '-') << "-------\n";
  for (size_t k = 0; k < r.keypoint_names.size(); ++k) {
    os << r.keypoint_names[k]
       << std::string(name_w - r.keypoint_names[k].size(), ' ') << "  "
       << detail::percent_str(r.per_keypoint_percent[k]) << '\n';
  }
  os << std::string(name_w, '-') << "-------\n";
  os << "Overall" << std::string(name_w - 7, ' ') << "  "
     << detail::percent_str(r.overall_percent) << '\n';
  return os.str();
}

inline std::string render_pck_tsv(const PckReport& r) {
  std::ostringstream os;
  os << "keypoint\tpck\tevaluated\tcorrect\n";
  for (size_t k = 0; k < r.keypoint_names.size(); ++k) {
    os << r.keypoint_names[k] << '\t' << detail::percent_str(r.per_keypoint_percent[k])
       << '\t' << r.evaluated[k] << '\t' << r.correct[k] << '\n';
  }
  os << "Overall\t" << detail::percent_str(r.overall_percent) << '\t'
     << r.total_evaluated << '\t' << r.total_correct << '\n';
  return os.str();
}

namespace detail {

inline int argmax_class(std::span<const float> row) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(row.size()); ++c) {
    if (row[c] > row[best]) best = c;  // ties break lowest index
  }
  return best;
}

inline void check_labels(const ScoreTensor& scores, std::span<const int> labels) {
  if (labels.size() != static_cast<size_t>(scores.n_images)) {
    throw DimensionMismatchError("label count != image count");
  }
  for (int l : labels) {
    if (l < 0 || l >= scores.n_classes) {
      throw DimensionMismatchError("label out of class range");
    }
  }
}

}  // namespace detail

// Fraction of images whose argmax prediction from patch p alone equals the
// label, for each patch.
inline std::vector<double> patch_accuracy(const ScoreTensor& scores,
                                          std::span<const int> labels) {
  validate(scores);
  detail::check_labels(scores, labels);
  std::vector<double> acc(static_cast<size_t>(scores.n_patches), 0.0);
  if (scores.n_images == 0) return acc;
  for (int p = 0; p < scores.n_patches; ++p) {
    long correct = 0;
    for (int i = 0; i < scores.n_images; ++i) {
      if (detail::argmax_class(scores.row(i, p)) == labels[static_cast<size_t>(i)]) {
        ++correct;
      }
    }
    acc[static_cast<size_t>(p)] = static_cast<double>(correct) / scores.n_images;
  }
  return acc;
}

inline std::vector<double> patch_accuracy(const ScoreTensor& scores) {
  return patch_accuracy(scores, scores.labels);
}

// Bucket k counts the images with exactly k individually correct patches;
// hard cases pile up near bucket 0.
inline std::vector<long> difficulty_histogram(const ScoreTensor& scores,
                                              std::span<const int> labels) {
  validate(scores);
  detail::check_labels(scores, labels);
  std::vector<long> hist(static_cast<size_t>(scores.n_patches) + 1, 0);
  for (int i = 0; i < scores.n_images; ++i) {
    int n_correct = 0;
    for (int p = 0; p < scores.n_patches; ++p) {
      if (detail::argmax_class(scores.row(i, p)) == labels[static_cast<size_t>(i)]) {
        ++n_correct;
      }
    }
    ++hist[static_cast<size_t>(n_correct)];
  }
  return hist;
}

inline std::vector<long> difficulty_histogram(const ScoreTensor& scores) {
  return difficulty_histogram(scores, scores.labels);
}

inline std::string render_histogram_csv(const std::vector<long>& hist) {
  std::ostringstream os;
  os << "bucket,count\n";
  for (size_t k = 0; k < hist.size(); ++k) os << k << ',' << hist[k] << '\n';
  return os.str();
}

}  // namespace pairs
