#pragma once
// Patch-score aggregation strategies: plain averaging over a patch subset,
// exact best-subset search (the exhaustive oracle), beam search over
// subsets, and the sparsely gated weighting softmax(top_k(H(x))).
//
// Subset search maximizes accuracy on the train-split images; the chosen
// subsets are additionally scored on the test split, which mirrors the
// diagnostic (and methodologically invalid) test-set search curves. All
// ties, argmax, top-k and subset ranking alike, break toward lower indices
// or lexicographically smaller subsets for determinism.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairs/binio.hpp"
#include "pairs/errors.hpp"
#include "pairs/scores.hpp"

namespace pairs {

struct Subset {
  std::vector<int> indices;  // sorted, unique
};

inline void validate(const Subset& subset, int n_patches) {
  if (subset.indices.empty()) throw EmptySubsetError();
  int prev = -1;
  for (int p : subset.indices) {
    if (p < 0 || p >= n_patches) {
      throw DimensionMismatchError("subset index out of patch range");
    }
    if (p <= prev) throw DimensionMismatchError("subset indices must be sorted unique");
    prev = p;
  }
}

inline Subset full_subset(int n_patches) {
  Subset s;
  s.indices.resize(static_cast<size_t>(n_patches));
  for (int p = 0; p < n_patches; ++p) s.indices[static_cast<size_t>(p)] = p;
  return s;
}

struct PredictionResult {
  std::vector<int> predicted;  // class per image
  long correct = 0, total = 0;
  long train_correct = 0, train_total = 0;
  long test_correct = 0, test_total = 0;

  double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
  double train_accuracy() const {
    return train_total > 0 ? static_cast<double>(train_correct) / train_total : 0.0;
  }
  double test_accuracy() const {
    return test_total > 0 ? static_cast<double>(test_correct) / test_total : 0.0;
  }
};

namespace detail {

inline int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline int predict_mean_class(const ScoreTensor& scores, int image,
                              std::span<const int> subset, std::vector<double>& sums) {
  sums.assign(static_cast<size_t>(scores.n_classes), 0.0);
  for (int p : subset) {
    const auto row = scores.row(image, p);
    for (int c = 0; c < scores.n_classes; ++c) sums[static_cast<size_t>(c)] += row[c];
  }
  return argmax_lowest(sums);
}

inline PredictionResult tally(const ScoreTensor& scores, std::vector<int> predicted) {
  PredictionResult r;
  r.total = scores.n_images;
  for (int i = 0; i < scores.n_images; ++i) {
    const bool ok = predicted[static_cast<size_t>(i)] == scores.labels[static_cast<size_t>(i)];
    r.correct += ok ? 1 : 0;
    if (scores.split[static_cast<size_t>(i)] == kSplitTrain) {
      ++r.train_total;
      r.train_correct += ok ? 1 : 0;
    } else {
      ++r.test_total;
      r.test_correct += ok ? 1 : 0;
    }
  }
  r.predicted = std::move(predicted);
  return r;
}

}  // namespace detail

// Mean of the subset's score vectors per image, argmax over classes.
inline PredictionResult average_predict(const ScoreTensor& scores, const Subset& subset) {
  validate(scores);
  validate(subset, scores.n_patches);
  std::vector<int> predicted(static_cast<size_t>(scores.n_images));
  std::vector<double> sums;
  for (int i = 0; i < scores.n_images; ++i) {
    predicted[static_cast<size_t>(i)] =
        detail::predict_mean_class(scores, i, subset.indices, sums);
  }
  return detail::tally(scores, std::move(predicted));
}

struct SubsetScore {
  Subset subset;
  long train_correct = 0, train_total = 0;
  long test_correct = 0, test_total = 0;

  double train_accuracy() const {
    return train_total > 0 ? static_cast<double>(train_correct) / train_total : 0.0;
  }
  double test_accuracy() const {
    return test_total > 0 ? static_cast<double>(test_correct) / test_total : 0.0;
  }
};

namespace detail {

// Correct count over one split only; the subset-search objective.
inline long subset_split_correct(const ScoreTensor& scores, std::span<const int> subset,
                                 uint8_t split_flag) {
  long correct = 0;
  std::vector<double> sums;
  for (int i = 0; i < scores.n_images; ++i) {
    if (scores.split[static_cast<size_t>(i)] != split_flag) continue;
    if (predict_mean_class(scores, i, subset, sums) == scores.labels[static_cast<size_t>(i)]) {
      ++correct;
    }
  }
  return correct;
}

inline SubsetScore score_subset(const ScoreTensor& scores, Subset subset) {
  const PredictionResult r = average_predict(scores, subset);
  SubsetScore s;
  s.subset = std::move(subset);
  s.train_correct = r.train_correct;
  s.train_total = r.train_total;
  s.test_correct = r.test_correct;
  s.test_total = r.test_total;
  return s;
}

inline void require_train_split(const ScoreTensor& scores) {
  if (scores.count_split(kSplitTrain) == 0) {
    throw DegenerateSplitError("subset search needs at least one train-split image");
  }
}

inline unsigned long long binomial_capped(int n, int k, unsigned long long cap) {
  if (k < 0 || k > n) return 0;
  unsigned long long c = 1;
  for (int i = 1; i <= k; ++i) {
    c = c * static_cast<unsigned long long>(n - k + i) / static_cast<unsigned long long>(i);
    if (c > cap) return cap + 1;
  }
  return c;
}

}  // namespace detail

// Exact maximizer of train-split accuracy over all k-subsets. Refuses to
// enumerate more than `cap` combinations.
inline SubsetScore brute_force_best_subset(const ScoreTensor& scores, int k,
                                           unsigned long long cap = 2'000'000ull) {
  validate(scores);
  detail::require_train_split(scores);
  if (k < 1 || k > scores.n_patches) {
    throw DimensionMismatchError("subset size out of range");
  }
  if (detail::binomial_capped(scores.n_patches, k, cap) > cap) {
    throw TooLargeError("C(n_patches, k) exceeds the enumeration cap");
  }

  std::vector<int> comb(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) comb[static_cast<size_t>(i)] = i;
  std::vector<int> best;
  long best_correct = -1;
  while (true) {
    const long correct = detail::subset_split_correct(scores, comb, kSplitTrain);
    if (correct > best_correct) {  // strict: first (lexicographic) winner kept
      best_correct = correct;
      best = comb;
    }
    // next combination in lexicographic order
    int i = k - 1;
    while (i >= 0 && comb[static_cast<size_t>(i)] == scores.n_patches - k + i) --i;
    if (i < 0) break;
    ++comb[static_cast<size_t>(i)];
    for (int j = i + 1; j < k; ++j) {
      comb[static_cast<size_t>(j)] = comb[static_cast<size_t>(j - 1)] + 1;
    }
  }
  return detail::score_subset(scores, Subset{std::move(best)});
}

// Beam search over patch subsets. Iteration 1 ranks all singletons and
// keeps the best `beam_width`; each later iteration extends every kept
// subset by every absent patch, deduplicates, and keeps the best
// `beam_width` again. Returns the best subset per size 1..max_k.
inline std::vector<SubsetScore> beam_search_subsets(const ScoreTensor& scores,
                                                    int beam_width, int max_k) {
  validate(scores);
  detail::require_train_split(scores);
  if (beam_width < 1) throw ConstraintError("beam width must be >= 1");
  max_k = std::clamp(max_k, 1, scores.n_patches);

  struct Candidate {
    std::vector<int> subset;
    long train_correct = 0;
  };
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.train_correct != b.train_correct) return a.train_correct > b.train_correct;
    return a.subset < b.subset;
  };

  std::vector<SubsetScore> per_k;
  per_k.reserve(static_cast<size_t>(max_k));
  std::vector<Candidate> kept;
  for (int p = 0; p < scores.n_patches; ++p) {
    Candidate c{{p}, 0};
    c.train_correct = detail::subset_split_correct(scores, c.subset, kSplitTrain);
    kept.push_back(std::move(c));
  }
  std::sort(kept.begin(), kept.end(), better);
  if (static_cast<int>(kept.size()) > beam_width) kept.resize(static_cast<size_t>(beam_width));
  per_k.push_back(detail::score_subset(scores, Subset{kept.front().subset}));

  for (int size = 2; size <= max_k; ++size) {
    std::set<std::vector<int>> seen;
    std::vector<Candidate> grown;
    for (const auto& c : kept) {
      for (int p = 0; p < scores.n_patches; ++p) {
        if (std::binary_search(c.subset.begin(), c.subset.end(), p)) continue;
        std::vector<int> ns = c.subset;
        ns.insert(std::upper_bound(ns.begin(), ns.end(), p), p);
        if (!seen.insert(ns).second) continue;
        Candidate g{std::move(ns), 0};
        g.train_correct = detail::subset_split_correct(scores, g.subset, kSplitTrain);
        grown.push_back(std::move(g));
      }
    }
    std::sort(grown.begin(), grown.end(), better);
    if (static_cast<int>(grown.size()) > beam_width) grown.resize(static_cast<size_t>(beam_width));
    kept = std::move(grown);
    per_k.push_back(detail::score_subset(scores, Subset{kept.front().subset}));
  }
  return per_k;
}

// ---------------------------------------------------------------------------
// Sparsely gated patch weighting: G(x) = softmax(top_k(H(x))) with
// H(x) = W^T x + b. Exactly k weights are nonzero; the masked entries sit
// at zero. The sigmoid variant replaces the softmax with per-patch
// sigmoids normalized to sum 1.
// ---------------------------------------------------------------------------

struct GateModel {
  int n_features = 0;
  int n_patches = 0;
  int k = 1;
  bool use_sigmoid = false;
  uint64_t seed = 0;
  std::vector<double> weight;  // n_features * n_patches, feature-major
  std::vector<double> bias;    // n_patches
};

inline void validate(const GateModel& m) {
  if (m.n_features < 0 || m.n_patches <= 0) {
    throw DimensionMismatchError("gate dims must be positive");
  }
  if (m.k < 1 || m.k > m.n_patches) {
    throw DimensionMismatchError("gate k must satisfy 1 <= k <= n_patches");
  }
  if (m.weight.size() != static_cast<size_t>(m.n_features) * m.n_patches ||
      m.bias.size() != static_cast<size_t>(m.n_patches)) {
    throw DimensionMismatchError("gate parameter shapes");
  }
  for (double v : m.weight) {
    if (!std::isfinite(v)) throw ConstraintError("gate weights must be finite");
  }
  for (double v : m.bias) {
    if (!std::isfinite(v)) throw ConstraintError("gate bias must be finite");
  }
}

// A zero gate: H(x) == 0 for every input, so top-k keeps the k lowest
// patch indices with uniform weights.
inline GateModel zero_gate(int n_features, int n_patches, int k) {
  GateModel m;
  m.n_features = n_features;
  m.n_patches = n_patches;
  m.k = k;
  m.weight.assign(static_cast<size_t>(n_features) * n_patches, 0.0);
  m.bias.assign(static_cast<size_t>(n_patches), 0.0);
  return m;
}

inline std::vector<double> gate_weights(const GateModel& m, std::span<const double> x) {
  validate(m);
  if (x.size() != static_cast<size_t>(m.n_features)) {
    throw DimensionMismatchError("gate feature length");
  }
  std::vector<double> h(static_cast<size_t>(m.n_patches));
  for (int p = 0; p < m.n_patches; ++p) h[static_cast<size_t>(p)] = m.bias[static_cast<size_t>(p)];
  for (int f = 0; f < m.n_features; ++f) {
    const double xf = x[static_cast<size_t>(f)];
    if (xf == 0.0) continue;
    const double* wrow = &m.weight[static_cast<size_t>(f) * m.n_patches];
    for (int p = 0; p < m.n_patches; ++p) h[static_cast<size_t>(p)] += wrow[p] * xf;
  }

  // top-k by value, ties toward the lower patch index
  std::vector<int> order(static_cast<size_t>(m.n_patches));
  for (int p = 0; p < m.n_patches; ++p) order[static_cast<size_t>(p)] = p;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (h[static_cast<size_t>(a)] != h[static_cast<size_t>(b)]) {
      return h[static_cast<size_t>(a)] > h[static_cast<size_t>(b)];
    }
    return a < b;
  });

  std::vector<double> weights(static_cast<size_t>(m.n_patches), 0.0);
  if (m.use_sigmoid) {
    double sum = 0.0;
    for (int r = 0; r < m.k; ++r) {
      const int p = order[static_cast<size_t>(r)];
      weights[static_cast<size_t>(p)] = 1.0 / (1.0 + std::exp(-h[static_cast<size_t>(p)]));
      sum += weights[static_cast<size_t>(p)];
    }
    for (double& w : weights) w /= sum;
  } else {
    double peak = h[static_cast<size_t>(order[0])];
    double sum = 0.0;
    for (int r = 0; r < m.k; ++r) {
      const int p = order[static_cast<size_t>(r)];
      weights[static_cast<size_t>(p)] = std::exp(h[static_cast<size_t>(p)] - peak);
      sum += weights[static_cast<size_t>(p)];
    }
    for (double& w : weights) w /= sum;
  }
  return weights;
}

inline int gate_predict(const GateModel& m, std::span<const double> x,
                        const ScoreTensor& scores, int image) {
  if (m.n_patches != scores.n_patches) {
    throw DimensionMismatchError("gate patch count != score tensor patch count");
  }
  const std::vector<double> w = gate_weights(m, x);
  std::vector<double> combined(static_cast<size_t>(scores.n_classes), 0.0);
  for (int p = 0; p < scores.n_patches; ++p) {
    const double wp = w[static_cast<size_t>(p)];
    if (wp == 0.0) continue;
    const auto row = scores.row(image, p);
    for (int c = 0; c < scores.n_classes; ++c) combined[static_cast<size_t>(c)] += wp * row[c];
  }
  return detail::argmax_lowest(combined);
}

// Gate features default to the image's concatenated patch scores.
inline std::vector<double> concat_scores_features(const ScoreTensor& scores, int image) {
  std::vector<double> x(static_cast<size_t>(scores.n_patches) * scores.n_classes);
  for (int p = 0; p < scores.n_patches; ++p) {
    const auto row = scores.row(image, p);
    for (int c = 0; c < scores.n_classes; ++c) {
      x[static_cast<size_t>(p) * scores.n_classes + c] = row[c];
    }
  }
  return x;
}

inline PredictionResult gate_predict_all(
    const GateModel& m, const ScoreTensor& scores,
    const std::vector<std::vector<double>>* features = nullptr) {
  validate(scores);
  if (features && features->size() != static_cast<size_t>(scores.n_images)) {
    throw DimensionMismatchError("feature row count != image count");
  }
  std::vector<int> predicted(static_cast<size_t>(scores.n_images));
  for (int i = 0; i < scores.n_images; ++i) {
    const std::vector<double> x =
        features ? (*features)[static_cast<size_t>(i)] : concat_scores_features(scores, i);
    predicted[static_cast<size_t>(i)] = gate_predict(m, x, scores, i);
  }
  return detail::tally(scores, std::move(predicted));
}

// ---------------------------------------------------------------------------
// Gate model file: magic "PGTE", u32 version, u32 json header length, the
// JSON header (dims and hyperparameters), then weight and bias as f64.
// ---------------------------------------------------------------------------

inline void save_gate_model(const std::filesystem::path& path, const GateModel& m) {
  validate(m);
  nlohmann::json header{{"format", "gate"},   {"n_features", m.n_features},
                        {"n_patches", m.n_patches}, {"k", m.k},
                        {"use_sigmoid", m.use_sigmoid}, {"seed", m.seed}};
  const std::string js = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingFileError(path.string());
  binio::write_magic(os, "PGTE");
  binio::write_u32(os, 1);
  binio::write_u32(os, static_cast<uint32_t>(js.size()));
  os.write(js.data(), static_cast<std::streamsize>(js.size()));
  binio::write_f64_array(os, m.weight);
  binio::write_f64_array(os, m.bias);
}

inline GateModel load_gate_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError(path.string());
  binio::expect_magic(is, "PGTE");
  const uint32_t version = binio::read_u32(is);
  if (version != 1) throw BadFormatError("unsupported gate model version");
  const uint32_t js_len = binio::read_u32(is);
  std::string js(js_len, '\0');
  binio::read_exact(is, js.data(), js_len);
  nlohmann::json header = nlohmann::json::parse(js, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "gate") {
    throw BadFormatError("bad gate model header");
  }
  GateModel m;
  m.n_features = header.at("n_features").get<int>();
  m.n_patches = header.at("n_patches").get<int>();
  m.k = header.at("k").get<int>();
  m.use_sigmoid = header.value("use_sigmoid", false);
  m.seed = header.value("seed", uint64_t{0});
  if (m.n_features < 0 || m.n_patches <= 0) {
    throw BadFormatError("gate model dims out of range");
  }
  m.weight.resize(static_cast<size_t>(m.n_features) * m.n_patches);
  m.bias.resize(static_cast<size_t>(m.n_patches));
  binio::read_f64_array(is, m.weight);
  binio::read_f64_array(is, m.bias);
  validate(m);
  return m;
}

}  // namespace pairs
