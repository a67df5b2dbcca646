#pragma once
// Static patch weighting: a one-hidden-layer MLP over the concatenated
// patch scores, hidden layer followed by batch normalization, ReLU, and a
// linear output layer. Trained with plain mini-batch gradient descent on
// softmax cross-entropy; every random draw flows from one seed, so
// training is deterministic.
//
// Train-mode forward normalizes with the current batch's statistics and
// feeds the running moments with momentum 0.9; eval mode normalizes with
// the running statistics (eps 1e-5).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairs/aggregate.hpp"
#include "pairs/binio.hpp"
#include "pairs/errors.hpp"
#include "pairs/scores.hpp"

namespace pairs {

struct MlpModel {
  int in_dim = 0;
  int hidden = 1024;
  int n_classes = 0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
  uint64_t seed = 0;
  std::vector<double> w1;            // in_dim * hidden, input-major
  std::vector<double> b1;            // hidden
  std::vector<double> gamma, beta;   // hidden
  std::vector<double> running_mean;  // hidden
  std::vector<double> running_var;   // hidden
  std::vector<double> w2;            // hidden * n_classes, hidden-major
  std::vector<double> b2;            // n_classes
};

inline void validate(const MlpModel& m) {
  if (m.in_dim <= 0 || m.hidden <= 0 || m.n_classes <= 0) {
    throw DimensionMismatchError("mlp dims must be positive");
  }
  auto expect = [](const std::vector<double>& v, size_t n, const char* what) {
    if (v.size() != n) throw DimensionMismatchError(std::string("mlp shape: ") + what);
    for (double x : v) {
      if (!std::isfinite(x)) throw ConstraintError(std::string("mlp non-finite: ") + what);
    }
  };
  const size_t H = static_cast<size_t>(m.hidden);
  expect(m.w1, static_cast<size_t>(m.in_dim) * H, "w1");
  expect(m.b1, H, "b1");
  expect(m.gamma, H, "gamma");
  expect(m.beta, H, "beta");
  expect(m.running_mean, H, "running_mean");
  expect(m.running_var, H, "running_var");
  expect(m.w2, H * static_cast<size_t>(m.n_classes), "w2");
  expect(m.b2, static_cast<size_t>(m.n_classes), "b2");
  for (double v : m.running_var) {
    if (v < 0.0) throw ConstraintError("running variance must be >= 0");
  }
}

inline MlpModel make_mlp(int in_dim, int hidden, int n_classes, uint64_t seed) {
  if (in_dim <= 0 || hidden <= 0 || n_classes <= 0) {
    throw DimensionMismatchError("mlp dims must be positive");
  }
  MlpModel m;
  m.in_dim = in_dim;
  m.hidden = hidden;
  m.n_classes = n_classes;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  const double lim1 = std::sqrt(6.0 / (in_dim + hidden));
  const double lim2 = std::sqrt(6.0 / (hidden + n_classes));
  std::uniform_real_distribution<double> d1(-lim1, lim1), d2(-lim2, lim2);
  m.w1.resize(static_cast<size_t>(in_dim) * hidden);
  for (double& w : m.w1) w = d1(rng);
  m.w2.resize(static_cast<size_t>(hidden) * n_classes);
  for (double& w : m.w2) w = d2(rng);
  m.b1.assign(static_cast<size_t>(hidden), 0.0);
  m.gamma.assign(static_cast<size_t>(hidden), 1.0);
  m.beta.assign(static_cast<size_t>(hidden), 0.0);
  m.running_mean.assign(static_cast<size_t>(hidden), 0.0);
  m.running_var.assign(static_cast<size_t>(hidden), 1.0);
  m.b2.assign(static_cast<size_t>(n_classes), 0.0);
  return m;
}

enum class MlpMode { Eval, Train };

struct MlpForwardCache {
  int batch = 0;
  std::vector<double> z1;          // batch * hidden, pre-BN
  std::vector<double> xhat;        // batch * hidden, normalized
  std::vector<double> act;         // batch * hidden, post-ReLU
  std::vector<double> mean, var;   // hidden (the statistics used)
  std::vector<double> logits;      // batch * n_classes
};

inline void mlp_forward_batch(const MlpModel& m, std::span<const double> X, int batch,
                              MlpMode mode, MlpForwardCache& cache) {
  if (batch <= 0 || X.size() != static_cast<size_t>(batch) * m.in_dim) {
    throw DimensionMismatchError("mlp input batch shape");
  }
  const size_t H = static_cast<size_t>(m.hidden);
  cache.batch = batch;
  cache.z1.assign(static_cast<size_t>(batch) * H, 0.0);
  for (int i = 0; i < batch; ++i) {
    double* z = &cache.z1[static_cast<size_t>(i) * H];
    for (size_t j = 0; j < H; ++j) z[j] = m.b1[j];
    const double* x = &X[static_cast<size_t>(i) * m.in_dim];
    for (int f = 0; f < m.in_dim; ++f) {
      const double xf = x[f];
      if (xf == 0.0) continue;
      const double* wrow = &m.w1[static_cast<size_t>(f) * H];
      for (size_t j = 0; j < H; ++j) z[j] += wrow[j] * xf;
    }
  }

  if (mode == MlpMode::Train) {
    cache.mean.assign(H, 0.0);
    cache.var.assign(H, 0.0);
    for (int i = 0; i < batch; ++i) {
      const double* z = &cache.z1[static_cast<size_t>(i) * H];
      for (size_t j = 0; j < H; ++j) cache.mean[j] += z[j];
    }
    for (size_t j = 0; j < H; ++j) cache.mean[j] /= batch;
    for (int i = 0; i < batch; ++i) {
      const double* z = &cache.z1[static_cast<size_t>(i) * H];
      for (size_t j = 0; j < H; ++j) {
        const double d = z[j] - cache.mean[j];
        cache.var[j] += d * d;
      }
    }
    for (size_t j = 0; j < H; ++j) cache.var[j] /= batch;  // biased, matches backward
  } else {
    cache.mean = m.running_mean;
    cache.var = m.running_var;
  }

  cache.xhat.resize(static_cast<size_t>(batch) * H);
  cache.act.resize(static_cast<size_t>(batch) * H);
  for (int i = 0; i < batch; ++i) {
    const double* z = &cache.z1[static_cast<size_t>(i) * H];
    double* xh = &cache.xhat[static_cast<size_t>(i) * H];
    double* a = &cache.act[static_cast<size_t>(i) * H];
    for (size_t j = 0; j < H; ++j) {
      xh[j] = (z[j] - cache.mean[j]) / std::sqrt(cache.var[j] + m.bn_eps);
      const double y = m.gamma[j] * xh[j] + m.beta[j];
      a[j] = y > 0.0 ? y : 0.0;
    }
  }

  cache.logits.assign(static_cast<size_t>(batch) * m.n_classes, 0.0);
  for (int i = 0; i < batch; ++i) {
    double* lg = &cache.logits[static_cast<size_t>(i) * m.n_classes];
    for (int c = 0; c < m.n_classes; ++c) lg[c] = m.b2[static_cast<size_t>(c)];
    const double* a = &cache.act[static_cast<size_t>(i) * H];
    for (size_t j = 0; j < H; ++j) {
      const double aj = a[j];
      if (aj == 0.0) continue;
      const double* wrow = &m.w2[j * static_cast<size_t>(m.n_classes)];
      for (int c = 0; c < m.n_classes; ++c) lg[c] += wrow[c] * aj;
    }
  }
}

inline std::vector<double> mlp_forward(const MlpModel& m, std::span<const double> x,
                                       MlpMode mode = MlpMode::Eval) {
  validate(m);
  MlpForwardCache cache;
  mlp_forward_batch(m, x, 1, mode, cache);
  return cache.logits;
}

// Fold the batch statistics into the running moments.
inline void update_running_stats(MlpModel& m, const MlpForwardCache& cache) {
  for (size_t j = 0; j < static_cast<size_t>(m.hidden); ++j) {
    m.running_mean[j] = m.bn_momentum * m.running_mean[j] + (1.0 - m.bn_momentum) * cache.mean[j];
    m.running_var[j] = m.bn_momentum * m.running_var[j] + (1.0 - m.bn_momentum) * cache.var[j];
  }
}

struct MlpGradients {
  std::vector<double> w1, b1, gamma, beta, w2, b2;
};

namespace detail {

inline void softmax_row(std::span<const double> logits, std::span<double> probs) {
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double sum = 0.0;
  for (size_t c = 0; c < logits.size(); ++c) {
    probs[c] = std::exp(logits[c] - peak);
    sum += probs[c];
  }
  for (size_t c = 0; c < logits.size(); ++c) probs[c] /= sum;
}

}  // namespace detail

// Mean softmax cross-entropy over the batch (train-mode forward) and its
// analytic gradients for every parameter, batch-norm statistics included.
inline double mlp_loss_and_gradients(const MlpModel& m, std::span<const double> X,
                                     std::span<const int> y, int batch,
                                     MlpGradients& g, MlpForwardCache& cache) {
  mlp_forward_batch(m, X, batch, MlpMode::Train, cache);
  const size_t H = static_cast<size_t>(m.hidden);
  const int C = m.n_classes;
  if (y.size() != static_cast<size_t>(batch)) {
    throw DimensionMismatchError("label count != batch");
  }

  g.w1.assign(m.w1.size(), 0.0);
  g.b1.assign(m.b1.size(), 0.0);
  g.gamma.assign(m.gamma.size(), 0.0);
  g.beta.assign(m.beta.size(), 0.0);
  g.w2.assign(m.w2.size(), 0.0);
  g.b2.assign(m.b2.size(), 0.0);

  double loss = 0.0;
  std::vector<double> probs(static_cast<size_t>(C));
  std::vector<double> dlogits(static_cast<size_t>(batch) * C);
  for (int i = 0; i < batch; ++i) {
    const int label = y[static_cast<size_t>(i)];
    if (label < 0 || label >= C) throw DimensionMismatchError("label out of range");
    std::span<const double> lg{&cache.logits[static_cast<size_t>(i) * C], static_cast<size_t>(C)};
    detail::softmax_row(lg, probs);
    loss += -std::log(std::max(probs[static_cast<size_t>(label)], 1e-300));
    for (int c = 0; c < C; ++c) {
      dlogits[static_cast<size_t>(i) * C + c] =
          (probs[static_cast<size_t>(c)] - (c == label ? 1.0 : 0.0)) / batch;
    }
  }
  loss /= batch;

  // output layer
  std::vector<double> dact(static_cast<size_t>(batch) * H, 0.0);
  for (int i = 0; i < batch; ++i) {
    const double* dl = &dlogits[static_cast<size_t>(i) * C];
    const double* a = &cache.act[static_cast<size_t>(i) * H];
    for (int c = 0; c < C; ++c) g.b2[static_cast<size_t>(c)] += dl[c];
    for (size_t j = 0; j < H; ++j) {
      const double* wrow = &m.w2[j * static_cast<size_t>(C)];
      double acc = 0.0;
      for (int c = 0; c < C; ++c) {
        g.w2[j * static_cast<size_t>(C) + c] += a[j] * dl[c];
        acc += wrow[c] * dl[c];
      }
      dact[static_cast<size_t>(i) * H + j] = acc;
    }
  }

  // ReLU and batch-norm backward (through the batch statistics)
  std::vector<double> dxhat(static_cast<size_t>(batch) * H);
  for (int i = 0; i < batch; ++i) {
    const double* xh = &cache.xhat[static_cast<size_t>(i) * H];
    const double* a = &cache.act[static_cast<size_t>(i) * H];
    double* dxh = &dxhat[static_cast<size_t>(i) * H];
    const double* da = &dact[static_cast<size_t>(i) * H];
    for (size_t j = 0; j < H; ++j) {
      const double dy = a[j] > 0.0 ? da[j] : 0.0;
      g.gamma[j] += dy * xh[j];
      g.beta[j] += dy;
      dxh[j] = dy * m.gamma[j];
    }
  }

  std::vector<double> dz(static_cast<size_t>(batch) * H);
  for (size_t j = 0; j < H; ++j) {
    const double istd = 1.0 / std::sqrt(cache.var[j] + m.bn_eps);
    double dvar = 0.0, dmu = 0.0;
    for (int i = 0; i < batch; ++i) {
      const double dxh = dxhat[static_cast<size_t>(i) * H + j];
      const double centered = cache.z1[static_cast<size_t>(i) * H + j] - cache.mean[j];
      dvar += dxh * centered * (-0.5) * istd * istd * istd;
      dmu += dxh * (-istd);
    }
    for (int i = 0; i < batch; ++i) {
      const double dxh = dxhat[static_cast<size_t>(i) * H + j];
      const double centered = cache.z1[static_cast<size_t>(i) * H + j] - cache.mean[j];
      dz[static_cast<size_t>(i) * H + j] =
          dxh * istd + dvar * 2.0 * centered / batch + dmu / batch;
    }
  }

  for (int i = 0; i < batch; ++i) {
    const double* x = &X[static_cast<size_t>(i) * m.in_dim];
    const double* dzrow = &dz[static_cast<size_t>(i) * H];
    for (size_t j = 0; j < H; ++j) g.b1[j] += dzrow[j];
    for (int f = 0; f < m.in_dim; ++f) {
      const double xf = x[f];
      if (xf == 0.0) continue;
      double* grow = &g.w1[static_cast<size_t>(f) * H];
      for (size_t j = 0; j < H; ++j) grow[j] += xf * dzrow[j];
    }
  }
  return loss;
}

inline void sgd_step(MlpModel& m, const MlpGradients& g, double lr) {
  auto step = [lr](std::vector<double>& p, const std::vector<double>& gp) {
    for (size_t i = 0; i < p.size(); ++i) p[i] -= lr * gp[i];
  };
  step(m.w1, g.w1);
  step(m.b1, g.b1);
  step(m.gamma, g.gamma);
  step(m.beta, g.beta);
  step(m.w2, g.w2);
  step(m.b2, g.b2);
}

// Eval-mode predictions over every image in the tensor.
inline PredictionResult mlp_predict_all(const MlpModel& m, const ScoreTensor& scores) {
  validate(m);
  validate(scores);
  if (m.in_dim != scores.n_patches * scores.n_classes) {
    throw DimensionMismatchError("mlp input dim != n_patches * n_classes");
  }
  std::vector<int> predicted(static_cast<size_t>(scores.n_images));
  MlpForwardCache cache;
  for (int i = 0; i < scores.n_images; ++i) {
    const std::vector<double> x = concat_scores_features(scores, i);
    mlp_forward_batch(m, x, 1, MlpMode::Eval, cache);
    predicted[static_cast<size_t>(i)] = detail::argmax_lowest(cache.logits);
  }
  return detail::tally(scores, std::move(predicted));
}

struct MlpTrainOptions {
  int batch_size = 64;
  double learning_rate = 1e-3;
  int epochs = 100;
  int hidden = 1024;
  uint64_t seed = 0;
  bool select_best_on_test = false;  // keep the epoch with the best held-out accuracy
};

struct MlpTrainResult {
  MlpModel model;
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

inline MlpTrainResult mlp_train(const ScoreTensor& scores, const MlpTrainOptions& opts = {}) {
  validate(scores);
  if (opts.batch_size < 1 || opts.epochs < 0 || opts.hidden < 1) {
    throw ConstraintError("bad training options");
  }
  std::vector<int> train_idx;
  for (int i = 0; i < scores.n_images; ++i) {
    if (scores.split[static_cast<size_t>(i)] == kSplitTrain) train_idx.push_back(i);
  }
  if (train_idx.empty()) throw DegenerateSplitError("mlp training needs train-split images");

  const int in_dim = scores.n_patches * scores.n_classes;
  MlpTrainResult result;
  result.model = make_mlp(in_dim, opts.hidden, scores.n_classes, opts.seed);
  MlpModel& model = result.model;

  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<double> bx;
  std::vector<int> by;
  MlpGradients grads;
  MlpForwardCache cache;
  MlpModel best;
  double best_acc = -1.0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_loss = 0.0;
    long seen = 0;
    for (size_t start = 0; start < train_idx.size(); start += static_cast<size_t>(opts.batch_size)) {
      const int bs = static_cast<int>(
          std::min(static_cast<size_t>(opts.batch_size), train_idx.size() - start));
      bx.assign(static_cast<size_t>(bs) * in_dim, 0.0);
      by.resize(static_cast<size_t>(bs));
      for (int b = 0; b < bs; ++b) {
        const int img = train_idx[start + static_cast<size_t>(b)];
        const std::vector<double> x = concat_scores_features(scores, img);
        std::copy(x.begin(), x.end(), bx.begin() + static_cast<size_t>(b) * in_dim);
        by[static_cast<size_t>(b)] = scores.labels[static_cast<size_t>(img)];
      }
      const double loss = mlp_loss_and_gradients(model, bx, by, bs, grads, cache);
      update_running_stats(model, cache);
      sgd_step(model, grads, opts.learning_rate);
      epoch_loss += loss * bs;
      seen += bs;
    }
    result.epoch_loss.push_back(seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0);

    if (opts.select_best_on_test && scores.count_split(kSplitTest) > 0) {
      const PredictionResult r = mlp_predict_all(model, scores);
      if (r.test_accuracy() > best_acc) {
        best_acc = r.test_accuracy();
        best = model;
      }
    }
  }
  if (opts.select_best_on_test && best_acc >= 0.0) model = best;

  const PredictionResult final_eval = mlp_predict_all(model, scores);
  result.train_accuracy = final_eval.train_accuracy();
  result.test_accuracy = final_eval.test_accuracy();
  return result;
}

// ---------------------------------------------------------------------------
// Model file: magic "PMLP", u32 version, u32 json header length, the JSON
// header, then w1, b1, gamma, beta, running_mean, running_var, w2, b2 as
// f64 in that order.
// ---------------------------------------------------------------------------

inline void save_mlp_model(const std::filesystem::path& path, const MlpModel& m) {
  validate(m);
  nlohmann::json header{{"format", "mlp"},     {"in_dim", m.in_dim},
                        {"hidden", m.hidden},  {"n_classes", m.n_classes},
                        {"bn_eps", m.bn_eps},  {"bn_momentum", m.bn_momentum},
                        {"seed", m.seed}};
  const std::string js = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingFileError(path.string());
  binio::write_magic(os, "PMLP");
  binio::write_u32(os, 1);
  binio::write_u32(os, static_cast<uint32_t>(js.size()));
  os.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const auto* arr : {&m.w1, &m.b1, &m.gamma, &m.beta, &m.running_mean,
                          &m.running_var, &m.w2, &m.b2}) {
    binio::write_f64_array(os, *arr);
  }
}

inline MlpModel load_mlp_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError(path.string());
  binio::expect_magic(is, "PMLP");
  const uint32_t version = binio::read_u32(is);
  if (version != 1) throw BadFormatError("unsupported mlp model version");
  const uint32_t js_len = binio::read_u32(is);
  std::string js(js_len, '\0');
  binio::read_exact(is, js.data(), js_len);
  nlohmann::json header = nlohmann::json::parse(js, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "mlp") {
    throw BadFormatError("bad mlp model header");
  }
  MlpModel m;
  m.in_dim = header.at("in_dim").get<int>();
  m.hidden = header.at("hidden").get<int>();
  m.n_classes = header.at("n_classes").get<int>();
  m.bn_eps = header.value("bn_eps", 1e-5);
  m.bn_momentum = header.value("bn_momentum", 0.9);
  m.seed = header.value("seed", uint64_t{0});
  if (m.in_dim <= 0 || m.hidden <= 0 || m.n_classes <= 0) {
    throw BadFormatError("mlp model dims out of range");
  }
  const size_t H = static_cast<size_t>(m.hidden);
  m.w1.resize(static_cast<size_t>(m.in_dim) * H);
  m.b1.resize(H);
  m.gamma.resize(H);
  m.beta.resize(H);
  m.running_mean.resize(H);
  m.running_var.resize(H);
  m.w2.resize(H * static_cast<size_t>(m.n_classes));
  m.b2.resize(static_cast<size_t>(m.n_classes));
  for (auto* arr : {&m.w1, &m.b1, &m.gamma, &m.beta, &m.running_mean,
                    &m.running_var, &m.w2, &m.b2}) {
    binio::read_f64_array(is, *arr);
  }
  validate(m);
  return m;
}

}  // namespace pairs
