#include "pairs/aggregate.hpp"

#include <gtest/gtest.h>

#include <random>

#include "testutil.hpp"

using namespace pairs;

namespace {

ScoreTensor continuous_tensor(std::mt19937_64& rng, int n_images, int n_patches,
                              int n_classes, double train_fraction = 1.0) {
  ScoreTensor t = testutil::random_tensor(rng, n_images, n_patches, n_classes, train_fraction);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : t.data) v = u(rng);
  return t;
}

int naive_row_argmax(const ScoreTensor& t, int image, int patch) {
  int best = 0;
  for (int c = 1; c < t.n_classes; ++c) {
    if (t.at(image, patch, c) > t.at(image, patch, best)) best = c;
  }
  return best;
}

}  // namespace

TEST(AveragePredict, UniformPatchesCannotOutvoteOneHot) {
  // patch 0 one-hot correct, the rest uniform: averaging all patches still
  // predicts the label everywhere
  std::mt19937_64 rng(51);
  const int n_images = 12, n_patches = 5, n_classes = 4;
  ScoreTensor t;
  t.n_images = n_images;
  t.n_patches = n_patches;
  t.n_classes = n_classes;
  t.data.assign(static_cast<size_t>(n_images) * n_patches * n_classes, 0.25f);
  t.split.assign(static_cast<size_t>(n_images), kSplitTrain);
  std::uniform_int_distribution<int> lab(0, n_classes - 1);
  t.labels.resize(static_cast<size_t>(n_images));
  for (int i = 0; i < n_images; ++i) {
    const int label = lab(rng);
    t.labels[static_cast<size_t>(i)] = label;
    for (int c = 0; c < n_classes; ++c) t.at(i, 0, c) = c == label ? 1.0f : 0.0f;
  }
  const PredictionResult r = average_predict(t, full_subset(n_patches));
  EXPECT_EQ(r.correct, n_images);
  EXPECT_DOUBLE_EQ(r.accuracy(), 1.0);
}

TEST(AveragePredict, SingletonSubsetEqualsPatchArgmax) {
  std::mt19937_64 rng(52);
  const ScoreTensor t = continuous_tensor(rng, 25, 4, 3, 0.6);
  for (int p = 0; p < t.n_patches; ++p) {
    const PredictionResult r = average_predict(t, Subset{{p}});
    for (int i = 0; i < t.n_images; ++i) {
      EXPECT_EQ(r.predicted[static_cast<size_t>(i)], naive_row_argmax(t, i, p));
    }
  }
}

TEST(AveragePredict, SubsetValidation) {
  std::mt19937_64 rng(53);
  const ScoreTensor t = continuous_tensor(rng, 5, 3, 2);
  EXPECT_THROW(average_predict(t, Subset{}), EmptySubsetError);
  EXPECT_THROW(average_predict(t, Subset{{0, 3}}), DimensionMismatchError);
  EXPECT_THROW(average_predict(t, Subset{{1, 1}}), DimensionMismatchError);
  EXPECT_THROW(average_predict(t, Subset{{2, 1}}), DimensionMismatchError);
}

TEST(AveragePredict, GlobalConstantShiftKeepsPredictions) {
  std::mt19937_64 rng(54);
  const ScoreTensor t = testutil::random_tensor(rng, 30, 6, 5);  // quantized 1/64
  ScoreTensor shifted = t;
  for (float& v : shifted.data) v += 0.25f;  // exactly representable
  const Subset subset{{0, 2, 5}};
  const PredictionResult a = average_predict(t, subset);
  const PredictionResult b = average_predict(shifted, subset);
  EXPECT_EQ(a.predicted, b.predicted);
}

TEST(AveragePredict, ClassPermutationEquivariance) {
  std::mt19937_64 rng(55);
  const ScoreTensor t = continuous_tensor(rng, 20, 4, 5);
  std::vector<int> perm{3, 0, 4, 1, 2};  // new index of each old class
  ScoreTensor permuted = t;
  for (int i = 0; i < t.n_images; ++i) {
    permuted.labels[static_cast<size_t>(i)] = perm[static_cast<size_t>(t.labels[static_cast<size_t>(i)])];
    for (int p = 0; p < t.n_patches; ++p) {
      for (int c = 0; c < t.n_classes; ++c) {
        permuted.at(i, p, perm[static_cast<size_t>(c)]) = t.at(i, p, c);
      }
    }
  }
  const PredictionResult a = average_predict(t, full_subset(4));
  const PredictionResult b = average_predict(permuted, full_subset(4));
  for (int i = 0; i < t.n_images; ++i) {
    EXPECT_EQ(b.predicted[static_cast<size_t>(i)],
              perm[static_cast<size_t>(a.predicted[static_cast<size_t>(i)])]);
  }
  EXPECT_EQ(a.correct, b.correct);
}

TEST(BruteForce, ConstructedPatchAccuracies) {
  std::mt19937_64 rng(56);
  const ScoreTensor t = testutil::tensor_with_patch_accuracy(rng, {0.2, 0.9, 0.5}, 200, 4);
  const SubsetScore best = brute_force_best_subset(t, 1);
  EXPECT_EQ(best.subset.indices, std::vector<int>{1});

  const SubsetScore all = brute_force_best_subset(t, 3);
  EXPECT_EQ(all.subset.indices, (std::vector<int>{0, 1, 2}));
}

TEST(BruteForce, TieBreaksTowardLowerIndex) {
  std::mt19937_64 rng(57);
  ScoreTensor t = continuous_tensor(rng, 15, 3, 3);
  t.at(0, 0, t.labels[0]) = 2.0f;  // patch 0 correct on image 0 at least
  // make patch 2 a copy of patch 0: {0} and {2} tie, {0} must win
  for (int i = 0; i < t.n_images; ++i) {
    for (int c = 0; c < t.n_classes; ++c) t.at(i, 2, c) = t.at(i, 0, c);
  }
  long correct0 = 0, correct1 = 0;
  for (int i = 0; i < t.n_images; ++i) {
    correct0 += naive_row_argmax(t, i, 0) == t.labels[static_cast<size_t>(i)] ? 1 : 0;
    correct1 += naive_row_argmax(t, i, 1) == t.labels[static_cast<size_t>(i)] ? 1 : 0;
  }
  if (correct1 >= correct0) {
    // nudge patch 1 to be strictly worse so the tie is between 0 and 2
    for (int i = 0; i < t.n_images; ++i) {
      const int label = t.labels[static_cast<size_t>(i)];
      for (int c = 0; c < t.n_classes; ++c) t.at(i, 1, c) = c == label ? 0.0f : 1.0f;
    }
  }
  const SubsetScore best = brute_force_best_subset(t, 1);
  EXPECT_EQ(best.subset.indices, std::vector<int>{0});
}

TEST(BruteForce, GuardsAndErrors) {
  std::mt19937_64 rng(58);
  ScoreTensor big = continuous_tensor(rng, 4, 30, 2);
  EXPECT_THROW(brute_force_best_subset(big, 15), TooLargeError);
  EXPECT_NO_THROW(brute_force_best_subset(big, 1));
  EXPECT_THROW(brute_force_best_subset(big, 0), DimensionMismatchError);

  ScoreTensor test_only = continuous_tensor(rng, 4, 3, 2);
  test_only.split.assign(4, kSplitTest);
  EXPECT_THROW(brute_force_best_subset(test_only, 1), DegenerateSplitError);
  EXPECT_THROW(beam_search_subsets(test_only, 2, 2), DegenerateSplitError);
}

TEST(BeamSearch, WideBeamMatchesBruteForce) {
  std::mt19937_64 rng(59);
  const int wide = 70;  // C(8,4), enough to hold every subset for n <= 8
  for (int trial = 0; trial < 12; ++trial) {
    const int n_patches = 2 + static_cast<int>(rng() % 7);
    const int n_classes = 2 + static_cast<int>(rng() % 4);
    const int n_images = 5 + static_cast<int>(rng() % 36);
    const ScoreTensor t = continuous_tensor(rng, n_images, n_patches, n_classes, 0.7);
    const auto per_k = beam_search_subsets(t, wide, n_patches);
    ASSERT_EQ(per_k.size(), static_cast<size_t>(n_patches));
    for (int k = 1; k <= n_patches; ++k) {
      const SubsetScore oracle = brute_force_best_subset(t, k);
      EXPECT_EQ(per_k[static_cast<size_t>(k - 1)].train_correct, oracle.train_correct)
          << "n=" << n_patches << " k=" << k;
      EXPECT_EQ(per_k[static_cast<size_t>(k - 1)].subset.indices, oracle.subset.indices);
    }
  }
}

TEST(BeamSearch, WidthOneIsGreedyForwardSelection) {
  std::mt19937_64 rng(60);
  const ScoreTensor t = continuous_tensor(rng, 30, 6, 3, 0.8);
  const auto beam = beam_search_subsets(t, 1, 6);

  // independent greedy referee
  std::vector<int> current;
  for (int step = 0; step < 6; ++step) {
    std::vector<int> best;
    long best_correct = -1;
    for (int p = 0; p < 6; ++p) {
      if (std::find(current.begin(), current.end(), p) != current.end()) continue;
      std::vector<int> cand = current;
      cand.insert(std::upper_bound(cand.begin(), cand.end(), p), p);
      long correct = 0;
      std::vector<double> sums;
      for (int i = 0; i < t.n_images; ++i) {
        if (t.split[static_cast<size_t>(i)] != kSplitTrain) continue;
        sums.assign(3, 0.0);
        for (int cp : cand) {
          for (int c = 0; c < 3; ++c) sums[static_cast<size_t>(c)] += t.at(i, cp, c);
        }
        int argmax = 0;
        for (int c = 1; c < 3; ++c) {
          if (sums[static_cast<size_t>(c)] > sums[static_cast<size_t>(argmax)]) argmax = c;
        }
        correct += argmax == t.labels[static_cast<size_t>(i)] ? 1 : 0;
      }
      if (correct > best_correct || (correct == best_correct && cand < best)) {
        best_correct = correct;
        best = cand;
      }
    }
    current = best;
    EXPECT_EQ(beam[static_cast<size_t>(step)].subset.indices, current);
    EXPECT_EQ(beam[static_cast<size_t>(step)].train_correct, best_correct);
  }
}

TEST(BeamSearch, DominantPatchWinsSizeOne) {
  std::mt19937_64 rng(61);
  // strictly decreasing per-patch accuracy: best singleton must be {0}
  const ScoreTensor t =
      testutil::tensor_with_patch_accuracy(rng, {0.95, 0.7, 0.45, 0.2}, 300, 5);
  const auto per_k = beam_search_subsets(t, 3, 2);
  EXPECT_EQ(per_k[0].subset.indices, std::vector<int>{0});
}

TEST(Gate, FullKConstantGateEqualsAverage) {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 5; ++trial) {
    const ScoreTensor t = continuous_tensor(rng, 20, 5, 4, 0.5);
    const GateModel gate = zero_gate(5 * 4, 5, 5);  // H(x) == 0: constant vector
    const PredictionResult g = gate_predict_all(gate, t);
    const PredictionResult a = average_predict(t, full_subset(5));
    EXPECT_EQ(g.predicted, a.predicted);
  }
}

TEST(Gate, KOneEqualsTopPatchArgmax) {
  std::mt19937_64 rng(63);
  const int n_patches = 6, n_classes = 3, n_images = 25;
  const ScoreTensor t = continuous_tensor(rng, n_images, n_patches, n_classes);
  GateModel gate;
  gate.n_features = n_patches * n_classes;
  gate.n_patches = n_patches;
  gate.k = 1;
  gate.weight.resize(static_cast<size_t>(gate.n_features) * n_patches);
  gate.bias.resize(static_cast<size_t>(n_patches));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& w : gate.weight) w = u(rng);
  for (double& b : gate.bias) b = u(rng);

  for (int i = 0; i < n_images; ++i) {
    const std::vector<double> x = concat_scores_features(t, i);
    // replicate H(x) and take its argmax
    std::vector<double> h = gate.bias;
    for (int f = 0; f < gate.n_features; ++f) {
      for (int p = 0; p < n_patches; ++p) {
        h[static_cast<size_t>(p)] += gate.weight[static_cast<size_t>(f) * n_patches + p] * x[static_cast<size_t>(f)];
      }
    }
    int top = 0;
    for (int p = 1; p < n_patches; ++p) {
      if (h[static_cast<size_t>(p)] > h[static_cast<size_t>(top)]) top = p;
    }
    EXPECT_EQ(gate_predict(gate, x, t, i), naive_row_argmax(t, i, top));
  }
}

TEST(Gate, WeightsSumToOneWithAtMostKNonzeros) {
  std::mt19937_64 rng(64);
  for (int trial = 0; trial < 30; ++trial) {
    const int n_patches = 2 + static_cast<int>(rng() % 10);
    const int n_features = 1 + static_cast<int>(rng() % 6);
    const int k = 1 + static_cast<int>(rng() % n_patches);
    GateModel gate;
    gate.n_features = n_features;
    gate.n_patches = n_patches;
    gate.k = k;
    gate.use_sigmoid = trial % 2 == 1;
    gate.weight.resize(static_cast<size_t>(n_features) * n_patches);
    gate.bias.resize(static_cast<size_t>(n_patches));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (double& w : gate.weight) w = u(rng);
    for (double& b : gate.bias) b = u(rng);
    std::vector<double> x(static_cast<size_t>(n_features));
    for (double& v : x) v = u(rng);

    const std::vector<double> weights = gate_weights(gate, x);
    double sum = 0.0;
    int nonzero = 0;
    for (double w : weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
      nonzero += w != 0.0 ? 1 : 0;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_LE(nonzero, k);
    if (!gate.use_sigmoid) {
      EXPECT_EQ(nonzero, k);
    }
  }
}

TEST(Gate, DimensionChecksAndModelIo) {
  testutil::TempDir tmp;
  std::mt19937_64 rng(65);
  const ScoreTensor t = continuous_tensor(rng, 4, 3, 2);
  GateModel gate = zero_gate(6, 3, 2);
  std::vector<double> short_x(5);
  EXPECT_THROW(gate_weights(gate, short_x), DimensionMismatchError);
  GateModel bad_k = gate;
  bad_k.k = 4;
  EXPECT_THROW(gate_weights(bad_k, std::vector<double>(6)), DimensionMismatchError);

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& w : gate.weight) w = u(rng);
  for (double& b : gate.bias) b = u(rng);
  gate.use_sigmoid = true;
  gate.seed = 99;
  save_gate_model(tmp / "gate.bin", gate);
  const GateModel back = load_gate_model(tmp / "gate.bin");
  EXPECT_EQ(back.n_features, gate.n_features);
  EXPECT_EQ(back.n_patches, gate.n_patches);
  EXPECT_EQ(back.k, gate.k);
  EXPECT_EQ(back.use_sigmoid, true);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.weight, gate.weight);  // bit-exact doubles
  EXPECT_EQ(back.bias, gate.bias);

  EXPECT_THROW(load_gate_model(tmp / "missing.bin"), MissingFileError);
}

TEST(ScoreTensorIo, WriteReadIdentityAndCsv) {
  testutil::TempDir tmp;
  std::mt19937_64 rng(66);
  const ScoreTensor t = testutil::random_tensor(rng, 7, 4, 3, 0.5);
  write_score_tensor(tmp / "s.pscr", t);
  const ScoreTensor back = read_score_tensor(tmp / "s.pscr");
  EXPECT_EQ(back.n_images, t.n_images);
  EXPECT_EQ(back.n_patches, t.n_patches);
  EXPECT_EQ(back.n_classes, t.n_classes);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.split, t.split);
  EXPECT_EQ(back.data, t.data);  // bit-exact floats

  std::ostringstream csv;
  write_scores_csv(csv, t);
  const std::string text = csv.str();
  EXPECT_NE(text.find("image_id,patch_id,class0,class1,class2"), std::string::npos);
  // one header plus images*patches rows
  EXPECT_EQ(static_cast<long>(std::count(text.begin(), text.end(), '\n')), 1 + 7 * 4);

  {
    std::ofstream os(tmp / "junk.pscr", std::ios::binary);
    os << "not a tensor";
  }
  EXPECT_THROW(read_score_tensor(tmp / "junk.pscr"), BadFormatError);
}
