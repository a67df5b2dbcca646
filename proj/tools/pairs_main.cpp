// pairs: pose-aligned patch toolkit CLI.
//
// Subcommands: schema check, pairs enumerate, extract, decode, pck,
// aggregate {avg,beam,gate,mlp}, difficulty. Exit codes: 0 success,
// 2 input-format error, 3 constraint violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pairs/aggregate.hpp"
#include "pairs/dataset.hpp"
#include "pairs/evaluation.hpp"
#include "pairs/extract.hpp"
#include "pairs/mlp.hpp"
#include "pairs/posetensor.hpp"
#include "pairs/schema.hpp"
#include "pairs/scores.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string join_indices(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) {
    throw pairs::BadFormatError("--size expects <width>x<height>, got " + s);
  }
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::logic_error&) {
    throw pairs::BadFormatError("--size expects <width>x<height>, got " + s);
  }
}

std::vector<int> parse_index_list(const std::string& s) {
  std::vector<int> out;
  std::string tok;
  std::istringstream iss(s);
  while (std::getline(iss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::logic_error&) {
      throw pairs::BadFormatError("--subset expects comma-separated indices");
    }
  }
  return out;
}

void print_prediction_summary(const pairs::PredictionResult& r) {
  std::cout << "overall accuracy: " << fmt4(r.accuracy()) << " (" << r.correct << "/"
            << r.total << ")\n";
  if (r.train_total > 0) {
    std::cout << "train accuracy:   " << fmt4(r.train_accuracy()) << " (" << r.train_correct
              << "/" << r.train_total << ")\n";
  }
  if (r.test_total > 0) {
    std::cout << "test accuracy:    " << fmt4(r.test_accuracy()) << " (" << r.test_correct
              << "/" << r.test_total << ")\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"pose-aligned keypoint-pair patch toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pairs 0.1.0");

  // ----- schema check -------------------------------------------------
  auto* schema_cmd = app.add_subcommand("schema", "schema utilities");
  schema_cmd->require_subcommand(1);
  auto* schema_check = schema_cmd->add_subcommand("check", "validate a schema file");
  std::string schema_file;
  schema_check->add_option("file", schema_file, "schema or parts.txt file")->required();

  // ----- pairs enumerate ----------------------------------------------
  auto* pairs_cmd = app.add_subcommand("pairs", "patch class utilities");
  pairs_cmd->require_subcommand(1);
  auto* enumerate_cmd = pairs_cmd->add_subcommand("enumerate", "list patch classes");
  std::string enum_schema;
  bool enum_merge = false;
  pairs::SymmetryNaming enum_naming;
  enumerate_cmd->add_option("--schema", enum_schema, "schema file")->required();
  enumerate_cmd->add_flag("--merge-symmetric", enum_merge, "merge symmetric pairs");
  enumerate_cmd->add_option("--left-prefix", enum_naming.left_prefix, "left name prefix");
  enumerate_cmd->add_option("--right-prefix", enum_naming.right_prefix, "right name prefix");

  // ----- extract -------------------------------------------------------
  auto* extract_cmd = app.add_subcommand("extract", "warp pose-aligned patches");
  std::string ex_root, ex_schema, ex_out, ex_size = "512x256", ex_policy = "all";
  bool ex_merge = false;
  pairs::SymmetryNaming ex_naming;
  double ex_fill = 0.5;
  int ex_threads = 0;
  extract_cmd->add_option("--root", ex_root, "dataset root directory")->required();
  extract_cmd->add_option("--schema", ex_schema, "schema file")->required();
  extract_cmd->add_option("--out", ex_out, "output directory")->required();
  extract_cmd->add_option("--size", ex_size, "patch size <w>x<h>, 2:1")
      ->capture_default_str();
  extract_cmd->add_option("--policy", ex_policy, "all|visible-only")
      ->check(CLI::IsMember({"all", "visible-only"}))
      ->capture_default_str();
  extract_cmd->add_flag("--merge-symmetric", ex_merge, "group by hybrid class directory");
  extract_cmd->add_option("--left-prefix", ex_naming.left_prefix, "left name prefix");
  extract_cmd->add_option("--right-prefix", ex_naming.right_prefix, "right name prefix");
  extract_cmd->add_option("--fill", ex_fill, "out-of-bounds fill value")->capture_default_str();
  extract_cmd->add_option("--threads", ex_threads, "worker threads (0 = auto)")
      ->capture_default_str();

  // ----- decode ---------------------------------------------------------
  auto* decode_cmd = app.add_subcommand("decode", "decode a pose tensor to keypoints");
  std::string dec_tensor, dec_out;
  double dec_threshold = -1.0;
  decode_cmd->add_option("--tensor", dec_tensor, "pose tensor file (PTNS)")->required();
  decode_cmd->add_option("--out", dec_out, "output keypoint JSON")->required();
  decode_cmd->add_option("--threshold", dec_threshold,
                         "confidence below this marks a keypoint invisible");

  // ----- pck -------------------------------------------------------------
  auto* pck_cmd = app.add_subcommand("pck", "PCK keypoint evaluation");
  std::string pck_pred, pck_gt, pck_tsv;
  double pck_c = 0.1;
  pck_cmd->add_option("--pred", pck_pred, "predicted keypoint JSON")->required();
  pck_cmd->add_option("--gt", pck_gt, "ground-truth dataset root")->required();
  pck_cmd->add_option("--c", pck_c, "threshold factor")->capture_default_str();
  pck_cmd->add_option("--tsv", pck_tsv, "also write a TSV report here");

  // ----- aggregate --------------------------------------------------------
  auto* agg_cmd = app.add_subcommand("aggregate", "combine patch scores");
  agg_cmd->require_subcommand(1);
  std::string agg_scores;

  auto* avg_cmd = agg_cmd->add_subcommand("avg", "average over a patch subset");
  std::string avg_subset;
  avg_cmd->add_option("--scores", agg_scores, "score tensor file (PSCR)")->required();
  avg_cmd->add_option("--subset", avg_subset, "comma-separated patch indices (default all)");

  auto* beam_cmd = agg_cmd->add_subcommand("beam", "beam search for the best subset per size");
  int beam_width = 10, beam_max_k = 0;
  beam_cmd->add_option("--scores", agg_scores, "score tensor file (PSCR)")->required();
  beam_cmd->add_option("--beam-width", beam_width, "candidates kept per iteration")
      ->capture_default_str();
  beam_cmd->add_option("--max-k", beam_max_k, "largest subset size (0 = all patches)")
      ->capture_default_str();

  auto* gate_cmd = agg_cmd->add_subcommand("gate", "sparse top-k gated weighting");
  int gate_k = 0;
  std::string gate_model_file;
  bool gate_sigmoid = false;
  gate_cmd->add_option("--scores", agg_scores, "score tensor file (PSCR)")->required();
  gate_cmd->add_option("--k", gate_k, "number of nonzero weights (0 = all patches)")
      ->capture_default_str();
  gate_cmd->add_option("--model", gate_model_file, "gate model file (default: zero gate)");
  gate_cmd->add_flag("--sigmoid", gate_sigmoid, "sigmoid weights instead of softmax");

  auto* mlp_cmd = agg_cmd->add_subcommand("mlp", "train the static-weighting MLP");
  pairs::MlpTrainOptions mlp_opts;
  std::string mlp_save;
  bool mlp_select_best = false;
  mlp_cmd->add_option("--scores", agg_scores, "score tensor file (PSCR)")->required();
  mlp_cmd->add_option("--seed", mlp_opts.seed, "RNG seed")->capture_default_str();
  mlp_cmd->add_option("--epochs", mlp_opts.epochs, "training epochs")->capture_default_str();
  mlp_cmd->add_option("--lr", mlp_opts.learning_rate, "learning rate")->capture_default_str();
  mlp_cmd->add_option("--batch", mlp_opts.batch_size, "mini-batch size")->capture_default_str();
  mlp_cmd->add_option("--hidden", mlp_opts.hidden, "hidden width")->capture_default_str();
  mlp_cmd->add_flag("--select-best", mlp_select_best,
                    "keep the epoch with the best held-out accuracy");
  mlp_cmd->add_option("--save-model", mlp_save, "write the trained model here");

  // ----- difficulty ---------------------------------------------------------
  auto* diff_cmd = app.add_subcommand("difficulty", "correct-patch-count histogram");
  std::string diff_scores, diff_out;
  diff_cmd->add_option("--scores", diff_scores, "score tensor file (PSCR)")->required();
  diff_cmd->add_option("--out", diff_out, "write CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  if (schema_check->parsed()) {
    const pairs::KeypointSchema schema = pairs::load_schema(schema_file);
    const auto raw = pairs::enumerate_raw_pairs(schema);
    const auto hybrid = pairs::merge_symmetric(schema, raw);
    std::cout << "keypoints: " << schema.size() << '\n';
    std::cout << "symmetric pairs: " << schema.symmetric_pairs.size();
    if (!schema.symmetric_pairs.empty()) {
      std::cout << " (";
      for (size_t i = 0; i < schema.symmetric_pairs.size(); ++i) {
        const auto [a, b] = schema.symmetric_pairs[i];
        std::cout << (i ? ", " : "") << schema.names[static_cast<size_t>(a)] << "/"
                  << schema.names[static_cast<size_t>(b)];
      }
      std::cout << ")";
    }
    std::cout << '\n';
    std::cout << "raw pairs: " << raw.size() << '\n';
    std::cout << "hybrid classes: " << hybrid.size() << '\n';
    return 0;
  }

  if (enumerate_cmd->parsed()) {
    const pairs::KeypointSchema schema = pairs::load_schema(enum_schema);
    auto classes = pairs::enumerate_raw_pairs(schema);
    if (enum_merge) classes = pairs::merge_symmetric(schema, classes, enum_naming);
    for (const auto& cls : classes) {
      std::cout << cls.label() << '\t';
      for (size_t m = 0; m < cls.member_pairs.size(); ++m) {
        const auto [i, j] = cls.member_pairs[m];
        std::cout << (m ? " " : "") << i << ',' << j;
      }
      std::cout << '\n';
    }
    return 0;
  }

  if (extract_cmd->parsed()) {
    const pairs::KeypointSchema schema = pairs::load_schema(ex_schema);
    const pairs::DatasetIndex index = pairs::load_cub(ex_root);
    for (const auto& w : index.warnings) std::cerr << "warning: " << w << '\n';
    pairs::ExtractOptions opts;
    std::tie(opts.out_w, opts.out_h) = parse_size(ex_size);
    opts.policy = ex_policy == "all" ? pairs::VisibilityPolicy::All
                                     : pairs::VisibilityPolicy::VisibleOnly;
    opts.merge_symmetric = ex_merge;
    opts.naming = ex_naming;
    opts.fill = static_cast<float>(ex_fill);
    opts.n_threads = ex_threads;
    const pairs::ExtractManifest manifest =
        pairs::extract_all(index, schema, ex_root, ex_out, opts);
    pairs::write_manifest_json(manifest, fs::path(ex_out) / "manifest.json");
    std::cout << "images: " << index.images.size() << '\n';
    std::cout << "written: " << manifest.written << '\n';
    std::cout << "skipped degenerate: " << manifest.skipped_degenerate << '\n';
    std::cout << "skipped invisible: " << manifest.skipped_invisible << '\n';
    std::cout << "io errors: " << manifest.io_errors.size() << '\n';
    return 0;
  }

  if (decode_cmd->parsed()) {
    const pairs::PoseTensor tensor = pairs::read_pose_tensor(dec_tensor);
    std::optional<float> threshold;
    if (dec_threshold >= 0.0) threshold = static_cast<float>(dec_threshold);
    const pairs::DecodedPose pose = pairs::decode(tensor, threshold);
    std::map<std::string, pairs::DecodedPose> poses;
    poses[fs::path(dec_tensor).stem().string()] = pose;
    pairs::write_keypoints_json(dec_out, poses);
    std::cout << "decoded " << pose.keypoints.size() << " keypoints\n";
    return 0;
  }

  if (pck_cmd->parsed()) {
    const auto preds_raw = pairs::read_keypoints_json(pck_pred);
    const pairs::DatasetIndex index = pairs::load_cub(pck_gt);
    std::map<std::string, std::vector<pairs::Point2>> preds;
    std::map<std::string, pairs::PoseAnnotation> gts;
    std::map<std::string, pairs::BoxSize> boxes;
    for (const auto& [id, kps] : preds_raw) {
      std::vector<pairs::Point2> pts;
      pts.reserve(kps.size());
      for (const auto& kp : kps) pts.push_back({kp[0], kp[1]});
      preds[id] = std::move(pts);
    }
    for (size_t i = 0; i < index.images.size(); ++i) {
      const auto& rec = index.images[i];
      if (!preds.count(rec.id)) continue;  // evaluate the predicted subset
      gts[rec.id] = index.annotations[i];
      boxes[rec.id] = {rec.box_w, rec.box_h};
    }
    const pairs::PckReport report =
        pairs::pck_report(preds, gts, boxes, pck_c, index.keypoint_names);
    std::cout << pairs::render_pck_table(report);
    if (!pck_tsv.empty()) {
      std::ofstream os(pck_tsv);
      if (!os) throw pairs::MissingFileError(pck_tsv);
      os << pairs::render_pck_tsv(report);
    }
    return 0;
  }

  if (avg_cmd->parsed()) {
    const pairs::ScoreTensor scores = pairs::read_score_tensor(agg_scores);
    pairs::Subset subset = avg_subset.empty()
                               ? pairs::full_subset(scores.n_patches)
                               : pairs::Subset{parse_index_list(avg_subset)};
    const pairs::PredictionResult r = pairs::average_predict(scores, subset);
    std::cout << "strategy: average\n";
    std::cout << "patches: " << subset.indices.size() << '\n';
    print_prediction_summary(r);
    return 0;
  }

  if (beam_cmd->parsed()) {
    const pairs::ScoreTensor scores = pairs::read_score_tensor(agg_scores);
    const int max_k = beam_max_k > 0 ? beam_max_k : scores.n_patches;
    const auto per_k = pairs::beam_search_subsets(scores, beam_width, max_k);
    std::cout << "strategy: beam search (width " << beam_width << ")\n";
    for (size_t k = 0; k < per_k.size(); ++k) {
      const auto& s = per_k[k];
      std::cout << "k=" << k + 1 << " train=" << fmt4(s.train_accuracy());
      if (s.test_total > 0) std::cout << " test=" << fmt4(s.test_accuracy());
      std::cout << " subset=" << join_indices(s.subset.indices) << '\n';
    }
    return 0;
  }

  if (gate_cmd->parsed()) {
    const pairs::ScoreTensor scores = pairs::read_score_tensor(agg_scores);
    pairs::GateModel model;
    if (!gate_model_file.empty()) {
      model = pairs::load_gate_model(gate_model_file);
    } else {
      model = pairs::zero_gate(scores.n_patches * scores.n_classes, scores.n_patches,
                               gate_k > 0 ? gate_k : scores.n_patches);
    }
    if (gate_k > 0) model.k = gate_k;
    if (gate_sigmoid) model.use_sigmoid = true;
    const pairs::PredictionResult r = pairs::gate_predict_all(model, scores);
    std::cout << "strategy: gated top-" << model.k
              << (model.use_sigmoid ? " (sigmoid)\n" : " (softmax)\n");
    print_prediction_summary(r);
    return 0;
  }

  if (mlp_cmd->parsed()) {
    const pairs::ScoreTensor scores = pairs::read_score_tensor(agg_scores);
    mlp_opts.select_best_on_test = mlp_select_best;
    const pairs::MlpTrainResult result = pairs::mlp_train(scores, mlp_opts);
    std::cout << "strategy: mlp (hidden " << mlp_opts.hidden << ", seed " << mlp_opts.seed
              << ")\n";
    if (!result.epoch_loss.empty()) {
      std::cout << "final epoch loss: " << fmt4(result.epoch_loss.back()) << '\n';
    }
    std::cout << "train accuracy:   " << fmt4(result.train_accuracy) << '\n';
    if (scores.count_split(pairs::kSplitTest) > 0) {
      std::cout << "test accuracy:    " << fmt4(result.test_accuracy) << '\n';
    }
    if (!mlp_save.empty()) {
      pairs::save_mlp_model(mlp_save, result.model);
      std::cout << "model written: " << mlp_save << '\n';
    }
    return 0;
  }

  if (diff_cmd->parsed()) {
    const pairs::ScoreTensor scores = pairs::read_score_tensor(diff_scores);
    const std::vector<long> hist = pairs::difficulty_histogram(scores);
    const std::string csv = pairs::render_histogram_csv(hist);
    if (diff_out.empty()) {
      std::cout << csv;
    } else {
      std::ofstream os(diff_out);
      if (!os) throw pairs::MissingFileError(diff_out);
      os << csv;
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pairs::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const pairs::ConstraintError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
