// vrnd: benchmark generation, training, scoring, detection and evaluation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "vrnd/checkpoint.hpp"
#include "vrnd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vrnd;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const auto& [k, v] : overrides) {
      try {
        set_config_value(c, k, v);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("--") + e.what());
      }
    }
    validate(c);
    return c;
  }
};

// --config plus one flag per configuration key, applied after the file.
void add_config_flags(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  for (const auto& key : config_keys()) {
    sub->add_option_function<std::string>(
        "--" + key, [&common, key](const std::string& v) { common.overrides[key] = v; }, "config override");
  }
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError(flag + " is required");
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error("no such file: " + path);
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("no such directory: " + dir.string());
}

void require_writable_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw Error("output directory does not exist: " + parent.string());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  return out;
}

Split load_inputs(const std::vector<std::string>& paths, std::size_t frame_dim) {
  Split s;
  for (const auto& p : paths) {
    s.paths.push_back(p);
    s.frames.push_back(load_frames(p, frame_dim));
  }
  return s;
}

int cmd_synth(const RunConfig& c) {
  require(c.out, "--out");
  RunStreams streams(c.seed);
  const Benchmark b = gen_benchmark(c.bench, streams.data);
  write_benchmark(c.out, b, c.bench.frame_dim);
  std::size_t pos = 0, total = 0;
  for (const auto& r : b.test) {
    for (auto l : r.frame_labels) pos += l;
    total += r.frame_labels.size();
  }
  std::cout << "wrote " << b.train.size() << " train, " << b.valid.size() << " valid, " << b.test.size()
            << " test recordings to " << c.out << " (test anomalous frames " << pos << "/" << total << ")\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  require(c.data, "--data");
  require(c.out, "--out");
  require_dir(fs::path(c.data) / "train");
  require_dir(fs::path(c.data) / "valid");
  require_writable_parent(c.out);
  const std::string log_path = c.log.empty() ? c.out + ".log.jsonl" : c.log;
  require_writable_parent(log_path);

  const Split train = load_split(fs::path(c.data) / "train", c.model.frame_dim);
  const Split valid = load_split(fs::path(c.data) / "valid", c.model.frame_dim);
  std::ofstream log = open_out(log_path);
  FitOptions opts;
  opts.log = &log;
  opts.checkpoint_path = c.out;
  opts.on_epoch = [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << "  train " << r.mean_elbo_train << "  valid " << r.mean_elbo_valid << "\n";
  };
  const FitResult fr = train_model(c, train, valid, opts);
  save_checkpoint(c.out, fr.best);
  std::cout << "best epoch " << fr.best_epoch << " of " << fr.epochs_run << ", validation ELBO per frame "
            << fr.best_valid_elbo << "\n";
  return 0;
}

int cmd_score(const RunConfig& c, const std::vector<std::string>& inputs) {
  require(c.ckpt, "--ckpt");
  require(c.out, "--out");
  require_file(c.ckpt);
  for (const auto& p : inputs) require_file(p);
  require_writable_parent(c.out);

  const VrnnParams params = load_checkpoint(c.ckpt);
  const Split in = load_inputs(inputs, c.model.frame_dim);
  const auto scores = score_test(c, params, in);
  std::ofstream out = open_out(c.out);
  for (std::size_t i = 0; i < scores.size(); ++i) write_scores_jsonl(out, in.paths[i], scores[i]);
  return 0;
}

int cmd_detect(const RunConfig& c, const std::string& valid_dir, const std::vector<std::string>& inputs) {
  require(c.ckpt, "--ckpt");
  require(valid_dir, "--valid");
  require_file(c.ckpt);
  require_dir(valid_dir);
  for (const auto& p : inputs) require_file(p);
  if (!c.out.empty()) require_writable_parent(c.out);

  const VrnnParams params = load_checkpoint(c.ckpt);
  const Threshold th = threshold_from_validation(c, params, load_split(valid_dir, c.model.frame_dim));
  const Split in = load_inputs(inputs, c.model.frame_dim);
  const auto scores = score_test(c, params, in);
  std::cout << th.to_json().dump() << "\n";
  std::optional<std::ofstream> out;
  if (!c.out.empty()) out = open_out(c.out);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const DetectionReport rep = detect(in.paths[i], scores[i], th, c.max_gap);
    std::cout << rep.to_json().dump() << "\n";
    if (out) write_scores_jsonl(*out, in.paths[i], scores[i], &rep.decisions);
  }
  return 0;
}

int cmd_eval(const std::string& scores_path, const std::string& labels_path, bool sweep, const std::string& curve_path) {
  require(scores_path, "--scores");
  require(labels_path, "--labels");
  require_file(scores_path);
  require_file(labels_path);
  if (!curve_path.empty()) require_writable_parent(curve_path);

  std::ifstream in(scores_path);
  const auto scored = read_scores_jsonl(in);
  std::map<std::string, std::vector<std::uint8_t>> by_name;
  for (auto& r : read_label_file(labels_path)) by_name[fs::path(r.path).filename().string()] = std::move(r.labels);

  std::vector<Tensor> scores;
  std::vector<Decisions> decisions;
  std::vector<std::vector<std::uint8_t>> labels;
  bool have_decisions = true;
  for (const auto& r : scored) {
    const auto it = by_name.find(fs::path(r.recording).filename().string());
    if (it == by_name.end()) throw Error("no labels for " + r.recording + " in " + labels_path);
    if (it->second.size() != r.scores.size()) {
      throw DimensionError(r.recording + ": " + std::to_string(r.scores.size()) + " scores but " +
                           std::to_string(it->second.size()) + " labels");
    }
    scores.push_back(Tensor({r.scores.size()}, r.scores));
    labels.push_back(it->second);
    decisions.push_back(r.decisions);
    have_decisions = have_decisions && !r.decisions.empty();
  }
  if (scored.empty()) throw Error("no scores in " + scores_path);
  if (!have_decisions && !sweep) throw Error(scores_path + " carries no decisions; write it with `detect --out` or pass --sweep");

  std::vector<std::pair<std::string, Metrics>> rows;
  if (have_decisions) rows.emplace_back("VRNN", frame_prf(decisions, labels));
  if (sweep) {
    const SweepResult s = sweep_split(scores, labels);
    rows.emplace_back("VRNN*", s.best);
    std::cout << format_metrics_table(rows) << "optimal theta " << s.best_theta << "\n";
    if (!curve_path.empty()) {
      std::ofstream out = open_out(curve_path);
      write_curve_csv(out, s.curve);
    }
  } else {
    std::cout << format_metrics_table(rows);
  }
  return 0;
}

int cmd_robustness(const RunConfig& c, const std::string& valid_dir, const std::string& test_dir,
                   const std::vector<double>& snr) {
  require(c.ckpt, "--ckpt");
  require(valid_dir, "--valid");
  require(test_dir, "--test");
  require_file(c.ckpt);
  require_dir(valid_dir);
  require_dir(test_dir);
  if (!c.out.empty()) require_writable_parent(c.out);

  const VrnnParams params = load_checkpoint(c.ckpt);
  const Threshold th = threshold_from_validation(c, params, load_split(valid_dir, c.model.frame_dim));
  const Split test = load_split(test_dir, c.model.frame_dim);
  if (!test.labeled()) throw Error(test_dir + " has no labels.jsonl");
  std::vector<double> levels{kNoNoise};
  levels.insert(levels.end(), snr.begin(), snr.end());
  const auto rows = robustness(c, params, th, test, levels);
  std::cout << format_robustness_table(rows);
  if (!c.out.empty()) {
    std::ofstream out = open_out(c.out);
    for (const auto& r : rows) out << r.to_json().dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Novelty detection in audio with a variational recurrent network"};
  app.require_subcommand(1);

  Common synth_c, train_c, score_c, detect_c, robust_c;
  auto* synth = app.add_subcommand("synth", "write the synthetic benchmark (train/valid/test WAVs and labels)");
  add_config_flags(synth, synth_c);

  auto* train = app.add_subcommand("train", "fit a model on DIR/train, early-stopping on DIR/valid");
  add_config_flags(train, train_c);

  std::vector<std::string> score_in;
  auto* score = app.add_subcommand("score", "per-frame ELBO scores as JSON lines");
  add_config_flags(score, score_c);
  score->add_option("--in", score_in, "input WAV files")->required();
  score->add_option_function<std::string>(
      "--samples", [&](const std::string& v) { score_c.overrides["score_samples"] = v; }, "latent samples per frame");

  std::vector<std::string> detect_in;
  std::string detect_valid;
  auto* det = app.add_subcommand("detect", "threshold from validation scores, then frame decisions and events");
  add_config_flags(det, detect_c);
  det->add_option("--valid", detect_valid, "directory of normal validation recordings");
  det->add_option("--in", detect_in, "input WAV files")->required();

  std::string eval_scores, eval_labels, eval_curve;
  bool eval_sweep = false;
  auto* ev = app.add_subcommand("eval", "frame-level precision, recall and F1");
  ev->add_option("--scores", eval_scores, "scores JSONL written by detect --out");
  ev->add_option("--labels", eval_labels, "label sidecar (labels.jsonl)");
  ev->add_flag("--sweep", eval_sweep, "add the best row over a threshold sweep");
  ev->add_option("--curve", eval_curve, "write the sweep curve as CSV");

  std::string robust_valid, robust_test;
  std::vector<double> robust_snr{15, 10, 5};
  auto* rob = app.add_subcommand("robustness", "F1 on the test split with white noise at each SNR");
  add_config_flags(rob, robust_c);
  rob->add_option("--valid", robust_valid, "directory of normal validation recordings");
  rob->add_option("--test", robust_test, "labeled test directory");
  rob->add_option("--snr", robust_snr, "SNR levels in dB")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_c.resolve());
    if (*train) return cmd_train(train_c.resolve());
    if (*score) return cmd_score(score_c.resolve(), score_in);
    if (*det) return cmd_detect(detect_c.resolve(), detect_valid, detect_in);
    if (*ev) return cmd_eval(eval_scores, eval_labels, eval_sweep, eval_curve);
    if (*rob) return cmd_robustness(robust_c.resolve(), robust_valid, robust_test, robust_snr);
  } catch (const ConfigError& e) {
    std::cerr << "vrnd: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "vrnd: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
