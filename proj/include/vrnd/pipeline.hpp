#pragma once

// End-to-end plumbing shared by the command-line tool and the acceptance run:
// loading benchmark splits from disk, seeding, training and evaluation.

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "vrnd/audio.hpp"
#include "vrnd/config.hpp"
#include "vrnd/detector.hpp"
#include "vrnd/eval.hpp"
#include "vrnd/synthdata.hpp"
#include "vrnd/trainer.hpp"
#include "vrnd/vrnn.hpp"

namespace vrnd {

// Frames of one directory of recordings, with labels when a sidecar exists.
struct Split {
  std::vector<std::string> paths;
  std::vector<FrameSequence> frames;
  std::vector<std::vector<std::uint8_t>> labels;  // empty when unlabeled

  bool labeled() const { return !labels.empty(); }
};

inline FrameSequence load_frames(const std::string& path, std::size_t frame_dim) {
  return frame_signal(mixdown(read_wav_file(path)), frame_dim);
}

// Recordings listed in DIR/labels.jsonl, or every *.wav in DIR (sorted) if there
// is no sidecar.
inline Split load_split(const std::filesystem::path& dir, std::size_t frame_dim) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  Split s;
  const auto sidecar = dir / "labels.jsonl";
  if (std::filesystem::exists(sidecar)) {
    for (auto& rec : read_label_file(sidecar.string())) {
      const std::string path = (dir / rec.path).string();
      FrameSequence x = load_frames(path, frame_dim);
      if (rec.labels.size() != x.length()) {
        throw DimensionError(path + ": " + std::to_string(rec.labels.size()) + " labels for " +
                             std::to_string(x.length()) + " frames of " + std::to_string(frame_dim) + " samples");
      }
      s.paths.push_back(path);
      s.frames.push_back(std::move(x));
      s.labels.push_back(std::move(rec.labels));
    }
  } else {
    std::vector<std::string> wavs;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".wav") wavs.push_back(e.path().string());
    std::sort(wavs.begin(), wavs.end());
    for (auto& p : wavs) {
      s.frames.push_back(load_frames(p, frame_dim));
      s.paths.push_back(std::move(p));
    }
  }
  if (s.frames.empty()) throw Error("no recordings in " + dir.string());
  return s;
}

inline Split split_from(const std::vector<LabeledRecording>& recs, std::size_t frame_dim = kDefaultFrameDim) {
  Split s;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    s.paths.push_back("rec_" + std::to_string(i));
    s.frames.push_back(frame_signal(recs[i].wav, frame_dim));
    s.labels.push_back(recs[i].frame_labels);
  }
  return s;
}

// Every random stream of a run derives from the one seed.
struct RunStreams {
  RngStream data, init, valid_scores, test_scores, noise;

  explicit RunStreams(std::uint64_t seed)
      : data(RngStream(seed).child(1)),
        init(RngStream(seed).child(2)),
        valid_scores(RngStream(seed).child(3)),
        test_scores(RngStream(seed).child(4)),
        noise(RngStream(seed).child(5)) {}
};

inline FitResult train_model(const RunConfig& cfg, const Split& train, const Split& valid, const FitOptions& opts = {}) {
  RunStreams streams(cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  return fit(init_vrnn(cfg.model, streams.init), train.frames, valid.frames, tc, opts);
}

inline Threshold threshold_from_validation(const RunConfig& cfg, const VrnnParams& params, const Split& valid) {
  RunStreams streams(cfg.seed);
  return compute_threshold(score_recordings(params, valid.frames, cfg.score_samples, streams.valid_scores), cfg.alpha,
                           cfg.threshold_stats);
}

inline std::vector<Tensor> score_test(const RunConfig& cfg, const VrnnParams& params, const Split& test) {
  return score_recordings(params, test.frames, cfg.score_samples, RunStreams(cfg.seed).test_scores);
}

struct Evaluation {
  Threshold threshold;
  std::vector<Tensor> scores;
  std::vector<Decisions> decisions;
  Metrics metrics;
};

inline Evaluation evaluate(const RunConfig& cfg, const VrnnParams& params, const Split& valid, const Split& test) {
  if (!test.labeled()) throw ContractError("evaluate: test split has no labels");
  Evaluation ev;
  ev.threshold = threshold_from_validation(cfg, params, valid);
  ev.scores = score_test(cfg, params, test);
  ev.decisions = detect_all(ev.scores, ev.threshold);
  ev.metrics = frame_prf(ev.decisions, test.labels);
  return ev;
}

inline SweepResult sweep_split(const std::vector<Tensor>& scores, const std::vector<std::vector<std::uint8_t>>& labels,
                               std::size_t grid = 1000) {
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    s.insert(s.end(), scores[i].data().begin(), scores[i].data().end());
    l.insert(l.end(), labels[i].begin(), labels[i].end());
  }
  return sweep_threshold(s, l, grid);
}

inline std::vector<RobustnessRow> robustness(const RunConfig& cfg, const VrnnParams& params, const Threshold& th,
                                             const Split& test, const std::vector<double>& snr_levels) {
  RunStreams streams(cfg.seed);
  return robustness_suite(params, test.frames, test.labels, th, snr_levels, streams.test_scores, streams.noise,
                          cfg.score_samples);
}

}  // namespace vrnd
