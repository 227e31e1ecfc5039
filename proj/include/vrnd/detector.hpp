#pragma once

// Unsupervised threshold selection from validation scores, per-frame
// decisions and grouping of novel frames into events.

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrnd/errors.hpp"
#include "vrnd/tensor.hpp"

namespace vrnd {

inline constexpr double kDefaultAlpha = 3.0;

struct Threshold {
  double theta = 0.0;
  double mu_valid = 0.0;
  double sigma_valid = 0.0;
  double alpha = kDefaultAlpha;

  nlohmann::json to_json() const {
    return {{"theta", theta}, {"mu_valid", mu_valid}, {"sigma_valid", sigma_valid}, {"alpha", alpha}};
  }
};

inline Threshold make_threshold(double mu, double sigma, double alpha = kDefaultAlpha) {
  return Threshold{mu - alpha * sigma, mu, sigma, alpha};
}

// pooled: mean / population std over every validation frame.
// per_sequence: mean / population std over the per-recording mean scores.
enum class ThresholdStats { pooled, per_sequence };

inline ThresholdStats threshold_stats_from_string(const std::string& s) {
  if (s == "pooled") return ThresholdStats::pooled;
  if (s == "per_sequence") return ThresholdStats::per_sequence;
  throw ConfigError("unknown threshold statistic '" + s + "' (expected pooled or per_sequence)");
}

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  return {mu, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace detail

inline Threshold compute_threshold(const std::vector<Tensor>& valid_scores, double alpha = kDefaultAlpha,
                                   ThresholdStats stats = ThresholdStats::pooled) {
  std::vector<double> values;
  if (stats == ThresholdStats::pooled) {
    for (const auto& s : valid_scores) values.insert(values.end(), s.data().begin(), s.data().end());
    if (values.size() < 2) throw ContractError("compute_threshold: need at least 2 validation frames, got " + std::to_string(values.size()));
  } else {
    for (const auto& s : valid_scores) values.push_back(kernels::sum_all(s)[0] / static_cast<double>(s.size()));
    if (values.size() < 2) throw ContractError("compute_threshold: per-sequence statistics need at least 2 recordings");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("compute_threshold: non-finite validation score");
  }
  const auto [mu, sigma] = detail::mean_std(values);
  return make_threshold(mu, sigma, alpha);
}

using Decisions = std::vector<std::uint8_t>;

inline Decisions detect_frames(const Tensor& scores, const Threshold& th) {
  Decisions out(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) out[t] = scores[t] < th.theta ? 1 : 0;
  return out;
}

struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Maximal runs of novel frames; runs separated by at most max_gap normal
// frames are merged.
inline std::vector<Interval> group_events(const Decisions& d, std::size_t max_gap = 0) {
  std::vector<Interval> out;
  for (std::size_t t = 0; t < d.size();) {
    if (!d[t]) {
      ++t;
      continue;
    }
    std::size_t e = t;
    while (e < d.size() && d[e]) ++e;
    if (!out.empty() && t - out.back().end <= max_gap) {
      out.back().end = e;
    } else {
      out.push_back({t, e});
    }
    t = e;
  }
  return out;
}

struct DetectionReport {
  std::string recording;
  Tensor scores;
  Threshold threshold;
  Decisions decisions;
  std::vector<Interval> events;

  nlohmann::json to_json() const {
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& e : events) ev.push_back({e.start, e.end});
    std::size_t novel = 0;
    for (auto v : decisions) novel += v;
    return {{"recording", recording}, {"frames", decisions.size()}, {"novel_frames", novel}, {"events", ev}};
  }
};

inline DetectionReport detect(std::string recording, const Tensor& scores, const Threshold& th, std::size_t max_gap = 0) {
  DetectionReport r{std::move(recording), scores, th, detect_frames(scores, th), {}};
  r.events = group_events(r.decisions, max_gap);
  return r;
}

// ---------------------------------------------------------------------------
// Score files: one JSON object per frame {recording, frame, score[, decision]}.

inline void write_scores_jsonl(std::ostream& out, const std::string& recording, const Tensor& scores,
                               const Decisions* decisions = nullptr) {
  for (std::size_t t = 0; t < scores.size(); ++t) {
    nlohmann::json j = {{"recording", recording}, {"frame", t}, {"score", scores[t]}};
    if (decisions) j["decision"] = (*decisions)[t] != 0;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) << '\n';
  }
}

struct ScoredRecording {
  std::string recording;
  std::vector<double> scores;
  Decisions decisions;  // empty when the file carries no decisions
};

// Recordings in order of first appearance; frames must be contiguous from 0.
inline std::vector<ScoredRecording> read_scores_jsonl(std::istream& in) {
  std::vector<ScoredRecording> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("score file line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
    if (!j.contains("recording") || !j.contains("frame") || !j.contains("score")) {
      throw ParseError("score file line " + std::to_string(lineno) + ": missing recording/frame/score", lineno);
    }
    const std::string rec = j["recording"].get<std::string>();
    auto [it, fresh] = index.emplace(rec, out.size());
    if (fresh) out.push_back({rec, {}, {}});
    auto& r = out[it->second];
    if (j["frame"].get<std::size_t>() != r.scores.size()) {
      throw ParseError("score file line " + std::to_string(lineno) + ": frames of '" + rec + "' are not contiguous", lineno);
    }
    r.scores.push_back(j["score"].get<double>());
    if (j.contains("decision")) r.decisions.push_back(j["decision"].get<bool>() ? 1 : 0);
  }
  for (const auto& r : out) {
    if (!r.decisions.empty() && r.decisions.size() != r.scores.size()) {
      throw ParseError("score file: recording '" + r.recording + "' has decisions on only some frames", 0);
    }
  }
  return out;
}

}  // namespace vrnd
