#pragma once

// Frame-level precision / recall / F1, the label-using optimal-threshold
// sweep, the SNR robustness suite and plot-data export.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrnd/audio.hpp"
#include "vrnd/detector.hpp"
#include "vrnd/errors.hpp"
#include "vrnd/rng.hpp"
#include "vrnd/vrnn.hpp"

namespace vrnd {

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;  // fractions in [0, 1]

  std::size_t total() const noexcept { return tp + fp + fn + tn; }

  nlohmann::json to_json() const {
    return {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn},
            {"precision", 100.0 * precision}, {"recall", 100.0 * recall}, {"f1", 100.0 * f1}};
  }
};

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

// Empty detections: precision 1 when there is nothing to find, else 0.
// Same convention for recall with no positives.
inline Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m{tp, fp, fn, tn};
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : (tp + fn == 0 ? 1.0 : 0.0);
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : (tp + fp == 0 ? 1.0 : 0.0);
  m.f1 = tp == 0 && fp == 0 && fn == 0 ? 1.0 : f1_score(m.precision, m.recall);
  return m;
}

inline Metrics frame_prf(const Decisions& decisions, const std::vector<std::uint8_t>& labels) {
  if (decisions.size() != labels.size()) {
    throw DimensionError("frame_prf: " + std::to_string(decisions.size()) + " decisions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const bool d = decisions[t] != 0, l = labels[t] != 0;
    tp += d && l;
    fp += d && !l;
    fn += !d && l;
    tn += !d && !l;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

inline Metrics operator+(const Metrics& a, const Metrics& b) {
  return metrics_from_counts(a.tp + b.tp, a.fp + b.fp, a.fn + b.fn, a.tn + b.tn);
}

// Pools per-recording counts.
inline Metrics frame_prf(const std::vector<Decisions>& decisions, const std::vector<std::vector<std::uint8_t>>& labels) {
  if (decisions.size() != labels.size()) throw DimensionError("frame_prf: recording counts differ");
  Metrics m = metrics_from_counts(0, 0, 0, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) m = m + frame_prf(decisions[i], labels[i]);
  return m;
}

// ---------------------------------------------------------------------------
// Optimal-threshold sweep. Uses the test labels, so it is reported beside the
// unsupervised result and never feeds back into it.

struct CurvePoint {
  double theta = 0.0;
  Metrics metrics;
};

struct SweepResult {
  double best_theta = 0.0;
  Metrics best;
  std::vector<CurvePoint> curve;
};

inline SweepResult sweep_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                   std::size_t grid_size = 1000) {
  if (scores.size() != labels.size()) throw DimensionError("sweep_threshold: scores and labels differ in length");
  if (grid_size < 2) throw ContractError("sweep_threshold: grid_size must be >= 2");
  if (scores.empty()) throw ContractError("sweep_threshold: no scores");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw ContractError("sweep_threshold: scores are constant");

  // Counting through sorted scores keeps the sweep O(n log n + grid).
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t positives = 0;
  for (auto l : labels) positives += l != 0;
  const std::size_t negatives = labels.size() - positives;

  SweepResult out;
  out.curve.reserve(grid_size);
  std::size_t k = 0, tp = 0, fp = 0;
  for (std::size_t g = 0; g < grid_size; ++g) {
    const double theta = g + 1 == grid_size ? hi : lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_size - 1);
    while (k < order.size() && scores[order[k]] < theta) {
      (labels[order[k]] ? tp : fp) += 1;
      ++k;
    }
    Metrics m = metrics_from_counts(tp, fp, positives - tp, negatives - fp);
    out.curve.push_back({theta, m});
    if (g == 0 || m.f1 > out.best.f1) {
      out.best = m;
      out.best_theta = theta;
    }
  }
  return out;
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "theta,precision,recall,f1\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.6f,%.6f,%.6f\n", p.theta, 100.0 * p.metrics.precision,
                  100.0 * p.metrics.recall, 100.0 * p.metrics.f1);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Scoring helpers shared by detection, evaluation and the robustness suite.
// Recording i is scored with rng.child(i), so any subset or corrupted copy of
// a recording sees the same latent noise as the clean original.

inline std::vector<Tensor> score_recordings(const VrnnParams& params, const std::vector<FrameSequence>& seqs,
                                            std::size_t n_samples, const RngStream& rng) {
  std::vector<Tensor> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    RngStream r = rng.child(i);
    out.push_back(score_frames(params, seqs[i], n_samples, r));
  }
  return out;
}

inline std::vector<Decisions> detect_all(const std::vector<Tensor>& scores, const Threshold& th) {
  std::vector<Decisions> out;
  for (const auto& s : scores) out.push_back(detect_frames(s, th));
  return out;
}

struct RobustnessRow {
  double snr_db = kNoNoise;
  Metrics metrics;

  nlohmann::json to_json() const {
    nlohmann::json j = metrics.to_json();
    j["snr_db"] = std::isinf(snr_db) ? nlohmann::json("clean") : nlohmann::json(snr_db);
    return j;
  }
};

// Corrupts every test recording at each SNR (unknown to the model), scores it
// with the clean-trained model and applies the fixed clean-validation threshold.
// Scoring uses score_rng exactly as score_recordings does, so the kNoNoise row
// reproduces the clean test metrics.
inline std::vector<RobustnessRow> robustness_suite(const VrnnParams& params, const std::vector<FrameSequence>& test,
                                                   const std::vector<std::vector<std::uint8_t>>& labels,
                                                   const Threshold& th, const std::vector<double>& snr_levels,
                                                   const RngStream& score_rng, const RngStream& noise_rng,
                                                   std::size_t n_samples = 1) {
  if (test.empty()) throw ContractError("robustness_suite: empty test set");
  if (test.size() != labels.size()) throw DimensionError("robustness_suite: recordings and label lists differ in count");
  std::vector<RobustnessRow> rows;
  for (std::size_t k = 0; k < snr_levels.size(); ++k) {
    const double snr = snr_levels[k];
    std::vector<FrameSequence> noisy;
    for (std::size_t i = 0; i < test.size(); ++i) {
      RngStream r = noise_rng.child((k << 32) ^ i);
      noisy.push_back(add_noise_snr(test[i], snr, r));
    }
    const auto scores = score_recordings(params, noisy, n_samples, score_rng);
    rows.push_back({snr, frame_prf(detect_all(scores, th), labels)});
  }
  return rows;
}

inline std::string format_metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %10s %10s %10s\n", "", "Precision", "Recall", "F1 score");
  out += buf;
  for (const auto& [name, m] : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %10.1f %10.1f %10.1f\n", name.c_str(), 100.0 * m.precision,
                  100.0 * m.recall, 100.0 * m.f1);
    out += buf;
  }
  return out;
}

inline std::string snr_label(double snr_db) {
  if (std::isinf(snr_db)) return "clean";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gdB", snr_db);
  return buf;
}

inline std::string format_robustness_table(const std::vector<RobustnessRow>& rows) {
  std::vector<std::pair<std::string, Metrics>> named;
  for (const auto& r : rows) named.emplace_back(snr_label(r.snr_db), r.metrics);
  return format_metrics_table(named);
}

// ---------------------------------------------------------------------------

// |DFT| of a real window, bins 0..n/2. Bin k is k * sample_rate / n Hz.
inline std::vector<double> magnitude_spectrum(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw ContractError("magnitude_spectrum: empty window");
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = std::abs(acc);
  }
  return out;
}

inline std::size_t peak_bin(std::span<const double> spectrum, bool skip_dc = true) {
  std::size_t best = skip_dc && spectrum.size() > 1 ? 1 : 0;
  for (std::size_t k = best; k < spectrum.size(); ++k)
    if (spectrum[k] > spectrum[best]) best = k;
  return best;
}

}  // namespace vrnd
