#pragma once

// Maximum-ELBO training: chunked minibatches, global-norm clipping, Adam,
// validation tracking with early stopping, and JSON-lines logging.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrnd/audio.hpp"
#include "vrnd/autodiff.hpp"
#include "vrnd/checkpoint.hpp"
#include "vrnd/errors.hpp"
#include "vrnd/rng.hpp"
#include "vrnd/vrnn.hpp"

namespace vrnd {

struct TrainConfig {
  double learning_rate = 3e-5;
  std::size_t batch_size = 16;
  std::size_t chunk_len = 100;
  std::size_t epochs = 100;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::size_t kl_warmup_epochs = 0;  // 0 disables warm-up
  std::size_t patience = 10;         // epochs without validation improvement before stopping

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (chunk_len < 2) throw ConfigError("chunk_len must be >= 2");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
    if (patience == 0) throw ConfigError("patience must be >= 1");
  }
};

using ParamMap = std::map<std::string, Tensor>;

inline ParamMap to_param_map(const VrnnParams& p) {
  ParamMap out;
  visit_params(p, [&out](const std::string& name, const Tensor& t) { out.emplace(name, t); });
  return out;
}

inline void assign_params(VrnnParams& p, const ParamMap& values) {
  visit_params(p, [&values](const std::string& name, Tensor& t) { t = values.at(name); });
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  ParamMap m;
  ParamMap v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

namespace detail {

inline void require_same_keys(const ParamMap& params, const ParamMap& grads) {
  std::vector<std::string> missing, extra;
  for (const auto& [k, _] : params)
    if (!grads.count(k)) missing.push_back(k);
  for (const auto& [k, _] : grads)
    if (!params.count(k)) extra.push_back(k);
  if (missing.empty() && extra.empty()) return;
  std::string msg = "adam_step: gradient keys do not match parameters;";
  if (!missing.empty()) {
    msg += " missing:";
    for (const auto& k : missing) msg += " " + k;
  }
  if (!extra.empty()) {
    msg += " extra:";
    for (const auto& k : extra) msg += " " + k;
  }
  throw ContractError(msg);
}

}  // namespace detail

// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
inline void adam_step(AdamState& state, ParamMap& params, const ParamMap& grads, double lr) {
  detail::require_same_keys(params, grads);
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, theta] : params) {
    const Tensor& g = grads.at(name);
    if (g.shape() != theta.shape()) {
      throw DimensionError("adam_step: gradient for " + name + " has shape " + shape_str(g.shape()) +
                           ", parameter has " + shape_str(theta.shape()));
    }
    auto [mit, m_new] = state.m.try_emplace(name, Tensor::zeros_like(theta));
    auto [vit, v_new] = state.v.try_emplace(name, Tensor::zeros_like(theta));
    auto m = mit->second.data();
    auto v = vit->second.data();
    auto th = theta.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < th.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gd[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gd[i] * gd[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      th[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

inline double global_norm(const ParamMap& grads) {
  double s = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

// Rescales so the global L2 norm is at most max_norm. Returns the norm before clipping.
inline double clip_global_norm(ParamMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.data()) v *= k;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Chunked minibatches

struct Chunk {
  std::size_t sequence = 0;
  std::size_t begin = 0;
  std::size_t length = 0;
};

// Consecutive windows of chunk_len frames; a shorter final window is kept
// when it has at least two frames.
inline std::vector<Chunk> make_chunks(const std::vector<FrameSequence>& data, std::size_t chunk_len) {
  std::vector<Chunk> out;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const std::size_t n = data[s].length();
    for (std::size_t b = 0; b < n; b += chunk_len) {
      const std::size_t len = std::min(chunk_len, n - b);
      if (len >= 2) out.push_back(Chunk{s, b, len});
    }
  }
  return out;
}

struct BatchResult {
  double loss = 0.0;       // -(sum of masked recon - w*kl) / frames
  double elbo_sum = 0.0;   // sum of unweighted per-frame ELBOs
  std::size_t frames = 0;
  ParamMap grads;
};

// Loss and gradients for one minibatch of chunks, each run from the zero
// state. Rows shorter than the longest chunk are padded and masked out.
inline BatchResult batch_gradients(const VrnnParams& params, const std::vector<FrameSequence>& data,
                                   const std::vector<Chunk>& batch, RngStream& rng, double kl_weight) {
  const std::size_t B = batch.size();
  const std::size_t d = params.config.frame_dim;
  std::size_t L = 0, frames = 0;
  for (const Chunk& c : batch) {
    if (data[c.sequence].frame_dim() != d) {
      throw DimensionError("training sequence " + std::to_string(c.sequence) + " has frame_dim " +
                           std::to_string(data[c.sequence].frame_dim()) + ", model expects " + std::to_string(d));
    }
    L = std::max(L, c.length);
    frames += c.length;
  }

  Tape tape;
  auto bound = bind(tape, params);
  const Var& anchor = bound.rnn.bias;
  auto state = lift_state(anchor, initial_state(params.config, B));
  std::optional<Var> total;
  double elbo_sum = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    Tensor xt({B, d}, 0.0);
    Tensor mask({B}, 0.0);
    for (std::size_t r = 0; r < B; ++r) {
      const Chunk& c = batch[r];
      if (t >= c.length) continue;
      const Tensor& src = data[c.sequence].frames;
      std::copy_n(src.data().begin() + (c.begin + t) * d, d, xt.data().begin() + r * d);
      mask[r] = 1.0;
    }
    auto step = vrnn_step(bound, state, constant_like(anchor, xt), rng);
    for (std::size_t r = 0; r < B; ++r) elbo_sum += mask[r] * step.elbo.value()[r];
    Var objective = kl_weight == 1.0 ? step.elbo : sub(step.recon_logp, scale(step.kl, kl_weight));
    Var masked = sum_all(mul(objective, constant_like(anchor, mask)));
    total = total ? add(*total, masked) : masked;
    state = std::move(step.next_state);
  }
  Var loss = scale(*total, -1.0 / static_cast<double>(frames));
  Gradients g = tape.backward(loss);

  BatchResult out;
  out.loss = loss.value().item();
  out.elbo_sum = elbo_sum;
  out.frames = frames;
  visit_params(bound, [&](const std::string& name, const Var& v) { out.grads.emplace(name, std::move(g.at(v.id))); });
  return out;
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_elbo = 0.0;  // per frame, unweighted by warm-up
  double grad_norm_p50 = 0.0;
  double grad_norm_max = 0.0;
  std::size_t batches = 0;
  std::size_t frames = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double kl_weight_for_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.kl_warmup_epochs == 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.kl_warmup_epochs));
}

// One pass over the shuffled chunks. `epoch` is 1-based and only drives warm-up.
inline EpochStats train_epoch(VrnnParams& params, const std::vector<FrameSequence>& data, const TrainConfig& cfg,
                              AdamState& adam, RngStream& rng, std::size_t epoch = 1) {
  cfg.validate();
  if (data.empty()) throw ContractError("train_epoch: empty dataset");
  std::vector<Chunk> chunks = make_chunks(data, cfg.chunk_len);
  if (chunks.empty()) throw ContractError("train_epoch: no sequence has at least two frames");
  shuffle(chunks, rng);
  const double w = kl_weight_for_epoch(cfg, epoch);

  EpochStats stats;
  stats.epoch = epoch;
  std::vector<double> norms;
  double elbo_sum = 0.0;
  ParamMap values = to_param_map(params);
  for (std::size_t begin = 0; begin < chunks.size(); begin += cfg.batch_size) {
    const std::size_t end = std::min(chunks.size(), begin + cfg.batch_size);
    std::vector<Chunk> batch(chunks.begin() + static_cast<std::ptrdiff_t>(begin),
                             chunks.begin() + static_cast<std::ptrdiff_t>(end));
    BatchResult r;
    try {
      r = batch_gradients(params, data, batch, rng, w);
    } catch (const NumericError& e) {
      std::string ids;
      for (std::size_t k = begin; k < end; ++k) ids += " " + std::to_string(k);
      throw NumericError(std::string("training aborted in epoch ") + std::to_string(epoch) + ", chunks [" + ids +
                         " ]: " + e.what());
    }
    if (!std::isfinite(r.loss)) throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
    norms.push_back(clip_global_norm(r.grads, cfg.grad_clip_norm));
    adam_step(adam, values, r.grads, cfg.learning_rate);
    assign_params(params, values);
    elbo_sum += r.elbo_sum;
    stats.frames += r.frames;
    ++stats.batches;
  }
  stats.mean_elbo = elbo_sum / static_cast<double>(stats.frames);
  stats.grad_norm_p50 = median(norms);
  stats.grad_norm_max = norms.empty() ? 0.0 : *std::max_element(norms.begin(), norms.end());
  return stats;
}

// Mean per-frame ELBO over whole sequences (zero state per sequence).
inline double mean_elbo(const VrnnParams& params, const std::vector<FrameSequence>& data, RngStream& rng) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : data) {
    Tensor scores = score_frames(params, x, 1, rng);
    for (double v : scores.data()) s += v;
    n += scores.size();
  }
  if (n == 0) throw ContractError("mean_elbo: empty dataset");
  return s / static_cast<double>(n);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_elbo_train = 0.0;
  double mean_elbo_valid = 0.0;
  double grad_norm_p50 = 0.0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"mean_elbo_train", mean_elbo_train},
            {"mean_elbo_valid", mean_elbo_valid},
            {"grad_norm_p50", grad_norm_p50},
            {"wall_ms", wall_ms}};
  }
};

struct FitResult {
  VrnnParams best;
  double best_valid_elbo = -INFINITY;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> history;
};

struct FitOptions {
  std::ostream* log = nullptr;                       // JSON-lines epoch records
  std::optional<std::string> checkpoint_path;        // best model written here on improvement
  std::function<void(const EpochRecord&)> on_epoch;  // progress hook
};

// Epoch loop with early stopping on validation ELBO. Returns the best model.
inline FitResult fit(VrnnParams params, const std::vector<FrameSequence>& train,
                     const std::vector<FrameSequence>& valid, const TrainConfig& cfg, const FitOptions& opts = {}) {
  cfg.validate();
  if (valid.empty()) throw ContractError("fit: empty validation set");
  RngStream rng(cfg.seed);
  RngStream valid_rng = rng.fork(0x76616c6964ULL);
  AdamState adam;
  FitResult result;
  result.best = params;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochStats stats = train_epoch(params, train, cfg, adam, rng, epoch);
    RngStream vr = valid_rng;  // same validation noise every epoch
    const double valid_elbo = mean_elbo(params, valid, vr);
    const auto t1 = std::chrono::steady_clock::now();

    EpochRecord rec{epoch, stats.mean_elbo, valid_elbo, stats.grad_norm_p50,
                    std::chrono::duration<double, std::milli>(t1 - t0).count()};
    result.history.push_back(rec);
    result.epochs_run = epoch;
    if (opts.log) *opts.log << rec.to_json().dump() << '\n' << std::flush;
    if (opts.on_epoch) opts.on_epoch(rec);

    if (valid_elbo > result.best_valid_elbo) {
      result.best_valid_elbo = valid_elbo;
      result.best_epoch = epoch;
      result.best = params;
      since_best = 0;
      if (opts.checkpoint_path) save_checkpoint(*opts.checkpoint_path, params);
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace vrnd
