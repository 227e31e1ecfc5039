#pragma once

// Variational recurrent network over frame sequences.
//
// At each step t, with LSTM state h_t summarising (x_<t, z_<t):
//   prior      p(z_t | h_t)
//   posterior  q(z_t | x_t, h_t)
//   emission   p(x_t | z_t, h_t)
//   elbo_t   = log p(x_t | z_t, h_t) - KL(q || p),  z_t ~ q (one sample)
//   h_{t+1}  = LSTM([phi_x(x_t), phi_z(z_t)], h_t)
// All three distributions are diagonal Gaussians produced by small
// fully connected networks.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vrnd/audio.hpp"
#include "vrnd/autodiff.hpp"
#include "vrnd/errors.hpp"
#include "vrnd/nn.hpp"
#include "vrnd/rng.hpp"

namespace vrnd {

struct VrnnConfig {
  std::size_t frame_dim = 160;
  std::size_t latent_dim = 160;
  std::size_t hidden_dim = 160;
  std::size_t feature_dim = 160;
  std::size_t head_layers = 1;       // tanh layers of width hidden_dim in front of each Gaussian head
  bool feature_extractor = true;     // phi_x / phi_z tanh layers; identity when false

  std::size_t x_feature_dim() const { return feature_extractor ? feature_dim : frame_dim; }
  std::size_t z_feature_dim() const { return feature_extractor ? feature_dim : latent_dim; }

  void validate() const {
    if (frame_dim == 0 || latent_dim == 0 || hidden_dim == 0 || feature_dim == 0) {
      throw ConfigError("VRNN dimensions must all be >= 1");
    }
  }

  friend bool operator==(const VrnnConfig&, const VrnnConfig&) = default;
};

// Hidden tanh stack followed by mean and log-variance heads.
template <class T>
struct GaussianNetT {
  std::vector<DenseT<T>> hidden;
  DenseT<T> mean;
  DenseT<T> log_var;
};

template <class T>
struct VrnnParamsT {
  VrnnConfig config;
  DenseT<T> phi_x;  // unused when !config.feature_extractor
  DenseT<T> phi_z;
  LstmCellT<T> rnn;
  GaussianNetT<T> prior;
  GaussianNetT<T> posterior;
  GaussianNetT<T> emission;
};
using VrnnParams = VrnnParamsT<Tensor>;

template <class T>
struct VrnnStateT {
  T h;  // [batch x hidden_dim]
  T c;
  std::size_t t = 0;
};
using VrnnState = VrnnStateT<Tensor>;

template <class T>
struct StepResultT {
  T elbo;        // [batch]
  T recon_logp;  // [batch]
  T kl;          // [batch]
  GaussianParamsT<T> prior;
  GaussianParamsT<T> posterior;
  GaussianParamsT<T> emission;
  T z;
  VrnnStateT<T> next_state;
};
using StepResult = StepResultT<Tensor>;

// ---------------------------------------------------------------------------
// Parameter plumbing

template <class T, class F>
void visit_params(GaussianNetT<T>& net, const std::string& prefix, F&& f) {
  for (std::size_t i = 0; i < net.hidden.size(); ++i) visit_params(net.hidden[i], prefix + ".hidden" + std::to_string(i), f);
  visit_params(net.mean, prefix + ".mean", f);
  visit_params(net.log_var, prefix + ".log_var", f);
}
template <class T, class F>
void visit_params(const GaussianNetT<T>& net, const std::string& prefix, F&& f) {
  for (std::size_t i = 0; i < net.hidden.size(); ++i) visit_params(net.hidden[i], prefix + ".hidden" + std::to_string(i), f);
  visit_params(net.mean, prefix + ".mean", f);
  visit_params(net.log_var, prefix + ".log_var", f);
}

// Visits every trainable tensor in a fixed order with a stable dotted name.
template <class P, class F>
void visit_params(P& p, F&& f)
  requires requires { p.posterior; p.rnn; }
{
  if (p.config.feature_extractor) {
    visit_params(p.phi_x, "phi_x", f);
    visit_params(p.phi_z, "phi_z", f);
  }
  visit_params(p.rnn, "rnn", f);
  visit_params(p.prior, "prior", f);
  visit_params(p.posterior, "posterior", f);
  visit_params(p.emission, "emission", f);
}

template <class T, class F>
auto map_params(const GaussianNetT<T>& net, F&& f) {
  using U = decltype(f(net.mean.weight));
  GaussianNetT<U> out{{}, map_params(net.mean, f), map_params(net.log_var, f)};
  for (const auto& l : net.hidden) out.hidden.push_back(map_params(l, f));
  return out;
}

template <class T, class F>
auto map_params(const VrnnParamsT<T>& p, F&& f) {
  using U = decltype(f(p.rnn.bias));
  return VrnnParamsT<U>{p.config,
                        map_params(p.phi_x, f),
                        map_params(p.phi_z, f),
                        map_params(p.rnn, f),
                        map_params(p.prior, f),
                        map_params(p.posterior, f),
                        map_params(p.emission, f)};
}

// Registers every parameter as a tape variable.
inline VrnnParamsT<Var> bind(Tape& tape, const VrnnParams& p) {
  return map_params(p, [&tape](const Tensor& t) { return tape.variable(t); });
}

inline std::size_t parameter_count(const VrnnParams& p) {
  std::size_t n = 0;
  visit_params(p, [&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

namespace detail {

inline GaussianNetT<Tensor> make_net(std::size_t in, std::size_t width, std::size_t out, std::size_t layers,
                                     RngStream* rng) {
  GaussianNetT<Tensor> net;
  std::size_t w = in;
  for (std::size_t i = 0; i < layers; ++i) {
    net.hidden.push_back(rng ? make_dense(w, width, Activation::tanh, *rng) : zero_dense(w, width, Activation::tanh));
    w = width;
  }
  net.mean = rng ? make_dense(w, out, Activation::linear, *rng) : zero_dense(w, out, Activation::linear);
  net.log_var = rng ? make_dense(w, out, Activation::linear, *rng) : zero_dense(w, out, Activation::linear);
  return net;
}

inline VrnnParams make_params(const VrnnConfig& cfg, RngStream* rng) {
  cfg.validate();
  VrnnParams p;
  p.config = cfg;
  const std::size_t fx = cfg.x_feature_dim(), fz = cfg.z_feature_dim(), H = cfg.hidden_dim;
  if (cfg.feature_extractor) {
    p.phi_x = rng ? make_dense(cfg.frame_dim, fx, Activation::tanh, *rng) : zero_dense(cfg.frame_dim, fx, Activation::tanh);
    p.phi_z = rng ? make_dense(cfg.latent_dim, fz, Activation::tanh, *rng) : zero_dense(cfg.latent_dim, fz, Activation::tanh);
  }
  p.rnn = rng ? make_lstm(fx + fz, H, *rng) : zero_lstm(fx + fz, H);
  p.prior = make_net(H, H, cfg.latent_dim, cfg.head_layers, rng);
  p.posterior = make_net(fx + H, H, cfg.latent_dim, cfg.head_layers, rng);
  p.emission = make_net(fz + H, H, cfg.frame_dim, cfg.head_layers, rng);
  return p;
}

}  // namespace detail

// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
inline VrnnParams init_vrnn(const VrnnConfig& cfg, RngStream& rng) { return detail::make_params(cfg, &rng); }

// Every tensor zero (including the forget-gate bias).
inline VrnnParams zero_vrnn(const VrnnConfig& cfg) { return detail::make_params(cfg, nullptr); }

// ---------------------------------------------------------------------------
// Forward

template <class T>
GaussianParamsT<T> gaussian_net_forward(const GaussianNetT<T>& net, const T& x) {
  T h = x;
  for (const auto& layer : net.hidden) h = dense_forward(layer, h);
  return gaussian_head_forward(net.mean, net.log_var, h);
}

inline VrnnState initial_state(const VrnnConfig& cfg, std::size_t batch = 1) {
  return VrnnState{Tensor({batch, cfg.hidden_dim}, 0.0), Tensor({batch, cfg.hidden_dim}, 0.0), 0};
}

template <class T>
VrnnStateT<T> lift_state(const T& like, const VrnnState& s) {
  return VrnnStateT<T>{constant_like(like, s.h), constant_like(like, s.c), s.t};
}

// One timestep for a batch of rows. x_t is [batch x frame_dim] or [frame_dim].
template <class T>
StepResultT<T> vrnn_step(const VrnnParamsT<T>& params, const VrnnStateT<T>& state, const T& x_t, RngStream& rng) {
  const VrnnConfig& cfg = params.config;
  const Tensor& xv = value_of(x_t);
  T x = detail::as_batch(x_t);
  const Tensor& hv = value_of(state.h);
  if (xv.cols() != cfg.frame_dim || hv.rank() != 2 || hv.cols() != cfg.hidden_dim || hv.rows() != value_of(x).rows()) {
    throw DimensionError("vrnn_step: x " + shape_str(xv.shape()) + " / state " + shape_str(hv.shape()) +
                         " do not match frame_dim " + std::to_string(cfg.frame_dim) + ", hidden_dim " +
                         std::to_string(cfg.hidden_dim));
  }
  try {
    T fx = cfg.feature_extractor ? dense_forward(params.phi_x, x) : x;
    auto prior = gaussian_net_forward(params.prior, state.h);
    auto posterior = gaussian_net_forward(params.posterior, concat(fx, state.h));
    T z = reparameterize_sample(posterior, rng);
    T fz = cfg.feature_extractor ? dense_forward(params.phi_z, z) : z;
    auto emission = gaussian_net_forward(params.emission, concat(fz, state.h));
    T recon = gaussian_log_density(emission, x);
    T kl = kl_diag_gaussians(posterior, prior);
    T elbo = sub(recon, kl);
    auto [h, c] = lstm_step(params.rnn, concat(fx, fz), state.h, state.c);
    return StepResultT<T>{elbo, recon, kl, prior, posterior, emission, z, VrnnStateT<T>{h, c, state.t + 1}};
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at timestep " + std::to_string(state.t));
  }
}

template <class T>
struct SequenceElboT {
  T total;           // scalar: sum of per-frame ELBOs
  Tensor per_frame;  // [T]
};
using SequenceElbo = SequenceElboT<Tensor>;

// Chains vrnn_step over a whole sequence from the zero state.
template <class T>
SequenceElboT<T> elbo_sequence(const VrnnParamsT<T>& params, const FrameSequence& x, RngStream& rng) {
  const std::size_t n = x.length();
  if (n == 0) throw ContractError("elbo_sequence: empty sequence");
  if (x.frame_dim() != params.config.frame_dim) {
    throw DimensionError("elbo_sequence: frames have dimension " + std::to_string(x.frame_dim()) +
                         " but the model expects " + std::to_string(params.config.frame_dim));
  }
  const T& anchor = params.rnn.bias;
  VrnnStateT<T> state = lift_state(anchor, initial_state(params.config, 1));
  Tensor per_frame({n});
  T total = constant_like(anchor, Tensor::scalar(0.0));
  for (std::size_t t = 0; t < n; ++t) {
    T xt = constant_like(anchor, kernels::slice_rows(x.frames, t, t + 1));
    auto step = vrnn_step(params, state, xt, rng);
    per_frame[t] = value_of(step.elbo)[0];
    total = t == 0 ? step.elbo : add(total, step.elbo);
    state = std::move(step.next_state);
  }
  return {total, per_frame};
}

// Per-frame ELBO averaged over n_samples independent latent paths, without
// recording a tape. With n_samples == 1 this is bitwise the per_frame output
// of elbo_sequence for the same rng state.
inline Tensor score_frames(const VrnnParams& params, const FrameSequence& x, std::size_t n_samples, RngStream& rng) {
  if (n_samples == 0) throw ContractError("score_frames: n_samples must be >= 1");
  const std::size_t n = x.length();
  if (n == 0) throw ContractError("score_frames: empty sequence");
  if (x.frame_dim() != params.config.frame_dim) {
    throw DimensionError("score_frames: frames have dimension " + std::to_string(x.frame_dim()) +
                         " but the model expects " + std::to_string(params.config.frame_dim));
  }
  const std::size_t d = x.frame_dim();
  VrnnState state = initial_state(params.config, n_samples);
  Tensor scores({n});
  Tensor xt({n_samples, d});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t s = 0; s < n_samples; ++s)
      std::copy_n(x.frames.data().begin() + t * d, d, xt.data().begin() + s * d);
    auto step = vrnn_step(params, state, xt, rng);
    scores[t] = kernels::mean(step.elbo, 0)[0];
    state = std::move(step.next_state);
  }
  return scores;
}

// Ancestral sampling: z_t from the prior, x_t from the emission.
inline FrameSequence generate(const VrnnParams& params, std::size_t length, RngStream& rng,
                              std::uint32_t sample_rate = kDefaultSampleRate) {
  if (length == 0) throw ContractError("generate: length must be >= 1");
  const VrnnConfig& cfg = params.config;
  VrnnState state = initial_state(cfg, 1);
  Tensor frames({length, cfg.frame_dim});
  for (std::size_t t = 0; t < length; ++t) {
    auto prior = gaussian_net_forward(params.prior, state.h);
    Tensor z = reparameterize_sample(prior, rng);
    Tensor fz = cfg.feature_extractor ? dense_forward(params.phi_z, z) : z;
    auto emission = gaussian_net_forward(params.emission, concat(fz, state.h));
    Tensor x = reparameterize_sample(emission, rng);
    std::copy(x.data().begin(), x.data().end(), frames.data().begin() + t * cfg.frame_dim);
    Tensor fx = cfg.feature_extractor ? dense_forward(params.phi_x, x) : x;
    auto [h, c] = lstm_step(params.rnn, concat(fx, fz), state.h, state.c);
    state = VrnnState{std::move(h), std::move(c), t + 1};
  }
  return FrameSequence{std::move(frames), sample_rate};
}

}  // namespace vrnd
