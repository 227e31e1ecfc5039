#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vrnd/checkpoint.hpp"
#include "vrnd/eval.hpp"
#include "vrnd/trainer.hpp"
#include "vrnd/vrnn.hpp"

using namespace vrnd;
using vrnd::testing::random_tensor;

namespace {

VrnnConfig tiny_config() {
  VrnnConfig c;
  c.frame_dim = 3;
  c.latent_dim = 2;
  c.hidden_dim = 2;
  c.feature_dim = 2;
  return c;
}

FrameSequence random_sequence(std::size_t T, std::size_t d, RngStream& rng, double scale = 0.5) {
  return FrameSequence{random_tensor({T, d}, rng, -scale, scale), kDefaultSampleRate};
}

}  // namespace

TEST(Vrnn, ZeroParamsSilentFrameElbo) {
  VrnnParams p = zero_vrnn(VrnnConfig{});
  RngStream rng(1);
  FrameSequence x{Tensor({5, 160}, 0.0), kDefaultSampleRate};
  auto e = elbo_sequence(p, x, rng);
  // prior == posterior == N(0, I): KL 0; emission N(0, I) at x == 0.
  for (double v : e.per_frame.data()) EXPECT_NEAR(v, -80.0 * std::log(2 * std::numbers::pi), 1e-10);
}

TEST(Vrnn, ElboIsReconMinusKl) {
  RngStream rng(2);
  VrnnParams p = init_vrnn(tiny_config(), rng);
  VrnnState s = initial_state(p.config, 3);
  for (int t = 0; t < 4; ++t) {
    auto r = vrnn_step(p, s, random_tensor({3, 3}, rng), rng);
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(r.elbo[b], r.recon_logp[b] - r.kl[b]);
    s = r.next_state;
  }
}

TEST(Vrnn, KlTermIsNonNegative) {
  RngStream rng(3);
  VrnnParams p = init_vrnn(tiny_config(), rng);
  VrnnState s = initial_state(p.config, 8);
  for (int t = 0; t < 10; ++t) {
    auto r = vrnn_step(p, s, random_tensor({8, 3}, rng), rng);
    for (double v : r.kl.data()) EXPECT_GE(v, 0.0);
    s = r.next_state;
  }
}

TEST(Vrnn, SingleFrameSequenceEqualsOneStep) {
  RngStream init(4);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream data(5);
  FrameSequence x = random_sequence(1, 3, data);
  RngStream a(6), b(6);
  auto seq = elbo_sequence(p, x, a);
  auto step = vrnn_step(p, initial_state(p.config, 1), x.frames, b);
  EXPECT_EQ(seq.total.item(), step.elbo[0]);
}

TEST(Vrnn, TotalIsSumOfFrames) {
  RngStream init(7);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream data(8), rng(9);
  auto e = elbo_sequence(p, random_sequence(12, 3, data), rng);
  double s = 0.0;
  for (double v : e.per_frame.data()) s += v;
  EXPECT_NEAR(e.total.item(), s, 1e-12);
}

TEST(Vrnn, TapeAndPlainForwardsAgreeBitwise) {
  RngStream init(10);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream data(11);
  FrameSequence x = random_sequence(6, 3, data);
  RngStream a(12), b(12);
  auto plain = elbo_sequence(p, x, a);
  Tape tape;
  auto taped = elbo_sequence(bind(tape, p), x, b);
  EXPECT_EQ(plain.per_frame, taped.per_frame);
  EXPECT_EQ(plain.total.item(), taped.total.value().item());
}

TEST(Vrnn, ScoreFramesWithOneSampleMatchesElboSequence) {
  RngStream init(13);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream data(14);
  FrameSequence x = random_sequence(9, 3, data);
  RngStream a(15), b(15);
  EXPECT_EQ(score_frames(p, x, 1, a), elbo_sequence(p, x, b).per_frame);
}

TEST(Vrnn, ScoreFramesAveragesSamples) {
  RngStream init(16);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream data(17);
  FrameSequence x = random_sequence(5, 3, data);
  RngStream rng(18);
  Tensor s = score_frames(p, x, 4, rng);
  EXPECT_EQ(s.shape(), (Shape{5}));
  EXPECT_TRUE(s.all_finite());
}

TEST(Vrnn, GradientsMatchFiniteDifferences) {
  RngStream init(19);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream data(20);
  EXPECT_LT(oracle::vrnn_gradient_check(p, random_sequence(4, 3, data), 21), 1e-4);
}

TEST(Vrnn, GradientsMatchWithoutFeatureExtractorAndDeeperHeads) {
  VrnnConfig c = tiny_config();
  c.feature_extractor = false;
  c.head_layers = 2;
  RngStream init(22);
  VrnnParams p = init_vrnn(c, init);
  RngStream data(23);
  EXPECT_LT(oracle::vrnn_gradient_check(p, random_sequence(4, 3, data), 24), 1e-4);
}

TEST(Vrnn, WrongFrameDimensionIsDescriptive) {
  RngStream init(25);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream rng(26);
  FrameSequence x = random_sequence(3, 4, rng);
  try {
    elbo_sequence(p, x, rng);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Vrnn, ParameterNamesAreStable) {
  RngStream init(27);
  VrnnParams p = init_vrnn(tiny_config(), init);
  std::vector<std::string> names;
  visit_params(p, [&](const std::string& n, const Tensor&) { names.push_back(n); });
  EXPECT_EQ(names.front(), "phi_x.weight");
  EXPECT_NE(std::find(names.begin(), names.end(), "prior.hidden0.weight"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "rnn.w_hidden"), names.end());
  EXPECT_EQ(names.back(), "emission.log_var.bias");
}

TEST(Vrnn, GenerateFromZeroParamsIsStandardNormal) {
  VrnnParams p = zero_vrnn(tiny_config());
  RngStream rng(28);
  FrameSequence g = generate(p, 20000, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : g.frames.data()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(g.frames.size());
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}

// The Kalman filter oracle itself: the filter's log-likelihood must equal the
// joint Gaussian density of x built from the model's covariance.
TEST(KalmanOracle, MatchesDenseGaussianDensity) {
  oracle::LinearGaussian m;
  RngStream rng(29);
  const std::size_t T = 6;
  auto x = m.sample(T, rng);
  Eigen::MatrixXd cov(T, T);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      // Var(z_k) recursion, Cov(z_i, z_j) = a^|i-j| Var(z_min)
      double v = m.p0;
      for (std::size_t k = 1; k <= std::min(i, j); ++k) v = m.a * m.a * v + m.q;
      cov(i, j) = std::pow(m.a, std::abs(static_cast<double>(i) - static_cast<double>(j))) * v + (i == j ? m.r : 0.0);
    }
  }
  Eigen::VectorXd xv = Eigen::Map<Eigen::VectorXd>(x.data(), T);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double quad = xv.dot(llt.solve(xv));
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double dense = -0.5 * (T * std::log(2 * std::numbers::pi) + logdet + quad);
  EXPECT_NEAR(m.log_likelihood(x), dense, 1e-10);
}

TEST(Vrnn, TrainedElboStaysBelowExactLikelihood) {
  // small version of the acceptance check: 20 long held-out sequences
  oracle::LinearGaussian lg;
  VrnnConfig c;
  c.frame_dim = 1;
  c.latent_dim = 1;
  c.hidden_dim = 8;
  c.feature_dim = 8;
  RngStream data(30);
  std::vector<FrameSequence> train, valid;
  auto to_seq = [](const std::vector<double>& v) { return FrameSequence{Tensor({v.size(), 1}, v), 1}; };
  for (int i = 0; i < 100; ++i) train.push_back(to_seq(lg.sample(50, data)));
  for (int i = 0; i < 10; ++i) valid.push_back(to_seq(lg.sample(50, data)));
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.epochs = 30;
  tc.patience = 30;
  tc.chunk_len = 50;
  tc.batch_size = 8;
  RngStream init(31);
  auto fitted = fit(init_vrnn(c, init), train, valid, tc);
  RngStream rng(32);
  for (int i = 0; i < 20; ++i) {
    auto x = lg.sample(10000, data);
    EXPECT_LE(elbo_sequence(fitted.best, to_seq(x), rng).total.item(), lg.log_likelihood(x)) << "sequence " << i;
  }
}

TEST(Vrnn, LearnsToneSpectrum) {
  // a model trained on a 440 Hz tone generates frames peaking at 440 Hz
  const std::size_t d = 160, T = 400;
  Tensor frames({T, d});
  for (std::size_t i = 0; i < T * d; ++i) frames[i] = 0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / 16000.0);
  std::vector<FrameSequence> data{FrameSequence{frames, 16000}};
  VrnnConfig c;
  c.latent_dim = 8;
  c.hidden_dim = 32;
  c.feature_dim = 32;
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.epochs = 60;
  tc.batch_size = 4;
  tc.patience = 60;
  RngStream init(33);
  auto fitted = fit(init_vrnn(c, init), data, data, tc);
  RngStream rng(34);
  FrameSequence g = generate(fitted.best, 100, rng);
  const std::size_t expected = static_cast<std::size_t>(std::lround(440.0 * d / 16000.0));
  int hits = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    auto row = kernels::slice_rows(g.frames, t, t + 1);
    const auto bin = peak_bin(magnitude_spectrum(row.data()));
    hits += bin + 1 >= expected && bin <= expected + 1;
  }
  EXPECT_GE(hits, 80);
}

TEST(Vrnn, MoreScoringSamplesReduceVariance) {
  RngStream init(40);
  VrnnConfig c = tiny_config();
  c.latent_dim = 4;
  VrnnParams p = init_vrnn(c, init);
  RngStream data(41);
  FrameSequence x = random_sequence(6, 3, data);
  auto spread = [&](std::size_t n) {
    double s = 0.0, s2 = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
      RngStream rng(1000 + r);
      const double v = score_frames(p, x, n, rng)[5];
      s += v;
      s2 += v * v;
    }
    return s2 / reps - (s / reps) * (s / reps);
  };
  const double v1 = spread(1), v16 = spread(16);
  EXPECT_LT(v16, v1);
  EXPECT_LT(v16, 0.25 * v1);  // about v1 / 16 for independent paths
}

TEST(Vrnn, ReversingTimeChangesTheElbo) {
  // the recurrence is directional: reversed frames are a different sequence
  RngStream init(42);
  VrnnParams p = init_vrnn(tiny_config(), init);
  RngStream data(43);
  FrameSequence x = random_sequence(8, 3, data);
  FrameSequence r = x;
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t j = 0; j < 3; ++j) r.frames[t * 3 + j] = x.frames[(7 - t) * 3 + j];
  RngStream a(44), b(44);
  EXPECT_NE(elbo_sequence(p, x, a).total.item(), elbo_sequence(p, r, b).total.item());
}
