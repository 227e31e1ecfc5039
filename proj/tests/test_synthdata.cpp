#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "vrnd/eval.hpp"
#include "vrnd/synthdata.hpp"

using namespace vrnd;

namespace {

double rms(const std::vector<double>& x, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(end - begin));
}

double rms_pcm(const std::vector<std::int16_t>& x) {
  double s = 0.0;
  for (auto v : x) s += (v / 32768.0) * (v / 32768.0);
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Labels recomputed sample by sample, independent of frame_labels_for.
std::vector<std::uint8_t> brute_force_labels(std::size_t n, const std::vector<EventSpec>& events, std::size_t d) {
  std::vector<std::uint8_t> covered(n, 0);
  for (const auto& e : events)
    for (std::size_t i = e.onset; i < e.end(); ++i) covered[i] = 1;
  std::vector<std::uint8_t> labels(n / d, 0);
  for (std::size_t t = 0; t < labels.size(); ++t)
    for (std::size_t i = t * d; i < (t + 1) * d; ++i) labels[t] |= covered[i];
  return labels;
}

BenchmarkConfig small_bench() {
  BenchmarkConfig c;
  c.train_seconds = 20;
  c.valid_seconds = 10;
  c.test_seconds = 40;
  c.recording_seconds = 10;
  return c;
}

}  // namespace

TEST(Background, OneSecondIs16000Samples) {
  RngStream rng(1);
  for (auto p : {BackgroundProfile::tonal_mix, BackgroundProfile::filtered_noise}) {
    EXPECT_EQ(gen_background(1.0, p, rng).length(), 16000u);
  }
}

TEST(Background, DeterministicWav) {
  RngStream a(2), b(2);
  EXPECT_EQ(write_wav(gen_background(0.5, BackgroundProfile::tonal_mix, a)),
            write_wav(gen_background(0.5, BackgroundProfile::tonal_mix, b)));
}

TEST(Background, RmsIsTenthOfFullScale) {
  RngStream rng(3);
  for (auto p : {BackgroundProfile::tonal_mix, BackgroundProfile::filtered_noise}) {
    EXPECT_NEAR(rms_pcm(gen_background(2.0, p, rng).channels[0]), 0.1, 1e-4);
  }
}

TEST(Background, TonalMixSpectrumPeaks) {
  RngStream rng(4);
  auto x = background_waveform(1600, BackgroundProfile::tonal_mix, rng);
  auto spec = magnitude_spectrum(x);  // 10 Hz bins
  std::vector<std::size_t> bins(spec.size());
  for (std::size_t k = 0; k < bins.size(); ++k) bins[k] = k;
  std::partial_sort(bins.begin(), bins.begin() + 3, bins.end(), [&](auto a, auto b) { return spec[a] > spec[b]; });
  std::vector<std::size_t> top(bins.begin(), bins.begin() + 3);
  std::sort(top.begin(), top.end());
  const std::size_t expected[3] = {22, 44, 66};
  for (int i = 0; i < 3; ++i) EXPECT_LE(std::abs(static_cast<long>(top[i]) - static_cast<long>(expected[i])), 1);
}

TEST(Background, FilteredNoiseIsLowPass) {
  RngStream rng(5);
  auto x = background_waveform(16000, BackgroundProfile::filtered_noise, rng);
  double low = 0.0, high = 0.0;
  for (std::size_t b = 0; b + 160 <= x.size(); b += 160) {
    auto s = magnitude_spectrum(std::span<const double>(x).subspan(b, 160));
    for (std::size_t k = 1; k < 10; ++k) low += s[k];
    for (std::size_t k = 70; k < 79; ++k) high += s[k];
  }
  EXPECT_GT(low, 2 * high);
}

TEST(Inject, EmptyEventListIsIdentity) {
  RngStream rng(6);
  WavFile bg = gen_background(1.0, BackgroundProfile::filtered_noise, rng);
  auto rec = inject_events(bg, {}, rng);
  EXPECT_EQ(rec.wav, bg);
  EXPECT_EQ(rec.frame_labels, std::vector<std::uint8_t>(100, 0));
}

TEST(Inject, OverlapRuleMarksFramesOneAndTwo) {
  RngStream rng(7);
  WavFile bg = gen_background(0.1, BackgroundProfile::filtered_noise, rng);
  EventSpec e = random_event(EventKind::scream, rng);
  e.onset = 160;
  e.duration = 320;
  auto rec = inject_events(bg, {e}, rng);
  std::vector<std::uint8_t> expected(10, 0);
  expected[1] = expected[2] = 1;
  EXPECT_EQ(rec.frame_labels, expected);
}

TEST(Inject, OneSampleOverlapCounts) {
  EventSpec e;
  e.onset = 319;
  e.duration = 2;  // samples 319 and 320
  auto labels = frame_labels_for(1600, {e});
  EXPECT_EQ(labels[1], 1);
  EXPECT_EQ(labels[2], 1);
  EXPECT_EQ(labels[3], 0);
}

TEST(Inject, OverlappingEventsRejected) {
  RngStream rng(8);
  WavFile bg = gen_background(1.0, BackgroundProfile::filtered_noise, rng);
  EventSpec a = random_event(EventKind::fall, rng), b = random_event(EventKind::fall, rng);
  a.onset = 100;
  a.duration = 1000;
  b.onset = 1099;
  b.duration = 1000;
  EXPECT_THROW(inject_events(bg, {a, b}, rng), ContractError);
  b.onset = 1100;
  EXPECT_NO_THROW(inject_events(bg, {a, b}, rng));
}

TEST(Inject, OutOfBoundsRejected) {
  RngStream rng(9);
  WavFile bg = gen_background(0.1, BackgroundProfile::filtered_noise, rng);
  EventSpec e = random_event(EventKind::alarm, rng);
  e.onset = 1000;
  e.duration = 1000;
  EXPECT_THROW(inject_events(bg, {e}, rng), ContractError);
}

TEST(Events, FractureTailSubmergesInBackground) {
  RngStream rng(10);
  for (int i = 0; i < 20; ++i) {
    EventSpec e = random_event(EventKind::fracture, rng);
    auto w = synthesize_event(e, rng);
    const std::size_t n = w.size(), frame = 160;
    double peak = 0.0;
    for (std::size_t b = 0; b + frame <= n; b += frame) peak = std::max(peak, rms(w, b, b + frame));
    EXPECT_LT(rms(w, n - n / 10, n), 0.1 * peak) << "event " << i;
  }
}

TEST(Events, FirstHalfAtLeastTwiceBackgroundRms) {
  RngStream rng(11);
  for (auto kind : {EventKind::alarm, EventKind::fall, EventKind::fracture, EventKind::scream}) {
    for (int i = 0; i < 50; ++i) {
      EventSpec e = random_event(kind, rng);
      auto w = synthesize_event(e, rng);
      EXPECT_GE(rms(w, 0, w.size() / 2), 2.0 * kBackgroundRms) << to_string(kind) << " " << i;
      EXPECT_GT(e.amplitude, 0.0);
      EXPECT_LE(e.amplitude, 1.0);
    }
  }
}

TEST(Benchmark, CleanTrainHasNoPositives) {
  RngStream rng(12);
  auto b = gen_benchmark(small_bench(), rng);
  for (const auto& r : b.train)
    for (auto l : r.frame_labels) EXPECT_EQ(l, 0);
  for (const auto& r : b.valid) EXPECT_TRUE(r.events.empty());
}

TEST(Benchmark, DefaultTestFractionInRangeAndAllKindsPresent) {
  RngStream rng(13);
  BenchmarkConfig cfg;
  cfg.train_seconds = 20;  // only the test split matters here
  cfg.valid_seconds = 20;
  auto b = gen_benchmark(cfg, rng);
  std::size_t pos = 0, total = 0;
  std::set<EventKind> kinds;
  for (const auto& r : b.test) {
    for (auto l : r.frame_labels) pos += l;
    total += r.frame_labels.size();
    for (const auto& e : r.events) kinds.insert(e.kind);
  }
  EXPECT_EQ(total, 12000u);
  const double frac = static_cast<double>(pos) / static_cast<double>(total);
  EXPECT_GE(frac, 0.03);
  EXPECT_LE(frac, 0.07);
  EXPECT_EQ(kinds.size(), 4u);
}

TEST(Benchmark, LabelsReconstructibleFromEvents) {
  RngStream rng(14);
  BenchmarkConfig cfg = small_bench();
  cfg.contamination_rate = 0.1;
  auto b = gen_benchmark(cfg, rng);
  for (const auto* split : {&b.train, &b.test}) {
    for (const auto& r : *split) EXPECT_EQ(r.frame_labels, brute_force_labels(r.wav.length(), r.events, 160));
  }
}

TEST(Benchmark, ContaminationFractionApproximatelyMet) {
  RngStream rng(15);
  BenchmarkConfig cfg = small_bench();
  cfg.train_seconds = 120;
  cfg.contamination_rate = 0.05;
  auto b = gen_benchmark(cfg, rng);
  std::size_t pos = 0, total = 0;
  for (const auto& r : b.train) {
    for (auto l : r.frame_labels) pos += l;
    total += r.frame_labels.size();
  }
  EXPECT_NEAR(static_cast<double>(pos) / total, 0.05, 0.01);
}

TEST(Benchmark, SameSeedIdentical) {
  RngStream a(16), b(16);
  auto x = gen_benchmark(small_bench(), a), y = gen_benchmark(small_bench(), b);
  ASSERT_EQ(x.test.size(), y.test.size());
  for (std::size_t i = 0; i < x.test.size(); ++i) {
    EXPECT_EQ(x.test[i].wav, y.test[i].wav);
    EXPECT_EQ(x.test[i].frame_labels, y.test[i].frame_labels);
  }
  EXPECT_EQ(x.train[0].wav, y.train[0].wav);
}

TEST(Benchmark, ContaminationOutOfRangeRejected) {
  BenchmarkConfig cfg;
  cfg.contamination_rate = 0.25;
  RngStream rng(17);
  EXPECT_THROW(gen_benchmark(cfg, rng), ConfigError);
}

TEST(Sidecar, RunLengthRoundTrip) {
  std::vector<std::uint8_t> labels{0, 0, 1, 1, 1, 0, 1};
  auto runs = rle_encode(labels);
  EXPECT_EQ(runs.dump(), "[[0,2],[1,3],[0,1],[1,1]]");
  EXPECT_EQ(rle_decode(runs), labels);
}

TEST(Sidecar, WriteAndReadSplit) {
  RngStream rng(18);
  auto b = gen_benchmark(small_bench(), rng);
  const auto dir = std::filesystem::temp_directory_path() / "vrnd_test_sidecar";
  std::filesystem::remove_all(dir);
  write_split(dir, "test", b.test);
  auto recs = read_label_file((dir / "labels.jsonl").string());
  ASSERT_EQ(recs.size(), b.test.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].labels, b.test[i].frame_labels);
    EXPECT_EQ(recs[i].frame_dim, 160u);
    EXPECT_EQ(read_wav_file((dir / recs[i].path).string()), b.test[i].wav);
    ASSERT_EQ(recs[i].events.size(), b.test[i].events.size());
    for (std::size_t k = 0; k < recs[i].events.size(); ++k) {
      EXPECT_EQ(recs[i].events[k].onset, b.test[i].events[k].onset);
      EXPECT_EQ(recs[i].events[k].kind, b.test[i].events[k].kind);
    }
  }
  std::filesystem::remove_all(dir);
}
