#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "vrnd/audio.hpp"
#include "wav_fuzz.hpp"

using namespace vrnd;

namespace {

binio::Bytes minimal_mono() {
  binio::Bytes b;
  binio::put_tag(b, "RIFF");
  binio::put_u32(b, 36 + 6);
  binio::put_tag(b, "WAVE");
  binio::put_tag(b, "fmt ");
  binio::put_u32(b, 16);
  binio::put_u16(b, 1);
  binio::put_u16(b, 1);
  binio::put_u32(b, 16000);
  binio::put_u32(b, 32000);
  binio::put_u16(b, 2);
  binio::put_u16(b, 16);
  binio::put_tag(b, "data");
  binio::put_u32(b, 6);
  for (std::int16_t s : {0, 16384, -16384}) binio::put_u16(b, static_cast<std::uint16_t>(s));
  return b;
}

WavFile mono(std::vector<std::int16_t> s, std::uint32_t rate = 16000) {
  WavFile w;
  w.sample_rate = rate;
  w.channels.push_back(std::move(s));
  return w;
}

}  // namespace

TEST(ReadWav, MinimalMonoFile) {
  WavFile w = read_wav(minimal_mono());
  EXPECT_EQ(w.sample_rate, 16000u);
  ASSERT_EQ(w.channels.size(), 1u);
  EXPECT_EQ(w.channels[0], (std::vector<std::int16_t>{0, 16384, -16384}));
}

TEST(ReadWav, StereoWithTrailingListChunk) {
  WavFile w;
  w.channels = {{1, 2, 3}, {-1, -2, -3}};
  auto b = write_wav(w);
  binio::put_tag(b, "LIST");
  binio::put_u32(b, 5);
  for (int i = 0; i < 5; ++i) b.push_back('x');
  b.push_back(0);  // pad byte for the odd-sized chunk
  const std::uint32_t riff = static_cast<std::uint32_t>(b.size() - 8);
  fuzz::put_u32_at(b, 4, riff);
  EXPECT_EQ(read_wav(b), w);
}

TEST(ReadWav, ChunkBeforeFmtIsSkipped) {
  auto good = minimal_mono();
  binio::Bytes b(good.begin(), good.begin() + 12);
  binio::put_tag(b, "junk");
  binio::put_u32(b, 4);
  binio::put_u32(b, 0xDEADBEEF);
  b.insert(b.end(), good.begin() + 12, good.end());
  fuzz::put_u32_at(b, 4, static_cast<std::uint32_t>(b.size() - 8));
  EXPECT_EQ(read_wav(b), read_wav(good));
}

TEST(ReadWav, FuzzedCanonicalFilesRoundTripByteForByte) {
  RngStream rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto bytes = write_wav(fuzz::random_wav(rng));
    EXPECT_EQ(write_wav(read_wav(bytes)), bytes) << "file " << i;
  }
}

TEST(ReadWav, MalformedFilesRaiseTypedErrors) {
  RngStream rng(2);
  for (int i = 0; i < 10; ++i) {
    for (const auto& m : fuzz::malformed_variants(write_wav(fuzz::random_wav(rng)))) {
      EXPECT_EQ(fuzz::try_parse(m.bytes), m.expected) << m.name;
    }
  }
}

TEST(ReadWav, TruncationReportsChunkOffset) {
  auto b = minimal_mono();
  b.resize(b.size() - 2);
  try {
    read_wav(b);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 36u);
  }
}

TEST(ReadWav, UnsupportedFormatNamesCode) {
  auto b = minimal_mono();
  fuzz::put_u16_at(b, 20, 3);
  try {
    read_wav(b);
    FAIL() << "expected UnsupportedFormatError";
  } catch (const UnsupportedFormatError& e) {
    EXPECT_EQ(e.format_code(), 3);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(ReadWav, RandomByteFlipsNeverEscapeTypedErrors) {
  RngStream rng(3);
  const auto good = write_wav(fuzz::random_wav(rng));
  for (int i = 0; i < 2000; ++i) {
    auto b = good;
    const std::size_t flips = 1 + rng.below(4);
    for (std::size_t k = 0; k < flips; ++k) b[rng.below(std::min<std::size_t>(b.size(), 64))] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    EXPECT_NE(fuzz::try_parse(b), fuzz::ParseOutcome::other_error);
  }
}

TEST(WavFile, FileRoundTrip) {
  RngStream rng(4);
  WavFile w = fuzz::random_wav(rng);
  const auto path = std::filesystem::temp_directory_path() / "vrnd_test_audio_roundtrip.wav";
  write_wav_file(path.string(), w);
  EXPECT_EQ(read_wav_file(path.string()), w);
  std::filesystem::remove(path);
}

TEST(Mixdown, MonoUnchanged) {
  WavFile w = mono({1, -5, 7});
  EXPECT_EQ(mixdown(w), w);
}

TEST(Mixdown, Cancellation) {
  WavFile w;
  w.channels = {{100}, {-100}};
  EXPECT_EQ(mixdown(w).channels[0], (std::vector<std::int16_t>{0}));
}

TEST(Mixdown, NoOverflow) {
  WavFile w;
  w.channels = {{32767, -32768}, {32767, -32768}};
  EXPECT_EQ(mixdown(w).channels[0], (std::vector<std::int16_t>{32767, -32768}));
}

TEST(Mixdown, TiesRoundAwayFromZero) {
  WavFile w;
  w.channels = {{1, -1}, {2, -2}};
  EXPECT_EQ(mixdown(w).channels[0], (std::vector<std::int16_t>{2, -2}));
}

TEST(Mixdown, PermutationInvariant) {
  RngStream rng(5);
  WavFile w = fuzz::random_wav(rng);
  while (w.channels.size() < 3) w.channels.push_back(w.channels[0]);
  WavFile r = w;
  std::reverse(r.channels.begin(), r.channels.end());
  EXPECT_EQ(mixdown(w), mixdown(r));
}

TEST(FrameSignal, OneSecondGivesHundredFrames) {
  FrameSequence x = frame_signal(mono(std::vector<std::int16_t>(16000, 3)));
  EXPECT_EQ(x.length(), 100u);
  EXPECT_EQ(x.frame_dim(), 160u);
  EXPECT_DOUBLE_EQ(static_cast<double>(x.frame_dim()) / x.sample_rate, 0.01);
}

TEST(FrameSignal, RemainderDiscarded) {
  EXPECT_EQ(frame_signal(mono(std::vector<std::int16_t>(161, 0))).length(), 1u);
}

TEST(FrameSignal, TooShortIsAnError) {
  EXPECT_THROW(frame_signal(mono(std::vector<std::int16_t>(159, 0))), ContractError);
}

TEST(FrameSignal, ScalingAndFlattening) {
  RngStream rng(6);
  WavFile w = fuzz::random_wav(rng);
  w.channels.resize(1);
  w.channels[0].resize(1000);
  w.channels[0][0] = -32768;
  FrameSequence x = frame_signal(w, 160);
  EXPECT_EQ(x.frames[0], -1.0);
  for (std::size_t i = 0; i < 6 * 160; ++i) EXPECT_EQ(x.frames[i], w.channels[0][i] / 32768.0);
  for (double v : x.frames.data()) EXPECT_TRUE(v >= -1.0 && v < 1.0);
}

TEST(FrameSignal, RequiresMono) {
  WavFile w;
  w.channels = {std::vector<std::int16_t>(320), std::vector<std::int16_t>(320)};
  EXPECT_THROW(frame_signal(w), ContractError);
}

TEST(Noise, VarianceFromSnrDefinition) {
  // P_signal = 1, 10 dB -> noise power 0.1
  FrameSequence x{Tensor({100, 100}, 1.0), 16000};
  RngStream rng(7);
  Tensor n = draw_noise_snr(x, 10.0, rng);
  EXPECT_NEAR(mean_power(n), 0.1, 1e-12);
}

TEST(Noise, InfiniteSnrIsIdentity) {
  RngStream rng(8);
  FrameSequence x{vrnd::testing::random_tensor({20, 160}, rng, -0.5, 0.5), 16000};
  EXPECT_EQ(add_noise_snr(x, kNoNoise, rng), x);
}

TEST(Noise, MeasuredSnrWithinTenthOfDecibel) {
  RngStream rng(9);
  FrameSequence x{vrnd::testing::random_tensor({300, 160}, rng, -0.3, 0.3), 16000};
  for (double snr : {5.0, 10.0, 15.0}) {
    Tensor n = draw_noise_snr(x, snr, rng);
    EXPECT_NEAR(measured_snr_db(x, n), snr, 0.1);
  }
}

TEST(Noise, DeterministicAndClipped) {
  RngStream data(10);
  FrameSequence x{vrnd::testing::random_tensor({50, 160}, data, -0.99, 0.99), 16000};
  RngStream a(11), b(11);
  auto ya = add_noise_snr(x, 0.0, a);
  EXPECT_EQ(ya, add_noise_snr(x, 0.0, b));
  for (double v : ya.frames.data()) EXPECT_TRUE(v >= -1.0 && v <= 1.0);
}

TEST(Noise, DifferentSeedsEqualPower) {
  RngStream data(12);
  FrameSequence x{vrnd::testing::random_tensor({100, 160}, data, -0.3, 0.3), 16000};
  RngStream a(13), b(14);
  const double pa = mean_power(draw_noise_snr(x, 5.0, a)), pb = mean_power(draw_noise_snr(x, 5.0, b));
  EXPECT_NEAR(pa / pb, 1.0, 0.01);
}

TEST(Noise, SilentInputIsAnError) {
  FrameSequence x{Tensor({2, 160}, 0.0), 16000};
  RngStream rng(15);
  EXPECT_THROW(add_noise_snr(x, 5.0, rng), ContractError);
}

TEST(FrameCache, RoundTripAndCorruption) {
  RngStream rng(16);
  FrameSequence x{vrnd::testing::random_tensor({7, 160}, rng), 16000};
  auto b = encode_frames(x);
  EXPECT_EQ(decode_frames(b), x);
  b.pop_back();
  EXPECT_THROW(decode_frames(b), ParseError);
}
