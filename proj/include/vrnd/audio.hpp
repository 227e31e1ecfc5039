#pragma once

// PCM16 WAV codec, mixdown, framing into fixed-width frames and additive
// Gaussian noise at a target SNR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vrnd/binio.hpp"
#include "vrnd/errors.hpp"
#include "vrnd/rng.hpp"
#include "vrnd/tensor.hpp"

namespace vrnd {

inline constexpr std::uint32_t kDefaultSampleRate = 16000;
inline constexpr std::size_t kDefaultFrameDim = 160;

struct WavFile {
  std::uint32_t sample_rate = kDefaultSampleRate;
  std::vector<std::vector<std::int16_t>> channels;  // one array per channel, equal lengths

  std::size_t channel_count() const noexcept { return channels.size(); }
  std::size_t length() const noexcept { return channels.empty() ? 0 : channels.front().size(); }

  friend bool operator==(const WavFile&, const WavFile&) = default;
};

// T x frame_dim matrix of samples scaled to [-1, 1).
struct FrameSequence {
  Tensor frames;
  std::uint32_t sample_rate = kDefaultSampleRate;

  std::size_t length() const noexcept { return frames.rows(); }
  std::size_t frame_dim() const noexcept { return frames.cols(); }
  Tensor frame(std::size_t t) const { return kernels::slice_rows(frames, t, t + 1).reshaped({frame_dim()}); }

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;
};

// ---------------------------------------------------------------------------
// WAV

namespace wav_detail {
inline constexpr std::uint16_t kFormatPcm = 1;
}

inline WavFile read_wav(std::span<const std::uint8_t> bytes) {
  binio::Reader in(bytes);
  if (in.tag(4, "RIFF header") != "RIFF") throw ParseError("missing RIFF tag", 0);
  const std::uint32_t riff_size = in.u32("RIFF header");
  if (in.tag(4, "RIFF header") != "WAVE") throw ParseError("missing WAVE tag", 8);
  const std::size_t riff_end = std::min<std::size_t>(bytes.size(), std::size_t{8} + riff_size);

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  WavFile out;
  bool have_data = false;

  while (in.offset() + 8 <= riff_end) {
    const std::size_t chunk_start = in.offset();
    const std::string id = in.tag(4, "chunk id");
    const std::uint32_t size = in.u32("chunk size");
    if (in.remaining() < size) {
      throw ParseError("truncated '" + id + "' chunk: declares " + std::to_string(size) + " bytes, " +
                           std::to_string(in.remaining()) + " available",
                       chunk_start);
    }
    auto body = in.take(size, "chunk body");
    if ((size & 1u) && in.remaining() > 0) in.skip(1, "chunk pad");

    if (id == "fmt ") {
      if (size < 16) throw ParseError("fmt chunk shorter than 16 bytes", chunk_start);
      binio::Reader f(body);
      const std::uint16_t format = f.u16("fmt");
      channels = f.u16("fmt");
      sample_rate = f.u32("fmt");
      const std::uint32_t byte_rate = f.u32("fmt");
      block_align = f.u16("fmt");
      const std::uint16_t bits = f.u16("fmt");
      if (format != wav_detail::kFormatPcm) {
        throw UnsupportedFormatError("unsupported WAV format code " + std::to_string(format) +
                                         " (only PCM, code 1, is supported)",
                                     format);
      }
      if (bits != 16) {
        throw UnsupportedFormatError("unsupported PCM bit depth " + std::to_string(bits) +
                                         " for format code 1 (only 16-bit is supported)",
                                     format);
      }
      if (channels == 0) throw ParseError("fmt chunk declares zero channels", chunk_start + 10);
      if (sample_rate == 0) throw ParseError("fmt chunk declares zero sample rate", chunk_start + 12);
      if (block_align != channels * 2u) throw ParseError("block align inconsistent with channel count", chunk_start + 20);
      if (byte_rate != sample_rate * block_align) throw ParseError("byte rate inconsistent with sample rate", chunk_start + 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk", chunk_start);
      if (have_data) throw ParseError("duplicate data chunk", chunk_start);
      if (size % block_align != 0) throw ParseError("data chunk length is not a whole number of sample frames", chunk_start + 4);
      const std::size_t n = size / block_align;
      out.channels.assign(channels, std::vector<std::int16_t>(n));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t k = (i * channels + c) * 2;
          out.channels[c][i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(body[k] | (body[k + 1] << 8)));
        }
      }
      have_data = true;
    }
    // Any other chunk (LIST, fact, cue, ...) is skipped.
  }
  if (!have_fmt) throw ParseError("missing fmt chunk", in.offset());
  if (!have_data) throw ParseError("missing data chunk", in.offset());
  out.sample_rate = sample_rate;
  return out;
}

// Canonical 44-byte-header PCM16 encoding.
inline binio::Bytes write_wav(const WavFile& w) {
  if (w.channels.empty()) throw ContractError("write_wav: no channels");
  const std::size_t n = w.length();
  for (const auto& ch : w.channels) {
    if (ch.size() != n) throw ContractError("write_wav: channels differ in length");
  }
  const auto channels = static_cast<std::uint16_t>(w.channels.size());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n * channels * 2);
  binio::Bytes out;
  out.reserve(44 + data_bytes);
  binio::put_tag(out, "RIFF");
  binio::put_u32(out, 36 + data_bytes);
  binio::put_tag(out, "WAVE");
  binio::put_tag(out, "fmt ");
  binio::put_u32(out, 16);
  binio::put_u16(out, wav_detail::kFormatPcm);
  binio::put_u16(out, channels);
  binio::put_u32(out, w.sample_rate);
  binio::put_u32(out, w.sample_rate * channels * 2u);
  binio::put_u16(out, static_cast<std::uint16_t>(channels * 2));
  binio::put_u16(out, 16);
  binio::put_tag(out, "data");
  binio::put_u32(out, data_bytes);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& ch : w.channels) binio::put_u16(out, static_cast<std::uint16_t>(ch[i]));
  return out;
}

inline WavFile read_wav_file(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return read_wav(bytes);
}

inline void write_wav_file(const std::string& path, const WavFile& w) { binio::write_file(path, write_wav(w)); }

// ---------------------------------------------------------------------------
// Signal conditioning

// Per-sample mean across channels, rounded half away from zero.
inline WavFile mixdown(const WavFile& w) {
  if (w.channels.empty()) throw ContractError("mixdown: no channels");
  if (w.channels.size() == 1) return w;
  WavFile out;
  out.sample_rate = w.sample_rate;
  out.channels.assign(1, std::vector<std::int16_t>(w.length()));
  const double n = static_cast<double>(w.channels.size());
  for (std::size_t i = 0; i < w.length(); ++i) {
    std::int64_t s = 0;
    for (const auto& ch : w.channels) s += ch[i];
    out.channels[0][i] = static_cast<std::int16_t>(std::lround(static_cast<double>(s) / n));
  }
  return out;
}

// Non-overlapping frames of frame_dim samples scaled by 1/32768; a trailing
// partial frame is dropped.
inline FrameSequence frame_signal(const WavFile& w, std::size_t frame_dim = kDefaultFrameDim) {
  if (w.channels.size() != 1) throw ContractError("frame_signal expects a mono recording; call mixdown first");
  if (frame_dim == 0) throw ContractError("frame_dim must be >= 1");
  const auto& s = w.channels.front();
  if (s.size() < frame_dim) {
    throw ContractError("recording has " + std::to_string(s.size()) + " samples, fewer than one frame of " +
                        std::to_string(frame_dim));
  }
  const std::size_t T = s.size() / frame_dim;
  Tensor frames({T, frame_dim});
  for (std::size_t i = 0; i < T * frame_dim; ++i) frames[i] = static_cast<double>(s[i]) / 32768.0;
  return FrameSequence{std::move(frames), w.sample_rate};
}

// Inverse of frame_signal for values inside [-1, 1): round to the nearest
// PCM16 code, saturating at the range ends.
inline WavFile to_wav(const FrameSequence& x) {
  WavFile w;
  w.sample_rate = x.sample_rate;
  w.channels.assign(1, std::vector<std::int16_t>(x.frames.size()));
  for (std::size_t i = 0; i < x.frames.size(); ++i) {
    const double v = std::clamp(std::round(x.frames[i] * 32768.0), -32768.0, 32767.0);
    w.channels[0][i] = static_cast<std::int16_t>(v);
  }
  return w;
}

// Marks "no corruption" in SNR lists.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

inline double mean_power(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s / static_cast<double>(t.size());
}

// White Gaussian noise for x at the target SNR, 10 log10(P_signal / P_noise)
// == snr_db with P the mean square over the whole sequence. The draw is
// rescaled to the exact target power.
inline Tensor draw_noise_snr(const FrameSequence& x, double snr_db, RngStream& rng) {
  if (std::isnan(snr_db)) throw ContractError("add_noise_snr: SNR is NaN");
  const double p_signal = mean_power(x.frames);
  if (!(p_signal > 0.0)) throw ContractError("add_noise_snr: input is silent (signal power 0)");
  const double p_noise = p_signal / std::pow(10.0, snr_db / 10.0);
  Tensor noise(x.frames.shape(), rng.normals(x.frames.size()));
  const double gain = std::sqrt(p_noise / mean_power(noise));
  for (double& v : noise.data()) v *= gain;
  return noise;
}

// x plus noise from draw_noise_snr, clipped to [-1, 1]. kNoNoise returns x.
inline FrameSequence add_noise_snr(const FrameSequence& x, double snr_db, RngStream& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return x;
  const Tensor noise = draw_noise_snr(x, snr_db, rng);
  FrameSequence out = x;
  for (std::size_t i = 0; i < noise.size(); ++i) out.frames[i] = std::clamp(x.frames[i] + noise[i], -1.0, 1.0);
  return out;
}

// SNR in dB of a clean sequence against a noise tensor of the same shape.
inline double measured_snr_db(const FrameSequence& clean, const Tensor& noise) {
  return 10.0 * std::log10(mean_power(clean.frames) / mean_power(noise));
}

// ---------------------------------------------------------------------------
// Frame cache blob: "VRNDFRM1", u64 frame_dim, u64 T, u64 sample_rate,
// then T*frame_dim little-endian doubles in row-major order.

inline binio::Bytes encode_frames(const FrameSequence& x) {
  binio::Bytes out;
  out.reserve(32 + 8 * x.frames.size());
  binio::put_tag(out, "VRNDFRM1");
  binio::put_u64(out, x.frame_dim());
  binio::put_u64(out, x.length());
  binio::put_u64(out, x.sample_rate);
  for (double v : x.frames.data()) binio::put_f64(out, v);
  return out;
}

inline FrameSequence decode_frames(std::span<const std::uint8_t> bytes) {
  binio::Reader in(bytes);
  if (in.tag(8, "frame cache magic") != "VRNDFRM1") throw ParseError("bad frame cache magic", 0);
  const std::uint64_t frame_dim = in.u64("frame cache header");
  const std::uint64_t T = in.u64("frame cache header");
  const std::uint64_t rate = in.u64("frame cache header");
  if (frame_dim == 0 || T == 0) throw ParseError("frame cache declares an empty sequence", 8);
  if (in.remaining() / 8 < frame_dim * T) throw ParseError("truncated frame cache payload", in.offset());
  Tensor frames({static_cast<std::size_t>(T), static_cast<std::size_t>(frame_dim)});
  for (double& v : frames.data()) v = in.f64("frame cache payload");
  if (!in.done()) throw ParseError("trailing bytes after frame cache payload", in.offset());
  return FrameSequence{std::move(frames), static_cast<std::uint32_t>(rate)};
}

}  // namespace vrnd
