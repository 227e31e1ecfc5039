#pragma once

// Labeled synthetic benchmark: continuous background recordings with
// digitally added alarm / fall / fracture / scream events and frame-level
// ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrnd/audio.hpp"
#include "vrnd/errors.hpp"
#include "vrnd/rng.hpp"

namespace vrnd {

inline constexpr double kBackgroundRms = 0.1;  // fraction of full scale

enum class BackgroundProfile { tonal_mix, filtered_noise };
enum class EventKind { alarm, fall, fracture, scream };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::alarm: return "alarm";
    case EventKind::fall: return "fall";
    case EventKind::fracture: return "fracture";
    case EventKind::scream: return "scream";
  }
  return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
  if (s == "alarm") return EventKind::alarm;
  if (s == "fall") return EventKind::fall;
  if (s == "fracture") return EventKind::fracture;
  if (s == "scream") return EventKind::scream;
  throw ConfigError("unknown event kind '" + s + "'");
}

inline const char* to_string(BackgroundProfile p) {
  return p == BackgroundProfile::tonal_mix ? "tonal_mix" : "filtered_noise";
}

inline BackgroundProfile profile_from_string(const std::string& s) {
  if (s == "tonal_mix") return BackgroundProfile::tonal_mix;
  if (s == "filtered_noise") return BackgroundProfile::filtered_noise;
  throw ConfigError("unknown background profile '" + s + "'");
}

struct EventSpec {
  EventKind kind = EventKind::alarm;
  std::size_t onset = 0;     // first sample
  std::size_t duration = 0;  // samples
  double amplitude = 0.5;    // envelope peak, fraction of full scale, in (0, 1]
  // alarm
  double beep_hz = 2000.0;
  std::size_t beep_count = 3;
  std::size_t beep_gap = 480;  // samples of silence between beeps
  // fall / fracture: exponential envelope time constant, seconds
  double decay_s = 0.1;
  // scream: rising chirp
  double chirp_start_hz = 500.0;
  double chirp_end_hz = 1500.0;

  std::size_t end() const noexcept { return onset + duration; }
};

struct LabeledRecording {
  WavFile wav;
  std::vector<std::uint8_t> frame_labels;
  std::vector<EventSpec> events;
};

// ---------------------------------------------------------------------------
// Background

namespace synth_detail {

inline std::vector<std::int16_t> to_pcm(const std::vector<double>& x) {
  std::vector<std::int16_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::clamp(std::round(x[i] * 32768.0), -32768.0, 32767.0);
    out[i] = static_cast<std::int16_t>(v);
  }
  return out;
}

inline void normalize_rms(std::vector<double>& x, double target) {
  double p = 0.0;
  for (double v : x) p += v * v;
  p = std::sqrt(p / static_cast<double>(x.size()));
  if (p > 0.0)
    for (double& v : x) v *= target / p;
}

}  // namespace synth_detail

// Background waveform in [-1, 1) units, RMS normalized to kBackgroundRms.
//   tonal_mix:      220/440/660 Hz sines with slowly varying amplitudes plus low-level noise
//   filtered_noise: first-order low-pass filtered white noise
inline std::vector<double> background_waveform(std::size_t n, BackgroundProfile profile, RngStream& rng,
                                               std::uint32_t sample_rate = kDefaultSampleRate) {
  std::vector<double> x(n, 0.0);
  const double fs = static_cast<double>(sample_rate);
  if (profile == BackgroundProfile::tonal_mix) {
    constexpr double freqs[3] = {220.0, 440.0, 660.0};
    constexpr double base[3] = {1.0, 0.8, 0.6};
    for (int k = 0; k < 3; ++k) {
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double mod_hz = rng.uniform(0.05, 0.25);
      const double mod_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double amp = base[k] * (1.0 + 0.3 * std::sin(2.0 * std::numbers::pi * mod_hz * t + mod_phase));
        x[i] += amp * std::sin(2.0 * std::numbers::pi * freqs[k] * t + phase);
      }
    }
    for (double& v : x) v += 0.05 * rng.normal();
  } else {
    constexpr double pole = 0.5;
    double y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y = pole * y + (1.0 - pole) * rng.normal();
      x[i] = y;
    }
  }
  synth_detail::normalize_rms(x, kBackgroundRms);
  return x;
}

inline WavFile gen_background(double duration_s, BackgroundProfile profile, RngStream& rng,
                              std::uint32_t sample_rate = kDefaultSampleRate) {
  if (!(duration_s > 0.0)) throw ContractError("gen_background: duration must be > 0");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  WavFile w;
  w.sample_rate = sample_rate;
  w.channels.push_back(synth_detail::to_pcm(background_waveform(n, profile, rng, sample_rate)));
  return w;
}

// ---------------------------------------------------------------------------
// Events

// Event waveform of spec.duration samples in [-1, 1) units.
inline std::vector<double> synthesize_event(const EventSpec& e, RngStream& rng,
                                            std::uint32_t sample_rate = kDefaultSampleRate) {
  const double fs = static_cast<double>(sample_rate);
  const std::size_t n = e.duration;
  std::vector<double> x(n, 0.0);
  const std::size_t ramp = std::min<std::size_t>(n / 4, static_cast<std::size_t>(0.005 * fs));
  auto fade = [&](std::size_t i, std::size_t len) {
    if (ramp == 0) return 1.0;
    const double a = std::min(1.0, static_cast<double>(i) / static_cast<double>(ramp));
    const double b = std::min(1.0, static_cast<double>(len - i) / static_cast<double>(ramp));
    return std::min(a, b);
  };
  switch (e.kind) {
    case EventKind::alarm: {
      const std::size_t count = std::max<std::size_t>(1, e.beep_count);
      const std::size_t gaps = (count - 1) * e.beep_gap;
      if (gaps >= n) throw ContractError("alarm gaps do not fit in the event duration");
      const std::size_t beep = (n - gaps) / count;
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t start = b * (beep + e.beep_gap);
        const std::size_t len = b + 1 == count ? n - start : beep;
        for (std::size_t i = 0; i < len; ++i) {
          const double t = static_cast<double>(start + i) / fs;
          x[start + i] = e.amplitude * fade(i, len) * std::sin(2.0 * std::numbers::pi * e.beep_hz * t);
        }
      }
      break;
    }
    case EventKind::fall: {
      // broadband burst with an exponential decay
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        x[i] = e.amplitude * fade(i, n) * std::exp(-t / e.decay_s) * rng.normal() / 1.5;
      }
      break;
    }
    case EventKind::fracture: {
      // sharp impact, then a long noise tail decaying into the background
      const std::size_t impact = std::min<std::size_t>(n, static_cast<std::size_t>(0.01 * fs));
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double env = i < impact ? 1.0 : std::exp(-(t - static_cast<double>(impact) / fs) / e.decay_s);
        x[i] = e.amplitude * fade(i, n) * env * rng.normal() / 1.5;
      }
      break;
    }
    case EventKind::scream: {
      // linear chirp with a second harmonic and a slow vibrato
      const double dur = static_cast<double>(n) / fs;
      const double k = (e.chirp_end_hz - e.chirp_start_hz) / dur;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double phase = 2.0 * std::numbers::pi * (e.chirp_start_hz * t + 0.5 * k * t * t) +
                             0.5 * std::sin(2.0 * std::numbers::pi * 6.0 * t);
        const double env = std::min(1.0, 4.0 * t / dur + 0.5);
        x[i] = e.amplitude * fade(i, n) * env * (0.8 * std::sin(phase) + 0.2 * std::sin(2.0 * phase));
      }
      break;
    }
  }
  return x;
}

// Frame t is positive iff [t*frame_dim, (t+1)*frame_dim) shares a sample with an event.
inline std::vector<std::uint8_t> frame_labels_for(std::size_t n_samples, const std::vector<EventSpec>& events,
                                                  std::size_t frame_dim = kDefaultFrameDim) {
  const std::size_t T = n_samples / frame_dim;
  std::vector<std::uint8_t> labels(T, 0);
  for (const auto& e : events) {
    if (e.duration == 0) continue;
    const std::size_t first = e.onset / frame_dim;
    const std::size_t last = (e.end() - 1) / frame_dim;
    for (std::size_t t = first; t <= last && t < T; ++t) labels[t] = 1;
  }
  return labels;
}

// Adds the synthesized events onto the background with int16 clipping.
inline LabeledRecording inject_events(const WavFile& bg, std::vector<EventSpec> events, RngStream& rng,
                                      std::size_t frame_dim = kDefaultFrameDim) {
  if (bg.channels.size() != 1) throw ContractError("inject_events expects a mono background");
  const std::size_t n = bg.length();
  std::sort(events.begin(), events.end(), [](const EventSpec& a, const EventSpec& b) { return a.onset < b.onset; });
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.duration == 0 || e.end() > n) throw ContractError("event " + std::to_string(i) + " lies outside the recording");
    if (!(e.amplitude > 0.0 && e.amplitude <= 1.0)) throw ContractError("event amplitude must be in (0, 1]");
    if (i > 0 && events[i - 1].end() > e.onset) {
      throw ContractError("events overlap: [" + std::to_string(events[i - 1].onset) + ", " +
                          std::to_string(events[i - 1].end()) + ") and [" + std::to_string(e.onset) + ", " +
                          std::to_string(e.end()) + ")");
    }
  }
  LabeledRecording out;
  out.wav = bg;
  auto& s = out.wav.channels[0];
  for (const auto& e : events) {
    const auto wave = synthesize_event(e, rng, bg.sample_rate);
    for (std::size_t i = 0; i < wave.size(); ++i) {
      const double v = std::clamp(static_cast<double>(s[e.onset + i]) + std::round(wave[i] * 32768.0), -32768.0, 32767.0);
      s[e.onset + i] = static_cast<std::int16_t>(v);
    }
  }
  out.frame_labels = frame_labels_for(n, events, frame_dim);
  out.events = std::move(events);
  return out;
}

// Draws a random event of the given kind with its kind-specific parameters.
inline EventSpec random_event(EventKind kind, RngStream& rng, std::uint32_t sample_rate = kDefaultSampleRate) {
  const double fs = static_cast<double>(sample_rate);
  EventSpec e;
  e.kind = kind;
  switch (kind) {
    case EventKind::alarm:
      e.duration = static_cast<std::size_t>(rng.uniform(0.6, 1.0) * fs);
      e.amplitude = rng.uniform(0.4, 0.7);
      e.beep_hz = rng.uniform(1500.0, 3000.0);
      e.beep_count = 3;
      e.beep_gap = static_cast<std::size_t>(0.01 * fs);
      break;
    case EventKind::fall:
      e.duration = static_cast<std::size_t>(rng.uniform(0.3, 0.6) * fs);
      e.amplitude = rng.uniform(0.6, 0.9);
      e.decay_s = static_cast<double>(e.duration) / fs;
      break;
    case EventKind::fracture:
      e.duration = static_cast<std::size_t>(rng.uniform(0.4, 0.8) * fs);
      e.amplitude = rng.uniform(0.7, 1.0);
      e.decay_s = 0.37 * static_cast<double>(e.duration) / fs;
      break;
    case EventKind::scream:
      e.duration = static_cast<std::size_t>(rng.uniform(0.5, 1.0) * fs);
      e.amplitude = rng.uniform(0.4, 0.7);
      e.chirp_start_hz = rng.uniform(400.0, 700.0);
      e.chirp_end_hz = e.chirp_start_hz * rng.uniform(1.5, 2.5);
      break;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkConfig {
  double train_seconds = 120.0;
  double valid_seconds = 60.0;
  double test_seconds = 120.0;
  double recording_seconds = 20.0;
  double test_anomaly_rate = 0.05;  // target fraction of anomalous test frames
  double contamination_rate = 0.0;  // target fraction of anomalous training frames, in [0, 0.2]
  BackgroundProfile profile = BackgroundProfile::filtered_noise;
  double level_drift_db = 0.0;  // peak slow gain excursion of the background, dB
  std::uint32_t sample_rate = kDefaultSampleRate;
  std::size_t frame_dim = kDefaultFrameDim;

  void validate() const {
    if (!(contamination_rate >= 0.0 && contamination_rate <= 0.2)) throw ConfigError("contamination_rate must be in [0, 0.2]");
    if (!(test_anomaly_rate >= 0.0 && test_anomaly_rate < 0.5)) throw ConfigError("test_anomaly_rate must be in [0, 0.5)");
    if (!(level_drift_db >= 0.0 && level_drift_db <= 20.0)) throw ConfigError("level_drift_db must be in [0, 20]");
    if (!(recording_seconds > 0.0) || !(train_seconds > 0.0) || !(valid_seconds > 0.0) || !(test_seconds > 0.0)) {
      throw ConfigError("benchmark durations must be > 0");
    }
  }
};

struct Benchmark {
  std::vector<LabeledRecording> train;
  std::vector<LabeledRecording> valid;
  std::vector<LabeledRecording> test;
};

namespace synth_detail {

// Places events of cycling kinds at random non-overlapping positions until
// the anomalous-frame budget is met. Events keep a guard interval from the
// recording ends and from each other.
inline std::vector<std::vector<EventSpec>> plan_events(std::size_t recordings, std::size_t samples, double rate,
                                                       std::size_t frame_dim, std::uint32_t sample_rate,
                                                       RngStream& rng) {
  std::vector<std::vector<EventSpec>> plan(recordings);
  if (rate <= 0.0 || recordings == 0) return plan;
  const std::size_t frames_per = samples / frame_dim;
  const double budget = rate * static_cast<double>(frames_per * recordings);
  const std::size_t guard = static_cast<std::size_t>(0.5 * sample_rate);
  std::vector<std::size_t> labeled(recordings, 0);
  double total = 0.0;
  std::size_t kind = static_cast<std::size_t>(rng.below(4));
  std::size_t attempts = 0;
  while (total < budget && attempts < 10000) {
    ++attempts;
    const std::size_t r = static_cast<std::size_t>(rng.below(recordings));
    EventSpec e = random_event(static_cast<EventKind>(kind % 4), rng, sample_rate);
    if (e.duration + 2 * guard >= samples) continue;
    e.onset = guard + static_cast<std::size_t>(rng.below(samples - e.duration - 2 * guard));
    bool clash = false;
    for (const auto& other : plan[r]) {
      if (e.onset < other.end() + guard && other.onset < e.end() + guard) clash = true;
    }
    if (clash) continue;
    plan[r].push_back(e);
    ++kind;
    const auto labels = frame_labels_for(samples, plan[r], frame_dim);
    const std::size_t now = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    total += static_cast<double>(now - labeled[r]);
    labeled[r] = now;
  }
  return plan;
}

// Slow gain envelope of at most +-drift_db built from two sinusoids with
// periods of 5 to 20 s, then RMS renormalized.
inline void apply_level_drift(std::vector<double>& x, double drift_db, RngStream& rng, std::uint32_t sample_rate) {
  const double f1 = rng.uniform(0.05, 0.2), f2 = rng.uniform(0.05, 0.2);
  const double p1 = rng.uniform(0.0, 2.0 * std::numbers::pi), p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double db = drift_db * (0.6 * std::sin(2.0 * std::numbers::pi * f1 * t + p1) +
                                  0.4 * std::sin(2.0 * std::numbers::pi * f2 * t + p2));
    x[i] *= std::pow(10.0, db / 20.0);
  }
  normalize_rms(x, kBackgroundRms);
}

inline std::vector<LabeledRecording> gen_split(double seconds, double anomaly_rate, const BenchmarkConfig& cfg,
                                               RngStream& rng) {
  const std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seconds / cfg.recording_seconds)));
  const double per = seconds / static_cast<double>(count);
  const auto samples = static_cast<std::size_t>(std::llround(per * cfg.sample_rate));
  auto plan = plan_events(count, samples, anomaly_rate, cfg.frame_dim, cfg.sample_rate, rng);
  std::vector<LabeledRecording> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> x = background_waveform(samples, cfg.profile, rng, cfg.sample_rate);
    if (cfg.level_drift_db > 0.0) apply_level_drift(x, cfg.level_drift_db, rng, cfg.sample_rate);
    WavFile bg;
    bg.sample_rate = cfg.sample_rate;
    bg.channels.push_back(to_pcm(x));
    out.push_back(inject_events(bg, plan[i], rng, cfg.frame_dim));
  }
  return out;
}

}  // namespace synth_detail

// Clean validation split, train split with contamination_rate anomalous
// frames, test split with about test_anomaly_rate anomalous frames across all
// four event kinds. Fully determined by the rng seed.
inline Benchmark gen_benchmark(const BenchmarkConfig& cfg, RngStream& rng) {
  cfg.validate();
  Benchmark b;
  RngStream train_rng = rng.fork(1), valid_rng = rng.fork(2), test_rng = rng.fork(3);
  b.train = synth_detail::gen_split(cfg.train_seconds, cfg.contamination_rate, cfg, train_rng);
  b.valid = synth_detail::gen_split(cfg.valid_seconds, 0.0, cfg, valid_rng);
  b.test = synth_detail::gen_split(cfg.test_seconds, cfg.test_anomaly_rate, cfg, test_rng);
  return b;
}

// ---------------------------------------------------------------------------
// Label sidecar: JSON lines {path, frame_dim, labels: [[value, run], ...], events: [...]}

inline nlohmann::json rle_encode(const std::vector<std::uint8_t>& labels) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    runs.push_back({labels[i], j - i});
    i = j;
  }
  return runs;
}

inline std::vector<std::uint8_t> rle_decode(const nlohmann::json& runs) {
  std::vector<std::uint8_t> out;
  for (const auto& r : runs) {
    if (!r.is_array() || r.size() != 2) throw ParseError("label run must be [value, length]", 0);
    const int v = r[0].get<int>();
    if (v != 0 && v != 1) throw ParseError("label value must be 0 or 1", 0);
    out.insert(out.end(), r[1].get<std::size_t>(), static_cast<std::uint8_t>(v));
  }
  return out;
}

inline nlohmann::json event_to_json(const EventSpec& e) {
  nlohmann::json j = {{"kind", to_string(e.kind)}, {"onset", e.onset}, {"duration", e.duration}, {"amplitude", e.amplitude}};
  switch (e.kind) {
    case EventKind::alarm:
      j["beep_hz"] = e.beep_hz;
      j["beep_count"] = e.beep_count;
      j["beep_gap"] = e.beep_gap;
      break;
    case EventKind::fall:
    case EventKind::fracture:
      j["decay_s"] = e.decay_s;
      break;
    case EventKind::scream:
      j["chirp_start_hz"] = e.chirp_start_hz;
      j["chirp_end_hz"] = e.chirp_end_hz;
      break;
  }
  return j;
}

inline EventSpec event_from_json(const nlohmann::json& j) {
  EventSpec e;
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.onset = j.at("onset").get<std::size_t>();
  e.duration = j.at("duration").get<std::size_t>();
  e.amplitude = j.at("amplitude").get<double>();
  e.beep_hz = j.value("beep_hz", e.beep_hz);
  e.beep_count = j.value("beep_count", e.beep_count);
  e.beep_gap = j.value("beep_gap", e.beep_gap);
  e.decay_s = j.value("decay_s", e.decay_s);
  e.chirp_start_hz = j.value("chirp_start_hz", e.chirp_start_hz);
  e.chirp_end_hz = j.value("chirp_end_hz", e.chirp_end_hz);
  return e;
}

struct LabelRecord {
  std::string path;
  std::size_t frame_dim = kDefaultFrameDim;
  std::vector<std::uint8_t> labels;
  std::vector<EventSpec> events;
};

inline nlohmann::json label_record_json(const LabelRecord& r) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events) events.push_back(event_to_json(e));
  return {{"path", r.path}, {"frame_dim", r.frame_dim}, {"labels", rle_encode(r.labels)}, {"events", events}};
}

inline std::vector<LabelRecord> read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open label file " + path);
  std::vector<LabelRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabelRecord r;
      r.path = j.at("path").get<std::string>();
      r.frame_dim = j.at("frame_dim").get<std::size_t>();
      r.labels = rle_decode(j.at("labels"));
      for (const auto& e : j.value("events", nlohmann::json::array())) r.events.push_back(event_from_json(e));
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what(), 0);
    }
  }
  return out;
}

// Writes <dir>/<split>_NNN.wav for each recording plus <dir>/labels.jsonl.
inline void write_split(const std::filesystem::path& dir, const std::string& split,
                        const std::vector<LabeledRecording>& recs, std::size_t frame_dim = kDefaultFrameDim) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.jsonl", std::ios::trunc);
  if (!labels) throw Error("cannot write " + (dir / "labels.jsonl").string());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.wav", split.c_str(), i);
    write_wav_file((dir / name).string(), recs[i].wav);
    labels << label_record_json(LabelRecord{name, frame_dim, recs[i].frame_labels, recs[i].events}).dump() << '\n';
  }
}

inline void write_benchmark(const std::filesystem::path& dir, const Benchmark& b, std::size_t frame_dim = kDefaultFrameDim) {
  write_split(dir / "train", "train", b.train, frame_dim);
  write_split(dir / "valid", "valid", b.valid, frame_dim);
  write_split(dir / "test", "test", b.test, frame_dim);
}

}  // namespace vrnd
