// Copyright 2026 The Manatee AST Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "manatee/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "manatee/errors.hpp"
#include "manatee/util.hpp"

namespace manatee {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRampFraction = 0.10;
constexpr int kPlacementAttempts = 10000;

double uniform(std::mt19937_64& rng, Interval r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

double raised_cosine_envelope(double t, double duration) {
  const double ramp = kRampFraction * duration;
  if (ramp <= 0.0) return 1.0;
  if (t < ramp) return 0.5 * (1.0 - std::cos(std::numbers::pi * t / ramp));
  if (t > duration - ramp) return 0.5 * (1.0 - std::cos(std::numbers::pi * (duration - t) / ramp));
  return 1.0;
}

double mean_square(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Paul Kellet's economy pink-noise filter applied to unit white noise.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (auto& y : out) {
    const double w = white(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    y = b0 + b1 + b2 + w * 0.1848;
  }
  return out;
}

nlohmann::json interval_json(Interval r) { return nlohmann::json::array({r.lo, r.hi}); }

Interval interval_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ArgumentError("synth config: interval must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

SynthConfig SynthConfig::benchmark() {
  SynthConfig c;
  c.session_length_s = 60.0;
  c.calls_per_session_range = {3, 4};
  c.distractor_rate_per_min = 20.0;
  c.distractor_snr_db_range = {10.0, 30.0};
  return c;
}

void SynthConfig::validate() const {
  const double nyquist = kSampleRateHz / 2.0;
  if (n_harmonics < 1) throw ArgumentError("synth config: n_harmonics must be >= 1");
  if (!(f0_range_hz.lo >= 2000.0 && f0_range_hz.lo <= f0_range_hz.hi &&
        f0_range_hz.hi * n_harmonics < nyquist)) {
    throw ArgumentError("synth config: f0_range_hz must lie within [2000, " +
                        std::to_string(nyquist / n_harmonics) + ") Hz for " +
                        std::to_string(n_harmonics) + " harmonics");
  }
  if (!(duration_range_s.lo >= 0.05 && duration_range_s.lo <= duration_range_s.hi &&
        duration_range_s.hi <= 1.0)) {
    throw ArgumentError("synth config: duration_range_s must lie within [0.05, 1.0] s");
  }
  if (!(harmonic_decay > 0.0 && harmonic_decay <= 1.0)) {
    throw ArgumentError("synth config: harmonic_decay must be in (0, 1]");
  }
  if (!(sweep_fraction >= 0.0 && sweep_fraction < 1.0)) {
    throw ArgumentError("synth config: sweep_fraction must be in [0, 1)");
  }
  if (call_snr_db_range.lo > call_snr_db_range.hi) {
    throw ArgumentError("synth config: call_snr_db_range is empty");
  }
  if (distractor_snr_db_range.lo > distractor_snr_db_range.hi) {
    throw ArgumentError("synth config: distractor_snr_db_range is empty");
  }
  if (!(session_length_s > 0.0)) throw ArgumentError("synth config: session_length_s must be positive");
  if (calls_per_session_range.lo < 0 || calls_per_session_range.lo > calls_per_session_range.hi) {
    throw ArgumentError("synth config: calls_per_session_range is invalid");
  }
  if (distractor_rate_per_min < 0.0) throw ArgumentError("synth config: negative distractor rate");
  if (!(distractor_duration_s.lo > 0.0 && distractor_duration_s.lo <= distractor_duration_s.hi)) {
    throw ArgumentError("synth config: distractor_duration_s is invalid");
  }
  if (white_noise_std < 0.0 || pink_noise_std < 0.0 || white_noise_std + pink_noise_std <= 0.0) {
    throw ArgumentError("synth config: background noise levels must be non-negative and not both zero");
  }
  if (!(withhold_fraction >= 0.0 && withhold_fraction <= 1.0)) {
    throw ArgumentError("synth config: withhold_fraction must be in [0, 1]");
  }
}

SynthCall synth_call_fixed(const SynthConfig& cfg, double f0_start_hz, double f0_end_hz,
                           double duration_s, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kSampleRateHz));
  const double dur = static_cast<double>(n) / kSampleRateHz;
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::vector<double> phases(static_cast<std::size_t>(cfg.n_harmonics));
  for (auto& p : phases) p = phase(rng);

  SynthCall call;
  call.duration_s = dur;
  call.f0_start_hz = f0_start_hz;
  call.f0_end_hz = f0_end_hz;
  call.clip.samples.resize(n);
  const double slope = dur > 0.0 ? (f0_end_hz - f0_start_hz) / dur : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRateHz;
    // integral of the swept fundamental from 0 to t
    const double cycles = f0_start_hz * t + 0.5 * slope * t * t;
    double v = 0.0, amp = 1.0;
    for (int h = 1; h <= cfg.n_harmonics; ++h) {
      v += amp * std::sin(kTwoPi * h * cycles + phases[static_cast<std::size_t>(h - 1)]);
      amp *= cfg.harmonic_decay;
    }
    call.clip.samples[i] = static_cast<float>(v * raised_cosine_envelope(t, dur));
  }
  return call;
}

SynthCall synth_call(const SynthConfig& cfg, std::mt19937_64& rng) {
  const double duration = uniform(rng, cfg.duration_range_s);
  const double f0 = uniform(rng, cfg.f0_range_hz);
  const double sweep = std::uniform_real_distribution<double>(-cfg.sweep_fraction,
                                                              cfg.sweep_fraction)(rng);
  const double f1 = std::clamp(f0 * (1.0 + sweep), cfg.f0_range_hz.lo, cfg.f0_range_hz.hi);
  return synth_call_fixed(cfg, f0, f1, duration, rng);
}

std::vector<Annotation> SynthSession::all_calls() const {
  std::vector<Annotation> all = session.annotations;
  all.insert(all.end(), hidden.begin(), hidden.end());
  std::sort(all.begin(), all.end(),
            [](const Annotation& a, const Annotation& b) { return a.start_s < b.start_s; });
  return all;
}

SynthSession synth_session(const SynthConfig& cfg, std::mt19937_64& rng, const std::string& id) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(std::llround(cfg.session_length_s * kSampleRateHz));
  const double length = static_cast<double>(n) / kSampleRateHz;

  // Background: white plus 1/f.
  std::vector<double> audio(n, 0.0);
  {
    std::normal_distribution<double> white(0.0, cfg.white_noise_std);
    for (auto& x : audio) x = white(rng);
    if (cfg.pink_noise_std > 0.0) {
      auto pink = pink_noise(n, rng);
      const double ms = mean_square(pink);
      const double gain = ms > 0.0 ? cfg.pink_noise_std / std::sqrt(ms) : 0.0;
      for (std::size_t i = 0; i < n; ++i) audio[i] += gain * pink[i];
    }
  }
  const double background_power = mean_square(audio);

  // Calls: draw count and durations, then place without overlap.
  const int n_calls = std::uniform_int_distribution<int>(cfg.calls_per_session_range.lo,
                                                         cfg.calls_per_session_range.hi)(rng);
  std::vector<SynthCall> calls;
  double total = 0.0;
  for (int c = 0; c < n_calls; ++c) {
    calls.push_back(synth_call(cfg, rng));
    total += calls.back().duration_s;
  }
  if (total > length) {
    throw CapacityError("session of " + std::to_string(length) + " s cannot hold " +
                        std::to_string(n_calls) + " calls totalling " + std::to_string(total) +
                        " s");
  }
  std::vector<Annotation> placed;
  for (const auto& call : calls) {
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      const double start_raw =
          std::uniform_real_distribution<double>(0.0, length - call.duration_s)(rng);
      // align to the sample grid so the annotation matches the audio exactly
      const double start = std::floor(start_raw * kSampleRateHz) / kSampleRateHz;
      const Annotation a{start, start + call.duration_s};
      ok = std::none_of(placed.begin(), placed.end(), [&](const Annotation& b) {
        return a.start_s < b.end_s && b.start_s < a.end_s;
      });
      if (ok) placed.push_back(a);
    }
    if (!ok) {
      throw CapacityError("could not place " + std::to_string(n_calls) +
                          " non-overlapping calls in a " + std::to_string(length) + " s session");
    }
  }
  for (std::size_t c = 0; c < calls.size(); ++c) {
    const double snr_db = uniform(rng, cfg.call_snr_db_range);
    std::vector<double> samples(calls[c].clip.samples.begin(), calls[c].clip.samples.end());
    const double ms = mean_square(samples);
    const double gain =
        ms > 0.0 ? std::sqrt(background_power * std::pow(10.0, snr_db / 10.0) / ms) : 0.0;
    const auto offset = static_cast<std::size_t>(std::llround(placed[c].start_s * kSampleRateHz));
    for (std::size_t i = 0; i < samples.size() && offset + i < n; ++i) {
      audio[offset + i] += gain * samples[i];
    }
  }

  // Distractors: broadband Hann-shaped noise bursts.
  SynthSession out;
  const double expected = cfg.distractor_rate_per_min * length / 60.0;
  const int n_bursts = expected > 0.0 ? std::poisson_distribution<int>(expected)(rng) : 0;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int b = 0; b < n_bursts; ++b) {
    const double dur = uniform(rng, cfg.distractor_duration_s);
    const double start = std::uniform_real_distribution<double>(0.0, std::max(0.0, length - dur))(rng);
    const double snr_db = uniform(rng, cfg.distractor_snr_db_range);
    const double amp = std::sqrt(background_power * std::pow(10.0, snr_db / 10.0));
    const auto offset = static_cast<std::size_t>(std::llround(start * kSampleRateHz));
    const auto len = static_cast<std::size_t>(std::llround(dur * kSampleRateHz));
    for (std::size_t i = 0; i < len && offset + i < n; ++i) {
      const double w = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) /
                                             static_cast<double>(len > 1 ? len - 1 : 1)));
      // Hann has mean square 3/8; rescale so the burst hits the drawn SNR
      audio[offset + i] += amp * std::sqrt(8.0 / 3.0) * w * unit(rng);
    }
    out.distractors.push_back({start, start + dur});
  }

  // Withhold a fraction of the true calls from the annotations.
  const auto n_hidden =
      static_cast<std::size_t>(std::llround(cfg.withhold_fraction * static_cast<double>(placed.size())));
  std::vector<std::size_t> order(placed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  }
  std::vector<bool> hidden(placed.size(), false);
  for (std::size_t i = 0; i < n_hidden; ++i) hidden[order[i]] = true;

  out.session.id = id;
  out.session.clip.sample_rate_hz = kSampleRateHz;
  out.session.clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.session.clip.samples[i] = static_cast<float>(std::clamp(audio[i], -1.0, 1.0));
  }
  for (std::size_t c = 0; c < placed.size(); ++c) {
    (hidden[c] ? out.hidden : out.session.annotations).push_back(placed[c]);
  }
  auto by_start = [](const Annotation& a, const Annotation& b) { return a.start_s < b.start_s; };
  std::sort(out.session.annotations.begin(), out.session.annotations.end(), by_start);
  std::sort(out.hidden.begin(), out.hidden.end(), by_start);
  std::sort(out.distractors.begin(), out.distractors.end(), by_start);
  return out;
}

std::vector<SynthSession> synth_sessions(const SynthConfig& cfg, std::uint64_t seed,
                                         std::size_t count) {
  cfg.validate();
  std::vector<SynthSession> out(count);
  std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      std::mt19937_64 rng(derive_seed(seed, 0x73796e7468 /* "synth" */, idx));
      char id[32];
      std::snprintf(id, sizeof id, "session_%03zu", idx);
      out[idx] = synth_session(cfg, rng, id);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_registry(const std::filesystem::path& dir, const std::vector<SynthSession>& sessions) {
  std::filesystem::create_directories(dir);
  for (const auto& s : sessions) {
    save_wav(dir / (s.session.id + ".wav"), s.session.clip, SampleEncoding::kPcm24);
    save_annotations(dir / (s.session.id + ".csv"), s.session.annotations);
    save_annotations(dir / (s.session.id + ".hidden.csv"), s.hidden);
  }
}

std::string synth_config_to_json(const SynthConfig& c) {
  nlohmann::json j = {
      {"f0_range_hz", interval_json(c.f0_range_hz)},
      {"n_harmonics", c.n_harmonics},
      {"harmonic_decay", c.harmonic_decay},
      {"sweep_fraction", c.sweep_fraction},
      {"duration_range_s", interval_json(c.duration_range_s)},
      {"call_snr_db_range", interval_json(c.call_snr_db_range)},
      {"session_length_s", c.session_length_s},
      {"calls_per_session_range", {c.calls_per_session_range.lo, c.calls_per_session_range.hi}},
      {"distractor_rate_per_min", c.distractor_rate_per_min},
      {"distractor_duration_s", interval_json(c.distractor_duration_s)},
      {"distractor_snr_db_range", interval_json(c.distractor_snr_db_range)},
      {"white_noise_std", c.white_noise_std},
      {"pink_noise_std", c.pink_noise_std},
      {"withhold_fraction", c.withhold_fraction},
  };
  return j.dump(2) + "\n";
}

SynthConfig synth_config_from_json(const std::string& text, const SynthConfig& base) {
  SynthConfig c = base;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("synth config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ArgumentError("synth config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "f0_range_hz") c.f0_range_hz = interval_from(v);
      else if (key == "n_harmonics") c.n_harmonics = v.get<int>();
      else if (key == "harmonic_decay") c.harmonic_decay = v.get<double>();
      else if (key == "sweep_fraction") c.sweep_fraction = v.get<double>();
      else if (key == "duration_range_s") c.duration_range_s = interval_from(v);
      else if (key == "call_snr_db_range") c.call_snr_db_range = interval_from(v);
      else if (key == "session_length_s") c.session_length_s = v.get<double>();
      else if (key == "calls_per_session_range") {
        if (!v.is_array() || v.size() != 2) throw ArgumentError("calls_per_session_range must be [lo, hi]");
        c.calls_per_session_range = {v[0].get<int>(), v[1].get<int>()};
      } else if (key == "distractor_rate_per_min") c.distractor_rate_per_min = v.get<double>();
      else if (key == "distractor_duration_s") c.distractor_duration_s = interval_from(v);
      else if (key == "distractor_snr_db_range") c.distractor_snr_db_range = interval_from(v);
      else if (key == "white_noise_std") c.white_noise_std = v.get<double>();
      else if (key == "pink_noise_std") c.pink_noise_std = v.get<double>();
      else if (key == "withhold_fraction") c.withhold_fraction = v.get<double>();
      else throw ArgumentError("synth config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace manatee
