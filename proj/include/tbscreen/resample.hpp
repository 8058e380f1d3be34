#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <vector>

#include "tbscreen/audio.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

namespace detail {

// Zeroth-order modified Bessel function of the first kind, power series.
// Converges quickly for the argument range a Kaiser beta of ~10 produces.
inline double bessel_i0(double x) {
  const double half = x / 2.0;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

struct PolyphaseFilter {
  int up = 1;    // L
  int down = 1;  // M
  int taps_per_phase = 0;
  // phase-major: coeffs[p * taps_per_phase + t] = h[p + t * up]
  std::vector<double> coeffs;
};

// Kaiser-windowed sinc lowpass split into L phases. Cutoff sits at half the
// narrower of the two rates; each phase is normalized to unit sum so a
// constant input maps to the same constant exactly.
inline std::shared_ptr<const PolyphaseFilter> design_polyphase(int up, int down) {
  constexpr int kTapsPerPhase = 64;
  constexpr double kBeta = 8.6;

  auto filt = std::make_shared<PolyphaseFilter>();
  filt->up = up;
  filt->down = down;
  filt->taps_per_phase = kTapsPerPhase;

  const int total = up * kTapsPerPhase;
  const double cutoff = 0.5 / std::max(up, down);  // cycles per output-of-upsampler sample
  const double center = (total - 1) / 2.0;
  const double i0_beta = bessel_i0(kBeta);

  std::vector<double> h(total);
  for (int i = 0; i < total; ++i) {
    const double t = i - center;
    const double x = 2.0 * cutoff * t;
    const double sinc = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
    const double r = t / center;  // in [-1, 1]
    const double window = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[i] = 2.0 * cutoff * sinc * window;
  }

  filt->coeffs.resize(total);
  for (int p = 0; p < up; ++p) {
    double sum = 0.0;
    for (int t = 0; t < kTapsPerPhase; ++t) sum += h[p + t * up];
    const double norm = sum != 0.0 ? 1.0 / sum : 1.0;
    for (int t = 0; t < kTapsPerPhase; ++t) {
      filt->coeffs[p * kTapsPerPhase + t] = h[p + t * up] * norm;
    }
  }
  return filt;
}

inline std::shared_ptr<const PolyphaseFilter> polyphase_cache(int up, int down) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const PolyphaseFilter>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{up, down}];
  if (!slot) slot = design_polyphase(up, down);
  return slot;
}

}  // namespace detail

// Rational-ratio polyphase resampler. Output length is round(n * target / source)
// computed in integer arithmetic, so concatenation-independent of the data.
// Equal rates return the input bit-exactly.
inline std::vector<double> resample(const std::vector<double>& input, int source_rate,
                                    int target_rate) {
  if (source_rate <= 0 || target_rate <= 0) {
    throw config_error("resample: rates must be positive");
  }
  if (source_rate == target_rate) return input;
  if (input.empty()) return {};

  const int g = std::gcd(source_rate, target_rate);
  const int up = target_rate / g;
  const int down = source_rate / g;
  const auto filt = detail::polyphase_cache(up, down);
  const int tpp = filt->taps_per_phase;

  const std::int64_t n_in = static_cast<std::int64_t>(input.size());
  const std::int64_t n_out =
      (n_in * target_rate + source_rate / 2) / source_rate;  // round(n * T / S)

  // Output j taps the virtual upsampled stream at m = j*M + c where c centers
  // the filter's group delay; phase p = m mod L selects the sub-filter and
  // q = m div L is the newest input sample it touches.
  const std::int64_t delay = static_cast<std::int64_t>(tpp) * up / 2;

  std::vector<double> out(static_cast<std::size_t>(n_out));
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t m = j * down + delay;
    const int p = static_cast<int>(m % up);
    const std::int64_t q = m / up;
    const double* h = filt->coeffs.data() + static_cast<std::size_t>(p) * tpp;
    double acc = 0.0;
    for (int t = 0; t < tpp; ++t) {
      const std::int64_t idx = q - t;
      if (idx < 0) break;  // taps run left; earlier ones are all out of range too
      if (idx >= n_in) continue;
      acc += h[t] * input[static_cast<std::size_t>(idx)];
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

inline AudioClip resample_clip(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate == target_rate) return clip;
  AudioClip out;
  out.clip_id = clip.clip_id;
  out.participant_id = clip.participant_id;
  out.sample_rate = target_rate;
  out.samples = resample(clip.samples, clip.sample_rate, target_rate);
  return out;
}

}  // namespace tbscreen
