#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tbscreen/error.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

enum class WindowKind { hann, hamming, rect };

inline WindowKind window_kind_from_string(const std::string& s) {
  if (s == "hann") return WindowKind::hann;
  if (s == "hamming") return WindowKind::hamming;
  if (s == "rect") return WindowKind::rect;
  throw config_error("unknown window kind: " + s);
}

inline const char* to_string(WindowKind k) {
  switch (k) {
    case WindowKind::hann: return "hann";
    case WindowKind::hamming: return "hamming";
    default: return "rect";
  }
}

// Symmetric cosine windows; both endpoints of the hann window are exact zeros.
inline std::vector<double> make_window(WindowKind kind, std::size_t length) {
  if (length == 0) throw config_error("make_window: zero length");
  std::vector<double> w(length, 1.0);
  if (kind == WindowKind::rect || length == 1) return w;
  const double a0 = kind == WindowKind::hann ? 0.5 : 0.54;
  const double a1 = kind == WindowKind::hann ? 0.5 : 0.46;
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = a0 - a1 * std::cos(2.0 * kPi * static_cast<double>(n) / (length - 1));
  }
  return w;
}

struct FrameConfig {
  int sample_rate = 16000;
  double frame_s = 0.05;
  double hop_s = 0.025;
  std::size_t fft_size = 1024;
  WindowKind window = WindowKind::hann;

  std::size_t frame_length() const {
    return static_cast<std::size_t>(std::lround(frame_s * sample_rate));
  }
  std::size_t hop_length() const {
    return static_cast<std::size_t>(std::lround(hop_s * sample_rate));
  }

  void validate() const {
    if (sample_rate <= 0) throw config_error("frame config: sample_rate must be positive");
    if (frame_s <= 0.0 || hop_s <= 0.0) {
      throw config_error("frame config: frame and hop must be positive");
    }
    if (hop_s > frame_s) throw config_error("frame config: hop longer than frame");
    if (frame_length() == 0 || hop_length() == 0) {
      throw config_error("frame config: frame or hop rounds to zero samples");
    }
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
      throw config_error("frame config: fft_size must be a power of two >= 2");
    }
    if (frame_length() > fft_size) {
      throw config_error("frame config: frame longer than fft_size");
    }
  }
};

// One analysis frame. `samples` carries the windowed data used for spectra;
// `raw` keeps the unwindowed slice for descriptors defined on raw amplitude.
struct Frame {
  std::vector<double> samples;
  std::vector<double> raw;
  std::size_t index = 0;
  double t_start = 0.0;
};

// Slices the signal into overlapping frames. A partial tail shorter than a
// full frame is dropped, so count = floor((len - L) / hop) + 1.
inline std::vector<Frame> frame_signal(const std::vector<double>& samples,
                                       const FrameConfig& config) {
  config.validate();
  const std::size_t L = config.frame_length();
  const std::size_t hop = config.hop_length();
  if (samples.size() < L) {
    throw data_error("signal shorter than one frame: " + std::to_string(samples.size()) +
                     " samples, need " + std::to_string(L) + " (" + format_double(config.frame_s) +
                     " s at " + std::to_string(config.sample_rate) + " Hz)");
  }

  const std::size_t count = (samples.size() - L) / hop + 1;
  const std::vector<double> window = make_window(config.window, L);

  std::vector<Frame> frames(count);
  for (std::size_t i = 0; i < count; ++i) {
    Frame& f = frames[i];
    f.index = i;
    f.t_start = static_cast<double>(i) * config.hop_s;
    const std::size_t start = i * hop;
    f.raw.assign(samples.begin() + start, samples.begin() + start + L);
    f.samples.resize(L);
    for (std::size_t n = 0; n < L; ++n) f.samples[n] = f.raw[n] * window[n];
  }
  return frames;
}

namespace detail {

// Iterative radix-2 Cooley-Tukey, in place. Size must be a power of two.
// The inverse transform includes the 1/N factor, so forward then inverse is
// the identity up to rounding.
inline void fft_inplace(std::vector<double>& re, std::vector<double>& im, bool inverse) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n) {
    throw state_error("fft: size must be a nonzero power of two");
  }
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang);
    const double wi = std::sin(ang);
    for (std::size_t start = 0; start < n; start += len) {
      double cr = 1.0;
      double ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = start + k;
        const std::size_t b = a + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      re[i] *= inv;
      im[i] *= inv;
    }
  }
}

}  // namespace detail

// One-sided magnitude/power spectrum, bins 0 through N/2 inclusive.
struct Spectrum {
  std::vector<double> magnitudes;
  std::vector<double> powers;
  double bin_hz = 0.0;

  std::size_t n_bins() const { return magnitudes.size(); }
  double bin_frequency(std::size_t k) const { return bin_hz * static_cast<double>(k); }
};

// FFT of a real frame zero-padded to fft_size.
inline Spectrum fft_magnitude(const std::vector<double>& frame, std::size_t fft_size,
                              int sample_rate) {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
    throw config_error("fft_magnitude: fft_size must be a power of two >= 2");
  }
  if (frame.size() > fft_size) {
    throw config_error("fft_magnitude: frame longer than fft_size");
  }
  std::vector<double> re(fft_size, 0.0);
  std::vector<double> im(fft_size, 0.0);
  std::copy(frame.begin(), frame.end(), re.begin());
  detail::fft_inplace(re, im, false);

  Spectrum s;
  const std::size_t half = fft_size / 2;
  s.magnitudes.resize(half + 1);
  s.powers.resize(half + 1);
  s.bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  for (std::size_t k = 0; k <= half; ++k) {
    const double p = re[k] * re[k] + im[k] * im[k];
    s.powers[k] = p;
    s.magnitudes[k] = std::sqrt(p);
  }
  return s;
}

}  // namespace tbscreen
