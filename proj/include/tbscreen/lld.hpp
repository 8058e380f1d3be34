#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "tbscreen/audio.hpp"
#include "tbscreen/csv.hpp"
#include "tbscreen/dsp.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/resample.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

// ---- temporal descriptors ----

// Mean squared windowed amplitude.
inline double frame_energy(const Frame& f) {
  double s = 0.0;
  for (double v : f.samples) s += v * v;
  return f.samples.empty() ? 0.0 : s / static_cast<double>(f.samples.size());
}

// Fraction of sample pairs whose sign differs, with sgn(0) = +1 so silence
// scores zero. Computed on the raw slice: windowing would flip no signs but
// shrinking edge samples toward zero makes the convention murkier.
inline double zero_crossing_rate(const Frame& f) {
  const std::vector<double>& x = f.raw;
  if (x.size() < 2) return 0.0;
  auto sgn = [](double v) { return v < 0.0 ? -1 : 1; };
  int changes = 0;
  for (std::size_t n = 1; n < x.size(); ++n) {
    if (sgn(x[n]) != sgn(x[n - 1])) ++changes;
  }
  return static_cast<double>(changes) / static_cast<double>(x.size());
}

inline constexpr double kIntensityRef = 2e-5;
inline constexpr double kIntensityFloor = 1e-12;

// Mean square power in dB relative to 2e-5, floored so silence stays finite.
inline double intensity_db(const Frame& f) {
  const double ms = std::max(frame_energy(f), kIntensityFloor);
  return 10.0 * std::log10(ms / kIntensityRef);
}

// ---- spectral descriptors (bin-index units, one-sided spectra) ----

inline double spectral_centroid(const Spectrum& s) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
    num += static_cast<double>(k) * s.magnitudes[k];
    den += s.magnitudes[k];
  }
  return den > 0.0 ? num / den : 0.0;
}

inline double spectral_spread(const Spectrum& s) {
  double den = 0.0;
  for (double m : s.magnitudes) den += m;
  if (den <= 0.0) return 0.0;
  const double sc = spectral_centroid(s);
  double num = 0.0;
  for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
    const double d = static_cast<double>(k) - sc;
    num += d * d * s.magnitudes[k];
  }
  return std::sqrt(num / den);
}

// Smallest bin whose cumulative power reaches the given fraction of the total.
inline double spectral_rolloff(const Spectrum& s, double fraction = 0.90) {
  double total = 0.0;
  for (double p : s.powers) total += p;
  if (total <= 0.0) return 0.0;
  const double target = fraction * total;
  double cum = 0.0;
  for (std::size_t k = 0; k < s.powers.size(); ++k) {
    cum += s.powers[k];
    if (cum >= target) return static_cast<double>(k);
  }
  return static_cast<double>(s.powers.size() - 1);
}

// Shannon entropy of the power distribution, normalized to [0,1] by the
// maximum log2(n_bins).
inline double spectral_entropy(const Spectrum& s) {
  double total = 0.0;
  for (double p : s.powers) total += p;
  if (total <= 0.0 || s.powers.size() < 2) return 0.0;
  double h = 0.0;
  for (double p : s.powers) {
    if (p <= 0.0) continue;
    const double q = p / total;
    h -= q * std::log2(q);
  }
  return h / std::log2(static_cast<double>(s.powers.size()));
}

namespace detail {

inline std::vector<double> l1_normalized_powers(const Spectrum& s) {
  double total = 0.0;
  for (double p : s.powers) total += p;
  std::vector<double> out(s.powers.size(), 0.0);
  if (total <= 0.0) return out;
  for (std::size_t k = 0; k < s.powers.size(); ++k) out[k] = s.powers[k] / total;
  return out;
}

}  // namespace detail

// P-norm distance between consecutive L1-normalized power spectra.
inline double spectral_flux(const Spectrum& cur, const Spectrum& prev, double p = 2.0) {
  const std::vector<double> a = detail::l1_normalized_powers(cur);
  const std::vector<double> b = detail::l1_normalized_powers(prev);
  if (a.size() != b.size()) throw state_error("spectral_flux: bin count mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    acc += std::pow(std::abs(a[k] - b[k]), p);
  }
  return std::pow(acc, 1.0 / p);
}

// ---- mel / MFCC ----

inline double mel_scale(double f_hz) { return 2595.0 * std::log10(1.0 + f_hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  int n_filters = 0;
  std::size_t n_bins = 0;
  double f_min = 0.0;
  double f_max = 0.0;
  std::vector<std::vector<double>> weights;              // n_filters x n_bins, triangular
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // inclusive nonzero bin range

  std::vector<double> apply(const std::vector<double>& powers) const {
    if (powers.size() != n_bins) throw state_error("filterbank: bin count mismatch");
    std::vector<double> out(static_cast<std::size_t>(n_filters), 0.0);
    for (int m = 0; m < n_filters; ++m) {
      const auto [lo, hi] = spans[static_cast<std::size_t>(m)];
      const std::vector<double>& w = weights[static_cast<std::size_t>(m)];
      double acc = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) acc += w[k] * powers[k];
      out[static_cast<std::size_t>(m)] = acc;
    }
    return out;
  }
};

// Triangular filters with peaks of 1, centered on n_filters+2 equally
// mel-spaced points mapped back to Hz and rounded to FFT bins.
inline MelFilterbank build_mel_filterbank(int n_filters, std::size_t fft_size, int sample_rate,
                                          double f_min = 0.0, double f_max = -1.0) {
  if (n_filters < 1) throw config_error("filterbank: n_filters must be >= 1");
  if (f_max < 0.0) f_max = sample_rate / 2.0;
  if (f_max > sample_rate / 2.0) throw config_error("filterbank: f_max above Nyquist");
  if (f_min < 0.0 || f_min >= f_max) throw config_error("filterbank: need 0 <= f_min < f_max");

  const std::size_t n_bins = fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);

  const double mel_lo = mel_scale(f_min);
  const double mel_hi = mel_scale(f_max);
  std::vector<std::size_t> points(static_cast<std::size_t>(n_filters) + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(n_filters + 1);
    const double hz = mel_to_hz(mel);
    const auto bin = static_cast<std::size_t>(std::lround(hz / bin_hz));
    points[i] = std::min(bin, n_bins - 1);
  }

  MelFilterbank fb;
  fb.n_filters = n_filters;
  fb.n_bins = n_bins;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.weights.assign(static_cast<std::size_t>(n_filters), std::vector<double>(n_bins, 0.0));
  fb.spans.resize(static_cast<std::size_t>(n_filters));

  for (int m = 0; m < n_filters; ++m) {
    const std::size_t left = points[static_cast<std::size_t>(m)];
    const std::size_t center = points[static_cast<std::size_t>(m) + 1];
    const std::size_t right = points[static_cast<std::size_t>(m) + 2];
    if (left >= center || center >= right) {
      throw config_error("filterbank: filter " + std::to_string(m) +
                         " has empty support; too many filters for fft resolution");
    }
    std::vector<double>& w = fb.weights[static_cast<std::size_t>(m)];
    for (std::size_t k = left + 1; k <= center; ++k) {
      w[k] = static_cast<double>(k - left) / static_cast<double>(center - left);
    }
    for (std::size_t k = center + 1; k < right; ++k) {
      w[k] = static_cast<double>(right - k) / static_cast<double>(right - center);
    }
    fb.spans[static_cast<std::size_t>(m)] = {left + 1, right - 1};
  }
  return fb;
}

namespace detail {

inline std::shared_ptr<const MelFilterbank> filterbank_cache(int n_filters, std::size_t fft_size,
                                                             int sample_rate) {
  static std::mutex mu;
  static std::map<std::tuple<int, std::size_t, int>, std::shared_ptr<const MelFilterbank>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{n_filters, fft_size, sample_rate}];
  if (!slot) {
    slot = std::make_shared<const MelFilterbank>(
        build_mel_filterbank(n_filters, fft_size, sample_rate));
  }
  return slot;
}

}  // namespace detail

inline constexpr double kLogMelFloor = 1e-10;

struct LogMelSpectrogram {
  std::vector<std::vector<double>> values;  // n_mels rows x n_frames columns
  int n_mels = 0;
  std::size_t n_frames = 0;
  FrameConfig config;
};

// ln(max(filterbank . power_spectrum, 1e-10)) per frame; clip is resampled
// to the config rate first when needed.
inline LogMelSpectrogram log_mel_spectrogram(const AudioClip& clip, const FrameConfig& cfg,
                                             int n_mels = 128) {
  const AudioClip at_rate = resample_clip(clip, cfg.sample_rate);
  const std::vector<Frame> frames = frame_signal(at_rate.samples, cfg);
  const auto fb = detail::filterbank_cache(n_mels, cfg.fft_size, cfg.sample_rate);

  LogMelSpectrogram out;
  out.n_mels = n_mels;
  out.n_frames = frames.size();
  out.config = cfg;
  out.values.assign(static_cast<std::size_t>(n_mels), std::vector<double>(frames.size(), 0.0));

  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Spectrum spec = fft_magnitude(frames[t].samples, cfg.fft_size, cfg.sample_rate);
    const std::vector<double> mel = fb->apply(spec.powers);
    for (int m = 0; m < n_mels; ++m) {
      out.values[static_cast<std::size_t>(m)][t] =
          std::log(std::max(mel[static_cast<std::size_t>(m)], kLogMelFloor));
    }
  }
  return out;
}

namespace detail {

// Orthonormal DCT-II of one column; forward then inverse is the identity.
inline std::vector<double> dct2_orthonormal(const std::vector<double>& x) {
  const std::size_t m = x.size();
  std::vector<double> out(m, 0.0);
  const double scale0 = std::sqrt(1.0 / static_cast<double>(m));
  const double scale = std::sqrt(2.0 / static_cast<double>(m));
  for (std::size_t k = 0; k < m; ++k) {
    double acc = 0.0;
    for (std::size_t n = 0; n < m; ++n) {
      acc += x[n] * std::cos(kPi * (static_cast<double>(n) + 0.5) * static_cast<double>(k) /
                             static_cast<double>(m));
    }
    out[k] = (k == 0 ? scale0 : scale) * acc;
  }
  return out;
}

}  // namespace detail

// DCT-II along the mel axis of each frame, keeping the first n_coeffs rows.
inline std::vector<std::vector<double>> mfcc_from_logmel(const LogMelSpectrogram& lm,
                                                         int n_coeffs = 13) {
  if (n_coeffs < 1 || n_coeffs > lm.n_mels) {
    throw config_error("mfcc: n_coeffs must be in [1, n_mels]");
  }
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n_coeffs),
                                       std::vector<double>(lm.n_frames, 0.0));
  std::vector<double> column(static_cast<std::size_t>(lm.n_mels));
  for (std::size_t t = 0; t < lm.n_frames; ++t) {
    for (int m = 0; m < lm.n_mels; ++m) {
      column[static_cast<std::size_t>(m)] = lm.values[static_cast<std::size_t>(m)][t];
    }
    const std::vector<double> coeffs = detail::dct2_orthonormal(column);
    for (int k = 0; k < n_coeffs; ++k) {
      out[static_cast<std::size_t>(k)][t] = coeffs[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

inline std::vector<std::vector<double>> mfcc(const AudioClip& clip, int n_coeffs,
                                             const FrameConfig& cfg, int n_mels = 128) {
  return mfcc_from_logmel(log_mel_spectrogram(clip, cfg, n_mels), n_coeffs);
}

// ---- per-clip extraction ----

struct LldConfig {
  FrameConfig temporal_spectral{16000, 0.05, 0.025, 1024, WindowKind::hann};
  FrameConfig spectrotemporal{22050, 0.04, 0.02, 2048, WindowKind::hann};
  int n_mels = 128;
  int n_mfcc = 13;
  double rolloff_fraction = 0.90;
  double flux_power = 2.0;
  double min_clip_s = 0.05;

  void validate() const {
    temporal_spectral.validate();
    spectrotemporal.validate();
    if (n_mels < 1) throw config_error("lld config: n_mels must be >= 1");
    if (n_mfcc < 1 || n_mfcc > n_mels) throw config_error("lld config: n_mfcc out of range");
    if (rolloff_fraction <= 0.0 || rolloff_fraction > 1.0) {
      throw config_error("lld config: rolloff fraction must be in (0,1]");
    }
    if (flux_power <= 0.0) throw config_error("lld config: flux power must be positive");
    if (min_clip_s <= 0.0) throw config_error("lld config: min clip duration must be positive");
  }
};

// Per-frame descriptor columns for one clip. The temporal+spectral columns
// and the MFCC columns come from different frame grids, so columns are ragged;
// each is summarized independently downstream.
struct LldMatrix {
  std::string clip_id;
  std::vector<std::string> descriptor_names;
  std::vector<std::vector<double>> columns;  // parallel to descriptor_names

  std::size_t n_descriptors() const { return columns.size(); }
};

inline std::vector<std::string> lld_descriptor_names(int n_mfcc = 13) {
  std::vector<std::string> names = {"energy", "zcr",     "intensity", "centroid",
                                    "spread", "rolloff", "entropy",   "flux"};
  for (int k = 0; k < n_mfcc; ++k) names.push_back("mfcc" + std::to_string(k));
  return names;
}

// logmel_out, when given, receives the spectrotemporal log-mel matrix so
// callers building flattened blocks reuse the pass that fed the MFCCs.
inline LldMatrix extract_lld_matrix(const AudioClip& clip, const LldConfig& cfg = {},
                                    LogMelSpectrogram* logmel_out = nullptr) {
  cfg.validate();
  if (clip.samples.empty()) throw data_error("clip " + clip.clip_id + ": no samples");
  if (clip.duration_s() < cfg.min_clip_s) {
    throw data_error("clip " + clip.clip_id + " too short: " + format_double(clip.duration_s()) +
                     " s, minimum " + format_double(cfg.min_clip_s) + " s");
  }

  LldMatrix m;
  m.clip_id = clip.clip_id;
  m.descriptor_names = lld_descriptor_names(cfg.n_mfcc);
  m.columns.resize(m.descriptor_names.size());

  // temporal + spectral grid
  {
    const AudioClip at_rate = resample_clip(clip, cfg.temporal_spectral.sample_rate);
    const std::vector<Frame> frames = frame_signal(at_rate.samples, cfg.temporal_spectral);
    const std::size_t n = frames.size();
    for (std::size_t c = 0; c < 8; ++c) m.columns[c].resize(n);

    Spectrum prev;
    for (std::size_t t = 0; t < n; ++t) {
      const Frame& f = frames[t];
      const Spectrum spec =
          fft_magnitude(f.samples, cfg.temporal_spectral.fft_size, cfg.temporal_spectral.sample_rate);
      m.columns[0][t] = frame_energy(f);
      m.columns[1][t] = zero_crossing_rate(f);
      m.columns[2][t] = intensity_db(f);
      m.columns[3][t] = spectral_centroid(spec);
      m.columns[4][t] = spectral_spread(spec);
      m.columns[5][t] = spectral_rolloff(spec, cfg.rolloff_fraction);
      m.columns[6][t] = spectral_entropy(spec);
      m.columns[7][t] = t == 0 ? 0.0 : spectral_flux(spec, prev, cfg.flux_power);
      prev = spec;
    }
  }

  // spectrotemporal grid
  {
    LogMelSpectrogram lm = log_mel_spectrogram(clip, cfg.spectrotemporal, cfg.n_mels);
    const std::vector<std::vector<double>> coeffs = mfcc_from_logmel(lm, cfg.n_mfcc);
    for (int k = 0; k < cfg.n_mfcc; ++k) {
      m.columns[8 + static_cast<std::size_t>(k)] = coeffs[static_cast<std::size_t>(k)];
    }
    if (logmel_out != nullptr) *logmel_out = std::move(lm);
  }
  return m;
}

// ---- exports ----

// One row per frame index; columns from the shorter grid trail off as empty
// cells.
inline void write_lld_csv(const std::filesystem::path& path, const LldMatrix& m) {
  std::vector<std::string> header = {"frame"};
  header.insert(header.end(), m.descriptor_names.begin(), m.descriptor_names.end());

  std::size_t max_len = 0;
  for (const auto& col : m.columns) max_len = std::max(max_len, col.size());

  std::vector<std::vector<std::string>> rows;
  rows.reserve(max_len);
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<std::string> row;
    row.reserve(header.size());
    row.push_back(std::to_string(t));
    for (const auto& col : m.columns) {
      row.push_back(t < col.size() ? format_double(col[t]) : std::string());
    }
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

// Dense little-endian float32 block: u32 n_mels, u32 n_frames, then values
// mel-row-major. This is the CNN-input tensor format.
inline void write_logmel_binary(const std::filesystem::path& path, const LogMelSpectrogram& lm) {
  std::vector<unsigned char> out;
  out.reserve(8 + 4 * static_cast<std::size_t>(lm.n_mels) * lm.n_frames);
  auto push_u32 = [&](std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
  };
  push_u32(static_cast<std::uint32_t>(lm.n_mels));
  push_u32(static_cast<std::uint32_t>(lm.n_frames));
  for (const auto& row : lm.values) {
    for (double v : row) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      push_u32(bits);
    }
  }
  write_file(path, std::string(reinterpret_cast<const char*>(out.data()), out.size()));
}

inline LogMelSpectrogram read_logmel_binary(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 8) throw decode_error("logmel file too short: " + path.string());
  auto read_u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(bytes[off]) | (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
  };
  LogMelSpectrogram lm;
  lm.n_mels = static_cast<int>(read_u32(0));
  lm.n_frames = read_u32(4);
  const std::size_t need = 8 + 4 * static_cast<std::size_t>(lm.n_mels) * lm.n_frames;
  if (lm.n_mels < 0 || bytes.size() != need) {
    throw decode_error("logmel file size mismatch: " + path.string());
  }
  lm.values.assign(static_cast<std::size_t>(lm.n_mels), std::vector<double>(lm.n_frames, 0.0));
  std::size_t off = 8;
  for (auto& row : lm.values) {
    for (double& v : row) {
      const std::uint32_t bits = read_u32(off);
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
      off += 4;
    }
  }
  return lm;
}

}  // namespace tbscreen
