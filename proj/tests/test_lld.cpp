#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include <tbscreen/audio.hpp>
#include <tbscreen/lld.hpp>
#include <tbscreen/util.hpp>

#include "support.hpp"

using namespace tbscreen;
using namespace testsupport;

namespace {

Frame make_frame(std::vector<double> v) {
  Frame f;
  f.samples = v;
  f.raw = std::move(v);
  return f;
}

Spectrum make_spectrum(std::vector<double> magnitudes) {
  Spectrum s;
  s.powers.resize(magnitudes.size());
  for (std::size_t k = 0; k < magnitudes.size(); ++k) {
    s.powers[k] = magnitudes[k] * magnitudes[k];
  }
  s.magnitudes = std::move(magnitudes);
  s.bin_hz = 1.0;
  return s;
}

AudioClip tone_clip(double freq_hz, double duration_s, int rate, double amplitude) {
  AudioClip clip;
  clip.clip_id = "tone";
  clip.participant_id = "p";
  clip.sample_rate = rate;
  const auto n = static_cast<std::size_t>(duration_s * rate);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = amplitude * std::sin(2.0 * kPi * freq_hz * static_cast<double>(i) / rate);
  }
  return clip;
}

}  // namespace

TEST_CASE("frame energy is the mean square of windowed samples") {
  REQUIRE(frame_energy(make_frame({2.0, 2.0, 2.0})) == 4.0);
  REQUIRE(frame_energy(make_frame({1.0, -1.0, 1.0})) == 1.0);
  REQUIRE(frame_energy(make_frame({0.0, 0.0})) == 0.0);
}

TEST_CASE("zero crossing rate counts sign changes over frame length") {
  REQUIRE(zero_crossing_rate(make_frame({1.0, -1.0, 1.0, -1.0})) == 0.75);
  REQUIRE(zero_crossing_rate(make_frame({1.0, 1.0, -1.0, -1.0})) == 0.25);
  REQUIRE(zero_crossing_rate(make_frame({0.5, 0.5, 0.5})) == 0.0);
  REQUIRE(zero_crossing_rate(make_frame({1.0})) == 0.0);
  // zero counts as nonnegative, so -1 0 -1 crosses twice
  REQUIRE(zero_crossing_rate(make_frame({-1.0, 0.0, -1.0})) == 2.0 / 3.0);
}

TEST_CASE("intensity references 2e-5 and floors silent frames") {
  const double a = std::sqrt(2e-5);
  REQUIRE(std::abs(intensity_db(make_frame({a, a, a, a}))) < 1e-9);

  const double loud = std::sqrt(2e-4);
  REQUIRE(std::abs(intensity_db(make_frame({loud, loud})) - 10.0) < 1e-9);

  const double floor_db = 10.0 * std::log10(1e-12 / 2e-5);
  REQUIRE(std::abs(intensity_db(make_frame({0.0, 0.0})) - floor_db) < 1e-9);
  REQUIRE(std::abs(floor_db - (-73.0103)) < 1e-3);
}

TEST_CASE("spectral centroid and spread in bin units") {
  std::vector<double> single(9, 0.0);
  single[5] = 2.0;
  REQUIRE(spectral_centroid(make_spectrum(single)) == 5.0);
  REQUIRE(spectral_spread(make_spectrum(single)) == 0.0);

  std::vector<double> pair(9, 0.0);
  pair[2] = 1.0;
  pair[6] = 1.0;
  REQUIRE(spectral_centroid(make_spectrum(pair)) == 4.0);
  REQUIRE(spectral_spread(make_spectrum(pair)) == 2.0);

  // flat magnitudes over bins 0..8 center at 4 = fft_size / 4 with fft 16
  REQUIRE(spectral_centroid(make_spectrum(std::vector<double>(9, 1.0))) == 4.0);
  REQUIRE(spectral_centroid(make_spectrum(std::vector<double>(9, 0.0))) == 0.0);
}

TEST_CASE("spectral rolloff returns the covering bin") {
  std::vector<double> single(12, 0.0);
  single[7] = 3.0;
  REQUIRE(spectral_rolloff(make_spectrum(single)) == 7.0);

  // ten equal-power bins: bin 8 is the first to reach 90 percent
  REQUIRE(spectral_rolloff(make_spectrum(std::vector<double>(10, 1.0)), 0.90) == 8.0);

  std::vector<double> last(6, 0.0);
  last[5] = 1.0;
  REQUIRE(spectral_rolloff(make_spectrum(last), 1.0) == 5.0);
  REQUIRE(spectral_rolloff(make_spectrum(std::vector<double>(4, 0.0))) == 0.0);
}

TEST_CASE("spectral entropy is normalized to [0, 1]") {
  REQUIRE(std::abs(spectral_entropy(make_spectrum(std::vector<double>(8, 0.7))) - 1.0) < 1e-12);

  std::vector<double> single(8, 0.0);
  single[3] = 2.0;
  REQUIRE(spectral_entropy(make_spectrum(single)) == 0.0);

  // two equal bins among four: entropy 1 bit over the 2-bit maximum
  std::vector<double> two = {1.0, 0.0, 1.0, 0.0};
  REQUIRE(std::abs(spectral_entropy(make_spectrum(two)) - 0.5) < 1e-12);
}

TEST_CASE("spectral flux compares normalized power distributions") {
  const Spectrum a = make_spectrum({1.0, 0.0});
  const Spectrum b = make_spectrum({0.0, 1.0});
  REQUIRE(spectral_flux(a, a) == 0.0);
  REQUIRE(std::abs(spectral_flux(a, b) - std::sqrt(2.0)) < 1e-12);
  REQUIRE(std::abs(spectral_flux(a, b, 1.0) - 2.0) < 1e-12);

  // normalization cancels amplitude: doubling magnitudes changes nothing
  const Spectrum a2 = make_spectrum({2.0, 0.0});
  REQUIRE(std::abs(spectral_flux(a2, b) - std::sqrt(2.0)) < 1e-12);
}

TEST_CASE("mel scale hits its anchor points") {
  REQUIRE(mel_scale(0.0) == 0.0);
  REQUIRE(std::abs(mel_scale(700.0) - 2595.0 * std::log10(2.0)) < 1e-12);
  REQUIRE(std::abs(mel_scale(700.0) - 781.17) < 0.01);
  REQUIRE(std::abs(mel_scale(1000.0) - 999.99) < 0.01);
  REQUIRE(std::abs(mel_to_hz(mel_scale(440.0)) - 440.0) < 1e-9);
}

TEST_CASE("mel filterbank triangles are ordered and unit peaked") {
  const MelFilterbank fb = build_mel_filterbank(40, 2048, 22050);
  REQUIRE(fb.n_filters == 40);
  REQUIRE(fb.n_bins == 1025);

  std::size_t prev_center = 0;
  for (int m = 0; m < fb.n_filters; ++m) {
    const std::vector<double>& w = fb.weights[static_cast<std::size_t>(m)];
    const auto it = std::max_element(w.begin(), w.end());
    REQUIRE(*it == 1.0);
    const auto center = static_cast<std::size_t>(it - w.begin());
    if (m > 0) REQUIRE(center > prev_center);
    prev_center = center;

    const auto [lo, hi] = fb.spans[static_cast<std::size_t>(m)];
    for (std::size_t k = lo; k <= hi; ++k) REQUIRE(w[k] > 0.0);
  }

  // application equals the dense dot product
  RandomStream rng(5);
  std::vector<double> powers(fb.n_bins);
  for (double& p : powers) p = rng.uniform();
  const std::vector<double> applied = fb.apply(powers);
  for (int m = 0; m < fb.n_filters; ++m) {
    double dense = 0.0;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      dense += fb.weights[static_cast<std::size_t>(m)][k] * powers[k];
    }
    REQUIRE(std::abs(applied[static_cast<std::size_t>(m)] - dense) < 1e-12);
  }

  REQUIRE_THROWS_AS(build_mel_filterbank(200, 64, 22050), config_error);
  REQUIRE_THROWS_AS(build_mel_filterbank(0, 2048, 22050), config_error);
}

TEST_CASE("log mel spectrogram has the documented geometry") {
  FrameConfig cfg;
  cfg.sample_rate = 22050;
  cfg.frame_s = 0.04;
  cfg.hop_s = 0.02;
  cfg.fft_size = 2048;

  const AudioClip clip = tone_clip(1000.0, 0.5, 22050, 0.3);
  const LogMelSpectrogram lm = log_mel_spectrogram(clip, cfg, 128);
  REQUIRE(lm.n_mels == 128);
  REQUIRE(lm.n_frames == 24);
  REQUIRE(lm.values.size() == 128);
  REQUIRE(lm.values[0].size() == 24);

  // the tone keeps one row dominant in every frame
  std::size_t first_best = 0;
  for (std::size_t t = 0; t < lm.n_frames; ++t) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < lm.values.size(); ++m) {
      if (lm.values[m][t] > lm.values[best][t]) best = m;
    }
    if (t == 0) {
      first_best = best;
    } else {
      REQUIRE(best == first_best);
    }
  }

  // silence floors every cell at ln(1e-10)
  AudioClip silent = clip;
  std::fill(silent.samples.begin(), silent.samples.end(), 0.0);
  const LogMelSpectrogram quiet = log_mel_spectrogram(silent, cfg, 128);
  const double floor_ln = std::log(kLogMelFloor);
  for (const auto& row : quiet.values) {
    for (double v : row) REQUIRE(v == floor_ln);
  }
}

TEST_CASE("mfcc of a constant log mel column is a pure dc coefficient") {
  LogMelSpectrogram lm;
  lm.n_mels = 128;
  lm.n_frames = 3;
  lm.values.assign(128, std::vector<double>(3, 2.5));

  const auto coeffs = mfcc_from_logmel(lm, 13);
  REQUIRE(coeffs.size() == 13);
  REQUIRE(coeffs[0].size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    REQUIRE(std::abs(coeffs[0][t] - 2.5 * std::sqrt(128.0)) < 1e-9);
    for (std::size_t k = 1; k < 13; ++k) REQUIRE(std::abs(coeffs[k][t]) < 1e-9);
  }

  REQUIRE_THROWS_AS(mfcc_from_logmel(lm, 0), config_error);
  REQUIRE_THROWS_AS(mfcc_from_logmel(lm, 129), config_error);
}

TEST_CASE("orthonormal dct matches a direct cosine transform") {
  RandomStream rng(23);
  std::vector<double> x(32);
  for (double& v : x) v = rng.normal();

  const std::vector<double> fast = detail::dct2_orthonormal(x);
  const std::size_t m = x.size();
  for (std::size_t k = 0; k < m; ++k) {
    double acc = 0.0;
    for (std::size_t n = 0; n < m; ++n) {
      acc += x[n] * std::cos(kPi * (static_cast<double>(n) + 0.5) * static_cast<double>(k) /
                             static_cast<double>(m));
    }
    const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(m))
                                : std::sqrt(2.0 / static_cast<double>(m));
    REQUIRE(std::abs(fast[k] - scale * acc) < 1e-9);
  }
}

TEST_CASE("descriptor matrix exposes 21 named columns") {
  const std::vector<std::string> names = lld_descriptor_names();
  REQUIRE(names.size() == 21);
  REQUIRE(names[0] == "energy");
  REQUIRE(names[7] == "flux");
  REQUIRE(names[8] == "mfcc0");
  REQUIRE(names[20] == "mfcc12");

  const AudioClip clip = tone_clip(800.0, 0.4, 44100, 0.4);
  const LldMatrix m = extract_lld_matrix(clip);
  REQUIRE(m.descriptor_names == names);
  REQUIRE(m.n_descriptors() == 21);
  REQUIRE_FALSE(m.columns[0].empty());
  // flux of the first frame is defined as zero
  REQUIRE(m.columns[7][0] == 0.0);
  // the mfcc columns ride the spectrotemporal grid, not the temporal one
  REQUIRE(m.columns[8].size() != m.columns[0].size());

  LogMelSpectrogram lm;
  extract_lld_matrix(clip, {}, &lm);
  REQUIRE(lm.n_mels == 128);
  REQUIRE(lm.n_frames == m.columns[8].size());
}

TEST_CASE("noise carries more spectral entropy than a tone") {
  AudioClip noise;
  noise.clip_id = "noise";
  noise.sample_rate = 44100;
  RandomStream rng(9);
  noise.samples.resize(22050);
  for (double& s : noise.samples) s = 0.3 * rng.normal();

  const AudioClip tone = tone_clip(1200.0, 0.5, 44100, 0.3);

  const LldMatrix mn = extract_lld_matrix(noise);
  const LldMatrix mt = extract_lld_matrix(tone);
  auto column_mean = [](const std::vector<double>& c) {
    double s = 0.0;
    for (double v : c) s += v;
    return s / static_cast<double>(c.size());
  };
  REQUIRE(column_mean(mn.columns[6]) > column_mean(mt.columns[6]));
}

TEST_CASE("too short and empty clips are rejected with context") {
  AudioClip clip;
  clip.clip_id = "stub";
  clip.sample_rate = 44100;
  REQUIRE_THROWS_AS(extract_lld_matrix(clip), data_error);

  clip.samples.assign(441, 0.1);  // 10 ms, under the 50 ms minimum
  try {
    extract_lld_matrix(clip);
    FAIL("expected a throw");
  } catch (const data_error& e) {
    REQUIRE(std::string(e.what()).find("stub") != std::string::npos);
    REQUIRE(std::string(e.what()).find("too short") != std::string::npos);
  }
}

TEST_CASE("log mel binaries round trip through float32") {
  TempDir dir;
  LogMelSpectrogram lm;
  lm.n_mels = 4;
  lm.n_frames = 3;
  RandomStream rng(31);
  lm.values.assign(4, std::vector<double>(3));
  for (auto& row : lm.values) {
    for (double& v : row) v = rng.normal() * 10.0;
  }

  const auto path = dir / "lm.bin";
  write_logmel_binary(path, lm);
  const LogMelSpectrogram back = read_logmel_binary(path);
  REQUIRE(back.n_mels == 4);
  REQUIRE(back.n_frames == 3);
  for (std::size_t m = 0; m < 4; ++m) {
    for (std::size_t t = 0; t < 3; ++t) {
      REQUIRE(std::abs(back.values[m][t] - lm.values[m][t]) <
              1e-6 * std::max(1.0, std::abs(lm.values[m][t])));
    }
  }

  write_bytes(dir / "short.bin", std::string("\x01\x00\x02\x00", 4));
  REQUIRE_THROWS_AS(read_logmel_binary(dir / "short.bin"), decode_error);
}
