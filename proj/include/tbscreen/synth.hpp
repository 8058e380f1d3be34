#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "tbscreen/audio.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/manifest.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

// Acoustic recipe for one class: random-phase sinusoids spread across a noise
// band, plus optional fixed tones. The default bands are disjoint, so the
// spectral centroid alone separates the classes.
struct ClassRecipe {
  double band_low_hz = 0.0;
  double band_high_hz = 0.0;
  std::vector<double> tones_hz;
};

struct SyntheticCorpusSpec {
  std::size_t n_participants = 40;
  int clips_min = 4;
  int clips_max = 6;
  double positive_fraction = 0.5;
  double clip_duration_s = 0.5;
  int sample_rate = 44100;
  ClassRecipe negative_recipe{300.0, 1200.0, {}};
  ClassRecipe positive_recipe{2000.0, 6000.0, {}};
  // 1 keeps the class bands as given; 0 collapses both onto their midpoint so
  // audio carries no label information. Metadata signal shifts vitals and
  // symptom rates for positives; 0 leaves every column label-independent.
  double audio_signal = 1.0;
  double metadata_signal = 0.0;
  double missing_rate = 0.05;
  std::uint64_t seed = 0;

  std::size_t n_positive() const {
    return static_cast<std::size_t>(
        std::lround(positive_fraction * static_cast<double>(n_participants)));
  }

  void validate() const {
    if (n_participants < 2) throw config_error("synth: need at least 2 participants");
    const std::size_t n_pos = n_positive();
    if (n_pos == 0 || n_pos >= n_participants) {
      throw config_error("synth: both classes must be non-empty");
    }
    if (clips_min < 1 || clips_max < clips_min) throw config_error("synth: bad clip range");
    if (clip_duration_s <= 0.0) throw config_error("synth: clip duration must be positive");
    if (sample_rate <= 0) throw config_error("synth: sample rate must be positive");
    const double nyquist = static_cast<double>(sample_rate) / 2.0;
    for (const ClassRecipe* r : {&negative_recipe, &positive_recipe}) {
      if (!(r->band_low_hz > 0.0) || !(r->band_low_hz < r->band_high_hz) ||
          !(r->band_high_hz < nyquist)) {
        throw config_error("synth: recipe band must satisfy 0 < low < high < nyquist");
      }
    }
    if (audio_signal < 0.0 || audio_signal > 1.0 || metadata_signal < 0.0 ||
        metadata_signal > 1.0) {
      throw config_error("synth: signal strengths must lie in [0, 1]");
    }
    if (missing_rate < 0.0 || missing_rate >= 1.0) {
      throw config_error("synth: missing rate must lie in [0, 1)");
    }
  }
};

namespace detail {

inline double clamp_round(double x, double lo, double hi, double step) {
  return std::clamp(std::round(x / step) * step, lo, hi);
}

inline std::vector<double> synth_clip_samples(const ClassRecipe& recipe, double duration_s,
                                              int sample_rate, RandomStream& rng) {
  const auto n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  constexpr std::size_t kComponents = 48;

  std::vector<double> freqs;
  std::vector<double> phases;
  for (std::size_t k = 0; k < kComponents; ++k) {
    freqs.push_back(rng.uniform(recipe.band_low_hz, recipe.band_high_hz));
    phases.push_back(rng.uniform(0.0, 2.0 * kPi));
  }
  for (double tone : recipe.tones_hz) {
    freqs.push_back(tone);
    phases.push_back(rng.uniform(0.0, 2.0 * kPi));
  }

  std::vector<double> x(n, 0.0);
  const double dt = 1.0 / static_cast<double>(sample_rate);
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    const double w = 2.0 * kPi * freqs[k];
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += std::sin(w * static_cast<double>(i) * dt + phases[k]);
    }
  }

  double ms = 0.0;
  for (double v : x) ms += v * v;
  const double rms = std::sqrt(ms / static_cast<double>(n));
  const double gain = rms > 0.0 ? 0.15 / rms : 0.0;
  for (double& v : x) v = v * gain + 0.005 * rng.normal();
  return x;
}

inline MetadataRecord synth_metadata(int label, double s, double missing_rate,
                                     RandomStream& rng) {
  const double pos = label == 1 ? s : 0.0;
  MetadataRecord r;
  r.field("age") = static_cast<double>(rng.uniform_int(18, 80));
  r.field("sex") = rng.bernoulli(0.5) ? 1.0 : 0.0;
  r.field("height") = clamp_round(165.0 + 10.0 * rng.normal(), 140.0, 200.0, 1.0);
  r.field("weight") = clamp_round(65.0 + 12.0 * rng.normal(), 35.0, 120.0, 1.0);
  r.field("cough_duration_days") = static_cast<double>(rng.uniform_int(3, 90));

  const bool prior = rng.bernoulli(0.15);
  r.field("prior_tb") = prior ? 1.0 : 0.0;
  double pulmonary = 0.0;
  double extra = 0.0;
  double unknown = 0.0;
  if (prior) {
    const double roll = rng.uniform();
    (roll < 0.6 ? pulmonary : roll < 0.85 ? extra : unknown) = 1.0;
  }
  r.field("prior_tb_pulmonary") = pulmonary;
  r.field("prior_tb_extrapulmonary") = extra;
  r.field("prior_tb_unknown") = unknown;

  r.field("hemoptysis") = rng.bernoulli(std::min(1.0, 0.15 + 0.25 * pos)) ? 1.0 : 0.0;
  r.field("heart_rate") = clamp_round(80.0 + 12.0 * rng.normal() + 6.0 * pos, 45.0, 160.0, 1.0);
  r.field("temperature") = clamp_round(36.8 + 0.4 * rng.normal() + 1.2 * pos, 35.0, 41.0, 0.1);
  r.field("smoke_last_week") = rng.bernoulli(0.3) ? 1.0 : 0.0;
  r.field("fever") = rng.bernoulli(std::min(1.0, 0.2 + 0.5 * pos)) ? 1.0 : 0.0;
  r.field("night_sweats") = rng.bernoulli(std::min(1.0, 0.2 + 0.45 * pos)) ? 1.0 : 0.0;
  r.field("weight_loss") = rng.bernoulli(std::min(1.0, 0.2 + 0.5 * pos)) ? 1.0 : 0.0;

  for (auto& v : r.values) {
    if (rng.bernoulli(missing_rate)) v.reset();
  }
  return r;
}

inline std::string zero_padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace detail

// Writes out_dir/audio/*.wav plus out_dir/manifest.csv and returns the
// manifest. Identical spec + seed reproduce the corpus byte for byte; file
// paths in the manifest are relative to its directory.
inline Manifest synth_corpus(const SyntheticCorpusSpec& spec,
                             const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "audio");

  std::vector<int> labels(spec.n_participants, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(spec.n_positive()), 1);
  RandomStream label_rng(derive_seed(spec.seed, {"synth", "labels"}));
  label_rng.shuffle(labels);

  // class bands pulled toward their common midpoint as audio_signal drops
  const double mid_low = 0.5 * (spec.negative_recipe.band_low_hz + spec.positive_recipe.band_low_hz);
  const double mid_high =
      0.5 * (spec.negative_recipe.band_high_hz + spec.positive_recipe.band_high_hz);
  auto blended = [&](const ClassRecipe& r) {
    ClassRecipe out = r;
    out.band_low_hz = mid_low + spec.audio_signal * (r.band_low_hz - mid_low);
    out.band_high_hz = mid_high + spec.audio_signal * (r.band_high_hz - mid_high);
    return out;
  };
  const ClassRecipe neg = blended(spec.negative_recipe);
  const ClassRecipe pos = blended(spec.positive_recipe);

  std::vector<ManifestRow> rows;
  for (std::size_t p = 0; p < spec.n_participants; ++p) {
    const std::string participant_id = "p" + detail::zero_padded(p, 3);
    const int label = labels[p];

    RandomStream meta_rng(derive_seed(spec.seed, {"synth", "meta", std::to_string(p)}));
    const MetadataRecord metadata =
        detail::synth_metadata(label, spec.metadata_signal, spec.missing_rate, meta_rng);

    RandomStream count_rng(derive_seed(spec.seed, {"synth", "clips", std::to_string(p)}));
    const int n_clips = count_rng.uniform_int(spec.clips_min, spec.clips_max);

    for (int c = 0; c < n_clips; ++c) {
      RandomStream clip_rng(
          derive_seed(spec.seed, {"synth", "clip", std::to_string(p), std::to_string(c)}));
      const double duration = spec.clip_duration_s * clip_rng.uniform(0.9, 1.1);
      const std::vector<double> samples =
          detail::synth_clip_samples(label == 1 ? pos : neg, duration, spec.sample_rate, clip_rng);

      const std::string clip_id = participant_id + "_c" + std::to_string(c);
      const std::string rel_path = "audio/" + clip_id + ".wav";
      encode_wav_pcm16(out_dir / rel_path, samples, spec.sample_rate);

      ManifestRow row;
      row.clip_id = clip_id;
      row.file_path = rel_path;
      row.participant_id = participant_id;
      row.label = label;
      row.metadata = metadata;
      rows.push_back(std::move(row));
    }
  }

  Manifest m = finalize_manifest(std::move(rows));
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

// Null-experiment helper: reshuffles which participants carry which label
// while keeping the class counts; clips follow their participant.
inline Manifest permute_participant_labels(const Manifest& m, std::uint64_t seed) {
  std::vector<int> labels = m.participant_labels;
  RandomStream rng(derive_seed(seed, {"label-permutation"}));
  rng.shuffle(labels);

  std::unordered_map<std::string, int> new_label;
  for (std::size_t p = 0; p < m.participants.size(); ++p) {
    new_label[m.participants[p]] = labels[p];
  }
  std::vector<ManifestRow> rows = m.rows;
  for (ManifestRow& row : rows) row.label = new_label[row.participant_id];
  return finalize_manifest(std::move(rows));
}

}  // namespace tbscreen
