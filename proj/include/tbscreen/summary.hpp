#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "tbscreen/csv.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/lld.hpp"
#include "tbscreen/manifest.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw state_error("mean: empty sequence");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) throw state_error("std: need at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) {
    const double d = x - m;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace detail {

// Central moments about the mean; zero-variance detection piggybacks here so
// the callers share one convention.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations
  double m3 = 0.0;
  double m4 = 0.0;
  bool degenerate = true;
};

inline Moments central_moments(const std::vector<double>& v) {
  Moments mo;
  mo.n = v.size();
  if (v.empty()) return mo;
  double s = 0.0;
  for (double x : v) s += x;
  mo.mean = s / static_cast<double>(v.size());
  for (double x : v) {
    const double d = x - mo.mean;
    const double d2 = d * d;
    mo.m2 += d2;
    mo.m3 += d2 * d;
    mo.m4 += d2 * d2;
  }
  mo.degenerate = mo.m2 == 0.0;
  return mo;
}

}  // namespace detail

// Sample skewness b1: biased third moment over the sample-variance^{3/2}.
// Degenerate (constant or too-short) input maps to 0 so the feature vector
// stays total.
inline double skewness(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  const auto mo = detail::central_moments(v);
  if (mo.degenerate) return 0.0;
  const double n = static_cast<double>(mo.n);
  const double s2 = mo.m2 / (n - 1.0);
  return (mo.m3 / n) / std::pow(s2, 1.5);
}

// Bias-corrected excess kurtosis G2; zero for a large normal sample, -2 in
// the two-point limit, 0 on degenerate input by the same convention.
inline double kurtosis(const std::vector<double>& v) {
  if (v.size() < 4) return 0.0;
  const auto mo = detail::central_moments(v);
  if (mo.degenerate) return 0.0;
  const double n = static_cast<double>(mo.n);
  const double s2 = mo.m2 / (n - 1.0);
  const double term = n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * (mo.m4 / (s2 * s2));
  return term - 3.0 * (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
}

inline constexpr std::array<const char*, 4> kSummarySuffixes = {"_mean", "_std", "_skew", "_kurt"};

struct FeatureVector {
  std::string clip_id;
  std::string participant_id;
  int label = 0;
  std::vector<std::string> names;
  std::vector<double> values;
};

// Collapses each descriptor column to [mean, std, skew, kurt]. Columns too
// short for a statistic contribute 0 and a warning; the vector length is
// always 4 x n_descriptors.
inline FeatureVector summarize_clip(const LldMatrix& m,
                                    std::vector<std::string>* warnings = nullptr) {
  if (m.columns.size() != m.descriptor_names.size()) {
    throw state_error("summarize: names/columns mismatch");
  }
  FeatureVector fv;
  fv.clip_id = m.clip_id;
  fv.names.reserve(4 * m.columns.size());
  fv.values.reserve(4 * m.columns.size());

  auto warn = [&](const std::string& msg) {
    if (warnings != nullptr) warnings->push_back(msg);
  };

  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    const std::vector<double>& col = m.columns[c];
    const std::string& name = m.descriptor_names[c];
    if (col.empty()) {
      throw data_error("clip " + m.clip_id + ": descriptor " + name + " has no frames");
    }

    double stats[4] = {mean(col), 0.0, 0.0, 0.0};
    if (col.size() >= 2) {
      stats[1] = sample_std(col);
    } else {
      warn("clip " + m.clip_id + ": " + name + " has " + std::to_string(col.size()) +
           " frame(s); std set to 0");
    }
    if (col.size() >= 3) {
      stats[2] = skewness(col);
    } else {
      warn("clip " + m.clip_id + ": " + name + " too short for skewness; set to 0");
    }
    if (col.size() >= 4) {
      stats[3] = kurtosis(col);
    } else {
      warn("clip " + m.clip_id + ": " + name + " too short for kurtosis; set to 0");
    }

    for (std::size_t s = 0; s < 4; ++s) {
      fv.names.push_back(name + kSummarySuffixes[s]);
      fv.values.push_back(stats[s]);
    }
  }
  return fv;
}

// Feature table: identity columns then one column per summarized feature.
inline void write_feature_csv(const std::filesystem::path& path,
                              const std::vector<FeatureVector>& features,
                              const std::vector<std::string>& comments = {}) {
  if (features.empty()) throw data_error("feature csv: no rows");
  std::vector<std::string> header = {"clip_id", "participant_id", "label"};
  header.insert(header.end(), features.front().names.begin(), features.front().names.end());

  std::vector<std::vector<std::string>> rows;
  rows.reserve(features.size());
  for (const FeatureVector& fv : features) {
    if (fv.names != features.front().names) {
      throw state_error("feature csv: inconsistent feature names across clips");
    }
    std::vector<std::string> row = {fv.clip_id, fv.participant_id, label_to_string(fv.label)};
    for (double v : fv.values) row.push_back(format_double(v));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows, comments);
}

}  // namespace tbscreen
