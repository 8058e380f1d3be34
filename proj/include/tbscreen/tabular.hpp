#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tbscreen/error.hpp"
#include "tbscreen/lld.hpp"
#include "tbscreen/manifest.hpp"
#include "tbscreen/models/common.hpp"
#include "tbscreen/summary.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

// Turns metadata records into 16-element vectors in field order. Missing
// values are imputed with statistics learned from training records only:
// median for numerics, mode for binaries (ties resolve to 0).
class MetadataEncoder {
 public:
  void fit(const std::vector<const MetadataRecord*>& records,
           std::vector<std::string>* warnings = nullptr) {
    if (records.empty()) throw data_error("metadata encoder: no training records");
    fill_.assign(kMetadataFieldCount, 0.0);
    n_missing_.assign(kMetadataFieldCount, 0);

    for (std::size_t f = 0; f < kMetadataFieldCount; ++f) {
      std::vector<double> observed;
      observed.reserve(records.size());
      for (const MetadataRecord* r : records) {
        if (r->values[f].has_value()) {
          observed.push_back(*r->values[f]);
        } else {
          ++n_missing_[f];
        }
      }
      if (observed.empty()) {
        fill_[f] = 0.0;  // nothing observed; neutral fill
        if (warnings != nullptr) {
          warnings->push_back(std::string("metadata field ") + kMetadataFields[f].name +
                              " unobserved in training data; imputing 0");
        }
        continue;
      }
      if (kMetadataFields[f].kind == MetadataFieldKind::numeric) {
        std::sort(observed.begin(), observed.end());
        const std::size_t n = observed.size();
        fill_[f] = n % 2 == 1 ? observed[n / 2]
                              : (observed[n / 2 - 1] + observed[n / 2]) / 2.0;
      } else {
        std::size_t ones = 0;
        for (double v : observed) ones += v != 0.0 ? 1 : 0;
        fill_[f] = ones * 2 > observed.size() ? 1.0 : 0.0;
      }
    }

    if (warnings != nullptr) {
      const std::size_t age_idx = metadata_field_index("age");
      for (const MetadataRecord* r : records) {
        if (r->values[age_idx].has_value() && *r->values[age_idx] < 18.0) {
          warnings->push_back("age below the adult cohort bound (18): " +
                              format_double(*r->values[age_idx]));
        }
      }
    }
    fitted_ = true;
  }

  std::vector<double> encode(const MetadataRecord& r) const {
    if (!fitted_) throw state_error("metadata encoder: encode before fit");
    std::vector<double> out(kMetadataFieldCount);
    for (std::size_t f = 0; f < kMetadataFieldCount; ++f) {
      out[f] = r.values[f].has_value() ? *r.values[f] : fill_[f];
    }
    return out;
  }

  bool fitted() const { return fitted_; }
  const std::vector<double>& fill_values() const { return fill_; }
  const std::vector<std::size_t>& training_missing_counts() const { return n_missing_; }

  nlohmann::json to_json() const {
    std::vector<std::string> names;
    for (const auto& def : kMetadataFields) names.emplace_back(def.name);
    return {{"fields", names},
            {"fill_values", base64_doubles(fill_)},
            {"training_missing", n_missing_}};
  }
  static MetadataEncoder from_json(const nlohmann::json& j) {
    MetadataEncoder e;
    const auto names = j.at("fields").get<std::vector<std::string>>();
    if (names.size() != kMetadataFieldCount) {
      throw schema_error("metadata encoder: field count mismatch");
    }
    for (std::size_t f = 0; f < kMetadataFieldCount; ++f) {
      if (names[f] != kMetadataFields[f].name) {
        throw schema_error("metadata encoder: field order mismatch at " + names[f]);
      }
    }
    e.fill_ = doubles_from_base64(j.at("fill_values").get<std::string>());
    e.n_missing_ = j.at("training_missing").get<std::vector<std::size_t>>();
    if (e.fill_.size() != kMetadataFieldCount) {
      throw schema_error("metadata encoder: fill value count mismatch");
    }
    e.fitted_ = true;
    return e;
  }

 private:
  bool fitted_ = false;
  std::vector<double> fill_;
  std::vector<std::size_t> n_missing_;
};

inline std::vector<double> encode_metadata(const MetadataRecord& r, const MetadataEncoder& enc) {
  return enc.encode(r);
}

// Per-column z-scoring with statistics from training rows only. Constant
// columns are masked to 0 so no division blows up.
class Scaler {
 public:
  void fit(const DataMatrix& rows) {
    if (rows.n_rows == 0 || rows.n_cols == 0) throw data_error("scaler: empty fit input");
    mean_.assign(rows.n_cols, 0.0);
    std_.assign(rows.n_cols, 0.0);
    constant_.assign(rows.n_cols, false);

    for (std::size_t i = 0; i < rows.n_rows; ++i) {
      const double* r = rows.row(i);
      for (std::size_t j = 0; j < rows.n_cols; ++j) mean_[j] += r[j];
    }
    for (double& m : mean_) m /= static_cast<double>(rows.n_rows);

    if (rows.n_rows >= 2) {
      for (std::size_t i = 0; i < rows.n_rows; ++i) {
        const double* r = rows.row(i);
        for (std::size_t j = 0; j < rows.n_cols; ++j) {
          const double d = r[j] - mean_[j];
          std_[j] += d * d;
        }
      }
      for (double& s : std_) s = std::sqrt(s / static_cast<double>(rows.n_rows - 1));
    }
    for (std::size_t j = 0; j < rows.n_cols; ++j) {
      if (std_[j] <= 0.0) {
        constant_[j] = true;
        std_[j] = 1.0;  // inert divisor; masked columns output 0 regardless
      }
    }
    fitted_ = true;
  }

  // Leakage-guarded fit: every row carries its fold tag, and any row tagged
  // with the held-out fold is refused.
  void fit_guarded(const DataMatrix& rows, const std::vector<int>& fold_of_row,
                   int held_out_fold) {
    if (fold_of_row.size() != rows.n_rows) throw state_error("scaler: fold tag count mismatch");
    for (std::size_t i = 0; i < fold_of_row.size(); ++i) {
      if (fold_of_row[i] == held_out_fold) {
        throw state_error("scaler: row " + std::to_string(i) + " belongs to held-out fold " +
                          std::to_string(held_out_fold) + "; refusing to fit on test data");
      }
    }
    fit(rows);
  }

  void transform_row(double* row, std::size_t n) const {
    if (!fitted_) throw state_error("scaler: transform before fit");
    if (n != mean_.size()) throw data_error("scaler: column count mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = constant_[j] ? 0.0 : (row[j] - mean_[j]) / std_[j];
    }
  }

  void transform(DataMatrix* rows) const {
    for (std::size_t i = 0; i < rows->n_rows; ++i) transform_row(rows->row(i), rows->n_cols);
  }

  bool fitted() const { return fitted_; }

  nlohmann::json to_json() const {
    std::vector<int> mask(constant_.begin(), constant_.end());
    return {{"mean", base64_doubles(mean_)}, {"std", base64_doubles(std_)}, {"constant", mask}};
  }
  static Scaler from_json(const nlohmann::json& j) {
    Scaler s;
    s.mean_ = doubles_from_base64(j.at("mean").get<std::string>());
    s.std_ = doubles_from_base64(j.at("std").get<std::string>());
    const auto mask = j.at("constant").get<std::vector<int>>();
    if (s.mean_.size() != s.std_.size() || s.mean_.size() != mask.size()) {
      throw schema_error("scaler: inconsistent column blocks");
    }
    s.constant_.assign(mask.begin(), mask.end());
    s.fitted_ = true;
    return s;
  }

 private:
  bool fitted_ = false;
  std::vector<double> mean_;
  std::vector<double> std_;
  std::vector<bool> constant_;
};

namespace detail {

// Center-crop or symmetrically pad a (rows x T) matrix to target_frames
// columns, then flatten row-major. pad_row[r] supplies the fill for row r.
inline std::vector<double> crop_pad_flatten(const std::vector<std::vector<double>>& rows,
                                            std::size_t target_frames,
                                            const std::vector<double>& pad_row) {
  if (rows.empty()) throw data_error("flatten: empty matrix");
  const std::size_t t = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * target_frames);

  if (t >= target_frames) {
    const std::size_t start = (t - target_frames) / 2;
    for (const auto& row : rows) {
      if (row.size() != t) throw state_error("flatten: ragged matrix");
      out.insert(out.end(), row.begin() + static_cast<std::ptrdiff_t>(start),
                 row.begin() + static_cast<std::ptrdiff_t>(start + target_frames));
    }
  } else {
    const std::size_t pad = target_frames - t;
    const std::size_t left = pad / 2;
    const std::size_t right = pad - left;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != t) throw state_error("flatten: ragged matrix");
      out.insert(out.end(), left, pad_row[r]);
      out.insert(out.end(), rows[r].begin(), rows[r].end());
      out.insert(out.end(), right, pad_row[r]);
    }
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kDefaultFlattenFrames = 24;

// 128 x 24 log-mel block flattened mel-major; pad frames sit at the log floor,
// i.e. what a silent frame would produce.
inline std::vector<double> flatten_spectrogram(const LogMelSpectrogram& lm,
                                               std::size_t target_frames = kDefaultFlattenFrames) {
  const std::vector<double> pad_row(static_cast<std::size_t>(lm.n_mels), std::log(kLogMelFloor));
  return detail::crop_pad_flatten(lm.values, target_frames, pad_row);
}

// MFCC matrix flattened with the same crop/pad policy. The pad column is the
// DCT of an all-floor log-mel column: ln(floor)*sqrt(n_mels) in coefficient 0,
// zero elsewhere.
inline std::vector<double> flatten_mfcc(const std::vector<std::vector<double>>& coeffs,
                                        int n_mels,
                                        std::size_t target_frames = kDefaultFlattenFrames) {
  std::vector<double> pad_row(coeffs.size(), 0.0);
  if (!pad_row.empty()) {
    pad_row[0] = std::log(kLogMelFloor) * std::sqrt(static_cast<double>(n_mels));
  }
  return detail::crop_pad_flatten(coeffs, target_frames, pad_row);
}

// Which feature blocks a fused vector carries. The audio summary is the
// backbone every model trains on; the rest are opt-in.
struct FeatureToggles {
  bool audio_summary = true;
  bool metadata = false;
  bool flat_spectrogram = false;
  bool flat_mfcc = false;

  void validate() const {
    if (!audio_summary) {
      throw config_error("feature toggles: the audio_summary block is required");
    }
  }

  nlohmann::json to_json() const {
    return {{"audio_summary", audio_summary},
            {"metadata", metadata},
            {"flat_spectrogram", flat_spectrogram},
            {"flat_mfcc", flat_mfcc}};
  }
  static FeatureToggles from_json(const nlohmann::json& j) {
    FeatureToggles t;
    t.audio_summary = j.at("audio_summary").get<bool>();
    t.metadata = j.at("metadata").get<bool>();
    t.flat_spectrogram = j.at("flat_spectrogram").get<bool>();
    t.flat_mfcc = j.at("flat_mfcc").get<bool>();
    return t;
  }
};

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct BlockLayout {
  std::vector<Block> blocks;

  std::size_t total() const {
    return blocks.empty() ? 0 : blocks.back().offset + blocks.back().length;
  }
  const Block* find(const std::string& name) const {
    for (const Block& b : blocks) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }
  bool operator==(const BlockLayout& other) const {
    if (blocks.size() != other.blocks.size()) return false;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].name != other.blocks[i].name || blocks[i].offset != other.blocks[i].offset ||
          blocks[i].length != other.blocks[i].length) {
        return false;
      }
    }
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const Block& b : blocks) {
      arr.push_back({{"name", b.name}, {"offset", b.offset}, {"length", b.length}});
    }
    return arr;
  }
  static BlockLayout from_json(const nlohmann::json& j) {
    BlockLayout layout;
    for (const auto& jb : j) {
      layout.blocks.push_back({jb.at("name").get<std::string>(),
                               jb.at("offset").get<std::size_t>(),
                               jb.at("length").get<std::size_t>()});
    }
    return layout;
  }
};

struct FusedVector {
  std::string clip_id;
  std::string participant_id;
  int label = 0;
  std::vector<double> values;
  BlockLayout layout;

  std::vector<double> block(const std::string& name) const {
    const Block* b = layout.find(name);
    if (b == nullptr) throw state_error("fused vector has no block " + name);
    return std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(b->offset),
                               values.begin() + static_cast<std::ptrdiff_t>(b->offset + b->length));
  }
};

// Concatenates the present blocks in fixed order; optional blocks pass
// nullptr. The layout records exact offsets so projection is bit-exact.
inline FusedVector fuse(const FeatureVector& audio, const std::vector<double>* meta,
                        const std::vector<double>* flat_spectrogram,
                        const std::vector<double>* flat_mfcc,
                        const BlockLayout* expected = nullptr) {
  FusedVector out;
  out.clip_id = audio.clip_id;
  out.participant_id = audio.participant_id;
  out.label = audio.label;

  auto append = [&](const char* name, const std::vector<double>& v) {
    out.layout.blocks.push_back({name, out.values.size(), v.size()});
    out.values.insert(out.values.end(), v.begin(), v.end());
  };
  append("audio_summary", audio.values);
  if (meta != nullptr) append("metadata", *meta);
  if (flat_spectrogram != nullptr) append("flat_spectrogram", *flat_spectrogram);
  if (flat_mfcc != nullptr) append("flat_mfcc", *flat_mfcc);

  if (expected != nullptr && !(out.layout == *expected)) {
    throw data_error("clip " + audio.clip_id + ": fused layout mismatch, expected " +
                     std::to_string(expected->total()) + " values, got " +
                     std::to_string(out.values.size()));
  }
  return out;
}

}  // namespace tbscreen
