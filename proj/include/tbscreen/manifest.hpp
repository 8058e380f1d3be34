#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tbscreen/csv.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

enum class MetadataFieldKind { numeric, binary, sex };

struct MetadataFieldDef {
  const char* name;
  MetadataFieldKind kind;
};

// Clinical and demographic fields, in manifest column order. Binary fields
// are serialized "yes"/"no", sex "male"/"female", missing values "".
inline constexpr std::array<MetadataFieldDef, 16> kMetadataFields = {{
    {"age", MetadataFieldKind::numeric},
    {"sex", MetadataFieldKind::sex},
    {"height", MetadataFieldKind::numeric},
    {"weight", MetadataFieldKind::numeric},
    {"cough_duration_days", MetadataFieldKind::numeric},
    {"prior_tb", MetadataFieldKind::binary},
    {"prior_tb_pulmonary", MetadataFieldKind::binary},
    {"prior_tb_extrapulmonary", MetadataFieldKind::binary},
    {"prior_tb_unknown", MetadataFieldKind::binary},
    {"hemoptysis", MetadataFieldKind::binary},
    {"heart_rate", MetadataFieldKind::numeric},
    {"temperature", MetadataFieldKind::numeric},
    {"smoke_last_week", MetadataFieldKind::binary},
    {"fever", MetadataFieldKind::binary},
    {"night_sweats", MetadataFieldKind::binary},
    {"weight_loss", MetadataFieldKind::binary},
}};

inline constexpr std::size_t kMetadataFieldCount = kMetadataFields.size();

inline std::size_t metadata_field_index(std::string_view name) {
  for (std::size_t i = 0; i < kMetadataFieldCount; ++i) {
    if (name == kMetadataFields[i].name) return i;
  }
  throw state_error("unknown metadata field: " + std::string(name));
}

// One participant's clinical record. Values are stored numerically in field
// order: binaries and sex already mapped to 1/0, numerics verbatim; missing
// stays unset until imputation.
struct MetadataRecord {
  std::array<std::optional<double>, kMetadataFieldCount> values;

  std::optional<double>& field(std::string_view name) { return values[metadata_field_index(name)]; }
  const std::optional<double>& field(std::string_view name) const {
    return values[metadata_field_index(name)];
  }
  std::optional<double> age() const { return values[0]; }
};

struct ManifestRow {
  std::string clip_id;
  std::string file_path;
  std::string participant_id;
  int label = 0;  // 1 = TB+, 0 = TB-
  MetadataRecord metadata;
};

// Rows plus the participant grouping derived from them. Participants appear
// in order of first occurrence; labels are constant within a participant.
struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> participants;
  std::vector<int> participant_labels;
  std::vector<std::vector<std::size_t>> groups;  // row indices per participant

  std::size_t n_participants() const { return participants.size(); }
  std::size_t n_clips() const { return rows.size(); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline double parse_numeric_field(const std::string& raw, const std::string& field,
                                  const std::string& clip_id) {
  const char* begin = raw.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    throw data_error("clip " + clip_id + ": unparseable numeric " + field + " value '" + raw +
                     "'");
  }
  return v;
}

}  // namespace detail

// Builds the participant grouping and checks manifest invariants: unique
// clip ids and one label per participant.
inline Manifest finalize_manifest(std::vector<ManifestRow> rows) {
  Manifest m;
  m.rows = std::move(rows);

  std::unordered_set<std::string> seen_clips;
  std::unordered_map<std::string, std::size_t> participant_index;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const ManifestRow& row = m.rows[i];
    if (row.clip_id.empty()) throw data_error("manifest row with empty clip_id");
    if (row.participant_id.empty()) {
      throw data_error("clip " + row.clip_id + ": empty participant_id");
    }
    if (!seen_clips.insert(row.clip_id).second) {
      throw data_error("duplicate clip_id: " + row.clip_id);
    }
    auto [it, inserted] = participant_index.try_emplace(row.participant_id, m.participants.size());
    if (inserted) {
      m.participants.push_back(row.participant_id);
      m.participant_labels.push_back(row.label);
      m.groups.emplace_back();
    } else if (m.participant_labels[it->second] != row.label) {
      throw data_error("participant " + row.participant_id + " has conflicting labels");
    }
    m.groups[it->second].push_back(i);
  }
  return m;
}

inline int parse_label(const std::string& raw) {
  const std::string v = detail::trim(raw);
  if (v == "TB+") return 1;
  if (v == "TB-" || v == "TB−") return 0;
  throw data_error("unknown label '" + raw + "' (expected TB+ or TB-)");
}

inline const char* label_to_string(int label) { return label == 1 ? "TB+" : "TB-"; }

// Manifest CSV: clip_id, file_path, participant_id, label, then the sixteen
// metadata columns. Relative file paths are kept verbatim; callers resolve
// them against an audio root.
inline Manifest load_manifest(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);

  const int c_clip = table.column("clip_id");
  const int c_path = table.column("file_path");
  const int c_part = table.column("participant_id");
  const int c_label = table.column("label");
  if (c_clip < 0 || c_path < 0 || c_part < 0 || c_label < 0) {
    throw schema_error("manifest missing a required column (clip_id, file_path, "
                       "participant_id, label): " +
                       path.string());
  }
  std::array<int, kMetadataFieldCount> meta_cols{};
  for (std::size_t i = 0; i < kMetadataFieldCount; ++i) {
    meta_cols[i] = table.column(kMetadataFields[i].name);
    if (meta_cols[i] < 0) {
      throw schema_error("manifest missing metadata column '" +
                         std::string(kMetadataFields[i].name) + "': " + path.string());
    }
  }

  std::vector<ManifestRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& raw : table.rows) {
    ManifestRow row;
    row.clip_id = detail::trim(raw[static_cast<std::size_t>(c_clip)]);
    row.file_path = detail::trim(raw[static_cast<std::size_t>(c_path)]);
    row.participant_id = detail::trim(raw[static_cast<std::size_t>(c_part)]);
    row.label = parse_label(raw[static_cast<std::size_t>(c_label)]);

    for (std::size_t i = 0; i < kMetadataFieldCount; ++i) {
      const std::string value = detail::trim(raw[static_cast<std::size_t>(meta_cols[i])]);
      if (value.empty()) continue;
      const auto& def = kMetadataFields[i];
      switch (def.kind) {
        case MetadataFieldKind::numeric:
          row.metadata.values[i] = detail::parse_numeric_field(value, def.name, row.clip_id);
          break;
        case MetadataFieldKind::binary: {
          const std::string v = detail::lower(value);
          if (v == "yes") {
            row.metadata.values[i] = 1.0;
          } else if (v == "no") {
            row.metadata.values[i] = 0.0;
          } else {
            throw data_error("clip " + row.clip_id + ": binary field " +
                             std::string(def.name) + " must be yes/no, got '" + value + "'");
          }
          break;
        }
        case MetadataFieldKind::sex: {
          const std::string v = detail::lower(value);
          if (v == "male") {
            row.metadata.values[i] = 1.0;
          } else if (v == "female") {
            row.metadata.values[i] = 0.0;
          } else {
            throw data_error("clip " + row.clip_id + ": sex must be male/female, got '" + value +
                             "'");
          }
          break;
        }
      }
    }
    rows.push_back(std::move(row));
  }
  return finalize_manifest(std::move(rows));
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::vector<std::string> header = {"clip_id", "file_path", "participant_id", "label"};
  for (const auto& def : kMetadataFields) header.emplace_back(def.name);

  std::vector<std::vector<std::string>> rows;
  rows.reserve(m.rows.size());
  for (const ManifestRow& row : m.rows) {
    std::vector<std::string> out = {row.clip_id, row.file_path, row.participant_id,
                                    label_to_string(row.label)};
    for (std::size_t i = 0; i < kMetadataFieldCount; ++i) {
      const auto& v = row.metadata.values[i];
      if (!v.has_value()) {
        out.emplace_back();
        continue;
      }
      switch (kMetadataFields[i].kind) {
        case MetadataFieldKind::numeric:
          out.push_back(format_double(*v));
          break;
        case MetadataFieldKind::binary:
          out.emplace_back(*v != 0.0 ? "yes" : "no");
          break;
        case MetadataFieldKind::sex:
          out.emplace_back(*v != 0.0 ? "male" : "female");
          break;
      }
    }
    rows.push_back(std::move(out));
  }
  write_csv(path, header, rows);
}

struct DatasetStats {
  std::size_t n_participants = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_clips = 0;
  double clips_mean = 0.0;
  double clips_std = 0.0;  // sample std over participants
  std::size_t clips_min = 0;
  std::size_t clips_max = 0;
  double total_duration_min = 0.0;
};

// Counts and clips-per-participant statistics. Durations, when provided,
// are per clip_id in seconds.
inline DatasetStats dataset_stats(
    const Manifest& m, const std::unordered_map<std::string, double>* durations_s = nullptr) {
  if (m.rows.empty()) throw schema_error("dataset_stats: empty manifest");

  DatasetStats s;
  s.n_participants = m.participants.size();
  s.n_clips = m.rows.size();
  for (int label : m.participant_labels) {
    if (label == 1) {
      ++s.n_pos;
    } else {
      ++s.n_neg;
    }
  }

  s.clips_min = m.groups.front().size();
  s.clips_max = m.groups.front().size();
  double sum = 0.0;
  for (const auto& g : m.groups) {
    sum += static_cast<double>(g.size());
    s.clips_min = std::min(s.clips_min, g.size());
    s.clips_max = std::max(s.clips_max, g.size());
  }
  s.clips_mean = sum / static_cast<double>(s.n_participants);

  if (s.n_participants > 1) {
    double ss = 0.0;
    for (const auto& g : m.groups) {
      const double d = static_cast<double>(g.size()) - s.clips_mean;
      ss += d * d;
    }
    s.clips_std = std::sqrt(ss / static_cast<double>(s.n_participants - 1));
  }

  if (durations_s != nullptr) {
    double total_s = 0.0;
    for (const ManifestRow& row : m.rows) {
      const auto it = durations_s->find(row.clip_id);
      if (it == durations_s->end()) {
        throw data_error("dataset_stats: no duration for clip " + row.clip_id);
      }
      total_s += it->second;
    }
    s.total_duration_min = total_s / 60.0;
  }
  return s;
}

}  // namespace tbscreen
