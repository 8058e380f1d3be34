#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tbscreen/error.hpp"
#include "tbscreen/lld.hpp"
#include "tbscreen/models/models.hpp"
#include "tbscreen/synth.hpp"
#include "tbscreen/tabular.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

namespace detail {

inline std::string strip_config_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline bool parse_config_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw config_error("config key " + key + ": expected true or false, got '" + v + "'");
}

inline long long parse_config_int(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw config_error("config key " + key + ": expected integer, got '" + v + "'");
  }
  return x;
}

inline std::uint64_t parse_config_u64(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw config_error("config key " + key + ": expected unsigned integer, got '" + v + "'");
  }
  return x;
}

inline double parse_config_double(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0' || !std::isfinite(x)) {
    throw config_error("config key " + key + ": expected number, got '" + v + "'");
  }
  return x;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

// key = value lines, # comments, optional double quotes around values.
// Duplicate keys are rejected so an experiment record stays unambiguous.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    line = detail::trim(detail::strip_config_comment(line));
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::unquote(detail::trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw config_error("config line " + std::to_string(line_no) + ": empty key");
    }
    for (const auto& [k, v] : entries) {
      if (k == key) throw config_error("config: duplicate key " + key);
    }
    entries.emplace_back(key, value);
  }
  return entries;
}

inline std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::filesystem::path& path) {
  return parse_config_text(read_file_text(path));
}

struct PipelineConfig {
  // paths (never part of the fingerprint)
  std::string manifest_path;
  std::string audio_root;  // empty resolves against the manifest directory
  std::string out_dir = "out";
  std::string cache_dir;  // empty resolves to out_dir/cache
  bool use_cache = true;

  std::string experiment = "cough-only";
  FeatureToggles toggles;

  LldConfig lld;
  int flatten_frames = kDefaultFlattenFrames;

  std::vector<ModelFamily> families = {ModelFamily::lr, ModelFamily::mlp, ModelFamily::rf,
                                       ModelFamily::ab};
  int k_outer = 10;
  int k_inner = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  int mlp_epochs = 200;

  SyntheticCorpusSpec synth;

  void validate() const {
    if (experiment != "cough-only" && experiment != "cough-metadata") {
      throw config_error("experiment must be cough-only or cough-metadata, got '" + experiment +
                         "'");
    }
    if (experiment == "cough-only" && toggles.metadata) {
      throw config_error("cough-only experiment forbids the metadata block");
    }
    if (experiment == "cough-metadata" && !toggles.metadata) {
      throw config_error("cough-metadata experiment requires the metadata block");
    }
    toggles.validate();
    lld.validate();
    if (flatten_frames < 1) throw config_error("flatten_frames must be >= 1");
    if (families.empty()) throw config_error("no model families selected");
    if (k_outer < 2 || k_inner < 2) throw config_error("fold counts must be >= 2");
    if (jobs < 1) throw config_error("jobs must be >= 1");
    if (mlp_epochs < 1) throw config_error("mlp_epochs must be >= 1");
  }

  GridOptions grid_options() const { return GridOptions{mlp_epochs}; }

  std::filesystem::path resolved_audio_root() const {
    if (!audio_root.empty()) return audio_root;
    return std::filesystem::path(manifest_path).parent_path();
  }
  std::filesystem::path resolved_cache_dir() const {
    if (!cache_dir.empty()) return cache_dir;
    return std::filesystem::path(out_dir) / "cache";
  }

  // Hash of everything that can change a result. Paths, caching, and jobs are
  // deliberately excluded: they move bytes around without changing them.
  std::string fingerprint() const {
    std::string canon;
    auto kv = [&](const std::string& k, const std::string& v) { canon += k + "=" + v + "\n"; };
    auto frame = [&](const std::string& prefix, const FrameConfig& fc) {
      kv(prefix + ".sample_rate", std::to_string(fc.sample_rate));
      kv(prefix + ".frame_s", format_double(fc.frame_s));
      kv(prefix + ".hop_s", format_double(fc.hop_s));
      kv(prefix + ".fft_size", std::to_string(fc.fft_size));
      kv(prefix + ".window", to_string(fc.window));
    };

    kv("experiment", experiment);
    kv("audio_summary", toggles.audio_summary ? "true" : "false");
    kv("metadata", toggles.metadata ? "true" : "false");
    kv("flat_spectrogram", toggles.flat_spectrogram ? "true" : "false");
    kv("flat_mfcc", toggles.flat_mfcc ? "true" : "false");
    frame("temporal_spectral", lld.temporal_spectral);
    frame("spectrotemporal", lld.spectrotemporal);
    kv("n_mels", std::to_string(lld.n_mels));
    kv("n_mfcc", std::to_string(lld.n_mfcc));
    kv("rolloff_fraction", format_double(lld.rolloff_fraction));
    kv("flux_power", format_double(lld.flux_power));
    kv("min_clip_s", format_double(lld.min_clip_s));
    kv("flatten_frames", std::to_string(flatten_frames));
    std::string fam;
    for (ModelFamily f : families) {
      if (!fam.empty()) fam += ",";
      fam += to_string(f);
    }
    kv("families", fam);
    kv("k_outer", std::to_string(k_outer));
    kv("k_inner", std::to_string(k_inner));
    kv("seed", std::to_string(seed));
    kv("mlp_epochs", std::to_string(mlp_epochs));
    kv("synth.n_participants", std::to_string(synth.n_participants));
    kv("synth.clips_min", std::to_string(synth.clips_min));
    kv("synth.clips_max", std::to_string(synth.clips_max));
    kv("synth.positive_fraction", format_double(synth.positive_fraction));
    kv("synth.clip_duration_s", format_double(synth.clip_duration_s));
    kv("synth.sample_rate", std::to_string(synth.sample_rate));
    kv("synth.negative_band", format_double(synth.negative_recipe.band_low_hz) + "-" +
                                  format_double(synth.negative_recipe.band_high_hz));
    kv("synth.positive_band", format_double(synth.positive_recipe.band_low_hz) + "-" +
                                  format_double(synth.positive_recipe.band_high_hz));
    kv("synth.audio_signal", format_double(synth.audio_signal));
    kv("synth.metadata_signal", format_double(synth.metadata_signal));
    kv("synth.missing_rate", format_double(synth.missing_rate));
    return hex64(fnv1a64(canon));
  }
};

namespace detail {

inline bool apply_frame_key(FrameConfig* fc, const std::string& suffix, const std::string& value,
                            const std::string& key) {
  if (suffix == "sample_rate") {
    fc->sample_rate = static_cast<int>(parse_config_int(value, key));
  } else if (suffix == "frame_s") {
    fc->frame_s = parse_config_double(value, key);
  } else if (suffix == "hop_s") {
    fc->hop_s = parse_config_double(value, key);
  } else if (suffix == "fft_size") {
    fc->fft_size = static_cast<std::size_t>(parse_config_int(value, key));
  } else if (suffix == "window") {
    fc->window = window_kind_from_string(value);
  } else {
    return false;
  }
  return true;
}

}  // namespace detail

// Builds a config from parsed key/value pairs; flag overrides are just more
// pairs applied afterwards. The experiment key drives the metadata toggle
// unless an explicit toggle contradicts it, which is an error.
inline PipelineConfig config_from_entries(
    const std::vector<std::pair<std::string, std::string>>& entries) {
  PipelineConfig c;
  std::optional<bool> explicit_metadata;

  for (const auto& [key, value] : entries) {
    if (key == "manifest") {
      c.manifest_path = value;
    } else if (key == "audio_root") {
      c.audio_root = value;
    } else if (key == "out_dir") {
      c.out_dir = value;
    } else if (key == "cache_dir") {
      c.cache_dir = value;
    } else if (key == "use_cache") {
      c.use_cache = detail::parse_config_bool(value, key);
    } else if (key == "experiment") {
      c.experiment = value;
    } else if (key == "audio_summary") {
      c.toggles.audio_summary = detail::parse_config_bool(value, key);
    } else if (key == "metadata") {
      explicit_metadata = detail::parse_config_bool(value, key);
    } else if (key == "flat_spectrogram") {
      c.toggles.flat_spectrogram = detail::parse_config_bool(value, key);
    } else if (key == "flat_mfcc") {
      c.toggles.flat_mfcc = detail::parse_config_bool(value, key);
    } else if (key == "n_mels") {
      c.lld.n_mels = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "n_mfcc") {
      c.lld.n_mfcc = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "rolloff_fraction") {
      c.lld.rolloff_fraction = detail::parse_config_double(value, key);
    } else if (key == "flux_power") {
      c.lld.flux_power = detail::parse_config_double(value, key);
    } else if (key == "min_clip_s") {
      c.lld.min_clip_s = detail::parse_config_double(value, key);
    } else if (key == "flatten_frames") {
      c.flatten_frames = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "families") {
      c.families.clear();
      for (const std::string& f : detail::split_list(value)) {
        c.families.push_back(model_family_from_string(f));
      }
    } else if (key == "k_outer") {
      c.k_outer = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "k_inner") {
      c.k_inner = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "seed") {
      c.seed = detail::parse_config_u64(value, key);
    } else if (key == "jobs") {
      c.jobs = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "mlp_epochs") {
      c.mlp_epochs = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key.rfind("temporal_spectral.", 0) == 0) {
      if (!detail::apply_frame_key(&c.lld.temporal_spectral, key.substr(18), value, key)) {
        throw config_error("unknown config key: " + key);
      }
    } else if (key.rfind("spectrotemporal.", 0) == 0) {
      if (!detail::apply_frame_key(&c.lld.spectrotemporal, key.substr(16), value, key)) {
        throw config_error("unknown config key: " + key);
      }
    } else if (key == "synth.n_participants") {
      c.synth.n_participants = static_cast<std::size_t>(detail::parse_config_int(value, key));
    } else if (key == "synth.clips_min") {
      c.synth.clips_min = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "synth.clips_max") {
      c.synth.clips_max = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "synth.positive_fraction") {
      c.synth.positive_fraction = detail::parse_config_double(value, key);
    } else if (key == "synth.clip_duration_s") {
      c.synth.clip_duration_s = detail::parse_config_double(value, key);
    } else if (key == "synth.sample_rate") {
      c.synth.sample_rate = static_cast<int>(detail::parse_config_int(value, key));
    } else if (key == "synth.negative_band_low") {
      c.synth.negative_recipe.band_low_hz = detail::parse_config_double(value, key);
    } else if (key == "synth.negative_band_high") {
      c.synth.negative_recipe.band_high_hz = detail::parse_config_double(value, key);
    } else if (key == "synth.positive_band_low") {
      c.synth.positive_recipe.band_low_hz = detail::parse_config_double(value, key);
    } else if (key == "synth.positive_band_high") {
      c.synth.positive_recipe.band_high_hz = detail::parse_config_double(value, key);
    } else if (key == "synth.audio_signal") {
      c.synth.audio_signal = detail::parse_config_double(value, key);
    } else if (key == "synth.metadata_signal") {
      c.synth.metadata_signal = detail::parse_config_double(value, key);
    } else if (key == "synth.missing_rate") {
      c.synth.missing_rate = detail::parse_config_double(value, key);
    } else {
      throw config_error("unknown config key: " + key);
    }
  }

  if (c.experiment == "cough-metadata") {
    if (explicit_metadata.has_value() && !*explicit_metadata) {
      throw config_error("cough-metadata experiment requires the metadata block");
    }
    c.toggles.metadata = true;
  } else {
    if (explicit_metadata.has_value() && *explicit_metadata) {
      throw config_error("cough-only experiment forbids the metadata block");
    }
    c.toggles.metadata = false;
  }
  c.synth.seed = c.seed;
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path,
                                  const std::vector<std::pair<std::string, std::string>>&
                                      overrides = {}) {
  std::vector<std::pair<std::string, std::string>> entries;
  if (!path.empty()) entries = parse_config_file(path);
  for (const auto& [k, v] : overrides) {
    std::erase_if(entries, [&](const auto& e) { return e.first == k; });
    entries.emplace_back(k, v);
  }
  return config_from_entries(entries);
}

}  // namespace tbscreen
