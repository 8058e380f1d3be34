#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tbscreen/audio.hpp"
#include "tbscreen/config.hpp"
#include "tbscreen/csv.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/eval.hpp"
#include "tbscreen/lld.hpp"
#include "tbscreen/manifest.hpp"
#include "tbscreen/models/models.hpp"
#include "tbscreen/summary.hpp"
#include "tbscreen/synth.hpp"
#include "tbscreen/tabular.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

// ---- feature extraction with a content-addressed cache ----

struct ExtractFailure {
  std::string clip_id;
  std::string message;
};

struct ExtractResult {
  std::vector<ClipFeatures> features;  // aligned to manifest rows
  std::vector<ExtractFailure> failures;
  std::size_t n_cached = 0;
  std::size_t n_computed = 0;
  std::unordered_map<std::string, double> durations_s;
};

namespace detail {

// Hash of every setting that changes feature values. Toggles are excluded:
// the cache always stores all blocks, fusion selects among them later.
inline std::uint64_t feature_semantics_hash(const PipelineConfig& c) {
  std::string canon;
  auto frame = [&](const FrameConfig& fc) {
    canon += std::to_string(fc.sample_rate) + "|" + format_double(fc.frame_s) + "|" +
             format_double(fc.hop_s) + "|" + std::to_string(fc.fft_size) + "|" +
             to_string(fc.window) + ";";
  };
  frame(c.lld.temporal_spectral);
  frame(c.lld.spectrotemporal);
  canon += std::to_string(c.lld.n_mels) + "|" + std::to_string(c.lld.n_mfcc) + "|" +
           format_double(c.lld.rolloff_fraction) + "|" + format_double(c.lld.flux_power) + "|" +
           format_double(c.lld.min_clip_s) + "|" + std::to_string(c.flatten_frames);
  return fnv1a64(canon);
}

inline std::vector<std::string> summary_feature_names(int n_mfcc) {
  std::vector<std::string> names;
  for (const std::string& col : lld_descriptor_names(n_mfcc)) {
    for (const char* suffix : kSummarySuffixes) names.push_back(col + suffix);
  }
  return names;
}

inline ClipFeatures compute_clip_features(const AudioClip& clip, const PipelineConfig& c) {
  ClipFeatures cf;
  LogMelSpectrogram logmel;
  const LldMatrix lld = extract_lld_matrix(clip, c.lld, &logmel);
  cf.audio = summarize_clip(lld);
  cf.flat_spectrogram =
      flatten_spectrogram(logmel, static_cast<std::size_t>(c.flatten_frames));
  cf.flat_mfcc = flatten_mfcc(mfcc_from_logmel(logmel, c.lld.n_mfcc), c.lld.n_mels,
                              static_cast<std::size_t>(c.flatten_frames));
  return cf;
}

inline constexpr const char* kFeatureCacheFormat = "tbscreen-features";

inline std::optional<ClipFeatures> load_cached_features(const std::filesystem::path& path,
                                                        const PipelineConfig& c) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const nlohmann::json j = nlohmann::json::parse(read_file_text(path));
    if (j.at("format").get<std::string>() != kFeatureCacheFormat ||
        j.at("version").get<int>() != 1) {
      return std::nullopt;
    }
    ClipFeatures cf;
    cf.audio.values = doubles_from_base64(j.at("audio").get<std::string>());
    cf.flat_spectrogram = doubles_from_base64(j.at("flat_spectrogram").get<std::string>());
    cf.flat_mfcc = doubles_from_base64(j.at("flat_mfcc").get<std::string>());
    const auto flat = static_cast<std::size_t>(c.flatten_frames);
    if (cf.audio.values.size() != 4 * (8 + static_cast<std::size_t>(c.lld.n_mfcc)) ||
        cf.flat_spectrogram.size() != static_cast<std::size_t>(c.lld.n_mels) * flat ||
        cf.flat_mfcc.size() != static_cast<std::size_t>(c.lld.n_mfcc) * flat) {
      return std::nullopt;
    }
    return cf;
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt cache entries are recomputed, never fatal
  }
}

inline void store_cached_features(const std::filesystem::path& path, const ClipFeatures& cf,
                                  std::size_t row_index) {
  const nlohmann::json j = {{"format", kFeatureCacheFormat},
                            {"version", 1},
                            {"audio", base64_doubles(cf.audio.values)},
                            {"flat_spectrogram", base64_doubles(cf.flat_spectrogram)},
                            {"flat_mfcc", base64_doubles(cf.flat_mfcc)}};
  const std::filesystem::path tmp = path.string() + ".tmp" + std::to_string(row_index);
  write_file(tmp, j.dump() + "\n");
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

// Decodes and featurizes every manifest clip. Cache entries are keyed by
// (clip bytes, feature settings), so relabeled reruns and reruns without
// changes hit the cache. strict throws on the first failed clip; otherwise
// failures are collected and the matching feature slots stay empty.
inline ExtractResult extract_features(const Manifest& m, const PipelineConfig& c, bool strict) {
  const std::filesystem::path audio_root = c.resolved_audio_root();
  const std::filesystem::path cache_dir = c.resolved_cache_dir();
  if (c.use_cache) std::filesystem::create_directories(cache_dir);
  const std::uint64_t semantics = detail::feature_semantics_hash(c);
  const std::vector<std::string> names = detail::summary_feature_names(c.lld.n_mfcc);

  ExtractResult result;
  result.features.resize(m.rows.size());
  std::vector<std::optional<std::string>> errors(m.rows.size());
  std::vector<std::optional<double>> durations(m.rows.size());
  std::atomic<std::size_t> n_cached{0};
  std::atomic<std::size_t> n_computed{0};

  parallel_for(m.rows.size(), c.jobs, [&](std::size_t i) {
    const ManifestRow& row = m.rows[i];
    try {
      std::filesystem::path wav_path(row.file_path);
      if (wav_path.is_relative()) wav_path = audio_root / wav_path;

      const std::vector<unsigned char> bytes = read_file_bytes(wav_path);
      AudioClip clip = decode_wav(wav_path);
      clip.clip_id = row.clip_id;
      clip.participant_id = row.participant_id;
      durations[i] = clip.duration_s();

      const std::filesystem::path cache_path =
          cache_dir / (hex64(fnv1a64(bytes.data(), bytes.size())) + "-" + hex64(semantics) +
                       ".json");
      std::optional<ClipFeatures> cf;
      if (c.use_cache) cf = detail::load_cached_features(cache_path, c);
      if (cf.has_value()) {
        n_cached.fetch_add(1);
      } else {
        cf = detail::compute_clip_features(clip, c);
        n_computed.fetch_add(1);
        if (c.use_cache) detail::store_cached_features(cache_path, *cf, i);
      }

      // ids and label always come from the manifest, not the cache: the same
      // audio bytes may appear under new labels (permutation runs)
      cf->audio.clip_id = row.clip_id;
      cf->audio.participant_id = row.participant_id;
      cf->audio.label = row.label;
      cf->audio.names = names;
      result.features[i] = std::move(*cf);
    } catch (const error& e) {
      errors[i] = e.what();
    }
  });

  result.n_cached = n_cached.load();
  result.n_computed = n_computed.load();
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (errors[i].has_value()) {
      if (strict) throw data_error("clip " + m.rows[i].clip_id + ": " + *errors[i]);
      result.failures.push_back({m.rows[i].clip_id, *errors[i]});
    } else if (durations[i].has_value()) {
      result.durations_s[m.rows[i].clip_id] = *durations[i];
    }
  }
  return result;
}

// ---- pipeline files (model + imputer + scaler + layout) ----

inline constexpr const char* kPipelineFormat = "tbscreen-pipeline";
inline constexpr int kPipelineVersion = 1;

inline void save_pipeline(const std::filesystem::path& path, const FittedPipeline& p,
                          const std::string& fingerprint, double inner_score) {
  nlohmann::json j = {{"format", kPipelineFormat},
                      {"version", kPipelineVersion},
                      {"fingerprint", fingerprint},
                      {"toggles", p.toggles.to_json()},
                      {"layout", p.layout.to_json()},
                      {"inner_score", inner_score},
                      {"model", model_to_json(*p.model)}};
  if (p.encoder.fitted()) j["encoder"] = p.encoder.to_json();
  if (p.scaler.fitted()) j["scaler"] = p.scaler.to_json();
  write_file(path, j.dump(2) + "\n");
}

struct LoadedPipeline {
  FittedPipeline pipeline;
  std::string fingerprint;
  double inner_score = 0.0;
};

inline LoadedPipeline load_pipeline(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw schema_error("pipeline file " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kPipelineFormat) {
      throw schema_error("not a pipeline file: " + path.string());
    }
    if (j.at("version").get<int>() != kPipelineVersion) {
      throw schema_error("unsupported pipeline version in " + path.string());
    }
    LoadedPipeline out;
    out.fingerprint = j.at("fingerprint").get<std::string>();
    out.inner_score = j.at("inner_score").get<double>();
    out.pipeline.toggles = FeatureToggles::from_json(j.at("toggles"));
    out.pipeline.layout = BlockLayout::from_json(j.at("layout"));
    out.pipeline.model = model_from_json(j.at("model"));
    if (out.pipeline.toggles.metadata) {
      if (!j.contains("encoder")) {
        throw schema_error("pipeline file missing encoder: " + path.string());
      }
      out.pipeline.encoder = MetadataEncoder::from_json(j.at("encoder"));
    }
    if (j.contains("scaler")) out.pipeline.scaler = Scaler::from_json(j.at("scaler"));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw schema_error("pipeline file " + path.string() + ": " + e.what());
  }
}

// ---- commands ----

// Features CSV plus, when the spectrogram block is on, one fixed-shape
// log-mel binary per clip. Per-clip failures land in extract_errors.csv and
// turn into a nonzero exit without stopping the run.
inline int cmd_extract(const PipelineConfig& c, std::ostream& out = std::cout) {
  const Manifest m = load_manifest(c.manifest_path);
  const std::filesystem::path out_dir(c.out_dir);
  std::filesystem::create_directories(out_dir);

  ExtractResult r = extract_features(m, c, false);

  std::vector<FeatureVector> ok;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (!r.features[i].audio.values.empty()) ok.push_back(r.features[i].audio);
  }
  write_feature_csv(out_dir / "features.csv", ok, {"fingerprint=" + c.fingerprint()});

  if (c.toggles.flat_spectrogram) {
    const auto flat = static_cast<std::size_t>(c.flatten_frames);
    std::filesystem::create_directories(out_dir / "logmel");
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
      const ClipFeatures& cf = r.features[i];
      if (cf.audio.values.empty()) continue;
      LogMelSpectrogram lm;
      lm.n_mels = c.lld.n_mels;
      lm.n_frames = flat;
      lm.values.assign(static_cast<std::size_t>(c.lld.n_mels), std::vector<double>(flat));
      for (std::size_t mel = 0; mel < lm.values.size(); ++mel) {
        for (std::size_t t = 0; t < flat; ++t) {
          lm.values[mel][t] = cf.flat_spectrogram[mel * flat + t];
        }
      }
      write_logmel_binary(out_dir / "logmel" / (m.rows[i].clip_id + ".bin"), lm);
    }
  }

  if (!r.failures.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const ExtractFailure& f : r.failures) rows.push_back({f.clip_id, f.message});
    write_csv(out_dir / "extract_errors.csv", {"clip_id", "error"}, rows,
              {"fingerprint=" + c.fingerprint()});
  }

  const DatasetStats stats = dataset_stats(m);
  out << "extracted " << ok.size() << "/" << m.n_clips() << " clips ("
      << r.n_cached << " cached, " << r.n_computed << " computed) from "
      << stats.n_participants << " participants\n";
  for (const ExtractFailure& f : r.failures) {
    out << "failed: " << f.clip_id << ": " << f.message << "\n";
  }
  return r.failures.empty() ? 0 : 4;
}

namespace detail {

inline std::string auc_cell(double mean, double sd) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3f +/- %.3f", mean, sd);
  return buf;
}

}  // namespace detail

// One nested-CV run per family; reports land in out_dir as JSON plus a
// combined folds.csv. Byte-identical across reruns and --jobs settings.
inline std::vector<RunReport> cmd_crossvalidate(const PipelineConfig& c,
                                                std::ostream& out = std::cout) {
  const Manifest m = load_manifest(c.manifest_path);
  const ExtractResult r = extract_features(m, c, true);
  const std::filesystem::path out_dir(c.out_dir);
  std::filesystem::create_directories(out_dir);

  RunOptions options;
  options.k_outer = c.k_outer;
  options.k_inner = c.k_inner;
  options.seed = c.seed;
  options.jobs = c.jobs;
  options.grid = c.grid_options();
  options.fingerprint = c.fingerprint();

  std::vector<RunReport> reports;
  std::vector<std::vector<std::string>> fold_rows;
  for (ModelFamily family : c.families) {
    RunReport report = run_experiment(m, r.features, c.toggles, family, options);
    write_file(out_dir / ("report_" + std::string(to_string(family)) + ".json"),
               report.to_json().dump(2) + "\n");

    for (const FoldReport& f : report.folds) {
      fold_rows.push_back({to_string(family), std::to_string(f.fold),
                           format_double(f.inner_score), format_double(f.cough_auc),
                           format_double(f.participant_auc), std::to_string(f.n_test_coughs),
                           std::to_string(f.n_test_participants),
                           f.chosen.hyperparameters.dump()});
    }
    out << to_string(family) << ": cough AUC "
        << detail::auc_cell(report.cough_auc_mean, report.cough_auc_std) << ", participant AUC "
        << detail::auc_cell(report.participant_auc_mean, report.participant_auc_std) << " over "
        << report.folds.size() << " folds\n";
    reports.push_back(std::move(report));
  }

  write_csv(out_dir / "folds.csv",
            {"family", "fold", "inner_score", "cough_auc", "participant_auc", "n_test_coughs",
             "n_test_participants", "hyperparameters"},
            fold_rows, {"fingerprint=" + c.fingerprint()});
  return reports;
}

// Tunes on the full dataset with inner CV, refits on everything, and writes a
// self-contained pipeline file.
inline std::filesystem::path cmd_train_final(const PipelineConfig& c, ModelFamily family,
                                             std::ostream& out = std::cout) {
  const Manifest m = load_manifest(c.manifest_path);
  if (m.rows.empty()) throw data_error("train-final: empty manifest");
  const ExtractResult r = extract_features(m, c, true);

  std::vector<std::size_t> all_rows(m.rows.size());
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});

  const std::uint64_t final_seed = derive_seed(c.seed, {"final"});
  const TuneResult tuned = nested_tune(m, r.features, c.toggles, all_rows, family, c.k_inner,
                                       final_seed, c.jobs, c.grid_options());

  ModelSpec spec = tuned.best;
  spec.seed = derive_seed(final_seed, {"refit"});
  const std::vector<int> tags(m.rows.size(), 0);
  const FittedPipeline fitted = fit_pipeline(m, r.features, c.toggles, all_rows, tags, -1, spec);

  const std::filesystem::path out_dir(c.out_dir);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path path =
      out_dir / ("model_" + std::string(to_string(family)) + ".json");
  save_pipeline(path, fitted, c.fingerprint(), tuned.grid_scores[tuned.best_index]);

  out << "trained " << to_string(family) << " on " << m.n_clips() << " clips, inner AUC "
      << format_double(tuned.grid_scores[tuned.best_index]) << ", wrote " << path.string()
      << "\n";
  out << "chosen: " << spec.hyperparameters.dump() << "\n";
  return path;
}

// Applies a saved pipeline to a manifest: per-clip probabilities plus the
// participant mean repeated on each of its rows.
inline std::filesystem::path cmd_predict(const PipelineConfig& c,
                                         const std::filesystem::path& model_path,
                                         std::ostream& out = std::cout) {
  const LoadedPipeline loaded = load_pipeline(model_path);
  const Manifest m = load_manifest(c.manifest_path);
  const ExtractResult r = extract_features(m, c, true);

  std::vector<std::size_t> rows(m.rows.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const std::vector<double> scores = loaded.pipeline.predict(m, r.features, rows);
  const ParticipantScores agg = aggregate_by_participant(scores, rows, m);

  std::unordered_map<std::string, double> participant_score;
  for (std::size_t p = 0; p < agg.participant_ids.size(); ++p) {
    participant_score[agg.participant_ids[p]] = agg.scores[p];
  }

  std::vector<std::vector<std::string>> csv_rows;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    csv_rows.push_back({m.rows[i].clip_id, m.rows[i].participant_id,
                        label_to_string(m.rows[i].label), format_double(scores[i]),
                        format_double(participant_score[m.rows[i].participant_id])});
  }
  const std::filesystem::path out_dir(c.out_dir);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path path = out_dir / "scores.csv";
  write_csv(path,
            {"clip_id", "participant_id", "label", "clip_probability",
             "participant_probability"},
            csv_rows, {"fingerprint=" + loaded.fingerprint, "model=" + model_path.string()});

  out << "scored " << m.n_clips() << " clips / " << agg.participant_ids.size()
      << " participants, wrote " << path.string() << "\n";
  return path;
}

inline Manifest cmd_synth(const PipelineConfig& c, std::ostream& out = std::cout) {
  SyntheticCorpusSpec spec = c.synth;
  spec.seed = c.seed;
  const Manifest m = synth_corpus(spec, c.out_dir);
  out << "wrote " << m.n_clips() << " clips for " << m.n_participants() << " participants under "
      << c.out_dir << "\n";
  return m;
}

// Plain-text table over the run reports found in out_dir.
inline std::string cmd_report(const PipelineConfig& c) {
  std::vector<std::filesystem::path> paths;
  const std::filesystem::path out_dir(c.out_dir);
  if (std::filesystem::exists(out_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(out_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json") {
        paths.push_back(entry.path());
      }
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) {
    throw io_error("no report_*.json files under " + out_dir.string());
  }

  std::string text = "family  experiment      cough AUC          participant AUC    folds\n";
  for (const auto& path : paths) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw schema_error("report file " + path.string() + ": " + e.what());
    }
    const auto& s = j.at("summary");
    const bool metadata = j.at("toggles").at("metadata").get<bool>();
    char line[160];
    std::snprintf(line, sizeof(line), "%-7s %-15s %-18s %-18s %zu\n",
                  j.at("family").get<std::string>().c_str(),
                  metadata ? "cough-metadata" : "cough-only",
                  detail::auc_cell(s.at("cough_auc_mean").get<double>(),
                                   s.at("cough_auc_std").get<double>())
                      .c_str(),
                  detail::auc_cell(s.at("participant_auc_mean").get<double>(),
                                   s.at("participant_auc_std").get<double>())
                      .c_str(),
                  j.at("folds").size());
    text += line;
  }
  return text;
}

}  // namespace tbscreen
