#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tbscreen/error.hpp"
#include "tbscreen/manifest.hpp"
#include "tbscreen/models/models.hpp"
#include "tbscreen/summary.hpp"
#include "tbscreen/tabular.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

// ---- fold planning ----

struct ParticipantInfo {
  std::string id;
  int label = 0;
  std::size_t n_clips = 0;
};

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::unordered_map<std::string, int> fold_of_participant;

  int fold_of(const std::string& participant_id) const {
    const auto it = fold_of_participant.find(participant_id);
    if (it == fold_of_participant.end()) {
      throw state_error("fold plan: unknown participant " + participant_id);
    }
    return it->second;
  }
};

// Greedy stratified assignment: a seeded shuffle breaks ties, then
// participants are placed largest-first per class into the fold with the
// fewest same-label participants (clip total, then fold index, as
// tie-breakers). Per-fold class counts land within one of proportional.
inline FoldPlan stratified_group_kfold(const std::vector<ParticipantInfo>& participants, int k,
                                       std::uint64_t seed) {
  if (k < 2) throw config_error("kfold: k must be >= 2");
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  for (const auto& p : participants) {
    if (p.label == 1) {
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos < static_cast<std::size_t>(k) || n_neg < static_cast<std::size_t>(k)) {
    throw config_error("kfold: need at least k=" + std::to_string(k) +
                       " participants per class, have " + std::to_string(n_pos) + " positive / " +
                       std::to_string(n_neg) + " negative");
  }

  std::vector<std::size_t> order(participants.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (participants[a].label != participants[b].label) {
      return participants[a].label > participants[b].label;
    }
    return participants[a].n_clips > participants[b].n_clips;
  });

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  std::vector<std::array<std::size_t, 2>> label_counts(static_cast<std::size_t>(k), {0, 0});
  std::vector<std::size_t> clip_totals(static_cast<std::size_t>(k), 0);

  for (std::size_t idx : order) {
    const ParticipantInfo& p = participants[idx];
    const std::size_t lbl = p.label == 1 ? 1 : 0;
    int best = 0;
    for (int f = 1; f < k; ++f) {
      const auto fu = static_cast<std::size_t>(f);
      const auto bu = static_cast<std::size_t>(best);
      if (label_counts[fu][lbl] < label_counts[bu][lbl] ||
          (label_counts[fu][lbl] == label_counts[bu][lbl] &&
           clip_totals[fu] < clip_totals[bu])) {
        best = f;
      }
    }
    const auto bu = static_cast<std::size_t>(best);
    plan.fold_of_participant[p.id] = best;
    ++label_counts[bu][lbl];
    clip_totals[bu] += p.n_clips;
  }
  return plan;
}

inline std::vector<ParticipantInfo> participant_infos(const Manifest& m) {
  std::vector<ParticipantInfo> out;
  out.reserve(m.participants.size());
  for (std::size_t i = 0; i < m.participants.size(); ++i) {
    out.push_back({m.participants[i], m.participant_labels[i], m.groups[i].size()});
  }
  return out;
}

inline FoldPlan stratified_group_kfold(const Manifest& m, int k, std::uint64_t seed) {
  return stratified_group_kfold(participant_infos(m), k, seed);
}

// ---- AUC ----

// Mann-Whitney AUC via average ranks. Every quantity is a small multiple of
// 0.5, so this matches the O(n^2) pairwise count exactly, not just within
// tolerance.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) throw state_error("auc: bad input");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw data_error("auc: labels must be 0/1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw data_error("auc: undefined for single-class labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    // ranks i+1 .. j+1 tie; each gets the average (i + j + 2) / 2
    const double avg_rank = static_cast<double>(i + j + 2) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

// ---- participant aggregation ----

struct ParticipantScores {
  std::vector<std::string> participant_ids;  // first-appearance order
  std::vector<double> scores;                // mean clip probability
  std::vector<int> labels;
};

// Unweighted mean of clip probabilities per participant; rows index into the
// manifest and run parallel to clip_scores.
inline ParticipantScores aggregate_by_participant(const std::vector<double>& clip_scores,
                                                  const std::vector<std::size_t>& rows,
                                                  const Manifest& m) {
  if (clip_scores.size() != rows.size()) throw state_error("aggregate: size mismatch");
  ParticipantScores out;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows.size()) {
      throw data_error("aggregate: clip row " + std::to_string(rows[i]) +
                       " is not in the manifest");
    }
    const ManifestRow& row = m.rows[rows[i]];
    auto [it, inserted] = index.try_emplace(row.participant_id, out.participant_ids.size());
    if (inserted) {
      out.participant_ids.push_back(row.participant_id);
      out.scores.push_back(0.0);
      out.labels.push_back(row.label);
      counts.push_back(0);
    }
    out.scores[it->second] += clip_scores[i];
    ++counts[it->second];
  }
  for (std::size_t p = 0; p < out.scores.size(); ++p) {
    out.scores[p] /= static_cast<double>(counts[p]);
  }
  return out;
}

// ---- feature assembly and single-split fitting ----

// Per-clip feature components computed once per corpus; training-state-free.
// Metadata stays in the manifest until an encoder imputes it per split.
struct ClipFeatures {
  FeatureVector audio;
  std::vector<double> flat_spectrogram;  // empty unless extracted
  std::vector<double> flat_mfcc;
};

// Everything a split learns: the metadata imputer, the scaler, and the model,
// plus the layout its inputs must match.
struct FittedPipeline {
  FeatureToggles toggles;
  MetadataEncoder encoder;  // fitted iff toggles.metadata
  Scaler scaler;            // fitted iff the family takes scaled input
  BlockLayout layout;
  std::unique_ptr<TrainedModel> model;

  DataMatrix design_matrix(const Manifest& m, const std::vector<ClipFeatures>& feats,
                           const std::vector<std::size_t>& rows) const {
    std::vector<std::vector<double>> built;
    built.reserve(rows.size());
    for (std::size_t r : rows) {
      const ClipFeatures& cf = feats[r];
      std::vector<double> meta;
      if (toggles.metadata) meta = encoder.encode(m.rows[r].metadata);
      const FusedVector fused =
          fuse(cf.audio, toggles.metadata ? &meta : nullptr,
               toggles.flat_spectrogram ? &cf.flat_spectrogram : nullptr,
               toggles.flat_mfcc ? &cf.flat_mfcc : nullptr, &layout);
      built.push_back(std::move(fused.values));
    }
    return DataMatrix::from_rows(built);
  }

  std::vector<double> predict(const Manifest& m, const std::vector<ClipFeatures>& feats,
                              const std::vector<std::size_t>& rows) const {
    DataMatrix X = design_matrix(m, feats, rows);
    if (scaler.fitted()) scaler.transform(&X);
    return model->predict_proba(X);
  }
};

namespace detail {

inline std::vector<int> labels_for_rows(const Manifest& m, const std::vector<std::size_t>& rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(m.rows[r].label);
  return y;
}

inline BlockLayout layout_for(const FeatureToggles& toggles, const ClipFeatures& sample) {
  BlockLayout layout;
  std::size_t off = 0;
  auto add = [&](const char* name, std::size_t len) {
    layout.blocks.push_back({name, off, len});
    off += len;
  };
  add("audio_summary", sample.audio.values.size());
  if (toggles.metadata) add("metadata", kMetadataFieldCount);
  if (toggles.flat_spectrogram) add("flat_spectrogram", sample.flat_spectrogram.size());
  if (toggles.flat_mfcc) add("flat_mfcc", sample.flat_mfcc.size());
  return layout;
}

}  // namespace detail

// Fits imputer, scaler, and model on the training rows only. fold_of_row tags
// every manifest row with its fold; the scaler's guard rejects any training
// row tagged with the held-out fold.
inline FittedPipeline fit_pipeline(const Manifest& m, const std::vector<ClipFeatures>& feats,
                                   const FeatureToggles& toggles,
                                   const std::vector<std::size_t>& train_rows,
                                   const std::vector<int>& fold_of_row, int held_out_fold,
                                   const ModelSpec& spec,
                                   std::vector<std::string>* warnings = nullptr) {
  toggles.validate();
  if (train_rows.empty()) throw data_error("fit: no training rows");
  if (feats.size() != m.rows.size()) throw state_error("fit: features not aligned to manifest");

  FittedPipeline p;
  p.toggles = toggles;
  p.layout = detail::layout_for(toggles, feats[train_rows.front()]);

  if (toggles.metadata) {
    std::vector<const MetadataRecord*> records;
    records.reserve(train_rows.size());
    for (std::size_t r : train_rows) records.push_back(&m.rows[r].metadata);
    p.encoder.fit(records, warnings);
  }

  DataMatrix X = p.design_matrix(m, feats, train_rows);
  if (family_wants_scaling(spec.family)) {
    std::vector<int> train_tags;
    train_tags.reserve(train_rows.size());
    for (std::size_t r : train_rows) train_tags.push_back(fold_of_row[r]);
    p.scaler.fit_guarded(X, train_tags, held_out_fold);
    p.scaler.transform(&X);
  }
  p.model = train_model(spec, X, detail::labels_for_rows(m, train_rows));
  return p;
}

// ---- nested tuning ----

struct TuneResult {
  ModelSpec best;
  std::size_t best_index = 0;
  std::vector<double> grid_scores;  // mean inner cough AUC per grid point
};

// Grid search scored by mean inner-fold cough AUC; ties keep the earliest
// grid point. Inner folds are grouped and stratified exactly like the outer
// ones.
inline TuneResult nested_tune(const Manifest& m, const std::vector<ClipFeatures>& feats,
                              const FeatureToggles& toggles,
                              const std::vector<std::size_t>& train_rows, ModelFamily family,
                              int inner_k, std::uint64_t seed, int jobs = 1,
                              const GridOptions& grid_options = {}) {
  // participants restricted to the outer-train portion
  std::unordered_map<std::string, ParticipantInfo> by_id;
  for (std::size_t r : train_rows) {
    const ManifestRow& row = m.rows[r];
    auto& info = by_id[row.participant_id];
    info.id = row.participant_id;
    info.label = row.label;
    ++info.n_clips;
  }
  std::vector<ParticipantInfo> participants;
  participants.reserve(by_id.size());
  for (std::size_t r : train_rows) {  // first-appearance order for determinism
    auto it = by_id.find(m.rows[r].participant_id);
    if (it != by_id.end()) {
      participants.push_back(it->second);
      by_id.erase(it);
    }
  }
  const FoldPlan inner_plan =
      stratified_group_kfold(participants, inner_k, derive_seed(seed, {"inner-plan"}));

  std::vector<int> fold_of_row(m.rows.size(), -1);
  for (std::size_t r : train_rows) {
    fold_of_row[r] = inner_plan.fold_of(m.rows[r].participant_id);
  }

  std::vector<std::vector<std::size_t>> inner_train(static_cast<std::size_t>(inner_k));
  std::vector<std::vector<std::size_t>> inner_val(static_cast<std::size_t>(inner_k));
  for (std::size_t r : train_rows) {
    for (int f = 0; f < inner_k; ++f) {
      (fold_of_row[r] == f ? inner_val : inner_train)[static_cast<std::size_t>(f)].push_back(r);
    }
  }

  const std::vector<ModelSpec> grid = hyperparameter_grid(family, grid_options);
  std::vector<double> scores(grid.size(), 0.0);

  parallel_for(grid.size(), jobs, [&](std::size_t g) {
    double total = 0.0;
    for (int f = 0; f < inner_k; ++f) {
      ModelSpec spec = grid[g];
      spec.seed = derive_seed(seed, {"inner", std::to_string(f), "grid", std::to_string(g)});
      const auto fu = static_cast<std::size_t>(f);
      const FittedPipeline fitted =
          fit_pipeline(m, feats, toggles, inner_train[fu], fold_of_row, f, spec);
      const std::vector<double> val_scores = fitted.predict(m, feats, inner_val[fu]);
      total += auc(val_scores, detail::labels_for_rows(m, inner_val[fu]));
    }
    scores[g] = total / static_cast<double>(inner_k);
  });

  TuneResult result;
  result.grid_scores = scores;
  result.best_index = 0;
  for (std::size_t g = 1; g < scores.size(); ++g) {
    if (scores[g] > scores[result.best_index]) result.best_index = g;
  }
  result.best = grid[result.best_index];
  return result;
}

// ---- experiment driver ----

struct FoldReport {
  int fold = 0;
  ModelSpec chosen;
  double inner_score = 0.0;  // mean inner cough AUC of the chosen point
  double cough_auc = 0.0;
  double participant_auc = 0.0;
  std::size_t n_test_coughs = 0;
  std::size_t n_test_participants = 0;

  nlohmann::json to_json() const {
    return {{"fold", fold},
            {"chosen", chosen.to_json()},
            {"inner_score", inner_score},
            {"cough_auc", cough_auc},
            {"participant_auc", participant_auc},
            {"n_test_coughs", n_test_coughs},
            {"n_test_participants", n_test_participants}};
  }
};

struct RunReport {
  ModelFamily family = ModelFamily::lr;
  FeatureToggles toggles;
  int k_outer = 10;
  int k_inner = 5;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::vector<FoldReport> folds;
  double cough_auc_mean = 0.0;
  double cough_auc_std = 0.0;
  double participant_auc_mean = 0.0;
  double participant_auc_std = 0.0;
  nlohmann::json imputation = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json jfolds = nlohmann::json::array();
    for (const FoldReport& f : folds) jfolds.push_back(f.to_json());
    nlohmann::json j = {{"format", "tbscreen-run-report"},
                        {"version", 1},
                        {"family", to_string(family)},
                        {"toggles", toggles.to_json()},
                        {"k_outer", k_outer},
                        {"k_inner", k_inner},
                        {"seed", seed},
                        {"fingerprint", fingerprint},
                        {"folds", std::move(jfolds)},
                        {"summary",
                         {{"cough_auc_mean", cough_auc_mean},
                          {"cough_auc_std", cough_auc_std},
                          {"participant_auc_mean", participant_auc_mean},
                          {"participant_auc_std", participant_auc_std}}}};
    if (!imputation.empty()) j["imputation"] = imputation;
    return j;
  }
};

namespace detail {

inline std::pair<double, double> mean_sample_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {m, sd};
}

}  // namespace detail

struct RunOptions {
  int k_outer = 10;
  int k_inner = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  GridOptions grid;
  std::string fingerprint;
};

// The full protocol for one family: outer stratified grouped k-fold; per fold
// a nested tune on the train portion, a refit on all of it, and test-fold
// scoring at cough and participant level.
inline RunReport run_experiment(const Manifest& m, const std::vector<ClipFeatures>& feats,
                                const FeatureToggles& toggles, ModelFamily family,
                                const RunOptions& options) {
  toggles.validate();
  if (feats.size() != m.rows.size()) {
    throw state_error("run_experiment: features not aligned to manifest");
  }

  RunReport report;
  report.family = family;
  report.toggles = toggles;
  report.k_outer = options.k_outer;
  report.k_inner = options.k_inner;
  report.seed = options.seed;
  report.fingerprint = options.fingerprint;

  const FoldPlan plan =
      stratified_group_kfold(m, options.k_outer, derive_seed(options.seed, {"outer-plan"}));
  std::vector<int> fold_of_row(m.rows.size());
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    fold_of_row[r] = plan.fold_of(m.rows[r].participant_id);
  }

  std::vector<double> cough_aucs;
  std::vector<double> participant_aucs;
  for (int f = 0; f < options.k_outer; ++f) {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
      (fold_of_row[r] == f ? test_rows : train_rows).push_back(r);
    }

    const std::uint64_t fold_seed = derive_seed(options.seed, {"outer", std::to_string(f)});
    TuneResult tuned = nested_tune(m, feats, toggles, train_rows, family, options.k_inner,
                                   fold_seed, options.jobs, options.grid);

    ModelSpec spec = tuned.best;
    spec.seed = derive_seed(fold_seed, {"refit"});
    std::vector<std::string> warnings;
    const FittedPipeline fitted =
        fit_pipeline(m, feats, toggles, train_rows, fold_of_row, f, spec, &warnings);

    const std::vector<double> scores = fitted.predict(m, feats, test_rows);
    const ParticipantScores agg = aggregate_by_participant(scores, test_rows, m);

    FoldReport fr;
    fr.fold = f;
    fr.chosen = spec;
    fr.inner_score = tuned.grid_scores[tuned.best_index];
    fr.cough_auc = auc(scores, detail::labels_for_rows(m, test_rows));
    fr.participant_auc = auc(agg.scores, agg.labels);
    fr.n_test_coughs = test_rows.size();
    fr.n_test_participants = agg.participant_ids.size();
    cough_aucs.push_back(fr.cough_auc);
    participant_aucs.push_back(fr.participant_auc);
    report.folds.push_back(std::move(fr));

    if (toggles.metadata && f == 0) {
      nlohmann::json imp = nlohmann::json::object();
      const auto& fills = fitted.encoder.fill_values();
      const auto& missing = fitted.encoder.training_missing_counts();
      for (std::size_t i = 0; i < kMetadataFieldCount; ++i) {
        imp[kMetadataFields[i].name] = {{"fill", fills[i]}, {"n_missing_train", missing[i]}};
      }
      report.imputation = std::move(imp);
    }
  }

  const auto [cm, cs] = detail::mean_sample_std(cough_aucs);
  const auto [pm, ps] = detail::mean_sample_std(participant_aucs);
  report.cough_auc_mean = cm;
  report.cough_auc_std = cs;
  report.participant_auc_mean = pm;
  report.participant_auc_std = ps;
  return report;
}

}  // namespace tbscreen
