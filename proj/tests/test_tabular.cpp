#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include <tbscreen/manifest.hpp>
#include <tbscreen/tabular.hpp>
#include <tbscreen/util.hpp>

using namespace tbscreen;

namespace {

MetadataRecord record_with(std::initializer_list<std::pair<const char*, double>> fields) {
  MetadataRecord r;
  for (const auto& [name, value] : fields) r.field(name) = value;
  return r;
}

}  // namespace

TEST_CASE("observed metadata passes through the encoder verbatim") {
  const MetadataRecord full = record_with({{"age", 30.0},
                                           {"sex", 0.0},
                                           {"height", 170.0},
                                           {"weight", 65.0},
                                           {"cough_duration_days", 21.0},
                                           {"prior_tb", 0.0},
                                           {"prior_tb_pulmonary", 0.0},
                                           {"prior_tb_extrapulmonary", 0.0},
                                           {"prior_tb_unknown", 0.0},
                                           {"hemoptysis", 0.0},
                                           {"heart_rate", 80.0},
                                           {"temperature", 36.6},
                                           {"smoke_last_week", 0.0},
                                           {"fever", 0.0},
                                           {"night_sweats", 0.0},
                                           {"weight_loss", 0.0}});
  MetadataEncoder enc;
  enc.fit({&full});
  const std::vector<double> v = enc.encode(full);
  REQUIRE(v.size() == kMetadataFieldCount);
  REQUIRE(v[metadata_field_index("age")] == 30.0);
  REQUIRE(v[metadata_field_index("sex")] == 0.0);
  REQUIRE(v[metadata_field_index("height")] == 170.0);
  REQUIRE(v[metadata_field_index("weight")] == 65.0);
  REQUIRE(v[metadata_field_index("cough_duration_days")] == 21.0);
  REQUIRE(v[metadata_field_index("heart_rate")] == 80.0);
  REQUIRE(v[metadata_field_index("temperature")] == 36.6);
  for (const char* b : {"prior_tb", "hemoptysis", "fever", "night_sweats", "weight_loss"}) {
    REQUIRE(v[metadata_field_index(b)] == 0.0);
  }

  const MetadataRecord yes = record_with({{"fever", 1.0}});
  REQUIRE(enc.encode(yes)[metadata_field_index("fever")] == 1.0);
}

TEST_CASE("missing numerics impute the training median") {
  const MetadataRecord a = record_with({{"height", 160.0}, {"age", 30.0}});
  const MetadataRecord b = record_with({{"height", 165.0}, {"age", 40.0}});
  const MetadataRecord c = record_with({{"height", 170.0}, {"age", 50.0}});

  MetadataEncoder enc;
  enc.fit({&a, &b, &c});

  const MetadataRecord blank;
  const std::vector<double> v = enc.encode(blank);
  REQUIRE(v[metadata_field_index("height")] == 165.0);
  REQUIRE(v[metadata_field_index("age")] == 40.0);

  // even counts average the middle pair
  MetadataEncoder enc2;
  enc2.fit({&a, &c});
  REQUIRE(enc2.encode(blank)[metadata_field_index("height")] == 165.0);
  REQUIRE(enc2.training_missing_counts()[metadata_field_index("weight")] == 2);
}

TEST_CASE("missing binaries impute the training mode") {
  const MetadataRecord y1 = record_with({{"fever", 1.0}});
  const MetadataRecord y2 = record_with({{"fever", 1.0}});
  const MetadataRecord n1 = record_with({{"fever", 0.0}});

  MetadataEncoder majority;
  majority.fit({&y1, &y2, &n1});
  const MetadataRecord blank;
  REQUIRE(majority.encode(blank)[metadata_field_index("fever")] == 1.0);

  // exact ties fall to 0
  MetadataEncoder tie;
  tie.fit({&y1, &n1});
  REQUIRE(tie.encode(blank)[metadata_field_index("fever")] == 0.0);
}

TEST_CASE("unobserved fields impute zero and warn; minors warn") {
  const MetadataRecord sparse = record_with({{"age", 17.0}});
  MetadataEncoder enc;
  std::vector<std::string> warnings;
  enc.fit({&sparse}, &warnings);

  const MetadataRecord blank;
  REQUIRE(enc.encode(blank)[metadata_field_index("height")] == 0.0);

  bool unobserved_warned = false;
  bool age_warned = false;
  for (const std::string& w : warnings) {
    if (w.find("unobserved") != std::string::npos) unobserved_warned = true;
    if (w.find("18") != std::string::npos) age_warned = true;
  }
  REQUIRE(unobserved_warned);
  REQUIRE(age_warned);

  MetadataEncoder unfitted;
  REQUIRE_THROWS_AS(unfitted.encode(blank), state_error);
  REQUIRE_THROWS_AS(enc.fit({}), data_error);
}

TEST_CASE("encoder json round trip") {
  const MetadataRecord a = record_with({{"age", 30.0}, {"fever", 1.0}});
  const MetadataRecord b = record_with({{"age", 50.0}, {"fever", 1.0}});
  MetadataEncoder enc;
  enc.fit({&a, &b});

  const MetadataEncoder back = MetadataEncoder::from_json(enc.to_json());
  REQUIRE(back.fitted());
  REQUIRE(back.fill_values() == enc.fill_values());
  REQUIRE(back.encode(MetadataRecord{}) == enc.encode(MetadataRecord{}));
}

TEST_CASE("scaler standardizes columns and masks constants") {
  const DataMatrix X = DataMatrix::from_rows({{1.0, 5.0}, {2.0, 5.0}, {3.0, 5.0}});
  Scaler s;
  s.fit(X);

  DataMatrix scaled = X;
  s.transform(&scaled);
  REQUIRE(scaled.at(0, 0) == -1.0);
  REQUIRE(scaled.at(1, 0) == 0.0);
  REQUIRE(scaled.at(2, 0) == 1.0);
  for (std::size_t i = 0; i < 3; ++i) REQUIRE(scaled.at(i, 1) == 0.0);

  // scaling its own fit rows centers them
  double col_sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) col_sum += scaled.at(i, 0);
  REQUIRE(std::abs(col_sum) < 1e-12);

  Scaler unfitted;
  std::vector<double> row = {1.0, 2.0};
  REQUIRE_THROWS_AS(unfitted.transform_row(row.data(), row.size()), state_error);
  REQUIRE_THROWS_AS(s.transform_row(row.data(), 1), data_error);

  const Scaler back = Scaler::from_json(s.to_json());
  std::vector<double> a = {2.5, 5.0};
  std::vector<double> bvals = a;
  s.transform_row(a.data(), a.size());
  back.transform_row(bvals.data(), bvals.size());
  REQUIRE(a == bvals);
}

TEST_CASE("guarded scaler fit refuses held-out rows") {
  const DataMatrix X = DataMatrix::from_rows({{1.0}, {2.0}, {3.0}});
  Scaler s;
  REQUIRE_NOTHROW(s.fit_guarded(X, {0, 1, 2}, 3));
  Scaler leaky;
  REQUIRE_THROWS_AS(leaky.fit_guarded(X, {0, 3, 1}, 3), state_error);
}

TEST_CASE("spectrogram flattening crops and pads around the center") {
  auto grid = [](int n_mels, std::size_t n_frames) {
    LogMelSpectrogram lm;
    lm.n_mels = n_mels;
    lm.n_frames = n_frames;
    lm.values.assign(static_cast<std::size_t>(n_mels), std::vector<double>(n_frames));
    for (int m = 0; m < n_mels; ++m) {
      for (std::size_t t = 0; t < n_frames; ++t) {
        lm.values[static_cast<std::size_t>(m)][t] = 100.0 * m + static_cast<double>(t);
      }
    }
    return lm;
  };

  // exact fit is a bit-identical copy, mel-major
  const LogMelSpectrogram exact = grid(128, 24);
  const std::vector<double> flat = flatten_spectrogram(exact);
  REQUIRE(flat.size() == 3072);
  REQUIRE(flat[0] == exact.values[0][0]);
  REQUIRE(flat[23] == exact.values[0][23]);
  REQUIRE(flat[24] == exact.values[1][0]);
  REQUIRE(flat[3071] == exact.values[127][23]);

  // 30 frames crop to the central 24, dropping 3 per side
  const std::vector<double> cropped = flatten_spectrogram(grid(128, 30));
  REQUIRE(cropped.size() == 3072);
  REQUIRE(cropped[0] == 3.0);
  REQUIRE(cropped[23] == 26.0);

  // 10 frames pad 7 left and 7 right at the log floor
  const std::vector<double> padded = flatten_spectrogram(grid(128, 10));
  REQUIRE(padded.size() == 3072);
  const double floor_ln = std::log(kLogMelFloor);
  for (std::size_t t = 0; t < 7; ++t) REQUIRE(padded[t] == floor_ln);
  REQUIRE(padded[7] == 0.0);
  REQUIRE(padded[16] == 9.0);
  for (std::size_t t = 17; t < 24; ++t) REQUIRE(padded[t] == floor_ln);
}

TEST_CASE("mfcc flattening pads with the silent-frame coefficient column") {
  std::vector<std::vector<double>> coeffs(13, std::vector<double>(10, 1.0));
  const std::vector<double> flat = flatten_mfcc(coeffs, 128);
  REQUIRE(flat.size() == 13 * 24);

  const double dc_pad = std::log(kLogMelFloor) * std::sqrt(128.0);
  REQUIRE(flat[0] == dc_pad);        // coefficient 0, left pad
  REQUIRE(flat[7] == 1.0);           // coefficient 0, real frame
  REQUIRE(flat[24] == 0.0);          // coefficient 1, left pad
  REQUIRE(flat[24 + 7] == 1.0);
}

TEST_CASE("fusion concatenates blocks in fixed order with exact offsets") {
  FeatureVector audio;
  audio.clip_id = "c1";
  audio.participant_id = "p1";
  audio.label = 1;
  audio.values.resize(84);
  for (std::size_t i = 0; i < 84; ++i) audio.values[i] = static_cast<double>(i);

  SECTION("audio only") {
    const FusedVector f = fuse(audio, nullptr, nullptr, nullptr);
    REQUIRE(f.values.size() == 84);
    REQUIRE(f.layout.blocks.size() == 1);
    REQUIRE(f.layout.total() == 84);
    REQUIRE(f.block("audio_summary") == audio.values);
    REQUIRE_THROWS_AS(f.block("metadata"), state_error);
  }

  SECTION("audio plus metadata") {
    std::vector<double> meta(kMetadataFieldCount, 0.5);
    meta[3] = 9.0;
    const FusedVector f = fuse(audio, &meta, nullptr, nullptr);
    REQUIRE(f.values.size() == 100);
    REQUIRE(f.layout.find("metadata")->offset == 84);
    REQUIRE(f.block("metadata") == meta);
    REQUIRE(f.block("audio_summary") == audio.values);
  }

  SECTION("all four blocks") {
    std::vector<double> meta(16, 0.5);
    std::vector<double> spec(3072, 1.5);
    std::vector<double> mf(312, 2.5);
    const FusedVector f = fuse(audio, &meta, &spec, &mf);
    REQUIRE(f.values.size() == 84 + 16 + 3072 + 312);
    REQUIRE(f.layout.blocks.size() == 4);
    REQUIRE(f.layout.blocks[0].name == "audio_summary");
    REQUIRE(f.layout.blocks[1].name == "metadata");
    REQUIRE(f.layout.blocks[2].name == "flat_spectrogram");
    REQUIRE(f.layout.blocks[3].name == "flat_mfcc");
    REQUIRE(f.block("flat_spectrogram") == spec);

    const BlockLayout round = BlockLayout::from_json(f.layout.to_json());
    REQUIRE(round == f.layout);
  }

  SECTION("expected layout mismatch is a data error") {
    std::vector<double> meta(16, 0.5);
    const FusedVector with_meta = fuse(audio, &meta, nullptr, nullptr);
    REQUIRE_THROWS_AS(fuse(audio, nullptr, nullptr, nullptr, &with_meta.layout), data_error);
    REQUIRE_NOTHROW(fuse(audio, &meta, nullptr, nullptr, &with_meta.layout));
  }
}

TEST_CASE("toggles demand the audio summary backbone") {
  FeatureToggles t;
  REQUIRE_NOTHROW(t.validate());
  t.audio_summary = false;
  REQUIRE_THROWS_AS(t.validate(), config_error);

  t.audio_summary = true;
  t.flat_mfcc = true;
  const FeatureToggles back = FeatureToggles::from_json(t.to_json());
  REQUIRE(back.flat_mfcc);
  REQUIRE_FALSE(back.metadata);
}
