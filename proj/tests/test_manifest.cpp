#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include <tbscreen/manifest.hpp>

#include "support.hpp"

using namespace tbscreen;
using namespace testsupport;

namespace {

std::string manifest_header() {
  std::string h = "clip_id,file_path,participant_id,label";
  for (const auto& def : kMetadataFields) {
    h += ",";
    h += std::string(def.name);
  }
  return h + "\n";
}

// Row with every metadata cell blank.
std::string bare_row(const std::string& clip, const std::string& participant,
                     const std::string& label) {
  return clip + ",audio/" + clip + ".wav," + participant + "," + label +
         std::string(kMetadataFieldCount, ',') + "\n";
}

}  // namespace

TEST_CASE("manifest loading groups clips by participant") {
  TempDir dir;
  const auto path = dir / "manifest.csv";
  std::string text = manifest_header();
  // field order: age,sex,height,weight,cough_duration_days,prior_tb,
  // prior_tb_pulmonary,prior_tb_extrapulmonary,prior_tb_unknown,hemoptysis,
  // heart_rate,temperature,smoke_last_week,fever,night_sweats,weight_loss
  text += "c1,audio/c1.wav,p1,TB+,30,male,170,65,21,no,no,no,no,yes,80,36.6,no,yes,no,no\n";
  text += "c2,audio/c2.wav,p1,TB+,30,male,170,65,21,no,no,no,no,yes,80,36.6,no,yes,no,no\n";
  text += "c3,audio/c3.wav,p2,TB-,45,female,,70,7,no,no,no,no,no,72,36.5,yes,no,no,no\n";
  text += "c4,audio/c4.wav,p2,TB-,45,female,,70,7,no,no,no,no,no,72,36.5,yes,no,no,no\n";
  write_bytes(path, text);

  const Manifest m = load_manifest(path);
  REQUIRE(m.n_clips() == 4);
  REQUIRE(m.n_participants() == 2);
  REQUIRE(m.participants == std::vector<std::string>{"p1", "p2"});
  REQUIRE(m.participant_labels == std::vector<int>{1, 0});
  REQUIRE(m.groups[0] == std::vector<std::size_t>{0, 1});
  REQUIRE(m.groups[1] == std::vector<std::size_t>{2, 3});

  const MetadataRecord& p1 = m.rows[0].metadata;
  REQUIRE(p1.field("age").value() == 30.0);
  REQUIRE(p1.field("sex").value() == 1.0);         // male encodes as 1
  REQUIRE(p1.field("hemoptysis").value() == 1.0);  // yes encodes as 1
  REQUIRE(p1.field("prior_tb").value() == 0.0);
  REQUIRE(p1.field("temperature").value() == 36.6);

  const MetadataRecord& p2 = m.rows[2].metadata;
  REQUIRE(p2.field("sex").value() == 0.0);
  REQUIRE_FALSE(p2.field("height").has_value());  // blank stays missing
  REQUIRE(p2.field("smoke_last_week").value() == 1.0);
}

TEST_CASE("manifest structural violations are data errors") {
  SECTION("conflicting labels within a participant") {
    std::vector<ManifestRow> rows(2);
    rows[0] = {"c1", "a.wav", "p1", 1, {}};
    rows[1] = {"c2", "b.wav", "p1", 0, {}};
    REQUIRE_THROWS_AS(finalize_manifest(std::move(rows)), data_error);
  }
  SECTION("duplicate clip ids") {
    std::vector<ManifestRow> rows(2);
    rows[0] = {"c1", "a.wav", "p1", 1, {}};
    rows[1] = {"c1", "b.wav", "p2", 0, {}};
    REQUIRE_THROWS_AS(finalize_manifest(std::move(rows)), data_error);
  }
  SECTION("empty identifiers") {
    std::vector<ManifestRow> rows(1);
    rows[0] = {"", "a.wav", "p1", 1, {}};
    REQUIRE_THROWS_AS(finalize_manifest(std::move(rows)), data_error);
  }
}

TEST_CASE("manifest csv schema problems are schema errors") {
  TempDir dir;

  SECTION("missing label column") {
    const auto path = dir / "m.csv";
    write_bytes(path, "clip_id,file_path,participant_id\nc1,a.wav,p1\n");
    REQUIRE_THROWS_AS(load_manifest(path), schema_error);
  }
  SECTION("missing metadata column") {
    const auto path = dir / "m.csv";
    std::string h = manifest_header();
    const auto pos = h.find(",fever");
    h.erase(pos, 6);
    std::string row = bare_row("c1", "p1", "TB+");
    row.erase(row.rfind(','), 1);
    write_bytes(path, h + row);
    REQUIRE_THROWS_AS(load_manifest(path), schema_error);
  }
}

TEST_CASE("manifest field parsing rejects unknown vocabulary") {
  TempDir dir;
  const auto header = manifest_header();

  auto load_single = [&](const std::string& label, const std::string& age,
                         const std::string& sex, const std::string& fever) {
    std::array<std::string, kMetadataFieldCount> cells{};
    cells[0] = age;    // age column
    cells[1] = sex;    // sex column
    cells[13] = fever;  // fever column
    std::string text = header + "c1,audio/c1.wav,p1," + label;
    for (const auto& cell : cells) text += "," + cell;
    text += "\n";
    const auto path = dir / "m.csv";
    write_bytes(path, text);
    return load_manifest(path);
  };

  REQUIRE_NOTHROW(load_single("TB+", "30", "male", "yes"));
  REQUIRE_NOTHROW(load_single("TB+", "", "", ""));
  REQUIRE_THROWS_AS(load_single("positive", "30", "male", "yes"), data_error);
  REQUIRE_THROWS_AS(load_single("TB+", "thirty", "male", "yes"), data_error);
  REQUIRE_THROWS_AS(load_single("TB+", "30", "other", "yes"), data_error);
  REQUIRE_THROWS_AS(load_single("TB+", "30", "male", "maybe"), data_error);
  // case folding applies to the yes/no and sex vocabularies
  REQUIRE_NOTHROW(load_single("TB+", "30", "MALE", "Yes"));
}

TEST_CASE("label parsing accepts both minus glyphs") {
  REQUIRE(parse_label("TB+") == 1);
  REQUIRE(parse_label("TB-") == 0);
  REQUIRE(parse_label("TB−") == 0);
  REQUIRE(parse_label(" TB+ ") == 1);
  REQUIRE_THROWS_AS(parse_label("tb+"), data_error);
}

TEST_CASE("manifest write and load round trip") {
  TempDir dir;
  std::vector<ManifestRow> rows(3);
  rows[0] = {"c1", "audio/c1.wav", "p1", 1, {}};
  rows[0].metadata.field("age") = 34.0;
  rows[0].metadata.field("sex") = 1.0;
  rows[0].metadata.field("fever") = 1.0;
  rows[0].metadata.field("temperature") = 38.2;
  rows[1] = {"c2", "audio/c2.wav", "p1", 1, {}};
  rows[2] = {"c3", "audio/c3.wav", "p2", 0, {}};
  rows[2].metadata.field("sex") = 0.0;
  const Manifest m = finalize_manifest(std::move(rows));

  const auto path = dir / "round.csv";
  write_manifest(path, m);
  const Manifest back = load_manifest(path);

  REQUIRE(back.n_clips() == 3);
  REQUIRE(back.participants == m.participants);
  REQUIRE(back.participant_labels == m.participant_labels);
  REQUIRE(back.rows[0].metadata.field("age").value() == 34.0);
  REQUIRE(back.rows[0].metadata.field("temperature").value() == 38.2);
  REQUIRE(back.rows[0].metadata.field("sex").value() == 1.0);
  REQUIRE_FALSE(back.rows[1].metadata.field("age").has_value());
  REQUIRE(back.rows[2].metadata.field("sex").value() == 0.0);
}

TEST_CASE("dataset statistics summarize clip counts and duration") {
  std::vector<ManifestRow> rows;
  for (int c = 0; c < 3; ++c) rows.push_back({"a" + std::to_string(c), "x.wav", "pa", 1, {}});
  for (int c = 0; c < 5; ++c) rows.push_back({"b" + std::to_string(c), "x.wav", "pb", 0, {}});
  const Manifest m = finalize_manifest(std::move(rows));

  std::unordered_map<std::string, double> durations;
  for (const ManifestRow& r : m.rows) durations[r.clip_id] = 30.0;

  const DatasetStats s = dataset_stats(m, &durations);
  REQUIRE(s.n_participants == 2);
  REQUIRE(s.n_pos == 1);
  REQUIRE(s.n_neg == 1);
  REQUIRE(s.n_clips == 8);
  REQUIRE(s.clips_mean == 4.0);
  REQUIRE(std::abs(s.clips_std - std::sqrt(2.0)) < 1e-12);
  REQUIRE(s.clips_min == 3);
  REQUIRE(s.clips_max == 5);
  REQUIRE(std::abs(s.total_duration_min - 4.0) < 1e-12);  // 8 clips * 30 s

  std::unordered_map<std::string, double> incomplete;
  REQUIRE_THROWS_AS(dataset_stats(m, &incomplete), data_error);

  const Manifest empty;
  REQUIRE_THROWS_AS(dataset_stats(empty), schema_error);
}

TEST_CASE("a cohort shaped like the study dataset reports its headline counts") {
  // 1107 participants, 297 positive; 916 with 9 clips and 191 with 8 gives
  // exactly 9772 clips
  std::vector<ManifestRow> rows;
  for (int p = 0; p < 1107; ++p) {
    const int label = p < 297 ? 1 : 0;
    const int clips = p < 916 ? 9 : 8;
    const std::string pid = "p" + std::to_string(p);
    for (int c = 0; c < clips; ++c) {
      rows.push_back({pid + "_c" + std::to_string(c), "x.wav", pid, label, {}});
    }
  }
  const Manifest m = finalize_manifest(std::move(rows));
  const DatasetStats s = dataset_stats(m);
  REQUIRE(s.n_participants == 1107);
  REQUIRE(s.n_pos == 297);
  REQUIRE(s.n_neg == 810);
  REQUIRE(s.n_clips == 9772);
  REQUIRE(s.clips_min == 8);
  REQUIRE(s.clips_max == 9);
}

TEST_CASE("clips per participant near nine yields the reported mean") {
  // 1074 participants at 9 clips plus 33 at 10 averages 9.0298
  std::vector<ManifestRow> rows;
  for (int p = 0; p < 1107; ++p) {
    const int clips = p < 1074 ? 9 : 10;
    const std::string pid = "p" + std::to_string(p);
    for (int c = 0; c < clips; ++c) {
      rows.push_back({pid + "_c" + std::to_string(c), "x.wav", pid, p % 4 == 0 ? 1 : 0, {}});
    }
  }
  const Manifest m = finalize_manifest(std::move(rows));
  const DatasetStats s = dataset_stats(m);
  REQUIRE(std::abs(s.clips_mean - 9.03) < 0.005);
}
