// Shared fixtures: scratch directories, raw WAV byte builders, and small
// in-memory manifests with controllable feature separability.
#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <tbscreen/eval.hpp>
#include <tbscreen/manifest.hpp>
#include <tbscreen/summary.hpp>
#include <tbscreen/util.hpp>

namespace testsupport {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const int id = counter.fetch_add(1);
    path_ = std::filesystem::temp_directory_path() /
            ("tbscreen-test-" + std::to_string(::getpid()) + "-" + std::to_string(id));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void put_u16(std::string* b, std::uint16_t v) {
  b->push_back(static_cast<char>(v & 0xff));
  b->push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string* b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct WavSpec {
  std::uint16_t format_tag = 1;  // 1 = pcm, 3 = ieee float
  std::uint16_t channels = 1;
  std::uint32_t sample_rate = 16000;
  std::uint16_t bits = 16;
};

// Canonical 44-byte-header RIFF/WAVE file around an arbitrary data payload.
inline std::string wav_bytes(const WavSpec& spec, const std::string& payload) {
  const std::uint16_t block_align =
      static_cast<std::uint16_t>(spec.channels * (spec.bits / 8));
  std::string b;
  b += "RIFF";
  put_u32(&b, static_cast<std::uint32_t>(36 + payload.size()));
  b += "WAVE";
  b += "fmt ";
  put_u32(&b, 16);
  put_u16(&b, spec.format_tag);
  put_u16(&b, spec.channels);
  put_u32(&b, spec.sample_rate);
  put_u32(&b, spec.sample_rate * block_align);
  put_u16(&b, block_align);
  put_u16(&b, spec.bits);
  b += "data";
  put_u32(&b, static_cast<std::uint32_t>(payload.size()));
  b += payload;
  return b;
}

inline std::string pcm16_payload(const std::vector<std::int16_t>& samples) {
  std::string p;
  for (std::int16_t s : samples) put_u16(&p, static_cast<std::uint16_t>(s));
  return p;
}

inline std::string pcm8_payload(const std::vector<std::uint8_t>& samples) {
  std::string p;
  for (std::uint8_t s : samples) p.push_back(static_cast<char>(s));
  return p;
}

inline std::string pcm24_payload(const std::vector<std::int32_t>& samples) {
  std::string p;
  for (std::int32_t s : samples) {
    const std::uint32_t u = static_cast<std::uint32_t>(s);
    p.push_back(static_cast<char>(u & 0xff));
    p.push_back(static_cast<char>((u >> 8) & 0xff));
    p.push_back(static_cast<char>((u >> 16) & 0xff));
  }
  return p;
}

inline std::string pcm32_payload(const std::vector<std::int32_t>& samples) {
  std::string p;
  for (std::int32_t s : samples) put_u32(&p, static_cast<std::uint32_t>(s));
  return p;
}

inline std::string float32_payload(const std::vector<float>& samples) {
  std::string p;
  for (float s : samples) {
    std::uint32_t u;
    static_assert(sizeof(u) == sizeof(s));
    std::memcpy(&u, &s, sizeof(u));
    put_u32(&p, u);
  }
  return p;
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  tbscreen::write_file(path, bytes);
}

// Manifest with alternating labels (p000 positive, p001 negative, ...) and no
// metadata. Participants get clips_each rows.
inline tbscreen::Manifest toy_manifest(std::size_t n_participants, std::size_t clips_each) {
  std::vector<tbscreen::ManifestRow> rows;
  for (std::size_t p = 0; p < n_participants; ++p) {
    char pid[16];
    std::snprintf(pid, sizeof(pid), "p%03zu", p);
    for (std::size_t c = 0; c < clips_each; ++c) {
      tbscreen::ManifestRow row;
      row.participant_id = pid;
      row.clip_id = std::string(pid) + "_c" + std::to_string(c);
      row.file_path = "audio/" + row.clip_id + ".wav";
      row.label = p % 2 == 0 ? 1 : 0;
      rows.push_back(std::move(row));
    }
  }
  return tbscreen::finalize_manifest(std::move(rows));
}

// Two-column features aligned to the manifest: column 0 is pure noise, column
// 1 carries gap * label plus the same scale of noise. gap around 4 separates
// cleanly, gap 0 is label-free.
inline std::vector<tbscreen::ClipFeatures> toy_features(const tbscreen::Manifest& m,
                                                        double gap, std::uint64_t seed) {
  tbscreen::RandomStream rng(seed);
  std::vector<tbscreen::ClipFeatures> feats(m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const tbscreen::ManifestRow& row = m.rows[i];
    tbscreen::FeatureVector fv;
    fv.clip_id = row.clip_id;
    fv.participant_id = row.participant_id;
    fv.label = row.label;
    fv.names = {"noise", "signal"};
    fv.values = {rng.normal(), gap * row.label + rng.normal()};
    feats[i].audio = std::move(fv);
  }
  return feats;
}

}  // namespace testsupport
