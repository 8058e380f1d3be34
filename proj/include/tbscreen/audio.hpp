#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tbscreen/error.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

// Decoded mono waveform. Samples from decode_wav are in [-1, 1]; synthetic
// construction may exceed that range, feature code only assumes finiteness.
struct AudioClip {
  std::string clip_id;
  std::string participant_id;
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// PCM WAV decoder: 8-bit unsigned, 16/24/32-bit signed, 32-bit float.
// Multichannel input is averaged to mono. Integer samples are scaled by
// 2^(bits-1), so full-scale negative maps to -1 and +1 is clipped slightly.
inline AudioClip decode_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const unsigned char* p = bytes.data();
  const std::size_t n = bytes.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw decode_error("not a RIFF/WAVE file: " + path.string());
  }

  bool have_fmt = false;
  std::uint16_t format_tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const char* id = reinterpret_cast<const char*>(p + off);
    const std::uint32_t chunk_len = detail::read_u32le(p + off + 4);
    const std::size_t body = off + 8;
    if (body + chunk_len > n) {
      throw decode_error("truncated chunk '" + std::string(id, 4) + "': " + path.string());
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw decode_error("fmt chunk too short: " + path.string());
      format_tag = detail::read_u16le(p + body);
      channels = detail::read_u16le(p + body + 2);
      sample_rate = detail::read_u32le(p + body + 4);
      bits = detail::read_u16le(p + body + 14);
      if (format_tag == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID leads with the tag
        if (chunk_len < 40) throw decode_error("extensible fmt chunk too short: " + path.string());
        format_tag = detail::read_u16le(p + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + body;
      data_len = chunk_len;
    }
    off = body + chunk_len + (chunk_len & 1);  // chunks are word aligned
  }

  if (!have_fmt) throw decode_error("missing fmt chunk: " + path.string());
  if (data == nullptr) throw decode_error("missing data chunk: " + path.string());
  if (channels == 0) throw decode_error("zero channels: " + path.string());
  if (sample_rate == 0) throw decode_error("zero sample rate: " + path.string());

  if (format_tag != 1 && format_tag != 3) {
    throw unsupported_format_error("unsupported wav codec tag " + std::to_string(format_tag) +
                                   ": " + path.string());
  }
  if (format_tag == 1 && bits != 8 && bits != 16 && bits != 24 && bits != 32) {
    throw unsupported_format_error("unsupported pcm bit depth " + std::to_string(bits) + ": " +
                                   path.string());
  }
  if (format_tag == 3 && bits != 32) {
    throw unsupported_format_error("unsupported float bit depth " + std::to_string(bits) + ": " +
                                   path.string());
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  if (frame_bytes == 0 || data_len % frame_bytes != 0) {
    throw decode_error("data chunk is not a whole number of frames: " + path.string());
  }
  const std::size_t n_frames = data_len / frame_bytes;
  if (n_frames == 0) throw decode_error("empty data chunk: " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(n_frames);

  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    const unsigned char* fp = data + f * frame_bytes;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* sp = fp + c * bytes_per_sample;
      double v = 0.0;
      if (format_tag == 3) {
        float fv;
        std::memcpy(&fv, sp, 4);
        v = static_cast<double>(fv);
      } else if (bits == 8) {
        v = (static_cast<int>(sp[0]) - 128) / 128.0;
      } else if (bits == 16) {
        const std::int16_t s = static_cast<std::int16_t>(sp[0] | (sp[1] << 8));
        v = s / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = sp[0] | (sp[1] << 8) | (sp[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;  // sign extend
        v = s / 8388608.0;
      } else {  // 32-bit int
        std::int32_t s;
        std::memcpy(&s, sp, 4);
        v = s / 2147483648.0;
      }
      acc += v;
    }
    clip.samples[f] = acc / channels;
  }

  if (!std::all_of(clip.samples.begin(), clip.samples.end(),
                   [](double v) { return std::isfinite(v); })) {
    throw decode_error("non-finite samples: " + path.string());
  }
  clip.clip_id = path.stem().string();
  return clip;
}

// 16-bit PCM mono writer; the quantization inverse of decode_wav to within
// one LSB (1/32768).
inline void encode_wav_pcm16(const std::filesystem::path& path,
                             const std::vector<double>& samples, int sample_rate) {
  if (sample_rate <= 0) throw config_error("encode_wav: sample_rate must be positive");
  std::vector<unsigned char> out;
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out.reserve(44 + data_len);

  auto push_u32 = [&](std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
  };
  auto push_u16 = [&](std::uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
  };
  auto push_tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };

  push_tag("RIFF");
  push_u32(36 + data_len);
  push_tag("WAVE");
  push_tag("fmt ");
  push_u32(16);
  push_u16(1);  // PCM
  push_u16(1);  // mono
  push_u32(static_cast<std::uint32_t>(sample_rate));
  push_u32(static_cast<std::uint32_t>(sample_rate) * 2);
  push_u16(2);
  push_u16(16);
  push_tag("data");
  push_u32(data_len);

  for (double s : samples) {
    long q = std::lround(s * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    const std::uint16_t u = static_cast<std::uint16_t>(static_cast<std::int16_t>(q));
    out.push_back(u & 0xff);
    out.push_back((u >> 8) & 0xff);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot write wav: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw io_error("wav write failed: " + path.string());
}

}  // namespace tbscreen
