// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dpfn/common.hpp"

namespace dpfn {

// Mono 16-bit PCM RIFF/WAVE. Samples map to [-1, 1) through the fixed scale
// 1/32768; a full round trip of in-range values is exact.

struct WavData {
  int sample_rate = 0;
  std::vector<double> samples;
};

namespace detail {

inline uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

inline uint16_t read_u16_le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline void write_u32_le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u16_le(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace detail

inline WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require<IoError>(in.good(), "cannot open: ", path);

  char tag[4];
  in.read(tag, 4);
  require<FormatError>(in.gcount() == 4 && std::memcmp(tag, "RIFF", 4) == 0,
                       "wav ", path, ": missing RIFF header");
  detail::read_u32_le(in);  // overall size; chunk walk below is authoritative
  in.read(tag, 4);
  require<FormatError>(in.gcount() == 4 && std::memcmp(tag, "WAVE", 4) == 0,
                       "wav ", path, ": missing WAVE form type");

  WavData wav;
  bool have_fmt = false;
  uint16_t channels = 0, bits = 0;
  while (in.read(tag, 4) && in.gcount() == 4) {
    const uint32_t chunk_len = detail::read_u32_le(in);
    require<FormatError>(!in.fail(), "wav ", path, ": truncated chunk header");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      require<FormatError>(chunk_len >= 16, "wav ", path,
                           ": fmt chunk too short (", chunk_len, " bytes)");
      const uint16_t audio_format = detail::read_u16_le(in);
      channels = detail::read_u16_le(in);
      wav.sample_rate = static_cast<int>(detail::read_u32_le(in));
      detail::read_u32_le(in);  // byte rate
      detail::read_u16_le(in);  // block align
      bits = detail::read_u16_le(in);
      require<FormatError>(audio_format == 1, "wav ", path,
                           ": audio format ", audio_format,
                           " unsupported (want 1 = PCM)");
      require<FormatError>(channels == 1, "wav ", path, ": ", channels,
                           " channels unsupported (want mono)");
      require<FormatError>(bits == 16, "wav ", path, ": ", bits,
                           " bits per sample unsupported (want 16)");
      in.ignore(chunk_len - 16 + (chunk_len % 2));
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      require<FormatError>(have_fmt, "wav ", path,
                           ": data chunk before fmt chunk");
      require<FormatError>(chunk_len % 2 == 0, "wav ", path,
                           ": odd data chunk length ", chunk_len);
      const size_t n = chunk_len / 2;
      std::vector<char> raw(chunk_len);
      in.read(raw.data(), static_cast<std::streamsize>(chunk_len));
      require<FormatError>(in.gcount() ==
                               static_cast<std::streamsize>(chunk_len),
                           "wav ", path, ": truncated data chunk");
      wav.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(
            static_cast<unsigned char>(raw[2 * i]) |
            (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
        wav.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return wav;
    } else {
      in.ignore(static_cast<std::streamsize>(chunk_len) + (chunk_len % 2));
    }
  }
  throw FormatError(detail::cat("wav ", path, ": no data chunk"));
}

inline void write_wav(const std::string& path,
                      const std::vector<double>& samples, int sample_rate) {
  require<ValueError>(sample_rate > 0, "wav ", path, ": sample rate ",
                      sample_rate, " must be positive");
  std::ofstream out(path, std::ios::binary);
  require<IoError>(out.good(), "cannot open for writing: ", path);

  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  detail::write_u32_le(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::write_u32_le(out, 16);
  detail::write_u16_le(out, 1);  // PCM
  detail::write_u16_le(out, 1);  // mono
  detail::write_u32_le(out, static_cast<uint32_t>(sample_rate));
  detail::write_u32_le(out, static_cast<uint32_t>(sample_rate) * 2);
  detail::write_u16_le(out, 2);   // block align
  detail::write_u16_le(out, 16);  // bits per sample
  out.write("data", 4);
  detail::write_u32_le(out, data_len);
  for (double x : samples) {
    double q = std::round(x * 32768.0);
    if (q > 32767.0) q = 32767.0;
    if (q < -32768.0) q = -32768.0;
    const int16_t s = static_cast<int16_t>(q);
    detail::write_u16_le(out, static_cast<uint16_t>(s));
  }
  out.flush();
  require<IoError>(out.good(), "write failed: ", path);
}

}  // namespace dpfn
