// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dpfn/params.hpp"
#include "dpfn/tensor.hpp"

namespace dpfn {

// Checkpoint container format, single file:
//   magic "DPFNCKPT1\n"
//   uint64 little-endian: manifest byte length
//   manifest JSON: version, dtype, run config, parameter names and shapes
//   raw float64 little-endian buffers, in manifest order
// Round trips are bit-exact.

namespace detail {

constexpr char kCkptMagic[] = "DPFNCKPT1\n";
constexpr size_t kCkptMagicLen = 10;
constexpr int kCkptVersion = 1;

inline void write_u64_le(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64_le(std::ostream& out, const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    uint64_t bits;
    std::memcpy(&bits, &p[i], 8);
    write_u64_le(out, bits);
  }
}

inline void read_f64_le(std::istream& in, double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const uint64_t bits = read_u64_le(in);
    std::memcpy(&p[i], &bits, 8);
  }
}

}  // namespace detail

struct Checkpoint {
  nlohmann::ordered_json config;
  std::vector<std::string> order;
  std::unordered_map<std::string, std::pair<Shape, std::vector<double>>>
      entries;

  bool has(const std::string& name) const { return entries.count(name) > 0; }
};

inline void save_checkpoint(const std::string& path, const ParamVec& params,
                            const nlohmann::ordered_json& config) {
  nlohmann::ordered_json manifest;
  manifest["version"] = detail::kCkptVersion;
  manifest["dtype"] = "float64";
  manifest["config"] = config;
  nlohmann::ordered_json plist = nlohmann::ordered_json::array();
  for (const NamedParam& p : params) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["shape"] = p.tensor.shape();
    plist.push_back(e);
  }
  manifest["params"] = plist;
  const std::string mbytes = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  require<IoError>(out.good(), "cannot open for writing: ", path);
  out.write(detail::kCkptMagic, detail::kCkptMagicLen);
  detail::write_u64_le(out, mbytes.size());
  out.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  for (const NamedParam& p : params) {
    detail::write_f64_le(out, p.tensor.data(),
                         static_cast<size_t>(p.tensor.size()));
  }
  out.flush();
  require<IoError>(out.good(), "write failed: ", path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require<IoError>(in.good(), "cannot open: ", path);
  char magic[detail::kCkptMagicLen];
  in.read(magic, detail::kCkptMagicLen);
  require<FormatError>(
      in.gcount() == static_cast<std::streamsize>(detail::kCkptMagicLen) &&
          std::memcmp(magic, detail::kCkptMagic, detail::kCkptMagicLen) == 0,
      "not a checkpoint file: ", path);
  const uint64_t mlen = detail::read_u64_le(in);
  require<FormatError>(in.good(), "truncated manifest length: ", path);
  std::string mbytes(mlen, '\0');
  in.read(mbytes.data(), static_cast<std::streamsize>(mlen));
  require<FormatError>(in.gcount() == static_cast<std::streamsize>(mlen),
                       "truncated manifest: ", path);
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(mbytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(detail::cat("bad manifest JSON in ", path, ": ",
                                  e.what()));
  }
  require<FormatError>(manifest.value("version", -1) == detail::kCkptVersion,
                       "unsupported checkpoint version in ", path);
  require<FormatError>(manifest.value("dtype", "") == "float64",
                       "unsupported dtype '", manifest.value("dtype", ""),
                       "' in ", path);

  Checkpoint ckpt;
  if (manifest.contains("config")) ckpt.config = manifest["config"];
  for (const auto& e : manifest.at("params")) {
    const std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    std::vector<double> buf(static_cast<size_t>(numel(shape)));
    detail::read_f64_le(in, buf.data(), buf.size());
    require<FormatError>(!in.fail(), "truncated buffer for parameter ", name,
                         " in ", path);
    ckpt.order.push_back(name);
    ckpt.entries[name] = {std::move(shape), std::move(buf)};
  }
  return ckpt;
}

// Strict restore: every model parameter must be present with the same shape.
inline void load_into(const Checkpoint& ckpt, ParamVec params) {
  for (NamedParam& p : params) {
    auto it = ckpt.entries.find(p.name);
    require<FormatError>(it != ckpt.entries.end(),
                         "checkpoint missing parameter ", p.name);
    const Shape& shape = it->second.first;
    require<FormatError>(shape == p.tensor.shape(), "checkpoint parameter ",
                         p.name, " has shape ", shape_str(shape),
                         " but model expects ", shape_str(p.tensor.shape()));
    const auto& buf = it->second.second;
    std::copy(buf.begin(), buf.end(), p.tensor.data());
  }
}

}  // namespace dpfn
